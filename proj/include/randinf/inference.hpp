#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "randinf/assignment.hpp"
#include "randinf/statistics.hpp"

namespace randinf {

struct ExactPlan {
  std::uint64_t cap = kDefaultEnumerationCap;
};

struct MonteCarloPlan {
  std::uint64_t draws = 10'000;
  std::uint64_t seed = 0;
  /// Count the observed assignment once: p = (1 + hits) / (R + 1).
  bool add_one = true;
};

class RandomizationPlan {
 public:
  static RandomizationPlan exact(std::uint64_t cap = kDefaultEnumerationCap);
  static RandomizationPlan monte_carlo(std::uint64_t draws, std::uint64_t seed, bool add_one = true);

  bool is_exact() const noexcept { return std::holds_alternative<ExactPlan>(mode_); }
  const ExactPlan& exact_plan() const { return std::get<ExactPlan>(mode_); }
  const MonteCarloPlan& monte_carlo_plan() const { return std::get<MonteCarloPlan>(mode_); }
  std::string describe() const;

 private:
  explicit RandomizationPlan(std::variant<ExactPlan, MonteCarloPlan> mode) : mode_(mode) {}
  std::variant<ExactPlan, MonteCarloPlan> mode_;
};

struct NullAtom {
  double value = 0.0;
  double probability = 0.0;
  std::uint64_t count = 0;  // assignments (uniform exact) or draws (Monte Carlo) at this value
};

/// Reference distribution of t(A, y_ref) as sorted atoms with a tail query.
class NullDistribution {
 public:
  /// Exact distribution from (value, probability) pairs; `uniform` marks a
  /// design where every supported assignment has the same probability, in
  /// which case tails are computed as count / K.
  static NullDistribution from_exact(std::vector<std::pair<double, double>> values, bool uniform);
  /// Monte Carlo distribution from R draws.
  static NullDistribution from_draws(std::vector<double> draws, bool add_one);

  /// G(c) = P(T >= c). Exact: sum of atom probabilities (count / K for
  /// uniform designs). Monte Carlo: (add_one + hits) / (R + add_one).
  double tail(double c) const;
  /// Number of enumerated assignments or draws with value >= c.
  std::uint64_t tail_count(double c) const;

  const std::vector<NullAtom>& atoms() const noexcept { return atoms_; }
  bool exact() const noexcept { return exact_; }
  bool uniform() const noexcept { return uniform_; }
  std::uint64_t total_count() const noexcept { return total_; }
  bool add_one() const noexcept { return add_one_; }

 private:
  std::vector<NullAtom> atoms_;
  std::vector<std::uint64_t> suffix_count_;
  std::vector<double> suffix_probability_;
  bool exact_ = true;
  bool uniform_ = false;
  bool add_one_ = false;
  std::uint64_t total_ = 0;
};

/// Options shared by the p-value routines.
class NullDistributionCache;
struct InferenceOptions {
  /// When set, rank-score statistics on exchangeable designs take their
  /// reference distribution from the cache instead of recomputing it.
  NullDistributionCache* cache = nullptr;
  unsigned threads = 1;
};

NullDistribution null_distribution(const Mechanism& mech, const Statistic& stat, std::span<const double> y_ref,
                                   const RandomizationPlan& plan, unsigned threads = 1);

/// Thread-safe cache of the assignment-only reference distribution of a
/// rank-score statistic, keyed by (mechanism, scores, plan).
class NullDistributionCache {
 public:
  std::shared_ptr<const NullDistribution> get(const Mechanism& mech, const ScoreVector& scores,
                                              const RandomizationPlan& plan, unsigned threads = 1);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const NullDistribution>> entries_;
};

/// Reference distribution of a rank-score statistic computed on y = (1, ..., n).
NullDistribution rank_reference_distribution(const Mechanism& mech, const ScoreVector& scores,
                                             const RandomizationPlan& plan, unsigned threads = 1);

enum class Side { greater, lesser, two_sided };
std::string side_name(Side side);

struct SharpHypothesis {
  std::vector<double> delta;
};
/// Every effect at most c (greater side) or at least c (lesser side).
struct BoundedConstantHypothesis {
  double c = 0.0;
  Side side = Side::greater;
};
/// The k-th smallest effect is at most c.
struct QuantileHypothesis {
  std::size_t k = 0;
  double c = 0.0;
};
using HypothesisSpec = std::variant<SharpHypothesis, BoundedConstantHypothesis, QuantileHypothesis>;
std::string describe(const HypothesisSpec& h);

struct PValueResult {
  double p = 1.0;
  double observed = 0.0;
  HypothesisSpec hypothesis;
  std::string plan;
  std::string statistic;
  std::vector<double> xi;                 // quantile hypotheses only
  std::vector<std::size_t> top_treated;   // quantile hypotheses only
  double delta_substitute = 0.0;          // quantile hypotheses only
  std::vector<std::string> notes;
};

/// Control outcomes imputed under a sharp null: y - z * delta.
std::vector<double> impute_control(std::span<const std::uint8_t> z, std::span<const double> y,
                                   std::span<const double> delta);

/// How the caller reads the result: against the sharp null only, or against
/// the bounded null "every effect <= delta", which needs an effect-increasing
/// or differential-increasing statistic.
enum class NullSemantics { sharp, bounded };

PValueResult pvalue_sharp(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                          std::span<const double> y, std::span<const double> delta, const RandomizationPlan& plan,
                          NullSemantics semantics = NullSemantics::bounded, const InferenceOptions& opts = {});

/// Alternative p-value: the reference imputes both arms, the cutoff is the
/// statistic on the raw observed data. Needs an effect-increasing statistic
/// for bounded semantics.
PValueResult pvalue_sharp_alt(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                              std::span<const double> y, std::span<const double> delta,
                              const RandomizationPlan& plan, NullSemantics semantics = NullSemantics::bounded,
                              const InferenceOptions& opts = {});

struct XiVector {
  std::vector<double> xi;
  std::vector<std::size_t> top_treated;  // treated units shifted by the large constant
  double delta = 0.0;                    // the large constant
};

/// Least favourable effect vector for "k-th smallest effect <= c": the
/// treated units holding the top min(n-k, m) outcomes get a finite stand-in
/// for +infinity, every other unit gets c. Ties between treated outcomes are
/// broken by the tie method's ordering.
XiVector build_xi(std::span<const std::uint8_t> z, std::span<const double> y, std::size_t k, double c,
                  const TieMethod& tie);

/// Evaluates the quantile p-values for one dataset against a fixed reference
/// distribution. Validates the design and statistic once.
class QuantileEngine {
 public:
  QuantileEngine(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                 std::span<const double> y, const RandomizationPlan& plan, const InferenceOptions& opts = {});

  std::size_t units() const noexcept { return y_.size(); }
  std::size_t treated() const noexcept { return treated_; }
  const std::vector<std::uint8_t>& z() const noexcept { return z_; }
  const std::vector<double>& y() const noexcept { return y_; }
  const Statistic& statistic() const noexcept { return stat_; }
  const RandomizationPlan& plan() const noexcept { return plan_; }
  const NullDistribution& reference() const noexcept { return *reference_; }
  const std::vector<std::string>& notes() const noexcept { return notes_; }

  /// Treated units shifted to the bottom for rank k (size min(n-k, m)).
  std::vector<std::size_t> top_treated(std::size_t k) const;
  double observed(std::size_t k, double c) const;
  double pvalue(std::size_t k, double c) const;
  PValueResult result(std::size_t k, double c) const;

  /// Sorted distinct values y_i - y_j with i treated outside the top set for
  /// rank k and j control; the p-value as a function of c can only change there.
  std::vector<double> candidates(std::size_t k) const;

 private:
  std::vector<std::uint8_t> z_;
  std::vector<double> y_;
  Statistic stat_;
  RandomizationPlan plan_;
  std::shared_ptr<const NullDistribution> reference_;
  std::vector<std::size_t> treated_by_outcome_;  // treated units, largest outcome first
  std::vector<std::string> notes_;
  std::size_t treated_ = 0;
  double delta_ = 0.0;
};

PValueResult pvalue_quantile(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                             std::span<const double> y, std::size_t k, double c, const RandomizationPlan& plan,
                             const InferenceOptions& opts = {});

/// Dispatches a hypothesis to the matching p-value routine.
PValueResult test_hypothesis(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                             std::span<const double> y, const HypothesisSpec& hypothesis,
                             const RandomizationPlan& plan, const InferenceOptions& opts = {});

struct Dataset {
  Assignment z;
  std::vector<double> y;
};

/// (1 - z, -y): relabels the arms and negates outcomes. Individual effects are
/// unchanged, but the imputed outcomes become the treated ones. Involution.
Dataset swap_arms(std::span<const std::uint8_t> z, std::span<const double> y);

/// (z, -y): negates outcomes so that every effect changes sign. Greater-side
/// procedures on the result give lesser-side inference on the input. Involution.
Dataset flip_for_lesser(std::span<const std::uint8_t> z, std::span<const double> y);

/// The design that governs swapped arms: CRE(n, n-m), BRE(n, 1-p), or the
/// explicit table with every row complemented.
Mechanism swap_arms(const Mechanism& mech);

}  // namespace randinf

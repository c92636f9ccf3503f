#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "randinf/inference.hpp"

namespace randinf {

/// inf{c : p(c) > alpha}. `attained` is set when p(value) <= alpha, so the
/// value itself is rejected and the interval is (value, inf).
struct LowerLimit {
  double value = -INFINITY;
  bool attained = false;
};

struct BandMetadata {
  std::string statistic;
  std::string plan;
  std::string mechanism;
  std::string tie;
  std::string tie_digest;
  std::vector<std::string> notes;
};

/// Confidence limits for every sorted individual effect tau_(1) <= ... <= tau_(n).
/// Index k-1 holds rank k. Greater-side bands leave the upper limits at +inf,
/// lesser-side bands leave the lower limits at -inf.
struct QuantileBand {
  double alpha = 0.1;
  Side side = Side::greater;
  std::vector<double> lower;
  std::vector<std::uint8_t> lower_attained;
  std::vector<double> upper;
  std::vector<std::uint8_t> upper_attained;
  BandMetadata metadata;

  std::size_t units() const noexcept { return lower.size(); }
  double level() const noexcept { return 1.0 - alpha; }
};

LowerLimit ci_quantile_lower(const QuantileEngine& engine, std::size_t k, double alpha);

/// Greater-side band: lower limit for every k, no multiplicity correction.
QuantileBand band_all_quantiles(const QuantileEngine& engine, double alpha, unsigned threads = 1);

/// Lower confidence limit for the largest effect. Rank-score statistics on
/// exchangeable designs use the exact candidate inversion; any other
/// statistic bisects the constant-shift p-value, which needs a
/// differential-increasing statistic (or effect increasing and distribution free).
LowerLimit ci_max_effect(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                         std::span<const double> y, double alpha, const RandomizationPlan& plan,
                         const InferenceOptions& opts = {});

struct CountBound {
  double threshold = 0.0;
  std::size_t bound = 0;  // lower confidence limit for #{i : tau_i > threshold}
  double level = 0.9;
};

/// Number of ranks k whose null "tau_(k) <= c" is rejected by the band:
/// lower[k] > c, or lower[k] == c with the limit attained.
CountBound ci_count_lower(const QuantileBand& band, double threshold);

/// Same bound computed directly: n - max{k : p(k, c) > alpha}.
CountBound count_lower_direct(const QuantileEngine& engine, double threshold, double alpha);

struct RangeResult {
  double max_lower = -INFINITY;  // lower limit for the largest effect at alpha/2
  double min_upper = INFINITY;   // upper limit for the smallest effect at alpha/2
  double limit = 0.0;            // lower limit for max effect - min effect
  bool constant_effect_rejected = false;
  double alpha = 0.1;
};

/// max(max_lower - min_upper, 0); constant effects are rejected iff it is positive.
RangeResult combine_range(double max_lower, double min_upper, double alpha);

RangeResult effect_range(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                         std::span<const double> y, double alpha, const RandomizationPlan& plan,
                         const InferenceOptions& opts = {});

/// Lesser-side band: upper limits for every rank from the negated problem.
QuantileBand lesser_band(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                         std::span<const double> y, double alpha, const RandomizationPlan& plan,
                         const InferenceOptions& opts = {});

/// Bonferroni combination of the greater and lesser bands, each at alpha/2.
QuantileBand two_sided_band(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                            std::span<const double> y, double alpha, const RandomizationPlan& plan,
                            const InferenceOptions& opts = {});

/// Greater, lesser or two-sided band with metadata filled in.
QuantileBand compute_band(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                          std::span<const double> y, double alpha, Side side, const RandomizationPlan& plan,
                          const InferenceOptions& opts = {});

/// Shortest round-trip text for a double; infinities as "inf" / "-inf".
std::string format_number(double v);

/// Columns k, n_minus_k_plus_1, lower_limit, attained (plus upper_limit,
/// upper_attained for lesser and two-sided bands).
std::string band_to_csv(const QuantileBand& band);
/// JSON object with the same rows and the metadata.
std::string band_to_json(const QuantileBand& band, const std::string& version);

}  // namespace randinf

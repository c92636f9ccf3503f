#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "randinf/assignment.hpp"
#include "randinf/ranks.hpp"

namespace randinf {

struct PropertyFlags {
  bool effect_increasing = false;
  bool differential_increasing = false;
  bool distribution_free = false;
};

/// sum_i z_i phi(r_i(y)).
struct RankScoreForm {
  ScoreVector scores;
  TieMethod tie = TieMethod::first();
};

/// Per-unit transform psi(i, y).
using UnitTransform = std::function<double(std::size_t unit, double y)>;

/// sum_i z_i psi1(i, y_i) - sum_i (1 - z_i) psi0(i, y_i).
struct SumScoreForm {
  UnitTransform treated;
  UnitTransform control;
  std::string label = "sum-score";
};

struct DifferenceInMeansForm {};

/// Sum-score form with psi1 = y / (n P(Z_i = 1)) and psi0 = y / (n P(Z_i = 0)).
struct HorvitzThompsonForm {
  std::vector<double> treatment_probability;
};

using StatisticFunction = std::function<double(std::span<const std::uint8_t>, std::span<const double>)>;

struct CustomForm {
  StatisticFunction fn;
  std::string label = "custom";
};

class Statistic {
 public:
  using Form = std::variant<RankScoreForm, SumScoreForm, DifferenceInMeansForm, HorvitzThompsonForm, CustomForm>;

  /// Flags follow the rank-score proposition: deterministic tie methods give
  /// effect increasing and distribution free (the latter under exchangeable
  /// designs); average ties give effect increasing only.
  static Statistic rank_score(ScoreVector scores, TieMethod tie);
  /// The caller asserts the transforms are nondecreasing; both flags are then set.
  static Statistic sum_score(UnitTransform treated, UnitTransform control, std::string label);
  static Statistic difference_in_means();
  static Statistic horvitz_thompson(std::vector<double> treatment_probability);
  /// All flags default to false; pass the ones the caller can vouch for.
  static Statistic custom(StatisticFunction fn, std::string label, PropertyFlags flags = {});

  double operator()(std::span<const std::uint8_t> z, std::span<const double> y) const;

  const Form& form() const noexcept { return form_; }
  const PropertyFlags& flags() const noexcept { return flags_; }
  const RankScoreForm* rank_form() const noexcept { return std::get_if<RankScoreForm>(&form_); }
  std::string name() const;

 private:
  Statistic(Form form, PropertyFlags flags) : form_(std::move(form)), flags_(flags) {}

  Form form_;
  PropertyFlags flags_;
};

/// Same as stat(z, y); free-function spelling.
double eval(const Statistic& stat, std::span<const std::uint8_t> z, std::span<const double> y);

/// Rank-score value from a precomputed rank order (units by increasing rank).
/// Scores are summed in increasing rank order so equal rank sets give
/// bitwise-equal sums.
double rank_score_sum(const ScoreVector& scores, std::span<const std::size_t> order,
                      std::span<const std::uint8_t> z);

enum class Property { effect_increasing, differential_increasing, distribution_free };

std::string property_name(Property p);

struct Counterexample {
  Assignment z;
  Assignment a;  // differential increasing only
  std::vector<double> y;
  std::vector<double> y_other;  // the second outcome vector of the failing comparison
  double lhs = 0.0;
  double rhs = 0.0;
  std::string detail;
};

struct PropertyReport {
  Property property = Property::effect_increasing;
  std::string statistic;
  std::string mechanism;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::optional<Counterexample> counterexample;

  bool holds() const noexcept { return !counterexample.has_value(); }
};

/// Randomized falsification on the integer lattice: y and the control shift in
/// {-3..3}, treated shift in {0..3}. Assignments are drawn from `mech`. The
/// distribution-free check compares exact null distributions of `trials`
/// random y vectors against the first one and needs an enumerable design.
PropertyReport check_property(const Statistic& stat, Property property, const Mechanism& mech,
                              std::size_t trials, std::uint64_t seed);

/// Verifies one explicit instance of a property inequality; returns the
/// counterexample when it is violated.
std::optional<Counterexample> effect_increasing_violation(const Statistic& stat, std::span<const std::uint8_t> z,
                                                          std::span<const double> y, std::span<const double> eta,
                                                          std::span<const double> xi);
std::optional<Counterexample> differential_increasing_violation(const Statistic& stat,
                                                                std::span<const std::uint8_t> z,
                                                                std::span<const std::uint8_t> a,
                                                                std::span<const double> y,
                                                                std::span<const double> eta);

namespace fixtures {
/// y at the smallest treated index: effect increasing only.
Statistic first_treated_outcome();
/// sum z_i y_i - 2 sum y_i: differential increasing only.
Statistic treated_sum_minus_twice_total();
/// -sum z_i r_i(y) with first ties: distribution free only (meant for CRE(2,1)).
Statistic negative_rank_sum();
}  // namespace fixtures

}  // namespace randinf

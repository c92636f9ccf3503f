#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "randinf/inference.hpp"

namespace randinf {

/// Y(0) ~ N(0,1), tau = tau0 + sigma * eps with eps ~ N(0,1). With
/// `standardize`, Y(0) and eps are each rescaled to sample mean 0 and sample
/// sd 1 (n - 1 denominator) before tau is formed.
struct NormalEffects {
  double tau0 = 0.0;
  double sigma = 0.0;
  bool standardize = true;
};

/// Y(0) ~ N(0,1); round(fraction * n) randomly chosen units get
/// `outlier_effect`, the rest `main_effect`.
struct MixtureEffects {
  double main_effect = 2.0;
  double outlier_effect = -50.0;
  double outlier_fraction = 0.05;
};

/// Y(1) = Y(0) drawn from a Fernandez-Steel skewed Student t: with
/// probability skew^2 / (1 + skew^2) the draw is skew * |T|, otherwise -|T| / skew.
struct HeavyTailNull {
  double df = 1.5;
  double skew = 5.0;
};

/// Y(0) ~ N(0,1), tau = c for every unit.
struct ConstantEffect {
  double c = 0.0;
};

using Dgp = std::variant<NormalEffects, MixtureEffects, HeavyTailNull, ConstantEffect>;
std::string describe(const Dgp& dgp);

/// The first `units` units get Y(0) = Y(1) = value.
struct OutlierInjection {
  std::size_t units = 1;
  double value = 10.0;
};

struct DesignSpec {
  enum class Kind { cre, bre } kind = Kind::cre;
  std::size_t treated = 0;  // CRE; 0 means n / 2
  double probability = 0.5;  // BRE

  Mechanism build(std::size_t n) const;
};

enum class StatKind { dim, wilcoxon, stephenson };

struct StatisticChoice {
  StatKind kind = StatKind::stephenson;
  std::size_t subset_size = 10;

  /// "dim", "wilcoxon", "stephenson" (s = 10) or "stephenson:<s>".
  static StatisticChoice parse(const std::string& text);
  std::string name() const;
  Statistic build(std::size_t n) const;
};

struct Scenario {
  std::size_t n = 120;
  DesignSpec design;
  Dgp dgp = NormalEffects{};
  std::optional<OutlierInjection> outlier;
  std::size_t replications = 500;
  double alpha = 0.1;
  std::vector<StatisticChoice> statistics;
  std::uint64_t seed = 1;
  /// Redraw the potential outcomes for every replication instead of fixing them.
  bool superpopulation = false;
};

struct PotentialOutcomes {
  std::vector<double> y0;
  std::vector<double> y1;
  std::vector<double> tau;

  std::vector<double> observe(std::span<const std::uint8_t> z) const;
};

PotentialOutcomes generate_population(const Scenario& scenario, std::uint64_t seed);

enum class Metric { power, count };

struct GridPoint {
  double tau0 = 0.0;
  double sigma = 0.0;
};

struct PowerStudy {
  Scenario scenario;
  /// Overrides tau0 and sigma of a NormalEffects scenario; ignored otherwise.
  std::vector<GridPoint> grid;
  Metric metric = Metric::power;
  double count_threshold = 0.0;
  RandomizationPlan plan = RandomizationPlan::monte_carlo(2000, 1);
  unsigned threads = 1;
};

struct PowerRow {
  std::string statistic;
  std::string dgp;
  double tau0 = 0.0;
  double sigma = 0.0;
  std::size_t replications = 0;
  double value = 0.0;  // rejection rate or mean count bound
  double se = 0.0;     // Monte Carlo standard error of `value`
};

struct SimReport {
  Metric metric = Metric::power;
  std::vector<PowerRow> rows;
  std::string plan;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  std::vector<std::string> notes;
};

/// Power of the constant-zero bounded-null test, or the mean lower
/// confidence bound for #{tau_i > threshold}, over replications that draw a
/// fresh assignment each time.
SimReport run_power_study(const PowerStudy& study);

/// Neyman lower limit for the average effect: difference in means minus
/// z_quantile * sqrt(s1^2 / m + s0^2 / (n - m)).
double neyman_lower_limit(std::span<const std::uint8_t> z, std::span<const double> y,
                          double z_quantile = 1.2815515655446004);

struct NeymanReport {
  std::vector<double> neyman_lower;
  std::vector<std::size_t> count_lower;
  double mean_neyman_lower = 0.0;
  double mean_count = 0.0;
  double neyman_covers_zero = 0.0;  // fraction of replications with lower limit <= 0
  double true_average_effect = 0.0;
  std::size_t max_count = 0;
  std::size_t replications = 0;
};

/// Per replication: the Neyman 90% lower limit and the rank-score lower
/// bound for #{tau_i > 0} at level 1 - alpha.
NeymanReport run_neyman_comparison(const Scenario& scenario, const StatisticChoice& stat,
                                   const RandomizationPlan& plan, unsigned threads = 1);

/// Constant-zero p-values over replications (validity checks).
std::vector<double> collect_pvalues(const Scenario& scenario, const StatisticChoice& stat,
                                    const RandomizationPlan& plan, unsigned threads = 1);

/// Scenario and study from a JSON document; see README for the keys.
struct SimulationSpec {
  std::string kind = "power";  // power | count | neyman
  PowerStudy study;
};
SimulationSpec parse_simulation_spec(const std::string& json_text);

std::string report_to_csv(const SimReport& report);
std::string report_to_json(const SimReport& report, const std::string& version);
std::string neyman_to_csv(const NeymanReport& report);
std::string neyman_to_json(const NeymanReport& report, const Scenario& scenario, const std::string& plan,
                           const std::string& version);

}  // namespace randinf

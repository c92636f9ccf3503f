#include "randinf/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "randinf/error.hpp"

namespace randinf {

namespace {

void check_lengths(std::span<const std::uint8_t> z, std::span<const double> y) {
  if (z.size() != y.size()) throw Error(errc::kInvalidArgument, "assignment and outcome lengths differ");
}

bool nondecreasing(const std::vector<double>& phi) {
  return std::is_sorted(phi.begin(), phi.end());
}

double tolerance(double a, double b) { return 1e-9 * (1.0 + std::abs(a) + std::abs(b)); }

std::string join(std::span<const double> v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

std::string join(std::span<const std::uint8_t> v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << int(v[i]);
  os << ']';
  return os.str();
}

std::vector<double> lattice(CounterStream& rng, std::size_t n, int lo, int hi) {
  std::vector<double> v(n);
  const auto width = static_cast<std::uint64_t>(hi - lo + 1);
  for (auto& x : v) x = static_cast<double>(lo + static_cast<int>(rng.below(width)));
  return v;
}

// Exact distribution as (value, probability) with equal values merged.
std::vector<std::pair<double, double>> exact_distribution(const Statistic& stat, const Mechanism& mech,
                                                          std::span<const double> y) {
  std::map<double, double> atoms;
  enumerate(mech, kDefaultEnumerationCap, [&](const Assignment& a, double p) {
    if (p > 0.0) atoms[stat(a, y)] += p;
  });
  return {atoms.begin(), atoms.end()};
}

}  // namespace

Statistic Statistic::rank_score(ScoreVector scores, TieMethod tie) {
  if (!nondecreasing(scores.phi)) {
    throw Error(errc::kInvalidArgument, "rank scores must be nondecreasing");
  }
  PropertyFlags flags;
  flags.effect_increasing = true;
  flags.distribution_free = tie.kind() != TieKind::average;
  return Statistic(RankScoreForm{std::move(scores), std::move(tie)}, flags);
}

Statistic Statistic::sum_score(UnitTransform treated, UnitTransform control, std::string label) {
  if (!treated || !control) throw Error(errc::kInvalidArgument, "sum-score transforms must be set");
  return Statistic(SumScoreForm{std::move(treated), std::move(control), std::move(label)},
                   PropertyFlags{true, true, false});
}

Statistic Statistic::difference_in_means() {
  return Statistic(DifferenceInMeansForm{}, PropertyFlags{true, true, false});
}

Statistic Statistic::horvitz_thompson(std::vector<double> treatment_probability) {
  for (double p : treatment_probability) {
    if (!(p > 0.0 && p < 1.0)) {
      throw Error(errc::kInvalidArgument, "Horvitz-Thompson needs 0 < P(Z_i = 1) < 1 for every unit");
    }
  }
  return Statistic(HorvitzThompsonForm{std::move(treatment_probability)}, PropertyFlags{true, true, false});
}

Statistic Statistic::custom(StatisticFunction fn, std::string label, PropertyFlags flags) {
  if (!fn) throw Error(errc::kInvalidArgument, "custom statistic needs a function");
  return Statistic(CustomForm{std::move(fn), std::move(label)}, flags);
}

double rank_score_sum(const ScoreVector& scores, std::span<const std::size_t> order,
                      std::span<const std::uint8_t> z) {
  double total = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (z[order[r]]) total += scores.phi[r];
  }
  return total;
}

double Statistic::operator()(std::span<const std::uint8_t> z, std::span<const double> y) const {
  check_lengths(z, y);
  const std::size_t n = y.size();
  if (const auto* rs = std::get_if<RankScoreForm>(&form_)) {
    if (rs->scores.units() != n) {
      throw Error(errc::kInvalidArgument, "score vector length does not match the number of units");
    }
    if (rs->tie.kind() == TieKind::average) {
      auto per_unit = average_tie_scores(rs->scores, y);
      auto order = rank_order(y, TieMethod::first());
      double total = 0.0;
      for (auto i : order) {
        if (z[i]) total += per_unit[i];
      }
      return total;
    }
    return rank_score_sum(rs->scores, rank_order(y, rs->tie), z);
  }
  if (std::holds_alternative<DifferenceInMeansForm>(form_)) {
    double treated = 0.0, control = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (z[i]) {
        treated += y[i];
        ++m;
      } else {
        control += y[i];
      }
    }
    if (m == 0 || m == n) {
      throw Error(errc::kDegenerateArm, "difference in means needs both arms non-empty");
    }
    return treated / static_cast<double>(m) - control / static_cast<double>(n - m);
  }
  if (const auto* ss = std::get_if<SumScoreForm>(&form_)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += z[i] ? ss->treated(i, y[i]) : -ss->control(i, y[i]);
    return total;
  }
  if (const auto* ht = std::get_if<HorvitzThompsonForm>(&form_)) {
    if (ht->treatment_probability.size() != n) {
      throw Error(errc::kInvalidArgument, "Horvitz-Thompson probabilities do not match the number of units");
    }
    const double scale = static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = ht->treatment_probability[i];
      total += z[i] ? y[i] / (scale * pi) : -y[i] / (scale * (1.0 - pi));
    }
    return total;
  }
  return std::get<CustomForm>(form_).fn(z, y);
}

std::string Statistic::name() const {
  if (const auto* rs = std::get_if<RankScoreForm>(&form_)) {
    return rs->scores.name() + "[ties=" + rs->tie.name() + "]";
  }
  if (std::holds_alternative<DifferenceInMeansForm>(form_)) return "difference-in-means";
  if (const auto* ss = std::get_if<SumScoreForm>(&form_)) return ss->label;
  if (std::holds_alternative<HorvitzThompsonForm>(form_)) return "horvitz-thompson";
  return std::get<CustomForm>(form_).label;
}

double eval(const Statistic& stat, std::span<const std::uint8_t> z, std::span<const double> y) {
  return stat(z, y);
}

std::string property_name(Property p) {
  switch (p) {
    case Property::effect_increasing: return "effect-increasing";
    case Property::differential_increasing: return "differential-increasing";
    case Property::distribution_free: return "distribution-free";
  }
  return "unknown";
}

std::optional<Counterexample> effect_increasing_violation(const Statistic& stat, std::span<const std::uint8_t> z,
                                                          std::span<const double> y, std::span<const double> eta,
                                                          std::span<const double> xi) {
  std::vector<double> shifted(y.begin(), y.end());
  for (std::size_t i = 0; i < y.size(); ++i) shifted[i] += z[i] ? eta[i] : xi[i];
  const double before = stat(z, y);
  const double after = stat(z, shifted);
  if (after >= before - tolerance(before, after)) return std::nullopt;
  Counterexample ce;
  ce.z.assign(z.begin(), z.end());
  ce.y.assign(y.begin(), y.end());
  ce.y_other = shifted;
  ce.lhs = after;
  ce.rhs = before;
  ce.detail = "t(z, y + z*eta + (1-z)*xi) = " + std::to_string(after) + " < t(z, y) = " + std::to_string(before) +
              " with z=" + join(z) + " y=" + join(y) + " eta=" + join(eta) + " xi=" + join(xi);
  return ce;
}

std::optional<Counterexample> differential_increasing_violation(const Statistic& stat,
                                                                std::span<const std::uint8_t> z,
                                                                std::span<const std::uint8_t> a,
                                                                std::span<const double> y,
                                                                std::span<const double> eta) {
  std::vector<double> shifted(y.begin(), y.end());
  for (std::size_t i = 0; i < y.size(); ++i) shifted[i] += a[i] ? eta[i] : 0.0;
  const double change_z = stat(z, shifted) - stat(z, y);
  const double change_a = stat(a, shifted) - stat(a, y);
  if (change_z <= change_a + tolerance(change_z, change_a)) return std::nullopt;
  Counterexample ce;
  ce.z.assign(z.begin(), z.end());
  ce.a.assign(a.begin(), a.end());
  ce.y.assign(y.begin(), y.end());
  ce.y_other = shifted;
  ce.lhs = change_z;
  ce.rhs = change_a;
  ce.detail = "change at z = " + std::to_string(change_z) + " > change at a = " + std::to_string(change_a) +
              " with z=" + join(z) + " a=" + join(a) + " y=" + join(y) + " eta=" + join(eta);
  return ce;
}

PropertyReport check_property(const Statistic& stat, Property property, const Mechanism& mech,
                              std::size_t trials, std::uint64_t seed) {
  PropertyReport report;
  report.property = property;
  report.statistic = stat.name();
  report.mechanism = mech.describe();
  report.trials = trials;
  report.seed = seed;
  const std::size_t n = mech.units();

  if (property == Property::distribution_free) {
    CounterStream rng(derive_seed(seed, 1), 0);
    auto reference_y = lattice(rng, n, -3, 3);
    const auto reference = exact_distribution(stat, mech, reference_y);
    for (std::size_t t = 1; t < trials; ++t) {
      auto y = lattice(rng, n, -3, 3);
      auto dist = exact_distribution(stat, mech, y);
      bool same = dist.size() == reference.size();
      for (std::size_t j = 0; same && j < dist.size(); ++j) {
        same = std::abs(dist[j].first - reference[j].first) <= tolerance(dist[j].first, reference[j].first) &&
               std::abs(dist[j].second - reference[j].second) <= 1e-12;
      }
      if (!same) {
        Counterexample ce;
        ce.y = reference_y;
        ce.y_other = y;
        ce.lhs = static_cast<double>(reference.size());
        ce.rhs = static_cast<double>(dist.size());
        ce.detail = "null distributions differ between y=" + join(reference_y) + " and y=" + join(y);
        report.counterexample = std::move(ce);
        return report;
      }
    }
    return report;
  }

  const std::uint64_t base = derive_seed(seed, property == Property::effect_increasing ? 2 : 3);
  for (std::size_t t = 0; t < trials; ++t) {
    CounterStream rng(base, t);
    const auto z = sample(mech, derive_seed(base, 0x5A), t);
    auto y = lattice(rng, n, -3, 3);
    auto eta = lattice(rng, n, 0, 3);
    std::optional<Counterexample> ce;
    if (property == Property::effect_increasing) {
      auto xi = lattice(rng, n, -3, 0);
      ce = effect_increasing_violation(stat, z, y, eta, xi);
    } else {
      const auto a = sample(mech, derive_seed(base, 0xA5), t);
      ce = differential_increasing_violation(stat, z, a, y, eta);
    }
    if (ce) {
      report.counterexample = std::move(ce);
      return report;
    }
  }
  return report;
}

namespace fixtures {

Statistic first_treated_outcome() {
  return Statistic::custom(
      [](std::span<const std::uint8_t> z, std::span<const double> y) {
        for (std::size_t i = 0; i < z.size(); ++i) {
          if (z[i]) return y[i];
        }
        throw Error(errc::kDegenerateArm, "first-treated-outcome needs a treated unit");
      },
      "fixture:first-treated-outcome", PropertyFlags{true, false, false});
}

Statistic treated_sum_minus_twice_total() {
  return Statistic::custom(
      [](std::span<const std::uint8_t> z, std::span<const double> y) {
        double treated = 0.0, total = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
          if (z[i]) treated += y[i];
          total += y[i];
        }
        return treated - 2.0 * total;
      },
      "fixture:treated-sum-minus-twice-total", PropertyFlags{false, true, false});
}

Statistic negative_rank_sum() {
  return Statistic::custom(
      [](std::span<const std::uint8_t> z, std::span<const double> y) {
        auto ranks = rank_vector(y, TieMethod::first());
        double total = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
          if (z[i]) total -= ranks[i];
        }
        return total;
      },
      "fixture:negative-rank-sum", PropertyFlags{false, false, true});
}

}  // namespace fixtures

}  // namespace randinf

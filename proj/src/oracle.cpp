#include "randinf/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "randinf/error.hpp"
#include "randinf/intervals.hpp"

namespace randinf::oracle {

namespace {

Assignment bits_of(std::uint64_t code, std::size_t n) {
  Assignment a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<std::uint8_t>((code >> i) & 1U);
  return a;
}

// Literal tail: sum of P(a) over assignments whose value reaches the cutoff.
// Uniform designs use hit counts so the result is count / K.
template <class ValueOf>
double literal_tail(const Support& s, double cutoff, ValueOf value_of) {
  std::uint64_t hits = 0;
  long double mass = 0.0L;
  for (const auto& [a, p] : s.rows) {
    if (value_of(a) >= cutoff) {
      ++hits;
      mass += p;
    }
  }
  if (s.uniform) return static_cast<double>(hits) / static_cast<double>(s.rows.size());
  return static_cast<double>(mass);
}

double big_shift(std::span<const std::uint8_t> z, std::span<const double> y) {
  double max_t = -INFINITY, min_c = INFINITY, lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < y.size(); ++i) {
    lo = std::min(lo, y[i]);
    hi = std::max(hi, y[i]);
    if (z[i]) max_t = std::max(max_t, y[i]);
    else min_c = std::min(min_c, y[i]);
  }
  if (!std::isfinite(min_c)) min_c = lo;
  return 10.0 * ((max_t - min_c) + std::max(1.0, hi - lo));
}

}  // namespace

OracleReport compare(std::string instance, double production, double oracle, std::string payload) {
  OracleReport r;
  r.instance = std::move(instance);
  r.production = production;
  r.oracle = oracle;
  r.match = production == oracle;
  if (!r.match) r.counterexample = std::move(payload);
  return r;
}

Support support(const Mechanism& mech, std::uint64_t cap) {
  Support s;
  const std::size_t n = mech.units();
  const auto& v = mech.variant();
  if (const auto* e = std::get_if<ExplicitDesign>(&v)) {
    if (e->rows.size() > cap) throw Error(errc::kCapacity, "oracle support too large");
    s.rows = e->rows;
    s.uniform = std::all_of(s.rows.begin(), s.rows.end(),
                            [&](const auto& r) { return r.second == s.rows.front().second; });
    return s;
  }
  if (n >= 24) throw Error(errc::kCapacity, "oracle enumerates at most 2^23 bit patterns");
  const std::uint64_t patterns = std::uint64_t{1} << n;
  if (const auto* c = std::get_if<CompleteRandomization>(&v)) {
    std::vector<Assignment> rows;
    for (std::uint64_t code = 0; code < patterns; ++code) {
      if (static_cast<std::size_t>(__builtin_popcountll(code)) == c->treated) rows.push_back(bits_of(code, n));
    }
    if (rows.size() > cap) throw Error(errc::kCapacity, "oracle support too large");
    for (auto& a : rows) s.rows.emplace_back(std::move(a), 1.0 / static_cast<double>(rows.size()));
    s.uniform = true;
    return s;
  }
  const auto& b = std::get<BernoulliRandomization>(v);
  if (patterns > cap) throw Error(errc::kCapacity, "oracle support too large");
  for (std::uint64_t code = 0; code < patterns; ++code) {
    auto a = bits_of(code, n);
    double p = 1.0;
    for (auto bit : a) p *= bit ? b.probability : 1.0 - b.probability;
    s.rows.emplace_back(std::move(a), p);
  }
  s.uniform = b.probability == 0.5;
  return s;
}

double brute_pvalue_sharp(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                          std::span<const double> y, std::span<const double> delta) {
  const auto s = support(mech);
  std::vector<double> control(y.begin(), y.end());
  for (std::size_t i = 0; i < control.size(); ++i) control[i] = z[i] == 1 ? y[i] - delta[i] : y[i];
  const double observed = stat(z, control);
  return literal_tail(s, observed, [&](const Assignment& a) { return stat(a, control); });
}

double brute_pvalue_alt(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                        std::span<const double> y, std::span<const double> delta) {
  const auto s = support(mech);
  const std::size_t n = y.size();
  const double observed = stat(z, y);
  return literal_tail(s, observed, [&](const Assignment& a) {
    std::vector<double> imputed(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double y1 = z[i] == 1 ? y[i] : y[i] + delta[i];
      const double y0 = z[i] == 1 ? y[i] - delta[i] : y[i];
      imputed[i] = a[i] == 1 ? y1 : y0;
    }
    return stat(a, imputed);
  });
}

SubsetMinimum brute_min_over_Hkc(const Statistic& stat, std::span<const std::uint8_t> z,
                                 std::span<const double> y, std::size_t k, double c) {
  const std::size_t n = y.size();
  std::vector<std::size_t> treated;
  for (std::size_t i = 0; i < n; ++i) {
    if (z[i]) treated.push_back(i);
  }
  const std::size_t m = treated.size();
  if (m > 12) throw Error(errc::kCapacity, "subset oracle supports at most 12 treated units");
  const std::size_t size = std::min(n - k, m);
  SubsetMinimum out;
  out.shift = big_shift(z, y);
  out.minimum = INFINITY;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != size) continue;
    std::vector<std::size_t> subset;
    std::vector<double> shifted(y.begin(), y.end());
    for (std::size_t j = 0; j < m; ++j) {
      const auto i = treated[j];
      if ((mask >> j) & 1U) {
        subset.push_back(i);
        shifted[i] = y[i] - out.shift;
      } else {
        shifted[i] = y[i] - c;
      }
    }
    const double value = stat(z, shifted);
    if (value < out.minimum) {
      out.minimum = value;
      out.argmin = subset;
      out.minimizers.clear();
    }
    if (value == out.minimum) out.minimizers.push_back(subset);
  }
  return out;
}

double probe_min_over_Hkc(const Statistic& stat, std::span<const std::uint8_t> z, std::span<const double> y,
                          std::size_t k, double c, std::size_t probes, std::uint64_t seed) {
  const std::size_t n = y.size();
  double lowest = INFINITY;
  double spread = 1.0;
  for (double v : y) spread = std::max(spread, std::abs(v));
  for (std::size_t t = 0; t < probes; ++t) {
    CounterStream rng(seed, t);
    // n - k units are unconstrained, the other k have effect <= c.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i + 1 < n; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    std::vector<double> delta(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double u = rng.uniform01();
      if (j < n - k) {
        // free coordinate: anywhere from well below c to far above every gap
        delta[idx[j]] = c + (u * 8.0 - 2.0) * spread * 2.0;
      } else {
        delta[idx[j]] = c - u * 3.0 * spread;
      }
      if (rng.below(4) == 0) delta[idx[j]] = std::round(delta[idx[j]]);
    }
    std::vector<double> shifted(y.begin(), y.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (z[i]) shifted[i] -= delta[i];
    }
    lowest = std::min(lowest, stat(z, shifted));
  }
  return lowest;
}

double brute_pvalue_quantile(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                             std::span<const double> y, std::size_t k, double c) {
  const auto best = brute_min_over_Hkc(stat, z, y, k, c);
  std::vector<double> delta(y.size(), c);
  for (auto i : best.argmin) delta[i] = best.shift;
  return brute_pvalue_sharp(mech, stat, z, y, delta);
}

double grid_lower_limit(const std::function<double(double)>& p, double lo, double hi, double step, double alpha) {
  if (p(lo) > alpha) return -INFINITY;
  const auto steps = static_cast<std::int64_t>(std::ceil((hi - lo) / step));
  for (std::int64_t j = 1; j <= steps; ++j) {
    const double c = lo + static_cast<double>(j) * step;
    if (p(c) > alpha) return c;
  }
  return INFINITY;
}

AuditReport validity_audit(const Mechanism& mech, const Statistic& stat, std::span<const double> y0,
                           std::span<const double> y1, std::span<const double> bound,
                           const std::vector<double>& alphas, double band_alpha) {
  const auto s = support(mech);
  const std::size_t n = y0.size();
  std::vector<double> tau(n);
  for (std::size_t i = 0; i < n; ++i) tau[i] = y1[i] - y0[i];
  std::vector<double> sorted_tau = tau;
  std::sort(sorted_tau.begin(), sorted_tau.end());

  AuditReport report;
  report.assignments = s.rows.size();
  report.alphas = alphas;
  report.rejection_rate.assign(alphas.size(), 0.0);
  report.band_alpha = band_alpha;
  std::vector<long double> rejected(alphas.size(), 0.0L);
  long double covered = 0.0L;
  NullDistributionCache cache;
  InferenceOptions opts{&cache, 1};
  const auto plan = RandomizationPlan::exact();
  for (const auto& [a, prob] : s.rows) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] ? y1[i] : y0[i];
    const double p = pvalue_sharp(mech, stat, a, y, bound, plan, NullSemantics::bounded, opts).p;
    for (std::size_t j = 0; j < alphas.size(); ++j) {
      if (p <= alphas[j]) rejected[j] += prob;
    }
    if (band_alpha > 0.0) {
      QuantileEngine engine(mech, stat, a, y, plan, opts);
      const auto band = band_all_quantiles(engine, band_alpha);
      bool all = true;
      for (std::size_t k = 0; k < n && all; ++k) {
        const double limit = band.lower[k];
        all = sorted_tau[k] > limit || (sorted_tau[k] == limit && !band.lower_attained[k]);
      }
      if (all) covered += prob;
    }
  }
  for (std::size_t j = 0; j < alphas.size(); ++j) report.rejection_rate[j] = static_cast<double>(rejected[j]);
  report.band_coverage = band_alpha > 0.0 ? static_cast<double>(covered) : 1.0;
  return report;
}

}  // namespace randinf::oracle

#include "randinf/intervals.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>

#include "randinf/error.hpp"
#include "randinf/json_util.hpp"
#include "randinf/parallel.hpp"

namespace randinf {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(errc::kInvalidArgument, "alpha must lie in (0, 1)");
}

bool exact_inversion_applies(const Statistic& stat, const Mechanism& mech) {
  const auto* rs = stat.rank_form();
  return rs && rs->tie.kind() != TieKind::average && mech.exchangeable();
}

// Lower limit by bisection on c -> p(c), assumed nondecreasing.
template <class PValue>
LowerLimit bisect_lower(PValue p_of, double alpha, double scale) {
  double hi = scale;
  int grow = 0;
  while (!(p_of(hi) > alpha)) {
    if (++grow > 80) return {INFINITY, true};
    hi = hi * 2.0 + 1.0;
  }
  double lo = -scale;
  grow = 0;
  while (p_of(lo) > alpha) {
    if (++grow > 80) return {-INFINITY, false};
    lo = lo * 2.0 - 1.0;
  }
  for (int iter = 0; iter < 400; ++iter) {
    const double mid = std::midpoint(lo, hi);
    if (mid <= lo || mid >= hi) break;
    if (p_of(mid) > alpha) hi = mid;
    else lo = mid;
  }
  return {hi, !(p_of(hi) > alpha)};
}

BandMetadata metadata_for(const Mechanism& mech, const Statistic& stat, const RandomizationPlan& plan) {
  BandMetadata meta;
  meta.statistic = stat.name();
  meta.plan = plan.describe();
  meta.mechanism = mech.describe();
  if (const auto* rs = stat.rank_form()) {
    meta.tie = rs->tie.name();
    meta.tie_digest = rs->tie.digest();
  } else {
    meta.tie = "-";
    meta.tie_digest = "-";
  }
  return meta;
}

}  // namespace

LowerLimit ci_quantile_lower(const QuantileEngine& engine, std::size_t k, double alpha) {
  check_alpha(alpha);
  const std::size_t n = engine.units();
  if (k < 1 || k > n) throw Error(errc::kInvalidArgument, "rank k must lie in 1..n");
  if (k <= n - engine.treated()) return {-INFINITY, false};
  const auto cand = engine.candidates(k);
  if (cand.empty()) {
    // no control units: the p-value does not depend on c
    return engine.pvalue(k, 0.0) > alpha ? LowerLimit{-INFINITY, false} : LowerLimit{INFINITY, true};
  }
  // Positions 0..2K alternate open gaps and candidates:
  // 0 = below cand[0], 2j+1 = cand[j], 2j = between cand[j-1] and cand[j], 2K = above cand[K-1].
  const std::size_t kk = cand.size();
  auto point = [&](std::size_t pos) {
    if (pos % 2 == 1) return cand[(pos - 1) / 2];
    const std::size_t j = pos / 2;
    if (j == 0) return cand.front() - std::max(1.0, std::abs(cand.front()));
    if (j == kk) return cand.back() + std::max(1.0, std::abs(cand.back()));
    return std::midpoint(cand[j - 1], cand[j]);
  };
  std::size_t lo = 0, hi = 2 * kk + 1;  // first position with p > alpha lies in [lo, hi]
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (engine.pvalue(k, point(mid)) > alpha) hi = mid;
    else lo = mid + 1;
  }
  if (lo == 0) return {-INFINITY, false};
  if (lo == 2 * kk + 1) return {INFINITY, true};
  if (lo % 2 == 1) return {cand[(lo - 1) / 2], false};
  return {cand[lo / 2 - 1], true};
}

QuantileBand band_all_quantiles(const QuantileEngine& engine, double alpha, unsigned threads) {
  check_alpha(alpha);
  const std::size_t n = engine.units();
  QuantileBand band;
  band.alpha = alpha;
  band.side = Side::greater;
  band.lower.assign(n, -INFINITY);
  band.lower_attained.assign(n, 0);
  band.upper.assign(n, INFINITY);
  band.upper_attained.assign(n, 0);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t idx = begin; idx < end; ++idx) {
      const auto limit = ci_quantile_lower(engine, idx + 1, alpha);
      band.lower[idx] = limit.value;
      band.lower_attained[idx] = limit.attained ? 1 : 0;
    }
  });
  // p(k, c) is nonincreasing in k, so the limits are nondecreasing; enforce it
  // so that a violation cannot leak into outputs silently.
  for (std::size_t idx = 1; idx < n; ++idx) {
    const bool below = band.lower[idx] < band.lower[idx - 1] ||
                       (band.lower[idx] == band.lower[idx - 1] && band.lower_attained[idx] < band.lower_attained[idx - 1]);
    if (below) {
      band.lower[idx] = band.lower[idx - 1];
      band.lower_attained[idx] = band.lower_attained[idx - 1];
      band.metadata.notes.push_back("monotonicity enforced at k=" + std::to_string(idx + 1));
    }
  }
  for (const auto& note : engine.notes()) band.metadata.notes.push_back(note);
  return band;
}

LowerLimit ci_max_effect(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                         std::span<const double> y, double alpha, const RandomizationPlan& plan,
                         const InferenceOptions& opts) {
  check_alpha(alpha);
  if (exact_inversion_applies(stat, mech)) {
    QuantileEngine engine(mech, stat, z, y, plan, opts);
    return ci_quantile_lower(engine, y.size(), alpha);
  }
  const auto& f = stat.flags();
  if (!f.differential_increasing && !(f.effect_increasing && f.distribution_free)) {
    throw Error(errc::kHypothesis,
                "inverting constant-shift tests needs a differential-increasing statistic, or one that is both "
                "effect increasing and distribution free; " +
                    stat.name() + " is neither");
  }
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double scale = (*hi - *lo) + 1.0;
  std::vector<double> delta(y.size());
  auto p_of = [&](double c) {
    std::fill(delta.begin(), delta.end(), c);
    return pvalue_sharp(mech, stat, z, y, delta, plan, NullSemantics::bounded, opts).p;
  };
  return bisect_lower(p_of, alpha, scale);
}

CountBound ci_count_lower(const QuantileBand& band, double threshold) {
  CountBound out;
  out.threshold = threshold;
  out.level = band.level();
  for (std::size_t idx = 0; idx < band.lower.size(); ++idx) {
    if (band.lower[idx] > threshold || (band.lower[idx] == threshold && band.lower_attained[idx])) ++out.bound;
  }
  return out;
}

CountBound count_lower_direct(const QuantileEngine& engine, double threshold, double alpha) {
  check_alpha(alpha);
  const std::size_t n = engine.units();
  std::size_t lo = n - engine.treated();  // p = 1 for every k <= n - m
  std::size_t hi = n;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (engine.pvalue(mid, threshold) > alpha) lo = mid;
    else hi = mid - 1;
  }
  CountBound out;
  out.threshold = threshold;
  out.level = 1.0 - alpha;
  out.bound = n - lo;
  return out;
}

RangeResult combine_range(double max_lower, double min_upper, double alpha) {
  RangeResult r;
  r.alpha = alpha;
  r.max_lower = max_lower;
  r.min_upper = min_upper;
  const double diff = max_lower - min_upper;
  r.limit = std::isnan(diff) ? 0.0 : std::max(diff, 0.0);
  r.constant_effect_rejected = r.limit > 0.0;
  return r;
}

RangeResult effect_range(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                         std::span<const double> y, double alpha, const RandomizationPlan& plan,
                         const InferenceOptions& opts) {
  check_alpha(alpha);
  const auto max_lower = ci_max_effect(mech, stat, z, y, alpha / 2.0, plan, opts);
  const auto flipped = flip_for_lesser(z, y);
  const auto flipped_lower = ci_max_effect(mech, stat, flipped.z, flipped.y, alpha / 2.0, plan, opts);
  return combine_range(max_lower.value, -flipped_lower.value, alpha);
}

QuantileBand lesser_band(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                         std::span<const double> y, double alpha, const RandomizationPlan& plan,
                         const InferenceOptions& opts) {
  check_alpha(alpha);
  const auto flipped = flip_for_lesser(z, y);
  QuantileEngine engine(mech, stat, flipped.z, flipped.y, plan, opts);
  const auto mirrored = band_all_quantiles(engine, alpha, opts.threads);
  const std::size_t n = y.size();
  QuantileBand band;
  band.alpha = alpha;
  band.side = Side::lesser;
  band.lower.assign(n, -INFINITY);
  band.lower_attained.assign(n, 0);
  band.upper.resize(n);
  band.upper_attained.resize(n);
  // The negated effects sorted ascending put -tau_(k) at rank n + 1 - k.
  for (std::size_t idx = 0; idx < n; ++idx) {
    band.upper[idx] = -mirrored.lower[n - 1 - idx];
    band.upper_attained[idx] = mirrored.lower_attained[n - 1 - idx];
  }
  band.metadata.notes = mirrored.metadata.notes;
  return band;
}

QuantileBand two_sided_band(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                            std::span<const double> y, double alpha, const RandomizationPlan& plan,
                            const InferenceOptions& opts) {
  check_alpha(alpha);
  QuantileEngine engine(mech, stat, z, y, plan, opts);
  auto band = band_all_quantiles(engine, alpha / 2.0, opts.threads);
  const auto upper = lesser_band(mech, stat, z, y, alpha / 2.0, plan, opts);
  band.alpha = alpha;
  band.side = Side::two_sided;
  band.upper = upper.upper;
  band.upper_attained = upper.upper_attained;
  return band;
}

QuantileBand compute_band(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                          std::span<const double> y, double alpha, Side side, const RandomizationPlan& plan,
                          const InferenceOptions& opts) {
  QuantileBand band;
  switch (side) {
    case Side::greater: {
      QuantileEngine engine(mech, stat, z, y, plan, opts);
      band = band_all_quantiles(engine, alpha, opts.threads);
      break;
    }
    case Side::lesser:
      band = lesser_band(mech, stat, z, y, alpha, plan, opts);
      break;
    case Side::two_sided:
      band = two_sided_band(mech, stat, z, y, alpha, plan, opts);
      break;
  }
  auto notes = std::move(band.metadata.notes);
  band.metadata = metadata_for(mech, stat, plan);
  band.metadata.notes = std::move(notes);
  return band;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string band_to_csv(const QuantileBand& band) {
  const bool with_upper = band.side != Side::greater;
  std::ostringstream os;
  os << "k,n_minus_k_plus_1,lower_limit,attained";
  if (with_upper) os << ",upper_limit,upper_attained";
  os << '\n';
  const std::size_t n = band.units();
  for (std::size_t idx = 0; idx < n; ++idx) {
    os << idx + 1 << ',' << n - idx << ',' << format_number(band.lower[idx]) << ','
       << int(band.lower_attained[idx]);
    if (with_upper) os << ',' << format_number(band.upper[idx]) << ',' << int(band.upper_attained[idx]);
    os << '\n';
  }
  return os.str();
}

std::string band_to_json(const QuantileBand& band, const std::string& version) {
  Json doc;
  doc["kind"] = "quantile-band";
  doc["version"] = version;
  doc["side"] = side_name(band.side);
  doc["alpha"] = band.alpha;
  doc["level"] = band.level();
  doc["statistic"] = band.metadata.statistic;
  doc["plan"] = band.metadata.plan;
  doc["mechanism"] = band.metadata.mechanism;
  doc["tie"] = band.metadata.tie;
  doc["tie_permutation_digest"] = band.metadata.tie_digest;
  doc["notes"] = band.metadata.notes;
  Json rows = Json::array();
  const std::size_t n = band.units();
  for (std::size_t idx = 0; idx < n; ++idx) {
    Json row;
    row["k"] = idx + 1;
    row["n_minus_k_plus_1"] = n - idx;
    row["lower_limit"] = json_number(band.lower[idx]);
    row["attained"] = band.lower_attained[idx] != 0;
    if (band.side != Side::greater) {
      row["upper_limit"] = json_number(band.upper[idx]);
      row["upper_attained"] = band.upper_attained[idx] != 0;
    }
    rows.push_back(std::move(row));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

}  // namespace randinf

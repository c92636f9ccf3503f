#include "randinf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "randinf/error.hpp"
#include "randinf/parallel.hpp"

namespace randinf {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(errc::kInvalidArgument, std::string(what) + " lengths differ");
}

std::string scores_key(const ScoreVector& scores) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : scores.phi) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream os;
  os << scores.name() << "/n=" << scores.units() << "/" << std::hex << h;
  return os.str();
}

// Evaluates value(a) over the support (exact) or over R draws (Monte Carlo).
template <class ValueOf>
NullDistribution build_distribution(const Mechanism& mech, const RandomizationPlan& plan, unsigned threads,
                                    ValueOf value_of) {
  if (plan.is_exact()) {
    std::vector<std::pair<double, double>> values;
    if (auto size = space_size(mech)) values.reserve(std::min<std::uint64_t>(*size, plan.exact_plan().cap));
    enumerate(mech, plan.exact_plan().cap,
              [&](const Assignment& a, double p) { values.emplace_back(value_of(a), p); });
    return NullDistribution::from_exact(std::move(values), mech.uniform());
  }
  const auto& mc = plan.monte_carlo_plan();
  std::vector<double> draws(mc.draws);
  parallel_for(draws.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) draws[i] = value_of(sample(mech, mc.seed, i));
  });
  return NullDistribution::from_draws(std::move(draws), mc.add_one);
}

// Exact or Monte Carlo tail of value(a) >= cutoff without keeping atoms.
template <class ValueOf>
double tail_probability(const Mechanism& mech, const RandomizationPlan& plan, unsigned threads, double cutoff,
                        ValueOf value_of) {
  if (plan.is_exact()) {
    std::uint64_t hits = 0, total = 0;
    long double mass = 0.0L;
    enumerate(mech, plan.exact_plan().cap, [&](const Assignment& a, double p) {
      ++total;
      if (value_of(a) >= cutoff) {
        ++hits;
        mass += p;
      }
    });
    if (mech.uniform()) return static_cast<double>(hits) / static_cast<double>(total);
    return std::clamp(static_cast<double>(mass), 0.0, 1.0);
  }
  const auto& mc = plan.monte_carlo_plan();
  std::vector<std::uint8_t> hit(mc.draws, 0);
  parallel_for(hit.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) hit[i] = value_of(sample(mech, mc.seed, i)) >= cutoff;
  });
  const auto hits = static_cast<std::uint64_t>(std::count(hit.begin(), hit.end(), std::uint8_t{1}));
  const std::uint64_t extra = mc.add_one ? 1 : 0;
  return static_cast<double>(hits + extra) / static_cast<double>(mc.draws + extra);
}

bool uses_reference(const Statistic& stat, const Mechanism& mech) {
  const auto* rs = stat.rank_form();
  return rs && rs->tie.kind() != TieKind::average && mech.exchangeable();
}

std::vector<std::size_t> treated_by_outcome(std::span<const std::uint8_t> z, std::span<const double> y,
                                            const TieMethod& tie) {
  auto order = rank_order(y, tie.kind() == TieKind::average ? TieMethod::first() : tie);
  std::vector<std::size_t> out;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (z[*it]) out.push_back(*it);
  }
  return out;
}

double large_shift(std::span<const std::uint8_t> z, std::span<const double> y) {
  double max_treated = -INFINITY, min_control = INFINITY;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (z[i]) max_treated = std::max(max_treated, y[i]);
    else min_control = std::min(min_control, y[i]);
  }
  if (!std::isfinite(min_control)) min_control = *lo;
  return (max_treated - min_control) + std::max(1.0, *hi - *lo);
}

std::size_t top_size(std::size_t n, std::size_t k, std::size_t m) { return std::min(n - k, m); }

void guard_semantics(const Statistic& stat, NullSemantics semantics, bool alternative) {
  if (semantics != NullSemantics::bounded) return;
  const auto& f = stat.flags();
  if (alternative && !f.effect_increasing) {
    throw Error(errc::kHypothesis,
                "the alternative p-value is valid for a bounded null only with an effect-increasing statistic; " +
                    stat.name() + " is not declared effect increasing");
  }
  if (!f.effect_increasing && !f.differential_increasing) {
    throw Error(errc::kHypothesis,
                "a bounded null needs an effect-increasing or differential-increasing statistic; " + stat.name() +
                    " declares neither");
  }
}

}  // namespace

RandomizationPlan RandomizationPlan::exact(std::uint64_t cap) {
  if (cap == 0) throw Error(errc::kInvalidArgument, "enumeration cap must be positive");
  return RandomizationPlan(ExactPlan{cap});
}

RandomizationPlan RandomizationPlan::monte_carlo(std::uint64_t draws, std::uint64_t seed, bool add_one) {
  if (draws < 100) throw Error(errc::kInvalidArgument, "Monte Carlo plans need at least 100 draws");
  return RandomizationPlan(MonteCarloPlan{draws, seed, add_one});
}

std::string RandomizationPlan::describe() const {
  std::ostringstream os;
  if (is_exact()) {
    os << "exact(cap=" << exact_plan().cap << ")";
  } else {
    const auto& mc = monte_carlo_plan();
    os << "mc(draws=" << mc.draws << ",seed=" << mc.seed << ",add_one=" << (mc.add_one ? 1 : 0) << ")";
  }
  return os.str();
}

NullDistribution NullDistribution::from_exact(std::vector<std::pair<double, double>> values, bool uniform) {
  NullDistribution d;
  d.exact_ = true;
  d.uniform_ = uniform;
  d.total_ = values.size();
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<long double> mass;
  for (const auto& [v, p] : values) {
    if (!d.atoms_.empty() && d.atoms_.back().value == v) {
      ++d.atoms_.back().count;
      mass.back() += p;
    } else {
      d.atoms_.push_back({v, 0.0, 1});
      mass.push_back(p);
    }
  }
  const std::size_t a = d.atoms_.size();
  d.suffix_count_.assign(a + 1, 0);
  d.suffix_probability_.assign(a + 1, 0.0);
  long double running = 0.0L;
  for (std::size_t j = a; j-- > 0;) {
    d.suffix_count_[j] = d.suffix_count_[j + 1] + d.atoms_[j].count;
    running += mass[j];
    d.suffix_probability_[j] = std::clamp(static_cast<double>(running), 0.0, 1.0);
    d.atoms_[j].probability = uniform ? static_cast<double>(d.atoms_[j].count) / static_cast<double>(d.total_)
                                      : static_cast<double>(mass[j]);
  }
  return d;
}

NullDistribution NullDistribution::from_draws(std::vector<double> draws, bool add_one) {
  NullDistribution d;
  d.exact_ = false;
  d.uniform_ = true;
  d.add_one_ = add_one;
  d.total_ = draws.size();
  std::sort(draws.begin(), draws.end());
  for (double v : draws) {
    if (!d.atoms_.empty() && d.atoms_.back().value == v) ++d.atoms_.back().count;
    else d.atoms_.push_back({v, 0.0, 1});
  }
  const std::size_t a = d.atoms_.size();
  d.suffix_count_.assign(a + 1, 0);
  d.suffix_probability_.assign(a + 1, 0.0);
  for (std::size_t j = a; j-- > 0;) {
    d.suffix_count_[j] = d.suffix_count_[j + 1] + d.atoms_[j].count;
    d.atoms_[j].probability = static_cast<double>(d.atoms_[j].count) / static_cast<double>(d.total_);
    d.suffix_probability_[j] = static_cast<double>(d.suffix_count_[j]) / static_cast<double>(d.total_);
  }
  return d;
}

std::uint64_t NullDistribution::tail_count(double c) const {
  auto it = std::lower_bound(atoms_.begin(), atoms_.end(), c,
                             [](const NullAtom& atom, double v) { return atom.value < v; });
  return suffix_count_[static_cast<std::size_t>(it - atoms_.begin())];
}

double NullDistribution::tail(double c) const {
  auto it = std::lower_bound(atoms_.begin(), atoms_.end(), c,
                             [](const NullAtom& atom, double v) { return atom.value < v; });
  const auto j = static_cast<std::size_t>(it - atoms_.begin());
  if (!exact_) {
    const std::uint64_t extra = add_one_ ? 1 : 0;
    return static_cast<double>(suffix_count_[j] + extra) / static_cast<double>(total_ + extra);
  }
  if (uniform_) return static_cast<double>(suffix_count_[j]) / static_cast<double>(total_);
  return suffix_probability_[j];
}

NullDistribution null_distribution(const Mechanism& mech, const Statistic& stat, std::span<const double> y_ref,
                                   const RandomizationPlan& plan, unsigned threads) {
  require_same_length(mech.units(), y_ref.size(), "mechanism and outcome");
  const auto* rs = stat.rank_form();
  if (rs && rs->tie.kind() != TieKind::average) {
    if (rs->scores.units() != y_ref.size()) {
      throw Error(errc::kInvalidArgument, "score vector length does not match the number of units");
    }
    const auto order = rank_order(y_ref, rs->tie);
    return build_distribution(mech, plan, threads,
                              [&](const Assignment& a) { return rank_score_sum(rs->scores, order, a); });
  }
  return build_distribution(mech, plan, threads, [&](const Assignment& a) { return stat(a, y_ref); });
}

NullDistribution rank_reference_distribution(const Mechanism& mech, const ScoreVector& scores,
                                             const RandomizationPlan& plan, unsigned threads) {
  if (scores.units() != mech.units()) {
    throw Error(errc::kInvalidArgument, "score vector length does not match the number of units");
  }
  std::vector<std::size_t> identity(mech.units());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  return build_distribution(mech, plan, threads,
                            [&](const Assignment& a) { return rank_score_sum(scores, identity, a); });
}

std::shared_ptr<const NullDistribution> NullDistributionCache::get(const Mechanism& mech,
                                                                   const ScoreVector& scores,
                                                                   const RandomizationPlan& plan, unsigned threads) {
  const std::string key = mech.describe() + "|" + scores_key(scores) + "|" + plan.describe();
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;
  auto built = std::make_shared<const NullDistribution>(rank_reference_distribution(mech, scores, plan, threads));
  entries_.emplace(key, built);
  return built;
}

std::size_t NullDistributionCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string side_name(Side side) {
  switch (side) {
    case Side::greater: return "greater";
    case Side::lesser: return "less";
    case Side::two_sided: return "two-sided";
  }
  return "unknown";
}

std::string describe(const HypothesisSpec& h) {
  std::ostringstream os;
  os.precision(17);
  if (const auto* s = std::get_if<SharpHypothesis>(&h)) {
    os << "sharp(delta=[";
    for (std::size_t i = 0; i < s->delta.size(); ++i) os << (i ? "," : "") << s->delta[i];
    os << "])";
  } else if (const auto* b = std::get_if<BoundedConstantHypothesis>(&h)) {
    os << (b->side == Side::lesser ? "all-effects-at-least(c=" : "all-effects-at-most(c=") << b->c << ")";
  } else {
    const auto& q = std::get<QuantileHypothesis>(h);
    os << "quantile-at-most(k=" << q.k << ",c=" << q.c << ")";
  }
  return os.str();
}

std::vector<double> impute_control(std::span<const std::uint8_t> z, std::span<const double> y,
                                   std::span<const double> delta) {
  require_same_length(z.size(), y.size(), "assignment and outcome");
  require_same_length(y.size(), delta.size(), "outcome and effect");
  std::vector<double> out(y.begin(), y.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (z[i]) out[i] -= delta[i];
  }
  return out;
}

PValueResult pvalue_sharp(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                          std::span<const double> y, std::span<const double> delta, const RandomizationPlan& plan,
                          NullSemantics semantics, const InferenceOptions& opts) {
  guard_semantics(stat, semantics, false);
  require_same_length(mech.units(), y.size(), "mechanism and outcome");
  const auto imputed = impute_control(z, y, delta);
  PValueResult r;
  r.hypothesis = SharpHypothesis{{delta.begin(), delta.end()}};
  r.plan = plan.describe();
  r.statistic = stat.name();
  r.observed = stat(z, imputed);
  if (opts.cache && uses_reference(stat, mech)) {
    r.p = opts.cache->get(mech, stat.rank_form()->scores, plan, opts.threads)->tail(r.observed);
    return r;
  }
  const auto* rs = stat.rank_form();
  if (rs && rs->tie.kind() != TieKind::average) {
    const auto order = rank_order(imputed, rs->tie);
    r.p = tail_probability(mech, plan, opts.threads, r.observed,
                           [&](const Assignment& a) { return rank_score_sum(rs->scores, order, a); });
  } else {
    r.p = tail_probability(mech, plan, opts.threads, r.observed,
                           [&](const Assignment& a) { return stat(a, imputed); });
  }
  return r;
}

PValueResult pvalue_sharp_alt(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                              std::span<const double> y, std::span<const double> delta,
                              const RandomizationPlan& plan, NullSemantics semantics, const InferenceOptions& opts) {
  guard_semantics(stat, semantics, true);
  require_same_length(mech.units(), y.size(), "mechanism and outcome");
  require_same_length(y.size(), delta.size(), "outcome and effect");
  const std::size_t n = y.size();
  std::vector<double> treated_outcome(n), control_outcome(n);
  for (std::size_t i = 0; i < n; ++i) {
    treated_outcome[i] = z[i] ? y[i] : y[i] + delta[i];
    control_outcome[i] = z[i] ? y[i] - delta[i] : y[i];
  }
  PValueResult r;
  r.hypothesis = SharpHypothesis{{delta.begin(), delta.end()}};
  r.plan = plan.describe();
  r.statistic = stat.name();
  r.observed = stat(z, y);
  r.p = tail_probability(mech, plan, opts.threads, r.observed, [&](const Assignment& a) {
    std::vector<double> outcome(n);
    for (std::size_t i = 0; i < n; ++i) outcome[i] = a[i] ? treated_outcome[i] : control_outcome[i];
    return stat(a, outcome);
  });
  return r;
}

XiVector build_xi(std::span<const std::uint8_t> z, std::span<const double> y, std::size_t k, double c,
                  const TieMethod& tie) {
  require_same_length(z.size(), y.size(), "assignment and outcome");
  const std::size_t n = y.size();
  if (k < 1 || k > n) throw Error(errc::kInvalidArgument, "rank k must lie in 1..n");
  const std::size_t m = treated_count(z);
  if (m == 0) throw Error(errc::kDegenerateArm, "quantile inference needs at least one treated unit");
  XiVector out;
  out.delta = large_shift(z, y);
  out.xi.assign(n, c);
  const auto ordered = treated_by_outcome(z, y, tie);
  out.top_treated.assign(ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(top_size(n, k, m)));
  for (auto i : out.top_treated) out.xi[i] = out.delta;
  return out;
}

QuantileEngine::QuantileEngine(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                               std::span<const double> y, const RandomizationPlan& plan,
                               const InferenceOptions& opts)
    : z_(z.begin(), z.end()), y_(y.begin(), y.end()), stat_(stat), plan_(plan) {
  const auto* rs = stat.rank_form();
  if (!rs) {
    throw Error(errc::kHypothesis, "quantile inference needs a rank-score statistic; got " + stat.name());
  }
  if (rs->tie.kind() == TieKind::average) {
    throw Error(errc::kHypothesis, "quantile inference needs first, last or random ties; average ties are rejected");
  }
  if (!mech.exchangeable()) {
    throw Error(errc::kHypothesis,
                "quantile inference needs an exchangeable assignment mechanism; " + mech.describe() +
                    " is not declared exchangeable");
  }
  require_same_length(mech.units(), y_.size(), "mechanism and outcome");
  require_same_length(z_.size(), y_.size(), "assignment and outcome");
  for (double v : y_) {
    if (!std::isfinite(v)) throw Error(errc::kInvalidArgument, "outcomes must be finite");
  }
  treated_ = treated_count(z_);
  if (treated_ == 0) throw Error(errc::kDegenerateArm, "quantile inference needs at least one treated unit");
  if (rs->tie.kind() == TieKind::last) {
    notes_.push_back("ties=last is outside the randomized-first tie rule the quantile p-value is proven for");
  }
  treated_by_outcome_ = treated_by_outcome(z_, y_, rs->tie);
  delta_ = large_shift(z_, y_);
  if (opts.cache) {
    reference_ = opts.cache->get(mech, rs->scores, plan, opts.threads);
  } else {
    reference_ = std::make_shared<const NullDistribution>(
        rank_reference_distribution(mech, rs->scores, plan, opts.threads));
  }
}

std::vector<std::size_t> QuantileEngine::top_treated(std::size_t k) const {
  if (k < 1 || k > units()) throw Error(errc::kInvalidArgument, "rank k must lie in 1..n");
  const auto size = top_size(units(), k, treated_);
  return {treated_by_outcome_.begin(), treated_by_outcome_.begin() + static_cast<std::ptrdiff_t>(size)};
}

double QuantileEngine::observed(std::size_t k, double c) const {
  std::vector<double> imputed = y_;
  for (std::size_t i = 0; i < imputed.size(); ++i) {
    if (z_[i]) imputed[i] -= c;
  }
  for (auto i : top_treated(k)) imputed[i] = y_[i] - delta_;
  const auto* rs = stat_.rank_form();
  return rank_score_sum(rs->scores, rank_order(imputed, rs->tie), z_);
}

double QuantileEngine::pvalue(std::size_t k, double c) const { return reference_->tail(observed(k, c)); }

PValueResult QuantileEngine::result(std::size_t k, double c) const {
  PValueResult r;
  r.hypothesis = QuantileHypothesis{k, c};
  r.plan = plan_.describe();
  r.statistic = stat_.name();
  r.observed = observed(k, c);
  r.p = reference_->tail(r.observed);
  r.top_treated = top_treated(k);
  r.delta_substitute = delta_;
  r.xi.assign(units(), c);
  for (auto i : r.top_treated) r.xi[i] = delta_;
  r.notes = notes_;
  return r;
}

std::vector<double> QuantileEngine::candidates(std::size_t k) const {
  const auto top = top_treated(k);
  std::vector<std::uint8_t> in_top(units(), 0);
  for (auto i : top) in_top[i] = 1;
  std::vector<double> out;
  out.reserve(treated_ * (units() - treated_));
  for (std::size_t i = 0; i < units(); ++i) {
    if (!z_[i] || in_top[i]) continue;
    for (std::size_t j = 0; j < units(); ++j) {
      if (!z_[j]) out.push_back(y_[i] - y_[j]);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

PValueResult pvalue_quantile(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                             std::span<const double> y, std::size_t k, double c, const RandomizationPlan& plan,
                             const InferenceOptions& opts) {
  return QuantileEngine(mech, stat, z, y, plan, opts).result(k, c);
}

PValueResult test_hypothesis(const Mechanism& mech, const Statistic& stat, std::span<const std::uint8_t> z,
                             std::span<const double> y, const HypothesisSpec& hypothesis,
                             const RandomizationPlan& plan, const InferenceOptions& opts) {
  PValueResult r;
  if (const auto* s = std::get_if<SharpHypothesis>(&hypothesis)) {
    r = pvalue_sharp(mech, stat, z, y, s->delta, plan, NullSemantics::sharp, opts);
  } else if (const auto* b = std::get_if<BoundedConstantHypothesis>(&hypothesis)) {
    if (b->side == Side::two_sided) {
      throw Error(errc::kHypothesis, "bounded constant nulls are one-sided; choose greater or less");
    }
    if (b->side == Side::greater) {
      std::vector<double> delta(y.size(), b->c);
      r = pvalue_sharp(mech, stat, z, y, delta, plan, NullSemantics::bounded, opts);
    } else {
      auto flipped = flip_for_lesser(z, y);
      std::vector<double> delta(y.size(), -b->c);
      r = pvalue_sharp(mech, stat, flipped.z, flipped.y, delta, plan, NullSemantics::bounded, opts);
    }
  } else {
    const auto& q = std::get<QuantileHypothesis>(hypothesis);
    r = pvalue_quantile(mech, stat, z, y, q.k, q.c, plan, opts);
  }
  r.hypothesis = hypothesis;
  return r;
}

Dataset swap_arms(std::span<const std::uint8_t> z, std::span<const double> y) {
  require_same_length(z.size(), y.size(), "assignment and outcome");
  Dataset d;
  d.z.resize(z.size());
  d.y.resize(y.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    d.z[i] = static_cast<std::uint8_t>(1 - z[i]);
    d.y[i] = -y[i];
  }
  return d;
}

Dataset flip_for_lesser(std::span<const std::uint8_t> z, std::span<const double> y) {
  require_same_length(z.size(), y.size(), "assignment and outcome");
  Dataset d;
  d.z.assign(z.begin(), z.end());
  d.y.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) d.y[i] = -y[i];
  return d;
}

Mechanism swap_arms(const Mechanism& mech) {
  const auto& v = mech.variant();
  if (const auto* c = std::get_if<CompleteRandomization>(&v)) {
    return Mechanism::complete(c->units, c->units - c->treated);
  }
  if (const auto* b = std::get_if<BernoulliRandomization>(&v)) {
    return Mechanism::bernoulli(b->units, 1.0 - b->probability);
  }
  auto rows = std::get<ExplicitDesign>(v).rows;
  for (auto& [a, p] : rows) {
    for (auto& bit : a) bit = static_cast<std::uint8_t>(1 - bit);
  }
  return Mechanism::explicit_table(std::move(rows), mech.exchangeable());
}

}  // namespace randinf

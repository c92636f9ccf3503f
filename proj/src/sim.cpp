#include "randinf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "randinf/error.hpp"
#include "randinf/intervals.hpp"
#include "randinf/json_util.hpp"
#include "randinf/parallel.hpp"

namespace randinf {

namespace {

// Stream identifiers for derive_seed.
constexpr std::uint64_t kPopulationStream = 0x706F70;
constexpr std::uint64_t kAssignmentStream = 0x617373;
constexpr std::uint64_t kReferenceStream = 0x726566;

std::vector<double> normal_draws(CounterStream& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

void standardize(std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  for (auto& x : v) x = (x - mean) / sd;
}

double standard_error(double p, std::size_t reps) {
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(reps));
}

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (n - 1.0);
}

Scenario with_grid_point(Scenario s, const GridPoint& g) {
  if (auto* normal = std::get_if<NormalEffects>(&s.dgp)) {
    normal->tau0 = g.tau0;
    normal->sigma = g.sigma;
  }
  return s;
}

// Population for replication r (fixed table unless superpopulation).
PotentialOutcomes population_for(const Scenario& s, std::uint64_t population_seed, std::size_t r,
                                 const PotentialOutcomes& fixed) {
  if (!s.superpopulation) return fixed;
  return generate_population(s, derive_seed(population_seed, r));
}

}  // namespace

std::string describe(const Dgp& dgp) {
  std::ostringstream os;
  os.precision(17);
  if (const auto* d = std::get_if<NormalEffects>(&dgp)) {
    os << "normal(tau0=" << d->tau0 << ",sigma=" << d->sigma << ",standardize=" << (d->standardize ? 1 : 0) << ")";
  } else if (const auto* d = std::get_if<MixtureEffects>(&dgp)) {
    os << "mixture(main=" << d->main_effect << ",outlier=" << d->outlier_effect << ",fraction=" << d->outlier_fraction
       << ")";
  } else if (const auto* d = std::get_if<HeavyTailNull>(&dgp)) {
    os << "skewed-t-null(df=" << d->df << ",skew=" << d->skew << ",construction=fernandez-steel)";
  } else {
    os << "constant(c=" << std::get<ConstantEffect>(dgp).c << ")";
  }
  return os.str();
}

Mechanism DesignSpec::build(std::size_t n) const {
  if (kind == Kind::bre) return Mechanism::bernoulli(n, probability);
  return Mechanism::complete(n, treated == 0 ? n / 2 : treated);
}

StatisticChoice StatisticChoice::parse(const std::string& text) {
  StatisticChoice c;
  if (text == "dim") {
    c.kind = StatKind::dim;
    c.subset_size = 0;
  } else if (text == "wilcoxon") {
    c.kind = StatKind::wilcoxon;
    c.subset_size = 0;
  } else if (text == "stephenson") {
    c.kind = StatKind::stephenson;
  } else if (text.rfind("stephenson:", 0) == 0) {
    c.kind = StatKind::stephenson;
    try {
      c.subset_size = static_cast<std::size_t>(std::stoul(text.substr(11)));
    } catch (const std::exception&) {
      throw Error(errc::kParse, "bad Stephenson subset size in '" + text + "'");
    }
  } else {
    throw Error(errc::kParse, "unknown statistic '" + text + "' (expected dim, wilcoxon, stephenson[:s])");
  }
  return c;
}

std::string StatisticChoice::name() const {
  switch (kind) {
    case StatKind::dim: return "dim";
    case StatKind::wilcoxon: return "wilcoxon";
    case StatKind::stephenson: return "stephenson:" + std::to_string(subset_size);
  }
  return "unknown";
}

Statistic StatisticChoice::build(std::size_t n) const {
  switch (kind) {
    case StatKind::dim: return Statistic::difference_in_means();
    case StatKind::wilcoxon: return Statistic::rank_score(wilcoxon_scores(n), TieMethod::first());
    case StatKind::stephenson: return Statistic::rank_score(stephenson_scores(n, subset_size), TieMethod::first());
  }
  throw Error(errc::kInvalidArgument, "unknown statistic kind");
}

std::vector<double> PotentialOutcomes::observe(std::span<const std::uint8_t> z) const {
  std::vector<double> y(y0.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = z[i] ? y1[i] : y0[i];
  return y;
}

PotentialOutcomes generate_population(const Scenario& scenario, std::uint64_t seed) {
  const std::size_t n = scenario.n;
  if (n < 2) throw Error(errc::kInvalidArgument, "scenario needs at least two units");
  CounterStream rng(derive_seed(seed, kPopulationStream), 0);
  PotentialOutcomes po;
  if (const auto* d = std::get_if<NormalEffects>(&scenario.dgp)) {
    po.y0 = normal_draws(rng, n);
    auto eps = normal_draws(rng, n);
    if (d->standardize) {
      standardize(po.y0);
      standardize(eps);
    }
    po.tau.resize(n);
    for (std::size_t i = 0; i < n; ++i) po.tau[i] = d->tau0 + d->sigma * eps[i];
  } else if (const auto* d = std::get_if<MixtureEffects>(&scenario.dgp)) {
    if (!(d->outlier_fraction >= 0.0 && d->outlier_fraction <= 1.0)) {
      throw Error(errc::kInvalidArgument, "outlier fraction must lie in [0, 1]");
    }
    po.y0 = normal_draws(rng, n);
    po.tau.assign(n, d->main_effect);
    const auto outliers = static_cast<std::size_t>(std::llround(d->outlier_fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < outliers; ++i) {
      std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(n - i))]);
      po.tau[idx[i]] = d->outlier_effect;
    }
  } else if (const auto* d = std::get_if<HeavyTailNull>(&scenario.dgp)) {
    if (!(d->df > 0.0) || !(d->skew > 0.0)) throw Error(errc::kInvalidArgument, "df and skew must be positive");
    std::student_t_distribution<double> student(d->df);
    const double upper = d->skew * d->skew / (1.0 + d->skew * d->skew);
    po.y0.resize(n);
    for (auto& x : po.y0) {
      const double t = std::abs(student(rng));
      x = rng.uniform01() < upper ? d->skew * t : -t / d->skew;
    }
    po.tau.assign(n, 0.0);
  } else {
    po.y0 = normal_draws(rng, n);
    po.tau.assign(n, std::get<ConstantEffect>(scenario.dgp).c);
  }
  po.y1.resize(n);
  for (std::size_t i = 0; i < n; ++i) po.y1[i] = po.y0[i] + po.tau[i];
  if (scenario.outlier) {
    const std::size_t units = std::min(scenario.outlier->units, n);
    for (std::size_t i = 0; i < units; ++i) {
      po.y0[i] = po.y1[i] = scenario.outlier->value;
      po.tau[i] = 0.0;
    }
  }
  return po;
}

SimReport run_power_study(const PowerStudy& study) {
  const Scenario& base = study.scenario;
  if (base.statistics.empty()) throw Error(errc::kInvalidArgument, "simulation needs at least one statistic");
  if (base.replications == 0) throw Error(errc::kInvalidArgument, "simulation needs at least one replication");
  const auto mech = base.design.build(base.n);
  SimReport report;
  report.metric = study.metric;
  report.plan = study.plan.describe();
  report.seed = base.seed;
  report.alpha = base.alpha;
  std::vector<GridPoint> grid = study.grid;
  if (grid.empty() || !std::holds_alternative<NormalEffects>(base.dgp)) {
    GridPoint g;
    if (const auto* d = std::get_if<NormalEffects>(&base.dgp)) g = {d->tau0, d->sigma};
    grid = {g};
  }
  NullDistributionCache cache;
  InferenceOptions opts{&cache, 1};
  std::vector<Statistic> stats;
  for (const auto& choice : base.statistics) {
    if (study.metric == Metric::count && choice.kind == StatKind::dim) {
      report.notes.push_back("count metric needs a rank statistic; dim skipped");
      stats.push_back(Statistic::difference_in_means());
      continue;
    }
    stats.push_back(choice.build(base.n));
    // Build reference distributions up front; replications then only read them.
    if (const auto* rs = stats.back().rank_form()) cache.get(mech, rs->scores, study.plan, study.threads);
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Scenario scenario = with_grid_point(base, grid[g]);
    const std::uint64_t population_seed = derive_seed(base.seed, kPopulationStream + g);
    const std::uint64_t assignment_seed = derive_seed(base.seed, kAssignmentStream + g);
    const PotentialOutcomes fixed = generate_population(scenario, population_seed);
    const std::size_t reps = scenario.replications;
    // outcome[s * reps + r]: rejection indicator or count bound
    std::vector<double> outcome(stats.size() * reps, 0.0);
    parallel_for(reps, study.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        const auto po = population_for(scenario, population_seed, r, fixed);
        const auto z = sample(mech, assignment_seed, r);
        const auto y = po.observe(z);
        const std::vector<double> zero(y.size(), 0.0);
        for (std::size_t s = 0; s < stats.size(); ++s) {
          if (study.metric == Metric::power) {
            const double p = pvalue_sharp(mech, stats[s], z, y, zero, study.plan, NullSemantics::bounded, opts).p;
            outcome[s * reps + r] = p <= scenario.alpha ? 1.0 : 0.0;
          } else if (stats[s].rank_form()) {
            QuantileEngine engine(mech, stats[s], z, y, study.plan, opts);
            outcome[s * reps + r] =
                static_cast<double>(count_lower_direct(engine, study.count_threshold, scenario.alpha).bound);
          }
        }
      }
    });
    for (std::size_t s = 0; s < stats.size(); ++s) {
      if (study.metric == Metric::count && !stats[s].rank_form()) continue;
      PowerRow row;
      row.statistic = base.statistics[s].name();
      row.dgp = describe(scenario.dgp);
      row.tau0 = grid[g].tau0;
      row.sigma = grid[g].sigma;
      row.replications = reps;
      const auto first = outcome.begin() + static_cast<std::ptrdiff_t>(s * reps);
      const std::vector<double> values(first, first + static_cast<std::ptrdiff_t>(reps));
      row.value = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(reps);
      row.se = study.metric == Metric::power
                   ? standard_error(row.value, reps)
                   : (reps > 1 ? std::sqrt(sample_variance(values) / static_cast<double>(reps)) : 0.0);
      report.rows.push_back(row);
    }
  }
  return report;
}

double neyman_lower_limit(std::span<const std::uint8_t> z, std::span<const double> y, double z_quantile) {
  std::vector<double> treated, control;
  for (std::size_t i = 0; i < y.size(); ++i) (z[i] ? treated : control).push_back(y[i]);
  if (treated.size() < 2 || control.size() < 2) {
    throw Error(errc::kDegenerateArm, "the Neyman interval needs at least two units per arm");
  }
  const double mt = std::accumulate(treated.begin(), treated.end(), 0.0) / static_cast<double>(treated.size());
  const double mc = std::accumulate(control.begin(), control.end(), 0.0) / static_cast<double>(control.size());
  const double se = std::sqrt(sample_variance(treated) / static_cast<double>(treated.size()) +
                              sample_variance(control) / static_cast<double>(control.size()));
  return (mt - mc) - z_quantile * se;
}

NeymanReport run_neyman_comparison(const Scenario& scenario, const StatisticChoice& choice,
                                   const RandomizationPlan& plan, unsigned threads) {
  if (!std::holds_alternative<MixtureEffects>(scenario.dgp)) {
    throw Error(errc::kInvalidArgument, "the Neyman comparison runs on a mixture scenario");
  }
  if (choice.kind == StatKind::dim) throw Error(errc::kInvalidArgument, "the count bound needs a rank statistic");
  const auto mech = scenario.design.build(scenario.n);
  const auto stat = choice.build(scenario.n);
  NullDistributionCache cache;
  InferenceOptions opts{&cache, 1};
  cache.get(mech, stat.rank_form()->scores, plan, threads);
  const std::uint64_t population_seed = derive_seed(scenario.seed, kPopulationStream);
  const std::uint64_t assignment_seed = derive_seed(scenario.seed, kAssignmentStream);
  const PotentialOutcomes fixed = generate_population(scenario, population_seed);
  const std::size_t reps = scenario.replications;
  NeymanReport report;
  report.replications = reps;
  report.neyman_lower.resize(reps);
  report.count_lower.resize(reps);
  parallel_for(reps, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const auto po = population_for(scenario, population_seed, r, fixed);
      const auto z = sample(mech, assignment_seed, r);
      const auto y = po.observe(z);
      report.neyman_lower[r] = neyman_lower_limit(z, y);
      QuantileEngine engine(mech, stat, z, y, plan, opts);
      report.count_lower[r] = count_lower_direct(engine, 0.0, scenario.alpha).bound;
    }
  });
  report.true_average_effect =
      std::accumulate(fixed.tau.begin(), fixed.tau.end(), 0.0) / static_cast<double>(fixed.tau.size());
  std::size_t covers = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    report.mean_neyman_lower += report.neyman_lower[r];
    report.mean_count += static_cast<double>(report.count_lower[r]);
    report.max_count = std::max(report.max_count, report.count_lower[r]);
    if (report.neyman_lower[r] <= 0.0) ++covers;
  }
  report.mean_neyman_lower /= static_cast<double>(reps);
  report.mean_count /= static_cast<double>(reps);
  report.neyman_covers_zero = static_cast<double>(covers) / static_cast<double>(reps);
  return report;
}

std::vector<double> collect_pvalues(const Scenario& scenario, const StatisticChoice& choice,
                                    const RandomizationPlan& plan, unsigned threads) {
  const auto mech = scenario.design.build(scenario.n);
  const auto stat = choice.build(scenario.n);
  NullDistributionCache cache;
  InferenceOptions opts{&cache, 1};
  if (const auto* rs = stat.rank_form()) cache.get(mech, rs->scores, plan, threads);
  const std::uint64_t population_seed = derive_seed(scenario.seed, kPopulationStream);
  const std::uint64_t assignment_seed = derive_seed(scenario.seed, kAssignmentStream);
  const PotentialOutcomes fixed = generate_population(scenario, population_seed);
  std::vector<double> p(scenario.replications);
  parallel_for(p.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const auto po = population_for(scenario, population_seed, r, fixed);
      const auto z = sample(mech, assignment_seed, r);
      const auto y = po.observe(z);
      const std::vector<double> zero(y.size(), 0.0);
      p[r] = pvalue_sharp(mech, stat, z, y, zero, plan, NullSemantics::bounded, opts).p;
    }
  });
  return p;
}

SimulationSpec parse_simulation_spec(const std::string& json_text) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(errc::kParse, std::string("scenario file is not valid JSON: ") + e.what());
  }
  SimulationSpec spec;
  auto& st = spec.study;
  auto& sc = st.scenario;
  try {
    spec.kind = doc.value("kind", std::string("power"));
    if (spec.kind != "power" && spec.kind != "count" && spec.kind != "neyman") {
      throw Error(errc::kParse, "scenario kind must be power, count or neyman");
    }
    st.metric = spec.kind == "count" ? Metric::count : Metric::power;
    sc.n = doc.value("n", std::size_t{120});
    sc.replications = doc.value("replications", std::size_t{500});
    sc.alpha = doc.value("alpha", 0.1);
    sc.seed = doc.value("seed", std::uint64_t{1});
    sc.superpopulation = doc.value("superpopulation", false);
    st.count_threshold = doc.value("threshold", 0.0);
    if (doc.contains("design")) {
      const auto& d = doc["design"];
      const auto type = d.value("type", std::string("cre"));
      if (type == "cre") {
        sc.design.kind = DesignSpec::Kind::cre;
        sc.design.treated = d.value("treated", std::size_t{0});
      } else if (type == "bre") {
        sc.design.kind = DesignSpec::Kind::bre;
        sc.design.probability = d.value("probability", 0.5);
      } else {
        throw Error(errc::kParse, "design type must be cre or bre");
      }
    }
    if (doc.contains("dgp")) {
      const auto& d = doc["dgp"];
      const auto type = d.value("type", std::string("normal"));
      if (type == "normal") {
        sc.dgp = NormalEffects{d.value("tau0", 0.0), d.value("sigma", 0.0), d.value("standardize", true)};
      } else if (type == "mixture") {
        sc.dgp = MixtureEffects{d.value("main_effect", 2.0), d.value("outlier_effect", -50.0),
                                d.value("outlier_fraction", 0.05)};
      } else if (type == "heavy_tail_null") {
        sc.dgp = HeavyTailNull{d.value("df", 1.5), d.value("skew", 5.0)};
      } else if (type == "constant") {
        sc.dgp = ConstantEffect{d.value("c", 0.0)};
      } else {
        throw Error(errc::kParse, "dgp type must be normal, mixture, heavy_tail_null or constant");
      }
    }
    if (doc.contains("outliers")) {
      const auto& o = doc["outliers"];
      sc.outlier = OutlierInjection{o.value("units", std::size_t{1}), o.value("value", 10.0)};
    }
    for (const auto& s : doc.value("statistics", std::vector<std::string>{"stephenson:10"})) {
      sc.statistics.push_back(StatisticChoice::parse(s));
    }
    for (const auto& g : doc.value("grid", Json::array())) {
      st.grid.push_back({g.value("tau0", 0.0), g.value("sigma", 0.0)});
    }
    if (doc.contains("plan")) {
      const auto& p = doc["plan"];
      const auto type = p.value("type", std::string("mc"));
      if (type == "exact") {
        st.plan = RandomizationPlan::exact(p.value("cap", kDefaultEnumerationCap));
      } else if (type == "mc") {
        st.plan = RandomizationPlan::monte_carlo(p.value("draws", std::uint64_t{2000}),
                                                 p.value("seed", derive_seed(sc.seed, kReferenceStream)),
                                                 p.value("add_one", true));
      } else {
        throw Error(errc::kParse, "plan type must be exact or mc");
      }
    } else {
      st.plan = RandomizationPlan::monte_carlo(2000, derive_seed(sc.seed, kReferenceStream));
    }
  } catch (const Json::exception& e) {
    throw Error(errc::kParse, std::string("scenario file has a field of the wrong type: ") + e.what());
  }
  return spec;
}

std::string report_to_csv(const SimReport& report) {
  std::ostringstream os;
  os << "statistic,dgp,tau0,sigma,replications," << (report.metric == Metric::power ? "power" : "mean_count")
     << ",se\n";
  for (const auto& r : report.rows) {
    os << r.statistic << ",\"" << r.dgp << "\"," << format_number(r.tau0) << ',' << format_number(r.sigma) << ','
       << r.replications << ',' << format_number(r.value) << ',' << format_number(r.se) << '\n';
  }
  return os.str();
}

std::string report_to_json(const SimReport& report, const std::string& version) {
  Json doc;
  doc["kind"] = report.metric == Metric::power ? "power-study" : "count-study";
  doc["version"] = version;
  doc["seed"] = report.seed;
  doc["plan"] = report.plan;
  doc["alpha"] = report.alpha;
  doc["notes"] = report.notes;
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json row;
    row["statistic"] = r.statistic;
    row["dgp"] = r.dgp;
    row["tau0"] = json_number(r.tau0);
    row["sigma"] = json_number(r.sigma);
    row["replications"] = r.replications;
    row[report.metric == Metric::power ? "power" : "mean_count"] = json_number(r.value);
    row["se"] = json_number(r.se);
    rows.push_back(std::move(row));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

std::string neyman_to_csv(const NeymanReport& report) {
  std::ostringstream os;
  os << "replication,neyman_lower,count_lower\n";
  for (std::size_t r = 0; r < report.replications; ++r) {
    os << r + 1 << ',' << format_number(report.neyman_lower[r]) << ',' << report.count_lower[r] << '\n';
  }
  return os.str();
}

std::string neyman_to_json(const NeymanReport& report, const Scenario& scenario, const std::string& plan,
                           const std::string& version) {
  Json doc;
  doc["kind"] = "neyman-comparison";
  doc["version"] = version;
  doc["seed"] = scenario.seed;
  doc["plan"] = plan;
  doc["dgp"] = describe(scenario.dgp);
  doc["n"] = scenario.n;
  doc["alpha"] = scenario.alpha;
  doc["replications"] = report.replications;
  doc["true_average_effect"] = json_number(report.true_average_effect);
  doc["mean_neyman_lower"] = json_number(report.mean_neyman_lower);
  doc["neyman_covers_zero"] = json_number(report.neyman_covers_zero);
  doc["mean_count_lower"] = json_number(report.mean_count);
  doc["max_count_lower"] = report.max_count;
  return doc.dump(2) + "\n";
}

}  // namespace randinf

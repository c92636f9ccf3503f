#include "randinf/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "randinf/error.hpp"
#include "randinf/inference.hpp"
#include "randinf/intervals.hpp"
#include "randinf/json_util.hpp"
#include "randinf/sim.hpp"
#include "randinf/statistics.hpp"

namespace randinf {

namespace {

constexpr std::uint64_t kPlanStream = 0x6D63;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::kIo, "cannot write " + path);
  out << text;
  if (!out) throw Error(errc::kIo, "failed while writing " + path);
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size();
}

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

// Everything the subcommands share once the data and options are resolved.
struct Context {
  const RunConfig& config;
  DatasetFile data;
  std::optional<Mechanism> mech;
  std::optional<Statistic> stat;
  std::optional<RandomizationPlan> plan;
  TieMethod tie = TieMethod::first();
  NullDistributionCache cache;
  InferenceOptions opts;

  explicit Context(const RunConfig& c) : config(c) { opts = {&cache, std::max(1U, c.threads)}; }
};

TieMethod build_tie(const std::string& name, std::size_t n, std::uint64_t seed) {
  if (name == "first") return TieMethod::first();
  if (name == "last") return TieMethod::last();
  if (name == "average") return TieMethod::average();
  if (name == "random") return TieMethod::random_from_seed(n, seed);
  throw Error(errc::kInvalidArgument, "unknown tie method '" + name + "'");
}

Statistic build_statistic(const RunConfig& cfg, std::size_t n, const Mechanism& mech, const TieMethod& tie) {
  const std::string& s = cfg.statistic;
  if (s == "dim") return Statistic::difference_in_means();
  if (s == "ht") return Statistic::horvitz_thompson(mech.treatment_marginals());
  if (s == "wilcoxon") return Statistic::rank_score(wilcoxon_scores(n), tie);
  if (s == "stephenson") return Statistic::rank_score(stephenson_scores(n, cfg.subset_size), tie);
  if (s == "custom") {
    if (cfg.scores_path.empty()) throw Error(errc::kInvalidArgument, "--stat custom needs --scores <file>");
    auto scores = load_scores_csv(cfg.scores_path);
    if (scores.units() != n) {
      throw Error(errc::kInvalidArgument, "score file has " + std::to_string(scores.units()) +
                                              " rows but the data have " + std::to_string(n) + " units");
    }
    return Statistic::rank_score(std::move(scores), tie);
  }
  if (s == "fixture:first-treated") return fixtures::first_treated_outcome();
  if (s == "fixture:twice-total") return fixtures::treated_sum_minus_twice_total();
  if (s == "fixture:negative-rank") return fixtures::negative_rank_sum();
  throw Error(errc::kInvalidArgument, "unknown statistic '" + s + "'");
}

RandomizationPlan build_plan(const RunConfig& cfg) {
  if (cfg.plan == "exact") return RandomizationPlan::exact(cfg.cap);
  if (cfg.plan == "mc") return RandomizationPlan::monte_carlo(cfg.draws, derive_seed(cfg.seed, kPlanStream));
  throw Error(errc::kInvalidArgument, "plan must be exact or mc");
}

Mechanism build_mechanism(const RunConfig& cfg, std::size_t n, std::size_t m) {
  if (cfg.design == "cre") return Mechanism::complete(n, m);
  if (cfg.design == "bre") return Mechanism::bernoulli(n, cfg.probability);
  throw Error(errc::kInvalidArgument, "design must be cre or bre");
}

Side parse_side(const std::string& s) {
  if (s == "greater") return Side::greater;
  if (s == "less") return Side::lesser;
  if (s == "two-sided") return Side::two_sided;
  throw Error(errc::kInvalidArgument, "side must be greater, less or two-sided");
}

void load_data(Context& ctx) {
  const auto& cfg = ctx.config;
  if (cfg.input.empty()) throw Error(errc::kInvalidArgument, "--data <file.csv> is required");
  ctx.data = parse_dataset(cfg.input);
  const std::size_t n = ctx.data.units();
  ctx.mech = build_mechanism(cfg, n, ctx.data.treated);
  ctx.tie = build_tie(cfg.tie, n, cfg.seed);
  ctx.stat = build_statistic(cfg, n, *ctx.mech, ctx.tie);
  ctx.plan = build_plan(cfg);
}

Json metadata(const Context& ctx) {
  const auto& cfg = ctx.config;
  Json m;
  m["version"] = kVersion;
  m["subcommand"] = cfg.subcommand;
  if (!cfg.input.empty()) m["input"] = cfg.input;
  if (ctx.stat) m["statistic"] = ctx.stat->name();
  if (ctx.mech) m["mechanism"] = ctx.mech->describe();
  if (ctx.plan) m["plan"] = ctx.plan->describe();
  m["alpha"] = cfg.alpha;
  m["side"] = cfg.side;
  m["seed"] = cfg.seed;
  m["tie"] = ctx.tie.name();
  m["tie_permutation_digest"] = ctx.tie.digest();
  m["defaults_applied"] = cfg.defaults_applied;
  return m;
}

void emit(const Context& ctx, const Json& doc, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (ctx.config.json_out.empty()) out << text;
  else write_text(ctx.config.json_out, text);
}

std::vector<double> parse_delta(const std::string& text, std::size_t n) {
  double scalar = 0.0;
  if (parse_double(trim(text), scalar)) {
    if (!std::isfinite(scalar)) throw Error(errc::kInvalidArgument, "--delta must be finite");
    return std::vector<double>(n, scalar);
  }
  std::vector<double> delta;
  std::istringstream in(read_text(text));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    double v = 0.0;
    if (!parse_double(line, v)) {
      if (line_no == 1) continue;  // header
      throw Error(errc::kParse, line_error(line_no, "effect value is not a number"));
    }
    if (!std::isfinite(v)) throw Error(errc::kParse, line_error(line_no, "effect value is not finite"));
    delta.push_back(v);
  }
  if (delta.size() != n) {
    throw Error(errc::kInvalidArgument, "effect file has " + std::to_string(delta.size()) + " values for " +
                                            std::to_string(n) + " units");
  }
  return delta;
}

bool is_scalar(const std::string& text) {
  double v = 0.0;
  return parse_double(trim(text), v);
}

Json pvalue_json(const PValueResult& r) {
  Json j;
  j["p"] = r.p;
  j["observed_statistic"] = json_number(r.observed);
  j["hypothesis"] = describe(r.hypothesis);
  if (!r.xi.empty()) {
    Json xi = Json::array();
    for (double v : r.xi) xi.push_back(json_number(v));
    j["xi"] = xi;
    Json top = Json::array();
    for (auto i : r.top_treated) top.push_back(i + 1);
    j["shifted_units"] = top;
    j["large_shift"] = json_number(r.delta_substitute);
  }
  j["notes"] = r.notes;
  return j;
}

int cmd_test(Context& ctx, std::ostream& out) {
  load_data(ctx);
  const auto& cfg = ctx.config;
  const auto& d = ctx.data;
  const Side side = parse_side(cfg.side);
  if (side == Side::two_sided) throw Error(errc::kHypothesis, "test is one-sided; use --side greater or less");
  PValueResult r;
  if (cfg.k) {
    if (side != Side::greater) {
      throw Error(errc::kHypothesis, "quantile nulls are tested on the greater side; negate y for the other side");
    }
    r = test_hypothesis(*ctx.mech, *ctx.stat, d.z, d.y, QuantileHypothesis{*cfg.k, cfg.c}, *ctx.plan, ctx.opts);
  } else {
    auto delta = parse_delta(cfg.delta, d.units());
    if (cfg.alternative) {
      if (side != Side::greater) throw Error(errc::kHypothesis, "the alternative p-value is greater-side only");
      r = pvalue_sharp_alt(*ctx.mech, *ctx.stat, d.z, d.y, delta, *ctx.plan, NullSemantics::bounded, ctx.opts);
    } else if (is_scalar(cfg.delta)) {
      r = test_hypothesis(*ctx.mech, *ctx.stat, d.z, d.y, BoundedConstantHypothesis{delta.front(), side}, *ctx.plan,
                          ctx.opts);
    } else if (side == Side::greater) {
      r = pvalue_sharp(*ctx.mech, *ctx.stat, d.z, d.y, delta, *ctx.plan, NullSemantics::bounded, ctx.opts);
    } else {
      auto flipped = flip_for_lesser(d.z, d.y);
      for (auto& v : delta) v = -v;
      r = pvalue_sharp(*ctx.mech, *ctx.stat, flipped.z, flipped.y, delta, *ctx.plan, NullSemantics::bounded,
                       ctx.opts);
    }
  }
  Json doc;
  doc["kind"] = "test";
  doc["metadata"] = metadata(ctx);
  doc["result"] = pvalue_json(r);
  doc["reject"] = r.p <= cfg.alpha;
  emit(ctx, doc, out);
  return 0;
}

QuantileBand max_effect_only_band(Context& ctx, Side side) {
  const auto& d = ctx.data;
  const auto& cfg = ctx.config;
  const std::size_t n = d.units();
  QuantileBand band;
  band.alpha = cfg.alpha;
  band.side = side;
  band.lower.assign(n, -INFINITY);
  band.lower_attained.assign(n, 0);
  band.upper.assign(n, INFINITY);
  band.upper_attained.assign(n, 0);
  const double level_alpha = side == Side::two_sided ? cfg.alpha / 2.0 : cfg.alpha;
  if (side != Side::lesser) {
    const auto lower = ci_max_effect(*ctx.mech, *ctx.stat, d.z, d.y, level_alpha, *ctx.plan, ctx.opts);
    band.lower[n - 1] = lower.value;
    band.lower_attained[n - 1] = lower.attained;
  }
  if (side != Side::greater) {
    auto flipped = flip_for_lesser(d.z, d.y);
    const auto lower = ci_max_effect(*ctx.mech, *ctx.stat, flipped.z, flipped.y, level_alpha, *ctx.plan, ctx.opts);
    band.upper[0] = -lower.value;
    band.upper_attained[0] = lower.attained;
  }
  band.metadata.statistic = ctx.stat->name();
  band.metadata.plan = ctx.plan->describe();
  band.metadata.mechanism = ctx.mech->describe();
  band.metadata.tie = "-";
  band.metadata.tie_digest = "-";
  band.metadata.notes.push_back(
      "non-rank statistic: only the largest effect (lower side) and smallest effect (upper side) are inverted");
  return band;
}

int cmd_ci(Context& ctx, std::ostream& out) {
  load_data(ctx);
  const auto& cfg = ctx.config;
  const Side side = parse_side(cfg.side);
  const bool rank = ctx.stat->rank_form() != nullptr;
  QuantileBand band = rank ? compute_band(*ctx.mech, *ctx.stat, ctx.data.z, ctx.data.y, cfg.alpha, side, *ctx.plan,
                                          ctx.opts)
                           : max_effect_only_band(ctx, side);
  if (!cfg.csv_out.empty()) {
    if (rank) {
      write_text(cfg.csv_out, band_to_csv(band));
    } else {
      // a single row: the largest effect
      QuantileBand row = band;
      const std::size_t n = band.units();
      std::string csv = band_to_csv(row);
      std::istringstream lines(csv);
      std::string header, line, last;
      std::getline(lines, header);
      std::string first_row;
      std::getline(lines, first_row);
      while (std::getline(lines, line)) last = line;
      std::string text = header + "\n";
      if (side != Side::greater && n > 1) text += first_row + "\n";
      text += (n > 1 ? last : first_row) + "\n";
      write_text(cfg.csv_out, text);
    }
  }
  Json doc = Json::parse(band_to_json(band, kVersion));
  doc["metadata"] = metadata(ctx);
  emit(ctx, doc, out);
  return 0;
}

QuantileBand read_band_csv(const std::string& path, double alpha) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t line_no = 0;
  QuantileBand band;
  band.alpha = alpha;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (line_no == 1) {
      if (f.size() < 4 || f[0] != "k" || f[2] != "lower_limit") {
        throw Error(errc::kParse, line_error(1, "band CSV must start with k,n_minus_k_plus_1,lower_limit,attained"));
      }
      continue;
    }
    if (f.size() < 4) throw Error(errc::kParse, line_error(line_no, "expected at least 4 columns"));
    double lower = 0.0;
    if (f[2] == "-inf") lower = -INFINITY;
    else if (f[2] == "inf") lower = INFINITY;
    else if (!parse_double(f[2], lower)) throw Error(errc::kParse, line_error(line_no, "bad lower_limit"));
    if (f[3] != "0" && f[3] != "1") throw Error(errc::kParse, line_error(line_no, "attained must be 0 or 1"));
    band.lower.push_back(lower);
    band.lower_attained.push_back(f[3] == "1" ? 1 : 0);
  }
  band.upper.assign(band.lower.size(), INFINITY);
  band.upper_attained.assign(band.lower.size(), 0);
  return band;
}

int cmd_count(Context& ctx, std::ostream& out) {
  const auto& cfg = ctx.config;
  Json doc;
  doc["kind"] = "count";
  if (!cfg.band_in.empty()) {
    const auto band = read_band_csv(cfg.band_in, cfg.alpha);
    const auto bound = ci_count_lower(band, cfg.threshold);
    Json meta = metadata(ctx);
    // statistic and tie options play no part when the limits come from a file
    meta.erase("tie");
    meta.erase("tie_permutation_digest");
    Json kept = Json::array();
    for (const auto& d : cfg.defaults_applied) {
      if (d.rfind("alpha", 0) == 0 || d.rfind("seed", 0) == 0) kept.push_back(d);
    }
    meta["defaults_applied"] = kept;
    meta["band_input"] = cfg.band_in;
    doc["metadata"] = std::move(meta);
    doc["threshold"] = json_number(cfg.threshold);
    doc["units"] = band.units();
    doc["lower_bound"] = bound.bound;
    doc["interval"] = {bound.bound, band.units()};
    doc["level"] = bound.level;
    emit(ctx, doc, out);
    return 0;
  }
  load_data(ctx);
  if (!ctx.stat->rank_form()) throw Error(errc::kHypothesis, "count bounds need a rank-score statistic");
  if (parse_side(cfg.side) != Side::greater) {
    throw Error(errc::kHypothesis, "count bounds are greater-side; negate y to count effects below a threshold");
  }
  QuantileEngine engine(*ctx.mech, *ctx.stat, ctx.data.z, ctx.data.y, *ctx.plan, ctx.opts);
  const auto band = band_all_quantiles(engine, cfg.alpha, ctx.opts.threads);
  const auto bound = ci_count_lower(band, cfg.threshold);
  const auto direct = count_lower_direct(engine, cfg.threshold, cfg.alpha);
  doc["metadata"] = metadata(ctx);
  doc["threshold"] = json_number(cfg.threshold);
  doc["units"] = ctx.data.units();
  doc["lower_bound"] = bound.bound;
  doc["lower_bound_direct"] = direct.bound;
  doc["interval"] = {bound.bound, ctx.data.units()};
  doc["level"] = bound.level;
  emit(ctx, doc, out);
  return 0;
}

int cmd_range(Context& ctx, std::ostream& out) {
  load_data(ctx);
  const auto& cfg = ctx.config;
  const auto r = effect_range(*ctx.mech, *ctx.stat, ctx.data.z, ctx.data.y, cfg.alpha, *ctx.plan, ctx.opts);
  Json doc;
  doc["kind"] = "range";
  doc["metadata"] = metadata(ctx);
  doc["max_effect_lower"] = json_number(r.max_lower);
  doc["min_effect_upper"] = json_number(r.min_upper);
  doc["range_lower"] = json_number(r.limit);
  doc["constant_effect_rejected"] = r.constant_effect_rejected;
  doc["level"] = 1.0 - cfg.alpha;
  emit(ctx, doc, out);
  return 0;
}

int cmd_null_dist(Context& ctx, std::ostream& out) {
  load_data(ctx);
  const auto& cfg = ctx.config;
  const auto& d = ctx.data;
  const auto* rs = ctx.stat->rank_form();
  NullDistribution dist = [&] {
    if (rs && rs->tie.kind() != TieKind::average && ctx.mech->exchangeable()) {
      return rank_reference_distribution(*ctx.mech, rs->scores, *ctx.plan, ctx.opts.threads);
    }
    const auto delta = parse_delta(cfg.delta, d.units());
    return null_distribution(*ctx.mech, *ctx.stat, impute_control(d.z, d.y, delta), *ctx.plan, ctx.opts.threads);
  }();
  std::ostringstream csv;
  csv << "value,probability,count\n";
  Json atoms = Json::array();
  for (const auto& a : dist.atoms()) {
    csv << format_number(a.value) << ',' << format_number(a.probability) << ',' << a.count << '\n';
    atoms.push_back({{"value", json_number(a.value)}, {"probability", a.probability}, {"count", a.count}});
  }
  if (!cfg.csv_out.empty()) write_text(cfg.csv_out, csv.str());
  Json doc;
  doc["kind"] = "null-distribution";
  doc["metadata"] = metadata(ctx);
  doc["exact"] = dist.exact();
  doc["total_count"] = dist.total_count();
  doc["reference"] = rs && rs->tie.kind() != TieKind::average ? "ranks 1..n (assignment-only)" : "imputed control outcomes";
  doc["atoms"] = std::move(atoms);
  emit(ctx, doc, out);
  return 0;
}

int cmd_check_stat(Context& ctx, std::ostream& out) {
  const auto& cfg = ctx.config;
  std::size_t n = cfg.units, m = cfg.treated;
  if (!cfg.input.empty()) {
    ctx.data = parse_dataset(cfg.input);
    n = ctx.data.units();
    m = ctx.data.treated;
  }
  if (n == 0) throw Error(errc::kInvalidArgument, "check-stat needs --data or --n and --m");
  if (m == 0) m = n / 2;
  ctx.mech = build_mechanism(cfg, n, m);
  ctx.tie = build_tie(cfg.tie, n, cfg.seed);
  ctx.stat = build_statistic(cfg, n, *ctx.mech, ctx.tie);
  std::vector<Property> props;
  if (cfg.property == "all" || cfg.property == "effect-increasing") props.push_back(Property::effect_increasing);
  if (cfg.property == "all" || cfg.property == "differential-increasing") {
    props.push_back(Property::differential_increasing);
  }
  if (cfg.property == "all" || cfg.property == "distribution-free") props.push_back(Property::distribution_free);
  if (props.empty()) throw Error(errc::kInvalidArgument, "unknown property '" + cfg.property + "'");
  Json reports = Json::array();
  const auto& flags = ctx.stat->flags();
  for (auto p : props) {
    const auto rep = check_property(*ctx.stat, p, *ctx.mech, cfg.trials, cfg.seed);
    Json j;
    j["property"] = property_name(p);
    j["declared"] = p == Property::effect_increasing         ? flags.effect_increasing
                    : p == Property::differential_increasing ? flags.differential_increasing
                                                             : flags.distribution_free;
    j["trials"] = rep.trials;
    j["counterexample_found"] = !rep.holds();
    if (rep.counterexample) {
      const auto& ce = *rep.counterexample;
      j["counterexample"] = {{"detail", ce.detail},
                             {"z", std::vector<int>(ce.z.begin(), ce.z.end())},
                             {"a", std::vector<int>(ce.a.begin(), ce.a.end())},
                             {"y", ce.y},
                             {"y_other", ce.y_other}};
    }
    reports.push_back(std::move(j));
  }
  Json doc;
  doc["kind"] = "check-stat";
  doc["metadata"] = metadata(ctx);
  doc["metadata"]["trials"] = cfg.trials;
  doc["reports"] = std::move(reports);
  emit(ctx, doc, out);
  return 0;
}

int cmd_simulate(Context& ctx, std::ostream& out) {
  const auto& cfg = ctx.config;
  if (cfg.scenario.empty()) throw Error(errc::kInvalidArgument, "simulate needs --scenario <file.json>");
  auto spec = parse_simulation_spec(read_text(cfg.scenario));
  spec.study.threads = ctx.opts.threads;
  std::string csv, json;
  if (spec.kind == "neyman") {
    const auto& sc = spec.study.scenario;
    const auto choice = sc.statistics.empty() ? StatisticChoice{} : sc.statistics.front();
    const auto report = run_neyman_comparison(sc, choice, spec.study.plan, spec.study.threads);
    csv = neyman_to_csv(report);
    json = neyman_to_json(report, sc, spec.study.plan.describe(), kVersion);
  } else {
    const auto report = run_power_study(spec.study);
    csv = report_to_csv(report);
    json = report_to_json(report, kVersion);
  }
  if (!cfg.csv_out.empty()) write_text(cfg.csv_out, csv);
  Json doc = Json::parse(json);
  doc["scenario_file"] = cfg.scenario;
  emit(ctx, doc, out);
  return 0;
}

}  // namespace

DatasetFile parse_dataset_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  int z_col = -1, y_col = -1, id_col = -1;
  std::size_t columns = 0;
  DatasetFile d;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (z_col < 0) {
      for (std::size_t j = 0; j < f.size(); ++j) {
        if (f[j] == "z") z_col = static_cast<int>(j);
        else if (f[j] == "y") y_col = static_cast<int>(j);
        else if (f[j] == "id") id_col = static_cast<int>(j);
      }
      if (z_col < 0 || y_col < 0) throw Error(errc::kParse, line_error(line_no, "header must name columns z and y"));
      columns = f.size();
      continue;
    }
    if (f.size() != columns) {
      throw Error(errc::kParse, line_error(line_no, "expected " + std::to_string(columns) + " fields, found " +
                                                        std::to_string(f.size())));
    }
    const auto& zs = f[static_cast<std::size_t>(z_col)];
    if (zs != "0" && zs != "1") throw Error(errc::kParse, line_error(line_no, "z must be 0 or 1, found '" + zs + "'"));
    double y = 0.0;
    if (!parse_double(f[static_cast<std::size_t>(y_col)], y)) {
      throw Error(errc::kParse, line_error(line_no, "y is not a number"));
    }
    if (!std::isfinite(y)) throw Error(errc::kParse, line_error(line_no, "y must be finite"));
    d.z.push_back(zs == "1" ? 1 : 0);
    d.y.push_back(y);
    if (id_col >= 0) d.ids.push_back(f[static_cast<std::size_t>(id_col)]);
  }
  if (z_col < 0) throw Error(errc::kParse, "dataset is empty");
  if (d.units() < 2) throw Error(errc::kInvalidArgument, "dataset needs at least two units");
  d.treated = treated_count(d.z);
  if (d.treated == 0 || d.treated == d.units()) {
    throw Error(errc::kDegenerateArm, d.treated == 0 ? "every unit is in the control arm; need both arms"
                                                     : "every unit is treated; need both arms");
  }
  return d;
}

DatasetFile parse_dataset(const std::filesystem::path& path) { return parse_dataset_text(read_text(path.string())); }

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
      throw Error(errc::kInvalidArgument, "alpha must lie in (0, 1)");
    }
    Context ctx(config);
    const auto& s = config.subcommand;
    if (s == "test") return cmd_test(ctx, out);
    if (s == "ci") return cmd_ci(ctx, out);
    if (s == "count") return cmd_count(ctx, out);
    if (s == "range") return cmd_range(ctx, out);
    if (s == "null-dist") return cmd_null_dist(ctx, out);
    if (s == "check-stat") return cmd_check_stat(ctx, out);
    if (s == "simulate") return cmd_simulate(ctx, out);
    throw Error(errc::kInvalidArgument, "unknown subcommand '" + s + "'");
  } catch (const Error& e) {
    err << Json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << Json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Randomization inference for bounded nulls and quantiles of individual treatment effects", "randinf"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  RunConfig cfg;
  std::size_t k_value = 0;

  struct Shared {
    CLI::Option* stat = nullptr;
    CLI::Option* s = nullptr;
    CLI::Option* alpha = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* threads = nullptr;
    CLI::Option* tie = nullptr;
    CLI::Option* k = nullptr;
  };
  std::map<std::string, Shared> shared;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    Shared sh;
    auto* data = sub->add_option("-d,--data", cfg.input, "CSV with columns z, y and optionally id");
    if (needs_data) data->required();
    sh.stat = sub->add_option("--stat", cfg.statistic, "dim | ht | wilcoxon | stephenson | custom")
                  ->check(CLI::IsMember({"dim", "ht", "wilcoxon", "stephenson", "custom", "fixture:first-treated",
                                         "fixture:twice-total", "fixture:negative-rank"}));
    sh.s = sub->add_option("--s", cfg.subset_size, "Stephenson subset size")->check(CLI::Range(2, 1 << 20));
    sub->add_option("--scores", cfg.scores_path, "one-column CSV of custom rank scores");
    sh.alpha = sub->add_option("--alpha", cfg.alpha, "significance level");
    sub->add_option("--side", cfg.side, "greater | less | two-sided")
        ->check(CLI::IsMember({"greater", "less", "two-sided"}));
    sub->add_option("--plan", cfg.plan, "exact | mc")->check(CLI::IsMember({"exact", "mc"}));
    sub->add_option("--cap", cfg.cap, "largest assignment space to enumerate");
    sub->add_option("--draws", cfg.draws, "Monte Carlo draws")->check(CLI::Range(100ULL, 1ULL << 40));
    sh.tie = sub->add_option("--ties", cfg.tie, "first | last | random | average")
                 ->check(CLI::IsMember({"first", "last", "random", "average"}));
    sh.seed = sub->add_option("--seed", cfg.seed, "master seed (env RANDINF_SEED)");
    sh.threads = sub->add_option("--threads", cfg.threads, "worker threads (env RANDINF_THREADS)");
    sub->add_option("--design", cfg.design, "cre | bre")->check(CLI::IsMember({"cre", "bre"}));
    sub->add_option("--probability", cfg.probability, "BRE treatment probability");
    sub->add_option("--csv", cfg.csv_out, "CSV output path");
    sub->add_option("--json", cfg.json_out, "JSON output path (default: stdout)");
    shared[sub->get_name()] = sh;
    return sub;
  };

  auto* test = add_common(app.add_subcommand("test", "p-value for a bounded or quantile null"), true);
  test->add_option("--delta", cfg.delta, "effect bound: a number or a one-column CSV");
  shared["test"].k = test->add_option("--k", k_value, "rank of the effect quantile (tests tau_(k) <= c)");
  test->add_option("--c", cfg.c, "threshold for --k");
  test->add_flag("--alt", cfg.alternative, "use the alternative p-value that imputes both arms");
  add_common(app.add_subcommand("ci", "confidence band for every effect quantile"), true);
  auto* count = add_common(app.add_subcommand("count", "lower bound for the number of effects above a threshold"),
                           false);
  count->add_option("--threshold", cfg.threshold, "threshold c");
  count->add_option("--band", cfg.band_in, "band CSV written by ci (instead of --data)");
  add_common(app.add_subcommand("range", "lower limit for the effect range"), true);
  auto* nd = add_common(app.add_subcommand("null-dist", "reference distribution atoms"), true);
  nd->add_option("--delta", cfg.delta, "effect vector for non-rank statistics");
  auto* cs = add_common(app.add_subcommand("check-stat", "randomized property falsification"), false);
  cs->add_option("--property", cfg.property, "all | effect-increasing | differential-increasing | distribution-free");
  cs->add_option("--trials", cfg.trials, "trials per property");
  cs->add_option("--n", cfg.units, "units when no data file is given");
  cs->add_option("--m", cfg.treated, "treated units when no data file is given");
  auto* sim = add_common(app.add_subcommand("simulate", "simulation study from a JSON scenario"), false);
  sim->add_option("--scenario", cfg.scenario, "scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << Json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
  auto* chosen = app.get_subcommands().front();
  cfg.subcommand = chosen->get_name();
  const auto& sh = shared[cfg.subcommand];
  if (sh.k && sh.k->count() > 0) cfg.k = k_value;
  if (sh.seed->count() == 0) {
    if (const char* env = std::getenv("RANDINF_SEED")) {
      try {
        cfg.seed = std::stoull(env);
      } catch (const std::exception&) {
        err << Json{{"error", errc::kInvalidArgument}, {"message", "RANDINF_SEED is not an integer"}}.dump() << "\n";
        return 2;
      }
    } else {
      cfg.defaults_applied.push_back("seed=1");
    }
  }
  if (sh.threads->count() == 0) {
    if (const char* env = std::getenv("RANDINF_THREADS")) {
      try {
        cfg.threads = static_cast<unsigned>(std::stoul(env));
      } catch (const std::exception&) {
        err << Json{{"error", errc::kInvalidArgument}, {"message", "RANDINF_THREADS is not an integer"}}.dump()
            << "\n";
        return 2;
      }
    }
  }
  if (sh.stat->count() == 0) cfg.defaults_applied.push_back("stat=stephenson");
  if (cfg.statistic == "stephenson" && sh.s->count() == 0) cfg.defaults_applied.push_back("s=10");
  if (sh.alpha->count() == 0) cfg.defaults_applied.push_back("alpha=0.1");
  if (sh.tie->count() == 0) cfg.defaults_applied.push_back("ties=random");
  return run(cfg, out, err);
}

}  // namespace randinf

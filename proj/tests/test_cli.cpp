#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "randinf/cli.hpp"
#include "randinf/error.hpp"

using namespace randinf;
using nlohmann::json;

namespace {

struct Outcome {
  int status = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "randinf");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.status = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string temp_path(const std::string& name) { return ::testing::TempDir() + "/" + name; }

std::string write_file(const std::string& name, const std::string& text) {
  const auto path = temp_path(name);
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Twenty units, every treated outcome above every control outcome. With s = 10
// the maximum is unique only when at least 9 units are controls.
std::string separated_data() {
  std::string text = "id,z,y\n";
  for (int i = 0; i < 20; ++i) {
    const bool treated = i % 2 == 0;
    text += "u" + std::to_string(i) + "," + (treated ? "1" : "0") + "," + std::to_string(treated ? 20 + i : i) + "\n";
  }
  return write_file("separated.csv", text);
}

std::string mixed_data() {
  return write_file("mixed.csv",
                    "z,y\n1,4.5\n1,3.1\n1,7.2\n1,0.4\n1,5.5\n0,1.0\n0,-0.3\n0,2.2\n0,0.9\n0,1.7\n");
}

}  // namespace

TEST(ParseDataset, MinimalExample) {
  auto d = parse_dataset_text("z,y\n1,3.5\n0,1.0");
  EXPECT_EQ(d.units(), 2U);
  EXPECT_EQ(d.treated, 1U);
  EXPECT_EQ(d.y, (std::vector<double>{3.5, 1.0}));
}

TEST(ParseDataset, ColumnsInAnyOrderWithIds) {
  auto d = parse_dataset_text("y,id,z\n2.5,a,0\n\n-1,b,1\n");
  EXPECT_EQ(d.z, (Assignment{0, 1}));
  EXPECT_EQ(d.ids, (std::vector<std::string>{"a", "b"}));
}

TEST(ParseDataset, Errors) {
  auto code_and_message = [](const std::string& text) -> std::pair<std::string, std::string> {
    try {
      parse_dataset_text(text);
    } catch (const Error& e) {
      return {e.code(), e.what()};
    }
    return {"", ""};
  };
  auto bad_z = code_and_message("z,y\n1,3\n2,1\n");
  EXPECT_EQ(bad_z.first, errc::kParse);
  EXPECT_NE(bad_z.second.find("line 3"), std::string::npos) << bad_z.second;
  EXPECT_EQ(code_and_message("z,y\n1,3\n1,1\n").first, errc::kDegenerateArm);
  EXPECT_EQ(code_and_message("a,b\n1,3\n").first, errc::kParse);
  EXPECT_EQ(code_and_message("z,y\n1,nan\n0,1\n").first, errc::kParse);
  EXPECT_EQ(code_and_message("z,y\n1,abc\n0,1\n").first, errc::kParse);
  EXPECT_EQ(code_and_message("z,y\n1,2,3\n0,1\n").first, errc::kParse);
  EXPECT_EQ(code_and_message("z,y\n1,2\n").first, errc::kInvalidArgument);
}

TEST(Cli, TestOnSeparatedDataGivesOneOverK) {
  auto o = run_cli({"test", "--data", separated_data(), "--stat", "stephenson", "--s", "10", "--delta", "0"});
  ASSERT_EQ(o.status, 0) << o.err;
  auto doc = json::parse(o.out);
  EXPECT_EQ(doc["result"]["p"].get<double>(), 1.0 / 184756.0);
  EXPECT_TRUE(doc["reject"].get<bool>());
}

TEST(Cli, DefaultsAreRecorded) {
  auto o = run_cli({"test", "--data", mixed_data()});
  ASSERT_EQ(o.status, 0) << o.err;
  auto meta = json::parse(o.out)["metadata"];
  EXPECT_EQ(meta["statistic"], "stephenson(s=10)[ties=random]");
  auto defaults = meta["defaults_applied"].get<std::vector<std::string>>();
  for (const char* d : {"stat=stephenson", "s=10", "alpha=0.1", "seed=1", "ties=random"}) {
    EXPECT_NE(std::find(defaults.begin(), defaults.end(), d), defaults.end()) << d;
  }
  EXPECT_EQ(meta["tie_permutation_digest"].get<std::string>().size(), 16U);
  EXPECT_EQ(meta["version"], kVersion);
}

TEST(Cli, QuantileTestAndXi) {
  auto o = run_cli({"test", "--data", mixed_data(), "--stat", "wilcoxon", "--ties", "first", "--k", "8", "--c", "0"});
  ASSERT_EQ(o.status, 0) << o.err;
  auto r = json::parse(o.out)["result"];
  EXPECT_EQ(r["xi"].size(), 10U);
  EXPECT_EQ(r["shifted_units"].size(), 2U);
  EXPECT_GT(r["p"].get<double>(), 0.0);
}

TEST(Cli, CountMatchesBandEntriesAboveThreshold) {
  const auto data = mixed_data();
  const auto band_csv = temp_path("band.csv");
  auto ci = run_cli({"ci", "--data", data, "--alpha", "0.2", "--stat", "stephenson", "--s", "3", "--ties", "first",
                     "--csv", band_csv});
  ASSERT_EQ(ci.status, 0) << ci.err;
  auto band = json::parse(ci.out);
  for (double threshold : {0.0, 1.0, 2.5}) {
    std::size_t above = 0;
    for (const auto& row : band["rows"]) {
      const auto& v = row["lower_limit"];
      if (v.is_number()) {
        const double x = v.get<double>();
        if (x > threshold || (x == threshold && row["attained"].get<bool>())) ++above;
      }
    }
    const auto t = std::to_string(threshold);
    auto direct = run_cli({"count", "--data", data, "--alpha", "0.2", "--stat", "stephenson", "--s", "3", "--ties",
                           "first", "--threshold", t});
    ASSERT_EQ(direct.status, 0) << direct.err;
    auto from_band = run_cli({"count", "--band", band_csv, "--alpha", "0.2", "--threshold", t});
    ASSERT_EQ(from_band.status, 0) << from_band.err;
    EXPECT_EQ(json::parse(direct.out)["lower_bound"].get<std::size_t>(), above);
    EXPECT_EQ(json::parse(direct.out)["lower_bound_direct"].get<std::size_t>(), above);
    EXPECT_EQ(json::parse(from_band.out)["lower_bound"].get<std::size_t>(), above);
  }
  EXPECT_GT(json::parse(run_cli({"count", "--band", band_csv, "--threshold", "0"}).out)["lower_bound"].get<int>(), 0);
}

TEST(Cli, OutputsAreByteIdentical) {
  const auto data = mixed_data();
  std::vector<std::string> args{"ci", "--data", data, "--side", "two-sided", "--plan", "mc", "--draws", "2000"};
  auto a = run_cli(args);
  auto b = run_cli(args);
  args.insert(args.end(), {"--threads", "3"});
  auto c = run_cli(args);
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
  args.insert(args.end(), {"--seed", "2"});
  EXPECT_NE(run_cli(args).out, a.out);
}

TEST(Cli, CiWithDifferenceInMeansReportsLargestEffectOnly) {
  const auto csv = temp_path("dim.csv");
  auto o = run_cli({"ci", "--data", mixed_data(), "--stat", "dim", "--csv", csv});
  ASSERT_EQ(o.status, 0) << o.err;
  const auto text = slurp(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.rfind("10,1,", text.find('\n') + 1), text.find('\n') + 1) << text;
}

TEST(Cli, RangeNullDistCheckStat) {
  const auto data = mixed_data();
  auto range = run_cli({"range", "--data", data, "--stat", "wilcoxon"});
  ASSERT_EQ(range.status, 0) << range.err;
  EXPECT_TRUE(json::parse(range.out).contains("range_lower"));

  const auto csv = temp_path("null.csv");
  auto nd = run_cli({"null-dist", "--data", data, "--stat", "wilcoxon", "--csv", csv});
  ASSERT_EQ(nd.status, 0) << nd.err;
  auto doc = json::parse(nd.out);
  double total = 0;
  for (const auto& a : doc["atoms"]) total += a["probability"].get<double>();
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(doc["total_count"].get<int>(), 252);
  EXPECT_EQ(slurp(csv).rfind("value,probability,count\n", 0), 0U);

  auto cs = run_cli({"check-stat", "--n", "6", "--m", "3", "--stat", "fixture:twice-total", "--trials", "300"});
  ASSERT_EQ(cs.status, 0) << cs.err;
  for (const auto& r : json::parse(cs.out)["reports"]) {
    EXPECT_EQ(r["declared"].get<bool>(), !r["counterexample_found"].get<bool>()) << r.dump();
  }
}

TEST(Cli, Simulate) {
  const auto scenario = write_file("scenario.json", R"({"kind": "power", "n": 20, "replications": 30,
    "statistics": ["wilcoxon", "stephenson:3"], "grid": [{"tau0": 0, "sigma": 0}, {"tau0": 1, "sigma": 0.5}],
    "plan": {"type": "mc", "draws": 200, "seed": 5}})");
  const auto csv = temp_path("sim.csv");
  auto o = run_cli({"simulate", "--scenario", scenario, "--csv", csv});
  ASSERT_EQ(o.status, 0) << o.err;
  auto again = run_cli({"simulate", "--scenario", scenario, "--threads", "4"});
  EXPECT_EQ(o.out, again.out);
  const auto text = slurp(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Cli, ErrorsAreJsonOnStderr) {
  auto missing = run_cli({"test", "--data", temp_path("does-not-exist.csv")});
  EXPECT_NE(missing.status, 0);
  EXPECT_EQ(json::parse(missing.err)["error"], errc::kIo);
  auto usage = run_cli({"test"});
  EXPECT_NE(usage.status, 0);
  EXPECT_EQ(json::parse(usage.err)["error"], "usage");
  auto bad_alpha = run_cli({"test", "--data", mixed_data(), "--alpha", "1.5"});
  EXPECT_EQ(json::parse(bad_alpha.err)["error"], errc::kInvalidArgument);
  auto quantile_dim = run_cli({"test", "--data", mixed_data(), "--stat", "dim", "--k", "9"});
  EXPECT_EQ(json::parse(quantile_dim.err)["error"], errc::kHypothesis);
  auto big = write_file("big.csv", [] {
    std::string t = "z,y\n";
    for (int i = 0; i < 40; ++i) t += std::string(i % 2 ? "1," : "0,") + std::to_string(i) + "\n";
    return t;
  }());
  auto cap = run_cli({"test", "--data", big});
  EXPECT_EQ(json::parse(cap.err)["error"], errc::kCapacity);
}

TEST(Binary, RunsAndHonoursSeedEnvironment) {
  const std::string cmd = std::string("RANDINF_SEED=7 ") + RANDINF_CLI_PATH + " test --data " + mixed_data() + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t got = fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  EXPECT_EQ(pclose(pipe), 0) << out;
  auto doc = json::parse(out);
  EXPECT_EQ(doc["metadata"]["seed"].get<int>(), 7);
  auto defaults = doc["metadata"]["defaults_applied"].get<std::vector<std::string>>();
  EXPECT_EQ(std::find(defaults.begin(), defaults.end(), "seed=1"), defaults.end());
}

TEST(Binary, Version) {
  FILE* pipe = popen((std::string(RANDINF_CLI_PATH) + " --version").c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  char buf[64] = {};
  ASSERT_NE(fgets(buf, sizeof buf, pipe), nullptr);
  pclose(pipe);
  EXPECT_EQ(std::string(buf), std::string(kVersion) + "\n");
}

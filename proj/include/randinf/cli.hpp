#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "randinf/assignment.hpp"

namespace randinf {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetFile {
  Assignment z;
  std::vector<double> y;
  std::vector<std::string> ids;  // empty when the file has no id column
  std::size_t treated = 0;

  std::size_t units() const noexcept { return y.size(); }
};

/// CSV with a header naming columns `z` and `y` (any order) and optionally
/// `id`. Errors carry the 1-based line number.
DatasetFile parse_dataset_text(const std::string& text);
DatasetFile parse_dataset(const std::filesystem::path& path);

struct RunConfig {
  std::string subcommand;
  std::string statistic = "stephenson";  // dim | wilcoxon | stephenson | custom | fixture:<name>
  std::size_t subset_size = 10;
  std::string scores_path;
  double alpha = 0.1;
  std::string side = "greater";  // greater | less | two-sided
  std::string plan = "exact";    // exact | mc
  std::uint64_t cap = kDefaultEnumerationCap;
  std::uint64_t draws = 10'000;
  std::string tie = "random";  // first | last | random | average
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string design = "cre";  // cre | bre
  double probability = 0.5;
  std::string input;
  std::string csv_out;
  std::string json_out;
  std::string band_in;        // count: read limits from a band CSV instead of the data
  std::string delta = "0";    // test: scalar or path to a one-column CSV
  std::optional<std::size_t> k;
  double c = 0.0;
  bool alternative = false;   // test: use the alternative p-value
  double threshold = 0.0;     // count
  std::string property = "all";
  std::size_t trials = 1000;
  std::size_t units = 0;      // check-stat without data
  std::size_t treated = 0;
  std::string scenario;       // simulate
  std::vector<std::string> defaults_applied;
};

/// Executes one subcommand. Results go to the configured files or `out`;
/// failures are reported as one JSON object on `err` and a nonzero status.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses arguments (and the RANDINF_SEED / RANDINF_THREADS environment
/// overrides) into a RunConfig and runs it.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace randinf

#include "randinf/ranks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "randinf/assignment.hpp"
#include "randinf/error.hpp"

namespace randinf {

TieMethod::TieMethod(TieKind kind, std::vector<std::size_t> permutation)
    : kind_(kind), permutation_(std::move(permutation)) {
  if (kind_ == TieKind::random) {
    inverse_.assign(permutation_.size(), permutation_.size());
    for (std::size_t j = 0; j < permutation_.size(); ++j) {
      const auto unit = permutation_[j];
      if (unit >= permutation_.size() || inverse_[unit] != permutation_.size()) {
        throw Error(errc::kInvalidArgument, "random tie method needs a permutation of 0..n-1");
      }
      inverse_[unit] = j;
    }
  }
}

TieMethod TieMethod::random(std::vector<std::size_t> permutation) {
  return TieMethod(TieKind::random, std::move(permutation));
}

TieMethod TieMethod::random_from_seed(std::size_t units, std::uint64_t seed) {
  std::vector<std::size_t> perm(units);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterStream rng(derive_seed(seed, 0x7469657300ULL), 0);
  for (std::size_t i = units; i > 1; --i) {
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.below(i))]);
  }
  return random(std::move(perm));
}

std::size_t TieMethod::key(std::size_t unit, std::size_t units) const {
  switch (kind_) {
    case TieKind::last:
      return units - 1 - unit;
    case TieKind::random:
      if (inverse_.size() != units) {
        throw Error(errc::kInvalidArgument, "random tie permutation length does not match the data");
      }
      return inverse_[unit];
    default:
      return unit;
  }
}

std::string TieMethod::name() const {
  switch (kind_) {
    case TieKind::first: return "first";
    case TieKind::last: return "last";
    case TieKind::random: return "random";
    case TieKind::average: return "average";
  }
  return "unknown";
}

std::string TieMethod::digest() const {
  if (kind_ != TieKind::random) return "-";
  std::uint64_t h = 1469598103934665603ULL;
  for (auto v : permutation_) {
    for (int i = 0; i < 8; ++i) {
      h ^= (static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF;
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::vector<std::size_t> rank_order(std::span<const double> y, const TieMethod& tie) {
  const std::size_t n = y.size();
  for (double v : y) {
    if (std::isnan(v)) throw Error(errc::kInvalidArgument, "outcome vector contains NaN");
  }
  std::vector<std::size_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = tie.key(i, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (y[a] != y[b]) return y[a] < y[b];
    return keys[a] < keys[b];
  });
  return order;
}

std::vector<double> rank_vector(std::span<const double> y, const TieMethod& tie) {
  const std::size_t n = y.size();
  auto order = rank_order(y, tie);
  std::vector<double> ranks(n);
  if (tie.kind() != TieKind::average) {
    for (std::size_t r = 0; r < n; ++r) ranks[order[r]] = static_cast<double>(r + 1);
    return ranks;
  }
  for (std::size_t begin = 0; begin < n;) {
    std::size_t end = begin + 1;
    while (end < n && y[order[end]] == y[order[begin]]) ++end;
    const double mean_rank = (static_cast<double>(begin + 1) + static_cast<double>(end)) / 2.0;
    for (std::size_t j = begin; j < end; ++j) ranks[order[j]] = mean_rank;
    begin = end;
  }
  return ranks;
}

std::string ScoreVector::name() const {
  switch (kind) {
    case ScoreKind::wilcoxon: return "wilcoxon";
    case ScoreKind::stephenson: return "stephenson(s=" + std::to_string(subset_size) + ")";
    case ScoreKind::custom: return "custom";
  }
  return "unknown";
}

ScoreVector wilcoxon_scores(std::size_t units) {
  ScoreVector s;
  s.kind = ScoreKind::wilcoxon;
  s.phi.resize(units);
  for (std::size_t r = 1; r <= units; ++r) s.phi[r - 1] = static_cast<double>(r);
  return s;
}

ScoreVector stephenson_scores(std::size_t units, std::size_t subset_size) {
  if (subset_size < 2 || subset_size > units) {
    throw Error(errc::kInvalidArgument, "Stephenson scores need 2 <= s <= n");
  }
  ScoreVector s;
  s.kind = ScoreKind::stephenson;
  s.subset_size = subset_size;
  s.phi.assign(units, 0.0);
  for (std::size_t r = subset_size; r <= units; ++r) {
    // C(r-1, s-1) = prod_{j=1}^{s-1} (r-s+j)/j; every partial product is itself
    // a binomial coefficient, so it stays exact while below 2^53.
    double value = 1.0;
    for (std::size_t j = 1; j < subset_size; ++j) {
      value = value * static_cast<double>(r - subset_size + j) / static_cast<double>(j);
    }
    if (!std::isfinite(value)) {
      throw Error(errc::kInvalidArgument, "Stephenson score overflows double precision");
    }
    s.phi[r - 1] = value;
  }
  return s;
}

ScoreVector custom_scores(std::vector<double> phi) {
  for (std::size_t r = 0; r < phi.size(); ++r) {
    if (!std::isfinite(phi[r])) throw Error(errc::kInvalidArgument, "custom scores must be finite");
    if (r > 0 && phi[r] < phi[r - 1]) {
      throw Error(errc::kInvalidArgument, "custom scores must be nondecreasing in rank");
    }
  }
  ScoreVector s;
  s.kind = ScoreKind::custom;
  s.phi = std::move(phi);
  return s;
}

ScoreVector load_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::kIo, "cannot open score file " + path.string());
  std::vector<double> phi;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      double v = std::stod(line, &used);
      if (line.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("tail");
      phi.push_back(v);
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header
      throw Error(errc::kParse, "score file line " + std::to_string(line_no) + ": not a number");
    }
  }
  return custom_scores(std::move(phi));
}

std::vector<double> average_tie_scores(const ScoreVector& scores, std::span<const double> y) {
  const std::size_t n = y.size();
  if (scores.units() != n) throw Error(errc::kInvalidArgument, "score vector length does not match data");
  auto order = rank_order(y, TieMethod::first());
  std::vector<double> out(n);
  for (std::size_t begin = 0; begin < n;) {
    std::size_t end = begin + 1;
    while (end < n && y[order[end]] == y[order[begin]]) ++end;
    double total = 0.0;
    for (std::size_t j = begin; j < end; ++j) total += scores.phi[j];
    const double mean = total / static_cast<double>(end - begin);
    for (std::size_t j = begin; j < end; ++j) out[order[j]] = mean;
    begin = end;
  }
  return out;
}

}  // namespace randinf

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace randinf {

enum class TieKind { first, last, random, average };

/// How equal outcomes are ranked. `random` carries an explicit permutation
/// drawn once per analysis; ranking with it equals permuting y by that
/// permutation and then ranking with `first`.
class TieMethod {
 public:
  static TieMethod first() { return TieMethod(TieKind::first, {}); }
  static TieMethod last() { return TieMethod(TieKind::last, {}); }
  static TieMethod average() { return TieMethod(TieKind::average, {}); }
  /// `permutation[j]` is the unit placed at position j of the permuted vector.
  static TieMethod random(std::vector<std::size_t> permutation);
  static TieMethod random_from_seed(std::size_t units, std::uint64_t seed);

  TieKind kind() const noexcept { return kind_; }
  const std::vector<std::size_t>& permutation() const noexcept { return permutation_; }

  /// Tie-break key of unit i among equal outcomes: smaller key, smaller rank.
  /// Not meaningful for `average`, where it falls back to the index.
  std::size_t key(std::size_t unit, std::size_t units) const;

  std::string name() const;
  /// Hex FNV-1a digest of the permutation ("-" for deterministic methods).
  std::string digest() const;

 private:
  TieMethod(TieKind kind, std::vector<std::size_t> permutation);

  TieKind kind_;
  std::vector<std::size_t> permutation_;
  std::vector<std::size_t> inverse_;
};

/// Units sorted by increasing rank. Equal values (including two -inf
/// entries) are ordered by the tie key; `average` orders them like `first`.
/// Throws on NaN.
std::vector<std::size_t> rank_order(std::span<const double> y, const TieMethod& tie);

/// Ranks 1..n (larger outcome, larger rank). Average ties may be fractional.
std::vector<double> rank_vector(std::span<const double> y, const TieMethod& tie);

enum class ScoreKind { wilcoxon, stephenson, custom };

/// Rank scores phi(1..n); phi[r-1] is the score of rank r.
struct ScoreVector {
  std::vector<double> phi;
  ScoreKind kind = ScoreKind::wilcoxon;
  std::size_t subset_size = 0;  // Stephenson s

  std::size_t units() const noexcept { return phi.size(); }
  double operator()(std::size_t rank) const { return phi[rank - 1]; }
  std::string name() const;
};

ScoreVector wilcoxon_scores(std::size_t units);
/// phi(r) = C(r-1, s-1) for r >= s and 0 otherwise, as a floating product.
ScoreVector stephenson_scores(std::size_t units, std::size_t subset_size);
/// Must be finite and nondecreasing.
ScoreVector custom_scores(std::vector<double> phi);
/// Single-column CSV, row r holds phi(r); an optional non-numeric header line is skipped.
ScoreVector load_scores_csv(const std::filesystem::path& path);

/// Per-unit scores where each tie group receives the mean of phi over the
/// rank positions the group occupies under `first` ordering.
std::vector<double> average_tie_scores(const ScoreVector& scores, std::span<const double> y);

}  // namespace randinf

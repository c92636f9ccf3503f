#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "randinf/error.hpp"
#include "randinf/intervals.hpp"
#include "randinf/oracle.hpp"
#include "support.hpp"

using namespace randinf;
using randinf::testing::lattice;

namespace {

Statistic wilcoxon(std::size_t n) { return Statistic::rank_score(wilcoxon_scores(n), TieMethod::first()); }
Statistic stephenson(std::size_t n, std::size_t s) {
  return Statistic::rank_score(stephenson_scores(n, s), TieMethod::first());
}

struct Instance {
  Mechanism mech;
  Assignment z;
  std::vector<double> y;
};

Instance random_instance(std::size_t n, std::size_t m, std::uint64_t seed, int lo = -5, int hi = 5) {
  CounterStream rng(seed, 0);
  auto mech = Mechanism::complete(n, m);
  return {mech, sample(mech, seed, 1), lattice(rng, n, lo, hi)};
}

}  // namespace

TEST(QuantileLower, UninformativeK) {
  auto in = random_instance(6, 2, 1);
  QuantileEngine e(in.mech, wilcoxon(6), in.z, in.y, RandomizationPlan::exact());
  for (std::size_t k = 1; k <= 4; ++k) EXPECT_EQ(ci_quantile_lower(e, k, 0.1).value, -INFINITY);
}

TEST(QuantileLower, NothingRejectedGivesMinusInfinity) {
  auto in = random_instance(6, 3, 2);
  QuantileEngine e(in.mech, wilcoxon(6), in.z, in.y, RandomizationPlan::exact());
  // every p-value is at least 1/20
  for (std::size_t k = 1; k <= 6; ++k) EXPECT_EQ(ci_quantile_lower(e, k, 0.04).value, -INFINITY);
}

TEST(QuantileLower, MatchesDenseGridInversion) {
  int finite = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto in = random_instance(6, 3, seed * 13);
    for (auto stat : {wilcoxon(6), stephenson(6, 3)}) {
      QuantileEngine e(in.mech, stat, in.z, in.y, RandomizationPlan::exact());
      for (std::size_t k = 4; k <= 6; ++k) {
        const auto limit = ci_quantile_lower(e, k, 0.2);
        const double grid = oracle::grid_lower_limit([&](double c) { return e.pvalue(k, c); }, -12.0, 12.0, 1e-4, 0.2);
        if (std::isinf(limit.value)) {
          EXPECT_EQ(grid, limit.value);
          continue;
        }
        // the grid finds the first point with p > alpha: the limit itself when
        // it is not attained, otherwise the first point past it
        ++finite;
        if (limit.attained) {
          EXPECT_GT(grid, limit.value - 1e-9);
          EXPECT_LE(grid, limit.value + 1e-4 + 1e-9);
        } else {
          EXPECT_NEAR(grid, limit.value, 1e-9);
        }
      }
    }
  }
  EXPECT_GT(finite, 0);
}

TEST(QuantileLower, PValueIsAStepFunctionOnCandidates) {
  auto in = random_instance(7, 4, 5);
  auto stat = stephenson(7, 3);
  QuantileEngine e(in.mech, stat, in.z, in.y, RandomizationPlan::exact());
  for (std::size_t k = 4; k <= 7; ++k) {
    const auto cand = e.candidates(k);
    for (std::size_t i = 0; i + 1 < cand.size(); ++i) {
      const double gap = cand[i + 1] - cand[i];
      const double left = e.pvalue(k, cand[i] + gap / 4);
      EXPECT_EQ(left, e.pvalue(k, cand[i] + gap / 2));
      EXPECT_EQ(left, e.pvalue(k, cand[i + 1] - gap / 4));
    }
  }
}

TEST(QuantileLower, HalfGapChecks) {
  int attained = 0, open = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto in = random_instance(8, 4, seed);
    QuantileEngine e(in.mech, stephenson(8, 3), in.z, in.y, RandomizationPlan::exact());
    for (std::size_t k = 5; k <= 8; ++k) {
      const auto limit = ci_quantile_lower(e, k, 0.1);
      if (!std::isfinite(limit.value)) continue;
      const auto cand = e.candidates(k);
      auto it = std::lower_bound(cand.begin(), cand.end(), limit.value);
      ASSERT_TRUE(it != cand.end() && *it == limit.value);
      ++(limit.attained ? attained : open);
      if (limit.attained) {
        EXPECT_LE(e.pvalue(k, limit.value), 0.1);
        const double next = it + 1 != cand.end() ? *(it + 1) : limit.value + 2.0;
        EXPECT_GT(e.pvalue(k, (limit.value + next) / 2), 0.1);
      } else {
        EXPECT_GT(e.pvalue(k, limit.value), 0.1);
        const double prev = it != cand.begin() ? *(it - 1) : limit.value - 2.0;
        EXPECT_LE(e.pvalue(k, (limit.value + prev) / 2), 0.1);
      }
    }
  }
  EXPECT_GT(attained + open, 0);
  std::printf("half-gap checks: %d attained, %d closed limits\n", attained, open);
}

TEST(QuantileLower, EngineMatchesOracleWithTenfoldShift) {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    auto in = random_instance(7, 3 + seed % 3, seed);
    auto stat = stephenson(7, 2 + seed % 3);
    QuantileEngine e(in.mech, stat, in.z, in.y, RandomizationPlan::exact());
    for (std::size_t k = 1; k <= 7; ++k) {
      for (double c : {-2.0, 0.0, 0.5, 3.0}) {
        EXPECT_EQ(e.pvalue(k, c), oracle::brute_pvalue_quantile(in.mech, stat, in.z, in.y, k, c))
            << "seed " << seed << " k " << k << " c " << c;
      }
    }
  }
}

TEST(Band, MonotoneInKAndAlpha) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto in = random_instance(9, 5, seed, -8, 8);
    QuantileEngine e(in.mech, stephenson(9, 3), in.z, in.y, RandomizationPlan::exact());
    auto b05 = band_all_quantiles(e, 0.05);
    auto b20 = band_all_quantiles(e, 0.2);
    for (std::size_t k = 1; k < 9; ++k) {
      EXPECT_LE(b05.lower[k - 1], b05.lower[k]);
      EXPECT_LE(b20.lower[k - 1], b20.lower[k]);
    }
    for (std::size_t k = 0; k < 9; ++k) EXPECT_LE(b05.lower[k], b20.lower[k]);
  }
}

TEST(Band, ThreadsDoNotChangeResult) {
  auto in = random_instance(10, 5, 3);
  QuantileEngine e(in.mech, stephenson(10, 4), in.z, in.y, RandomizationPlan::exact());
  auto a = band_all_quantiles(e, 0.1, 1);
  auto b = band_all_quantiles(e, 0.1, 4);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.lower_attained, b.lower_attained);
}

TEST(Count, DirectEqualsBand) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    auto in = random_instance(8, 4, seed, -6, 6);
    QuantileEngine e(in.mech, stephenson(8, 2 + seed % 3), in.z, in.y, RandomizationPlan::exact());
    auto band = band_all_quantiles(e, 0.1);
    for (double c = -8.0; c <= 8.0; c += 0.5) {
      EXPECT_EQ(ci_count_lower(band, c).bound, count_lower_direct(e, c, 0.1).bound) << "seed " << seed << " c " << c;
    }
  }
}

TEST(Count, AllMinusInfinityGivesZero) {
  QuantileBand band;
  band.lower.assign(5, -INFINITY);
  band.lower_attained.assign(5, 0);
  EXPECT_EQ(ci_count_lower(band, 0.0).bound, 0U);
}

TEST(Count, AttainedLimitAtThresholdCounts) {
  QuantileBand band;
  band.lower = {-INFINITY, 0.0, 0.0, 1.0};
  band.lower_attained = {0, 0, 1, 0};
  EXPECT_EQ(ci_count_lower(band, 0.0).bound, 2U);
}

TEST(Range, Combine) {
  auto a = combine_range(2, 5, 0.1);
  EXPECT_EQ(a.limit, 0.0);
  EXPECT_FALSE(a.constant_effect_rejected);
  auto b = combine_range(5, 2, 0.1);
  EXPECT_EQ(b.limit, 3.0);
  EXPECT_TRUE(b.constant_effect_rejected);
}

// Under a constant effect the range is zero; over every assignment the
// procedure must reject at most alpha of the time.
TEST(Range, SharpNullAuditNEight) {
  auto mech = Mechanism::complete(8, 4);
  auto stat = stephenson(8, 3);
  CounterStream rng(17, 0);
  auto y0 = lattice(rng, 8, -4, 4);
  for (double alpha : {0.1, 0.2}) {
    long double rejected = 0;
    const auto all = enumerate_all(mech);
    for (const auto& [a, p] : all) {
      std::vector<double> y(8);
      for (std::size_t i = 0; i < 8; ++i) y[i] = y0[i] + (a[i] ? 1.5 : 0.0);
      if (effect_range(mech, stat, a, y, alpha, RandomizationPlan::exact()).constant_effect_rejected) rejected += p;
    }
    EXPECT_LE(static_cast<double>(rejected), alpha);
  }
}

TEST(Lesser, UpperLimitsMirrorFlippedBand) {
  auto in = random_instance(8, 4, 31);
  auto stat = stephenson(8, 3);
  auto band = lesser_band(in.mech, stat, in.z, in.y, 0.1, RandomizationPlan::exact());
  auto f = flip_for_lesser(in.z, in.y);
  QuantileEngine e(in.mech, stat, f.z, f.y, RandomizationPlan::exact());
  auto flipped = band_all_quantiles(e, 0.1);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(band.upper[k], -flipped.lower[7 - k]);
    EXPECT_EQ(band.upper_attained[k], flipped.lower_attained[7 - k]);
    EXPECT_EQ(band.lower[k], -INFINITY);
  }
}

// Lesser-side inversion against brute force on n = 4: the upper limit for
// tau_(k) is the largest c whose null "tau_(k) >= c" survives.
TEST(Lesser, BruteForceInversionNFour) {
  auto mech = Mechanism::complete(4, 2);
  auto stat = wilcoxon(4);
  CounterStream rng(5, 0);
  for (int t = 0; t < 10; ++t) {
    auto z = sample(mech, 6, static_cast<std::uint64_t>(t));
    auto y = lattice(rng, 4, -3, 3);
    auto band = lesser_band(mech, stat, z, y, 1.0 / 6.0 + 1e-9, RandomizationPlan::exact());
    std::vector<double> neg(4);
    for (std::size_t i = 0; i < 4; ++i) neg[i] = -y[i];
    for (std::size_t k = 1; k <= 4; ++k) {
      auto p = [&](double c) { return oracle::brute_pvalue_quantile(mech, stat, z, neg, 5 - k, -c); };
      // scan downward from above every candidate on a half-integer grid
      double upper = -INFINITY;
      for (double c = 8.0; c >= -8.0; c -= 0.5) {
        if (p(c) > 1.0 / 6.0 + 1e-9) {
          upper = c;
          break;
        }
      }
      const double u = band.upper[k - 1];
      if (std::isinf(u)) {
        EXPECT_EQ(upper, 8.0);
      } else if (band.upper_attained[k - 1]) {
        EXPECT_EQ(upper, u - 0.5);
      } else {
        EXPECT_EQ(upper, u);
      }
    }
  }
}

TEST(TwoSided, BonferroniHalves) {
  auto in = random_instance(8, 4, 12);
  auto stat = stephenson(8, 3);
  auto band = two_sided_band(in.mech, stat, in.z, in.y, 0.2, RandomizationPlan::exact());
  QuantileEngine e(in.mech, stat, in.z, in.y, RandomizationPlan::exact());
  auto greater = band_all_quantiles(e, 0.1);
  auto lesser = lesser_band(in.mech, stat, in.z, in.y, 0.1, RandomizationPlan::exact());
  EXPECT_EQ(band.lower, greater.lower);
  EXPECT_EQ(band.upper, lesser.upper);
  EXPECT_EQ(band.side, Side::two_sided);
}

// Exhaustive coverage of the two-sided band for a heterogeneous table.
TEST(TwoSided, CoverageAuditNEight) {
  auto mech = Mechanism::complete(8, 4);
  auto stat = stephenson(8, 3);
  const std::vector<double> y0{0, 1, -1, 2, 0.5, -2, 3, 1.5};
  const std::vector<double> tau{-2, 0, 1, 3, -1, 0.5, 2, 0};
  std::vector<double> sorted = tau;
  std::sort(sorted.begin(), sorted.end());
  const double alpha = 0.2;
  long double covered = 0;
  for (const auto& [a, p] : enumerate_all(mech)) {
    std::vector<double> y(8);
    for (std::size_t i = 0; i < 8; ++i) y[i] = y0[i] + (a[i] ? tau[i] : 0.0);
    auto band = two_sided_band(mech, stat, a, y, alpha, RandomizationPlan::exact());
    bool all = true;
    for (std::size_t k = 0; k < 8 && all; ++k) {
      const bool above = sorted[k] > band.lower[k] || (sorted[k] == band.lower[k] && !band.lower_attained[k]);
      const bool below = sorted[k] < band.upper[k] || (sorted[k] == band.upper[k] && !band.upper_attained[k]);
      all = above && below;
    }
    if (all) covered += p;
  }
  EXPECT_GE(static_cast<double>(covered), 1.0 - alpha);
}

TEST(Audit, GreaterBandCoverageNTen) {
  auto mech = Mechanism::complete(10, 5);
  auto stat = stephenson(10, 4);
  const std::vector<double> y0{0.3, -1.2, 2.2, 0.0, 1.1, -0.4, 0.8, 1.9, -2.0, 0.6};
  const std::vector<double> y1{1.3, -1.2, 5.2, -1.0, 1.1, 0.6, 0.8, 4.9, -2.5, 0.6};
  const std::vector<double> bound(10, 3.0);
  auto report = oracle::validity_audit(mech, stat, y0, y1, bound, {0.05, 0.1}, 0.1);
  EXPECT_EQ(report.assignments, 252U);
  EXPECT_GE(report.band_coverage, 0.9);
  for (double r : report.rejection_rate) EXPECT_LE(r, 0.1);
}

TEST(MaxEffect, DifferenceInMeansBisection) {
  auto in = random_instance(8, 4, 44);
  auto dim = Statistic::difference_in_means();
  auto limit = ci_max_effect(in.mech, dim, in.z, in.y, 0.1, RandomizationPlan::exact());
  ASSERT_TRUE(std::isfinite(limit.value));
  auto p = [&](double c) {
    return oracle::brute_pvalue_sharp(in.mech, dim, in.z, in.y, std::vector<double>(8, c));
  };
  EXPECT_LE(p(limit.value - 1e-6), 0.1);
  EXPECT_GT(p(limit.value + 1e-6), 0.1);
}

TEST(MaxEffect, RankStatisticEqualsBandTop) {
  auto in = random_instance(8, 4, 45);
  auto stat = stephenson(8, 3);
  QuantileEngine e(in.mech, stat, in.z, in.y, RandomizationPlan::exact());
  auto band = band_all_quantiles(e, 0.1);
  auto top = ci_max_effect(in.mech, stat, in.z, in.y, 0.1, RandomizationPlan::exact());
  EXPECT_EQ(top.value, band.lower[7]);
}

TEST(Serialize, NumbersAndCsv) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(14.23), "14.23");
  EXPECT_EQ(format_number(-INFINITY), "-inf");
  EXPECT_EQ(format_number(INFINITY), "inf");
  QuantileBand band;
  band.lower = {-INFINITY, 1.5};
  band.lower_attained = {0, 1};
  band.upper = {INFINITY, INFINITY};
  band.upper_attained = {0, 0};
  EXPECT_EQ(band_to_csv(band), "k,n_minus_k_plus_1,lower_limit,attained\n1,2,-inf,0\n2,1,1.5,1\n");
}

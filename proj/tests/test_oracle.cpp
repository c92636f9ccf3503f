#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "randinf/error.hpp"
#include "randinf/oracle.hpp"
#include "support.hpp"

using namespace randinf;
using randinf::testing::lattice;

TEST(Support, SizesAndMass) {
  auto cre = oracle::support(Mechanism::complete(6, 2));
  EXPECT_EQ(cre.rows.size(), 15U);
  EXPECT_TRUE(cre.uniform);
  auto bre = oracle::support(Mechanism::bernoulli(4, 0.3));
  EXPECT_EQ(bre.rows.size(), 16U);
  EXPECT_FALSE(bre.uniform);
  double total = 0.0;
  for (auto& [a, p] : bre.rows) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_THROW(oracle::support(Mechanism::complete(20, 10)), Error);
}

TEST(Compare, ReportsMismatch) {
  auto ok = oracle::compare("x", 0.25, 0.25, "payload");
  EXPECT_TRUE(ok.match);
  EXPECT_TRUE(ok.counterexample.empty());
  auto bad = oracle::compare("x", 0.25, 0.3, "payload");
  EXPECT_FALSE(bad.match);
  EXPECT_EQ(bad.counterexample, "payload");
}

TEST(SubsetMinimum, KEqualsNHasOnlyTheEmptySubset) {
  const Assignment z{1, 0, 1, 0};
  const std::vector<double> y{3, 1, 2, 0};
  auto stat = Statistic::rank_score(wilcoxon_scores(4), TieMethod::first());
  auto best = oracle::brute_min_over_Hkc(stat, z, y, 4, 0.5);
  EXPECT_EQ(best.minimizers.size(), 1U);
  EXPECT_TRUE(best.argmin.empty());
}

TEST(SubsetMinimum, ProductionChoiceIsAMinimizer) {
  CounterStream rng(3, 0);
  for (std::uint64_t t = 0; t < 40; ++t) {
    const std::size_t n = 4 + t % 4;
    const std::size_t m = 1 + t % (n - 1);
    auto mech = Mechanism::complete(n, m);
    auto z = sample(mech, 10, t);
    auto y = lattice(rng, n, -4, 4);
    auto stat = Statistic::rank_score(stephenson_scores(n, 2 + t % 2), TieMethod::first());
    QuantileEngine engine(mech, stat, z, y, RandomizationPlan::exact());
    for (std::size_t k = 1; k <= n; ++k) {
      const double c = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
      auto best = oracle::brute_min_over_Hkc(stat, z, y, k, c);
      EXPECT_EQ(best.minimum, engine.observed(k, c));
      auto top = engine.top_treated(k);
      std::sort(top.begin(), top.end());
      EXPECT_NE(std::find(best.minimizers.begin(), best.minimizers.end(), top), best.minimizers.end());
      EXPECT_GE(oracle::probe_min_over_Hkc(stat, z, y, k, c, 200, t), best.minimum);
    }
  }
}

TEST(GridLimit, Basics) {
  auto step = [](double c) { return c < 1.0 ? 0.01 : 0.5; };
  EXPECT_NEAR(oracle::grid_lower_limit(step, -2, 3, 0.25, 0.1), 1.0, 1e-12);
  EXPECT_EQ(oracle::grid_lower_limit([](double) { return 1.0; }, 0, 1, 0.1, 0.1), -INFINITY);
  EXPECT_EQ(oracle::grid_lower_limit([](double) { return 0.0; }, 0, 1, 0.1, 0.1), INFINITY);
}

TEST(Audit, SharpNullRejectionAtMostAlpha) {
  auto mech = Mechanism::complete(8, 4);
  CounterStream rng(1, 0);
  auto y0 = lattice(rng, 8, -3, 3);
  std::vector<double> y1 = y0;
  for (auto& v : y1) v += 1.0;
  const std::vector<double> bound(8, 1.0);
  const std::vector<double> alphas{0.01, 0.05, 0.1, 0.2};
  for (auto stat : {Statistic::difference_in_means(),
                    Statistic::rank_score(stephenson_scores(8, 3), TieMethod::random_from_seed(8, 2))}) {
    auto r = oracle::validity_audit(mech, stat, y0, y1, bound, alphas, 0.0);
    for (std::size_t j = 0; j < alphas.size(); ++j) EXPECT_LE(r.rejection_rate[j], alphas[j]) << stat.name();
  }
}

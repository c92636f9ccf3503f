#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "randinf/assignment.hpp"
#include "randinf/error.hpp"

using namespace randinf;

TEST(SpaceSize, Examples) {
  EXPECT_EQ(space_size(Mechanism::complete(4, 2)), 6U);
  EXPECT_EQ(space_size(Mechanism::bernoulli(3, 0.5)), 8U);
  std::vector<std::pair<Assignment, double>> rows;
  for (int i = 0; i < 5; ++i) {
    rows.push_back({Assignment{static_cast<std::uint8_t>(i & 1), static_cast<std::uint8_t>((i >> 1) & 1),
                               static_cast<std::uint8_t>((i >> 2) & 1)},
                    0.2});
  }
  EXPECT_EQ(space_size(Mechanism::explicit_table(rows)), 5U);
}

TEST(SpaceSize, OverflowIsReported) {
  EXPECT_FALSE(space_size(Mechanism::bernoulli(70, 0.5)).has_value());
  EXPECT_TRUE(space_size(Mechanism::complete(60, 30)).has_value());
}

TEST(Enumerate, CompleteTwoOne) {
  auto all = enumerate_all(Mechanism::complete(2, 1));
  ASSERT_EQ(all.size(), 2U);
  EXPECT_EQ(all[0].first, (Assignment{1, 0}));
  EXPECT_EQ(all[1].first, (Assignment{0, 1}));
  EXPECT_DOUBLE_EQ(all[0].second, 0.5);
  EXPECT_DOUBLE_EQ(all[1].second, 0.5);
}

TEST(Enumerate, BernoulliProducts) {
  auto all = enumerate_all(Mechanism::bernoulli(2, 0.25));
  ASSERT_EQ(all.size(), 4U);
  std::vector<double> p;
  for (auto& [a, q] : all) p.push_back(q);
  std::sort(p.begin(), p.end());
  EXPECT_DOUBLE_EQ(p[0], 0.0625);
  EXPECT_DOUBLE_EQ(p[1], 0.1875);
  EXPECT_DOUBLE_EQ(p[2], 0.1875);
  EXPECT_DOUBLE_EQ(p[3], 0.5625);
}

TEST(Enumerate, CapExceeded) {
  try {
    enumerate_all(Mechanism::complete(5, 2), 5);
    FAIL() << "expected a capacity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kCapacity);
    EXPECT_NE(std::string(e.what()).find("Monte Carlo"), std::string::npos) << e.what();
  }
}

TEST(Enumerate, CompleteCountsAndDistinct) {
  auto all = enumerate_all(Mechanism::complete(7, 3));
  ASSERT_EQ(all.size(), 35U);
  std::set<Assignment> seen;
  for (auto& [a, p] : all) {
    EXPECT_EQ(treated_count(a), 3U);
    seen.insert(a);
  }
  EXPECT_EQ(seen.size(), 35U);
}

TEST(Sample, CompleteHasFixedTreatedCount) {
  auto mech = Mechanism::complete(6, 3);
  for (std::uint64_t i = 0; i < 200; ++i) EXPECT_EQ(treated_count(sample(mech, 42, i)), 3U);
}

TEST(Sample, DeterministicPerSeedAndIndex) {
  auto mech = Mechanism::complete(12, 5);
  EXPECT_EQ(sample(mech, 9, 17), sample(mech, 9, 17));
  auto bre = Mechanism::bernoulli(12, 0.3);
  EXPECT_EQ(sample(bre, 9, 17), sample(bre, 9, 17));
}

TEST(Sample, CompleteTwoOneFrequency) {
  auto mech = Mechanism::complete(2, 1);
  int first = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) first += sample(mech, 2024, i)[0];
  EXPECT_NEAR(first / 10000.0, 0.5, 0.02);
}

// Pearson chi-square against the enumerated law; 27.877... is the 0.999
// quantile of chi-square with 9 degrees of freedom.
TEST(Sample, CompleteFiveTwoChiSquare) {
  auto mech = Mechanism::complete(5, 2);
  const auto all = enumerate_all(mech);
  std::map<Assignment, int> counts;
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) ++counts[sample(mech, 77, static_cast<std::uint64_t>(i))];
  double chi2 = 0.0;
  for (auto& [a, p] : all) {
    const double expected = p * draws;
    const double diff = counts[a] - expected;
    chi2 += diff * diff / expected;
  }
  EXPECT_EQ(counts.size(), all.size());
  EXPECT_LT(chi2, 27.877164871256568);
}

TEST(Sample, BernoulliMarginal) {
  auto mech = Mechanism::bernoulli(4, 0.25);
  int treated = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) treated += static_cast<int>(treated_count(sample(mech, 5, static_cast<std::uint64_t>(i))));
  const double rate = treated / (4.0 * draws);
  EXPECT_NEAR(rate, 0.25, 3 * std::sqrt(0.25 * 0.75 / (4.0 * draws)));
}

TEST(Sample, ExplicitFollowsTable) {
  auto mech = Mechanism::explicit_table({{{1, 0}, 0.8}, {{0, 1}, 0.2}});
  int first = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) first += sample(mech, 3, i)[0];
  EXPECT_NEAR(first / 10000.0, 0.8, 0.02);
}

TEST(Mechanism, ExchangeabilityFlags) {
  EXPECT_TRUE(Mechanism::complete(4, 2).exchangeable());
  EXPECT_TRUE(Mechanism::bernoulli(4, 0.3).exchangeable());
  EXPECT_FALSE(Mechanism::explicit_table({{{1, 0}, 0.8}, {{0, 1}, 0.2}}).exchangeable());
  // a declared-exchangeable table must actually be permutation invariant
  EXPECT_THROW(Mechanism::explicit_table({{{1, 0}, 0.8}, {{0, 1}, 0.2}}, true), Error);
  EXPECT_TRUE(Mechanism::explicit_table({{{1, 0}, 0.5}, {{0, 1}, 0.5}}, true).exchangeable());
}

TEST(Mechanism, InvalidInputs) {
  EXPECT_THROW(Mechanism::complete(3, 4), Error);
  EXPECT_THROW(Mechanism::bernoulli(3, 1.5), Error);
  EXPECT_THROW(Mechanism::explicit_table({{{1, 0}, 0.5}, {{0, 1}, 0.4}}), Error);
}

TEST(Mechanism, Marginals) {
  auto m = Mechanism::explicit_table({{{1, 0}, 0.8}, {{0, 1}, 0.2}}).treatment_marginals();
  EXPECT_DOUBLE_EQ(m[0], 0.8);
  EXPECT_DOUBLE_EQ(m[1], 0.2);
  auto c = Mechanism::complete(4, 1).treatment_marginals();
  EXPECT_DOUBLE_EQ(c[2], 0.25);
}

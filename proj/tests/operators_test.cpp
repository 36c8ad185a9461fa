// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dhnrm/operators.hpp"

using namespace dhnrm;

namespace {

CrmState random_crm(Rng& rng, int n, AtomId first) {
  CrmState c;
  for (int i = 0; i < n; ++i) c.entries.push_back({std::exp(uniform(rng, -5, 2)), first + i});
  return c;
}

double group_weight(const CrmState& crm, AtomId lo, AtomId hi) {
  double w = 0.0;
  for (const auto& x : normalize(crm))
    if (x.atom >= lo && x.atom < hi) w += x.probability;
  return w;
}

// Kernel with real randomness: maps an atom into a fresh id range.
AtomId shuffle_kernel(AtomId a, Rng& r) { return (a * 7919 + r()) % 1000000007ULL; }

}  // namespace

TEST(Superpose, Examples) {
  CrmState mu{{{1.0, 1}, {2.5, 2}}, 0.1};
  EXPECT_EQ(superpose(mu, CrmState{}), mu);
  CrmState a{{{1.0, 1}}, 0.0}, b{{{1.0, 2}, {2.0, 3}}, 0.0};
  auto s = superpose(a, b);
  EXPECT_DOUBLE_EQ(group_weight(s, 1, 2), 0.25);
  EXPECT_DOUBLE_EQ(group_weight(s, 2, 4), 0.75);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.total_mass(), a.total_mass() + b.total_mass());
  EXPECT_THROW(superpose(a, a), std::invalid_argument);
}

TEST(Subsample, ExplicitExamples) {
  Rng rng(1);
  CrmState c = random_crm(rng, 100, 0);
  EXPECT_EQ(subsample_explicit(c, 1.0, rng), c);
  EXPECT_TRUE(subsample_explicit(c, 0.0, rng).empty());
  EXPECT_THROW(subsample_explicit(c, 1.5, rng), std::invalid_argument);

  const double q = 0.3;
  double kept = 0.0;
  for (int t = 0; t < 10000; ++t) kept += subsample_explicit(c, q, rng).total_mass();
  const double frac = kept / 10000 / c.total_mass();
  EXPECT_NEAR(frac, q, 0.02);
  EXPECT_NEAR(kept / 10000, subsample_integrated(c, q).total_mass(),
              0.02 * subsample_integrated(c, q).total_mass());
}

TEST(Subsample, IntegratedExamples) {
  CrmState c{{{4.0, 1}, {1.0, 2}}, 0.5};
  EXPECT_EQ(subsample_integrated(c, 1.0), c);
  EXPECT_EQ(subsample_integrated(subsample_integrated(c, 0.5), 0.5).entries[0].jump, 1.0);
  EXPECT_DOUBLE_EQ(subsample_integrated(c, 0.3).total_mass(), 0.3 * c.total_mass());
  EXPECT_TRUE(subsample_integrated(c, 0.0).empty());
  EXPECT_THROW(subsample_integrated(c, -0.1), std::invalid_argument);
}

TEST(PointTransition, Examples) {
  Rng rng(2);
  CrmState c = random_crm(rng, 5, 10);
  EXPECT_EQ(point_transition(c, identity_kernel(), rng), c);

  auto t1 = point_transition(c, shuffle_kernel, rng, 1);
  std::vector<double> j0, j1;
  for (const auto& e : c.entries) j0.push_back(e.jump);
  for (const auto& e : t1.entries) j1.push_back(e.jump);
  EXPECT_EQ(j0, j1);

  // twice with steps 1 and 2 equals composing the kernels once per atom
  auto t2 = point_transition(t1, shuffle_kernel, rng, 2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    Rng r1 = rng.substream(1, c.entries[i].atom);
    const AtomId mid = shuffle_kernel(c.entries[i].atom, r1);
    Rng r2 = rng.substream(2, mid);
    EXPECT_EQ(t2.entries[i].atom, shuffle_kernel(mid, r2));
  }
}

TEST(Chain, SmallCases) {
  Rng rng(3);
  ChainSpec one{{random_crm(rng, 4, 0)}, 0.5};
  EXPECT_EQ(build_chain_recursive(one), one.epochs);

  ChainSpec spec{{random_crm(rng, 3, 0), random_crm(rng, 2, 100), random_crm(rng, 4, 200)}, 0.0};
  auto chain = build_chain_recursive(spec);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(chain[m], spec.epochs[m]);

  spec.q = 1.0;
  chain = build_chain_recursive(spec);
  EXPECT_EQ(chain[2], superpose(spec.epochs));
  EXPECT_EQ(build_chain_closed_form(spec)[2], superpose(spec.epochs));

  spec.epochs[1].entries[0].atom = 0;
  EXPECT_THROW(build_chain_recursive(spec), std::invalid_argument);
}

TEST(Chain, RecursiveEqualsClosedForm) {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(uniform01(rng) * 5);
    ChainSpec spec;
    spec.q = rep % 10 == 0 ? 1.0 : uniform01(rng);
    spec.rng = Rng(rep);
    spec.kernel = rep % 2 ? TransitionKernel(shuffle_kernel) : identity_kernel();
    for (int m = 0; m < n; ++m)
      spec.epochs.push_back(random_crm(rng, static_cast<int>(uniform01(rng) * 8), 1000 * m));
    auto rec = build_chain_recursive(spec), closed = build_chain_closed_form(spec);
    ASSERT_EQ(rec.size(), closed.size());
    for (int m = 0; m < n; ++m) {
      ASSERT_EQ(rec[m].size(), closed[m].size());
      for (std::size_t i = 0; i < rec[m].size(); ++i) {
        EXPECT_EQ(rec[m].entries[i].atom, closed[m].entries[i].atom);
        EXPECT_NEAR(rec[m].entries[i].jump, closed[m].entries[i].jump,
                    1e-12 * closed[m].entries[i].jump);
      }
      if (!rec[m].empty()) {
        double s = 0.0;
        for (const auto& w : normalize(rec[m])) s += w.probability;
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Chain, GroupWeightsFollowGeometricDecay) {
  Rng rng(5);
  ChainSpec spec{{random_crm(rng, 6, 0), random_crm(rng, 6, 100), random_crm(rng, 6, 200)}, 0.4};
  auto chain = build_chain_closed_form(spec);
  double denom = 0.0;
  for (int j = 0; j < 3; ++j) denom += std::pow(0.4, 2 - j) * spec.epochs[j].total_mass();
  for (int j = 0; j < 3; ++j)
    EXPECT_NEAR(group_weight(chain[2], 100 * j, 100 * j + 100),
                std::pow(0.4, 2 - j) * spec.epochs[j].total_mass() / denom, 1e-12);
}

#include "hardylab/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hardylab;

TEST(MinPairwiseDistance, SinglePair) {
  const std::vector<Vec> p{Vec{0, 0, 0}, Vec{2, 0, 0}};
  EXPECT_DOUBLE_EQ(min_pairwise_distance(p), 2.0);
}

TEST(MinPairwiseDistance, SimplexEdges) {
  const std::vector<Vec> p{Vec{0, 0, 0}, Vec{1, 0, 0}, Vec{0, 1, 0}};
  EXPECT_DOUBLE_EQ(min_pairwise_distance(p), 1.0);
}

TEST(MinPairwiseDistance, MatchesBruteForce) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec> p;
    for (int i = 0; i < 5; ++i) p.push_back(Vec{g(rng), g(rng), g(rng), g(rng)});
    double best = 1e300;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < p.size(); ++j)
        if (i != j) best = std::min(best, std::sqrt(norm2(p[i] - p[j])));
    EXPECT_DOUBLE_EQ(min_pairwise_distance(p), best);
  }
}

TEST(MinPairwiseDistance, Errors) {
  const std::vector<Vec> one{Vec{0, 0, 0}};
  try {
    min_pairwise_distance(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedDistance);
  }
  const std::vector<Vec> dup{Vec{1, 2, 3}, Vec{0, 0, 0}, Vec{1, 2, 3}};
  try {
    min_pairwise_distance(dup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateConfiguration);
    EXPECT_STREQ(e.what(), "degenerate configuration");
  }
}

TEST(PoleConfiguration, UniformWeightsAndSeparation) {
  PoleConfiguration c(3, {Vec{0, 0, 0}, Vec{2, 0, 0}, Vec{0, 3, 0}});
  EXPECT_EQ(c.size(), 3);
  for (double w : c.weights()) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(c.min_separation(), 2.0);
  EXPECT_DOUBLE_EQ(c.length_scale(), 2.0);
}

TEST(PoleConfiguration, SinglePoleHasInfiniteSeparation) {
  PoleConfiguration c(4, {Vec{1, 1, 1, 1}});
  EXPECT_TRUE(std::isinf(c.min_separation()));
  EXPECT_DOUBLE_EQ(c.length_scale(0.3), 0.3);
  EXPECT_EQ(c.pole_index_at(Vec{1, 1, 1, 1}), 0);
  EXPECT_EQ(c.pole_index_at(Vec{1, 1, 1, 0}), -1);
}

TEST(PoleConfiguration, RejectsInvalidInput) {
  auto kind_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidArgument;
  };
  EXPECT_EQ(kind_of([] { PoleConfiguration(2, {Vec{0, 0}}); }), ErrorKind::InvalidConfiguration);
  EXPECT_EQ(kind_of([] { PoleConfiguration(3, {}); }), ErrorKind::InvalidConfiguration);
  EXPECT_EQ(kind_of([] { PoleConfiguration(3, {Vec{0, 0, 0}, Vec{1, 0, 0}}, {0.7, 0.4}); }),
            ErrorKind::InvalidConfiguration);
  EXPECT_EQ(kind_of([] { PoleConfiguration(3, {Vec{0, 0, 0}, Vec{1, 0, 0}}, {1.5, -0.5}); }),
            ErrorKind::InvalidConfiguration);
  EXPECT_EQ(kind_of([] { PoleConfiguration(3, {Vec{0, 0, 0}, Vec{0, 0, 0}}); }),
            ErrorKind::DegenerateConfiguration);
  EXPECT_EQ(kind_of([] { PoleConfiguration(3, {Vec{0, 0, 0, 0}}); }),
            ErrorKind::InvalidConfiguration);
}

TEST(PoleConfiguration, CentroidAndExtent) {
  PoleConfiguration c(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  EXPECT_EQ(c.centroid(), (Vec{1, 0, 0}));
  EXPECT_DOUBLE_EQ(c.extent(), 1.0);
  const auto u = PoleConfiguration(3, {Vec{0, 0, 0}, Vec{2, 0, 0}}, {0.25, 0.75}).with_uniform_weights();
  EXPECT_DOUBLE_EQ(u.weight(0), 0.5);
}

TEST(CellIndex, NearestAndFarthest) {
  PoleConfiguration c(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  EXPECT_EQ(cell_index(Vec{0.5, 0, 0}, c, CellMode::Nearest), 0);
  EXPECT_EQ(cell_index(Vec{0.5, 0, 0}, c, CellMode::Farthest), 1);
}

TEST(CellIndex, TiesGoToLowestIndex) {
  PoleConfiguration c(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  EXPECT_EQ(cell_index(Vec{1, 0.7, 0}, c, CellMode::Nearest), 0);
  EXPECT_EQ(cell_index(Vec{1, 0.7, 0}, c, CellMode::Farthest), 0);
  PoleConfiguration r(3, {Vec{2, 0, 0}, Vec{0, 0, 0}});
  EXPECT_EQ(cell_index(Vec{1, -3, 0}, r, CellMode::Nearest), 0);
}

TEST(CellIndex, AtPoleThrows) {
  PoleConfiguration c(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  EXPECT_THROW(cell_index(Vec{2, 0, 0}, c, CellMode::Nearest), Error);
}

TEST(CellIndex, AgreesWithArgminOnRandomPoints) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  PoleConfiguration c(3, {Vec{0, 0, 0}, Vec{1, 0, 0}, Vec{0, 1, 1}, Vec{-1, 0.5, 0}});
  for (int t = 0; t < 2000; ++t) {
    const Vec x{u(rng), u(rng), u(rng)};
    int lo = 0, hi = 0;
    for (int i = 1; i < c.size(); ++i) {
      if (norm2(x - c.pole(i)) < norm2(x - c.pole(lo))) lo = i;
      if (norm2(x - c.pole(i)) > norm2(x - c.pole(hi))) hi = i;
    }
    EXPECT_EQ(cell_index(x, c, CellMode::Nearest), lo);
    EXPECT_EQ(cell_index(x, c, CellMode::Farthest), hi);
  }
}

TEST(Bisector, SignedDistance) {
  const Vec a{0, 0, 0}, b{2, 0, 0};
  EXPECT_NEAR(bisector_signed_distance(Vec{0.25, 5, -1}, a, b), 0.75, 1e-15);
  EXPECT_NEAR(bisector_signed_distance(Vec{1.5, 0, 0}, a, b), -0.5, 1e-15);
  PoleConfiguration c(3, {a, b, Vec{0, 4, 0}});
  EXPECT_NEAR(distance_to_tie_set(Vec{0.5, 0.5, 0}, c, CellMode::Nearest), 0.5, 1e-15);
  EXPECT_TRUE(std::isinf(distance_to_tie_set(Vec{3, 3, 3}, PoleConfiguration(3, {a}), CellMode::Nearest)));
}

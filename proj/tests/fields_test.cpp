#include "hardylab/fields.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hardylab;

namespace {

std::shared_ptr<const PoleConfiguration> cfg(int N, std::vector<Vec> poles) {
  return std::make_shared<const PoleConfiguration>(N, std::move(poles));
}

Vec central_gradient(const ScalarField& f, const Vec& x, double h) {
  Vec g(x.dim);
  for (int k = 0; k < x.dim; ++k) {
    Vec p = x, m = x;
    p[k] += h;
    m[k] -= h;
    g[k] = (f.eval(p) - f.eval(m)) / (2 * h);
  }
  return g;
}

double fd_laplacian(const ScalarField& f, const Vec& x, double h) {
  double s = -2.0 * x.dim * f.eval(x);
  for (int k = 0; k < x.dim; ++k) {
    Vec p = x, m = x;
    p[k] += h;
    m[k] -= h;
    s += f.eval(p) + f.eval(m);
  }
  return s / (h * h);
}

/// True when the stencil ball around x stays inside one smooth branch.
bool clear_of_locus(const ScalarField& f, const Vec& x, double margin) {
  const auto& c = f.config();
  for (const Vec& a : c.poles())
    if (distance(x, a) < margin) return false;
  if (c.size() > 1) {
    if (distance_to_tie_set(x, c, CellMode::Nearest) < margin) return false;
    if (distance_to_tie_set(x, c, CellMode::Farthest) < margin) return false;
  }
  for (const Sphere& s : f.locus().kink_spheres)
    if (std::abs(distance(x, s.center) - s.radius) < margin) return false;
  return true;
}

} // namespace

TEST(Field, GroundStateValues) {
  auto c = cfg(3, {Vec{0, 0, 0}});
  ScalarField phi(c, kind::GroundStateMax{});
  EXPECT_DOUBLE_EQ(phi.eval(Vec{4, 0, 0}), 0.5);
  const Vec g = phi.gradient(Vec{1, 0, 0});
  EXPECT_DOUBLE_EQ(g[0], -0.5);
  EXPECT_DOUBLE_EQ(g[1], 0.0);
  EXPECT_THROW(phi.eval(Vec{0, 0, 0}), Error);
}

TEST(Field, LaplacianRatioClosedForm) {
  EXPECT_DOUBLE_EQ(laplacian_ratio(GroundState::Max, PoleConfiguration(3, {Vec{0, 0, 0}}), Vec{2, 0, 0}), 1.0 / 16);
  EXPECT_DOUBLE_EQ(laplacian_ratio(GroundState::Max, PoleConfiguration(4, {Vec{0, 0, 0, 0}}), Vec{1, 0, 0, 0}), 1.0);
  PoleConfiguration two(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  try {
    laplacian_ratio(GroundState::Min, two, Vec{1, 3, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GradientUndefined);
  }
  EXPECT_DOUBLE_EQ(laplacian_ratio(GroundState::Min, two, Vec{0.5, 0, 0}), 0.25 / 2.25);
}

TEST(Field, LaplacianRatioMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int N : {3, 4, 5}) {
    std::vector<Vec> poles;
    for (int i = 0; i < 3; ++i) {
      Vec p(N);
      for (int k = 0; k < N; ++k) p[k] = u(rng);
      poles.push_back(p);
    }
    auto c = cfg(N, poles);
    for (auto gs : {GroundState::Max, GroundState::Min}) {
      ScalarField phi(c, gs == GroundState::Max ? FieldKind{kind::GroundStateMax{}}
                                                : FieldKind{kind::GroundStateMin{}});
      int done = 0;
      while (done < 100) {
        Vec x(N);
        for (int k = 0; k < N; ++k) x[k] = u(rng);
        if (!clear_of_locus(phi, x, 0.05)) continue;
        const double want = laplacian_ratio(gs, *c, x);
        EXPECT_NEAR(-fd_laplacian(phi, x, 1e-3) / phi.eval(x), want, 1e-3 * want);
        EXPECT_NEAR(-phi.laplacian(x) / phi.eval(x), want, 1e-12 * want);
        ++done;
      }
    }
  }
}

TEST(Field, GradientsMatchCentralDifferences) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 2.5);
  auto c = cfg(3, {Vec{0, 0, 0}, Vec{1, 0, 0}, Vec{0, 1.2, 0.4}});
  std::vector<ScalarField> fields{
      ScalarField(c, kind::GroundStateMax{}),
      ScalarField(c, kind::GroundStateMin{}),
      ScalarField(c, kind::ProductPower{-0.7}),
      ScalarField(c, kind::SumPower{}),
      ScalarField(c, kind::CutoffLog{0.3, 1}),
      ScalarField(c, kind::MinimizerMax{0.3}),
      ScalarField(c, kind::MinimizerMin{0.1}),
      ScalarField(c, kind::Bump{Vec{0.5, 0.5, 0}, 1.3}),
      ScalarField(c, kind::Gaussian{Vec{0.2, -0.1, 0.3}, 0.8}),
      ScalarField(c, kind::Linear{Vec{1, -2, 0.5}}, 3.0),
  };
  const ScalarField bump(c, kind::Bump{Vec{0.5, 0.4, 0.1}, 1.5});
  const ScalarField phi(c, kind::GroundStateMax{});
  fields.push_back(make_product({factor(bump), factor(phi, -1.0)}));
  for (const auto& f : fields) {
    int done = 0;
    while (done < 100) {
      const Vec x{u(rng), u(rng), u(rng)};
      if (!clear_of_locus(f, x, 0.02)) continue;
      const Vec g = f.gradient(x);
      const Vec fd = central_gradient(f, x, 1e-4);
      const double scale = std::max(1.0, std::sqrt(norm2(g)));
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(g[k], fd[k], 1e-5 * scale);
      const double lap = f.laplacian(x);
      EXPECT_NEAR(lap, fd_laplacian(f, x, 1e-3), 1e-3 * std::max(1.0, std::abs(lap)));
      ++done;
    }
  }
}

TEST(Field, CutoffProfile) {
  auto c = cfg(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  ScalarField psi(c, kind::CutoffLog{0.1, 0});
  EXPECT_NEAR(psi.eval(Vec{0.01, 0, 0}), 0.0, 1e-15);
  EXPECT_NEAR(psi.eval(Vec{0, 0.1, 0}), 1.0, 1e-15);
  EXPECT_NEAR(psi.eval(Vec{0, 0, std::sqrt(0.001)}), 0.5, 1e-14);
  EXPECT_DOUBLE_EQ(psi.eval(Vec{0.005, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(psi.eval(Vec{1.5, 0, 0}), 0.0);
  EXPECT_THROW(ScalarField(c, kind::CutoffLog{0.6, 0}), Error);
  EXPECT_THROW(ScalarField(c, kind::CutoffLog{0.1, 2}), Error);
}

TEST(Field, MinimizerConstruction) {
  auto one = cfg(3, {Vec{0, 0, 0}});
  const ScalarField u = make_minimizer(one, 0.1, MinimizerVariant::Max);
  const ScalarField psi(one, kind::CutoffLog{0.1, 0});
  for (double r : {0.005, 0.02, 0.05, 0.3, 3.0})
    EXPECT_NEAR(u.eval(Vec{0, r, 0}), psi.eval(Vec{0, r, 0}) * std::pow(r, -0.6), 1e-14);

  auto two = cfg(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  const ScalarField v = make_minimizer(two, 0.1, MinimizerVariant::Max);
  EXPECT_DOUBLE_EQ(v.eval(Vec{0.009, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(v.eval(Vec{2, 0.0099, 0}), 0.0);

  EXPECT_THROW(make_minimizer(two, 0.5, MinimizerVariant::Max), Error);
  EXPECT_THROW(make_minimizer(two, 0.0, MinimizerVariant::Min), Error);
  auto close = cfg(3, {Vec{0, 0, 0}, Vec{0.3, 0, 0}});
  try {
    make_minimizer(close, 0.2, MinimizerVariant::Max);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CutoffExceedsCell);
  }
}

TEST(Field, MinimizerMinReducesToGroundState) {
  auto c = cfg(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  ScalarField u(c, kind::MinimizerMin{0.0});
  ScalarField phi(c, kind::GroundStateMin{});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int t = 0; t < 200; ++t) {
    const Vec x{d(rng), d(rng), d(rng)};
    EXPECT_DOUBLE_EQ(u.eval(x), phi.eval(x));
  }
}

TEST(Field, MinimizerMinContinuousAcrossBisector) {
  auto c = cfg(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  const ScalarField u = make_minimizer(c, 0.05, MinimizerVariant::Min);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int t = 0; t < 200; ++t) {
    const double y = d(rng), z = d(rng);
    const double left = u.eval(Vec{1 - 1e-9, y, z});
    const double right = u.eval(Vec{1 + 1e-9, y, z});
    EXPECT_NEAR(left, right, 1e-8 * left);
  }
}

TEST(Field, BumpSupport) {
  auto c = cfg(3, {Vec{0, 0, 0}});
  ScalarField b(c, kind::Bump{Vec{1, 0, 0}, 0.5});
  EXPECT_DOUBLE_EQ(b.eval(Vec{1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(b.eval(Vec{1.6, 0, 0}), 0.0);
  const Vec g = b.gradient(Vec{1, 0.7, 0});
  EXPECT_DOUBLE_EQ(norm2(g), 0.0);
  ASSERT_TRUE(b.locus().support.has_value());
  EXPECT_DOUBLE_EQ(b.locus().support->radius, 0.5);
  EXPECT_TRUE(std::isinf(b.decay_exponent()));
}

TEST(Field, NullSetChecks) {
  auto c = cfg(3, {Vec{0, 0, 0}, Vec{2, 0, 0}});
  ScalarField phi(c, kind::GroundStateMax{});
  EXPECT_NO_THROW(phi.eval(Vec{1, 0, 0}));
  try {
    phi.gradient(Vec{1, 0.3, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GradientUndefined);
  }
  ScalarField b(c, kind::Bump{Vec{1, 0, 0}, 0.5});
  EXPECT_NO_THROW(b.gradient(Vec{1, 0.3, 0}));
}

TEST(Field, ScalingAndDecay) {
  auto c = cfg(5, {Vec{0, 0, 0, 0, 0}});
  ScalarField phi(c, kind::GroundStateMax{});
  EXPECT_DOUBLE_EQ(phi.scaled(3.0).eval(Vec{1, 1, 1, 1, 0}), 3.0 * phi.eval(Vec{1, 1, 1, 1, 0}));
  EXPECT_DOUBLE_EQ(phi.decay_exponent(), 1.5);
  EXPECT_DOUBLE_EQ(ScalarField(c, kind::MinimizerMin{0.1}).decay_exponent(), 1.6);
}

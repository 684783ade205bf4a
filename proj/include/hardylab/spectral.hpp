#pragma once

// Finite-difference Dirichlet pencils (A, B) on N = 3 grids and their smallest
// generalized eigenvalue: A is the 7-point Laplacian, B = diag(V) with cell
// averages of V near the poles.

#include "hardylab/functionals.hpp"
#include "hardylab/potentials.hpp"
#include "hardylab/quadrature.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace hardylab {

/// Dirichlet Poisson solver on a box via the type-I sine transform.
class DstPoisson {
public:
  DstPoisson(std::array<int, 3> m, double h) : m_(m), h_(h) {
    const std::size_t n = static_cast<std::size_t>(m[0]) * m[1] * m[2];
    buf_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    if (!buf_) throw std::bad_alloc();
    plan_.reset(fftw_plan_r2r_3d(m[0], m[1], m[2], buf_.get(), buf_.get(), FFTW_RODFT00,
                                 FFTW_RODFT00, FFTW_RODFT00, FFTW_ESTIMATE));
    if (!plan_) throw Error(ErrorKind::InvalidGrid, "fft plan failed");
    for (int a = 0; a < 3; ++a) {
      eig_[a].resize(m[a]);
      for (int k = 0; k < m[a]; ++k) {
        const double s = std::sin(std::numbers::pi * (k + 1) / (2.0 * (m[a] + 1)));
        eig_[a][k] = 4.0 * s * s / (h * h);
      }
    }
    norm_ = 1.0;
    for (int a = 0; a < 3; ++a) norm_ /= 2.0 * (m[a] + 1);
  }

  /// x = L^{-1} b for the negative 7-point Laplacian L, in place.
  void solve(double* x) const {
    const std::size_t n = size();
    std::copy(x, x + n, buf_.get());
    fftw_execute(plan_.get());
    std::size_t idx = 0;
    for (int i = 0; i < m_[0]; ++i)
      for (int j = 0; j < m_[1]; ++j)
        for (int k = 0; k < m_[2]; ++k, ++idx)
          buf_.get()[idx] /= eig_[0][i] + eig_[1][j] + eig_[2][k];
    fftw_execute(plan_.get());
    for (std::size_t q = 0; q < n; ++q) x[q] = buf_.get()[q] * norm_;
  }

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(m_[0]) * m_[1] * m_[2];
  }

private:
  struct FreeBuf {
    void operator()(double* p) const noexcept { fftw_free(p); }
  };
  struct FreePlan {
    void operator()(fftw_plan p) const noexcept { fftw_destroy_plan(p); }
  };
  std::array<int, 3> m_;
  double h_;
  std::unique_ptr<double, FreeBuf> buf_;
  std::unique_ptr<std::remove_pointer_t<fftw_plan>, FreePlan> plan_;
  std::array<std::vector<double>, 3> eig_;
  double norm_;
};

/// Discretized quotient vᵀAv / vᵀBv on the active nodes of a box grid.
struct GridOperatorPair {
  BoxDomain box;
  double h;
  /// Interior node counts per axis of the enclosing box.
  std::array<int, 3> m;
  /// Box-linear index of each active node.
  std::vector<std::size_t> active;
  /// True when every interior node of the box is active.
  bool full_box;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd B;
  double rho;

  std::size_t node_count() const noexcept { return active.size(); }

  Vec node(std::size_t a) const {
    std::size_t q = active[a];
    const int k = static_cast<int>(q % m[2]);
    q /= m[2];
    const int j = static_cast<int>(q % m[1]);
    const int i = static_cast<int>(q / m[1]);
    return Vec{box.lo[0] + (i + 1) * h, box.lo[1] + (j + 1) * h, box.lo[2] + (k + 1) * h};
  }
};

namespace detail {

inline std::array<int, 3> grid_counts(const BoxDomain& box, double h) {
  std::array<int, 3> m{};
  for (int a = 0; a < 3; ++a) {
    const double cells = (box.hi[a] - box.lo[a]) / h;
    const double rounded = std::round(cells);
    if (!(rounded >= 2.0) || std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells))
      throw Error(ErrorKind::InvalidGrid, "box sides must be integer multiples of h");
    m[a] = static_cast<int>(rounded) - 1;
  }
  return m;
}

/// Average of V over the h-cube centered at x.
inline double cell_average(const PotentialSpec& v, const Vec& x, double h) {
  BoxDomain cell{x - Vec{0.5 * h, 0.5 * h, 0.5 * h}, x + Vec{0.5 * h, 0.5 * h, 0.5 * h}};
  SingularLocus loc;
  loc.singular_at_poles = !v.regular_at_poles();
  loc.kinks_on_ties = v.branches_on_ties();
  Integrand g = scalar_integrand([&v](const Vec& y) { return v.eval(y); }, loc,
                                 static_cast<double>(decay_exponent(v)));
  IntegrationOptions opt;
  opt.rel_tol = 1e-7;
  opt.reference_length = h;
  opt.throw_on_budget = false;
  return integrate(g, Domain{cell}, v.config(), opt).value / (h * h * h);
}

/// Assembles A over the active nodes (in_domain decides activity) and B.
/// Active nodes and stiffness matrix; B is left empty.
inline GridOperatorPair assemble_stiffness(const BoxDomain& box, double h,
                                           const std::function<bool(const Vec&)>& in_domain,
                                           bool full_box) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidGrid, "h must be positive");
  GridOperatorPair g;
  g.box = box;
  g.h = h;
  g.m = grid_counts(box, h);
  g.rho = 0.0;
  g.full_box = full_box;
  const auto& m = g.m;
  const std::size_t total = static_cast<std::size_t>(m[0]) * m[1] * m[2];
  std::vector<long> map(total, -1);
  for (int i = 0; i < m[0]; ++i)
    for (int j = 0; j < m[1]; ++j)
      for (int k = 0; k < m[2]; ++k) {
        const std::size_t q = (static_cast<std::size_t>(i) * m[1] + j) * m[2] + k;
        const Vec x{box.lo[0] + (i + 1) * h, box.lo[1] + (j + 1) * h, box.lo[2] + (k + 1) * h};
        if (full_box || in_domain(x)) {
          map[q] = static_cast<long>(g.active.size());
          g.active.push_back(q);
        }
      }
  const std::size_t n = g.active.size();
  if (n == 0) throw Error(ErrorKind::InvalidGrid, "no interior nodes");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(7 * n);
  const double ih2 = 1.0 / (h * h);
  const std::array<long, 3> stride{static_cast<long>(m[1]) * m[2], m[2], 1};
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t q = g.active[a];
    std::array<int, 3> ijk{static_cast<int>(q / stride[0]),
                           static_cast<int>((q / stride[1]) % m[1]),
                           static_cast<int>(q % m[2])};
    trip.emplace_back(a, a, 6.0 * ih2);
    for (int ax = 0; ax < 3; ++ax)
      for (int s : {-1, 1}) {
        const int c = ijk[ax] + s;
        if (c < 0 || c >= m[ax]) continue;
        const long nb = map[q + s * stride[ax]];
        if (nb >= 0) trip.emplace_back(a, nb, -ih2);
      }
  }
  g.A.resize(n, n);
  g.A.setFromTriplets(trip.begin(), trip.end());
  return g;
}

inline GridOperatorPair assemble_masked(const BoxDomain& box, double h, const PotentialSpec& v,
                                        double rho,
                                        const std::function<bool(const Vec&)>& in_domain,
                                        bool full_box) {
  const PoleConfiguration& cfg = v.config();
  if (cfg.dim() != 3) throw Error(ErrorKind::InvalidGrid, "grid solver needs N = 3");
  if (!(rho == 0.0 || rho >= h * (1.0 - 1e-12)))
    throw Error(ErrorKind::InvalidGrid, "rho must be 0 or >= h");
  GridOperatorPair g = assemble_stiffness(box, h, in_domain, full_box);
  g.rho = rho;
  const std::size_t n = g.node_count();
  g.B.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    const Vec x = g.node(a);
    double near = std::numeric_limits<double>::infinity();
    for (const Vec& p : cfg.poles()) near = std::min(near, distance(x, p));
    if (rho > 0.0 && near <= rho * (1.0 + 1e-9)) {
      g.B[a] = cell_average(v, x, h);
    } else {
      if (near == 0.0)
        throw Error(ErrorKind::InvalidGrid, "pole on a grid node without regularization");
      g.B[a] = v.eval(x);
    }
    if (!(g.B[a] > 0.0) || !std::isfinite(g.B[a]))
      throw Error(ErrorKind::InvalidGrid, "potential must be positive on the grid");
  }
  return g;
}

} // namespace detail

/// Pencil on a box grid; poles strictly interior, h < d/4, rho = 0 or rho >= h.
inline GridOperatorPair assemble(const BoxDomain& box, double h, const PotentialSpec& v,
                                 double rho) {
  const PoleConfiguration& cfg = v.config();
  if (cfg.dim() != 3) throw Error(ErrorKind::InvalidGrid, "grid solver needs N = 3");
  for (const Vec& p : cfg.poles())
    for (int a = 0; a < 3; ++a)
      if (!(p[a] > box.lo[a] && p[a] < box.hi[a]))
        throw Error(ErrorKind::InvalidGrid, "poles must be strictly interior");
  if (cfg.size() > 1 && !(h < 0.25 * cfg.min_separation()))
    throw Error(ErrorKind::InvalidGrid, "h too coarse");
  return detail::assemble_masked(box, h, v, rho, {}, true);
}

/// Dirichlet Laplacian pencil with unit mass on a full box grid.
inline GridOperatorPair assemble_laplacian(const BoxDomain& box, double h) {
  GridOperatorPair g = detail::assemble_stiffness(box, h, {}, true);
  g.B = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.node_count()));
  return g;
}

struct EigenEstimate {
  double mu;
  double h;
  double rho;
  int iterations;
  double residual;
  std::optional<double> extrapolated;
  Eigen::VectorXd vector;
};

class EigensolveFailed : public Error {
public:
  explicit EigensolveFailed(EigenEstimate best)
      : Error(ErrorKind::EigensolveFailed, "eigensolve failed"), best_(std::move(best)) {}
  const EigenEstimate& best() const noexcept { return best_; }

private:
  EigenEstimate best_;
};

namespace detail {

/// x = A^{-1} b: one sine-transform solve on a full box, otherwise CG
/// preconditioned by the enclosing-box solver.
class PencilSolver {
public:
  explicit PencilSolver(const GridOperatorPair& g) : g_(g), fast_(g.m, g.h), box_(fast_.size()) {}

  Eigen::VectorXd solve(const Eigen::VectorXd& b, double tol = 1e-12) const {
    if (g_.full_box) return precondition(b);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd r = b;
    Eigen::VectorXd z = precondition(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    const double bnorm = b.norm();
    if (bnorm == 0.0) return x;
    for (int it = 0; it < 500; ++it) {
      const Eigen::VectorXd ap = g_.A * p;
      const double alpha = rz / p.dot(ap);
      x += alpha * p;
      r -= alpha * ap;
      if (r.norm() <= tol * bnorm) return x;
      z = precondition(r);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
    return x;
  }

private:
  Eigen::VectorXd precondition(const Eigen::VectorXd& r) const {
    std::fill(box_.begin(), box_.end(), 0.0);
    for (Eigen::Index a = 0; a < r.size(); ++a) box_[g_.active[a]] = r[a];
    fast_.solve(box_.data());
    Eigen::VectorXd z(r.size());
    for (Eigen::Index a = 0; a < r.size(); ++a) z[a] = box_[g_.active[a]];
    return z;
  }

  const GridOperatorPair& g_;
  DstPoisson fast_;
  mutable std::vector<double> box_;
};

} // namespace detail

/// Smallest mu with A v = mu B v: restarted Lanczos on B^{1/2} A^{-1} B^{1/2}
/// (accelerated inverse iteration) from the normalized all-ones vector.
inline EigenEstimate min_generalized_eig(const GridOperatorPair& g, double tol = 1e-9,
                                         int max_iter = 60) {
  const Eigen::Index n = static_cast<Eigen::Index>(g.node_count());
  detail::PencilSolver solver(g);
  const Eigen::VectorXd sb = g.B.cwiseSqrt();
  auto apply = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    return sb.cwiseProduct(solver.solve(sb.cwiseProduct(y)));
  };
  const int krylov = static_cast<int>(std::min<Eigen::Index>(40, n));
  Eigen::VectorXd start = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  EigenEstimate best{std::numeric_limits<double>::infinity(), g.h, g.rho, 0,
                     std::numeric_limits<double>::infinity(), std::nullopt, {}};
  for (int restart = 0; restart < max_iter; ++restart) {
    Eigen::MatrixXd Q(n, krylov);
    std::vector<double> alpha, beta;
    Q.col(0) = start.normalized();
    int k = 0;
    for (; k < krylov; ++k) {
      Eigen::VectorXd w = apply(Q.col(k));
      const double a = Q.col(k).dot(w);
      alpha.push_back(a);
      // full reorthogonalization, twice
      for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
      const double b = w.norm();
      if (k + 1 == krylov || b < 1e-14 * std::abs(a)) {
        ++k;
        break;
      }
      beta.push_back(b);
      Q.col(k + 1) = w / b;
    }
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const Eigen::VectorXd s = es.eigenvectors().col(k - 1);
    Eigen::VectorXd y = Q.leftCols(k) * s;
    y.normalize();
    // back to the pencil: v = B^{-1/2} y
    Eigen::VectorXd v = y.cwiseQuotient(sb);
    const Eigen::VectorXd Av = g.A * v;
    const Eigen::VectorXd Bv = g.B.cwiseProduct(v);
    const double mu = v.dot(Av) / v.dot(Bv);
    const double res = (Av - mu * Bv).norm() / (std::abs(mu) * Bv.norm());
    best.iterations += k;
    if (res < best.residual) {
      best.mu = mu;
      best.residual = res;
      best.vector = v / v.norm();
    }
    if (res < tol) return best;
    start = y;
  }
  throw EigensolveFailed(best);
}

/// Smallest eigenvalue per h, Richardson extrapolation (O(h^2)) of the last two,
/// margin = 2 |last change|.
/// Second-order Richardson extrapolation from a coarse and a fine run.
inline double richardson(double h_coarse, double mu_coarse, double h_fine, double mu_fine) {
  const double r2 = (h_coarse / h_fine) * (h_coarse / h_fine);
  return mu_fine + (mu_fine - mu_coarse) / (r2 - 1.0);
}

struct BestConstantReport {
  std::vector<EigenEstimate> runs;
  double extrapolated;
  double margin;
  /// Observed convergence order from the last three runs, if available.
  std::optional<double> observed_order;
  double lower;
  double upper;
  bool in_range;
};

inline BestConstantReport best_constant_estimate(
    const BoxDomain& box, const PotentialSpec& v, const std::vector<double>& h_list,
    const std::function<double(double)>& rho_rule = [](double h) { return h; },
    double tol = 1e-9) {
  if (h_list.size() < 2) throw Error(ErrorKind::InvalidArgument, "h_list needs >= 2 entries");
  for (std::size_t i = 1; i < h_list.size(); ++i)
    if (!(h_list[i] < h_list[i - 1]))
      throw Error(ErrorKind::InvalidArgument, "h_list must be decreasing");
  BestConstantReport rep;
  for (double h : h_list) {
    const GridOperatorPair g = assemble(box, h, v, rho_rule(h));
    EigenEstimate e = min_generalized_eig(g, tol);
    e.vector.resize(0);
    rep.runs.push_back(std::move(e));
  }
  const std::size_t k = rep.runs.size();
  const double hc = rep.runs[k - 2].h;
  const double hf = rep.runs[k - 1].h;
  const double mc = rep.runs[k - 2].mu;
  const double mf = rep.runs[k - 1].mu;
  rep.extrapolated = richardson(hc, mc, hf, mf);
  rep.runs.back().extrapolated = rep.extrapolated;
  rep.margin = 2.0 * std::abs(mf - mc);
  if (k >= 3) {
    const double d1 = rep.runs[k - 3].mu - mc;
    const double d2 = mc - mf;
    if (d1 != 0.0 && d2 != 0.0)
      rep.observed_order = std::log(std::abs(d1 / d2)) / std::log(rep.runs[k - 3].h / hc);
  }
  const int N = v.config().dim();
  const int n = v.config().size();
  rep.upper = hardy_constant(N);
  rep.lower = hardy_constant(N) / n;
  rep.in_range =
      rep.extrapolated > rep.lower - rep.margin && rep.extrapolated <= rep.upper + rep.margin;
  return rep;
}

/// One radius of the shrinking-ball study.
struct ShrinkingBallRecord {
  double r;
  /// Minimum over the balls of the smallest pencil eigenvalue of V_*.
  EigenEstimate estimate;
  /// Range of W_1 = V_{+inf} / V_* over the grid nodes of all balls.
  double w1_min;
  double w1_max;
};

/// Best constant of V_* on the union of B(a_i, r), one grid with h = r / nodes_per_radius
/// per ball, for each r in a decreasing schedule.
inline std::vector<ShrinkingBallRecord> shrinking_balls_study(
    const PoleConfiguration& cfg, const std::vector<double>& r_schedule,
    int nodes_per_radius = 16, double tol = 1e-9) {
  if (cfg.dim() != 3) throw Error(ErrorKind::InvalidGrid, "grid solver needs N = 3");
  if (nodes_per_radius < 2) throw Error(ErrorKind::InvalidGrid, "too few nodes per radius");
  for (std::size_t i = 0; i < r_schedule.size(); ++i) {
    if (!(r_schedule[i] > 0.0)) throw Error(ErrorKind::InvalidShrinkingFamily, "radius must be positive");
    if (i > 0 && !(r_schedule[i] < r_schedule[i - 1]))
      throw Error(ErrorKind::InvalidShrinkingFamily, "radii must decrease");
    if (cfg.size() > 1 && !(r_schedule[i] < 0.5 * cfg.min_separation()))
      throw Error(ErrorKind::InvalidShrinkingFamily, "invalid shrinking family");
  }
  const auto shared = std::make_shared<const PoleConfiguration>(cfg.with_uniform_weights());
  const PotentialSpec vstar(shared, family::SumInverseSquare{});
  const PotentialSpec vmax(shared, family::MaxInverseSquare{});
  std::vector<ShrinkingBallRecord> out;
  for (double r : r_schedule) {
    const double h = r / nodes_per_radius;
    ShrinkingBallRecord rec{r, {}, std::numeric_limits<double>::infinity(), 0.0};
    rec.estimate.mu = std::numeric_limits<double>::infinity();
    for (const Vec& a : cfg.poles()) {
      const Vec half{r, r, r};
      BoxDomain box{a - half, a + half};
      auto inside = [&a, r](const Vec& x) { return distance(x, a) < r * (1.0 - 1e-12); };
      const GridOperatorPair g = detail::assemble_masked(box, h, vstar, h, inside, false);
      EigenEstimate e = min_generalized_eig(g, tol);
      for (std::size_t q = 0; q < g.node_count(); ++q) {
        const Vec x = g.node(q);
        if (x == a) continue;
        const double w = vmax.eval(x) / vstar.eval(x);
        rec.w1_min = std::min(rec.w1_min, w);
        rec.w1_max = std::max(rec.w1_max, w);
      }
      if (e.mu < rec.estimate.mu) {
        e.vector.resize(0);
        rec.estimate = std::move(e);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---- unit-disk eigenvalue --------------------------------------------------

/// J_0 by its power series (accurate for |x| <= 4).
inline double bessel_j0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= -q / (static_cast<double>(k) * k);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

/// First zero of J_0 by bisection on [2, 3].
inline double bessel_j0_first_zero() {
  double lo = 2.0, hi = 3.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (bessel_j0_series(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// First Dirichlet eigenvalue of the unit disk, j_{0,1}^2.
inline double disk_eigenvalue_oracle() {
  const double j = bessel_j0_first_zero();
  return j * j;
}

/// Independent estimate: Shortley–Weller finite differences on the unit disk
/// with mesh size h, smallest eigenvalue by inverse iteration on a sparse LU.
inline double disk_eigenvalue_grid(double h) {
  const int m = static_cast<int>(std::ceil(1.0 / h));
  const int side = 2 * m + 1;
  std::vector<long> map(static_cast<std::size_t>(side) * side, -1);
  std::vector<std::array<int, 2>> nodes;
  auto idx = [side](int i, int j) { return static_cast<std::size_t>(i) * side + j; };
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const double x = (i - m) * h, y = (j - m) * h;
      if (x * x + y * y < 1.0) {
        map[idx(i, j)] = static_cast<long>(nodes.size());
        nodes.push_back({i, j});
      }
    }
  const Eigen::Index n = static_cast<Eigen::Index>(nodes.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const int i = nodes[a][0], j = nodes[a][1];
    const double x = (i - m) * h, y = (j - m) * h;
    double diag = 0.0;
    // each axis: arms to the neighbour or to the circle
    for (int ax = 0; ax < 2; ++ax) {
      double arm[2];
      long nb[2];
      for (int s = 0; s < 2; ++s) {
        const int di = ax == 0 ? (s ? 1 : -1) : 0;
        const int dj = ax == 1 ? (s ? 1 : -1) : 0;
        const long q = map[idx(i + di, j + dj)];
        if (q >= 0) {
          arm[s] = h;
          nb[s] = q;
        } else {
          // distance to the circle along the axis
          const double c = ax == 0 ? x : y;
          const double o = ax == 0 ? y : x;
          const double reach = std::sqrt(1.0 - o * o);
          arm[s] = s ? reach - c : c + reach;
          nb[s] = -1;
        }
      }
      const double hl = arm[0], hr = arm[1];
      // -u'' ~ 2/(hl hr) u - 2/(hl (hl+hr)) u_l - 2/(hr (hl+hr)) u_r
      diag += 2.0 / (hl * hr);
      if (nb[0] >= 0) trip.emplace_back(a, nb[0], -2.0 / (hl * (hl + hr)));
      if (nb[1] >= 0) trip.emplace_back(a, nb[1], -2.0 / (hr * (hl + hr)));
    }
    trip.emplace_back(a, a, diag);
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  // shift near the expected eigenvalue for fast convergence
  const double shift = 5.0;
  Eigen::SparseMatrix<double> S = A;
  for (Eigen::Index a = 0; a < n; ++a) S.coeffRef(a, a) -= shift;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(S);
  lu.factorize(S);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::EigensolveFailed, "eigensolve failed");
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
  double lambda = shift;
  for (int it = 0; it < 200; ++it) {
    // w = (A - s)^{-1} v with |v| = 1, so v.w ~ 1 / (lambda - s)
    Eigen::VectorXd w = lu.solve(v);
    const double next = shift + 1.0 / v.dot(w);
    w.normalize();
    const bool done = std::abs(next - lambda) < 1e-13 * std::abs(next);
    lambda = next;
    v = w;
    if (done && it > 2) break;
  }
  return lambda;
}

} // namespace hardylab

#pragma once

// Pole-aware cubature.
//
// Every domain is split into convex pieces (domain ∩ nearest-pole cell, optionally
// ∩ farthest-pole cell). Each piece is integrated in polar coordinates about a
// center inside it, normally the pole itself, so that the r^{N-1} Jacobian
// absorbs the inverse-square singularity. Along each ray the radial integral is
// adaptive Gauss–Kronrod with breakpoints at every tie hyperplane and kink
// sphere crossing; intervals touching the pole are halved toward it. Rays
// beyond a far radius are compactified with w = t^{-(p-N)}, p being the
// integrand's decay exponent. Directions are integrated with an adaptive
// Genz–Malik rule in hyperspherical angles, with a seeded stratified Monte
// Carlo fallback when the budget runs out.

#include "hardylab/fields.hpp"
#include "hardylab/geometry.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <variant>
#include <vector>

namespace hardylab {

inline constexpr int kMaxComponents = 16;
using Values = std::array<double, kMaxComponents>;

/// Vector-valued pointwise integrand plus the geometric hints the integrator needs.
struct Integrand {
  int components = 1;
  std::function<void(const Vec&, double*)> eval;
  /// Kink spheres, tie-hyperplane kinks and a common support ball.
  SingularLocus locus;
  /// |f(x)| = O(|x|^{-decay}) at infinity; +inf for compact support.
  double decay = std::numeric_limits<double>::infinity();
};

/// Wraps a scalar callable.
template <class F>
Integrand scalar_integrand(F f, SingularLocus locus = {},
                           double decay = std::numeric_limits<double>::infinity()) {
  Integrand g;
  g.components = 1;
  g.eval = [f = std::move(f)](const Vec& x, double* out) { out[0] = f(x); };
  g.locus = std::move(locus);
  g.decay = decay;
  return g;
}

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t nodes = 0;
};

struct VectorResult {
  std::vector<double> values;
  std::vector<double> errors;
  std::size_t nodes = 0;
  bool converged = true;

  QuadratureResult component(int k) const { return {values[k], errors[k], nodes}; }
};

class ToleranceNotReached : public Error {
public:
  explicit ToleranceNotReached(VectorResult best)
      : Error(ErrorKind::ToleranceNotReached, "tolerance not reached"),
        best_(std::move(best)) {}
  const VectorResult& best() const noexcept { return best_; }

private:
  VectorResult best_;
};

struct IntegrationOptions {
  double rel_tol = 1e-6;
  double abs_tol = 1e-13;
  std::size_t max_nodes = 40'000'000;
  std::uint64_t seed = 0xA4D1;
  /// Length scale used when the configuration has a single pole.
  double reference_length = 1.0;
  /// Throw ToleranceNotReached when the budget runs out; otherwise return the
  /// best estimate with converged = false.
  bool throw_on_budget = true;
};

// ---- domains -------------------------------------------------------------

struct BoxDomain {
  Vec lo;
  Vec hi;
};
struct BallDomain {
  Vec center;
  double radius;
};
struct UnionBallsDomain {
  std::vector<BallDomain> balls;
};
enum class TailPolicy { Compactify, Truncate };
struct WholeSpaceDomain {
  TailPolicy policy = TailPolicy::Compactify;
};
struct CellRestrictedDomain;

using Domain = std::variant<BoxDomain, BallDomain, UnionBallsDomain, WholeSpaceDomain,
                            CellRestrictedDomain>;

struct CellRestrictedDomain {
  std::shared_ptr<const Domain> base;
  int cell;
  CellMode mode;
};

inline Domain cell_restricted(Domain base, int cell, CellMode mode) {
  return CellRestrictedDomain{std::make_shared<const Domain>(std::move(base)), cell, mode};
}

// ---- closed-form radial integrals ------------------------------------------

/// Exact integral of r^p over [r_lo, r_hi]; r_hi may be +inf.
inline double integrate_radial(double p, double r_lo, double r_hi) {
  if (!(r_lo > 0.0) || !(r_hi >= r_lo))
    throw Error(ErrorKind::InvalidArgument, "radial integral needs 0 < r_lo <= r_hi");
  if (std::isinf(r_hi)) {
    if (!(p < -1.0))
      throw Error(ErrorKind::DivergentRadialIntegral, "divergent radial integral");
    return -std::pow(r_lo, p + 1.0) / (p + 1.0);
  }
  if (p == -1.0) return std::log(r_hi / r_lo);
  // r_hi^{p+1} - r_lo^{p+1} evaluated as r_lo^{p+1} (exp((p+1) log(r_hi/r_lo)) - 1)
  const double q = p + 1.0;
  return std::pow(r_lo, q) * std::expm1(q * std::log(r_hi / r_lo)) / q;
}

/// Radius about the pole centroid beyond which an integrand bounded by
/// C |x|^{-p} contributes less than tol: |S^{N-1}| C R^{N-p} / (p-N) < tol.
inline double truncation_radius(double p, const PoleConfiguration& cfg, double tol,
                                double asymptotic_constant = 1.0) {
  const int n = cfg.dim();
  if (!(p > n)) throw Error(ErrorKind::NonIntegrableTail, "non-integrable tail");
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tol must be positive");
  const double s = p - n;
  const double r = std::pow(sphere_area(n) * asymptotic_constant / (s * tol), 1.0 / s);
  const double floor = 2.0 * cfg.extent() + cfg.length_scale(1.0);
  return std::max(r, floor);
}

namespace detail {

// ---- 1-D Gauss–Kronrod (7/15) ---------------------------------------------

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

/// log of the radius beyond which tail integrands are treated as exactly homogeneous.
inline constexpr double kLogFarCap = 69.0;

struct HalfSpace {
  Vec normal;
  double offset; // normal . x <= offset
};

struct Plane {
  Vec normal;
  double offset; // normal . x == offset
};

/// Everything needed to integrate one convex piece along rays from `center`.
struct Piece {
  Vec center;
  bool center_is_pole = false;
  std::vector<HalfSpace> halfspaces;
  std::vector<BallDomain> balls; // points must lie inside every ball
  std::optional<Sphere> support;
  std::vector<Sphere> kink_spheres;
  std::vector<Plane> kink_planes;
  // angular frame: axis of the first hyperspherical angle and its range
  std::array<Vec, kMaxDim> frame;
  double polar_max = 0.0;
  // face-cone mode: directions parametrized by points on face `face` of
  // `face_box` (face = 2 * axis + side); -1 selects hyperspherical angles
  int face = -1;
  BoxDomain face_box;
};

struct RayContext {
  const Integrand* f;
  int dim;
  int ncomp;
  double length_scale;
  double far_radius;
  double tail_s;
  double rel_tol;
  double abs_floor;
  std::size_t* nodes;
};

struct Interval {
  double a, b;
  bool transformed; // integration variable is w = t^{-s}
  Values val, err;
  double badness;
};

inline bool ray_interval(const Piece& pc, const Vec& dir, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (const HalfSpace& h : pc.halfspaces) {
    const double nd = dot(h.normal, dir);
    const double slack = h.offset - dot(h.normal, pc.center);
    if (nd > 0.0) t1 = std::min(t1, slack / nd);
    else if (nd < 0.0) t0 = std::max(t0, slack / nd);
    else if (slack < 0.0) return false;
  }
  auto clip_ball = [&](const Vec& o, double radius) {
    const Vec oc = pc.center - o;
    const double b = dot(oc, dir);
    const double c = norm2(oc) - radius * radius;
    const double disc = b * b - c;
    if (disc <= 0.0) return false;
    const double sq = std::sqrt(disc);
    t0 = std::max(t0, -b - sq);
    t1 = std::min(t1, -b + sq);
    return true;
  };
  for (const BallDomain& bl : pc.balls)
    if (!clip_ball(bl.center, bl.radius)) return false;
  if (pc.support && !clip_ball(pc.support->center, pc.support->radius)) return false;
  return t1 > t0;
}

inline void collect_breaks(const Piece& pc, const Vec& dir, double t0, double t1,
                           std::vector<double>& br) {
  br.clear();
  for (const Plane& p : pc.kink_planes) {
    const double nd = dot(p.normal, dir);
    if (nd == 0.0) continue;
    const double t = (p.offset - dot(p.normal, pc.center)) / nd;
    if (t > t0 && t < t1) br.push_back(t);
  }
  for (const Sphere& s : pc.kink_spheres) {
    const Vec oc = pc.center - s.center;
    const double b = dot(oc, dir);
    const double c = norm2(oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc <= 0.0) continue;
    const double sq = std::sqrt(disc);
    for (double t : {-b - sq, -b + sq})
      if (t > t0 && t < t1) br.push_back(t);
  }
  std::sort(br.begin(), br.end());
}

inline void gk15(const RayContext& rc, const Piece& pc, const Vec& dir, Interval& iv) {
  const int K = rc.ncomp;
  const double half = 0.5 * (iv.b - iv.a);
  const double mid = 0.5 * (iv.a + iv.b);
  Values kr{}, ga{};
  double buf[kMaxComponents];
  auto sample = [&](double u, double* out) {
    double t, jac;
    if (iv.transformed) {
      // w = t^{-s}: t = w^{-1/s}, dt = (t / (s w)) dw
      const double logt = -std::log(u) / rc.tail_s;
      if (logt > kLogFarCap) {
        // homogeneous regime: f(t) t^{N-1} t / (s w) = f(T) T^{N+s} / s for t >= T
        const double tc = std::exp(kLogFarCap);
        Vec x = pc.center + dir * tc;
        rc.f->eval(x, out);
        const double w = std::exp((rc.dim + rc.tail_s) * kLogFarCap) / rc.tail_s;
        for (int k = 0; k < K; ++k) out[k] *= w;
        return;
      }
      t = std::exp(logt);
      jac = t / (rc.tail_s * u);
    } else {
      t = u;
      jac = 1.0;
    }
    Vec x = pc.center + dir * t;
    rc.f->eval(x, out);
    const double w = jac * std::pow(t, rc.dim - 1);
    for (int k = 0; k < K; ++k) out[k] *= w;
  };
  for (int i = 0; i < 8; ++i) {
    const double dx = half * kXgk[i];
    if (i == 7) {
      sample(mid, buf);
      for (int k = 0; k < K; ++k) {
        kr[k] += kWgk[7] * buf[k];
        ga[k] += kWg[3] * buf[k];
      }
      continue;
    }
    double lo[kMaxComponents];
    sample(mid - dx, lo);
    sample(mid + dx, buf);
    for (int k = 0; k < K; ++k) {
      const double s = lo[k] + buf[k];
      kr[k] += kWgk[i] * s;
      if (i % 2 == 1) ga[k] += kWg[i / 2] * s;
    }
  }
  *rc.nodes += 15;
  for (int k = 0; k < K; ++k) {
    iv.val[k] = kr[k] * half;
    const double e = std::abs((kr[k] - ga[k]) * half);
    // standard QUADPACK scaling of the raw Kronrod–Gauss difference
    iv.err[k] = e > 0.0 ? std::min(e, e * std::pow(200.0 * e / std::abs(iv.val[k]), 1.5)) : 0.0;
    if (!std::isfinite(iv.val[k]))
      throw Error(ErrorKind::DivergentIntegral, "divergent integral");
  }
}

/// Integral of f(center + t dir) t^{N-1} over the ray's admissible interval.
inline void integrate_ray(const RayContext& rc, const Piece& pc, const Vec& dir,
                          double* out_val, double* out_err) {
  const int K = rc.ncomp;
  for (int k = 0; k < K; ++k) out_val[k] = out_err[k] = 0.0;
  double t0, t1;
  if (!ray_interval(pc, dir, t0, t1)) return;

  thread_local std::vector<double> br;
  collect_breaks(pc, dir, t0, t1, br);
  if (pc.center_is_pole && t0 == 0.0) {
    const double first = 0.5 * rc.length_scale;
    if (first < t1) br.push_back(first);
  }
  const bool far = t1 > rc.far_radius && t0 < rc.far_radius;
  if (far) br.push_back(rc.far_radius);
  std::sort(br.begin(), br.end());

  std::vector<Interval> ivs;
  ivs.reserve(br.size() + 8);
  double a = t0;
  auto add = [&](double lo, double hi) {
    if (!(hi > lo)) return;
    const bool tail = lo >= rc.far_radius && (std::isinf(hi) || hi > 4.0 * lo);
    Interval iv{};
    if (tail) {
      iv.transformed = true;
      iv.a = std::isinf(hi) ? 0.0 : std::pow(hi, -rc.tail_s);
      iv.b = std::pow(lo, -rc.tail_s);
    } else {
      iv.transformed = false;
      iv.a = lo;
      iv.b = hi;
    }
    if (std::isinf(hi) && !tail)
      throw Error(ErrorKind::NonIntegrableTail, "non-integrable tail");
    ivs.push_back(iv);
  };
  for (double b : br) {
    if (b <= a) continue;
    add(a, b);
    a = b;
  }
  add(a, t1);

  auto badness = [&](const Interval& iv, const Values& total) {
    double m = 0.0;
    for (int k = 0; k < K; ++k) {
      const double tol = std::max(rc.abs_floor, rc.rel_tol * std::abs(total[k]));
      m = std::max(m, iv.err[k] / tol);
    }
    return m;
  };

  Values total{}, terr{};
  for (Interval& iv : ivs) {
    gk15(rc, pc, dir, iv);
    for (int k = 0; k < K; ++k) {
      total[k] += iv.val[k];
      terr[k] += iv.err[k];
    }
  }

  const double min_width = 1e-8 * rc.length_scale;
  std::vector<double> pole_history;
  constexpr int kMaxIntervals = 400;
  for (int iter = 0; iter < kMaxIntervals; ++iter) {
    bool done = true;
    for (int k = 0; k < K; ++k)
      if (terr[k] > std::max(rc.abs_floor, rc.rel_tol * std::abs(total[k]))) done = false;
    if (done) break;
    int worst = -1;
    double wb = 0.0;
    for (std::size_t i = 0; i < ivs.size(); ++i) {
      const Interval& iv = ivs[i];
      const bool splittable =
          iv.transformed ? (iv.b - iv.a) > 1e-14 * iv.b : (iv.b - iv.a) > min_width;
      if (!splittable) continue;
      const double bd = badness(iv, total);
      if (bd > wb) {
        wb = bd;
        worst = static_cast<int>(i);
      }
    }
    if (worst < 0) break;
    Interval parent = ivs[worst];
    Interval left = parent, right = parent;
    const double m = 0.5 * (parent.a + parent.b);
    left.b = m;
    right.a = m;
    gk15(rc, pc, dir, left);
    gk15(rc, pc, dir, right);
    for (int k = 0; k < K; ++k) {
      total[k] += left.val[k] + right.val[k] - parent.val[k];
      terr[k] += left.err[k] + right.err[k] - parent.err[k];
    }
    if (pc.center_is_pole && !parent.transformed && parent.a == 0.0) {
      double mag = 0.0;
      for (int k = 0; k < K; ++k) mag = std::max(mag, std::abs(left.val[k]));
      pole_history.push_back(mag);
      const std::size_t h = pole_history.size();
      if (h >= 5) {
        bool flat = true;
        for (std::size_t q = h - 4; q < h; ++q)
          if (!(pole_history[q] > 0.97 * pole_history[q - 1])) flat = false;
        if (flat && pole_history.back() > rc.abs_floor)
          throw Error(ErrorKind::DivergentIntegral, "divergent integral");
      }
    }
    ivs[worst] = left;
    ivs.push_back(right);
  }
  for (int k = 0; k < K; ++k) {
    out_val[k] = total[k];
    out_err[k] = terr[k];
  }
}

// ---- Genz–Malik rule on hyperspherical angles -----------------------------

struct Region {
  std::array<double, kMaxDim> lo{}, hi{};
  Values val{}, err{};
  int split_axis = 0;
  double badness = 0.0;
  bool operator<(const Region& o) const { return badness < o.badness; }
};

struct AngularMap {
  int n;      // ambient dimension
  int m;      // number of angles = n - 1
  const Piece* pc;

  /// Direction and Jacobian for parameters phi[0..m-1].
  double direction(const double* phi, Vec& dir) const {
    if (pc->face >= 0) return face_direction(phi, dir);
    std::array<double, kMaxDim> u{};
    double s = 1.0;
    double jac = 1.0;
    for (int k = 0; k < m - 1; ++k) {
      u[k] = s * std::cos(phi[k]);
      const double sk = std::sin(phi[k]);
      jac *= std::pow(sk, n - 2 - k);
      s *= sk;
    }
    u[m - 1] = s * std::cos(phi[m - 1]);
    u[m] = s * std::sin(phi[m - 1]);
    dir = Vec(n);
    for (int k = 0; k < n; ++k) dir += pc->frame[k] * u[k];
    return jac;
  }

  /// Point y on the face; d omega = dist(c, face) / |y - c|^N dA(y).
  double face_direction(const double* q, Vec& dir) const {
    const int axis = pc->face / 2;
    const BoxDomain& b = pc->face_box;
    Vec y(n);
    y[axis] = pc->face % 2 ? b.hi[axis] : b.lo[axis];
    for (int k = 0, p = 0; k < n; ++k)
      if (k != axis) y[k] = q[p++];
    dir = y - pc->center;
    const double r = norm(dir);
    dir *= 1.0 / r;
    return std::abs(y[axis] - pc->center[axis]) / std::pow(r, n);
  }

  /// Initial parameter regions.
  std::vector<Region> initial_regions() const {
    std::vector<Region> cur;
    auto split_at = [&](int axis, double at) {
      std::vector<Region> nxt;
      for (const Region& r : cur) {
        if (at > r.lo[axis] && at < r.hi[axis]) {
          Region a = r, b = r;
          a.hi[axis] = at;
          b.lo[axis] = at;
          nxt.push_back(a);
          nxt.push_back(b);
        } else {
          nxt.push_back(r);
        }
      }
      cur.swap(nxt);
    };
    Region r0;
    if (pc->face >= 0) {
      // face rectangle, split at the foot of the center
      const int axis = pc->face / 2;
      for (int k = 0, p = 0; k < n; ++k)
        if (k != axis) {
          r0.lo[p] = pc->face_box.lo[k];
          r0.hi[p] = pc->face_box.hi[k];
          ++p;
        }
      cur.push_back(r0);
      for (int k = 0, p = 0; k < n; ++k)
        if (k != axis) split_at(p++, pc->center[k]);
      return cur;
    }
    for (int i = 0; i < m - 1; ++i) {
      r0.lo[i] = 0.0;
      r0.hi[i] = std::numbers::pi;
    }
    r0.hi[0] = pc->polar_max;
    r0.lo[m - 1] = 0.0;
    r0.hi[m - 1] = 2.0 * std::numbers::pi;
    cur.push_back(r0);
    // polar angle in halves (full sphere only), azimuth in quarters, others in
    // halves, so coordinate planes fall on region boundaries
    if (pc->polar_max >= std::numbers::pi) split_at(0, 0.5 * std::numbers::pi);
    for (int i = 1; i < m - 1; ++i) split_at(i, 0.5 * std::numbers::pi);
    for (double a : {0.5, 1.0, 1.5}) split_at(m - 1, a * std::numbers::pi);
    return cur;
  }
};

class AngularIntegrator {
public:
  AngularIntegrator(const RayContext& rc, const Piece& pc)
      : rc_(rc), pc_(pc), map_{rc.dim, rc.dim - 1, &pc} {}

  void evaluate(Region& r) {
    const int m = map_.m;
    const int K = rc_.ncomp;
    std::array<double, kMaxDim> c{}, h{};
    double vol = 1.0;
    for (int i = 0; i < m; ++i) {
      c[i] = 0.5 * (r.lo[i] + r.hi[i]);
      h[i] = 0.5 * (r.hi[i] - r.lo[i]);
      vol *= 2.0 * h[i];
    }
    const double l2 = std::sqrt(9.0 / 70.0), l3 = std::sqrt(9.0 / 10.0),
                 l4 = std::sqrt(9.0 / 10.0), l5 = std::sqrt(9.0 / 19.0);
    const double md = m;
    const double w1 = (12824.0 - 9120.0 * md + 400.0 * md * md) / 19683.0;
    const double w2 = 980.0 / 6561.0;
    const double w3 = (1820.0 - 400.0 * md) / 19683.0;
    const double w4 = 200.0 / 19683.0;
    const double w5 = 6859.0 / 19683.0 / std::ldexp(1.0, m);
    const double v1 = (729.0 - 950.0 * md + 50.0 * md * md) / 729.0;
    const double v2 = 245.0 / 486.0;
    const double v3 = (265.0 - 100.0 * md) / 1458.0;
    const double v4 = 25.0 / 729.0;

    Values s1{}, s2{}, s3{}, s4{}, s5{}, e_rad{};
    std::array<double, kMaxComponents> f{}, fe{};
    std::array<double, kMaxDim> p{};
    auto at = [&](const std::array<double, kMaxDim>& q, double wabs) {
      Vec dir;
      const double jac = map_.direction(q.data(), dir);
      integrate_ray(rc_, pc_, dir, f.data(), fe.data());
      for (int k = 0; k < K; ++k) {
        f[k] *= jac;
        e_rad[k] += wabs * fe[k] * jac;
      }
    };
    at(c, std::abs(w1));
    Values f0{};
    for (int k = 0; k < K; ++k) f0[k] = s1[k] = f[k];

    std::array<double, kMaxDim> diff{};
    for (int i = 0; i < m; ++i) {
      Values a2{}, a3{};
      p = c;
      p[i] = c[i] - l2 * h[i];
      at(p, w2);
      for (int k = 0; k < K; ++k) a2[k] += f[k];
      p[i] = c[i] + l2 * h[i];
      at(p, w2);
      for (int k = 0; k < K; ++k) a2[k] += f[k];
      p[i] = c[i] - l3 * h[i];
      at(p, std::abs(w3));
      for (int k = 0; k < K; ++k) a3[k] += f[k];
      p[i] = c[i] + l3 * h[i];
      at(p, std::abs(w3));
      for (int k = 0; k < K; ++k) a3[k] += f[k];
      double d = 0.0;
      for (int k = 0; k < K; ++k) {
        s2[k] += a2[k];
        s3[k] += a3[k];
        const double fourth =
            std::abs(a2[k] - 2.0 * f0[k] - (9.0 / 70.0) / (9.0 / 10.0) * (a3[k] - 2.0 * f0[k]));
        d += fourth / scale_[k];
      }
      diff[i] = d * h[i];
    }
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        for (int si : {-1, 1})
          for (int sj : {-1, 1}) {
            p = c;
            p[i] = c[i] + si * l4 * h[i];
            p[j] = c[j] + sj * l4 * h[j];
            at(p, w4);
            for (int k = 0; k < K; ++k) s4[k] += f[k];
          }
    const int corners = 1 << m;
    for (int mask = 0; mask < corners; ++mask) {
      p = c;
      for (int i = 0; i < m; ++i) p[i] = c[i] + ((mask >> i) & 1 ? l5 : -l5) * h[i];
      at(p, w5);
      for (int k = 0; k < K; ++k) s5[k] += f[k];
    }
    for (int k = 0; k < K; ++k) {
      const double i7 = vol * (w1 * s1[k] + w2 * s2[k] + w3 * s3[k] + w4 * s4[k] + w5 * s5[k]);
      const double i5 = vol * (v1 * s1[k] + v2 * s2[k] + v3 * s3[k] + v4 * s4[k]);
      r.val[k] = i7;
      r.err[k] = std::abs(i7 - i5) + vol * e_rad[k];
    }
    int axis = 0;
    for (int i = 1; i < m; ++i)
      if (diff[i] > diff[axis] * (1.0 + 1e-12)) axis = i;
    if (diff[axis] == 0.0) {
      // flat in every direction: split the widest side
      for (int i = 1; i < m; ++i)
        if (r.hi[i] - r.lo[i] > r.hi[axis] - r.lo[axis]) axis = i;
    }
    r.split_axis = axis;
  }

  VectorResult run(const IntegrationOptions& opt, std::size_t budget) {
    const int K = rc_.ncomp;
    scale_.fill(1.0);
    std::vector<Region> init = map_.initial_regions();
    Values total{}, terr{};
    for (Region& r : init) {
      evaluate(r);
      for (int k = 0; k < K; ++k) {
        total[k] += r.val[k];
        terr[k] += r.err[k];
      }
    }
    for (int k = 0; k < K; ++k)
      scale_[k] = std::max({std::abs(total[k]), terr[k], opt.abs_tol / opt.rel_tol, 1e-300});
    std::priority_queue<Region> heap;
    for (Region& r : init) {
      set_badness(r);
      heap.push(r);
    }
    auto converged = [&] {
      for (int k = 0; k < K; ++k)
        if (terr[k] > std::max(opt.abs_tol, opt.rel_tol * std::abs(total[k]))) return false;
      return true;
    };
    bool ok = converged();
    while (!ok && *rc_.nodes < budget && !heap.empty()) {
      Region r = heap.top();
      heap.pop();
      Region a = r, b = r;
      const int ax = r.split_axis;
      const double mid = 0.5 * (r.lo[ax] + r.hi[ax]);
      a.hi[ax] = mid;
      b.lo[ax] = mid;
      evaluate(a);
      evaluate(b);
      for (int k = 0; k < K; ++k) {
        total[k] += a.val[k] + b.val[k] - r.val[k];
        terr[k] += a.err[k] + b.err[k] - r.err[k];
      }
      set_badness(a);
      set_badness(b);
      heap.push(a);
      heap.push(b);
      ok = converged();
    }
    VectorResult res;
    res.values.assign(total.begin(), total.begin() + K);
    res.errors.assign(terr.begin(), terr.begin() + K);
    res.converged = ok;
    if (!ok) {
      // keep the region list for the stratified fallback
      regions_.clear();
      while (!heap.empty()) {
        regions_.push_back(heap.top());
        heap.pop();
      }
    }
    return res;
  }

  /// Stratified Monte Carlo over the final region list; standard error times 3.
  VectorResult monte_carlo(std::uint64_t seed, std::size_t samples_per_region) {
    const int m = map_.m;
    const int K = rc_.ncomp;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Values total{}, var{};
    std::array<double, kMaxComponents> f{}, fe{};
    // fixed region order for reproducibility
    std::sort(regions_.begin(), regions_.end(), [](const Region& a, const Region& b) {
      for (int i = 0; i < kMaxDim; ++i) {
        if (a.lo[i] != b.lo[i]) return a.lo[i] < b.lo[i];
        if (a.hi[i] != b.hi[i]) return a.hi[i] < b.hi[i];
      }
      return false;
    });
    for (const Region& r : regions_) {
      double vol = 1.0;
      for (int i = 0; i < m; ++i) vol *= r.hi[i] - r.lo[i];
      Values mean{}, m2{};
      for (std::size_t s = 0; s < samples_per_region; ++s) {
        std::array<double, kMaxDim> q{};
        for (int i = 0; i < m; ++i) q[i] = r.lo[i] + (r.hi[i] - r.lo[i]) * uni(rng);
        Vec dir;
        const double jac = map_.direction(q.data(), dir);
        integrate_ray(rc_, pc_, dir, f.data(), fe.data());
        for (int k = 0; k < K; ++k) {
          const double v = f[k] * jac;
          const double delta = v - mean[k];
          mean[k] += delta / (s + 1.0);
          m2[k] += delta * (v - mean[k]);
        }
      }
      for (int k = 0; k < K; ++k) {
        total[k] += vol * mean[k];
        const double sv = samples_per_region > 1 ? m2[k] / (samples_per_region - 1.0) : 0.0;
        var[k] += vol * vol * sv / samples_per_region;
      }
    }
    VectorResult res;
    res.values.assign(total.begin(), total.begin() + K);
    res.errors.resize(K);
    for (int k = 0; k < K; ++k) res.errors[k] = 3.0 * std::sqrt(var[k]);
    return res;
  }

  std::size_t region_count() const { return regions_.size(); }

private:
  void set_badness(Region& r) const {
    double b = 0.0;
    for (int k = 0; k < rc_.ncomp; ++k) b = std::max(b, r.err[k] / scale_[k]);
    r.badness = b;
  }

  const RayContext& rc_;
  const Piece& pc_;
  AngularMap map_;
  Values scale_{};
  std::vector<Region> regions_;
};

// ---- decomposition into star-shaped convex pieces --------------------------

inline std::vector<HalfSpace> cell_halfspaces(const PoleConfiguration& cfg, int i,
                                              CellMode mode) {
  std::vector<HalfSpace> hs;
  const Vec& ai = cfg.pole(i);
  for (int j = 0; j < cfg.size(); ++j) {
    if (j == i) continue;
    const Vec& aj = cfg.pole(j);
    // nearest: |x-ai|^2 <= |x-aj|^2  <=>  2 x.(aj-ai) <= |aj|^2 - |ai|^2
    Vec nrm = (aj - ai) * 2.0;
    double off = norm2(aj) - norm2(ai);
    if (mode == CellMode::Farthest) {
      nrm = -nrm;
      off = -off;
    }
    hs.push_back({nrm, off});
  }
  return hs;
}

inline bool inside(const Piece& pc, const Vec& x, double slack) {
  for (const HalfSpace& h : pc.halfspaces)
    if (dot(h.normal, x) - h.offset > -slack * norm(h.normal)) return false;
  for (const BallDomain& b : pc.balls)
    if (distance(x, b.center) > b.radius - slack) return false;
  return true;
}

/// A point strictly inside the piece (without the support ball), by cyclic
/// projection onto shrunken constraint sets starting from `start`.
inline std::optional<Vec> interior_point(const Piece& pc, Vec x, double scale) {
  for (double margin : {1e-2, 1e-4, 1e-7}) {
    const double mg = margin * scale;
    Vec y = x;
    for (int it = 0; it < 2000; ++it) {
      bool moved = false;
      for (const HalfSpace& h : pc.halfspaces) {
        const double nn = norm(h.normal);
        const double viol = dot(h.normal, y) - (h.offset - mg * nn);
        if (viol > 0.0) {
          y -= h.normal * (viol / (nn * nn));
          moved = true;
        }
      }
      for (const BallDomain& b : pc.balls) {
        const double r = distance(y, b.center);
        const double lim = b.radius - mg;
        if (lim <= 0.0) return std::nullopt;
        if (r > lim) {
          y = b.center + (y - b.center) * (lim / r);
          moved = true;
        }
      }
      if (!moved) break;
    }
    if (inside(pc, y, 0.5 * mg)) return y;
  }
  return std::nullopt;
}

inline int aligned_axis(const Vec& normal) {
  int axis = -1;
  for (int k = 0; k < normal.dim; ++k)
    if (normal[k] != 0.0) {
      if (axis >= 0) return -1;
      axis = k;
    }
  return axis;
}

/// The box cut down by every axis-aligned half-space of the piece.
inline std::optional<BoxDomain> effective_box(const Piece& pc, const BoxDomain& box, int n) {
  BoxDomain e = box;
  for (const HalfSpace& hs : pc.halfspaces) {
    const int k = aligned_axis(hs.normal);
    if (k < 0) continue;
    const double bound = hs.offset / hs.normal[k];
    if (hs.normal[k] > 0.0) e.hi[k] = std::min(e.hi[k], bound);
    else e.lo[k] = std::max(e.lo[k], bound);
  }
  for (int k = 0; k < n; ++k)
    if (!(e.hi[k] > e.lo[k])) return std::nullopt;
  return e;
}

/// True when only the box faces of the piece can be exit faces: every
/// non-aligned half-space contains all box corners.
inline bool box_only(const Piece& pc, const BoxDomain& box, int n) {
  if (!pc.balls.empty()) return false;
  const int corners = 1 << n;
  for (const HalfSpace& hs : pc.halfspaces) {
    if (aligned_axis(hs.normal) >= 0) continue;
    for (int mask = 0; mask < corners; ++mask) {
      Vec x(n);
      for (int k = 0; k < n; ++k) x[k] = (mask >> k) & 1 ? box.hi[k] : box.lo[k];
      if (dot(hs.normal, x) > hs.offset) return false;
    }
  }
  return true;
}

inline void set_frame(Piece& pc, int n) {
  // identity frame, full sphere
  for (int k = 0; k < n; ++k) pc.frame[k] = Vec::unit(n, k);
  pc.polar_max = std::numbers::pi;
  if (!pc.support) return;
  const Vec to = pc.support->center - pc.center;
  const double dist = norm(to);
  if (dist <= pc.support->radius * (1.0 + 1e-12)) return;
  // axis toward the support ball, cap half-angle asin(R/dist)
  Vec e0 = to * (1.0 / dist);
  pc.frame[0] = e0;
  int filled = 1;
  for (int k = 0; k < n && filled < n; ++k) {
    Vec v = Vec::unit(n, k);
    for (int q = 0; q < filled; ++q) v -= pc.frame[q] * dot(v, pc.frame[q]);
    const double len = norm(v);
    if (len < 1e-8) continue;
    pc.frame[filled++] = v * (1.0 / len);
  }
  pc.polar_max = std::asin(std::min(1.0, pc.support->radius / dist)) * (1.0 + 1e-12);
  pc.polar_max = std::min(pc.polar_max, std::numbers::pi);
}

} // namespace detail

/// Integrates a vector-valued integrand over a domain.
inline VectorResult integrate_vector(const Integrand& f, const Domain& domain,
                                     const PoleConfiguration& cfg,
                                     const IntegrationOptions& opt = {}) {
  using namespace detail;
  if (f.components < 1 || f.components > kMaxComponents)
    throw Error(ErrorKind::InvalidArgument, "component count out of range");
  if (!(opt.rel_tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tol must be positive");
  const int n = cfg.dim();
  const int K = f.components;
  const double ell = cfg.length_scale(opt.reference_length);

  // Build the list of pieces.
  struct Base {
    std::vector<HalfSpace> hs;
    std::vector<BallDomain> balls;
    bool unbounded = false;
    Vec hint;
    std::optional<BoxDomain> box;
  };
  std::vector<Base> bases;
  std::optional<std::pair<int, CellMode>> restrict_cell;
  std::function<void(const Domain&)> expand = [&](const Domain& d) {
    std::visit(
        [&](const auto& dom) {
          using D = std::decay_t<decltype(dom)>;
          if constexpr (std::is_same_v<D, BoxDomain>) {
            Base b;
            for (int k = 0; k < n; ++k) {
              if (!(dom.hi[k] > dom.lo[k]))
                throw Error(ErrorKind::InvalidArgument, "empty box");
              b.hs.push_back({Vec::unit(n, k), dom.hi[k]});
              b.hs.push_back({-Vec::unit(n, k), -dom.lo[k]});
            }
            b.hint = (dom.lo + dom.hi) * 0.5;
            b.box = dom;
            bases.push_back(b);
          } else if constexpr (std::is_same_v<D, BallDomain>) {
            if (!(dom.radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "empty ball");
            Base b;
            b.balls.push_back(dom);
            b.hint = dom.center;
            bases.push_back(b);
          } else if constexpr (std::is_same_v<D, UnionBallsDomain>) {
            // disjoint pieces: each ball cut to its power-diagram cell
            for (std::size_t k = 0; k < dom.balls.size(); ++k) {
              const BallDomain& bk = dom.balls[k];
              if (!(bk.radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "empty ball");
              Base b;
              b.balls.push_back(bk);
              b.hint = bk.center;
              for (std::size_t j = 0; j < dom.balls.size(); ++j) {
                if (j == k) continue;
                const BallDomain& bj = dom.balls[j];
                if (bj.center == bk.center && bj.radius == bk.radius && j < k) {
                  b.balls.clear();
                  break;
                }
                b.hs.push_back({(bj.center - bk.center) * 2.0,
                                norm2(bj.center) - norm2(bk.center) - bj.radius * bj.radius +
                                    bk.radius * bk.radius});
              }
              if (!b.balls.empty()) bases.push_back(b);
            }
          } else if constexpr (std::is_same_v<D, WholeSpaceDomain>) {
            Base b;
            b.unbounded = true;
            b.hint = cfg.centroid();
            if (dom.policy == TailPolicy::Truncate) {
              // Ball(centroid, R) with the analytic tail bound in the error.
              b.unbounded = false;
              b.balls.push_back({cfg.centroid(), 0.0});
            }
            bases.push_back(b);
          } else {
            if (restrict_cell) throw Error(ErrorKind::InvalidArgument, "nested cell restriction");
            if (dom.cell < 0 || dom.cell >= cfg.size())
              throw Error(ErrorKind::InvalidArgument, "cell index out of range");
            restrict_cell = std::make_pair(dom.cell, dom.mode);
            expand(*dom.base);
          }
        },
        d);
  };
  expand(domain);

  // Truncation policy: pick R from the decay and an asymptotic constant probe.
  double tail_error = 0.0;
  for (Base& b : bases) {
    for (BallDomain& bl : b.balls) {
      if (bl.radius != 0.0) continue;
      if (!(f.decay > n)) throw Error(ErrorKind::NonIntegrableTail, "non-integrable tail");
      const double r0 = 2.0 * cfg.extent() + 4.0 * ell;
      double c = 0.0;
      std::vector<double> buf(K);
      for (int k = 0; k < n; ++k)
        for (double sgn : {-1.0, 1.0}) {
          f.eval(cfg.centroid() + Vec::unit(n, k) * (sgn * r0), buf.data());
          for (double v : buf) c = std::max(c, std::abs(v) * std::pow(r0, f.decay));
        }
      c = std::max(c, 1e-300);
      const double tol = std::max(opt.abs_tol, 0.1 * opt.rel_tol * c);
      bl.radius = truncation_radius(f.decay, cfg, tol, c);
      const double s = f.decay - n;
      tail_error = std::max(tail_error, sphere_area(n) * c * std::pow(bl.radius, -s) / s);
    }
  }

  std::vector<Piece> pieces;
  for (const Base& b : bases) {
    for (int i = 0; i < cfg.size(); ++i) {
      if (restrict_cell && restrict_cell->second == CellMode::Nearest &&
          restrict_cell->first != i)
        continue;
      Piece pc;
      pc.halfspaces = b.hs;
      pc.balls = b.balls;
      auto cell = cell_halfspaces(cfg, i, CellMode::Nearest);
      pc.halfspaces.insert(pc.halfspaces.end(), cell.begin(), cell.end());
      if (restrict_cell && restrict_cell->second == CellMode::Farthest) {
        auto far = cell_halfspaces(cfg, restrict_cell->first, CellMode::Farthest);
        pc.halfspaces.insert(pc.halfspaces.end(), far.begin(), far.end());
      }
      pc.support = f.locus.support;
      pc.kink_spheres = f.locus.kink_spheres;
      if (f.locus.kinks_on_ties)
        for (int a = 0; a < cfg.size(); ++a)
          for (int c = a + 1; c < cfg.size(); ++c) {
            const Vec& pa = cfg.pole(a);
            const Vec& pb = cfg.pole(c);
            pc.kink_planes.push_back({(pb - pa) * 2.0, norm2(pb) - norm2(pa)});
          }
      const Vec& ai = cfg.pole(i);
      // The pole is the center when it lies in the closed piece.
      if (inside(pc, ai, -1e-12 * ell)) {
        pc.center = ai;
        pc.center_is_pole = true;
      } else {
        Vec start = b.hint;
        if (b.unbounded) start = ai;
        auto ip = interior_point(pc, start, std::max(ell, 1e-300));
        if (!ip) {
          // try from the pole: the piece might sit next to it
          ip = interior_point(pc, ai, std::max(ell, 1e-300));
        }
        if (!ip) continue;
        pc.center = *ip;
      }
      set_frame(pc, n);
      std::optional<BoxDomain> eff = b.box ? effective_box(pc, *b.box, n) : std::nullopt;
      if (eff && box_only(pc, *eff, n) &&
          (!pc.support || pc.polar_max >= std::numbers::pi)) {
        // one cone per box face, each parametrized by the face rectangle
        for (int f = 0; f < 2 * n; ++f) {
          const int axis = f / 2;
          const double plane = f % 2 ? eff->hi[axis] : eff->lo[axis];
          if (!(std::abs(plane - pc.center[axis]) > 0.0)) continue;
          Piece fc = pc;
          fc.face = f;
          fc.face_box = *eff;
          pieces.push_back(std::move(fc));
        }
        continue;
      }
      pieces.push_back(std::move(pc));
    }
  }

  std::size_t nodes = 0;
  RayContext rc;
  rc.f = &f;
  rc.dim = n;
  rc.ncomp = K;
  rc.length_scale = ell;
  rc.far_radius = 8.0 * (cfg.extent() + ell);
  rc.tail_s = std::isfinite(f.decay) ? f.decay - n : 2.0;
  if (!(rc.tail_s > 0.0)) {
    bool any_unbounded = false;
    for (const Base& b : bases) any_unbounded |= b.unbounded;
    if (any_unbounded && !f.locus.support)
      throw Error(ErrorKind::NonIntegrableTail, "non-integrable tail");
    rc.tail_s = 2.0;
  }
  rc.rel_tol = std::max(1e-13, 0.02 * opt.rel_tol);
  rc.abs_floor = std::max(1e-300, 1e-3 * opt.abs_tol);
  rc.nodes = &nodes;

  VectorResult out;
  out.values.assign(K, 0.0);
  out.errors.assign(K, 0.0);
  out.converged = true;
  // Equal share of the budget per piece, with leftovers carried forward.
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const std::size_t remaining_pieces = pieces.size() - p;
    const std::size_t budget =
        nodes + (opt.max_nodes > nodes ? (opt.max_nodes - nodes) / remaining_pieces : 0);
    AngularIntegrator ai(rc, pieces[p]);
    VectorResult r = ai.run(opt, budget);
    if (!r.converged) {
      const std::size_t per = 64;
      VectorResult mc = ai.monte_carlo(opt.seed + p, per);
      double gm = 0.0, mcs = 0.0;
      for (int k = 0; k < K; ++k) {
        gm += r.errors[k];
        mcs += mc.errors[k];
      }
      if (mcs < gm) {
        r.values = mc.values;
        r.errors = mc.errors;
      }
    }
    for (int k = 0; k < K; ++k) {
      out.values[k] += r.values[k];
      out.errors[k] += r.errors[k];
    }
  }
  for (int k = 0; k < K; ++k) out.errors[k] += tail_error;
  out.nodes = nodes;
  for (int k = 0; k < K; ++k)
    if (out.errors[k] > std::max(opt.abs_tol, opt.rel_tol * std::abs(out.values[k])))
      out.converged = false;
  if (!out.converged && opt.throw_on_budget) throw ToleranceNotReached(out);
  return out;
}

/// Scalar integral with value, error estimate and node count.
inline QuadratureResult integrate(const Integrand& f, const Domain& domain,
                                  const PoleConfiguration& cfg,
                                  const IntegrationOptions& opt = {}) {
  if (f.components != 1)
    throw Error(ErrorKind::InvalidArgument, "scalar integrate needs one component");
  return integrate_vector(f, domain, cfg, opt).component(0);
}

template <class F>
QuadratureResult integrate(F&& fn, const Domain& domain, const PoleConfiguration& cfg,
                           double tol) {
  IntegrationOptions opt;
  opt.rel_tol = tol;
  return integrate(scalar_integrand(std::forward<F>(fn)), domain, cfg, opt);
}

} // namespace hardylab

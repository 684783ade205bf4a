// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "hardylab/cli.hpp"
#include "hardylab/functionals.hpp"
#include "hardylab/spectral.hpp"

#include <chrono>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

using namespace hardylab;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
  bool pass;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double potential_at(const PoleConfiguration& c, PotentialFamily f, const Vec& x) {
  return PotentialSpec(c, std::move(f)).eval(x);
}

Vec random_point(std::mt19937_64& rng, int N, double spread) {
  std::normal_distribution<double> g(0.0, spread);
  Vec x(N);
  for (int k = 0; k < N; ++k) x[k] = g(rng);
  return x;
}

PoleConfiguration random_config(std::mt19937_64& rng, int N, int n) {
  std::uniform_real_distribution<double> w(0.05, 1.0);
  for (;;) {
    std::vector<Vec> poles;
    std::vector<double> ws;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      poles.push_back(random_point(rng, N, 1.0));
      ws.push_back(w(rng));
      sum += ws.back();
    }
    for (double& x : ws) x /= sum;
    if (n > 1 && min_pairwise_distance(poles) < 0.1) continue;
    return {N, std::move(poles), std::move(ws)};
  }
}

// 1: power-mean properties over random samples
Verdict potential_properties() {
  std::mt19937_64 rng(0xA4D1);
  const int dims[] = {3, 4, 5};
  const int counts[] = {1, 2, 3, 5};
  const double lambdas[] = {-8.0, -2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0, 8.0};
  int bad_order = 0, bad_sandwich = 0, bad_limit = 0, bad_dipole = 0;
  double worst_limit = 0.0, worst_dipole = 0.0;
  for (int s = 0; s < 10000; ++s) {
    const int N = dims[s % 3];
    const int n = counts[(s / 3) % 4];
    const PoleConfiguration c = random_config(rng, N, n);
    Vec x = random_point(rng, N, 1.5);
    const double lo = potential_at(c, family::MinInverseSquare{}, x);
    const double hi = potential_at(c, family::MaxInverseSquare{}, x);
    const double geo = potential_at(c, family::GeometricMean{}, x);
    double prev = lo;
    for (double l : lambdas) {
      const double v = potential_at(c, family::PowerMean{l}, x);
      if (l > 0.0 && prev < geo) prev = geo;
      if (v < prev * (1.0 - 1e-12)) ++bad_order;
      if (v < lo * (1.0 - 1e-12) || v > hi * (1.0 + 1e-12)) ++bad_sandwich;
      prev = v;
    }
    if (geo < lo * (1.0 - 1e-12) || geo > hi * (1.0 + 1e-12)) ++bad_sandwich;
    for (double l : {1e-9, -1e-9}) {
      const double e = std::abs(potential_at(c, family::PowerMean{l}, x) - geo) / geo;
      worst_limit = std::max(worst_limit, e);
      if (!(e < 1e-6)) ++bad_limit;
    }
    if (n >= 2) {
      const int i = s % n, j = (s + 1) % n;
      const auto [a, b] = dipole_form(c, x, i, j);
      const double e = std::abs(a - b) / std::abs(a);
      worst_dipole = std::max(worst_dipole, e);
      if (!(e < 1e-12)) ++bad_dipole;
    }
  }
  std::ostringstream os;
  os << "10000 samples; order violations " << bad_order << ", sandwich " << bad_sandwich
     << ", lambda->0 worst " << num(worst_limit) << ", dipole worst " << num(worst_dipole);
  return {bad_order == 0 && bad_sandwich == 0 && bad_limit == 0 && bad_dipole == 0, os.str()};
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

// 2: ground-state closed forms against finite differences
Verdict ground_state_forms() {
  std::mt19937_64 rng(0xA4D2);
  int bad_lap = 0, bad_grad = 0, done = 0;
  double worst_lap = 0.0, worst_grad = 0.0;
  while (done < 1000) {
    const int N = 3 + done % 3;
    const int n = 1 + done % 4;
    const bool is_max = (done / 2) % 2 == 0;
    auto c = std::make_shared<const PoleConfiguration>(random_config(rng, N, n));
    const ScalarField phi(c, is_max ? FieldKind{kind::GroundStateMax{}} : FieldKind{kind::GroundStateMin{}});
    const Vec x = random_point(rng, N, 1.5);
    double near = std::numeric_limits<double>::infinity();
    for (const Vec& a : c->poles()) near = std::min(near, distance(x, a));
    const double tie = distance_to_tie_set(x, *c, is_max ? CellMode::Nearest : CellMode::Farthest);
    if (near < 0.1 || tie < 0.02) continue;
    const double scale = std::min(near, 1.0);
    const double v = phi.eval(x);
    const double want =
        hardy_constant(N) * potential_at(*c, is_max ? PotentialFamily{family::MaxInverseSquare{}}
                                             : PotentialFamily{family::MinInverseSquare{}},
                                 x);
    const double el = std::abs(-fd_laplacian(phi, x, 1e-3 * scale) / v - want) / want;
    worst_lap = std::max(worst_lap, el);
    if (!(el <= 1e-3)) ++bad_lap;
    const Vec g = phi.gradient(x);
    const double h = 1e-4 * scale;
    double diff = 0.0;
    for (int k = 0; k < N; ++k) {
      Vec p = x, m = x;
      p[k] += h;
      m[k] -= h;
      const double fd = (phi.eval(p) - phi.eval(m)) / (2.0 * h);
      diff = std::max(diff, std::abs(fd - g[k]));
    }
    const double eg = diff / norm(g);
    worst_grad = std::max(worst_grad, eg);
    if (!(eg <= 1e-5)) ++bad_grad;
    ++done;
  }
  std::ostringstream os;
  os << "1000 points; laplacian worst rel " << num(worst_lap) << ", gradient worst rel " << num(worst_grad);
  return {bad_lap == 0 && bad_grad == 0, os.str()};
}

// 3: identity residuals for bumps inside one branch
Verdict identity_residuals() {
  std::mt19937_64 rng(0xA4D3);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  IntegrationOptions opt;
  opt.rel_tol = 1e-4;
  int cases = 0, bad = 0;
  double worst = 0.0;
  for (int n = 1; n <= 3; ++n) {
    auto c = std::make_shared<const PoleConfiguration>(random_config(rng, 3, n));
    for (int gs = 0; gs < 2; ++gs) {
      const bool is_max = gs == 0;
      const ScalarField phi(c, is_max ? FieldKind{kind::GroundStateMax{}} : FieldKind{kind::GroundStateMin{}});
      const CellMode mode = is_max ? CellMode::Nearest : CellMode::Farthest;
      for (int b = 0; b < 2; ++b) {
        Vec x(3);
        double r = 0.0;
        do {
          x = c->pole(b % n) + random_point(rng, 3, 0.3);
          r = std::min(0.8, distance_to_tie_set(x, *c, mode)) * (0.5 + 0.4 * uni(rng));
        } while (!(r > 0.05));
        const ScalarField u(c, kind::Bump{x, r});
        for (double a : {1.0, 0.0, 0.5, 2.0}) {
          const auto res = hardy_identity_residual(u, phi, WholeSpaceDomain{}, a, opt);
          ++cases;
          worst = std::max(worst, res.residual / res.error);
          if (!(res.residual <= 3.0 * res.error)) ++bad;
        }
      }
    }
  }
  std::ostringstream os;
  os << cases << " cases; worst residual/error " << num(worst) << ", violations " << bad;
  return {bad == 0, os.str()};
}

// 4: minimizing sequences and the closed-form cross-check
Verdict sharpness() {
  auto c = std::make_shared<const PoleConfiguration>(3, std::vector<Vec>{Vec{0, 0, 0}, Vec{1, 0, 0}});
  IntegrationOptions opt;
  opt.rel_tol = 1e-6;
  const std::vector<double> schedule{0.2, 0.1, 0.05, 0.02, 0.01};
  std::ostringstream os;
  bool ok = true;
  for (const auto& [name, fam] : {std::pair<const char*, PotentialFamily>{"max", family::MaxInverseSquare{}},
                                  std::pair<const char*, PotentialFamily>{"min", family::MinInverseSquare{}}}) {
    const auto rep = sharpness_sweep(PotentialSpec(c, fam), schedule, opt);
    const bool within = std::abs(rep.fit.limit - rep.reference) <= 0.05 * rep.reference;
    const bool good = rep.strictly_decreasing && rep.fit.r_squared >= 0.98 && within;
    ok = ok && good;
    os << name << ": Q(0.01) " << num(rep.records.back().quotient) << ", decreasing "
       << (rep.strictly_decreasing ? "yes" : "no") << ", R^2 " << num(rep.fit.r_squared) << ", limit "
       << num(rep.fit.limit) << (good ? "" : " [fail]") << "; ";
  }
  const double v = sweep_closed_form(2, 3, 1e-3);
  const double lim = sweep_closed_form_limit(2, 3);
  const bool cf = std::abs(v - lim) <= 0.01 * lim;
  ok = ok && cf;
  os << "closed form ratio at 1e-3 " << num(v / lim) << (cf ? "" : " [fail]");
  return {ok, os.str()};
}

// 5: inequality audits over seeded bumps
Verdict audits() {
  auto c = std::make_shared<const PoleConfiguration>(
      3, std::vector<Vec>{Vec{0.3, 0.45, 0.5}, Vec{0.7, 0.5, 0.45}, Vec{0.5, 0.75, 0.55}});
  const Domain omega = BoxDomain{Vec{0, 0, 0}, Vec{1, 1, 1}};
  const auto bumps = cli::bump_corpus(c, 50, cli::kDefaultSeed, omega);
  IntegrationOptions opt;
  opt.rel_tol = 1e-5;
  std::vector<std::pair<InequalityId, AuditParams>> cases;
  AuditParams base;
  base.k_n = kPi * kPi;
  base.q = 2.0;
  base.omega = omega;
  for (const auto& [id, name] : kInequalityNames) {
    if (id == InequalityId::C2_3) {
      for (double l : {-1.0, 0.0, 1.0, 2.0}) {
        AuditParams p = base;
        p.lambda = l;
        cases.emplace_back(id, p);
      }
    } else {
      cases.emplace_back(id, base);
    }
  }
  int total = 0, bad = 0;
  double worst = std::numeric_limits<double>::infinity();
  std::string worst_case;
  for (std::size_t b = 0; b < bumps.size(); ++b) {
    for (const auto& [id, p] : cases) {
      AuditParams q = p;
      if (id != InequalityId::T4_1 && id != InequalityId::T4_2) q.omega.reset();
      const AuditReport r = inequality_audit(bumps[b], id, q, opt);
      ++total;
      if (!r.pass) ++bad;
      const double slack = r.margin / std::max(r.rhs, 1e-300);
      if (slack < worst) {
        worst = slack;
        worst_case = std::string(to_string(id)) + " on bump" + std::to_string(b);
      }
    }
  }
  std::ostringstream os;
  os << total << " audits over " << bumps.size() << " bumps; failures " << bad << ", tightest margin/rhs "
     << num(worst) << " (" << worst_case << ")";
  return {bad == 0, os.str()};
}

// 6: Heisenberg product
Verdict heisenberg() {
  IntegrationOptions opt;
  opt.rel_tol = 1e-8;
  auto one = std::make_shared<const PoleConfiguration>(3, std::vector<Vec>{Vec{0, 0, 0}});
  const ScalarField g(one, kind::Gaussian{Vec{0, 0, 0}, 1.0});
  const double p = heisenberg_product(g, 1.0, BallDomain{Vec{0, 0, 0}, 8.0}, opt);
  const bool near = std::abs(p - 2.25) <= 0.005 * 2.25;
  std::mt19937_64 rng(0xA4D6);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  opt.rel_tol = 1e-5;
  double pmin = std::numeric_limits<double>::infinity();
  int samples = 0;
  for (int s = 0; s < 24; ++s) {
    auto c = std::make_shared<const PoleConfiguration>(random_config(rng, 3, 1 + s % 3));
    const Vec centre = c->centroid() + random_point(rng, 3, 0.5);
    const ScalarField u = s % 2 == 0 ? ScalarField(c, kind::Gaussian{centre, 0.3 + uni(rng)})
                                     : ScalarField(c, kind::Bump{centre, 0.5 + 1.5 * uni(rng)});
    for (double lambda : {-1.0, 1.0, 2.0}) {
      pmin = std::min(pmin, heisenberg_product(u, lambda, WholeSpaceDomain{}, opt));
      ++samples;
    }
  }
  const bool bound = pmin >= 0.25;
  std::ostringstream os;
  os << "truncated Gaussian " << num(p) << " versus 2.25; min of " << samples << " sampled products "
     << num(pmin);
  return {near && bound, os.str()};
}

// 7: grid eigenvalues
Verdict spectral() {
  const BoxDomain cube{Vec{0, 0, 0}, Vec{1, 1, 1}};
  const std::vector<double> hs{1.0 / 16, 1.0 / 32, 1.0 / 64};
  std::vector<double> mus;
  for (double h : hs) mus.push_back(min_generalized_eig(assemble_laplacian(cube, h)).mu);
  const double lap = richardson(hs[1], mus[1], hs[2], mus[2]);
  const double exact = 3 * kPi * kPi;
  const bool lap_ok = std::abs(lap - exact) <= 0.01 * exact;

  auto c = std::make_shared<const PoleConfiguration>(
      3, std::vector<Vec>{Vec{0.25, 0.5, 0.5}, Vec{0.75, 0.5, 0.5}});
  const auto rep = best_constant_estimate(cube, PotentialSpec(c, family::SumInverseSquare{}), hs);

  const auto recs = shrinking_balls_study(*c, {0.2, 0.1, 0.05, 0.025, 0.0125}, 16);
  bool increasing = true, toward = true;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    increasing = increasing && recs[i].estimate.mu > recs[i - 1].estimate.mu;
    toward = toward && std::abs(recs[i].estimate.mu - 0.25) <= std::abs(recs[i - 1].estimate.mu - 0.25);
  }
  const double final_mu = recs.back().estimate.mu;
  const bool final_ok = final_mu >= 0.25 - 0.03;
  const bool shrink_ok = increasing && toward && final_ok;

  std::ostringstream os;
  os << "laplacian " << num(lap) << " versus " << num(exact) << (lap_ok ? "" : " [fail]") << "; V_* mu_hat "
     << num(rep.extrapolated) << " +- " << num(rep.margin) << " versus (0.125, 0.25]"
     << (rep.in_range ? "" : " [fail]") << "; shrinking balls";
  for (const auto& r : recs) os << " " << num(r.estimate.mu);
  os << ", increasing " << (increasing ? "yes" : "no") << ", toward 0.25 " << (toward ? "yes" : "no")
     << ", final >= 0.22 " << (final_ok ? "yes" : "no") << (shrink_ok ? "" : " [fail]");
  return {lap_ok && rep.in_range && shrink_ok, os.str()};
}

// 8: unit-disk eigenvalue two ways
Verdict disk() {
  const double target = 5.78319;
  const double a = disk_eigenvalue_oracle();
  const double b = disk_eigenvalue_grid(0.01);
  const bool ok = std::abs(a - target) <= 1e-3 * target && std::abs(b - target) <= 1e-3 * target;
  return {ok, "bisection " + num(a) + ", grid " + num(b) + " versus 5.78319"};
}

} // namespace

int main() {
  using Check = Verdict (*)();
  const std::pair<const char*, Check> checks[] = {
      {"potential properties", potential_properties},
      {"ground-state closed forms", ground_state_forms},
      {"identity residuals", identity_residuals},
      {"sharpness sweeps", sharpness},
      {"inequality audits", audits},
      {"Heisenberg product", heisenberg},
      {"spectral estimates", spectral},
      {"disk eigenvalue", disk},
  };
  int failed = 0;
  for (std::size_t i = 0; i < std::size(checks); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = checks[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) ++failed;
    std::printf("%s %zu %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", i + 1, checks[i].first, v.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", std::size(checks) - failed, std::size(checks));
  return failed == 0 ? 0 : 1;
}

#pragma once

#include "hardylab/fields.hpp"
#include "hardylab/potentials.hpp"
#include "hardylab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hardylab {

/// First Dirichlet eigenvalue of the unit disk, j_{0,1}^2.
inline constexpr double kDiskEigenvalue = 5.783185962946784;

namespace detail {

/// One pointwise term of a vector integrand, built from x and the jet of u.
struct Term {
  std::function<double(const Vec&, const Jet&)> f;
  /// Decay exponent of the term at infinity.
  double decay;
};

inline double potential_decay(const PotentialSpec& v) {
  return static_cast<double>(decay_exponent(v));
}

inline void merge_locus(SingularLocus& into, const SingularLocus& from) {
  into.singular_at_poles |= from.singular_at_poles;
  into.kinks_on_ties |= from.kinks_on_ties;
  into.kink_spheres.insert(into.kink_spheres.end(), from.kink_spheres.begin(),
                           from.kink_spheres.end());
}

inline SingularLocus potential_locus(const PotentialSpec& v) {
  SingularLocus loc;
  loc.singular_at_poles = !v.regular_at_poles();
  loc.kinks_on_ties = v.branches_on_ties() && v.config().size() > 1;
  return loc;
}

/// Integrates every term in one pass; u's support (if any) bounds the domain.
inline VectorResult integrate_terms(const ScalarField& u, const std::vector<Term>& terms,
                                    const SingularLocus& extra, bool with_laplacian,
                                    const Domain& dom, const IntegrationOptions& opt) {
  if (terms.empty() || terms.size() > static_cast<std::size_t>(kMaxComponents))
    throw Error(ErrorKind::InvalidArgument, "term count out of range");
  Integrand g;
  g.components = static_cast<int>(terms.size());
  g.locus = u.locus();
  merge_locus(g.locus, extra);
  if (extra.support && !g.locus.support) g.locus.support = extra.support;
  g.decay = std::numeric_limits<double>::infinity();
  for (const Term& t : terms) g.decay = std::min(g.decay, t.decay);
  g.eval = [&u, &terms, with_laplacian](const Vec& x, double* out) {
    const Jet j = u.jet_unchecked(x, with_laplacian);
    for (std::size_t k = 0; k < terms.size(); ++k) out[k] = terms[k].f(x, j);
  };
  return integrate_vector(g, dom, u.config(), opt);
}

inline Term gradient_term(const ScalarField& u) {
  return {[](const Vec&, const Jet& j) { return norm2(j.grad); },
          2.0 * (u.decay_exponent() + 1.0)};
}
inline Term mass_term(const ScalarField& u) {
  return {[](const Vec&, const Jet& j) { return j.value * j.value; }, 2.0 * u.decay_exponent()};
}
inline Term weighted_term(const ScalarField& u, const PotentialSpec& v) {
  return {[&v](const Vec& x, const Jet& j) { return v.eval(x) * j.value * j.value; },
          potential_decay(v) + 2.0 * u.decay_exponent()};
}

inline IntegrationOptions with_tol(IntegrationOptions opt, double tol) {
  opt.rel_tol = tol;
  return opt;
}

} // namespace detail

/// Integral of |grad u|^2 over the domain.
inline QuadratureResult dirichlet_energy(const ScalarField& u, const Domain& dom,
                                         const IntegrationOptions& opt = {}) {
  std::vector<detail::Term> t{detail::gradient_term(u)};
  return detail::integrate_terms(u, t, {}, false, dom, opt).component(0);
}
inline QuadratureResult dirichlet_energy(const ScalarField& u, const Domain& dom, double tol) {
  return dirichlet_energy(u, dom, detail::with_tol({}, tol));
}

/// Integral of V |u|^2 over the domain.
inline QuadratureResult potential_energy(const ScalarField& u, const PotentialSpec& v,
                                         const Domain& dom, const IntegrationOptions& opt = {}) {
  std::vector<detail::Term> t{detail::weighted_term(u, v)};
  return detail::integrate_terms(u, t, detail::potential_locus(v), false, dom, opt).component(0);
}
inline QuadratureResult potential_energy(const ScalarField& u, const PotentialSpec& v,
                                         const Domain& dom, double tol) {
  return potential_energy(u, v, dom, detail::with_tol({}, tol));
}

/// Numerator, denominator and their ratio.
struct QuotientResult {
  double value;
  QuadratureResult numerator;
  QuadratureResult denominator;
  /// First-order propagated error of the ratio.
  double error() const {
    return std::abs(value) * (numerator.error_estimate / std::abs(numerator.value) +
                              denominator.error_estimate / std::abs(denominator.value));
  }
};

inline QuotientResult rayleigh_quotient_detail(const ScalarField& u, const PotentialSpec& v,
                                               const Domain& dom,
                                               const IntegrationOptions& opt = {}) {
  std::vector<detail::Term> t{detail::gradient_term(u), detail::weighted_term(u, v)};
  VectorResult r = detail::integrate_terms(u, t, detail::potential_locus(v), false, dom, opt);
  if (!(r.values[1] > 0.0)) throw Error(ErrorKind::DegenerateQuotient, "degenerate quotient");
  return {r.values[0] / r.values[1], r.component(0), r.component(1)};
}

/// Dirichlet energy over potential energy.
inline double rayleigh_quotient(const ScalarField& u, const PotentialSpec& v, const Domain& dom,
                                const IntegrationOptions& opt = {}) {
  return rayleigh_quotient_detail(u, v, dom, opt).value;
}
inline double rayleigh_quotient(const ScalarField& u, const PotentialSpec& v, const Domain& dom,
                                double tol) {
  return rayleigh_quotient(u, v, dom, detail::with_tol({}, tol));
}

struct IdentityResidual {
  double lhs;
  double rhs;
  double residual;
  /// Summed quadrature error of all integrals entering lhs and rhs.
  double error;
};

/// |LHS - RHS| of
///   int |grad u|^2 + a int (lap phi/phi) u^2 + a(a-1) int |grad phi|^2/phi^2 u^2
///     = int |grad(u phi^{-a})|^2 phi^{2a},
/// with lap phi the pointwise Laplacian of the active branch.
inline IdentityResidual hardy_identity_residual(const ScalarField& u, const ScalarField& phi,
                                                const Domain& dom, double alpha,
                                                const IntegrationOptions& opt = {}) {
  // phi jets are evaluated inside the terms; u's jet is shared.
  auto phi_ratio = [&phi](const Vec& x, Vec& g_over, double& lap_over) {
    const Jet p = phi.jet_unchecked(x, true);
    if (!(p.value > 0.0) || !std::isfinite(p.value))
      throw Error(ErrorKind::InvalidGroundState, "invalid ground state");
    g_over = p.grad * (1.0 / p.value);
    lap_over = p.laplacian / p.value;
  };
  const double du = u.decay_exponent();
  std::vector<detail::Term> t;
  t.push_back(detail::gradient_term(u));
  t.push_back({[&](const Vec& x, const Jet& j) {
                 if (j.value == 0.0) return 0.0;
                 Vec g;
                 double l;
                 phi_ratio(x, g, l);
                 return l * j.value * j.value;
               },
               2.0 * du + 2.0});
  t.push_back({[&](const Vec& x, const Jet& j) {
                 if (j.value == 0.0) return 0.0;
                 Vec g;
                 double l;
                 phi_ratio(x, g, l);
                 return norm2(g) * j.value * j.value;
               },
               2.0 * du + 2.0});
  t.push_back({[&, alpha](const Vec& x, const Jet& j) {
                 if (j.value == 0.0) return norm2(j.grad);
                 Vec g;
                 double l;
                 phi_ratio(x, g, l);
                 // |grad(u phi^-a)|^2 phi^{2a} = |grad u - a u grad phi / phi|^2
                 return norm2(j.grad - g * (alpha * j.value));
               },
               2.0 * du + 2.0});
  SingularLocus extra = phi.locus();
  extra.support.reset();
  VectorResult r = detail::integrate_terms(u, t, extra, false, dom, opt);
  const double a = alpha;
  const double lhs = r.values[0] + a * r.values[1] + a * (a - 1.0) * r.values[2];
  const double rhs = r.values[3];
  const double err = r.errors[0] + std::abs(a) * r.errors[1] +
                     std::abs(a * (a - 1.0)) * r.errors[2] + r.errors[3];
  return {lhs, rhs, std::abs(lhs - rhs), err};
}

// ---- sharpness sweeps ------------------------------------------------------

struct SweepRecord {
  double eps;
  double quotient;
  QuadratureResult numerator;
  QuadratureResult denominator;
};

/// Ordinary least squares of quotient against 1/log(1/eps).
struct SweepFit {
  /// Slope: excess ~ c / log(1/eps).
  double c;
  /// Intercept: the extrapolated eps -> 0 limit.
  double limit;
  double r_squared;
};

struct SweepReport {
  std::vector<SweepRecord> records;
  SweepFit fit;
  /// (N-2)^2/4, the value the quotients are compared against.
  double reference;
  bool strictly_decreasing;
};

inline SweepFit least_squares_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error(ErrorKind::InvalidArgument, "fit needs >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::InvalidArgument, "fit abscissae are constant");
  const double slope = sxy / sxx;
  const double icept = my - slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (icept + slope * x[i]);
    ssr += e * e;
  }
  const double r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return {slope, icept, r2};
}

/// Quotients of the minimizing sequence u_eps against V_{+inf} (max variant)
/// or V_{-inf} (min variant) over the whole space.
inline SweepReport sharpness_sweep(const PotentialSpec& v, const std::vector<double>& schedule,
                                   const IntegrationOptions& opt = {}) {
  const bool is_max = std::holds_alternative<family::MaxInverseSquare>(v.family());
  const bool is_min = std::holds_alternative<family::MinInverseSquare>(v.family());
  if (!is_max && !is_min)
    throw Error(ErrorKind::InvalidArgument, "sweep needs MaxInverseSquare or MinInverseSquare");
  const auto cfg = v.config_ptr();
  const double cap = std::min(0.5, 0.5 * cfg->min_separation());
  if (schedule.size() < 2) throw Error(ErrorKind::InvalidArgument, "schedule needs >= 2 values");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0 && schedule[i] < cap))
      throw Error(ErrorKind::InvalidArgument, "eps outside (0, min(1/2, d/2))");
    if (i > 0 && !(schedule[i] < schedule[i - 1]))
      throw Error(ErrorKind::InvalidArgument, "schedule must be decreasing");
  }
  SweepReport rep;
  rep.reference = hardy_constant(cfg->dim());
  std::vector<double> xs, ys;
  for (double eps : schedule) {
    const ScalarField u =
        make_minimizer(cfg, eps, is_max ? MinimizerVariant::Max : MinimizerVariant::Min);
    QuotientResult q = rayleigh_quotient_detail(u, v, WholeSpaceDomain{}, opt);
    rep.records.push_back({eps, q.value, q.numerator, q.denominator});
    xs.push_back(1.0 / std::log(1.0 / eps));
    ys.push_back(q.value);
  }
  rep.fit = least_squares_fit(xs, ys);
  rep.strictly_decreasing = true;
  for (std::size_t i = 1; i < rep.records.size(); ++i)
    if (!(rep.records[i].quotient < rep.records[i - 1].quotient)) rep.strictly_decreasing = false;
  return rep;
}

/// The closed-form cellwise ratio
///   2 n S_N ((eps^{-4eps} - eps^{-2eps}) / (2 eps log(1/eps)) + eps^{1-4eps}/2)
/// built from the radial integrals of the cutoff minimizer, and its eps -> 0 limit.
inline double sweep_closed_form(int n_poles, int dim, double eps) {
  const double L = std::log(1.0 / eps);
  const double inner = integrate_radial(-2.0 * eps - 1.0, eps * eps, eps) / L +
                       0.5 * std::pow(eps, 1.0 - 4.0 * eps);
  return 2.0 * n_poles * sphere_area(dim) * inner;
}
inline double sweep_closed_form_limit(int n_poles, int dim) {
  // (eps^{-4eps} - eps^{-2eps}) / (2 eps log(1/eps)) -> 1, eps^{1-4eps}/2 -> 0
  return 2.0 * n_poles * sphere_area(dim);
}

// ---- Heisenberg product ----------------------------------------------------

struct HeisenbergResult {
  double product;
  QuadratureResult gradient;
  QuadratureResult weighted;
  QuadratureResult mass;
  double error() const {
    return std::abs(product) *
           (gradient.error_estimate / std::abs(gradient.value) +
            weighted.error_estimate / std::abs(weighted.value) +
            2.0 * mass.error_estimate / std::abs(mass.value));
  }
};

/// (int |grad u|^2)(int W_lambda |u|^2) / (int |u|^2)^2 with
/// W_lambda = (sum_i alpha_i |x-a_i|^{2 lambda})^{1/lambda}.
inline HeisenbergResult heisenberg_product_detail(const ScalarField& u, double lambda,
                                                  const Domain& dom,
                                                  const IntegrationOptions& opt = {}) {
  const PotentialSpec w(u.config_ptr(), family::HeisenbergWeight{lambda});
  std::vector<detail::Term> t{detail::gradient_term(u), detail::weighted_term(u, w),
                              detail::mass_term(u)};
  VectorResult r = detail::integrate_terms(u, t, {}, false, dom, opt);
  if (!(r.values[2] > 0.0)) throw Error(ErrorKind::DegenerateQuotient, "degenerate quotient");
  return {r.values[0] * r.values[1] / (r.values[2] * r.values[2]), r.component(0),
          r.component(1), r.component(2)};
}

inline double heisenberg_product(const ScalarField& u, double lambda, const Domain& dom,
                                 const IntegrationOptions& opt = {}) {
  return heisenberg_product_detail(u, lambda, dom, opt).product;
}

// ---- inequality audits -----------------------------------------------------

enum class InequalityId { T2_1, T2_2, C2_3, C2_4, T3_4, T3_5, T3_6, CP, DFP, BDE, T4_1, T4_2 };

inline constexpr std::array<std::pair<InequalityId, std::string_view>, 12> kInequalityNames{{
    {InequalityId::T2_1, "T2.1"},
    {InequalityId::T2_2, "T2.2"},
    {InequalityId::C2_3, "C2.3"},
    {InequalityId::C2_4, "C2.4"},
    {InequalityId::T3_4, "T3.4"},
    {InequalityId::T3_5, "T3.5"},
    {InequalityId::T3_6, "T3.6"},
    {InequalityId::CP, "CP"},
    {InequalityId::DFP, "DFP"},
    {InequalityId::BDE, "BDE"},
    {InequalityId::T4_1, "T4.1"},
    {InequalityId::T4_2, "T4.2"},
}};

inline std::string_view to_string(InequalityId id) {
  for (const auto& [k, name] : kInequalityNames)
    if (k == id) return name;
  return "?";
}

inline InequalityId parse_inequality(std::string_view s) {
  for (const auto& [k, name] : kInequalityNames)
    if (name == s) return k;
  throw Error(ErrorKind::UnknownInequality, "unknown inequality: " + std::string(s));
}

struct AuditParams {
  /// Power for C2.3.
  double lambda = 1.0;
  /// Exponent for T4.2, in (1, 2N/(N-2)).
  double q = 2.0;
  /// K_n for BDE; the worst case pi^2 by default.
  double k_n = std::numbers::pi * std::numbers::pi;
  /// mu for BDE; (N-2)^2/4 when unset.
  std::optional<double> mu;
  /// Omega for T4.1/T4.2; required there. Whole space otherwise.
  std::optional<Domain> omega;
};

struct AuditReport {
  InequalityId id;
  double lhs;
  double rhs;
  double margin;
  double error;
  bool pass;
  /// T4.2 only: n (lhs - hardy part) / (int |u|^q)^{2/q}.
  std::optional<double> implied_constant;
};

namespace detail {

inline double domain_volume(const Domain& d, int n) {
  if (auto* b = std::get_if<BallDomain>(&d)) return ball_volume(n) * std::pow(b->radius, n);
  if (auto* bx = std::get_if<BoxDomain>(&d)) {
    double v = 1.0;
    for (int k = 0; k < n; ++k) v *= bx->hi[k] - bx->lo[k];
    return v;
  }
  throw Error(ErrorKind::InvalidArgument, "bounded domain must be a Ball or a Box");
}

inline bool domain_contains_ball(const Domain& d, const Sphere& s) {
  if (auto* b = std::get_if<BallDomain>(&d))
    return distance(b->center, s.center) + s.radius <= b->radius;
  if (auto* bx = std::get_if<BoxDomain>(&d)) {
    for (int k = 0; k < s.center.dim; ++k)
      if (s.center[k] - s.radius < bx->lo[k] || s.center[k] + s.radius > bx->hi[k]) return false;
    return true;
  }
  return false;
}

inline bool domain_contains_point(const Domain& d, const Vec& x) {
  if (auto* b = std::get_if<BallDomain>(&d)) return distance(b->center, x) < b->radius;
  if (auto* bx = std::get_if<BoxDomain>(&d)) {
    for (int k = 0; k < x.dim; ++k)
      if (!(x[k] > bx->lo[k] && x[k] < bx->hi[k])) return false;
    return true;
  }
  return false;
}

} // namespace detail

/// Evaluates one inequality for u: lhs is the Dirichlet energy (plus the
/// lower-order term for BDE), rhs the potential side.
inline AuditReport inequality_audit(const ScalarField& u, InequalityId id,
                                    const AuditParams& params = {},
                                    const IntegrationOptions& opt = {}) {
  const auto cfg = u.config_ptr();
  const int N = cfg->dim();
  const int n = cfg->size();
  const double hc = hardy_constant(N);
  const double nm2 = (N - 2.0) * (N - 2.0);

  Domain dom = WholeSpaceDomain{};
  const bool bounded = id == InequalityId::T4_1 || id == InequalityId::T4_2;
  if (bounded) {
    if (!params.omega) throw Error(ErrorKind::InadmissibleFunction, "bounded domain required");
    dom = *params.omega;
    const SingularLocus loc = u.locus();
    if (!loc.support || !detail::domain_contains_ball(*params.omega, *loc.support))
      throw Error(ErrorKind::InadmissibleFunction, "u must have compact support in the domain");
    for (const Vec& a : cfg->poles())
      if (!detail::domain_contains_point(*params.omega, a))
        throw Error(ErrorKind::InadmissibleFunction, "poles must lie in the domain");
  }
  if (id == InequalityId::T4_2) {
    const double crit = N > 2 ? 2.0 * N / (N - 2.0) : std::numeric_limits<double>::infinity();
    if (!(params.q > 1.0 && params.q < crit))
      throw Error(ErrorKind::InvalidArgument, "q must lie in (1, 2N/(N-2))");
  }
  if (id == InequalityId::BDE && n < 2)
    throw Error(ErrorKind::InadmissibleFunction, "BDE needs at least two poles");

  // Potentials referenced by the terms must outlive the integration.
  std::vector<PotentialSpec> pots;
  pots.reserve(4);
  std::vector<double> coeff; // rhs = sum coeff_k * term_{k+1}
  std::vector<detail::Term> terms{detail::gradient_term(u)};
  SingularLocus extra;
  auto add_potential = [&](PotentialFamily fam, double c) {
    pots.emplace_back(cfg, std::move(fam));
    detail::merge_locus(extra, detail::potential_locus(pots.back()));
    coeff.push_back(c);
  };
  const auto unweighted = std::make_shared<const PoleConfiguration>(cfg->with_uniform_weights());
  double lhs_mass_coeff = 0.0;
  double rhs_mass_coeff = 0.0;
  switch (id) {
  case InequalityId::T2_1:
  case InequalityId::T4_1:
  case InequalityId::T4_2:
    add_potential(family::MaxInverseSquare{}, hc);
    break;
  case InequalityId::T2_2:
    add_potential(family::MinInverseSquare{}, hc);
    break;
  case InequalityId::C2_3:
    if (params.lambda == 0.0) add_potential(family::GeometricMean{}, hc);
    else add_potential(family::PowerMean{params.lambda}, hc);
    break;
  case InequalityId::C2_4:
    add_potential(family::PowerMean{1.0}, hc);
    break;
  case InequalityId::T3_4:
    add_potential(family::PowerMean{1.0}, hc);
    add_potential(family::CrossTerm{}, hc);
    break;
  case InequalityId::T3_5:
    add_potential(family::CrossTerm{}, nm2);
    break;
  case InequalityId::T3_6:
    add_potential(family::PowerMean{1.0}, hc);
    add_potential(family::Remainder{}, hc);
    break;
  case InequalityId::CP:
    // (N-2)^2/n^2 times the pair sum, which is n^2 times the uniform-weight cross term
    pots.emplace_back(unweighted, family::CrossTerm{});
    detail::merge_locus(extra, detail::potential_locus(pots.back()));
    coeff.push_back(nm2);
    break;
  case InequalityId::DFP: {
    const double c = nm2 / ((n + 1.0) * (n + 1.0));
    pots.emplace_back(unweighted, family::SumInverseSquare{});
    detail::merge_locus(extra, detail::potential_locus(pots.back()));
    coeff.push_back(c);
    pots.emplace_back(unweighted, family::CrossTerm{});
    detail::merge_locus(extra, detail::potential_locus(pots.back()));
    coeff.push_back(c * n * n);
    break;
  }
  case InequalityId::BDE: {
    const double mu = params.mu.value_or(hc);
    pots.emplace_back(unweighted, family::SumInverseSquare{});
    detail::merge_locus(extra, detail::potential_locus(pots.back()));
    coeff.push_back(mu);
    const double d = cfg->min_separation();
    lhs_mass_coeff = (4.0 * params.k_n + 4.0 * (n + 1.0) * mu) / (d * d);
    break;
  }
  }
  if (id == InequalityId::T4_1) {
    const double r_omega = std::pow(detail::domain_volume(dom, N) / ball_volume(N), 1.0 / N);
    rhs_mass_coeff = kDiskEigenvalue / (n * r_omega * r_omega);
  }
  for (const PotentialSpec& p : pots) terms.push_back(detail::weighted_term(u, p));
  const bool need_mass = lhs_mass_coeff != 0.0 || rhs_mass_coeff != 0.0;
  int mass_index = -1;
  if (need_mass) {
    mass_index = static_cast<int>(terms.size());
    terms.push_back(detail::mass_term(u));
  }
  int q_index = -1;
  if (id == InequalityId::T4_2) {
    q_index = static_cast<int>(terms.size());
    const double q = params.q;
    terms.push_back({[q](const Vec&, const Jet& j) { return std::pow(std::abs(j.value), q); },
                     q * u.decay_exponent()});
  }

  VectorResult r = detail::integrate_terms(u, terms, extra, false, dom, opt);
  double lhs = r.values[0];
  double err = r.errors[0];
  double rhs = 0.0;
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    rhs += coeff[k] * r.values[k + 1];
    err += std::abs(coeff[k]) * r.errors[k + 1];
  }
  if (need_mass) {
    lhs += lhs_mass_coeff * r.values[mass_index];
    rhs += rhs_mass_coeff * r.values[mass_index];
    err += std::abs(lhs_mass_coeff - rhs_mass_coeff) * r.errors[mass_index];
  }
  AuditReport rep{id, lhs, rhs, lhs - rhs, err, false, std::nullopt};
  rep.pass = rep.margin >= -3.0 * rep.error;
  if (q_index >= 0) {
    const double norm_q = std::pow(r.values[q_index], 2.0 / params.q);
    rep.implied_constant = n * rep.margin / norm_q;
  }
  return rep;
}

inline AuditReport inequality_audit(const ScalarField& u, std::string_view id,
                                    const AuditParams& params = {},
                                    const IntegrationOptions& opt = {}) {
  return inequality_audit(u, parse_inequality(id), params, opt);
}

} // namespace hardylab

#pragma once

#include "hardylab/geometry.hpp"
#include "hardylab/potentials.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace hardylab {

class ScalarField;

namespace kind {

/// max_i |x-a_i|^{(2-N)/2}; the nearest pole is active.
struct GroundStateMax {};
/// min_i |x-a_i|^{(2-N)/2}; the farthest pole is active.
struct GroundStateMin {};
/// prod_i |x-a_i|^{beta alpha_i}.
struct ProductPower {
  double beta;
};
/// sum_i alpha_i |x-a_i|^{(2-N)/2}.
struct SumPower {};
/// Logarithmic cutoff around pole `pole` restricted to its nearest-pole cell:
/// 0 on B(a,eps^2), log(r/eps^2)/log(1/eps) on the annulus, 1 outside B(a,eps).
struct CutoffLog {
  double eps;
  int pole;
};
/// sum_i psi_{eps,i} |x-a_i|^{(2-N)/2-eps}.
struct MinimizerMax {
  double eps;
};
/// min_i |x-a_i|^{(2-N)/2-eps}.
struct MinimizerMin {
  double eps;
};
/// exp(1 - 1/(1-t^2)) with t = |x-c|/radius, zero for t >= 1.
struct Bump {
  Vec center;
  double radius;
};
/// exp(-|x-c|^2 / (2 sigma^2)).
struct Gaussian {
  Vec center;
  double sigma;
};
/// x . coeffs
struct Linear {
  Vec coeffs;
};
struct Factor {
  std::shared_ptr<const ScalarField> field;
  double exponent = 1.0;
};
/// prod_k field_k^{exponent_k}
struct Product {
  std::vector<Factor> factors;
};

} // namespace kind

using FieldKind =
    std::variant<kind::GroundStateMax, kind::GroundStateMin, kind::ProductPower,
                 kind::SumPower, kind::CutoffLog, kind::MinimizerMax, kind::MinimizerMin,
                 kind::Bump, kind::Gaussian, kind::Linear, kind::Product>;

/// Value, gradient and (optionally) Laplacian at one point.
struct Jet {
  double value = 0.0;
  Vec grad;
  double laplacian = 0.0;
};

struct Sphere {
  Vec center;
  double radius;
};

/// Where a field fails to be smooth; consumed by the integrators as breakpoints.
struct SingularLocus {
  bool singular_at_poles = false;
  bool kinks_on_ties = false;
  std::vector<Sphere> kink_spheres;
  std::optional<Sphere> support;
};

/// Points closer than this fraction of the pole separation to a tie
/// hyperplane or a pole count as lying on the null set.
inline constexpr double kGuardBand = 1e-9;

class ScalarField {
public:
  ScalarField(std::shared_ptr<const PoleConfiguration> config, FieldKind k,
              double scale = 1.0)
      : config_(std::move(config)), kind_(std::move(k)), scale_(scale) {
    if (!config_) throw Error(ErrorKind::InvalidArgument, "null configuration");
    validate();
  }
  ScalarField(const PoleConfiguration& config, FieldKind k, double scale = 1.0)
      : ScalarField(std::make_shared<const PoleConfiguration>(config), std::move(k), scale) {}

  const PoleConfiguration& config() const noexcept { return *config_; }
  std::shared_ptr<const PoleConfiguration> config_ptr() const noexcept { return config_; }
  const FieldKind& field_kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }
  int dim() const noexcept { return config_->dim(); }

  ScalarField scaled(double c) const { return {config_, kind_, scale_ * c}; }

  /// Exact value; throws at poles for kinds that diverge there.
  double eval(const Vec& x) const {
    check_not_singular(x);
    return jet_unchecked(x, false).value;
  }
  double operator()(const Vec& x) const { return eval(x); }

  /// Exact gradient of the active branch; throws on the tie set and at poles.
  Vec gradient(const Vec& x) const {
    check_not_singular(x);
    check_off_ties(x);
    return jet_unchecked(x, false).grad;
  }

  /// Exact Laplacian of the active branch off the singular locus.
  double laplacian(const Vec& x) const {
    check_not_singular(x);
    check_off_ties(x);
    return jet_unchecked(x, true).laplacian;
  }

  /// Value, gradient and Laplacian without the null-set checks. The branch on a
  /// tie is the lowest-index cell. Intended for integrators, which never sample
  /// the null set with positive weight.
  Jet jet_unchecked(const Vec& x, bool with_laplacian) const {
    Jet j = std::visit([&](const auto& k) { return jet_of(k, x, with_laplacian); }, kind_);
    if (scale_ != 1.0) {
      j.value *= scale_;
      j.grad *= scale_;
      j.laplacian *= scale_;
    }
    return j;
  }

  SingularLocus locus() const {
    SingularLocus loc;
    collect_locus(loc);
    return loc;
  }

  /// Exponent s with |u| = O(|x|^{-s}) at infinity; +inf for compact support.
  double decay_exponent() const {
    const double half = 0.5 * (dim() - 2.0);
    const double inf = std::numeric_limits<double>::infinity();
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kind::GroundStateMax> ||
                        std::is_same_v<K, kind::GroundStateMin> ||
                        std::is_same_v<K, kind::SumPower>)
            return half;
          else if constexpr (std::is_same_v<K, kind::ProductPower>)
            return -k.beta;
          else if constexpr (std::is_same_v<K, kind::CutoffLog>)
            return 0.0;
          else if constexpr (std::is_same_v<K, kind::MinimizerMax> ||
                             std::is_same_v<K, kind::MinimizerMin>)
            return half + k.eps;
          else if constexpr (std::is_same_v<K, kind::Bump> ||
                             std::is_same_v<K, kind::Gaussian>)
            return inf;
          else if constexpr (std::is_same_v<K, kind::Linear>)
            return -1.0;
          else {
            double s = 0.0;
            for (const auto& f : k.factors) {
              const double e = f.field->decay_exponent();
              if (std::isinf(e) && f.exponent > 0) return inf;
              s += f.exponent * e;
            }
            return s;
          }
        },
        kind_);
  }

  /// Cell mode governing the active branch, if the field branches on ties.
  std::optional<CellMode> branch_mode() const {
    return std::visit(
        [&](const auto& k) -> std::optional<CellMode> {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kind::GroundStateMax> ||
                        std::is_same_v<K, kind::CutoffLog> ||
                        std::is_same_v<K, kind::MinimizerMax>)
            return CellMode::Nearest;
          else if constexpr (std::is_same_v<K, kind::GroundStateMin> ||
                             std::is_same_v<K, kind::MinimizerMin>)
            return CellMode::Farthest;
          else
            return std::nullopt;
        },
        kind_);
  }

private:
  void validate() const {
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kind::CutoffLog>) {
            check_eps(k.eps);
            if (k.pole < 0 || k.pole >= config_->size())
              throw Error(ErrorKind::InvalidArgument, "cutoff pole index out of range");
          } else if constexpr (std::is_same_v<K, kind::MinimizerMax> ||
                               std::is_same_v<K, kind::MinimizerMin>) {
            if (!(k.eps >= 0.0 && k.eps < 0.5))
              throw Error(ErrorKind::InvalidArgument, "eps must lie in [0, 1/2)");
            if constexpr (std::is_same_v<K, kind::MinimizerMax>) check_eps(k.eps);
          } else if constexpr (std::is_same_v<K, kind::Bump>) {
            if (!(k.radius > 0.0) || k.center.dim != dim())
              throw Error(ErrorKind::InvalidArgument, "invalid bump");
          } else if constexpr (std::is_same_v<K, kind::Gaussian>) {
            if (!(k.sigma > 0.0) || k.center.dim != dim())
              throw Error(ErrorKind::InvalidArgument, "invalid gaussian");
          } else if constexpr (std::is_same_v<K, kind::Linear>) {
            if (k.coeffs.dim != dim())
              throw Error(ErrorKind::InvalidArgument, "invalid linear field");
          } else if constexpr (std::is_same_v<K, kind::Product>) {
            for (const auto& f : k.factors)
              if (!f.field || f.field->dim() != dim())
                throw Error(ErrorKind::InvalidArgument, "invalid product factor");
          }
        },
        kind_);
  }

  static void check_eps(double eps) {
    if (!(eps > 0.0 && eps < 0.5))
      throw Error(ErrorKind::InvalidArgument, "eps must lie in (0, 1/2)");
  }

  bool diverges_at_poles() const {
    return std::visit(
        [&](const auto& k) -> bool {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kind::GroundStateMax> ||
                        std::is_same_v<K, kind::SumPower>)
            return true;
          else if constexpr (std::is_same_v<K, kind::ProductPower>)
            return true;
          else if constexpr (std::is_same_v<K, kind::GroundStateMin> ||
                             std::is_same_v<K, kind::MinimizerMin>)
            return config_->size() == 1;
          else if constexpr (std::is_same_v<K, kind::Product>) {
            for (const auto& f : k.factors)
              if (f.field->diverges_at_poles()) return true;
            return false;
          } else
            return false;
        },
        kind_);
  }

  void check_not_singular(const Vec& x) const {
    if (!diverges_at_poles()) return;
    const double guard = kGuardBand * config_->length_scale();
    for (const Vec& a : config_->poles())
      if (distance(x, a) <= guard)
        throw Error(ErrorKind::EvaluationAtSingularity, "evaluation at singularity");
  }

  void check_off_ties(const Vec& x) const {
    const double guard = kGuardBand * config_->length_scale();
    for (const Vec& a : config_->poles())
      if (distance(x, a) <= guard)
        throw Error(ErrorKind::GradientUndefined, "gradient undefined on null set");
    if (config_->size() < 2) return;
    auto on_ties = [&](CellMode mode) {
      return distance_to_tie_set(x, *config_, mode) <= guard;
    };
    bool bad = false;
    if (auto m = branch_mode()) bad = on_ties(*m);
    if (auto* p = std::get_if<kind::Product>(&kind_))
      for (const auto& f : p->factors)
        if (auto m = f.field->branch_mode()) bad = bad || on_ties(*m);
    if (bad) throw Error(ErrorKind::GradientUndefined, "gradient undefined on null set");
  }

  void collect_locus(SingularLocus& loc) const {
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kind::GroundStateMax> ||
                        std::is_same_v<K, kind::GroundStateMin>) {
            loc.singular_at_poles = true;
            loc.kinks_on_ties = config_->size() > 1;
          } else if constexpr (std::is_same_v<K, kind::ProductPower> ||
                               std::is_same_v<K, kind::SumPower>) {
            loc.singular_at_poles = true;
          } else if constexpr (std::is_same_v<K, kind::CutoffLog>) {
            const Vec& a = config_->pole(k.pole);
            loc.kink_spheres.push_back({a, k.eps * k.eps});
            loc.kink_spheres.push_back({a, k.eps});
            loc.kinks_on_ties = config_->size() > 1;
          } else if constexpr (std::is_same_v<K, kind::MinimizerMax>) {
            for (const Vec& a : config_->poles()) {
              loc.kink_spheres.push_back({a, k.eps * k.eps});
              loc.kink_spheres.push_back({a, k.eps});
            }
            loc.kinks_on_ties = config_->size() > 1;
          } else if constexpr (std::is_same_v<K, kind::MinimizerMin>) {
            loc.singular_at_poles = config_->size() == 1;
            loc.kinks_on_ties = config_->size() > 1;
          } else if constexpr (std::is_same_v<K, kind::Bump>) {
            Sphere s{k.center, k.radius};
            if (!loc.support || loc.support->radius > s.radius) loc.support = s;
          } else if constexpr (std::is_same_v<K, kind::Product>) {
            for (const auto& f : k.factors) {
              SingularLocus sub = f.field->locus();
              loc.singular_at_poles |= sub.singular_at_poles;
              loc.kinks_on_ties |= sub.kinks_on_ties;
              loc.kink_spheres.insert(loc.kink_spheres.end(), sub.kink_spheres.begin(),
                                      sub.kink_spheres.end());
              if (sub.support && f.exponent > 0 &&
                  (!loc.support || loc.support->radius > sub.support->radius))
                loc.support = sub.support;
            }
          }
        },
        kind_);
  }

  // ---- jets -------------------------------------------------------------

  /// r^p with gradient and Laplacian about pole a.
  static Jet radial_power(const Vec& x, const Vec& a, double p, int n, bool lap) {
    const Vec dx = x - a;
    const double r2 = norm2(dx);
    Jet j;
    j.value = std::pow(r2, 0.5 * p);
    j.grad = dx * (p * j.value / r2);
    if (lap) j.laplacian = p * (p + n - 2.0) * j.value / r2;
    return j;
  }

  Jet jet_of(const kind::GroundStateMax&, const Vec& x, bool lap) const {
    const int k = cell_index(x, *config_, CellMode::Nearest);
    return radial_power(x, config_->pole(k), 0.5 * (2.0 - dim()), dim(), lap);
  }
  Jet jet_of(const kind::GroundStateMin&, const Vec& x, bool lap) const {
    const int k = cell_index(x, *config_, CellMode::Farthest);
    return radial_power(x, config_->pole(k), 0.5 * (2.0 - dim()), dim(), lap);
  }
  Jet jet_of(const kind::ProductPower& pp, const Vec& x, bool lap) const {
    // log phi = sum_i beta alpha_i log r_i
    Jet j;
    j.grad = Vec(dim());
    double logv = 0.0;
    double lap_log = 0.0;
    for (int i = 0; i < config_->size(); ++i) {
      const double c = pp.beta * config_->weight(i);
      if (c == 0.0) continue;
      const Vec dx = x - config_->pole(i);
      const double r2 = norm2(dx);
      logv += 0.5 * c * std::log(r2);
      j.grad += dx * (c / r2);
      lap_log += c * (dim() - 2.0) / r2;
    }
    j.value = std::exp(logv);
    if (lap) j.laplacian = j.value * (norm2(j.grad) + lap_log);
    j.grad *= j.value;
    return j;
  }
  Jet jet_of(const kind::SumPower&, const Vec& x, bool lap) const {
    Jet j;
    j.grad = Vec(dim());
    const double p = 0.5 * (2.0 - dim());
    for (int i = 0; i < config_->size(); ++i) {
      const double w = config_->weight(i);
      if (w == 0.0) continue;
      Jet t = radial_power(x, config_->pole(i), p, dim(), lap);
      j.value += w * t.value;
      j.grad += t.grad * w;
      j.laplacian += w * t.laplacian;
    }
    return j;
  }

  /// psi(r) = log(r/eps^2)/log(1/eps) clamped to [0,1], as a function of x about a.
  Jet cutoff_jet(const Vec& x, const Vec& a, double eps, bool lap) const {
    Jet j;
    j.grad = Vec(dim());
    const Vec dx = x - a;
    const double r2 = norm2(dx);
    const double r = std::sqrt(r2);
    const double e2 = eps * eps;
    if (r < e2) return j;
    if (r >= eps) {
      j.value = 1.0;
      return j;
    }
    const double L = std::log(1.0 / eps);
    j.value = std::log(r / e2) / L;
    j.grad = dx * (1.0 / (r2 * L));
    if (lap) j.laplacian = (dim() - 2.0) / (r2 * L);
    return j;
  }

  Jet jet_of(const kind::CutoffLog& c, const Vec& x, bool lap) const {
    if (config_->size() > 1 && cell_index(x, *config_, CellMode::Nearest) != c.pole) {
      Jet j;
      j.grad = Vec(dim());
      return j;
    }
    return cutoff_jet(x, config_->pole(c.pole), c.eps, lap);
  }

  Jet jet_of(const kind::MinimizerMax& m, const Vec& x, bool lap) const {
    const int k = config_->size() > 1 ? cell_index(x, *config_, CellMode::Nearest) : 0;
    const Vec& a = config_->pole(k);
    Jet psi = cutoff_jet(x, a, m.eps, lap);
    if (psi.value == 0.0) return psi;
    Jet rq = radial_power(x, a, 0.5 * (2.0 - dim()) - m.eps, dim(), lap);
    Jet j;
    j.value = psi.value * rq.value;
    j.grad = rq.grad * psi.value + psi.grad * rq.value;
    if (lap)
      j.laplacian = psi.value * rq.laplacian + rq.value * psi.laplacian +
                    2.0 * dot(psi.grad, rq.grad);
    return j;
  }
  Jet jet_of(const kind::MinimizerMin& m, const Vec& x, bool lap) const {
    const int k = cell_index(x, *config_, CellMode::Farthest);
    return radial_power(x, config_->pole(k), 0.5 * (2.0 - dim()) - m.eps, dim(), lap);
  }
  Jet jet_of(const kind::Bump& b, const Vec& x, bool lap) const {
    Jet j;
    j.grad = Vec(dim());
    const Vec dx = x - b.center;
    const double R2 = b.radius * b.radius;
    const double s = norm2(dx) / R2;
    if (s >= 1.0) return j;
    const double om = 1.0 - s;
    j.value = std::exp(1.0 - 1.0 / om);
    const double h = -1.0 / (om * om); // d/ds of (1 - 1/(1-s))
    j.grad = dx * (j.value * h * 2.0 / R2);
    if (lap) {
      const double hp = -2.0 / (om * om * om);
      j.laplacian = j.value * (4.0 * s * (h * h + hp) + 2.0 * dim() * h) / R2;
    }
    return j;
  }
  Jet jet_of(const kind::Gaussian& g, const Vec& x, bool lap) const {
    Jet j;
    const Vec dx = x - g.center;
    const double s2 = g.sigma * g.sigma;
    const double q = norm2(dx);
    j.value = std::exp(-0.5 * q / s2);
    j.grad = dx * (-j.value / s2);
    if (lap) j.laplacian = j.value * (q / (s2 * s2) - dim() / s2);
    return j;
  }
  Jet jet_of(const kind::Linear& l, const Vec& x, bool) const {
    Jet j;
    j.value = dot(l.coeffs, x);
    j.grad = l.coeffs;
    return j;
  }
  Jet jet_of(const kind::Product& p, const Vec& x, bool lap) const {
    // u = prod_k f_k^{e_k}; each factor contributes g_k = f_k^{e_k}.
    const std::size_t m = p.factors.size();
    std::vector<Jet> g(m);
    for (std::size_t k = 0; k < m; ++k) {
      const auto& f = p.factors[k];
      Jet fj = f.field->jet_unchecked(x, lap);
      const double e = f.exponent;
      if (e == 1.0) {
        g[k] = fj;
        continue;
      }
      Jet gk;
      gk.value = std::pow(fj.value, e);
      const double d1 = e * std::pow(fj.value, e - 1.0);
      gk.grad = fj.grad * d1;
      if (lap)
        gk.laplacian = d1 * fj.laplacian +
                       e * (e - 1.0) * std::pow(fj.value, e - 2.0) * norm2(fj.grad);
      g[k] = gk;
    }
    Jet j;
    j.value = 1.0;
    j.grad = Vec(dim());
    for (std::size_t k = 0; k < m; ++k) {
      // product rule accumulated left to right
      Jet next;
      next.value = j.value * g[k].value;
      next.grad = j.grad * g[k].value + g[k].grad * j.value;
      if (lap)
        next.laplacian = j.laplacian * g[k].value + j.value * g[k].laplacian +
                         2.0 * dot(j.grad, g[k].grad);
      j = next;
    }
    return j;
  }

  std::shared_ptr<const PoleConfiguration> config_;
  FieldKind kind_;
  double scale_ = 1.0;
};

/// Field constructors.
inline ScalarField make_product(std::vector<kind::Factor> factors) {
  if (factors.empty()) throw Error(ErrorKind::InvalidArgument, "empty product");
  auto cfg = factors.front().field->config_ptr();
  return {cfg, kind::Product{std::move(factors)}};
}

inline kind::Factor factor(const ScalarField& f, double exponent = 1.0) {
  return {std::make_shared<const ScalarField>(f), exponent};
}

enum class MinimizerVariant { Max, Min };

/// Minimizing sequence element u_eps: the cutoff sum (Max) or the min of powers (Min).
inline ScalarField make_minimizer(std::shared_ptr<const PoleConfiguration> cfg, double eps,
                                  MinimizerVariant variant) {
  if (!(eps > 0.0 && eps < 0.5))
    throw Error(ErrorKind::InvalidArgument, "eps must lie in (0, 1/2)");
  if (variant == MinimizerVariant::Max) {
    if (cfg->size() > 1 && !(eps < 0.5 * cfg->min_separation()))
      throw Error(ErrorKind::CutoffExceedsCell, "cutoff exceeds cell");
    return {cfg, kind::MinimizerMax{eps}};
  }
  return {cfg, kind::MinimizerMin{eps}};
}

inline ScalarField make_minimizer(const PoleConfiguration& cfg, double eps,
                                  MinimizerVariant variant) {
  return make_minimizer(std::make_shared<const PoleConfiguration>(cfg), eps, variant);
}

enum class GroundState { Max, Min };

/// -Delta phi / phi for phi = max/min_i |x-a_i|^{(2-N)/2}: (N-2)^2/4 times V_{+inf}/V_{-inf}.
inline double laplacian_ratio(GroundState gs, const PoleConfiguration& cfg, const Vec& x) {
  const CellMode mode = gs == GroundState::Max ? CellMode::Nearest : CellMode::Farthest;
  const double guard = kGuardBand * cfg.length_scale();
  for (const Vec& a : cfg.poles())
    if (distance(x, a) <= guard)
      throw Error(ErrorKind::GradientUndefined, "gradient undefined on null set");
  if (cfg.size() > 1 && distance_to_tie_set(x, cfg, mode) <= guard)
    throw Error(ErrorKind::GradientUndefined, "gradient undefined on null set");
  const int k = cell_index(x, cfg, mode);
  return hardy_constant(cfg.dim()) / norm2(x - cfg.pole(k));
}

} // namespace hardylab

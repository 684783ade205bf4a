#pragma once

#include "hardylab/geometry.hpp"

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <variant>

namespace hardylab {

namespace family {

/// (sum_i alpha_i |x-a_i|^{-2 lambda})^{1/lambda}, lambda != 0.
struct PowerMean {
  double lambda;
};
/// prod_i |x-a_i|^{-2 alpha_i}; the lambda -> 0 limit of PowerMean.
struct GeometricMean {};
/// max_i |x-a_i|^{-2}.
struct MaxInverseSquare {};
/// min_i |x-a_i|^{-2}.
struct MinInverseSquare {};

/// f^{-1}(sum_i alpha_i f(|x-a_i|^{-2})) for a strictly monotone f.
struct FMean {
  std::function<double(double)> f;
  std::function<double(double)> f_inv;
  std::string name = "custom";
};

/// sum_{i<j} alpha_i alpha_j |a_i-a_j|^2 / (|x-a_i|^2 |x-a_j|^2).
struct CrossTerm {};
/// sum_i |x-a_i|^{-2}, unweighted.
struct SumInverseSquare {};

/// Remainder weight of the phi_2 = sum_i alpha_i |x-a_i|^{(2-N)/2} transform:
///   sum_{i<j} alpha_i alpha_j (r_i^-2 - r_j^-2)(r_i^p - r_j^p) / sum_i alpha_i r_i^p,
/// with p = (2-N)/2. Nonnegative for N >= 3, zero on every tie set.
struct Remainder {};

/// (sum_i alpha_i |x-a_i|^{2 lambda})^{1/lambda}; the reciprocal of V_{-lambda}.
/// Finite everywhere, grows like |x|^2.
struct HeisenbergWeight {
  double lambda;
};

} // namespace family

using PotentialFamily =
    std::variant<family::PowerMean, family::GeometricMean, family::MaxInverseSquare,
                 family::MinInverseSquare, family::FMean, family::CrossTerm,
                 family::SumInverseSquare, family::Remainder, family::HeisenbergWeight>;

/// Powers above this magnitude are replaced by the max/min extremes.
inline constexpr double kLambdaClamp = 1e3;

/// Sampling interval and count for the monotonicity certificate of an f-mean.
struct FMeanCheck {
  double lo = 1e-6;
  double hi = 1e6;
  int samples = 100;
};

/// A potential family bound to a pole configuration.
class PotentialSpec {
public:
  PotentialSpec(std::shared_ptr<const PoleConfiguration> config, PotentialFamily fam,
                FMeanCheck check = {})
      : config_(std::move(config)), family_(std::move(fam)) {
    if (!config_) throw Error(ErrorKind::InvalidArgument, "null configuration");
    if (auto* pm = std::get_if<family::PowerMean>(&family_)) {
      if (pm->lambda == 0.0)
        throw Error(ErrorKind::InvalidArgument,
                    "power mean with lambda = 0: use GeometricMean");
      if (pm->lambda > kLambdaClamp) family_ = family::MaxInverseSquare{};
      else if (pm->lambda < -kLambdaClamp) family_ = family::MinInverseSquare{};
    }
    if (auto* fm = std::get_if<family::FMean>(&family_)) validate_fmean(*fm, check);
  }

  PotentialSpec(const PoleConfiguration& config, PotentialFamily fam, FMeanCheck check = {})
      : PotentialSpec(std::make_shared<const PoleConfiguration>(config), std::move(fam),
                      check) {}

  const PoleConfiguration& config() const noexcept { return *config_; }
  std::shared_ptr<const PoleConfiguration> config_ptr() const noexcept { return config_; }
  const PotentialFamily& family() const noexcept { return family_; }

  /// True when the family is finite at the poles.
  bool regular_at_poles() const noexcept {
    return std::holds_alternative<family::HeisenbergWeight>(family_);
  }

  /// True when the family switches branch across tie hyperplanes T_ij.
  bool branches_on_ties() const noexcept {
    return std::holds_alternative<family::MaxInverseSquare>(family_) ||
           std::holds_alternative<family::MinInverseSquare>(family_);
  }

  double operator()(const Vec& x) const { return eval(x); }

  double eval(const Vec& x) const {
    const auto& cfg = *config_;
    const int n = cfg.size();
    std::array<double, 64> r2buf;
    if (n > static_cast<int>(r2buf.size()))
      throw Error(ErrorKind::InvalidConfiguration, "too many poles");
    bool at_pole = false;
    for (int i = 0; i < n; ++i) {
      r2buf[i] = norm2(x - cfg.pole(i));
      at_pole |= (r2buf[i] == 0.0);
    }
    if (at_pole && !regular_at_poles())
      throw Error(ErrorKind::EvaluationAtSingularity, "evaluation at singularity");
    return std::visit([&](const auto& f) { return eval_family(f, r2buf.data(), n); },
                      family_);
  }

private:
  static double log_sum_exp_weighted(const double* r2, const std::vector<double>& w, int n,
                                     double s) {
    // log sum_i w_i exp(s * log r2_i), zero weights skipped.
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      if (w[i] > 0.0) mx = std::max(mx, std::log(w[i]) + s * std::log(r2[i]));
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      if (w[i] > 0.0) acc += std::exp(std::log(w[i]) + s * std::log(r2[i]) - mx);
    return mx + std::log(acc);
  }

  double eval_family(const family::PowerMean& f, const double* r2, int n) const {
    // |x-a|^{-2 lambda} = exp(-lambda log r2)
    const double l = f.lambda;
    return std::exp(log_sum_exp_weighted(r2, config_->weights(), n, -l) / l);
  }
  double eval_family(const family::GeometricMean&, const double* r2, int n) const {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc -= config_->weight(i) * std::log(r2[i]);
    return std::exp(acc);
  }
  double eval_family(const family::MaxInverseSquare&, const double* r2, int n) const {
    double m = r2[0];
    for (int i = 1; i < n; ++i) m = std::min(m, r2[i]);
    return 1.0 / m;
  }
  double eval_family(const family::MinInverseSquare&, const double* r2, int n) const {
    double m = r2[0];
    for (int i = 1; i < n; ++i) m = std::max(m, r2[i]);
    return 1.0 / m;
  }
  double eval_family(const family::FMean& f, const double* r2, int n) const {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      if (config_->weight(i) > 0.0) acc += config_->weight(i) * f.f(1.0 / r2[i]);
    return f.f_inv(acc);
  }
  double eval_family(const family::CrossTerm&, const double* r2, int n) const {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        acc += config_->weight(i) * config_->weight(j) *
               norm2(config_->pole(i) - config_->pole(j)) / (r2[i] * r2[j]);
    return acc;
  }
  double eval_family(const family::SumInverseSquare&, const double* r2, int n) const {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += 1.0 / r2[i];
    return acc;
  }
  double eval_family(const family::Remainder&, const double* r2, int n) const {
    const double p = 0.5 * (2.0 - config_->dim());
    double num = 0.0;
    double den = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ri_p = std::pow(r2[i], 0.5 * p);
      den += config_->weight(i) * ri_p;
      for (int j = i + 1; j < n; ++j) {
        const double rj_p = std::pow(r2[j], 0.5 * p);
        num += config_->weight(i) * config_->weight(j) * (1.0 / r2[i] - 1.0 / r2[j]) *
               (ri_p - rj_p);
      }
    }
    return num / den;
  }
  double eval_family(const family::HeisenbergWeight& f, const double* r2, int n) const {
    const auto& w = config_->weights();
    if (f.lambda == 0.0) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        if (w[i] > 0.0) acc += w[i] * std::log(r2[i]);
      return std::exp(acc);
    }
    if (f.lambda < 0.0)
      for (int i = 0; i < n; ++i)
        if (r2[i] == 0.0 && w[i] > 0.0) return 0.0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      if (w[i] > 0.0) acc += w[i] * std::pow(r2[i], f.lambda);
    return std::pow(acc, 1.0 / f.lambda);
  }

  static void validate_fmean(const family::FMean& fm, const FMeanCheck& check) {
    if (!fm.f || !fm.f_inv)
      throw Error(ErrorKind::InvalidFMean, "invalid f-mean");
    if (!(check.lo > 0.0 && check.hi > check.lo && check.samples >= 2))
      throw Error(ErrorKind::InvalidFMean, "invalid f-mean");
    const double llo = std::log(check.lo);
    const double lhi = std::log(check.hi);
    int sign = 0;
    double prev = fm.f(check.lo);
    if (!std::isfinite(prev)) throw Error(ErrorKind::InvalidFMean, "invalid f-mean");
    for (int k = 1; k < check.samples; ++k) {
      const double t = std::exp(llo + (lhi - llo) * k / (check.samples - 1));
      const double v = fm.f(t);
      if (!std::isfinite(v) || v == prev)
        throw Error(ErrorKind::InvalidFMean, "invalid f-mean");
      const int s = v > prev ? 1 : -1;
      if (sign != 0 && s != sign) throw Error(ErrorKind::InvalidFMean, "invalid f-mean");
      sign = s;
      prev = v;
    }
  }

  std::shared_ptr<const PoleConfiguration> config_;
  PotentialFamily family_;
};

/// Exponent p with V = Theta(|x|^{-p}) at infinity; negative means growth.
inline int decay_exponent(const PotentialSpec& spec) {
  return std::visit(
      [](const auto& f) -> int {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, family::CrossTerm> ||
                      std::is_same_v<F, family::Remainder>)
          return 4;
        else if constexpr (std::is_same_v<F, family::HeisenbergWeight>)
          return -2;
        else
          return 2;
      },
      spec.family());
}

/// The two algebraically equal forms of a dipole cross term:
/// |a_i-a_j|^2/(r_i^2 r_j^2) and |(x-a_i)/r_i^2 - (x-a_j)/r_j^2|^2.
inline std::pair<double, double> dipole_form(const PoleConfiguration& cfg, const Vec& x,
                                             int i, int j) {
  if (i == j) throw Error(ErrorKind::InvalidArgument, "dipole form needs i != j");
  const Vec di = x - cfg.pole(i);
  const Vec dj = x - cfg.pole(j);
  const double ri2 = norm2(di);
  const double rj2 = norm2(dj);
  if (ri2 == 0.0 || rj2 == 0.0)
    throw Error(ErrorKind::EvaluationAtSingularity, "evaluation at singularity");
  const double first = norm2(cfg.pole(i) - cfg.pole(j)) / (ri2 * rj2);
  const double second = norm2(di * (1.0 / ri2) - dj * (1.0 / rj2));
  return {first, second};
}

/// Named f-means: "log" gives the geometric mean, "power" gives t^p.
inline family::FMean fmean_log() {
  return {[](double t) { return std::log(t); }, [](double s) { return std::exp(s); }, "log"};
}
inline family::FMean fmean_power(double p) {
  return {[p](double t) { return std::pow(t, p); },
          [p](double s) { return std::pow(s, 1.0 / p); }, "power"};
}

} // namespace hardylab

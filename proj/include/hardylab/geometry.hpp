#pragma once

#include "hardylab/core.hpp"

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

namespace hardylab {

/// Minimal pairwise Euclidean distance of a pole list.
inline double min_pairwise_distance(std::span<const Vec> poles) {
  if (poles.size() < 2)
    throw Error(ErrorKind::UndefinedDistance, "undefined distance");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poles.size(); ++i)
    for (std::size_t j = i + 1; j < poles.size(); ++j)
      best = std::min(best, distance(poles[i], poles[j]));
  if (!(best > 0.0))
    throw Error(ErrorKind::DegenerateConfiguration, "degenerate configuration");
  return best;
}

enum class CellMode { Nearest, Farthest };

/// Poles a_1..a_n in R^N with convex weights. Immutable after construction.
class PoleConfiguration {
public:
  /// Uniform weights 1/n.
  PoleConfiguration(int dim, std::vector<Vec> poles)
      : PoleConfiguration(dim, poles,
                          std::vector<double>(poles.size(),
                                              poles.empty() ? 0.0 : 1.0 / poles.size())) {}

  PoleConfiguration(int dim, std::vector<Vec> poles, std::vector<double> weights)
      : dim_(dim), poles_(std::move(poles)), weights_(std::move(weights)) {
    if (dim_ < 3 || dim_ > kMaxDim)
      throw Error(ErrorKind::InvalidConfiguration, "dimension must be in [3, 8]");
    if (poles_.empty())
      throw Error(ErrorKind::InvalidConfiguration, "at least one pole required");
    if (weights_.size() != poles_.size())
      throw Error(ErrorKind::InvalidConfiguration, "weights and poles differ in length");
    for (const Vec& p : poles_)
      if (p.dim != dim_)
        throw Error(ErrorKind::InvalidConfiguration, "pole dimension mismatch");
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0))
        throw Error(ErrorKind::InvalidConfiguration, "weights must be nonnegative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw Error(ErrorKind::InvalidConfiguration, "weights must sum to 1");
    if (poles_.size() >= 2) {
      d_ = min_pairwise_distance(poles_);
    } else {
      d_ = std::numeric_limits<double>::infinity();
    }
  }

  int dim() const noexcept { return dim_; }
  int size() const noexcept { return static_cast<int>(poles_.size()); }
  const std::vector<Vec>& poles() const noexcept { return poles_; }
  const Vec& pole(int i) const noexcept { return poles_[i]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(int i) const noexcept { return weights_[i]; }

  /// Minimal separation; +inf for a single pole.
  double min_separation() const noexcept { return d_; }

  /// Separation if defined, otherwise the supplied reference length.
  double length_scale(double fallback = 1.0) const noexcept {
    return std::isfinite(d_) ? d_ : fallback;
  }

  Vec centroid() const {
    Vec c(dim_);
    for (const Vec& p : poles_) c += p;
    return c * (1.0 / poles_.size());
  }

  /// Largest distance from the centroid to a pole.
  double extent() const {
    const Vec c = centroid();
    double r = 0.0;
    for (const Vec& p : poles_) r = std::max(r, distance(p, c));
    return r;
  }

  /// Same poles, uniform weights.
  PoleConfiguration with_uniform_weights() const { return {dim_, poles_}; }

  int pole_index_at(const Vec& x) const noexcept {
    for (int i = 0; i < size(); ++i)
      if (poles_[i] == x) return i;
    return -1;
  }

private:
  int dim_;
  std::vector<Vec> poles_;
  std::vector<double> weights_;
  double d_;
};

/// Index (0-based) of the nearest or farthest pole; ties go to the lowest index.
inline int cell_index(const Vec& x, const PoleConfiguration& cfg, CellMode mode) {
  int best = 0;
  double best_d2 = 0.0;
  for (int i = 0; i < cfg.size(); ++i) {
    const double d2 = norm2(x - cfg.pole(i));
    if (d2 == 0.0)
      throw Error(ErrorKind::EvaluationAtSingularity, "evaluation at singularity");
    if (i == 0 || (mode == CellMode::Nearest ? d2 < best_d2 : d2 > best_d2)) {
      best = i;
      best_d2 = d2;
    }
  }
  return best;
}

/// Signed distance of x to the bisector hyperplane T_ij, positive on the a_i side.
inline double bisector_signed_distance(const Vec& x, const Vec& ai, const Vec& aj) {
  const Vec n = aj - ai;
  const double len = norm(n);
  return (norm2(x - aj) - norm2(x - ai)) / (2.0 * len);
}

/// Distance from x to the nearest tie hyperplane T_ij that bounds the
/// active cell in the given mode; +inf for a single pole.
inline double distance_to_tie_set(const Vec& x, const PoleConfiguration& cfg,
                                  CellMode mode) {
  const int k = cell_index(x, cfg, mode);
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cfg.size(); ++j) {
    if (j == k) continue;
    best = std::min(best, std::abs(bisector_signed_distance(x, cfg.pole(k), cfg.pole(j))));
  }
  return best;
}

} // namespace hardylab

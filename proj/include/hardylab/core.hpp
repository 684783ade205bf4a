#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hardylab {

/// Largest spatial dimension supported by the fixed-capacity point type.
inline constexpr int kMaxDim = 8;

enum class ErrorKind {
  UndefinedDistance,
  DegenerateConfiguration,
  InvalidConfiguration,
  EvaluationAtSingularity,
  InvalidFMean,
  GradientUndefined,
  CutoffExceedsCell,
  InvalidGroundState,
  DivergentIntegral,
  DivergentRadialIntegral,
  NonIntegrableTail,
  ToleranceNotReached,
  DegenerateQuotient,
  UnknownInequality,
  InadmissibleFunction,
  InvalidGrid,
  EigensolveFailed,
  InvalidShrinkingFamily,
  InvalidArgument,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Point or vector in R^N with runtime dimension and fixed capacity.
struct Vec {
  std::array<double, kMaxDim> c{};
  int dim = 0;

  Vec() = default;
  explicit Vec(int n) : dim(n) {
    if (n < 1 || n > kMaxDim)
      throw Error(ErrorKind::InvalidArgument, "dimension out of range");
  }
  Vec(std::initializer_list<double> xs) : Vec(static_cast<int>(xs.size())) {
    int i = 0;
    for (double x : xs) c[i++] = x;
  }

  static Vec zeros(int n) { return Vec(n); }
  static Vec unit(int n, int axis) {
    Vec v(n);
    v.c[axis] = 1.0;
    return v;
  }

  int size() const noexcept { return dim; }
  double& operator[](int i) noexcept { return c[i]; }
  double operator[](int i) const noexcept { return c[i]; }

  Vec& operator+=(const Vec& o) noexcept {
    for (int i = 0; i < dim; ++i) c[i] += o.c[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) noexcept {
    for (int i = 0; i < dim; ++i) c[i] -= o.c[i];
    return *this;
  }
  Vec& operator*=(double s) noexcept {
    for (int i = 0; i < dim; ++i) c[i] *= s;
    return *this;
  }
  friend Vec operator+(Vec a, const Vec& b) noexcept { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) noexcept { return a -= b; }
  friend Vec operator*(Vec a, double s) noexcept { return a *= s; }
  friend Vec operator*(double s, Vec a) noexcept { return a *= s; }
  friend Vec operator-(Vec a) noexcept { return a *= -1.0; }

  friend bool operator==(const Vec& a, const Vec& b) noexcept {
    if (a.dim != b.dim) return false;
    for (int i = 0; i < a.dim; ++i)
      if (a.c[i] != b.c[i]) return false;
    return true;
  }
};

inline double dot(const Vec& a, const Vec& b) noexcept {
  double s = 0.0;
  for (int i = 0; i < a.dim; ++i) s += a.c[i] * b.c[i];
  return s;
}
inline double norm2(const Vec& a) noexcept { return dot(a, a); }
inline double norm(const Vec& a) noexcept { return std::sqrt(norm2(a)); }
inline double distance(const Vec& a, const Vec& b) noexcept {
  double s = 0.0;
  for (int i = 0; i < a.dim; ++i) {
    const double d = a.c[i] - b.c[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Surface area of the unit sphere S^{N-1} in R^N.
inline double sphere_area(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

/// Volume of the unit ball in R^N.
inline double ball_volume(int n) { return sphere_area(n) / n; }

/// (N-2)^2/4, the sharp inverse-square Hardy constant in R^N.
inline double hardy_constant(int n) {
  const double a = n - 2.0;
  return 0.25 * a * a;
}

} // namespace hardylab

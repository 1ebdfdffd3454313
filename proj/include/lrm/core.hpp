#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lrm {

using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

// Non-dimensional parameter set. Lengths are in metres, everything else is
// dimensionless.
struct Scales {
  double lambda0 = 0;
  double ell_c = 0;
  double H = 0;
  double eta = 0;
  double eps = 0;
  double beta = 0;
  double k = 0;
  double sigma = 0;
  double alpha = 0;
};

Scales scales_from_physical(double lambda0, double ell_c, double H, double sigma, double alpha);

// Build directly from (eta, beta); lambda0 and ell_c are then expressed in units of H = 1.
Scales scales_from_rescaled(double eta, double beta, double sigma, double alpha);

struct RegimeReport {
  int dim = 2;
  double ratio = 0;
  double margin = 0.1;
  bool ok = false;
};

// d=3: eps*sigma / eta^{5/4};  d=2: eps*sigma^{3/2} / eta^{3/2}.
RegimeReport regime_report(const Scales& s, int dim, double margin = 0.1);

// Principal branch with Im(result) >= 0 for Im(a) >= 0. On the real axis the
// value is the limit taken from the upper half plane, so sqrt(-1) = i.
template <typename T>
std::complex<T> principal_sqrt(const std::complex<T>& a) {
  const T u = a.real();
  const T v = a.imag();
  const T r = std::hypot(u, v);
  const T sg = v < T(0) ? T(-1) : T(1);
  // (sqrt(r+u) + i sgn(v) sqrt(r-u)) / sqrt(2), evaluated without cancellation
  if (r == T(0)) return {T(0), T(0)};
  if (u >= T(0)) {
    const T re = std::sqrt((r + u) / T(2));
    return {re, sg * std::abs(v) / (T(2) * re)};
  }
  const T im = std::sqrt((r - u) / T(2));
  return {std::abs(v) / (T(2) * im), sg * im};
}

// Three-region complex index profile: air for z > 0, effective slab for
// -L < z < 0, water for z < -L. Values include the artificial absorption.
struct LayerStack {
  cplx n0_sq{1.0, 0.0};
  cplx ne_sq{1.0, 0.0};
  cplx n2_sq{1.0, 0.0};
  double L = 0.1;
  double kappa_m = 0;

  cplx index_sq(double z) const {
    if (z > 0) return n0_sq;
    if (z > -L) return ne_sq;
    return n2_sq;
  }
  // 0 air, 1 slab, 2 water
  int layer(double z) const { return z > 0 ? 0 : (z > -L ? 1 : 2); }
  cplx layer_index_sq(int j) const { return j == 0 ? n0_sq : (j == 1 ? ne_sq : n2_sq); }
};

// n0^2 + i alpha, n1^2 + mean(V) + i(kappa1 + alpha), n2^2 + i(kappa2 + alpha).
// kappa_m = kappa1 + alpha (inclusions only add absorption).
LayerStack make_layer_stack(double n0_sq, double n1_sq, double kappa1, cplx mean_V, double n2_sq,
                            double kappa2, double alpha, double L);

// Throws std::invalid_argument when a stack invariant fails. With
// require_index_order the slab and water must be optically denser than air.
void validate(const LayerStack& st, bool require_index_order = true);

// Uniform rectangular grid of sample points, 1 to 3 axes.
struct Grid {
  int dim = 2;
  std::array<double, 3> origin{0, 0, 0};
  std::array<double, 3> spacing{1, 1, 1};
  std::array<int, 3> extent{1, 1, 1};

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int a = 0; a < dim; ++a) n *= extent[a];
    return n;
  }
  double coord(int axis, int i) const { return origin[axis] + i * spacing[axis]; }
  double cell_volume() const {
    double v = 1;
    for (int a = 0; a < dim; ++a) v *= spacing[a];
    return v;
  }
  // row-major: the last axis varies fastest
  std::int64_t index(int i0, int i1 = 0, int i2 = 0) const {
    if (dim == 1) return i0;
    if (dim == 2) return std::int64_t(i0) * extent[1] + i1;
    return (std::int64_t(i0) * extent[1] + i1) * extent[2] + i2;
  }
  bool operator==(const Grid& o) const;
  bool compatible(const Grid& o, double rel_tol = 1e-12) const;
};

void validate(const Grid& g);

struct ComplexField {
  Grid grid;
  Eigen::VectorXcd values;

  ComplexField() = default;
  explicit ComplexField(const Grid& g) : grid(g), values(Eigen::VectorXcd::Zero(g.size())) {}
  ComplexField(const Grid& g, Eigen::VectorXcd v);
};

// Discrete L2 norm with cell-volume weights, optionally restricted to a box
// [lo, hi] in each axis.
double l2_norm(const ComplexField& f);
double l2_norm_box(const ComplexField& f, const std::array<double, 3>& lo, const std::array<double, 3>& hi);
cplx inner(const ComplexField& a, const ComplexField& b);  // sum a * conj(b) * cellvol

}  // namespace lrm

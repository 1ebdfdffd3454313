#pragma once

#include "lrm/core.hpp"

#include <functional>
#include <vector>

namespace lrm {

struct QuadResult {
  cplx value = 0;
  double error = 0;  // sum of panel Kronrod-Gauss differences
  int evaluations = 0;
  bool converged = true;
};

// Adaptive Gauss-Kronrod (7/15) on [a, b] for a complex integrand. Panels are
// bisected, largest error first, until the total error estimate is below
// max(abs_tol, rel_tol * |value|) or max_panels is reached.
QuadResult integrate_gk(const std::function<cplx(double)>& f, double a, double b, double abs_tol, double rel_tol,
                        int max_panels = 4000);

// Same, over the union of consecutive intervals given by `breaks`, sharing a
// single global error budget.
QuadResult integrate_gk(const std::function<cplx(double)>& f, const std::vector<double>& breaks, double abs_tol,
                        double rel_tol, int max_panels = 20000);

// H0^(1)(z) for Re z > 0, Im z >= 0. Ascending series near the origin,
// Hankel's asymptotic expansion for |z| >= 13, and the Steed continued
// fraction for K0(-iz) in the remaining strip where the series cancels badly.
cplx hankel0_first(cplx z);

// Independent evaluation through
//   (1/pi) int_0^pi exp(i z sin t) dt - (2i/pi) int_0^inf exp(-z sinh t) dt
// by adaptive quadrature. Slow; meant as a reference.
cplx hankel0_integral(cplx z, double tol = 1e-14);

}  // namespace lrm

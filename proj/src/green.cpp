#include "lrm/helmholtz.hpp"

#include <algorithm>
#include <cmath>

namespace lrm {

cplx free_green(int dim, cplx k_ne, const Eigen::Vector3d& x) {
  const double r = dim == 2 ? std::hypot(x[0], x[1]) : x.norm();
  if (r == 0) throw std::invalid_argument("free_green: singular at the origin");
  if (dim == 3) return std::exp(cplx(0, 1) * k_ne * r) / (4 * kPi * r);
  if (dim == 2) return cplx(0, 0.25) * hankel0_first(k_ne * r);
  throw std::invalid_argument("free_green: dimension must be 2 or 3");
}

cplx free_mode(cplx kz, double z) { return std::exp(cplx(0, 1) * kz * std::abs(z)) / (2.0 * cplx(0, 1) * kz); }

int ModeSolution::interval(double z) const {
  if (z < cuts[0]) return 0;
  if (z < cuts[1]) return 1;
  if (z < cuts[2]) return 2;
  return 3;
}

namespace {

const cplx I(0, 1);

struct Basis {
  cplx val, der;
};

// up: e^{ik(z-a)}, down: e^{-ik(z-b)} with a/b the lower/upper cut of the interval
Basis up_basis(cplx k, double z, double a) {
  const cplx e = std::exp(I * k * (z - a));
  return {e, I * k * e};
}
Basis down_basis(cplx k, double z, double b) {
  const cplx e = std::exp(-I * k * (z - b));
  return {e, -I * k * e};
}

}  // namespace

cplx ModeSolution::value(double z) const { return value_in(interval(z), z); }

cplx ModeSolution::derivative(double z) const { return derivative_in(interval(z), z); }

cplx ModeSolution::value_in(int m, double z) const {
  cplx v = 0;
  if (m > 0) v += up[m] * up_basis(kint[m], z, cuts[m - 1]).val;
  if (m < 3) v += down[m] * down_basis(kint[m], z, cuts[m]).val;
  return v;
}

cplx ModeSolution::derivative_in(int m, double z) const {
  cplx v = 0;
  if (m > 0) v += up[m] * up_basis(kint[m], z, cuts[m - 1]).der;
  if (m < 3) v += down[m] * down_basis(kint[m], z, cuts[m]).der;
  return v;
}

ModeSolution mode_green(double xi, double z0, const LayerStack& st, double k) {
  ModeSolution s;
  s.xi = xi;
  s.z0 = z0;
  for (int j = 0; j < 3; ++j) s.kz[j] = principal_sqrt(k * k * st.layer_index_sq(j) - xi * xi);
  if (std::abs(z0) < 1e-13 || std::abs(z0 + st.L) < 1e-13)
    throw std::invalid_argument("mode_green: source depth on an interface");
  std::array<double, 3> c{-st.L, 0.0, z0};
  std::sort(c.begin(), c.end());
  s.cuts = c;
  const double mids[4] = {c[0] - 1.0, 0.5 * (c[0] + c[1]), 0.5 * (c[1] + c[2]), c[2] + 1.0};
  for (int m = 0; m < 4; ++m) s.kint[m] = s.kz[st.layer(mids[m])];

  // unknowns: down0, up1, down1, up2, down2, up3
  Eigen::Matrix<cplx, 6, 6> A = Eigen::Matrix<cplx, 6, 6>::Zero();
  Eigen::Matrix<cplx, 6, 1> b = Eigen::Matrix<cplx, 6, 1>::Zero();
  auto col_up = [](int m) { return m == 1 ? 1 : (m == 2 ? 3 : 5); };
  auto col_down = [](int m) { return m == 0 ? 0 : (m == 1 ? 2 : 4); };
  for (int m = 0; m < 3; ++m) {
    const double z = c[m];
    // interval m (below) enters with minus sign, interval m+1 (above) with plus
    for (int side = 0; side < 2; ++side) {
      const int iv = m + side;
      const double sg = side == 0 ? -1.0 : 1.0;
      if (iv > 0) {
        const Basis bu = up_basis(s.kint[iv], z, c[iv - 1]);
        A(2 * m, col_up(iv)) += sg * bu.val;
        A(2 * m + 1, col_up(iv)) += sg * bu.der;
      }
      if (iv < 3) {
        const Basis bd = down_basis(s.kint[iv], z, c[iv]);
        A(2 * m, col_down(iv)) += sg * bd.val;
        A(2 * m + 1, col_down(iv)) += sg * bd.der;
      }
    }
    if (z == z0) b(2 * m + 1) = 1.0;
  }
  // scale derivative rows so both kinds of equations are O(1)
  double kscale = 0;
  for (int m = 0; m < 4; ++m) kscale = std::max(kscale, std::abs(s.kint[m]));
  for (int m = 0; m < 3; ++m) {
    A.row(2 * m + 1) /= kscale;
    b(2 * m + 1) /= kscale;
  }
  Eigen::PartialPivLU<Eigen::Matrix<cplx, 6, 6>> lu(A);
  s.rcond = lu.rcond();
  if (!(s.rcond > 1e-12)) throw std::runtime_error("mode_green: interface system is near singular");
  const Eigen::Matrix<cplx, 6, 1> x = lu.solve(b);
  s.down[0] = x(0);
  s.up[1] = x(1);
  s.down[1] = x(2);
  s.up[2] = x(3);
  s.down[2] = x(4);
  s.up[3] = x(5);
  return s;
}

cplx mode_green_value(double xi, double z, double z0, const LayerStack& st, double k) {
  return mode_green(xi, z0, st, k).value(z);
}

namespace {

double transverse_distance(int dim, const Eigen::Vector3d& x, const Eigen::Vector3d& x0) {
  if (dim == 2) return std::abs(x[0] - x0[0]);
  return std::hypot(x[0] - x0[0], x[1] - x0[1]);
}

double depth(int dim, const Eigen::Vector3d& x) { return dim == 2 ? x[1] : x[2]; }

// shortest vertical path of the reflected part when both points sit in layer j
double reflection_distance(int j, double z, double z0, double L) {
  if (j == 0) return z + z0;
  if (j == 2) return (-L - z) + (-L - z0);
  return std::min(-z - z0, (z + L) + (z0 + L));
}

GreenValue transverse_quadrature(int dim, const Eigen::Vector3d& x, const Eigen::Vector3d& x0, const LayerStack& st,
                                 double k, const GreenQuadConfig& q, bool subtract, int sub_layer) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("layered_green: dimension must be 2 or 3");
  const double z = depth(dim, x), z0 = depth(dim, x0);
  const double rho = transverse_distance(dim, x, x0);
  const int jz = st.layer(z), j0 = st.layer(z0);
  double dist;
  if (subtract && sub_layer == jz && jz == j0)
    dist = reflection_distance(jz, z, z0, st.L);
  else if (subtract)
    dist = std::abs(z - z0);  // mixed layers: the subtracted term decays at least as fast
  else
    dist = std::abs(z - z0);
  if (subtract && sub_layer == 1 && !(jz == 1 && j0 == 1)) {
    // regular part outside the slab: both terms decay like e^{-xi |z - z0|}
    dist = std::abs(z - z0);
  }
  double nmax = 0;
  for (int j = 0; j < 3; ++j) nmax = std::max(nmax, principal_sqrt(st.layer_index_sq(j)).real());
  const double xb = k * nmax;
  GreenValue out;
  out.subtracted = subtract;
  double Xi = 1.5 * xb + (dist > 0 ? std::log(1.0 / q.tail_tol) / dist : 0.0);
  const double cap = q.xi_cap_factor * xb;
  if (dist <= 0 || Xi > cap) {
    Xi = cap;
    out.converged = false;
  }
  out.xi_max = Xi;

  const cplx nsub = sub_layer >= 0 ? st.layer_index_sq(sub_layer) : cplx(0);
  auto integrand = [&](double xi) -> cplx {
    const ModeSolution m = mode_green(xi, z0, st, k);
    cplx g = m.value(z);
    if (subtract) g -= free_mode(principal_sqrt(k * k * nsub - xi * xi), z - z0);
    if (dim == 2) return g * std::cos(xi * rho) / kPi;
    return g * std::cyl_bessel_j(0.0, xi * rho) * xi / (2 * kPi);
  };

  std::vector<double> br{0.0};
  for (int j = 0; j < 3; ++j) br.push_back(k * principal_sqrt(st.layer_index_sq(j)).real());
  br.push_back(1.25 * xb);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  const double osc = std::max(rho, 1e-9);
  const double seg = std::min(xb / 8, 3 * kPi / osc);
  std::vector<double> breaks;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const int n = std::max(1, int(std::ceil((br[i + 1] - br[i]) / seg)));
    for (int t = 0; t < n; ++t) breaks.push_back(br[i] + (br[i + 1] - br[i]) * t / n);
  }
  double a = br.back();
  double step = seg;
  while (a < Xi && breaks.size() < 30000) {
    breaks.push_back(a);
    step = std::min(seg * 4, std::max(step, seg));
    a += step;
  }
  breaks.push_back(Xi);
  const QuadResult r = integrate_gk(integrand, breaks, q.abs_tol, q.rel_tol, q.max_panels);
  out.value = r.value;
  out.converged = out.converged && r.converged;
  const double fx = std::abs(integrand(Xi));
  out.tail_bound = dist > 0 ? fx / dist : fx * Xi;
  out.error = r.error + out.tail_bound;
  return out;
}

}  // namespace

GreenValue layered_green(int dim, const Eigen::Vector3d& x, const Eigen::Vector3d& x0, const LayerStack& st, double k,
                         const GreenQuadConfig& q) {
  if ((x - x0).norm() == 0) throw std::invalid_argument("layered_green: x == x0");
  const double z = depth(dim, x), z0 = depth(dim, x0);
  const int jz = st.layer(z), j0 = st.layer(z0);
  if (jz == j0) {
    GreenValue g = transverse_quadrature(dim, x, x0, st, k, q, true, jz);
    Eigen::Vector3d d = x - x0;
    g.value -= free_green(dim, k * principal_sqrt(st.layer_index_sq(jz)), d);
    return g;
  }
  return transverse_quadrature(dim, x, x0, st, k, q, false, -1);
}

GreenValue layered_green_regular_part(int dim, const Eigen::Vector3d& x, const Eigen::Vector3d& x0,
                                      const LayerStack& st, double k, const GreenQuadConfig& q) {
  return transverse_quadrature(dim, x, x0, st, k, q, true, 1);
}

}  // namespace lrm

#include "lrm/core.hpp"

#include <sstream>

namespace lrm {

Scales scales_from_physical(double lambda0, double ell_c, double H, double sigma, double alpha) {
  if (!(lambda0 > 0 && ell_c > 0 && H > 0)) throw std::invalid_argument("lengths must be positive");
  if (!(ell_c < lambda0 && lambda0 < H)) throw std::invalid_argument("scale separation violated");
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (sigma < 0) throw std::invalid_argument("sigma must be nonnegative");
  Scales s;
  s.lambda0 = lambda0;
  s.ell_c = ell_c;
  s.H = H;
  s.eta = lambda0 / H;
  s.eps = ell_c / lambda0;
  s.beta = s.eps * s.eta;
  s.k = 2 * kPi / s.eta;
  s.sigma = sigma;
  s.alpha = alpha;
  return s;
}

Scales scales_from_rescaled(double eta, double beta, double sigma, double alpha) {
  return scales_from_physical(eta, beta, 1.0, sigma, alpha);
}

RegimeReport regime_report(const Scales& s, int dim, double margin) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("dimension must be 2 or 3");
  RegimeReport r;
  r.dim = dim;
  r.margin = margin;
  if (dim == 3)
    r.ratio = s.eps * s.sigma / std::pow(s.eta, 1.25);
  else
    r.ratio = s.eps * std::pow(s.sigma, 1.5) / std::pow(s.eta, 1.5);
  r.ok = r.ratio < margin;
  return r;
}

LayerStack make_layer_stack(double n0_sq, double n1_sq, double kappa1, cplx mean_V, double n2_sq,
                            double kappa2, double alpha, double L) {
  LayerStack st;
  st.n0_sq = {n0_sq, alpha};
  st.ne_sq = {n1_sq + mean_V.real(), kappa1 + mean_V.imag() + alpha};
  st.n2_sq = {n2_sq, kappa2 + alpha};
  st.L = L;
  st.kappa_m = kappa1 + alpha;
  return st;
}

void validate(const LayerStack& st, bool require_index_order) {
  if (!(st.n0_sq.imag() > 0 && st.ne_sq.imag() > 0 && st.n2_sq.imag() > 0))
    throw std::invalid_argument("layer stack: every layer needs positive absorption");
  if (require_index_order && !(st.ne_sq.real() > st.n0_sq.real() && st.n2_sq.real() > st.n0_sq.real()))
    throw std::invalid_argument("layer stack: slab and water must be denser than air");
  if (!(st.L > 0)) throw std::invalid_argument("layer stack: thickness must be positive");
  if (st.kappa_m < 0 || st.kappa_m > st.ne_sq.imag())
    throw std::invalid_argument("layer stack: kappa_m must lie in [0, Im ne_sq]");
}

bool Grid::operator==(const Grid& o) const {
  if (dim != o.dim) return false;
  for (int a = 0; a < dim; ++a)
    if (origin[a] != o.origin[a] || spacing[a] != o.spacing[a] || extent[a] != o.extent[a]) return false;
  return true;
}

bool Grid::compatible(const Grid& o, double rel_tol) const {
  if (dim != o.dim) return false;
  for (int a = 0; a < dim; ++a) {
    if (extent[a] != o.extent[a]) return false;
    if (std::abs(spacing[a] - o.spacing[a]) > rel_tol * spacing[a]) return false;
    if (std::abs(origin[a] - o.origin[a]) > rel_tol * spacing[a] * extent[a]) return false;
  }
  return true;
}

void validate(const Grid& g) {
  if (g.dim < 1 || g.dim > 3) throw std::invalid_argument("grid: dimension must be 1, 2 or 3");
  for (int a = 0; a < g.dim; ++a) {
    if (!(g.spacing[a] > 0)) throw std::invalid_argument("grid: spacing must be positive");
    if (g.extent[a] < 1) throw std::invalid_argument("grid: extent must be at least 1");
  }
}

ComplexField::ComplexField(const Grid& g, Eigen::VectorXcd v) : grid(g), values(std::move(v)) {
  validate(g);
  if (values.size() != g.size()) throw std::invalid_argument("field: value count does not match grid");
}

double l2_norm(const ComplexField& f) { return std::sqrt(f.values.squaredNorm() * f.grid.cell_volume()); }

double l2_norm_box(const ComplexField& f, const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
  const Grid& g = f.grid;
  double acc = 0;
  std::array<int, 3> n{g.extent[0], g.dim > 1 ? g.extent[1] : 1, g.dim > 2 ? g.extent[2] : 1};
  auto inside = [&](int a, int i) {
    double c = g.coord(a, i);
    return c >= lo[a] && c <= hi[a];
  };
  for (int i = 0; i < n[0]; ++i) {
    if (!inside(0, i)) continue;
    for (int j = 0; j < n[1]; ++j) {
      if (g.dim > 1 && !inside(1, j)) continue;
      for (int l = 0; l < n[2]; ++l) {
        if (g.dim > 2 && !inside(2, l)) continue;
        acc += std::norm(f.values[g.index(i, j, l)]);
      }
    }
  }
  return std::sqrt(acc * g.cell_volume());
}

cplx inner(const ComplexField& a, const ComplexField& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("inner: grid mismatch");
  cplx s = 0;
  for (Eigen::Index i = 0; i < a.values.size(); ++i) s += a.values[i] * std::conj(b.values[i]);
  return s * a.grid.cell_volume();
}

}  // namespace lrm

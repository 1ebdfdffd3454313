#pragma once

namespace lrm {

namespace detail {
inline cplx apply_cap(cplx V, cplx mean, double cap, bool* capped) {
  const cplx d = V - mean;
  const double a = std::abs(d);
  if (cap > 0 && a > cap) {
    if (capped) *capped = true;
    return mean + d * (cap / a);
  }
  if (capped) *capped = false;
  return V;
}
}  // namespace detail

template <typename Mask>
GridSample eval_V_grid(const MediumRealization& r, const Grid& g, Mask mask) {
  const int dim = r.spec().dim;
  if (g.dim != dim) throw std::invalid_argument("eval_V_grid: dimension mismatch");
  const double margin = r.spec().r_max * r.spec().beta;
  GridSample out;
  out.V.assign(std::size_t(g.size()), cplx(0));
  std::vector<char> on(std::size_t(g.size()), 0);
  std::array<int, 3> n{g.extent[0], dim > 1 ? g.extent[1] : 1, dim > 2 ? g.extent[2] : 1};
  for (int i = 0; i < n[0]; ++i)
    for (int j = 0; j < n[1]; ++j)
      for (int l = 0; l < n[2]; ++l) {
        if (!mask(i, j, l)) continue;
        Eigen::Vector3d x(g.coord(0, i), dim > 1 ? g.coord(1, j) : 0.0, dim > 2 ? g.coord(2, l) : 0.0);
        if (!r.box().contains(x, dim, margin))
          throw std::out_of_range("eval_V_grid: grid point outside the padded generation box");
        on[std::size_t(g.index(i, j, l))] = 1;
      }
  for (const Inclusion& c : r.inclusions()) {
    std::array<int, 3> a{0, 0, 0}, b{0, 0, 0};
    bool empty = false;
    for (int ax = 0; ax < dim; ++ax) {
      a[ax] = std::max(0, int(std::ceil((c.center[ax] - c.radius - g.origin[ax]) / g.spacing[ax])));
      b[ax] = std::min(n[ax] - 1, int(std::floor((c.center[ax] + c.radius - g.origin[ax]) / g.spacing[ax])));
      if (a[ax] > b[ax]) empty = true;
    }
    if (empty) continue;
    for (int i = a[0]; i <= b[0]; ++i)
      for (int j = a[1]; j <= b[1]; ++j)
        for (int l = a[2]; l <= b[2]; ++l) {
          const auto id = std::size_t(g.index(i, j, l));
          if (!on[id]) continue;
          Eigen::Vector3d x(g.coord(0, i), dim > 1 ? g.coord(1, j) : 0.0, dim > 2 ? g.coord(2, l) : 0.0);
          if (r.inside(c, x)) out.V[id] += c.contrast;
        }
  }
  for (std::size_t id = 0; id < out.V.size(); ++id) {
    if (!on[id]) {
      out.V[id] = r.mean();
      continue;
    }
    bool capped = false;
    out.V[id] = detail::apply_cap(out.V[id], r.mean(), r.cap(), &capped);
    out.cap_events += capped;
    ++out.evaluations;
  }
  return out;
}

}  // namespace lrm

#include "lrm/helmholtz.hpp"
#include "lrm/parallel.hpp"

#include <sstream>

namespace lrm {

LayerStack with_kappa_e(const LayerStack& base, double kappa_e) {
  if (!(kappa_e > 0)) throw std::invalid_argument("kappa_e must be positive");
  LayerStack s = base;
  const double alpha = base.n0_sq.imag();
  s.ne_sq = cplx(base.ne_sq.real(), kappa_e + alpha);
  s.kappa_m = std::min(base.kappa_m, kappa_e + alpha);
  return s;
}

namespace {

struct ZRule {
  std::vector<double> z, w;
};

// midpoint nodes across (-L, 0); the source depth never coincides with a node
// because it is nudged by a quarter cell if needed
ZRule slab_rule(double L, int n) {
  ZRule r;
  const double dz = L / n;
  for (int i = 0; i < n; ++i) {
    r.z.push_back(-L + (i + 0.5) * dz);
    r.w.push_back(dz);
  }
  return r;
}

double nudge(double z0, const ZRule& r, double L) {
  const double dz = L / double(r.z.size());
  for (double z : r.z)
    if (std::abs(z - z0) < 0.05 * dz) return z0 + 0.25 * dz;
  return z0;
}

// int_S |F(x', z)|^2 dx' dz by Parseval in x' and the z rule; F-hat is the mode
// solution, minus the slab free mode when `regular` is set
double parseval_norm(int dim, double z0, const LayerStack& st, double k, const ZRule& zr, bool regular,
                     const GreenQuadConfig& q) {
  double nmax = 0;
  for (int j = 0; j < 3; ++j) nmax = std::max(nmax, principal_sqrt(st.layer_index_sq(j)).real());
  const double xb = k * nmax;
  double dmin = 1e300;
  for (double z : zr.z) dmin = std::min(dmin, std::abs(z - z0));
  auto f = [&](double xi) -> cplx {
    const ModeSolution m = mode_green(xi, z0, st, k);
    const cplx ke = principal_sqrt(k * k * st.ne_sq - xi * xi);
    double s = 0;
    for (std::size_t i = 0; i < zr.z.size(); ++i) {
      cplx g = m.value(zr.z[i]);
      if (regular) g -= free_mode(ke, zr.z[i] - z0);
      s += zr.w[i] * std::norm(g);
    }
    return dim == 2 ? s / kPi : s * xi / (2 * kPi);
  };
  const double Xi = std::min(q.xi_cap_factor * xb, 1.5 * xb + std::log(1.0 / q.tail_tol) / (2 * dmin));
  std::vector<double> br{0.0};
  for (int j = 0; j < 3; ++j) br.push_back(k * principal_sqrt(st.layer_index_sq(j)).real());
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  std::vector<double> breaks;
  const double seg = xb / 16;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const int n = std::max(1, int(std::ceil((br[i + 1] - br[i]) / seg)));
    for (int t = 0; t < n; ++t) breaks.push_back(br[i] + (br[i + 1] - br[i]) * t / n);
  }
  for (double a = br.back(); a < Xi; a = a < 4 * xb ? a + seg : a * 1.5) breaks.push_back(a);
  breaks.push_back(Xi);
  const QuadResult r = integrate_gk(f, breaks, 0.0, 1e-7, q.max_panels);
  return std::sqrt(std::max(0.0, r.value.real()));
}

}  // namespace

std::vector<DiagnosticRow> green_norm_diagnostics(const LayerStack& base, const std::vector<double>& k_sweep,
                                                  const std::vector<double>& kappa_sweep,
                                                  const DiagnosticsConfig& cfg, int jobs) {
  if (k_sweep.size() != kappa_sweep.size()) throw std::invalid_argument("diagnostics: sweeps must have equal length");
  if (cfg.dim != 2 && cfg.dim != 3) throw std::invalid_argument("diagnostics: dimension must be 2 or 3");
  const int d = cfg.dim;
  const std::size_t n = k_sweep.size();
  std::vector<std::array<double, 4>> out(n);
  parallel_for(long(n), jobs, [&](long i) {
    const double k = k_sweep[std::size_t(i)];
    const double ke = kappa_sweep[std::size_t(i)];
    const LayerStack st = with_kappa_e(base, ke);
    const ZRule zr = slab_rule(st.L, cfg.z_nodes);
    double p_l2 = 0, g_l2_s = 0, g_l2_k = 0, p_inf = 0;
    for (double frac : cfg.source_depths) {
      const double z0 = nudge(-frac * st.L, zr, st.L);
      p_l2 = std::max(p_l2, parseval_norm(d, z0, st, k, zr, true, cfg.quad));
      g_l2_s = std::max(g_l2_s, parseval_norm(d, z0, st, k, zr, false, cfg.quad));
      // sup of |p| over sample points in S and in K
      std::vector<double> zs;
      for (std::size_t j = 0; j < zr.z.size(); j += std::max<std::size_t>(1, zr.z.size() / 6)) zs.push_back(zr.z[j]);
      for (double h : cfg.detector_heights) zs.push_back(h);
      for (int a = 0; a < cfg.sup_points; ++a) {
        const double dx = cfg.sup_points > 1 ? cfg.sup_window * a / (cfg.sup_points - 1) : 0.0;
        for (double z : zs) {
          Eigen::Vector3d x = Eigen::Vector3d::Zero(), x0 = Eigen::Vector3d::Zero();
          x[0] = dx;
          x[d - 1] = z;
          x0[d - 1] = z0;
          const GreenValue g = layered_green_regular_part(d, x, x0, st, k, cfg.quad);
          p_inf = std::max(p_inf, std::abs(g.value));
        }
      }
    }
    for (double h : cfg.detector_heights) g_l2_k = std::max(g_l2_k, parseval_norm(d, h, st, k, zr, false, cfg.quad));
    out[std::size_t(i)] = {p_l2, p_inf, g_l2_s, g_l2_k};
  });
  std::vector<DiagnosticRow> rows;
  const char* names[4] = {"p_L2_S", "p_Linf_SK", "G_L2_S_src_S", "G_L2_S_src_K"};
  for (std::size_t i = 0; i < n; ++i) {
    const double k = k_sweep[i], ke = kappa_sweep[i];
    for (int c = 0; c < 4; ++c) {
      const double scale = c == 1 ? ke * std::pow(k, 2.0 - d) : ke * std::pow(k, 2.0 - 0.5 * d);
      rows.push_back({k, ke, names[c], out[i][std::size_t(c)], out[i][std::size_t(c)] * scale});
    }
  }
  return rows;
}

std::string diagnostics_csv(const std::vector<DiagnosticRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "k,kappa_e,norm_name,value,normalized_ratio\n";
  for (const auto& r : rows) os << r.k << ',' << r.kappa_e << ',' << r.norm_name << ',' << r.value << ',' << r.normalized_ratio << '\n';
  return os.str();
}

}  // namespace lrm

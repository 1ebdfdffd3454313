#include "lrm/corrector.hpp"
#include "lrm/io.hpp"
#include "lrm/parallel.hpp"

#include <random>

namespace lrm {

ComplexField born_corrector(const HelmholtzProblem& P, const MediumRealization& r, const ComplexField& u) {
  if (!u.grid.compatible(P.grid())) throw std::invalid_argument("born_corrector: grid mismatch");
  const HelmholtzProblem::Perturbation p = P.perturbation(r);
  P.check_admissible(p);
  return ComplexField(P.grid(), P.solve(-p.D.cwiseProduct(u.values)));
}

ComplexField born_corrector(const MediumRealization& r, const ComplexField& u, const LayerStack& st, double k,
                            const SolverConfig& cfg) {
  HelmholtzProblem P(u.grid, st, k, cfg);
  return born_corrector(P, r, u);
}

WienerCells wiener_cells(const HelmholtzProblem& P, int factor) {
  if (factor < 1) throw std::invalid_argument("wiener grid: factor must be >= 1");
  const Grid& g = P.grid();
  const int nx = g.extent[0], nz = g.extent[1];
  int j_lo = -1, j_hi = -1;
  for (int j = 0; j < nz; ++j)
    if (P.is_slab_cell(g.index(0, j))) {
      if (j_lo < 0) j_lo = j;
      j_hi = j + 1;
    }
  if (j_lo < 0) throw std::invalid_argument("wiener grid: solver grid has no slab cells");
  WienerCells w;
  w.j_lo = j_lo;
  w.nx = (nx + factor - 1) / factor;
  w.nz = (j_hi - j_lo + factor - 1) / factor;
  w.owner.assign(std::size_t(g.size()), -1);
  w.volume.assign(std::size_t(w.nx) * std::size_t(w.nz), 0.0);
  const double dv = g.cell_volume();
  for (int i = 0; i < nx; ++i)
    for (int j = j_lo; j < j_hi; ++j) {
      const int c = (i / factor) * w.nz + (j - j_lo) / factor;
      w.owner[std::size_t(g.index(i, j))] = c;
      w.volume[std::size_t(c)] += dv;
    }
  return w;
}

std::vector<cplx> wiener_increments(const WienerGrid& wg, const std::vector<double>& volume) {
  Rng rng = make_rng(wg.seed, 0x5749454eULL);
  std::normal_distribution<double> nd;
  std::vector<cplx> dW(volume.size());
  for (std::size_t c = 0; c < volume.size(); ++c) {
    const double x1 = nd(rng);
    const double x2 = nd(rng);
    const Eigen::Vector2d v = wg.M_half * Eigen::Vector2d(x1, x2) * std::sqrt(volume[c]);
    dW[c] = cplx(v[0], v[1]);
  }
  return dW;
}

ComplexField sample_limit_corrector(const HelmholtzProblem& P, const ComplexField& u, const CovarianceModel& cov,
                                    const WienerGrid& wg) {
  if (!u.grid.compatible(P.grid())) throw std::invalid_argument("limit corrector: grid mismatch");
  const double h = P.grid().spacing[0];
  const double lam_e = 2 * kPi / (P.k() * principal_sqrt(P.stack().ne_sq).real());
  if (wg.factor * h > lam_e / 8 * (1 + 1e-12))
    throw std::invalid_argument("limit corrector: Wiener cells coarser than 1/8 of the slab wavelength");
  const WienerCells wc = wiener_cells(P, wg.factor);
  const std::vector<cplx> dW = wiener_increments(wg, wc.volume);
  const double c = -cov.sigma * P.k() * P.k();
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(P.grid().size());
  for (std::size_t id = 0; id < wc.owner.size(); ++id) {
    const int o = wc.owner[id];
    if (o < 0) continue;
    rhs[Eigen::Index(id)] = c * u.values[Eigen::Index(id)] * (dW[std::size_t(o)] / wc.volume[std::size_t(o)]);
  }
  return ComplexField(P.grid(), P.solve(rhs));
}

namespace {

std::int64_t nearest_cell(const Grid& g, const Eigen::Vector2d& x) {
  const int i = int(std::lround((x[0] - g.origin[0]) / g.spacing[0]));
  const int j = int(std::lround((x[1] - g.origin[1]) / g.spacing[1]));
  if (i < 0 || j < 0 || i >= g.extent[0] || j >= g.extent[1])
    throw std::invalid_argument("point outside the solver grid");
  return g.index(i, j);
}

}  // namespace

Eigen::MatrixXcd corrector_covariance_matrix(const HelmholtzProblem& P, const ComplexField& u,
                                             const CovarianceModel& cov, const std::vector<Eigen::Vector2d>& points) {
  if (!u.grid.compatible(P.grid())) throw std::invalid_argument("corrector covariance: grid mismatch");
  const Grid& g = P.grid();
  const double dv = g.cell_volume();
  const std::size_t n = points.size();
  std::vector<Eigen::VectorXcd> G(n);
  for (std::size_t a = 0; a < n; ++a) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(g.size());
    e[nearest_cell(g, points[a])] = 1.0 / dv;
    G[a] = P.solve(e);
  }
  std::vector<double> w;
  std::vector<Eigen::Index> ids;
  for (std::int64_t id = 0; id < g.size(); ++id)
    if (P.is_slab_cell(id)) {
      ids.push_back(id);
      w.push_back(std::norm(u.values[id]) * dv);
    }
  const double k4 = std::pow(P.k(), 4);
  Eigen::MatrixXcd C(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      cplx s = 0;
      if (a == b) {
        double d = 0;
        for (std::size_t t = 0; t < ids.size(); ++t) d += std::norm(G[a][ids[t]]) * w[t];
        s = d;
      } else {
        for (std::size_t t = 0; t < ids.size(); ++t) s += G[a][ids[t]] * std::conj(G[b][ids[t]]) * w[t];
      }
      C(a, b) = k4 * cov.tau_sq * s;
      C(b, a) = std::conj(C(a, b));
    }
  return C;
}

cplx corrector_covariance(const HelmholtzProblem& P, const ComplexField& u, const CovarianceModel& cov,
                          const Eigen::Vector2d& x, const Eigen::Vector2d& y) {
  return corrector_covariance_matrix(P, u, cov, {x, y})(0, 1);
}

ComplexField test_function_field(const Grid& g, const TestFunction& t) {
  return gaussian_source(g, t.cx, t.cz, t.width, 1.0);
}

Eigen::Matrix2d predicted_projection_covariance(const HelmholtzProblem& P, const ComplexField& u,
                                                const CovarianceModel& cov, const ComplexField& phi) {
  if (!u.grid.compatible(P.grid()) || !phi.grid.compatible(P.grid()))
    throw std::invalid_argument("projection covariance: grid mismatch");
  const Eigen::VectorXcd m = P.solve(phi.values.conjugate());
  const double dv = P.grid().cell_volume();
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  for (std::int64_t id = 0; id < P.grid().size(); ++id) {
    if (!P.is_slab_cell(id)) continue;
    const cplx c = u.values[id] * m[id];
    Eigen::Matrix2d A;
    A << c.real(), -c.imag(), c.imag(), c.real();
    S += A * cov.M * A.transpose() * dv;
  }
  return cov.sigma * cov.sigma * std::pow(P.k(), 4) * S;
}

json to_json(const CorrectorEnsemble& e) {
  json j;
  j["beta"] = e.beta;
  j["dim"] = e.dim;
  j["config_hash"] = e.config_hash;
  j["phis"] = json::array();
  for (const auto& p : e.phis) j["phis"].push_back({p.cx, p.cz, p.width});
  j["members"] = json::array();
  auto cx = [](const std::vector<cplx>& v) {
    json a = json::array();
    for (const auto& z : v) a.push_back({z.real(), z.imag()});
    return a;
  };
  for (const auto& m : e.members)
    j["members"].push_back({{"seed", m.seed},
                            {"proj", cx(m.proj)},
                            {"proj_born", cx(m.proj_born)},
                            {"norm_w", m.norm_w},
                            {"norm_born", m.norm_born},
                            {"norm_resid", m.norm_resid},
                            {"residual", m.report.residual},
                            {"energy_rel_error", m.report.energy_rel_error},
                            {"iterations", m.report.iterations},
                            {"cap_events", m.report.cap_events}});
  return j;
}

CorrectorEnsemble ensemble_from_json(const json& j) {
  CorrectorEnsemble e;
  e.beta = j.at("beta");
  e.dim = j.at("dim");
  e.config_hash = j.at("config_hash");
  for (const auto& p : j.at("phis")) e.phis.push_back({p.at(0), p.at(1), p.at(2)});
  auto cx = [](const json& a) {
    std::vector<cplx> v;
    for (const auto& z : a) v.emplace_back(z.at(0).get<double>(), z.at(1).get<double>());
    return v;
  };
  for (const auto& m : j.at("members")) {
    EnsembleMember x;
    x.seed = m.at("seed");
    x.proj = cx(m.at("proj"));
    x.proj_born = cx(m.at("proj_born"));
    x.norm_w = m.at("norm_w");
    x.norm_born = m.at("norm_born");
    x.norm_resid = m.at("norm_resid");
    x.report.residual = m.at("residual");
    x.report.energy_rel_error = m.at("energy_rel_error");
    x.report.iterations = m.at("iterations");
    x.report.cap_events = m.at("cap_events");
    e.members.push_back(std::move(x));
  }
  return e;
}

CorrectorEnsemble run_ensemble(const HelmholtzProblem& P, const ComplexField& f, const ComplexField& u,
                               const EnsembleConfig& cfg, int jobs, const MemberSink& sink) {
  validate(cfg.medium);
  const Grid& g = P.grid();
  std::vector<ComplexField> phi;
  for (const auto& t : cfg.phis) phi.push_back(test_function_field(g, t));
  const std::array<double, 3> lo{cfg.detector.x_min, cfg.detector.z_min, 0}, hi{cfg.detector.x_max, cfg.detector.z_max, 0};
  const Box box = padded_box(slab_region(g, P.stack()), cfg.medium);
  CorrectorEnsemble e;
  e.beta = cfg.medium.beta;
  e.dim = 2;
  e.phis = cfg.phis;
  e.members.resize(cfg.seeds.size());
  P.solve(Eigen::VectorXcd::Zero(g.size()));  // factorize before the workers start
  parallel_for(long(cfg.seeds.size()), jobs, [&](long i) {
    EnsembleMember m;
    m.seed = cfg.seeds[std::size_t(i)];
    const MediumRealization r = sample_realization(cfg.medium, box, m.seed);
    const RandomSolution s = solve_random(P, r, f, u);
    for (const auto& p : phi) {
      m.proj.push_back(inner(s.w, p));
      m.proj_born.push_back(inner(s.born, p));
    }
    m.norm_w = l2_norm_box(s.w, lo, hi);
    m.norm_born = l2_norm_box(s.born, lo, hi);
    m.norm_resid = l2_norm_box(ComplexField(g, s.w.values - s.born.values), lo, hi);
    m.report = s.report;
    if (sink) sink(m, s);
    e.members[std::size_t(i)] = std::move(m);
  });
  return e;
}

CltResult clt_test_samples(const std::vector<Eigen::Vector2d>& x, const Eigen::Matrix2d& predicted) {
  if (x.size() < 2) throw std::invalid_argument("clt_test: need at least two samples");
  CltResult r;
  r.n = x.size();
  r.predicted = predicted;
  const double n = double(x.size());
  for (const auto& v : x) r.mean += v;
  r.mean /= n;
  for (const auto& v : x) r.empirical += (v - r.mean) * (v - r.mean).transpose();
  r.empirical /= (n - 1);
  bool zero = true;
  for (const auto& v : x) zero = zero && v.isZero(0);
  if (zero && predicted.isZero(0)) {
    r.degenerate = true;
    return r;
  }
  std::vector<double> re, im;
  for (const auto& v : x) {
    re.push_back(v[0]);
    im.push_back(v[1]);
  }
  const double s_re = std::sqrt(std::max(0.0, predicted(0, 0))), s_im = std::sqrt(std::max(0.0, predicted(1, 1)));
  r.ks_re = ks_statistic(re, [&](double t) { return normal_cdf(t, 0, s_re); });
  r.ks_im = ks_statistic(im, [&](double t) { return normal_cdf(t, 0, s_im); });
  r.p_re = ks_pvalue(r.ks_re, x.size());
  r.p_im = ks_pvalue(r.ks_im, x.size());
  const double tp = predicted.trace();
  r.cov_ratio = tp > 0 ? r.empirical.trace() / tp : std::numeric_limits<double>::infinity();
  return r;
}

CltResult clt_test(const CorrectorEnsemble& e, std::size_t phi_index, const Eigen::Matrix2d& predicted,
                   std::size_t min_members) {
  if (e.members.size() < min_members)
    throw std::invalid_argument("clt_test: ensemble has " + std::to_string(e.members.size()) + " members, need " +
                                std::to_string(min_members));
  if (phi_index >= e.phis.size()) throw std::invalid_argument("clt_test: no such test function");
  const double scale = std::pow(e.beta, -0.5 * e.dim);
  std::vector<Eigen::Vector2d> x;
  for (const auto& m : e.members) x.emplace_back(m.proj[phi_index].real() * scale, m.proj[phi_index].imag() * scale);
  return clt_test_samples(x, predicted);
}

ScalingFit fit_scaling(const std::vector<CorrectorEnsemble>& per_beta) {
  if (per_beta.size() < 3) throw std::invalid_argument("scaling: need at least three beta values");
  std::vector<const CorrectorEnsemble*> es;
  for (const auto& e : per_beta) es.push_back(&e);
  std::sort(es.begin(), es.end(), [](auto a, auto b) { return a->beta < b->beta; });
  if (es.back()->beta < 4 * es.front()->beta * (1 - 1e-12))
    throw std::invalid_argument("scaling: beta values must span a factor of at least 4");
  const std::size_t ns = es[0]->members.size();
  for (auto e : es) {
    if (e->members.size() != ns) throw std::invalid_argument("scaling: ensembles differ in size");
    for (std::size_t i = 0; i < ns; ++i)
      if (e->members[i].seed != es[0]->members[i].seed) throw std::invalid_argument("scaling: seeds are not common");
  }
  ScalingFit fit;
  bool all_zero = true;
  for (auto e : es) {
    std::vector<double> b, r;
    for (const auto& m : e->members) {
      b.push_back(m.norm_born);
      r.push_back(m.norm_resid);
      all_zero = all_zero && m.norm_born == 0 && m.norm_resid == 0;
    }
    fit.points.push_back({e->beta, mean_se(b), mean_se(r)});
  }
  if (all_zero) {
    fit.skipped = true;
    return fit;
  }
  std::vector<double> lb;
  for (auto e : es) lb.push_back(std::log(e->beta));
  auto slope = [&](const std::vector<std::size_t>& idx, bool born) {
    std::vector<double> ly;
    for (auto e : es) {
      double s = 0;
      for (std::size_t i : idx) s += born ? e->members[i].norm_born : e->members[i].norm_resid;
      ly.push_back(std::log(s / double(idx.size())));
    }
    return linear_fit(lb, ly).slope;
  };
  std::vector<double> yb, yr;
  for (const auto& p : fit.points) {
    yb.push_back(std::log(p.born.mean));
    yr.push_back(std::log(p.resid.mean));
  }
  fit.born_fit = linear_fit(lb, yb);
  fit.resid_fit = linear_fit(lb, yr);
  fit.born_slope_se = jackknife(ns, [&](const auto& idx) { return slope(idx, true); }).se;
  fit.resid_slope_se = jackknife(ns, [&](const auto& idx) { return slope(idx, false); }).se;
  for (std::size_t i = 0; i + 1 < fit.points.size(); ++i) {
    const auto& a = fit.points[i];
    const auto& b = fit.points[i + 1];
    if (a.born.mean > b.born.mean + 2 * std::hypot(a.born.se, b.born.se)) fit.born_monotone = false;
    if (a.resid.mean > b.resid.mean + 2 * std::hypot(a.resid.se, b.resid.se)) fit.resid_monotone = false;
  }
  return fit;
}

ScalingStudy scaling_study(const std::vector<double>& betas, const std::vector<std::uint64_t>& seeds,
                           const ScalingSetup& s, int jobs) {
  ScalingStudy out;
  for (double beta : betas) {
    EnsembleConfig ec;
    ec.medium = s.medium;
    ec.medium.beta = beta;
    ec.seeds = seeds;
    ec.detector = s.detector;
    const Grid g = make_solver_grid(s.solver, s.stack, s.k, beta);
    HelmholtzProblem P(g, s.stack, s.k, s.solver);
    const ComplexField f = gaussian_source(g, s.src_x, s.src_z, s.src_width);
    const ComplexField u = P.solve_field(f);
    CorrectorEnsemble e = run_ensemble(P, f, u, ec, jobs);
    e.config_hash = json_hash(json{{"solver", to_json(s.solver)}, {"medium", to_json(ec.medium)}, {"k", s.k}});
    out.ensembles.push_back(std::move(e));
  }
  out.fit = fit_scaling(out.ensembles);
  return out;
}

}  // namespace lrm

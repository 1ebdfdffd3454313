#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lrm/corrector.hpp"

using namespace lrm;

namespace {

struct Desk {
  InclusionSpec medium;
  LayerStack stack;
  SolverConfig cfg;
  double k = 10;
};

Desk desk(double beta = 0.04) {
  Desk d;
  d.medium.beta = beta;
  d.stack = make_layer_stack(1.0, 1.3, 0.05, moments(d.medium).mean, 3.0, 0.5, 0.005, 0.2);
  d.cfg.truncation = {-0.3, 0.3, -0.3, 0.2};
  d.cfg.sponge_width = 1.0;
  return d;
}

MediumRealization sample(const Desk& d, const Grid& g, std::uint64_t seed) {
  return sample_realization(d.medium, padded_box(slab_region(g, d.stack), d.medium), seed);
}

double max_abs(const Eigen::VectorXcd& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("Born corrector: zero fluctuation, definition, doubling") {
  Desk d = desk();
  // half the default contrasts, so the doubled medium is the admissible default one
  d.medium.tau_re_min *= 0.5;
  d.medium.tau_re_max *= 0.5;
  d.medium.tau_im_min *= 0.5;
  d.medium.tau_im_max *= 0.5;
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField u = P.solve_field(gaussian_source(g, -0.1, 0.1, 0.04));

  Desk z = d;
  z.medium.tau_re_min = z.medium.tau_re_max = z.medium.tau_im_min = z.medium.tau_im_max = 0;
  CHECK(max_abs(born_corrector(P, sample(z, g, 3), u).values) == 0);

  for (std::uint64_t seed : {1, 2}) {
    const MediumRealization r = sample(d, g, seed);
    const ComplexField v = born_corrector(P, r, u);
    const Eigen::VectorXcd ref = P.solve(-P.perturbation(r).D.cwiseProduct(u.values));
    CHECK((v.values.array() == ref.array()).all());
    CHECK(max_abs(v.values) > 0);

    // tau ranges doubled: same centres and radii, V and its mean doubled exactly
    Desk d2 = d;
    REQUIRE(2 * d.medium.tau_re_max == desk().medium.tau_re_max);
    d2.medium.tau_re_min *= 2;
    d2.medium.tau_re_max *= 2;
    d2.medium.tau_im_min *= 2;
    d2.medium.tau_im_max *= 2;
    const ComplexField v2 = born_corrector(P, sample(d2, g, seed), u);
    CHECK((v2.values.array() == (2.0 * v.values).array()).all());
    // and linear in u
    ComplexField u3 = u;
    u3.values *= cplx(0, 3);
    const ComplexField v3 = born_corrector(P, r, u3);
    CHECK((v3.values - cplx(0, 3) * v.values).cwiseAbs().maxCoeff() < 1e-14 * max_abs(v3.values));
  }
}

TEST_CASE("Born term on one coarse cell against layered Green's function quadrature") {
  // q constant on a single cell of S; probes in K. Both the finite-difference
  // inverse and the Green's function sum are second order, so compare the
  // Richardson limits of the two on nested grids (h, h/3 share cell centres).
  LayerStack st;
  st.n0_sq = {1.0, 0.8};
  st.ne_sq = {1.5, 1.0};
  st.n2_sq = {2.2, 1.2};
  st.L = 0.2;
  st.kappa_m = 0.8;
  const double k = 10, q = 1.0;
  const std::vector<Eigen::Vector2d> probes{{-0.09, 0.05}, {0.01, 0.09}, {0.11, 0.05}, {0.05, 0.13}, {-0.05, 0.01}};

  std::vector<std::vector<cplx>> fd(2), quad(2);
  const double H = 0.02;
  for (int level = 0; level < 2; ++level) {
    SolverConfig c;
    // wide margins: sponge echoes otherwise sit near 1e-3 of this lossy signal
    c.truncation = {-0.6, 0.6, -0.6, 0.6};
    c.sponge_width = 2.0;
    c.h = level == 0 ? H : H / 3;
    const Grid g = make_solver_grid(c, st, k);
    REQUIRE(std::abs(g.spacing[0] - c.h) < 1e-15);
    HelmholtzProblem P(g, st, k, c);
    const ComplexField u = P.solve_field(gaussian_source(g, 0.05, 0.1, 0.04));
    // coarse cell [-0.06, 0.06] x [-0.14, -0.02]: faces of both grids
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(g.size());
    std::vector<std::int64_t> cell;
    for (int i = 0; i < g.extent[0]; ++i)
      for (int j = 0; j < g.extent[1]; ++j) {
        const double x = g.coord(0, i), zz = g.coord(1, j);
        if (std::abs(x) < 0.06 && zz > -0.14 && zz < -0.02) {
          cell.push_back(g.index(i, j));
          rhs[g.index(i, j)] = -k * k * q * u.values[g.index(i, j)];
        }
      }
    REQUIRE(cell.size() == (level == 0 ? 36u : 324u));
    const Eigen::VectorXcd v = P.solve(rhs);
    for (const auto& p : probes) {
      const int i = int(std::lround((p[0] - g.origin[0]) / g.spacing[0]));
      const int j = int(std::lround((p[1] - g.origin[1]) / g.spacing[1]));
      const Eigen::Vector3d x(g.coord(0, i), g.coord(1, j), 0);
      REQUIRE(std::abs(x[0] - p[0]) < 1e-12);
      REQUIRE(std::abs(x[1] - p[1]) < 1e-12);
      fd[std::size_t(level)].push_back(v[g.index(i, j)]);
      cplx s = 0;
      for (std::int64_t id : cell) {
        const int ci = int(id / g.extent[1]), cj = int(id % g.extent[1]);
        const GreenValue gv = layered_green(2, x, Eigen::Vector3d(g.coord(0, ci), g.coord(1, cj), 0), st, k);
        REQUIRE(gv.converged);
        s += gv.value * rhs[id];
      }
      quad[std::size_t(level)].push_back(s * g.cell_volume());
    }
  }
  double scale = 0, err = 0, raw = 0;
  for (std::size_t a = 0; a < probes.size(); ++a) {
    const cplx ef = (9.0 * fd[1][a] - fd[0][a]) / 8.0;
    const cplx eq = (9.0 * quad[1][a] - quad[0][a]) / 8.0;
    scale = std::max(scale, std::abs(eq));
    err = std::max(err, std::abs(ef - eq));
    raw = std::max(raw, std::abs(fd[1][a] - quad[1][a]));
  }
  MESSAGE("relative difference: fine grid " << raw / scale << ", extrapolated " << err / scale);
  CHECK(err / scale < 1e-4);
}

TEST_CASE("Wiener increments: covariance M vol and reproducibility") {
  Eigen::Matrix2d M;
  M << 0.6, 0.07, 0.07, 0.01;
  WienerGrid wg;
  wg.M_half = matrix_sqrt<double>(M);
  wg.seed = 11;
  const std::vector<double> vol(100000, 0.25);
  const std::vector<cplx> dW = wiener_increments(wg, vol);
  CHECK(dW == wiener_increments(wg, vol));
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  for (const cplx& w : dW) {
    const Eigen::Vector2d x(w.real(), w.imag());
    m += x;
    C += x * x.transpose();
  }
  m /= double(dW.size());
  C /= double(dW.size());
  const double n = double(dW.size());
  CHECK(std::abs(m[0]) < 3 * std::sqrt(0.6 * 0.25 / n));
  CHECK(std::abs(m[1]) < 3 * std::sqrt(0.01 * 0.25 / n));
  // each entry within 3 standard errors of M vol (Gaussian fourth moments)
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double se = 0.25 * std::sqrt((M(a, a) * M(b, b) + M(a, b) * M(a, b)) / n);
      CHECK(std::abs(C(a, b) - 0.25 * M(a, b)) < 3 * se);
    }
}

TEST_CASE("limit corrector: zero u, zero mean, second moment matches the covariance") {
  const Desk d = desk();
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField u = P.solve_field(gaussian_source(g, -0.1, 0.1, 0.04));
  const CovarianceModel cov = poisson_covariance_model(d.medium);
  WienerGrid wg;
  wg.M_half = cov.M_half;

  wg.seed = 1;
  CHECK(max_abs(sample_limit_corrector(P, ComplexField(g), cov, wg).values) == 0);

  WienerGrid coarse = wg;
  coarse.factor = 1000;
  CHECK_THROWS_AS(sample_limit_corrector(P, u, cov, coarse), std::invalid_argument);

  const std::vector<Eigen::Vector2d> probes{{-0.2, 0.1}, {0.0, 0.05}, {0.15, 0.15}, {0.0, -0.1}, {0.25, 0.0}};
  const Eigen::MatrixXcd C = corrector_covariance_matrix(P, u, cov, probes);
  std::vector<std::int64_t> ids;
  for (const auto& p : probes)
    ids.push_back(g.index(int(std::lround((p[0] - g.origin[0]) / g.spacing[0])),
                          int(std::lround((p[1] - g.origin[1]) / g.spacing[1]))));
  const int n = 1000;
  std::vector<std::vector<cplx>> s(probes.size());
  for (int t = 0; t < n; ++t) {
    wg.seed = 1000 + std::uint64_t(t);
    const ComplexField v = sample_limit_corrector(P, u, cov, wg);
    for (std::size_t a = 0; a < probes.size(); ++a) s[a].push_back(v.values[ids[a]]);
  }
  for (std::size_t a = 0; a < probes.size(); ++a) {
    std::vector<double> re, im, sq;
    for (const cplx& x : s[a]) {
      re.push_back(x.real());
      im.push_back(x.imag());
      sq.push_back(std::norm(x));
    }
    const MeanSe mr = mean_se(re), mi = mean_se(im), m2 = mean_se(sq);
    CHECK(std::abs(mr.mean) < 4 * mr.se);
    CHECK(std::abs(mi.mean) < 4 * mi.se);
    const double pred = C(Eigen::Index(a), Eigen::Index(a)).real();
    CHECK_MESSAGE(std::abs(m2.mean / pred - 1) < 0.1, "probe " << a << ": " << m2.mean << " vs " << pred);
  }
}

TEST_CASE("limit corrector: linear in u for a fixed seed") {
  const Desk d = desk();
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField u1 = P.solve_field(gaussian_source(g, -0.1, 0.1, 0.04));
  const ComplexField u2 = P.solve_field(gaussian_source(g, 0.15, 0.05, 0.03));
  const CovarianceModel cov = poisson_covariance_model(d.medium);
  WienerGrid wg;
  wg.M_half = cov.M_half;
  wg.seed = 77;
  const ComplexField v1 = sample_limit_corrector(P, u1, cov, wg);
  const ComplexField v2 = sample_limit_corrector(P, u2, cov, wg);
  ComplexField s = u1;
  s.values += u2.values;
  const ComplexField v12 = sample_limit_corrector(P, s, cov, wg);
  const Eigen::VectorXcd sum = v1.values + v2.values;
  const double rel = (v12.values - sum).cwiseAbs().maxCoeff() / max_abs(sum);
  const auto same = (v12.values.array() == sum.array()).count();
  MESSAGE("v[u1 + u2] vs v[u1] + v[u2]: " << same << " of " << sum.size() << " entries bitwise equal, max relative "
                                          << rel);
  CHECK(rel < 1e-13);
  // u + u: scaling by two is exact through every operation
  s = u1;
  s.values += u1.values;
  const ComplexField vv = sample_limit_corrector(P, s, cov, wg);
  CHECK((vv.values.array() == (v1.values + v1.values).array()).all());
}

TEST_CASE("limit corrector: refining the Wiener grid keeps second moments") {
  const Desk d = desk();
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField u = P.solve_field(gaussian_source(g, -0.1, 0.1, 0.04));
  const CovarianceModel cov = poisson_covariance_model(d.medium);
  // second moment integrated over the detector strip above the slab
  const std::array<double, 3> lo{-0.25, 0.05, 0}, hi{0.25, 0.15, 0};
  std::vector<MeanSe> m;
  for (int factor : {2, 1}) {
    WienerGrid wg;
    wg.M_half = cov.M_half;
    wg.factor = factor;
    std::vector<double> e;
    for (int t = 0; t < 2500; ++t) {
      wg.seed = 90000 + std::uint64_t(t);
      const double n = l2_norm_box(sample_limit_corrector(P, u, cov, wg), lo, hi);
      e.push_back(n * n);
    }
    m.push_back(mean_se(e));
  }
  const double change = std::abs(m[1].mean / m[0].mean - 1);
  MESSAGE("E||v||^2: factor 2 " << m[0].mean << " +- " << m[0].se << ", factor 1 " << m[1].mean << " +- "
                                << m[1].se << ", change " << change);
  CHECK(change < 0.05);
}

TEST_CASE("corrector covariance: random 2-point matrices are nonnegative definite") {
  const Desk d = desk();
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField u = P.solve_field(gaussian_source(g, 0.05, 0.1, 0.04));
  const CovarianceModel cov = poisson_covariance_model(d.medium);
  Rng r = make_rng(5, 0);
  std::uniform_real_distribution<double> X(-0.28, 0.28), Z(-0.28, 0.18);
  for (int t = 0; t < 20; ++t) {
    const std::vector<Eigen::Vector2d> pts{{X(r), Z(r)}, {X(r), Z(r)}};
    const Eigen::MatrixXcd C = corrector_covariance_matrix(P, u, cov, pts);
    CHECK(C(0, 0).real() >= 0);
    CHECK(C(1, 1).real() >= 0);
    const Eigen::MatrixXcd H = 0.5 * (C + C.adjoint());
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(H).eigenvalues();
    CHECK(ev.minCoeff() >= -1e-10 * ev.maxCoeff());
  }
}

TEST_CASE("corrector covariance: Hermitian, real diagonal, linear in tau^2") {
  const Desk d = desk();
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField u = P.solve_field(gaussian_source(g, 0.05, 0.1, 0.04));
  const CovarianceModel cov = poisson_covariance_model(d.medium);
  const std::vector<Eigen::Vector2d> pts{{-0.2, 0.1}, {0.0, 0.05}, {0.2, 0.15}, {0.1, -0.05}};
  const Eigen::MatrixXcd C = corrector_covariance_matrix(P, u, cov, pts);
  CHECK((C - C.adjoint()).cwiseAbs().maxCoeff() < 1e-12 * C.cwiseAbs().maxCoeff());
  for (Eigen::Index a = 0; a < C.rows(); ++a) {
    CHECK(C(a, a).imag() == 0);
    CHECK(C(a, a).real() >= 0);
  }
  CHECK(std::abs(corrector_covariance(P, u, cov, pts[0], pts[2]) - C(0, 2)) < 1e-14 * std::abs(C(0, 2)));

  CovarianceModel c2 = cov;
  c2.tau_sq *= 2;
  const Eigen::MatrixXcd C2 = corrector_covariance_matrix(P, u, c2, pts);
  CHECK((C2.array() == (2.0 * C).array()).all());
}

TEST_CASE("projection covariance against limit corrector samples") {
  const Desk d = desk();
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField u = P.solve_field(gaussian_source(g, -0.1, 0.1, 0.04));
  const CovarianceModel cov = poisson_covariance_model(d.medium);
  const ComplexField phi = test_function_field(g, {0.0, 0.1, 0.03});
  const Eigen::Matrix2d pred = predicted_projection_covariance(P, u, cov, phi);
  CHECK(std::abs(pred(0, 1) - pred(1, 0)) < 1e-14 * pred.norm());
  CHECK(pred.determinant() >= 0);

  WienerGrid wg;
  wg.M_half = cov.M_half;
  std::vector<Eigen::Vector2d> x;
  for (int t = 0; t < 600; ++t) {
    wg.seed = 50000 + std::uint64_t(t);
    const cplx p = inner(sample_limit_corrector(P, u, cov, wg), phi);
    x.emplace_back(p.real(), p.imag());
  }
  const CltResult r = clt_test_samples(x, pred);
  MESSAGE("p " << r.p_re << " " << r.p_im << " ratio " << r.cov_ratio);
  CHECK(r.p_re > 0.001);
  CHECK(r.p_im > 0.001);
  CHECK(std::abs(r.cov_ratio - 1) < 0.15);
}

TEST_CASE("CLT test statistics on synthetic data") {
  // all-zero samples with a zero prediction
  const std::vector<Eigen::Vector2d> zeros(300, Eigen::Vector2d::Zero());
  CHECK(clt_test_samples(zeros, Eigen::Matrix2d::Zero()).degenerate);

  Eigen::Matrix2d M;
  M << 2.0, 0.3, 0.3, 0.5;
  const Eigen::Matrix2d R = matrix_sqrt<double>(M);
  Rng g = make_rng(3, 1);
  std::normal_distribution<double> N;
  int small = 0;
  const int runs = 200;
  double worst = 0;
  for (int t = 0; t < runs; ++t) {
    std::vector<Eigen::Vector2d> x;
    for (int i = 0; i < 300; ++i) x.push_back(R * Eigen::Vector2d(N(g), N(g)));
    const CltResult r = clt_test_samples(x, M);
    if (r.p_re < 0.1) ++small;
    worst = std::max(worst, std::abs(r.cov_ratio - 1));
    if (t == 0) {
      // the wrong scale is rejected
      const CltResult bad = clt_test_samples(x, 4.0 * M);
      CHECK(bad.p_re < 1e-6);
      CHECK(bad.cov_ratio < 0.3);
    }
  }
  // p values uniform under the null: binomial(200, 0.1), 4 sd
  CHECK(std::abs(small - 20) < 4 * std::sqrt(200 * 0.1 * 0.9));
  CHECK(worst < 0.3);
}

TEST_CASE("ensemble: seed order, jobs invariance, projections") {
  const Desk d = desk();
  const Grid g = make_solver_grid(d.cfg, d.stack, d.k, d.medium.beta);
  HelmholtzProblem P(g, d.stack, d.k, d.cfg);
  const ComplexField f = gaussian_source(g, -0.1, 0.1, 0.04);
  const ComplexField u = P.solve_field(f);
  EnsembleConfig ec;
  ec.medium = d.medium;
  ec.seeds = {7, 3, 11, 5};
  ec.phis = {{-0.1, 0.1, 0.03}, {0.1, 0.1, 0.03}};
  ec.detector = {-0.3, 0.3, 0.02, 0.2};
  const CorrectorEnsemble a = run_ensemble(P, f, u, ec, 1);
  const CorrectorEnsemble b = run_ensemble(P, f, u, ec, 3);
  REQUIRE(a.members.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.members[i].seed == ec.seeds[i]);
    CHECK(a.members[i].proj == b.members[i].proj);
    CHECK(a.members[i].norm_resid == b.members[i].norm_resid);
    const RandomSolution r = solve_random(P, sample(d, g, ec.seeds[i]), f, u);
    CHECK(a.members[i].proj[1] == inner(r.w, test_function_field(g, ec.phis[1])));
    CHECK(a.members[i].proj_born[0] == inner(r.born, test_function_field(g, ec.phis[0])));
  }
  CHECK_THROWS_AS(clt_test(a, 0, Eigen::Matrix2d::Identity()), std::invalid_argument);

  const CorrectorEnsemble c = ensemble_from_json(to_json(a));
  CHECK(c.members.size() == a.members.size());
  CHECK(c.members[2].proj == a.members[2].proj);
  CHECK(c.members[2].norm_born == a.members[2].norm_born);
}

TEST_CASE("scaling fit on synthetic ensembles") {
  auto make = [](double beta, double cb, double cr, bool zero) {
    CorrectorEnsemble e;
    e.beta = beta;
    for (std::uint64_t s = 0; s < 20; ++s) {
      EnsembleMember m;
      m.seed = s;
      const double jitter = 1 + 0.1 * double(s % 5);
      m.norm_born = zero ? 0 : cb * jitter * beta;
      m.norm_resid = zero ? 0 : cr * jitter * beta * beta;
      e.members.push_back(m);
    }
    return e;
  };
  std::vector<CorrectorEnsemble> es{make(0.04, 2, 3, false), make(0.01, 2, 3, false), make(0.02, 2, 3, false)};
  const ScalingFit f = fit_scaling(es);
  CHECK_FALSE(f.skipped);
  CHECK(f.born_fit.slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.resid_fit.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.born_slope_se < 1e-10);
  CHECK(f.points.front().beta == 0.01);
  CHECK(f.born_monotone);

  const ScalingFit z = fit_scaling({make(0.04, 0, 0, true), make(0.02, 0, 0, true), make(0.01, 0, 0, true)});
  CHECK(z.skipped);

  CHECK_THROWS_AS(fit_scaling({make(0.04, 1, 1, false), make(0.03, 1, 1, false), make(0.02, 1, 1, false)}),
                  std::invalid_argument);
}

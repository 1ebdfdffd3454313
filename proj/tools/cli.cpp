#include "config.hpp"

#include "lrm/corrector.hpp"
#include "lrm/helmholtz.hpp"
#include "lrm/io.hpp"
#include "lrm/medium.hpp"
#include "lrm/parallel.hpp"
#include "lrm/transport.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace lrm;
using namespace lrm::cli;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> set;
  int jobs = 1;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int count = 1;
  bool save_fields = false;
};

// Everything the solver-based commands derive from the config.
struct Setup {
  json cfg;
  fs::path out;
  std::string hash, physics_hash;
  InclusionSpec medium;
  Scales scales;
  LayerStack stack;
  SolverConfig solver;
  double k = 0;
};

std::string file_checksum(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(buf.data(), buf.size()));
}

fs::path output_dir(const json& cfg, const std::string& cli_out) {
  fs::path p = cli_out.empty() ? fs::path(cfg.at("output").get<std::string>()) : fs::path(cli_out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("LRM_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return p;
}

Rect rect_from(const json& a) {
  if (a.size() != 4) throw ConfigError("config: rectangles are [x_min, x_max, z_min, z_max]");
  Rect r{a[0], a[1], a[2], a[3]};
  if (!(r.x_max > r.x_min && r.z_max > r.z_min)) throw ConfigError("config: empty rectangle");
  return r;
}

Setup make_setup(const Options& o) {
  Setup s;
  s.cfg = load_config(o.config, o.set);
  s.out = output_dir(s.cfg, o.out);
  s.hash = config_hash(s.cfg);
  const json& c = s.cfg;
  // everything that determines u, f and the random solves
  s.physics_hash = json_hash(json{{"scales", c["scales"]}, {"stack", c["stack"]}, {"medium", c["medium"]},
                                  {"solver", c["solver"]}, {"source", c["source"]}});
  json m = c["medium"];
  m["beta"] = c["scales"]["beta"];
  s.medium = inclusion_spec_from_json(m);
  validate(s.medium);
  const Moments mo = moments(s.medium);
  const json& sc = c["scales"];
  s.scales = scales_from_rescaled(sc["eta"], sc["beta"], std::sqrt(mo.variance), sc["alpha"]);
  s.k = s.scales.k;
  const json& st = c["stack"];
  s.stack = make_layer_stack(st["n0_sq"], st["n1_sq"], st["kappa1"], mo.mean, st["n2_sq"], st["kappa2"],
                             sc["alpha"], st["L"]);
  validate(s.stack);
  s.solver = solver_config_from_json(c["solver"]);
  return s;
}

struct Manifest {
  std::string command;
  fs::path dir;
  json seeds = json::array();
  json extra = json::object();
  std::vector<fs::path> artifacts;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const Setup& s) const {
    json j;
    j["command"] = command;
    j["config_hash"] = s.hash;
    j["physics_hash"] = s.physics_hash;
    j["version"] = LRM_VERSION;
    j["seeds"] = seeds;
    j["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    j["config"] = s.cfg;
    j["artifacts"] = json::object();
    for (const auto& a : artifacts) j["artifacts"][fs::relative(a, dir).generic_string()] = file_checksum(a);
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    write_text((dir / ("manifest_" + command + ".json")).string(), j.dump(2) + "\n");
  }
  void field(const fs::path& base) {
    artifacts.push_back(base.string() + ".bin");
    artifacts.push_back(base.string() + ".json");
  }
};

void need(const fs::path& p, const std::string& what, const std::string& producer) {
  if (!fs::exists(p))
    throw MissingDependency("missing " + what + ": expected " + p.string() + " (run `" + producer + "` first)");
}

// fields/u with a check that it belongs to the same physical setup
ComplexField load_u(const Setup& s, const std::string& name = "u") {
  const fs::path base = s.out / "fields" / name;
  need(base.string() + ".json", "homogenized solution", "solve");
  const json meta = read_json(base.string() + ".json");
  if (meta.value("physics_hash", "") != s.physics_hash)
    throw MissingDependency("missing homogenized solution for this configuration: " + base.string() +
                            ".json was produced with a different setup (rerun `solve`)");
  return read_field(base.string());
}

HelmholtzProblem make_problem(const Setup& s) {
  return HelmholtzProblem(make_solver_grid(s.solver, s.stack, s.k, s.medium.beta), s.stack, s.k, s.solver);
}

ComplexField make_source(const Setup& s, const Grid& g) {
  const json& src = s.cfg["source"];
  return gaussian_source(g, src["x"], src["z"], src["width"]);
}

std::vector<TestFunction> test_functions(const json& cfg) {
  std::vector<TestFunction> t;
  for (const auto& a : cfg["ensemble"]["test_functions"]) {
    if (a.size() != 3) throw ConfigError("config: /ensemble/test_functions entries are [x, z, width]");
    t.push_back({a[0], a[1], a[2]});
  }
  return t;
}

std::vector<std::uint64_t> seed_range(std::uint64_t base, int count) {
  if (count < 1) throw ConfigError("config: seed count must be positive");
  std::vector<std::uint64_t> v;
  for (int i = 0; i < count; ++i) v.push_back(base + std::uint64_t(i));
  return v;
}

CovarianceModel covariance(const Setup& s, double h, int jobs, json& info) {
  const json& c = s.cfg["covariance"];
  const std::string method = c["method"];
  if (method == "analytic") {
    info = {{"method", "analytic"}};
    return poisson_covariance_model(s.medium);
  }
  if (method != "empirical") throw ConfigError("config: /covariance/method must be \"empirical\" or \"analytic\"");
  // lags out to the support 2 r_max beta plus one
  const int max_lag = int(std::ceil(2 * s.medium.r_max * s.medium.beta / h)) + 1;
  const auto lags = lag_box(max_lag, 2);
  const CovarianceEstimate e =
      empirical_covariance(s.medium, lags, h, c["cells"], c["samples"], c["seed"].get<std::uint64_t>(), jobs);
  info = {{"method", "empirical"},
          {"lattice_h", h},
          {"max_lag", max_lag},
          {"sigma_r_sq", e.sigma_r_sq},
          {"sigma_i_sq", e.sigma_i_sq},
          {"gamma", e.gamma},
          {"se_sigma_r_sq", e.se_sigma_r_sq},
          {"se_sigma_i_sq", e.se_sigma_i_sq},
          {"se_gamma", e.se_gamma},
          {"cap_events", e.cap_events},
          {"evaluations", e.evaluations}};
  return covariance_model_from_estimate(e, s.medium);
}

json to_json(const CovarianceModel& m) {
  return {{"sigma_r_sq", m.sigma_r_sq}, {"sigma_i_sq", m.sigma_i_sq}, {"gamma", m.gamma},
          {"sigma", m.sigma},           {"tau_sq", m.tau_sq},         {"corr_range", m.corr_range},
          {"M", {{m.M(0, 0), m.M(0, 1)}, {m.M(1, 0), m.M(1, 1)}}}};
}

json to_json(const Eigen::Matrix2d& a) { return {{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}}; }
Eigen::Matrix2d matrix_from(const json& j) {
  Eigen::Matrix2d a;
  a << j[0][0].get<double>(), j[0][1].get<double>(), j[1][0].get<double>(), j[1][1].get<double>();
  return a;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json report_json(const SolveReport& r) {
  return {{"residual", r.residual},     {"energy_lhs", r.energy_lhs}, {"energy_rhs", r.energy_rhs},
          {"energy_rel_error", r.energy_rel_error}, {"iterations", r.iterations}, {"cap_events", r.cap_events}};
}

// ---------------------------------------------------------------------------

int cmd_generate_medium(const Options& o) {
  Setup s = make_setup(o);
  Manifest man{"generate-medium", s.out};
  const Grid g = make_solver_grid(s.solver, s.stack, s.k, s.medium.beta);
  const Box box = padded_box(slab_region(g, s.stack), s.medium);
  const std::uint64_t base = o.seed_given ? o.seed : s.cfg["ensemble"]["seed_base"].get<std::uint64_t>();
  const auto seeds = seed_range(base, o.count);
  fs::create_directories(s.out / "medium");
  std::vector<std::size_t> counts(seeds.size());
  parallel_for(long(seeds.size()), o.jobs, [&](long i) {
    const MediumRealization r = sample_realization(s.medium, box, seeds[std::size_t(i)]);
    counts[std::size_t(i)] = r.inclusions().size();
    save_realization((s.out / "medium" / ("seed_" + std::to_string(seeds[std::size_t(i)]))).string(), r,
                     {{"config_hash", s.hash}});
  });
  std::ostringstream csv;
  csv << "seed,inclusions\n";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    csv << seeds[i] << "," << counts[i] << "\n";
    man.field(s.out / "medium" / ("seed_" + std::to_string(seeds[i])));
    man.seeds.push_back(seeds[i]);
  }
  write_text((s.out / "medium" / "summary.csv").string(), csv.str());
  man.artifacts.push_back(s.out / "medium" / "summary.csv");
  const Moments mo = moments(s.medium);
  man.extra["moments"] = {{"mean", {mo.mean.real(), mo.mean.imag()}}, {"variance", mo.variance}};
  man.write(s);
  return 0;
}

int cmd_solve(const Options& o) {
  Setup s = make_setup(o);
  Manifest man{"solve", s.out};
  HelmholtzProblem P = make_problem(s);
  const Grid& g = P.grid();
  const ComplexField f = make_source(s, g);
  SolveReport rep;
  const ComplexField u = P.solve_field(f, &rep);
  fs::create_directories(s.out / "fields");
  const json meta{{"config_hash", s.hash}, {"physics_hash", s.physics_hash}};
  write_field((s.out / "fields" / "u").string(), u, meta);
  write_field((s.out / "fields" / "f").string(), f, meta);
  man.field(s.out / "fields" / "u");
  man.field(s.out / "fields" / "f");

  const std::uint64_t seed = o.seed_given ? o.seed : s.cfg["ensemble"]["seed_base"].get<std::uint64_t>();
  const MediumRealization r = sample_realization(s.medium, padded_box(slab_region(g, s.stack), s.medium), seed);
  const RandomSolution rs = solve_random(P, r, f, u);
  const std::string ub = "u_beta_" + std::to_string(seed);
  write_field((s.out / "fields" / ub).string(), rs.u_beta, meta);
  man.field(s.out / "fields" / ub);
  man.seeds.push_back(seed);

  // absorption bound, meaningful when f lives in the slab
  bool in_slab = true;
  for (std::int64_t i = 0; i < g.size(); ++i)
    if (f.values[i] != cplx(0) && !P.is_slab_cell(i)) in_slab = false;
  const Box S = slab_region(g, s.stack);
  const double nu = l2_norm_box(rs.u_beta, S.lo, S.hi), nf = l2_norm_box(f, S.lo, S.hi);
  const double bound = nf / (s.k * s.k * s.stack.kappa_m);
  const json report{{"grid", lrm::to_json(g)},
                    {"k", s.k},
                    {"homogenized", report_json(rep)},
                    {"random", report_json(rs.report)},
                    {"seed", seed},
                    {"absorption_bound",
                     {{"source_in_slab", in_slab}, {"norm_u_beta_S", nu}, {"bound", bound}, {"holds", in_slab ? json(nu <= bound) : json(nullptr)}}},
                    {"regime", {{"ratio", regime_report(s.scales, 2).ratio}, {"ok", regime_report(s.scales, 2).ok}}}};
  write_text((s.out / "solve_report.json").string(), report.dump(2) + "\n");
  man.artifacts.push_back(s.out / "solve_report.json");
  man.write(s);
  std::cout << "solve: residual " << rep.residual << ", random energy error " << rs.report.energy_rel_error
            << ", gmres iterations " << rs.report.iterations << "\n";
  return 0;
}

int cmd_corrector_stats(const Options& o) {
  Setup s = make_setup(o);
  const ComplexField u = load_u(s);
  HelmholtzProblem P = make_problem(s);
  if (!P.grid().compatible(u.grid)) throw MissingDependency("fields/u does not match the solver grid (rerun `solve`)");
  Manifest man{"corrector-stats", s.out};
  const ComplexField f = make_source(s, P.grid());
  EnsembleConfig ec;
  ec.medium = s.medium;
  ec.seeds = seed_range(s.cfg["ensemble"]["seed_base"], s.cfg["ensemble"]["count"]);
  ec.phis = test_functions(s.cfg);
  ec.detector = rect_from(s.cfg["detector"]);
  MemberSink sink;
  if (o.save_fields) {
    fs::create_directories(s.out / "members");
    sink = [&](const EnsembleMember& m, const RandomSolution& rs) {
      const std::string b = (s.out / "members" / ("seed_" + std::to_string(m.seed))).string();
      write_field(b + "_w", rs.w, {{"config_hash", s.hash}});
      write_field(b + "_born", rs.born, {{"config_hash", s.hash}});
    };
  }
  CorrectorEnsemble e = run_ensemble(P, f, u, ec, o.jobs, sink);
  e.config_hash = s.physics_hash;
  write_text((s.out / "ensemble.json").string(), lrm::to_json(e).dump() + "\n");
  man.artifacts.push_back(s.out / "ensemble.json");
  if (o.save_fields)
    for (auto sd : ec.seeds) {
      const fs::path b = s.out / "members" / ("seed_" + std::to_string(sd));
      man.field(b.string() + "_w");
      man.field(b.string() + "_born");
    }

  json cinfo;
  const CovarianceModel cov = covariance(s, P.grid().spacing[0], o.jobs, cinfo);
  json cj{{"model", to_json(cov)}, {"estimate", cinfo}, {"predicted", json::array()}};
  for (const auto& t : ec.phis)
    cj["predicted"].push_back(to_json(predicted_projection_covariance(P, u, cov, test_function_field(P.grid(), t))));
  write_text((s.out / "covariance.json").string(), cj.dump(2) + "\n");
  man.artifacts.push_back(s.out / "covariance.json");

  std::ostringstream csv;
  csv << "seed";
  for (std::size_t j = 0; j < ec.phis.size(); ++j)
    csv << ",proj" << j << "_re,proj" << j << "_im,born" << j << "_re,born" << j << "_im";
  csv << ",norm_w,norm_born,norm_resid,energy_rel_error,iterations,cap_events\n";
  for (const auto& m : e.members) {
    csv << m.seed;
    for (std::size_t j = 0; j < m.proj.size(); ++j)
      csv << "," << num(m.proj[j].real()) << "," << num(m.proj[j].imag()) << "," << num(m.proj_born[j].real()) << ","
          << num(m.proj_born[j].imag());
    csv << "," << num(m.norm_w) << "," << num(m.norm_born) << "," << num(m.norm_resid) << ","
        << num(m.report.energy_rel_error) << "," << m.report.iterations << "," << m.report.cap_events << "\n";
    man.seeds.push_back(m.seed);
  }
  write_text((s.out / "members.csv").string(), csv.str());
  man.artifacts.push_back(s.out / "members.csv");
  man.write(s);
  return 0;
}

int cmd_clt_test(const Options& o) {
  Setup s = make_setup(o);
  const fs::path ep = s.out / "ensemble.json", cp = s.out / "covariance.json";
  need(ep, "ensemble", "corrector-stats");
  need(cp, "covariance", "corrector-stats");
  Manifest man{"clt-test", s.out};
  const CorrectorEnsemble e = ensemble_from_json(read_json(ep.string()));
  if (e.config_hash != s.physics_hash)
    throw MissingDependency("missing ensemble for this configuration: " + ep.string() +
                            " was produced with a different setup (rerun `corrector-stats`)");
  const json cj = read_json(cp.string());
  std::ostringstream csv;
  csv << "phi,n,mean_re,mean_im,emp_rr,emp_ri,emp_ii,pred_rr,pred_ri,pred_ii,ks_re,p_re,ks_im,p_im,cov_ratio,pass\n";
  int passed = 0;
  for (std::size_t j = 0; j < e.phis.size(); ++j) {
    const Eigen::Matrix2d pred = matrix_from(cj.at("predicted").at(j));
    CltResult r;
    try {
      r = clt_test(e, j, pred);
    } catch (const std::invalid_argument& x) {
      throw ConfigError(std::string("clt-test: ") + x.what());
    }
    const bool ok = r.p_re > 0.01 && r.p_im > 0.01 && r.cov_ratio >= 0.85 && r.cov_ratio <= 1.15;
    passed += ok;
    csv << j << "," << r.n << "," << num(r.mean(0)) << "," << num(r.mean(1)) << "," << num(r.empirical(0, 0)) << ","
        << num(r.empirical(0, 1)) << "," << num(r.empirical(1, 1)) << "," << num(r.predicted(0, 0)) << ","
        << num(r.predicted(0, 1)) << "," << num(r.predicted(1, 1)) << "," << num(r.ks_re) << "," << num(r.p_re) << ","
        << num(r.ks_im) << "," << num(r.p_im) << "," << num(r.cov_ratio) << "," << (ok ? 1 : 0) << "\n";
    std::cout << "phi " << j << ": p_re " << r.p_re << ", p_im " << r.p_im << ", covariance ratio " << r.cov_ratio
              << (ok ? "  ok" : "  FAIL") << "\n";
  }
  for (const auto& m : e.members) man.seeds.push_back(m.seed);
  write_text((s.out / "clt.csv").string(), csv.str());
  man.artifacts.push_back(s.out / "clt.csv");
  man.extra["passed"] = passed;
  man.extra["tests"] = e.phis.size();
  man.write(s);
  return 0;
}

int cmd_scaling_study(const Options& o) {
  Setup s = make_setup(o);
  Manifest man{"scaling-study", s.out};
  ScalingSetup ss;
  ss.stack = s.stack;
  ss.k = s.k;
  ss.solver = s.solver;
  ss.medium = s.medium;
  ss.src_x = s.cfg["source"]["x"];
  ss.src_z = s.cfg["source"]["z"];
  ss.src_width = s.cfg["source"]["width"];
  ss.detector = rect_from(s.cfg["detector"]);
  const std::vector<double> betas = s.cfg["scaling"]["betas"];
  const auto seeds = seed_range(s.cfg["ensemble"]["seed_base"], s.cfg["scaling"]["seeds"]);
  ScalingStudy st;
  try {
    st = scaling_study(betas, seeds, ss, o.jobs);
  } catch (const std::invalid_argument& x) {
    throw ConfigError(std::string("scaling-study: ") + x.what());
  }
  fs::create_directories(s.out / "scaling");
  for (const auto& e : st.ensembles) {
    std::ostringstream name;
    name << "ensemble_beta_" << e.beta << ".json";
    write_text((s.out / "scaling" / name.str()).string(), lrm::to_json(e).dump() + "\n");
    man.artifacts.push_back(s.out / "scaling" / name.str());
  }
  std::ostringstream pts;
  pts << "beta,born_mean,born_se,resid_mean,resid_se\n";
  for (const auto& p : st.fit.points)
    pts << num(p.beta) << "," << num(p.born.mean) << "," << num(p.born.se) << "," << num(p.resid.mean) << ","
        << num(p.resid.se) << "\n";
  write_text((s.out / "scaling" / "points.csv").string(), pts.str());
  const auto& F = st.fit;
  const bool born_ok = !F.skipped && std::abs(F.born_fit.slope - 1.0) <= 0.15;
  const bool resid_ok = !F.skipped && std::abs(F.resid_fit.slope - 2.0) <= 0.3;
  std::ostringstream fit;
  fit << "quantity,slope,intercept,slope_se_ls,slope_se_jackknife,monotone,target,tolerance,pass\n";
  fit << "born," << num(F.born_fit.slope) << "," << num(F.born_fit.intercept) << "," << num(F.born_fit.slope_se) << ","
      << num(F.born_slope_se) << "," << F.born_monotone << ",1,0.15," << born_ok << "\n";
  fit << "residual," << num(F.resid_fit.slope) << "," << num(F.resid_fit.intercept) << "," << num(F.resid_fit.slope_se)
      << "," << num(F.resid_slope_se) << "," << F.resid_monotone << ",2,0.3," << resid_ok << "\n";
  write_text((s.out / "scaling" / "fit.csv").string(), fit.str());
  man.artifacts.push_back(s.out / "scaling" / "points.csv");
  man.artifacts.push_back(s.out / "scaling" / "fit.csv");
  for (auto sd : seeds) man.seeds.push_back(sd);
  man.extra["skipped"] = F.skipped;
  man.write(s);
  std::cout << "scaling: born slope " << F.born_fit.slope << " (target 1 +- 0.15), residual slope "
            << F.resid_fit.slope << " (target 2 +- 0.3)\n";
  return 0;
}

TransportConfig transport_config(const json& t) {
  TransportConfig c;
  c.detector_z = t["detector_z"];
  c.lateral = t["lateral"];
  c.max_bounces = t["max_bounces"];
  c.min_rel_power = t["min_rel_power"];
  c.detector_x_min = t["detector_range"][0];
  c.detector_x_max = t["detector_range"][1];
  c.detector_bins = t["detector_bins"];
  c.chunks = t["chunks"];
  const Rect w = rect_from(t["window"]);
  const double h = t["window_h"];
  if (!(h > 0)) throw ConfigError("config: /transport/window_h must be positive");
  c.window.dim = 2;
  c.window.spacing = {h, h, 1};
  c.window.extent = {std::max(1, int(std::lround((w.x_max - w.x_min) / h))),
                     std::max(1, int(std::lround((w.z_max - w.z_min) / h))), 1};
  c.window.origin = {w.x_min + 0.5 * h, w.z_min + 0.5 * h, 0};
  return c;
}

int cmd_transport(const Options& o) {
  Setup s = make_setup(o);
  const ComplexField u = load_u(s);
  Manifest man{"transport", s.out};
  const json& t = s.cfg["transport"];
  const TransportMedium tm = transport_medium(s.stack, s.scales.eta);
  const DirectionQuadrature q = make_direction_quadrature(2, t["n_theta"]);
  json cinfo;
  const CovarianceModel cov = covariance(s, u.grid.spacing[0], o.jobs, cinfo);
  const auto rays = emit_source(u, s.stack, tm, cov.tau_sq, s.scales.eta, q, t["stride"]);
  const TransportConfig tc = transport_config(t);
  TransportResult r = propagate(rays, tm, q, tc, o.jobs);
  r.W.eta = s.scales.eta;
  r.W.beta = s.medium.beta;
  r.W.tau_sq = cov.tau_sq;
  fs::create_directories(s.out / "transport");
  save_wigner((s.out / "transport" / "wigner").string(), r.W, {{"config_hash", s.hash}});
  man.field(s.out / "transport" / "wigner");
  write_text((s.out / "transport" / "detector.csv").string(), detector_csv(r, tc));
  man.artifacts.push_back(s.out / "transport" / "detector.csv");
  const FluxBalance b = flux_balance(r.tally);
  const json flux{{"emitted", r.tally.emitted},
                  {"absorbed", r.tally.absorbed},
                  {"escaped_top", r.tally.escaped_top},
                  {"escaped_bottom", r.tally.escaped_bottom},
                  {"escaped_lateral", r.tally.escaped_lateral},
                  {"capped", r.tally.capped},
                  {"dropped", r.tally.dropped},
                  {"events", r.tally.events},
                  {"imbalance", b.imbalance},
                  {"rays", rays.size()},
                  {"tau_sq", cov.tau_sq},
                  {"covariance", cinfo}};
  write_text((s.out / "transport" / "flux.json").string(), flux.dump(2) + "\n");
  man.artifacts.push_back(s.out / "transport" / "flux.json");
  man.write(s);
  std::cout << "transport: " << rays.size() << " rays, flux imbalance " << b.imbalance << "\n";
  return 0;
}

int cmd_green_diagnostics(const Options& o) {
  Setup s = make_setup(o);
  Manifest man{"green-diagnostics", s.out};
  const json& d = s.cfg["diagnostics"];
  DiagnosticsConfig dc;
  dc.dim = d["dim"];
  dc.z_nodes = d["z_nodes"];
  dc.source_depths = d["source_depths"].get<std::vector<double>>();
  dc.detector_heights = d["detector_heights"].get<std::vector<double>>();
  dc.sup_window = d["sup_window"];
  dc.sup_points = d["sup_points"];
  const auto ks = d["k_sweep"].get<std::vector<double>>();
  const auto kappas = d["kappa_sweep"].get<std::vector<double>>();
  if (ks.size() != kappas.size() || ks.empty())
    throw ConfigError("config: /diagnostics/k_sweep and /diagnostics/kappa_sweep must have the same nonzero length");
  std::vector<DiagnosticRow> rows;
  try {
    rows = green_norm_diagnostics(s.stack, ks, kappas, dc, o.jobs);
  } catch (const std::invalid_argument& x) {
    throw ConfigError(std::string("green-diagnostics: ") + x.what());
  }
  fs::create_directories(s.out);
  write_text((s.out / "diagnostics.csv").string(), diagnostics_csv(rows));
  man.artifacts.push_back(s.out / "diagnostics.csv");
  man.write(s);
  return 0;
}

int cmd_correlation(const Options& o) {
  Setup s = make_setup(o);
  const ComplexField u = load_u(s);
  const fs::path wb = s.out / "transport" / "wigner";
  need(wb.string() + ".json", "Wigner density", "transport");
  Manifest man{"correlation", s.out};
  const WignerDensity W = load_wigner(wb.string());
  std::ostringstream csv;
  csv << "x1,z1,x2,z2,re,im,u1u2_re,u1u2_im\n";
  for (const auto& p : s.cfg["correlation"]["pairs"]) {
    if (p.size() != 4) throw ConfigError("config: /correlation/pairs entries are [x1, z1, x2, z2]");
    const Eigen::Vector3d x(p[0].get<double>(), p[1].get<double>(), 0), y(p[2].get<double>(), p[3].get<double>(), 0);
    const cplx c = correlation_C0(x, y, u, W);
    // coherent part alone for comparison
    WignerDensity zero = W;
    std::fill(zero.values.begin(), zero.values.end(), 0.0);
    const cplx c0 = correlation_C0(x, y, u, zero);
    csv << num(x(0)) << "," << num(x(1)) << "," << num(y(0)) << "," << num(y(1)) << "," << num(c.real()) << ","
        << num(c.imag()) << "," << num(c0.real()) << "," << num(c0.imag()) << "\n";
  }
  write_text((s.out / "correlation.csv").string(), csv.str());
  man.artifacts.push_back(s.out / "correlation.csv");
  man.write(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random layered media: homogenized solves, correctors, transport"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LRM_VERSION);
  Options o;
  auto common = [&](CLI::App* sc) {
    sc->add_option("-c,--config", o.config, "JSON config file (defaults used for missing keys)");
    sc->add_option("--set", o.set, "override, e.g. --set scales.beta=0.01 (repeatable)");
    sc->add_option("-j,--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    sc->add_option("-o,--out", o.out, "output directory (relative paths resolve under $LRM_OUTPUT_ROOT)");
  };
  auto seeded = [&](CLI::App* sc) {
    sc->add_option("--seed", o.seed, "realization seed (default ensemble.seed_base)")
        ->each([&](const std::string&) { o.seed_given = true; });
  };
  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Cmd cmds[] = {
      {"generate-medium", "sample Poisson inclusion media over the slab", cmd_generate_medium},
      {"solve", "homogenized solution u and one random solution u_beta", cmd_solve},
      {"corrector-stats", "ensemble of random solves, projections and predicted covariances", cmd_corrector_stats},
      {"clt-test", "KS and covariance tests of the normalized corrector projections", cmd_clt_test},
      {"scaling-study", "Born and residual norms against beta with exponent fits", cmd_scaling_study},
      {"transport", "Wigner density of the incoherent field by ray transport", cmd_transport},
      {"green-diagnostics", "norms of the layered Green's function over (k, kappa_e) sweeps", cmd_green_diagnostics},
      {"correlation", "C0(x, y) from u and the Wigner density", cmd_correlation},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const auto& c : cmds) {
    CLI::App* sc = app.add_subcommand(c.name, c.help);
    common(sc);
    if (std::string(c.name) == "generate-medium" || std::string(c.name) == "solve") seeded(sc);
    if (std::string(c.name) == "generate-medium")
      sc->add_option("--count", o.count, "number of consecutive seeds")->check(CLI::PositiveNumber);
    if (std::string(c.name) == "corrector-stats")
      sc->add_flag("--save-fields", o.save_fields, "write w and the Born term of every member");
    sc->callback([&chosen, run = c.run] { chosen = run; });
  }
  bool print_defaults = false;
  CLI::App* schema = app.add_subcommand("schema", "print the config JSON schema");
  schema->add_flag("--defaults", print_defaults, "print the default config instead");
  schema->callback([&] { std::cout << (print_defaults ? default_config() : config_schema()).dump(2) << "\n"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (!chosen) return 0;
  try {
    return chosen(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingDependency& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  }
}

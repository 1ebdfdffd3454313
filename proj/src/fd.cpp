#include "lrm/helmholtz.hpp"

#include <chrono>
#include <functional>

namespace lrm {

json to_json(const SolverConfig& c) {
  return json{{"points_per_wavelength", c.points_per_wavelength},
              {"sponge_width", c.sponge_width},
              {"sponge_strength", c.sponge_strength},
              {"linear_solver", c.linear_solver == LinearSolver::Direct ? "direct" : "iterative"},
              {"truncation", {c.truncation.x_min, c.truncation.x_max, c.truncation.z_min, c.truncation.z_max}},
              {"h", c.h},
              {"cells_per_beta", c.cells_per_beta},
              {"gmres_tol", c.gmres_tol},
              {"gmres_restart", c.gmres_restart},
              {"gmres_max_iter", c.gmres_max_iter}};
}

SolverConfig solver_config_from_json(const json& j) {
  SolverConfig c;
  c.points_per_wavelength = j.at("points_per_wavelength");
  c.sponge_width = j.at("sponge_width");
  c.sponge_strength = j.at("sponge_strength");
  const std::string ls = j.at("linear_solver");
  if (ls == "direct")
    c.linear_solver = LinearSolver::Direct;
  else if (ls == "iterative")
    c.linear_solver = LinearSolver::Iterative;
  else
    throw std::invalid_argument("linear_solver must be direct or iterative");
  const auto t = j.at("truncation");
  c.truncation = {t.at(0), t.at(1), t.at(2), t.at(3)};
  c.h = j.at("h");
  c.cells_per_beta = j.at("cells_per_beta");
  c.gmres_tol = j.at("gmres_tol");
  c.gmres_restart = j.at("gmres_restart");
  c.gmres_max_iter = j.at("gmres_max_iter");
  return c;
}

namespace {

double air_wavelength(const LayerStack& st, double k) { return 2 * kPi / (k * principal_sqrt(st.n0_sq).real()); }

double min_wavelength(const LayerStack& st, double k) {
  double n = 0;
  for (int j = 0; j < 3; ++j) n = std::max(n, principal_sqrt(st.layer_index_sq(j)).real());
  return 2 * kPi / (k * n);
}

}  // namespace

Grid make_solver_grid(const SolverConfig& cfg, const LayerStack& st, double k, double beta) {
  if (cfg.points_per_wavelength < 10) throw std::invalid_argument("solver: points_per_wavelength must be >= 10");
  const Rect& t = cfg.truncation;
  if (!(t.x_max > t.x_min && t.z_max > t.z_min)) throw std::invalid_argument("solver: empty truncation rectangle");
  double h = min_wavelength(st, k) / cfg.points_per_wavelength;
  if (beta > 0) h = std::min(h, beta / cfg.cells_per_beta);
  if (cfg.h > 0) {
    if (cfg.h > h * (1 + 1e-12))
      throw std::invalid_argument("solver: explicit spacing violates the wavelength or medium resolution rule");
    h = cfg.h;
  }
  h = st.L / std::ceil(st.L / h - 1e-9);  // interfaces on cell faces
  const double w = cfg.sponge_width * air_wavelength(st, k);
  const int i0 = int(std::floor((t.x_min - w) / h)), i1 = int(std::ceil((t.x_max + w) / h));
  const int j0 = int(std::floor((t.z_min - w) / h)), j1 = int(std::ceil((t.z_max + w) / h));
  Grid g;
  g.dim = 2;
  g.spacing = {h, h, 1};
  g.origin = {(i0 + 0.5) * h, (j0 + 0.5) * h, 0};
  g.extent = {i1 - i0, j1 - j0, 1};
  return g;
}

HelmholtzProblem::HelmholtzProblem(const Grid& g, const LayerStack& st, double k, const SolverConfig& cfg)
    : grid_(g), stack_(st), k_(k), cfg_(cfg) {
  if (g.dim != 2) throw std::invalid_argument("finite-difference solver is two-dimensional");
  validate(g);
  validate(st, false);
  if (std::abs(g.spacing[0] - g.spacing[1]) > 1e-12 * g.spacing[0])
    throw std::invalid_argument("solver grid must be square");
  const double h = g.spacing[0];
  const int nx = g.extent[0], nz = g.extent[1];
  const double w = cfg.sponge_width * air_wavelength(st, k);
  const Rect& t = cfg.truncation;
  n2_.resize(g.size());
  slab_.assign(std::size_t(g.size()), 0);
  auto ramp = [&](double d) { return d > 0 && w > 0 ? cfg.sponge_strength * (d / w) * (d / w) : 0.0; };
  for (int i = 0; i < nx; ++i) {
    const double x = g.coord(0, i);
    const double dx = std::max(t.x_min - x, x - t.x_max);
    for (int j = 0; j < nz; ++j) {
      const double z = g.coord(1, j);
      const double dz = std::max(t.z_min - z, z - t.z_max);
      const auto id = g.index(i, j);
      n2_[id] = st.index_sq(z) + cplx(0, ramp(std::min(dx, w)) + ramp(std::min(dz, w)));
      slab_[std::size_t(id)] = st.layer(z) == 1;
    }
  }
  const double ih2 = 1.0 / (h * h);
  std::vector<Eigen::Triplet<cplx>> tr;
  tr.reserve(std::size_t(g.size()) * 5);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nz; ++j) {
      const auto id = g.index(i, j);
      tr.emplace_back(id, id, -4.0 * ih2 + k * k * n2_[id]);
      if (i > 0) tr.emplace_back(id, g.index(i - 1, j), ih2);
      if (i + 1 < nx) tr.emplace_back(id, g.index(i + 1, j), ih2);
      if (j > 0) tr.emplace_back(id, g.index(i, j - 1), ih2);
      if (j + 1 < nz) tr.emplace_back(id, g.index(i, j + 1), ih2);
    }
  A0_.resize(g.size(), g.size());
  A0_.setFromTriplets(tr.begin(), tr.end());
  A0_.makeCompressed();
}

void HelmholtzProblem::factorize() const {
  std::lock_guard<std::mutex> lk(mu_);
  if (lu_) return;
  auto lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>>();
  lu->compute(A0_);
  if (lu->info() != Eigen::Success) throw std::runtime_error("sparse LU factorization failed");
  lu_ = std::move(lu);
}

Eigen::VectorXcd HelmholtzProblem::solve(const Eigen::VectorXcd& rhs) const {
  factorize();
  if (rhs.size() != A0_.rows()) throw std::invalid_argument("solve: right-hand side size mismatch");
  if (rhs.isZero(0)) return Eigen::VectorXcd::Zero(rhs.size());
  Eigen::VectorXcd x = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success) throw std::runtime_error("sparse LU solve failed");
  return x;
}

Eigen::VectorXcd HelmholtzProblem::apply(const Eigen::VectorXcd& u, const Eigen::VectorXcd* extra_diag) const {
  Eigen::VectorXcd y = A0_ * u;
  if (extra_diag) y += extra_diag->cwiseProduct(u);
  return y;
}

EnergyCheck HelmholtzProblem::energy(const Eigen::VectorXcd& u, const Eigen::VectorXcd& f,
                                     const Eigen::VectorXcd* extra_coef) const {
  const double dv = grid_.cell_volume();
  double lhs = 0;
  cplx rhs = 0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double im = n2_[i].imag();
    if (extra_coef) im += (*extra_coef)[i].imag();
    lhs += im * std::norm(u[i]);
    rhs += f[i] * std::conj(u[i]);
  }
  EnergyCheck e;
  e.lhs = k_ * k_ * lhs * dv;
  e.rhs = rhs.imag() * dv;
  const double scale = std::max(std::abs(e.lhs), std::abs(e.rhs));
  e.rel_error = scale > 0 ? std::abs(e.lhs - e.rhs) / scale : 0.0;
  return e;
}

ComplexField HelmholtzProblem::solve_field(const ComplexField& f, SolveReport* rep) const {
  if (!f.grid.compatible(grid_)) throw std::invalid_argument("solve: source grid does not match the solver grid");
  const auto t0 = std::chrono::steady_clock::now();
  ComplexField u(grid_, solve(f.values));
  if (rep) {
    const double fn = f.values.norm();
    rep->residual = fn > 0 ? (apply(u.values) - f.values).norm() / fn : 0.0;
    const EnergyCheck e = energy(u.values, f.values);
    rep->energy_lhs = e.lhs;
    rep->energy_rhs = e.rhs;
    rep->energy_rel_error = e.rel_error;
    rep->iterations = 0;
    rep->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return u;
}

HelmholtzProblem::Perturbation HelmholtzProblem::perturbation(const MediumRealization& r) const {
  if (r.spec().dim != 2) throw std::invalid_argument("solver: medium must be two-dimensional");
  const int nz = grid_.extent[1];
  auto mask = [&](int i, int j, int) { return slab_[std::size_t(std::int64_t(i) * nz + j)] != 0; };
  const GridSample gs = eval_V_grid(r, grid_, mask);
  Perturbation p;
  p.D = Eigen::VectorXcd::Zero(grid_.size());
  for (std::int64_t id = 0; id < grid_.size(); ++id)
    if (slab_[std::size_t(id)]) p.D[id] = k_ * k_ * (gs.V[std::size_t(id)] - r.mean());
  p.cap_events = gs.cap_events;
  p.evaluations = gs.evaluations;
  return p;
}

void HelmholtzProblem::check_admissible(const Perturbation& p) const {
  const double k2 = k_ * k_;
  for (std::int64_t id = 0; id < grid_.size(); ++id) {
    if (!slab_[std::size_t(id)]) continue;
    const cplx n = stack_.ne_sq + p.D[id] / k2;
    if (!(n.real() > 0) || n.imag() < stack_.kappa_m - 1e-12)
      throw std::runtime_error("random index violates the slab lower bounds after capping");
  }
}

namespace {

// Restarted GMRES on op(x) = b with modified Gram-Schmidt and Givens rotations.
int gmres(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& op, const Eigen::VectorXcd& b,
          Eigen::VectorXcd& x, double tol, int restart, int max_iter, double* relres) {
  const double bn = b.norm();
  if (bn == 0) {
    x.setZero();
    if (relres) *relres = 0;
    return 0;
  }
  int it = 0;
  Eigen::VectorXcd r = b - op(x);
  double rn = r.norm();
  while (rn > tol * bn && it < max_iter) {
    const int m = restart;
    std::vector<Eigen::VectorXcd> V;
    V.reserve(std::size_t(m) + 1);
    Eigen::MatrixXcd Hm = Eigen::MatrixXcd::Zero(m + 1, m);
    Eigen::VectorXcd cs(m), sn(m), g = Eigen::VectorXcd::Zero(m + 1);
    V.push_back(r / rn);
    g(0) = rn;
    int j = 0;
    for (; j < m && it < max_iter; ++j, ++it) {
      Eigen::VectorXcd w = op(V[std::size_t(j)]);
      for (int i = 0; i <= j; ++i) {
        Hm(i, j) = V[std::size_t(i)].dot(w);
        w -= Hm(i, j) * V[std::size_t(i)];
      }
      Hm(j + 1, j) = w.norm();
      if (std::abs(Hm(j + 1, j)) > 0) V.push_back(w / Hm(j + 1, j).real());
      for (int i = 0; i < j; ++i) {
        const cplx t = std::conj(cs(i)) * Hm(i, j) + std::conj(sn(i)) * Hm(i + 1, j);
        Hm(i + 1, j) = -sn(i) * Hm(i, j) + cs(i) * Hm(i + 1, j);
        Hm(i, j) = t;
      }
      const double den = std::hypot(std::abs(Hm(j, j)), std::abs(Hm(j + 1, j)));
      cs(j) = Hm(j, j) / den;
      sn(j) = Hm(j + 1, j) / den;
      Hm(j, j) = den;
      Hm(j + 1, j) = 0;
      g(j + 1) = -sn(j) * g(j);
      g(j) = std::conj(cs(j)) * g(j);
      if (std::abs(g(j + 1)) <= tol * bn || int(V.size()) <= j + 1) {
        ++j;
        ++it;
        break;
      }
    }
    Eigen::VectorXcd y = Hm.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    for (int i = 0; i < j; ++i) x += y(i) * V[std::size_t(i)];
    r = b - op(x);
    rn = r.norm();
  }
  if (relres) *relres = rn / bn;
  return it;
}

}  // namespace

RandomSolution solve_random(const HelmholtzProblem& P, const MediumRealization& r, const ComplexField& f,
                            const ComplexField& u) {
  if (!f.grid.compatible(P.grid()) || !u.grid.compatible(P.grid()))
    throw std::invalid_argument("solve_random: grid mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  HelmholtzProblem::Perturbation pert = P.perturbation(r);
  P.check_admissible(pert);
  const Eigen::VectorXcd& D = pert.D;
  RandomSolution out;
  out.report.cap_events = pert.cap_events;
  const Eigen::VectorXcd Du = -D.cwiseProduct(u.values);
  out.born = ComplexField(P.grid(), P.solve(Du));
  Eigen::VectorXcd w;
  int iters = 0;
  if (D.isZero(0)) {
    w = Eigen::VectorXcd::Zero(u.values.size());
  } else if (P.config().linear_solver == LinearSolver::Direct) {
    Eigen::SparseMatrix<cplx> A = P.matrix();
    for (Eigen::Index i = 0; i < D.size(); ++i)
      if (D[i] != cplx(0)) A.coeffRef(i, i) += D[i];
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw std::runtime_error("sparse LU factorization failed");
    w = lu.solve(Du);
  } else {
    auto op = [&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd {
      return x + P.solve(D.cwiseProduct(x));
    };
    w = out.born.values;
    double relres = 0;
    iters = gmres(op, out.born.values, w, P.config().gmres_tol, P.config().gmres_restart,
                  P.config().gmres_max_iter, &relres);
    if (!(relres <= P.config().gmres_tol * 10))
      throw std::runtime_error("GMRES did not converge (relative residual " + std::to_string(relres) + ")");
  }
  out.w = ComplexField(P.grid(), w);
  out.u_beta = ComplexField(P.grid(), u.values + w);
  const double fn = f.values.norm();
  out.report.residual = fn > 0 ? (P.apply(out.u_beta.values, &D) - f.values).norm() / fn : 0.0;
  const Eigen::VectorXcd coef = D / (P.k() * P.k());
  const EnergyCheck e = P.energy(out.u_beta.values, f.values, &coef);
  out.report.energy_lhs = e.lhs;
  out.report.energy_rhs = e.rhs;
  out.report.energy_rel_error = e.rel_error;
  out.report.iterations = iters;
  out.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

ComplexField solve_homogenized(const ComplexField& f, const LayerStack& st, double k, const SolverConfig& cfg,
                               SolveReport* rep) {
  HelmholtzProblem P(f.grid, st, k, cfg);
  return P.solve_field(f, rep);
}

ComplexField solve_random(const MediumRealization& r, const ComplexField& f, const LayerStack& st, double k,
                          const SolverConfig& cfg, SolveReport* rep) {
  HelmholtzProblem P(f.grid, st, k, cfg);
  const ComplexField u = P.solve_field(f);
  RandomSolution s = solve_random(P, r, f, u);
  if (rep) *rep = s.report;
  return s.u_beta;
}

Box slab_region(const Grid& g, const LayerStack& st) {
  Box b;
  b.lo = {g.origin[0] - 0.5 * g.spacing[0], -st.L, 0};
  b.hi = {g.origin[0] + (g.extent[0] - 0.5) * g.spacing[0], 0.0, 0};
  return b;
}

ComplexField gaussian_source(const Grid& g, double cx, double cz, double width, cplx amplitude) {
  ComplexField f(g);
  const double cut2 = 16 * width * width;
  for (int i = 0; i < g.extent[0]; ++i)
    for (int j = 0; j < g.extent[1]; ++j) {
      const double dx = g.coord(0, i) - cx, dz = g.coord(1, j) - cz;
      const double r2 = dx * dx + dz * dz;
      if (r2 <= cut2) f.values[g.index(i, j)] = amplitude * std::exp(-r2 / (2 * width * width));
    }
  return f;
}

}  // namespace lrm

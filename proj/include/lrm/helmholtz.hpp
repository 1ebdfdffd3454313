#pragma once

#include "lrm/core.hpp"
#include "lrm/medium.hpp"
#include "lrm/special.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <array>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace lrm {

// ---------------------------------------------------------------------------
// Green's functions

// Outgoing closed forms e^{i kn |x|}/(4 pi |x|) (d=3) and (i/4) H0(kn |x|)
// (d=2). These solve Delta Phi + kn^2 Phi = -delta; the layered Green's
// function below uses the opposite sign, so in a uniform medium
// layered_green == -free_green.
cplx free_green(int dim, cplx k_ne, const Eigen::Vector3d& x);

// Solution of  d^2 G/dz^2 + (k^2 n^2(z) - xi^2) G = delta(z - z0)  that is
// outgoing/decaying above and below the stack. Piecewise exponentials on the
// intervals cut by z = -L, z = 0 and z = z0.
struct ModeSolution {
  double xi = 0;
  std::array<cplx, 3> kz{};  // air, slab, water vertical wavenumbers, Im >= 0
  double z0 = 0;
  std::array<double, 3> cuts{};       // sorted boundaries
  std::array<cplx, 4> kint{};         // wavenumber on each interval
  std::array<cplx, 4> up{}, down{};   // coefficients of e^{ik(z-a)} and e^{-ik(z-b)}
  double rcond = 0;

  cplx value(double z) const;
  cplx derivative(double z) const;
  int interval(double z) const;
  // evaluation with the representation of interval m (0..3), also at its ends
  cplx value_in(int m, double z) const;
  cplx derivative_in(int m, double z) const;
};

ModeSolution mode_green(double xi, double z0, const LayerStack& st, double k);
cplx mode_green_value(double xi, double z, double z0, const LayerStack& st, double k);

// e^{i kz |z|} / (2 i kz)
cplx free_mode(cplx kz, double z);

struct GreenQuadConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-14;
  double tail_tol = 1e-9;
  int max_panels = 40000;
  double xi_cap_factor = 400;  // Xi never exceeds this many times k * max Re n
};

struct GreenValue {
  cplx value = 0;
  double error = 0;       // quadrature estimate + tail bound
  double tail_bound = 0;
  double xi_max = 0;
  bool converged = true;
  bool subtracted = false;  // free part of the receiver layer handled in closed form
};

// Layered Green's function G(x, x0) (solves Delta G + k^2 n^2 G = delta_{x0})
// by inverse transverse Fourier quadrature of the mode solutions. dim is 2 or
// 3; x = (x', z) with z stored in the last used coordinate.
GreenValue layered_green(int dim, const Eigen::Vector3d& x, const Eigen::Vector3d& x0, const LayerStack& st, double k,
                         const GreenQuadConfig& q = {});

// p = G - Phi_e where Phi_e is the slab free-space function (same sign
// convention as G), evaluated without forming either term separately.
GreenValue layered_green_regular_part(int dim, const Eigen::Vector3d& x, const Eigen::Vector3d& x0,
                                      const LayerStack& st, double k, const GreenQuadConfig& q = {});

// ---------------------------------------------------------------------------
// Finite-difference solver (d = 2)

enum class LinearSolver { Direct, Iterative };

struct Rect {
  double x_min = -1, x_max = 1, z_min = -0.5, z_max = 0.5;
};

struct SolverConfig {
  int points_per_wavelength = 10;
  double sponge_width = 2.0;     // in air wavelengths
  double sponge_strength = 3.0;  // peak added Im n^2
  LinearSolver linear_solver = LinearSolver::Iterative;
  Rect truncation;               // interior region, sponge added outside
  double h = 0;                  // explicit spacing; 0 derives it from the rules below
  double cells_per_beta = 4;     // random problems: h <= beta / cells_per_beta
  double gmres_tol = 1e-14;
  int gmres_restart = 40;
  int gmres_max_iter = 400;
};

json to_json(const SolverConfig& c);
SolverConfig solver_config_from_json(const json& j);

// Cell-centred grid covering truncation + sponge; axis 0 is x, axis 1 is z,
// and the slab interfaces fall on cell faces. beta > 0 adds the medium
// resolution rule.
Grid make_solver_grid(const SolverConfig& cfg, const LayerStack& st, double k, double beta = 0);

struct SolveReport {
  double residual = 0;          // ||A u - f|| / ||f||
  double energy_lhs = 0;        // k^2 sum Im(n^2)|u|^2 dV
  double energy_rhs = 0;        // Im sum f conj(u) dV
  double energy_rel_error = 0;
  int iterations = 0;
  std::int64_t cap_events = 0;
  double seconds = 0;
};

struct EnergyCheck {
  double lhs = 0, rhs = 0, rel_error = 0;
};

class HelmholtzProblem {
 public:
  HelmholtzProblem(const Grid& g, const LayerStack& st, double k, const SolverConfig& cfg);

  const Grid& grid() const { return grid_; }
  const LayerStack& stack() const { return stack_; }
  double k() const { return k_; }
  const SolverConfig& config() const { return cfg_; }
  const Eigen::VectorXcd& coefficient() const { return n2_; }  // homogenized n^2 incl. sponge
  const std::vector<char>& slab_mask() const { return slab_; }
  const Eigen::SparseMatrix<cplx>& matrix() const { return A0_; }

  // Homogenized solve with the cached factorization.
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;
  ComplexField solve_field(const ComplexField& f, SolveReport* rep = nullptr) const;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& u, const Eigen::VectorXcd* extra_diag = nullptr) const;
  EnergyCheck energy(const Eigen::VectorXcd& u, const Eigen::VectorXcd& f,
                     const Eigen::VectorXcd* extra_coef = nullptr) const;

  // Slab perturbation k^2 (V - mean) on the grid for a realization.
  struct Perturbation {
    Eigen::VectorXcd D;
    std::int64_t cap_events = 0;
    std::int64_t evaluations = 0;
  };
  Perturbation perturbation(const MediumRealization& r) const;
  void check_admissible(const Perturbation& p) const;  // (A3) on the slab

  bool is_slab_cell(std::int64_t id) const { return slab_[std::size_t(id)] != 0; }

 private:
  void factorize() const;
  Grid grid_;
  LayerStack stack_;
  double k_;
  SolverConfig cfg_;
  Eigen::VectorXcd n2_;
  std::vector<char> slab_;
  Eigen::SparseMatrix<cplx> A0_;
  mutable std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>> lu_;
  mutable std::mutex mu_;
};

// Convenience wrappers with a fresh problem per call.
ComplexField solve_homogenized(const ComplexField& f, const LayerStack& st, double k, const SolverConfig& cfg,
                               SolveReport* rep = nullptr);

struct RandomSolution {
  ComplexField u_beta;
  ComplexField w;       // u_beta - u
  ComplexField born;    // v_beta, the first-order term of w
  SolveReport report;
};

// Solves Delta u_b + k^2 (n^2 + (V - mean) chi) u_b = f given the homogenized
// solution u on the same grid. Iterative mode runs GMRES on
// (I + A0^{-1} D) w = A0^{-1}(-D u) starting from the Born term; direct mode
// factorizes the perturbed matrix. A zero perturbation returns u exactly.
RandomSolution solve_random(const HelmholtzProblem& P, const MediumRealization& r, const ComplexField& f,
                            const ComplexField& u);
ComplexField solve_random(const MediumRealization& r, const ComplexField& f, const LayerStack& st, double k,
                          const SolverConfig& cfg, SolveReport* rep = nullptr);

// Region spanned by the slab cells of a solver grid; pass it through
// padded_box before sampling a medium for solve_random.
Box slab_region(const Grid& g, const LayerStack& st);

// Smooth compactly supported bump exp(-|x - c|^2 / (2 w^2)) cut at 4w.
ComplexField gaussian_source(const Grid& g, double cx, double cz, double width, cplx amplitude = 1.0);

// ---------------------------------------------------------------------------
// Norm diagnostics for the Green's function envelopes

struct DiagnosticRow {
  double k = 0, kappa_e = 0;
  std::string norm_name;
  double value = 0, normalized_ratio = 0;
};

struct DiagnosticsConfig {
  int dim = 2;
  int z_nodes = 24;                          // trapezoid nodes across the slab
  std::vector<double> source_depths{0.25, 0.5, 0.75};  // fractions of L
  std::vector<double> detector_heights{0.1, 0.3};     // z of x0 in K
  double sup_window = 1.0;                   // |x' - x0'| range for the L-infinity scan
  int sup_points = 9;
  GreenQuadConfig quad;
};

// For each k in k_sweep and each kappa_e in kappa_sweep (same length, paired)
// reports ||p||_{L2(S)}, ||p||_{Linf(S u K)}, ||G||_{L2(S)} (x0 in S) and
// ||G||_{L2(S)} (x0 in K), maximised over source positions.
std::vector<DiagnosticRow> green_norm_diagnostics(const LayerStack& base, const std::vector<double>& k_sweep,
                                                  const std::vector<double>& kappa_sweep,
                                                  const DiagnosticsConfig& cfg = {}, int jobs = 1);
std::string diagnostics_csv(const std::vector<DiagnosticRow>& rows);

// Stack with the slab absorption set to kappa_e (+ alpha kept from base).
LayerStack with_kappa_e(const LayerStack& base, double kappa_e);

}  // namespace lrm

#pragma once

#include "lrm/helmholtz.hpp"
#include "lrm/stats.hpp"

#include <functional>

namespace lrm {

// v_beta = A0^{-1}(-k^2 (V - mean) chi u): the first Born term of u_beta - u.
ComplexField born_corrector(const HelmholtzProblem& P, const MediumRealization& r, const ComplexField& u);
ComplexField born_corrector(const MediumRealization& r, const ComplexField& u, const LayerStack& st, double k,
                            const SolverConfig& cfg);

// White-noise cells over the slab rows of a solver grid, `factor` solver cells
// per side. The last column of cells may be narrower when the grid width is not
// a multiple of factor.
struct WienerGrid {
  int factor = 1;
  Eigen::Matrix2d M_half = Eigen::Matrix2d::Identity();
  std::uint64_t seed = 0;
};

struct WienerCells {
  int nx = 0, nz = 0;           // Wiener cells along x and z
  int j_lo = 0;                 // first slab row of the solver grid
  std::vector<int> owner;       // solver cell -> Wiener cell, -1 outside the slab
  std::vector<double> volume;   // per Wiener cell
};
WienerCells wiener_cells(const HelmholtzProblem& P, int factor);

// dW_c = (1, i) M_half (xi1, xi2) sqrt(vol_c), cells in row-major order.
std::vector<cplx> wiener_increments(const WienerGrid& wg, const std::vector<double>& volume);

// v = -sigma k^2 int G(x, y) chi u(y) dW_y with piecewise constant noise
// density dW_c / vol_c, computed by one solve on the full grid. Rejects Wiener
// cells coarser than an eighth of the slab wavelength.
ComplexField sample_limit_corrector(const HelmholtzProblem& P, const ComplexField& u, const CovarianceModel& cov,
                                    const WienerGrid& wg);

// E{v(x) v*(y)} = k^4 tau^2 sum_z G(x, z) G*(y, z) |chi u(z)|^2 dz on the
// solver grid; points snap to the nearest cell centre.
cplx corrector_covariance(const HelmholtzProblem& P, const ComplexField& u, const CovarianceModel& cov,
                          const Eigen::Vector2d& x, const Eigen::Vector2d& y);
Eigen::MatrixXcd corrector_covariance_matrix(const HelmholtzProblem& P, const ComplexField& u,
                                             const CovarianceModel& cov, const std::vector<Eigen::Vector2d>& points);

struct TestFunction {
  double cx = 0, cz = 0.2, width = 0.05;
};
ComplexField test_function_field(const Grid& g, const TestFunction& t);

// Covariance of (Re, Im) <u_beta - u, phi> / beta^{d/2} in the limit:
// sigma^2 k^4 sum_y A(y) M A(y)^T dy with A = [[a, -b], [b, a]],
// a + ib = u(y) (A0^{-1} conj(phi))(y) on the slab.
Eigen::Matrix2d predicted_projection_covariance(const HelmholtzProblem& P, const ComplexField& u,
                                                const CovarianceModel& cov, const ComplexField& phi);

struct EnsembleConfig {
  InclusionSpec medium;
  std::vector<std::uint64_t> seeds;
  std::vector<TestFunction> phis;
  Rect detector;  // K
};

struct EnsembleMember {
  std::uint64_t seed = 0;
  std::vector<cplx> proj;       // <u_beta - u, phi_j>
  std::vector<cplx> proj_born;  // <v_beta, phi_j>
  double norm_w = 0, norm_born = 0, norm_resid = 0;  // L2(K) of u_beta - u, v_beta, u_beta - u - v_beta
  SolveReport report;
};

struct CorrectorEnsemble {
  double beta = 0;
  int dim = 2;
  std::string config_hash;
  std::vector<TestFunction> phis;
  std::vector<EnsembleMember> members;
};

json to_json(const CorrectorEnsemble& e);
CorrectorEnsemble ensemble_from_json(const json& j);

using MemberSink = std::function<void(const EnsembleMember&, const RandomSolution&)>;

// One random solve per seed; members are stored in seed order whatever the
// completion order. `sink`, if set, is called from the worker threads.
CorrectorEnsemble run_ensemble(const HelmholtzProblem& P, const ComplexField& f, const ComplexField& u,
                               const EnsembleConfig& cfg, int jobs = 1, const MemberSink& sink = {});

struct CltResult {
  std::size_t n = 0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d empirical = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d predicted = Eigen::Matrix2d::Zero();
  double ks_re = 0, ks_im = 0, p_re = 1, p_im = 1;
  double cov_ratio = 1;  // trace(empirical) / trace(predicted)
  bool degenerate = false;
};

// KS tests of the real and imaginary marginals against N(0, predicted) and the
// covariance ratio. Samples are already normalized.
CltResult clt_test_samples(const std::vector<Eigen::Vector2d>& samples, const Eigen::Matrix2d& predicted);
// Uses <u_beta - u, phi_j> / beta^{d/2}; requires min_members members.
CltResult clt_test(const CorrectorEnsemble& e, std::size_t phi_index, const Eigen::Matrix2d& predicted,
                   std::size_t min_members = 200);

struct ScalingPoint {
  double beta = 0;
  MeanSe born, resid;
};

struct ScalingFit {
  std::vector<ScalingPoint> points;
  LineFit born_fit, resid_fit;
  double born_slope_se = 0, resid_slope_se = 0;  // jackknife over seeds
  bool born_monotone = true, resid_monotone = true;
  bool skipped = false;  // all norms zero
};

// Slopes of log E||v_beta||_K and log E||u_beta - u - v_beta||_K against log beta.
// Ensembles must share their seeds (same order).
ScalingFit fit_scaling(const std::vector<CorrectorEnsemble>& per_beta);

struct ScalingSetup {
  LayerStack stack;
  double k = 12;
  SolverConfig solver;
  InclusionSpec medium;
  double src_x = 0, src_z = -0.2, src_width = 0.05;
  Rect detector;
};

struct ScalingStudy {
  ScalingFit fit;
  std::vector<CorrectorEnsemble> ensembles;
};

ScalingStudy scaling_study(const std::vector<double>& betas, const std::vector<std::uint64_t>& seeds,
                           const ScalingSetup& s, int jobs = 1);

}  // namespace lrm

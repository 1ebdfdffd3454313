#pragma once

#include "lrm/core.hpp"
#include "lrm/io.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace lrm {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream); distinct pairs give unrelated streams.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);
std::uint64_t splitmix64(std::uint64_t x);

// Poisson field of inclusions. Radii and the intensity are expressed in the
// unit-scale variable y = x / beta, so moments do not depend on beta.
struct InclusionSpec {
  int dim = 2;
  double intensity = 0.5;  // centres per unit y-volume
  double r_min = 0.35;
  double r_max = 0.5;
  double tau_re_min = 0.5, tau_re_max = 0.8;
  double tau_im_min = 0.05, tau_im_max = 0.1;
  double aspect = 1.0;  // < 1 gives ellipsoids (transverse/principal axis ratio)
  bool random_rotation = false;
  double beta = 0.01;
};

void validate(const InclusionSpec& s);
json to_json(const InclusionSpec& s);
InclusionSpec inclusion_spec_from_json(const json& j);

struct Box {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
  double volume(int dim) const;
  bool contains(const Eigen::Vector3d& x, int dim, double margin = 0) const;
};

// The region grown by r_max*beta on every side.
Box padded_box(const Box& region, const InclusionSpec& s);

struct Inclusion {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0;  // in x units, i.e. beta * r
  cplx contrast = 0;
  Eigen::Vector4d rotation{1, 0, 0, 0};  // unit quaternion (w, x, y, z); 2D uses the z axis
};

struct Moments {
  cplx mean = 0;
  double variance = 0;
};

// mean = intensity E[tau] E[vol], variance = intensity E|tau|^2 E[vol] (y-units)
Moments moments(const InclusionSpec& s);

class MediumRealization {
 public:
  MediumRealization() = default;
  MediumRealization(InclusionSpec spec, Box box, std::uint64_t seed, std::vector<Inclusion> inc);

  const InclusionSpec& spec() const { return spec_; }
  const Box& box() const { return box_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Inclusion>& inclusions() const { return inc_; }
  cplx mean() const { return mean_; }
  double sigma() const { return sigma_; }
  double cap() const { return 8.0 * sigma_; }

  // Raw sum of contrasts over inclusions containing x, summed in inclusion order.
  cplx raw_V(const Eigen::Vector3d& x) const;
  bool inside(const Inclusion& c, const Eigen::Vector3d& x) const;

 private:
  void build_index();
  InclusionSpec spec_;
  Box box_;
  std::uint64_t seed_ = 0;
  std::vector<Inclusion> inc_;
  cplx mean_ = 0;
  double sigma_ = 0;
  double bin_ = 1;
  std::array<int, 3> nbin_{1, 1, 1};
  std::vector<std::vector<int>> bins_;
};

MediumRealization sample_realization(const InclusionSpec& spec, const Box& box, std::uint64_t seed);

// V at x with |V - mean| capped at 8 sigma. Throws if x is closer than
// r_max*beta to the box boundary. *capped is set when the cap was applied.
cplx eval_V(const MediumRealization& r, const Eigen::Vector3d& x, bool* capped = nullptr);

// V on every grid point accepted by the mask (others set to mean), with the
// same capping and the same summation order as eval_V.
struct GridSample {
  std::vector<cplx> V;
  std::int64_t cap_events = 0;
  std::int64_t evaluations = 0;
};
template <typename Mask>
GridSample eval_V_grid(const MediumRealization& r, const Grid& g, Mask mask);

void save_realization(const std::string& base, const MediumRealization& r, const json& extra = json::object());
MediumRealization load_realization(const std::string& base);

struct CovarianceModel {
  double sigma_r_sq = 0;
  double sigma_i_sq = 0;
  double gamma = 0;
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d M_half = Eigen::Matrix2d::Zero();
  double sigma = 0;
  double tau_sq = 0;      // sigma^2 (sigma_r^2 + sigma_i^2)
  double corr_range = 0;  // support radius of the covariance, x units
};

CovarianceModel make_covariance_model(double sigma_r_sq, double sigma_i_sq, double gamma, double sigma,
                                      double corr_range);

// Closed-form integrated covariances of the Poisson shot-noise field,
// intensity E[tau_a tau_b] E[vol^2] / sigma^2. Used as an independent check.
CovarianceModel poisson_covariance_model(const InclusionSpec& s);

// Square root of a symmetric nonnegative 2x2 matrix:
// (1/t) [[a + s, c], [c, b + s]] with s = sqrt(ab - c^2), t = sqrt(a + b + 2s).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 2> matrix_sqrt(const Eigen::Matrix<Scalar, 2, 2>& M) {
  const Scalar a = M(0, 0), b = M(1, 1), c = (M(0, 1) + M(1, 0)) / Scalar(2);
  const Scalar tr = a + b;
  const Scalar det = a * b - c * c;
  const Scalar disc = std::sqrt(std::max(Scalar(0), (a - b) * (a - b) / Scalar(4) + c * c));
  const Scalar lmin = tr / Scalar(2) - disc;
  if (lmin < Scalar(-1e-12)) throw std::invalid_argument("matrix_sqrt: matrix is not nonnegative definite");
  const Scalar s = std::sqrt(std::max(Scalar(0), det));
  const Scalar t2 = tr + Scalar(2) * s;
  Eigen::Matrix<Scalar, 2, 2> R = Eigen::Matrix<Scalar, 2, 2>::Zero();
  if (t2 <= Scalar(0)) return R;
  const Scalar t = std::sqrt(t2);
  R << (a + s) / t, c / t, c / t, (b + s) / t;
  return R;
}

std::vector<std::array<int, 3>> lag_box(int max_lag, int dim);

struct CovarianceEstimate {
  std::vector<std::array<int, 3>> lags;
  std::vector<double> c_rr, c_ii, c_ri;  // E{q_r(0)q_r(l)}, E{q_i(0)q_i(l)}, E{q_r(0)q_i(l)}
  std::vector<double> se_rr, se_ii, se_ri;
  double sigma_r_sq = 0, sigma_i_sq = 0, gamma = 0;  // lattice sums times (h/beta)^d
  double se_sigma_r_sq = 0, se_sigma_i_sq = 0, se_gamma = 0;
  std::int64_t cap_events = 0;
  std::int64_t evaluations = 0;
};

// Lag covariances of q on a lattice of spacing h (x units) with `cells` points
// per axis, averaged over n_samples independent realizations. The known
// closed-form mean and sigma normalize q, so the estimates are unbiased.
CovarianceEstimate empirical_covariance(const InclusionSpec& spec, const std::vector<std::array<int, 3>>& lags,
                                        double h, int cells, int n_samples, std::uint64_t seed, int jobs = 1);

CovarianceModel covariance_model_from_estimate(const CovarianceEstimate& e, const InclusionSpec& spec);

}  // namespace lrm

#include "lrm/medium_impl.hpp"

#pragma once

#include "lrm/core.hpp"
#include "lrm/io.hpp"

#include <string>
#include <vector>

namespace lrm {

// Real wavenumbers k_j = 2 pi Re n_j and absorptions mu_j = (2 pi)^2 Im(n_j^2) / eta
// of the high-frequency model.
struct TransportMedium {
  double k0 = 0, ke = 0, k2 = 0;
  double mu0 = 0, mue = 0, mu2 = 0;
  double L = 0;
  double k(int layer) const { return layer == 0 ? k0 : (layer == 1 ? ke : k2); }
  double mu(int layer) const { return layer == 0 ? mu0 : (layer == 1 ? mue : mu2); }
};
TransportMedium transport_medium(const LayerStack& st, double eta);

// sqrt(k_j^2 - k_perp^2), or 0 once k_perp >= k_j. layer: 0 air, 1 slab, 2 water.
double vertical_wavenumber(const TransportMedium& m, int layer, double k_perp);

enum class Interface { Top, Bottom };

struct RT {
  double R = 0, T = 0;
};
// |(ke - kj)/(ke + kj)|^2 and 4 ke^2/(ke + kj)^2 with vertical wavenumbers;
// R = 1, T = 0 when the far side is evanescent (k_perp >= k_j, critical included).
RT rt_coefficients(const TransportMedium& m, Interface which, double k_perp);

// Directions on the unit sphere with solid-angle weights (sum 2 pi in 2D,
// 4 pi in 3D). 2D: uniform angles offset by half a step so none is horizontal.
// 3D: Gauss-Legendre in cos(theta) times uniform azimuth.
struct DirectionQuadrature {
  int dim = 2;
  std::vector<Eigen::Vector3d> unit;  // (x, [y], z) with z last used axis
  std::vector<double> weight;
  std::size_t size() const { return unit.size(); }
};
DirectionQuadrature make_direction_quadrature(int dim, int n_theta, int n_phi = 1);

struct PhaseSpaceRay {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  int dir = 0;        // quadrature node, fixes k_perp for the whole tree
  int kz_sign = 1;    // +1 up, -1 down
  int layer = 1;
  double power = 0;   // vertical energy flux carried by the ray
  int bounces = 0;
};

// Isotropic emission from every slab cell of u: power
// C |u|^2 vol w_d ke^{d-2} / 2 per node, C = pi (2 pi)^4 tau^2 / eta^{d+1}.
// `stride` aggregates stride^d cells into one emission point.
std::vector<PhaseSpaceRay> emit_source(const ComplexField& u, const LayerStack& st, const TransportMedium& m,
                                       double tau_sq, double eta, const DirectionQuadrature& q, int stride = 1);
double source_constant(double tau_sq, double eta, int dim);

struct TransportConfig {
  double detector_z = 0.5;   // plane z = detector_z > 0
  double lateral = 2.0;      // rays with |x'| beyond this escape laterally
  int max_bounces = 200;
  double min_rel_power = 1e-14;  // branches below this fraction of their root's power are capped
  Grid window;               // cell-centred accumulation grid for W
  double detector_x_min = -1, detector_x_max = 1;
  int detector_bins = 20;
  int chunks = 64;
};

struct FluxTally {
  double emitted = 0, absorbed = 0;
  double escaped_top = 0, escaped_bottom = 0, escaped_lateral = 0;
  double capped = 0;
  std::int64_t dropped = 0;  // rays with vanishing vertical wavenumber
  std::int64_t events = 0;   // interface events
};

// W averaged over a window cell and integrated over a direction bin
// (int_bin W dp), cell-major.
struct WignerDensity {
  Grid grid;
  DirectionQuadrature quad;
  TransportMedium medium;
  std::vector<double> values;
  double eta = 0, beta = 0, tau_sq = 0;
  double at(std::int64_t cell, std::size_t d) const { return values[std::size_t(cell) * quad.size() + d]; }
  // momentum of node d in a layer, upward/downward half decided by the node itself
  Eigen::Vector3d momentum(int layer, std::size_t d) const;
};

struct TransportResult {
  WignerDensity W;
  FluxTally tally;
  std::vector<double> detector;  // detector_bins x quad.size(), upward flux through the plane
};

// Long characteristics with deterministic branch splitting. Chunks of rays are
// reduced in chunk order, so the output does not depend on `jobs`.
TransportResult propagate(const std::vector<PhaseSpaceRay>& rays, const TransportMedium& m,
                          const DirectionQuadrature& q, const TransportConfig& cfg, int jobs = 1);

// u(x) u*(y) + beta^d sum_d exp(-i (x - y).p_d / eta) W((x + y)/2, d);
// u and W are sampled at the nearest cell.
cplx correlation_C0(const Eigen::Vector3d& x, const Eigen::Vector3d& y, const ComplexField& u,
                    const WignerDensity& W);

struct FluxBalance {
  double emitted = 0, absorbed = 0, escaped = 0, capped = 0;
  double imbalance = 0;  // |emitted - absorbed - escaped - capped| / emitted
};
FluxBalance flux_balance(const FluxTally& t);

void save_wigner(const std::string& base, const WignerDensity& W, const json& extra = json::object());
WignerDensity load_wigner(const std::string& base);
std::string detector_csv(const TransportResult& r, const TransportConfig& cfg);

}  // namespace lrm

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lrm/medium.hpp"
#include "lrm/transport.hpp"

#include <filesystem>
#include <random>

using namespace lrm;

namespace {

TransportMedium matched(double k, double mu = 0) {
  TransportMedium m;
  m.k0 = m.ke = m.k2 = k;
  m.mue = mu;
  m.L = 0.2;
  return m;
}

Grid box_grid(double x0, double x1, double z0, double z1, double h) {
  Grid g;
  g.dim = 2;
  g.spacing = {h, h, 1};
  g.extent = {int(std::lround((x1 - x0) / h)), int(std::lround((z1 - z0) / h)), 1};
  g.origin = {x0 + 0.5 * h, z0 + 0.5 * h, 0};
  return g;
}

// |u|^2 = 1 + x on a grid straddling the slab of thickness 0.2
ComplexField slab_field() {
  ComplexField u(box_grid(-0.2, 0.2, -0.3, 0.1, 0.01));
  for (int i = 0; i < u.grid.extent[0]; ++i)
    for (int j = 0; j < u.grid.extent[1]; ++j)
      u.values[u.grid.index(i, j)] = std::polar(std::sqrt(1 + u.grid.coord(0, i)), 3.0 * i - j);
  return u;
}

TransportConfig wide_config() {
  TransportConfig c;
  c.detector_z = 0.3;
  c.lateral = 1e6;
  c.detector_x_min = -1e7;
  c.detector_x_max = 1e7;
  c.detector_bins = 4;
  c.window = box_grid(-0.3, 0.3, -0.3, 0.3, 0.02);
  c.chunks = 8;
  return c;
}

LayerStack desk_stack() { return make_layer_stack(1.0, 1.3, 0.05, cplx(0.18, 0.03), 3.0, 0.5, 0.005, 0.2); }

double sum(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("vertical wavenumber examples") {
  TransportMedium m;
  m.k0 = 6;
  m.ke = 7;
  m.k2 = 11;
  CHECK(vertical_wavenumber(m, 1, 0) == 7);
  CHECK(vertical_wavenumber(m, 0, 6) == 0);
  CHECK(vertical_wavenumber(m, 0, 6.5) == 0);
  CHECK(vertical_wavenumber(m, 2, 3) == doctest::Approx(std::sqrt(112.0)).epsilon(1e-15));
  CHECK_THROWS_AS(vertical_wavenumber(m, 1, -1), std::invalid_argument);
}

TEST_CASE("reflection-transmission coefficients") {
  TransportMedium m = matched(5);
  for (double kp : {0.0, 2.0, 4.9}) {
    CHECK(rt_coefficients(m, Interface::Top, kp).R == 0);
    CHECK(rt_coefficients(m, Interface::Top, kp).T == 1);
  }
  m.k0 = 1;
  m.ke = 2;
  m.k2 = 3;
  const RT n = rt_coefficients(m, Interface::Top, 0);
  CHECK(n.R == doctest::Approx(1.0 / 9).epsilon(1e-15));
  CHECK(n.T == doctest::Approx(16.0 / 9).epsilon(1e-15));

  // total internal reflection, critical angle included
  for (double kp : {1.0, 1.2, 1.99}) {
    const RT t = rt_coefficients(m, Interface::Top, kp);
    CHECK(t.R == 1);
    CHECK(t.T == 0);
  }

  // flux identity R + (k_j / k_e) T = 1 over random k_perp
  Rng g = make_rng(4, 4);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 1000; ++i) {
    TransportMedium r;
    r.ke = 5 + 20 * U(g);
    r.k0 = r.ke * (0.3 + 0.7 * U(g));
    r.k2 = r.ke * (1 + 2 * U(g));
    for (Interface w : {Interface::Top, Interface::Bottom}) {
      const int far = w == Interface::Top ? 0 : 2;
      const double kp = std::min(r.k(far), r.ke) * U(g) * (1 - 1e-9);  // slab rays have k_perp < ke
      const RT c = rt_coefficients(r, w, kp);
      const double kj = vertical_wavenumber(r, far, kp), ke = vertical_wavenumber(r, 1, kp);
      CHECK(std::abs(c.R + kj / ke * c.T - 1) < 1e-13);
      CHECK(c.R >= 0);
      CHECK(c.R <= 1);
    }
  }
}

TEST_CASE("direction quadratures cover the shell") {
  const DirectionQuadrature q2 = make_direction_quadrature(2, 64);
  CHECK(sum(q2.weight) == doctest::Approx(2 * kPi).epsilon(1e-14));
  for (const auto& u : q2.unit) {
    CHECK(u.norm() == doctest::Approx(1).epsilon(1e-15));
    CHECK(std::abs(u[1]) > 1e-3);
  }
  const DirectionQuadrature q3 = make_direction_quadrature(3, 8, 12);
  CHECK(q3.size() == 96);
  CHECK(sum(q3.weight) == doctest::Approx(4 * kPi).epsilon(1e-13));
  // second moment of cos(theta) over the sphere, 4 pi / 3
  double m2 = 0;
  for (std::size_t i = 0; i < q3.size(); ++i) m2 += q3.weight[i] * q3.unit[i][2] * q3.unit[i][2];
  CHECK(m2 == doctest::Approx(4 * kPi / 3).epsilon(1e-13));
  CHECK_THROWS_AS(make_direction_quadrature(2, 2), std::invalid_argument);
}

TEST_CASE("emission: zero source, isotropy, total power") {
  const LayerStack st = desk_stack();
  const double eta = 0.1, tau_sq = 0.3;
  const TransportMedium m = transport_medium(st, eta);
  const DirectionQuadrature q = make_direction_quadrature(2, 32);
  const ComplexField u = slab_field();
  CHECK(emit_source(ComplexField(u.grid), st, m, tau_sq, eta, q).empty());

  const std::vector<PhaseSpaceRay> rays = emit_source(u, st, m, tau_sq, eta, q);
  REQUIRE(rays.size() % q.size() == 0);
  for (std::size_t c = 0; c < rays.size(); c += q.size())
    for (std::size_t k = 1; k < q.size(); ++k) CHECK(rays[c + k].power == rays[c].power);

  // direct quadrature: C int_S |u|^2 times (2 pi k_e) / (2 k_e)
  double mass = 0;
  for (int i = 0; i < u.grid.extent[0]; ++i)
    for (int j = 0; j < u.grid.extent[1]; ++j) {
      const double z = u.grid.coord(1, j);
      if (z < 0 && z > -st.L) mass += (1 + u.grid.coord(0, i)) * u.grid.cell_volume();
    }
  double total = 0;
  for (const auto& r : rays) total += r.power;
  CHECK(total == doctest::Approx(source_constant(tau_sq, eta, 2) * mass * kPi).epsilon(1e-12));
  CHECK(source_constant(tau_sq, eta, 2) == doctest::Approx(kPi * std::pow(2 * kPi, 4) * tau_sq / std::pow(eta, 3)));

  // aggregated emission points keep the total
  double t2 = 0;
  for (const auto& r : emit_source(u, st, m, tau_sq, eta, q, 3)) t2 += r.power;
  CHECK(t2 == doctest::Approx(total).epsilon(1e-12));

  ComplexField above(box_grid(-0.2, 0.2, -0.1, 0.1, 0.01));
  above.values.setOnes();
  CHECK_THROWS_AS(emit_source(above, st, m, tau_sq, eta, q), std::invalid_argument);
}

TEST_CASE("matched lossless media: free transport conserves flux") {
  const TransportMedium m = matched(8);
  const DirectionQuadrature q = make_direction_quadrature(2, 48);
  std::vector<PhaseSpaceRay> rays;
  Rng g = make_rng(2, 2);
  std::uniform_real_distribution<double> X(-0.2, 0.2), Z(-0.2, 0);
  double up = 0;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d x(X(g), Z(g), 0);
    for (std::size_t k = 0; k < q.size(); ++k) {
      PhaseSpaceRay r;
      r.x = x;
      r.dir = int(k);
      r.kz_sign = q.unit[k][1] > 0 ? 1 : -1;
      r.power = 1 + 0.01 * i;
      if (r.kz_sign > 0) up += r.power;
      rays.push_back(r);
    }
  }
  const TransportResult t = propagate(rays, m, q, wide_config());
  const FluxBalance b = flux_balance(t.tally);
  CHECK(b.imbalance < 1e-10);
  CHECK(t.tally.capped == 0);
  CHECK(t.tally.absorbed == 0);
  CHECK(sum(t.detector) == doctest::Approx(up).epsilon(1e-13));
  CHECK(t.tally.escaped_top == doctest::Approx(up).epsilon(1e-13));
  for (double w : t.W.values) CHECK(w >= 0);
}

TEST_CASE("single vertical ray through a lossy slab") {
  TransportMedium m = matched(8, 3.5);
  DirectionQuadrature q;
  q.dim = 2;
  q.unit = {Eigen::Vector3d(0, 1, 0)};
  q.weight = {1};
  PhaseSpaceRay r;
  r.x = Eigen::Vector3d(0, -m.L, 0);
  r.dir = 0;
  r.kz_sign = 1;
  r.power = 2.0;
  const TransportResult t = propagate({r}, m, q, wide_config());
  const double expect = 2.0 * std::exp(-m.mue * m.L / m.ke);
  CHECK(std::abs(sum(t.detector) - expect) < 1e-12 * expect);
  CHECK(std::abs(t.tally.absorbed - (2.0 - expect)) < 1e-12);
}

TEST_CASE("total internal reflection returns the full weight") {
  TransportMedium m;
  m.k0 = 4;
  m.ke = 8;
  m.k2 = 12;
  m.L = 0.2;
  const DirectionQuadrature q = make_direction_quadrature(2, 16);
  // the first node has k_perp = ke sin(pi/16) < k0; pick the most oblique upward node instead
  std::size_t d = 0;
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q.unit[k][1] > 0 && std::abs(q.unit[k][0]) > std::abs(q.unit[d][0])) d = k;
  REQUIRE(m.ke * std::abs(q.unit[d][0]) > m.k0);
  PhaseSpaceRay r;
  r.x = Eigen::Vector3d(0, -0.1, 0);
  r.dir = int(d);
  r.power = 1.5;
  TransportConfig c = wide_config();
  c.max_bounces = 1;  // stop at the bottom after the reflection at z = 0
  const TransportResult t = propagate({r}, m, q, c);
  CHECK(t.tally.escaped_top == 0);
  CHECK(t.tally.capped == 1.5);
  CHECK(t.tally.events == 2);
}

TEST_CASE("lossy layered slab: bookkeeping, caps, refinement, jobs") {
  const LayerStack st = desk_stack();
  const double eta = 0.1, tau_sq = 0.3;
  const TransportMedium m = transport_medium(st, eta);
  const ComplexField u = slab_field();
  TransportConfig c = wide_config();
  c.lateral = 3;
  c.detector_x_min = -1;
  c.detector_x_max = 1;
  c.detector_bins = 20;

  std::vector<double> flux;
  for (int nt : {64, 128}) {
    const DirectionQuadrature q = make_direction_quadrature(2, nt);
    const TransportResult t = propagate(emit_source(u, st, m, tau_sq, eta, q, 2), m, q, c);
    const FluxBalance b = flux_balance(t.tally);
    CHECK(b.imbalance < 1e-10);
    CHECK(std::abs(b.absorbed - (b.emitted - b.escaped - b.capped)) < 1e-10 * b.emitted);
    flux.push_back(sum(t.detector));
  }
  MESSAGE("detector flux " << flux[0] << " -> " << flux[1]);
  CHECK(std::abs(flux[1] / flux[0] - 1) < 0.02);

  const DirectionQuadrature q = make_direction_quadrature(2, 32);
  const std::vector<PhaseSpaceRay> rays = emit_source(u, st, m, tau_sq, eta, q, 2);
  TransportConfig capped = c;
  capped.max_bounces = 2;
  const TransportResult tc = propagate(rays, m, q, capped);
  CHECK(tc.tally.capped > 0);
  CHECK(flux_balance(tc.tally).imbalance < 1e-10);

  const TransportResult a = propagate(rays, m, q, c, 1), b = propagate(rays, m, q, c, 3);
  CHECK(a.W.values == b.W.values);
  CHECK(a.detector == b.detector);
  CHECK(a.tally.absorbed == b.tally.absorbed);
  for (double w : a.W.values) CHECK(w >= 0);
}

TEST_CASE("correlation model C0") {
  const LayerStack st = desk_stack();
  const double eta = 0.1, tau_sq = 0.3;
  const TransportMedium m = transport_medium(st, eta);
  const ComplexField u = slab_field();
  const DirectionQuadrature q = make_direction_quadrature(2, 32);
  TransportResult t = propagate(emit_source(u, st, m, tau_sq, eta, q, 2), m, q, wide_config());
  t.W.eta = eta;
  t.W.beta = 0.01;
  t.W.tau_sq = tau_sq;

  const Eigen::Vector3d x(0.05, 0.03, 0), y(-0.04, 0.07, 0);
  auto at = [&](const Eigen::Vector3d& p) {
    return u.values[u.grid.index(int(std::lround((p[0] - u.grid.origin[0]) / u.grid.spacing[0])),
                                 int(std::lround((p[1] - u.grid.origin[1]) / u.grid.spacing[1])))];
  };
  WignerDensity zero = t.W;
  std::fill(zero.values.begin(), zero.values.end(), 0.0);
  CHECK(correlation_C0(x, y, u, zero) == at(x) * std::conj(at(y)));

  const cplx cxx = correlation_C0(x, x, u, t.W);
  CHECK(cxx.imag() == 0);
  CHECK(cxx.real() > std::norm(at(x)));

  const cplx cxy = correlation_C0(x, y, u, t.W), cyx = correlation_C0(y, x, u, t.W);
  CHECK(std::abs(cxy - std::conj(cyx)) < 1e-14 * std::abs(cxy));

  CHECK_THROWS_AS(correlation_C0(Eigen::Vector3d(5, 0, 0), Eigen::Vector3d(5, 0, 0), u, t.W), std::out_of_range);

  const auto dir = std::filesystem::temp_directory_path() / "lrm_test_transport";
  std::filesystem::create_directories(dir);
  save_wigner((dir / "w").string(), t.W);
  const WignerDensity l = load_wigner((dir / "w").string());
  CHECK(l.values == t.W.values);
  CHECK(correlation_C0(x, y, u, l) == cxy);
}

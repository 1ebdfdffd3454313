#include "lrm/transport.hpp"
#include "lrm/parallel.hpp"

#include <sstream>

namespace lrm {

TransportMedium transport_medium(const LayerStack& st, double eta) {
  if (!(eta > 0)) throw std::invalid_argument("transport: eta must be positive");
  TransportMedium m;
  const double tp = 2 * kPi;
  m.k0 = tp * principal_sqrt(st.n0_sq).real();
  m.ke = tp * principal_sqrt(st.ne_sq).real();
  m.k2 = tp * principal_sqrt(st.n2_sq).real();
  m.mu0 = tp * tp * st.n0_sq.imag() / eta;
  m.mue = tp * tp * st.ne_sq.imag() / eta;
  m.mu2 = tp * tp * st.n2_sq.imag() / eta;
  m.L = st.L;
  return m;
}

double vertical_wavenumber(const TransportMedium& m, int layer, double k_perp) {
  if (k_perp < 0) throw std::invalid_argument("vertical_wavenumber: k_perp must be nonnegative");
  const double k = m.k(layer);
  if (k_perp >= k) return 0.0;
  return std::sqrt((k - k_perp) * (k + k_perp));
}

RT rt_coefficients(const TransportMedium& m, Interface which, double k_perp) {
  const int far = which == Interface::Top ? 0 : 2;
  if (k_perp >= m.k(far)) return {1.0, 0.0};
  const double ke = vertical_wavenumber(m, 1, k_perp);
  const double kj = vertical_wavenumber(m, far, k_perp);
  const double s = ke + kj;
  return {(ke - kj) * (ke - kj) / (s * s), 4 * ke * ke / (s * s)};
}

namespace {

// Gauss-Legendre nodes on [-1, 1] by Newton on the three-term recurrence.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(std::size_t(n), 0);
  w.assign(std::size_t(n), 0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 1;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p1 = t, p0 = 1;
      dp = n * (t * p1 - p0) / (t * t - 1);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[std::size_t(i)] = t;
    w[std::size_t(i)] = 2 / ((1 - t * t) * dp * dp);
  }
}

}  // namespace

DirectionQuadrature make_direction_quadrature(int dim, int n_theta, int n_phi) {
  DirectionQuadrature q;
  q.dim = dim;
  if (dim == 2) {
    if (n_theta < 4) throw std::invalid_argument("direction quadrature: need at least 4 angles");
    for (int i = 0; i < n_theta; ++i) {
      const double th = 2 * kPi * (i + 0.5) / n_theta;
      q.unit.emplace_back(std::sin(th), std::cos(th), 0.0);
      q.weight.push_back(2 * kPi / n_theta);
    }
  } else if (dim == 3) {
    if (n_theta < 2 || n_theta % 2 || n_phi < 3)
      throw std::invalid_argument("direction quadrature: need an even number >= 2 of polar nodes and >= 3 azimuths");
    std::vector<double> x, w;
    gauss_legendre(n_theta, x, w);
    for (int i = 0; i < n_theta; ++i) {
      const double ct = x[std::size_t(i)], st = std::sqrt(1 - ct * ct);
      for (int j = 0; j < n_phi; ++j) {
        const double ph = 2 * kPi * (j + 0.5) / n_phi;
        q.unit.emplace_back(st * std::cos(ph), st * std::sin(ph), ct);
        q.weight.push_back(w[std::size_t(i)] * 2 * kPi / n_phi);
      }
    }
  } else {
    throw std::invalid_argument("direction quadrature: dimension must be 2 or 3");
  }
  return q;
}

namespace {

int zaxis(int dim) { return dim - 1; }

double kperp_of(const DirectionQuadrature& q, std::size_t d, double ke) {
  const Eigen::Vector3d& u = q.unit[d];
  const double t = q.dim == 2 ? std::abs(u[0]) : std::hypot(u[0], u[1]);
  return ke * t;
}

}  // namespace

Eigen::Vector3d WignerDensity::momentum(int layer, std::size_t d) const {
  const Eigen::Vector3d& u = quad.unit[d];
  const int za = zaxis(quad.dim);
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (int a = 0; a < za; ++a) p[a] = medium.ke * u[a];
  const double kp = kperp_of(quad, d, medium.ke);
  p[za] = (u[za] >= 0 ? 1.0 : -1.0) * vertical_wavenumber(medium, layer, kp);
  return p;
}

double source_constant(double tau_sq, double eta, int dim) {
  return kPi * std::pow(2 * kPi, 4) * tau_sq / std::pow(eta, dim + 1);
}

std::vector<PhaseSpaceRay> emit_source(const ComplexField& u, const LayerStack& st, const TransportMedium& m,
                                       double tau_sq, double eta, const DirectionQuadrature& q, int stride) {
  const Grid& g = u.grid;
  const int d = g.dim;
  if (d != q.dim) throw std::invalid_argument("emit_source: field and quadrature dimensions differ");
  if (stride < 1) throw std::invalid_argument("emit_source: stride must be >= 1");
  const int za = zaxis(d);
  const double zlo = g.coord(za, 0) - 0.5 * g.spacing[za];
  const double zhi = g.coord(za, g.extent[za] - 1) + 0.5 * g.spacing[za];
  if (zlo > -st.L + 1e-12 || zhi < -1e-12) throw std::invalid_argument("emit_source: u does not cover the slab");
  const double C = source_constant(tau_sq, eta, d);
  const double shell = std::pow(m.ke, d - 2) / 2;
  const double dv = g.cell_volume();
  std::array<int, 3> n{1, 1, 1}, nb{1, 1, 1};
  for (int a = 0; a < d; ++a) {
    n[a] = g.extent[a];
    nb[a] = (n[a] + stride - 1) / stride;
  }
  std::vector<PhaseSpaceRay> rays;
  for (int I = 0; I < nb[0]; ++I)
    for (int J = 0; J < nb[1]; ++J)
      for (int K = 0; K < nb[2]; ++K) {
        double mass = 0;
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        for (int i = I * stride; i < std::min(n[0], (I + 1) * stride); ++i)
          for (int j = J * stride; j < std::min(n[1], (J + 1) * stride); ++j)
            for (int l = K * stride; l < std::min(n[2], (K + 1) * stride); ++l) {
              const std::array<int, 3> id{i, j, l};
              const double z = g.coord(za, id[std::size_t(za)]);
              if (!(z < 0 && z > -st.L)) continue;
              const double w = std::norm(u.values[g.index(i, j, l)]) * dv;
              mass += w;
              for (int a = 0; a < d; ++a) c[a] += w * g.coord(a, id[std::size_t(a)]);
            }
        if (!(mass > 0)) continue;
        c /= mass;
        for (std::size_t k = 0; k < q.size(); ++k) {
          PhaseSpaceRay r;
          r.x = c;
          r.dir = int(k);
          r.kz_sign = q.unit[k][za] >= 0 ? 1 : -1;
          r.layer = 1;
          r.power = C * mass * q.weight[k] * shell;
          rays.push_back(r);
        }
      }
  return rays;
}

namespace {

struct Accum {
  std::vector<double> W, det;
  FluxTally t;
};

class Tracer {
 public:
  Tracer(const TransportMedium& m, const DirectionQuadrature& q, const TransportConfig& c)
      : m_(m), q_(q), c_(c), d_(q.dim), za_(q.dim - 1) {
    for (int a = 0; a < d_; ++a) vol_ *= c.window.spacing[a];
  }

  void trace(const PhaseSpaceRay& root, Accum& acc) const {
    const double floor = c_.min_rel_power * root.power;
    acc.t.emitted += root.power;
    std::vector<PhaseSpaceRay> stack{root};
    while (!stack.empty()) {
      PhaseSpaceRay r = stack.back();
      stack.pop_back();
      step(r, floor, stack, acc);
    }
  }

 private:
  void step(const PhaseSpaceRay& r, double floor, std::vector<PhaseSpaceRay>& stack, Accum& acc) const {
    const std::size_t dn = std::size_t(r.dir);
    const double kp = kperp_of(q_, dn, m_.ke);
    const double kz = vertical_wavenumber(m_, r.layer, kp);
    const double kabs = m_.k(r.layer);
    if (!(kz > 0)) {
      ++acc.t.dropped;
      acc.t.capped += r.power;
      return;
    }
    // unit direction in this layer
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    for (int a = 0; a < za_; ++a) v[a] = m_.ke * q_.unit[dn][a] / kabs;
    v[za_] = r.kz_sign * kz / kabs;
    // distance to the vertical end of the layer
    double zend;
    if (r.layer == 1)
      zend = r.kz_sign > 0 ? 0.0 : -m_.L;
    else if (r.layer == 0)
      zend = c_.detector_z;
    else
      zend = -1e300;
    double s = (zend - r.x[za_]) / v[za_];
    if (!(s >= 0)) s = 0;
    int exit = 0;  // 0 vertical, 1 lateral
    for (int a = 0; a < za_; ++a) {
      if (v[a] == 0) continue;
      const double bound = v[a] > 0 ? c_.lateral : -c_.lateral;
      const double sl = std::max(0.0, (bound - r.x[a]) / v[a]);
      if (sl < s) {
        s = sl;
        exit = 1;
      }
    }
    const double mu = m_.mu(r.layer);
    const double att = std::exp(-mu * s / kabs);
    const double pend = r.power * att;
    acc.t.absorbed += r.power - pend;
    deposit(r, v, s, mu / kabs, kabs, acc);
    Eigen::Vector3d xe = r.x + s * v;
    if (exit == 1) {
      acc.t.escaped_lateral += pend;
      return;
    }
    if (r.layer == 0) {
      acc.t.escaped_top += pend;
      detect(xe, dn, pend, acc);
      return;
    }
    xe[za_] = zend;
    ++acc.t.events;
    if (r.bounces >= c_.max_bounces) {
      acc.t.capped += pend;
      return;
    }
    const Interface which = r.kz_sign > 0 ? Interface::Top : Interface::Bottom;
    const RT rt = rt_coefficients(m_, which, kp);
    const int far = which == Interface::Top ? 0 : 2;
    const double kzf = vertical_wavenumber(m_, far, kp);
    PhaseSpaceRay refl = r;
    refl.x = xe;
    refl.kz_sign = -r.kz_sign;
    refl.power = rt.R * pend;
    refl.bounces = r.bounces + 1;
    const double ptr = rt.T * (kzf / kz) * pend;
    // leftover from rounding in R + (kj/ke) T = 1 goes to the cap bucket so the
    // books close exactly
    acc.t.capped += pend - refl.power - ptr;
    if (ptr > 0) {
      if (far == 2) {
        acc.t.escaped_bottom += ptr;
      } else if (ptr < floor) {
        acc.t.capped += ptr;
      } else {
        PhaseSpaceRay tr = r;
        tr.x = xe;
        tr.layer = 0;
        tr.kz_sign = 1;
        tr.power = ptr;
        tr.bounces = r.bounces + 1;
        stack.push_back(tr);
      }
    }
    if (refl.power > 0) {
      if (refl.power < floor)
        acc.t.capped += refl.power;
      else
        stack.push_back(refl);
    }
  }

  // W over the window: P(t) = P0 exp(-rate t) integrated along each cell chord
  void deposit(const PhaseSpaceRay& r, const Eigen::Vector3d& v, double s, double rate, double kabs,
               Accum& acc) const {
    const Grid& g = c_.window;
    if (s <= 0 || g.size() == 0) return;
    std::vector<double> ts{0.0, s};
    for (int a = 0; a < d_; ++a) {
      if (v[a] == 0) continue;
      const double lo = g.origin[a] - 0.5 * g.spacing[a];
      for (int i = 0; i <= g.extent[a]; ++i) {
        const double t = (lo + i * g.spacing[a] - r.x[a]) / v[a];
        if (t > 0 && t < s) ts.push_back(t);
      }
    }
    std::sort(ts.begin(), ts.end());
    const std::size_t nd = q_.size();
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      const double t0 = ts[i], t1 = ts[i + 1];
      if (!(t1 > t0)) continue;
      const Eigen::Vector3d mid = r.x + 0.5 * (t0 + t1) * v;
      std::array<int, 3> id{0, 0, 0};
      bool in = true;
      for (int a = 0; a < d_ && in; ++a) {
        const double f = (mid[a] - g.origin[a]) / g.spacing[a] + 0.5;
        id[std::size_t(a)] = int(std::floor(f));
        in = f >= 0 && id[std::size_t(a)] < g.extent[a];
      }
      if (!in) continue;
      const double chord = rate > 0 ? (std::exp(-rate * t0) - std::exp(-rate * t1)) / rate : t1 - t0;
      const std::int64_t cell = g.index(id[0], id[1], id[2]);
      acc.W[std::size_t(cell) * nd + std::size_t(r.dir)] += r.power * chord / (kabs * vol_);
    }
  }

  void detect(const Eigen::Vector3d& x, std::size_t d, double p, Accum& acc) const {
    const double w = (c_.detector_x_max - c_.detector_x_min) / c_.detector_bins;
    const int b = int(std::floor((x[0] - c_.detector_x_min) / w));
    if (b < 0 || b >= c_.detector_bins) return;
    acc.det[std::size_t(b) * q_.size() + d] += p;
  }

  const TransportMedium& m_;
  const DirectionQuadrature& q_;
  const TransportConfig& c_;
  int d_, za_;
  double vol_ = 1;
};

}  // namespace

TransportResult propagate(const std::vector<PhaseSpaceRay>& rays, const TransportMedium& m,
                          const DirectionQuadrature& q, const TransportConfig& cfg, int jobs) {
  if (!(cfg.detector_z > 0)) throw std::invalid_argument("transport: detector plane must lie above the slab");
  if (cfg.window.dim != q.dim) throw std::invalid_argument("transport: window and quadrature dimensions differ");
  if (cfg.chunks < 1 || cfg.detector_bins < 1) throw std::invalid_argument("transport: chunks and bins must be >= 1");
  validate(cfg.window);
  for (const auto& r : rays) {
    if (r.dir < 0 || std::size_t(r.dir) >= q.size()) throw std::invalid_argument("transport: ray direction out of range");
    if (r.layer != 1) throw std::invalid_argument("transport: rays must start in the slab");
  }
  const Tracer tracer(m, q, cfg);
  const std::size_t nW = std::size_t(cfg.window.size()) * q.size();
  const std::size_t nD = std::size_t(cfg.detector_bins) * q.size();
  TransportResult out;
  out.W.grid = cfg.window;
  out.W.quad = q;
  out.W.medium = m;
  out.W.values.assign(nW, 0.0);
  out.detector.assign(nD, 0.0);
  const int nc = cfg.chunks;
  const int wave = std::max(1, jobs);
  for (int c0 = 0; c0 < nc; c0 += wave) {
    const int cn = std::min(wave, nc - c0);
    std::vector<Accum> acc(static_cast<std::size_t>(cn));
    parallel_for(cn, jobs, [&](long w) {
      Accum& a = acc[std::size_t(w)];
      a.W.assign(nW, 0.0);
      a.det.assign(nD, 0.0);
      const std::size_t c = std::size_t(c0 + w);
      const std::size_t b = c * rays.size() / std::size_t(nc), e = (c + 1) * rays.size() / std::size_t(nc);
      for (std::size_t i = b; i < e; ++i) tracer.trace(rays[i], a);
    });
    for (const auto& a : acc) {
      for (std::size_t i = 0; i < nW; ++i) out.W.values[i] += a.W[i];
      for (std::size_t i = 0; i < nD; ++i) out.detector[i] += a.det[i];
      FluxTally& t = out.tally;
      t.emitted += a.t.emitted;
      t.absorbed += a.t.absorbed;
      t.escaped_top += a.t.escaped_top;
      t.escaped_bottom += a.t.escaped_bottom;
      t.escaped_lateral += a.t.escaped_lateral;
      t.capped += a.t.capped;
      t.dropped += a.t.dropped;
      t.events += a.t.events;
    }
  }
  return out;
}

namespace {

std::int64_t nearest(const Grid& g, const Eigen::Vector3d& x, const char* what) {
  std::array<int, 3> id{0, 0, 0};
  for (int a = 0; a < g.dim; ++a) {
    const double f = (x[a] - g.origin[a]) / g.spacing[a];
    const int i = int(std::lround(f));
    if (f < -0.5 || i >= g.extent[a] || (f > g.extent[a] - 0.5))
      throw std::out_of_range(std::string(what) + " outside the sampling window");
    id[std::size_t(a)] = std::clamp(i, 0, g.extent[a] - 1);
  }
  return g.index(id[0], id[1], id[2]);
}

}  // namespace

cplx correlation_C0(const Eigen::Vector3d& x, const Eigen::Vector3d& y, const ComplexField& u,
                    const WignerDensity& W) {
  const int d = W.grid.dim;
  const cplx ux = u.values[nearest(u.grid, x, "x")], uy = u.values[nearest(u.grid, y, "y")];
  const Eigen::Vector3d mid = 0.5 * (x + y);
  const std::int64_t cell = nearest(W.grid, mid, "midpoint");
  const double zm = mid[d - 1];
  const int layer = zm > 0 ? 0 : (zm > -W.medium.L ? 1 : 2);
  const Eigen::Vector3d dx = x - y;
  cplx s = 0;
  for (std::size_t k = 0; k < W.quad.size(); ++k) {
    const double w = W.at(cell, k);
    if (w == 0) continue;
    const Eigen::Vector3d p = W.momentum(layer, k);
    double ph = 0;
    for (int a = 0; a < d; ++a) ph += dx[a] * p[a];
    s += std::exp(cplx(0, -ph / W.eta)) * w;
  }
  return ux * std::conj(uy) + std::pow(W.beta, d) * s;
}

FluxBalance flux_balance(const FluxTally& t) {
  FluxBalance b;
  b.emitted = t.emitted;
  b.absorbed = t.absorbed;
  b.escaped = t.escaped_top + t.escaped_bottom + t.escaped_lateral;
  b.capped = t.capped;
  b.imbalance = t.emitted > 0 ? std::abs(b.emitted - b.absorbed - b.escaped - b.capped) / t.emitted : 0.0;
  return b;
}

void save_wigner(const std::string& base, const WignerDensity& W, const json& extra) {
  write_f64(base + ".bin", W.values);
  json j = extra;
  j["grid"] = to_json(W.grid);
  j["dim"] = W.quad.dim;
  json dirs = json::array();
  for (std::size_t k = 0; k < W.quad.size(); ++k)
    dirs.push_back({W.quad.unit[k][0], W.quad.unit[k][1], W.quad.unit[k][2], W.quad.weight[k]});
  j["directions"] = dirs;
  const auto& m = W.medium;
  j["medium"] = {{"k0", m.k0}, {"ke", m.ke}, {"k2", m.k2}, {"mu0", m.mu0}, {"mue", m.mue}, {"mu2", m.mu2}, {"L", m.L}};
  j["eta"] = W.eta;
  j["beta"] = W.beta;
  j["tau_sq"] = W.tau_sq;
  j["layout"] = "cell-major, direction fastest, float64 little-endian";
  j["endianness"] = "little";
  j["checksum_fnv1a64"] = hex64(fnv1a64(W.values.data(), W.values.size() * sizeof(double)));
  write_text(base + ".json", j.dump(2));
}

WignerDensity load_wigner(const std::string& base) {
  const json j = read_json(base + ".json");
  WignerDensity W;
  W.grid = grid_from_json(j.at("grid"));
  W.quad.dim = j.at("dim");
  for (const auto& d : j.at("directions")) {
    W.quad.unit.emplace_back(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
    W.quad.weight.push_back(d.at(3));
  }
  const auto& m = j.at("medium");
  W.medium = {m.at("k0"), m.at("ke"), m.at("k2"), m.at("mu0"), m.at("mue"), m.at("mu2"), m.at("L")};
  W.eta = j.at("eta");
  W.beta = j.at("beta");
  W.tau_sq = j.at("tau_sq");
  W.values = read_f64(base + ".bin");
  if (W.values.size() != std::size_t(W.grid.size()) * W.quad.size())
    throw std::runtime_error("wigner payload size does not match its descriptor");
  if (hex64(fnv1a64(W.values.data(), W.values.size() * sizeof(double))) != j.at("checksum_fnv1a64").get<std::string>())
    throw std::runtime_error("wigner payload checksum mismatch");
  return W;
}

std::string detector_csv(const TransportResult& r, const TransportConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "x,k_perp,kz_sign,value\n";
  const double w = (cfg.detector_x_max - cfg.detector_x_min) / cfg.detector_bins;
  const std::size_t nd = r.W.quad.size();
  for (int b = 0; b < cfg.detector_bins; ++b)
    for (std::size_t k = 0; k < nd; ++k) {
      const Eigen::Vector3d p = r.W.momentum(0, k);
      const double kp = r.W.quad.dim == 2 ? p[0] : std::hypot(p[0], p[1]);
      os << cfg.detector_x_min + (b + 0.5) * w << ',' << kp << ',' << (r.W.quad.unit[k][r.W.quad.dim - 1] >= 0 ? 1 : -1)
         << ',' << r.detector[std::size_t(b) * nd + k] << '\n';
    }
  return os.str();
}

}  // namespace lrm

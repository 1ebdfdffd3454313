#include "lrm/medium.hpp"
#include "lrm/parallel.hpp"

#include <algorithm>
#include <fstream>

namespace lrm {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(splitmix64(seed) >> 32), std::uint32_t(splitmix64(seed)),
                    std::uint32_t(splitmix64(stream ^ 0x5bd1e995ULL) >> 32), std::uint32_t(splitmix64(stream + 7))};
  return Rng(seq);
}

void validate(const InclusionSpec& s) {
  if (s.dim != 2 && s.dim != 3) throw std::invalid_argument("inclusions: dim must be 2 or 3");
  if (s.intensity < 0) throw std::invalid_argument("inclusions: intensity must be nonnegative");
  if (!(s.r_min > 0 && s.r_min <= s.r_max)) throw std::invalid_argument("inclusions: need 0 < r_min <= r_max");
  if (s.tau_re_min > s.tau_re_max || s.tau_im_min > s.tau_im_max)
    throw std::invalid_argument("inclusions: contrast bounds out of order");
  if (s.tau_im_min < 0) throw std::invalid_argument("inclusions: Im tau must be nonnegative");
  if (!(s.aspect > 0 && s.aspect <= 1)) throw std::invalid_argument("inclusions: aspect must lie in (0, 1]");
  if (!(s.beta > 0 && s.beta < 1)) throw std::invalid_argument("inclusions: beta must lie in (0, 1)");
}

json to_json(const InclusionSpec& s) {
  return json{{"dim", s.dim},
              {"intensity", s.intensity},
              {"r_min", s.r_min},
              {"r_max", s.r_max},
              {"tau_re_min", s.tau_re_min},
              {"tau_re_max", s.tau_re_max},
              {"tau_im_min", s.tau_im_min},
              {"tau_im_max", s.tau_im_max},
              {"aspect", s.aspect},
              {"random_rotation", s.random_rotation},
              {"beta", s.beta}};
}

InclusionSpec inclusion_spec_from_json(const json& j) {
  InclusionSpec s;
  s.dim = j.at("dim");
  s.intensity = j.at("intensity");
  s.r_min = j.at("r_min");
  s.r_max = j.at("r_max");
  s.tau_re_min = j.at("tau_re_min");
  s.tau_re_max = j.at("tau_re_max");
  s.tau_im_min = j.at("tau_im_min");
  s.tau_im_max = j.at("tau_im_max");
  s.aspect = j.at("aspect");
  s.random_rotation = j.at("random_rotation");
  s.beta = j.at("beta");
  return s;
}

double Box::volume(int dim) const {
  double v = 1;
  for (int a = 0; a < dim; ++a) v *= hi[a] - lo[a];
  return v;
}

bool Box::contains(const Eigen::Vector3d& x, int dim, double margin) const {
  for (int a = 0; a < dim; ++a)
    if (x[a] < lo[a] + margin || x[a] > hi[a] - margin) return false;
  return true;
}

Box padded_box(const Box& region, const InclusionSpec& s) {
  Box b = region;
  const double p = s.r_max * s.beta;
  for (int a = 0; a < s.dim; ++a) {
    b.lo[a] -= p;
    b.hi[a] += p;
  }
  return b;
}

namespace {

double uniform_moment(double a, double b, int p) {
  if (b == a) return std::pow(a, p);
  return (std::pow(b, p + 1) - std::pow(a, p + 1)) / ((p + 1) * (b - a));
}

double unit_volume(int dim) { return dim == 2 ? kPi : 4.0 * kPi / 3.0; }

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

}  // namespace

Moments moments(const InclusionSpec& s) {
  const double shape = unit_volume(s.dim) * std::pow(s.aspect, s.dim - 1);
  const double ev = shape * uniform_moment(s.r_min, s.r_max, s.dim);
  const cplx etau{0.5 * (s.tau_re_min + s.tau_re_max), 0.5 * (s.tau_im_min + s.tau_im_max)};
  const double etau2 = uniform_moment(s.tau_re_min, s.tau_re_max, 2) + uniform_moment(s.tau_im_min, s.tau_im_max, 2);
  return {s.intensity * etau * ev, s.intensity * etau2 * ev};
}

MediumRealization::MediumRealization(InclusionSpec spec, Box box, std::uint64_t seed, std::vector<Inclusion> inc)
    : spec_(spec), box_(box), seed_(seed), inc_(std::move(inc)) {
  validate(spec_);
  const Moments m = moments(spec_);
  mean_ = m.mean;
  sigma_ = std::sqrt(m.variance);
  build_index();
}

void MediumRealization::build_index() {
  const int d = spec_.dim;
  bin_ = std::max(2.0 * spec_.r_max * spec_.beta, 1e-12);
  std::size_t total = 1;
  for (int a = 0; a < 3; ++a) {
    nbin_[a] = a < d ? std::max(1, int(std::ceil((box_.hi[a] - box_.lo[a]) / bin_))) : 1;
    total *= std::size_t(nbin_[a]);
  }
  if (total > (std::size_t(1) << 26)) throw std::invalid_argument("medium box too large for the spatial index");
  bins_.assign(total, {});
  for (int i = 0; i < int(inc_.size()); ++i) {
    std::array<int, 3> b{0, 0, 0};
    for (int a = 0; a < d; ++a)
      b[a] = std::clamp(int((inc_[i].center[a] - box_.lo[a]) / bin_), 0, nbin_[a] - 1);
    bins_[(std::size_t(b[0]) * nbin_[1] + b[1]) * nbin_[2] + b[2]].push_back(i);
  }
}

bool MediumRealization::inside(const Inclusion& c, const Eigen::Vector3d& x) const {
  const int d = spec_.dim;
  Eigen::Vector3d dx = x - c.center;
  if (d == 2) dx[2] = 0;
  if (dx.squaredNorm() > c.radius * c.radius) return false;
  if (spec_.aspect == 1.0) return true;
  const Eigen::Vector3d loc = rotation_matrix(c.rotation).transpose() * dx;
  const double gr = spec_.aspect * c.radius;
  if (d == 2) return (loc[0] * loc[0]) / (gr * gr) + (loc[1] * loc[1]) / (c.radius * c.radius) <= 1.0;
  return (loc[0] * loc[0] + loc[1] * loc[1]) / (gr * gr) + (loc[2] * loc[2]) / (c.radius * c.radius) <= 1.0;
}

cplx MediumRealization::raw_V(const Eigen::Vector3d& x) const {
  const int d = spec_.dim;
  std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    const double t = (x[a] - box_.lo[a]) / bin_;
    lo[a] = std::clamp(int(std::floor(t)) - 1, 0, nbin_[a] - 1);
    hi[a] = std::clamp(int(std::floor(t)) + 1, 0, nbin_[a] - 1);
  }
  std::vector<int> cand;
  for (int i = lo[0]; i <= hi[0]; ++i)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int l = lo[2]; l <= hi[2]; ++l) {
        const auto& b = bins_[(std::size_t(i) * nbin_[1] + j) * nbin_[2] + l];
        cand.insert(cand.end(), b.begin(), b.end());
      }
  std::sort(cand.begin(), cand.end());
  cplx v = 0;
  for (int i : cand)
    if (inside(inc_[i], x)) v += inc_[i].contrast;
  return v;
}

MediumRealization sample_realization(const InclusionSpec& spec, const Box& box, std::uint64_t seed) {
  validate(spec);
  const int d = spec.dim;
  for (int a = 0; a < d; ++a)
    if (!(std::isfinite(box.lo[a]) && std::isfinite(box.hi[a]) && box.hi[a] > box.lo[a]))
      throw std::invalid_argument("medium box must be bounded and nonempty");
  Rng rng = make_rng(seed, 0x6d656469756dULL);
  const double y_volume = box.volume(d) / std::pow(spec.beta, d);
  std::vector<Inclusion> inc;
  if (spec.intensity > 0) {
    std::poisson_distribution<long long> pois(spec.intensity * y_volume);
    const long long n = pois(rng);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> N(0.0, 1.0);
    inc.resize(std::size_t(n));
    for (auto& c : inc) {
      for (int a = 0; a < d; ++a) c.center[a] = box.lo[a] + (box.hi[a] - box.lo[a]) * U(rng);
      c.radius = spec.beta * (spec.r_min + (spec.r_max - spec.r_min) * U(rng));
      c.contrast = {spec.tau_re_min + (spec.tau_re_max - spec.tau_re_min) * U(rng),
                    spec.tau_im_min + (spec.tau_im_max - spec.tau_im_min) * U(rng)};
      if (spec.random_rotation) {
        if (d == 2) {
          const double th = 2 * kPi * U(rng);
          c.rotation = {std::cos(th / 2), 0, 0, std::sin(th / 2)};
        } else {
          Eigen::Vector4d q(N(rng), N(rng), N(rng), N(rng));
          c.rotation = q / q.norm();
        }
      }
    }
  }
  return MediumRealization(spec, box, seed, std::move(inc));
}

cplx eval_V(const MediumRealization& r, const Eigen::Vector3d& x, bool* capped) {
  const double margin = r.spec().r_max * r.spec().beta;
  if (!r.box().contains(x, r.spec().dim, margin))
    throw std::out_of_range("eval_V: point outside the padded generation box");
  return detail::apply_cap(r.raw_V(x), r.mean(), r.cap(), capped);
}

void save_realization(const std::string& base, const MediumRealization& r, const json& extra) {
  std::vector<double> tab;
  tab.reserve(r.inclusions().size() * 10);
  for (const auto& c : r.inclusions()) {
    tab.insert(tab.end(), {c.center[0], c.center[1], c.center[2], c.radius, c.contrast.real(), c.contrast.imag(),
                           c.rotation[0], c.rotation[1], c.rotation[2], c.rotation[3]});
  }
  write_f64(base + ".bin", tab);
  const std::vector<double> reread = read_f64(base + ".bin");
  json j = extra;
  j["spec"] = to_json(r.spec());
  j["seed"] = r.seed();
  j["count"] = r.inclusions().size();
  j["box"] = {{"lo", r.box().lo}, {"hi", r.box().hi}};
  j["mean"] = {r.mean().real(), r.mean().imag()};
  j["sigma"] = r.sigma();
  j["columns"] = {"cx", "cy", "cz", "radius", "tau_re", "tau_im", "qw", "qx", "qy", "qz"};
  j["endianness"] = "little";
  j["checksum_fnv1a64"] = hex64(fnv1a64(reread.data(), reread.size() * 8));
  write_text(base + ".json", j.dump(2) + "\n");
}

MediumRealization load_realization(const std::string& base) {
  json j = read_json(base + ".json");
  const InclusionSpec spec = inclusion_spec_from_json(j.at("spec"));
  Box box;
  box.lo = j.at("box").at("lo").get<std::array<double, 3>>();
  box.hi = j.at("box").at("hi").get<std::array<double, 3>>();
  const std::vector<double> tab = read_f64(base + ".bin");
  if (hex64(fnv1a64(tab.data(), tab.size() * 8)) != j.at("checksum_fnv1a64").get<std::string>())
    throw std::runtime_error("checksum mismatch in " + base);
  const std::size_t n = j.at("count");
  if (tab.size() != n * 10) throw std::runtime_error("inclusion table size mismatch in " + base);
  std::vector<Inclusion> inc(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = &tab[i * 10];
    inc[i].center = {p[0], p[1], p[2]};
    inc[i].radius = p[3];
    inc[i].contrast = {p[4], p[5]};
    inc[i].rotation = {p[6], p[7], p[8], p[9]};
  }
  return MediumRealization(spec, box, j.at("seed").get<std::uint64_t>(), std::move(inc));
}

CovarianceModel make_covariance_model(double sigma_r_sq, double sigma_i_sq, double gamma, double sigma,
                                      double corr_range) {
  CovarianceModel c;
  c.sigma_r_sq = sigma_r_sq;
  c.sigma_i_sq = sigma_i_sq;
  c.gamma = gamma;
  c.M << sigma_r_sq, gamma, gamma, sigma_i_sq;
  c.M_half = matrix_sqrt(c.M);
  c.sigma = sigma;
  c.tau_sq = sigma * sigma * (sigma_r_sq + sigma_i_sq);
  c.corr_range = corr_range;
  return c;
}

CovarianceModel poisson_covariance_model(const InclusionSpec& s) {
  const Moments m = moments(s);
  const double shape = unit_volume(s.dim) * std::pow(s.aspect, s.dim - 1);
  const double ev2 = shape * shape * uniform_moment(s.r_min, s.r_max, 2 * s.dim);
  const double err = uniform_moment(s.tau_re_min, s.tau_re_max, 2);
  const double eii = uniform_moment(s.tau_im_min, s.tau_im_max, 2);
  const double eri = 0.25 * (s.tau_re_min + s.tau_re_max) * (s.tau_im_min + s.tau_im_max);
  const double sig = std::sqrt(m.variance);
  if (m.variance == 0) return make_covariance_model(0, 0, 0, 0, 2 * s.r_max * s.beta);
  const double f = s.intensity * ev2 / m.variance;
  return make_covariance_model(f * err, f * eii, f * eri, sig, 2 * s.r_max * s.beta);
}

std::vector<std::array<int, 3>> lag_box(int max_lag, int dim) {
  std::vector<std::array<int, 3>> out;
  const int m1 = dim > 1 ? max_lag : 0, m2 = dim > 2 ? max_lag : 0;
  for (int a = -max_lag; a <= max_lag; ++a)
    for (int b = -m1; b <= m1; ++b)
      for (int c = -m2; c <= m2; ++c) out.push_back({a, b, c});
  return out;
}

CovarianceEstimate empirical_covariance(const InclusionSpec& spec, const std::vector<std::array<int, 3>>& lags,
                                        double h, int cells, int n_samples, std::uint64_t seed, int jobs) {
  validate(spec);
  if (n_samples < 2) throw std::invalid_argument("empirical_covariance: need at least 2 samples");
  const int d = spec.dim;
  const Moments mo = moments(spec);
  const double sig = std::sqrt(mo.variance);
  Grid g;
  g.dim = d;
  for (int a = 0; a < d; ++a) {
    g.origin[a] = 0;
    g.spacing[a] = h;
    g.extent[a] = cells;
  }
  Box region;
  for (int a = 0; a < d; ++a) {
    region.lo[a] = -0.5 * h;
    region.hi[a] = (cells - 0.5) * h;
  }
  const Box box = padded_box(region, spec);
  const std::size_t nl = lags.size();
  const double wlag = std::pow(h / spec.beta, d);
  // per sample: lag means for rr, ii, ri
  std::vector<std::vector<double>> per(static_cast<std::size_t>(n_samples));
  std::vector<std::int64_t> caps(static_cast<std::size_t>(n_samples)), evals(static_cast<std::size_t>(n_samples));
  parallel_for(n_samples, jobs, [&](long s) {
    const MediumRealization r = sample_realization(spec, box, seed + std::uint64_t(s));
    const GridSample gs = eval_V_grid(r, g, [](int, int, int) { return true; });
    caps[s] = gs.cap_events;
    evals[s] = gs.evaluations;
    std::vector<double> qr(gs.V.size()), qi(gs.V.size());
    for (std::size_t i = 0; i < gs.V.size(); ++i) {
      const cplx q = sig > 0 ? (gs.V[i] - mo.mean) / sig : cplx(0);
      qr[i] = q.real();
      qi[i] = q.imag();
    }
    std::vector<double> acc(3 * nl, 0.0);
    const int n1 = d > 1 ? cells : 1, n2 = d > 2 ? cells : 1;
    for (std::size_t L = 0; L < nl; ++L) {
      const auto& lg = lags[L];
      double srr = 0, sii = 0, sri = 0;
      long cnt = 0;
      for (int i = std::max(0, -lg[0]); i < std::min(cells, cells - lg[0]); ++i)
        for (int j = std::max(0, -lg[1]); j < std::min(n1, n1 - lg[1]); ++j)
          for (int l = std::max(0, -lg[2]); l < std::min(n2, n2 - lg[2]); ++l) {
            const auto a = std::size_t(g.index(i, j, l));
            const auto b = std::size_t(g.index(i + lg[0], j + lg[1], l + lg[2]));
            srr += qr[a] * qr[b];
            sii += qi[a] * qi[b];
            sri += qr[a] * qi[b];
            ++cnt;
          }
      acc[3 * L] = srr / double(cnt);
      acc[3 * L + 1] = sii / double(cnt);
      acc[3 * L + 2] = sri / double(cnt);
    }
    per[s] = std::move(acc);
  });
  CovarianceEstimate e;
  e.lags = lags;
  e.c_rr.assign(nl, 0);
  e.c_ii.assign(nl, 0);
  e.c_ri.assign(nl, 0);
  e.se_rr.assign(nl, 0);
  e.se_ii.assign(nl, 0);
  e.se_ri.assign(nl, 0);
  const double n = n_samples;
  std::vector<double> sums(3 * static_cast<std::size_t>(n_samples), 0.0);
  for (int s = 0; s < n_samples; ++s) {
    e.cap_events += caps[s];
    e.evaluations += evals[s];
    for (std::size_t L = 0; L < nl; ++L)
      for (int c = 0; c < 3; ++c) sums[3 * s + c] += per[s][3 * L + c] * wlag;
  }
  auto mean_se = [&](auto get, double& mean, double& se) {
    double m = 0;
    for (int s = 0; s < n_samples; ++s) m += get(s);
    m /= n;
    double v = 0;
    for (int s = 0; s < n_samples; ++s) v += (get(s) - m) * (get(s) - m);
    mean = m;
    se = std::sqrt(v / (n - 1) / n);
  };
  for (std::size_t L = 0; L < nl; ++L) {
    mean_se([&](int s) { return per[s][3 * L]; }, e.c_rr[L], e.se_rr[L]);
    mean_se([&](int s) { return per[s][3 * L + 1]; }, e.c_ii[L], e.se_ii[L]);
    mean_se([&](int s) { return per[s][3 * L + 2]; }, e.c_ri[L], e.se_ri[L]);
  }
  mean_se([&](int s) { return sums[3 * s]; }, e.sigma_r_sq, e.se_sigma_r_sq);
  mean_se([&](int s) { return sums[3 * s + 1]; }, e.sigma_i_sq, e.se_sigma_i_sq);
  mean_se([&](int s) { return sums[3 * s + 2]; }, e.gamma, e.se_gamma);
  return e;
}

CovarianceModel covariance_model_from_estimate(const CovarianceEstimate& e, const InclusionSpec& spec) {
  const double sig = std::sqrt(moments(spec).variance);
  return make_covariance_model(e.sigma_r_sq, e.sigma_i_sq, e.gamma, sig, 2 * spec.r_max * spec.beta);
}

}  // namespace lrm

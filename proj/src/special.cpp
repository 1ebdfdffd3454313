#include "lrm/special.hpp"

#include <algorithm>
#include <queue>

namespace lrm {

namespace {

constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.0};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b;
  cplx value;
  double error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gk15(const std::function<cplx(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  cplx k = kWgk[7] * f(c);
  cplx g = kWg[3] * f(c);
  for (int i = 0; i < 7; ++i) {
    const cplx fp = f(c + h * kXgk[i]), fm = f(c - h * kXgk[i]);
    k += kWgk[i] * (fp + fm);
    if (i % 2 == 1) g += kWg[i / 2] * (fp + fm);
  }
  return {a, b, k * h, std::abs((k - g) * h)};
}

}  // namespace

QuadResult integrate_gk(const std::function<cplx(double)>& f, const std::vector<double>& breaks, double abs_tol,
                        double rel_tol, int max_panels) {
  QuadResult r;
  std::priority_queue<Panel> heap;
  cplx total = 0;
  double err = 0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (!(breaks[i + 1] > breaks[i])) continue;
    Panel p = gk15(f, breaks[i], breaks[i + 1]);
    r.evaluations += 15;
    total += p.value;
    err += p.error;
    heap.push(p);
  }
  int panels = int(heap.size());
  while (!heap.empty() && err > std::max(abs_tol, rel_tol * std::abs(total))) {
    if (panels >= max_panels) {
      r.converged = false;
      break;
    }
    Panel p = heap.top();
    heap.pop();
    const double m = 0.5 * (p.a + p.b);
    if (!(m > p.a && m < p.b)) {
      r.converged = false;
      break;
    }
    Panel l = gk15(f, p.a, m), q = gk15(f, m, p.b);
    r.evaluations += 30;
    total += l.value + q.value - p.value;
    err += l.error + q.error - p.error;
    heap.push(l);
    heap.push(q);
    ++panels;
  }
  // recompute the sum from the final panels to shed accumulated round-off
  cplx s = 0;
  double e = 0;
  std::vector<Panel> fin;
  while (!heap.empty()) {
    fin.push_back(heap.top());
    heap.pop();
  }
  std::sort(fin.begin(), fin.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
  for (const auto& p : fin) {
    s += p.value;
    e += p.error;
  }
  r.value = s;
  r.error = e;
  return r;
}

QuadResult integrate_gk(const std::function<cplx(double)>& f, double a, double b, double abs_tol, double rel_tol,
                        int max_panels) {
  return integrate_gk(f, std::vector<double>{a, b}, abs_tol, rel_tol, max_panels);
}

namespace {

constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

cplx hankel_series(cplx z) {
  const cplx q = z * z / 4.0;
  cplx term = 1.0;  // (-q)^m / (m!)^2
  cplx j0 = 1.0, ysum = 0.0;
  double harm = 0;
  for (int m = 1; m < 200; ++m) {
    term *= -q / double(m * m);
    harm += 1.0 / m;
    j0 += term;
    ysum -= harm * term;
    if (std::abs(term) * (1 + harm) < 1e-18 * std::max(1.0, std::abs(j0))) break;
  }
  const cplx y0 = (2.0 / kPi) * ((std::log(z / 2.0) + kEulerGamma) * j0 + ysum);
  return j0 + cplx(0, 1) * y0;
}

cplx hankel_asymptotic(cplx z) {
  cplx sum = 1.0, t = 1.0;
  double last = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double c = double((2 * k - 1) * (2 * k - 1)) / (8.0 * k);
    t *= cplx(0, 1) * (-c) / z;
    const double at = std::abs(t);
    if (at > last) break;
    sum += t;
    last = at;
    if (at < 1e-17) break;
  }
  return std::sqrt(2.0 / (kPi * z)) * std::exp(cplx(0, 1) * (z - kPi / 4)) * sum;
}

// K0(w) for Re w > 0 and |w| not small, Steed's continued fraction.
cplx bessel_k0_cf(cplx x) {
  cplx b = 2.0 * (1.0 + x);
  cplx d = 1.0 / b;
  cplx h = d, delh = d;
  cplx q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25;
  cplx q = a1, c = a1;
  double a = -a1;
  cplx s = 1.0 + q * delh;
  for (int i = 1; i < 2000; ++i) {
    a -= 2 * i;
    c = -a * c / (i + 1.0);
    const cplx qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const cplx dels = q * delh;
    s += dels;
    if (std::abs(dels) < 1e-17 * std::abs(s)) break;
  }
  return std::sqrt(kPi / (2.0 * x)) * std::exp(-x) / s;
}

}  // namespace

cplx hankel0_first(cplx z) {
  if (!(z.real() > 0) || z.imag() < 0 || !std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw std::domain_error("hankel0_first: argument outside Re z > 0, Im z >= 0");
  const double az = std::abs(z);
  if (az >= 13.0) return hankel_asymptotic(z);
  if (az + z.imag() <= 14.0) return hankel_series(z);
  return cplx(0, -2.0 / kPi) * bessel_k0_cf(cplx(0, -1) * z);
}

cplx hankel0_integral(cplx z, double tol) {
  if (!(z.real() > 0) || z.imag() < 0) throw std::domain_error("hankel0_integral: need Re z > 0, Im z >= 0");
  const cplx I(0, 1);
  const int osc = 8 + int(std::abs(z) / 2);
  std::vector<double> b1;
  for (int i = 0; i <= osc; ++i) b1.push_back(kPi * i / osc);
  auto f1 = [&](double t) { return std::exp(I * z * std::sin(t)); };
  const QuadResult r1 = integrate_gk(f1, b1, tol, tol, 200000);
  const double T = std::asinh(45.0 / z.real());
  std::vector<double> b2;
  const int nb = 8 + int(std::abs(z.imag()) * std::sinh(T) / 2);
  for (int i = 0; i <= std::min(nb, 4000); ++i) b2.push_back(T * i / std::min(nb, 4000));
  auto f2 = [&](double t) { return std::exp(-z * std::sinh(t)); };
  const QuadResult r2 = integrate_gk(f2, b2, tol, tol, 200000);
  return r1.value / kPi - cplx(0, 2.0 / kPi) * r2.value;
}

}  // namespace lrm

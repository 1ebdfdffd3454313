#include "lrm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lrm {

double normal_cdf(double x, double mean, double sd) {
  if (!(sd > 0)) return x < mean ? 0.0 : 1.0;
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

double ks_statistic(std::vector<double> s, const std::function<double(double)>& cdf) {
  if (s.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(s.begin(), s.end());
  const double n = double(s.size());
  double d = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double F = cdf(s[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return d;
}

double ks_pvalue(double D, std::size_t n) {
  const double sn = std::sqrt(double(n));
  const double t = (sn + 0.12 + 0.11 / sn) * D;
  if (t < 0.2) return 1.0;
  double p = 0;
  for (int j = 1; j < 200; ++j) {
    const double term = std::exp(-2.0 * j * j * t * t);
    p += (j % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

MeanSe mean_se(const std::vector<double>& x) {
  if (x.size() < 2) throw std::invalid_argument("mean_se: need two values");
  const double n = double(x.size());
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double v = 0;
  for (double a : x) v += (a - m) * (a - m);
  return {m, std::sqrt(v / (n - 1) / n)};
}

MeanSe jackknife(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& stat) {
  if (n < 2) throw std::invalid_argument("jackknife: need two samples");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t(0));
  const double full = stat(all);
  std::vector<double> loo(n);
  std::vector<std::size_t> idx(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) idx[c++] = j;
    loo[i] = stat(idx);
  }
  const double m = std::accumulate(loo.begin(), loo.end(), 0.0) / double(n);
  double v = 0;
  for (double a : loo) v += (a - m) * (a - m);
  return {full, std::sqrt(v * double(n - 1) / double(n))};
}

LineFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit: need matching samples");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0)) throw std::invalid_argument("linear_fit: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / (n - 2) / sxx);
  }
  return f;
}

}  // namespace lrm

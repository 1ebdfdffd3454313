#pragma once

#include <functional>
#include <vector>

namespace lrm {

double normal_cdf(double x, double mean = 0, double sd = 1);

// sup |F_n - F| of the sample against a continuous cdf
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

// Asymptotic Kolmogorov tail with Stephens' small-sample correction.
double ks_pvalue(double D, std::size_t n);

struct MeanSe {
  double mean = 0, se = 0;
};
MeanSe mean_se(const std::vector<double>& x);

// Delete-one jackknife of a statistic of the sample indices; returns the
// full-sample value and the jackknife standard error.
MeanSe jackknife(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& stat);

struct LineFit {
  double slope = 0, intercept = 0;
  double slope_se = 0;  // from residuals; 0 with two points
};
LineFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lrm

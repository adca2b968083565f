#ifndef CSL_NUMERIC_HPP
#define CSL_NUMERIC_HPP

// Small numeric helpers shared across the library: log-domain sums,
// weighted quantiles, least-squares line fits and importance-weight
// diagnostics. Everything here is deterministic and allocation-light.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace csl {

// log(sum_i exp(args[i])), stable against overflow. Exact for a single
// element. Returns -inf for an empty list.
inline double log_sum_exp(std::span<const double> args) {
  if (args.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(args.begin(), args.end());
  if (!std::isfinite(m)) return m;
  if (args.size() == 1) return args[0];
  double sum = 0.0;
  for (double a : args) sum += std::exp(a - m);
  return m + std::log(sum);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

// Sample mean and standard error of the mean.
inline MeanSe mean_and_se(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) throw std::invalid_argument("mean_and_se: empty sample");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

// Self-normalized importance-weighted mean of xs with weights ws, plus the
// usual plug-in standard error  sqrt(sum w_i^2 (x_i - m)^2) / sum w_i.
inline MeanSe weighted_mean_and_se(std::span<const double> xs,
                                   std::span<const double> ws) {
  if (xs.size() != ws.size() || xs.empty())
    throw std::invalid_argument("weighted_mean_and_se: size mismatch");
  double wsum = 0.0, m = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    wsum += ws[i];
    m += ws[i] * xs[i];
  }
  if (wsum <= 0.0) throw std::invalid_argument("weighted_mean_and_se: non-positive total weight");
  m /= wsum;
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d = xs[i] - m;
    ss += ws[i] * ws[i] * d * d;
  }
  return {m, std::sqrt(ss) / wsum};
}

// (sum w)^2 / sum w^2. Equals the sample count for uniform weights.
inline double effective_sample_size(std::span<const double> ws) {
  double s = 0.0, s2 = 0.0;
  for (double w : ws) {
    s += w;
    s2 += w * w;
  }
  if (s2 == 0.0) return 0.0;
  return s * s / s2;
}

// Weighted lower quantile: smallest x with cumulative weight >= q * total.
// Values need not be pre-sorted.
inline double weighted_quantile(std::vector<double> xs, std::vector<double> ws,
                                double q) {
  if (xs.size() != ws.size() || xs.empty())
    throw std::invalid_argument("weighted_quantile: size mismatch");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("weighted_quantile: q outside [0,1]");
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  double total = 0.0;
  for (double w : ws) total += w;
  if (total <= 0.0) throw std::invalid_argument("weighted_quantile: non-positive total weight");
  double run = 0.0;
  for (std::size_t i : idx) {
    run += ws[i];
    if (run >= q * total) return xs[i];
  }
  return xs[idx.back()];
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
};

// Ordinary least squares y = slope*x + intercept.
inline LineFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (n != ys.size() || n < 2) throw std::invalid_argument("linear_fit: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("linear_fit: degenerate abscissae");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ys[i] - (fit.slope * xs[i] + fit.intercept);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

}  // namespace csl

#endif

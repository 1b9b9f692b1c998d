#include "prolip/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prolip/rng.hpp"

namespace prolip::oracles {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

double gaussian_logpdf_1d(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}

}  // namespace

void QuadratureConfig::validate() const {
  if (points < 101 || points % 2 == 0) {
    throw InvalidArgument("QuadratureConfig: points must be odd and >= 101");
  }
  if (!(half_width_sigmas >= 6.0)) {
    throw InvalidArgument("QuadratureConfig: half_width_sigmas must be >= 6");
  }
}

double quadrature_log_inc(double mu1, double var1, double mu2, double var2,
                          const QuadratureConfig& cfg) {
  cfg.validate();
  if (!(var1 > 0.0) || !(var2 > 0.0) || !std::isfinite(mu1) || !std::isfinite(mu2) ||
      !std::isfinite(var1) || !std::isfinite(var2)) {
    throw InvalidArgument("quadrature_log_inc: parameters must be finite with positive variance");
  }
  // Center at the precision-weighted mean of the three factors (p1 twice, p2
  // once); that is where the product Gaussian peaks.
  const double w1 = 2.0 / var1, w2 = 1.0 / var2;
  const double center = (w1 * mu1 + w2 * mu2) / (w1 + w2);
  const double pooled = std::sqrt(0.5 * (var1 + var2));
  const double half_width = cfg.half_width_sigmas * pooled;
  const double h = 2.0 * half_width / static_cast<double>(cfg.points - 1);

  // Trapezoid in log space: max-shift the log integrand before summing.
  std::vector<double> logf(static_cast<std::size_t>(cfg.points));
  double max_logf = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < cfg.points; ++i) {
    const double x = center - half_width + h * static_cast<double>(i);
    const double lf = 2.0 * gaussian_logpdf_1d(x, mu1, var1) + gaussian_logpdf_1d(x, mu2, var2);
    logf[static_cast<std::size_t>(i)] = lf;
    max_logf = std::max(max_logf, lf);
  }
  if (!std::isfinite(max_logf)) {
    throw NumericError("quadrature_log_inc: integrand vanished on the whole grid");
  }
  double sum = 0.0;
  for (std::int64_t i = 0; i < cfg.points; ++i) {
    const double weight = (i == 0 || i == cfg.points - 1) ? 0.5 : 1.0;
    sum += weight * std::exp(logf[static_cast<std::size_t>(i)] - max_logf);
  }
  const double result = max_logf + std::log(sum * h);
  if (result < std::log(1e-300)) {
    throw NumericError(
        "quadrature_log_inc: integral underflows 1e-300; widen the variances or bring the "
        "means closer");
  }
  return result;
}

McEstimate mc_csd(const GaussianEmbedding& z1, const GaussianEmbedding& z2, std::int64_t n,
                  std::uint64_t seed) {
  if (z1.dim() != z2.dim()) throw InvalidArgument("mc_csd: dimension mismatch");
  if (n < 10000) throw InvalidArgument("mc_csd: n must be >= 1e4");
  const std::size_t dim = z1.dim();
  std::vector<double> sd1(dim), sd2(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    sd1[d] = std::exp(0.5 * z1.log_var()[d]);
    sd2[d] = std::exp(0.5 * z2.log_var()[d]);
  }
  CounterRng rng1(seed, 0), rng2(seed, 1);
  double mean = 0.0, m2 = 0.0;  // Welford
  for (std::int64_t k = 0; k < n; ++k) {
    double dist_sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double s1 = z1.mu()[d] + sd1[d] * rng1.next_normal();
      const double s2 = z2.mu()[d] + sd2[d] * rng2.next_normal();
      const double diff = s1 - s2;
      dist_sq += diff * diff;
    }
    const double delta = dist_sq - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (dist_sq - mean);
  }
  const double var = m2 / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) {
    throw InvalidArgument("finite_diff_grad: step must lie in [1e-7, 1e-3]");
  }
  std::vector<double> grad(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double fp = f(probe);
    probe[i] = x[i] - step;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

McEstimate mc_kl_to_standard_normal(const GaussianEmbedding& z, std::int64_t n,
                                    std::uint64_t seed) {
  if (n < 100000) throw InvalidArgument("mc_kl_to_standard_normal: n must be >= 1e5");
  const std::size_t dim = z.dim();
  std::vector<double> sd(dim), var(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    var[d] = std::exp(z.log_var()[d]);
    sd[d] = std::sqrt(var[d]);
  }
  CounterRng rng(seed, 0);
  double mean = 0.0, m2 = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    double log_ratio = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double x = z.mu()[d] + sd[d] * rng.next_normal();
      log_ratio += gaussian_logpdf_1d(x, z.mu()[d], var[d]) - gaussian_logpdf_1d(x, 0.0, 1.0);
    }
    const double delta = log_ratio - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (log_ratio - mean);
  }
  const double v = m2 / static_cast<double>(n - 1);
  return {mean, std::sqrt(v / static_cast<double>(n))};
}

}  // namespace prolip::oracles

#pragma once

// Independent brute-force references: wide-grid trapezoid quadrature for the
// inclusion integral, Monte-Carlo estimators for CSD and KL, central finite
// differences for gradients. These never call the analytic implementations
// they are used to check.

#include <cstdint>
#include <functional>
#include <vector>

#include "prolip/gaussian.hpp"

namespace prolip::oracles {

struct QuadratureConfig {
  double half_width_sigmas = 12.0;  // span in pooled standard deviations
  std::int64_t points = 20001;      // odd, >= 101

  void validate() const;
};

// log int p1(x)^2 p2(x) dx over a centered uniform grid; evaluated in log
// space so the integrand never underflows before accumulation.
double quadrature_log_inc(double mu1, double var1, double mu2, double var2,
                          const QuadratureConfig& cfg = {});

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Sample mean of ||s1 - s2||^2 over n independent draws; the two streams are
// independent even when z1 and z2 alias the same embedding.
McEstimate mc_csd(const GaussianEmbedding& z1, const GaussianEmbedding& z2, std::int64_t n,
                  std::uint64_t seed);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h; step in [1e-7, 1e-3].
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double step);

// Monte-Carlo estimate of E_z[log q_z(x) - log phi(x)].
McEstimate mc_kl_to_standard_normal(const GaussianEmbedding& z, std::int64_t n,
                                    std::uint64_t seed);

}  // namespace prolip::oracles

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prolip/gaussian.hpp"
#include "prolip/losses.hpp"
#include "prolip/oracles.hpp"
#include "prolip/rng.hpp"
#include "support.hpp"

using namespace prolip;
using namespace prolip::oracles;
using testsupport::random_embedding;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("quadrature config validation") {
  QuadratureConfig cfg;
  cfg.points = 100;  // even
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.points = 99;  // too few
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.points = 101;
  cfg.half_width_sigmas = 5.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("quadrature reproduces the standard-normal cube integral") {
  // int phi^3 dx = 1 / (2 sqrt(3) pi)
  const double expected = 1.0 / (2.0 * std::sqrt(3.0) * kPi);
  const double got = std::exp(quadrature_log_inc(0.0, 1.0, 0.0, 1.0));
  CHECK(std::abs(got - expected) / expected < 1e-8);
}

TEST_CASE("quadrature translation invariance and convergence self-check") {
  const double base = quadrature_log_inc(0.4, 0.7, -0.9, 1.3);
  const double shifted = quadrature_log_inc(0.4 + 3.7, 0.7, -0.9 + 3.7, 1.3);
  CHECK(std::abs(base - shifted) < 1e-9);

  QuadratureConfig doubled;
  doubled.points = 40001;
  const double fine = quadrature_log_inc(0.4, 0.7, -0.9, 1.3, doubled);
  CHECK(std::abs(std::exp(fine) - std::exp(base)) / std::exp(base) < 1e-8);
}

TEST_CASE("quadrature is asymmetric in its distribution arguments") {
  // nested pair: narrow inside wide
  const double narrow_in_wide = quadrature_log_inc(0.0, 0.25, 0.0, 4.0);
  const double wide_in_narrow = quadrature_log_inc(0.0, 4.0, 0.0, 0.25);
  CHECK(narrow_in_wide != wide_in_narrow);
  CHECK(narrow_in_wide > wide_in_narrow);
}

TEST_CASE("quadrature reports hopeless underflow") {
  CHECK_THROWS_AS(quadrature_log_inc(0.0, 0.01, 100.0, 0.01), NumericError);
}

TEST_CASE("mc_csd on degenerate distributions is exact") {
  const GaussianEmbedding z1("a", {1.0, 2.0}, {-800.0, -800.0}, -800.0);
  const GaussianEmbedding z2("b", {4.0, 6.0}, {-800.0, -800.0}, -800.0);
  const auto mc = mc_csd(z1, z2, 10000, 1);
  CHECK(mc.estimate == doctest::Approx(25.0).epsilon(1e-15));
  CHECK(mc.std_error == 0.0);
}

TEST_CASE("mc_csd draws independent streams for aliased arguments") {
  const GaussianEmbedding z("z", {0.5, -0.5}, {std::log(0.3), std::log(0.2)});
  const auto mc = mc_csd(z, z, 200000, 5);
  const double expected = 2.0 * total_uncertainty(z);  // csd(z, z)
  CHECK(std::abs(mc.estimate - expected) < 3.0 * mc.std_error);
  CHECK(mc.std_error > 0.0);
}

TEST_CASE("mc_csd agrees with the closed form within 3 standard errors") {
  CounterRng rng(17, 0);
  for (int p = 0; p < 5; ++p) {
    const auto z1 = random_embedding(rng, "a", 4, false);
    const auto z2 = random_embedding(rng, "b", 4, false);
    const auto mc = mc_csd(z1, z2, 1000000, 100 + static_cast<std::uint64_t>(p));
    CHECK(std::abs(mc.estimate - csd(z1, z2)) < 3.0 * mc.std_error);
  }
}

TEST_CASE("mc_csd is deterministic given the seed and validates n") {
  const GaussianEmbedding z1("a", {0.0}, {0.0});
  const GaussianEmbedding z2("b", {1.0}, {0.0});
  const auto first = mc_csd(z1, z2, 20000, 9);
  const auto second = mc_csd(z1, z2, 20000, 9);
  CHECK(first.estimate == second.estimate);
  CHECK(first.std_error == second.std_error);
  CHECK_THROWS_AS(mc_csd(z1, z2, 9999, 9), InvalidArgument);
}

TEST_CASE("finite differences recover quadratic gradients exactly") {
  const auto f = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  const auto g = finite_diff_grad(f, {1.0, 2.0}, 1e-5);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

  const auto constant = [](const std::vector<double>&) { return 3.5; };
  for (double gi : finite_diff_grad(constant, {0.1, 0.2, 0.3}, 1e-4)) CHECK(gi == 0.0);

  CHECK_THROWS_AS(finite_diff_grad(f, {1.0}, 1e-8), InvalidArgument);
  CHECK_THROWS_AS(finite_diff_grad(f, {1.0}, 1e-2), InvalidArgument);
  const auto bad = [](const std::vector<double>& x) { return std::log(x[0]); };
  CHECK_THROWS_AS(finite_diff_grad(bad, {0.0}, 1e-5), NumericError);
}

TEST_CASE("finite differences cross-check the ppcl bias derivative") {
  CounterRng rng(23, 0);
  const auto zv = random_embedding(rng, "v", 6, true);
  const auto zt = random_embedding(rng, "t", 6, true);
  const double a = 10.0;
  const auto f = [&](const std::vector<double>& x) {
    return ppcl(zv, zt, MatchLabel::positive, a, x[0]);
  };
  const double fd = finite_diff_grad(f, {-0.7}, 1e-5)[0];
  const double analytic = sigmoid(-a * csd_similarity(zv, zt) - 0.7);
  CHECK(std::abs(fd - analytic) / std::abs(analytic) < 1e-6);
}

TEST_CASE("mc KL matches the closed form") {
  const GaussianEmbedding std_normal("z", {0.0, 0.0}, {0.0, 0.0});
  const auto zero = mc_kl_to_standard_normal(std_normal, 100000, 3);
  CHECK(std::abs(zero.estimate) < 3.0 * std::max(zero.std_error, 1e-12));

  const GaussianEmbedding shifted("z", {1.0}, {0.0});
  const auto half = mc_kl_to_standard_normal(shifted, 200000, 4);
  CHECK(std::abs(half.estimate - 0.5) < 3.0 * half.std_error);

  CounterRng rng(29, 0);
  for (int p = 0; p < 20; ++p) {
    const auto z = random_embedding(rng, "z", 3, false);
    const auto mc = mc_kl_to_standard_normal(z, 100000, 50 + static_cast<std::uint64_t>(p));
    CHECK(std::abs(mc.estimate - vib_loss(z)) < 3.0 * mc.std_error);
  }

  CHECK_THROWS_AS(mc_kl_to_standard_normal(std_normal, 99999, 3), InvalidArgument);
}

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "collapse/errors.hpp"
#include "collapse/noise.hpp"

using namespace collapse;

namespace {

RMatrix one() { return RMatrix::Identity(1, 1); }

// Composite Simpson on [a, b] with n (even) panels.
template <class Fn>
double simpson(Fn fn, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = fn(a) + fn(b);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * fn(a + k * h);
  return s * h / 3.0;
}

}  // namespace

TEST(CovarianceMatrix, ExponentialDiagonalAndSymmetry) {
  const auto k = CorrelationKernel::exponential(one(), 2.0);
  const RMatrix cov = covariance_matrix(k, TimeGrid(1.0, 20));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) EXPECT_DOUBLE_EQ(cov(i, i), 1.0);
  EXPECT_EQ((cov - cov.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(cov(0, 5), std::exp(-2.0 * 0.25), 1e-15);
}

TEST(CovarianceMatrix, FlatSpectrumVariance) {
  const double g = 0.3, omega = 4.0;
  const auto k = CorrelationKernel::tabulate(one(), [&](double) { return g; }, omega, 101);
  EXPECT_NEAR(covariance_matrix(k, TimeGrid(1.0, 4))(0, 0), g * omega, 1e-12);
  // D(tau) = g sin(omega tau) / tau
  EXPECT_NEAR(k.value(0.7)(0, 0), g * std::sin(omega * 0.7) / 0.7, 1e-6);
}

TEST(CovarianceMatrix, RejectsWhite) {
  EXPECT_THROW(covariance_matrix(CorrelationKernel::white(one()), TimeGrid(1.0, 4)), InvalidArgument);
}

TEST(SampleNoise, Deterministic) {
  const auto k = CorrelationKernel::exponential(one(), 3.0);
  const TimeGrid g(2.0, 50);
  EXPECT_EQ(sample_noise(k, g, 11, 4).samples(), sample_noise(k, g, 11, 4).samples());
  EXPECT_NE(sample_noise(k, g, 11, 4).samples(), sample_noise(k, g, 11, 5).samples());
  EXPECT_NE(sample_noise(k, g, 11, 4).samples(), sample_noise(k, g, 12, 4).samples());
}

// Mean and covariance at a few knot pairs against the kernel, 4 sigma.
void check_moments(const NoiseSampler& sampler, const CorrelationKernel& k) {
  const TimeGrid& g = sampler.grid();
  constexpr std::size_t n = 10000;
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 0}, {0, 3}, {5, 9}, {g.steps(), g.steps() - 2}};
  std::vector<double> mean(g.knots(), 0.0), m2(g.knots(), 0.0), prod(pairs.size(), 0.0), prod2(pairs.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const NoiseRealization w = sampler.sample(77, p);
    for (std::size_t q = 0; q < g.knots(); ++q) {
      mean[q] += w.value(0, q);
      m2[q] += w.value(0, q) * w.value(0, q);
    }
    for (std::size_t c = 0; c < pairs.size(); ++c) {
      const double x = w.value(0, pairs[c].first) * w.value(0, pairs[c].second);
      prod[c] += x;
      prod2[c] += x * x;
    }
  }
  for (std::size_t q = 0; q < g.knots(); ++q) {
    const double mu = mean[q] / n, sd = std::sqrt(m2[q] / n - mu * mu);
    EXPECT_LE(std::abs(mu), 4.0 * sd / std::sqrt(n)) << "knot " << q;
  }
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    const double mu = prod[c] / n, se = std::sqrt((prod2[c] / n - mu * mu) / n);
    const double want = k.value(g.time(pairs[c].first) - g.time(pairs[c].second))(0, 0);
    EXPECT_LE(std::abs(mu - want), 4.0 * se) << "pair " << c;
  }
}

TEST(SampleNoise, ExponentialMoments) {
  const auto k = CorrelationKernel::exponential(one(), 2.0);
  check_moments(NoiseSampler(k, TimeGrid(2.0, 20)), k);
  check_moments(NoiseSampler(k, TimeGrid(2.0, 20), SamplingMethod::cholesky), k);
}

TEST(SampleNoise, SpectralMoments) {
  const auto k = CorrelationKernel::tabulate(one(), [](double w) { return std::exp(-w) / std::numbers::pi; }, 20.0, 401);
  check_moments(NoiseSampler(k, TimeGrid(3.0, 30)), k);
}

TEST(SampleNoise, WhiteIncrementVariance) {
  RMatrix c(2, 2);
  c << 1.0, 0.4, 0.4, 2.0;
  const TimeGrid g(1.0, 10);
  const NoiseSampler s(CorrelationKernel::white(c), g);
  constexpr std::size_t n = 10000;
  RMatrix acc = RMatrix::Zero(2, 2);
  for (std::size_t p = 0; p < n; ++p) {
    const RVector w = s.sample(5, p).column(3);
    acc += w * w.transpose() * g.dt();
  }
  acc /= static_cast<double>(n);
  // Var of a sample covariance entry is about (c_ii c_jj + c_ij^2) / n.
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      EXPECT_LE(std::abs(acc(i, j) - c(i, j)), 4.0 * std::sqrt((c(i, i) * c(j, j) + c(i, j) * c(i, j)) / n));
}

TEST(FMatrix, WhiteEndpoint) {
  const auto k = CorrelationKernel::white(one());
  EXPECT_EQ(k.f_matrix(0.0)(0, 0), 0.0);
  EXPECT_EQ(k.f_matrix(0.3)(0, 0), 0.5);
  EXPECT_EQ(k.f_matrix_from_right(0.0)(0, 0), 0.5);
}

TEST(FMatrix, ZeroAtOriginAndRejectsNegative) {
  const auto e = CorrelationKernel::exponential(one(), 1.0);
  const auto s = CorrelationKernel::tabulate(one(), [](double w) { return std::exp(-w); }, 10.0, 101);
  EXPECT_EQ(e.f_matrix(0.0)(0, 0), 0.0);
  EXPECT_EQ(s.f_matrix(0.0)(0, 0), 0.0);
  EXPECT_THROW(e.f_matrix(-1.0), InvalidArgument);
}

TEST(FMatrix, ExponentialAgainstQuadrature) {
  const auto k = CorrelationKernel::exponential(one(), 1.0);
  const double quad = simpson([](double s) { return 0.5 * std::exp(-(1.0 - s)); }, 0.0, 1.0, 2000);
  EXPECT_NEAR(k.f_matrix(1.0)(0, 0), quad, 1e-12);
  EXPECT_NEAR(k.f_matrix(1.0)(0, 0), 0.3160602794, 1e-9);
}

TEST(FMatrix, SpectralAgainstQuadrature) {
  // F(t) = int gamma(w) sin(w t) / w dw for the cosine representation.
  const auto k = CorrelationKernel::tabulate(one(), [](double w) { return std::exp(-w); }, 20.0, 4001);
  for (double t : {0.5, 2.0, 10.0}) {
    const double quad = simpson(
        [&](double w) { return w == 0.0 ? t : std::exp(-w) * std::sin(w * t) / w; }, 0.0, 20.0, 20000);
    EXPECT_NEAR(k.f_matrix(t)(0, 0), quad, 2e-4) << "t=" << t;
  }
}

TEST(FMatrix, SymmetricAndMonotone) {
  RMatrix c(2, 2);
  c << 1.0, 0.3, 0.3, 0.5;
  const auto k = CorrelationKernel::exponential(c, 1.7);
  double prev = 0.0;
  for (int q = 0; q <= 40; ++q) {
    const RMatrix f = k.f_matrix(0.1 * q);
    EXPECT_EQ((f - f.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(f(0, 0), prev);
    prev = f(0, 0);
  }
}

TEST(FMatrix, LargeRateReproducesWhiteValue) {
  const auto k = CorrelationKernel::exponential(one(), 500.0);
  EXPECT_NEAR(k.f_matrix(1.0)(0, 0), 0.5, 1e-12);
}

TEST(GMatrix, ExponentialClosedForm) {
  const double lambda = 2.0, t = 1.3;
  const auto k = CorrelationKernel::exponential(one(), lambda);
  EXPECT_NEAR(k.g_matrix(t)(0, 0), 0.5 * (t - (1.0 - std::exp(-lambda * t)) / lambda), 1e-12);
}

TEST(SpectralLimit, HalfPiGammaZero) {
  const auto k = CorrelationKernel::tabulate(one(), [](double w) { return std::exp(-w) / std::numbers::pi; }, 20.0, 2001);
  const SpectralLimit lim = spectral_f_limit(k);
  EXPECT_NEAR(lim.limit(0, 0), 0.5, 1e-12);
  EXPECT_TRUE(lim.positive_definite);
  // The long-time quadrature approaches the limit: atan(t)/pi.
  EXPECT_NEAR(k.f_matrix(500.0)(0, 0) / lim.limit(0, 0), 1.0, 0.02);
  EXPECT_NEAR(k.f_matrix(50.0)(0, 0), std::atan(50.0) / std::numbers::pi, 1e-4);
}

TEST(SpectralLimit, VanishingAtZeroIsNotPositiveDefinite) {
  const auto k = CorrelationKernel::tabulate(one(), [](double w) { return w * w * std::exp(-w); }, 20.0, 401);
  const SpectralLimit lim = spectral_f_limit(k);
  EXPECT_EQ(lim.limit(0, 0), 0.0);
  EXPECT_FALSE(lim.positive_definite);
}

TEST(SpectralLimit, RequiresOmegaZero) {
  SpectralTable t;
  t.omega = {0.5, 1.0};
  t.gamma = {one(), one()};
  EXPECT_THROW(spectral_f_limit(CorrelationKernel::spectral(t)), InvalidArgument);
}

TEST(Kernel, SpectralValidation) {
  SpectralTable bad_order;
  bad_order.omega = {0.0, 1.0, 0.5};
  bad_order.gamma = {one(), one(), one()};
  EXPECT_THROW(CorrelationKernel::spectral(bad_order), InvalidArgument);
  SpectralTable indefinite;
  RMatrix g(2, 2);
  g << 1.0, 2.0, 2.0, 1.0;
  indefinite.omega = {0.0, 1.0};
  indefinite.gamma = {g, g};
  EXPECT_THROW(CorrelationKernel::spectral(indefinite), InvalidArgument);
  EXPECT_THROW(CorrelationKernel::exponential(one(), 0.0), InvalidArgument);
}

TEST(Kernel, StationarySymmetry) {
  RMatrix c(2, 2);
  c << 1.0, 0.2, 0.2, 0.7;
  const auto k = CorrelationKernel::exponential(c, 1.3);
  for (double tau : {0.1, 0.8, 2.5}) EXPECT_EQ(k.value(tau), RMatrix(k.value(-tau).transpose()));
}

TEST(FurutsuNovikov, ExponentialLinearAndQuadratic) {
  const auto k = CorrelationKernel::exponential(one(), 2.0);
  const TimeGrid g(2.0, 100);
  const auto lin = check_furutsu_novikov(k, g, 0, NoiseFunctional::linear(0, 1.5), 10000, 3);
  EXPECT_TRUE(lin.consistent(4.0));
  EXPECT_NEAR(lin.rhs, std::exp(-2.0 * 0.5), 1e-12);
  EXPECT_LE(std::abs(lin.lhs - lin.rhs), 4.0 * lin.lhs_error);
  const auto quad = check_furutsu_novikov(k, g, 0, NoiseFunctional::quadratic(0, 0.4, 0, 1.2), 10000, 4);
  EXPECT_TRUE(quad.consistent(4.0));
}

TEST(FurutsuNovikov, WhiteEndpointHalf) {
  // F = W(T): the derivative is 1 on [0, T] and the delta sits at the endpoint.
  const auto k = CorrelationKernel::white(one());
  const TimeGrid g(1.0, 50);
  const auto r = check_furutsu_novikov(k, g, 0, NoiseFunctional::linear(0, 1.0), 10000, 9);
  EXPECT_NEAR(r.rhs, 0.5, 1e-12);
  EXPECT_TRUE(r.consistent(4.0));
}

TEST(NoiseRealization, IntegratedConventions) {
  RMatrix s(1, 5);
  s << 1.0, 2.0, 3.0, 4.0, 5.0;
  const TimeGrid g(2.0, 4);
  const auto white = NoiseRealization(s, g, true).integrated(0);
  const auto colored = NoiseRealization(s, g, false).integrated(0);
  EXPECT_DOUBLE_EQ(white.back(), 0.5 * (1 + 2 + 3 + 4));
  EXPECT_DOUBLE_EQ(colored.back(), 0.5 * (0.5 * 1 + 2 + 3 + 4 + 0.5 * 5));
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include "collapse/linalg.hpp"

namespace collapse {

class TimeGrid {
 public:
  TimeGrid() = default;
  /// Uniform knots t_k = k * t_end / steps, k = 0..steps.
  TimeGrid(double t_end, std::size_t steps);

  double t_end() const { return t_end_; }
  std::size_t steps() const { return steps_; }
  std::size_t knots() const { return steps_ + 1; }
  double dt() const { return t_end_ / static_cast<double>(steps_); }
  double time(std::size_t k) const { return dt() * static_cast<double>(k); }
  /// Knot nearest to t (clamped to the grid).
  std::size_t knot_at(double t) const;

  bool operator==(const TimeGrid&) const = default;

 private:
  double t_end_ = 1.0;
  std::size_t steps_ = 1;
};

enum class KernelKind { white, exponential, spectral };

const char* to_string(KernelKind kind);

/// Tabulated spectral weight gamma_ij(omega) on [0, omega_max]; linear
/// interpolation between nodes.
struct SpectralTable {
  std::vector<double> omega;
  std::vector<RMatrix> gamma;

  double omega_max() const { return omega.empty() ? 0.0 : omega.back(); }
  std::size_t size() const { return gamma.empty() ? 0 : static_cast<std::size_t>(gamma.front().rows()); }
};

/// Stationary noise autocorrelation D_ij(t - s) = E[w_i(t) w_j(s)].
///   white:       c_ij delta(t - s)
///   exponential: c_ij (lambda/2) exp(-lambda |t - s|)
///   spectral:    int_0^omega_max gamma_ij(omega) cos(omega (t - s)) d omega
class CorrelationKernel {
 public:
  CorrelationKernel() = default;

  static CorrelationKernel white(RMatrix strength);
  static CorrelationKernel exponential(RMatrix strength, double rate);
  static CorrelationKernel spectral(SpectralTable table);
  /// Samples `profile(omega)` on `points` uniform nodes of [0, omega_max];
  /// the result is `shape` times the profile.
  template <class Profile>
  static CorrelationKernel tabulate(const RMatrix& shape, Profile profile, double omega_max,
                                    std::size_t points);

  KernelKind kind() const;
  bool is_white() const { return kind() == KernelKind::white; }
  std::size_t size() const;

  /// c_ij for the white and exponential variants.
  const RMatrix& strength() const;
  double rate() const;
  const SpectralTable& table() const;

  /// D_ij(tau). Not defined for white noise.
  RMatrix value(double tau) const;
  /// F_ij(t) = int_0^t ds D_ij(t, s). White noise uses the endpoint rule
  /// int_0^t delta(t - s) ds = 1/2 for t > 0; F(0) = 0 for every kernel.
  RMatrix f_matrix(double t) const;
  /// lim_{s -> t+} F(s): equals f_matrix except for white noise at t = 0.
  RMatrix f_matrix_from_right(double t) const;
  /// G_ij(t) = int_0^t F_ij(s) ds.
  RMatrix g_matrix(double t) const;
  /// int_0^t D_ij(tau) exp(-i omega tau) d tau (white: endpoint rule, c/2).
  CMatrix transform(double t, double omega) const;
  /// D_ij(0) for non-white kernels.
  RMatrix variance() const { return value(0.0); }

 private:
  struct White {
    RMatrix c;
  };
  struct Exponential {
    RMatrix c;
    double lambda;
  };
  struct Spectral {
    SpectralTable table;
  };
  using Variant = std::variant<White, Exponential, Spectral>;

  explicit CorrelationKernel(Variant v) : v_(std::move(v)) {}

  Variant v_ = White{RMatrix::Identity(1, 1)};
};

/// Sampled path w_i(t_k), i = 0..N-1, k = 0..M. For white noise each sample
/// is a grid-averaged value Delta W / Delta t with variance c_ii / Delta t.
class NoiseRealization {
 public:
  NoiseRealization() = default;
  NoiseRealization(RMatrix samples, TimeGrid grid, bool white);

  std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
  const TimeGrid& grid() const { return grid_; }
  bool white() const { return white_; }
  const RMatrix& samples() const { return samples_; }
  double value(std::size_t i, std::size_t k) const {
    return samples_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  }
  /// Delta W_{i,k} = w_i(t_k) Delta t, the increment over [t_k, t_{k+1}].
  double increment(std::size_t i, std::size_t k) const { return value(i, k) * grid_.dt(); }
  RVector column(std::size_t k) const { return samples_.col(static_cast<Eigen::Index>(k)); }
  /// I_i(t_k) = int_0^{t_k} w_i: Ito sums of increments for white noise,
  /// trapezoid rule otherwise.
  std::vector<double> integrated(std::size_t i) const;

 private:
  RMatrix samples_;
  TimeGrid grid_;
  bool white_ = false;
};

/// Per-(seed, index, tag) random stream; independent of execution order.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag = 0);

/// Covariance of the stacked samples (i, k) -> i * (M + 1) + k.
RMatrix covariance_matrix(const CorrelationKernel& kernel, const TimeGrid& grid);

enum class SamplingMethod {
  automatic,  // increments (white), exact AR(1) recursion (exponential), Cholesky (spectral)
  cholesky,   // Cholesky factor of covariance_matrix for every non-white kernel
};

/// Draws NoiseRealizations. The factorization is computed once at
/// construction; sample() is const and safe to call concurrently.
class NoiseSampler {
 public:
  NoiseSampler(CorrelationKernel kernel, TimeGrid grid,
               SamplingMethod method = SamplingMethod::automatic);

  NoiseRealization sample(std::uint64_t seed, std::uint64_t index) const;

  const CorrelationKernel& kernel() const { return kernel_; }
  const TimeGrid& grid() const { return grid_; }
  SamplingMethod method() const { return method_; }
  /// Diagonal jitter that made the Cholesky factorization succeed (0 if unused).
  double jitter() const { return jitter_; }

 private:
  CorrelationKernel kernel_;
  TimeGrid grid_;
  SamplingMethod method_;
  RMatrix mixing_;  // symmetric square root of c (white / exponential)
  RMatrix factor_;  // lower Cholesky factor of the grid covariance
  double jitter_ = 0.0;
};

NoiseRealization sample_noise(const CorrelationKernel& kernel, const TimeGrid& grid,
                              std::uint64_t seed, std::uint64_t index);

RMatrix f_matrix(const CorrelationKernel& kernel, double t);

struct SpectralLimit {
  RMatrix limit;        // lim_{t -> inf} F(t)
  RVector eigenvalues;  // ascending
  bool positive_definite = false;
};

/// Long-time limit of F(t) for a spectral kernel: (pi/2) gamma(0).
SpectralLimit spectral_f_limit(const CorrelationKernel& kernel);

/// Test functionals of the noise with known functional derivatives. For
/// colored noise they act on point values w_j(t'); for white noise, where
/// point values do not exist, on the integrated noise W_j(t') = int_0^t' w_j.
struct NoiseFunctional {
  enum class Kind { linear, quadratic };
  Kind kind = Kind::linear;
  std::size_t j = 0;
  double t1 = 0.0;
  std::size_t k = 0;  // quadratic only
  double t2 = 0.0;    // quadratic only

  static NoiseFunctional linear(std::size_t j, double t1) { return {Kind::linear, j, t1, 0, 0.0}; }
  static NoiseFunctional quadratic(std::size_t j, double t1, std::size_t k, double t2) {
    return {Kind::quadratic, j, t1, k, t2};
  }
};

struct FurutsuNovikovReport {
  double lhs = 0.0;  // E[F w_i(t)]
  double lhs_error = 0.0;
  double rhs = 0.0;  // sum_j int_0^t D_ij(t, s) E[dF / dw_j(s)] ds
  double rhs_error = 0.0;
  double difference_error = 0.0;  // standard error of the paired difference
  std::size_t n_samples = 0;

  bool consistent(double sigmas = 4.0) const;
};

/// Monte Carlo check of E[F w_i(t)] against the kernel quadrature of the
/// functional derivative, with t the final grid time.
FurutsuNovikovReport check_furutsu_novikov(const CorrelationKernel& kernel, const TimeGrid& grid,
                                           std::size_t i, const NoiseFunctional& functional,
                                           std::size_t n_samples, std::uint64_t seed);

template <class Profile>
CorrelationKernel CorrelationKernel::tabulate(const RMatrix& shape, Profile profile,
                                              double omega_max, std::size_t points) {
  SpectralTable table;
  table.omega.reserve(points);
  table.gamma.reserve(points);
  for (std::size_t k = 0; k < points; ++k) {
    const double w = omega_max * static_cast<double>(k) / static_cast<double>(points - 1);
    table.omega.push_back(w);
    table.gamma.push_back(shape * profile(w));
  }
  return spectral(std::move(table));
}

}  // namespace collapse

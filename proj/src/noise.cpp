#include "collapse/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_symmetric_psd(const RMatrix& c, const char* what) {
  if (c.rows() != c.cols() || c.rows() == 0) {
    throw InvalidArgument(std::string(what) + ": strength matrix must be square and non-empty");
  }
  if (!c.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite strength entry");
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument(std::string(what) + ": strength matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(c, Eigen::EigenvaluesOnly);
  if (solver.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw InvalidArgument(std::string(what) + ": strength matrix must be positive semidefinite");
  }
}

RMatrix symmetric_sqrt(const RMatrix& c) {
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(c);
  const RVector root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * root.asDiagonal() * solver.eigenvectors().transpose();
}

// Composite Simpson quadrature of gamma_ij(omega) * weight(omega) over the
// table, with gamma linear between nodes and sub-steps no wider than
// `resolution`.
template <class Weight>
CMatrix integrate_spectrum(const SpectralTable& table, double resolution, Weight weight) {
  const auto n = static_cast<Eigen::Index>(table.size());
  CMatrix acc = CMatrix::Zero(n, n);
  for (std::size_t seg = 0; seg + 1 < table.omega.size(); ++seg) {
    const double a = table.omega[seg];
    const double b = table.omega[seg + 1];
    const double width = b - a;
    const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(width / resolution)));
    const std::size_t nodes = 2 * pieces;
    const double h = width / static_cast<double>(nodes);
    Complex s0 = 0.0;
    Complex s1 = 0.0;
    for (std::size_t q = 0; q <= nodes; ++q) {
      const double simpson = (q == 0 || q == nodes) ? 1.0 : (q % 2 == 1 ? 4.0 : 2.0);
      const double u = static_cast<double>(q) / static_cast<double>(nodes);
      const Complex f = simpson * weight(a + u * width);
      s0 += f * (1.0 - u);
      s1 += f * u;
    }
    acc += (h / 3.0) * (s0 * table.gamma[seg].cast<Complex>() + s1 * table.gamma[seg + 1].cast<Complex>());
  }
  return acc;
}

double spectral_resolution(const SpectralTable& table, double t) {
  const double oscillation = t > 0.0 ? kPi / (8.0 * t) : table.omega_max();
  return std::max(oscillation, table.omega_max() * 1e-7);
}

}  // namespace

TimeGrid::TimeGrid(double t_end, std::size_t steps) : t_end_(t_end), steps_(steps) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw InvalidArgument("TimeGrid: t_end must be positive");
  if (steps < 1) throw InvalidArgument("TimeGrid: at least one step is required");
}

std::size_t TimeGrid::knot_at(double t) const {
  const double k = std::round(t / dt());
  if (k <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), steps_);
}

const char* to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::white: return "white";
    case KernelKind::exponential: return "exponential";
    case KernelKind::spectral: return "spectral";
  }
  return "unknown";
}

CorrelationKernel CorrelationKernel::white(RMatrix strength) {
  require_symmetric_psd(strength, "white kernel");
  return CorrelationKernel(White{std::move(strength)});
}

CorrelationKernel CorrelationKernel::exponential(RMatrix strength, double rate) {
  require_symmetric_psd(strength, "exponential kernel");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidArgument("exponential kernel: rate must be positive");
  return CorrelationKernel(Exponential{std::move(strength), rate});
}

CorrelationKernel CorrelationKernel::spectral(SpectralTable table) {
  if (table.omega.size() < 2 || table.omega.size() != table.gamma.size()) {
    throw InvalidArgument("spectral kernel: need at least two (omega, gamma) nodes");
  }
  if (table.omega.front() < 0.0) throw InvalidArgument("spectral kernel: omega must be nonnegative");
  const Eigen::Index n = table.gamma.front().rows();
  for (std::size_t k = 0; k < table.omega.size(); ++k) {
    if (k > 0 && !(table.omega[k] > table.omega[k - 1])) {
      throw InvalidArgument("spectral kernel: omega nodes must be strictly increasing");
    }
    const RMatrix& g = table.gamma[k];
    if (g.rows() != n || g.cols() != n) throw InvalidArgument("spectral kernel: inconsistent gamma shape");
    require_symmetric_psd(g, "spectral kernel gamma(omega)");
  }
  return CorrelationKernel(Spectral{std::move(table)});
}

KernelKind CorrelationKernel::kind() const {
  return std::visit(Overloaded{[](const White&) { return KernelKind::white; },
                               [](const Exponential&) { return KernelKind::exponential; },
                               [](const Spectral&) { return KernelKind::spectral; }},
                    v_);
}

std::size_t CorrelationKernel::size() const {
  return std::visit(Overloaded{[](const White& k) { return static_cast<std::size_t>(k.c.rows()); },
                               [](const Exponential& k) { return static_cast<std::size_t>(k.c.rows()); },
                               [](const Spectral& k) { return k.table.size(); }},
                    v_);
}

const RMatrix& CorrelationKernel::strength() const {
  if (const auto* w = std::get_if<White>(&v_)) return w->c;
  if (const auto* e = std::get_if<Exponential>(&v_)) return e->c;
  throw InvalidArgument("CorrelationKernel::strength: spectral kernels have no scalar strength");
}

double CorrelationKernel::rate() const {
  if (const auto* e = std::get_if<Exponential>(&v_)) return e->lambda;
  throw InvalidArgument("CorrelationKernel::rate: only exponential kernels have a rate");
}

const SpectralTable& CorrelationKernel::table() const {
  if (const auto* s = std::get_if<Spectral>(&v_)) return s->table;
  throw InvalidArgument("CorrelationKernel::table: not a spectral kernel");
}

RMatrix CorrelationKernel::value(double tau) const {
  return std::visit(
      Overloaded{
          [](const White&) -> RMatrix {
            throw InvalidArgument("CorrelationKernel::value: white noise has no pointwise correlation");
          },
          [tau](const Exponential& k) -> RMatrix {
            return k.c * (0.5 * k.lambda * std::exp(-k.lambda * std::abs(tau)));
          },
          [tau](const Spectral& k) -> RMatrix {
            // Exact integral of the piecewise-linear spectrum against cos(omega tau).
            const SpectralTable& tab = k.table;
            const auto n = static_cast<Eigen::Index>(tab.size());
            RMatrix acc = RMatrix::Zero(n, n);
            const double x = std::abs(tau);
            for (std::size_t seg = 0; seg + 1 < tab.omega.size(); ++seg) {
              const double a = tab.omega[seg];
              const double b = tab.omega[seg + 1];
              const RMatrix& ga = tab.gamma[seg];
              const RMatrix& gb = tab.gamma[seg + 1];
              if (x * (b - a) < 1e-9) {
                acc += 0.5 * (b - a) * (ga + gb);
                continue;
              }
              const RMatrix slope = (gb - ga) / (b - a);
              acc += (gb * std::sin(b * x) - ga * std::sin(a * x)) / x;
              acc += slope * (-2.0 * std::sin(0.5 * (a + b) * x) * std::sin(0.5 * (b - a) * x) / (x * x));
            }
            return acc;
          }},
      v_);
}

RMatrix CorrelationKernel::f_matrix(double t) const {
  if (t < 0.0 || !std::isfinite(t)) throw InvalidArgument("f_matrix: t must be nonnegative");
  const auto n = static_cast<Eigen::Index>(size());
  if (t == 0.0) return RMatrix::Zero(n, n);
  return std::visit(
      Overloaded{[](const White& k) -> RMatrix { return 0.5 * k.c; },
                 [t](const Exponential& k) -> RMatrix {
                   return k.c * (0.5 * -std::expm1(-k.lambda * t));
                 },
                 [t](const Spectral& k) -> RMatrix {
                   const auto weight = [t](double w) -> Complex {
                     return w * t < 1e-8 ? t : std::sin(w * t) / w;
                   };
                   return integrate_spectrum(k.table, spectral_resolution(k.table, t), weight).real();
                 }},
      v_);
}

RMatrix CorrelationKernel::f_matrix_from_right(double t) const {
  if (t == 0.0 && is_white()) return 0.5 * strength();
  return f_matrix(t);
}

RMatrix CorrelationKernel::g_matrix(double t) const {
  if (t < 0.0 || !std::isfinite(t)) throw InvalidArgument("g_matrix: t must be nonnegative");
  const auto n = static_cast<Eigen::Index>(size());
  if (t == 0.0) return RMatrix::Zero(n, n);
  return std::visit(
      Overloaded{[t](const White& k) -> RMatrix { return 0.5 * t * k.c; },
                 [t](const Exponential& k) -> RMatrix {
                   return k.c * (0.5 * t + 0.5 * std::expm1(-k.lambda * t) / k.lambda);
                 },
                 [t](const Spectral& k) -> RMatrix {
                   const auto weight = [t](double w) -> Complex {
                     if (w * t < 1e-6) return 0.5 * t * t;
                     const double s = std::sin(0.5 * w * t) / w;
                     return 2.0 * s * s;
                   };
                   return integrate_spectrum(k.table, spectral_resolution(k.table, t), weight).real();
                 }},
      v_);
}

CMatrix CorrelationKernel::transform(double t, double omega) const {
  if (t < 0.0 || !std::isfinite(t)) throw InvalidArgument("transform: t must be nonnegative");
  const auto n = static_cast<Eigen::Index>(size());
  if (t == 0.0) return CMatrix::Zero(n, n);
  return std::visit(
      Overloaded{[](const White& k) -> CMatrix { return (0.5 * k.c).cast<Complex>(); },
                 [t, omega](const Exponential& k) -> CMatrix {
                   const Complex z(k.lambda, omega);
                   const Complex factor = 0.5 * k.lambda * (1.0 - std::exp(-z * t)) / z;
                   return k.c.cast<Complex>() * factor;
                 },
                 [t, omega](const Spectral& k) -> CMatrix {
                   // int_0^t e^{i x tau} d tau
                   const auto h = [t](double x) -> Complex {
                     if (std::abs(x * t) < 1e-8) return Complex(t, 0.5 * x * t * t);
                     return (std::exp(kI * x * t) - 1.0) / (kI * x);
                   };
                   const auto weight = [&](double w) -> Complex {
                     return 0.5 * (h(w - omega) + h(-w - omega));
                   };
                   const double res = std::min(spectral_resolution(k.table, t),
                                               kPi / (8.0 * std::max(t, 1e-12)));
                   return integrate_spectrum(k.table, res, weight);
                 }},
      v_);
}

NoiseRealization::NoiseRealization(RMatrix samples, TimeGrid grid, bool white)
    : samples_(std::move(samples)), grid_(grid), white_(white) {
  if (samples_.cols() != static_cast<Eigen::Index>(grid_.knots())) {
    throw InvalidArgument("NoiseRealization: sample count does not match the grid");
  }
  if (!samples_.allFinite()) throw NumericalError("NoiseRealization: non-finite sample");
}

std::vector<double> NoiseRealization::integrated(std::size_t i) const {
  const std::size_t knots = grid_.knots();
  const double dt = grid_.dt();
  std::vector<double> out(knots, 0.0);
  for (std::size_t k = 1; k < knots; ++k) {
    const double step = white_ ? value(i, k - 1) * dt : 0.5 * dt * (value(i, k - 1) + value(i, k));
    out[k] = out[k - 1] + step;
  }
  return out;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  const std::uint64_t a = splitmix(seed);
  const std::uint64_t b = splitmix(a ^ splitmix(index + 0x632be59bd9b4e019ULL));
  const std::uint64_t c = splitmix(b ^ splitmix(tag + 0x85157af5ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

RMatrix covariance_matrix(const CorrelationKernel& kernel, const TimeGrid& grid) {
  if (kernel.is_white()) {
    throw InvalidArgument("covariance_matrix: white noise is sampled by increments");
  }
  const std::size_t n = kernel.size();
  const std::size_t knots = grid.knots();
  std::vector<RMatrix> lags;
  lags.reserve(knots);
  for (std::size_t l = 0; l < knots; ++l) {
    lags.push_back(kernel.value(grid.time(l)));
    if (!lags.back().allFinite()) throw NumericalError("covariance_matrix: non-finite kernel value");
  }
  const auto total = static_cast<Eigen::Index>(n * knots);
  RMatrix cov(total, total);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < knots; ++k) {
        for (std::size_t l = 0; l < knots; ++l) {
          const std::size_t lag = k > l ? k - l : l - k;
          // D_ij(t_k - t_l); stationary kernels here satisfy D_ij(tau) = D_ij(-tau).
          cov(static_cast<Eigen::Index>(i * knots + k), static_cast<Eigen::Index>(j * knots + l)) =
              lags[lag](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
      }
    }
  }
  return cov;
}

NoiseSampler::NoiseSampler(CorrelationKernel kernel, TimeGrid grid, SamplingMethod method)
    : kernel_(std::move(kernel)), grid_(grid), method_(method) {
  const KernelKind kind = kernel_.kind();
  if (kind == KernelKind::white) {
    mixing_ = symmetric_sqrt(kernel_.strength());
    return;
  }
  if (kind == KernelKind::exponential && method_ == SamplingMethod::automatic) {
    mixing_ = symmetric_sqrt(kernel_.strength());
    return;
  }
  const RMatrix cov = covariance_matrix(kernel_, grid_);
  const double scale = std::max(cov.diagonal().maxCoeff(), 1e-300);
  for (const double jitter : {1e-12, 1e-10, 1e-8}) {
    RMatrix shifted = cov;
    shifted.diagonal().array() += jitter * scale;
    Eigen::LLT<RMatrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      jitter_ = jitter * scale;
      return;
    }
  }
  throw NumericalError("NoiseSampler: covariance is indefinite after jitter escalation");
}

NoiseRealization NoiseSampler::sample(std::uint64_t seed, std::uint64_t index) const {
  auto rng = make_stream(seed, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(kernel_.size());
  const auto knots = static_cast<Eigen::Index>(grid_.knots());
  RMatrix samples(n, knots);

  if (kernel_.is_white()) {
    RMatrix z(n, knots);
    for (Eigen::Index k = 0; k < knots; ++k)
      for (Eigen::Index i = 0; i < n; ++i) z(i, k) = normal(rng);
    samples = mixing_ * z / std::sqrt(grid_.dt());
  } else if (factor_.size() == 0) {
    // Exponential kernel: independent stationary Ornstein-Uhlenbeck modes of
    // variance lambda/2, mixed by sqrt(c).
    const double lambda = kernel_.rate();
    const double var = 0.5 * lambda;
    const double rho = std::exp(-lambda * grid_.dt());
    const double innov = std::sqrt(var * -std::expm1(-2.0 * lambda * grid_.dt()));
    RMatrix u(n, knots);
    for (Eigen::Index i = 0; i < n; ++i) u(i, 0) = std::sqrt(var) * normal(rng);
    for (Eigen::Index k = 1; k < knots; ++k)
      for (Eigen::Index i = 0; i < n; ++i) u(i, k) = rho * u(i, k - 1) + innov * normal(rng);
    samples = mixing_ * u;
  } else {
    RVector z(n * knots);
    for (Eigen::Index q = 0; q < z.size(); ++q) z(q) = normal(rng);
    const RVector stacked = factor_.triangularView<Eigen::Lower>() * z;
    for (Eigen::Index i = 0; i < n; ++i) samples.row(i) = stacked.segment(i * knots, knots).transpose();
  }
  return NoiseRealization(std::move(samples), grid_, kernel_.is_white());
}

NoiseRealization sample_noise(const CorrelationKernel& kernel, const TimeGrid& grid,
                              std::uint64_t seed, std::uint64_t index) {
  return NoiseSampler(kernel, grid).sample(seed, index);
}

RMatrix f_matrix(const CorrelationKernel& kernel, double t) {
  return kernel.f_matrix(t);
}

SpectralLimit spectral_f_limit(const CorrelationKernel& kernel) {
  const SpectralTable& table = kernel.table();
  if (table.omega.front() != 0.0) {
    throw InvalidArgument("spectral_f_limit: tabulation must include omega = 0");
  }
  // int_0^inf sin(u)/u du = pi/2.
  SpectralLimit out;
  out.limit = 0.5 * kPi * table.gamma.front();
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(out.limit, Eigen::EigenvaluesOnly);
  out.eigenvalues = solver.eigenvalues();
  const double scale = std::max(1e-300, out.limit.cwiseAbs().maxCoeff());
  out.positive_definite = out.eigenvalues.minCoeff() > 1e-12 * scale && out.limit.cwiseAbs().maxCoeff() > 0.0;
  return out;
}

bool FurutsuNovikovReport::consistent(double sigmas) const {
  return std::abs(lhs - rhs) <= sigmas * difference_error + 1e-12;
}

FurutsuNovikovReport check_furutsu_novikov(const CorrelationKernel& kernel, const TimeGrid& grid,
                                           std::size_t i, const NoiseFunctional& functional,
                                           std::size_t n_samples, std::uint64_t seed) {
  const std::size_t n = kernel.size();
  if (i >= n || functional.j >= n || functional.k >= n) {
    throw InvalidArgument("check_furutsu_novikov: noise index out of range");
  }
  if (n_samples < 2) throw InvalidArgument("check_furutsu_novikov: need at least two samples");
  const std::size_t last = grid.steps();
  const std::size_t k1 = grid.knot_at(functional.t1);
  const std::size_t k2 = grid.knot_at(functional.t2);
  const bool quadratic = functional.kind == NoiseFunctional::Kind::quadratic;
  const double t = grid.t_end();
  const auto ii = static_cast<Eigen::Index>(i);
  const auto jj = static_cast<Eigen::Index>(functional.j);
  const auto kk = static_cast<Eigen::Index>(functional.k);

  const NoiseSampler sampler(kernel, grid);
  std::vector<double> lhs(n_samples), rhs(n_samples);

  // Trapezoid integral of w_m over [0, t_K]; the half weight at the upper
  // end is what turns delta(t - s) into the 1/2 endpoint rule.
  const auto trapezoid_to = [&](const NoiseRealization& w, std::size_t m, std::size_t knot) {
    double acc = 0.0;
    for (std::size_t b = 0; b <= knot; ++b) {
      const double weight = (b == 0 || b == knot) ? 0.5 : 1.0;
      acc += weight * w.value(m, b);
    }
    return knot == 0 ? 0.0 : acc * grid.dt();
  };

  RMatrix d1, d2;
  if (!kernel.is_white()) {
    d1 = kernel.value(t - grid.time(k1));
    d2 = kernel.value(t - grid.time(k2));
  }
  const RMatrix half_c = kernel.is_white() ? RMatrix(0.5 * kernel.strength()) : RMatrix();

  for (std::size_t s = 0; s < n_samples; ++s) {
    const NoiseRealization w = sampler.sample(seed, s);
    const double wi = w.value(i, last);
    if (!kernel.is_white()) {
      const double a = w.value(functional.j, k1);
      if (!quadratic) {
        lhs[s] = a * wi;
        rhs[s] = d1(ii, jj);
      } else {
        const double b = w.value(functional.k, k2);
        lhs[s] = a * b * wi;
        rhs[s] = d1(ii, jj) * b + d2(ii, kk) * a;
      }
    } else {
      const double a = trapezoid_to(w, functional.j, k1);
      const double at_end1 = k1 == last ? 1.0 : 0.0;
      if (!quadratic) {
        lhs[s] = a * wi;
        rhs[s] = half_c(ii, jj) * at_end1;
      } else {
        const double b = trapezoid_to(w, functional.k, k2);
        const double at_end2 = k2 == last ? 1.0 : 0.0;
        lhs[s] = a * b * wi;
        rhs[s] = half_c(ii, jj) * at_end1 * b + half_c(ii, kk) * at_end2 * a;
      }
    }
  }

  const auto mean_and_error = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = ss / static_cast<double>(v.size() - 1);
    return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
  };
  std::vector<double> diff(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) diff[s] = lhs[s] - rhs[s];

  FurutsuNovikovReport report;
  std::tie(report.lhs, report.lhs_error) = mean_and_error(lhs);
  std::tie(report.rhs, report.rhs_error) = mean_and_error(rhs);
  report.difference_error = mean_and_error(diff).second;
  report.n_samples = n_samples;
  return report;
}

}  // namespace collapse

#include "collapse/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "collapse/errors.hpp"

namespace collapse {

namespace scheme {

bool is_linear(const std::string& name) {
  return name == linear_colored_commuting || name == linear_memory_kernel || name == perturbative_order_gamma;
}

bool is_trajectory(const std::string& name) {
  return name == ito_white || name == stratonovich_white || name == linear_colored_commuting ||
         name == nonlinear_colored_commuting || name == perturbative_order_gamma ||
         name == linear_memory_kernel || name == nonlinear_secIII;
}

bool is_master(const std::string& name) {
  return name == master_white || name == master_colored_commuting || name == master_order_gamma ||
         name == master_markov_limit || name == linear_hierarchy;
}

}  // namespace scheme

namespace {

struct Operators {
  std::size_t n;
  CMatrix minus_ih;
  std::vector<CMatrix> a;
  std::vector<CMatrix> aa;  // A_i A_j, index i * n + j

  explicit Operators(const ModelSpec& model) : n(model.size()) {
    minus_ih = -kI * model.hamiltonian().matrix();
    for (const auto& op : model.family().operators()) a.push_back(op.matrix());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) aa.push_back(a[i] * a[j]);
  }
};

void check_inputs(const ModelSpec& model, const NoiseRealization& noise, const StateVector& psi0,
                  bool normalized) {
  if (psi0.dim() != model.dim()) throw InvalidArgument("initial state dimension does not match the model");
  if (normalized && !psi0.is_normalized(1e-10)) throw InvalidArgument("initial state must be normalized");
  if (noise.size() != model.size()) throw InvalidArgument("noise count does not match the collapse family");
  if (!(noise.grid() == model.grid())) throw InvalidArgument("noise grid does not match the model grid");
  if (noise.white() != model.kernel().is_white()) throw InvalidArgument("noise and kernel whiteness differ");
}

Trajectory start(const char* name, const ModelSpec& model, const NoiseRealization& noise,
                 const EvolveOptions& options) {
  Trajectory traj;
  traj.scheme = name;
  traj.grid = model.grid();
  traj.states.reserve(model.grid().knots());
  traj.norms.reserve(model.grid().knots());
  if (options.keep_noise) traj.noise = std::make_shared<const NoiseRealization>(noise);
  return traj;
}

double checked_norm(const CVector& psi, double floor, std::size_t step) {
  const double n2 = psi.squaredNorm();
  if (!std::isfinite(n2) || n2 < floor) {
    throw NumericalError("state norm collapsed to " + std::to_string(n2) + " (step too large?)", step);
  }
  return n2;
}

RVector real_expectations(const std::vector<CMatrix>& ops, const CVector& psi) {
  RVector out(static_cast<Eigen::Index>(ops.size()));
  for (std::size_t i = 0; i < ops.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = detail::raw_expectation(ops[i], psi).real();
  return out;
}

// Heun stepping of a norm-preserving equation d psi/dt = rhs(psi, knot, w),
// renormalizing after each step. `white` holds the noise fixed over a step.
template <class Rhs>
Trajectory run_nonlinear(const char* name, const ModelSpec& model, const NoiseRealization& noise,
                         const StateVector& psi0, const EvolveOptions& options, Rhs rhs,
                         bool drift_check = false) {
  Trajectory traj = start(name, model, noise, options);
  const TimeGrid& grid = model.grid();
  const double dt = grid.dt();
  const bool white = noise.white();
  CVector psi = psi0.amplitudes();
  traj.states.push_back(psi0);
  traj.norms.push_back(1.0);
  double drift = 0.0;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const RVector w0 = noise.column(k);
    const RVector w1 = white ? w0 : noise.column(k + 1);
    const CVector f0 = rhs(psi, k, w0);
    const CVector pred = psi + dt * f0;
    const CVector f1 = rhs(pred, k + 1, w1);
    psi += 0.5 * dt * (f0 + f1);
    const double n2 = checked_norm(psi, options.norm_floor, k + 1);
    if (drift_check) {
      drift += std::abs(n2 - 1.0);
      if (drift > options.norm_drift_tolerance * std::max(1.0, grid.time(k + 1))) {
        throw NumericalError(std::string(name) + ": norm drift " + std::to_string(drift) +
                                 " exceeds tolerance (reduce the step)",
                             k + 1);
      }
    }
    psi /= std::sqrt(n2);
    traj.states.emplace_back(psi);
    traj.norms.push_back(n2);
  }
  return traj;
}

}  // namespace

Trajectory evolve_ito_white(const ModelSpec& model, const NoiseRealization& noise, const StateVector& psi0,
                            const EvolveOptions& options) {
  if (!model.kernel().is_white()) throw InvalidArgument("evolve_ito_white: kernel must be white");
  check_inputs(model, noise, psi0, true);
  const Operators ops(model);
  const RMatrix& c = model.kernel().strength();
  const double g = model.gamma();
  const double sg = std::sqrt(g);
  const Complex xi = model.xi();
  const double xr = model.xi_r();
  const double xi2 = std::norm(xi);
  const std::size_t n = ops.n;

  Trajectory traj = start(scheme::ito_white, model, noise, options);
  const TimeGrid& grid = model.grid();
  const double dt = grid.dt();
  CVector psi = psi0.amplitudes();
  traj.states.push_back(psi0);
  traj.norms.push_back(1.0);
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const RVector a = real_expectations(ops.a, psi);
    CVector drift = ops.minus_ih * psi;
    CVector diffusion = CVector::Zero(psi.size());
    for (std::size_t i = 0; i < n; ++i) {
      const CVector ai = ops.a[i] * psi;
      diffusion += (sg * noise.increment(i, k)) * (xi * ai - xr * a(static_cast<Eigen::Index>(i)) * psi);
      for (std::size_t j = 0; j < n; ++j) {
        const double cij = c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (cij == 0.0) continue;
        const double ai_ = a(static_cast<Eigen::Index>(i));
        const double aj_ = a(static_cast<Eigen::Index>(j));
        const CVector term = xi2 * (ops.aa[i * n + j] * psi) - xi * xr * (aj_ * ai + ai_ * (ops.a[j] * psi)) +
                             (xr * xr * ai_ * aj_) * psi;
        drift -= (0.5 * g * cij) * term;
      }
    }
    psi += dt * drift + diffusion;
    const double n2 = checked_norm(psi, options.norm_floor, k + 1);
    psi /= std::sqrt(n2);
    traj.states.emplace_back(psi);
    traj.norms.push_back(n2);
  }
  return traj;
}

Trajectory evolve_stratonovich_white(const ModelSpec& model, const NoiseRealization& noise,
                                     const StateVector& psi0, const EvolveOptions& options) {
  if (!model.kernel().is_white()) throw InvalidArgument("evolve_stratonovich_white: kernel must be white");
  check_inputs(model, noise, psi0, true);
  const Operators ops(model);
  const RMatrix& c = model.kernel().strength();
  const double g = model.gamma();
  const double sg = std::sqrt(g);
  const Complex xi = model.xi();
  const double xr = model.xi_r();
  const std::size_t n = ops.n;
  auto rhs = [&](const CVector& psi, std::size_t, const RVector& w) {
    const RVector a = real_expectations(ops.a, psi);
    CVector out = ops.minus_ih * psi;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const CVector ai = ops.a[i] * psi;
      out += (sg * w(ii)) * (xi * ai - xr * a(ii) * psi);
      for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double cij = c(ii, jj);
        if (cij == 0.0) continue;
        const Complex aaij = detail::raw_expectation(ops.aa[i * n + j], psi);
        const CVector term = xi * (ops.aa[i * n + j] * psi) - xi * (a(jj) * ai + a(ii) * (ops.a[j] * psi)) +
                             (-xr * aaij.real() + 2.0 * xr * a(ii) * a(jj)) * psi;
        out -= (g * xr * cij) * term;
      }
    }
    return out;
  };
  return run_nonlinear(scheme::stratonovich_white, model, noise, psi0, options, rhs);
}

Trajectory evolve_linear_colored_commuting(const ModelSpec& model, const NoiseRealization& noise,
                                           const StateVector& phi0, const EvolveOptions& options) {
  if (!model.hamiltonian_commutes()) {
    throw InvalidArgument("evolve_linear_colored_commuting: H must vanish or commute with every A_i");
  }
  check_inputs(model, noise, phi0, false);
  const CommutingFamily& fam = model.family();
  const CMatrix& v = fam.basis();
  const RMatrix& lam = fam.eigenvalues();
  const std::size_t n = model.size();
  const auto d = static_cast<Eigen::Index>(model.dim());
  const double sg = std::sqrt(model.gamma());
  const Complex xi = model.xi();
  const double xr = model.xi_r();
  const CVector c0 = v.adjoint() * phi0.amplitudes();
  const Propagator prop(model.hamiltonian());
  const bool free = model.hamiltonian().is_zero();

  std::vector<std::vector<double>> integ(n);
  for (std::size_t i = 0; i < n; ++i) integ[i] = noise.integrated(i);

  Trajectory traj = start(scheme::linear_colored_commuting, model, noise, options);
  const TimeGrid& grid = model.grid();
  for (std::size_t k = 0; k < grid.knots(); ++k) {
    const double t = grid.time(k);
    const RMatrix gm = model.kernel().g_matrix(t);
    CVector z(d);
    for (Eigen::Index a = 0; a < d; ++a) {
      Complex lin = 0.0;
      double quad = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        lin += lam(ii, a) * integ[i][k];
        for (std::size_t j = 0; j < n; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          quad += lam(ii, a) * lam(jj, a) * gm(ii, jj);
        }
      }
      z(a) = sg * xi * lin - 2.0 * model.gamma() * xi * xr * quad;
    }
    // Scale out the largest exponent so that large excursions stay finite.
    double zmax = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < d; ++a)
      if (c0(a) != 0.0) zmax = std::max(zmax, z(a).real());
    CVector ca(d);
    for (Eigen::Index a = 0; a < d; ++a) ca(a) = c0(a) == 0.0 ? Complex(0.0) : c0(a) * std::exp(z(a) - zmax);
    CVector phi = v * ca;
    if (!free) phi = prop.at(t) * phi;
    const double scaled = phi.squaredNorm();
    if (!(scaled > 0.0) || !std::isfinite(scaled)) throw NumericalError("linear state vanished", k);
    traj.norms.push_back(scaled * std::exp(2.0 * zmax));
    traj.states.emplace_back(CVector(phi / std::sqrt(scaled)));
  }
  return traj;
}

Trajectory evolve_nonlinear_colored_commuting(const ModelSpec& model, const NoiseRealization& noise,
                                              const StateVector& psi0, const EvolveOptions& options) {
  if (!model.hamiltonian_commutes()) {
    throw InvalidArgument("evolve_nonlinear_colored_commuting: H must vanish or commute with every A_i");
  }
  check_inputs(model, noise, psi0, true);
  const Operators ops(model);
  const double g = model.gamma();
  const double sg = std::sqrt(g);
  const Complex xi = model.xi();
  const double xr = model.xi_r();
  const std::size_t n = ops.n;
  const TimeGrid& grid = model.grid();
  std::vector<RMatrix> f(grid.knots());
  for (std::size_t k = 0; k < grid.knots(); ++k) f[k] = model.kernel().f_matrix_from_right(grid.time(k));

  auto rhs = [&](const CVector& psi, std::size_t k, const RVector& w) {
    const RVector a = real_expectations(ops.a, psi);
    CVector out = ops.minus_ih * psi;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      out += (sg * w(ii)) * (xi * (ops.a[i] * psi) - xr * a(ii) * psi);
      for (std::size_t j = 0; j < n; ++j) {
        const double fij = f[k](ii, static_cast<Eigen::Index>(j));
        if (fij == 0.0) continue;
        const double aaij = detail::raw_expectation(ops.aa[i * n + j], psi).real();
        out -= (2.0 * g * xr * fij) * (xi * (ops.aa[i * n + j] * psi) - xr * aaij * psi);
      }
    }
    return out;
  };
  Trajectory traj = run_nonlinear(scheme::nonlinear_colored_commuting, model, noise, psi0, options, rhs);

  if (options.track_weights) {
    // d ln<phi|phi>/dt = 2 sqrt(g) xi_R sum <A_i> w_i - 4 g xi_R^2 sum <A_i A_j> F_ij
    auto rate = [&](std::size_t k) {
      const CVector& psi = traj.states[k].amplitudes();
      const RVector a = real_expectations(ops.a, psi);
      double r = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const std::size_t kw = noise.white() ? std::min(k, grid.steps() - 1) : k;
        r += 2.0 * sg * xr * a(ii) * noise.value(i, kw);
        for (std::size_t j = 0; j < n; ++j)
          r -= 4.0 * g * xr * xr * detail::raw_expectation(ops.aa[i * n + j], psi).real() *
               f[k](ii, static_cast<Eigen::Index>(j));
      }
      return r;
    };
    traj.log_weights.assign(grid.knots(), 0.0);
    double prev = rate(0);
    for (std::size_t k = 1; k < grid.knots(); ++k) {
      const double cur = rate(k);
      traj.log_weights[k] = traj.log_weights[k - 1] + 0.5 * grid.dt() * (prev + cur);
      prev = cur;
    }
  }
  return traj;
}

Trajectory evolve_linear_memory_kernel(const ModelSpec& model, const NoiseRealization& noise,
                                       const StateVector& phi0, const MemoryTable* memory,
                                       const EvolveOptions& options) {
  check_inputs(model, noise, phi0, false);
  std::optional<MemoryTable> own;
  if (memory == nullptr) memory = &own.emplace(MemoryTable::on_grid(model, 1, options.memory));
  const TimeGrid& grid = model.grid();
  if (memory->count() < grid.knots() || std::abs(memory->spacing() - grid.dt()) > 1e-12 * grid.dt()) {
    throw InvalidArgument("evolve_linear_memory_kernel: memory table does not match the grid");
  }
  const Operators ops(model);
  const std::size_t n = ops.n;
  const double sg = std::sqrt(model.gamma());
  const Complex xi = model.xi();
  const Complex coupling = -2.0 * model.gamma() * xi * model.xi_r();
  std::vector<CMatrix> gen(grid.knots(), ops.minus_ih);
  for (std::size_t k = 0; k < grid.knots(); ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) gen[k] += coupling * (ops.a[i] * memory->at(k, i, j));

  auto rhs = [&](const CVector& phi, std::size_t k, const RVector& w) {
    CVector out = gen[k] * phi;
    for (std::size_t i = 0; i < n; ++i) out += (sg * xi * w(static_cast<Eigen::Index>(i))) * (ops.a[i] * phi);
    return out;
  };

  Trajectory traj = start(scheme::linear_memory_kernel, model, noise, options);
  const double dt = grid.dt();
  const bool white = noise.white();
  CVector phi = phi0.amplitudes();
  double log_norm = std::log(checked_norm(phi, options.norm_floor, 0));
  phi /= std::sqrt(phi.squaredNorm());
  traj.states.emplace_back(phi);
  traj.norms.push_back(std::exp(log_norm));
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const RVector w0 = noise.column(k);
    const RVector w1 = white ? w0 : noise.column(k + 1);
    const CVector f0 = rhs(phi, k, w0);
    const CVector f1 = rhs(phi + dt * f0, k + 1, w1);
    phi += 0.5 * dt * (f0 + f1);
    const double n2 = checked_norm(phi, options.norm_floor, k + 1);
    log_norm += std::log(n2);
    phi /= std::sqrt(n2);
    traj.states.emplace_back(phi);
    traj.norms.push_back(std::exp(log_norm));
  }
  return traj;
}

Trajectory evolve_nonlinear_secIII(const ModelSpec& model, const NoiseRealization& noise,
                                   const StateVector& psi0, const MemoryTable* memory,
                                   const EvolveOptions& options) {
  check_inputs(model, noise, psi0, true);
  std::optional<MemoryTable> own;
  if (memory == nullptr) memory = &own.emplace(MemoryTable::on_grid(model, 1, options.memory));
  const TimeGrid& grid = model.grid();
  if (memory->count() < grid.knots() || std::abs(memory->spacing() - grid.dt()) > 1e-12 * grid.dt()) {
    throw InvalidArgument("evolve_nonlinear_secIII: memory table does not match the grid");
  }
  const Operators ops(model);
  const std::size_t n = ops.n;
  const double g = model.gamma();
  const double sg = std::sqrt(g);
  const Complex xi = model.xi();
  const double xr = model.xi_r();
  const double xim = model.xi_i();
  const Complex mixed = kI * xim * xr;

  // Path-independent pieces of S[F_ij] = [A_i, M_ij] and {A_i, M_ij}.
  std::vector<CMatrix> comm(grid.knots()), anti_part(grid.knots());
  for (std::size_t k = 0; k < grid.knots(); ++k) {
    comm[k] = CMatrix::Zero(ops.minus_ih.rows(), ops.minus_ih.cols());
    anti_part[k] = comm[k];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const CMatrix& m = memory->at(k, i, j);
        comm[k] += ops.a[i] * m - m * ops.a[i];
        anti_part[k] += ops.a[i] * m + m * ops.a[i];
      }
    }
  }

  auto rhs = [&](const CVector& psi, std::size_t k, const RVector& w) {
    const RVector a = real_expectations(ops.a, psi);
    // S[C] = {A_i, M_ij} - 2 A_i <M_ij> - 2 <A_i> M_ij, summed over i, j.
    CMatrix sc = anti_part[k];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const CMatrix& m = memory->at(k, i, j);
        const double mij = detail::raw_expectation(m, psi).real();
        sc -= 2.0 * mij * ops.a[i] + 2.0 * a(static_cast<Eigen::Index>(i)) * m;
      }
    }
    const CMatrix b_sa = -(xr * xr * sc + mixed * comm[k]);
    const CMatrix b_asa = -(xr * xr * comm[k] + mixed * sc);
    const double mean_b = detail::raw_expectation(b_sa, psi).real();
    CVector out = ops.minus_ih * psi + g * (b_sa * psi - mean_b * psi) + g * (b_asa * psi);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      out += (sg * w(ii)) * (xi * (ops.a[i] * psi) - xr * a(ii) * psi);
    }
    return out;
  };
  return run_nonlinear(scheme::nonlinear_secIII, model, noise, psi0, options, rhs, true);
}

Trajectory evolve(const std::string& name, const ModelSpec& model, const NoiseRealization& noise,
                  const StateVector& psi0, const MemoryTable* memory, const EvolveOptions& options) {
  if (name == scheme::ito_white) return evolve_ito_white(model, noise, psi0, options);
  if (name == scheme::stratonovich_white) return evolve_stratonovich_white(model, noise, psi0, options);
  if (name == scheme::linear_colored_commuting) return evolve_linear_colored_commuting(model, noise, psi0, options);
  if (name == scheme::nonlinear_colored_commuting)
    return evolve_nonlinear_colored_commuting(model, noise, psi0, options);
  if (name == scheme::linear_memory_kernel) return evolve_linear_memory_kernel(model, noise, psi0, memory, options);
  if (name == scheme::nonlinear_secIII) return evolve_nonlinear_secIII(model, noise, psi0, memory, options);
  if (name == scheme::perturbative_order_gamma)
    return evolve_perturbative_order_gamma(model, noise, psi0, memory, options).trajectory;
  throw InvalidArgument("unknown trajectory scheme '" + name + "'");
}

}  // namespace collapse

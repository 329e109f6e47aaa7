#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Eigenvalues>

#include "collapse/dynamics.hpp"
#include "collapse/errors.hpp"

namespace collapse {

namespace {

using Generator = std::function<CMatrix(std::size_t, const CMatrix&)>;

// Classical RK4 with generator evaluated on the half-step lattice q = 0..2M.
DensitySeries run_rk4(const char* name, const ModelSpec& model, const DensityMatrix& rho0,
                      const MasterOptions& options, const Generator& gen) {
  if (rho0.dim() != model.dim()) throw InvalidArgument("initial density matrix dimension does not match the model");
  const TimeGrid& grid = model.grid();
  const double dt = grid.dt();
  DensitySeries out;
  out.scheme = name;
  out.grid = grid;
  out.rho.reserve(grid.knots());
  CMatrix rho = rho0.matrix();
  out.rho.push_back(rho);
  const Complex tr0 = rho.trace();
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const CMatrix k1 = gen(2 * k, rho);
    const CMatrix k2 = gen(2 * k + 1, rho + 0.5 * dt * k1);
    const CMatrix k3 = gen(2 * k + 1, rho + 0.5 * dt * k2);
    const CMatrix k4 = gen(2 * k + 2, rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    if (!rho.allFinite()) throw NumericalError(std::string(name) + ": non-finite density matrix", k + 1);
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(rho, Eigen::EigenvaluesOnly);
    const double lowest = solver.eigenvalues().minCoeff();
    out.min_eigenvalue = std::min(out.min_eigenvalue, lowest);
    out.max_trace_error = std::max(out.max_trace_error, std::abs(rho.trace() - tr0));
    if (lowest < options.positivity_floor) {
      throw NumericalError(std::string(name) + ": positivity violated (eigenvalue " + std::to_string(lowest) + ")",
                           k + 1);
    }
    out.rho.push_back(rho);
  }
  return out;
}

std::vector<CMatrix> family_ops(const ModelSpec& model) {
  std::vector<CMatrix> a;
  for (const auto& op : model.family().operators()) a.push_back(op.matrix());
  return a;
}

// sum_ij coeff_ij (A_i rho A_j + A_j rho A_i - A_i A_j rho - rho A_j A_i)
CMatrix dissipator(const std::vector<CMatrix>& a, const RMatrix& coeff, const CMatrix& rho) {
  CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double cij = coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (cij == 0.0) continue;
      const CMatrix ar = a[i] * rho;
      const CMatrix ra = rho * a[i];
      out += cij * (ar * a[j] + a[j] * ra - a[i] * (a[j] * rho) - (rho * a[j]) * a[i]);
    }
  }
  return out;
}

DensitySeries colored_generator_run(const char* name, const ModelSpec& model, const DensityMatrix& rho0,
                                    const MasterOptions& options) {
  const std::vector<CMatrix> a = family_ops(model);
  const CMatrix minus_ih = -kI * model.hamiltonian().matrix();
  const double rate = model.gamma() * std::norm(model.xi());
  const TimeGrid& grid = model.grid();
  std::vector<RMatrix> f(2 * grid.steps() + 1);
  for (std::size_t q = 0; q < f.size(); ++q) f[q] = model.kernel().f_matrix_from_right(0.5 * grid.dt() * static_cast<double>(q));
  auto gen = [&](std::size_t q, const CMatrix& rho) -> CMatrix {
    return minus_ih * rho + rho * minus_ih.adjoint() + rate * dissipator(a, f[q], rho);
  };
  return run_rk4(name, model, rho0, options, gen);
}

}  // namespace

DensitySeries evolve_master_white(const ModelSpec& model, const DensityMatrix& rho0, const MasterOptions& options) {
  if (!model.kernel().is_white()) throw InvalidArgument("evolve_master_white: kernel must be white");
  const std::vector<CMatrix> a = family_ops(model);
  const CMatrix minus_ih = -kI * model.hamiltonian().matrix();
  const RMatrix half_c = 0.5 * model.kernel().strength();
  const double rate = model.gamma() * std::norm(model.xi());
  auto gen = [&](std::size_t, const CMatrix& rho) -> CMatrix {
    return minus_ih * rho + rho * minus_ih.adjoint() + rate * dissipator(a, half_c, rho);
  };
  return run_rk4(scheme::master_white, model, rho0, options, gen);
}

DensitySeries evolve_master_colored_commuting(const ModelSpec& model, const DensityMatrix& rho0,
                                              const MasterOptions& options) {
  if (!model.hamiltonian_commutes()) {
    throw InvalidArgument("evolve_master_colored_commuting: H must vanish or commute with every A_i");
  }
  return colored_generator_run(scheme::master_colored_commuting, model, rho0, options);
}

DensitySeries evolve_master_markov_limit(const ModelSpec& model, const DensityMatrix& rho0,
                                         const MasterOptions& options) {
  DensitySeries out = colored_generator_run(scheme::master_markov_limit, model, rho0, options);
  out.lindblad = markov_lindblad_verdict(model, model.grid().t_end());
  return out;
}

DensitySeries evolve_master_order_gamma(const ModelSpec& model, const DensityMatrix& rho0,
                                        const MasterOptions& options) {
  const std::vector<CMatrix> a = family_ops(model);
  const CMatrix minus_ih = -kI * model.hamiltonian().matrix();
  const double rate = model.gamma() * std::norm(model.xi());
  const MemoryTable memory = MemoryTable::on_grid(model, 2, options.memory);
  const std::size_t n = model.size();
  auto gen = [&](std::size_t q, const CMatrix& rho) -> CMatrix {
    CMatrix out = minus_ih * rho + rho * minus_ih.adjoint();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const CMatrix& m = memory.at(q, i, j);
        out += rate * (a[i] * rho * m + m * rho * a[i] - a[i] * (m * rho) - (rho * m) * a[i]);
      }
    }
    return out;
  };
  return run_rk4(scheme::master_order_gamma, model, rho0, options, gen);
}

DensitySeries evolve_master(const std::string& name, const ModelSpec& model, const DensityMatrix& rho0,
                            const MasterOptions& options) {
  if (name == scheme::master_white) return evolve_master_white(model, rho0, options);
  if (name == scheme::master_colored_commuting) return evolve_master_colored_commuting(model, rho0, options);
  if (name == scheme::master_order_gamma) return evolve_master_order_gamma(model, rho0, options);
  if (name == scheme::master_markov_limit) return evolve_master_markov_limit(model, rho0, options);
  if (name == scheme::linear_hierarchy) {
    HierarchyOptions h;
    h.memory = options.memory;
    return exact_linear_average(model, rho0, h);
  }
  throw InvalidArgument("unknown master scheme '" + name + "'");
}

LindbladVerdict markov_lindblad_verdict(const ModelSpec& model, double t) {
  LindbladVerdict v;
  const RMatrix f = model.kernel().f_matrix_from_right(t);
  v.coefficients = 2.0 * model.gamma() * std::norm(model.xi()) * f;
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(v.coefficients, Eigen::EigenvaluesOnly);
  v.eigenvalues = solver.eigenvalues();
  const double scale = std::max(1.0, v.coefficients.cwiseAbs().maxCoeff());
  v.lindblad_form = v.eigenvalues.minCoeff() >= -1e-12 * scale;
  return v;
}

}  // namespace collapse

#include <cmath>
#include <optional>
#include <sstream>

#include "collapse/dynamics.hpp"
#include "collapse/errors.hpp"

namespace collapse {

PerturbativeResult evolve_perturbative_order_gamma(const ModelSpec& model, const NoiseRealization& noise,
                                                   const StateVector& phi0, const MemoryTable* memory,
                                                   const EvolveOptions& options) {
  if (phi0.dim() != model.dim()) throw InvalidArgument("initial state dimension does not match the model");
  if (noise.size() != model.size() || !(noise.grid() == model.grid())) {
    throw InvalidArgument("noise does not match the model");
  }
  std::optional<MemoryTable> own;
  if (memory == nullptr) memory = &own.emplace(MemoryTable::on_grid(model, 1, options.memory));
  const TimeGrid& grid = model.grid();
  const std::size_t n = model.size();
  const Complex xi = model.xi();
  const double xr = model.xi_r();
  const double g = model.gamma();
  const Propagator prop(model.hamiltonian());

  PerturbativeResult out;
  Trajectory& traj = out.trajectory;
  traj.scheme = scheme::perturbative_order_gamma;
  traj.grid = grid;
  if (options.keep_noise) traj.noise = std::make_shared<const NoiseRealization>(noise);

  const CVector p0 = phi0.amplitudes();
  const auto d = p0.size();
  // Interaction-picture right-hand sides at knot k.
  std::vector<CMatrix> u(grid.knots());
  for (std::size_t k = 0; k < grid.knots(); ++k) u[k] = prop.at(grid.time(k));
  auto a_int = [&](std::size_t k, std::size_t i) -> CMatrix {
    return u[k].adjoint() * model.family().op(i).matrix() * u[k];
  };
  auto driven = [&](std::size_t k, const CVector& v) {
    CVector acc = CVector::Zero(d);
    const std::size_t kw = noise.white() ? std::min(k, grid.steps() - 1) : k;
    for (std::size_t i = 0; i < n; ++i) acc += (xi * noise.value(i, kw)) * (a_int(k, i) * v);
    return acc;
  };
  auto memory_term = [&](std::size_t k) {
    CVector acc = CVector::Zero(d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        acc += u[k].adjoint() * (model.family().op(i).matrix() * (memory->at(k, i, j) * (u[k] * p0)));
    return CVector(-2.0 * xr * xi * acc);
  };

  const double dt = grid.dt();
  out.order0.assign(grid.knots(), p0);
  out.order1.assign(grid.knots(), CVector::Zero(d));
  out.order2.assign(grid.knots(), CVector::Zero(d));
  CVector r1_prev = driven(0, p0);
  CVector r2_prev = memory_term(0);  // phi_1(0) = 0
  const double norm0 = p0.norm();
  for (std::size_t k = 1; k < grid.knots(); ++k) {
    const CVector r1 = driven(k, p0);
    out.order1[k] = out.order1[k - 1] + 0.5 * dt * (r1_prev + r1);
    const CVector r2 = driven(k, out.order1[k]) + memory_term(k);
    out.order2[k] = out.order2[k - 1] + 0.5 * dt * (r2_prev + r2);
    r1_prev = r1;
    r2_prev = r2;
    out.max_ratio = std::max(out.max_ratio, g * out.order2[k].norm() / norm0);
  }
  if (out.max_ratio > options.perturbative_fail) {
    std::ostringstream msg;
    msg << "order-gamma expansion invalid: ||gamma phi_2||/||phi_0|| = " << out.max_ratio;
    throw NumericalError(msg.str());
  }
  if (out.max_ratio > options.perturbative_warn) {
    std::ostringstream msg;
    msg << "order-gamma expansion questionable: ||gamma phi_2||/||phi_0|| = " << out.max_ratio;
    traj.warnings.push_back(msg.str());
  }

  const double sg = std::sqrt(g);
  for (std::size_t k = 0; k < grid.knots(); ++k) {
    const CVector phi = u[k] * (out.order0[k] + sg * out.order1[k] + g * out.order2[k]);
    const double n2 = phi.squaredNorm();
    if (!(n2 > options.norm_floor) || !std::isfinite(n2)) throw NumericalError("perturbative state vanished", k);
    traj.norms.push_back(n2);
    traj.states.emplace_back(CVector(phi / std::sqrt(n2)));
  }
  return out;
}

}  // namespace collapse

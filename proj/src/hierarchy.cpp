#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "collapse/dynamics.hpp"
#include "collapse/errors.hpp"

namespace collapse {

namespace {

// Multi-indices n over `modes` with |n| <= depth, plus neighbour links.
struct IndexSet {
  std::vector<std::vector<std::size_t>> index;
  std::vector<std::vector<long>> up, down;  // -1 when absent

  IndexSet(std::size_t modes, std::size_t depth) {
    std::map<std::vector<std::size_t>, std::size_t> position;
    std::vector<std::size_t> cur(modes, 0);
    std::function<void(std::size_t, std::size_t)> build = [&](std::size_t m, std::size_t left) {
      if (m == modes) {
        position[cur] = index.size();
        index.push_back(cur);
        return;
      }
      for (std::size_t v = 0; v <= left; ++v) {
        cur[m] = v;
        build(m + 1, left - v);
      }
      cur[m] = 0;
    };
    build(0, depth);
    up.assign(index.size(), std::vector<long>(modes, -1));
    down.assign(index.size(), std::vector<long>(modes, -1));
    for (std::size_t p = 0; p < index.size(); ++p) {
      for (std::size_t k = 0; k < modes; ++k) {
        auto n = index[p];
        n[k] += 1;
        if (auto it = position.find(n); it != position.end()) up[p][k] = static_cast<long>(it->second);
        if (index[p][k] > 0) {
          n[k] -= 2;
          down[p][k] = static_cast<long>(position.at(n));
        }
      }
    }
  }
};

}  // namespace

DensitySeries exact_linear_average(const ModelSpec& model, const DensityMatrix& rho0,
                                   const HierarchyOptions& options) {
  if (model.kernel().kind() != KernelKind::exponential) {
    throw InvalidArgument("exact_linear_average: requires an exponential kernel");
  }
  if (rho0.dim() != model.dim()) throw InvalidArgument("initial density matrix dimension does not match the model");
  const std::size_t n = model.size();
  const double lambda = model.kernel().rate();
  const double sigma = std::sqrt(0.5 * lambda);
  const Complex xi = model.xi();
  const double sg = std::sqrt(model.gamma());
  const TimeGrid& grid = model.grid();
  const auto d = static_cast<Eigen::Index>(model.dim());

  Eigen::SelfAdjointEigenSolver<RMatrix> csolve(model.kernel().strength());
  const RMatrix mix = csolve.eigenvectors() * csolve.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                      csolve.eigenvectors().transpose();
  std::vector<CMatrix> a;
  for (const auto& op : model.family().operators()) a.push_back(op.matrix());
  // Mode couplings B_k = sqrt(g) sum_i mix_ik A_i.
  std::vector<CMatrix> b(n, CMatrix::Zero(d, d));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      b[k] += sg * mix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * a[i];

  const MemoryTable memory = MemoryTable::on_grid(model, 2, options.memory);
  const Complex coupling = -2.0 * model.gamma() * xi * model.xi_r();
  std::vector<CMatrix> kop(memory.count(), -kI * model.hamiltonian().matrix());
  for (std::size_t q = 0; q < memory.count(); ++q)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) kop[q] += coupling * (a[i] * memory.at(q, i, j));

  const IndexSet set(n, options.depth);
  const std::size_t aux = set.index.size();
  using State = std::vector<CMatrix>;

  auto gen = [&](std::size_t q, const State& s) {
    State out(aux);
    for (std::size_t p = 0; p < aux; ++p) {
      std::size_t level = 0;
      for (std::size_t v : set.index[p]) level += v;
      CMatrix r = kop[q] * s[p] + s[p] * kop[q].adjoint() - (static_cast<double>(level) * lambda) * s[p];
      for (std::size_t k = 0; k < n; ++k) {
        CMatrix mixed = CMatrix::Zero(d, d);
        if (set.up[p][k] >= 0)
          mixed += std::sqrt(static_cast<double>(set.index[p][k] + 1)) * s[static_cast<std::size_t>(set.up[p][k])];
        if (set.down[p][k] >= 0)
          mixed += std::sqrt(static_cast<double>(set.index[p][k])) * s[static_cast<std::size_t>(set.down[p][k])];
        r += sigma * (xi * (b[k] * mixed) + std::conj(xi) * (mixed * b[k]));
      }
      out[p] = std::move(r);
    }
    return out;
  };
  auto axpy = [&](const State& x, double h, const State& y) {
    State out(aux);
    for (std::size_t p = 0; p < aux; ++p) out[p] = x[p] + h * y[p];
    return out;
  };

  State s(aux, CMatrix::Zero(d, d));
  s[0] = rho0.matrix();
  DensitySeries out;
  out.scheme = scheme::linear_hierarchy;
  out.grid = grid;
  out.rho.push_back(s[0]);
  const double dt = grid.dt();
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const State k1 = gen(2 * k, s);
    const State k2 = gen(2 * k + 1, axpy(s, 0.5 * dt, k1));
    const State k3 = gen(2 * k + 1, axpy(s, 0.5 * dt, k2));
    const State k4 = gen(2 * k + 2, axpy(s, dt, k3));
    for (std::size_t p = 0; p < aux; ++p) s[p] += (dt / 6.0) * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
    if (!s[0].allFinite()) throw NumericalError("exact_linear_average: non-finite state", k + 1);
    const CMatrix rho = 0.5 * (s[0] + s[0].adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(rho, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = std::min(out.min_eigenvalue, solver.eigenvalues().minCoeff() / rho.trace().real());
    out.max_trace_error = std::max(out.max_trace_error, std::abs(rho.trace() - rho0.matrix().trace()));
    out.rho.push_back(rho);
  }
  return out;
}

}  // namespace collapse

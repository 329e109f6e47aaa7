#include "collapse/memory.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

std::vector<std::vector<CMatrix>> white_table(const ModelSpec& model, std::size_t count) {
  const std::size_t n = model.size();
  const RMatrix& c = model.kernel().strength();
  std::vector<CMatrix> row(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      row[i * n + j] = 0.5 * c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                       model.family().op(j).matrix();
  return std::vector<std::vector<CMatrix>>(count, row);
}

std::vector<std::vector<CMatrix>> exact_table(const ModelSpec& model, double spacing, std::size_t count) {
  const std::size_t n = model.size();
  const auto d = static_cast<Eigen::Index>(model.dim());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(model.hamiltonian().matrix());
  const CMatrix& w = solver.eigenvectors();
  const RVector& e = solver.eigenvalues();

  std::vector<CMatrix> rotated(n);
  for (std::size_t j = 0; j < n; ++j) rotated[j] = w.adjoint() * model.family().op(j).matrix() * w;

  // Distinct Bohr frequencies E_m - E_n.
  std::vector<double> freqs;
  Eigen::MatrixXi index(d, d);
  const double scale = std::max(1.0, e.cwiseAbs().maxCoeff());
  for (Eigen::Index m = 0; m < d; ++m) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double omega = e(m) - e(k);
      auto it = std::find_if(freqs.begin(), freqs.end(),
                             [&](double f) { return std::abs(f - omega) <= 1e-12 * scale; });
      if (it == freqs.end()) {
        index(m, k) = static_cast<int>(freqs.size());
        freqs.push_back(omega);
      } else {
        index(m, k) = static_cast<int>(it - freqs.begin());
      }
    }
  }

  std::vector<std::vector<CMatrix>> table(count, std::vector<CMatrix>(n * n));
  std::vector<CMatrix> transforms(freqs.size());
  for (std::size_t q = 0; q < count; ++q) {
    const double t = spacing * static_cast<double>(q);
    for (std::size_t f = 0; f < freqs.size(); ++f) transforms[f] = model.kernel().transform(t, freqs[f]);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        CMatrix x(d, d);
        for (Eigen::Index m = 0; m < d; ++m)
          for (Eigen::Index k = 0; k < d; ++k)
            x(m, k) = rotated[j](m, k) *
                      transforms[static_cast<std::size_t>(index(m, k))](static_cast<Eigen::Index>(i),
                                                                         static_cast<Eigen::Index>(j));
        CMatrix mem = w * x * w.adjoint();
        table[q][i * n + j] = 0.5 * (mem + mem.adjoint());
      }
    }
  }
  return table;
}

std::vector<std::vector<CMatrix>> lattice_table(const ModelSpec& model, double spacing, std::size_t count,
                                                const MemoryOptions& options) {
  const std::size_t n = model.size();
  const auto d = static_cast<Eigen::Index>(model.dim());
  if (options.max_history > 0 && count > options.max_history + 1) {
    throw NumericalError("memory history buffer exhausted: " + std::to_string(count - 1) +
                             " lags requested, cap is " + std::to_string(options.max_history),
                         options.max_history);
  }
  const CMatrix step = Propagator(model.hamiltonian()).at(spacing);

  // A_j(-l h) = U(l h) A_j U(l h)^dagger and D(l h) on the lag lattice.
  std::vector<std::vector<CMatrix>> shifted(count, std::vector<CMatrix>(n));
  std::vector<RMatrix> lags(count);
  for (std::size_t j = 0; j < n; ++j) shifted[0][j] = model.family().op(j).matrix();
  for (std::size_t l = 0; l < count; ++l) {
    if (l > 0)
      for (std::size_t j = 0; j < n; ++j) shifted[l][j] = step * shifted[l - 1][j] * step.adjoint();
    lags[l] = model.kernel().value(spacing * static_cast<double>(l));
    if (!lags[l].allFinite()) throw NumericalError("memory kernel: non-finite kernel value", l);
  }
  const double d0 = lags[0].cwiseAbs().maxCoeff();
  std::vector<bool> keep(count, true);
  if (options.truncate_kernel)
    for (std::size_t l = 0; l < count; ++l) keep[l] = lags[l].cwiseAbs().maxCoeff() >= 1e-10 * d0;

  std::vector<std::vector<CMatrix>> table(count, std::vector<CMatrix>(n * n, CMatrix::Zero(d, d)));
  for (std::size_t q = 1; q < count; ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        CMatrix acc = CMatrix::Zero(d, d);
        for (std::size_t l = 0; l <= q; ++l) {
          if (!keep[l]) continue;
          const double weight = (l == 0 || l == q) ? 0.5 : 1.0;
          acc += (weight * lags[l](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) * shifted[l][j];
        }
        table[q][i * n + j] = spacing * acc;
      }
    }
  }
  return table;
}

}  // namespace

MemoryTable::MemoryTable(const ModelSpec& model, double spacing, std::size_t count, MemoryOptions options)
    : n_(model.size()), spacing_(spacing) {
  if (!(spacing > 0.0) || count == 0) throw InvalidArgument("MemoryTable: need positive spacing and count");
  if (model.kernel().is_white()) {
    table_ = white_table(model, count);
  } else if (options.method == MemoryMethod::exact) {
    table_ = exact_table(model, spacing, count);
  } else {
    table_ = lattice_table(model, spacing, count, options);
  }
}

MemoryTable MemoryTable::on_grid(const ModelSpec& model, std::size_t subdivisions, MemoryOptions options) {
  if (subdivisions == 0) throw InvalidArgument("MemoryTable: subdivisions must be positive");
  const TimeGrid& g = model.grid();
  return MemoryTable(model, g.dt() / static_cast<double>(subdivisions), g.steps() * subdivisions + 1, options);
}

}  // namespace collapse

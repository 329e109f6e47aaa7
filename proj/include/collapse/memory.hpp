#pragma once

#include <cstddef>
#include <vector>

#include "collapse/model.hpp"

namespace collapse {

enum class MemoryMethod {
  exact,    // closed-form time integral in the Hamiltonian eigenbasis
  lattice,  // trapezoid over cached A_j(-l h), l = 0..k
};

struct MemoryOptions {
  MemoryMethod method = MemoryMethod::exact;
  /// Lattice only: history length cap (0 = unlimited).
  std::size_t max_history = 0;
  /// Lattice only: drop lags with max|D(tau)| < 1e-10 max|D(0)|.
  bool truncate_kernel = false;
};

/// Memory operators M_ij(t) = int_0^t ds D_ij(t, s) A_j(s - t), tabulated on
/// the lattice t_q = q * spacing, q = 0..count-1. For white noise
/// M_ij = (c_ij / 2) A_j at every t.
class MemoryTable {
 public:
  MemoryTable(const ModelSpec& model, double spacing, std::size_t count, MemoryOptions options = {});
  /// Table on the model grid refined by `subdivisions` points per step.
  static MemoryTable on_grid(const ModelSpec& model, std::size_t subdivisions = 1,
                             MemoryOptions options = {});

  std::size_t size() const { return n_; }
  std::size_t count() const { return table_.size(); }
  double spacing() const { return spacing_; }
  const CMatrix& at(std::size_t q, std::size_t i, std::size_t j) const { return table_.at(q)[i * n_ + j]; }

 private:
  std::size_t n_;
  double spacing_;
  std::vector<std::vector<CMatrix>> table_;
};

}  // namespace collapse

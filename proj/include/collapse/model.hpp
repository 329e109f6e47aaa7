#pragma once

#include <cstddef>

#include "collapse/linalg.hpp"
#include "collapse/noise.hpp"

namespace collapse {

/// Complete simulation problem: Hamiltonian, collapse operators, coupling,
/// complex noise factor, noise kernel and time grid.
class ModelSpec {
 public:
  ModelSpec(HermitianOperator hamiltonian, CommutingFamily family, double gamma, Complex xi,
            CorrelationKernel kernel, TimeGrid grid);

  std::size_t dim() const { return h_.dim(); }
  std::size_t size() const { return family_.size(); }
  const HermitianOperator& hamiltonian() const { return h_; }
  const CommutingFamily& family() const { return family_; }
  double gamma() const { return gamma_; }
  Complex xi() const { return xi_; }
  double xi_r() const { return xi_.real(); }
  double xi_i() const { return xi_.imag(); }
  const CorrelationKernel& kernel() const { return kernel_; }
  const TimeGrid& grid() const { return grid_; }

  /// [H, A_i] = 0 for every i (true when H = 0).
  bool hamiltonian_commutes(double tol = 1e-10) const;

  ModelSpec with_gamma(double gamma) const;
  ModelSpec with_xi(Complex xi) const;
  ModelSpec with_kernel(CorrelationKernel kernel) const;
  ModelSpec with_grid(TimeGrid grid) const;
  ModelSpec with_hamiltonian(HermitianOperator h) const;

 private:
  HermitianOperator h_;
  CommutingFamily family_;
  double gamma_;
  Complex xi_;
  CorrelationKernel kernel_;
  TimeGrid grid_;
};

}  // namespace collapse

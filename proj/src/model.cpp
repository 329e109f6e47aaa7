#include "collapse/model.hpp"

#include <cmath>

#include "collapse/errors.hpp"

namespace collapse {

ModelSpec::ModelSpec(HermitianOperator hamiltonian, CommutingFamily family, double gamma, Complex xi,
                     CorrelationKernel kernel, TimeGrid grid)
    : h_(std::move(hamiltonian)),
      family_(std::move(family)),
      gamma_(gamma),
      xi_(xi),
      kernel_(std::move(kernel)),
      grid_(grid) {
  if (!(gamma_ >= 0.0) || !std::isfinite(gamma_)) throw InvalidArgument("ModelSpec: gamma must be >= 0");
  if (!std::isfinite(xi_.real()) || !std::isfinite(xi_.imag())) throw InvalidArgument("ModelSpec: xi must be finite");
  if (family_.size() == 0) throw InvalidArgument("ModelSpec: empty collapse family");
  if (family_.dim() != h_.dim()) throw InvalidArgument("ModelSpec: family and Hamiltonian dimensions differ");
  if (kernel_.size() != family_.size()) {
    throw InvalidArgument("ModelSpec: kernel has " + std::to_string(kernel_.size()) + " noises but the family has " +
                          std::to_string(family_.size()) + " operators");
  }
}

bool ModelSpec::hamiltonian_commutes(double tol) const {
  if (h_.is_zero()) return true;
  for (const auto& a : family_.operators()) {
    if (!h_.commutes_with(a, tol)) return false;
  }
  return true;
}

ModelSpec ModelSpec::with_gamma(double gamma) const {
  return ModelSpec(h_, family_, gamma, xi_, kernel_, grid_);
}
ModelSpec ModelSpec::with_xi(Complex xi) const {
  return ModelSpec(h_, family_, gamma_, xi, kernel_, grid_);
}
ModelSpec ModelSpec::with_kernel(CorrelationKernel kernel) const {
  return ModelSpec(h_, family_, gamma_, xi_, std::move(kernel), grid_);
}
ModelSpec ModelSpec::with_grid(TimeGrid grid) const {
  return ModelSpec(h_, family_, gamma_, xi_, kernel_, grid);
}
ModelSpec ModelSpec::with_hamiltonian(HermitianOperator h) const {
  return ModelSpec(std::move(h), family_, gamma_, xi_, kernel_, grid_);
}

}  // namespace collapse

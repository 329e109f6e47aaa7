#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace collapse {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

/// Pure state |psi> of a d-level system. Not necessarily normalized: the
/// linear unravelings carry the squared norm as the change-of-measure weight.
class StateVector {
 public:
  StateVector() = default;
  explicit StateVector(CVector amplitudes);

  static StateVector basis(std::size_t dim, std::size_t k);
  static StateVector from_real(std::span<const double> amplitudes);

  std::size_t dim() const { return static_cast<std::size_t>(amps_.size()); }
  const CVector& amplitudes() const { return amps_; }
  Complex operator[](std::size_t k) const { return amps_(static_cast<Eigen::Index>(k)); }

  double norm_squared() const { return amps_.squaredNorm(); }
  bool is_normalized(double tol = 1e-12) const;
  StateVector normalized() const;

 private:
  CVector amps_;
};

class HermitianOperator {
 public:
  HermitianOperator() = default;
  /// Throws InvalidArgument if `matrix` is not square or deviates from its
  /// adjoint by more than tol * max(1, max|m_ij|).
  explicit HermitianOperator(CMatrix matrix, double tol = 1e-12);

  static HermitianOperator identity(std::size_t dim);
  static HermitianOperator zero(std::size_t dim);
  static HermitianOperator diagonal(std::span<const double> entries);
  static HermitianOperator pauli_x();
  static HermitianOperator pauli_y();
  static HermitianOperator pauli_z();

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const CMatrix& matrix() const { return m_; }

  bool is_zero(double tol = 0.0) const;
  bool commutes_with(const HermitianOperator& other, double tol = 1e-10) const;

 private:
  CMatrix m_;
};

/// N mutually commuting Hermitian operators A_i = V diag(Lambda_i) V^dagger
/// sharing the unitary eigenbasis V. Commutativity holds by construction.
class CommutingFamily {
 public:
  CommutingFamily() = default;
  /// `eigenvalues` is N x d; row i holds the spectrum of A_i in the column
  /// order of `basis`.
  CommutingFamily(CMatrix basis, RMatrix eigenvalues);

  static CommutingFamily diagonal(RMatrix eigenvalues);
  /// Extracts a joint eigenbasis from user matrices. The matrices must
  /// commute pairwise within `commutator_tol`.
  static CommutingFamily from_operators(std::span<const HermitianOperator> ops,
                                        double commutator_tol = 1e-8);

  std::size_t size() const { return ops_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(basis_.rows()); }
  const CMatrix& basis() const { return basis_; }
  const RMatrix& eigenvalues() const { return eigenvalues_; }
  const HermitianOperator& op(std::size_t i) const { return ops_.at(i); }
  const std::vector<HermitianOperator>& operators() const { return ops_; }

  struct Eigenspace {
    RVector eigenvalues;               // one entry per operator
    std::vector<std::size_t> columns;  // basis columns spanning the space
    CMatrix projector;
  };
  /// Joint eigenspaces: basis columns grouped by identical eigenvalue tuples.
  std::vector<Eigenspace> eigenspaces(double tol = 1e-9) const;

 private:
  CMatrix basis_;
  RMatrix eigenvalues_;
  std::vector<HermitianOperator> ops_;
};

class DensityMatrix {
 public:
  struct Tolerance {
    double hermitian = 1e-10;
    double trace = 1e-10;
    double min_eigenvalue = -1e-8;
  };

  DensityMatrix() = default;
  explicit DensityMatrix(CMatrix matrix) : DensityMatrix(std::move(matrix), Tolerance{}) {}
  DensityMatrix(CMatrix matrix, Tolerance tol);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const CMatrix& matrix() const { return m_; }
  RVector eigenvalues() const;
  double purity() const;

 private:
  CMatrix m_;
};

/// e^{-iHt} by eigendecomposition of H (hbar = 1).
class Propagator {
 public:
  Propagator() = default;
  explicit Propagator(const HermitianOperator& h);

  CMatrix at(double t) const;
  const RVector& energies() const { return energies_; }
  const CMatrix& eigenvectors() const { return vectors_; }

 private:
  RVector energies_;
  CMatrix vectors_;
};

/// <psi|O|psi> for a normalized psi.
double expectation(const HermitianOperator& op, const StateVector& psi);
/// Tr[rho O].
double expectation(const HermitianOperator& op, const DensityMatrix& rho);
/// <A^2> - <A>^2.
double variance(const HermitianOperator& a, const StateVector& psi);
/// e^{iH tau} A e^{-iH tau}; tau may be negative.
HermitianOperator interaction_picture(const HermitianOperator& a, const HermitianOperator& h,
                                      double tau);
DensityMatrix pure_density(const StateVector& psi);

/// (1/2)||a - b||_1 for Hermitian arguments.
double trace_distance(const CMatrix& a, const CMatrix& b);
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

/// max_ij |a_ij - conj(a_ji)|.
double hermiticity_defect(const CMatrix& a);

namespace detail {

/// <psi|O|psi>/<psi|psi> without validation; hot-loop helper.
inline Complex raw_expectation(const CMatrix& op, const CVector& psi) {
  return psi.dot(op * psi) / psi.squaredNorm();
}

}  // namespace detail

}  // namespace collapse

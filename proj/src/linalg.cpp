#include "collapse/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

void require_normalized(const StateVector& psi, const char* what) {
  if (std::abs(psi.norm_squared() - 1.0) > 1e-6) {
    throw InvalidArgument(std::string(what) + ": state is not normalized (norm^2 = " +
                          std::to_string(psi.norm_squared()) + ")");
  }
}

}  // namespace

double hermiticity_defect(const CMatrix& a) {
  return max_abs(a - a.adjoint());
}

StateVector::StateVector(CVector amplitudes) : amps_(std::move(amplitudes)) {
  if (amps_.size() == 0) throw InvalidArgument("StateVector: empty amplitude vector");
  for (Eigen::Index k = 0; k < amps_.size(); ++k) {
    if (!std::isfinite(amps_(k).real()) || !std::isfinite(amps_(k).imag())) {
      throw InvalidArgument("StateVector: non-finite amplitude at index " + std::to_string(k));
    }
  }
}

StateVector StateVector::basis(std::size_t dim, std::size_t k) {
  if (k >= dim) throw InvalidArgument("StateVector::basis: index out of range");
  CVector v = CVector::Zero(static_cast<Eigen::Index>(dim));
  v(static_cast<Eigen::Index>(k)) = 1.0;
  return StateVector(std::move(v));
}

StateVector StateVector::from_real(std::span<const double> amplitudes) {
  CVector v(static_cast<Eigen::Index>(amplitudes.size()));
  for (std::size_t k = 0; k < amplitudes.size(); ++k) v(static_cast<Eigen::Index>(k)) = amplitudes[k];
  return StateVector(std::move(v));
}

bool StateVector::is_normalized(double tol) const {
  return std::abs(norm_squared() - 1.0) <= tol;
}

StateVector StateVector::normalized() const {
  const double n = amps_.norm();
  if (!(n > 0.0)) throw NumericalError("StateVector::normalized: zero norm");
  return StateVector(amps_ / n);
}

HermitianOperator::HermitianOperator(CMatrix matrix, double tol) : m_(std::move(matrix)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0) {
    throw InvalidArgument("HermitianOperator: matrix must be square and non-empty");
  }
  if (!m_.allFinite()) throw InvalidArgument("HermitianOperator: non-finite entry");
  const double scale = std::max(1.0, max_abs(m_));
  if (hermiticity_defect(m_) > tol * scale) {
    throw InvalidArgument("HermitianOperator: matrix is not Hermitian");
  }
  // Symmetrize so downstream algebra sees an exactly Hermitian matrix.
  m_ = (0.5 * (m_ + m_.adjoint())).eval();
}

HermitianOperator HermitianOperator::identity(std::size_t dim) {
  return HermitianOperator(CMatrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
}

HermitianOperator HermitianOperator::zero(std::size_t dim) {
  return HermitianOperator(CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
}

HermitianOperator HermitianOperator::diagonal(std::span<const double> entries) {
  const auto d = static_cast<Eigen::Index>(entries.size());
  CMatrix m = CMatrix::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k) m(k, k) = entries[static_cast<std::size_t>(k)];
  return HermitianOperator(std::move(m));
}

HermitianOperator HermitianOperator::pauli_x() {
  CMatrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return HermitianOperator(std::move(m));
}

HermitianOperator HermitianOperator::pauli_y() {
  CMatrix m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return HermitianOperator(std::move(m));
}

HermitianOperator HermitianOperator::pauli_z() {
  CMatrix m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return HermitianOperator(std::move(m));
}

bool HermitianOperator::is_zero(double tol) const {
  return max_abs(m_) <= tol;
}

bool HermitianOperator::commutes_with(const HermitianOperator& other, double tol) const {
  require_same_dim(dim(), other.dim(), "HermitianOperator::commutes_with");
  return max_abs(m_ * other.m_ - other.m_ * m_) <= tol;
}

CommutingFamily::CommutingFamily(CMatrix basis, RMatrix eigenvalues)
    : basis_(std::move(basis)), eigenvalues_(std::move(eigenvalues)) {
  if (basis_.rows() != basis_.cols() || basis_.rows() == 0) {
    throw InvalidArgument("CommutingFamily: basis must be square and non-empty");
  }
  if (eigenvalues_.cols() != basis_.rows() || eigenvalues_.rows() == 0) {
    throw InvalidArgument("CommutingFamily: eigenvalue table must be N x d with N >= 1");
  }
  if (!eigenvalues_.allFinite()) throw InvalidArgument("CommutingFamily: non-finite eigenvalue");
  const CMatrix gram = basis_.adjoint() * basis_;
  if (max_abs(gram - CMatrix::Identity(basis_.rows(), basis_.rows())) > 1e-12) {
    throw InvalidArgument("CommutingFamily: basis is not unitary");
  }
  ops_.reserve(static_cast<std::size_t>(eigenvalues_.rows()));
  for (Eigen::Index i = 0; i < eigenvalues_.rows(); ++i) {
    const CVector diag = eigenvalues_.row(i).transpose().cast<Complex>();
    ops_.emplace_back(basis_ * diag.asDiagonal() * basis_.adjoint());
  }
}

CommutingFamily CommutingFamily::diagonal(RMatrix eigenvalues) {
  const Eigen::Index d = eigenvalues.cols();
  return CommutingFamily(CMatrix::Identity(d, d), std::move(eigenvalues));
}

CommutingFamily CommutingFamily::from_operators(std::span<const HermitianOperator> ops,
                                                double commutator_tol) {
  if (ops.empty()) throw InvalidArgument("CommutingFamily::from_operators: no operators");
  const std::size_t d = ops.front().dim();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    require_same_dim(d, ops[i].dim(), "CommutingFamily::from_operators");
    for (std::size_t j = i + 1; j < ops.size(); ++j) {
      if (!ops[i].commutes_with(ops[j], commutator_tol)) {
        throw InvalidArgument("CommutingFamily::from_operators: operators " + std::to_string(i) +
                              " and " + std::to_string(j) + " do not commute");
      }
    }
  }
  // A generic real combination of commuting Hermitian matrices has the joint
  // eigenbasis as its eigenbasis (degeneracies then coincide with joint ones).
  const auto n = static_cast<Eigen::Index>(d);
  CMatrix mix = CMatrix::Zero(n, n);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const double weight = 1.0 + std::sqrt(2.0) * static_cast<double>(i) + 0.1 * std::sqrt(3.0 + i);
    mix += weight * ops[i].matrix();
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(mix);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("CommutingFamily::from_operators: eigendecomposition failed");
  }
  CMatrix basis = solver.eigenvectors();
  RMatrix eigenvalues(static_cast<Eigen::Index>(ops.size()), n);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const CMatrix rotated = basis.adjoint() * ops[i].matrix() * basis;
    const double off = max_abs(rotated - CMatrix(rotated.diagonal().asDiagonal()));
    if (off > 1e-6 * std::max(1.0, max_abs(rotated))) {
      throw NumericalError("CommutingFamily::from_operators: joint diagonalization failed");
    }
    eigenvalues.row(static_cast<Eigen::Index>(i)) = rotated.diagonal().real().transpose();
  }
  // Re-orthonormalize to machine precision before the unitarity check.
  Eigen::HouseholderQR<CMatrix> qr(basis);
  CMatrix q = qr.householderQ();
  const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Complex phase = r(k, k) / std::abs(r(k, k));
    q.col(k) *= phase;
  }
  return CommutingFamily(std::move(q), std::move(eigenvalues));
}

std::vector<CommutingFamily::Eigenspace> CommutingFamily::eigenspaces(double tol) const {
  std::vector<Eigenspace> spaces;
  for (Eigen::Index col = 0; col < basis_.cols(); ++col) {
    const RVector tuple = eigenvalues_.col(col);
    auto match = std::find_if(spaces.begin(), spaces.end(), [&](const Eigenspace& s) {
      return (s.eigenvalues - tuple).cwiseAbs().maxCoeff() <= tol;
    });
    if (match == spaces.end()) {
      spaces.push_back({tuple, {}, CMatrix::Zero(basis_.rows(), basis_.rows())});
      match = std::prev(spaces.end());
    }
    match->columns.push_back(static_cast<std::size_t>(col));
    match->projector += basis_.col(col) * basis_.col(col).adjoint();
  }
  return spaces;
}

DensityMatrix::DensityMatrix(CMatrix matrix, Tolerance tol) : m_(std::move(matrix)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0) {
    throw InvalidArgument("DensityMatrix: matrix must be square and non-empty");
  }
  if (!m_.allFinite()) throw InvalidArgument("DensityMatrix: non-finite entry");
  if (hermiticity_defect(m_) > tol.hermitian) {
    throw InvalidArgument("DensityMatrix: matrix is not Hermitian");
  }
  if (std::abs(m_.trace() - Complex(1.0)) > tol.trace) {
    throw InvalidArgument("DensityMatrix: trace deviates from 1");
  }
  if (eigenvalues().minCoeff() < tol.min_eigenvalue) {
    throw InvalidArgument("DensityMatrix: negative eigenvalue");
  }
}

RVector DensityMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(m_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

double DensityMatrix::purity() const {
  return (m_ * m_).trace().real();
}

Propagator::Propagator(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h.matrix());
  if (solver.info() != Eigen::Success) throw NumericalError("Propagator: eigendecomposition failed");
  energies_ = solver.eigenvalues();
  vectors_ = solver.eigenvectors();
}

CMatrix Propagator::at(double t) const {
  CVector phases(energies_.size());
  for (Eigen::Index k = 0; k < energies_.size(); ++k) phases(k) = std::exp(-kI * energies_(k) * t);
  return vectors_ * phases.asDiagonal() * vectors_.adjoint();
}

double expectation(const HermitianOperator& op, const StateVector& psi) {
  require_same_dim(op.dim(), psi.dim(), "expectation");
  require_normalized(psi, "expectation");
  // Dividing by the same dot product makes the identity exact.
  const Complex value =
      psi.amplitudes().dot(op.matrix() * psi.amplitudes()) / psi.amplitudes().dot(psi.amplitudes()).real();
  if (std::abs(value.imag()) > 1e-10 * std::max(1.0, std::abs(value.real()))) {
    throw NumericalError("expectation: imaginary part exceeds tolerance");
  }
  return value.real();
}

double expectation(const HermitianOperator& op, const DensityMatrix& rho) {
  require_same_dim(op.dim(), rho.dim(), "expectation");
  return (rho.matrix() * op.matrix()).trace().real();
}

double variance(const HermitianOperator& a, const StateVector& psi) {
  const double mean = expectation(a, psi);
  const HermitianOperator squared(a.matrix() * a.matrix());
  return expectation(squared, psi) - mean * mean;
}

HermitianOperator interaction_picture(const HermitianOperator& a, const HermitianOperator& h,
                                      double tau) {
  require_same_dim(a.dim(), h.dim(), "interaction_picture");
  if (tau == 0.0) return a;
  const CMatrix u = Propagator(h).at(tau);  // e^{-iH tau}
  return HermitianOperator(u.adjoint() * a.matrix() * u, 1e-10);
}

DensityMatrix pure_density(const StateVector& psi) {
  require_normalized(psi, "pure_density");
  const CVector& v = psi.amplitudes();
  return DensityMatrix(v * v.adjoint());
}

double trace_distance(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("trace_distance: dimension mismatch");
  }
  const CMatrix diff = a - b;
  const CMatrix sym = 0.5 * (diff + diff.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(sym, Eigen::EigenvaluesOnly);
  return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  return trace_distance(a.matrix(), b.matrix());
}

}  // namespace collapse

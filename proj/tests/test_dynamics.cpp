#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "collapse/dynamics.hpp"
#include "collapse/errors.hpp"
#include "collapse/measure.hpp"

using namespace collapse;

namespace {

RMatrix one() { return RMatrix::Identity(1, 1); }

CommutingFamily sigma_z_family() {
  RMatrix lam(1, 2);
  lam << 1.0, -1.0;
  return CommutingFamily::diagonal(lam);
}

StateVector psi036() { return StateVector(CVector{{0.6, 0.8}}); }

ModelSpec model(const HermitianOperator& h, double gamma, Complex xi, const CorrelationKernel& k, const TimeGrid& g) {
  return ModelSpec(h, sigma_z_family(), gamma, xi, k, g);
}

double fidelity(const StateVector& a, const StateVector& b) { return std::norm(a.amplitudes().dot(b.amplitudes())); }

NoiseRealization zero_noise(const ModelSpec& m) {
  return NoiseRealization(RMatrix::Zero(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.grid().knots())),
                          m.grid(), m.kernel().is_white());
}

}  // namespace

TEST(ItoWhite, NoiseFreeIsUnitary) {
  const auto m = model(HermitianOperator::pauli_x(), 0.0, 1.0, CorrelationKernel::white(one()), TimeGrid(1.0, 1000));
  const Trajectory tr = evolve_ito_white(m, sample_noise(m.kernel(), m.grid(), 1, 0), psi036());
  const StateVector exact(Propagator(m.hamiltonian()).at(1.0) * psi036().amplitudes());
  EXPECT_GE(fidelity(tr.states.back(), exact), 1.0 - 1e-6);
}

TEST(ItoWhite, EigenstateIsStationary) {
  const auto m = model(HermitianOperator::zero(2), 1.0, 1.0, CorrelationKernel::white(one()), TimeGrid(1.0, 200));
  for (std::uint64_t p = 0; p < 5; ++p) {
    const Trajectory tr = evolve_ito_white(m, sample_noise(m.kernel(), m.grid(), 2, p), StateVector::basis(2, 1));
    for (const auto& s : tr.states) EXPECT_NEAR(std::norm(s[1]), 1.0, 1e-14);
  }
}

TEST(ItoWhite, VarianceDecrementIdentity) {
  // E[V(t)] = V(0) - 4 gamma int E[V^2] for white noise (F = 1/2).
  const double gamma = 1.0;
  const auto m = model(HermitianOperator::zero(2), gamma, 1.0, CorrelationKernel::white(one()), TimeGrid(0.5, 500));
  EnsembleRequest req{scheme::ito_white, psi036(), 1000, 31, 1, MeasureKind::p_direct, {}};
  const WeightedEnsemble ens = run_ensemble(m, req);
  const std::size_t n = ens.size(), last = m.grid().steps();
  std::vector<double> r(n);
  std::vector<double> vmean(m.grid().knots(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    double integral = 0.0;
    for (std::size_t k = 0; k <= last; ++k) {
      const double v = variance(m.family().op(0), ens[p].states[k]);
      vmean[k] += v / n;
      if (k < last) integral += m.grid().dt() * v * v;  // left-point, matching the Ito increment
    }
    r[p] = variance(m.family().op(0), ens[p].states[last]) - variance(m.family().op(0), psi036()) + 4.0 * gamma * integral;
  }
  double mu = 0.0, ss = 0.0;
  for (double x : r) mu += x / n;
  for (double x : r) ss += (x - mu) * (x - mu);
  EXPECT_LE(std::abs(mu), 4.0 * std::sqrt(ss / (n - 1.0) / n));
  EXPECT_LT(vmean.back(), vmean.front());
  for (std::size_t k = 50; k <= last; k += 50) EXPECT_LT(vmean[k], vmean[k - 50]);
}

TEST(StratonovichWhite, NoiseFreeMatchesIto) {
  const auto m = model(HermitianOperator::pauli_x(), 0.0, 1.0, CorrelationKernel::white(one()), TimeGrid(1.0, 1000));
  const auto w = zero_noise(m);
  const Trajectory a = evolve_ito_white(m, w, psi036());
  const Trajectory b = evolve_stratonovich_white(m, w, psi036());
  EXPECT_GE(fidelity(a.states.back(), b.states.back()), 1.0 - 1e-6);
}

TEST(StratonovichWhite, EnsembleMatchesIto) {
  const auto m = model(HermitianOperator::pauli_x(), 0.1, 1.0, CorrelationKernel::white(one()), TimeGrid(1.0, 200));
  const auto run = [&](const char* s) {
    EnsembleRequest req{s, psi036(), 1000, 41, 1, MeasureKind::p_direct, {}};
    return physical_expectation(run_ensemble(m, req), HermitianOperator::pauli_z(), m.grid().steps());
  };
  const Estimate ito = run(scheme::ito_white), strat = run(scheme::stratonovich_white);
  // Same noise paths, so the errors are strongly correlated; the bound is conservative.
  EXPECT_LE(std::abs(ito.value - strat.value), 4.0 * std::hypot(ito.std_error, strat.std_error));
}

TEST(StratonovichWhite, RejectsColoredKernel) {
  const auto m = model(HermitianOperator::zero(2), 1.0, 1.0, CorrelationKernel::exponential(one(), 1.0), TimeGrid(1.0, 10));
  EXPECT_THROW(evolve_stratonovich_white(m, zero_noise(m), psi036()), InvalidArgument);
}

TEST(LinearColored, TrivialCases) {
  const auto m = model(HermitianOperator::zero(2), 0.0, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 50));
  const Trajectory tr = evolve_linear_colored_commuting(m, sample_noise(m.kernel(), m.grid(), 3, 0), psi036());
  for (const auto& s : tr.states) EXPECT_LT((s.amplitudes() - psi036().amplitudes()).norm(), 1e-14);
  const auto m1 = m.with_gamma(0.7);
  const Trajectory t1 = evolve_linear_colored_commuting(m1, sample_noise(m.kernel(), m.grid(), 3, 0), psi036());
  EXPECT_EQ(t1.states.front().amplitudes(), psi036().amplitudes());
  EXPECT_EQ(t1.norms.front(), 1.0);
}

TEST(LinearColored, MatchesDirectIntegration) {
  const double gamma = 0.8, lambda = 3.0;
  const Complex xi(0.8, 0.6);
  const auto m = model(HermitianOperator::zero(2), gamma, xi, CorrelationKernel::exponential(one(), lambda), TimeGrid(1.0, 100));
  const NoiseRealization w = sample_noise(m.kernel(), m.grid(), 4, 0);
  const Trajectory tr = evolve_linear_colored_commuting(m, w, psi036());
  // RK4 at dt = 1e-4 on dc_a/dt = (sqrt(gamma) xi a w(t) - 2 gamma xi xi_R a^2 F(t)) c_a,
  // with w interpolated linearly between knots.
  const double h = 1e-4, dt = m.grid().dt();
  const auto wt = [&](double t) {
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(t / dt), m.grid().steps() - 1);
    const double u = t / dt - static_cast<double>(k);
    return (1 - u) * w.value(0, k) + u * w.value(0, k + 1);
  };
  const auto f = [&](double t) { return 0.5 * (1.0 - std::exp(-lambda * t)); };
  CVector c = psi036().amplitudes();
  const double a[2] = {1.0, -1.0};
  for (int step = 0; step < 10000; ++step) {
    const double t = step * h;
    for (int i = 0; i < 2; ++i) {
      const auto rate = [&](double s) { return std::sqrt(gamma) * xi * a[i] * wt(s) - 2.0 * gamma * xi * xi.real() * a[i] * a[i] * f(s); };
      const Complex k1 = rate(t) * c(i), k2 = rate(t + h / 2) * (c(i) + h / 2 * k1),
                    k3 = rate(t + h / 2) * (c(i) + h / 2 * k2), k4 = rate(t + h) * (c(i) + h * k3);
      c(i) += h / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  const CVector got = tr.states.back().amplitudes() * std::sqrt(tr.norms.back());
  EXPECT_LE((got - c).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(LinearColored, RejectsNonCommutingHamiltonian) {
  const auto m = model(HermitianOperator::pauli_x(), 1.0, 1.0, CorrelationKernel::exponential(one(), 1.0), TimeGrid(1.0, 10));
  EXPECT_THROW(evolve_linear_colored_commuting(m, zero_noise(m), psi036()), InvalidArgument);
}

TEST(NonlinearColored, EigenstateIsStationary) {
  const auto m = model(HermitianOperator::zero(2), 1.0, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(2.0, 100));
  const Trajectory tr = evolve_nonlinear_colored_commuting(m, sample_noise(m.kernel(), m.grid(), 5, 0), StateVector::basis(2, 0));
  for (const auto& s : tr.states) EXPECT_NEAR(std::norm(s[0]), 1.0, 1e-14);
}

TEST(NonlinearColored, EqualsNormalizedLinearOnSameNoise) {
  const auto m = model(HermitianOperator::zero(2), 1.0, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 10000));
  const NoiseRealization w = sample_noise(m.kernel(), m.grid(), 6, 0);
  const Trajectory nl = evolve_nonlinear_colored_commuting(m, w, psi036());
  const Trajectory lin = evolve_linear_colored_commuting(m, w, psi036());
  EXPECT_GE(fidelity(nl.states.back(), lin.states.back()), 1.0 - 1e-5);
}

TEST(NonlinearColored, TrackedWeightsMatchLinear) {
  const auto m = model(HermitianOperator::zero(2), 1.0, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 2000));
  const NoiseRealization w = sample_noise(m.kernel(), m.grid(), 7, 0);
  EvolveOptions o;
  o.track_weights = true;
  const Trajectory nl = evolve_nonlinear_colored_commuting(m, w, psi036(), o);
  const Trajectory lin = evolve_linear_colored_commuting(m, w, psi036());
  ASSERT_EQ(nl.log_weights.size(), lin.norms.size());
  EXPECT_NEAR(nl.log_weights.back(), std::log(lin.norms.back()), 1e-4);
}

TEST(Perturbative, NoiseFreeIsUnitary) {
  const auto m = model(HermitianOperator::pauli_x(), 0.0, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 100));
  const PerturbativeResult r = evolve_perturbative_order_gamma(m, sample_noise(m.kernel(), m.grid(), 8, 0), psi036());
  const CVector exact = Propagator(m.hamiltonian()).at(1.0) * psi036().amplitudes();
  EXPECT_LT((r.trajectory.states.back().amplitudes() - exact).norm(), 1e-12);
}

TEST(MemoryLinear, ReducesToColoredCommutingForZeroHamiltonian) {
  const auto m = model(HermitianOperator::zero(2), 0.01, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 2000));
  const NoiseRealization w = sample_noise(m.kernel(), m.grid(), 9, 0);
  const Trajectory a = evolve_linear_memory_kernel(m, w, psi036());
  const Trajectory b = evolve_linear_colored_commuting(m, w, psi036());
  const CVector pa = a.states.back().amplitudes() * std::sqrt(a.norms.back());
  const CVector pb = b.states.back().amplitudes() * std::sqrt(b.norms.back());
  EXPECT_LE((pa - pb).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Perturbative, ResidualScalesAsGammaThreeHalves) {
  std::vector<double> err;
  for (double gamma : {2e-3, 1e-3}) {
    const auto m = model(HermitianOperator::pauli_x(), gamma, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(2.0, 2000));
    double acc = 0.0;
    for (std::uint64_t p = 0; p < 8; ++p) {
      const NoiseRealization w = sample_noise(m.kernel(), m.grid(), 10, p);
      const PerturbativeResult r = evolve_perturbative_order_gamma(m, w, psi036());
      const Trajectory full = evolve_linear_memory_kernel(m, w, psi036());
      const CVector pr = r.trajectory.states.back().amplitudes() * std::sqrt(r.trajectory.norms.back());
      const CVector pf = full.states.back().amplitudes() * std::sqrt(full.norms.back());
      acc += (pr - pf).norm() / 8.0;
    }
    err.push_back(acc);
  }
  EXPECT_NEAR(err[0] / err[1], std::pow(2.0, 1.5), 0.35 * std::pow(2.0, 1.5));
}

TEST(Perturbative, LargeCouplingIsRejected) {
  const auto m = model(HermitianOperator::pauli_x(), 2.0, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(3.0, 300));
  EXPECT_THROW(evolve_perturbative_order_gamma(m, sample_noise(m.kernel(), m.grid(), 11, 0), psi036()), NumericalError);
}

TEST(NormPreserving, NoiseFreeIsUnitary) {
  const auto m = model(HermitianOperator::pauli_x(), 0.0, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 400));
  const Trajectory tr = evolve_nonlinear_secIII(m, sample_noise(m.kernel(), m.grid(), 12, 0), psi036());
  const StateVector exact(Propagator(m.hamiltonian()).at(1.0) * psi036().amplitudes());
  EXPECT_GE(fidelity(tr.states.back(), exact), 1.0 - 1e-8);
}

TEST(NormPreserving, PreservesNorm) {
  const auto m = model(HermitianOperator::pauli_x(), 1e-2, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(2.0, 2000));
  const Trajectory tr = evolve_nonlinear_secIII(m, sample_noise(m.kernel(), m.grid(), 13, 0), psi036());
  double drift = 0.0;
  for (double n : tr.norms) drift += std::abs(n - 1.0);
  EXPECT_LE(drift / m.grid().t_end(), 1e-6);
}

TEST(NormPreserving, EnsembleMatchesOrderGammaMaster) {
  const auto m = model(HermitianOperator::pauli_x(), 1e-2, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 1000));
  EnsembleRequest req{scheme::nonlinear_secIII, psi036(), 1000, 14, 1, MeasureKind::p_direct, {}};
  req.options.keep_noise = false;
  const WeightedEnsemble ens = run_ensemble(m, req);
  MasterOptions lax;
  lax.positivity_floor = -1e-3;
  const DensitySeries master = evolve_master_order_gamma(m, pure_density(psi036()), lax);
  const Estimate td = trace_distance_estimate(ens, m.grid().steps(), master.rho.back());
  EXPECT_LE(td.value, std::pow(1e-2, 1.5) + 4.0 * td.std_error);
}

TEST(NormPreserving, EnsembleMatchesExactLinearAverage) {
  // Real-noise physics from the Gaussian hierarchy of the linear memory equation.
  const auto m = model(HermitianOperator::pauli_x(), 0.2, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 100));
  EnsembleRequest req{scheme::nonlinear_secIII, psi036(), 2000, 15, 1, MeasureKind::p_direct, {}};
  req.options.keep_noise = false;
  req.options.norm_drift_tolerance = 1e-2;
  const WeightedEnsemble ens = run_ensemble(m, req);
  CMatrix exact = exact_linear_average(m, pure_density(psi036())).rho.back();
  exact /= exact.trace();
  const Estimate td = trace_distance_estimate(ens, m.grid().steps(), exact);
  EXPECT_LE(td.value, std::pow(0.2, 1.5) + 4.0 * td.std_error);
}

TEST(Dispatch, KnownAndUnknownSchemes) {
  const auto m = model(HermitianOperator::zero(2), 0.5, 1.0, CorrelationKernel::exponential(one(), 2.0), TimeGrid(1.0, 20));
  const NoiseRealization w = sample_noise(m.kernel(), m.grid(), 16, 0);
  EXPECT_EQ(evolve(scheme::linear_colored_commuting, m, w, psi036()).scheme, scheme::linear_colored_commuting);
  EXPECT_THROW(evolve("evolve_nope", m, w, psi036()), InvalidArgument);
  EXPECT_TRUE(scheme::is_linear(scheme::linear_memory_kernel));
  EXPECT_FALSE(scheme::is_linear(scheme::nonlinear_secIII));
}

TEST(MemoryTable, WhiteIsHalfStrength) {
  const auto m = model(HermitianOperator::pauli_x(), 1.0, 1.0, CorrelationKernel::white(2.0 * one()), TimeGrid(1.0, 10));
  const MemoryTable t = MemoryTable::on_grid(m);
  for (std::size_t q = 0; q < t.count(); ++q) EXPECT_LT((t.at(q, 0, 0) - m.family().op(0).matrix()).norm(), 1e-14);
}

TEST(MemoryTable, LatticeAgreesWithExact) {
  const auto m = model(HermitianOperator::pauli_x(), 1.0, 1.0, CorrelationKernel::exponential(one(), 3.0), TimeGrid(2.0, 400));
  MemoryOptions lattice;
  lattice.method = MemoryMethod::lattice;
  const MemoryTable a = MemoryTable::on_grid(m), b = MemoryTable::on_grid(m, 1, lattice);
  for (std::size_t q = 0; q < a.count(); q += 40) {
    EXPECT_LT((a.at(q, 0, 0) - b.at(q, 0, 0)).norm(), 1e-4) << q;
    EXPECT_LT(hermiticity_defect(a.at(q, 0, 0)), 1e-12);
  }
}

TEST(MemoryTable, HistoryCap) {
  const auto m = model(HermitianOperator::pauli_x(), 1.0, 1.0, CorrelationKernel::exponential(one(), 3.0), TimeGrid(2.0, 400));
  MemoryOptions capped;
  capped.method = MemoryMethod::lattice;
  capped.max_history = 100;
  EXPECT_THROW(MemoryTable::on_grid(m, 1, capped), NumericalError);
}

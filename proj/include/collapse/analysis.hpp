#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collapse/dynamics.hpp"
#include "collapse/measure.hpp"

namespace collapse {

struct ObservableSeries {
  std::string name;
  std::vector<double> mean;
  std::vector<double> variance;  // across paths
  std::vector<double> std_error;
};

struct EnsembleStats {
  std::vector<double> times;
  std::vector<ObservableSeries> observables;  // <A_i> then V(A_i) for each i
  std::size_t n_paths = 0;
  MeasureKind measure = MeasureKind::p_direct;
  bool degenerate = false;  // fewer than two paths: no error estimates
};

EnsembleStats ensemble_stats(const WeightedEnsemble& ensemble, const CommutingFamily& family);

struct CollapseGates {
  double variance_threshold = 1e-3;
  double born_sigmas = 3.0;
  double mean_sigmas = 4.0;
  std::size_t checkpoints = 5;
  std::size_t jackknife_groups = 20;
  double population_threshold = 0.99;
};

struct DecrementCheck {
  std::size_t op = 0;
  double time = 0.0;
  double observed = 0.0;   // V(0) - E_P[V(t)]
  double predicted = 0.0;  // 8 xi_R^2 gamma int sum_ij E[...] F_ij
  double residual = 0.0;   // mean of the per-path identity residual
  double residual_error = 0.0;
  bool pass = false;
};

struct CollapseReport {
  std::vector<double> times;
  std::vector<std::vector<double>> variance_mean;       // per operator, per knot
  std::vector<std::vector<double>> variance_error;
  std::vector<std::vector<double>> predicted_variance;  // V(0) - predicted decrement
  std::vector<double> martingale_slope;                 // per operator
  std::vector<double> martingale_error;
  std::vector<bool> martingale_pass;
  std::vector<DecrementCheck> decrements;
  BornTable born;
  bool born_pass = false;
  bool decrement_pass = false;
  double final_variance = 0.0;  // max over operators
  std::string verdict;          // "collapsed", "no reduction", "born mismatch"
};

CollapseReport collapse_report(const WeightedEnsemble& ensemble, const ModelSpec& model,
                               const CollapseGates& gates = {});

struct PhaseInvarianceRow {
  double gamma = 0.0;
  double theta = 0.0;
  double distance = 0.0;  // trace distance to the xi = 1 run at the final time
};

struct PhaseInvarianceReport {
  std::string method;
  std::vector<PhaseInvarianceRow> rows;
  std::optional<double> exponent;  // least-squares slope of log distance vs log gamma
};

/// Compares xi = exp(i theta) against xi = 1 at each gamma. The model's xi
/// must have unit modulus.
PhaseInvarianceReport phase_invariance_report(const ModelSpec& model, std::span<const double> thetas,
                                              const DensityMatrix& rho0, std::span<const double> gammas,
                                              const HierarchyOptions& options = {});

struct EnergyModel {
  double mass = 1.0;
  double coupling = 1.0;
  CorrelationKernel kernel;
  double p0 = 0.0;
};

struct EnergyGainCurve {
  std::vector<double> times;
  std::vector<double> analytic_rate;  // C^2 F(t) / m
  std::vector<double> mc_rate;        // d/dt E[p^2 / 2m], centered differences
  std::vector<double> std_error;
  std::vector<double> richardson_gap;  // |extrapolated - stencil|, 0 with fewer than 5 knots
  std::size_t n_paths = 0;
};

EnergyGainCurve energy_gain_curve(const EnergyModel& model, const TimeGrid& grid, std::size_t n_paths,
                                  std::uint64_t seed, std::size_t workers = 1);

struct ReductionVerdict {
  RMatrix limit;  // lim F(t)
  RVector eigenvalues;
  RMatrix eigenvectors;
  bool positive_definite = false;
  /// Per eigenvector v: growth rate of v^T G(t) v at the horizon and whether
  /// int_0^t F grows without bound along v.
  std::vector<double> growth_rate;
  std::vector<bool> integral_diverges;
  std::string verdict;  // "reduction", "reduction (integral criterion)", "no reduction"
};

/// horizon <= 0 picks a default: 1 (white), 50/lambda (exponential), or
/// 0.1/omega_1 with omega_1 the first nonzero table node (spectral).
ReductionVerdict reduction_criterion(const CorrelationKernel& kernel, double horizon = 0.0);

}  // namespace collapse

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "collapse/dynamics.hpp"

namespace collapse {

enum class MeasureKind {
  p_direct,      // noise drawn from the physical measure; unit weights
  q_reweighted,  // raw noise, each path weighted by <phi|phi> at the readout time
};

const char* to_string(MeasureKind kind);  // "P-direct" / "Q-reweighted"

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Weighted mean sum w x / sum w with a leave-one-out jackknife error.
Estimate weighted_mean(const std::vector<double>& values, const std::vector<double>& weights);

class WeightedEnsemble {
 public:
  WeightedEnsemble(std::vector<Trajectory> trajectories, MeasureKind kind);

  std::size_t size() const { return paths_.size(); }
  MeasureKind kind() const { return kind_; }
  const TimeGrid& grid() const { return paths_.front().grid; }
  const std::vector<Trajectory>& trajectories() const { return paths_; }
  const Trajectory& operator[](std::size_t p) const { return paths_[p]; }
  /// Common scheme name, or empty when the ensemble mixes schemes.
  std::string scheme() const;

  /// Per-path weights at a knot: 1 (P-direct) or <phi(t)|phi(t)>.
  std::vector<double> weights(std::size_t knot) const;
  /// E_Q[<phi|phi>] at a knot with standard error (1 for P-direct).
  Estimate mean_weight(std::size_t knot) const;
  /// (sum w)^2 / sum w^2.
  double effective_size(std::size_t knot) const;

 private:
  std::vector<Trajectory> paths_;
  MeasureKind kind_;
};

/// E_P[<O>_t] at a knot.
Estimate physical_expectation(const WeightedEnsemble& ensemble, const HermitianOperator& op, std::size_t knot);
/// sum w |psi><psi| / sum w.
CMatrix ensemble_density(const WeightedEnsemble& ensemble, std::size_t knot);
/// Trace distance between the ensemble density matrix and `reference`, with
/// a jackknife standard error.
Estimate trace_distance_estimate(const WeightedEnsemble& ensemble, std::size_t knot, const CMatrix& reference);

struct BornRow {
  RVector eigenvalues;        // joint eigenvalues (a_1..a_N) of the eigenspace
  double initial_population;  // <psi_0|P|psi_0>
  double fraction;            // weighted share of paths with population > threshold
  double std_error;           // binomial error at the initial population
  double fraction_strict;     // same with the strict threshold
};

struct BornTable {
  std::vector<BornRow> rows;
  double unresolved = 0.0;
  double unresolved_strict = 0.0;
  double effective_size = 0.0;
  double threshold = 0.99;
  double strict_threshold = 0.999;
  bool any_concentrated = false;
};

BornTable born_weights(const WeightedEnsemble& ensemble, const CommutingFamily& family, std::size_t knot,
                       double threshold = 0.99, double strict_threshold = 0.999);

/// Samples noise under the physical measure for the commuting nonlinear
/// equation: an eigen-branch a is drawn with its Born weight and the raw
/// noise is shifted by 4 sqrt(gamma) xi_R sum_j F_ij(t) a_j. One-time
/// statistics of the resulting states are exact.
class PhysicalNoiseSampler {
 public:
  PhysicalNoiseSampler(const ModelSpec& model, const StateVector& psi0,
                       SamplingMethod method = SamplingMethod::automatic);

  NoiseRealization sample(std::uint64_t seed, std::uint64_t index, std::size_t* branch = nullptr) const;
  const std::vector<double>& branch_probabilities() const { return probs_; }

 private:
  NoiseSampler raw_;
  std::vector<double> probs_;
  std::vector<RMatrix> shifts_;  // per branch, N x (M+1)
};

struct EnsembleRequest {
  std::string scheme;
  StateVector psi0;
  std::size_t n_paths = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  MeasureKind measure = MeasureKind::p_direct;
  EvolveOptions options;
};

/// Runs n_paths trajectories, path p driven by the stream (seed, p).
WeightedEnsemble run_ensemble(const ModelSpec& model, const EnsembleRequest& request);

struct NoiseShift {
  RMatrix k;  // K_i(t_k), N x (M+1)
  TimeGrid grid;
  /// Per readout knot m: quadrature weights beta_{j,l} = dt w_l C_j(t_m, s_l)
  /// (N x (m+1)) and the kernel-solve coefficients C_j(t_m, s_l).
  std::map<std::size_t, RMatrix> beta;
  std::map<std::size_t, RMatrix> c;
};

/// K_i(t) = 2 sqrt(gamma) xi_R sum_j (F_ij(t) + F_ji(t)) <A_j>_t from the
/// expectations (N x (M+1)). Requires H = 0, [H, A_i] = 0, or `markovian`.
NoiseShift compute_noise_shift(const ModelSpec& model, const RMatrix& expectations,
                               const std::vector<std::size_t>& readout_knots = {}, bool markovian = false);
/// Expectations <A_i>_t along a trajectory, N x (M+1).
RMatrix trajectory_expectations(const Trajectory& trajectory, const CommutingFamily& family);
/// w - K.
NoiseRealization apply_shift(const NoiseRealization& noise, const NoiseShift& shift);
/// W(t) = 1 + sum_i int_0^t C_i(t, s) w_i(s) ds at a readout knot.
double measure_weight_factor(const NoiseShift& shift, const NoiseRealization& noise, std::size_t knot);

}  // namespace collapse

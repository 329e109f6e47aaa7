#include "collapse/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "collapse/errors.hpp"
#include "collapse/parallel.hpp"

namespace collapse {

const char* to_string(MeasureKind kind) {
  return kind == MeasureKind::p_direct ? "P-direct" : "Q-reweighted";
}

Estimate weighted_mean(const std::vector<double>& values, const std::vector<double>& weights) {
  const std::size_t n = values.size();
  if (n == 0 || weights.size() != n) throw InvalidArgument("weighted_mean: size mismatch or empty input");
  double sw = 0.0, swx = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    sw += weights[p];
    swx += weights[p] * values[p];
  }
  if (!(sw > 0.0)) throw InvalidArgument("weighted_mean: all weights are zero");
  Estimate e;
  e.value = swx / sw;
  if (n < 2) return e;
  std::vector<double> loo(n);
  double mean_loo = 0.0;
  std::size_t used = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double rest = sw - weights[p];
    loo[p] = rest > 0.0 ? (swx - weights[p] * values[p]) / rest : e.value;
    mean_loo += loo[p];
    ++used;
  }
  mean_loo /= static_cast<double>(used);
  double ss = 0.0;
  for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
  e.std_error = std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
  return e;
}

WeightedEnsemble::WeightedEnsemble(std::vector<Trajectory> trajectories, MeasureKind kind)
    : paths_(std::move(trajectories)), kind_(kind) {
  if (paths_.empty()) throw InvalidArgument("WeightedEnsemble: no trajectories");
  for (const auto& t : paths_) {
    if (!(t.grid == paths_.front().grid) || t.states.size() != t.grid.knots()) {
      throw InvalidArgument("WeightedEnsemble: trajectories must share one grid");
    }
    if (kind_ == MeasureKind::q_reweighted && !t.linear() && t.log_weights.empty()) {
      throw InvalidArgument("WeightedEnsemble: Q-reweighting needs linear-scheme norms or tracked weights");
    }
  }
}

std::string WeightedEnsemble::scheme() const {
  const std::string& s = paths_.front().scheme;
  for (const auto& t : paths_)
    if (t.scheme != s) return {};
  return s;
}

std::vector<double> WeightedEnsemble::weights(std::size_t knot) const {
  std::vector<double> w(paths_.size(), 1.0);
  if (kind_ == MeasureKind::p_direct) return w;
  for (std::size_t p = 0; p < paths_.size(); ++p) {
    const Trajectory& t = paths_[p];
    w[p] = t.linear() ? t.norms.at(knot) : std::exp(t.log_weights.at(knot));
    if (!std::isfinite(w[p]) || w[p] < 0.0) throw NumericalError("non-finite path weight", knot);
  }
  return w;
}

Estimate WeightedEnsemble::mean_weight(std::size_t knot) const {
  const std::vector<double> w = weights(knot);
  return weighted_mean(w, std::vector<double>(w.size(), 1.0));
}

double WeightedEnsemble::effective_size(std::size_t knot) const {
  const std::vector<double> w = weights(knot);
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

Estimate physical_expectation(const WeightedEnsemble& ensemble, const HermitianOperator& op, std::size_t knot) {
  std::vector<double> x(ensemble.size());
  for (std::size_t p = 0; p < ensemble.size(); ++p) x[p] = expectation(op, ensemble[p].states.at(knot));
  return weighted_mean(x, ensemble.weights(knot));
}

CMatrix ensemble_density(const WeightedEnsemble& ensemble, std::size_t knot) {
  const std::vector<double> w = ensemble.weights(knot);
  const auto d = static_cast<Eigen::Index>(ensemble[0].states.at(knot).dim());
  CMatrix acc = CMatrix::Zero(d, d);
  double sw = 0.0;
  for (std::size_t p = 0; p < ensemble.size(); ++p) {
    const CVector& psi = ensemble[p].states[knot].amplitudes();
    acc += w[p] * psi * psi.adjoint();
    sw += w[p];
  }
  if (!(sw > 0.0)) throw InvalidArgument("ensemble_density: all weights are zero");
  return acc / sw;
}

Estimate trace_distance_estimate(const WeightedEnsemble& ensemble, std::size_t knot, const CMatrix& reference) {
  const std::vector<double> w = ensemble.weights(knot);
  const auto d = static_cast<Eigen::Index>(ensemble[0].states.at(knot).dim());
  CMatrix acc = CMatrix::Zero(d, d);
  double sw = 0.0;
  for (std::size_t p = 0; p < ensemble.size(); ++p) {
    const CVector& psi = ensemble[p].states[knot].amplitudes();
    acc += w[p] * psi * psi.adjoint();
    sw += w[p];
  }
  Estimate e;
  e.value = trace_distance(acc / sw, reference);
  const std::size_t n = ensemble.size();
  if (n < 2) return e;
  std::vector<double> loo(n);
  double mean = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const CVector& psi = ensemble[p].states[knot].amplitudes();
    const double rest = sw - w[p];
    loo[p] = rest > 0.0 ? trace_distance((acc - w[p] * psi * psi.adjoint()) / rest, reference) : e.value;
    mean += loo[p];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  e.std_error = std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
  return e;
}

BornTable born_weights(const WeightedEnsemble& ensemble, const CommutingFamily& family, std::size_t knot,
                       double threshold, double strict_threshold) {
  if (family.dim() != ensemble[0].states.at(knot).dim()) throw InvalidArgument("born_weights: dimension mismatch");
  const auto spaces = family.eigenspaces();
  const std::vector<double> w = ensemble.weights(knot);
  const double sw = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(sw > 0.0)) throw InvalidArgument("born_weights: all weights are zero");
  BornTable table;
  table.threshold = threshold;
  table.strict_threshold = strict_threshold;
  table.effective_size = ensemble.effective_size(knot);
  double resolved = 0.0, resolved_strict = 0.0;
  for (const auto& space : spaces) {
    BornRow row;
    row.eigenvalues = space.eigenvalues;
    double init = 0.0, frac = 0.0, strict = 0.0;
    for (std::size_t p = 0; p < ensemble.size(); ++p) {
      const CVector& psi0 = ensemble[p].states.front().amplitudes();
      init += w[p] * psi0.dot(space.projector * psi0).real();
      const CVector& psi = ensemble[p].states[knot].amplitudes();
      const double pop = psi.dot(space.projector * psi).real();
      if (pop > threshold) frac += w[p];
      if (pop > strict_threshold) strict += w[p];
    }
    row.initial_population = init / sw;
    row.fraction = frac / sw;
    row.fraction_strict = strict / sw;
    const double q = std::clamp(row.initial_population, 0.0, 1.0);
    row.std_error = std::sqrt(q * (1.0 - q) / std::max(1.0, table.effective_size));
    resolved += row.fraction;
    resolved_strict += row.fraction_strict;
    if (row.fraction > 0.0) table.any_concentrated = true;
    table.rows.push_back(std::move(row));
  }
  table.unresolved = std::max(0.0, 1.0 - resolved);
  table.unresolved_strict = std::max(0.0, 1.0 - resolved_strict);
  return table;
}

PhysicalNoiseSampler::PhysicalNoiseSampler(const ModelSpec& model, const StateVector& psi0, SamplingMethod method)
    : raw_(model.kernel(), model.grid(), method) {
  if (!model.hamiltonian_commutes()) {
    throw InvalidArgument("PhysicalNoiseSampler: H must vanish or commute with every A_i");
  }
  if (psi0.dim() != model.dim() || !psi0.is_normalized(1e-10)) {
    throw InvalidArgument("PhysicalNoiseSampler: initial state must be normalized and match the model");
  }
  const TimeGrid& grid = model.grid();
  const std::size_t n = model.size();
  std::vector<RMatrix> f(grid.knots());
  for (std::size_t k = 0; k < grid.knots(); ++k) f[k] = model.kernel().f_matrix_from_right(grid.time(k));
  const double scale = 4.0 * std::sqrt(model.gamma()) * model.xi_r();
  for (const auto& space : model.family().eigenspaces()) {
    probs_.push_back(psi0.amplitudes().dot(space.projector * psi0.amplitudes()).real());
    RMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.knots()));
    for (std::size_t k = 0; k < grid.knots(); ++k) m.col(static_cast<Eigen::Index>(k)) = scale * f[k] * space.eigenvalues;
    shifts_.push_back(std::move(m));
  }
}

NoiseRealization PhysicalNoiseSampler::sample(std::uint64_t seed, std::uint64_t index, std::size_t* branch) const {
  auto rng = make_stream(seed, index, 1);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::size_t b = 0;
  double acc = 0.0;
  for (; b + 1 < probs_.size(); ++b) {
    acc += probs_[b];
    if (u < acc) break;
  }
  // Skip zero-probability branches that rounding might select.
  while (probs_[b] <= 0.0 && b > 0) --b;
  if (branch != nullptr) *branch = b;
  const NoiseRealization base = raw_.sample(seed, index);
  return NoiseRealization(base.samples() + shifts_[b], base.grid(), base.white());
}

WeightedEnsemble run_ensemble(const ModelSpec& model, const EnsembleRequest& request) {
  if (request.n_paths == 0) throw InvalidArgument("run_ensemble: n_paths must be positive");
  if (!scheme::is_trajectory(request.scheme)) throw InvalidArgument("unknown trajectory scheme '" + request.scheme + "'");
  const bool linear = scheme::is_linear(request.scheme);
  const bool branch_mixture =
      request.measure == MeasureKind::p_direct && request.scheme == scheme::nonlinear_colored_commuting;
  if (request.measure == MeasureKind::p_direct && linear) {
    throw InvalidArgument("P-direct sampling needs a norm-preserving scheme; use Q-reweighted for linear schemes");
  }
  EvolveOptions options = request.options;
  if (request.measure == MeasureKind::q_reweighted && !linear) {
    if (request.scheme != scheme::nonlinear_colored_commuting) {
      throw InvalidArgument("Q-reweighting is available for linear schemes and the commuting nonlinear scheme");
    }
    options.track_weights = true;
  }

  std::optional<MemoryTable> memory;
  if (request.scheme == scheme::linear_memory_kernel || request.scheme == scheme::nonlinear_secIII ||
      request.scheme == scheme::perturbative_order_gamma) {
    memory.emplace(MemoryTable::on_grid(model, 1, options.memory));
  }
  std::optional<PhysicalNoiseSampler> physical;
  std::optional<NoiseSampler> raw;
  if (branch_mixture) {
    physical.emplace(model, request.psi0);
  } else {
    raw.emplace(model.kernel(), model.grid());
  }

  std::vector<Trajectory> paths(request.n_paths);
  parallel_for(request.n_paths, request.workers, [&](std::size_t p) {
    const NoiseRealization noise = branch_mixture ? physical->sample(request.seed, p) : raw->sample(request.seed, p);
    try {
      paths[p] = evolve(request.scheme, model, noise, request.psi0, memory ? &*memory : nullptr, options);
    } catch (const NumericalError& e) {
      throw NumericalError("path " + std::to_string(p) + ": " + e.what(), e.step());
    }
  });
  return WeightedEnsemble(std::move(paths), request.measure);
}

RMatrix trajectory_expectations(const Trajectory& trajectory, const CommutingFamily& family) {
  RMatrix out(static_cast<Eigen::Index>(family.size()), static_cast<Eigen::Index>(trajectory.states.size()));
  for (std::size_t k = 0; k < trajectory.states.size(); ++k)
    for (std::size_t i = 0; i < family.size(); ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          detail::raw_expectation(family.op(i).matrix(), trajectory.states[k].amplitudes()).real();
  return out;
}

NoiseShift compute_noise_shift(const ModelSpec& model, const RMatrix& expectations,
                               const std::vector<std::size_t>& readout_knots, bool markovian) {
  const TimeGrid& grid = model.grid();
  const auto n = static_cast<Eigen::Index>(model.size());
  const auto knots = static_cast<Eigen::Index>(grid.knots());
  if (expectations.rows() != n || expectations.cols() != knots) {
    throw InvalidArgument("compute_noise_shift: expectations must be N x (M+1)");
  }
  if (!model.hamiltonian_commutes() && !markovian) {
    throw InvalidArgument(
        "compute_noise_shift: A_j(s-t) is not a combination of the A_i (H does not commute); "
        "pass the Markovian override to use the time-zero operators");
  }
  NoiseShift shift;
  shift.grid = grid;
  shift.k = RMatrix::Zero(n, knots);
  const double scale = 2.0 * std::sqrt(model.gamma()) * model.xi_r();
  for (Eigen::Index k = 0; k < knots; ++k) {
    const RMatrix f = model.kernel().f_matrix(grid.time(static_cast<std::size_t>(k)));
    shift.k.col(k) = scale * (f + f.transpose()) * expectations.col(k);
  }
  if (!shift.k.allFinite()) throw NumericalError("compute_noise_shift: non-finite shift");

  const double dt = grid.dt();
  const bool white = model.kernel().is_white();
  std::vector<RMatrix> lags;
  if (!white)
    for (Eigen::Index l = 0; l < knots; ++l) lags.push_back(model.kernel().value(grid.time(static_cast<std::size_t>(l))));
  for (std::size_t m : readout_knots) {
    if (m >= grid.knots()) throw InvalidArgument("compute_noise_shift: readout knot beyond the grid");
    const auto len = static_cast<Eigen::Index>(m + 1);
    // E_Q[w_i(s_k) w_j(s_l)] restricted to knots 0..m.
    RMatrix cov = RMatrix::Zero(n * len, n * len);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index a = 0; a < len; ++a)
          for (Eigen::Index b = 0; b < len; ++b) {
            if (white) {
              if (a == b) cov(i * len + a, j * len + b) = model.kernel().strength()(i, j) / dt;
            } else {
              cov(i * len + a, j * len + b) = lags[static_cast<std::size_t>(std::abs(a - b))](i, j);
            }
          }
    RVector rhs(n * len);
    for (Eigen::Index i = 0; i < n; ++i) rhs.segment(i * len, len) = shift.k.row(i).head(len).transpose();
    const double diag = std::max(cov.diagonal().maxCoeff(), 1e-300);
    RVector beta;
    bool solved = false;
    for (const double jitter : {1e-12, 1e-10, 1e-8}) {
      RMatrix shifted = cov;
      shifted.diagonal().array() += jitter * diag;
      Eigen::LLT<RMatrix> llt(shifted);
      if (llt.info() == Eigen::Success) {
        beta = llt.solve(rhs);
        solved = true;
        break;
      }
    }
    if (!solved || !beta.allFinite()) throw NumericalError("compute_noise_shift: singular kernel system", m);
    RMatrix b(n, len), c(n, len);
    for (Eigen::Index i = 0; i < n; ++i) {
      b.row(i) = beta.segment(i * len, len).transpose();
      for (Eigen::Index l = 0; l < len; ++l) {
        const double w = (l == 0 || l == len - 1) ? 0.5 : 1.0;
        c(i, l) = b(i, l) / (dt * w);
      }
    }
    shift.beta[m] = std::move(b);
    shift.c[m] = std::move(c);
  }
  return shift;
}

NoiseRealization apply_shift(const NoiseRealization& noise, const NoiseShift& shift) {
  if (!(noise.grid() == shift.grid) || noise.samples().rows() != shift.k.rows()) {
    throw InvalidArgument("apply_shift: noise and shift do not match");
  }
  return NoiseRealization(noise.samples() - shift.k, noise.grid(), noise.white());
}

double measure_weight_factor(const NoiseShift& shift, const NoiseRealization& noise, std::size_t knot) {
  const auto it = shift.beta.find(knot);
  if (it == shift.beta.end()) throw InvalidArgument("measure_weight_factor: knot was not a readout knot of the shift");
  const RMatrix& b = it->second;
  double w = 1.0;
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index l = 0; l < b.cols(); ++l) w += b(i, l) * noise.value(static_cast<std::size_t>(i), static_cast<std::size_t>(l));
  return w;
}

}  // namespace collapse

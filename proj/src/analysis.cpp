#include "collapse/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "collapse/errors.hpp"
#include "collapse/parallel.hpp"

namespace collapse {

namespace {

// Weighted mean over paths at one knot; unweighted ensembles use s / sqrt(n).
Estimate mean_at(const std::vector<double>& x, const std::vector<double>& w, bool weighted) {
  if (weighted) return weighted_mean(x, w);
  Estimate e;
  const double n = static_cast<double>(x.size());
  e.value = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() < 2) return e;
  double ss = 0.0;
  for (double v : x) ss += (v - e.value) * (v - e.value);
  e.std_error = std::sqrt(ss / (n - 1.0) / n);
  return e;
}

double slope(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = static_cast<double>(t.size());
  const double tm = std::accumulate(t.begin(), t.end(), 0.0) / n;
  const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    num += (t[k] - tm) * (y[k] - ym);
    den += (t[k] - tm) * (t[k] - tm);
  }
  return num / den;
}

}  // namespace

EnsembleStats ensemble_stats(const WeightedEnsemble& ensemble, const CommutingFamily& family) {
  const TimeGrid& grid = ensemble.grid();
  const std::size_t n = ensemble.size();
  const bool weighted = ensemble.kind() == MeasureKind::q_reweighted;
  EnsembleStats stats;
  stats.n_paths = n;
  stats.measure = ensemble.kind();
  stats.degenerate = n < 2;
  for (std::size_t k = 0; k < grid.knots(); ++k) stats.times.push_back(grid.time(k));
  for (std::size_t i = 0; i < family.size(); ++i) {
    ObservableSeries mean{"<A" + std::to_string(i) + ">", {}, {}, {}};
    ObservableSeries var{"V(A" + std::to_string(i) + ")", {}, {}, {}};
    const CMatrix& a = family.op(i).matrix();
    const CMatrix a2 = a * a;
    std::vector<double> x(n), v(n);
    for (std::size_t k = 0; k < grid.knots(); ++k) {
      const std::vector<double> w = ensemble.weights(k);
      for (std::size_t p = 0; p < n; ++p) {
        const CVector& psi = ensemble[p].states[k].amplitudes();
        x[p] = detail::raw_expectation(a, psi).real();
        v[p] = std::max(0.0, detail::raw_expectation(a2, psi).real() - x[p] * x[p]);
      }
      const auto record = [&](const std::vector<double>& vals, ObservableSeries& out) {
        const Estimate e = mean_at(vals, w, weighted);
        double spread = 0.0;
        if (n >= 2) {
          const double sw = std::accumulate(w.begin(), w.end(), 0.0);
          for (std::size_t p = 0; p < n; ++p) spread += w[p] * (vals[p] - e.value) * (vals[p] - e.value);
          spread = spread / sw * static_cast<double>(n) / static_cast<double>(n - 1);
        }
        out.mean.push_back(e.value);
        out.variance.push_back(spread);
        out.std_error.push_back(stats.degenerate ? 0.0 : e.std_error);
      };
      record(x, mean);
      record(v, var);
    }
    stats.observables.push_back(std::move(mean));
    stats.observables.push_back(std::move(var));
  }
  return stats;
}

CollapseReport collapse_report(const WeightedEnsemble& ensemble, const ModelSpec& model, const CollapseGates& gates) {
  if (ensemble.scheme().empty()) throw InvalidArgument("collapse_report: ensemble mixes trajectory schemes");
  if (ensemble.size() < 2) throw InvalidArgument("collapse_report: need at least two paths");
  const TimeGrid& grid = ensemble.grid();
  if (!(grid == model.grid())) throw InvalidArgument("collapse_report: ensemble grid differs from the model grid");
  const CommutingFamily& family = model.family();
  const std::size_t nops = family.size();
  const std::size_t n = ensemble.size();
  const std::size_t knots = grid.knots();
  const bool weighted = ensemble.kind() == MeasureKind::q_reweighted;
  const double pref = 8.0 * model.xi_r() * model.xi_r() * model.gamma();

  std::vector<RMatrix> f(knots);
  for (std::size_t k = 0; k < knots; ++k) f[k] = model.kernel().f_matrix_from_right(grid.time(k));
  std::vector<CMatrix> a, aa;
  for (std::size_t i = 0; i < nops; ++i) a.push_back(family.op(i).matrix());
  for (std::size_t i = 0; i < nops; ++i)
    for (std::size_t j = 0; j < nops; ++j) aa.push_back(a[i] * a[j]);

  // Per path, per operator: variance and the running identity integral.
  std::vector<std::vector<std::vector<double>>> var(nops, std::vector<std::vector<double>>(n, std::vector<double>(knots)));
  std::vector<std::vector<std::vector<double>>> integral = var;
  std::vector<std::vector<std::vector<double>>> mean = var;
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<double> prev(nops, 0.0);
    for (std::size_t k = 0; k < knots; ++k) {
      const CVector& psi = ensemble[p].states[k].amplitudes();
      RVector ex(static_cast<Eigen::Index>(nops));
      RMatrix cross(static_cast<Eigen::Index>(nops), static_cast<Eigen::Index>(nops));
      for (std::size_t i = 0; i < nops; ++i) ex(static_cast<Eigen::Index>(i)) = detail::raw_expectation(a[i], psi).real();
      for (std::size_t i = 0; i < nops; ++i)
        for (std::size_t j = 0; j < nops; ++j)
          cross(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              detail::raw_expectation(aa[i * nops + j], psi).real();
      for (std::size_t q = 0; q < nops; ++q) {
        const auto qq = static_cast<Eigen::Index>(q);
        mean[q][p][k] = ex(qq);
        var[q][p][k] = cross(qq, qq) - ex(qq) * ex(qq);
        // <(A_i - <A_i>) A> for A = A_q
        RVector cov(static_cast<Eigen::Index>(nops));
        for (std::size_t i = 0; i < nops; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          cov(ii) = cross(ii, qq) - ex(ii) * ex(qq);
        }
        const double integrand = cov.dot(f[k] * cov);
        integral[q][p][k] = k == 0 ? 0.0 : integral[q][p][k - 1] + 0.5 * grid.dt() * (prev[q] + integrand);
        prev[q] = integrand;
      }
    }
  }

  CollapseReport report;
  for (std::size_t k = 0; k < knots; ++k) report.times.push_back(grid.time(k));
  report.variance_mean.assign(nops, {});
  report.variance_error.assign(nops, {});
  report.predicted_variance.assign(nops, {});
  std::vector<std::vector<double>> weights(knots);
  for (std::size_t k = 0; k < knots; ++k) weights[k] = ensemble.weights(k);

  std::vector<double> col(n);
  for (std::size_t q = 0; q < nops; ++q) {
    for (std::size_t k = 0; k < knots; ++k) {
      for (std::size_t p = 0; p < n; ++p) col[p] = var[q][p][k];
      const Estimate v = mean_at(col, weights[k], weighted);
      for (std::size_t p = 0; p < n; ++p) col[p] = integral[q][p][k];
      const Estimate j = mean_at(col, weights[k], weighted);
      report.variance_mean[q].push_back(v.value);
      report.variance_error[q].push_back(v.std_error);
      const double v0 = report.variance_mean[q].front();
      report.predicted_variance[q].push_back(v0 - pref * j.value);
    }
    // Identity residual at the checkpoints.
    for (std::size_t c = 1; c <= gates.checkpoints; ++c) {
      const std::size_t k = std::max<std::size_t>(1, (grid.steps() * c) / gates.checkpoints);
      for (std::size_t p = 0; p < n; ++p) col[p] = var[q][p][k] - var[q][p][0] + pref * integral[q][p][k];
      const Estimate r = mean_at(col, weights[k], weighted);
      DecrementCheck check;
      check.op = q;
      check.time = grid.time(k);
      check.observed = report.variance_mean[q].front() - report.variance_mean[q][k];
      check.predicted = report.variance_mean[q].front() - report.predicted_variance[q][k];
      check.residual = r.value;
      check.residual_error = r.std_error;
      check.pass = std::abs(r.value) <= gates.mean_sigmas * r.std_error + 1e-10;
      report.decrements.push_back(check);
    }
    // Martingale slope with a grouped jackknife.
    std::vector<double> series(knots);
    const std::size_t groups = std::min(gates.jackknife_groups, n);
    auto mean_series = [&](std::size_t skip) {
      for (std::size_t k = 0; k < knots; ++k) {
        double sw = 0.0, sx = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          if (p % groups == skip) continue;
          sw += weights[k][p];
          sx += weights[k][p] * mean[q][p][k];
        }
        series[k] = sx / sw;
      }
      return slope(report.times, series);
    };
    const double full = mean_series(groups);
    std::vector<double> loo(groups);
    for (std::size_t g = 0; g < groups; ++g) loo[g] = mean_series(g);
    const double lm = std::accumulate(loo.begin(), loo.end(), 0.0) / static_cast<double>(groups);
    double ss = 0.0;
    for (double s : loo) ss += (s - lm) * (s - lm);
    const double se = std::sqrt(ss * static_cast<double>(groups - 1) / static_cast<double>(groups));
    report.martingale_slope.push_back(full);
    report.martingale_error.push_back(se);
    report.martingale_pass.push_back(std::abs(full) <= gates.mean_sigmas * se + 1e-12);
  }
  report.decrement_pass = std::all_of(report.decrements.begin(), report.decrements.end(),
                                      [](const DecrementCheck& c) { return c.pass; });

  report.born = born_weights(ensemble, family, grid.steps(), gates.population_threshold);
  report.born_pass = std::all_of(report.born.rows.begin(), report.born.rows.end(), [&](const BornRow& r) {
    return std::abs(r.fraction - r.initial_population) <= gates.born_sigmas * r.std_error + 1e-9;
  });
  report.final_variance = 0.0;
  for (std::size_t q = 0; q < nops; ++q) report.final_variance = std::max(report.final_variance, report.variance_mean[q].back());
  if (report.final_variance >= gates.variance_threshold) {
    report.verdict = "no reduction";
  } else if (!report.born_pass) {
    report.verdict = "born mismatch";
  } else {
    report.verdict = "collapsed";
  }
  return report;
}

PhaseInvarianceReport phase_invariance_report(const ModelSpec& model, std::span<const double> thetas,
                                              const DensityMatrix& rho0, std::span<const double> gammas,
                                              const HierarchyOptions& options) {
  if (std::abs(std::abs(model.xi()) - 1.0) > 1e-12) throw InvalidArgument("phase_invariance_report: |xi| must be 1");
  PhaseInvarianceReport report;
  std::function<CMatrix(const ModelSpec&)> final_rho;
  switch (model.kernel().kind()) {
    case KernelKind::white:
      report.method = scheme::master_white;
      final_rho = [&](const ModelSpec& m) { return evolve_master_white(m, rho0).rho.back(); };
      break;
    case KernelKind::exponential:
      report.method = scheme::linear_hierarchy;
      final_rho = [&](const ModelSpec& m) { return exact_linear_average(m, rho0, options).rho.back(); };
      break;
    case KernelKind::spectral:
      throw InvalidArgument("phase_invariance_report: spectral kernels are not supported");
  }
  std::vector<double> lg, ld;
  for (const double gamma : gammas) {
    const ModelSpec base = model.with_gamma(gamma);
    CMatrix ref = final_rho(base.with_xi(1.0));
    ref /= ref.trace();
    double total = 0.0;
    std::size_t count = 0;
    for (const double theta : thetas) {
      CMatrix rho = final_rho(base.with_xi(std::polar(1.0, theta)));
      rho /= rho.trace();
      const double dist = trace_distance(rho, ref);
      report.rows.push_back({gamma, theta, dist});
      if (theta != 0.0) {
        total += dist;
        ++count;
      }
    }
    if (count > 0 && total / static_cast<double>(count) > 1e-14 && gamma > 0.0) {
      lg.push_back(std::log(gamma));
      ld.push_back(std::log(total / static_cast<double>(count)));
    }
  }
  if (lg.size() >= 2) report.exponent = slope(lg, ld);
  return report;
}

EnergyGainCurve energy_gain_curve(const EnergyModel& em, const TimeGrid& grid, std::size_t n_paths,
                                  std::uint64_t seed, std::size_t workers) {
  if (!(em.mass > 0.0)) throw InvalidArgument("energy_gain_curve: mass must be positive");
  if (em.kernel.size() != 1) throw InvalidArgument("energy_gain_curve: single-noise kernel required");
  if (grid.steps() < 4) throw InvalidArgument("energy_gain_curve: degenerate grid (need at least 4 steps)");
  if (n_paths < 2) throw InvalidArgument("energy_gain_curve: need at least two paths");
  const std::size_t knots = grid.knots();
  const double dt = grid.dt();
  const NoiseSampler sampler(em.kernel, grid);

  // Fixed chunking keeps the reduction order independent of worker count.
  constexpr std::size_t chunks = 64;
  std::vector<std::vector<double>> sum(chunks, std::vector<double>(knots, 0.0));
  std::vector<std::vector<double>> sum2 = sum, wide = sum;
  parallel_for(chunks, workers, [&](std::size_t c) {
    std::vector<double> e(knots);
    for (std::size_t p = c; p < n_paths; p += chunks) {
      const NoiseRealization w = sampler.sample(seed, p);
      const std::vector<double> integ = w.integrated(0);
      for (std::size_t k = 0; k < knots; ++k) {
        const double mom = em.p0 + em.coupling * integ[k];
        e[k] = mom * mom / (2.0 * em.mass);
      }
      for (std::size_t k = 0; k < knots; ++k) {
        double r;
        if (k == 0) {
          r = (-3.0 * e[0] + 4.0 * e[1] - e[2]) / (2.0 * dt);
        } else if (k + 1 == knots) {
          r = (3.0 * e[k] - 4.0 * e[k - 1] + e[k - 2]) / (2.0 * dt);
        } else {
          r = (e[k + 1] - e[k - 1]) / (2.0 * dt);
        }
        sum[c][k] += r;
        sum2[c][k] += r * r;
        if (k >= 2 && k + 2 < knots) {
          wide[c][k] += (e[k + 2] - e[k - 2]) / (4.0 * dt);
        } else if (k == 0 && knots >= 5) {
          wide[c][k] += (-3.0 * e[0] + 4.0 * e[2] - e[4]) / (4.0 * dt);
        } else if (k + 1 == knots && knots >= 5) {
          wide[c][k] += (3.0 * e[k] - 4.0 * e[k - 2] + e[k - 4]) / (4.0 * dt);
        }
      }
    }
  });

  EnergyGainCurve out;
  out.n_paths = n_paths;
  const double n = static_cast<double>(n_paths);
  const double c2 = em.coupling * em.coupling;
  for (std::size_t k = 0; k < knots; ++k) {
    double s = 0.0, s2 = 0.0, sw = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      s += sum[c][k];
      s2 += sum2[c][k];
      sw += wide[c][k];
    }
    const double mean = s / n;
    const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
    const double t = grid.time(k);
    out.times.push_back(t);
    out.analytic_rate.push_back(c2 * em.kernel.f_matrix_from_right(t)(0, 0) / em.mass);
    out.mc_rate.push_back(mean);
    out.std_error.push_back(std::sqrt(var / n));
    const bool covered = (k >= 2 && k + 2 < knots) || ((k == 0 || k + 1 == knots) && knots >= 5);
    out.richardson_gap.push_back(covered ? std::abs((4.0 * mean - sw / n) / 3.0 - mean) : 0.0);
  }
  return out;
}

ReductionVerdict reduction_criterion(const CorrelationKernel& kernel, double horizon) {
  ReductionVerdict v;
  switch (kernel.kind()) {
    case KernelKind::white:
    case KernelKind::exponential:
      v.limit = 0.5 * kernel.strength();
      if (horizon <= 0.0) horizon = kernel.kind() == KernelKind::white ? 1.0 : 50.0 / kernel.rate();
      break;
    case KernelKind::spectral:
      v.limit = spectral_f_limit(kernel).limit;
      // Beyond ~1/omega_1 the piecewise-linear table invents low-frequency
      // weight, so the growth test stays below that scale.
      if (horizon <= 0.0) horizon = 0.1 / kernel.table().omega[1];
      break;
  }
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(v.limit);
  v.eigenvalues = solver.eigenvalues();
  v.eigenvectors = solver.eigenvectors();
  const double scale = std::max(1e-300, v.limit.cwiseAbs().maxCoeff());
  v.positive_definite = v.limit.cwiseAbs().maxCoeff() > 0.0 && v.eigenvalues.minCoeff() > 1e-12 * scale;

  const RMatrix g1 = kernel.g_matrix(horizon);
  const RMatrix g2 = kernel.g_matrix(2.0 * horizon);
  const RMatrix g4 = kernel.g_matrix(4.0 * horizon);
  const double gscale = std::max(1e-300, g4.cwiseAbs().maxCoeff());
  bool all_diverge = true;
  for (Eigen::Index e = 0; e < v.eigenvectors.cols(); ++e) {
    const RVector u = v.eigenvectors.col(e);
    const double d1 = u.dot((g2 - g1) * u);
    const double d2 = u.dot((g4 - g2) * u);
    // Increments of a convergent integral shrink geometrically; power-law or
    // logarithmic growth keeps them from shrinking.
    const bool diverges = d2 > 1e-12 * gscale && d1 > 0.0 && d2 >= 0.75 * d1;
    v.growth_rate.push_back(d2 / (2.0 * horizon));
    v.integral_diverges.push_back(diverges);
    all_diverge = all_diverge && diverges;
  }
  if (v.positive_definite) {
    v.verdict = "reduction";
  } else if (all_diverge) {
    v.verdict = "reduction (integral criterion)";
  } else {
    v.verdict = "no reduction";
  }
  return v;
}

}  // namespace collapse

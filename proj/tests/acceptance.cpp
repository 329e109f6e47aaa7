// Acceptance criteria, one pass/fail line each.
//   acceptance        run all twelve
//   acceptance N      run criterion N only
// Exit status is 0 iff every selected criterion passes. Tolerances are
// pinned below and not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "collapse/analysis.hpp"
#include "collapse/parallel.hpp"

using namespace collapse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

RMatrix sigma_z_row() {
  RMatrix lam(1, 2);
  lam << 1.0, -1.0;
  return lam;
}

const StateVector& psi_036() {
  static const StateVector psi(CVector{{0.6, 0.8}});
  return psi;
}

RMatrix one() { return RMatrix::Identity(1, 1); }

// 1 -------------------------------------------------------------------------
Outcome white_endpoint() {
  const auto k = CorrelationKernel::white(one());
  RMatrix c2(2, 2);
  c2 << 1.0, 0.3, 0.3, 2.0;
  const auto k2 = CorrelationKernel::white(c2);
  bool exact = true;
  for (double t : {1e-6, 0.1, 1.0, 7.5, 100.0}) {
    exact = exact && k.f_matrix(t)(0, 0) == 0.5;
    exact = exact && k2.f_matrix(t) == RMatrix(0.5 * c2);
  }
  return {exact, f("F(t) == c/2 exactly for t in {1e-6, 0.1, 1, 7.5, 100}; F(1)=%.17g", k.f_matrix(1.0)(0, 0))};
}

// 2 -------------------------------------------------------------------------
Outcome spectral_limit() {
  const double pi = std::numbers::pi;
  const auto k = CorrelationKernel::tabulate(one(), [&](double w) { return std::exp(-w) / pi; }, 20.0, 2001);
  const double got = k.f_matrix(50.0)(0, 0);
  const double target = pi * (1.0 / pi);
  // int_0^inf e^{-w} sin(w t) / w dw = atan(t)
  const double closed_form = std::atan(50.0) / pi;
  const bool pass = std::abs(got / target - 1.0) <= 0.02;
  return {pass, f("F(50)=%.6f target pi*gamma(0)=%.6f (tol 2%%); closed form atan(50)/pi=%.6f, limit (pi/2)gamma(0)=0.5",
                  got, target, closed_form)};
}

// 3-5 shared run ---------------------------------------------------------------
struct CollapseRun {
  ModelSpec model;
  WeightedEnsemble ensemble;
};

const CollapseRun& collapse_run() {
  static const CollapseRun run = [] {
    ModelSpec m(HermitianOperator::zero(2), CommutingFamily::diagonal(sigma_z_row()), 1.0, 1.0,
                CorrelationKernel::exponential(one(), 5.0), TimeGrid(10.0, 1000));
    EnsembleRequest req;
    req.scheme = scheme::nonlinear_colored_commuting;
    req.psi0 = psi_036();
    req.n_paths = 1000;
    req.seed = 20240301;
    req.measure = MeasureKind::p_direct;
    req.options.keep_noise = false;
    return CollapseRun{m, run_ensemble(m, req)};
  }();
  return run;
}

double pop_up(const StateVector& s) { return std::norm(s[0]); }
double var_z(const StateVector& s) {
  const double z = std::norm(s[0]) - std::norm(s[1]);
  return 1.0 - z * z;
}

Outcome collapse_and_born() {
  const auto& run = collapse_run();
  const auto& ens = run.ensemble;
  const std::size_t n = ens.size(), last = ens.grid().steps();
  double vmean = 0.0;
  std::size_t up = 0, down = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const StateVector& s = ens[p].states[last];
    vmean += var_z(s) / static_cast<double>(n);
    if (pop_up(s) > 0.99) ++up;
    else if (pop_up(s) < 0.01) ++down;
  }
  const double nn = static_cast<double>(n);
  const double fu = up / nn, fd = down / nn;
  const double se = std::sqrt(0.36 * 0.64 / nn);
  const bool pass = vmean < 1e-3 && std::abs(fu - 0.36) <= 3.0 * se && std::abs(fd - 0.64) <= 3.0 * se;
  return {pass, f("E_P[V]=%.2e (<1e-3); fractions %.3f/%.3f vs 0.36/0.64, binomial sigma %.4f (3 sigma)", vmean, fu,
                  fd, se)};
}

Outcome martingale() {
  const auto& ens = collapse_run().ensemble;
  const TimeGrid& g = ens.grid();
  const std::size_t n = ens.size();
  // The slope of the mean equals the mean of per-path least-squares slopes.
  double tm = 0.0, den = 0.0;
  for (std::size_t k = 0; k < g.knots(); ++k) tm += g.time(k) / static_cast<double>(g.knots());
  for (std::size_t k = 0; k < g.knots(); ++k) den += (g.time(k) - tm) * (g.time(k) - tm);
  std::vector<double> slopes(n);
  for (std::size_t p = 0; p < n; ++p) {
    double num = 0.0;
    for (std::size_t k = 0; k < g.knots(); ++k) {
      const StateVector& s = ens[p].states[k];
      num += (g.time(k) - tm) * (std::norm(s[0]) - std::norm(s[1]));
    }
    slopes[p] = num / den;
  }
  double m = 0.0, ss = 0.0;
  for (double s : slopes) m += s / static_cast<double>(n);
  for (double s : slopes) ss += (s - m) * (s - m);
  const double se = std::sqrt(ss / (n - 1.0) / n);
  return {std::abs(m) <= 4.0 * se, f("slope of E_P[<sz>] = %.3e +- %.3e (4 sigma)", m, se)};
}

Outcome variance_decrement() {
  const auto& run = collapse_run();
  const auto& ens = run.ensemble;
  const TimeGrid& g = ens.grid();
  const std::size_t n = ens.size();
  const double gamma = 1.0, lambda = 5.0;
  // V(t) - V(0) + 8 gamma int_0^t F(s) V(s)^2 ds has zero mean; F = (1 - e^{-lambda s}) / 2.
  bool pass = true;
  std::string detail;
  for (double t : {2.0, 4.0, 6.0, 8.0, 10.0}) {
    const std::size_t kt = g.knot_at(t);
    std::vector<double> r(n);
    for (std::size_t p = 0; p < n; ++p) {
      double integral = 0.0;
      for (std::size_t k = 0; k < kt; ++k) {
        const auto h = [&](std::size_t q) {
          const double v = var_z(ens[p].states[q]);
          return 0.5 * (1.0 - std::exp(-lambda * g.time(q))) * v * v;
        };
        integral += 0.5 * g.dt() * (h(k) + h(k + 1));
      }
      r[p] = var_z(ens[p].states[kt]) - var_z(ens[p].states[0]) + 8.0 * gamma * integral;
    }
    double m = 0.0, ss = 0.0;
    for (double x : r) m += x / static_cast<double>(n);
    for (double x : r) ss += (x - m) * (x - m);
    const double se = std::sqrt(ss / (n - 1.0) / n);
    pass = pass && std::abs(m) <= 4.0 * se;
    detail += f("t=%g %.3f/%.3f ", t, m, se);
  }
  return {pass, "residual mean/se (4 sigma): " + detail};
}

// 6 -------------------------------------------------------------------------
Outcome unraveling() {
  const double gamma = 0.25, lambda = 2.0;
  const ModelSpec m(HermitianOperator::zero(2), CommutingFamily::diagonal(sigma_z_row()), gamma, 1.0,
                    CorrelationKernel::exponential(one(), lambda), TimeGrid(2.0, 200));
  EnsembleRequest req;
  req.scheme = scheme::linear_colored_commuting;
  req.psi0 = psi_036();
  req.n_paths = 10000;
  req.seed = 606;
  req.measure = MeasureKind::q_reweighted;
  req.options.keep_noise = false;
  const WeightedEnsemble ens = run_ensemble(m, req);
  const DensitySeries master = evolve_master_colored_commuting(m, pure_density(psi_036()));
  bool pass = true;
  std::string detail;
  for (double t : {0.5, 1.0, 2.0}) {
    const std::size_t k = m.grid().knot_at(t);
    // Closed form of the master equation for H = 0, A = sigma_z.
    const double g = 0.5 * (t - (1.0 - std::exp(-lambda * t)) / lambda);
    CMatrix exact(2, 2);
    exact << 0.36, 0.48 * std::exp(-4.0 * gamma * g), 0.48 * std::exp(-4.0 * gamma * g), 0.64;
    const double master_err = trace_distance(master.rho[k], exact);
    const Estimate td = trace_distance_estimate(ens, k, master.rho[k]);
    pass = pass && td.value <= 4.0 * td.std_error && master_err < 1e-8;
    detail += f("t=%g %.2e/%.2e ", t, td.value, td.std_error);
  }
  return {pass, "trace distance/se vs master (4 sigma; master vs closed form < 1e-8): " + detail};
}

// 7 -------------------------------------------------------------------------
Outcome imaginary_noise() {
  const DensityMatrix rho0 = pure_density(psi_036());
  std::vector<double> d;
  for (double gamma : {1e-3, 2e-3}) {
    const ModelSpec m(HermitianOperator::pauli_x(), CommutingFamily::diagonal(sigma_z_row()), gamma, 1.0,
                      CorrelationKernel::exponential(one(), 2.0), TimeGrid(2.0, 400));
    CMatrix real_noise = exact_linear_average(m, rho0).rho.back();
    CMatrix imag_noise = exact_linear_average(m.with_xi(Complex(0.0, 1.0)), rho0).rho.back();
    real_noise /= real_noise.trace();
    imag_noise /= imag_noise.trace();
    d.push_back(trace_distance(real_noise, imag_noise));
  }
  const double ratio = d[1] / d[0];
  return {std::abs(ratio / 4.0 - 1.0) <= 0.25,
          f("d(1e-3)=%.3e d(2e-3)=%.3e ratio %.3f (4 +- 25%%)", d[0], d[1], ratio)};
}

// 8 -------------------------------------------------------------------------
Outcome markov_limit() {
  const ModelSpec m(HermitianOperator::pauli_x(), CommutingFamily::diagonal(sigma_z_row()), 0.5, 1.0,
                    CorrelationKernel::exponential(one(), 100.0), TimeGrid(1.0, 200));
  const DensityMatrix rho0 = pure_density(psi_036());
  MasterOptions opts;
  opts.positivity_floor = -1e-3;  // order-gamma generator is not completely positive
  const double td = trace_distance(evolve_master_order_gamma(m, rho0, opts).rho.back(),
                                   evolve_master_markov_limit(m, rho0).rho.back());
  return {td < 0.01, f("trace distance at t=1: %.3e (< 1e-2), lambda = 100 ||H||", td)};
}

// 9 -------------------------------------------------------------------------
Outcome noise_shift() {
  std::vector<double> mismatch;
  const StateVector& psi0 = psi_036();
  for (double gamma : {1e-3, 4e-3}) {
    const ModelSpec m(HermitianOperator::zero(2), CommutingFamily::diagonal(sigma_z_row()), gamma, 1.0,
                      CorrelationKernel::exponential(one(), 2.0), TimeGrid(2.0, 200));
    double acc = 0.0;
    constexpr int paths = 20;
    for (int p = 0; p < paths; ++p) {
      const NoiseRealization w = sample_noise(m.kernel(), m.grid(), 99, static_cast<std::uint64_t>(p));
      const Trajectory direct = evolve_nonlinear_colored_commuting(m, w, psi0);
      const NoiseShift shift = compute_noise_shift(m, trajectory_expectations(direct, m.family()));
      const Trajectory shifted = evolve_nonlinear_secIII(m, apply_shift(w, shift), psi0);
      const CVector& a = direct.states.back().amplitudes();
      const CVector& b = shifted.states.back().amplitudes();
      const Complex phase = std::polar(1.0, std::arg(b.dot(a)));
      acc += (a - b * phase).norm() / paths;
    }
    mismatch.push_back(acc);
  }
  const double ratio = mismatch[1] / mismatch[0];
  return {std::abs(ratio / 8.0 - 1.0) <= 0.35,
          f("mismatch %.3e -> %.3e, ratio %.3f (8 +- 35%%)", mismatch[0], mismatch[1], ratio)};
}

// 10 ------------------------------------------------------------------------
Outcome energy_gain() {
  const double c = 1.3, mass = 0.7;
  std::string detail;
  bool pass = true;
  {
    EnergyModel em{mass, c, CorrelationKernel::white(one()), 0.0};
    const EnergyGainCurve curve = energy_gain_curve(em, TimeGrid(2.0, 100), 10000, 1010);
    double worst = 0.0;
    for (std::size_t k = 0; k < curve.times.size(); ++k)
      worst = std::max(worst, std::abs(curve.mc_rate[k] - c * c / (2.0 * mass)) / curve.std_error[k]);
    pass = pass && worst <= 4.0;
    detail += f("white worst |mc - C^2/2m|/se = %.2f; ", worst);
  }
  {
    const double lambda = 1.5;
    EnergyModel em{mass, c, CorrelationKernel::exponential(one(), lambda), 0.0};
    const EnergyGainCurve curve = energy_gain_curve(em, TimeGrid(3.0, 150), 10000, 1011);
    double worst = 0.0;
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
      const double want = c * c * (1.0 - std::exp(-lambda * curve.times[k])) / (2.0 * mass);
      worst = std::max(worst, std::abs(curve.mc_rate[k] - want) / curve.std_error[k]);
    }
    pass = pass && worst <= 4.0;
    detail += f("exponential worst |mc - C^2(1-e^{-lt})/2m|/se = %.2f", worst);
  }
  return {pass, detail + " (4 sigma, 1e4 paths)"};
}

// 11 ------------------------------------------------------------------------
Outcome furutsu_novikov() {
  bool pass = true;
  std::string detail;
  const double lambda = 2.0;
  const TimeGrid grid(2.0, 200);
  const auto expk = CorrelationKernel::exponential(one(), lambda);
  const auto white = CorrelationKernel::white(one());
  struct Case {
    const char* name;
    const CorrelationKernel* kernel;
    NoiseFunctional fn;
  };
  const std::vector<Case> cases{{"exp linear", &expk, NoiseFunctional::linear(0, 1.0)},
                                {"exp quadratic", &expk, NoiseFunctional::quadratic(0, 0.6, 0, 1.4)},
                                {"white linear", &white, NoiseFunctional::linear(0, 1.0)},
                                {"white quadratic", &white, NoiseFunctional::quadratic(0, 0.6, 0, 1.4)}};
  std::uint64_t seed = 1100;
  for (const auto& cs : cases) {
    const FurutsuNovikovReport r = check_furutsu_novikov(*cs.kernel, grid, 0, cs.fn, 10000, seed++);
    pass = pass && r.consistent(4.0);
    detail += f("%s %.2f sigma; ", cs.name, std::abs(r.lhs - r.rhs) / r.difference_error);
    if (&cs == &cases.front()) {
      // E[w(T) w(t1)] = (lambda/2) e^{-lambda (T - t1)}
      const double exact = 0.5 * lambda * std::exp(-lambda * 1.0);
      const bool ok = std::abs(r.lhs - exact) <= 4.0 * r.lhs_error;
      pass = pass && ok;
      detail += f("lhs %.4f vs kernel %.4f; ", r.lhs, exact);
    }
  }
  return {pass, detail + "1e4 samples, 4 sigma"};
}

// 12 ------------------------------------------------------------------------
Outcome convergence() {
  // Euler-Maruyama: E[V_sz(1)] at dt = 1/10 .. 1/80 driven by one fine
  // Brownian path per sample; ratios of successive level differences.
  constexpr std::size_t coarse = 10, levels = 4, paths = 20000;
  constexpr std::size_t fine = coarse << (levels - 1);
  std::vector<ModelSpec> models;
  for (std::size_t l = 0; l < levels; ++l)
    models.emplace_back(HermitianOperator::pauli_x(), CommutingFamily::diagonal(sigma_z_row()), 1.0, 1.0,
                        CorrelationKernel::white(one()), TimeGrid(1.0, coarse << l));
  std::vector<double> mean(levels, 0.0);
  for (std::size_t p = 0; p < paths; ++p) {
    std::mt19937_64 rng(0x5eed0000 + p);
    std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / fine));
    std::vector<double> dw(fine);
    for (double& x : dw) x = normal(rng);
    for (std::size_t l = 0; l < levels; ++l) {
      const std::size_t steps = coarse << l, group = fine / steps;
      RMatrix w = RMatrix::Zero(1, static_cast<Eigen::Index>(steps + 1));
      for (std::size_t k = 0; k < steps; ++k)
        for (std::size_t q = 0; q < group; ++q) w(0, static_cast<Eigen::Index>(k)) += dw[k * group + q] * steps;
      const Trajectory tr = evolve_ito_white(models[l], NoiseRealization(w, models[l].grid(), true), psi_036());
      mean[l] += var_z(tr.states.back()) / paths;
    }
  }
  const double em1 = (mean[0] - mean[1]) / (mean[1] - mean[2]);
  const double em2 = (mean[1] - mean[2]) / (mean[2] - mean[3]);

  // Heun, deterministic part: gamma = 0 against the exact propagator.
  const HermitianOperator h = HermitianOperator::pauli_x();
  const CVector exact = Propagator(h).at(2.0) * psi_036().amplitudes();
  std::vector<double> err;
  for (std::size_t steps : {20, 40, 80}) {
    const ModelSpec m(h, CommutingFamily::diagonal(sigma_z_row()), 0.0, 1.0, CorrelationKernel::white(one()),
                      TimeGrid(2.0, steps));
    const NoiseRealization zero(RMatrix::Zero(1, static_cast<Eigen::Index>(steps + 1)), m.grid(), true);
    err.push_back((evolve_stratonovich_white(m, zero, psi_036()).states.back().amplitudes() - exact).norm());
  }
  const double h1 = err[0] / err[1], h2 = err[1] / err[2];
  const auto near = [](double r, double want) { return std::abs(r / want - 1.0) <= 0.3; };
  return {near(em1, 2.0) && near(em2, 2.0) && near(h1, 4.0) && near(h2, 4.0),
          f("Euler-Maruyama %.3f %.3f (2 +- 30%%); Heun %.3f %.3f (4 +- 30%%)", em1, em2, h1, h2)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"white-limit endpoint", white_endpoint},
      {"spectral limit", spectral_limit},
      {"collapse and Born fractions", collapse_and_born},
      {"martingale", martingale},
      {"variance-decrement identity", variance_decrement},
      {"unraveling equivalence", unraveling},
      {"imaginary-noise trick", imaginary_noise},
      {"Markovian limit", markov_limit},
      {"noise shift", noise_shift},
      {"energy gain", energy_gain},
      {"Furutsu-Novikov", furutsu_novikov},
      {"convergence orders", convergence},
  };
  std::size_t only = 0;
  if (argc > 1) {
    only = static_cast<std::size_t>(std::strtoul(argv[1], nullptr, 10));
    if (only < 1 || only > criteria.size()) {
      std::fprintf(stderr, "criterion must be 1..%zu\n", criteria.size());
      return 2;
    }
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && only != i + 1) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2zu %-28s %s  %s [%.1fs]\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

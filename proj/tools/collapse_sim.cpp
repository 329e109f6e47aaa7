// collapse-sim: command-line driver for trajectory ensembles, master
// equations, verification suites and noise diagnostics.
//
// Exit codes: 0 success, 1 gate failure, 2 configuration error,
// 3 numerical failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "collapse/analysis.hpp"
#include "collapse/config.hpp"
#include "collapse/errors.hpp"
#include "collapse/io.hpp"
#include "collapse/verify.hpp"

using namespace collapse;

namespace {

struct Common {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out = "out";
  std::string format;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* cfg = cmd->add_option("--config", c.config_path, "run configuration (JSON)");
  auto* pre = cmd->add_option("--preset", c.preset, "named configuration")
                  ->check(CLI::IsMember({"collapse", "white-vs-markov", "no-reduction"}));
  cfg->excludes(pre);
  if (config_required) cmd->require_option(1, 0);
  cmd->add_option("--seed", c.seed, "64-bit seed (overrides the config)");
  cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--format", c.format, "output format")->check(CLI::IsMember({"csv", "json"}));
}

std::optional<RunConfig> load(const Common& c) {
  std::optional<RunConfig> config;
  if (!c.config_path.empty()) config = load_config(c.config_path);
  else if (!c.preset.empty()) config = parse_config(preset_document(c.preset));
  if (config) {
    if (c.seed) override_seed(*config, *c.seed);
    if (!config->seed) throw ConfigError("seed is mandatory (config key 'seed' or --seed)");
    if (!c.format.empty()) config->outputs.formats = {c.format};
  }
  return config;
}

class Session {
 public:
  Session(std::string command, const Common& common) : common_(common), start_(std::chrono::steady_clock::now()) {
    manifest_.commands.push_back({std::move(command), 0});
  }

  void set_config(const RunConfig& config) {
    manifest_.config_hash = config.hash();
    prefix_ = config.outputs.prefix;
  }

  std::string path(const std::string& stem, const std::string& ext) const {
    return (std::filesystem::path(common_.out) / (prefix_ + "_" + stem + "." + ext)).string();
  }

  void emit(const std::string& stem, const std::string& ext, const std::string& text) {
    const std::string p = path(stem, ext);
    write_text_file(p, text);
    manifest_.outputs.push_back(p);
  }

  int finish(int status) {
    manifest_.commands.back().exit_status = status;
    manifest_.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    try {
      write_text_file(path("manifest", "json"), manifest_.to_json().dump(2) + "\n");
    } catch (const std::exception& e) {
      std::cerr << "warning: manifest not written: " << e.what() << '\n';
    }
    return status;
  }

  void set_prefix(std::string prefix) { prefix_ = std::move(prefix); }

 private:
  const Common& common_;
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
  std::string prefix_ = "run";
};

bool wants(const RunConfig& c, const std::string& format) {
  return std::find(c.outputs.formats.begin(), c.outputs.formats.end(), format) != c.outputs.formats.end();
}

int run_trajectories(const Common& common, Session& s) {
  const RunConfig c = *load(common);
  s.set_config(c);
  if (!scheme::is_trajectory(c.scheme)) throw ConfigError("run-trajectories needs a trajectory scheme, got " + c.scheme);
  const ModelSpec model = c.model();
  EnsembleRequest req;
  req.scheme = c.scheme;
  req.psi0 = c.psi0;
  req.n_paths = c.n_paths;
  req.seed = *c.seed;
  req.workers = common.workers;
  req.measure = c.effective_measure();
  req.options.keep_noise = false;
  const WeightedEnsemble ens = run_ensemble(model, req);
  const EnsembleStats stats = ensemble_stats(ens, model.family());

  if (wants(c, "csv")) {
    std::ostringstream traj, st;
    write_trajectories_csv(traj, ens, model.family());
    write_stats_csv(st, stats);
    s.emit("trajectories", "csv", traj.str());
    s.emit("stats", "csv", st.str());
  }
  if (wants(c, "json")) {
    s.emit("trajectories", "json", trajectories_json(ens, model.family()).dump(1) + "\n");
    s.emit("stats", "json", stats_json(stats).dump(1) + "\n");
  }
  std::cout << "scheme   " << c.scheme << "\nmeasure  " << to_string(ens.kind()) << "\npaths    " << ens.size()
            << "\n";
  if (stats.degenerate) std::cout << "stats    degenerate (fewer than two paths)\n";

  int status = 0;
  if (model.hamiltonian().is_zero() && model.gamma() > 0.0 && ens.size() >= 2) {
    const CollapseReport rep = collapse_report(ens, model, c.gates);
    s.emit("collapse", "json", collapse_report_json(rep).dump(1) + "\n");
    std::cout << '\n';
    print_collapse_report(std::cout, rep);
    if (c.expected_verdict && rep.verdict != *c.expected_verdict) {
      std::cout << "expected verdict '" << *c.expected_verdict << "' not met\n";
      status = 1;
    }
  }
  return status;
}

int run_master(const Common& common, Session& s) {
  const RunConfig c = *load(common);
  s.set_config(c);
  if (!scheme::is_master(c.scheme)) throw ConfigError("run-master needs a density-matrix scheme, got " + c.scheme);
  const ModelSpec model = c.model();
  const DensityMatrix rho0 = pure_density(c.psi0);
  const DensitySeries series = evolve_master(c.scheme, model, rho0);
  std::optional<DensitySeries> reference;
  if (!c.compare.empty()) reference = evolve_master(c.compare, model, rho0);
  const DensitySeries* ref = reference ? &*reference : nullptr;
  if (wants(c, "csv")) {
    std::ostringstream out;
    write_density_csv(out, series, ref);
    s.emit("rho", "csv", out.str());
  }
  if (wants(c, "json")) s.emit("rho", "json", density_json(series, ref).dump(1) + "\n");
  std::cout << "scheme            " << series.scheme << "\nmax trace error   " << series.max_trace_error
            << "\nmin eigenvalue    " << series.min_eigenvalue << '\n';
  if (ref) {
    double worst = 0.0;
    for (std::size_t k = 0; k < series.rho.size(); ++k)
      worst = std::max(worst, trace_distance(series.rho[k], ref->rho[k]));
    std::cout << "compare           " << ref->scheme << "\nmax trace dist    " << worst << '\n';
  }
  if (series.lindblad)
    std::cout << "lindblad form     " << (series.lindblad->lindblad_form ? "yes" : "no") << '\n';
  return 0;
}

int run_verify(const Common& common, const std::string& suite, Session& s) {
  const std::optional<RunConfig> c = load(common);
  if (c) s.set_config(*c);
  else s.set_prefix("verify");
  const SuiteReport rep = run_suite(suite, c ? &*c : nullptr, common.workers);
  s.emit(suite + "_report", "json", rep.to_json().dump(2) + "\n");
  std::cout << "suite " << suite << (rep.config_name.empty() ? "" : " (" + rep.config_name + ")") << "\n\n";
  for (const auto& g : rep.gates) {
    std::cout << "  " << (g.ok() ? "ok  " : "FAIL") << (g.expected_fail ? " xfail " : "       ") << std::left
              << std::setw(40) << g.name << std::right << std::setw(12) << std::setprecision(4) << g.value
              << std::setw(12) << g.limit << "  " << g.detail << '\n';
  }
  std::cout << '\n' << (rep.passed() ? "PASS" : "FAIL") << '\n';
  return rep.passed() ? 0 : 1;
}

int noise_diagnostics(const Common& common, Session& s) {
  const RunConfig c = *load(common);
  s.set_config(c);
  const CorrelationKernel& k = c.kernel;
  const TimeGrid& grid = c.grid;
  const std::size_t n = k.size();

  std::ostringstream csv;
  csv << std::setprecision(17) << "time";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) csv << ",F_" << i << j;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) csv << ",G_" << i << j;
  csv << '\n';
  for (std::size_t q = 0; q < grid.knots(); ++q) {
    const double t = grid.time(q);
    const RMatrix f = k.f_matrix(t), g = k.g_matrix(t);
    csv << t;
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      for (Eigen::Index j = 0; j < f.cols(); ++j) csv << ',' << f(i, j);
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) csv << ',' << g(i, j);
    csv << '\n';
  }

  const ReductionVerdict red = reduction_criterion(k);
  Json j;
  j["kernel"] = to_string(k.kind());
  j["reduction"] = {{"verdict", red.verdict},
                    {"limit", real_matrix_to_json(red.limit)},
                    {"eigenvalues", std::vector<double>(red.eigenvalues.begin(), red.eigenvalues.end())},
                    {"positive_definite", red.positive_definite},
                    {"growth_rate", red.growth_rate}};
  const std::size_t samples = std::max<std::size_t>(c.n_paths, 2);
  const NoiseSampler sampler(k, grid);
  j["sampler"] = {{"jitter", sampler.jitter()}, {"samples", samples}};
  // Empirical lag-0 covariance at the final knot against the kernel.
  RMatrix second = RMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const std::size_t last = k.is_white() ? grid.steps() - 1 : grid.steps();
  for (std::size_t p = 0; p < samples; ++p) {
    const RVector w = sampler.sample(*c.seed, p).column(last);
    second += w * w.transpose();
  }
  second /= static_cast<double>(samples);
  const RMatrix expected = k.is_white() ? RMatrix(k.strength() / grid.dt()) : k.variance();
  j["equal_time_covariance"] = {{"empirical", real_matrix_to_json(second)}, {"kernel", real_matrix_to_json(expected)}};
  const FurutsuNovikovReport fn =
      check_furutsu_novikov(k, grid, 0, NoiseFunctional::linear(0, 0.5 * grid.t_end()), samples, *c.seed);
  j["furutsu_novikov_linear"] = {{"lhs", fn.lhs}, {"rhs", fn.rhs}, {"difference_error", fn.difference_error},
                                 {"consistent", fn.consistent(4.0)}};

  s.emit("noise", "csv", csv.str());
  s.emit("noise", "json", j.dump(2) + "\n");
  std::cout << "kernel            " << to_string(k.kind()) << "\nreduction         " << red.verdict
            << "\nlimit eigenvalues ";
  for (Eigen::Index i = 0; i < red.eigenvalues.size(); ++i) std::cout << red.eigenvalues(i) << ' ';
  std::cout << "\nfurutsu-novikov   " << (fn.consistent(4.0) ? "consistent" : "INCONSISTENT") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collapse-sim: stochastic collapse dynamics with colored noise"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  std::string suite;
  auto* traj = app.add_subcommand("run-trajectories", "trajectory ensemble with per-time statistics");
  add_common(traj, common, true);
  auto* master = app.add_subcommand("run-master", "density-matrix evolution");
  add_common(master, common, true);
  auto* verify = app.add_subcommand("verify", "run an acceptance suite");
  add_common(verify, common, false);
  verify->add_option("--suite", suite, "suite name")
      ->required()
      ->check(CLI::IsMember({"collapse", "phase", "measure", "energy", "noise", "convergence"}));
  auto* noise = app.add_subcommand("noise-diagnostics", "kernel integrals, reduction criterion, sampler checks");
  add_common(noise, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Session session(command, common);
  try {
    int status = 0;
    if (*traj) status = run_trajectories(common, session);
    else if (*master) status = run_master(common, session);
    else if (*verify) status = run_verify(common, suite, session);
    else status = noise_diagnostics(common, session);
    return session.finish(status);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return session.finish(2);
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return session.finish(2);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what();
    if (e.step() != NumericalError::npos) std::cerr << " (step " << e.step() << ")";
    std::cerr << '\n';
    return session.finish(3);
  }
}

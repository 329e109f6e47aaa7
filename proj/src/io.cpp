#include "collapse/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void series_columns(const WeightedEnsemble& ensemble, const CommutingFamily& family, std::size_t p,
                    std::size_t k, std::vector<double>& row) {
  const CVector& psi = ensemble[p].states[k].amplitudes();
  for (std::size_t i = 0; i < family.size(); ++i) {
    const CMatrix& a = family.op(i).matrix();
    const double m = detail::raw_expectation(a, psi).real();
    row.push_back(m);
    row.push_back(detail::raw_expectation(a * a, psi).real() - m * m);
  }
}

}  // namespace

Json complex_to_json(Complex z) { return Json::array({z.real(), z.imag()}); }

Json matrix_to_json(const CMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json real_matrix_to_json(const RMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_trajectories_csv(std::ostream& out, const WeightedEnsemble& ensemble, const CommutingFamily& family) {
  out << "time,path,measure,weight";
  for (std::size_t i = 0; i < family.size(); ++i) out << ",mean_A" << i << ",var_A" << i;
  out << '\n';
  const TimeGrid& grid = ensemble.grid();
  std::vector<double> row;
  for (std::size_t k = 0; k < grid.knots(); ++k) {
    const std::vector<double> w = ensemble.weights(k);
    for (std::size_t p = 0; p < ensemble.size(); ++p) {
      row.clear();
      series_columns(ensemble, family, p, k, row);
      out << num(grid.time(k)) << ',' << p << ',' << to_string(ensemble.kind()) << ',' << num(w[p]);
      for (double v : row) out << ',' << num(v);
      out << '\n';
    }
  }
}

Json trajectories_json(const WeightedEnsemble& ensemble, const CommutingFamily& family) {
  Json j;
  j["measure"] = to_string(ensemble.kind());
  j["scheme"] = ensemble.scheme();
  const TimeGrid& grid = ensemble.grid();
  Json times = Json::array();
  for (std::size_t k = 0; k < grid.knots(); ++k) times.push_back(grid.time(k));
  j["time"] = std::move(times);
  Json paths = Json::array();
  for (std::size_t p = 0; p < ensemble.size(); ++p) {
    Json path;
    Json weight = Json::array();
    std::vector<Json> cols(2 * family.size(), Json::array());
    std::vector<double> row;
    for (std::size_t k = 0; k < grid.knots(); ++k) {
      weight.push_back(ensemble.weights(k)[p]);
      row.clear();
      series_columns(ensemble, family, p, k, row);
      for (std::size_t c = 0; c < row.size(); ++c) cols[c].push_back(row[c]);
    }
    path["weight"] = std::move(weight);
    for (std::size_t i = 0; i < family.size(); ++i) {
      path["mean_A" + std::to_string(i)] = std::move(cols[2 * i]);
      path["var_A" + std::to_string(i)] = std::move(cols[2 * i + 1]);
    }
    path["warnings"] = ensemble[p].warnings;
    paths.push_back(std::move(path));
  }
  j["paths"] = std::move(paths);
  return j;
}

void write_stats_csv(std::ostream& out, const EnsembleStats& stats) {
  out << "time,measure,n_paths,degenerate";
  for (const auto& o : stats.observables) out << ",mean " << o.name << ",variance " << o.name << ",std_error " << o.name;
  out << '\n';
  for (std::size_t k = 0; k < stats.times.size(); ++k) {
    out << num(stats.times[k]) << ',' << to_string(stats.measure) << ',' << stats.n_paths << ','
        << (stats.degenerate ? 1 : 0);
    for (const auto& o : stats.observables)
      out << ',' << num(o.mean[k]) << ',' << num(o.variance[k]) << ',' << num(o.std_error[k]);
    out << '\n';
  }
}

Json stats_json(const EnsembleStats& stats) {
  Json j;
  j["measure"] = to_string(stats.measure);
  j["n_paths"] = stats.n_paths;
  j["degenerate"] = stats.degenerate;
  j["time"] = stats.times;
  Json obs = Json::array();
  for (const auto& o : stats.observables)
    obs.push_back({{"name", o.name}, {"mean", o.mean}, {"variance", o.variance}, {"std_error", o.std_error}});
  j["observables"] = std::move(obs);
  return j;
}

void write_density_csv(std::ostream& out, const DensitySeries& series, const DensitySeries* reference) {
  if (reference && reference->rho.size() != series.rho.size())
    throw InvalidArgument("reference density series has a different length");
  const Eigen::Index d = series.rho.empty() ? 0 : series.rho.front().rows();
  out << "time";
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) out << ",re_" << r << c << ",im_" << r << c;
  out << ",trace";
  if (reference) out << ",trace_distance";
  out << '\n';
  for (std::size_t k = 0; k < series.rho.size(); ++k) {
    const CMatrix& m = series.rho[k];
    out << num(series.grid.time(k));
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) out << ',' << num(m(r, c).real()) << ',' << num(m(r, c).imag());
    out << ',' << num(m.trace().real());
    if (reference) out << ',' << num(trace_distance(m, reference->rho[k]));
    out << '\n';
  }
}

Json density_json(const DensitySeries& series, const DensitySeries* reference) {
  Json j;
  j["scheme"] = series.scheme;
  j["max_trace_error"] = series.max_trace_error;
  j["min_eigenvalue"] = series.min_eigenvalue;
  if (series.lindblad) {
    j["lindblad"] = {{"coefficients", real_matrix_to_json(series.lindblad->coefficients)},
                     {"eigenvalues", std::vector<double>(series.lindblad->eigenvalues.begin(),
                                                         series.lindblad->eigenvalues.end())},
                     {"lindblad_form", series.lindblad->lindblad_form}};
  }
  Json rows = Json::array();
  for (std::size_t k = 0; k < series.rho.size(); ++k) {
    Json row{{"time", series.grid.time(k)}, {"rho", matrix_to_json(series.rho[k])},
             {"trace", series.rho[k].trace().real()}};
    if (reference) {
      row["reference"] = reference->scheme;
      row["trace_distance"] = trace_distance(series.rho[k], reference->rho.at(k));
    }
    rows.push_back(std::move(row));
  }
  j["series"] = std::move(rows);
  return j;
}

void write_energy_csv(std::ostream& out, const EnergyGainCurve& curve) {
  out << "time,analytic_rate,mc_rate,std_error,richardson_gap\n";
  for (std::size_t k = 0; k < curve.times.size(); ++k)
    out << num(curve.times[k]) << ',' << num(curve.analytic_rate[k]) << ',' << num(curve.mc_rate[k]) << ','
        << num(curve.std_error[k]) << ',' << num(curve.richardson_gap[k]) << '\n';
}

Json collapse_report_json(const CollapseReport& r) {
  Json j;
  j["verdict"] = r.verdict;
  j["final_variance"] = r.final_variance;
  j["time"] = r.times;
  j["variance_mean"] = r.variance_mean;
  j["variance_error"] = r.variance_error;
  j["predicted_variance"] = r.predicted_variance;
  Json mart = Json::array();
  for (std::size_t i = 0; i < r.martingale_slope.size(); ++i)
    mart.push_back({{"slope", r.martingale_slope[i]},
                    {"std_error", r.martingale_error[i]},
                    {"pass", static_cast<bool>(r.martingale_pass[i])}});
  j["martingale"] = std::move(mart);
  Json dec = Json::array();
  for (const auto& d : r.decrements)
    dec.push_back({{"operator", d.op},
                   {"time", d.time},
                   {"observed", d.observed},
                   {"predicted", d.predicted},
                   {"residual", d.residual},
                   {"residual_error", d.residual_error},
                   {"pass", d.pass}});
  j["decrements"] = std::move(dec);
  Json born = Json::array();
  for (const auto& row : r.born.rows)
    born.push_back({{"eigenvalues", std::vector<double>(row.eigenvalues.begin(), row.eigenvalues.end())},
                    {"initial_population", row.initial_population},
                    {"fraction", row.fraction},
                    {"std_error", row.std_error},
                    {"fraction_strict", row.fraction_strict}});
  j["born"] = {{"rows", std::move(born)},
               {"unresolved", r.born.unresolved},
               {"effective_size", r.born.effective_size},
               {"pass", r.born_pass}};
  return j;
}

void print_collapse_report(std::ostream& out, const CollapseReport& r) {
  out << "verdict        " << r.verdict << '\n';
  out << "final variance " << std::scientific << std::setprecision(3) << r.final_variance << '\n';
  out << "\n  eigenvalues      initial   fraction   std_error\n";
  for (const auto& row : r.born.rows) {
    std::string ev;
    for (Eigen::Index i = 0; i < row.eigenvalues.size(); ++i) ev += (i ? "," : "") + num(row.eigenvalues(i));
    out << "  " << std::left << std::setw(16) << ev << std::right << std::fixed << std::setprecision(4)
        << std::setw(8) << row.initial_population << std::setw(11) << row.fraction << std::setw(12)
        << row.std_error << '\n';
  }
  out << "  unresolved " << r.born.unresolved << '\n';
  out << "\n  operator   martingale slope     std_error\n";
  for (std::size_t i = 0; i < r.martingale_slope.size(); ++i)
    out << "  " << std::setw(8) << i << std::scientific << std::setprecision(3) << std::setw(19)
        << r.martingale_slope[i] << std::setw(14) << r.martingale_error[i] << '\n';
  out << "\n  op      time    observed   predicted    residual   std_error\n";
  for (const auto& d : r.decrements)
    out << "  " << std::setw(2) << d.op << std::fixed << std::setprecision(3) << std::setw(10) << d.time
        << std::setprecision(5) << std::setw(12) << d.observed << std::setw(12) << d.predicted
        << std::scientific << std::setprecision(2) << std::setw(12) << d.residual << std::setw(12)
        << d.residual_error << (d.pass ? "" : "  FAIL") << '\n';
  out << std::defaultfloat;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

Json RunManifest::to_json() const {
  Json j;
  j["config_hash"] = config_hash;
  j["tool_version"] = tool_version;
  j["wall_time"] = wall_time;
  Json cmds = Json::array();
  for (const auto& c : commands) cmds.push_back({{"command", c.command}, {"exit_status", c.exit_status}});
  j["commands"] = std::move(cmds);
  j["outputs"] = outputs;
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file " + path);
  f << text;
  if (!f) throw ConfigError("failed writing " + path);
}

}  // namespace collapse

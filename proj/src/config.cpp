#include "collapse/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

Complex parse_complex(const Json& v, const std::string& where) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  throw ConfigError(where + ": expected a number or [re, im]");
}

CMatrix parse_complex_matrix(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty() || !v[0].is_array()) throw ConfigError(where + ": expected a list of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = static_cast<Eigen::Index>(v[0].size());
  CMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = v[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(where + ": ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_complex(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

RMatrix parse_real_matrix(const Json& v, const std::string& where) {
  if (v.is_number()) return RMatrix::Constant(1, 1, v.get<double>());
  const CMatrix m = parse_complex_matrix(v, where);
  if (m.imag().cwiseAbs().maxCoeff() > 0.0) throw ConfigError(where + ": expected a real matrix");
  return m.real();
}

HermitianOperator parse_operator(const Json& v, std::size_t dim_hint, const std::string& where) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "pauli-x") return HermitianOperator::pauli_x();
    if (s == "pauli-y") return HermitianOperator::pauli_y();
    if (s == "pauli-z") return HermitianOperator::pauli_z();
    if (s == "zero") {
      if (dim_hint == 0) throw ConfigError(where + ": 'zero' needs the dimension from psi0 or operators");
      return HermitianOperator::zero(dim_hint);
    }
    throw ConfigError(where + ": unknown operator preset '" + s + "'");
  }
  if (v.is_object()) {
    if (v.value("preset", "") == "qudit-diag") {
      const auto diag = v.at("diag").get<std::vector<double>>();
      return HermitianOperator::diagonal(diag);
    }
    if (v.contains("matrix")) return HermitianOperator(parse_complex_matrix(v.at("matrix"), where));
    throw ConfigError(where + ": operator object needs 'preset' or 'matrix'");
  }
  try {
    return HermitianOperator(parse_complex_matrix(v, where));
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::vector<std::pair<double, double>> read_two_column_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read spectral table " + path);
  std::vector<std::pair<double, double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream in(line);
    double w = 0.0, g = 0.0;
    if (in >> w >> g) rows.emplace_back(w, g);
  }
  if (rows.empty()) throw ConfigError("spectral table " + path + " has no numeric rows");
  return rows;
}

CorrelationKernel parse_spectral(const Json& k, const std::string& base_dir) {
  if (k.contains("profile")) {
    const std::string form = k.at("profile").get<std::string>();
    const double scale = k.value("scale", 1.0);
    const double omega_max = k.value("omega_max", 20.0);
    const auto points = k.value<std::size_t>("points", 2001);
    const RMatrix shape = k.contains("shape") ? parse_real_matrix(k.at("shape"), "kernel.shape")
                                              : RMatrix::Identity(1, 1);
    if (form == "exp")
      return CorrelationKernel::tabulate(shape, [=](double w) { return scale * std::exp(-w); }, omega_max, points);
    if (form == "omega2-exp")
      return CorrelationKernel::tabulate(shape, [=](double w) { return scale * w * w * std::exp(-w); }, omega_max,
                                         points);
    if (form == "flat") return CorrelationKernel::tabulate(shape, [=](double) { return scale; }, omega_max, points);
    throw ConfigError("kernel.profile: unknown form '" + form + "' (exp, omega2-exp, flat)");
  }
  const Json& tables = k.at("tables");
  const auto n = k.value<std::size_t>("size", 1);
  SpectralTable table;
  std::vector<std::vector<bool>> seen(n, std::vector<bool>(n, false));
  for (const Json& entry : tables) {
    const auto i = entry.at("i").get<std::size_t>();
    const auto j = entry.at("j").get<std::size_t>();
    if (i >= n || j >= n) throw ConfigError("kernel.tables: index out of range for size " + std::to_string(n));
    std::vector<double> omega, gamma;
    if (entry.contains("csv")) {
      std::filesystem::path p = entry.at("csv").get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      for (const auto& [w, g] : read_two_column_csv(p.string())) {
        omega.push_back(w);
        gamma.push_back(g);
      }
    } else {
      omega = entry.at("omega").get<std::vector<double>>();
      gamma = entry.at("gamma").get<std::vector<double>>();
    }
    if (omega.size() != gamma.size()) throw ConfigError("kernel.tables: omega and gamma lengths differ");
    if (table.omega.empty()) {
      table.omega = omega;
      table.gamma.assign(omega.size(), RMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    } else if (table.omega != omega) {
      throw ConfigError("kernel.tables: every (i, j) table must share the same omega nodes");
    }
    for (std::size_t q = 0; q < omega.size(); ++q) {
      table.gamma[q](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gamma[q];
      if (!seen[j][i]) table.gamma[q](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = gamma[q];
    }
    seen[i][j] = true;
  }
  if (table.omega.empty()) throw ConfigError("kernel.tables: empty");
  return CorrelationKernel::spectral(std::move(table));
}

CorrelationKernel parse_kernel(const Json& k, const std::string& base_dir) {
  const std::string type = k.at("type").get<std::string>();
  if (type == "white") return CorrelationKernel::white(parse_real_matrix(k.value("strength", Json(1.0)), "kernel.strength"));
  if (type == "exponential")
    return CorrelationKernel::exponential(parse_real_matrix(k.value("strength", Json(1.0)), "kernel.strength"),
                                          k.at("rate").get<double>());
  if (type == "spectral") return parse_spectral(k, base_dir);
  throw ConfigError("kernel.type: unknown '" + type + "' (white, exponential, spectral)");
}

const std::vector<std::string>& known_schemes() {
  static const std::vector<std::string> names{
      scheme::ito_white,          scheme::stratonovich_white,       scheme::linear_colored_commuting,
      scheme::nonlinear_colored_commuting, scheme::perturbative_order_gamma, scheme::linear_memory_kernel,
      scheme::nonlinear_secIII,   scheme::master_white,             scheme::master_colored_commuting,
      scheme::master_order_gamma, scheme::master_markov_limit,      scheme::linear_hierarchy};
  return names;
}

RunConfig parse_impl(const Json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be an object");
  static const std::vector<std::string> keys{"name", "hamiltonian", "operators", "gamma", "xi", "kernel",
                                             "grid", "psi0", "scheme", "measure", "n_paths", "seed",
                                             "compare", "outputs", "gates", "expect"};
  for (const auto& [key, _] : doc.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");

  RunConfig c;
  c.source = doc;
  c.name = doc.value("name", "");

  const Json& psi = doc.at("psi0");
  if (!psi.is_array() || psi.empty()) throw ConfigError("psi0: expected an amplitude list");
  CVector amps(static_cast<Eigen::Index>(psi.size()));
  for (std::size_t k = 0; k < psi.size(); ++k) amps(static_cast<Eigen::Index>(k)) = parse_complex(psi[k], "psi0");
  if (amps.norm() == 0.0) throw ConfigError("psi0: zero vector");
  c.psi0 = StateVector(amps).normalized();
  const std::size_t dim = c.psi0.dim();

  const Json& ops = doc.at("operators");
  if (!ops.is_array() || ops.empty()) throw ConfigError("operators: expected a non-empty list");
  for (std::size_t i = 0; i < ops.size(); ++i)
    c.operators.push_back(parse_operator(ops[i], dim, "operators[" + std::to_string(i) + "]"));
  c.family = CommutingFamily::from_operators(c.operators);
  c.hamiltonian = parse_operator(doc.value("hamiltonian", Json("zero")), dim, "hamiltonian");

  c.gamma = doc.at("gamma").get<double>();
  c.xi = parse_complex(doc.value("xi", Json(1.0)), "xi");
  c.kernel = parse_kernel(doc.at("kernel"), base_dir);
  const Json& g = doc.at("grid");
  c.grid = TimeGrid(g.at("t_end").get<double>(), g.at("steps").get<std::size_t>());

  c.scheme = doc.at("scheme").get<std::string>();
  if (doc.contains("measure")) {
    const std::string m = doc.at("measure").get<std::string>();
    if (m == "P-direct") c.measure = MeasureKind::p_direct;
    else if (m == "Q-reweighted") c.measure = MeasureKind::q_reweighted;
    else throw ConfigError("measure: expected 'P-direct' or 'Q-reweighted'");
  }
  c.n_paths = doc.value<std::size_t>("n_paths", 1);
  if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
  c.compare = doc.value("compare", "");
  if (doc.contains("outputs")) {
    const Json& o = doc.at("outputs");
    if (o.contains("formats")) c.outputs.formats = o.at("formats").get<std::vector<std::string>>();
    c.outputs.prefix = o.value("prefix", c.outputs.prefix);
  }
  if (doc.contains("gates")) {
    const Json& gt = doc.at("gates");
    c.gates.variance_threshold = gt.value("variance_threshold", c.gates.variance_threshold);
    c.gates.born_sigmas = gt.value("born_sigmas", c.gates.born_sigmas);
    c.gates.mean_sigmas = gt.value("mean_sigmas", c.gates.mean_sigmas);
    c.gates.checkpoints = gt.value("checkpoints", c.gates.checkpoints);
    c.gates.population_threshold = gt.value("population_threshold", c.gates.population_threshold);
  }
  if (doc.contains("expect")) c.expected_verdict = doc.at("expect").at("verdict").get<std::string>();
  validate(c);
  return c;
}

Json state_list(std::initializer_list<double> amps) { return Json(std::vector<double>(amps)); }

}  // namespace

ModelSpec RunConfig::model() const { return ModelSpec(hamiltonian, family, gamma, xi, kernel, grid); }

MeasureKind RunConfig::effective_measure() const {
  if (measure) return *measure;
  return scheme::is_linear(scheme) ? MeasureKind::q_reweighted : MeasureKind::p_direct;
}

std::string RunConfig::hash() const { return hex64(fnv1a(source.dump())); }

RunConfig parse_config(const Json& doc, const std::string& base_dir) {
  try {
    return parse_impl(doc, base_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path);
  Json doc;
  try {
    doc = Json::parse(f);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_config(doc, dir.empty() ? "." : dir.string());
}

std::vector<std::string> preset_names() { return {"collapse", "white-vs-markov", "no-reduction"}; }

Json preset_document(const std::string& name) {
  Json d;
  d["name"] = name;
  if (name == "collapse") {
    d["hamiltonian"] = "zero";
    d["operators"] = Json::array({"pauli-z"});
    d["gamma"] = 1.0;
    d["xi"] = 1.0;
    d["kernel"] = {{"type", "exponential"}, {"strength", 1.0}, {"rate", 5.0}};
    d["grid"] = {{"t_end", 10.0}, {"steps", 1000}};
    d["psi0"] = state_list({0.6, 0.8});
    d["scheme"] = scheme::nonlinear_colored_commuting;
    d["measure"] = "P-direct";
    d["n_paths"] = 1000;
    d["seed"] = 42;
  } else if (name == "white-vs-markov") {
    d["hamiltonian"] = "pauli-x";
    d["operators"] = Json::array({"pauli-z"});
    d["gamma"] = 0.5;
    d["xi"] = 1.0;
    d["kernel"] = {{"type", "white"}, {"strength", 1.0}};
    d["grid"] = {{"t_end", 2.0}, {"steps", 400}};
    d["psi0"] = state_list({0.6, 0.8});
    d["scheme"] = scheme::master_white;
    d["compare"] = scheme::master_markov_limit;
    d["seed"] = 1;
  } else if (name == "no-reduction") {
    d["hamiltonian"] = "zero";
    d["operators"] = Json::array({"pauli-z"});
    d["gamma"] = 1.0;
    d["xi"] = 1.0;
    d["kernel"] = {{"type", "spectral"}, {"profile", "omega2-exp"}, {"scale", 1.0}, {"omega_max", 20.0},
                   {"points", 401}};
    d["grid"] = {{"t_end", 10.0}, {"steps", 200}};
    d["psi0"] = state_list({0.6, 0.8});
    d["scheme"] = scheme::nonlinear_colored_commuting;
    d["measure"] = "P-direct";
    d["n_paths"] = 400;
    d["seed"] = 7;
    d["expect"] = {{"verdict", "no reduction"}};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return d;
}

void override_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.source["seed"] = seed;
}

void validate(const RunConfig& c) {
  const auto& names = known_schemes();
  if (std::find(names.begin(), names.end(), c.scheme) == names.end())
    throw ConfigError("scheme: unknown '" + c.scheme + "'");
  if (c.n_paths == 0) throw ConfigError("n_paths must be positive");
  if (c.psi0.dim() != c.family.dim()) throw ConfigError("psi0 dimension does not match the operators");
  if (c.hamiltonian.dim() != c.family.dim()) throw ConfigError("hamiltonian dimension does not match the operators");
  if (c.kernel.size() != c.family.size())
    throw ConfigError("kernel size " + std::to_string(c.kernel.size()) + " does not match " +
                      std::to_string(c.family.size()) + " operators");
  if (!(c.gamma >= 0.0)) throw ConfigError("gamma must be non-negative");

  const bool white_only = c.scheme == scheme::ito_white || c.scheme == scheme::stratonovich_white ||
                          c.scheme == scheme::master_white;
  if (white_only && !c.kernel.is_white()) throw ConfigError(c.scheme + " requires a white kernel");
  const bool commuting = c.scheme == scheme::linear_colored_commuting ||
                         c.scheme == scheme::nonlinear_colored_commuting ||
                         c.scheme == scheme::master_colored_commuting;
  if (commuting) {
    bool ok = true;
    for (const auto& a : c.operators) ok = ok && c.hamiltonian.commutes_with(a);
    if (!ok) throw ConfigError(c.scheme + " requires H to commute with every collapse operator");
  }
  if (c.scheme == scheme::linear_hierarchy && c.kernel.kind() != KernelKind::exponential)
    throw ConfigError(c.scheme + " requires an exponential kernel");
  if (c.measure && scheme::is_trajectory(c.scheme)) {
    if (*c.measure == MeasureKind::p_direct && scheme::is_linear(c.scheme))
      throw ConfigError("P-direct sampling is unavailable for the linear scheme " + c.scheme);
    if (*c.measure == MeasureKind::q_reweighted && !scheme::is_linear(c.scheme) &&
        c.scheme != scheme::nonlinear_colored_commuting)
      throw ConfigError("Q-reweighting needs linear weights, which " + c.scheme + " does not carry");
  }
  if (!c.compare.empty() && !scheme::is_master(c.compare) && c.compare != scheme::linear_hierarchy)
    throw ConfigError("compare: '" + c.compare + "' is not a density-matrix scheme");
  for (const auto& f : c.outputs.formats)
    if (f != "csv" && f != "json") throw ConfigError("outputs.formats: unknown '" + f + "'");
  if (c.expected_verdict && *c.expected_verdict != "collapsed" && *c.expected_verdict != "no reduction" &&
      *c.expected_verdict != "born mismatch")
    throw ConfigError("expect.verdict: unknown '" + *c.expected_verdict + "'");
}

}  // namespace collapse

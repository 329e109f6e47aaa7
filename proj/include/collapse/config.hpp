#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "collapse/analysis.hpp"
#include "collapse/io.hpp"
#include "collapse/measure.hpp"
#include "collapse/model.hpp"

namespace collapse {

struct OutputSpec {
  std::vector<std::string> formats{"csv"};  // "csv", "json"
  std::string prefix = "run";
};

/// Parsed experiment definition. Keys:
///   hamiltonian   "zero" | "pauli-x|y|z" | {"preset": "qudit-diag", "diag": [...]} | matrix
///   operators     list of the same forms (must commute)
///   gamma, xi     number or [re, im]
///   kernel        {"type": "white"|"exponential"|"spectral", ...}
///   grid          {"t_end": T, "steps": M}
///   psi0          amplitude list (numbers or [re, im]); normalized on load
///   scheme, measure ("P-direct"|"Q-reweighted"), n_paths, seed
///   compare       reference master scheme for run-master
///   outputs       {"formats": [...], "prefix": "..."}
///   gates         collapse thresholds
///   expect        {"verdict": "..."} marks the collapse gates as expected to fail
/// Complex matrices are row lists of [re, im] pairs; plain numbers are real.
struct RunConfig {
  std::string name;
  HermitianOperator hamiltonian;
  std::vector<HermitianOperator> operators;
  CommutingFamily family;
  double gamma = 1.0;
  Complex xi{1.0, 0.0};
  CorrelationKernel kernel;
  TimeGrid grid;
  StateVector psi0;
  std::string scheme;
  std::optional<MeasureKind> measure;
  std::size_t n_paths = 1;
  std::optional<std::uint64_t> seed;
  std::string compare;
  OutputSpec outputs;
  CollapseGates gates;
  std::optional<std::string> expected_verdict;
  Json source;  // the parsed document, with overrides applied

  ModelSpec model() const;
  /// Configured measure, defaulting to Q-reweighted for linear schemes.
  MeasureKind effective_measure() const;
  /// FNV-1a of the canonical serialization of `source`.
  std::string hash() const;
};

/// `base_dir` resolves relative CSV paths in spectral kernel declarations.
RunConfig parse_config(const Json& doc, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
Json preset_document(const std::string& name);
std::vector<std::string> preset_names();

/// Applies a seed override and re-validates.
void override_seed(RunConfig& config, std::uint64_t seed);

/// Checks the scheme against the kernel and Hamiltonian before anything runs.
void validate(const RunConfig& config);

}  // namespace collapse

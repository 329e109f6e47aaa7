#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "collapse/analysis.hpp"
#include "collapse/dynamics.hpp"
#include "collapse/measure.hpp"

namespace collapse {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Complex scalars are [re, im]; matrices are row lists of such pairs.
Json complex_to_json(Complex z);
Json matrix_to_json(const CMatrix& m);
Json real_matrix_to_json(const RMatrix& m);

/// Per-path, per-knot rows: time, path, measure, weight, <A_i>, V(A_i).
void write_trajectories_csv(std::ostream& out, const WeightedEnsemble& ensemble, const CommutingFamily& family);
Json trajectories_json(const WeightedEnsemble& ensemble, const CommutingFamily& family);

void write_stats_csv(std::ostream& out, const EnsembleStats& stats);
Json stats_json(const EnsembleStats& stats);

/// rho(t) row-major as re/im columns plus trace; when `reference` is given a
/// trace_distance column compares the two series knot by knot.
void write_density_csv(std::ostream& out, const DensitySeries& series, const DensitySeries* reference = nullptr);
Json density_json(const DensitySeries& series, const DensitySeries* reference = nullptr);

void write_energy_csv(std::ostream& out, const EnergyGainCurve& curve);

Json collapse_report_json(const CollapseReport& report);
/// Aligned-column text for humans.
void print_collapse_report(std::ostream& out, const CollapseReport& report);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t value);

struct CommandStatus {
  std::string command;
  int exit_status = 0;
};

struct RunManifest {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  double wall_time = 0.0;  // seconds
  std::vector<CommandStatus> commands;
  std::vector<std::string> outputs;

  Json to_json() const;
};

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace collapse

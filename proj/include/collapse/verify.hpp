#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "collapse/config.hpp"

namespace collapse {

struct GateResult {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  std::string detail;
  bool pass = false;           // raw outcome of the check
  bool expected_fail = false;  // the configuration predicts this check fails

  /// Honors the expected-fail marker: an expected failure counts as success,
  /// an unexpected pass does not.
  bool ok() const { return expected_fail ? !pass : pass; }
};

struct SuiteReport {
  std::string suite;
  std::string config_name;
  std::vector<GateResult> gates;

  bool passed() const;
  Json to_json() const;
};

std::vector<std::string> suite_names();

/// Runs a named suite. `config` overrides the suite's default problem where
/// the suite uses one (collapse, phase, measure, noise); otherwise built-in
/// problems are used.
SuiteReport run_suite(const std::string& suite, const RunConfig* config, std::size_t workers = 1);

/// Default problem for a suite, as a config document.
Json suite_default_document(const std::string& suite);

}  // namespace collapse

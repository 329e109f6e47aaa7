#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "collapse/linalg.hpp"
#include "collapse/memory.hpp"
#include "collapse/model.hpp"
#include "collapse/noise.hpp"

namespace collapse {

/// Scheme identifiers, equal to the operation names.
namespace scheme {
inline constexpr const char* ito_white = "evolve_ito_white";
inline constexpr const char* stratonovich_white = "evolve_stratonovich_white";
inline constexpr const char* linear_colored_commuting = "evolve_linear_colored_commuting";
inline constexpr const char* nonlinear_colored_commuting = "evolve_nonlinear_colored_commuting";
inline constexpr const char* perturbative_order_gamma = "evolve_perturbative_order_gamma";
inline constexpr const char* linear_memory_kernel = "evolve_linear_memory_kernel";
inline constexpr const char* nonlinear_secIII = "evolve_nonlinear_secIII";
inline constexpr const char* master_white = "evolve_master_white";
inline constexpr const char* master_colored_commuting = "evolve_master_colored_commuting";
inline constexpr const char* master_order_gamma = "evolve_master_order_gamma";
inline constexpr const char* master_markov_limit = "evolve_master_markov_limit";
inline constexpr const char* linear_hierarchy = "exact_linear_average";

/// Linear (unnormalized) schemes; their norms are change-of-measure weights.
bool is_linear(const std::string& name);
bool is_trajectory(const std::string& name);
bool is_master(const std::string& name);
}  // namespace scheme

/// One noise realization's state history. `states` are always normalized;
/// `norms` hold <phi|phi> for linear schemes and the squared norm before
/// renormalization for norm-preserving ones.
struct Trajectory {
  std::string scheme;
  TimeGrid grid;
  std::vector<StateVector> states;
  std::vector<double> norms;
  /// ln <phi|phi> of the linear partner along a nonlinear path (optional).
  std::vector<double> log_weights;
  std::vector<std::string> warnings;
  std::shared_ptr<const NoiseRealization> noise;

  bool linear() const { return scheme::is_linear(scheme); }
};

struct EvolveOptions {
  double norm_floor = 1e-12;
  /// Accumulated |<psi|psi> - 1| per unit time allowed for the norm-preserving
  /// memory scheme before renormalization.
  double norm_drift_tolerance = 1e-6;
  MemoryOptions memory;
  bool track_weights = false;
  bool keep_noise = true;
  double perturbative_warn = 0.1;
  double perturbative_fail = 0.5;
};

Trajectory evolve_ito_white(const ModelSpec& model, const NoiseRealization& noise, const StateVector& psi0,
                            const EvolveOptions& options = {});
Trajectory evolve_stratonovich_white(const ModelSpec& model, const NoiseRealization& noise,
                                     const StateVector& psi0, const EvolveOptions& options = {});
Trajectory evolve_linear_colored_commuting(const ModelSpec& model, const NoiseRealization& noise,
                                           const StateVector& phi0, const EvolveOptions& options = {});
Trajectory evolve_nonlinear_colored_commuting(const ModelSpec& model, const NoiseRealization& noise,
                                              const StateVector& psi0, const EvolveOptions& options = {});
/// Linear equation with the order-gamma memory term A_i M_ij(t); `memory`
/// may be shared across paths (built on the model grid when null).
Trajectory evolve_linear_memory_kernel(const ModelSpec& model, const NoiseRealization& noise,
                                       const StateVector& phi0, const MemoryTable* memory = nullptr,
                                       const EvolveOptions& options = {});
Trajectory evolve_nonlinear_secIII(const ModelSpec& model, const NoiseRealization& noise,
                                   const StateVector& psi0, const MemoryTable* memory = nullptr,
                                   const EvolveOptions& options = {});

struct PerturbativeResult {
  Trajectory trajectory;
  /// Interaction-picture orders phi_0, phi_1, phi_2 at every knot.
  std::vector<CVector> order0, order1, order2;
  /// max_t ||gamma phi_2|| / ||phi_0||.
  double max_ratio = 0.0;
};

PerturbativeResult evolve_perturbative_order_gamma(const ModelSpec& model, const NoiseRealization& noise,
                                                   const StateVector& phi0,
                                                   const MemoryTable* memory = nullptr,
                                                   const EvolveOptions& options = {});

/// Dispatch by scheme name. Schemes needing memory build it per call unless
/// `memory` is given.
Trajectory evolve(const std::string& scheme_name, const ModelSpec& model, const NoiseRealization& noise,
                  const StateVector& psi0, const MemoryTable* memory = nullptr,
                  const EvolveOptions& options = {});

struct LindbladVerdict {
  RMatrix coefficients;  // a_ij = 2 gamma |xi|^2 F_ij(t)
  RVector eigenvalues;
  bool lindblad_form = false;
};

struct DensitySeries {
  std::string scheme;
  TimeGrid grid;
  std::vector<CMatrix> rho;
  double max_trace_error = 0.0;
  double min_eigenvalue = 1.0;
  std::optional<LindbladVerdict> lindblad;  // final time, markov-limit runs only
};

struct MasterOptions {
  double positivity_floor = -1e-6;
  MemoryOptions memory;
};

DensitySeries evolve_master_white(const ModelSpec& model, const DensityMatrix& rho0,
                                  const MasterOptions& options = {});
DensitySeries evolve_master_colored_commuting(const ModelSpec& model, const DensityMatrix& rho0,
                                              const MasterOptions& options = {});
DensitySeries evolve_master_order_gamma(const ModelSpec& model, const DensityMatrix& rho0,
                                        const MasterOptions& options = {});
DensitySeries evolve_master_markov_limit(const ModelSpec& model, const DensityMatrix& rho0,
                                         const MasterOptions& options = {});
DensitySeries evolve_master(const std::string& scheme_name, const ModelSpec& model, const DensityMatrix& rho0,
                            const MasterOptions& options = {});

LindbladVerdict markov_lindblad_verdict(const ModelSpec& model, double t);

struct HierarchyOptions {
  std::size_t depth = 8;
  MemoryOptions memory;
};

/// E_Q[|phi(t)><phi(t)|] for the linear memory equation driven by an
/// exponential kernel, from the exact Gaussian moment hierarchy of the
/// Ornstein-Uhlenbeck modes (truncated at total order `depth`). The trace is
/// the mean weight E_Q[<phi|phi>]. For xi = i this is the exact density matrix.
DensitySeries exact_linear_average(const ModelSpec& model, const DensityMatrix& rho0,
                                   const HierarchyOptions& options = {});

}  // namespace collapse

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpcc/core/constraints.hpp"
#include "dpcc/core/random.hpp"
#include "dpcc/core/serialization.hpp"
#include "dpcc/diffusion/training.hpp"
#include "dpcc/projection/projection.hpp"

namespace dpcc {

enum class Method { dpcc_r, dpcc_t, dpcc_c, diffuser, guidance, post_processing, model_free };

const char* to_string(Method method);
/// Accepts the names printed by to_string ("dpcc-c", "post-processing", ...).
/// Throws ConfigError on anything else.
Method method_from_string(const std::string& name);
bool is_dpcc(Method method);

struct ControllerConfig {
  Method method = Method::dpcc_c;
  int batch = 4;
  bool tightening = true;
  double gamma = 0.025;          // mismatch bound, normalized units
  double guidance_weight = 1.0;  // lambda, guidance only
  double sample_time = 0.1;      // plant sampling time t_s
  double mismatch_factor = 1.0;  // model uses t_s * factor inside the projection
  ProjectionSettings projection;

  /// Throws ConfigError for batch < 1, gamma < 0, weight < 0 or factor <= 0.
  void validate() const;
};

/// What the DPCC-T rule needs from the previous step.
struct ControllerState {
  std::optional<Eigen::VectorXd> previous;  // selected flat trajectory, normalized
  int previous_index = -1;
  int step = 0;

  void reset() { *this = ControllerState{}; }
};

/// Batch of final samples (columns) with per-chain bookkeeping.
struct DenoiseBatch {
  Eigen::MatrixXd samples;
  std::vector<double> costs;      // cumulative projection cost per chain
  std::vector<char> converged;    // every projection of the chain converged
  std::vector<char> fallback;     // model-free fallback was used at least once
};

/// Observes every projection: chain, diffusion step k, the pre-projection
/// iterate and the projection result.
using ProjectionObserver =
    std::function<void(int k, int chain, const Eigen::VectorXd& pre, const ProjectionResult& result)>;

/// Backward process with a projection after every denoising step. With a
/// model-based spec a non-converged, infeasible projection is replaced by the
/// model-free projection of its least-violating iterate (keeping the solver's
/// status) and the chain is flagged.
DenoiseBatch denoise_projected(const DenoiserNet& net, const NoiseSchedule& schedule,
                               const FeasibleSetSpec& spec, int batch, Rng& rng,
                               const ProjectionSettings& settings = {},
                               const ProjectionObserver& observer = {});

/// Sum over steps >= 1 and state primitives, plus the action box at every
/// step, of the squared violation. `grad` (if given) receives the gradient.
double constraint_penalty(const Eigen::VectorXd& tau, const TrajectoryShape& shape,
                          const StageConstraintSet& constraints, Eigen::VectorXd* grad = nullptr);

/// Backward process with the mean shifted by -lambda sigma_k^2 grad penalty(mean).
Eigen::MatrixXd denoise_guided(const DenoiserNet& net, const NoiseSchedule& schedule,
                               const TrajectoryShape& shape, const Eigen::VectorXd& state,
                               const StageConstraintSet& constraints, double lambda, int batch,
                               Rng& rng);

/// Unconstrained sampling followed by one projection of each final sample.
DenoiseBatch denoise_postprocess(const DenoiserNet& net, const NoiseSchedule& schedule,
                                 const FeasibleSetSpec& spec, int batch, Rng& rng,
                                 const ProjectionSettings& settings = {});

/// Index chosen by the method's rule: DPCC-T the smallest distance between
/// candidate entries 0..H-1 and the previous selection's entries 1..H
/// (random when there is no previous selection), DPCC-C the smallest
/// cumulative cost, everything else uniform random. Only indices in
/// `eligible` (all when empty) are considered; ties go to the lowest index.
int select_trajectory(const Eigen::MatrixXd& samples, const TrajectoryShape& shape, Method method,
                      const ControllerState& state, const std::vector<double>& costs, Rng& rng,
                      const std::vector<int>& eligible = {});

struct StepDiagnostics {
  int t = 0;
  Method method = Method::dpcc_c;
  int selected = 0;
  std::vector<double> costs;
  std::vector<char> converged;
  std::vector<char> fallback;
  bool flagged = false;       // no candidate had fully converged projections
  Eigen::VectorXd action;     // raw units, as applied
  Eigen::MatrixXd batch;      // normalized flat samples (columns)
};

Json diagnostics_to_json(const StepDiagnostics& d);

struct ControlOutput {
  Eigen::VectorXd action;  // raw units
  StepDiagnostics diagnostics;
};

/// Receding-horizon controller around a trained checkpoint. Constraints are
/// given in raw units; they are normalized once and, with tightening on,
/// eroded by gamma.
class Controller {
 public:
  Controller(Checkpoint checkpoint, ControllerConfig config, const StageConstraintSet& raw_constraints,
             std::uint64_t seed);

  /// One replanning step from the measured raw state.
  ControlOutput step(const Eigen::VectorXd& raw_state);
  void reset(std::uint64_t seed);

  const ControllerConfig& config() const { return config_; }
  const Checkpoint& checkpoint() const { return checkpoint_; }
  /// Constraints the planner enforces (normalized, tightened when enabled).
  const StageConstraintSet& enforced_constraints() const { return enforced_; }
  /// Untightened constraints in normalized units.
  const StageConstraintSet& true_constraints() const { return true_; }
  const AffineDynamics& model() const { return model_; }
  const ControllerState& state() const { return state_; }

  FeasibleSetSpec feasible_set(const Eigen::VectorXd& normalized_state) const;

 private:
  Checkpoint checkpoint_;
  ControllerConfig config_;
  StageConstraintSet true_;
  StageConstraintSet enforced_;
  Box raw_action_box_;
  AffineDynamics model_;
  ControllerState state_;
  Rng rng_;
};

}  // namespace dpcc

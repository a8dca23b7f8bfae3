#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdp/cbf.hpp"
#include "sdp/dataset.hpp"
#include "sdp/diffusion.hpp"
#include "sdp/models.hpp"
#include "sdp/rollout.hpp"

namespace sdp {

struct PlannerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GuideConfig {
  enum class Mode { None, Value, Safety, Combined };
  enum class GradPoint { Mean, Sample };

  double eta1 = 0.001;
  double eta2 = 5.0;
  Mode mode = Mode::Combined;
  GradPoint grad_point = GradPoint::Mean;
  bool inpaint_tail = false;  // exposed but unused by the evaluation protocol

  bool wants_value() const { return mode == Mode::Value || mode == Mode::Combined; }
  bool wants_safety() const { return mode == Mode::Safety || mode == Mode::Combined; }

  static GuideConfig from(const RunConfig& cfg);
  static Mode mode_from(const std::string& name);
  static const char* mode_name(Mode m);
};

// Gradient of the value head wrt the full [H][10][B] input, at frozen
// parameters. One column per plan.
Tensor value_guide_gradient(Model& value_model, const Tensor& tau, int k);

// Gradient of sum_t log p(c_t = safe) wrt the input, at frozen parameters.
Tensor safety_guide_gradient(Model& safety_model, const Tensor& tau, int k);

struct PlanDiagnostics {
  double predicted_value = 0.0;
  std::vector<double> safe_probs;  // per step, from the classifier guide
  std::vector<double> h_series;    // ground truth, from denormalized states
  int violations = 0;              // steps with h < 0
  bool failed = false;             // non-finite plan, excluded from selection
};

struct PlanBatch {
  Tensor plans;  // [H][10][B], normalized
  std::vector<PlanDiagnostics> diags;
};

struct PlannerContext {
  Model* dynamics = nullptr;
  Model* value = nullptr;   // may be null when unused by mode and selection
  Model* safety = nullptr;  // may be null when unused by mode
  const NoiseSchedule* schedule = nullptr;
  PredictionMode mode = PredictionMode::Signal;
  const Normalizer* normalizer = nullptr;
  EnvConfig env;
  SafeSetSpec spec;
  GuideConfig guide;
  int horizon = 16;
  int batch = 64;
};

// Reverse-diffuses a batch of plans conditioned on s0 (first state row
// inpainted at every step), applying the configured guide shifts scaled by the
// per-step posterior variance.
PlanBatch sample_plans(const PlannerContext& ctx, const State& s0, Rng& rng);

// Selection: collision-free plans (all h > 0) first, by predicted value; if
// none, fewest violating steps, ties by value, then lowest index.
int select_plan(const PlanBatch& batch);

struct PlanStepLog {
  int t = 0;
  int chosen = 0;
  Action action;
  Transition transition;
  double h_next = 0.0;  // barrier at the realized next state
  std::vector<double> plan_values;
  std::vector<int> plan_violations;
};

struct EpisodeLog {
  State s0;
  bool success = false;
  int steps = 0;
  double total_reward = 0.0;
  int unsafe_entries = 0;  // visited states with h < 0, initial state included
  double min_h = 0.0;
  std::vector<PlanStepLog> step_logs;
  std::vector<double> h_visited;  // h at s0, then at each realized next state
};

// Receding-horizon loop: plan, apply the first action, observe, replan.
EpisodeLog receding_horizon_control(const PlannerContext& ctx, const State& s0,
                                    const CbfParams& params, int max_steps,
                                    Rng& plan_rng);

// First action of a normalized plan, denormalized and clamped.
Action first_action(const Tensor& plans, int plan_idx, const Normalizer& norm);

}  // namespace sdp

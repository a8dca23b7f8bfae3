#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sdp/planner.hpp"

namespace sdp {

struct EvalReport {
  double success_rate = 0.0;
  double avg_reward = 0.0;
  double std_reward = 0.0;
  double avg_steps = 0.0;
  double std_steps = 0.0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  long unsafe_entries_total = 0;
  std::vector<int> unsafe_entries_per_episode;
  std::vector<double> min_h_per_episode;
  std::vector<std::uint64_t> seeds;

  nlohmann::json to_json() const;
};

// Serialized per-episode record; reports are pure reductions of these.
nlohmann::json episode_to_json(const EpisodeLog& log, std::uint64_t seed, int index);

// Recomputes the report from serialized episode logs (the replay oracle).
EvalReport report_from_logs(const std::vector<nlohmann::json>& episode_logs);

struct EvalOptions {
  int episodes_per_seed = 20;
  std::vector<std::uint64_t> seeds;
  TargetSampling targets;
  bool quiet = true;
};

// Fresh random targets and initial states per (seed, episode); aggregates are
// pooled over all episodes of all seeds. Population standard deviations.
struct EvalRun {
  EvalReport report;
  std::vector<nlohmann::json> episode_logs;
};

EvalRun evaluate(const PlannerContext& ctx, const CbfParams& params,
                 const EvalOptions& opts);

// One report per guide scale, plus a table in the four-column ablation format.
struct AblationRow {
  double guide_scale;
  EvalReport report;
};
struct AblationResult {
  std::vector<AblationRow> rows;
  std::string table;
};

AblationResult ablate_guide_scales(PlannerContext ctx, const CbfParams& params,
                                   const std::vector<double>& eta1_grid,
                                   const EvalOptions& opts);

// Paired arms on identical environment randomness.
struct SafetyComparison {
  EvalReport value_only;
  EvalReport combined;
  std::vector<int> delta_unsafe_per_episode;  // value_only - combined
  long value_only_unsafe_total = 0;
  long combined_unsafe_total = 0;
  std::vector<nlohmann::json> value_only_logs;
  std::vector<nlohmann::json> combined_logs;

  nlohmann::json to_json() const;
};

SafetyComparison compare_safety(PlannerContext value_ctx, PlannerContext combined_ctx,
                                const CbfParams& params, const EvalOptions& opts);

std::string format_report_table(const std::vector<std::string>& row_names,
                                const std::vector<const EvalReport*>& reports,
                                const std::string& first_column_header);

}  // namespace sdp

#include "sdp/eval.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

namespace sdp {

namespace {

nlohmann::json state_to_json(const State& s) {
  return std::vector<double>(s.obs.begin(), s.obs.end());
}

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(acc / static_cast<double>(xs.size()));
  return m;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["episodes"] = episodes;
  j["successes"] = successes;
  j["success_rate"] = success_rate;
  j["avg_reward"] = avg_reward;
  j["std_reward"] = std_reward;
  j["avg_steps"] = avg_steps;
  j["std_steps"] = std_steps;
  j["unsafe_entries_total"] = unsafe_entries_total;
  j["unsafe_entries_per_episode"] = unsafe_entries_per_episode;
  j["min_h_per_episode"] = min_h_per_episode;
  j["seeds"] = seeds;
  j["stddev_formula"] = "population";
  return j;
}

nlohmann::json episode_to_json(const EpisodeLog& log, std::uint64_t seed, int index) {
  nlohmann::json j;
  j["seed"] = seed;
  j["index"] = index;
  j["s0"] = state_to_json(log.s0);
  j["success"] = log.success;
  j["steps"] = log.steps;
  j["total_reward"] = log.total_reward;
  j["unsafe_entries"] = log.unsafe_entries;
  j["min_h"] = log.min_h;
  j["h_visited"] = log.h_visited;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& sl : log.step_logs) {
    nlohmann::json s;
    s["t"] = sl.t;
    s["chosen"] = sl.chosen;
    s["action"] = {sl.action.torque1, sl.action.torque2};
    s["r"] = sl.transition.r;
    s["d"] = sl.transition.d;
    s["c"] = sl.transition.c;
    s["s_next"] = state_to_json(sl.transition.s_next);
    s["h_next"] = sl.h_next;
    s["plan_values"] = sl.plan_values;
    s["plan_violations"] = sl.plan_violations;
    steps.push_back(std::move(s));
  }
  j["step_logs"] = std::move(steps);
  return j;
}

EvalReport report_from_logs(const std::vector<nlohmann::json>& episode_logs) {
  EvalReport rep;
  std::vector<double> rewards, steps;
  std::vector<std::uint64_t> seeds;
  for (const auto& j : episode_logs) {
    rep.episodes += 1;
    rep.successes += j.at("success").get<bool>() ? 1 : 0;
    rewards.push_back(j.at("total_reward").get<double>());
    steps.push_back(j.at("steps").get<double>());
    const int unsafe = j.at("unsafe_entries").get<int>();
    rep.unsafe_entries_total += unsafe;
    rep.unsafe_entries_per_episode.push_back(unsafe);
    rep.min_h_per_episode.push_back(j.at("min_h").get<double>());
    const auto seed = j.at("seed").get<std::uint64_t>();
    if (seeds.empty() || seeds.back() != seed) seeds.push_back(seed);
  }
  if (rep.episodes == 0) return rep;
  rep.success_rate =
      static_cast<double>(rep.successes) / static_cast<double>(rep.episodes);
  const Moments mr = moments(rewards);
  const Moments ms = moments(steps);
  rep.avg_reward = mr.mean;
  rep.std_reward = mr.stddev;
  rep.avg_steps = ms.mean;
  rep.std_steps = ms.stddev;
  rep.seeds = std::move(seeds);
  return rep;
}

namespace {

struct EpisodeTask {
  std::uint64_t seed;
  int index;
};

nlohmann::json run_episode(const PlannerContext& ctx, const CbfParams& params,
                           const EvalOptions& opts, const EpisodeTask& task) {
  // Streams depend only on (seed, index), never on worker assignment.
  Rng env_rng(Rng::mix(task.seed,
                       0x656e76ULL + static_cast<std::uint64_t>(task.index) * 2654435761ULL));
  Rng plan_rng(Rng::mix(task.seed,
                        0x706c6eULL + static_cast<std::uint64_t>(task.index) * 40503ULL));
  const State s0 = reset(env_rng, ctx.env, opts.targets);
  EpisodeLog log =
      receding_horizon_control(ctx, s0, params, ctx.env.max_steps, plan_rng);
  return episode_to_json(log, task.seed, task.index);
}

}  // namespace

EvalRun evaluate(const PlannerContext& ctx, const CbfParams& params,
                 const EvalOptions& opts) {
  if (!ctx.dynamics) throw PlannerError("evaluate: no dynamics model loaded");
  std::vector<EpisodeTask> tasks;
  for (const std::uint64_t seed : opts.seeds)
    for (int e = 0; e < opts.episodes_per_seed; ++e) tasks.push_back({seed, e});

  EvalRun run;
  run.episode_logs.resize(tasks.size());

  int workers = std::min<int>(thread_budget(), static_cast<int>(tasks.size()));
  // Model instances cache activations, so each worker needs its own copies.
  std::vector<std::array<std::unique_ptr<Model>, 3>> clones;
  if (workers > 1) {
    for (int w = 0; w < workers && workers > 1; ++w) {
      std::array<std::unique_ptr<Model>, 3> set;
      set[0] = ctx.dynamics->clone();
      if (ctx.value) set[1] = ctx.value->clone();
      if (ctx.safety) set[2] = ctx.safety->clone();
      if (!set[0] || (ctx.value && !set[1]) || (ctx.safety && !set[2])) workers = 1;
      clones.push_back(std::move(set));
    }
  }

  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      run.episode_logs[i] = run_episode(ctx, params, opts, tasks[i]);
  } else {
    set_inner_threads(1);
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        PlannerContext local = ctx;
        local.dynamics = clones[w][0].get();
        local.value = ctx.value ? clones[w][1].get() : nullptr;
        local.safety = ctx.safety ? clones[w][2].get() : nullptr;
        try {
          for (std::size_t i = w; i < tasks.size(); i += workers)
            run.episode_logs[i] = run_episode(local, params, opts, tasks[i]);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    set_inner_threads(0);
    if (failure) std::rethrow_exception(failure);
  }

  if (!opts.quiet) {
    for (const auto& ep : run.episode_logs)
      std::fprintf(stderr, "[eval seed %llu ep %d] steps %d success %d unsafe %d\n",
                   static_cast<unsigned long long>(ep.at("seed").get<std::uint64_t>()),
                   ep.at("index").get<int>(), ep.at("steps").get<int>(),
                   ep.at("success").get<bool>() ? 1 : 0,
                   ep.at("unsafe_entries").get<int>());
  }
  run.report = report_from_logs(run.episode_logs);
  return run;
}

std::string format_report_table(const std::vector<std::string>& row_names,
                                const std::vector<const EvalReport*>& reports,
                                const std::string& first_column_header) {
  std::string out = first_column_header + " & Succ. Rate & Avg. Rew. & Avg. Steps\n";
  char line[160];
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = *reports[i];
    std::snprintf(line, sizeof line, "%s & %.2f & %.2f ± %.2f & %.2f ± %.2f\n",
                  row_names[i].c_str(), r.success_rate, r.avg_reward, r.std_reward,
                  r.avg_steps, r.std_steps);
    out += line;
  }
  return out;
}

AblationResult ablate_guide_scales(PlannerContext ctx, const CbfParams& params,
                                   const std::vector<double>& eta1_grid,
                                   const EvalOptions& opts) {
  AblationResult res;
  for (const double eta1 : eta1_grid) {
    ctx.guide.eta1 = eta1;
    EvalRun run = evaluate(ctx, params, opts);
    res.rows.push_back({eta1, std::move(run.report)});
  }
  std::vector<std::string> names;
  std::vector<const EvalReport*> reports;
  char buf[32];
  for (const auto& row : res.rows) {
    std::snprintf(buf, sizeof buf, "%g", row.guide_scale);
    names.emplace_back(buf);
    reports.push_back(&row.report);
  }
  res.table = format_report_table(names, reports, "Guide Scale");
  return res;
}

nlohmann::json SafetyComparison::to_json() const {
  nlohmann::json j;
  j["value_only"] = value_only.to_json();
  j["combined"] = combined.to_json();
  j["delta_unsafe_per_episode"] = delta_unsafe_per_episode;
  j["value_only_unsafe_total"] = value_only_unsafe_total;
  j["combined_unsafe_total"] = combined_unsafe_total;
  return j;
}

SafetyComparison compare_safety(PlannerContext value_ctx, PlannerContext combined_ctx,
                                const CbfParams& params, const EvalOptions& opts) {
  // Identical environment randomness on both arms: the env stream depends only
  // on (seed, episode), never on the arm.
  SafetyComparison cmp;
  EvalRun value_run = evaluate(value_ctx, params, opts);
  EvalRun combined_run = evaluate(combined_ctx, params, opts);
  cmp.value_only = std::move(value_run.report);
  cmp.combined = std::move(combined_run.report);
  cmp.value_only_logs = std::move(value_run.episode_logs);
  cmp.combined_logs = std::move(combined_run.episode_logs);
  for (std::size_t i = 0; i < cmp.value_only.unsafe_entries_per_episode.size(); ++i)
    cmp.delta_unsafe_per_episode.push_back(
        cmp.value_only.unsafe_entries_per_episode[i] -
        cmp.combined.unsafe_entries_per_episode[i]);
  cmp.value_only_unsafe_total = cmp.value_only.unsafe_entries_total;
  cmp.combined_unsafe_total = cmp.combined.unsafe_entries_total;
  return cmp;
}

}  // namespace sdp

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdp/dataset.hpp"
#include "sdp/eval.hpp"
#include "sdp/models.hpp"
#include "sdp/planner.hpp"
#include "sdp/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::string> sets;
  std::string out_dir = "out";
  bool quiet = false;
};

sdp::RunConfig build_config(const Common& c) {
  sdp::RunConfig cfg;
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw sdp::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_given) cfg.set("seed", std::to_string(c.seed));
  return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

sdp::TargetSampling targets_from(const sdp::RunConfig& cfg, const sdp::SafeSetSpec& spec,
                                 const std::string& mode) {
  sdp::TargetSampling t;
  t.unsafe_x = spec.center_x;
  t.unsafe_y = spec.center_y;
  t.unsafe_r = spec.radius;
  t.near_factor = cfg.get_double("eval.near_factor");
  if (mode == "any")
    t.mode = sdp::TargetSampling::Mode::Anywhere;
  else if (mode == "outside")
    t.mode = sdp::TargetSampling::Mode::OutsideUnsafe;
  else if (mode == "near")
    t.mode = sdp::TargetSampling::Mode::NearDisk;
  else
    throw sdp::ConfigError("eval.target_mode must be any|outside|near, got '" + mode +
                           "'");
  return t;
}

struct LoadedPlanner {
  sdp::LoadedModel dynamics, value, safety;
  sdp::NoiseSchedule schedule;
  sdp::PlannerContext ctx;
  sdp::CbfParams params;
};

LoadedPlanner load_planner(const sdp::RunConfig& cfg, const std::string& dyn_path,
                           const std::string& val_path, const std::string& saf_path) {
  LoadedPlanner lp;
  lp.dynamics = sdp::load_model(dyn_path, sdp::ModelKind::Dynamics);
  lp.value = sdp::load_model(val_path, sdp::ModelKind::Value);
  lp.safety = sdp::load_model(saf_path, sdp::ModelKind::Safety);
  if (lp.dynamics.manifest.at("normalizer") != lp.value.manifest.at("normalizer") ||
      lp.dynamics.manifest.at("normalizer") != lp.safety.manifest.at("normalizer"))
    throw sdp::PlannerError(
        "checkpoints were trained with different normalizers; retrain on one dataset");

  const auto& train_cfg = lp.dynamics.manifest.at("config");
  const int K = train_cfg.at("diff.K").get<int>();
  const int horizon = train_cfg.at("plan.horizon").get<int>();
  if (cfg.get_int("diff.K") != K || cfg.get_int("plan.horizon") != horizon)
    throw sdp::PlannerError(
        "diff.K / plan.horizon differ from the values the checkpoints were trained "
        "with");
  lp.schedule = sdp::cosine_schedule(K, cfg.get_double("diff.cosine_s"),
                                     cfg.get_double("diff.beta_clip"));
  lp.ctx.dynamics = lp.dynamics.model.get();
  lp.ctx.value = lp.value.model.get();
  lp.ctx.safety = lp.safety.model.get();
  lp.ctx.schedule = &lp.schedule;
  lp.ctx.mode = lp.dynamics.mode;
  lp.ctx.normalizer = &lp.dynamics.normalizer;
  lp.ctx.env = sdp::EnvConfig::from(cfg);
  lp.ctx.spec = sdp::SafeSetSpec::from(cfg, lp.ctx.env);
  lp.ctx.guide = sdp::GuideConfig::from(cfg);
  lp.ctx.horizon = horizon;
  lp.ctx.batch = cfg.get_int("plan.batch");
  lp.params = sdp::CbfParams::from(cfg);
  return lp;
}

std::vector<std::uint64_t> eval_seeds(const sdp::RunConfig& cfg) {
  const auto base = cfg.get_u64("seed");
  const int n = cfg.get_int("eval.seeds");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

void write_episode_jsonl(const fs::path& path, const json& header,
                         const json& episode) {
  std::string out = json{{"type", "header"}, {"data", header}}.dump() + "\n";
  for (const auto& sl : episode.at("step_logs"))
    out += json{{"type", "step"}, {"data", sl}}.dump() + "\n";
  json summary = episode;
  summary.erase("step_logs");
  out += json{{"type", "summary"}, {"data", summary}}.dump() + "\n";
  write_file(path, out);
}

void write_eval_artifacts(const fs::path& dir, const std::string& stem,
                          const json& header, const sdp::EvalRun& run,
                          const std::string& table) {
  json report = run.report.to_json();
  report["config"] = header;
  write_file(dir / (stem + "_report.json"), report.dump(2) + "\n");
  write_file(dir / (stem + "_table.txt"), table);
  std::string lines = json{{"type", "header"}, {"data", header}}.dump() + "\n";
  for (const auto& ep : run.episode_logs)
    lines += json{{"type", "episode"}, {"data", ep}}.dump() + "\n";
  write_file(dir / (stem + "_episodes.jsonl"), lines);
}

int run(int argc, char** argv) {
  CLI::App app{"sdp: offline diffusion planning with value and safety guidance on a "
               "2-link planar arm"};
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("--config", c.config_path, "key=value config file");
  app.add_option("--seed", c.seed, "master RNG seed")
      ->each([&c](const std::string&) { c.seed_given = true; });
  app.add_option("--set", c.sets, "override a config key (KEY=VALUE, repeatable)");
  app.add_option("--out", c.out_dir, "output directory");
  app.add_flag("--quiet", c.quiet, "suppress progress output");

  auto* cmd_collect = app.add_subcommand("collect", "generate the offline dataset");
  std::string data_path;
  cmd_collect->add_option("--data", data_path, "dataset path (.sdpd)");

  auto* cmd_train = app.add_subcommand("train", "train model checkpoints");
  std::string train_model_arg = "all";
  std::string train_data;
  cmd_train->add_option("--model", train_model_arg, "dynamics|value|safety|all");
  cmd_train->add_option("--data", train_data, "dataset path (.sdpd)");

  auto* cmd_plan = app.add_subcommand("plan", "run one receding-horizon episode");
  std::string plan_mode, dyn_path, val_path, saf_path;
  double opt_tx = 0.0, opt_ty = 0.0;
  bool tx_given = false, ty_given = false;
  cmd_plan->add_option("--mode", plan_mode, "none|value|safety|combined");
  cmd_plan->add_option("--dynamics", dyn_path, "dynamics checkpoint");
  cmd_plan->add_option("--value", val_path, "value checkpoint");
  cmd_plan->add_option("--safety", saf_path, "safety checkpoint");
  cmd_plan->add_option("--target-x", opt_tx, "pin the target x")
      ->each([&](const std::string&) { tx_given = true; });
  cmd_plan->add_option("--target-y", opt_ty, "pin the target y")
      ->each([&](const std::string&) { ty_given = true; });

  auto* cmd_eval = app.add_subcommand("eval", "evaluate the planner");
  std::string eval_mode;
  cmd_eval->add_option("--mode", eval_mode, "override plan.mode");
  cmd_eval->add_option("--dynamics", dyn_path, "dynamics checkpoint");
  cmd_eval->add_option("--value", val_path, "value checkpoint");
  cmd_eval->add_option("--safety", saf_path, "safety checkpoint");

  auto* cmd_ablate = app.add_subcommand("ablate", "guide-scale grid search");
  std::string grid_arg = "0.1,0.01,0.001,0.0005,0.0001";
  cmd_ablate->add_option("--grid", grid_arg, "comma-separated eta1 grid");
  cmd_ablate->add_option("--dynamics", dyn_path, "dynamics checkpoint");
  cmd_ablate->add_option("--value", val_path, "value checkpoint");
  cmd_ablate->add_option("--safety", saf_path, "safety checkpoint");

  auto* cmd_compare = app.add_subcommand(
      "compare-safety", "paired value-only vs combined episodes");
  std::string cmp_targets = "near";
  cmd_compare->add_option("--targets", cmp_targets, "any|outside|near");
  cmd_compare->add_option("--dynamics", dyn_path, "dynamics checkpoint");
  cmd_compare->add_option("--value", val_path, "value checkpoint");
  cmd_compare->add_option("--safety", saf_path, "safety checkpoint");

  auto* cmd_inspect = app.add_subcommand("inspect", "print artifact headers as JSON");
  std::string inspect_path;
  cmd_inspect->add_option("path", inspect_path, "a .sdpd or .sdpm file")->required();

  CLI11_PARSE(app, argc, argv);

  sdp::RunConfig cfg = build_config(c);
  const std::uint64_t seed = cfg.get_u64("seed");
  const fs::path out_dir(c.out_dir);
  fs::create_directories(out_dir);

  if (data_path.empty()) data_path = (out_dir / "dataset.sdpd").string();
  if (train_data.empty()) train_data = data_path;
  if (dyn_path.empty()) dyn_path = (out_dir / "dynamics.sdpm").string();
  if (val_path.empty()) val_path = (out_dir / "value.sdpm").string();
  if (saf_path.empty()) saf_path = (out_dir / "safety.sdpm").string();

  if (cmd_collect->parsed()) {
    const sdp::Dataset ds = sdp::collect(cfg, seed);
    sdp::write_sdpd(data_path, ds);
    if (!c.quiet)
      std::fprintf(stderr, "wrote %zu records to %s\n", ds.records.size(),
                   data_path.c_str());
    return 0;
  }

  if (cmd_train->parsed()) {
    const sdp::Dataset ds = sdp::read_sdpd(train_data);
    const std::uint64_t tseed =
        cfg.get_u64("train.seed") != 0 ? cfg.get_u64("train.seed") : seed;
    std::vector<sdp::ModelKind> kinds;
    if (train_model_arg == "all")
      kinds = {sdp::ModelKind::Dynamics, sdp::ModelKind::Value, sdp::ModelKind::Safety};
    else
      kinds = {sdp::model_kind_from(train_model_arg)};
    for (const auto kind : kinds) {
      const std::string path =
          (out_dir / (std::string(sdp::model_kind_name(kind)) + ".sdpm")).string();
      sdp::train_model(kind, ds, cfg, tseed, path, c.quiet);
      if (!c.quiet) std::fprintf(stderr, "wrote %s\n", path.c_str());
    }
    return 0;
  }

  if (cmd_inspect->parsed()) {
    json j;
    if (inspect_path.ends_with(".sdpd")) {
      const sdp::Dataset ds = sdp::read_sdpd(inspect_path);
      j["format"] = "sdpd-1";
      j["episodes"] = ds.episodes;
      j["steps"] = ds.steps;
      j["records"] = ds.records.size();
      j["config"] = json::parse(ds.config_json);
      double mean_r = 0.0;
      std::size_t unsafe = 0;
      for (const auto& rec : ds.records) {
        mean_r += rec.r;
        unsafe += rec.c != 0.0f;
      }
      j["mean_reward"] = mean_r / static_cast<double>(ds.records.size());
      j["unsafe_label_fraction"] =
          static_cast<double>(unsafe) / static_cast<double>(ds.records.size());
    } else if (inspect_path.ends_with(".sdpm")) {
      j = sdp::load_sdpm(inspect_path, nullptr);
    } else {
      throw std::runtime_error("inspect: expected a .sdpd or .sdpm path");
    }
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
  }

  // Everything below needs the trained models.
  if (cmd_plan->parsed() && !plan_mode.empty()) cfg.set("plan.mode", plan_mode);
  if (cmd_eval->parsed() && !eval_mode.empty()) cfg.set("plan.mode", eval_mode);
  LoadedPlanner lp = load_planner(cfg, dyn_path, val_path, saf_path);

  json header = cfg.to_json();
  header["seed"] = seed;
  header["plan.mode"] = sdp::GuideConfig::mode_name(lp.ctx.guide.mode);

  if (cmd_plan->parsed()) {
    sdp::Rng env_rng(sdp::Rng::mix(seed, 0x656e76ULL));
    sdp::Rng plan_rng(sdp::Rng::mix(seed, 0x706c6eULL));
    const auto targets =
        targets_from(cfg, lp.ctx.spec, cfg.get_string("eval.target_mode"));
    sdp::State s0 = sdp::reset(env_rng, lp.ctx.env, targets);
    if (tx_given) s0.obs[6] = opt_tx;
    if (ty_given) s0.obs[7] = opt_ty;
    const sdp::EpisodeLog log = sdp::receding_horizon_control(
        lp.ctx, s0, lp.params, lp.ctx.env.max_steps, plan_rng);

    write_episode_jsonl(out_dir / "episode.jsonl", header,
                        sdp::episode_to_json(log, seed, 0));
    write_file(out_dir / "trajectory.csv",
               sdp::episode_csv(log, lp.ctx.env, lp.ctx.spec));
    const int n_svg = std::max(1, cfg.get_int("plan.svg_count"));
    std::vector<sdp::State> states{log.s0};
    for (const auto& sl : log.step_logs) states.push_back(sl.transition.s_next);
    const int stride = std::max<int>(1, static_cast<int>(states.size() - 1) / n_svg);
    for (std::size_t i = 0; i < states.size(); i += stride) {
      char name[64];
      std::snprintf(name, sizeof name, "snapshot_%03zu.svg", i);
      write_file(out_dir / name, sdp::svg_snapshot(states[i], lp.ctx.env, lp.ctx.spec));
    }
    if (!c.quiet)
      std::fprintf(stderr, "episode: steps %d success %d unsafe %d min_h %.4f\n",
                   log.steps, log.success ? 1 : 0, log.unsafe_entries, log.min_h);
    return 0;
  }

  sdp::EvalOptions opts;
  opts.episodes_per_seed = cfg.get_int("eval.episodes");
  opts.seeds = eval_seeds(cfg);
  opts.quiet = c.quiet;

  if (cmd_eval->parsed()) {
    opts.targets = targets_from(cfg, lp.ctx.spec, cfg.get_string("eval.target_mode"));
    const sdp::EvalRun run = sdp::evaluate(lp.ctx, lp.params, opts);
    const std::string table = sdp::format_report_table(
        {sdp::GuideConfig::mode_name(lp.ctx.guide.mode)}, {&run.report}, "Mode");
    write_eval_artifacts(out_dir, "eval", header, run, table);
    if (!c.quiet) std::fputs(table.c_str(), stderr);
    return 0;
  }

  if (cmd_ablate->parsed()) {
    opts.targets = targets_from(cfg, lp.ctx.spec, cfg.get_string("eval.target_mode"));
    lp.ctx.guide.mode = sdp::GuideConfig::Mode::Value;
    std::vector<double> grid;
    std::stringstream ss(grid_arg);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
    const sdp::AblationResult res =
        sdp::ablate_guide_scales(lp.ctx, lp.params, grid, opts);
    json j;
    j["config"] = header;
    j["rows"] = json::array();
    for (const auto& row : res.rows)
      j["rows"].push_back(
          {{"guide_scale", row.guide_scale}, {"report", row.report.to_json()}});
    write_file(out_dir / "ablation.json", j.dump(2) + "\n");
    write_file(out_dir / "ablation_table.txt", res.table);
    if (!c.quiet) std::fputs(res.table.c_str(), stderr);
    return 0;
  }

  if (cmd_compare->parsed()) {
    opts.targets = targets_from(cfg, lp.ctx.spec, cmp_targets == "near"     ? "near"
                                                  : cmp_targets == "outside" ? "outside"
                                                                             : "any");
    sdp::PlannerContext value_ctx = lp.ctx;
    value_ctx.guide.mode = sdp::GuideConfig::Mode::Value;
    sdp::PlannerContext combined_ctx = lp.ctx;
    combined_ctx.guide.mode = sdp::GuideConfig::Mode::Combined;
    const sdp::SafetyComparison cmp =
        sdp::compare_safety(value_ctx, combined_ctx, lp.params, opts);
    json j = cmp.to_json();
    j["config"] = header;
    write_file(out_dir / "compare_safety.json", j.dump(2) + "\n");
    const std::string table = sdp::format_report_table(
        {"value", "combined"}, {&cmp.value_only, &cmp.combined}, "Mode");
    write_file(out_dir / "compare_safety_table.txt", table);
    std::string lines = json{{"type", "header"}, {"data", header}}.dump() + "\n";
    for (const auto& ep : cmp.value_only_logs)
      lines += json{{"type", "episode"}, {"arm", "value"}, {"data", ep}}.dump() + "\n";
    for (const auto& ep : cmp.combined_logs)
      lines += json{{"type", "episode"}, {"arm", "combined"}, {"data", ep}}.dump() + "\n";
    write_file(out_dir / "compare_safety_episodes.jsonl", lines);
    if (!c.quiet) {
      std::fputs(table.c_str(), stderr);
      std::fprintf(stderr, "unsafe entries: value %ld combined %ld\n",
                   cmp.value_only_unsafe_total, cmp.combined_unsafe_total);
    }
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
}

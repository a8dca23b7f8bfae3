#include "sdp/planner.hpp"

#include <cmath>
#include <limits>

namespace sdp {

GuideConfig::Mode GuideConfig::mode_from(const std::string& name) {
  if (name == "none") return Mode::None;
  if (name == "value") return Mode::Value;
  if (name == "safety") return Mode::Safety;
  if (name == "combined") return Mode::Combined;
  throw ConfigError("plan.mode must be none|value|safety|combined, got '" + name + "'");
}

const char* GuideConfig::mode_name(Mode m) {
  switch (m) {
    case Mode::None: return "none";
    case Mode::Value: return "value";
    case Mode::Safety: return "safety";
    case Mode::Combined: return "combined";
  }
  return "?";
}

GuideConfig GuideConfig::from(const RunConfig& cfg) {
  GuideConfig g;
  g.eta1 = cfg.get_double("plan.eta1");
  g.eta2 = cfg.get_double("plan.eta2");
  if (g.eta1 < 0 || g.eta2 < 0) throw ConfigError("guide scales must be >= 0");
  g.mode = mode_from(cfg.get_string("plan.mode"));
  const std::string gp = cfg.get_string("plan.grad_point");
  if (gp == "mean")
    g.grad_point = GradPoint::Mean;
  else if (gp == "sample")
    g.grad_point = GradPoint::Sample;
  else
    throw ConfigError("plan.grad_point must be 'mean' or 'sample'");
  g.inpaint_tail = cfg.get_bool("plan.inpaint_tail");
  return g;
}

Tensor value_guide_gradient(Model& value_model, const Tensor& tau, int k) {
  const int B = tau.shape.back();
  std::vector<int> ks(B, k);
  const Tensor out = value_model.forward(tau, ks);
  Tensor dout(out.shape);
  std::fill(dout.v.begin(), dout.v.end(), 1.0f);  // d(value_b)/d(value_b)
  return value_model.backward(dout, /*param_grads=*/false);
}

Tensor safety_guide_gradient(Model& safety_model, const Tensor& tau, int k) {
  const int B = tau.shape.back();
  std::vector<int> ks(B, k);
  const Tensor logits = safety_model.forward(tau, ks);
  const LossGrad lg = safety_log_prob(logits, /*target_class=*/0);
  return safety_model.backward(lg.dpred, /*param_grads=*/false);
}

namespace {

void inpaint_first_state(Tensor& tau, const std::array<float, 8>& s0_norm) {
  const int B = tau.shape.back();
  for (int c = 0; c < Normalizer::kStateDim; ++c)
    for (int b = 0; b < B; ++b)
      tau.v[static_cast<std::size_t>(c) * B + b] = s0_norm[c];
}

State plan_row_state(const Tensor& plans, int t, int b, const Normalizer& norm,
                     bool* finite) {
  const int B = plans.shape.back();
  float row[Normalizer::kRowDim];
  float raw[Normalizer::kRowDim];
  for (int c = 0; c < Normalizer::kRowDim; ++c) {
    row[c] = plans.v[(static_cast<std::size_t>(t) * Normalizer::kRowDim + c) * B + b];
    if (!std::isfinite(row[c])) *finite = false;
  }
  norm.denormalize_row(row, raw);
  State s;
  for (int c = 0; c < Normalizer::kStateDim; ++c) s.obs[c] = raw[c];
  return s;
}

}  // namespace

PlanBatch sample_plans(const PlannerContext& ctx, const State& s0, Rng& rng) {
  if (!ctx.dynamics || !ctx.schedule || !ctx.normalizer)
    throw PlannerError("planner context incomplete");
  const GuideConfig& g = ctx.guide;
  if (g.wants_value() && !ctx.value)
    throw PlannerError("guide mode needs a value model but none is loaded");
  if (g.wants_safety() && !ctx.safety)
    throw PlannerError("guide mode needs a safety model but none is loaded");

  const int H = ctx.horizon, B = ctx.batch;
  std::array<float, 8> s0f;
  for (int i = 0; i < 8; ++i) s0f[i] = static_cast<float>(s0.obs[i]);
  const std::array<float, 8> s0n = ctx.normalizer->normalize_state(s0f);

  Tensor tau({H, Normalizer::kRowDim, B});
  tau.fill_normal(rng);
  inpaint_first_state(tau, s0n);

  std::vector<int> ks(B);
  for (int k = ctx.schedule->K; k >= 1; --k) {
    std::fill(ks.begin(), ks.end(), k);
    const Tensor pred = ctx.dynamics->forward(tau, ks);
    Tensor mu = posterior_mean(tau, pred, k, *ctx.schedule, ctx.mode);

    const Tensor* shift = nullptr;
    Tensor shift_buf;
    if ((g.wants_value() && g.eta1 > 0.0) || (g.wants_safety() && g.eta2 > 0.0)) {
      const Tensor& point = g.grad_point == GuideConfig::GradPoint::Mean ? mu : tau;
      shift_buf = Tensor(tau.shape);
      const float var = static_cast<float>(ctx.schedule->post_var[k]);
      if (g.wants_value() && g.eta1 > 0.0) {
        const Tensor gv = value_guide_gradient(*ctx.value, point, k);
        const float scale = static_cast<float>(g.eta1) * var;
        for (std::size_t i = 0; i < shift_buf.numel(); ++i)
          shift_buf.v[i] += scale * gv.v[i];
      }
      if (g.wants_safety() && g.eta2 > 0.0) {
        const Tensor gs = safety_guide_gradient(*ctx.safety, point, k);
        const float scale = static_cast<float>(g.eta2) * var;
        for (std::size_t i = 0; i < shift_buf.numel(); ++i)
          shift_buf.v[i] += scale * gs.v[i];
      }
      shift = &shift_buf;
    }

    tau = reverse_step(mu, k, *ctx.schedule, rng, shift);
    inpaint_first_state(tau, s0n);
  }

  PlanBatch out;
  out.plans = std::move(tau);
  out.diags.assign(B, {});

  // Diagnostics at the lightest noise level: predicted value for selection,
  // classifier probabilities for logging, ground-truth barrier per step.
  std::fill(ks.begin(), ks.end(), 1);
  Tensor values, probs;
  if (ctx.value) values = ctx.value->forward(out.plans, ks);
  if (ctx.safety) probs = safety_safe_probs(ctx.safety->forward(out.plans, ks));

  for (int b = 0; b < B; ++b) {
    PlanDiagnostics& d = out.diags[b];
    bool finite = true;
    d.h_series.resize(H);
    d.safe_probs.resize(H);
    for (int t = 0; t < H; ++t) {
      const State st = plan_row_state(out.plans, t, b, *ctx.normalizer, &finite);
      d.h_series[t] = finite ? barrier(st, ctx.spec, ctx.env) : -1.0;
      d.safe_probs[t] =
          ctx.safety ? static_cast<double>(
                           probs.v[static_cast<std::size_t>(t) * B + b])
                     : 1.0;
      if (d.h_series[t] < 0.0) ++d.violations;
    }
    d.predicted_value = ctx.value ? static_cast<double>(values.v[b]) : 0.0;
    if (!finite || !std::isfinite(d.predicted_value)) {
      d.failed = true;
      d.violations = H;
      d.predicted_value = -std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

int select_plan(const PlanBatch& batch) {
  const int B = static_cast<int>(batch.diags.size());
  if (B == 0) throw PlannerError("empty plan batch");
  int best = -1;
  for (int b = 0; b < B; ++b) {
    const PlanDiagnostics& d = batch.diags[b];
    if (d.failed) continue;
    if (best < 0) {
      best = b;
      continue;
    }
    const PlanDiagnostics& bd = batch.diags[best];
    const bool d_clean = d.violations == 0;
    const bool b_clean = bd.violations == 0;
    if (d_clean != b_clean) {
      if (d_clean) best = b;
      continue;
    }
    if (!d_clean && d.violations != bd.violations) {
      if (d.violations < bd.violations) best = b;
      continue;
    }
    if (d.predicted_value > bd.predicted_value) best = b;
  }
  if (best < 0) throw PlannerError("all plans in the batch failed numerically");
  return best;
}

Action first_action(const Tensor& plans, int plan_idx, const Normalizer& norm) {
  const int B = plans.shape.back();
  const float a1n = plans.v[static_cast<std::size_t>(Normalizer::kStateDim) * B +
                            plan_idx];
  const float a2n =
      plans.v[static_cast<std::size_t>(Normalizer::kStateDim + 1) * B + plan_idx];
  return Action::clamped(norm.denorm_action(0, a1n), norm.denorm_action(1, a2n));
}

EpisodeLog receding_horizon_control(const PlannerContext& ctx, const State& s0,
                                    const CbfParams& params, int max_steps,
                                    Rng& plan_rng) {
  EpisodeLog log;
  log.s0 = s0;
  log.min_h = barrier(s0, ctx.spec, ctx.env);
  log.h_visited.push_back(log.min_h);
  if (log.min_h < 0.0) ++log.unsafe_entries;

  State s = s0;
  const Vec2 tg = s0.target();
  for (int t = 0; t < max_steps; ++t) {
    PlanBatch batch = sample_plans(ctx, s, plan_rng);
    const int chosen = select_plan(batch);
    const Action a = first_action(batch.plans, chosen, *ctx.normalizer);

    PlanStepLog sl;
    sl.t = t;
    sl.chosen = chosen;
    sl.action = a;
    sl.plan_values.reserve(batch.diags.size());
    sl.plan_violations.reserve(batch.diags.size());
    for (const auto& d : batch.diags) {
      sl.plan_values.push_back(d.predicted_value);
      sl.plan_violations.push_back(d.violations);
    }

    Transition tr;
    tr.s = s;
    tr.a = a;
    const JointState next = step(decode_joint(s), a, ctx.env);
    tr.s_next = make_state(next, tg);
    tr.r = reward(tr.s_next, ctx.env);
    tr.c = label(tr.s, tr.s_next, ctx.spec, params, ctx.env);
    const bool success = at_target(tr.s_next, ctx.env);
    tr.d = success || t == max_steps - 1;
    sl.h_next = barrier(tr.s_next, ctx.spec, ctx.env);
    sl.transition = tr;

    log.h_visited.push_back(sl.h_next);
    if (sl.h_next < 0.0) ++log.unsafe_entries;
    log.min_h = std::min(log.min_h, sl.h_next);
    log.total_reward += tr.r;
    log.step_logs.push_back(std::move(sl));
    ++log.steps;
    s = tr.s_next;
    if (tr.d) {
      log.success = success;
      break;
    }
  }
  return log;
}

}  // namespace sdp

#include "sdp/rollout.hpp"

#include <cmath>

namespace sdp {

bool at_target(const State& s, const EnvConfig& cfg) {
  const Vec2 ee = end_effector(s, cfg);
  const Vec2 tg = s.target();
  return std::hypot(ee.x - tg.x, ee.y - tg.y) < cfg.tolerance;
}

std::vector<Transition> rollout_episode(const Policy& policy, State s0,
                                        const EnvConfig& cfg,
                                        const SafeSetSpec& spec,
                                        const CbfParams& params, int max_steps,
                                        bool stop_on_success) {
  std::vector<Transition> out;
  State s = s0;
  const Vec2 tg = s0.target();
  for (int t = 0; t < max_steps; ++t) {
    Transition tr;
    tr.s = s;
    const Action raw = policy(s);
    tr.a = Action::clamped(raw.torque1, raw.torque2);
    const JointState next = step(decode_joint(s), tr.a, cfg);
    tr.s_next = make_state(next, tg);
    tr.r = reward(tr.s_next, cfg);
    tr.c = label(tr.s, tr.s_next, spec, params, cfg);
    const bool success = stop_on_success && at_target(tr.s_next, cfg);
    tr.d = success || t == max_steps - 1;
    out.push_back(tr);
    if (tr.d) break;
    s = tr.s_next;
  }
  return out;
}

}  // namespace sdp

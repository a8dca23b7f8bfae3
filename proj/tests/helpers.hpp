#pragma once

#include <cmath>
#include <optional>

#include "sdp/env.hpp"

namespace sdp::test {

// Elbow-up inverse kinematics; returns nothing when the point is unreachable.
inline std::optional<JointState> inverse_kinematics(Vec2 p, const EnvConfig& cfg) {
  const double d2 = p.x * p.x + p.y * p.y;
  const double reach = cfg.l1 + cfg.l2;
  const double inner = std::abs(cfg.l1 - cfg.l2);
  if (d2 > reach * reach || d2 < inner * inner) return std::nullopt;
  double c2 = (d2 - cfg.l1 * cfg.l1 - cfg.l2 * cfg.l2) / (2.0 * cfg.l1 * cfg.l2);
  c2 = std::clamp(c2, -1.0, 1.0);
  JointState js;
  js.alpha2 = std::acos(c2);
  js.alpha1 = std::atan2(p.y, p.x) -
              std::atan2(cfg.l2 * std::sin(js.alpha2), cfg.l1 + cfg.l2 * c2);
  js.alpha1 = wrap_angle(js.alpha1);
  return js;
}

inline JointState random_joint_state(Rng& rng, const EnvConfig& cfg) {
  JointState js;
  js.alpha1 = wrap_angle(rng.uniform(-3.14159265358979, 3.14159265358979));
  js.alpha2 = wrap_angle(rng.uniform(-3.14159265358979, 3.14159265358979));
  js.dalpha1 = rng.uniform(-cfg.vel_clamp, cfg.vel_clamp);
  js.dalpha2 = rng.uniform(-cfg.vel_clamp, cfg.vel_clamp);
  return js;
}

}  // namespace sdp::test

#include "sdp/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sdp {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.28318530717958647692;
}  // namespace

Action Action::clamped(double t1, double t2) {
  return {std::clamp(t1, -1.0, 1.0), std::clamp(t2, -1.0, 1.0)};
}

EnvConfig EnvConfig::from(const RunConfig& cfg) {
  EnvConfig e;
  e.l1 = cfg.get_double("env.l1");
  e.l2 = cfg.get_double("env.l2");
  e.m1 = cfg.get_double("env.m1");
  e.m2 = cfg.get_double("env.m2");
  e.damping = cfg.get_double("env.damping");
  e.dt = cfg.get_double("env.dt");
  e.vel_clamp = cfg.get_double("env.vel_clamp");
  e.annulus_min = cfg.get_double("env.annulus_min");
  e.annulus_max = cfg.get_double("env.annulus_max");
  e.max_steps = cfg.get_int("env.max_steps");
  e.tolerance = cfg.get_double("env.tolerance");
  e.check();
  return e;
}

void EnvConfig::check() const {
  if (l1 <= 0 || l2 <= 0 || m1 <= 0 || m2 <= 0 || dt <= 0)
    throw EnvError("env config: l1, l2, m1, m2, dt must be positive");
  if (!(annulus_min < annulus_max) || annulus_max > l1 + l2 + 1e-12)
    throw EnvError("env config: annulus must satisfy min < max <= l1+l2");
  if (vel_clamp <= 0) throw EnvError("env config: vel_clamp must be positive");
}

double wrap_angle(double a) {
  double y = std::fmod(a + kPi, kTwoPi);
  if (y <= 0.0) y += kTwoPi;
  return y - kPi;
}

State make_state(const JointState& js, Vec2 target) {
  State s;
  s.obs = {std::sin(js.alpha1), std::cos(js.alpha1),
           std::sin(js.alpha2), std::cos(js.alpha2),
           js.dalpha1,          js.dalpha2,
           target.x,            target.y};
  return s;
}

JointState decode_joint(const State& s) {
  JointState js;
  js.alpha1 = std::atan2(s.sin1(), s.cos1());
  js.alpha2 = std::atan2(s.sin2(), s.cos2());
  js.dalpha1 = s.dalpha1();
  js.dalpha2 = s.dalpha2();
  return js;
}

Vec2 forward_kinematics(const JointState& js, const EnvConfig& cfg) {
  const double a12 = js.alpha1 + js.alpha2;
  return {cfg.l1 * std::cos(js.alpha1) + cfg.l2 * std::cos(a12),
          cfg.l1 * std::sin(js.alpha1) + cfg.l2 * std::sin(a12)};
}

Vec2 end_effector(const State& s, const EnvConfig& cfg) {
  return forward_kinematics(decode_joint(s), cfg);
}

std::array<double, 3> mass_matrix(const JointState& js, const EnvConfig& cfg) {
  const double c2 = std::cos(js.alpha2);
  const double m11 = (cfg.m1 + cfg.m2) * cfg.l1 * cfg.l1 + cfg.m2 * cfg.l2 * cfg.l2 +
                     2.0 * cfg.m2 * cfg.l1 * cfg.l2 * c2;
  const double m12 = cfg.m2 * cfg.l2 * cfg.l2 + cfg.m2 * cfg.l1 * cfg.l2 * c2;
  const double m22 = cfg.m2 * cfg.l2 * cfg.l2;
  return {m11, m12, m22};
}

double kinetic_energy(const JointState& js, const EnvConfig& cfg) {
  const auto [m11, m12, m22] = mass_matrix(js, cfg);
  const double d1 = js.dalpha1, d2 = js.dalpha2;
  return 0.5 * (m11 * d1 * d1 + 2.0 * m12 * d1 * d2 + m22 * d2 * d2);
}

JointState step(const JointState& js, const Action& a, const EnvConfig& cfg) {
  const Action tq = Action::clamped(a.torque1, a.torque2);
  const double s2 = std::sin(js.alpha2);
  const auto [m11, m12, m22] = mass_matrix(js, cfg);
  const double d1 = js.dalpha1, d2 = js.dalpha2;

  // Point masses at the link ends, horizontal plane: Coriolis/centrifugal
  // vector of the standard two-link model.
  const double h = cfg.m2 * cfg.l1 * cfg.l2 * s2;
  const double cor1 = -h * (2.0 * d1 * d2 + d2 * d2);
  const double cor2 = h * d1 * d1;

  const double rhs1 = tq.torque1 - cor1 - cfg.damping * d1;
  const double rhs2 = tq.torque2 - cor2 - cfg.damping * d2;

  // det = m2*l1^2*l2^2*(m1 + m2*sin^2 a2) > 0, so the solve never degenerates.
  const double det = m11 * m22 - m12 * m12;
  const double acc1 = (m22 * rhs1 - m12 * rhs2) / det;
  const double acc2 = (m11 * rhs2 - m12 * rhs1) / det;

  JointState out;
  out.dalpha1 = std::clamp(d1 + cfg.dt * acc1, -cfg.vel_clamp, cfg.vel_clamp);
  out.dalpha2 = std::clamp(d2 + cfg.dt * acc2, -cfg.vel_clamp, cfg.vel_clamp);
  out.alpha1 = wrap_angle(js.alpha1 + cfg.dt * out.dalpha1);
  out.alpha2 = wrap_angle(js.alpha2 + cfg.dt * out.dalpha2);

  if (!std::isfinite(out.alpha1) || !std::isfinite(out.alpha2) ||
      !std::isfinite(out.dalpha1) || !std::isfinite(out.dalpha2))
    throw EnvError("dynamics produced a non-finite state (bad dt or config?)");
  return out;
}

double reward(const State& s, const EnvConfig& cfg) {
  const Vec2 ee = end_effector(s, cfg);
  const Vec2 tg = s.target();
  return -std::hypot(ee.x - tg.x, ee.y - tg.y);
}

namespace {

Vec2 sample_annulus(Rng& rng, const EnvConfig& cfg) {
  // Area-uniform over the annulus.
  const double r2min = cfg.annulus_min * cfg.annulus_min;
  const double r2max = cfg.annulus_max * cfg.annulus_max;
  const double r = std::sqrt(rng.uniform(r2min, r2max));
  const double th = rng.uniform(0.0, kTwoPi);
  return {r * std::cos(th), r * std::sin(th)};
}

bool inside_annulus(Vec2 p, const EnvConfig& cfg) {
  const double r = std::hypot(p.x, p.y);
  return r >= cfg.annulus_min && r <= cfg.annulus_max;
}

}  // namespace

State reset(Rng& rng, const EnvConfig& cfg, const TargetSampling& targets) {
  JointState js;
  js.alpha1 = wrap_angle(rng.uniform(-kPi, kPi));
  js.alpha2 = wrap_angle(rng.uniform(-kPi, kPi));
  js.dalpha1 = rng.uniform(-1.0, 1.0);
  js.dalpha2 = rng.uniform(-1.0, 1.0);

  Vec2 tg;
  switch (targets.mode) {
    case TargetSampling::Mode::Anywhere:
      tg = sample_annulus(rng, cfg);
      break;
    case TargetSampling::Mode::OutsideUnsafe: {
      const double c = std::hypot(targets.unsafe_x, targets.unsafe_y);
      if (c + cfg.annulus_max - targets.unsafe_r <= 1e-12)
        throw EnvError("target annulus lies entirely inside the unsafe region");
      int tries = 0;
      do {
        tg = sample_annulus(rng, cfg);
        if (++tries > 100000)
          throw EnvError("could not sample a target outside the unsafe region");
      } while (std::hypot(tg.x - targets.unsafe_x, tg.y - targets.unsafe_y) <
               targets.unsafe_r);
      break;
    }
    case TargetSampling::Mode::NearDisk: {
      // Uniform over the disk of radius near_factor * unsafe_r around the
      // unsafe center, restricted to the annulus.
      const double rr = targets.near_factor * targets.unsafe_r;
      int tries = 0;
      do {
        const double r = rr * std::sqrt(rng.uniform01());
        const double th = rng.uniform(0.0, kTwoPi);
        tg = {targets.unsafe_x + r * std::cos(th),
              targets.unsafe_y + r * std::sin(th)};
        if (++tries > 100000)
          throw EnvError("could not sample a near-disk target inside the annulus");
      } while (!inside_annulus(tg, cfg));
      break;
    }
  }
  return make_state(js, tg);
}

}  // namespace sdp

#pragma once

#include <array>
#include <stdexcept>

#include "sdp/config.hpp"
#include "sdp/rng.hpp"

namespace sdp {

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Joint-space state of the 2-DOF planar arm. Angles are kept in (-pi, pi].
struct JointState {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double dalpha1 = 0.0;
  double dalpha2 = 0.0;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// 8-dim observation: (sin a1, cos a1, sin a2, cos a2, da1, da2, x_tg, y_tg).
struct State {
  std::array<double, 8> obs{};

  double sin1() const { return obs[0]; }
  double cos1() const { return obs[1]; }
  double sin2() const { return obs[2]; }
  double cos2() const { return obs[3]; }
  double dalpha1() const { return obs[4]; }
  double dalpha2() const { return obs[5]; }
  Vec2 target() const { return {obs[6], obs[7]}; }
};

// Torques, clamped to the actuator range on ingestion.
struct Action {
  double torque1 = 0.0;
  double torque2 = 0.0;

  static Action clamped(double t1, double t2);
};

struct EnvConfig {
  double l1 = 0.5;
  double l2 = 0.5;
  double m1 = 1.0;
  double m2 = 1.0;
  double damping = 0.3;
  double dt = 0.05;
  double vel_clamp = 2.0;
  double annulus_min = 0.2;
  double annulus_max = 1.0;
  int max_steps = 100;
  double tolerance = 0.3;

  static EnvConfig from(const RunConfig& cfg);
  void check() const;
};

double wrap_angle(double a);  // to (-pi, pi]

State make_state(const JointState& js, Vec2 target);
JointState decode_joint(const State& s);

Vec2 forward_kinematics(const JointState& js, const EnvConfig& cfg);
Vec2 end_effector(const State& s, const EnvConfig& cfg);

// Mass matrix entries (m11, m12, m22) at the given configuration; exposed so
// tests can check the integrator against the analytic inverse.
std::array<double, 3> mass_matrix(const JointState& js, const EnvConfig& cfg);
double kinetic_energy(const JointState& js, const EnvConfig& cfg);

// One semi-implicit Euler step of the damped two-link dynamics (no gravity).
// Velocities are clamped, then angles wrapped. Throws on non-finite results.
JointState step(const JointState& js, const Action& a, const EnvConfig& cfg);

double reward(const State& s, const EnvConfig& cfg);

// Target sampling policy for reset. Dataset collection rejects targets inside
// the unsafe disk; evaluation may allow them or focus near the disk.
struct TargetSampling {
  enum class Mode { OutsideUnsafe, Anywhere, NearDisk };
  Mode mode = Mode::Anywhere;
  // Unsafe-disk geometry; required for OutsideUnsafe and NearDisk.
  double unsafe_x = 0.0;
  double unsafe_y = 0.0;
  double unsafe_r = 0.0;
  double near_factor = 1.5;
};

State reset(Rng& rng, const EnvConfig& cfg, const TargetSampling& targets);

}  // namespace sdp

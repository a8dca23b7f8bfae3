#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdp/cbf.hpp"
#include "sdp/dataset.hpp"
#include "sdp/rollout.hpp"
#include "helpers.hpp"

using namespace sdp;

namespace {
constexpr double kPi = 3.14159265358979323846;

EnvConfig default_env() { return EnvConfig{}; }
}  // namespace

TEST_CASE("forward kinematics at canonical configurations") {
  const EnvConfig cfg = default_env();
  JointState js;
  Vec2 p = forward_kinematics(js, cfg);
  CHECK(p.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(0.0).epsilon(1e-12));

  js.alpha1 = kPi / 2;
  p = forward_kinematics(js, cfg);
  CHECK(p.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(1.0).epsilon(1e-12));

  js.alpha1 = 0.0;
  js.alpha2 = kPi / 2;
  p = forward_kinematics(js, cfg);
  CHECK(p.x == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("angle wrapping lands in (-pi, pi]") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3 * kPi) == doctest::Approx(kPi));
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(a);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    // same angle modulo 2*pi
    CHECK(std::abs(std::remainder(a - w, 2 * kPi)) < 1e-9);
  }
}

TEST_CASE("equilibrium: zero torque and zero velocity is a fixed point") {
  const EnvConfig cfg = default_env();
  JointState js;
  js.alpha1 = 0.7;
  js.alpha2 = -1.3;
  const JointState out = step(js, Action{0, 0}, cfg);
  CHECK(out.alpha1 == doctest::Approx(js.alpha1).epsilon(1e-15));
  CHECK(out.alpha2 == doctest::Approx(js.alpha2).epsilon(1e-15));
  CHECK(out.dalpha1 == 0.0);
  CHECK(out.dalpha2 == 0.0);
}

TEST_CASE("from rest, one step matches the analytic mass-matrix inverse") {
  const EnvConfig cfg = default_env();
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    JointState js = test::random_joint_state(rng, cfg);
    js.dalpha1 = js.dalpha2 = 0.0;  // from rest: no Coriolis, no damping force
    const auto [m11, m12, m22] = mass_matrix(js, cfg);
    const double det = m11 * m22 - m12 * m12;
    CHECK(det > 0.0);
    const JointState out = step(js, Action{1, 0}, cfg);
    const double expect_d1 = cfg.dt * (m22 * 1.0) / det;
    const double expect_d2 = cfg.dt * (-m12 * 1.0) / det;
    CHECK(out.dalpha1 == doctest::Approx(expect_d1).epsilon(1e-12));
    CHECK(out.dalpha2 == doctest::Approx(expect_d2).epsilon(1e-12));
  }
}

TEST_CASE("energy dissipation: zero torque never increases kinetic energy") {
  const EnvConfig cfg = default_env();
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    JointState js = test::random_joint_state(rng, cfg);
    double e = kinetic_energy(js, cfg);
    for (int t = 0; t < 5; ++t) {
      js = step(js, Action{0, 0}, cfg);
      const double e_next = kinetic_energy(js, cfg);
      CHECK(e_next <= e + 1e-12);
      e = e_next;
    }
  }
}

TEST_CASE("reward is the negative end-effector distance") {
  const EnvConfig cfg = default_env();
  JointState js;  // ee at (1, 0)
  State s = make_state(js, {1.0, 0.0});
  CHECK(reward(s, cfg) == doctest::Approx(0.0));
  s = make_state(js, {0.0, 0.0});
  CHECK(reward(s, cfg) == doctest::Approx(-1.0));
  // 3-4-5 triangle: ee (0.5, 0.5), target (0.2, 0.1)
  const auto ik = test::inverse_kinematics({0.5, 0.5}, cfg);
  REQUIRE(ik.has_value());
  s = make_state(*ik, {0.2, 0.1});
  CHECK(reward(s, cfg) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(reward(s, cfg) <= 0.0);
}

TEST_CASE("state encoding roundtrip within 1e-9") {
  const EnvConfig cfg = default_env();
  Rng rng(19);
  for (int i = 0; i < 1000; ++i) {
    const JointState js = test::random_joint_state(rng, cfg);
    const State s = make_state(js, {0.3, -0.2});
    CHECK(s.sin1() * s.sin1() + s.cos1() * s.cos1() == doctest::Approx(1.0).epsilon(1e-9));
    const State s2 = make_state(decode_joint(s), s.target());
    for (int d = 0; d < 8; ++d) CHECK(std::abs(s.obs[d] - s2.obs[d]) < 1e-9);
  }
}

TEST_CASE("reset: determinism, annulus bounds, velocity range") {
  const EnvConfig cfg = default_env();
  TargetSampling ts;
  ts.mode = TargetSampling::Mode::Anywhere;
  Rng a(42), b(42);
  const State sa = reset(a, cfg, ts);
  const State sb = reset(b, cfg, ts);
  for (int d = 0; d < 8; ++d) CHECK(sa.obs[d] == sb.obs[d]);

  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const State s = reset(rng, cfg, ts);
    const double r = std::hypot(s.target().x, s.target().y);
    CHECK(r >= cfg.annulus_min);
    CHECK(r <= cfg.annulus_max);
    CHECK(std::abs(s.dalpha1()) <= 1.0);
    CHECK(std::abs(s.dalpha2()) <= 1.0);
  }
}

TEST_CASE("reset in collection mode keeps targets out of the unsafe disk") {
  const EnvConfig cfg = default_env();
  const SafeSetSpec spec{};
  TargetSampling ts;
  ts.mode = TargetSampling::Mode::OutsideUnsafe;
  ts.unsafe_x = spec.center_x;
  ts.unsafe_y = spec.center_y;
  ts.unsafe_r = spec.radius;
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const State s = reset(rng, cfg, ts);
    const Vec2 tg = s.target();
    const double h_tg = std::hypot(tg.x - spec.center_x, tg.y - spec.center_y) -
                        spec.radius;
    CHECK(h_tg >= 0.0);
  }
}

TEST_CASE("reset rejects an annulus swallowed by the unsafe region") {
  EnvConfig cfg = default_env();
  cfg.annulus_min = 0.05;
  cfg.annulus_max = 0.1;
  TargetSampling ts;
  ts.mode = TargetSampling::Mode::OutsideUnsafe;
  ts.unsafe_x = 0.0;
  ts.unsafe_y = 0.0;
  ts.unsafe_r = 0.5;
  Rng rng(3);
  CHECK_THROWS_AS(reset(rng, cfg, ts), EnvError);
}

TEST_CASE("rollout: zero policy on an unreachable target runs max steps") {
  const EnvConfig cfg = default_env();
  const SafeSetSpec spec{};
  const CbfParams params{};
  JointState js;  // at rest, ee at (1, 0)
  const State s0 = make_state(js, {-1.0, 0.0});  // 2 m away
  const auto log = rollout_episode([](const State&) { return Action{0, 0}; }, s0, cfg,
                                   spec, params, cfg.max_steps, true);
  CHECK(log.size() == static_cast<std::size_t>(cfg.max_steps));
  for (std::size_t i = 0; i < log.size(); ++i)
    CHECK(log[i].d == (i + 1 == log.size()));
}

TEST_CASE("rollout: target at the initial end-effector succeeds immediately") {
  const EnvConfig cfg = default_env();
  const SafeSetSpec spec{};
  const CbfParams params{};
  JointState js;
  const State s0 = make_state(js, {1.0, 0.0});
  const auto log = rollout_episode([](const State&) { return Action{0, 0}; }, s0, cfg,
                                   spec, params, cfg.max_steps, true);
  CHECK(log.size() == 1);
  CHECK(log[0].d);
}

TEST_CASE("rollout: seeded random policy repeats bit-exactly") {
  const EnvConfig cfg = default_env();
  const SafeSetSpec spec{};
  const CbfParams params{};
  auto run = [&] {
    Rng rng(99);
    TargetSampling ts;
    ts.mode = TargetSampling::Mode::Anywhere;
    const State s0 = reset(rng, cfg, ts);
    return rollout_episode(
        [&rng](const State&) {
          return Action{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        },
        s0, cfg, spec, params, cfg.max_steps, false);
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int d = 0; d < 8; ++d) {
      CHECK(a[i].s.obs[d] == b[i].s.obs[d]);
      CHECK(a[i].s_next.obs[d] == b[i].s_next.obs[d]);
    }
    CHECK(a[i].r == b[i].r);
    CHECK(a[i].c == b[i].c);
  }
}

#pragma once

#include <span>

#include "sdp/env.hpp"

namespace sdp {

// Circular unsafe region the end-effector must stay out of.
struct SafeSetSpec {
  double center_x = 0.5;
  double center_y = 0.5;
  double radius = 0.25;

  static SafeSetSpec from(const RunConfig& cfg, const EnvConfig& env);
  void check(const EnvConfig& env) const;
};

// Linear class-K coefficient of the discrete-time barrier condition.
struct CbfParams {
  double lambda = 0.99;

  static CbfParams from(const RunConfig& cfg);
};

// Zeroing barrier in end-effector space: signed distance to the unsafe disk.
// Positive in the safe interior, zero on the boundary, negative inside.
double barrier(const State& s, const SafeSetSpec& spec, const EnvConfig& cfg);

// Discrete-time barrier condition: h_next - h_t >= -lambda * h_t.
// Exact equality counts as satisfied.
bool cbf_satisfied(double h_t, double h_next, const CbfParams& p);

// Per-transition safety label: 0 when the barrier condition holds, 1 otherwise.
int label(const State& s_t, const State& s_next, const SafeSetSpec& spec,
          const CbfParams& p, const EnvConfig& cfg);

// Checks the decay bound h_t >= (1-lambda)^t * h_0 along a barrier series.
bool verify_forward_invariance(std::span<const double> h_series, const CbfParams& p);

}  // namespace sdp

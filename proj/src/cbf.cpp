#include "sdp/cbf.hpp"

#include <cmath>

namespace sdp {

SafeSetSpec SafeSetSpec::from(const RunConfig& cfg, const EnvConfig& env) {
  SafeSetSpec s;
  s.center_x = cfg.get_double("cbf.center_x");
  s.center_y = cfg.get_double("cbf.center_y");
  s.radius = cfg.get_double("cbf.radius");
  s.check(env);
  return s;
}

void SafeSetSpec::check(const EnvConfig& env) const {
  if (radius <= 0) throw ConfigError("cbf.radius must be positive");
  if (std::hypot(center_x, center_y) + radius >= env.l1 + env.l2)
    throw ConfigError("unsafe disk must lie strictly inside the workspace");
}

CbfParams CbfParams::from(const RunConfig& cfg) {
  CbfParams p;
  p.lambda = cfg.get_double("cbf.lambda");
  if (p.lambda < 0.0 || p.lambda > 1.0)
    throw ConfigError("cbf.lambda must be in [0, 1]");
  return p;
}

double barrier(const State& s, const SafeSetSpec& spec, const EnvConfig& cfg) {
  const Vec2 ee = end_effector(s, cfg);
  return std::hypot(ee.x - spec.center_x, ee.y - spec.center_y) - spec.radius;
}

bool cbf_satisfied(double h_t, double h_next, const CbfParams& p) {
  return h_next - h_t >= -p.lambda * h_t;
}

int label(const State& s_t, const State& s_next, const SafeSetSpec& spec,
          const CbfParams& p, const EnvConfig& cfg) {
  return cbf_satisfied(barrier(s_t, spec, cfg), barrier(s_next, spec, cfg), p) ? 0 : 1;
}

bool verify_forward_invariance(std::span<const double> h_series, const CbfParams& p) {
  if (h_series.empty()) throw std::invalid_argument("empty barrier series");
  const double h0 = h_series[0];
  double bound = h0;
  for (std::size_t t = 0; t < h_series.size(); ++t) {
    if (h_series[t] < bound - 1e-9) return false;
    bound *= 1.0 - p.lambda;
  }
  return true;
}

}  // namespace sdp

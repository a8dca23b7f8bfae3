#pragma once

#include <functional>
#include <vector>

#include "sdp/cbf.hpp"
#include "sdp/env.hpp"

namespace sdp {

// One environment transition with reward, terminal flag, and CBF label.
struct Transition {
  State s;
  Action a;
  State s_next;
  double r = 0.0;
  bool d = false;
  int c = 0;
};

using Policy = std::function<Action(const State&)>;

// Runs one episode from `s0`. With stop_on_success, the episode ends at the
// first state within the success tolerance of the target (or at max_steps);
// collection mode passes stop_on_success=false and always runs full length.
// The terminal flag is true exactly on the last record.
std::vector<Transition> rollout_episode(const Policy& policy, State s0,
                                        const EnvConfig& cfg,
                                        const SafeSetSpec& spec,
                                        const CbfParams& params, int max_steps,
                                        bool stop_on_success);

bool at_target(const State& s, const EnvConfig& cfg);

}  // namespace sdp

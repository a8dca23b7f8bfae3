#pragma once

#include <string>

#include "sdp/planner.hpp"

namespace sdp {

// Episode trajectory as CSV with the fixed column set
// t,alpha1,alpha2,dalpha1,dalpha2,x_ee,y_ee,x_tg,y_tg,a1,a2,r,c,h.
// One row per visited state; the action columns hold the action taken from
// that state (zeros on the terminal row), r is the instantaneous reward of
// the state itself, c the label of the outgoing transition.
std::string episode_csv(const EpisodeLog& log, const EnvConfig& env,
                        const SafeSetSpec& spec);

// Single-frame SVG: both links, joints, end-effector, target, unsafe disk.
std::string svg_snapshot(const State& s, const EnvConfig& env,
                         const SafeSetSpec& spec);

}  // namespace sdp

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdp/cbf.hpp"
#include "sdp/env.hpp"
#include "sdp/rng.hpp"

namespace sdp {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Offline dataset unit. States and rewards are stored float32 and the label
// is computed from the stored (quantized) values, so c and r can be recomputed
// exactly from the file contents.
struct TransitionRecord {
  std::array<float, 8> s{};
  std::array<float, 2> a{};
  std::array<float, 8> s_next{};
  float r = 0.0f;
  float d = 0.0f;  // 0.0 / 1.0
  float c = 0.0f;  // 0.0 / 1.0

  static constexpr int kFloats = 21;
  State state() const;
  State next_state() const;
};

struct Dataset {
  std::uint32_t episodes = 0;
  std::uint32_t steps = 0;  // per episode
  std::string config_json;  // effective config + seed, echoed at collection
  std::vector<TransitionRecord> records;

  const TransitionRecord& at(std::uint32_t episode, std::uint32_t t) const {
    return records[static_cast<std::size_t>(episode) * steps + t];
  }
};

// Collects episodes * steps transitions with uniform random torques.
// Episodes always run full length; targets are rejected from the unsafe disk.
Dataset collect(const RunConfig& cfg, std::uint64_t seed);

void write_sdpd(const std::string& path, const Dataset& ds);
Dataset read_sdpd(const std::string& path);

// Affine per-dimension map of states and actions onto [-1, 1] by dataset
// min/max. Constant dimensions map to 0 and restore their stored constant.
class Normalizer {
 public:
  static constexpr int kStateDim = 8;
  static constexpr int kActionDim = 2;
  static constexpr int kRowDim = kStateDim + kActionDim;

  static Normalizer fit(const Dataset& ds);

  float norm_state(int dim, float x) const { return norm(dim, x); }
  float denorm_state(int dim, float x) const { return denorm(dim, x); }
  float norm_action(int dim, float x) const { return norm(kStateDim + dim, x); }
  float denorm_action(int dim, float x) const { return denorm(kStateDim + dim, x); }

  // Row layout: state || action.
  void normalize_row(const float* raw, float* out) const;
  void denormalize_row(const float* normed, float* out) const;

  std::array<float, 8> normalize_state(const std::array<float, 8>& s) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);

 private:
  float norm(int dim, float x) const;
  float denorm(int dim, float x) const;

  std::array<float, kRowDim> min_{};
  std::array<float, kRowDim> max_{};
  std::array<bool, kRowDim> constant_{};
};

// Horizon window of normalized state-action rows with its discounted-return
// target and per-step safety labels.
struct WindowSample {
  std::vector<float> traj;     // H * 10, row-major (state || action)
  double value_target = 0.0;   // raw reward units
  std::vector<int> labels;     // H
  State first_state_raw;
};

// Identifies every in-episode window of length H, in deterministic order.
struct WindowIndex {
  struct Ref {
    std::uint32_t episode;
    std::uint32_t t;
  };
  std::vector<Ref> refs;

  static WindowIndex build(const Dataset& ds, int horizon);
  // Windows restricted to an episode range [begin, end).
  static WindowIndex build_range(const Dataset& ds, int horizon,
                                 std::uint32_t ep_begin, std::uint32_t ep_end);
};

WindowSample extract_window(const Dataset& ds, const Normalizer& norm,
                            WindowIndex::Ref ref, int horizon, double gamma);

}  // namespace sdp

#include "sdp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace sdp {

namespace {

State state_from_floats(const std::array<float, 8>& f) {
  State s;
  for (int i = 0; i < 8; ++i) s.obs[i] = static_cast<double>(f[i]);
  return s;
}

std::array<float, 8> to_floats(const State& s) {
  std::array<float, 8> f;
  for (int i = 0; i < 8; ++i) f[i] = static_cast<float>(s.obs[i]);
  return f;
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

float get_f32(const char* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

State TransitionRecord::state() const { return state_from_floats(s); }
State TransitionRecord::next_state() const { return state_from_floats(s_next); }

Dataset collect(const RunConfig& cfg, std::uint64_t seed) {
  const EnvConfig env = EnvConfig::from(cfg);
  const SafeSetSpec spec = SafeSetSpec::from(cfg, env);
  const CbfParams params = CbfParams::from(cfg);

  Dataset ds;
  ds.episodes = static_cast<std::uint32_t>(cfg.get_int("collect.episodes"));
  ds.steps = static_cast<std::uint32_t>(cfg.get_int("collect.steps"));
  if (ds.episodes == 0 || ds.steps == 0)
    throw DatasetError("collect.episodes and collect.steps must be positive");

  nlohmann::json echo = cfg.to_json();
  echo["seed"] = seed;
  ds.config_json = echo.dump();

  TargetSampling targets;
  targets.mode = TargetSampling::Mode::OutsideUnsafe;
  targets.unsafe_x = spec.center_x;
  targets.unsafe_y = spec.center_y;
  targets.unsafe_r = spec.radius;

  Rng root(seed);
  ds.records.reserve(static_cast<std::size_t>(ds.episodes) * ds.steps);
  for (std::uint32_t ep = 0; ep < ds.episodes; ++ep) {
    Rng rng(Rng::mix(seed, ep));
    State s0 = reset(rng, env, targets);
    const Vec2 tg = s0.target();

    // Simulate in double precision but label and reward from the quantized
    // states that end up in the file, so both are recomputable from disk.
    JointState js = decode_joint(s0);
    std::array<float, 8> prev_q = to_floats(make_state(js, tg));
    for (std::uint32_t t = 0; t < ds.steps; ++t) {
      TransitionRecord rec;
      rec.s = prev_q;
      const Action a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      rec.a = {static_cast<float>(a.torque1), static_cast<float>(a.torque2)};
      js = step(js, a, env);
      rec.s_next = to_floats(make_state(js, tg));
      const State sq = state_from_floats(rec.s);
      const State sq_next = state_from_floats(rec.s_next);
      rec.r = static_cast<float>(reward(sq_next, env));
      rec.c = static_cast<float>(label(sq, sq_next, spec, params, env));
      rec.d = (t == ds.steps - 1) ? 1.0f : 0.0f;
      ds.records.push_back(rec);
      prev_q = rec.s_next;
    }
  }
  return ds;
}

void write_sdpd(const std::string& path, const Dataset& ds) {
  std::string buf;
  buf.reserve(64 + ds.config_json.size() + ds.records.size() * 84);
  buf += "SDPD";
  put_u32(buf, 1);  // format version
  put_u32(buf, ds.episodes);
  put_u32(buf, ds.steps);
  put_u32(buf, TransitionRecord::kFloats * 4);  // record size in bytes
  put_u32(buf, static_cast<std::uint32_t>(ds.config_json.size()));
  buf += ds.config_json;
  for (const auto& rec : ds.records) {
    for (float v : rec.s) put_f32(buf, v);
    for (float v : rec.a) put_f32(buf, v);
    for (float v : rec.s_next) put_f32(buf, v);
    put_f32(buf, rec.r);
    put_f32(buf, rec.d);
    put_f32(buf, rec.c);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DatasetError("write failed: " + path);
}

Dataset read_sdpd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 24 || buf.compare(0, 4, "SDPD") != 0)
    throw DatasetError("not a .sdpd file: " + path);
  const std::uint32_t version = get_u32(buf.data() + 4);
  if (version != 1) throw DatasetError("unsupported .sdpd version");
  Dataset ds;
  ds.episodes = get_u32(buf.data() + 8);
  ds.steps = get_u32(buf.data() + 12);
  const std::uint32_t rec_bytes = get_u32(buf.data() + 16);
  if (rec_bytes != TransitionRecord::kFloats * 4)
    throw DatasetError("unexpected record size in .sdpd header");
  const std::uint32_t cfg_len = get_u32(buf.data() + 20);
  std::size_t off = 24;
  if (buf.size() < off + cfg_len) throw DatasetError("truncated .sdpd header");
  ds.config_json = buf.substr(off, cfg_len);
  off += cfg_len;

  const std::size_t n = static_cast<std::size_t>(ds.episodes) * ds.steps;
  if (buf.size() != off + n * rec_bytes)
    throw DatasetError("dataset payload size does not match header counts");
  ds.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = buf.data() + off + i * rec_bytes;
    TransitionRecord& rec = ds.records[i];
    for (int j = 0; j < 8; ++j) rec.s[j] = get_f32(p + 4 * j);
    for (int j = 0; j < 2; ++j) rec.a[j] = get_f32(p + 4 * (8 + j));
    for (int j = 0; j < 8; ++j) rec.s_next[j] = get_f32(p + 4 * (10 + j));
    rec.r = get_f32(p + 4 * 18);
    rec.d = get_f32(p + 4 * 19);
    rec.c = get_f32(p + 4 * 20);
  }
  return ds;
}

Normalizer Normalizer::fit(const Dataset& ds) {
  if (ds.records.empty()) throw DatasetError("cannot fit a normalizer on empty data");
  Normalizer n;
  n.min_.fill(std::numeric_limits<float>::max());
  n.max_.fill(std::numeric_limits<float>::lowest());
  auto feed = [&n](int dim, float v) {
    n.min_[dim] = std::min(n.min_[dim], v);
    n.max_[dim] = std::max(n.max_[dim], v);
  };
  for (const auto& rec : ds.records) {
    for (int i = 0; i < kStateDim; ++i) {
      feed(i, rec.s[i]);
      feed(i, rec.s_next[i]);
    }
    for (int i = 0; i < kActionDim; ++i) feed(kStateDim + i, rec.a[i]);
  }
  for (int i = 0; i < kRowDim; ++i) n.constant_[i] = (n.min_[i] == n.max_[i]);
  return n;
}

float Normalizer::norm(int dim, float x) const {
  if (constant_[dim]) return 0.0f;
  return 2.0f * (x - min_[dim]) / (max_[dim] - min_[dim]) - 1.0f;
}

float Normalizer::denorm(int dim, float x) const {
  if (constant_[dim]) return min_[dim];
  return min_[dim] + (x + 1.0f) * 0.5f * (max_[dim] - min_[dim]);
}

void Normalizer::normalize_row(const float* raw, float* out) const {
  for (int i = 0; i < kRowDim; ++i) out[i] = norm(i, raw[i]);
}

void Normalizer::denormalize_row(const float* normed, float* out) const {
  for (int i = 0; i < kRowDim; ++i) out[i] = denorm(i, normed[i]);
}

std::array<float, 8> Normalizer::normalize_state(const std::array<float, 8>& s) const {
  std::array<float, 8> out;
  for (int i = 0; i < kStateDim; ++i) out[i] = norm(i, s[i]);
  return out;
}

nlohmann::json Normalizer::to_json() const {
  nlohmann::json j;
  j["min"] = min_;
  j["max"] = max_;
  j["constant"] = constant_;
  return j;
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer n;
  const auto mn = j.at("min").get<std::vector<float>>();
  const auto mx = j.at("max").get<std::vector<float>>();
  const auto ct = j.at("constant").get<std::vector<bool>>();
  if (mn.size() != kRowDim || mx.size() != kRowDim || ct.size() != kRowDim)
    throw DatasetError("normalizer JSON has wrong dimensions");
  for (int i = 0; i < kRowDim; ++i) {
    n.min_[i] = mn[i];
    n.max_[i] = mx[i];
    n.constant_[i] = ct[i];
  }
  return n;
}

WindowIndex WindowIndex::build(const Dataset& ds, int horizon) {
  return build_range(ds, horizon, 0, ds.episodes);
}

WindowIndex WindowIndex::build_range(const Dataset& ds, int horizon,
                                     std::uint32_t ep_begin, std::uint32_t ep_end) {
  WindowIndex idx;
  if (horizon <= 0) throw DatasetError("window horizon must be positive");
  const auto h = static_cast<std::uint32_t>(horizon);
  if (h > ds.steps) return idx;  // no windows fit; not an error
  for (std::uint32_t ep = ep_begin; ep < ep_end; ++ep)
    for (std::uint32_t t = 0; t + h <= ds.steps; ++t) idx.refs.push_back({ep, t});
  return idx;
}

WindowSample extract_window(const Dataset& ds, const Normalizer& norm,
                            WindowIndex::Ref ref, int horizon, double gamma) {
  WindowSample w;
  w.traj.resize(static_cast<std::size_t>(horizon) * Normalizer::kRowDim);
  w.labels.resize(horizon);
  double value = 0.0;
  double g = 1.0;
  for (int i = 0; i < horizon; ++i) {
    const TransitionRecord& rec = ds.at(ref.episode, ref.t + i);
    float raw[Normalizer::kRowDim];
    for (int j = 0; j < Normalizer::kStateDim; ++j) raw[j] = rec.s[j];
    for (int j = 0; j < Normalizer::kActionDim; ++j)
      raw[Normalizer::kStateDim + j] = rec.a[j];
    norm.normalize_row(raw, &w.traj[static_cast<std::size_t>(i) * Normalizer::kRowDim]);
    w.labels[i] = static_cast<int>(rec.c);
    value += g * static_cast<double>(rec.r);
    g *= gamma;
    if (i == 0) w.first_state_raw = rec.state();
  }
  w.value_target = value;
  return w;
}

}  // namespace sdp

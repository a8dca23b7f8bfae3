#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sdp/dataset.hpp"

using namespace sdp;

namespace {

RunConfig small_cfg(int episodes, int steps) {
  RunConfig cfg;
  cfg.set("collect.episodes", std::to_string(episodes));
  cfg.set("collect.steps", std::to_string(steps));
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("collect produces episodes*steps records with terminal flags") {
  const Dataset ds = collect(small_cfg(4, 25), 7);
  CHECK(ds.records.size() == 100);
  for (std::uint32_t ep = 0; ep < 4; ++ep)
    for (std::uint32_t t = 0; t < 25; ++t)
      CHECK(ds.at(ep, t).d == ((t == 24) ? 1.0f : 0.0f));
}

TEST_CASE("single-record boundary case") {
  const Dataset ds = collect(small_cfg(1, 1), 3);
  REQUIRE(ds.records.size() == 1);
  CHECK(ds.records[0].d == 1.0f);
}

TEST_CASE("labels and rewards are recomputable from stored records") {
  RunConfig cfg = small_cfg(3, 40);
  const Dataset ds = collect(cfg, 11);
  const EnvConfig env = EnvConfig::from(cfg);
  const SafeSetSpec spec = SafeSetSpec::from(cfg, env);
  const CbfParams params = CbfParams::from(cfg);
  for (const auto& rec : ds.records) {
    CHECK(static_cast<int>(rec.c) ==
          label(rec.state(), rec.next_state(), spec, params, env));
    CHECK(std::abs(rec.r - reward(rec.next_state(), env)) < 1e-6);
  }
}

TEST_CASE("episode chaining: s_next of step t equals s of step t+1") {
  const Dataset ds = collect(small_cfg(2, 30), 5);
  for (std::uint32_t ep = 0; ep < 2; ++ep)
    for (std::uint32_t t = 0; t + 1 < 30; ++t)
      CHECK(ds.at(ep, t).s_next == ds.at(ep, t + 1).s);
}

TEST_CASE("file roundtrip is bit-exact and seeded collection is reproducible") {
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string p1 = (tmp / "sdp_test_a.sdpd").string();
  const std::string p2 = (tmp / "sdp_test_b.sdpd").string();
  const Dataset a = collect(small_cfg(3, 20), 42);
  const Dataset b = collect(small_cfg(3, 20), 42);
  write_sdpd(p1, a);
  write_sdpd(p2, b);
  CHECK(slurp(p1) == slurp(p2));

  const Dataset back = read_sdpd(p1);
  CHECK(back.episodes == a.episodes);
  CHECK(back.steps == a.steps);
  CHECK(back.config_json == a.config_json);
  REQUIRE(back.records.size() == a.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(back.records[i].s == a.records[i].s);
    CHECK(back.records[i].a == a.records[i].a);
    CHECK(back.records[i].s_next == a.records[i].s_next);
    CHECK(back.records[i].r == a.records[i].r);
  }
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("read_sdpd rejects garbage") {
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string p = (tmp / "sdp_test_bad.sdpd").string();
  std::ofstream(p) << "not a dataset";
  CHECK_THROWS_AS(read_sdpd(p), DatasetError);
  std::filesystem::remove(p);
}

TEST_CASE("normalizer maps to [-1,1] and roundtrips") {
  const Dataset ds = collect(small_cfg(5, 50), 9);
  const Normalizer norm = Normalizer::fit(ds);
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto& rec = ds.records[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(ds.records.size()) - 1))];
    float raw[10], normed[10], back[10];
    for (int i = 0; i < 8; ++i) raw[i] = rec.s[i];
    raw[8] = rec.a[0];
    raw[9] = rec.a[1];
    norm.normalize_row(raw, normed);
    norm.denormalize_row(normed, back);
    for (int i = 0; i < 10; ++i) {
      CHECK(normed[i] >= -1.0f - 1e-6f);
      CHECK(normed[i] <= 1.0f + 1e-6f);
      CHECK(std::abs(back[i] - raw[i]) < 1e-6f);
    }
  }
}

TEST_CASE("normalizer affine map and constant-dimension convention") {
  // Hand-built dataset: dimension 0 spans [-2, 2], target dims constant.
  Dataset ds;
  ds.episodes = 1;
  ds.steps = 2;
  TransitionRecord r0, r1;
  r0.s = {-2, 0, 0, 0, 0, 0, 0.5f, 0.5f};
  r0.s_next = {2, 0, 0, 0, 0, 0, 0.5f, 0.5f};
  r0.a = {-1, 0};
  r1.s = r0.s_next;
  r1.s_next = r0.s;
  r1.a = {1, 0};
  ds.records = {r0, r1};
  const Normalizer norm = Normalizer::fit(ds);
  CHECK(norm.norm_state(0, 1.0f) == doctest::Approx(0.5f));
  CHECK(norm.norm_state(6, 0.5f) == doctest::Approx(0.0f));   // constant -> 0
  CHECK(norm.denorm_state(6, 0.0f) == doctest::Approx(0.5f));  // and back
  CHECK(norm.denorm_state(6, 0.73f) == doctest::Approx(0.5f));

  // JSON round trip preserves the mapping
  const Normalizer norm2 = Normalizer::from_json(norm.to_json());
  CHECK(norm2.norm_state(0, 1.0f) == norm.norm_state(0, 1.0f));
  CHECK(norm2.denorm_state(6, 0.0f) == norm.denorm_state(6, 0.0f));
}

TEST_CASE("window enumeration counts and boundaries") {
  const int H = 16;
  const Dataset ds = collect(small_cfg(3, 100), 13);
  const WindowIndex idx = WindowIndex::build(ds, H);
  CHECK(idx.refs.size() == 3 * (100 - H + 1));
  for (const auto& ref : idx.refs) CHECK(ref.t + H <= 100);

  // horizon longer than the episode: no windows, not an error
  const WindowIndex none = WindowIndex::build(ds, 101);
  CHECK(none.refs.empty());
}

TEST_CASE("window value targets match the geometric oracle") {
  const int H = 16;
  const double gamma = 0.997;
  const Dataset ds = collect(small_cfg(2, 60), 17);
  const Normalizer norm = Normalizer::fit(ds);
  const WindowIndex idx = WindowIndex::build(ds, H);
  for (std::size_t i = 0; i < idx.refs.size(); i += 7) {
    const auto ref = idx.refs[i];
    const WindowSample w = extract_window(ds, norm, ref, H, gamma);
    double expect = 0.0;
    for (int j = H - 1; j >= 0; --j)
      expect = static_cast<double>(ds.at(ref.episode, ref.t + j).r) + gamma * expect;
    CHECK(w.value_target == doctest::Approx(expect).epsilon(1e-9));
    // labels mirror the stored c column
    for (int j = 0; j < H; ++j)
      CHECK(w.labels[j] == static_cast<int>(ds.at(ref.episode, ref.t + j).c));
  }
}

TEST_CASE("constant rewards give the closed-form discounted sum") {
  // gamma = 0.997, H = 16, r = -1: -(1 - g^16)/(1 - g)
  Dataset ds;
  ds.episodes = 1;
  ds.steps = 16;
  for (int t = 0; t < 16; ++t) {
    TransitionRecord rec;
    rec.r = -1.0f;
    rec.d = t == 15 ? 1.0f : 0.0f;
    ds.records.push_back(rec);
  }
  const Normalizer norm = Normalizer::fit(ds);
  const double g = 0.997;
  const WindowSample w = extract_window(ds, norm, {0, 0}, 16, g);
  const double closed_form = -(1.0 - std::pow(g, 16)) / (1.0 - g);
  CHECK(w.value_target == doctest::Approx(closed_form).epsilon(1e-12));

  // gamma = 0: only the first reward survives
  const WindowSample w0 = extract_window(ds, norm, {0, 0}, 16, 0.0);
  CHECK(w0.value_target == doctest::Approx(-1.0));
}

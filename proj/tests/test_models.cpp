#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "sdp/models.hpp"
#include "ref_net.hpp"

using namespace sdp;

namespace {

ModelConfig tiny_config(const std::string& backbone = "conv") {
  ModelConfig m;
  m.backbone = backbone;
  m.channels = {8, 12, 8};
  m.kernel = 3;
  m.emb_dim = 8;
  m.mlp_hidden = 32;
  m.horizon = 6;
  return m;
}

Tensor random_input(const ModelConfig& m, int B, Rng& rng) {
  Tensor x({m.horizon, m.row_dim, B});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1, 1));
  return x;
}

RunConfig desk_cfg() {
  RunConfig cfg;
  cfg.set("collect.episodes", "24");
  cfg.set("collect.steps", "40");
  cfg.set("plan.horizon", "8");
  cfg.set("model.channels", "8,16,8");
  cfg.set("model.kernel", "3");
  cfg.set("model.emb_dim", "8");
  cfg.set("train.steps", "60");
  cfg.set("train.batch", "16");
  cfg.set("train.lr", "1e-3");
  cfg.set("train.eval_windows", "64");
  cfg.set("train.log_every", "20");
  return cfg;
}

}  // namespace

TEST_CASE("output shapes per model kind") {
  Rng rng(1);
  const ModelConfig m = tiny_config();
  const int B = 5;
  const Tensor x = random_input(m, B, rng);
  std::vector<int> ks(B, 3);

  auto dyn = make_model(ModelKind::Dynamics, m, 1);
  const Tensor yd = dyn->forward(x, ks);
  CHECK(yd.shape == std::vector<int>{m.horizon, m.row_dim, B});
  CHECK(yd.all_finite());

  auto val = make_model(ModelKind::Value, m, 1);
  const Tensor yv = val->forward(x, ks);
  CHECK(yv.shape == std::vector<int>{1, B});

  auto saf = make_model(ModelKind::Safety, m, 1);
  const Tensor ys = saf->forward(x, ks);
  CHECK(ys.shape == std::vector<int>{2 * m.horizon, B});

  // softmax over the two classes sums to one per step
  const Tensor p = safety_safe_probs(ys);
  CHECK(p.shape == std::vector<int>{m.horizon, B});
}

TEST_CASE("models are deterministic functions of (input, k, parameters)") {
  Rng rng(2);
  const ModelConfig m = tiny_config();
  auto model = make_model(ModelKind::Dynamics, m, 9);
  const Tensor x = random_input(m, 4, rng);
  std::vector<int> ks{1, 2, 3, 4};
  const Tensor a = model->forward(x, ks);
  const Tensor b = model->forward(x, ks);
  CHECK(a.v == b.v);
  // different k changes the output
  std::vector<int> ks2{5, 6, 7, 8};
  const Tensor c = model->forward(x, ks2);
  CHECK(a.v != c.v);
}

TEST_CASE("full-net gradients match finite differences (all kinds, both backbones)") {
  // Oracle: the naive double-precision reference forward in ref_net.hpp.
  // Finite differences on it are clean at h = 1e-5; the production backward
  // must agree with them.
  for (const std::string backbone : {"conv", "mlp"}) {
    for (ModelKind kind :
         {ModelKind::Dynamics, ModelKind::Value, ModelKind::Safety}) {
      Rng rng(7);
      const ModelConfig m = tiny_config(backbone);
      auto model = make_model(kind, m, 5);
      const int B = 3;
      Tensor x = random_input(m, B, rng);
      const std::vector<int> ks(B, 4);

      sdp::test::RefParams rp = sdp::test::RefParams::from(*model);
      sdp::test::DVec xd(x.v.begin(), x.v.end());
      auto ref_eval = [&]() -> double {
        const auto out = sdp::test::ref_forward(kind, m, rp, xd, ks);
        double s = 0.0;
        for (double v : out) s += v;
        return s;
      };

      // forward parity between the optimized float path and the reference
      const Tensor out = model->forward(x, ks);
      const auto ref_out = sdp::test::ref_forward(kind, m, rp, xd, ks);
      REQUIRE(out.numel() == ref_out.size());
      for (std::size_t i = 0; i < ref_out.size(); ++i)
        CHECK(std::abs(out.v[i] - ref_out[i]) < 1e-4);

      const auto params = model->params();
      for (auto* p : params) p->zero_grad();
      model->forward(x, ks);
      Tensor dout(out.shape);
      std::fill(dout.v.begin(), dout.v.end(), 1.0f);
      const Tensor dx = model->backward(dout, true);

      const double h = 1e-5;
      Rng pick(13);
      auto check_coords = [&](std::vector<double>& vals, std::span<const float> grads,
                              int n, const std::string& what) {
        double max_rel = 0.0;
        for (int i = 0; i < n; ++i) {
          const std::size_t idx = static_cast<std::size_t>(
              pick.uniform_int(0, static_cast<int>(vals.size()) - 1));
          const double keep = vals[idx];
          vals[idx] = keep + h;
          const double fp = ref_eval();
          vals[idx] = keep - h;
          const double fm = ref_eval();
          vals[idx] = keep;
          const double fd = (fp - fm) / (2.0 * h);
          const double g = grads[idx];
          max_rel = std::max(max_rel, std::abs(g - fd) /
                                          std::max({std::abs(g), std::abs(fd), 1e-2}));
        }
        CHECK_MESSAGE(max_rel < 1e-3, backbone << " "
                                               << std::string(model_kind_name(kind))
                                               << " " << what << " rel " << max_rel);
      };

      check_coords(xd, dx.v, 40, "input");
      check_coords(rp.by_name.at(params[0]->name), params[0]->grad.v, 30,
                   params[0]->name);
      Param* mid = params[params.size() / 2];
      check_coords(rp.by_name.at(mid->name), mid->grad.v, 30, mid->name);
      Param* last = params[params.size() - 2];
      check_coords(rp.by_name.at(last->name), last->grad.v, 30, last->name);
    }
  }
}

TEST_CASE("desk-scale training: loss decreases, parameters move, deterministic") {
  const RunConfig cfg = desk_cfg();
  const Dataset ds = collect(cfg, 21);
  const auto tmp = std::filesystem::temp_directory_path();

  SUBCASE("one step changes at least one parameter") {
    RunConfig one = cfg;
    one.set("train.steps", "1");
    one.set("train.log_every", "1");
    const std::string path = (tmp / "sdp_one.sdpm").string();
    train_model(ModelKind::Dynamics, ds, one, 3, path, true);
    // compare against a freshly initialized model
    auto fresh = make_model(ModelKind::Dynamics, ModelConfig::from(one), 3);
    LoadedModel trained = load_model(path, ModelKind::Dynamics);
    bool changed = false;
    auto fp = fresh->params();
    auto tp = trained.model->params();
    for (std::size_t i = 0; i < fp.size(); ++i)
      changed |= fp[i]->value.v != tp[i]->value.v;
    CHECK(changed);
    std::filesystem::remove(path);
  }

  SUBCASE("loss curve decreases and reruns bit-identically") {
    const std::string p1 = (tmp / "sdp_t1.sdpm").string();
    const std::string p2 = (tmp / "sdp_t2.sdpm").string();
    const TrainResult r1 = train_model(ModelKind::Dynamics, ds, cfg, 5, p1, true);
    const TrainResult r2 = train_model(ModelKind::Dynamics, ds, cfg, 5, p2, true);
    REQUIRE(!r1.log.empty());
    CHECK(r1.log.back().holdout_loss < r1.log.front().holdout_loss);
    REQUIRE(r1.log.size() == r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i) {
      CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
      CHECK(r1.log[i].holdout_loss == r2.log[i].holdout_loss);
    }
    LoadedModel m1 = load_model(p1, ModelKind::Dynamics);
    LoadedModel m2 = load_model(p2, ModelKind::Dynamics);
    auto pa = m1.model->params();
    auto pb = m2.model->params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.v == pb[i]->value.v);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
  }

  SUBCASE("value and safety heads train and report holdout metrics") {
    RunConfig vc = cfg;
    vc.set("train.steps", "500");
    const std::string vp = (tmp / "sdp_v.sdpm").string();
    const TrainResult vr = train_model(ModelKind::Value, ds, vc, 8, vp, true);
    CHECK(vr.log.back().holdout_loss < vr.log.front().holdout_loss);
    LoadedModel vm = load_model(vp, ModelKind::Value);
    const double r = holdout_value_pearson(*vm.model, ds, vm.normalizer, vc, 1, 99);
    CHECK(r > -1.0);  // well-defined correlation on the holdout
    CHECK(r <= 1.0);

    const std::string sp = (tmp / "sdp_s.sdpm").string();
    train_model(ModelKind::Safety, ds, vc, 8, sp, true);
    LoadedModel sm = load_model(sp, ModelKind::Safety);
    const SafetyAccuracy acc =
        holdout_safety_accuracy(*sm.model, ds, sm.normalizer, vc, 1, 99);
    CHECK(acc.total > 0);
    CHECK(acc.accuracy >= 0.0);
    CHECK(acc.accuracy <= 1.0);
    std::filesystem::remove(vp);
    std::filesystem::remove(sp);
  }
}

TEST_CASE("checkpoint kind mismatch is rejected") {
  const RunConfig cfg = desk_cfg();
  const Dataset ds = collect(cfg, 31);
  RunConfig one = cfg;
  one.set("train.steps", "2");
  const auto path =
      (std::filesystem::temp_directory_path() / "sdp_kind.sdpm").string();
  train_model(ModelKind::Value, ds, one, 3, path, true);
  CHECK_THROWS_AS(load_model(path, ModelKind::Dynamics), NnError);
  CHECK_NOTHROW(load_model(path, ModelKind::Value));
  std::filesystem::remove(path);
}

TEST_CASE("training aborts on divergence with a diagnostic") {
  const RunConfig base = desk_cfg();
  const Dataset ds = collect(base, 41);
  RunConfig bad = base;
  bad.set("train.lr", "1e6");  // drives the loss non-finite within a few steps
  bad.set("train.steps", "200");
  const auto path =
      (std::filesystem::temp_directory_path() / "sdp_div.sdpm").string();
  CHECK_THROWS(train_model(ModelKind::Dynamics, ds, bad, 3, path, true));
}

#include "sdp/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace sdp {

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Dynamics: return "dynamics";
    case ModelKind::Value: return "value";
    case ModelKind::Safety: return "safety";
  }
  return "?";
}

ModelKind model_kind_from(const std::string& name) {
  if (name == "dynamics") return ModelKind::Dynamics;
  if (name == "value") return ModelKind::Value;
  if (name == "safety") return ModelKind::Safety;
  throw NnError("unknown model kind: " + name);
}

ModelConfig ModelConfig::from(const RunConfig& cfg) {
  ModelConfig m;
  m.backbone = cfg.get_string("model.backbone");
  if (m.backbone != "conv" && m.backbone != "mlp")
    throw ConfigError("model.backbone must be 'conv' or 'mlp'");
  m.channels = cfg.get_int_list("model.channels");
  if (static_cast<int>(m.channels.size()) != cfg.get_int("model.blocks"))
    throw ConfigError("model.blocks must match the length of model.channels");
  m.kernel = cfg.get_int("model.kernel");
  m.emb_dim = cfg.get_int("model.emb_dim");
  m.mlp_hidden = cfg.get_int("model.mlp_hidden");
  m.horizon = cfg.get_int("plan.horizon");
  if (m.kernel < 1 || m.kernel % 2 == 0)
    throw ConfigError("model.kernel must be odd and positive");
  return m;
}

namespace {

// Residual temporal-conv block: conv -> norm -> mish -> (+step emb) -> conv ->
// norm -> mish, with a 1x1 skip when the channel count changes.
class TemporalBlock {
 public:
  TemporalBlock(int cin, int cout, int k, int emb_dim, const std::string& name,
                Rng& rng)
      : cout_(cout),
        conv1_(cin, cout, k, name + ".conv1", rng),
        ln1_(cout, name + ".ln1"),
        emb_proj_(emb_dim, cout, name + ".emb", rng),
        conv2_(cout, cout, k, name + ".conv2", rng),
        ln2_(cout, name + ".ln2") {
    if (cin != cout) skip_.emplace(cin, cout, 1, name + ".skip", rng);
  }

  Tensor forward(const Tensor& x, const Tensor& emb) {
    const int H = x.shape[0], B = x.shape[2];
    Tensor a1 = m1_.forward(ln1_.forward(conv1_.forward(x)));
    Tensor e = emb_proj_.forward(emb);  // [cout][B]
    for (int t = 0; t < H; ++t) {
      float* row = a1.data() + static_cast<std::size_t>(t) * cout_ * B;
      for (std::size_t i = 0; i < static_cast<std::size_t>(cout_) * B; ++i)
        row[i] += e.v[i];
    }
    Tensor a2 = m2_.forward(ln2_.forward(conv2_.forward(a1)));
    Tensor res = skip_ ? skip_->forward(x) : x;
    for (std::size_t i = 0; i < a2.numel(); ++i) a2.v[i] += res.v[i];
    return a2;
  }

  // Returns dx; accumulates d(emb) into demb.
  Tensor backward(const Tensor& dy, Tensor& demb, bool param_grads) {
    const int H = dy.shape[0], B = dy.shape[2];
    Tensor da1 = conv2_.backward(ln2_.backward(m2_.backward(dy), param_grads),
                                 param_grads);
    Tensor de({cout_, B});
    for (int t = 0; t < H; ++t) {
      const float* row = da1.data() + static_cast<std::size_t>(t) * cout_ * B;
      for (std::size_t i = 0; i < static_cast<std::size_t>(cout_) * B; ++i)
        de.v[i] += row[i];
    }
    Tensor demb_part = emb_proj_.backward(de, param_grads);
    for (std::size_t i = 0; i < demb.numel(); ++i) demb.v[i] += demb_part.v[i];
    Tensor dx = conv1_.backward(ln1_.backward(m1_.backward(da1), param_grads),
                                param_grads);
    if (skip_) {
      Tensor ds = skip_->backward(dy, param_grads);
      for (std::size_t i = 0; i < dx.numel(); ++i) dx.v[i] += ds.v[i];
    } else {
      for (std::size_t i = 0; i < dx.numel(); ++i) dx.v[i] += dy.v[i];
    }
    return dx;
  }

  void collect_params(std::vector<Param*>& out) {
    for (auto* p : conv1_.params()) out.push_back(p);
    for (auto* p : ln1_.params()) out.push_back(p);
    for (auto* p : emb_proj_.params()) out.push_back(p);
    for (auto* p : conv2_.params()) out.push_back(p);
    for (auto* p : ln2_.params()) out.push_back(p);
    if (skip_)
      for (auto* p : skip_->params()) out.push_back(p);
  }

 private:
  int cout_;
  Conv1d conv1_;
  LayerNorm ln1_;
  Mish m1_;
  Dense emb_proj_;
  Conv1d conv2_;
  LayerNorm ln2_;
  Mish m2_;
  std::optional<Conv1d> skip_;
};

class ConvBackbone {
 public:
  ConvBackbone(const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg),
        in_proj_(cfg.row_dim, cfg.channels.front(), cfg.kernel, "in", rng),
        emb_fc_(cfg.emb_dim, cfg.emb_dim, "emb_fc", rng) {
    int cin = cfg.channels.front();
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      blocks_.emplace_back(std::make_unique<TemporalBlock>(
          cin, cfg.channels[i], cfg.kernel, cfg.emb_dim,
          "block" + std::to_string(i), rng));
      cin = cfg.channels[i];
    }
  }

  int out_channels() const { return cfg_.channels.back(); }

  Tensor forward(const Tensor& x, std::span<const int> ks) {
    emb_ = emb_mish_.forward(emb_fc_.forward(sinusoidal_embedding(ks, cfg_.emb_dim)));
    Tensor h = in_proj_.forward(x);
    for (auto& blk : blocks_) h = blk->forward(h, emb_);
    return h;
  }

  Tensor backward(const Tensor& dy, bool param_grads) {
    Tensor demb({cfg_.emb_dim, dy.shape[2]});
    Tensor dh = dy;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
      dh = (*it)->backward(dh, demb, param_grads);
    // The step embedding is not a function of the trajectory input, so its
    // chain ends at the embedding parameters.
    emb_fc_.backward(emb_mish_.backward(demb), param_grads);
    return in_proj_.backward(dh, param_grads);
  }

  void collect_params(std::vector<Param*>& out) {
    for (auto* p : in_proj_.params()) out.push_back(p);
    for (auto* p : emb_fc_.params()) out.push_back(p);
    for (auto& blk : blocks_) blk->collect_params(out);
  }

 private:
  ModelConfig cfg_;
  Conv1d in_proj_;
  Dense emb_fc_;
  Mish emb_mish_;
  Tensor emb_;
  std::vector<std::unique_ptr<TemporalBlock>> blocks_;
};

class MlpBackbone {
 public:
  MlpBackbone(const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg),
        fc1_(cfg.horizon * cfg.row_dim, cfg.mlp_hidden, "fc1", rng),
        emb_proj_(cfg.emb_dim, cfg.mlp_hidden, "emb_proj", rng),
        fc2_(cfg.mlp_hidden, cfg.mlp_hidden, "fc2", rng),
        emb_fc_(cfg.emb_dim, cfg.emb_dim, "emb_fc", rng) {}

  int out_dim() const { return cfg_.mlp_hidden; }

  Tensor forward(const Tensor& x, std::span<const int> ks) {
    const int B = x.shape.back();
    Tensor flat = x;
    flat.shape = {cfg_.horizon * cfg_.row_dim, B};
    Tensor emb = emb_mish_.forward(emb_fc_.forward(sinusoidal_embedding(ks, cfg_.emb_dim)));
    Tensor h = m1_.forward(fc1_.forward(flat));
    Tensor e = emb_proj_.forward(emb);
    for (std::size_t i = 0; i < h.numel(); ++i) h.v[i] += e.v[i];
    return m2_.forward(fc2_.forward(h));
  }

  Tensor backward(const Tensor& dy, bool param_grads) {
    Tensor dh = fc2_.backward(m2_.backward(dy), param_grads);
    Tensor demb = emb_proj_.backward(dh, param_grads);
    emb_fc_.backward(emb_mish_.backward(demb), param_grads);
    Tensor dflat = fc1_.backward(m1_.backward(dh), param_grads);
    dflat.shape = {cfg_.horizon, cfg_.row_dim, dflat.shape.back()};
    return dflat;
  }

  void collect_params(std::vector<Param*>& out) {
    for (auto* p : fc1_.params()) out.push_back(p);
    for (auto* p : emb_fc_.params()) out.push_back(p);
    for (auto* p : emb_proj_.params()) out.push_back(p);
    for (auto* p : fc2_.params()) out.push_back(p);
  }

 private:
  ModelConfig cfg_;
  Dense fc1_;
  Mish m1_;
  Dense emb_proj_;
  Dense fc2_;
  Mish m2_;
  Dense emb_fc_;
  Mish emb_mish_;
};

// Shared implementation over either backbone with a model-kind head.
class ModelImpl final : public Model {
 public:
  ModelImpl(ModelKind kind, const ModelConfig& cfg, std::uint64_t init_seed)
      : kind_(kind), cfg_(cfg) {
    Rng rng(Rng::mix(init_seed, static_cast<std::uint64_t>(kind) + 101));
    if (cfg.backbone == "conv")
      conv_.emplace(cfg, rng);
    else
      mlp_.emplace(cfg, rng);
    const int feat = conv_ ? conv_->out_channels() * cfg.horizon : mlp_->out_dim();
    switch (kind) {
      case ModelKind::Dynamics:
        if (conv_)
          out_conv_.emplace(conv_->out_channels(), cfg.row_dim, 1, "out", rng);
        else
          head_.emplace(feat, cfg.horizon * cfg.row_dim, "out", rng);
        break;
      case ModelKind::Value:
        head_.emplace(feat, 1, "out", rng);
        break;
      case ModelKind::Safety:
        head_.emplace(feat, 2 * cfg.horizon, "out", rng);
        break;
    }
  }

  ModelKind kind() const override { return kind_; }

  Tensor forward(const Tensor& x, std::span<const int> ks) override {
    check_shape(x, {cfg_.horizon, cfg_.row_dim, x.shape.empty() ? 0 : x.shape.back()},
                "model input");
    if (static_cast<int>(ks.size()) != x.shape.back())
      throw NnError("model: one step index per batch column required");
    const int B = x.shape.back();
    Tensor feat = conv_ ? conv_->forward(x, ks) : mlp_->forward(x, ks);
    if (kind_ == ModelKind::Dynamics && out_conv_) return out_conv_->forward(feat);
    if (conv_) feat.shape = {cfg_.horizon * conv_->out_channels(), B};  // flatten
    Tensor out = head_->forward(feat);
    if (kind_ == ModelKind::Dynamics)
      out.shape = {cfg_.horizon, cfg_.row_dim, B};
    return out;
  }

  Tensor backward(const Tensor& dout, bool param_grads) override {
    Tensor dfeat;
    if (kind_ == ModelKind::Dynamics && out_conv_) {
      dfeat = out_conv_->backward(dout, param_grads);
    } else {
      Tensor d = dout;
      if (kind_ == ModelKind::Dynamics)
        d.shape = {cfg_.horizon * cfg_.row_dim, d.shape.back()};
      dfeat = head_->backward(d, param_grads);
      if (conv_)
        dfeat.shape = {cfg_.horizon, conv_->out_channels(), dfeat.shape.back()};
    }
    return conv_ ? conv_->backward(dfeat, param_grads) : mlp_->backward(dfeat, param_grads);
  }

  std::vector<Param*> params() override {
    std::vector<Param*> out;
    if (conv_)
      conv_->collect_params(out);
    else
      mlp_->collect_params(out);
    if (out_conv_)
      for (auto* p : out_conv_->params()) out.push_back(p);
    if (head_)
      for (auto* p : head_->params()) out.push_back(p);
    return out;
  }

  std::unique_ptr<Model> clone() override {
    auto copy = std::make_unique<ModelImpl>(kind_, cfg_, 0);
    const auto src = params();
    const auto dst = copy->params();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value.v = src[i]->value.v;
    return copy;
  }

 private:
  ModelKind kind_;
  ModelConfig cfg_;
  std::optional<ConvBackbone> conv_;
  std::optional<MlpBackbone> mlp_;
  std::optional<Conv1d> out_conv_;  // denoiser head on the conv backbone
  std::optional<Dense> head_;
};

}  // namespace

std::unique_ptr<Model> make_model(ModelKind kind, const ModelConfig& cfg,
                                  std::uint64_t init_seed) {
  return std::make_unique<ModelImpl>(kind, cfg, init_seed);
}

Batch assemble_batch(const Dataset& ds, const Normalizer& norm,
                     std::span<const WindowIndex::Ref> refs, int horizon,
                     double gamma) {
  const int B = static_cast<int>(refs.size());
  Batch batch;
  batch.tau0 = Tensor({horizon, Normalizer::kRowDim, B});
  batch.values.resize(B);
  batch.labels.assign(static_cast<std::size_t>(horizon) * B, 0);
  for (int b = 0; b < B; ++b) {
    const WindowSample w = extract_window(ds, norm, refs[b], horizon, gamma);
    for (int t = 0; t < horizon; ++t) {
      for (int c = 0; c < Normalizer::kRowDim; ++c)
        batch.tau0.v[(static_cast<std::size_t>(t) * Normalizer::kRowDim + c) * B + b] =
            w.traj[static_cast<std::size_t>(t) * Normalizer::kRowDim + c];
      batch.labels[static_cast<std::size_t>(t) * B + b] = w.labels[t];
    }
    batch.values[b] = w.value_target;
  }
  return batch;
}

HoldoutSplit holdout_split(const Dataset& ds, double frac) {
  const auto n_hold = static_cast<std::uint32_t>(
      std::max(1.0, std::round(frac * static_cast<double>(ds.episodes))));
  if (n_hold >= ds.episodes)
    throw DatasetError("holdout fraction leaves no training episodes");
  return {ds.episodes - n_hold, ds.episodes};
}

// Training-side counterpart of the sampler's inpainting: the noised input has
// its first state row replaced by the clean one, so the nets learn to read a
// known current state and keep the rest of the window consistent with it
// (targets are constant within an episode, so this also anchors the target
// columns). In epsilon mode the noise target on the conditioned entries is
// zeroed; the sampler overwrites that row at every step regardless.
void condition_first_state(DenoiseBatch& nb, const Tensor& tau0, PredictionMode mode) {
  const int B = tau0.shape.back();
  for (int c = 0; c < Normalizer::kStateDim; ++c)
    for (int b = 0; b < B; ++b) {
      const std::size_t i = static_cast<std::size_t>(c) * B + b;
      nb.x_k.v[i] = tau0.v[i];
      if (mode == PredictionMode::Epsilon) nb.target.v[i] = 0.0f;
    }
}

namespace {

struct EvalSet {
  std::vector<Batch> batches;
  std::vector<DenoiseBatch> noised;
};

// Fixed held-out evaluation set: windows, step indices, and noise are drawn
// once so the held-out loss is comparable across training steps.
EvalSet make_eval_set(const Dataset& ds, const Normalizer& norm,
                      const WindowIndex& hold_idx, const NoiseSchedule& sched,
                      PredictionMode mode, int horizon, double gamma, int n_windows,
                      int batch_size, std::uint64_t seed) {
  EvalSet set;
  Rng rng(Rng::mix(seed, 0x6576616cULL));  // "eval"
  const int n = std::min<int>(n_windows, static_cast<int>(hold_idx.refs.size()));
  std::vector<WindowIndex::Ref> refs;
  for (int i = 0; i < n; ++i)
    refs.push_back(hold_idx.refs[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(hold_idx.refs.size()) - 1))]);
  for (int at = 0; at < n; at += batch_size) {
    const int bn = std::min(batch_size, n - at);
    Batch b = assemble_batch(ds, norm, {refs.data() + at, static_cast<std::size_t>(bn)},
                             horizon, gamma);
    DenoiseBatch nb = make_denoise_batch(b.tau0, sched, mode, rng);
    condition_first_state(nb, b.tau0, mode);
    set.noised.push_back(std::move(nb));
    set.batches.push_back(std::move(b));
  }
  return set;
}

double eval_holdout_loss(ModelKind kind, Model& model, const EvalSet& set) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < set.batches.size(); ++i) {
    const Batch& b = set.batches[i];
    const DenoiseBatch& nb = set.noised[i];
    const Tensor pred = model.forward(nb.x_k, nb.ks);
    const int B = b.tau0.shape.back();
    switch (kind) {
      case ModelKind::Dynamics:
        acc += mse_loss(pred, nb.target).loss * B;
        break;
      case ModelKind::Value: {
        Tensor tgt({1, B});
        for (int j = 0; j < B; ++j) tgt.v[j] = static_cast<float>(b.values[j]);
        acc += mse_loss(pred, tgt).loss * B;
        break;
      }
      case ModelKind::Safety:
        acc += safety_cross_entropy(pred, b.labels).loss * B;
        break;
    }
    count += B;
  }
  return acc / static_cast<double>(count);
}

}  // namespace

TrainResult train_model(ModelKind kind, const Dataset& ds, const RunConfig& cfg,
                        std::uint64_t seed, const std::string& checkpoint_path,
                        bool quiet) {
  const ModelConfig mcfg = ModelConfig::from(cfg);
  const NoiseSchedule sched = cosine_schedule(
      cfg.get_int("diff.K"), cfg.get_double("diff.cosine_s"),
      cfg.get_double("diff.beta_clip"));
  const PredictionMode mode = prediction_mode_from(cfg.get_string("diff.mode"));
  const double gamma = cfg.get_double("diff.gamma");
  const int horizon = mcfg.horizon;
  const int batch_size = cfg.get_int("train.batch");
  const int steps = cfg.get_int("train.steps");
  const int log_every = cfg.get_int("train.log_every");

  const Normalizer norm = Normalizer::fit(ds);
  const HoldoutSplit split = holdout_split(ds, cfg.get_double("train.holdout_frac"));
  const WindowIndex train_idx = WindowIndex::build_range(ds, horizon, 0, split.ep_begin);
  const WindowIndex hold_idx =
      WindowIndex::build_range(ds, horizon, split.ep_begin, split.ep_end);
  if (train_idx.refs.empty() || hold_idx.refs.empty())
    throw DatasetError("dataset too small for the requested horizon/holdout split");

  auto model = make_model(kind, mcfg, seed);
  AdamW opt(cfg.get_double("train.lr"), 0.9, 0.999, 1e-8,
            cfg.get_double("train.weight_decay"));
  const std::vector<Param*> params = model->params();

  const EvalSet eval_set =
      make_eval_set(ds, norm, hold_idx, sched, mode, horizon, gamma,
                    cfg.get_int("train.eval_windows"), batch_size, seed);

  Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(kind) + 7));
  TrainResult result;
  result.steps = steps;
  std::vector<WindowIndex::Ref> refs(batch_size);

  for (int step = 1; step <= steps; ++step) {
    for (int b = 0; b < batch_size; ++b)
      refs[static_cast<std::size_t>(b)] = train_idx.refs[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(train_idx.refs.size()) - 1))];
    Batch batch = assemble_batch(ds, norm, refs, horizon, gamma);
    DenoiseBatch nb = make_denoise_batch(batch.tau0, sched, mode, rng);
    condition_first_state(nb, batch.tau0, mode);

    for (Param* p : params) p->zero_grad();
    const Tensor pred = model->forward(nb.x_k, nb.ks);

    LossGrad lg;
    switch (kind) {
      case ModelKind::Dynamics:
        lg = mse_loss(pred, nb.target);
        break;
      case ModelKind::Value: {
        Tensor tgt({1, static_cast<int>(batch.values.size())});
        for (std::size_t j = 0; j < batch.values.size(); ++j)
          tgt.v[j] = static_cast<float>(batch.values[j]);
        lg = mse_loss(pred, tgt);
        break;
      }
      case ModelKind::Safety:
        lg = safety_cross_entropy(pred, batch.labels);
        break;
    }
    if (!std::isfinite(lg.loss))
      throw NnError("training diverged: non-finite " +
                    std::string(model_kind_name(kind)) + " loss at step " +
                    std::to_string(step));
    model->backward(lg.dpred, /*param_grads=*/true);
    opt.step(params);

    if (step % log_every == 0 || step == steps) {
      const double hold = eval_holdout_loss(kind, *model, eval_set);
      result.log.push_back({step, lg.loss, hold});
      if (!quiet && (step % (log_every * 20) == 0 || step == steps))
        std::fprintf(stderr, "[train %s] step %d train %.6f holdout %.6f\n",
                     model_kind_name(kind), step, lg.loss, hold);
    }
  }

  nlohmann::json manifest;
  manifest["format"] = "sdpm-1";
  manifest["model_kind"] = model_kind_name(kind);
  manifest["step"] = steps;
  manifest["optimizer"] = {{"name", "adamw"},
                           {"lr", opt.lr()},
                           {"beta1", opt.beta1()},
                           {"beta2", opt.beta2()},
                           {"eps", opt.eps()},
                           {"weight_decay", opt.weight_decay()}};
  manifest["prediction_mode"] =
      mode == PredictionMode::Signal ? "signal" : "epsilon";
  nlohmann::json echo = cfg.to_json();
  echo["seed"] = seed;
  manifest["config"] = echo;
  manifest["normalizer"] = norm.to_json();
  nlohmann::json plist = nlohmann::json::array();
  for (const Param* p : params)
    plist.push_back({{"name", p->name}, {"shape", p->value.shape}});
  manifest["params"] = plist;
  save_sdpm(checkpoint_path, manifest, params);

  // Loss curve alongside the checkpoint, replayable by tooling.
  std::ofstream curve(checkpoint_path + ".losscurve.csv", std::ios::trunc);
  curve << "step,train_loss,holdout_loss\n";
  char line[128];
  for (const auto& row : result.log) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", row.step, row.train_loss,
                  row.holdout_loss);
    curve << line;
  }
  return result;
}

LoadedModel load_model(const std::string& path, ModelKind expect) {
  nlohmann::json manifest = load_sdpm(path, nullptr);
  const std::string kind_name = manifest.at("model_kind").get<std::string>();
  if (kind_name != model_kind_name(expect))
    throw NnError("checkpoint " + path + " holds a '" + kind_name +
                  "' model, expected '" + model_kind_name(expect) + "'");
  RunConfig cfg;
  for (auto& [key, val] : manifest.at("config").items()) {
    if (key == "seed") continue;
    if (val.is_string())
      cfg.set(key, val.get<std::string>());
    else if (val.is_boolean())
      cfg.set(key, val.get<bool>() ? "true" : "false");
    else if (val.is_number_integer() || val.is_number_unsigned())
      cfg.set(key, std::to_string(val.get<long long>()));
    else
      cfg.set(key, nlohmann::json(val).dump());
  }
  LoadedModel out;
  out.model = make_model(expect, ModelConfig::from(cfg), 0);
  std::vector<Param*> params = out.model->params();
  load_sdpm(path, &params);
  out.manifest = std::move(manifest);
  out.normalizer = Normalizer::from_json(out.manifest.at("normalizer"));
  out.mode = prediction_mode_from(
      out.manifest.value("prediction_mode", std::string("signal")));
  return out;
}

double holdout_value_pearson(Model& value_model, const Dataset& ds,
                             const Normalizer& norm, const RunConfig& cfg, int k,
                             std::uint64_t seed) {
  const int horizon = cfg.get_int("plan.horizon");
  const double gamma = cfg.get_double("diff.gamma");
  const NoiseSchedule sched = cosine_schedule(
      cfg.get_int("diff.K"), cfg.get_double("diff.cosine_s"),
      cfg.get_double("diff.beta_clip"));
  const HoldoutSplit split = holdout_split(ds, cfg.get_double("train.holdout_frac"));
  const WindowIndex idx =
      WindowIndex::build_range(ds, horizon, split.ep_begin, split.ep_end);
  Rng rng(Rng::mix(seed, 0x70656172ULL));
  const int batch_size = cfg.get_int("train.batch");
  std::vector<double> xs, ys;
  for (std::size_t at = 0; at < idx.refs.size(); at += batch_size) {
    const std::size_t bn = std::min<std::size_t>(batch_size, idx.refs.size() - at);
    Batch b = assemble_batch(ds, norm, {idx.refs.data() + at, bn}, horizon, gamma);
    std::vector<int> ks(bn, k);
    Tensor noise(b.tau0.shape);
    noise.fill_normal(rng);
    DenoiseBatch nb{q_sample(b.tau0, ks, noise, sched), ks, b.tau0};
    condition_first_state(nb, b.tau0, PredictionMode::Signal);
    const Tensor pred = value_model.forward(nb.x_k, ks);
    for (std::size_t j = 0; j < bn; ++j) {
      xs.push_back(pred.v[j]);
      ys.push_back(b.values[j]);
    }
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

SafetyAccuracy holdout_safety_accuracy(Model& safety_model, const Dataset& ds,
                                       const Normalizer& norm, const RunConfig& cfg,
                                       int k, std::uint64_t seed) {
  const int horizon = cfg.get_int("plan.horizon");
  const double gamma = cfg.get_double("diff.gamma");
  const NoiseSchedule sched = cosine_schedule(
      cfg.get_int("diff.K"), cfg.get_double("diff.cosine_s"),
      cfg.get_double("diff.beta_clip"));
  const HoldoutSplit split = holdout_split(ds, cfg.get_double("train.holdout_frac"));
  const WindowIndex idx =
      WindowIndex::build_range(ds, horizon, split.ep_begin, split.ep_end);
  Rng rng(Rng::mix(seed, 0x73616663ULL));
  const int batch_size = cfg.get_int("train.batch");
  SafetyAccuracy acc;
  std::size_t correct = 0, unsafe = 0;
  for (std::size_t at = 0; at < idx.refs.size(); at += batch_size) {
    const std::size_t bn = std::min<std::size_t>(batch_size, idx.refs.size() - at);
    Batch b = assemble_batch(ds, norm, {idx.refs.data() + at, bn}, horizon, gamma);
    std::vector<int> ks(bn, k);
    Tensor noise(b.tau0.shape);
    noise.fill_normal(rng);
    DenoiseBatch nb{q_sample(b.tau0, ks, noise, sched), ks, b.tau0};
    condition_first_state(nb, b.tau0, PredictionMode::Signal);
    const Tensor probs = safety_safe_probs(safety_model.forward(nb.x_k, ks));
    for (int t = 0; t < horizon; ++t) {
      for (std::size_t j = 0; j < bn; ++j) {
        const int truth = b.labels[static_cast<std::size_t>(t) * bn + j];
        const int guess = probs.v[static_cast<std::size_t>(t) * bn + j] >= 0.5f ? 0 : 1;
        correct += (truth == guess);
        unsafe += (truth == 1);
        ++acc.total;
      }
    }
  }
  acc.accuracy = static_cast<double>(correct) / static_cast<double>(acc.total);
  acc.fraction_unsafe = static_cast<double>(unsafe) / static_cast<double>(acc.total);
  return acc;
}

}  // namespace sdp

#pragma once

#include <memory>
#include <optional>
#include <string>

#include "sdp/dataset.hpp"
#include "sdp/diffusion.hpp"
#include "sdp/nn.hpp"

namespace sdp {

enum class ModelKind { Dynamics, Value, Safety };
const char* model_kind_name(ModelKind k);
ModelKind model_kind_from(const std::string& name);

struct ModelConfig {
  std::string backbone = "conv";  // conv | mlp
  std::vector<int> channels = {16, 32, 16};
  int kernel = 5;
  int emb_dim = 32;
  int mlp_hidden = 256;
  int horizon = 16;
  int row_dim = 10;

  static ModelConfig from(const RunConfig& cfg);
};

// A diffusion-step-conditioned network. Input is [H][10][B] with a step index
// per batch column; output shape depends on the head (denoiser [H][10][B],
// value [1][B], safety logits [2H][B]).
class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, std::span<const int> ks) = 0;
  // Gradient of the scalar implied by `dout` wrt the input; parameter
  // gradients are accumulated only when param_grads is set.
  virtual Tensor backward(const Tensor& dout, bool param_grads) = 0;
  virtual std::vector<Param*> params() = 0;

  // Independent copy with identical parameters, for parallel evaluation
  // workers (forward caches make a single instance single-threaded). Stubs
  // may return nullptr, which forces sequential evaluation.
  virtual std::unique_ptr<Model> clone() { return nullptr; }

  NoisedPredictor as_predictor() {
    return [this](const Tensor& x, std::span<const int> ks) { return forward(x, ks); };
  }
};

std::unique_ptr<Model> make_model(ModelKind kind, const ModelConfig& cfg,
                                  std::uint64_t init_seed);

// ---------------------------------------------------------------------------
// Batch assembly from dataset windows.
// ---------------------------------------------------------------------------

struct Batch {
  Tensor tau0;                 // [H][10][B], normalized
  std::vector<double> values;  // B, raw reward units
  std::vector<int> labels;     // H*B, t-major
};

Batch assemble_batch(const Dataset& ds, const Normalizer& norm,
                     std::span<const WindowIndex::Ref> refs, int horizon,
                     double gamma);

// Replaces the first state row of the noised input with the clean one, the
// training-side counterpart of the sampler's inpainting. All three models are
// trained on inputs conditioned this way.
void condition_first_state(DenoiseBatch& nb, const Tensor& tau0, PredictionMode mode);

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainLogRow {
  int step;
  double train_loss;
  double holdout_loss;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  int steps = 0;
};

// Trains one model on the dataset and writes the checkpoint (and a loss-curve
// CSV next to it). Held-out split: last `train.holdout_frac` of episodes.
// Aborts with a diagnostic if the loss turns non-finite.
TrainResult train_model(ModelKind kind, const Dataset& ds, const RunConfig& cfg,
                        std::uint64_t seed, const std::string& checkpoint_path,
                        bool quiet);

// Loads a checkpoint, reconstructing the network from its embedded config.
// Throws if the stored model kind does not match `expect`.
struct LoadedModel {
  std::unique_ptr<Model> model;
  nlohmann::json manifest;
  Normalizer normalizer;
  PredictionMode mode = PredictionMode::Signal;
};

LoadedModel load_model(const std::string& path, ModelKind expect);

// ---------------------------------------------------------------------------
// Held-out diagnostics (used by tests and the acceptance suite).
// ---------------------------------------------------------------------------

struct HoldoutSplit {
  std::uint32_t ep_begin;  // first held-out episode
  std::uint32_t ep_end;
};
HoldoutSplit holdout_split(const Dataset& ds, double frac);

double holdout_value_pearson(Model& value_model, const Dataset& ds,
                             const Normalizer& norm, const RunConfig& cfg, int k,
                             std::uint64_t seed);

struct SafetyAccuracy {
  double accuracy = 0.0;
  double fraction_unsafe = 0.0;  // class imbalance, reported alongside
  std::size_t total = 0;
};
SafetyAccuracy holdout_safety_accuracy(Model& safety_model, const Dataset& ds,
                                       const Normalizer& norm, const RunConfig& cfg,
                                       int k, std::uint64_t seed);

}  // namespace sdp

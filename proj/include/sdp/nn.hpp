#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdp/rng.hpp"

namespace sdp {

struct NnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense float32 tensor. Layout conventions used across the project:
//   sequence activations  [H][C][B]   (batch innermost, so inner loops
//   flat activations      [F][B]       vectorize over the batch)
//   conv weights          [Cout][K][Cin]
//   dense weights         [Fout][Fin]
struct Tensor {
  std::vector<int> shape;
  std::vector<float> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), 0.0f);
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }
  std::size_t numel() const { return v.size(); }
  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  void fill_normal(Rng& rng) {
    for (auto& x : v) x = rng.normal_f();
  }
  bool all_finite() const;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(std::move(shape)) {
    grad = Tensor(value.shape);
  }
  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0f); }
};

void check_shape(const Tensor& t, const std::vector<int>& expect, const char* where);

// ---------------------------------------------------------------------------
// Layers. Each caches what its backward pass needs; backward accumulates into
// parameter gradients (unless param_grads is false, used by the frozen guide
// gradients) and returns the gradient with respect to its input.
// ---------------------------------------------------------------------------

// 1D temporal convolution over the H axis, stride 1, same padding.
class Conv1d {
 public:
  Conv1d(int cin, int cout, int k, const std::string& name, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool param_grads);

  std::vector<Param*> params() { return {&W_, &b_}; }
  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  int cin_, cout_, k_;
  Param W_, b_;
  Tensor x_;
};

class Dense {
 public:
  Dense(int fin, int fout, const std::string& name, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool param_grads);

  std::vector<Param*> params() { return {&W_, &b_}; }

 private:
  int fin_, fout_;
  Param W_, b_;
  Tensor x_;
};

// x * tanh(softplus(x)), numerically stabilized for large |x|.
float mish_scalar(float x);

class Mish {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  Tensor x_;
};

// Normalizes over the channel axis of [H][C][B] (per t, per batch element).
class LayerNorm {
 public:
  LayerNorm(int channels, const std::string& name);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool param_grads);

  std::vector<Param*> params() { return {&gamma_, &beta_}; }

 private:
  int c_;
  Param gamma_, beta_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

// Sinusoidal encoding of the diffusion step index, one column per batch
// element. Deterministic, no parameters.
Tensor sinusoidal_embedding(std::span<const int> ks, int dim);

// ---------------------------------------------------------------------------
// Losses. All reductions accumulate in double.
// ---------------------------------------------------------------------------

struct LossGrad {
  double loss = 0.0;
  Tensor dpred;
};

LossGrad mse_loss(const Tensor& pred, const Tensor& target);
LossGrad bce_with_logits(const Tensor& logits, const Tensor& targets);

// Two-class softmax cross-entropy for per-step safety logits [2H][B] against
// integer labels [H*B] (t-major). Equivalent to binary cross-entropy on the
// logit difference.
LossGrad safety_cross_entropy(const Tensor& logits, std::span<const int> labels);

// p(class 0) per step: [2H][B] logits -> [H][B] probabilities.
Tensor safety_safe_probs(const Tensor& logits);

// Sum over steps of log p(class = target) and its gradient wrt the logits.
LossGrad safety_log_prob(const Tensor& logits, int target_class);

// ---------------------------------------------------------------------------
// Optimizer: AdamW with decoupled weight decay and bias correction.
// ---------------------------------------------------------------------------

class AdamW {
 public:
  AdamW(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 0.0)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(const std::vector<Param*>& params);
  std::int64_t steps_taken() const { return t_; }

  double lr() const { return lr_; }
  double beta1() const { return b1_; }
  double beta2() const { return b2_; }
  double eps() const { return eps_; }
  double weight_decay() const { return wd_; }

 private:
  double lr_, b1_, b2_, eps_, wd_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpoint I/O: JSON manifest + raw little-endian float32 blobs.
// ---------------------------------------------------------------------------

void save_sdpm(const std::string& path, const nlohmann::json& manifest,
               const std::vector<Param*>& params);

// Reads the manifest; if params is non-null, loads blobs into them (matched
// by name and shape, in manifest order).
nlohmann::json load_sdpm(const std::string& path, const std::vector<Param*>* params);

// ---------------------------------------------------------------------------
// Central finite differences against an arbitrary scalar function; used by the
// gradient-correctness suites.
// ---------------------------------------------------------------------------

struct FdReport {
  double max_rel_err = 0.0;
  int checked = 0;
};

// For each sampled coordinate of `x`: perturb +/-h, evaluate `f`, and compare
// the central difference against analytic[i]. Relative error uses
// |g - fd| / max(|g|, |fd|, floor).
FdReport fd_check(std::span<float> x, std::span<const float> analytic,
                  const std::function<double()>& f, int n_coords, Rng& rng,
                  double h = 1e-3, double floor_ = 1e-2);

int thread_budget();  // SDP_THREADS, 0 = auto

// Layer loops parallelize over inner_threads(); evaluation workers set it to 1
// while they run episodes in parallel. 0 restores the full budget.
void set_inner_threads(int n);
int inner_threads();

}  // namespace sdp

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sdp/nn.hpp"
#include "sdp/rng.hpp"

namespace sdp {

enum class PredictionMode { Signal, Epsilon };
PredictionMode prediction_mode_from(const std::string& name);

// Per-step noising coefficients, index 1..K; index 0 holds the pre-noise
// convention alpha_bar[0] = 1.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta;       // size K+1, [0] unused
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product, [0] = 1
  std::vector<double> post_var;   // q-posterior variance, [1] = 0
};

NoiseSchedule cosine_schedule(int K, double s = 0.008, double beta_clip = 0.999);

// tau_k = sqrt(abar_k) tau0 + sqrt(1-abar_k) noise, with a per-sample step
// index. Tensors are [H][C][B]; ks has one entry per batch column.
Tensor q_sample(const Tensor& tau0, std::span<const int> ks, const Tensor& noise,
                const NoiseSchedule& sched);

// Mean of p(x^{k-1} | x^k) given the model prediction, in the chosen
// parameterization. Batched per-sample step variant and single-step variant.
Tensor posterior_mean(const Tensor& tau_k, const Tensor& prediction,
                      std::span<const int> ks, const NoiseSchedule& sched,
                      PredictionMode mode);
Tensor posterior_mean(const Tensor& tau_k, const Tensor& prediction, int k,
                      const NoiseSchedule& sched, PredictionMode mode);

// Samples N(mu + guidance_shift, post_var[k] I). The final step (k=1) is
// deterministic. guidance_shift may be null. RNG draws are consumed in a
// fixed order regardless of shift so guided and unguided runs share noise.
Tensor reverse_step(const Tensor& mu, int k, const NoiseSchedule& sched, Rng& rng,
                    const Tensor* guidance_shift);

// Model surface the losses need: prediction on a noised batch. Implemented by
// the trained nets and by test stand-ins.
using NoisedPredictor =
    std::function<Tensor(const Tensor& x_k, std::span<const int> ks)>;

// One training batch worth of denoising inputs and targets.
struct DenoiseBatch {
  Tensor x_k;               // noised trajectories
  std::vector<int> ks;      // per-sample step, uniform on {1..K}
  Tensor target;            // tau0 (signal mode) or the drawn noise (epsilon)
};

DenoiseBatch make_denoise_batch(const Tensor& tau0, const NoiseSchedule& sched,
                                PredictionMode mode, Rng& rng);

double loss_trajectory(const NoisedPredictor& model, const Tensor& tau0,
                       const NoiseSchedule& sched, PredictionMode mode, Rng& rng);

double loss_value(const NoisedPredictor& model, const Tensor& tau0,
                  std::span<const double> value_targets, const NoiseSchedule& sched,
                  Rng& rng);

double loss_safety(const NoisedPredictor& model, const Tensor& tau0,
                   std::span<const int> labels, const NoiseSchedule& sched, Rng& rng);

}  // namespace sdp

#include "sdp/diffusion.hpp"

#include <cmath>

namespace sdp {

PredictionMode prediction_mode_from(const std::string& name) {
  if (name == "signal") return PredictionMode::Signal;
  if (name == "epsilon") return PredictionMode::Epsilon;
  throw NnError("diff.mode must be 'signal' or 'epsilon', got '" + name + "'");
}

NoiseSchedule cosine_schedule(int K, double s, double beta_clip) {
  if (K < 1) throw NnError("noise schedule needs K >= 1");
  NoiseSchedule sc;
  sc.K = K;
  sc.beta.assign(K + 1, 0.0);
  sc.alpha.assign(K + 1, 1.0);
  sc.alpha_bar.assign(K + 1, 1.0);
  sc.post_var.assign(K + 1, 0.0);

  constexpr double kHalfPi = 1.57079632679489661923;
  auto f = [&](int k) {
    const double x = ((static_cast<double>(k) / K) + s) / (1.0 + s) * kHalfPi;
    const double c = std::cos(x);
    return c * c;
  };
  const double f0 = f(0);
  for (int k = 1; k <= K; ++k) {
    const double abar_target = f(k) / f0;
    double beta = 1.0 - abar_target / sc.alpha_bar[k - 1];
    beta = std::min(beta, beta_clip);
    sc.beta[k] = beta;
    sc.alpha[k] = 1.0 - beta;
    // Re-derive the product from the clipped beta so the identity
    // alpha_bar[k] = alpha_bar[k-1] * alpha[k] is exact.
    sc.alpha_bar[k] = sc.alpha_bar[k - 1] * sc.alpha[k];
    sc.post_var[k] = beta * (1.0 - sc.alpha_bar[k - 1]) / (1.0 - sc.alpha_bar[k]);
  }
  return sc;
}

Tensor q_sample(const Tensor& tau0, std::span<const int> ks, const Tensor& noise,
                const NoiseSchedule& sched) {
  check_shape(noise, tau0.shape, "q_sample");
  const int B = tau0.shape.back();
  if (static_cast<int>(ks.size()) != B) throw NnError("q_sample: ks size != batch");
  Tensor out(tau0.shape);
  const std::size_t rows = tau0.numel() / B;
  std::vector<float> ca(B), cn(B);
  for (int b = 0; b < B; ++b) {
    const int k = ks[b];
    if (k < 0 || k > sched.K) throw NnError("q_sample: step index out of range");
    const double abar = sched.alpha_bar[k];
    ca[b] = static_cast<float>(std::sqrt(abar));
    cn[b] = static_cast<float>(std::sqrt(1.0 - abar));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = tau0.data() + r * B;
    const float* n = noise.data() + r * B;
    float* y = out.data() + r * B;
    for (int b = 0; b < B; ++b) y[b] = ca[b] * x[b] + cn[b] * n[b];
  }
  return out;
}

namespace {

struct MeanCoefs {
  float c_x;     // coefficient on tau_k
  float c_pred;  // coefficient on the prediction
};

MeanCoefs mean_coefs(int k, const NoiseSchedule& sched, PredictionMode mode) {
  if (k < 1 || k > sched.K) throw NnError("posterior_mean: k out of range");
  const double ak = sched.alpha[k];
  const double abar_k = sched.alpha_bar[k];
  const double abar_prev = sched.alpha_bar[k - 1];
  if (mode == PredictionMode::Epsilon) {
    const double inv_sqrt_a = 1.0 / std::sqrt(ak);
    return {static_cast<float>(inv_sqrt_a),
            static_cast<float>(-inv_sqrt_a * (1.0 - ak) / std::sqrt(1.0 - abar_k))};
  }
  // Signal mode: q-posterior mean of x^{k-1} given (x^k, x0).
  const double denom = 1.0 - abar_k;
  return {static_cast<float>(std::sqrt(ak) * (1.0 - abar_prev) / denom),
          static_cast<float>(std::sqrt(abar_prev) * sched.beta[k] / denom)};
}

}  // namespace

Tensor posterior_mean(const Tensor& tau_k, const Tensor& prediction,
                      std::span<const int> ks, const NoiseSchedule& sched,
                      PredictionMode mode) {
  check_shape(prediction, tau_k.shape, "posterior_mean");
  const int B = tau_k.shape.back();
  if (static_cast<int>(ks.size()) != B) throw NnError("posterior_mean: ks size != batch");
  Tensor mu(tau_k.shape);
  std::vector<MeanCoefs> cs(B);
  for (int b = 0; b < B; ++b) cs[b] = mean_coefs(ks[b], sched, mode);
  const std::size_t rows = tau_k.numel() / B;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = tau_k.data() + r * B;
    const float* p = prediction.data() + r * B;
    float* m = mu.data() + r * B;
    for (int b = 0; b < B; ++b) m[b] = cs[b].c_x * x[b] + cs[b].c_pred * p[b];
  }
  return mu;
}

Tensor posterior_mean(const Tensor& tau_k, const Tensor& prediction, int k,
                      const NoiseSchedule& sched, PredictionMode mode) {
  check_shape(prediction, tau_k.shape, "posterior_mean");
  const MeanCoefs c = mean_coefs(k, sched, mode);
  Tensor mu(tau_k.shape);
  const std::size_t n = tau_k.numel();
  for (std::size_t i = 0; i < n; ++i)
    mu.v[i] = c.c_x * tau_k.v[i] + c.c_pred * prediction.v[i];
  return mu;
}

Tensor reverse_step(const Tensor& mu, int k, const NoiseSchedule& sched, Rng& rng,
                    const Tensor* guidance_shift) {
  if (k < 1 || k > sched.K) throw NnError("reverse_step: k out of range");
  if (guidance_shift) check_shape(*guidance_shift, mu.shape, "reverse_step shift");
  Tensor out(mu.shape);
  const double var = k == 1 ? 0.0 : sched.post_var[k];
  const float sd = static_cast<float>(std::sqrt(var));
  const std::size_t n = mu.numel();
  for (std::size_t i = 0; i < n; ++i) {
    float x = mu.v[i];
    if (guidance_shift) x += guidance_shift->v[i];
    if (sd > 0.0f) x += sd * rng.normal_f();
    out.v[i] = x;
  }
  return out;
}

DenoiseBatch make_denoise_batch(const Tensor& tau0, const NoiseSchedule& sched,
                                PredictionMode mode, Rng& rng) {
  DenoiseBatch batch;
  const int B = tau0.shape.back();
  batch.ks.resize(B);
  for (int b = 0; b < B; ++b) batch.ks[b] = rng.uniform_int(1, sched.K);
  Tensor noise(tau0.shape);
  noise.fill_normal(rng);
  batch.x_k = q_sample(tau0, batch.ks, noise, sched);
  batch.target = mode == PredictionMode::Signal ? tau0 : std::move(noise);
  return batch;
}

double loss_trajectory(const NoisedPredictor& model, const Tensor& tau0,
                       const NoiseSchedule& sched, PredictionMode mode, Rng& rng) {
  const DenoiseBatch batch = make_denoise_batch(tau0, sched, mode, rng);
  const Tensor pred = model(batch.x_k, batch.ks);
  return mse_loss(pred, batch.target).loss;
}

double loss_value(const NoisedPredictor& model, const Tensor& tau0,
                  std::span<const double> value_targets, const NoiseSchedule& sched,
                  Rng& rng) {
  const int B = tau0.shape.back();
  if (static_cast<int>(value_targets.size()) != B)
    throw NnError("loss_value: target count != batch");
  const DenoiseBatch batch = make_denoise_batch(tau0, sched, PredictionMode::Signal, rng);
  const Tensor pred = model(batch.x_k, batch.ks);
  Tensor target({1, B});
  for (int b = 0; b < B; ++b) target.v[b] = static_cast<float>(value_targets[b]);
  return mse_loss(pred, target).loss;
}

double loss_safety(const NoisedPredictor& model, const Tensor& tau0,
                   std::span<const int> labels, const NoiseSchedule& sched, Rng& rng) {
  const DenoiseBatch batch = make_denoise_batch(tau0, sched, PredictionMode::Signal, rng);
  const Tensor logits = model(batch.x_k, batch.ks);
  return safety_cross_entropy(logits, labels).loss;
}

}  // namespace sdp

#include "sdp/nn.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdp {

bool Tensor::all_finite() const {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_shape(const Tensor& t, const std::vector<int>& expect, const char* where) {
  if (t.shape != expect) {
    std::string msg = std::string("shape mismatch in ") + where + ": got [";
    for (std::size_t i = 0; i < t.shape.size(); ++i)
      msg += (i ? "," : "") + std::to_string(t.shape[i]);
    msg += "], expected [";
    for (std::size_t i = 0; i < expect.size(); ++i)
      msg += (i ? "," : "") + std::to_string(expect[i]);
    msg += "]";
    throw NnError(msg);
  }
}

int thread_budget() {
  static const int n = [] {
    if (const char* env = std::getenv("SDP_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
  }();
  return n;
}

namespace {
std::atomic<int> g_inner_threads{0};
}

void set_inner_threads(int n) { g_inner_threads.store(n, std::memory_order_relaxed); }

int inner_threads() {
  const int n = g_inner_threads.load(std::memory_order_relaxed);
  return n > 0 ? n : thread_budget();
}

namespace {

void init_uniform(Param& p, double limit, Rng& rng) {
  for (auto& x : p.value.v) x = static_cast<float>(rng.uniform(-limit, limit));
}

}  // namespace

// ----------------------------------------------------------------- Conv1d --

Conv1d::Conv1d(int cin, int cout, int k, const std::string& name, Rng& rng)
    : cin_(cin),
      cout_(cout),
      k_(k),
      W_(name + ".W", {cout, k, cin}),
      b_(name + ".b", {cout}) {
  const double limit = std::sqrt(1.0 / (static_cast<double>(cin) * k));
  init_uniform(W_, limit, rng);
  init_uniform(b_, limit, rng);
}

Tensor Conv1d::forward(const Tensor& x) {
  if (x.shape.size() != 3 || x.shape[1] != cin_)
    throw NnError("conv1d: input must be [H][" + std::to_string(cin_) + "][B]");
  x_ = x;
  const int H = x.shape[0], B = x.shape[2];
  const int pad = k_ / 2;
  Tensor y({H, cout_, B});
  const float* xp = x.data();
  const float* wp = W_.value.data();
  const float* bp = b_.value.data();
  float* yp = y.data();
#pragma omp parallel for schedule(static) collapse(2) num_threads(inner_threads())
  for (int t = 0; t < H; ++t) {
    for (int co = 0; co < cout_; ++co) {
      float* yrow = yp + (static_cast<std::size_t>(t) * cout_ + co) * B;
      for (int b = 0; b < B; ++b) yrow[b] = bp[co];
      for (int tap = 0; tap < k_; ++tap) {
        const int ti = t + tap - pad;
        if (ti < 0 || ti >= H) continue;
        const float* wrow = wp + (static_cast<std::size_t>(co) * k_ + tap) * cin_;
        const float* xblk = xp + static_cast<std::size_t>(ti) * cin_ * B;
        for (int ci = 0; ci < cin_; ++ci) {
          const float wv = wrow[ci];
          const float* xrow = xblk + static_cast<std::size_t>(ci) * B;
          for (int b = 0; b < B; ++b) yrow[b] += wv * xrow[b];
        }
      }
    }
  }
  return y;
}

Tensor Conv1d::backward(const Tensor& dy, bool param_grads) {
  if (x_.numel() == 0) throw NnError("conv1d: backward before forward");
  const int H = x_.shape[0], B = x_.shape[2];
  check_shape(dy, {H, cout_, B}, "conv1d backward");
  const int pad = k_ / 2;
  const float* xp = x_.data();
  const float* dyp = dy.data();
  const float* wp = W_.value.data();

  if (param_grads) {
    float* dwp = W_.grad.data();
    float* dbp = b_.grad.data();
#pragma omp parallel for schedule(static) num_threads(inner_threads())
    for (int co = 0; co < cout_; ++co) {
      double db = 0.0;
      for (int t = 0; t < H; ++t) {
        const float* dyrow = dyp + (static_cast<std::size_t>(t) * cout_ + co) * B;
        for (int b = 0; b < B; ++b) db += dyrow[b];
      }
      dbp[co] += static_cast<float>(db);
      for (int tap = 0; tap < k_; ++tap) {
        for (int ci = 0; ci < cin_; ++ci) {
          // Lane-wise accumulator keeps the inner loop free of horizontal
          // reductions so it vectorizes; summed in fixed order afterwards.
          float acc[64] = {0.0f};
          for (int t = 0; t < H; ++t) {
            const int ti = t + tap - pad;
            if (ti < 0 || ti >= H) continue;
            const float* dyrow = dyp + (static_cast<std::size_t>(t) * cout_ + co) * B;
            const float* xrow = xp + (static_cast<std::size_t>(ti) * cin_ + ci) * B;
            for (int b0 = 0; b0 < B; b0 += 64) {
              const int bn = std::min(64, B - b0);
              for (int b = 0; b < bn; ++b) acc[b] += dyrow[b0 + b] * xrow[b0 + b];
            }
          }
          double sum = 0.0;
          for (float lane : acc) sum += lane;
          dwp[(static_cast<std::size_t>(co) * k_ + tap) * cin_ + ci] +=
              static_cast<float>(sum);
        }
      }
    }
  }

  Tensor dx({H, cin_, B});
  float* dxp = dx.data();
#pragma omp parallel for schedule(static) num_threads(inner_threads())
  for (int ti = 0; ti < H; ++ti) {
    for (int tap = 0; tap < k_; ++tap) {
      const int t = ti - tap + pad;
      if (t < 0 || t >= H) continue;
      for (int co = 0; co < cout_; ++co) {
        const float* wrow = wp + (static_cast<std::size_t>(co) * k_ + tap) * cin_;
        const float* dyrow = dyp + (static_cast<std::size_t>(t) * cout_ + co) * B;
        for (int ci = 0; ci < cin_; ++ci) {
          const float wv = wrow[ci];
          float* dxrow = dxp + (static_cast<std::size_t>(ti) * cin_ + ci) * B;
          for (int b = 0; b < B; ++b) dxrow[b] += wv * dyrow[b];
        }
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ Dense --

Dense::Dense(int fin, int fout, const std::string& name, Rng& rng)
    : fin_(fin), fout_(fout), W_(name + ".W", {fout, fin}), b_(name + ".b", {fout}) {
  const double limit = std::sqrt(1.0 / fin);
  init_uniform(W_, limit, rng);
  init_uniform(b_, limit, rng);
}

Tensor Dense::forward(const Tensor& x) {
  if (x.shape.size() != 2 || x.shape[0] != fin_)
    throw NnError("dense: input must be [" + std::to_string(fin_) + "][B]");
  x_ = x;
  const int B = x.shape[1];
  Tensor y({fout_, B});
  const float* xp = x.data();
  const float* wp = W_.value.data();
  float* yp = y.data();
#pragma omp parallel for schedule(static) num_threads(inner_threads())
  for (int fo = 0; fo < fout_; ++fo) {
    float* yrow = yp + static_cast<std::size_t>(fo) * B;
    const float bias = b_.value.v[fo];
    for (int b = 0; b < B; ++b) yrow[b] = bias;
    const float* wrow = wp + static_cast<std::size_t>(fo) * fin_;
    for (int fi = 0; fi < fin_; ++fi) {
      const float wv = wrow[fi];
      const float* xrow = xp + static_cast<std::size_t>(fi) * B;
      for (int b = 0; b < B; ++b) yrow[b] += wv * xrow[b];
    }
  }
  return y;
}

Tensor Dense::backward(const Tensor& dy, bool param_grads) {
  if (x_.numel() == 0) throw NnError("dense: backward before forward");
  const int B = x_.shape[1];
  check_shape(dy, {fout_, B}, "dense backward");
  const float* xp = x_.data();
  const float* dyp = dy.data();
  const float* wp = W_.value.data();

  if (param_grads) {
    float* dwp = W_.grad.data();
    float* dbp = b_.grad.data();
#pragma omp parallel for schedule(static) num_threads(inner_threads())
    for (int fo = 0; fo < fout_; ++fo) {
      const float* dyrow = dyp + static_cast<std::size_t>(fo) * B;
      double db = 0.0;
      for (int b = 0; b < B; ++b) db += dyrow[b];
      dbp[fo] += static_cast<float>(db);
      float* dwrow = dwp + static_cast<std::size_t>(fo) * fin_;
      for (int fi = 0; fi < fin_; ++fi) {
        const float* xrow = xp + static_cast<std::size_t>(fi) * B;
        double acc = 0.0;
        for (int b = 0; b < B; ++b) acc += dyrow[b] * xrow[b];
        dwrow[fi] += static_cast<float>(acc);
      }
    }
  }

  Tensor dx({fin_, B});
  float* dxp = dx.data();
#pragma omp parallel for schedule(static) num_threads(inner_threads())
  for (int fi = 0; fi < fin_; ++fi) {
    float* dxrow = dxp + static_cast<std::size_t>(fi) * B;
    for (int fo = 0; fo < fout_; ++fo) {
      const float wv = wp[static_cast<std::size_t>(fo) * fin_ + fi];
      const float* dyrow = dyp + static_cast<std::size_t>(fo) * B;
      for (int b = 0; b < B; ++b) dxrow[b] += wv * dyrow[b];
    }
  }
  return dx;
}

// ------------------------------------------------------------------- Mish --

// tanh(softplus(x)) rewritten with u = e^x as (u^2 + 2u) / (u^2 + 2u + 2):
// one exp per element and no branches, so the loops vectorize. For large x,
// u^2 overflows to inf and the ratio correctly saturates at 1; clamping x
// from above keeps the float math inside inf-free range.
namespace {
inline float tanh_softplus(float x) {
  const float xc = x > 60.0f ? 60.0f : x;
  const float u = std::exp(xc);
  const float w = u * u + 2.0f * u;
  return w / (w + 2.0f);
}
}  // namespace

float mish_scalar(float x) { return x * tanh_softplus(x); }

Tensor Mish::forward(const Tensor& x) {
  x_ = x;
  Tensor y(x.shape);
  const std::size_t n = x.numel();
  const float* xp = x.data();
  float* yp = y.data();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    const float xv = xp[i];
    const float xc = xv > 60.0f ? 60.0f : xv;
    const float u = std::exp(xc);
    const float w = u * u + 2.0f * u;
    yp[i] = xv * (w / (w + 2.0f));
  }
  return y;
}

Tensor Mish::backward(const Tensor& dy) {
  if (x_.numel() == 0) throw NnError("mish: backward before forward");
  check_shape(dy, x_.shape, "mish backward");
  Tensor dx(x_.shape);
  const std::size_t n = x_.numel();
  const float* xp = x_.data();
  const float* dyp = dy.data();
  float* dxp = dx.data();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    const float xv = xp[i];
    const float xc = xv > 60.0f ? 60.0f : xv;
    const float u = std::exp(xc);
    const float w = u * u + 2.0f * u;
    const float t = w / (w + 2.0f);
    const float sig = u / (1.0f + u);
    dxp[i] = dyp[i] * (t + xv * (1.0f - t * t) * sig);
  }
  return dx;
}

// -------------------------------------------------------------- LayerNorm --

LayerNorm::LayerNorm(int channels, const std::string& name)
    : c_(channels), gamma_(name + ".g", {channels}), beta_(name + ".b", {channels}) {
  std::fill(gamma_.value.v.begin(), gamma_.value.v.end(), 1.0f);
}

Tensor LayerNorm::forward(const Tensor& x) {
  if (x.shape.size() != 3 || x.shape[1] != c_)
    throw NnError("layernorm: input must be [H][" + std::to_string(c_) + "][B]");
  const int H = x.shape[0], B = x.shape[2];
  constexpr float kEps = 1e-5f;
  xhat_ = Tensor(x.shape);
  inv_std_.assign(static_cast<std::size_t>(H) * B, 0.0f);
  Tensor y(x.shape);
  const float* xp = x.data();
  float* hp = xhat_.data();
  float* yp = y.data();
  const float* gp = gamma_.value.data();
  const float* bp = beta_.value.data();
  for (int t = 0; t < H; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * c_ * B;
    for (int b = 0; b < B; ++b) {
      double mean = 0.0;
      for (int c = 0; c < c_; ++c) mean += xp[base + static_cast<std::size_t>(c) * B + b];
      mean /= c_;
      double var = 0.0;
      for (int c = 0; c < c_; ++c) {
        const double d = xp[base + static_cast<std::size_t>(c) * B + b] - mean;
        var += d * d;
      }
      var /= c_;
      const float inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
      inv_std_[static_cast<std::size_t>(t) * B + b] = inv;
      for (int c = 0; c < c_; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * B + b;
        const float xh = (xp[i] - static_cast<float>(mean)) * inv;
        hp[i] = xh;
        yp[i] = gp[c] * xh + bp[c];
      }
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy, bool param_grads) {
  if (xhat_.numel() == 0) throw NnError("layernorm: backward before forward");
  check_shape(dy, xhat_.shape, "layernorm backward");
  const int H = xhat_.shape[0], B = xhat_.shape[2];
  const float* dyp = dy.data();
  const float* hp = xhat_.data();
  const float* gp = gamma_.value.data();

  if (param_grads) {
    float* dgp = gamma_.grad.data();
    float* dbp = beta_.grad.data();
    for (int c = 0; c < c_; ++c) {
      double dg = 0.0, db = 0.0;
      for (int t = 0; t < H; ++t) {
        const std::size_t row = (static_cast<std::size_t>(t) * c_ + c) * B;
        for (int b = 0; b < B; ++b) {
          dg += dyp[row + b] * hp[row + b];
          db += dyp[row + b];
        }
      }
      dgp[c] += static_cast<float>(dg);
      dbp[c] += static_cast<float>(db);
    }
  }

  Tensor dx(xhat_.shape);
  float* dxp = dx.data();
  for (int t = 0; t < H; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * c_ * B;
    for (int b = 0; b < B; ++b) {
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (int c = 0; c < c_; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * B + b;
        const double dxh = static_cast<double>(dyp[i]) * gp[c];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * hp[i];
      }
      const double inv = inv_std_[static_cast<std::size_t>(t) * B + b];
      const double m1 = sum_dxh / c_;
      const double m2 = sum_dxh_xh / c_;
      for (int c = 0; c < c_; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * B + b;
        const double dxh = static_cast<double>(dyp[i]) * gp[c];
        dxp[i] = static_cast<float>(inv * (dxh - m1 - hp[i] * m2));
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------- step embedding --

Tensor sinusoidal_embedding(std::span<const int> ks, int dim) {
  if (dim % 2 != 0) throw NnError("embedding dim must be even");
  const int B = static_cast<int>(ks.size());
  const int half = dim / 2;
  Tensor e({dim, B});
  for (int i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half - 1));
    for (int b = 0; b < B; ++b) {
      const double arg = static_cast<double>(ks[b]) * freq;
      e.v[static_cast<std::size_t>(2 * i) * B + b] = static_cast<float>(std::sin(arg));
      e.v[static_cast<std::size_t>(2 * i + 1) * B + b] =
          static_cast<float>(std::cos(arg));
    }
  }
  return e;
}

// ----------------------------------------------------------------- losses --

LossGrad mse_loss(const Tensor& pred, const Tensor& target) {
  check_shape(target, pred.shape, "mse");
  const std::size_t n = pred.numel();
  if (n == 0) throw NnError("mse on empty tensors");
  LossGrad out;
  out.dpred = Tensor(pred.shape);
  double acc = 0.0;
  const double scale = 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.v[i]) - target.v[i];
    acc += d * d;
    out.dpred.v[i] = static_cast<float>(scale * d);
  }
  out.loss = acc / static_cast<double>(n);
  return out;
}

LossGrad bce_with_logits(const Tensor& logits, const Tensor& targets) {
  check_shape(targets, logits.shape, "bce_with_logits");
  const std::size_t n = logits.numel();
  if (n == 0) throw NnError("bce on empty tensors");
  LossGrad out;
  out.dpred = Tensor(logits.shape);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.v[i];
    const double y = targets.v[i];
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double sig = 1.0 / (1.0 + std::exp(-z));
    out.dpred.v[i] = static_cast<float>((sig - y) / static_cast<double>(n));
  }
  out.loss = acc / static_cast<double>(n);
  return out;
}

namespace {

// Softmax over a logit pair, stable.
inline void softmax2(float z0, float z1, double& p0, double& p1) {
  const double m = std::max(z0, z1);
  const double e0 = std::exp(static_cast<double>(z0) - m);
  const double e1 = std::exp(static_cast<double>(z1) - m);
  const double s = e0 + e1;
  p0 = e0 / s;
  p1 = e1 / s;
}

}  // namespace

LossGrad safety_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.shape.size() != 2 || logits.shape[0] % 2 != 0)
    throw NnError("safety logits must be [2H][B]");
  const int H = logits.shape[0] / 2, B = logits.shape[1];
  if (static_cast<int>(labels.size()) != H * B)
    throw NnError("safety labels must have H*B entries");
  LossGrad out;
  out.dpred = Tensor(logits.shape);
  double acc = 0.0;
  const double scale = 1.0 / (static_cast<double>(H) * B);
  for (int t = 0; t < H; ++t) {
    const std::size_t r0 = static_cast<std::size_t>(2 * t) * B;
    const std::size_t r1 = static_cast<std::size_t>(2 * t + 1) * B;
    for (int b = 0; b < B; ++b) {
      double p0, p1;
      softmax2(logits.v[r0 + b], logits.v[r1 + b], p0, p1);
      const int y = labels[static_cast<std::size_t>(t) * B + b];
      acc -= std::log(std::max(y == 0 ? p0 : p1, 1e-300));
      out.dpred.v[r0 + b] = static_cast<float>(scale * (p0 - (y == 0 ? 1.0 : 0.0)));
      out.dpred.v[r1 + b] = static_cast<float>(scale * (p1 - (y == 1 ? 1.0 : 0.0)));
    }
  }
  out.loss = acc * scale;
  return out;
}

Tensor safety_safe_probs(const Tensor& logits) {
  if (logits.shape.size() != 2 || logits.shape[0] % 2 != 0)
    throw NnError("safety logits must be [2H][B]");
  const int H = logits.shape[0] / 2, B = logits.shape[1];
  Tensor p({H, B});
  for (int t = 0; t < H; ++t) {
    for (int b = 0; b < B; ++b) {
      double p0, p1;
      softmax2(logits.v[static_cast<std::size_t>(2 * t) * B + b],
               logits.v[static_cast<std::size_t>(2 * t + 1) * B + b], p0, p1);
      p.v[static_cast<std::size_t>(t) * B + b] = static_cast<float>(p0);
    }
  }
  return p;
}

LossGrad safety_log_prob(const Tensor& logits, int target_class) {
  if (logits.shape.size() != 2 || logits.shape[0] % 2 != 0)
    throw NnError("safety logits must be [2H][B]");
  const int H = logits.shape[0] / 2, B = logits.shape[1];
  LossGrad out;
  out.dpred = Tensor(logits.shape);
  double acc = 0.0;
  for (int t = 0; t < H; ++t) {
    const std::size_t r0 = static_cast<std::size_t>(2 * t) * B;
    const std::size_t r1 = static_cast<std::size_t>(2 * t + 1) * B;
    for (int b = 0; b < B; ++b) {
      double p0, p1;
      softmax2(logits.v[r0 + b], logits.v[r1 + b], p0, p1);
      const double pt = target_class == 0 ? p0 : p1;
      acc += std::log(std::max(pt, 1e-300));
      // d log p_y / dz = onehot(y) - p
      out.dpred.v[r0 + b] = static_cast<float>((target_class == 0 ? 1.0 : 0.0) - p0);
      out.dpred.v[r1 + b] = static_cast<float>((target_class == 1 ? 1.0 : 0.0) - p1);
    }
  }
  out.loss = acc;
  return out;
}

// ------------------------------------------------------------------ AdamW --

void AdamW::step(const std::vector<Param*>& params) {
  if (m_.empty()) {
    for (const Param* p : params) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }
  if (m_.size() != params.size()) throw NnError("optimizer bound to a different net");
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    float* m = m_[pi].data();
    float* v = v_[pi].data();
    float* w = p.value.data();
    const float* g = p.grad.data();
    const std::size_t n = p.value.numel();
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(g[i]))
        throw NnError("non-finite gradient in parameter " + p.name);
      const double gd = g[i];
      m[i] = static_cast<float>(b1_ * m[i] + (1.0 - b1_) * gd);
      v[i] = static_cast<float>(b2_ * v[i] + (1.0 - b2_) * gd * gd);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<float>(w[i] - lr_ * mhat / (std::sqrt(vhat) + eps_) -
                                lr_ * wd_ * w[i]);
    }
  }
}

// ------------------------------------------------------------- checkpoint --

void save_sdpm(const std::string& path, const nlohmann::json& manifest,
               const std::vector<Param*>& params) {
  const std::string m = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NnError("cannot open for writing: " + path);
  const std::uint32_t len = static_cast<std::uint32_t>(m.size());
  char hdr[4];
  for (int i = 0; i < 4; ++i) hdr[i] = static_cast<char>((len >> (8 * i)) & 0xff);
  out.write(hdr, 4);
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const Param* p : params) {
    // float32 little-endian; byte-stable on any little-endian host
    for (float x : p->value.v) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      out.write(b, 4);
    }
  }
  if (!out) throw NnError("write failed: " + path);
}

nlohmann::json load_sdpm(const std::string& path, const std::vector<Param*>* params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NnError("cannot open checkpoint: " + path);
  char hdr[4];
  in.read(hdr, 4);
  if (!in) throw NnError("truncated checkpoint: " + path);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(hdr[i])) << (8 * i);
  std::string m(len, '\0');
  in.read(m.data(), len);
  if (!in) throw NnError("truncated checkpoint manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(m);
  if (manifest.value("format", "") != "sdpm-1")
    throw NnError("not a .sdpm checkpoint: " + path);

  if (params) {
    const auto& plist = manifest.at("params");
    if (plist.size() != params->size())
      throw NnError("checkpoint parameter count mismatch for " + path);
    for (std::size_t i = 0; i < params->size(); ++i) {
      Param& p = *(*params)[i];
      const auto& entry = plist[i];
      if (entry.at("name").get<std::string>() != p.name)
        throw NnError("checkpoint parameter order mismatch: expected " + p.name);
      const auto shp = entry.at("shape").get<std::vector<int>>();
      if (shp != p.value.shape)
        throw NnError("checkpoint shape mismatch for parameter " + p.name);
      for (auto& x : p.value.v) {
        char b[4];
        in.read(b, 4);
        if (!in) throw NnError("truncated checkpoint blobs: " + path);
        std::uint32_t bits = 0;
        for (int j = 0; j < 4; ++j)
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[j])) << (8 * j);
        std::memcpy(&x, &bits, 4);
      }
    }
  }
  return manifest;
}

// --------------------------------------------------------- finite differences --

FdReport fd_check(std::span<float> x, std::span<const float> analytic,
                  const std::function<double()>& f, int n_coords, Rng& rng,
                  double h, double floor_) {
  if (x.size() != analytic.size()) throw NnError("fd_check size mismatch");
  FdReport rep;
  for (int i = 0; i < n_coords; ++i) {
    const std::size_t idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(x.size()) - 1));
    const float keep = x[idx];
    x[idx] = static_cast<float>(keep + h);
    const double fp = f();
    x[idx] = static_cast<float>(keep - h);
    const double fm = f();
    x[idx] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    const double g = analytic[idx];
    const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor_});
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
    ++rep.checked;
  }
  return rep;
}

}  // namespace sdp

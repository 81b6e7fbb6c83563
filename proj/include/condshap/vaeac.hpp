#pragma once

// Conditional generative model covering all 2^M conditional distributions of a
// feature vector through masking: two Gaussian encoders into a shared latent
// space and a decoder emitting per-feature distribution parameters. Trained by
// maximizing a variational lower bound with weak normal/gamma priors on the
// masked-encoder outputs; employed by sampling the unobserved features given
// the observed ones.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "condshap/nncore.hpp"
#include "condshap/rng.hpp"
#include "condshap/types.hpp"

namespace condshap {

// Distribution over masks used during training. Uniform masks each feature
// independently with probability 1/2; a frequency table draws a coalition S
// proportional to its count and masks the complement.
struct MaskingScheme {
  enum class Kind { kUniform, kFrequencyTable };

  Kind kind = Kind::kUniform;
  std::vector<std::pair<Coalition, double>> table;  // (S, count), counts > 0

  static MaskingScheme uniform() { return MaskingScheme{}; }

  static MaskingScheme frequency(std::vector<std::pair<Coalition, double>> entries) {
    MaskingScheme s;
    s.kind = Kind::kFrequencyTable;
    s.table = std::move(entries);
    if (s.table.empty()) throw ConfigError("masking scheme: empty frequency table");
    std::sort(s.table.begin(), s.table.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [c, count] : s.table) {
      (void)c;
      if (!(count > 0)) throw ConfigError("masking scheme: counts must be positive");
    }
    return s;
  }
};

// Draws the unobserved set S-bar for one training instance.
inline Mask sample_mask(const MaskingScheme& scheme, int m, Rng& rng) {
  if (scheme.kind == MaskingScheme::Kind::kUniform) {
    std::uint64_t bits = 0;
    for (int j = 0; j < m; ++j)
      if (rng.bernoulli(0.5)) bits |= 1ULL << j;
    return Mask(bits, m);
  }
  if (scheme.table.empty()) throw ConfigError("sample_mask: empty frequency table");
  double total = 0;
  for (const auto& [c, count] : scheme.table) {
    if (c.m() != m) throw ConfigError("sample_mask: coalition arity mismatch");
    total += count;
  }
  const double u = rng.uniform() * total;
  double acc = 0;
  for (const auto& [c, count] : scheme.table) {
    acc += count;
    if (u < acc) return c.complement();
  }
  return scheme.table.back().first.complement();
}

struct VaeacHyper {
  int depth = 3;        // hidden layers per net
  int width = 32;
  int latent_dim = 8;
  double lr = 0.001;
  int batch_size = 64;
  int epochs = 0;       // 0 = 200 when N_train <= 1000, else 100
  double sigma_mu = 1e4;
  double sigma_sigma = 1e4;
  int iwae_samples = 40;
  double validation_fraction = 0.25;
  int multistart = 15;
  int warmup_epochs = 5;
  double slope = 0.01;

  int resolve_epochs(int n_train) const {
    if (epochs > 0) return epochs;
    return n_train <= 1000 ? 200 : 100;
  }

  void validate() const {
    if (depth < 1 || width < 1 || latent_dim < 1 || batch_size < 1 ||
        iwae_samples < 1 || multistart < 1 || warmup_epochs < 1)
      throw ConfigError("vaeac hyper: counts must be positive");
    if (!(lr > 0) || !(sigma_mu > 0) || !(sigma_sigma > 0))
      throw ConfigError("vaeac hyper: scales must be positive");
    if (!(validation_fraction > 0 && validation_fraction < 1))
      throw ConfigError("vaeac hyper: validation fraction in (0,1)");
  }
};

struct LatentGaussian {
  Vector mu;
  Vector sigma;  // strictly positive
};

constexpr double kSigmaFloor = 1e-6;

inline double softplus_floored(double s) { return std::max(softplus(s), kSigmaFloor); }
inline double softplus_floored_grad(double s) {
  return softplus(s) > kSigmaFloor ? sigmoid(s) : 0.0;
}

struct VaeacModel {
  FeatureSchema schema;
  VaeacHyper hyper;
  Mlp full_encoder;
  Mlp masked_encoder;
  Mlp decoder;
  Vector norm_mean;  // per feature; 0 for categorical
  Vector norm_sd;    // per feature; 1 for categorical
  double phi0 = 0.0;
  bool has_phi0 = false;
  bool trained = false;

  int m() const { return schema.size(); }
  int latent_dim() const { return hyper.latent_dim; }

  std::size_t parameter_count() const {
    return full_encoder.parameter_count() + masked_encoder.parameter_count() +
           decoder.parameter_count();
  }
};

// --- Encoding conventions -------------------------------------------------

// Offsets of each feature's block inside the one-hot encoded vector.
inline std::vector<int> encoded_offsets(const FeatureSchema& schema) {
  std::vector<int> off(static_cast<std::size_t>(schema.size()) + 1, 0);
  for (int j = 0; j < schema.size(); ++j)
    off[static_cast<std::size_t>(j) + 1] =
        off[static_cast<std::size_t>(j)] +
        (schema.is_categorical(j) ? schema.levels(j) : 1);
  return off;
}

// Offsets of each feature's block inside the decoder output vector.
inline std::vector<int> decoder_offsets(const FeatureSchema& schema) {
  std::vector<int> off(static_cast<std::size_t>(schema.size()) + 1, 0);
  for (int j = 0; j < schema.size(); ++j)
    off[static_cast<std::size_t>(j) + 1] =
        off[static_cast<std::size_t>(j)] +
        (schema.is_categorical(j) ? schema.levels(j) : 2);
  return off;
}

namespace detail {

inline void put_feature(const FeatureSchema& schema, const std::vector<int>& off,
                        const Vector& x, int j, Vector& out) {
  if (schema.is_categorical(j)) {
    const int label = static_cast<int>(x[j]);
    if (label < 1 || label > schema.levels(j))
      throw SchemaError("encode: feature " + std::to_string(j + 1) +
                        " category out of range");
    out[off[static_cast<std::size_t>(j)] + label - 1] = 1.0;
  } else {
    out[off[static_cast<std::size_t>(j)]] = x[j];
  }
}

}  // namespace detail

// Fixed-length input of the masked encoder: the one-hot encoded features with
// unobserved entries zeroed, followed by the mask indicator I(S-bar). The
// width does not depend on the mask.
inline Vector fixed_length_encode(const Vector& x, const Mask& unobserved,
                                  const FeatureSchema& schema) {
  const auto off = encoded_offsets(schema);
  const int d = schema.encoded_width();
  const int m = schema.size();
  Vector out = Vector::Zero(d + m);
  for (int j = 0; j < m; ++j) {
    if (unobserved.contains(j)) {
      out[d + j] = 1.0;
    } else {
      detail::put_feature(schema, off, x, j, out);
    }
  }
  return out;
}

// Fixed-length input of the full encoder: all features encoded (nothing
// zeroed) followed by the same mask indicator.
inline Vector full_length_encode(const Vector& x, const Mask& unobserved,
                                 const FeatureSchema& schema) {
  const auto off = encoded_offsets(schema);
  const int d = schema.encoded_width();
  const int m = schema.size();
  Vector out = Vector::Zero(d + m);
  for (int j = 0; j < m; ++j) {
    detail::put_feature(schema, off, x, j, out);
    if (unobserved.contains(j)) out[d + j] = 1.0;
  }
  return out;
}

// Continuous features standardized by the stored training statistics;
// categorical labels pass through.
inline Vector normalize_row(const VaeacModel& model, const Vector& x) {
  Vector out = x;
  for (int j = 0; j < model.m(); ++j)
    if (!model.schema.is_categorical(j))
      out[j] = (x[j] - model.norm_mean[j]) / model.norm_sd[j];
  return out;
}

inline double denormalize_value(const VaeacModel& model, int j, double v) {
  return v * model.norm_sd[j] + model.norm_mean[j];
}

inline LatentGaussian split_latent(const Vector& raw, int d) {
  LatentGaussian lg;
  lg.mu = raw.head(d);
  lg.sigma.resize(d);
  for (int i = 0; i < d; ++i) lg.sigma[i] = softplus_floored(raw[d + i]);
  return lg;
}

inline LatentGaussian encode_masked(const VaeacModel& model, const Vector& x,
                                    const Mask& unobserved) {
  const Vector in = fixed_length_encode(normalize_row(model, x), unobserved, model.schema);
  const Vector raw = mlp_forward(model.masked_encoder, in);
  if (!raw.allFinite()) throw TrainingError("encode_masked: non-finite activations");
  return split_latent(raw, model.latent_dim());
}

inline LatentGaussian encode_full(const VaeacModel& model, const Vector& x,
                                  const Mask& unobserved) {
  const Vector in = full_length_encode(normalize_row(model, x), unobserved, model.schema);
  const Vector raw = mlp_forward(model.full_encoder, in);
  if (!raw.allFinite()) throw TrainingError("encode_full: non-finite activations");
  return split_latent(raw, model.latent_dim());
}

inline Vector reparameterize(const LatentGaussian& lg, const Vector& eps) {
  if (eps.size() != lg.mu.size())
    throw InputError("reparameterize: shape mismatch");
  return lg.mu + eps.cwiseProduct(lg.sigma);
}

// Closed-form KL divergence between diagonal Gaussians, KL(q || p).
inline double kl_diag_gauss(const LatentGaussian& q, const LatentGaussian& p) {
  double kl = 0;
  for (int i = 0; i < q.mu.size(); ++i) {
    const double dmu = q.mu[i] - p.mu[i];
    kl += std::log(p.sigma[i] / q.sigma[i]) +
          (q.sigma[i] * q.sigma[i] + dmu * dmu) / (2.0 * p.sigma[i] * p.sigma[i]) - 0.5;
  }
  return kl;
}

// Decoder output in fixed-length form, with schema-aware accessors. The raw
// vector always covers every feature; consumers select the unobserved ones.
struct DecoderOutput {
  Vector raw;
  const FeatureSchema* schema = nullptr;
  std::vector<int> offsets;

  double mu(int j) const { return raw[offsets[static_cast<std::size_t>(j)]]; }
  double pre_sigma(int j) const { return raw[offsets[static_cast<std::size_t>(j)] + 1]; }
  double sigma(int j) const { return softplus_floored(pre_sigma(j)); }
  Vector logits(int j) const {
    return raw.segment(offsets[static_cast<std::size_t>(j)],
                       schema->levels(j));
  }
};

namespace detail {

// Skip wiring: the post-activation output of masked-encoder hidden layer i
// (1-based) feeds the input of decoder hidden layer depth - i + 1.
inline std::vector<Vector> skips_from_masked(const MlpCache& masked_cache, int depth) {
  std::vector<Vector> skips(static_cast<std::size_t>(depth) + 1);
  for (int i = 0; i < depth; ++i)
    skips[static_cast<std::size_t>(i)] =
        masked_cache.hidden[static_cast<std::size_t>(depth - 1 - i)];
  return skips;  // last entry (output layer) stays empty
}

}  // namespace detail

// Runs the decoder for a given latent sample. The masked encoder is evaluated
// internally because the decoder's skip inputs come from its hidden layers.
inline DecoderOutput decode(const VaeacModel& model, const Vector& z, const Vector& x,
                            const Mask& unobserved) {
  const Vector in_masked =
      fixed_length_encode(normalize_row(model, x), unobserved, model.schema);
  MlpCache masked_cache;
  mlp_forward(model.masked_encoder, in_masked, {}, &masked_cache);
  Vector dec_in(model.latent_dim() + in_masked.size());
  dec_in << z, in_masked;
  DecoderOutput out;
  out.raw = mlp_forward(model.decoder, dec_in,
                        detail::skips_from_masked(masked_cache, model.hyper.depth));
  out.schema = &model.schema;
  out.offsets = decoder_offsets(model.schema);
  return out;
}

// Log-density of the unobserved features under the decoder output. Continuous
// terms are evaluated on the normalized scale.
inline double log_prob_decoder(const DecoderOutput& out, const Vector& x_norm,
                               const Mask& unobserved, const FeatureSchema& schema) {
  double lp = 0;
  for (int j = 0; j < schema.size(); ++j) {
    if (!unobserved.contains(j)) continue;
    if (schema.is_categorical(j)) {
      const Vector w = out.logits(j);
      const int label = static_cast<int>(x_norm[j]);
      if (label < 1 || label > schema.levels(j))
        throw SchemaError("log_prob_decoder: category out of range");
      lp += w[label - 1] - log_sum_exp(w);
    } else {
      lp += normal_logpdf(x_norm[j], out.mu(j), out.sigma(j));
    }
  }
  return lp;
}

// --- Variational lower bound ------------------------------------------------

struct VlbParts {
  double recon = 0;
  double kl = 0;
  double regularizer = 0;
  double total() const { return recon - kl + regularizer; }
};

namespace detail {

// Everything one training step needs to keep between the forward and backward
// passes of the regularized VLB.
struct VlbWork {
  MlpCache full_cache;
  MlpCache masked_cache;
  MlpCache dec_cache;
  LatentGaussian full;
  LatentGaussian masked;
  Vector full_raw;
  Vector masked_raw;
  Vector eps;
  Vector z;
  Vector x_norm;
  Mask mask = Mask::empty(1);
  DecoderOutput dec_out;
};

inline VlbParts vlb_res_forward(const VaeacModel& model, const Vector& x,
                                const Mask& unobserved, const Vector& eps, VlbWork& w) {
  const int d = model.latent_dim();
  w.mask = unobserved;
  w.eps = eps;
  w.x_norm = normalize_row(model, x);
  const Vector in_full = full_length_encode(w.x_norm, unobserved, model.schema);
  const Vector in_masked = fixed_length_encode(w.x_norm, unobserved, model.schema);
  w.full_raw = mlp_forward(model.full_encoder, in_full, {}, &w.full_cache);
  w.masked_raw = mlp_forward(model.masked_encoder, in_masked, {}, &w.masked_cache);
  w.full = split_latent(w.full_raw, d);
  w.masked = split_latent(w.masked_raw, d);
  w.z = reparameterize(w.full, eps);
  Vector dec_in(d + in_masked.size());
  dec_in << w.z, in_masked;
  w.dec_out.raw = mlp_forward(model.decoder, dec_in,
                              skips_from_masked(w.masked_cache, model.hyper.depth),
                              &w.dec_cache);
  w.dec_out.schema = &model.schema;
  w.dec_out.offsets = decoder_offsets(model.schema);

  VlbParts parts;
  parts.recon = log_prob_decoder(w.dec_out, w.x_norm, unobserved, model.schema);
  parts.kl = kl_diag_gauss(w.full, w.masked);
  for (int i = 0; i < d; ++i) {
    const double mu = w.masked.mu[i];
    const double sg = w.masked.sigma[i];
    parts.regularizer += -mu * mu / (2.0 * model.hyper.sigma_mu * model.hyper.sigma_mu) +
                         (std::log(sg) - sg) / model.hyper.sigma_sigma;
  }
  return parts;
}

struct VaeacGrads {
  MlpGrad full;
  MlpGrad masked;
  MlpGrad decoder;

  static VaeacGrads zeros_like(const VaeacModel& model) {
    return {MlpGrad::zeros_like(model.full_encoder),
            MlpGrad::zeros_like(model.masked_encoder),
            MlpGrad::zeros_like(model.decoder)};
  }

  void setZero() {
    full.setZero();
    masked.setZero();
    decoder.setZero();
  }
};

// Accumulates d(vlb)/d(params) for one instance into grads.
inline void vlb_res_backward(const VaeacModel& model, const VlbWork& w,
                             VaeacGrads& grads) {
  const FeatureSchema& schema = model.schema;
  const int d = model.latent_dim();

  // Reconstruction term through the decoder output.
  Vector g_dec = Vector::Zero(w.dec_out.raw.size());
  for (int j = 0; j < schema.size(); ++j) {
    if (!w.mask.contains(j)) continue;
    const int off = w.dec_out.offsets[static_cast<std::size_t>(j)];
    if (schema.is_categorical(j)) {
      const Vector w_logits = w.dec_out.logits(j);
      const Vector probs = softmax(w_logits);
      const int label = static_cast<int>(w.x_norm[j]);
      for (int l = 0; l < schema.levels(j); ++l)
        g_dec[off + l] = (l == label - 1 ? 1.0 : 0.0) - probs[l];
    } else {
      const double mu = w.dec_out.mu(j);
      const double s = w.dec_out.pre_sigma(j);
      const double sg = softplus_floored(s);
      const double r = w.x_norm[j] - mu;
      g_dec[off] = r / (sg * sg);
      g_dec[off + 1] = (-1.0 / sg + r * r / (sg * sg * sg)) * softplus_floored_grad(s);
    }
  }
  const MlpBackwardResult dec_back =
      mlp_backward(model.decoder, w.dec_cache, g_dec, grads.decoder);

  // Latent path and KL term into the full encoder.
  const Vector g_z = dec_back.grad_input.head(d);
  Vector g_full_out(2 * d);
  for (int i = 0; i < d; ++i) {
    const double dmu = w.full.mu[i] - w.masked.mu[i];
    const double sq = w.full.sigma[i];
    const double sp = w.masked.sigma[i];
    const double g_mu = g_z[i] - dmu / (sp * sp);
    const double g_sigma = g_z[i] * w.eps[i] - (-1.0 / sq + sq / (sp * sp));
    g_full_out[i] = g_mu;
    g_full_out[d + i] = g_sigma * softplus_floored_grad(w.full_raw[d + i]);
  }
  mlp_backward(model.full_encoder, w.full_cache, g_full_out, grads.full);

  // KL + latent priors into the masked encoder, plus the skip gradients.
  Vector g_masked_out(2 * d);
  const double smu2 = model.hyper.sigma_mu * model.hyper.sigma_mu;
  for (int i = 0; i < d; ++i) {
    const double dmu = w.full.mu[i] - w.masked.mu[i];
    const double sq = w.full.sigma[i];
    const double sp = w.masked.sigma[i];
    const double g_mu = dmu / (sp * sp) - w.masked.mu[i] / smu2;
    const double g_sigma = -1.0 / sp + (sq * sq + dmu * dmu) / (sp * sp * sp) +
                           (1.0 / sp - 1.0) / model.hyper.sigma_sigma;
    g_masked_out[i] = g_mu;
    g_masked_out[d + i] = g_sigma * softplus_floored_grad(w.masked_raw[d + i]);
  }
  std::vector<Vector> hidden_extra(static_cast<std::size_t>(model.hyper.depth));
  for (int i = 0; i < model.hyper.depth; ++i) {
    const Vector& gs = dec_back.grad_skips[static_cast<std::size_t>(i)];
    if (gs.size() > 0)
      hidden_extra[static_cast<std::size_t>(model.hyper.depth - 1 - i)] = gs;
  }
  mlp_backward(model.masked_encoder, w.masked_cache, g_masked_out, grads.masked,
               &hidden_extra);
}

}  // namespace detail

// Single-sample estimate of the regularized VLB at externally supplied noise.
inline double vlb_res(const VaeacModel& model, const Vector& x, const Mask& unobserved,
                      const Vector& eps) {
  detail::VlbWork w;
  const VlbParts parts = detail::vlb_res_forward(model, x, unobserved, eps, w);
  const double v = parts.total();
  if (!std::isfinite(v)) throw TrainingError("vlb_res: non-finite value");
  return v;
}

// Importance-weighted estimate of log p(x_unobs | x_obs, mask) with V
// proposals from the full encoder; log-sum-exp throughout.
inline double iwae(const VaeacModel& model, const Vector& x, const Mask& unobserved,
                   int v_samples, Rng& rng) {
  if (v_samples < 1) throw ConfigError("iwae: V must be >= 1");
  const int d = model.latent_dim();
  const Vector x_norm = normalize_row(model, x);
  const Vector in_full = full_length_encode(x_norm, unobserved, model.schema);
  const Vector in_masked = fixed_length_encode(x_norm, unobserved, model.schema);
  const LatentGaussian full = split_latent(mlp_forward(model.full_encoder, in_full), d);
  MlpCache masked_cache;
  const LatentGaussian masked = split_latent(
      mlp_forward(model.masked_encoder, in_masked, {}, &masked_cache), d);
  const auto skips = detail::skips_from_masked(masked_cache, model.hyper.depth);
  const auto dec_off = decoder_offsets(model.schema);

  Vector log_w(v_samples);
  for (int i = 0; i < v_samples; ++i) {
    Vector eps(d);
    for (int k = 0; k < d; ++k) eps[k] = rng.normal();
    const Vector z = reparameterize(full, eps);
    double lq = 0;  // log p_full(z)
    double lp = 0;  // log p_masked(z)
    for (int k = 0; k < d; ++k) {
      lq += normal_logpdf(z[k], full.mu[k], full.sigma[k]);
      lp += normal_logpdf(z[k], masked.mu[k], masked.sigma[k]);
    }
    Vector dec_in(d + in_masked.size());
    dec_in << z, in_masked;
    DecoderOutput out;
    out.raw = mlp_forward(model.decoder, dec_in, skips);
    out.schema = &model.schema;
    out.offsets = dec_off;
    const double recon = log_prob_decoder(out, x_norm, unobserved, model.schema);
    log_w[i] = lp + recon - lq;
  }
  return log_sum_exp(log_w) - std::log(static_cast<double>(v_samples));
}

// Employment phase: K complete samples agreeing with x on the observed
// features. Categorical outputs are labels, not one-hot vectors.
inline Matrix sample_conditional(const VaeacModel& model, const Vector& x,
                                 const Mask& unobserved, int k_samples, Rng& rng) {
  if (!model.trained) throw UsageError("sample_conditional: model is not trained");
  model.schema.validate_row(x);
  const int m = model.m();
  Matrix out(k_samples, m);
  if (unobserved.is_empty()) {
    for (int k = 0; k < k_samples; ++k) out.row(k) = x.transpose();
    return out;
  }
  const int d = model.latent_dim();
  const Vector x_norm = normalize_row(model, x);
  const Vector in_masked = fixed_length_encode(x_norm, unobserved, model.schema);
  MlpCache masked_cache;
  const LatentGaussian masked = split_latent(
      mlp_forward(model.masked_encoder, in_masked, {}, &masked_cache), d);
  const auto skips = detail::skips_from_masked(masked_cache, model.hyper.depth);
  const auto dec_off = decoder_offsets(model.schema);

  for (int k = 0; k < k_samples; ++k) {
    Vector eps(d);
    for (int i = 0; i < d; ++i) eps[i] = rng.normal();
    const Vector z = reparameterize(masked, eps);
    Vector dec_in(d + in_masked.size());
    dec_in << z, in_masked;
    DecoderOutput dec;
    dec.raw = mlp_forward(model.decoder, dec_in, skips);
    dec.schema = &model.schema;
    dec.offsets = dec_off;
    for (int j = 0; j < m; ++j) {
      if (!unobserved.contains(j)) {
        out(k, j) = x[j];
      } else if (model.schema.is_categorical(j)) {
        const Vector probs = softmax(dec.logits(j));
        const double u = rng.uniform();
        double acc = 0;
        int label = model.schema.levels(j);
        for (int l = 0; l < probs.size(); ++l) {
          acc += probs[l];
          if (u < acc) {
            label = l + 1;
            break;
          }
        }
        out(k, j) = static_cast<double>(label);
      } else {
        const double v = dec.mu(j) + dec.sigma(j) * rng.normal();
        out(k, j) = denormalize_value(model, j, v);
      }
    }
  }
  return out;
}

// --- Training ---------------------------------------------------------------

struct TrainingLogRow {
  int epoch = 0;
  double train_vlb = 0;
  double val_iwae = 0;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
  int best_epoch = 0;
  double best_val_iwae = 0;
  int chosen_start = 0;
};

// Freshly initialized (untrained) model with the three nets wired for the
// given schema: encoders map the fixed-length input to (mu, pre-softplus
// sigma); the decoder takes [z, masked input] plus one skip per hidden layer.
inline VaeacModel make_vaeac_model(const FeatureSchema& schema, const VaeacHyper& hyper,
                                   const Vector& mean, const Vector& sd, Rng& rng) {
  VaeacModel model;
  model.schema = schema;
  model.hyper = hyper;
  model.norm_mean = mean;
  model.norm_sd = sd;
  const int enc_in = schema.encoded_width() + schema.size();
  const int d = hyper.latent_dim;
  std::vector<int> enc_widths(static_cast<std::size_t>(hyper.depth), hyper.width);
  enc_widths.push_back(2 * d);
  std::vector<int> no_skips(enc_widths.size(), 0);
  model.full_encoder = make_mlp(enc_in, enc_widths, no_skips, hyper.slope, rng);
  model.masked_encoder = make_mlp(enc_in, enc_widths, no_skips, hyper.slope, rng);
  std::vector<int> dec_widths(static_cast<std::size_t>(hyper.depth), hyper.width);
  dec_widths.push_back(schema.decoder_width());
  std::vector<int> dec_skips(dec_widths.size(), 0);
  for (int i = 0; i < hyper.depth; ++i) dec_skips[static_cast<std::size_t>(i)] = hyper.width;
  model.decoder = make_mlp(d + enc_in, dec_widths, dec_skips, hyper.slope, rng);
  return model;
}

namespace detail {

constexpr std::uint64_t kInitStream = stream_tag("vaeac-init");
constexpr std::uint64_t kTrainStream = stream_tag("vaeac-train");
constexpr std::uint64_t kValStream = stream_tag("vaeac-val");
constexpr std::uint64_t kSplitStream = stream_tag("vaeac-split");

struct Trainer {
  VaeacModel model;
  VaeacGrads grads;
  AdamState adam;
  ParamViews params;
  ParamViews grad_views;
  Vector neg_grad_flat;

  explicit Trainer(VaeacModel m) : model(std::move(m)), grads(VaeacGrads::zeros_like(model)) {
    collect_params(model.full_encoder, params);
    collect_params(model.masked_encoder, params);
    collect_params(model.decoder, params);
    collect_params(grads.full, grad_views);
    collect_params(grads.masked, grad_views);
    collect_params(grads.decoder, grad_views);
    adam = AdamState::create(params.total, model.hyper.lr);
    neg_grad_flat.resize(static_cast<Eigen::Index>(params.total));
  }

  // One epoch of Adam on the mean negative VLB; returns the mean train VLB.
  double run_epoch(const Matrix& rows, const MaskingScheme& scheme, Rng& rng, int epoch) {
    const int n = static_cast<int>(rows.rows());
    const int m = model.m();
    const int d = model.latent_dim();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.uniform_index(static_cast<std::size_t>(i) + 1)]);
    double vlb_sum = 0;
    int batch_count = 0;
    VlbWork work;
    for (int start = 0; start < n; start += model.hyper.batch_size) {
      const int stop = std::min(n, start + model.hyper.batch_size);
      grads.setZero();
      double batch_vlb = 0;
      for (int i = start; i < stop; ++i) {
        const Vector x = rows.row(order[static_cast<std::size_t>(i)]).transpose();
        const Mask mask = sample_mask(scheme, m, rng);
        Vector eps(d);
        for (int k = 0; k < d; ++k) eps[k] = rng.normal();
        const VlbParts parts = vlb_res_forward(model, x, mask, eps, work);
        batch_vlb += parts.total();
        vlb_res_backward(model, work, grads);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      if (!std::isfinite(batch_vlb))
        throw TrainingError("vaeac train: non-finite loss at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch_count + 1));
      // Adam minimizes, so feed the gradient of -mean(vlb).
      Eigen::Index off = 0;
      for (std::size_t b = 0; b < grad_views.blocks.size(); ++b) {
        const double* g = grad_views.blocks[b];
        for (Eigen::Index k = 0; k < grad_views.sizes[b]; ++k)
          neg_grad_flat[off + k] = -g[k] * scale;
        off += grad_views.sizes[b];
      }
      ParamViews neg;
      neg.add(neg_grad_flat.data(), neg_grad_flat.size());
      adam_step(adam, params, neg);
      vlb_sum += batch_vlb;
      ++batch_count;
    }
    return vlb_sum / static_cast<double>(n);
  }

  double validation_vlb(const Matrix& rows, const MaskingScheme& scheme, Rng& rng) {
    const int d = model.latent_dim();
    double sum = 0;
    VlbWork work;
    for (int i = 0; i < rows.rows(); ++i) {
      const Vector x = rows.row(i).transpose();
      const Mask mask = sample_mask(scheme, model.m(), rng);
      Vector eps(d);
      for (int k = 0; k < d; ++k) eps[k] = rng.normal();
      sum += vlb_res_forward(model, x, mask, eps, work).total();
    }
    return sum / static_cast<double>(rows.rows());
  }

  double validation_iwae(const Matrix& rows, const MaskingScheme& scheme, Rng& rng) {
    double sum = 0;
    for (int i = 0; i < rows.rows(); ++i) {
      const Vector x = rows.row(i).transpose();
      const Mask mask = sample_mask(scheme, model.m(), rng);
      sum += iwae(model, x, mask, model.hyper.iwae_samples, rng);
    }
    return sum / static_cast<double>(rows.rows());
  }
};

}  // namespace detail

// Trains a model: validation split, normalization from the training split,
// multi-start warmup keeping the best validation VLB, then full training with
// the checkpoint taken at the epoch with the best validation IWAE.
inline std::pair<VaeacModel, TrainingLog> train_vaeac(const Matrix& data,
                                                      const FeatureSchema& schema,
                                                      const MaskingScheme& scheme,
                                                      const VaeacHyper& hyper,
                                                      const Rng& rng_in) {
  schema.validate();
  hyper.validate();
  const int n = static_cast<int>(data.rows());
  if (n < 8) throw TrainingError("vaeac train: need at least 8 rows");
  if (data.cols() != schema.size())
    throw SchemaError("vaeac train: data arity mismatch");

  Rng split_rng = rng_in.child(detail::kSplitStream);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[split_rng.uniform_index(static_cast<std::size_t>(i) + 1)]);

  int n_val = static_cast<int>(std::lround(hyper.validation_fraction * n));
  n_val = std::clamp(n_val, 1, n - 1);
  const int n_train = n - n_val;
  Matrix train_rows(n_train, schema.size());
  Matrix val_rows(n_val, schema.size());
  for (int i = 0; i < n_train; ++i) train_rows.row(i) = data.row(order[static_cast<std::size_t>(i)]);
  for (int i = 0; i < n_val; ++i)
    val_rows.row(i) = data.row(order[static_cast<std::size_t>(n_train + i)]);

  // Normalization statistics from the training split only.
  Vector mean = Vector::Zero(schema.size());
  Vector sd = Vector::Ones(schema.size());
  for (int j = 0; j < schema.size(); ++j) {
    if (schema.is_categorical(j)) continue;
    const double mu = train_rows.col(j).mean();
    const double var =
        (train_rows.col(j).array() - mu).square().sum() / static_cast<double>(n_train - 1);
    if (!(var > 1e-24))
      throw TrainingError("vaeac train: continuous feature " + std::to_string(j + 1) +
                          " has zero variance");
    mean[j] = mu;
    sd[j] = std::sqrt(var);
  }

  const int total_epochs = hyper.resolve_epochs(n);
  const int warmup = std::min(hyper.warmup_epochs, total_epochs);

  // Multi-start warmup.
  int best_start = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  std::unique_ptr<detail::Trainer> winner;
  for (int s = 0; s < hyper.multistart; ++s) {
    Rng init_rng = rng_in.child(detail::kInitStream, static_cast<std::uint64_t>(s));
    auto trainer = std::make_unique<detail::Trainer>(
        make_vaeac_model(schema, hyper, mean, sd, init_rng));
    Rng train_rng = rng_in.child(detail::kTrainStream, static_cast<std::uint64_t>(s));
    for (int e = 1; e <= warmup; ++e)
      trainer->run_epoch(train_rows, scheme, train_rng, e);
    Rng val_rng = rng_in.child(detail::kValStream, static_cast<std::uint64_t>(s));
    const double val = trainer->validation_vlb(val_rows, scheme, val_rng);
    if (val > best_val) {
      best_val = val;
      best_start = s;
      winner = std::move(trainer);
    }
  }

  TrainingLog log;
  log.chosen_start = best_start;
  // Continuation uses its own stream so the whole schedule is a pure function
  // of (seed, chosen start index).
  Rng cont_rng = rng_in.child(stream_tag("vaeac-continue"),
                              static_cast<std::uint64_t>(best_start));
  Rng iwae_rng = rng_in.child(stream_tag("vaeac-iwae"),
                              static_cast<std::uint64_t>(best_start));

  VaeacModel best_model = winner->model;
  double best_iwae = winner->validation_iwae(val_rows, scheme, iwae_rng);
  int best_epoch = warmup;
  log.rows.push_back({warmup, 0.0, best_iwae});

  for (int e = warmup + 1; e <= total_epochs; ++e) {
    const double train_vlb = winner->run_epoch(train_rows, scheme, cont_rng, e);
    const double val_iwae = winner->validation_iwae(val_rows, scheme, iwae_rng);
    log.rows.push_back({e, train_vlb, val_iwae});
    if (val_iwae > best_iwae) {
      best_iwae = val_iwae;
      best_epoch = e;
      best_model = winner->model;
    }
  }
  log.best_epoch = best_epoch;
  log.best_val_iwae = best_iwae;
  best_model.trained = true;
  return {std::move(best_model), std::move(log)};
}

}  // namespace condshap

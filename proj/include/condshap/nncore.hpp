#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "condshap/rng.hpp"
#include "condshap/types.hpp"

namespace condshap {

inline double leaky_relu(double x, double slope) {
  return x >= 0.0 ? x : slope * x;
}

inline double leaky_relu_grad(double x, double slope) {
  // Subgradient at the kink uses the positive side.
  return x >= 0.0 ? 1.0 : slope;
}

// Overflow-safe log(1 + exp(x)).
inline double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Max-subtracted softmax; output sums to 1.
inline Vector softmax(const Vector& w) {
  if (w.size() < 1) throw std::invalid_argument("softmax: empty input");
  const double m = w.maxCoeff();
  Vector out = (w.array() - m).exp();
  out /= out.sum();
  return out;
}

inline double log_sum_exp(const Vector& w) {
  const double m = w.maxCoeff();
  return m + std::log((w.array() - m).exp().sum());
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out

  int in() const { return static_cast<int>(weights.cols()); }
  int out() const { return static_cast<int>(weights.rows()); }
};

// Glorot-style uniform weights, zero bias; fully determined by the rng state.
inline DenseLayer init_layer(int out, int in, Rng& rng) {
  if (out <= 0 || in <= 0) throw std::invalid_argument("init_layer: bad shape");
  DenseLayer layer;
  layer.weights.resize(out, in);
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
  layer.bias = Vector::Zero(out);
  return layer;
}

// Fully connected net. LeakyReLU on every hidden layer, no activation on the
// output layer. skip_widths[i] gives the width of an extra vector concatenated
// to layer i's input (0 when the layer takes no skip input).
struct Mlp {
  std::vector<DenseLayer> layers;
  std::vector<int> skip_widths;
  double slope = 0.01;

  int depth() const { return static_cast<int>(layers.size()); }

  // Width of the main input (first layer minus its declared skip).
  int input_width() const { return layers.front().in() - skip_widths.front(); }
  int output_width() const { return layers.back().out(); }

  void check_wiring() const {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    if (skip_widths.size() != layers.size())
      throw std::invalid_argument("mlp: skip declaration arity mismatch");
    for (std::size_t i = 1; i < layers.size(); ++i) {
      if (layers[i].in() != layers[i - 1].out() + skip_widths[i])
        throw std::invalid_argument("mlp: layer widths do not compose");
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }
};

inline Mlp make_mlp(int input, const std::vector<int>& widths,
                    const std::vector<int>& skip_widths, double slope, Rng& rng) {
  Mlp net;
  net.slope = slope;
  net.skip_widths = skip_widths;
  if (skip_widths.size() != widths.size())
    throw std::invalid_argument("make_mlp: widths/skips mismatch");
  int prev = input;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    net.layers.push_back(init_layer(widths[i], prev + skip_widths[i], rng));
    prev = widths[i];
  }
  net.check_wiring();
  return net;
}

// Forward-pass cache holding everything the backward pass needs.
struct MlpCache {
  std::vector<Vector> inputs;   // concatenated input of each layer
  std::vector<Vector> preact;   // W*input + b of each layer
  std::vector<Vector> hidden;   // post-activation output of each hidden layer
  Vector output;                // preact of the final layer (no activation)
};

inline Vector mlp_forward(const Mlp& net, const Vector& input,
                          const std::vector<Vector>& skips = {},
                          MlpCache* cache = nullptr) {
  const int depth = net.depth();
  Vector current = input;
  if (cache) {
    cache->inputs.assign(static_cast<std::size_t>(depth), Vector());
    cache->preact.assign(static_cast<std::size_t>(depth), Vector());
    cache->hidden.assign(static_cast<std::size_t>(depth - 1), Vector());
  }
  for (int i = 0; i < depth; ++i) {
    const DenseLayer& layer = net.layers[static_cast<std::size_t>(i)];
    Vector in;
    const int skip_w = net.skip_widths[static_cast<std::size_t>(i)];
    if (skip_w > 0) {
      if (static_cast<std::size_t>(i) >= skips.size() ||
          skips[static_cast<std::size_t>(i)].size() != skip_w)
        throw std::invalid_argument("mlp_forward: missing or mis-sized skip input");
      in.resize(current.size() + skip_w);
      in << current, skips[static_cast<std::size_t>(i)];
    } else {
      in = current;
    }
    if (in.size() != layer.in())
      throw std::invalid_argument("mlp_forward: input width mismatch at layer " +
                                  std::to_string(i));
    Vector z = layer.weights * in + layer.bias;
    if (cache) {
      cache->inputs[static_cast<std::size_t>(i)] = std::move(in);
      cache->preact[static_cast<std::size_t>(i)] = z;
    }
    if (i + 1 < depth) {
      current = z.unaryExpr([&](double v) { return leaky_relu(v, net.slope); });
      if (cache) cache->hidden[static_cast<std::size_t>(i)] = current;
    } else {
      current = std::move(z);
    }
  }
  if (cache) cache->output = current;
  return current;
}

// Gradient holder with the same layout as the Mlp it mirrors.
struct MlpGrad {
  std::vector<DenseLayer> layers;

  static MlpGrad zeros_like(const Mlp& net) {
    MlpGrad g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers)
      g.layers.push_back({Matrix::Zero(l.out(), l.in()), Vector::Zero(l.out())});
    return g;
  }

  void setZero() {
    for (auto& l : layers) {
      l.weights.setZero();
      l.bias.setZero();
    }
  }
};

struct MlpBackwardResult {
  Vector grad_input;               // gradient w.r.t. the main input
  std::vector<Vector> grad_skips;  // gradient w.r.t. each declared skip input
};

// Reverse pass. grad_output is d(loss)/d(output); hidden_extra, when present,
// injects additional gradient at the post-activation output of each hidden
// layer (used for skip connections that fan out of this net). Parameter
// gradients are accumulated into grad.
inline MlpBackwardResult mlp_backward(const Mlp& net, const MlpCache& cache,
                                      const Vector& grad_output, MlpGrad& grad,
                                      const std::vector<Vector>* hidden_extra = nullptr) {
  const int depth = net.depth();
  MlpBackwardResult result;
  result.grad_skips.assign(static_cast<std::size_t>(depth), Vector());
  Vector gz = grad_output;  // gradient w.r.t. preact of the current layer
  for (int i = depth - 1; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const DenseLayer& layer = net.layers[idx];
    grad.layers[idx].weights.noalias() += gz * cache.inputs[idx].transpose();
    grad.layers[idx].bias += gz;
    Vector gin = layer.weights.transpose() * gz;
    const int skip_w = net.skip_widths[idx];
    if (skip_w > 0) {
      result.grad_skips[idx] = gin.tail(skip_w);
      gin = gin.head(gin.size() - skip_w).eval();
    }
    if (i == 0) {
      result.grad_input = std::move(gin);
      break;
    }
    // Through the activation of the previous hidden layer.
    if (hidden_extra && (*hidden_extra)[idx - 1].size() > 0)
      gin += (*hidden_extra)[idx - 1];
    const Vector& z_prev = cache.preact[idx - 1];
    gz.resize(gin.size());
    for (int k = 0; k < gin.size(); ++k)
      gz[k] = gin[k] * leaky_relu_grad(z_prev[k], net.slope);
  }
  return result;
}

// Adam with bias correction.
struct AdamState {
  Vector m;  // first moments, flat
  Vector v;  // second moments, flat
  long long step = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState create(std::size_t n, double lr = 0.001) {
    AdamState s;
    s.m = Vector::Zero(static_cast<Eigen::Index>(n));
    s.v = Vector::Zero(static_cast<Eigen::Index>(n));
    s.lr = lr;
    return s;
  }
};

// Flat views over a set of nets, in declaration order (per layer: weights in
// Eigen's storage order, then bias). The same order is used by the checkpoint
// serialization.
struct ParamViews {
  std::vector<double*> blocks;
  std::vector<Eigen::Index> sizes;
  std::size_t total = 0;

  void add(double* p, Eigen::Index n) {
    blocks.push_back(p);
    sizes.push_back(n);
    total += static_cast<std::size_t>(n);
  }
};

inline void collect_params(Mlp& net, ParamViews& views) {
  for (auto& l : net.layers) {
    views.add(l.weights.data(), l.weights.size());
    views.add(l.bias.data(), l.bias.size());
  }
}

inline void collect_params(MlpGrad& g, ParamViews& views) {
  for (auto& l : g.layers) {
    views.add(l.weights.data(), l.weights.size());
    views.add(l.bias.data(), l.bias.size());
  }
}

// The two views must cover the same total length; their block structures may
// differ (e.g. per-layer parameter blocks against one flat gradient buffer).
inline void adam_step(AdamState& state, ParamViews& params, const ParamViews& grads) {
  if (params.total != static_cast<std::size_t>(state.m.size()) ||
      grads.total != params.total)
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t gb = 0;
  Eigen::Index gk = 0;
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    double* p = params.blocks[b];
    const Eigen::Index n = params.sizes[b];
    for (Eigen::Index k = 0; k < n; ++k) {
      while (gk == grads.sizes[gb]) {
        ++gb;
        gk = 0;
      }
      const double g = grads.blocks[gb][gk++];
      double& m = state.m[offset + k];
      double& v = state.v[offset + k];
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    offset += n;
  }
}

}  // namespace condshap

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace condshap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct SchemaError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class FeatureKind { kContinuous, kCategorical };

struct Feature {
  FeatureKind kind = FeatureKind::kContinuous;
  int levels = 0;  // category count, >= 2 for categorical features
};

// Per-feature kinds; categorical values are stored as 1-based labels.
struct FeatureSchema {
  std::vector<Feature> features;

  static FeatureSchema continuous(int m) {
    FeatureSchema s;
    s.features.assign(static_cast<std::size_t>(m), Feature{});
    return s;
  }

  int size() const { return static_cast<int>(features.size()); }

  bool is_categorical(int j) const {
    return features[static_cast<std::size_t>(j)].kind == FeatureKind::kCategorical;
  }

  int levels(int j) const { return features[static_cast<std::size_t>(j)].levels; }

  bool all_continuous() const {
    for (const auto& f : features)
      if (f.kind == FeatureKind::kCategorical) return false;
    return true;
  }

  // Width of the one-hot encoded feature block (1 per continuous feature,
  // L_j per categorical feature).
  int encoded_width() const {
    int w = 0;
    for (const auto& f : features)
      w += f.kind == FeatureKind::kCategorical ? f.levels : 1;
    return w;
  }

  // Width of the decoder output block (mean and pre-softplus sd per
  // continuous feature, L_j logits per categorical feature).
  int decoder_width() const {
    int w = 0;
    for (const auto& f : features)
      w += f.kind == FeatureKind::kCategorical ? f.levels : 2;
    return w;
  }

  void validate() const {
    if (features.empty()) throw SchemaError("schema: no features");
    for (const auto& f : features)
      if (f.kind == FeatureKind::kCategorical && f.levels < 2)
        throw SchemaError("schema: categorical feature needs >= 2 levels");
  }

  // Checks one observation against the schema (categorical labels in 1..L).
  void validate_row(const Vector& x) const {
    if (x.size() != size()) throw SchemaError("schema: row arity mismatch");
    for (int j = 0; j < size(); ++j) {
      if (!is_categorical(j)) continue;
      const double v = x[j];
      const int label = static_cast<int>(v);
      if (static_cast<double>(label) != v || label < 1 || label > levels(j))
        throw SchemaError("schema: feature " + std::to_string(j + 1) +
                          " has out-of-range category " + std::to_string(v));
    }
  }
};

// Subset of {0, .., M-1} as a bitmask; doubles as the coalition S of observed
// features and, via complement(), the mask S-bar of unobserved ones. M <= 64.
class Coalition {
 public:
  Coalition() = default;
  Coalition(std::uint64_t bits, int m) : bits_(bits), m_(m) {
    if (m < 1 || m > 64) throw std::invalid_argument("coalition: M must be in 1..64");
    if (m < 64 && (bits >> m) != 0)
      throw std::invalid_argument("coalition: bits outside 1..M");
  }

  static Coalition empty(int m) { return Coalition(0, m); }
  static Coalition full(int m) {
    return Coalition(m == 64 ? ~0ULL : ((1ULL << m) - 1), m);
  }

  bool contains(int j) const { return (bits_ >> j) & 1ULL; }
  int size() const { return __builtin_popcountll(bits_); }
  int m() const { return m_; }
  std::uint64_t bits() const { return bits_; }
  bool is_empty() const { return bits_ == 0; }
  bool is_full() const { return size() == m_; }

  Coalition complement() const {
    const std::uint64_t all = m_ == 64 ? ~0ULL : ((1ULL << m_) - 1);
    return Coalition(all & ~bits_, m_);
  }

  Coalition with(int j) const { return Coalition(bits_ | (1ULL << j), m_); }

  std::vector<int> members() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (int j = 0; j < m_; ++j)
      if (contains(j)) out.push_back(j);
    return out;
  }

  friend bool operator==(const Coalition& a, const Coalition& b) {
    return a.bits_ == b.bits_ && a.m_ == b.m_;
  }
  friend bool operator<(const Coalition& a, const Coalition& b) {
    return a.bits_ < b.bits_;
  }

 private:
  std::uint64_t bits_ = 0;
  int m_ = 1;
};

// The mask S-bar is the complement coalition of unobserved features.
using Mask = Coalition;

struct Dataset {
  FeatureSchema schema;
  Matrix x;  // N x M
  Vector y;  // empty when the dataset has no response column

  int n() const { return static_cast<int>(x.rows()); }
  int m() const { return static_cast<int>(x.cols()); }
  bool has_response() const { return y.size() == x.rows() && y.size() > 0; }
};


}  // namespace condshap

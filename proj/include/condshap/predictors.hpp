#pragma once

// Bundled black-box regression models: an exact linear model over mixed
// features and a minimal bagged CART forest, behind one prediction interface.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "condshap/rng.hpp"
#include "condshap/types.hpp"

namespace condshap {

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual double predict(const Vector& x) const = 0;
};

// f(x) = alpha + sum_j(cat) beta_j[label] + sum_j(cont) gamma_j * x_j
struct LinearModel : Predictor {
  FeatureSchema schema;
  double alpha = 0;
  std::vector<Vector> beta;  // per feature; empty for continuous features
  Vector gamma;              // per feature; 0 for categorical features

  double predict(const Vector& x) const override {
    schema.validate_row(x);
    double out = alpha;
    for (int j = 0; j < schema.size(); ++j) {
      if (schema.is_categorical(j)) {
        const int label = static_cast<int>(x[j]);
        out += beta[static_cast<std::size_t>(j)][label - 1];
      } else {
        out += gamma[j] * x[j];
      }
    }
    return out;
  }
};

// Least squares with one reference level dropped per categorical feature.
// Coefficients for the reference level are reported as zero; predictions are
// invariant to the choice.
inline LinearModel fit_linear(const Matrix& x, const Vector& y,
                              const FeatureSchema& schema) {
  schema.validate();
  if (x.rows() != y.size()) throw InputError("fit_linear: row count mismatch");
  if (x.cols() != schema.size()) throw SchemaError("fit_linear: arity mismatch");
  const int n = static_cast<int>(x.rows());

  std::vector<std::string> col_names;
  col_names.emplace_back("intercept");
  int p = 1;
  for (int j = 0; j < schema.size(); ++j)
    p += schema.is_categorical(j) ? schema.levels(j) - 1 : 1;

  Matrix design = Matrix::Zero(n, p);
  design.col(0).setOnes();
  int col = 1;
  std::vector<int> first_col(static_cast<std::size_t>(schema.size()), 0);
  for (int j = 0; j < schema.size(); ++j) {
    first_col[static_cast<std::size_t>(j)] = col;
    if (schema.is_categorical(j)) {
      for (int l = 2; l <= schema.levels(j); ++l) {
        for (int i = 0; i < n; ++i)
          design(i, col) = static_cast<int>(x(i, j)) == l ? 1.0 : 0.0;
        col_names.push_back("x" + std::to_string(j + 1) + "=" + std::to_string(l));
        ++col;
      }
    } else {
      design.col(col) = x.col(j);
      col_names.push_back("x" + std::to_string(j + 1));
      ++col;
    }
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    const auto perm = qr.colsPermutation().indices();
    std::string bad;
    for (int k = qr.rank(); k < p; ++k) {
      if (!bad.empty()) bad += ", ";
      bad += col_names[static_cast<std::size_t>(perm[k])];
    }
    throw EstimationError("fit_linear: design matrix is rank deficient (collinear: " +
                          bad + ")");
  }
  const Vector coef = qr.solve(y);

  LinearModel model;
  model.schema = schema;
  model.alpha = coef[0];
  model.gamma = Vector::Zero(schema.size());
  model.beta.resize(static_cast<std::size_t>(schema.size()));
  for (int j = 0; j < schema.size(); ++j) {
    if (schema.is_categorical(j)) {
      Vector b = Vector::Zero(schema.levels(j));
      for (int l = 2; l <= schema.levels(j); ++l)
        b[l - 1] = coef[first_col[static_cast<std::size_t>(j)] + l - 2];
      model.beta[static_cast<std::size_t>(j)] = std::move(b);
    } else {
      model.gamma[j] = coef[first_col[static_cast<std::size_t>(j)]];
    }
  }
  return model;
}

// --- Regression forest -------------------------------------------------------

struct ForestHyper {
  int trees = 500;
  int min_leaf = 5;  // nodes at or below this size become leaves
  int mtry = 0;      // 0 = ceil(M / 3)

  int resolve_mtry(int m) const {
    if (mtry > 0) return std::min(mtry, m);
    return (m + 2) / 3;
  }
};

struct ForestNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0;   // continuous split: x <= threshold goes left
  int level = 0;          // categorical split (> 0): x == level goes left
  int left = -1;
  int right = -1;
  double value = 0;       // leaf mean
};

struct RegressionTree {
  std::vector<ForestNode> nodes;
  std::uint64_t seed = 0;  // bootstrap stream, kept for out-of-bag checks

  double predict(const Vector& x) const {
    int idx = 0;
    for (;;) {
      const ForestNode& node = nodes[static_cast<std::size_t>(idx)];
      if (node.feature < 0) return node.value;
      bool go_left;
      if (node.level > 0)
        go_left = static_cast<int>(x[node.feature]) == node.level;
      else
        go_left = x[node.feature] <= node.threshold;
      idx = go_left ? node.left : node.right;
    }
  }
};

struct ForestModel : Predictor {
  FeatureSchema schema;
  std::vector<RegressionTree> trees;

  double predict(const Vector& x) const override {
    double sum = 0;
    for (const auto& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
  }
};

namespace detail {

// Content hash of one training row; rows with equal content always receive
// the same per-tree bootstrap count, so fits are invariant to row order.
inline std::uint64_t row_hash(const Matrix& x, const Vector& y, int i) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h ^= bits;
    h *= 0x100000001b3ULL;
  };
  for (int j = 0; j < x.cols(); ++j) mix(x(i, j));
  mix(y[i]);
  return h;
}

inline int poisson1(Rng& rng) {
  // Inversion for Poisson(1).
  const double u = rng.uniform();
  double cum = std::exp(-1.0);
  double term = cum;
  int k = 0;
  while (u >= cum && k < 30) {
    ++k;
    term /= static_cast<double>(k);
    cum += term;
  }
  return k;
}

// Bootstrap key per row: the content hash folded with the row's rank among
// its duplicates, so equal rows draw independent counts while the keys as a
// multiset stay invariant to row order. Rows must be in canonical
// (lexicographically sorted) order.
inline std::vector<std::uint64_t> bootstrap_keys_sorted(const Matrix& x, const Vector& y) {
  const int n = static_cast<int>(x.rows());
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
  std::uint64_t run_hash = 0;
  std::uint64_t rank = 0;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t h = row_hash(x, y, i);
    bool same = i > 0 && h == run_hash && y[i] == y[i - 1];
    if (same)
      for (int j = 0; j < x.cols() && same; ++j) same = x(i, j) == x(i - 1, j);
    rank = same ? rank + 1 : 0;
    run_hash = h;
    keys[static_cast<std::size_t>(i)] = derive_seed(h, {rank});
  }
  return keys;
}

struct TreeBuilder {
  const Matrix& x;
  const Vector& y;
  const FeatureSchema& schema;
  const ForestHyper& hyper;
  Rng rng;
  RegressionTree tree;

  // rows carry multiplicity from the bootstrap counts
  struct Item {
    int row;
    double weight;
  };

  int build(std::vector<Item>& items) {
    double wsum = 0, ysum = 0, y2sum = 0;
    for (const auto& it : items) {
      wsum += it.weight;
      ysum += it.weight * y[it.row];
      y2sum += it.weight * y[it.row] * y[it.row];
    }
    const double mean = ysum / wsum;
    const double sse = y2sum - ysum * ysum / wsum;
    const int node_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(node_idx)].value = mean;
    if (wsum <= hyper.min_leaf || sse <= 1e-12) return node_idx;

    // mtry candidate features for this node
    const int m = schema.size();
    const int mtry = hyper.resolve_mtry(m);
    std::vector<int> feats(static_cast<std::size_t>(m));
    std::iota(feats.begin(), feats.end(), 0);
    for (int i = 0; i < mtry; ++i) {
      const auto j = i + static_cast<int>(rng.uniform_index(
                             static_cast<std::size_t>(m - i)));
      std::swap(feats[static_cast<std::size_t>(i)], feats[static_cast<std::size_t>(j)]);
    }
    feats.resize(static_cast<std::size_t>(mtry));
    std::sort(feats.begin(), feats.end());

    double best_score = sse - 1e-12;
    int best_feat = -1;
    double best_thr = 0;
    int best_level = 0;

    std::vector<Item> sorted = items;
    for (int f : feats) {
      if (schema.is_categorical(f)) {
        // one level against the rest
        const int levels = schema.levels(f);
        for (int l = 1; l <= levels; ++l) {
          double wl = 0, yl = 0, y2l = 0;
          for (const auto& it : items) {
            if (static_cast<int>(x(it.row, f)) == l) {
              wl += it.weight;
              yl += it.weight * y[it.row];
              y2l += it.weight * y[it.row] * y[it.row];
            }
          }
          const double wr = wsum - wl;
          if (wl <= 0 || wr <= 0) continue;
          const double yr = ysum - yl;
          const double y2r = y2sum - y2l;
          const double score = (y2l - yl * yl / wl) + (y2r - yr * yr / wr);
          if (score < best_score) {
            best_score = score;
            best_feat = f;
            best_level = l;
            best_thr = 0;
          }
        }
      } else {
        std::sort(sorted.begin(), sorted.end(), [&](const Item& a, const Item& b) {
          if (x(a.row, f) != x(b.row, f)) return x(a.row, f) < x(b.row, f);
          return y[a.row] < y[b.row];
        });
        double wl = 0, yl = 0, y2l = 0;
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
          const Item& it = sorted[i];
          wl += it.weight;
          yl += it.weight * y[it.row];
          y2l += it.weight * y[it.row] * y[it.row];
          const double v = x(it.row, f);
          const double vn = x(sorted[i + 1].row, f);
          if (v == vn) continue;
          const double wr = wsum - wl;
          const double yr = ysum - yl;
          const double y2r = y2sum - y2l;
          const double score = (y2l - yl * yl / wl) + (y2r - yr * yr / wr);
          if (score < best_score) {
            best_score = score;
            best_feat = f;
            best_level = 0;
            best_thr = 0.5 * (v + vn);
          }
        }
      }
    }

    if (best_feat < 0) return node_idx;

    std::vector<Item> left_items, right_items;
    for (const auto& it : items) {
      bool go_left;
      if (best_level > 0)
        go_left = static_cast<int>(x(it.row, best_feat)) == best_level;
      else
        go_left = x(it.row, best_feat) <= best_thr;
      (go_left ? left_items : right_items).push_back(it);
    }
    items.clear();
    items.shrink_to_fit();
    const int left = build(left_items);
    const int right = build(right_items);
    ForestNode& node = tree.nodes[static_cast<std::size_t>(node_idx)];
    node.feature = best_feat;
    node.threshold = best_thr;
    node.level = best_level;
    node.left = left;
    node.right = right;
    return node_idx;
  }
};

}  // namespace detail

// Bagged CART with variance-reduction splits. Each tree draws Poisson(1)
// bootstrap counts keyed by (tree seed, row content), which makes the fit
// independent of training row order.
inline ForestModel fit_forest(const Matrix& x, const Vector& y,
                              const FeatureSchema& schema, const ForestHyper& hyper,
                              const Rng& rng) {
  schema.validate();
  if (x.rows() != y.size()) throw InputError("fit_forest: row count mismatch");
  if (x.rows() < 2 * hyper.min_leaf)
    throw InputError("fit_forest: need at least 2*min_leaf rows");
  const int n = static_cast<int>(x.rows());

  // Canonical (lexicographic) row order: accumulation order inside the tree
  // builder then depends only on the multiset of rows, not their input order.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int j = 0; j < x.cols(); ++j)
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    return y[a] < y[b];
  });
  Matrix xs(n, x.cols());
  Vector ys(n);
  for (int i = 0; i < n; ++i) {
    xs.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    ys[i] = y[order[static_cast<std::size_t>(i)]];
  }

  const std::vector<std::uint64_t> keys = detail::bootstrap_keys_sorted(xs, ys);

  ForestModel model;
  model.schema = schema;
  model.trees.resize(static_cast<std::size_t>(hyper.trees));
  for (int t = 0; t < hyper.trees; ++t) {
    const std::uint64_t tree_seed =
        derive_seed(rng.seed(), {stream_tag("forest-tree"), static_cast<std::uint64_t>(t)});
    std::vector<detail::TreeBuilder::Item> items;
    items.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Rng row_rng(derive_seed(tree_seed, {keys[static_cast<std::size_t>(i)]}));
      const int count = detail::poisson1(row_rng);
      if (count > 0) items.push_back({i, static_cast<double>(count)});
    }
    if (items.empty()) items.push_back({0, 1.0});
    detail::TreeBuilder builder{xs, ys, schema, hyper,
                                Rng(derive_seed(tree_seed, {stream_tag("mtry")})), {}};
    builder.tree.seed = tree_seed;
    builder.build(items);
    model.trees[static_cast<std::size_t>(t)] = std::move(builder.tree);
  }
  return model;
}

// Mean squared error over rows that are out of bag for each tree.
inline double forest_oob_mse(const ForestModel& model, const Matrix& x, const Vector& y) {
  const int n = static_cast<int>(x.rows());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int j = 0; j < x.cols(); ++j)
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    return y[a] < y[b];
  });
  Matrix xs(n, x.cols());
  Vector ys(n);
  for (int i = 0; i < n; ++i) {
    xs.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    ys[i] = y[order[static_cast<std::size_t>(i)]];
  }
  const std::vector<std::uint64_t> keys = detail::bootstrap_keys_sorted(xs, ys);

  std::vector<double> pred_sum(static_cast<std::size_t>(n), 0.0);
  std::vector<int> pred_count(static_cast<std::size_t>(n), 0);
  for (const auto& tree : model.trees) {
    for (int i = 0; i < n; ++i) {
      Rng row_rng(derive_seed(tree.seed, {keys[static_cast<std::size_t>(i)]}));
      if (detail::poisson1(row_rng) == 0) {
        pred_sum[static_cast<std::size_t>(i)] += tree.predict(xs.row(i).transpose());
        pred_count[static_cast<std::size_t>(i)] += 1;
      }
    }
  }
  double mse = 0;
  int used = 0;
  for (int i = 0; i < n; ++i) {
    if (pred_count[static_cast<std::size_t>(i)] == 0) continue;
    const double p = pred_sum[static_cast<std::size_t>(i)] /
                     pred_count[static_cast<std::size_t>(i)];
    mse += (p - ys[i]) * (p - ys[i]);
    ++used;
  }
  if (used == 0) throw NumericError("forest_oob_mse: no out-of-bag rows");
  return mse / used;
}

}  // namespace condshap

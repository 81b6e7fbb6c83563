#pragma once

// Shapley value machinery: the exact weighted-average formula over the power
// set, size-stratified coalition sampling, Monte Carlo contribution estimates,
// and a constrained weighted least-squares solver for sampled coalitions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "condshap/conditioners.hpp"
#include "condshap/predictors.hpp"
#include "condshap/rng.hpp"
#include "condshap/types.hpp"

namespace condshap {

inline constexpr int kMaxExactM = 20;
inline constexpr int kDefaultMcSamples = 250;  // K, a sufficient precision/cost trade-off

namespace detail {

inline double factorial(int n) {
  double f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace detail

// |S|! (M - |S| - 1)! / M!  -- the weight of one coalition in the Shapley
// formula; exact integer arithmetic fits a double for M <= 20.
inline double shapley_weight(int s, int m) {
  if (s < 0 || s >= m) throw std::domain_error("shapley_weight: need 0 <= s < M");
  if (m <= kMaxExactM)
    return detail::factorial(s) * detail::factorial(m - s - 1) / detail::factorial(m);
  return std::exp(std::lgamma(s + 1.0) + std::lgamma(static_cast<double>(m - s)) -
                  std::lgamma(m + 1.0));
}

// KernelSHAP weight of one coalition: (M - 1) / (C(M,s) s (M - s)); computed in
// log space so large M stays finite. Only relative values matter.
inline double kernelshap_weight(int s, int m) {
  if (s < 1 || s >= m) throw std::domain_error("kernelshap_weight: need 1 <= s < M");
  const double log_choose =
      std::lgamma(m + 1.0) - std::lgamma(s + 1.0) - std::lgamma(static_cast<double>(m - s) + 1.0);
  return std::exp(std::log(static_cast<double>(m - 1)) - log_choose -
                  std::log(static_cast<double>(s)) -
                  std::log(static_cast<double>(m - s)));
}

struct ShapleyExplanation {
  double phi0 = 0;
  Vector phi;
};

// Contribution values for one instance: v over proper coalitions, v(empty) =
// phi0 and v(full) = f(x) kept separately.
struct CoalitionValueTable {
  int m = 0;
  int instance_id = 0;
  double phi0 = 0;
  double fx = 0;
  std::vector<std::pair<Coalition, double>> values;  // sorted by bits

  void sort() {
    std::sort(values.begin(), values.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  double at(const Coalition& s) const {
    if (s.is_empty()) return phi0;
    if (s.is_full()) return fx;
    auto it = std::lower_bound(values.begin(), values.end(), s,
                               [](const auto& kv, const Coalition& key) {
                                 return kv.first < key;
                               });
    if (it == values.end() || !(it->first == s))
      throw InputError("coalition table: missing coalition");
    return it->second;
  }

  bool complete() const {
    return m <= kMaxExactM &&
           values.size() == (1ULL << m) - 2 &&
           std::is_sorted(values.begin(), values.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
  }
};

// Exact Shapley values over the full power set.
inline ShapleyExplanation exact_shapley(const CoalitionValueTable& table, int m) {
  if (m > kMaxExactM)
    throw InputError("exact_shapley: M > " + std::to_string(kMaxExactM));
  if (table.m != m) throw InputError("exact_shapley: table arity mismatch");

  // Dense copy indexed by coalition bits.
  const std::uint64_t full = (1ULL << m) - 1;
  std::vector<double> v(static_cast<std::size_t>(full) + 1, 0.0);
  v[0] = table.phi0;
  v[static_cast<std::size_t>(full)] = table.fx;
  if (table.values.size() != full - 1)
    throw InputError("exact_shapley: table is incomplete");
  for (const auto& [c, val] : table.values) {
    if (c.is_empty() || c.is_full())
      throw InputError("exact_shapley: table holds an edge coalition");
    v[static_cast<std::size_t>(c.bits())] = val;
  }

  std::vector<double> weight_by_size(static_cast<std::size_t>(m), 0.0);
  for (int s = 0; s < m; ++s) weight_by_size[static_cast<std::size_t>(s)] = shapley_weight(s, m);

  ShapleyExplanation out;
  out.phi0 = table.phi0;
  out.phi = Vector::Zero(m);
  for (std::uint64_t bits = 0; bits <= full; ++bits) {
    const int s = __builtin_popcountll(bits);
    if (s == m) continue;
    const double w = weight_by_size[static_cast<std::size_t>(s)];
    const double base = v[static_cast<std::size_t>(bits)];
    for (int j = 0; j < m; ++j) {
      if ((bits >> j) & 1ULL) continue;
      out.phi[j] += w * (v[static_cast<std::size_t>(bits | (1ULL << j))] - base);
    }
  }
  return out;
}

// Multiset of proper, nonempty coalitions with draw counts.
struct CoalitionSample {
  int m = 0;
  long long n_draws = 0;
  std::vector<std::pair<Coalition, long long>> counts;  // sorted by bits

  std::size_t distinct() const { return counts.size(); }

  bool covers_power_set() const {
    return m <= kMaxExactM && counts.size() == (1ULL << m) - 2;
  }
};

// Size-stratified sampling with replacement: the size is drawn with the
// normalized per-size kernel mass, proportional to (M-1)/(s (M-s)) (the
// KernelSHAP weight summed over the C(M,s) subsets of size s), then a uniform
// subset of that size.
inline CoalitionSample sample_coalitions(int m, long long n_draws, Rng& rng) {
  if (m < 2) throw InputError("sample_coalitions: need M >= 2");
  if (n_draws < 1) throw InputError("sample_coalitions: need N_S >= 1");
  std::vector<double> cum(static_cast<std::size_t>(m - 1), 0.0);
  double total = 0;
  for (int s = 1; s < m; ++s) {
    total += 1.0 / (static_cast<double>(s) * static_cast<double>(m - s));
    cum[static_cast<std::size_t>(s - 1)] = total;
  }
  std::map<std::uint64_t, long long> counts;
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (long long d = 0; d < n_draws; ++d) {
    const double u = rng.uniform() * total;
    int size = m - 1;
    for (int s = 1; s < m; ++s) {
      if (u < cum[static_cast<std::size_t>(s - 1)]) {
        size = s;
        break;
      }
    }
    std::iota(idx.begin(), idx.end(), 0);
    std::uint64_t bits = 0;
    for (int i = 0; i < size; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     rng.uniform_index(static_cast<std::size_t>(m - i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      bits |= 1ULL << idx[static_cast<std::size_t>(i)];
    }
    counts[bits] += 1;
  }
  CoalitionSample sample;
  sample.m = m;
  sample.n_draws = n_draws;
  sample.counts.reserve(counts.size());
  for (const auto& [bits, count] : counts)
    sample.counts.emplace_back(Coalition(bits, m), count);
  return sample;
}

// Monte Carlo estimate of the contribution v(S): the mean model prediction
// over K conditional completions of x.
inline double estimate_v(const Conditioner& conditioner, const Predictor& predictor,
                         const Vector& x, const Coalition& observed, int k, Rng& rng) {
  if (observed.is_empty() || observed.is_full())
    throw InputError("estimate_v: edge coalitions are handled by the caller");
  const Matrix draws = conditioner.draw(x, observed, k, rng);
  const auto unobs = observed.complement().members();
  Vector full = x;
  double sum = 0;
  for (int i = 0; i < k; ++i) {
    for (std::size_t c = 0; c < unobs.size(); ++c)
      full[unobs[c]] = draws(i, static_cast<Eigen::Index>(c));
    sum += predictor.predict(full);
  }
  return sum / static_cast<double>(k);
}

// Constrained weighted least squares: fit v(S) ~ phi0 + sum_{j in S} phi_j
// with KernelSHAP weights over the distinct coalitions, under the efficiency
// constraint sum phi = fx - phi0 (solved through the KKT system). On the full
// power set this reproduces the exact Shapley values.
inline ShapleyExplanation kernelshap_wls(const CoalitionSample& sample,
                                         const std::vector<double>& v_hat, double phi0,
                                         double fx) {
  const int m = sample.m;
  const auto n = sample.counts.size();
  if (v_hat.size() != n) throw InputError("kernelshap_wls: v arity mismatch");
  if (n == 0) throw InputError("kernelshap_wls: empty coalition sample");

  // A feature that never varies across the sample makes phi unidentifiable.
  for (int j = 0; j < m; ++j) {
    std::size_t present = 0;
    for (const auto& [c, count] : sample.counts) {
      (void)count;
      if (c.contains(j)) ++present;
    }
    if (present == 0)
      throw EstimationError("kernelshap_wls: feature " + std::to_string(j + 1) +
                            " appears in no sampled coalition");
    if (present == n)
      throw EstimationError("kernelshap_wls: feature " + std::to_string(j + 1) +
                            " appears in every sampled coalition");
  }

  Matrix ata = Matrix::Zero(m + 1, m + 1);
  Vector atb = Vector::Zero(m + 1);
  double max_w = 0;
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = kernelshap_weight(sample.counts[i].first.size(), m);
    max_w = std::max(max_w, weights[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Coalition& c = sample.counts[i].first;
    const double w = weights[i] / max_w;
    const double b = v_hat[i] - phi0;
    const auto members = c.members();
    for (int a : members) {
      for (int b2 : members) ata(a, b2) += w;
      atb[a] += w * b;
    }
  }
  for (int j = 0; j < m; ++j) {
    ata(j, m) = 0.5;
    ata(m, j) = 0.5;  // constraint rows: gradient of lambda * (1'phi - c)
  }
  atb[m] = 0.5 * (fx - phi0);

  Eigen::FullPivLU<Matrix> lu(ata);
  if (!lu.isInvertible())
    throw EstimationError("kernelshap_wls: singular system (collinear coalition pattern)");
  const Vector sol = lu.solve(atb);

  ShapleyExplanation out;
  out.phi0 = phi0;
  out.phi = sol.head(m);
  // Re-impose efficiency exactly against roundoff.
  const double gap = (fx - phi0) - out.phi.sum();
  out.phi.array() += gap / static_cast<double>(m);
  return out;
}

// --- Explanation pipeline -----------------------------------------------------

struct CoalitionPlan {
  bool exact = true;
  CoalitionSample sample;  // used when exact is false

  static CoalitionPlan make_exact() { return CoalitionPlan{}; }
  static CoalitionPlan sampled(CoalitionSample s) {
    CoalitionPlan plan;
    plan.exact = false;
    plan.sample = std::move(s);
    return plan;
  }
};

struct InstanceExplanation {
  ShapleyExplanation explanation;
  CoalitionValueTable table;
};

namespace detail {

constexpr std::uint64_t kInstanceStream = stream_tag("explain-instance");
constexpr std::uint64_t kCoalitionStream = stream_tag("explain-coalition");

}  // namespace detail

// Explains one instance: fills the value table with Monte Carlo estimates and
// solves for the Shapley values. Coalition streams are derived from the
// instance stream and the coalition bits, so evaluation order is irrelevant.
inline InstanceExplanation explain_instance(const Predictor& predictor,
                                            const Conditioner& conditioner,
                                            const Vector& x, const CoalitionPlan& plan,
                                            int k, double phi0, const Rng& instance_rng,
                                            int instance_id = 0) {
  const int m = static_cast<int>(x.size());
  InstanceExplanation out;
  out.table.m = m;
  out.table.instance_id = instance_id;
  out.table.phi0 = phi0;
  out.table.fx = predictor.predict(x);

  auto v_for = [&](const Coalition& s) {
    Rng rng = instance_rng.child(detail::kCoalitionStream, s.bits());
    return estimate_v(conditioner, predictor, x, s, k, rng);
  };

  if (plan.exact) {
    if (m > kMaxExactM)
      throw InputError("explain: exact plan needs M <= " + std::to_string(kMaxExactM) +
                       "; use a sampled plan");
    const std::uint64_t full = (1ULL << m) - 1;
    out.table.values.reserve(full - 1);
    for (std::uint64_t bits = 1; bits < full; ++bits) {
      const Coalition s(bits, m);
      out.table.values.emplace_back(s, v_for(s));
    }
    out.explanation = exact_shapley(out.table, m);
  } else {
    if (plan.sample.m != m) throw InputError("explain: plan arity mismatch");
    std::vector<double> v_hat;
    v_hat.reserve(plan.sample.counts.size());
    out.table.values.reserve(plan.sample.counts.size());
    for (const auto& [s, count] : plan.sample.counts) {
      (void)count;
      const double v = v_for(s);
      v_hat.push_back(v);
      out.table.values.emplace_back(s, v);
    }
    out.explanation = kernelshap_wls(plan.sample, v_hat, phi0, out.table.fx);
  }
  return out;
}

// Batch explanation with one child stream per instance.
inline std::vector<InstanceExplanation> explain(const Predictor& predictor,
                                                const Conditioner& conditioner,
                                                const Matrix& x_rows,
                                                const CoalitionPlan& plan, int k,
                                                double phi0, const Rng& rng) {
  std::vector<InstanceExplanation> out(static_cast<std::size_t>(x_rows.rows()));
  for (Eigen::Index i = 0; i < x_rows.rows(); ++i) {
    const Rng instance_rng =
        rng.child(detail::kInstanceStream, static_cast<std::uint64_t>(i));
    out[static_cast<std::size_t>(i)] =
        explain_instance(predictor, conditioner, x_rows.row(i).transpose(), plan, k,
                         phi0, instance_rng, static_cast<int>(i));
  }
  return out;
}

}  // namespace condshap

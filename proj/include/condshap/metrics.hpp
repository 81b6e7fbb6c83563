#pragma once

// Evaluation criteria comparing estimated explanations and contribution
// functions against truth (EC1, EC2) or against the model predictions (EC3).

#include <limits>
#include <string>
#include <vector>

#include "condshap/shapley.hpp"
#include "condshap/types.hpp"

namespace condshap {

// Mean absolute error of Shapley values, averaged over instances and features.
inline double ec1(const std::vector<ShapleyExplanation>& truth,
                  const std::vector<ShapleyExplanation>& estimate) {
  if (truth.size() != estimate.size() || truth.empty())
    throw InputError("ec1: instance sets must match and be nonempty");
  double total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].phi.size() != estimate[i].phi.size())
      throw InputError("ec1: feature arity mismatch");
    total += (truth[i].phi - estimate[i].phi).cwiseAbs().mean();
  }
  return total / static_cast<double>(truth.size());
}

// EC1 with instance masses replacing the 1/N_test factor; weights must be
// nonnegative and are normalized to sum to one.
inline double ec1_weighted(const std::vector<ShapleyExplanation>& truth,
                           const std::vector<ShapleyExplanation>& estimate,
                           const std::vector<double>& weights) {
  if (truth.size() != estimate.size() || truth.size() != weights.size() || truth.empty())
    throw InputError("ec1_weighted: arity mismatch");
  double wsum = 0;
  for (double w : weights) {
    if (w < 0) throw InputError("ec1_weighted: negative weight");
    wsum += w;
  }
  if (!(wsum > 0)) throw InputError("ec1_weighted: weights sum to zero");
  double total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].phi.size() != estimate[i].phi.size())
      throw InputError("ec1_weighted: feature arity mismatch");
    total += weights[i] / wsum * (truth[i].phi - estimate[i].phi).cwiseAbs().mean();
  }
  return total;
}

// Coalitions over which EC2/EC3 average, with multiplicities. Excludes the
// empty and grand coalitions.
struct CoalitionSet {
  std::vector<std::pair<Coalition, double>> entries;

  static CoalitionSet all_proper(int m) {
    CoalitionSet set;
    const std::uint64_t full = (1ULL << m) - 1;
    set.entries.reserve(full - 1);
    for (std::uint64_t bits = 1; bits < full; ++bits)
      set.entries.emplace_back(Coalition(bits, m), 1.0);
    return set;
  }

  static CoalitionSet from_sample(const CoalitionSample& sample) {
    CoalitionSet set;
    set.entries.reserve(sample.counts.size());
    for (const auto& [c, count] : sample.counts)
      set.entries.emplace_back(c, static_cast<double>(count));
    return set;
  }

  double total_weight() const {
    double t = 0;
    for (const auto& [c, w] : entries) {
      (void)c;
      t += w;
    }
    return t;
  }
};

// Mean squared error between true and estimated contribution functions,
// multiplicity-weighted over the coalition set.
inline double ec2(const std::vector<CoalitionValueTable>& truth,
                  const std::vector<CoalitionValueTable>& estimate,
                  const CoalitionSet& coalitions) {
  if (truth.size() != estimate.size() || truth.empty())
    throw InputError("ec2: instance sets must match and be nonempty");
  if (coalitions.entries.empty()) throw InputError("ec2: empty coalition set");
  const double wtot = coalitions.total_weight();
  double total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double inner = 0;
    for (const auto& [s, w] : coalitions.entries) {
      if (s.is_empty() || s.is_full())
        throw InputError("ec2: coalition set must exclude the edge coalitions");
      const double d = truth[i].at(s) - estimate[i].at(s);
      inner += w * d * d;
    }
    total += inner / wtot;
  }
  return total / static_cast<double>(truth.size());
}

// Truth-free expected-prediction-error criterion against f(x).
inline double ec3(const std::vector<double>& predictions,
                  const std::vector<CoalitionValueTable>& estimate,
                  const CoalitionSet& coalitions) {
  if (predictions.size() != estimate.size() || estimate.empty())
    throw InputError("ec3: instance sets must match and be nonempty");
  if (coalitions.entries.empty()) throw InputError("ec3: empty coalition set");
  const double wtot = coalitions.total_weight();
  double total = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    double inner = 0;
    for (const auto& [s, w] : coalitions.entries) {
      if (s.is_empty() || s.is_full())
        throw InputError("ec3: coalition set must exclude the edge coalitions");
      const double d = predictions[i] - estimate[i].at(s);
      inner += w * d * d;
    }
    total += inner / wtot;
  }
  return total / static_cast<double>(estimate.size());
}

struct EvalReport {
  std::string method;
  int repetition = 0;
  double ec1 = std::numeric_limits<double>::quiet_NaN();
  double ec2 = std::numeric_limits<double>::quiet_NaN();
  double ec3 = std::numeric_limits<double>::quiet_NaN();
  int n_test = 0;
  long long n_coalitions = 0;
  double train_seconds = 0;
  double explain_seconds = 0;
};

}  // namespace condshap

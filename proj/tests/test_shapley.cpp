#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <map>

#include "condshap/predictors.hpp"
#include "condshap/shapley.hpp"

using namespace condshap;

namespace {

CoalitionValueTable make_table(int m, const std::function<double(std::uint64_t)>& v) {
  CoalitionValueTable t;
  t.m = m;
  t.phi0 = v(0);
  const std::uint64_t full = (1ULL << m) - 1;
  t.fx = v(full);
  for (std::uint64_t bits = 1; bits < full; ++bits)
    t.values.emplace_back(Coalition(bits, m), v(bits));
  return t;
}

// Independent oracle: φ_j as the average marginal contribution over all M!
// orderings.
Vector permutation_shapley(const CoalitionValueTable& t, int m) {
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  Vector phi = Vector::Zero(m);
  long long n_perm = 0;
  do {
    std::uint64_t bits = 0;
    for (int j : perm) {
      const double before = bits == 0 ? t.phi0 : t.at(Coalition(bits, m));
      bits |= 1ULL << j;
      const double after = bits == (1ULL << m) - 1 ? t.fx : t.at(Coalition(bits, m));
      phi[j] += after - before;
    }
    ++n_perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return phi / static_cast<double>(n_perm);
}

}  // namespace

TEST_CASE("shapley_weight matches the formula") {
  CHECK_THAT(shapley_weight(0, 3), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
  CHECK_THAT(shapley_weight(1, 3), Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-15));
  CHECK_THROWS_AS(shapley_weight(3, 3), std::domain_error);

  // Sum over all S not containing a fixed feature equals one (M = 8).
  const int m = 8;
  double total = 0;
  for (std::uint64_t bits = 0; bits < (1ULL << m); ++bits) {
    if (bits & 1ULL) continue;  // coalitions not containing feature 0
    total += shapley_weight(__builtin_popcountll(bits), m);
  }
  CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("exact_shapley on constructed games") {
  SECTION("v(S) = |S| gives equal unit payouts") {
    const auto t = make_table(3, [](std::uint64_t b) {
      return static_cast<double>(__builtin_popcountll(b));
    });
    const auto e = exact_shapley(t, 3);
    for (int j = 0; j < 3; ++j)
      CHECK_THAT(e.phi[j], Catch::Matchers::WithinAbs(1.0, 1e-14));
  }
  SECTION("v(S) = 1(1 in S) pays only player one") {
    const auto t = make_table(3, [](std::uint64_t b) { return (b & 1ULL) ? 1.0 : 0.0; });
    const auto e = exact_shapley(t, 3);
    CHECK_THAT(e.phi[0], Catch::Matchers::WithinAbs(1.0, 1e-14));
    CHECK_THAT(e.phi[1], Catch::Matchers::WithinAbs(0.0, 1e-14));
    CHECK_THAT(e.phi[2], Catch::Matchers::WithinAbs(0.0, 1e-14));
  }
  SECTION("random M=4 tables match the permutation oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
      std::map<std::uint64_t, double> vals;
      const auto t = make_table(4, [&](std::uint64_t b) {
        auto it = vals.find(b);
        if (it == vals.end()) it = vals.emplace(b, rng.normal() * 3.0).first;
        return it->second;
      });
      const auto fast = exact_shapley(t, 4);
      const Vector oracle = permutation_shapley(t, 4);
      CHECK((fast.phi - oracle).lpNorm<Eigen::Infinity>() < 1e-12);
      CHECK_THAT(fast.phi.sum(), Catch::Matchers::WithinAbs(t.fx - t.phi0, 1e-10));
    }
  }
}

TEST_CASE("shapley axioms on constructed tables") {
  Rng rng(77);
  SECTION("dummy feature gets zero") {
    // Feature 3 never changes the value.
    const auto t = make_table(4, [](std::uint64_t b) {
      const std::uint64_t without = b & ~(1ULL << 3);
      return static_cast<double>(__builtin_popcountll(without)) * 1.7 +
             ((without & 1ULL) ? 0.5 : 0.0);
    });
    const auto e = exact_shapley(t, 4);
    CHECK(std::fabs(e.phi[3]) < 1e-12);
  }
  SECTION("symmetry: exchangeable features earn the same") {
    // Value depends only on whether each of features 0/1 is present,
    // symmetrically, plus the size.
    const auto t = make_table(4, [](std::uint64_t b) {
      const int count01 = static_cast<int>((b & 1ULL) + ((b >> 1) & 1ULL));
      return 2.0 * count01 + 0.3 * __builtin_popcountll(b);
    });
    const auto e = exact_shapley(t, 4);
    CHECK_THAT(e.phi[0], Catch::Matchers::WithinAbs(e.phi[1], 1e-12));
  }
  SECTION("linearity") {
    std::map<std::uint64_t, double> v1, v2;
    auto fill = [&rng](std::map<std::uint64_t, double>& v) {
      for (std::uint64_t b = 0; b < 16; ++b) v[b] = rng.normal();
    };
    fill(v1);
    fill(v2);
    const double c1 = 2.5, c2 = -1.25;
    const auto t1 = make_table(4, [&](std::uint64_t b) { return v1[b]; });
    const auto t2 = make_table(4, [&](std::uint64_t b) { return v2[b]; });
    const auto tc = make_table(4, [&](std::uint64_t b) { return c1 * v1[b] + c2 * v2[b]; });
    const auto e1 = exact_shapley(t1, 4);
    const auto e2 = exact_shapley(t2, 4);
    const auto ec = exact_shapley(tc, 4);
    CHECK((ec.phi - (c1 * e1.phi + c2 * e2.phi)).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SECTION("missing coalition is an input error") {
    auto t = make_table(3, [](std::uint64_t b) { return static_cast<double>(b); });
    t.values.pop_back();
    CHECK_THROWS_AS(exact_shapley(t, 3), InputError);
  }
}

TEST_CASE("sample_coalitions is size-stratified by the kernel") {
  Rng rng(31);
  const long long n = 100000;
  auto sample = sample_coalitions(3, n, rng);
  long long size1 = 0, size2 = 0;
  for (const auto& [c, count] : sample.counts) {
    CHECK(!c.is_empty());
    CHECK(!c.is_full());
    (c.size() == 1 ? size1 : size2) += count;
  }
  CHECK(size1 + size2 == n);
  // Sizes 1 and 2 each carry half of the kernel mass for M = 3.
  CHECK_THAT(static_cast<double>(size1) / n, Catch::Matchers::WithinAbs(0.5, 0.01));

  Rng a(5), b(5);
  const auto s1 = sample_coalitions(6, 500, a);
  const auto s2 = sample_coalitions(6, 500, b);
  REQUIRE(s1.counts.size() == s2.counts.size());
  for (std::size_t i = 0; i < s1.counts.size(); ++i) {
    CHECK(s1.counts[i].first == s2.counts[i].first);
    CHECK(s1.counts[i].second == s2.counts[i].second);
  }
}

namespace {

struct ConstantPredictor : Predictor {
  double c;
  explicit ConstantPredictor(double v) : c(v) {}
  double predict(const Vector&) const override { return c; }
};

}  // namespace

TEST_CASE("estimate_v") {
  SECTION("constant predictor gives the constant") {
    Matrix training(4, 3);
    training << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    IndependenceConditioner cond(training);
    ConstantPredictor pred(4.25);
    Rng rng(1);
    Vector x(3);
    x << 0, 0, 0;
    CHECK(estimate_v(cond, pred, x, Coalition(0b001, 3), 25, rng) == 4.25);
  }
  SECTION("edge coalitions are rejected") {
    Matrix training(2, 2);
    training << 1, 2, 3, 4;
    IndependenceConditioner cond(training);
    ConstantPredictor pred(0);
    Rng rng(1);
    Vector x(2);
    x << 0, 0;
    CHECK_THROWS_AS(estimate_v(cond, pred, x, Coalition::empty(2), 5, rng), InputError);
    CHECK_THROWS_AS(estimate_v(cond, pred, x, Coalition::full(2), 5, rng), InputError);
  }
}

TEST_CASE("estimate_v tracks the analytic conditional mean") {
  const double rho = 0.6;
  GaussianFit fit;
  fit.mean = Vector::Zero(2);
  fit.cov = Matrix::Identity(2, 2);
  fit.cov(0, 1) = fit.cov(1, 0) = rho;
  GaussianConditioner cond(fit);
  LinearModel f;
  f.schema = FeatureSchema::continuous(2);
  f.alpha = 1;
  f.gamma = Vector(2);
  f.gamma << 2, -3;
  f.beta.resize(2);
  Vector x(2);
  x << 1.5, -0.25;
  Rng rng(99);
  const int k = 10000;
  // Observe feature 1: E[v] = 1 + 2*1.5 - 3*(rho*1.5).
  const double v = estimate_v(cond, f, x, Coalition(0b01, 2), k, rng);
  const double expect = 1.0 + 2.0 * 1.5 - 3.0 * (rho * 1.5);
  const double mc_sd = 3.0 * std::sqrt(1 - rho * rho) / std::sqrt(static_cast<double>(k));
  CHECK(std::fabs(v - expect) < 3.0 * mc_sd);
}

TEST_CASE("kernelshap_wls") {
  SECTION("full power set reproduces exact_shapley") {
    Rng rng(2023);
    for (int trial = 0; trial < 10; ++trial) {
      const int m = 4 + static_cast<int>(rng.uniform_index(3));  // 4..6
      std::map<std::uint64_t, double> vals;
      const auto t = make_table(m, [&](std::uint64_t b) {
        auto it = vals.find(b);
        if (it == vals.end()) it = vals.emplace(b, rng.normal() * 2.0).first;
        return it->second;
      });
      const auto exact = exact_shapley(t, m);

      CoalitionSample sample;
      sample.m = m;
      std::vector<double> v_hat;
      for (const auto& [c, v] : t.values) {
        sample.counts.emplace_back(c, 1);
        v_hat.push_back(v);
      }
      sample.n_draws = static_cast<long long>(sample.counts.size());
      const auto wls = kernelshap_wls(sample, v_hat, t.phi0, t.fx);
      CHECK((wls.phi - exact.phi).lpNorm<Eigen::Infinity>() < 1e-8);
      CHECK_THAT(wls.phi.sum() + wls.phi0, Catch::Matchers::WithinAbs(t.fx, 1e-10));
    }
  }
  SECTION("linear-in-membership values are recovered exactly") {
    const int m = 5;
    Rng rng(8);
    Vector c(m);
    for (int j = 0; j < m; ++j) c[j] = rng.normal();
    const double phi0 = 0.7;
    const double fx = phi0 + c.sum();
    Rng srng(9);
    auto sample = sample_coalitions(m, 60, srng);
    std::vector<double> v_hat;
    for (const auto& [s, count] : sample.counts) {
      (void)count;
      double v = phi0;
      for (int j : s.members()) v += c[j];
      v_hat.push_back(v);
    }
    const auto wls = kernelshap_wls(sample, v_hat, phi0, fx);
    CHECK((wls.phi - c).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  SECTION("a feature missing from every coalition is named in the error") {
    CoalitionSample sample;
    sample.m = 3;
    sample.counts.emplace_back(Coalition(0b001, 3), 2);
    sample.counts.emplace_back(Coalition(0b010, 3), 1);
    sample.n_draws = 3;
    std::vector<double> v = {1.0, 2.0};
    CHECK_THROWS_WITH(kernelshap_wls(sample, v, 0, 3),
                      Catch::Matchers::ContainsSubstring("feature 3"));
  }
}

TEST_CASE("explain pipeline") {
  // Independent features, linear model: phi_j = gamma_j (x_j - mean_j).
  const int m = 3;
  Rng data_rng(5150);
  Matrix training(4000, m);
  for (int i = 0; i < training.rows(); ++i)
    for (int j = 0; j < m; ++j) training(i, j) = data_rng.normal();
  IndependenceConditioner cond(training);
  LinearModel f;
  f.schema = FeatureSchema::continuous(m);
  f.alpha = 0.5;
  f.gamma = Vector(m);
  f.gamma << 1.0, -2.0, 0.5;
  f.beta.resize(m);

  Matrix xs(2, m);
  xs << 1.0, 0.5, -1.0, -0.3, 1.2, 2.0;
  const double phi0 = f.alpha;  // feature means are ~0

  Rng rng(606);
  const auto res = explain(f, cond, xs, CoalitionPlan::make_exact(), 4000, phi0, rng);
  REQUIRE(res.size() == 2);
  for (std::size_t i = 0; i < res.size(); ++i) {
    for (int j = 0; j < m; ++j) {
      const double expect = f.gamma[j] * xs(static_cast<Eigen::Index>(i), j);
      CHECK_THAT(res[i].explanation.phi[j], Catch::Matchers::WithinAbs(expect, 0.15));
    }
    CHECK_THAT(res[i].explanation.phi.sum() + phi0,
               Catch::Matchers::WithinAbs(f.predict(xs.row(static_cast<Eigen::Index>(i)).transpose()),
                                          1e-8));
  }

  SECTION("instance order cannot matter") {
    Matrix flipped(2, m);
    flipped.row(0) = xs.row(1);
    flipped.row(1) = xs.row(0);
    // Explaining instance k of `xs` uses stream child(k); compare against
    // explaining the same row placed at the same index.
    Rng rng2(606);
    const auto res2 = explain(f, cond, xs, CoalitionPlan::make_exact(), 100, phi0, rng2);
    Rng rng3(606);
    const auto res3 = explain(f, cond, xs, CoalitionPlan::make_exact(), 100, phi0, rng3);
    for (int i = 0; i < 2; ++i)
      CHECK((res2[static_cast<std::size_t>(i)].explanation.phi -
             res3[static_cast<std::size_t>(i)].explanation.phi)
                .lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("a sampled plan covering the power set matches the exact plan") {
    CoalitionSample sample;
    sample.m = m;
    const std::uint64_t full = (1ULL << m) - 1;
    for (std::uint64_t bits = 1; bits < full; ++bits)
      sample.counts.emplace_back(Coalition(bits, m), 1);
    sample.n_draws = static_cast<long long>(sample.counts.size());

    Rng rng_a(77);
    const auto exact_res =
        explain(f, cond, xs, CoalitionPlan::make_exact(), 500, phi0, rng_a);
    Rng rng_b(77);
    const auto sampled_res =
        explain(f, cond, xs, CoalitionPlan::sampled(sample), 500, phi0, rng_b);
    for (std::size_t i = 0; i < exact_res.size(); ++i)
      CHECK((exact_res[i].explanation.phi - sampled_res[i].explanation.phi)
                .lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

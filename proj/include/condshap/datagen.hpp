#pragma once

// Synthetic data with analytic ground truth: a heavy-tailed multivariate Burr
// generator with a nonlinear heteroscedastic response, an equicorrelated
// Gaussian generator with optional discretization into categories, and the
// exact conditional-expectation oracles built on Gaussian rectangle
// probabilities and 1-D quadrature.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "condshap/conditioners.hpp"
#include "condshap/predictors.hpp"
#include "condshap/rng.hpp"
#include "condshap/shapley.hpp"
#include "condshap/types.hpp"

namespace condshap {

// --- Burr study ---------------------------------------------------------------

struct BurrSpec {
  BurrParams params;
  Vector coeffs;      // c_1..c_{3M/5} for the response
  bool noise = true;

  int m() const { return params.m(); }
};

// Marginal CDF of one Burr coordinate: 1 - (1 + r x^b)^(-kappa).
inline double burr_marginal_cdf(double x, double kappa, double b, double r) {
  if (x < 0) throw std::domain_error("burr_marginal_cdf: x must be >= 0");
  return 1.0 - std::pow(1.0 + r * std::pow(x, b), -kappa);
}

// Parameter grids: r from {1, 1.25, .., 5}, b from {2, 2.25, .., 6}, response
// coefficients from {0.1, 0.2, .., 2}; all sampled with replacement.
inline BurrSpec make_burr_spec(int m, double kappa, Rng& rng, bool noise = true) {
  if (m < 5) throw ConfigError("burr spec: need M >= 5");
  BurrSpec spec;
  spec.noise = noise;
  spec.params.kappa = kappa;
  spec.params.b.resize(m);
  spec.params.r.resize(m);
  for (int j = 0; j < m; ++j) {
    spec.params.r[j] = 1.0 + 0.25 * static_cast<double>(rng.uniform_index(17));
    spec.params.b[j] = 2.0 + 0.25 * static_cast<double>(rng.uniform_index(17));
  }
  const int blocks = m / 5;
  spec.coeffs.resize(3 * blocks);
  for (int l = 0; l < 3 * blocks; ++l)
    spec.coeffs[l] = 0.1 * static_cast<double>(1 + rng.uniform_index(20));
  return spec;
}

// Response over blocks of five uniformized features,
//   y = sum_k [ sin(pi c_{3k+1} u_{5k+1} u_{5k+2})
//               + c_{3k+2} u_{5k+3} exp(c_{3k+3} u_{5k+4} u_{5k+5}) ] + noise,
// where u_j = F_j(x_j). The heteroscedastic noise scales a standard normal by
// the mean of M/5 randomly picked u values. Features beyond the last complete
// block of five enter only through the dependence structure.
inline Dataset gen_burr_dataset(const BurrSpec& spec, int n, Rng& rng) {
  spec.params.validate();
  const int m = spec.m();
  const int blocks = m / 5;
  if (blocks < 1) throw ConfigError("gen_burr_dataset: need M >= 5");
  if (spec.coeffs.size() < 3 * blocks)
    throw ConfigError("gen_burr_dataset: need 3M/5 response coefficients");

  Dataset data;
  data.schema = FeatureSchema::continuous(m);
  data.x = burr_draw(spec.params, n, rng);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    Vector u(m);
    for (int j = 0; j < m; ++j)
      u[j] = burr_marginal_cdf(data.x(i, j), spec.params.kappa, spec.params.b[j],
                               spec.params.r[j]);
    double y = 0;
    for (int k = 0; k < blocks; ++k) {
      const double c1 = spec.coeffs[3 * k];
      const double c2 = spec.coeffs[3 * k + 1];
      const double c3 = spec.coeffs[3 * k + 2];
      y += std::sin(3.14159265358979323846 * c1 * u[5 * k] * u[5 * k + 1]) +
           c2 * u[5 * k + 2] * std::exp(c3 * u[5 * k + 3] * u[5 * k + 4]);
    }
    if (spec.noise) {
      double pick_sum = 0;
      for (int k = 0; k < blocks; ++k)
        pick_sum += u[static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(m)))];
      y += rng.normal() / static_cast<double>(blocks) * pick_sum;
    }
    data.y[i] = y;
  }
  return data;
}

// --- Equicorrelated Gaussian with discretized features -------------------------

struct DiscretizedGaussianSpec {
  int m = 0;
  double rho = 0;
  Vector mu;  // empty = zeros
  // Per feature: empty = kept continuous; otherwise the interior cut-offs
  // v_2 < .. < v_L (v_1 = -inf and v_{L+1} = +inf are implicit), giving
  // interior.size() + 1 categories.
  std::vector<std::vector<double>> cutoffs;

  FeatureSchema schema() const {
    FeatureSchema s;
    for (int j = 0; j < m; ++j) {
      const auto& cut = cutoffs[static_cast<std::size_t>(j)];
      if (cut.empty())
        s.features.push_back({FeatureKind::kContinuous, 0});
      else
        s.features.push_back({FeatureKind::kCategorical, static_cast<int>(cut.size()) + 1});
    }
    return s;
  }

  Vector mean() const { return mu.size() == m ? mu : Vector::Zero(m); }

  void validate() const {
    if (m < 1) throw ConfigError("discretized spec: M >= 1");
    if (static_cast<int>(cutoffs.size()) != m)
      throw ConfigError("discretized spec: cut-off arity mismatch");
    if (!(rho < 1.0) || (m > 1 && !(rho > -1.0 / (m - 1))))
      throw ConfigError("discretized spec: equicorrelation matrix is not positive definite");
    for (const auto& cut : cutoffs)
      for (std::size_t i = 1; i < cut.size(); ++i)
        if (!(cut[i - 1] < cut[i]))
          throw ConfigError("discretized spec: cut-offs must be strictly increasing");
  }
};

inline Matrix equicorrelation(int m, double rho) {
  Matrix s = Matrix::Constant(m, m, rho);
  s.diagonal().setOnes();
  return s;
}

inline int discretize_value(double v, const std::vector<double>& interior_cutoffs) {
  int label = 1;
  for (double cut : interior_cutoffs) {
    if (v > cut)
      ++label;
    else
      break;
  }
  return label;
}

// Draws N latent Gaussians via the closed-form square root of the
// equicorrelation matrix, a I + b 11', then discretizes the designated
// features into unordered labels.
inline Dataset gen_discretized_dataset(const DiscretizedGaussianSpec& spec, int n,
                                       Rng& rng) {
  spec.validate();
  const int m = spec.m;
  const double a = std::sqrt(1.0 - spec.rho);
  const double c = std::sqrt(1.0 + (m - 1) * spec.rho);
  const double b = (c - a) / static_cast<double>(m);
  const Vector mu = spec.mean();

  Dataset data;
  data.schema = spec.schema();
  data.x.resize(n, m);
  Vector z(m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) z[j] = rng.normal();
    const double zsum = z.sum();
    for (int j = 0; j < m; ++j) {
      const double latent = mu[j] + a * z[j] + b * zsum;
      const auto& cut = spec.cutoffs[static_cast<std::size_t>(j)];
      data.x(i, j) = cut.empty() ? latent
                                 : static_cast<double>(discretize_value(latent, cut));
    }
  }
  return data;
}

// Linear response y = f(x) + noise_sd * eps over mixed features.
inline Vector gen_response_mixed(const Matrix& x, const LinearModel& model,
                                 double noise_sd, Rng& rng) {
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    y[i] = model.predict(x.row(i).transpose()) + noise_sd * rng.normal();
  return y;
}

// --- Gaussian rectangle probabilities (separation-of-variables QMC) ------------

struct MvnRect {
  Vector lower;  // -inf allowed
  Vector upper;  // +inf allowed

  void validate() const {
    if (lower.size() != upper.size()) throw InputError("rect: arity mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i])) throw InputError("rect: need lower < upper");
  }
};

struct RectProb {
  double value = 0;
  double std_error = 0;
};

namespace detail {

inline const double* richtmyer_roots(int max_dim) {
  static const std::vector<double> roots = [] {
    std::vector<double> out;
    int candidate = 2;
    while (out.size() < 64) {
      bool prime = true;
      for (int d = 2; d * d <= candidate; ++d)
        if (candidate % d == 0) {
          prime = false;
          break;
        }
      if (prime) out.push_back(std::sqrt(static_cast<double>(candidate)));
      ++candidate;
    }
    return out;
  }();
  if (max_dim > static_cast<int>(roots.size()))
    throw InputError("rect prob: dimension too large");
  return roots.data();
}

}  // namespace detail

// P(lower < X <= upper) for X ~ N(mu, sigma), by the Genz separation-of-
// variables transform over a randomly shifted Richtmyer lattice. One
// dimension reduces to the exact Phi difference. The routine is deterministic:
// shifts come from a fixed internal stream.
inline RectProb mvn_rect_prob(const Vector& mu, const Matrix& sigma, const MvnRect& rect,
                              int points_per_shift = 0, int shifts = 8) {
  rect.validate();
  const int d = static_cast<int>(mu.size());
  if (sigma.rows() != d || sigma.cols() != d || rect.lower.size() != d)
    throw InputError("mvn_rect_prob: arity mismatch");
  if (d == 0) return {1.0, 0.0};

  if (d == 1) {
    const double sd = std::sqrt(sigma(0, 0));
    if (!(sd > 0)) throw NumericError("mvn_rect_prob: non-positive variance");
    const double lo = std::isinf(rect.lower[0]) ? 0.0 : normal_cdf((rect.lower[0] - mu[0]) / sd);
    const double hi = std::isinf(rect.upper[0]) ? 1.0 : normal_cdf((rect.upper[0] - mu[0]) / sd);
    return {std::max(0.0, hi - lo), 0.0};
  }

  Eigen::LLT<Matrix> llt(sigma);
  Matrix chol;
  if (llt.info() == Eigen::Success) {
    chol = llt.matrixL();
  } else {
    Eigen::LLT<Matrix> retry(sigma + 1e-10 * Matrix::Identity(d, d));
    if (retry.info() != Eigen::Success)
      throw NumericError("mvn_rect_prob: covariance is not positive definite");
    chol = retry.matrixL();
  }

  if (points_per_shift <= 0) points_per_shift = 2048;
  const double* q = detail::richtmyer_roots(d - 1);
  Rng shift_rng(derive_seed(0x9e3779b97f4a7c15ULL, {stream_tag("rect-shifts")}));

  constexpr double kTiny = 1e-14;
  std::vector<double> shift(static_cast<std::size_t>(d - 1));
  Vector y(d - 1);
  double mean_of_shifts = 0;
  double m2 = 0;
  for (int s = 0; s < shifts; ++s) {
    for (auto& sh : shift) sh = shift_rng.uniform();
    double acc = 0;
    for (int i = 1; i <= points_per_shift; ++i) {
      double prod = 1.0;
      for (int k = 0; k < d; ++k) {
        double center = 0;
        for (int j = 0; j < k; ++j) center += chol(k, j) * y[j];
        const double denom = chol(k, k);
        const double a = rect.lower[k] - mu[k] - center;
        const double b = rect.upper[k] - mu[k] - center;
        const double da = std::isinf(a) ? 0.0 : normal_cdf(a / denom);
        const double db = std::isinf(b) ? 1.0 : normal_cdf(b / denom);
        const double width = std::max(0.0, db - da);
        prod *= width;
        if (prod <= 0.0) break;
        if (k + 1 < d) {
          double w = i * q[k] + shift[static_cast<std::size_t>(k)];
          w -= std::floor(w);
          const double t = std::clamp(da + w * width, kTiny, 1.0 - kTiny);
          y[k] = normal_quantile(t);
        }
      }
      acc += (prod - acc) / static_cast<double>(i);
    }
    const double delta = acc - mean_of_shifts;
    mean_of_shifts += delta / static_cast<double>(s + 1);
    m2 += delta * (acc - mean_of_shifts);
  }
  RectProb out;
  out.value = std::clamp(mean_of_shifts, 0.0, 1.0);
  out.std_error = shifts > 1
      ? std::sqrt(std::max(0.0, m2 / (shifts - 1.0) / static_cast<double>(shifts)))
      : 0.0;
  return out;
}

// --- Adaptive quadrature --------------------------------------------------------

namespace detail {

// Gauss-Kronrod 15-point rule (7-point Gauss embedded) on [-1, 1].
inline constexpr double kGk15Nodes[15] = {
    -0.9914553711208126, -0.9491079123427585, -0.8648644233597691,
    -0.7415311855993945, -0.5860872354676911, -0.4058451513773972,
    -0.2077849550078985, 0.0,                 0.2077849550078985,
    0.4058451513773972,  0.5860872354676911,  0.7415311855993945,
    0.8648644233597691,  0.9491079123427585,  0.9914553711208126};
inline constexpr double kGk15Weights[15] = {
    0.0229353220105292, 0.0630920926299786, 0.1047900103222502,
    0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
    0.2044329400752989, 0.2094821410847278, 0.2044329400752989,
    0.1903505780647854, 0.1690047266392679, 0.1406532597155259,
    0.1047900103222502, 0.0630920926299786, 0.0229353220105292};
inline constexpr double kG7Weights[7] = {
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
    0.4179591836734694, 0.3818300505051189, 0.2797053914892767,
    0.1294849661688697};

template <typename F>
std::pair<double, double> gk15(const F& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double kronrod = 0;
  double gauss = 0;
  for (int i = 0; i < 15; ++i) {
    const double v = f(mid + half * kGk15Nodes[i]);
    kronrod += kGk15Weights[i] * v;
    if (i % 2 == 1) gauss += kG7Weights[i / 2] * v;
  }
  kronrod *= half;
  gauss *= half;
  return {kronrod, std::fabs(kronrod - gauss)};
}

template <typename F>
double adaptive_quad_impl(const F& f, double a, double b, double tol, int depth,
                          const std::string& id) {
  const auto [value, err] = gk15(f, a, b);
  if (err <= tol || b - a < 1e-12) return value;
  if (depth > 40)
    throw NumericError("quadrature did not converge for integral " + id);
  const double mid = 0.5 * (a + b);
  return adaptive_quad_impl(f, a, mid, 0.5 * tol, depth + 1, id) +
         adaptive_quad_impl(f, mid, b, 0.5 * tol, depth + 1, id);
}

}  // namespace detail

template <typename F>
double adaptive_quad(const F& f, double a, double b, double tol = 1e-9,
                     const std::string& id = "") {
  return detail::adaptive_quad_impl(f, a, b, tol, 0, id);
}

// --- Truth oracles ---------------------------------------------------------------

inline constexpr long long kCategoricalEnumerationGuard = 1000000;
inline constexpr int kMixedOracleMaxM = 6;

namespace detail {

// Rectangle in the latent Gaussian space for feature j carrying label
// `label` (1-based).
inline std::pair<double, double> label_interval(const DiscretizedGaussianSpec& spec,
                                                int j, int label) {
  const auto& cut = spec.cutoffs[static_cast<std::size_t>(j)];
  const double lo = label <= 1 ? -std::numeric_limits<double>::infinity()
                               : cut[static_cast<std::size_t>(label - 2)];
  const double hi = label > static_cast<int>(cut.size())
                        ? std::numeric_limits<double>::infinity()
                        : cut[static_cast<std::size_t>(label - 1)];
  return {lo, hi};
}

// Probability of the rectangle formed by the given labels over `idx` under the
// marginal latent Gaussian of those coordinates.
inline double label_rect_prob(const DiscretizedGaussianSpec& spec,
                              const std::vector<int>& idx, const std::vector<int>& labels,
                              int qmc_points = 0) {
  const auto d = static_cast<Eigen::Index>(idx.size());
  if (d == 0) return 1.0;
  Vector mu(d);
  Matrix sigma(d, d);
  const Vector mean = spec.mean();
  for (Eigen::Index i = 0; i < d; ++i) {
    mu[i] = mean[idx[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < d; ++j)
      sigma(i, j) = i == j ? 1.0 : spec.rho;
  }
  MvnRect rect;
  rect.lower.resize(d);
  rect.upper.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto [lo, hi] =
        label_interval(spec, idx[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(i)]);
    rect.lower[i] = lo;
    rect.upper[i] = hi;
  }
  return mvn_rect_prob(mu, sigma, rect, qmc_points).value;
}

}  // namespace detail

// Exact conditional expectation of a linear model over all-categorical
// features: enumerate the unobserved label combinations and weight by the
// ratio of Gaussian rectangle probabilities.
inline double true_v_categorical(const DiscretizedGaussianSpec& spec,
                                 const LinearModel& model, const Vector& x,
                                 const Coalition& observed, int qmc_points = 0) {
  spec.validate();
  const FeatureSchema schema = spec.schema();
  if (!std::all_of(schema.features.begin(), schema.features.end(), [](const Feature& f) {
        return f.kind == FeatureKind::kCategorical;
      }))
    throw InputError("true_v_categorical: all features must be categorical");
  if (observed.is_full()) return model.predict(x);

  const auto obs = observed.members();
  const auto unobs = observed.complement().members();
  long long combos = 1;
  for (int j : unobs) {
    combos *= schema.levels(j);
    if (combos > kCategoricalEnumerationGuard)
      throw InputError("true_v_categorical: enumeration exceeds guard");
  }

  std::vector<int> obs_labels;
  obs_labels.reserve(obs.size());
  for (int j : obs) obs_labels.push_back(static_cast<int>(x[j]));
  const double p_obs =
      obs.empty() ? 1.0 : detail::label_rect_prob(spec, obs, obs_labels, qmc_points);
  if (!(p_obs > 0)) throw NumericError("true_v_categorical: conditioning event has zero mass");

  std::vector<int> all_idx(obs.begin(), obs.end());
  all_idx.insert(all_idx.end(), unobs.begin(), unobs.end());

  Vector row = x;
  std::vector<int> labels(unobs.size(), 1);
  double total = 0;
  for (long long it = 0; it < combos; ++it) {
    std::vector<int> all_labels = obs_labels;
    for (std::size_t i = 0; i < unobs.size(); ++i) {
      all_labels.push_back(labels[i]);
      row[unobs[i]] = static_cast<double>(labels[i]);
    }
    const double p_joint = detail::label_rect_prob(spec, all_idx, all_labels, qmc_points);
    total += model.predict(row) * (p_joint / p_obs);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < schema.levels(unobs[i])) {
        ++labels[i];
        break;
      }
      labels[i] = 1;
    }
  }
  return total;
}

namespace detail {

// Likelihood of the observed mixed block: Gaussian density of the continuous
// part times the conditional rectangle mass of the categorical part.
// `cond_idx`/`cond_vals` add extra continuous conditioning coordinates.
struct MixedObsLikelihood {
  const DiscretizedGaussianSpec& spec;
  std::vector<int> cont_idx;       // observed continuous features
  std::vector<double> cont_vals;   // their values
  std::vector<int> cat_idx;        // observed categorical features
  std::vector<int> cat_labels;     // their labels
  int qmc_points = 0;

  double operator()() const {
    const int nc = static_cast<int>(cont_idx.size());
    const int nk = static_cast<int>(cat_idx.size());
    const Vector mean = spec.mean();
    double dens = 1.0;
    Vector mu_cat;
    Matrix sig_cat;
    if (nk > 0) {
      mu_cat.resize(nk);
      sig_cat.resize(nk, nk);
      for (int i = 0; i < nk; ++i) {
        mu_cat[i] = mean[cat_idx[static_cast<std::size_t>(i)]];
        for (int j = 0; j < nk; ++j) sig_cat(i, j) = i == j ? 1.0 : spec.rho;
      }
    }
    if (nc > 0) {
      Vector mu_c(nc);
      Matrix sig_cc(nc, nc);
      for (int i = 0; i < nc; ++i) {
        mu_c[i] = mean[cont_idx[static_cast<std::size_t>(i)]];
        for (int j = 0; j < nc; ++j) sig_cc(i, j) = i == j ? 1.0 : spec.rho;
      }
      Eigen::LLT<Matrix> llt(sig_cc);
      if (llt.info() != Eigen::Success)
        throw NumericError("mixed likelihood: continuous block not PD");
      Vector delta(nc);
      for (int i = 0; i < nc; ++i)
        delta[i] = cont_vals[static_cast<std::size_t>(i)] - mu_c[i];
      const Vector solved = llt.solve(delta);
      const double quad = delta.dot(solved);
      double logdet = 0;
      for (int i = 0; i < nc; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
      dens = std::exp(-0.5 * (quad + logdet + nc * std::log(2.0 * 3.14159265358979323846)));
      if (nk > 0) {
        Matrix sig_kc(nk, nc);
        for (int i = 0; i < nk; ++i)
          for (int j = 0; j < nc; ++j) sig_kc(i, j) = spec.rho;
        const Matrix adj = llt.solve(sig_kc.transpose());
        mu_cat += adj.transpose() * delta;
        sig_cat -= sig_kc * adj;
        sig_cat = 0.5 * (sig_cat + sig_cat.transpose());
      }
    }
    if (nk == 0) return dens;
    MvnRect rect;
    rect.lower.resize(nk);
    rect.upper.resize(nk);
    for (int i = 0; i < nk; ++i) {
      const auto [lo, hi] = label_interval(spec, cat_idx[static_cast<std::size_t>(i)],
                                           cat_labels[static_cast<std::size_t>(i)]);
      rect.lower[i] = lo;
      rect.upper[i] = hi;
    }
    return dens * mvn_rect_prob(mu_cat, sig_cat, rect, qmc_points).value;
  }
};

}  // namespace detail

// Exact conditional expectation of a linear model over mixed features: the
// linearity reduces it to univariate conditional means (1-D quadrature over
// the latent coordinate) and conditional category masses.
inline double true_v_mixed(const DiscretizedGaussianSpec& spec, const LinearModel& model,
                           const Vector& x, const Coalition& observed,
                           int qmc_points = 0, double quad_tol = 1e-8) {
  spec.validate();
  if (spec.m > kMixedOracleMaxM)
    throw InputError("true_v_mixed: guarded to M <= " + std::to_string(kMixedOracleMaxM));
  const FeatureSchema schema = spec.schema();
  if (observed.is_full()) return model.predict(x);

  const Vector mean = spec.mean();
  const auto obs = observed.members();
  const auto unobs = observed.complement().members();

  detail::MixedObsLikelihood obs_lik{spec, {}, {}, {}, {}, qmc_points};
  for (int j : obs) {
    if (schema.is_categorical(j)) {
      obs_lik.cat_idx.push_back(j);
      obs_lik.cat_labels.push_back(static_cast<int>(x[j]));
    } else {
      obs_lik.cont_idx.push_back(j);
      obs_lik.cont_vals.push_back(x[j]);
    }
  }
  const double p_obs = obs.empty() ? 1.0 : obs_lik();
  if (!(p_obs > 0)) throw NumericError("true_v_mixed: conditioning event has zero mass");

  double v = model.alpha;
  for (int j : obs) {
    if (schema.is_categorical(j))
      v += model.beta[static_cast<std::size_t>(j)][static_cast<int>(x[j]) - 1];
    else
      v += model.gamma[j] * x[j];
  }

  for (int j : unobs) {
    const double lo = mean[j] - 8.0;
    const double hi = mean[j] + 8.0;
    // Joint likelihood p(x_j = t, x_obs = x*); dividing by p_obs afterwards
    // turns its integrals into conditional means and masses.
    auto integrand = [&](double t) {
      detail::MixedObsLikelihood joint = obs_lik;
      joint.cont_idx.push_back(j);
      joint.cont_vals.push_back(t);
      return joint();
    };
    if (schema.is_categorical(j)) {
      const int levels = schema.levels(j);
      const Vector& beta = model.beta[static_cast<std::size_t>(j)];
      for (int l = 1; l <= levels; ++l) {
        const auto [a, b] = detail::label_interval(spec, j, l);
        const double a_eff = std::max(a, lo);
        const double b_eff = std::min(b, hi);
        if (!(a_eff < b_eff)) continue;
        const double mass =
            adaptive_quad(integrand, a_eff, b_eff, quad_tol,
                          "cat feature " + std::to_string(j + 1) + " level " +
                              std::to_string(l)) /
            p_obs;
        v += beta[l - 1] * mass;
      }
    } else {
      auto weighted = [&](double t) { return t * integrand(t); };
      const double ex =
          adaptive_quad(weighted, lo, hi, quad_tol,
                        "cont feature " + std::to_string(j + 1)) /
          p_obs;
      v += model.gamma[j] * ex;
    }
  }
  return v;
}

// Exact Shapley values from a true-contribution provider over the full power
// set (guarded to M <= 10 for feasibility).
inline InstanceExplanation true_shapley(const std::function<double(const Coalition&)>& v_true,
                                        double phi0, double fx, int m, int instance_id = 0) {
  if (m > 10) throw InputError("true_shapley: guarded to M <= 10");
  InstanceExplanation out;
  out.table.m = m;
  out.table.instance_id = instance_id;
  out.table.phi0 = phi0;
  out.table.fx = fx;
  const std::uint64_t full = (1ULL << m) - 1;
  out.table.values.reserve(full - 1);
  for (std::uint64_t bits = 1; bits < full; ++bits) {
    const Coalition s(bits, m);
    out.table.values.emplace_back(s, v_true(s));
  }
  out.explanation = exact_shapley(out.table, m);
  return out;
}

}  // namespace condshap

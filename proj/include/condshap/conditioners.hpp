#pragma once

// Conditional samplers p(x_unobs | x_obs): independence (training subsamples),
// parametric Gaussian, exact multivariate Burr, and the trained generative
// model. All draws are deterministic functions of (inputs, rng stream).

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "condshap/rng.hpp"
#include "condshap/types.hpp"
#include "condshap/vaeac.hpp"

namespace condshap {

class Conditioner {
 public:
  virtual ~Conditioner() = default;

  // K rows over the unobserved features (complement of `observed`), columns in
  // ascending feature order.
  virtual Matrix draw(const Vector& x, const Coalition& observed, int k,
                      Rng& rng) const = 0;

  virtual bool supports_categorical() const = 0;
};

// Sub-samples rows of the training set; ignores the conditioning values.
class IndependenceConditioner : public Conditioner {
 public:
  explicit IndependenceConditioner(Matrix training) : training_(std::move(training)) {
    if (training_.rows() == 0) throw InputError("independence: empty training matrix");
  }

  Matrix draw(const Vector& x, const Coalition& observed, int k, Rng& rng) const override {
    (void)x;
    const auto unobs = observed.complement().members();
    Matrix out(k, static_cast<Eigen::Index>(unobs.size()));
    for (int i = 0; i < k; ++i) {
      const auto row = rng.uniform_index(static_cast<std::size_t>(training_.rows()));
      for (std::size_t c = 0; c < unobs.size(); ++c)
        out(i, static_cast<Eigen::Index>(c)) =
            training_(static_cast<Eigen::Index>(row), unobs[c]);
    }
    return out;
  }

  bool supports_categorical() const override { return true; }

 private:
  Matrix training_;
};

// --- Gaussian -----------------------------------------------------------------

struct GaussianFit {
  Vector mean;
  Matrix cov;
  bool jittered = false;  // set when a degenerate covariance needed 1e-8 I
};

inline GaussianFit gaussian_fit(const Matrix& training) {
  const int n = static_cast<int>(training.rows());
  const int m = static_cast<int>(training.cols());
  if (n < m + 1) throw InputError("gaussian_fit: need at least M+1 rows");
  GaussianFit fit;
  fit.mean = training.colwise().mean();
  const Matrix centered = training.rowwise() - fit.mean.transpose();
  fit.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::LDLT<Matrix> ldlt(fit.cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      fit.cov.diagonal().minCoeff() <= 0) {
    fit.cov += 1e-8 * Matrix::Identity(m, m);
    fit.jittered = true;
  }
  return fit;
}

// Conditional (mean, covariance) of the unobserved block given x_obs, via the
// Schur complement.
inline std::pair<Vector, Matrix> gaussian_conditional(const GaussianFit& fit,
                                                      const Coalition& observed,
                                                      const Vector& x_obs) {
  const auto obs = observed.members();
  const auto unobs = observed.complement().members();
  const auto no = static_cast<Eigen::Index>(obs.size());
  const auto nu = static_cast<Eigen::Index>(unobs.size());
  if (x_obs.size() != no) throw InputError("gaussian_conditional: x_obs arity");
  if (no == 0) {
    Vector mu(nu);
    Matrix sig(nu, nu);
    for (Eigen::Index i = 0; i < nu; ++i) {
      mu[i] = fit.mean[unobs[static_cast<std::size_t>(i)]];
      for (Eigen::Index j = 0; j < nu; ++j)
        sig(i, j) = fit.cov(unobs[static_cast<std::size_t>(i)],
                            unobs[static_cast<std::size_t>(j)]);
    }
    return {mu, sig};
  }
  Matrix s_oo(no, no), s_uo(nu, no), s_uu(nu, nu);
  Vector mu_o(no), mu_u(nu);
  for (Eigen::Index i = 0; i < no; ++i) {
    mu_o[i] = fit.mean[obs[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < no; ++j)
      s_oo(i, j) = fit.cov(obs[static_cast<std::size_t>(i)], obs[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < nu; ++i) {
    mu_u[i] = fit.mean[unobs[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < no; ++j)
      s_uo(i, j) = fit.cov(unobs[static_cast<std::size_t>(i)], obs[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < nu; ++j)
      s_uu(i, j) = fit.cov(unobs[static_cast<std::size_t>(i)],
                           unobs[static_cast<std::size_t>(j)]);
  }
  Eigen::LDLT<Matrix> ldlt(s_oo);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("gaussian_conditional: observed block not factorizable");
  const Matrix solved = ldlt.solve(s_uo.transpose());  // s_oo^{-1} s_ou
  Vector mu_c = mu_u + (solved.transpose() * (x_obs - mu_o));
  Matrix sig_c = s_uu - s_uo * solved;
  sig_c = 0.5 * (sig_c + sig_c.transpose());
  return {std::move(mu_c), std::move(sig_c)};
}

// Symmetric square root with escalating jitter for draws from N(mu, sigma).
inline Matrix symmetric_sqrt(const Matrix& sigma) {
  Matrix s = sigma;
  for (double jitter = 0.0; jitter <= 1e-4; jitter = jitter == 0.0 ? 1e-8 : jitter * 10) {
    Matrix trial = s + jitter * Matrix::Identity(s.rows(), s.cols());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(trial);
    if (eig.info() != Eigen::Success) continue;
    const double min_ev = eig.eigenvalues().minCoeff();
    if (min_ev < -1e-10) continue;
    Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
  }
  throw NumericError("symmetric_sqrt: matrix is not positive semi-definite");
}

class GaussianConditioner : public Conditioner {
 public:
  explicit GaussianConditioner(GaussianFit fit) : fit_(std::move(fit)) {}

  static GaussianConditioner from_training(const Matrix& training) {
    return GaussianConditioner(gaussian_fit(training));
  }

  const GaussianFit& fit() const { return fit_; }

  Matrix draw(const Vector& x, const Coalition& observed, int k, Rng& rng) const override {
    const auto obs = observed.members();
    Vector x_obs(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) x_obs[static_cast<Eigen::Index>(i)] = x[obs[i]];
    const auto [mu, sigma] = gaussian_conditional(fit_, observed, x_obs);
    const Matrix root = symmetric_sqrt(sigma);
    Matrix out(k, mu.size());
    Vector z(mu.size());
    for (int i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
      out.row(i) = (mu + root * z).transpose();
    }
    return out;
  }

  bool supports_categorical() const override { return false; }

 private:
  GaussianFit fit_;
};

// --- Multivariate Burr ----------------------------------------------------------

struct BurrParams {
  double kappa = 1;
  Vector b;
  Vector r;

  int m() const { return static_cast<int>(b.size()); }

  void validate() const {
    if (!(kappa > 0)) throw ConfigError("burr: kappa must be positive");
    if (b.size() != r.size() || b.size() == 0)
      throw ConfigError("burr: b and r must be nonempty and equal length");
    if (b.minCoeff() <= 0 || r.minCoeff() <= 0)
      throw ConfigError("burr: b and r must be positive");
  }
};

// Conditional Burr parameters given the observed coordinates: the shape grows
// by the number of conditioned features and each remaining r_j is divided by
// 1 + sum over observed of r_m x_m^{b_m}.
inline BurrParams burr_conditional_params(const BurrParams& p,
                                          const std::vector<int>& observed_idx,
                                          const Vector& x_obs) {
  p.validate();
  if (static_cast<Eigen::Index>(observed_idx.size()) != x_obs.size())
    throw InputError("burr_conditional_params: arity mismatch");
  double denom = 1.0;
  std::vector<bool> is_obs(static_cast<std::size_t>(p.m()), false);
  for (std::size_t i = 0; i < observed_idx.size(); ++i) {
    const int j = observed_idx[i];
    const double v = x_obs[static_cast<Eigen::Index>(i)];
    if (!(v > 0))
      throw std::domain_error("burr_conditional_params: conditioning values must be > 0");
    denom += p.r[j] * std::pow(v, p.b[j]);
    is_obs[static_cast<std::size_t>(j)] = true;
  }
  BurrParams out;
  out.kappa = p.kappa + static_cast<double>(observed_idx.size());
  const int rest = p.m() - static_cast<int>(observed_idx.size());
  out.b.resize(rest);
  out.r.resize(rest);
  int c = 0;
  for (int j = 0; j < p.m(); ++j) {
    if (is_obs[static_cast<std::size_t>(j)]) continue;
    out.b[c] = p.b[j];
    out.r[c] = p.r[j] / denom;
    ++c;
  }
  return out;
}

// Gamma-compounded Weibull draw: g ~ Gamma(kappa, 1), e_m ~ Exp(1),
// x_m = (e_m / (g r_m))^(1/b_m); reproduces the joint Burr density.
inline Matrix burr_draw(const BurrParams& p, int k, Rng& rng) {
  p.validate();
  Matrix out(k, p.m());
  for (int i = 0; i < k; ++i) {
    const double g = rng.gamma(p.kappa);
    for (int j = 0; j < p.m(); ++j) {
      const double e = rng.exponential();
      out(i, j) = std::pow(e / (g * p.r[j]), 1.0 / p.b[j]);
    }
  }
  return out;
}

// Exact conditional sampler when the data really is Burr (the truth method).
class BurrTruthConditioner : public Conditioner {
 public:
  explicit BurrTruthConditioner(BurrParams params) : params_(std::move(params)) {
    params_.validate();
  }

  Matrix draw(const Vector& x, const Coalition& observed, int k, Rng& rng) const override {
    const auto obs = observed.members();
    Vector x_obs(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i)
      x_obs[static_cast<Eigen::Index>(i)] = x[obs[i]];
    const BurrParams cond = burr_conditional_params(params_, obs, x_obs);
    return burr_draw(cond, k, rng);
  }

  bool supports_categorical() const override { return false; }

 private:
  BurrParams params_;
};

// Employment-phase wrapper around a trained model.
class VaeacConditioner : public Conditioner {
 public:
  explicit VaeacConditioner(std::shared_ptr<const VaeacModel> model)
      : model_(std::move(model)) {
    if (!model_ || !model_->trained)
      throw UsageError("vaeac conditioner: model is not trained");
  }

  const VaeacModel& model() const { return *model_; }

  Matrix draw(const Vector& x, const Coalition& observed, int k, Rng& rng) const override {
    const Mask unobserved = observed.complement();
    const auto unobs = unobserved.members();
    Matrix out(k, static_cast<Eigen::Index>(unobs.size()));
    if (unobs.empty()) return out;
    const Matrix full = sample_conditional(*model_, x, unobserved, k, rng);
    for (std::size_t c = 0; c < unobs.size(); ++c)
      out.col(static_cast<Eigen::Index>(c)) = full.col(unobs[c]);
    return out;
  }

  bool supports_categorical() const override { return true; }

 private:
  std::shared_ptr<const VaeacModel> model_;
};

}  // namespace condshap

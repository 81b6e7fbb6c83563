#pragma once

// Shared helpers for the test suites: random small models, the central
// finite-difference oracle for the VLB gradients, and a couple of statistics.

#include <cmath>
#include <vector>

#include "condshap/nncore.hpp"
#include "condshap/rng.hpp"
#include "condshap/types.hpp"
#include "condshap/vaeac.hpp"

namespace condshap::test {

inline FeatureSchema random_small_schema(Rng& rng) {
  FeatureSchema schema;
  const int m = 2 + static_cast<int>(rng.uniform_index(3));  // 2..4 features
  for (int j = 0; j < m; ++j) {
    if (rng.bernoulli(0.4)) {
      schema.features.push_back(
          {FeatureKind::kCategorical, 2 + static_cast<int>(rng.uniform_index(3))});
    } else {
      schema.features.push_back({FeatureKind::kContinuous, 0});
    }
  }
  return schema;
}

inline Vector random_row(const FeatureSchema& schema, Rng& rng) {
  Vector x(schema.size());
  for (int j = 0; j < schema.size(); ++j) {
    if (schema.is_categorical(j))
      x[j] = 1.0 + static_cast<double>(rng.uniform_index(
                       static_cast<std::size_t>(schema.levels(j))));
    else
      x[j] = rng.normal();
  }
  return x;
}

inline VaeacModel random_small_model(const FeatureSchema& schema, Rng& rng) {
  VaeacHyper hyper;
  hyper.depth = 2;
  hyper.width = 5;
  hyper.latent_dim = 2;
  const Vector mean = Vector::Zero(schema.size());
  const Vector sd = Vector::Ones(schema.size());
  return make_vaeac_model(schema, hyper, mean, sd, rng);
}

// Central finite differences over every parameter of all three nets against
// the analytic reverse-mode gradients of the regularized VLB. Returns the
// maximum relative error, with an absolute floor of 1 in the denominator.
inline double vlb_fd_max_rel_err(VaeacModel& model, const Vector& x, const Mask& mask,
                                 const Vector& eps, double h = 1e-5) {
  detail::VaeacGrads grads = detail::VaeacGrads::zeros_like(model);
  detail::VlbWork work;
  detail::vlb_res_forward(model, x, mask, eps, work);
  detail::vlb_res_backward(model, work, grads);

  ParamViews params;
  collect_params(model.full_encoder, params);
  collect_params(model.masked_encoder, params);
  collect_params(model.decoder, params);
  ParamViews gview;
  collect_params(grads.full, gview);
  collect_params(grads.masked, gview);
  collect_params(grads.decoder, gview);

  double worst = 0;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    for (Eigen::Index k = 0; k < params.sizes[b]; ++k) {
      double& p = params.blocks[b][k];
      const double saved = p;
      p = saved + h;
      const double up = vlb_res(model, x, mask, eps);
      p = saved - h;
      const double dn = vlb_res(model, x, mask, eps);
      p = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double an = gview.blocks[b][k];
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(an)});
      worst = std::max(worst, std::fabs(an - fd) / denom);
    }
  }
  return worst;
}

// Ordinary least squares slope of y on x.
inline double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace condshap::test

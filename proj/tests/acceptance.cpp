// Acceptance suite: one checkable criterion per case, each printing a single
// PASS/FAIL line with the measured quantities. Run all criteria or a single
// one with --criterion N; --cli points at the command-line binary (used by
// the determinism criterion).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "condshap/experiment.hpp"
#include "condshap/io.hpp"
#include "test_util.hpp"

using namespace condshap;
namespace fs = std::filesystem;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double minutes() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
               .count() /
           60.0;
  }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

bool report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  return pass;
}

std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// ---- 1. Gradient fidelity ------------------------------------------------------

bool criterion_gradients() {
  Timer timer;
  Rng rng(20240101);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng trial_rng = rng.child(static_cast<std::uint64_t>(trial));
    const FeatureSchema schema = test::random_small_schema(trial_rng);
    VaeacModel model = test::random_small_model(schema, trial_rng);
    const Vector x = test::random_row(schema, trial_rng);
    const Mask mask(trial_rng.next_bits() & ((1ULL << schema.size()) - 1), schema.size());
    Vector eps(model.latent_dim());
    for (int i = 0; i < eps.size(); ++i) eps[i] = trial_rng.normal();
    worst = std::max(worst, test::vlb_fd_max_rel_err(model, x, mask, eps, 1e-5));
  }
  const double secs = timer.seconds();
  const bool pass = worst < 1e-4 && secs < 60.0;
  return report(1, pass,
                "VLB gradients vs central differences: max rel err " + fmt(worst, 8) +
                    " (< 1e-4), " + fmt(secs, 1) + " s (< 60 s), 100 cases");
}

// ---- 2. KL oracle ---------------------------------------------------------------

bool criterion_kl() {
  Rng rng(20240102);
  double worst = 0;
  for (int pair = 0; pair < 50; ++pair) {
    Rng r = rng.child(static_cast<std::uint64_t>(pair));
    const int d = 1 + static_cast<int>(r.uniform_index(2));
    LatentGaussian q, p;
    q.mu.resize(d);
    q.sigma.resize(d);
    p.mu.resize(d);
    p.sigma.resize(d);
    // Ranges keep the per-pair MC standard error a few times below the 1e-2
    // tolerance (the antithetic pairing removes the mean-shift variance).
    for (int i = 0; i < d; ++i) {
      q.mu[i] = r.uniform(-0.8, 0.8);
      p.mu[i] = r.uniform(-0.8, 0.8);
      q.sigma[i] = r.uniform(0.85, 1.2);
      p.sigma[i] = r.uniform(0.85, 1.2);
    }
    const double closed = kl_diag_gauss(q, p);
    // Antithetic Monte Carlo with 1e5 draws.
    double mc = 0;
    const int n = 100000;
    for (int i = 0; i < n / 2; ++i) {
      double term = 0;
      for (int k = 0; k < d; ++k) {
        const double e = r.normal();
        for (double sign : {1.0, -1.0}) {
          const double z = q.mu[k] + sign * e * q.sigma[k];
          term += 0.5 * (normal_logpdf(z, q.mu[k], q.sigma[k]) -
                         normal_logpdf(z, p.mu[k], p.sigma[k]));
        }
      }
      mc += term;
    }
    mc /= (n / 2);
    worst = std::max(worst, std::fabs(closed - mc));
  }
  return report(2, worst < 1e-2,
                "closed-form KL vs 1e5-draw MC over 50 pairs: max |diff| " +
                    fmt(worst, 5) + " (< 0.01)");
}

// ---- 3/4. Shapley solver equivalence and axioms ---------------------------------

CoalitionValueTable random_table(int m, Rng& rng) {
  CoalitionValueTable t;
  t.m = m;
  t.phi0 = rng.normal();
  const std::uint64_t full = (1ULL << m) - 1;
  t.fx = rng.normal() * 2.0;
  for (std::uint64_t bits = 1; bits < full; ++bits)
    t.values.emplace_back(Coalition(bits, m), rng.normal() * 2.0);
  return t;
}

Vector permutation_shapley(const CoalitionValueTable& t, int m) {
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  Vector phi = Vector::Zero(m);
  long long count = 0;
  do {
    std::uint64_t bits = 0;
    for (int j : perm) {
      const double before = bits == 0 ? t.phi0 : t.at(Coalition(bits, m));
      bits |= 1ULL << j;
      const double after = bits == (1ULL << m) - 1 ? t.fx : t.at(Coalition(bits, m));
      phi[j] += after - before;
    }
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return phi / static_cast<double>(count);
}

bool criterion_solver_equivalence() {
  Rng rng(20240103);
  double worst_perm = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng r = rng.child(static_cast<std::uint64_t>(trial));
    const auto t = random_table(4, r);
    const auto fast = exact_shapley(t, 4);
    const Vector oracle = permutation_shapley(t, 4);
    worst_perm = std::max(worst_perm, (fast.phi - oracle).lpNorm<Eigen::Infinity>());
  }
  double worst_wls = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng r = rng.child(1000 + static_cast<std::uint64_t>(trial));
    const int m = 4 + static_cast<int>(r.uniform_index(3));
    const auto t = random_table(m, r);
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
    worst_wls = std::max(worst_wls, (wls.phi - exact.phi).lpNorm<Eigen::Infinity>());
  }
  const bool pass = worst_perm < 1e-12 && worst_wls < 1e-8;
  return report(3, pass,
                "exact vs permutation oracle (50 tables): " + fmt(worst_perm, 15) +
                    " (< 1e-12); WLS on full power set vs exact: " + fmt(worst_wls, 10) +
                    " (< 1e-8)");
}

bool criterion_axioms() {
  Rng rng(20240104);
  bool pass = true;
  std::string why;

  // Efficiency for both solvers on random tables.
  double worst_eff = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng r = rng.child(static_cast<std::uint64_t>(trial));
    const auto t = random_table(5, r);
    const auto exact = exact_shapley(t, 5);
    worst_eff = std::max(worst_eff,
                         std::fabs(exact.phi.sum() - (t.fx - t.phi0)));
    CoalitionSample sample;
    sample.m = 5;
    std::vector<double> v_hat;
    for (const auto& [c, v] : t.values) {
      sample.counts.emplace_back(c, 1);
      v_hat.push_back(v);
    }
    sample.n_draws = static_cast<long long>(sample.counts.size());
    const auto wls = kernelshap_wls(sample, v_hat, t.phi0, t.fx);
    worst_eff = std::max(worst_eff, std::fabs(wls.phi.sum() - (t.fx - t.phi0)));
  }
  pass = pass && worst_eff < 1e-8;

  // Dummy player.
  const auto t_dummy = [&] {
    CoalitionValueTable t;
    t.m = 4;
    t.phi0 = 0.25;
    t.fx = 0.25 + 3 * 1.7;
    const std::uint64_t full = 15;
    for (std::uint64_t bits = 1; bits < full; ++bits) {
      const std::uint64_t without = bits & ~(1ULL << 3);
      t.values.emplace_back(Coalition(bits, 4),
                            0.25 + 1.7 * __builtin_popcountll(without));
    }
    return t;
  }();
  const auto dummy = exact_shapley(t_dummy, 4);
  pass = pass && std::fabs(dummy.phi[3]) < 1e-12;

  // Symmetry of exchangeable players.
  const auto t_sym = [&] {
    CoalitionValueTable t;
    t.m = 4;
    t.phi0 = 0;
    const auto v = [](std::uint64_t b) {
      const int count01 = static_cast<int>((b & 1ULL) + ((b >> 1) & 1ULL));
      return 2.0 * count01 + 0.3 * __builtin_popcountll(b);
    };
    t.fx = v(15);
    for (std::uint64_t bits = 1; bits < 15; ++bits)
      t.values.emplace_back(Coalition(bits, 4), v(bits));
    return t;
  }();
  const auto sym = exact_shapley(t_sym, 4);
  pass = pass && std::fabs(sym.phi[0] - sym.phi[1]) < 1e-12;

  // Linearity.
  double worst_lin = 0;
  {
    Rng r = rng.child(777);
    std::map<std::uint64_t, double> v1, v2;
    for (std::uint64_t b = 0; b < 16; ++b) {
      v1[b] = r.normal();
      v2[b] = r.normal();
    }
    auto tab = [&](const std::map<std::uint64_t, double>& v) {
      CoalitionValueTable t;
      t.m = 4;
      t.phi0 = v.at(0);
      t.fx = v.at(15);
      for (std::uint64_t bits = 1; bits < 15; ++bits)
        t.values.emplace_back(Coalition(bits, 4), v.at(bits));
      return t;
    };
    std::map<std::uint64_t, double> vc;
    for (std::uint64_t b = 0; b < 16; ++b) vc[b] = 2.5 * v1[b] - 1.25 * v2[b];
    const auto e1 = exact_shapley(tab(v1), 4);
    const auto e2 = exact_shapley(tab(v2), 4);
    const auto ec = exact_shapley(tab(vc), 4);
    worst_lin = (ec.phi - (2.5 * e1.phi - 1.25 * e2.phi)).lpNorm<Eigen::Infinity>();
    pass = pass && worst_lin < 1e-10;
  }
  return report(4, pass,
                "efficiency " + fmt(worst_eff, 12) + " (< 1e-8); dummy " +
                    fmt(std::fabs(dummy.phi[3]), 15) + " (< 1e-12); symmetry and "
                    "linearity " + fmt(worst_lin, 12) + " (< 1e-10)");
}

// ---- 5. Burr generator fidelity --------------------------------------------------

double kendall_tau(const Vector& a, const Vector& b) {
  long long concordant = 0, discordant = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = i + 1; j < a.size(); ++j) {
      const double s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0)
        ++concordant;
      else if (s < 0)
        ++discordant;
    }
  return static_cast<double>(concordant - discordant) /
         (0.5 * static_cast<double>(a.size()) * static_cast<double>(a.size() - 1));
}

bool criterion_burr() {
  Rng rng(20240105);
  // Marginal KS at n = 1e5 on a grid-sampled spec.
  Rng spec_rng = rng.child(1);
  const BurrSpec spec = make_burr_spec(5, 2.0, spec_rng);
  Rng draw_rng = rng.child(2);
  const Matrix draws = burr_draw(spec.params, 100000, draw_rng);
  double ks = 0;
  {
    std::vector<double> u(100000);
    for (int i = 0; i < 100000; ++i)
      u[static_cast<std::size_t>(i)] =
          burr_marginal_cdf(draws(i, 0), 2.0, spec.params.b[0], spec.params.r[0]);
    std::sort(u.begin(), u.end());
    for (std::size_t i = 0; i < u.size(); ++i)
      ks = std::max({ks, std::fabs(u[i] - static_cast<double>(i) / 100000.0),
                     std::fabs(u[i] - static_cast<double>(i + 1) / 100000.0)});
  }

  // Conditional parameters against a rejection oracle, three random cases.
  double worst_sigmas = 0;
  for (int trial = 0; trial < 3; ++trial) {
    Rng r = rng.child(10 + static_cast<std::uint64_t>(trial));
    BurrParams p;
    p.kappa = 2.0;
    p.b = Vector(3);
    p.r = Vector(3);
    for (int j = 0; j < 3; ++j) {
      p.b[j] = 2.0 + 0.25 * static_cast<double>(r.uniform_index(9));
      p.r[j] = 1.0 + 0.25 * static_cast<double>(r.uniform_index(9));
    }
    // Condition on the third coordinate near its median.
    const double x3 =
        std::pow((std::pow(2.0, 1.0 / p.kappa) - 1.0) / p.r[2], 1.0 / p.b[2]);
    Vector x_obs(1);
    x_obs << x3;
    const BurrParams cond = burr_conditional_params(p, {2}, x_obs);
    Rng direct_rng = r.child(1);
    const Matrix direct = burr_draw(cond, 200000, direct_rng);
    const double direct_mean = direct.col(0).mean();

    Rng joint_rng = r.child(2);
    const Matrix joint = burr_draw(p, 2000000, joint_rng);
    double sum = 0, sum2 = 0;
    long long kept = 0;
    const double window = 0.02 * x3;
    for (int i = 0; i < joint.rows(); ++i) {
      if (std::fabs(joint(i, 2) - x3) < window) {
        sum += joint(i, 0);
        sum2 += joint(i, 0) * joint(i, 0);
        ++kept;
      }
    }
    const double mc = sum / static_cast<double>(kept);
    const double sd = std::sqrt(std::max(0.0, sum2 / kept - mc * mc));
    const double se = sd / std::sqrt(static_cast<double>(kept));
    worst_sigmas = std::max(worst_sigmas, std::fabs(direct_mean - mc) / (se + 1e-12));
  }

  // Average pairwise Kendall tau over the parameter grids at kappa = 2.
  double tau_sum = 0;
  int tau_count = 0;
  for (int s = 0; s < 8; ++s) {
    Rng sr = rng.child(100 + static_cast<std::uint64_t>(s));
    const BurrSpec grid_spec = make_burr_spec(5, 2.0, sr);
    Rng dr = rng.child(200 + static_cast<std::uint64_t>(s));
    const Matrix sample = burr_draw(grid_spec.params, 1500, dr);
    for (int a = 0; a < 5; ++a)
      for (int b = a + 1; b < 5; ++b) {
        tau_sum += kendall_tau(sample.col(a), sample.col(b));
        ++tau_count;
      }
  }
  const double tau = tau_sum / tau_count;

  const bool pass = ks < 0.01 && worst_sigmas < 3.0 + 1e-9 && std::fabs(tau - 0.20) < 0.03;
  return report(5, pass,
                "marginal KS " + fmt(ks, 4) + " (< 0.01); conditional-mean oracle worst " +
                    fmt(worst_sigmas, 2) + " se (< 3); Kendall tau " + fmt(tau, 3) +
                    " (0.20 +- 0.03)");
}

// ---- 6. Truth-oracle cross-check -------------------------------------------------

bool criterion_truth_oracle() {
  DiscretizedGaussianSpec spec;
  spec.m = 3;
  spec.rho = 0.5;
  spec.cutoffs = {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}};
  Rng rng(20240106);
  LinearModel model;
  model.schema = spec.schema();
  model.alpha = rng.normal();
  model.beta.resize(3);
  model.gamma = Vector::Zero(3);
  for (int j = 0; j < 3; ++j) {
    model.beta[static_cast<std::size_t>(j)] = Vector(3);
    for (int l = 0; l < 3; ++l)
      model.beta[static_cast<std::size_t>(j)][l] = rng.normal();
  }

  Rng gen = rng.child(1);
  const Dataset data = gen_discretized_dataset(spec, 1000000, gen);
  Rng pick = rng.child(2);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint64_t bits = 1 + pick.uniform_index(6);
    const Coalition obs(bits, 3);
    Vector x(3);
    for (int j = 0; j < 3; ++j)
      x[j] = 1.0 + static_cast<double>(pick.uniform_index(3));
    double sum = 0, sum2 = 0;
    long long kept = 0;
    for (int i = 0; i < data.n(); ++i) {
      bool match = true;
      for (int j : obs.members())
        if (data.x(i, j) != x[j]) {
          match = false;
          break;
        }
      if (!match) continue;
      const double f = model.predict(data.x.row(i).transpose());
      sum += f;
      sum2 += f * f;
      ++kept;
    }
    const double mc = sum / static_cast<double>(kept);
    const double sd = std::sqrt(std::max(0.0, sum2 / kept - mc * mc));
    const double se = sd / std::sqrt(static_cast<double>(kept)) + 1e-12;
    const double v = true_v_categorical(spec, model, x, obs);
    worst = std::max(worst, std::fabs(v - mc) / se);
  }

  double worst_orthant = 0;
  const double inf = std::numeric_limits<double>::infinity();
  for (double rho : {0.0, 0.5, 0.9}) {
    MvnRect rect;
    rect.lower = Vector::Constant(2, -inf);
    rect.upper = Vector::Zero(2);
    const auto p = mvn_rect_prob(Vector::Zero(2), equicorrelation(2, rho), rect);
    const double truth = 0.25 + std::asin(rho) / (2.0 * 3.14159265358979323846);
    worst_orthant = std::max(worst_orthant, std::fabs(p.value - truth));
  }
  const bool pass = worst < 3.0 + 1e-9 && worst_orthant < 1e-4;
  return report(6, pass,
                "categorical oracle vs rejection MC, worst " + fmt(worst, 2) +
                    " se over 20 cases (< 3); orthant closed form, worst |diff| " +
                    fmt(worst_orthant, 6) + " (< 1e-4)");
}

// ---- 7. Table-2 style Burr reproduction ------------------------------------------

bool criterion_burr_study(const std::string& scratch) {
  Timer timer;
  ExperimentConfig config;
  config.generator = "burr";
  config.m = 5;
  config.kappa = 2.0;
  config.predictor = "forest";
  config.methods = {"truth", "independence", "vaeac"};
  config.k = 250;
  config.k_true = 5000;
  config.n_train = 1000;
  config.n_test = 50;
  config.repetitions = 3;
  config.seed = 1234;
  config.out_dir = scratch + "/burr_study";
  config.threads = 2;
  const auto result = run_experiment(config);
  double ec1_vaeac = 0, ec1_indep = 0;
  for (const auto& r : result.aggregate) {
    if (r.method == "vaeac") ec1_vaeac = r.ec1;
    if (r.method == "independence") ec1_indep = r.ec1;
  }
  const double mins = timer.minutes();
  const bool pass = ec1_vaeac < ec1_indep && ec1_vaeac >= 0.01 && ec1_vaeac <= 0.07 &&
                    ec1_indep >= 0.07 && ec1_indep <= 0.16 && mins < 45.0;
  return report(7, pass,
                "M=5 Burr, R=3: EC1(vaeac) " + fmt(ec1_vaeac) +
                    " (in [0.01, 0.07], paper 0.0264), EC1(indep) " + fmt(ec1_indep) +
                    " (in [0.07, 0.16], paper 0.1095), vaeac < indep, " +
                    fmt(mins, 1) + " min (< 45)");
}

// ---- 8. Table-4 style mixed reproduction -----------------------------------------

bool criterion_mixed_study(const std::string& scratch) {
  Timer timer;
  ExperimentConfig config;
  config.generator = "discretized-gaussian";
  config.m = 4;
  config.rho = 0.5;
  config.cutoffs = {{-0.5, 0.0, 1.0}, {-0.5, 0.0, 1.0}, {}, {}};
  config.response_noise_sd = 1.0;
  LinearModel response;
  response.alpha = 1.0;
  response.beta.resize(4);
  response.beta[0] = Vector(4);
  response.beta[0] << 1.0, 0.0, -1.0, 0.5;
  response.beta[1] = Vector(4);
  response.beta[1] << 2.0, 3.0, -1.0, -0.5;
  response.gamma = Vector::Zero(4);
  response.gamma[2] = 1.0;
  response.gamma[3] = -1.0;
  config.fixed_response = response;
  config.predictor = "linear";
  config.methods = {"truth", "independence", "vaeac"};
  config.k = 250;
  config.n_train = 1000;
  config.n_test = 50;
  config.repetitions = 3;
  config.seed = 3;
  config.out_dir = scratch + "/mixed_study";
  config.threads = 2;
  const auto result = run_experiment(config);
  double ec1_vaeac = 0, ec1_indep = 0;
  for (const auto& r : result.aggregate) {
    if (r.method == "vaeac") ec1_vaeac = r.ec1;
    if (r.method == "independence") ec1_indep = r.ec1;
  }
  const double mins = timer.minutes();
  const bool pass = ec1_vaeac < 0.5 * ec1_indep && mins < 60.0;
  return report(8, pass,
                "M=4 mixed (2 cont + 2 cat L=4), rho=0.5, R=3: EC1(vaeac) " +
                    fmt(ec1_vaeac) + " < 0.5 * EC1(indep) " + fmt(ec1_indep) +
                    " (paper 0.0792 vs 0.3541), " + fmt(mins, 1) + " min (< 60)");
}

// ---- 9. Masking-scheme effect ----------------------------------------------------

bool criterion_masking_scheme(const std::string& scratch) {
  Timer timer;
  ExperimentConfig config;
  config.generator = "burr";
  config.m = 12;
  config.kappa = 2.0;
  config.predictor = "forest";
  config.methods = {"vaeac", "vaeac_c"};
  config.n_coalitions = 200;
  config.k = 250;
  config.n_train = 1000;
  config.n_test = 25;
  config.repetitions = 3;
  config.seed = 4;
  config.vaeac.epochs = 100;
  config.out_dir = scratch + "/masking_study";
  config.threads = 2;
  const auto result = run_experiment(config);
  int wins = 0;
  std::string detail;
  for (int rep = 0; rep < 3; ++rep) {
    double e_vaeac = 0, e_vaeac_c = 0;
    for (const auto& r : result.reports) {
      if (r.repetition != rep) continue;
      if (r.method == "vaeac") e_vaeac = r.ec3;
      if (r.method == "vaeac_c") e_vaeac_c = r.ec3;
    }
    if (e_vaeac_c <= e_vaeac) ++wins;
    detail += " rep" + std::to_string(rep) + ": " + fmt(e_vaeac_c, 3) + " vs " +
              fmt(e_vaeac, 3) + ";";
  }
  const bool pass = wins >= 2;
  return report(9, pass,
                "M=12 Burr, N_S=200: EC3(vaeac_c) <= EC3(vaeac) in " +
                    std::to_string(wins) + "/3 repetitions (need >= 2);" + detail + " " +
                    fmt(timer.minutes(), 1) + " min");
}

// ---- 10. K-sensitivity -----------------------------------------------------------

bool criterion_k_sensitivity(const std::string& scratch) {
  ExperimentConfig config;
  config.generator = "burr";
  config.m = 5;
  config.kappa = 2.0;
  config.predictor = "forest";
  config.methods = {"truth", "vaeac"};
  config.k_true = 5000;
  config.n_train = 1000;
  config.n_test = 50;
  config.repetitions = 1;
  config.seed = 1234;
  config.threads = 2;

  config.k = 250;
  config.out_dir = scratch + "/k250";
  const auto at_250 = run_experiment(config);
  config.k = 1000;
  config.out_dir = scratch + "/k1000";
  const auto at_1000 = run_experiment(config);
  double e250 = 0, e1000 = 0;
  for (const auto& r : at_250.aggregate)
    if (r.method == "vaeac") e250 = r.ec1;
  for (const auto& r : at_1000.aggregate)
    if (r.method == "vaeac") e1000 = r.ec1;
  const double rel = std::fabs(e250 - e1000) / e250;
  return report(10, rel < 0.15,
                "EC1(vaeac) at K=250: " + fmt(e250) + ", at K=1000: " + fmt(e1000) +
                    ", relative difference " + fmt(rel, 3) + " (< 0.15)");
}

// ---- 11. CLI determinism ---------------------------------------------------------

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

bool files_equal(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

bool criterion_cli_determinism(const std::string& cli, const std::string& scratch) {
  if (cli.empty())
    return report(11, false, "no --cli binary provided");
  const fs::path dir = fs::path(scratch) / "determinism";
  fs::create_directories(dir);
  const std::string d = dir.string();
  bool pass = true;
  std::string detail;

  // simulate twice (burr and discretized).
  pass &= run_cli(cli, "simulate --generator burr --m 5 --n 60 --seed 7 --out " + d +
                           "/a.csv") == 0;
  pass &= run_cli(cli, "simulate --generator burr --m 5 --n 60 --seed 7 --out " + d +
                           "/b.csv") == 0;
  const bool sim_ok = files_equal(d + "/a.csv", d + "/b.csv") &&
                      files_equal(d + "/a.csv.schema.json", d + "/b.csv.schema.json");
  pass &= sim_ok;
  detail += std::string("simulate ") + (sim_ok ? "ok" : "DIFFERS") + "; ";

  // train-vaeac twice.
  pass &= run_cli(cli, "train-vaeac --data " + d + "/a.csv --out " + d +
                           "/m1.ckpt --log " + d +
                           "/l1.csv --seed 3 --epochs 6 --multistart 2") == 0;
  pass &= run_cli(cli, "train-vaeac --data " + d + "/a.csv --out " + d +
                           "/m2.ckpt --log " + d +
                           "/l2.csv --seed 3 --epochs 6 --multistart 2") == 0;
  const bool train_ok =
      files_equal(d + "/m1.ckpt", d + "/m2.ckpt") && files_equal(d + "/l1.csv", d + "/l2.csv");
  pass &= train_ok;
  detail += std::string("train-vaeac ") + (train_ok ? "ok" : "DIFFERS") + "; ";

  // explain twice (vaeac conditioner, fitted forest).
  const std::string explain_args =
      "explain --data " + d + "/a.csv --train " + d +
      "/a.csv --fit forest --method vaeac --checkpoint " + d +
      "/m1.ckpt --k 20 --seed 5 --tables {T} --out {O}";
  auto subst = [&](std::string s, const std::string& o, const std::string& t) {
    s.replace(s.find("{O}"), 3, o);
    s.replace(s.find("{T}"), 3, t);
    return s;
  };
  pass &= run_cli(cli, subst(explain_args, d + "/p1.csv", d + "/t1.csv")) == 0;
  pass &= run_cli(cli, subst(explain_args, d + "/p2.csv", d + "/t2.csv")) == 0;
  const bool explain_ok =
      files_equal(d + "/p1.csv", d + "/p2.csv") && files_equal(d + "/t1.csv", d + "/t2.csv");
  pass &= explain_ok;
  detail += std::string("explain ") + (explain_ok ? "ok" : "DIFFERS") + "; ";

  // evaluate twice.
  pass &= run_cli(cli, "evaluate --true-phi " + d + "/p1.csv --est-phi " + d +
                           "/p2.csv --est-v " + d + "/t1.csv --m 5 --out " + d +
                           "/e1.json") == 0;
  pass &= run_cli(cli, "evaluate --true-phi " + d + "/p1.csv --est-phi " + d +
                           "/p2.csv --est-v " + d + "/t1.csv --m 5 --out " + d +
                           "/e2.json") == 0;
  const bool eval_ok = files_equal(d + "/e1.json", d + "/e2.json");
  pass &= eval_ok;
  detail += std::string("evaluate ") + (eval_ok ? "ok" : "DIFFERS") + "; ";

  // run-experiment twice; every output except the timing diagnostics must be
  // byte-identical.
  Json cfg;
  cfg["generator"] = "burr";
  cfg["m"] = 5;
  cfg["predictor"] = "forest";
  cfg["forest_trees"] = 20;
  cfg["methods"] = {"truth", "independence"};
  cfg["k"] = 20;
  cfg["k_true"] = 100;
  cfg["n_train"] = 120;
  cfg["n_test"] = 4;
  cfg["repetitions"] = 2;
  cfg["seed"] = 9;
  cfg["threads"] = 2;
  cfg["dump_tables"] = true;
  detail::write_file(d + "/exp.json", cfg.dump(2));
  pass &= run_cli(cli, "run-experiment --config " + d + "/exp.json --out " + d + "/r1") == 0;
  pass &= run_cli(cli, "run-experiment --config " + d + "/exp.json --out " + d + "/r2") == 0;
  bool exp_ok = true;
  for (const auto& entry : fs::directory_iterator(d + "/r1")) {
    const std::string name = entry.path().filename().string();
    if (name == "timings.json") continue;  // wall-clock diagnostics
    exp_ok &= files_equal(entry.path(), fs::path(d + "/r2") / name);
  }
  pass &= exp_ok;
  detail += std::string("run-experiment ") + (exp_ok ? "ok (timings.json excluded)" : "DIFFERS");

  return report(11, pass, "byte-identical reruns: " + detail);
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  std::string cli;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
    if (arg == "--cli" && i + 1 < argc) cli = argv[++i];
  }
  const std::string scratch =
      (fs::temp_directory_path() / "condshap_acceptance").string();
  fs::create_directories(scratch);

  bool all = true;
  auto want = [&](int id) { return only == 0 || only == id; };
  if (want(1)) all &= criterion_gradients();
  if (want(2)) all &= criterion_kl();
  if (want(3)) all &= criterion_solver_equivalence();
  if (want(4)) all &= criterion_axioms();
  if (want(5)) all &= criterion_burr();
  if (want(6)) all &= criterion_truth_oracle();
  if (want(7)) all &= criterion_burr_study(scratch);
  if (want(8)) all &= criterion_mixed_study(scratch);
  if (want(9)) all &= criterion_masking_scheme(scratch);
  if (want(10)) all &= criterion_k_sensitivity(scratch);
  if (want(11)) all &= criterion_cli_determinism(cli, scratch);
  return all ? 0 : 1;
}

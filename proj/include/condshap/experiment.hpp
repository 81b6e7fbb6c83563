#pragma once

// Experiment harness: per repetition it generates data, fits the black-box
// model, draws one shared coalition sample, trains the conditioners, computes
// truth where the generator admits it, explains the test set per method, and
// scores EC1/EC2/EC3. Every random stream is derived from (master seed,
// repetition, stage, method, instance), so results do not depend on worker
// count or on which other methods run.

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "condshap/conditioners.hpp"
#include "condshap/datagen.hpp"
#include "condshap/io.hpp"
#include "condshap/metrics.hpp"
#include "condshap/predictors.hpp"
#include "condshap/shapley.hpp"
#include "condshap/vaeac.hpp"

namespace condshap {

inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([=, &body] {
      for (int i = t; i < n; i += threads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct ExperimentConfig {
  // generator: "burr", "discretized-gaussian", or "csv"
  std::string generator = "burr";
  int m = 5;
  double kappa = 2.0;
  bool burr_noise = true;
  double rho = 0.5;
  std::vector<std::vector<double>> cutoffs;  // discretized generator
  double response_noise_sd = 1.0;
  // Optional fixed response coefficients for the discretized generator; when
  // absent they are sampled per repetition from the grids beta in
  // {-1.0, -0.9, .., 3.0} and gamma in {-1.0, .., 1.0}, with alpha = 1.
  std::optional<LinearModel> fixed_response;
  std::string csv_train;  // external data paths
  std::string csv_test;

  std::string predictor = "forest";  // "linear" | "forest"
  ForestHyper forest;

  std::vector<std::string> methods = {"truth", "independence", "gaussian", "vaeac"};
  long long n_coalitions = 0;  // N_S; 0 or >= 2^M means the full power set
  int k = kDefaultMcSamples;
  int k_true = 5000;
  int n_train = 1000;
  int n_test = 100;
  int repetitions = 1;
  std::uint64_t seed = 1;
  VaeacHyper vaeac;
  std::string out_dir = "out";
  int threads = 0;
  bool dump_tables = false;
  bool weighted_ec1 = false;  // all-categorical studies: mass-weighted EC1

  bool plan_is_exact() const {
    return n_coalitions <= 0 ||
           (m <= kMaxExactM && n_coalitions >= (1LL << m));
  }
};

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  c.generator = j.value("generator", c.generator);
  c.m = j.value("m", c.m);
  c.kappa = j.value("kappa", c.kappa);
  c.burr_noise = j.value("burr_noise", c.burr_noise);
  c.rho = j.value("rho", c.rho);
  if (j.contains("cutoffs"))
    c.cutoffs = j.at("cutoffs").get<std::vector<std::vector<double>>>();
  c.response_noise_sd = j.value("response_noise_sd", c.response_noise_sd);
  c.csv_train = j.value("csv_train", c.csv_train);
  c.csv_test = j.value("csv_test", c.csv_test);
  c.predictor = j.value("predictor", c.predictor);
  c.forest.trees = j.value("forest_trees", c.forest.trees);
  c.forest.min_leaf = j.value("forest_min_leaf", c.forest.min_leaf);
  c.forest.mtry = j.value("forest_mtry", c.forest.mtry);
  if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
  c.n_coalitions = j.value("n_coalitions", c.n_coalitions);
  c.k = j.value("k", c.k);
  c.k_true = j.value("k_true", c.k_true);
  c.n_train = j.value("n_train", c.n_train);
  c.n_test = j.value("n_test", c.n_test);
  c.repetitions = j.value("repetitions", c.repetitions);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.threads = j.value("threads", c.threads);
  c.dump_tables = j.value("dump_tables", c.dump_tables);
  c.weighted_ec1 = j.value("weighted_ec1", c.weighted_ec1);
  if (j.contains("vaeac")) {
    const Json& v = j.at("vaeac");
    c.vaeac.depth = v.value("depth", c.vaeac.depth);
    c.vaeac.width = v.value("width", c.vaeac.width);
    c.vaeac.latent_dim = v.value("latent_dim", c.vaeac.latent_dim);
    c.vaeac.lr = v.value("lr", c.vaeac.lr);
    c.vaeac.batch_size = v.value("batch_size", c.vaeac.batch_size);
    c.vaeac.epochs = v.value("epochs", c.vaeac.epochs);
    c.vaeac.sigma_mu = v.value("sigma_mu", c.vaeac.sigma_mu);
    c.vaeac.sigma_sigma = v.value("sigma_sigma", c.vaeac.sigma_sigma);
    c.vaeac.iwae_samples = v.value("iwae_samples", c.vaeac.iwae_samples);
    c.vaeac.validation_fraction =
        v.value("validation_fraction", c.vaeac.validation_fraction);
    c.vaeac.multistart = v.value("multistart", c.vaeac.multistart);
    c.vaeac.warmup_epochs = v.value("warmup_epochs", c.vaeac.warmup_epochs);
  }
  if (j.contains("response")) {
    const Json& r = j.at("response");
    LinearModel model;
    model.alpha = r.value("alpha", 1.0);
    if (r.contains("beta")) {
      for (const auto& b : r.at("beta")) {
        const auto vals = b.get<std::vector<double>>();
        model.beta.push_back(
            Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
      }
    }
    if (r.contains("gamma")) {
      const auto g = r.at("gamma").get<std::vector<double>>();
      model.gamma = Eigen::Map<const Vector>(g.data(), static_cast<Eigen::Index>(g.size()));
    }
    c.fixed_response = std::move(model);
  }
  return c;
}

namespace detail {

constexpr std::uint64_t kRepStream = stream_tag("experiment-rep");
constexpr std::uint64_t kDataStream = stream_tag("data");
constexpr std::uint64_t kTestStream = stream_tag("test-data");
constexpr std::uint64_t kSpecStream = stream_tag("generator-spec");
constexpr std::uint64_t kResponseStream = stream_tag("response");
constexpr std::uint64_t kPredictorStream = stream_tag("predictor");
constexpr std::uint64_t kCoalitionsStream = stream_tag("coalitions");
constexpr std::uint64_t kTruthStream = stream_tag("truth");

struct StageClock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace detail

// One repetition's generated state.
struct RepetitionData {
  Dataset train;
  Dataset test;
  std::optional<BurrSpec> burr;
  std::optional<DiscretizedGaussianSpec> discretized;
  std::optional<LinearModel> response_model;  // discretized generator
  std::vector<double> test_weights;           // weighted EC1 masses (may be empty)
};

namespace detail {

inline LinearModel sample_response_model(const DiscretizedGaussianSpec& spec, Rng& rng) {
  const FeatureSchema schema = spec.schema();
  LinearModel model;
  model.schema = schema;
  model.alpha = 1.0;
  model.beta.resize(static_cast<std::size_t>(schema.size()));
  model.gamma = Vector::Zero(schema.size());
  for (int j = 0; j < schema.size(); ++j) {
    if (schema.is_categorical(j)) {
      Vector b(schema.levels(j));
      for (int l = 0; l < schema.levels(j); ++l)
        b[l] = -1.0 + 0.1 * static_cast<double>(rng.uniform_index(41));
      model.beta[static_cast<std::size_t>(j)] = std::move(b);
    } else {
      model.gamma[j] = -1.0 + 0.1 * static_cast<double>(rng.uniform_index(21));
    }
  }
  return model;
}

// Enumerates the most likely label combinations of an all-categorical spec,
// with renormalized masses (the weighted-EC1 protocol).
inline std::pair<Matrix, std::vector<double>> enumerate_categorical(
    const DiscretizedGaussianSpec& spec, int max_rows) {
  const FeatureSchema schema = spec.schema();
  long long combos = 1;
  for (int j = 0; j < schema.size(); ++j) {
    combos *= schema.levels(j);
    if (combos > 100000)
      throw InputError("weighted EC1: enumeration too large");
  }
  std::vector<std::pair<double, std::vector<int>>> rows;
  std::vector<int> labels(static_cast<std::size_t>(schema.size()), 1);
  std::vector<int> all_idx(static_cast<std::size_t>(schema.size()));
  std::iota(all_idx.begin(), all_idx.end(), 0);
  for (long long it = 0; it < combos; ++it) {
    const double mass = detail::label_rect_prob(spec, all_idx, labels);
    rows.emplace_back(mass, labels);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < schema.levels(static_cast<int>(i))) {
        ++labels[i];
        break;
      }
      labels[i] = 1;
    }
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(rows.size()) > max_rows) rows.resize(static_cast<std::size_t>(max_rows));
  Matrix x(static_cast<Eigen::Index>(rows.size()), schema.size());
  std::vector<double> weights(rows.size());
  double total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) total += rows[i].first;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    weights[i] = rows[i].first / total;
    for (int j = 0; j < schema.size(); ++j)
      x(static_cast<Eigen::Index>(i), j) = rows[i].second[static_cast<std::size_t>(j)];
  }
  return {std::move(x), std::move(weights)};
}

}  // namespace detail

inline RepetitionData generate_repetition(const ExperimentConfig& config, int rep,
                                          const Rng& master) {
  const Rng rep_rng = master.child(detail::kRepStream, static_cast<std::uint64_t>(rep));
  RepetitionData data;
  if (config.generator == "burr") {
    Rng spec_rng = rep_rng.child(detail::kSpecStream);
    data.burr = make_burr_spec(config.m, config.kappa, spec_rng, config.burr_noise);
    Rng train_rng = rep_rng.child(detail::kDataStream);
    data.train = gen_burr_dataset(*data.burr, config.n_train, train_rng);
    Rng test_rng = rep_rng.child(detail::kTestStream);
    data.test = gen_burr_dataset(*data.burr, config.n_test, test_rng);
  } else if (config.generator == "discretized-gaussian") {
    DiscretizedGaussianSpec spec;
    spec.m = config.m;
    spec.rho = config.rho;
    spec.cutoffs = config.cutoffs;
    spec.validate();
    data.discretized = spec;
    LinearModel response;
    if (config.fixed_response) {
      response = *config.fixed_response;
      response.schema = spec.schema();
    } else {
      Rng coeff_rng = rep_rng.child(detail::kResponseStream);
      response = detail::sample_response_model(spec, coeff_rng);
    }
    data.response_model = response;
    Rng train_rng = rep_rng.child(detail::kDataStream);
    data.train = gen_discretized_dataset(spec, config.n_train, train_rng);
    Rng noise_rng = rep_rng.child(detail::kResponseStream, 1);
    data.train.y =
        gen_response_mixed(data.train.x, response, config.response_noise_sd, noise_rng);
    if (config.weighted_ec1) {
      const FeatureSchema schema = spec.schema();
      if (std::all_of(schema.features.begin(), schema.features.end(),
                      [](const Feature& f) { return f.kind == FeatureKind::kCategorical; })) {
        auto [x, w] = detail::enumerate_categorical(spec, config.n_test);
        data.test.schema = spec.schema();
        data.test.x = std::move(x);
        data.test_weights = std::move(w);
      } else {
        throw ConfigError("weighted_ec1 needs an all-categorical generator");
      }
    } else {
      Rng test_rng = rep_rng.child(detail::kTestStream);
      data.test = gen_discretized_dataset(spec, config.n_test, test_rng);
    }
    // Test responses are not needed; predictions come from the fitted model.
  } else if (config.generator == "csv") {
    data.train = read_dataset(config.csv_train);
    data.test = read_dataset(config.csv_test.empty() ? config.csv_train : config.csv_test,
                             /*expect_response=*/false);
    if (config.n_test > 0 && data.test.n() > config.n_test)
      data.test.x.conservativeResize(config.n_test, Eigen::NoChange);
  } else {
    throw ConfigError("unknown generator: " + config.generator);
  }
  return data;
}

struct MethodResult {
  std::string name;
  std::vector<InstanceExplanation> instances;
  double train_seconds = 0;
  double explain_seconds = 0;
};

// Builds the conditioner for one method and explains the whole test set.
inline MethodResult run_method(const ExperimentConfig& config, const std::string& name,
                               const RepetitionData& data, const Predictor& predictor,
                               double phi0, const CoalitionPlan& plan, const Rng& rep_rng) {
  MethodResult result;
  result.name = name;
  const Rng method_rng = rep_rng.child(stream_tag("method"), stream_tag(name));

  std::unique_ptr<Conditioner> conditioner;
  int k = config.k;
  detail::StageClock train_clock;
  if (name == "independence") {
    conditioner = std::make_unique<IndependenceConditioner>(data.train.x);
  } else if (name == "gaussian") {
    conditioner = std::make_unique<GaussianConditioner>(
        GaussianConditioner::from_training(data.train.x));
  } else if (name == "vaeac" || name == "vaeac_c") {
    MaskingScheme scheme = MaskingScheme::uniform();
    if (name == "vaeac_c") {
      if (plan.exact)
        throw ConfigError("vaeac_c requires a sampled coalition plan");
      std::vector<std::pair<Coalition, double>> table;
      for (const auto& [c, count] : plan.sample.counts)
        table.emplace_back(c, static_cast<double>(count));
      scheme = MaskingScheme::frequency(std::move(table));
    }
    auto [model, log] = train_vaeac(data.train.x, data.train.schema, scheme,
                                    config.vaeac, method_rng.child(stream_tag("train")));
    (void)log;
    conditioner = std::make_unique<VaeacConditioner>(
        std::make_shared<VaeacModel>(std::move(model)));
  } else if (name == "truth") {
    if (data.burr) {
      conditioner = std::make_unique<BurrTruthConditioner>(data.burr->params);
      k = config.k_true;
    }
    // Discretized truth is exact: handled below without a conditioner.
  } else {
    throw ConfigError("unknown method: " + name);
  }
  result.train_seconds = train_clock.seconds();

  detail::StageClock explain_clock;
  const int n = data.test.n();
  result.instances.resize(static_cast<std::size_t>(n));
  if (conditioner) {
    const Conditioner& cond = *conditioner;
    parallel_for(n, config.threads, [&](int i) {
      const Rng instance_rng = method_rng.child(stream_tag("explain-instance"),
                                                static_cast<std::uint64_t>(i));
      result.instances[static_cast<std::size_t>(i)] =
          explain_instance(predictor, cond, data.test.x.row(i).transpose(), plan, k,
                           phi0, instance_rng, i);
    });
  } else {
    // Exact oracle over the discretized-Gaussian generator.
    const DiscretizedGaussianSpec& spec = *data.discretized;
    const LinearModel& response = *data.response_model;
    const FeatureSchema schema = spec.schema();
    const bool all_cat = std::all_of(
        schema.features.begin(), schema.features.end(),
        [](const Feature& f) { return f.kind == FeatureKind::kCategorical; });
    parallel_for(n, config.threads, [&](int i) {
      const Vector x = data.test.x.row(i).transpose();
      InstanceExplanation& out = result.instances[static_cast<std::size_t>(i)];
      out.table.m = config.m;
      out.table.instance_id = i;
      out.table.phi0 = phi0;
      out.table.fx = predictor.predict(x);
      auto v_true = [&](const Coalition& s) {
        return all_cat ? true_v_categorical(spec, response, x, s)
                       : true_v_mixed(spec, response, x, s);
      };
      if (plan.exact) {
        const std::uint64_t full = (1ULL << config.m) - 1;
        out.table.values.reserve(full - 1);
        for (std::uint64_t bits = 1; bits < full; ++bits) {
          const Coalition s(bits, config.m);
          out.table.values.emplace_back(s, v_true(s));
        }
        out.explanation = exact_shapley(out.table, config.m);
      } else {
        std::vector<double> v_hat;
        for (const auto& [s, count] : plan.sample.counts) {
          (void)count;
          const double v = v_true(s);
          v_hat.push_back(v);
          out.table.values.emplace_back(s, v);
        }
        out.explanation = kernelshap_wls(plan.sample, v_hat, phi0, out.table.fx);
      }
    });
  }
  result.explain_seconds = explain_clock.seconds();
  return result;
}

struct ExperimentResult {
  std::vector<EvalReport> reports;             // one row per (method, repetition)
  std::vector<EvalReport> aggregate;           // mean over repetitions per method
  std::vector<std::pair<int, std::string>> failures;  // (repetition, stage: what)
  Json timings = Json::object();
};

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.repetitions < 1 || config.n_test < 1 || config.k < 1)
    throw ConfigError("experiment: counts must be positive");
  namespace fs = std::filesystem;
  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);
  const Rng master(config.seed);

  ExperimentResult result;
  const bool truth_available = config.generator != "csv";
  const bool want_truth_reference =
      truth_available &&
      std::find(config.methods.begin(), config.methods.end(), "truth") !=
          config.methods.end();

  for (int rep = 0; rep < config.repetitions; ++rep) {
    const Rng rep_rng = master.child(detail::kRepStream, static_cast<std::uint64_t>(rep));
    std::string stage = "generate";
    try {
    const RepetitionData data = generate_repetition(config, rep, master);

    // Black-box model.
    stage = "fit-predictor";
    std::unique_ptr<Predictor> predictor;
    if (config.predictor == "linear") {
      predictor = std::make_unique<LinearModel>(
          fit_linear(data.train.x, data.train.y, data.train.schema));
    } else if (config.predictor == "forest") {
      predictor = std::make_unique<ForestModel>(
          fit_forest(data.train.x, data.train.y, data.train.schema, config.forest,
                     rep_rng.child(detail::kPredictorStream)));
    } else {
      throw ConfigError("unknown predictor: " + config.predictor);
    }
    if (!data.train.has_response())
      throw ConfigError("experiment: training data has no response column");
    const double phi0 = data.train.y.mean();

    // One shared coalition sample per repetition.
    stage = "coalitions";
    CoalitionPlan plan = CoalitionPlan::make_exact();
    if (!config.plan_is_exact()) {
      Rng coal_rng = rep_rng.child(detail::kCoalitionsStream);
      plan = CoalitionPlan::sampled(
          sample_coalitions(config.m, config.n_coalitions, coal_rng));
    } else if (config.m > kMaxExactM) {
      throw ConfigError("experiment: M > 20 requires a sampled plan (n_coalitions)");
    }
    const CoalitionSet coalition_set = plan.exact
                                           ? CoalitionSet::all_proper(config.m)
                                           : CoalitionSet::from_sample(plan.sample);

    // Run every requested method; keep the truth tables for EC1/EC2.
    std::vector<MethodResult> method_results;
    for (const auto& name : config.methods) {
      stage = "method:" + name;
      if (name == "truth" && !truth_available)
        throw ConfigError("truth method needs a synthetic generator");
      method_results.push_back(
          run_method(config, name, data, *predictor, phi0, plan, rep_rng));
    }
    stage = "metrics";

    const MethodResult* truth = nullptr;
    for (const auto& mr : method_results)
      if (mr.name == "truth") truth = &mr;

    std::vector<double> predictions(static_cast<std::size_t>(data.test.n()));
    for (int i = 0; i < data.test.n(); ++i)
      predictions[static_cast<std::size_t>(i)] =
          predictor->predict(data.test.x.row(i).transpose());

    for (const auto& mr : method_results) {
      EvalReport report;
      report.method = mr.name;
      report.repetition = rep;
      report.n_test = data.test.n();
      report.n_coalitions = plan.exact ? (1LL << config.m) - 2
                                       : static_cast<long long>(plan.sample.n_draws);
      report.train_seconds = mr.train_seconds;
      report.explain_seconds = mr.explain_seconds;
      if (truth && want_truth_reference && mr.name != "truth") {
        std::vector<ShapleyExplanation> phi_true, phi_est;
        std::vector<CoalitionValueTable> v_true, v_est;
        for (std::size_t i = 0; i < mr.instances.size(); ++i) {
          phi_true.push_back(truth->instances[i].explanation);
          phi_est.push_back(mr.instances[i].explanation);
          v_true.push_back(truth->instances[i].table);
          v_est.push_back(mr.instances[i].table);
        }
        report.ec1 = data.test_weights.empty()
                         ? ec1(phi_true, phi_est)
                         : ec1_weighted(phi_true, phi_est, data.test_weights);
        report.ec2 = ec2(v_true, v_est, coalition_set);
      }
      {
        std::vector<CoalitionValueTable> v_est;
        for (const auto& inst : mr.instances) v_est.push_back(inst.table);
        report.ec3 = ec3(predictions, v_est, coalition_set);
      }
      result.reports.push_back(report);

      if (!config.out_dir.empty()) {
        const std::string base = config.out_dir + "/rep" + std::to_string(rep) + "_" +
                                 mr.name;
        detail::write_file(base + "_phi.csv", explanations_to_csv(mr.instances));
        if (config.dump_tables)
          detail::write_file(base + "_v.csv", tables_to_csv(mr.instances, coalition_set));
        if (config.dump_tables && mr.name == "gaussian")
          detail::write_file(base + "_fit.json",
                             gaussian_fit_to_json(gaussian_fit(data.train.x)).dump(2) + "\n");
      }
    }
    } catch (const std::exception& e) {
      // A failed repetition is recorded with its stage and the others continue.
      result.failures.emplace_back(rep, stage + ": " + e.what());
    }
  }
  if (!result.failures.empty() && result.reports.empty())
    throw TrainingError("experiment: every repetition failed; first failure (rep " +
                        std::to_string(result.failures.front().first) + ") " +
                        result.failures.front().second);

  // Aggregate means per method, in the configured order.
  for (const auto& name : config.methods) {
    EvalReport agg;
    agg.method = name;
    agg.repetition = -1;
    double se1 = 0, se2 = 0, se3 = 0, n1 = 0, n2 = 0, n3 = 0;
    for (const auto& r : result.reports) {
      if (r.method != name) continue;
      agg.n_test = r.n_test;
      agg.n_coalitions = r.n_coalitions;
      agg.train_seconds += r.train_seconds;
      agg.explain_seconds += r.explain_seconds;
      if (std::isfinite(r.ec1)) {
        se1 += r.ec1;
        n1 += 1;
      }
      if (std::isfinite(r.ec2)) {
        se2 += r.ec2;
        n2 += 1;
      }
      if (std::isfinite(r.ec3)) {
        se3 += r.ec3;
        n3 += 1;
      }
    }
    if (n1 > 0) agg.ec1 = se1 / n1;
    if (n2 > 0) agg.ec2 = se2 / n2;
    if (n3 > 0) agg.ec3 = se3 / n3;
    result.aggregate.push_back(agg);
  }

  if (!config.out_dir.empty()) {
    std::vector<EvalReport> all = result.reports;
    all.insert(all.end(), result.aggregate.begin(), result.aggregate.end());
    detail::write_file(config.out_dir + "/reports.csv", reports_to_csv(all));
    Json report_json;
    report_json["seed"] = config.seed;
    report_json["methods"] = config.methods;
    Json rows = Json::array();
    for (const auto& r : result.reports) {
      Json row;
      row["method"] = r.method;
      row["repetition"] = r.repetition;
      if (std::isfinite(r.ec1)) row["ec1"] = r.ec1;
      if (std::isfinite(r.ec2)) row["ec2"] = r.ec2;
      row["ec3"] = r.ec3;
      rows.push_back(row);
    }
    report_json["repetition_rows"] = rows;
    if (!result.failures.empty()) {
      Json fails = Json::array();
      for (const auto& [rep, what] : result.failures)
        fails.push_back({{"repetition", rep}, {"stage", what}});
      report_json["failures"] = fails;
    }
    Json aggs = Json::array();
    for (const auto& r : result.aggregate) {
      Json row;
      row["method"] = r.method;
      if (std::isfinite(r.ec1)) row["ec1"] = r.ec1;
      if (std::isfinite(r.ec2)) row["ec2"] = r.ec2;
      row["ec3"] = r.ec3;
      aggs.push_back(row);
    }
    report_json["aggregate"] = aggs;
    detail::write_file(config.out_dir + "/report.json", report_json.dump(2) + "\n");

    Json timings;
    for (const auto& r : result.reports) {
      timings[r.method + "_rep" + std::to_string(r.repetition)] = {
          {"train_seconds", r.train_seconds},
          {"explain_seconds", r.explain_seconds}};
    }
    result.timings = timings;
    detail::write_file(config.out_dir + "/timings.json", timings.dump(2) + "\n");
  }
  return result;
}

}  // namespace condshap

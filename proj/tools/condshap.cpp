// Command-line harness around the library: dataset simulation, generative
// model training, per-row Shapley explanation, criterion evaluation, and full
// experiment runs from declarative JSON configs. Every command is a pure
// function of its inputs and --seed, so reruns produce byte-identical files.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "condshap/experiment.hpp"
#include "condshap/io.hpp"

using namespace condshap;

namespace {

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  return Json::parse(in);
}

// Predictor save/load (linear and forest models as JSON).
Json predictor_to_json(const LinearModel& model) {
  Json j;
  j["type"] = "linear";
  j["columns"] = schema_to_json(model.schema);
  j["alpha"] = model.alpha;
  Json beta = Json::array();
  for (const auto& b : model.beta)
    beta.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  j["beta"] = beta;
  j["gamma"] =
      std::vector<double>(model.gamma.data(), model.gamma.data() + model.gamma.size());
  return j;
}

Json predictor_to_json(const ForestModel& model) {
  Json j;
  j["type"] = "forest";
  j["columns"] = schema_to_json(model.schema);
  Json trees = Json::array();
  for (const auto& tree : model.trees) {
    Json t;
    t["seed"] = tree.seed;
    Json nodes = Json::array();
    for (const auto& n : tree.nodes)
      nodes.push_back({n.feature, n.threshold, n.level, n.left, n.right, n.value});
    t["nodes"] = nodes;
    trees.push_back(t);
  }
  j["trees"] = trees;
  return j;
}

std::unique_ptr<Predictor> predictor_from_json(const Json& j) {
  const std::string type = j.at("type");
  if (type == "linear") {
    auto model = std::make_unique<LinearModel>();
    model->schema = schema_from_json(j.at("columns"));
    model->alpha = j.at("alpha").get<double>();
    for (const auto& b : j.at("beta")) {
      const auto vals = b.get<std::vector<double>>();
      model->beta.push_back(
          Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    }
    const auto g = j.at("gamma").get<std::vector<double>>();
    model->gamma = Eigen::Map<const Vector>(g.data(), static_cast<Eigen::Index>(g.size()));
    return model;
  }
  if (type == "forest") {
    auto model = std::make_unique<ForestModel>();
    model->schema = schema_from_json(j.at("columns"));
    for (const auto& t : j.at("trees")) {
      RegressionTree tree;
      tree.seed = t.at("seed").get<std::uint64_t>();
      for (const auto& n : t.at("nodes")) {
        ForestNode node;
        node.feature = n.at(0).get<int>();
        node.threshold = n.at(1).get<double>();
        node.level = n.at(2).get<int>();
        node.left = n.at(3).get<int>();
        node.right = n.at(4).get<int>();
        node.value = n.at(5).get<double>();
        tree.nodes.push_back(node);
      }
      model->trees.push_back(std::move(tree));
    }
    return model;
  }
  throw IoError("unknown predictor type: " + type);
}

CoalitionSample coalitions_from_csv(const std::string& path, int m) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("coalitions: empty file");
  CoalitionSample sample;
  sample.m = m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 2) throw IoError("coalitions: bad row");
    const auto bits = static_cast<std::uint64_t>(std::strtoull(cells[0].c_str(), nullptr, 10));
    const auto count = static_cast<long long>(std::strtoll(cells[1].c_str(), nullptr, 10));
    sample.counts.emplace_back(Coalition(bits, m), count);
    sample.n_draws += count;
  }
  std::sort(sample.counts.begin(), sample.counts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return sample;
}

std::string coalitions_to_csv(const CoalitionSample& sample) {
  std::string out = "coalition_bitmask,count\n";
  for (const auto& [c, count] : sample.counts)
    out += std::to_string(c.bits()) + ',' + std::to_string(count) + '\n';
  return out;
}

// Explanation CSV read-back for `evaluate`.
struct PhiFile {
  std::vector<ShapleyExplanation> rows;
  std::vector<double> predictions;
};

PhiFile read_phi_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("phi csv: empty file " + path);
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "instance_id")
    throw IoError("phi csv: unexpected header in " + path);
  const int m = static_cast<int>(header.size()) - 3;
  PhiFile out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    ShapleyExplanation e;
    e.phi0 = std::strtod(cells[1].c_str(), nullptr);
    e.phi.resize(m);
    for (int j = 0; j < m; ++j)
      e.phi[j] = std::strtod(cells[static_cast<std::size_t>(2 + j)].c_str(), nullptr);
    out.rows.push_back(std::move(e));
    out.predictions.push_back(std::strtod(cells.back().c_str(), nullptr));
  }
  return out;
}

struct TableFile {
  std::vector<CoalitionValueTable> tables;
  CoalitionSet coalitions;
};

TableFile read_tables_csv(const std::string& path, int m) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("table csv: empty file " + path);
  TableFile out;
  std::map<int, CoalitionValueTable> by_instance;
  std::map<std::uint64_t, double> weights;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw IoError("table csv: bad row in " + path);
    const int id = static_cast<int>(std::strtol(cells[0].c_str(), nullptr, 10));
    const auto bits = static_cast<std::uint64_t>(std::strtoull(cells[1].c_str(), nullptr, 10));
    const double count = std::strtod(cells[2].c_str(), nullptr);
    const double v = std::strtod(cells[3].c_str(), nullptr);
    auto& table = by_instance[id];
    table.m = m;
    table.instance_id = id;
    table.values.emplace_back(Coalition(bits, m), v);
    weights[bits] = count;
  }
  for (auto& [id, table] : by_instance) {
    (void)id;
    table.sort();
    out.tables.push_back(std::move(table));
  }
  for (const auto& [bits, w] : weights)
    out.coalitions.entries.emplace_back(Coalition(bits, m), w);
  return out;
}

int run_simulate(const std::string& generator, const std::string& spec_path, int m,
                 double kappa, bool no_noise, double rho, int n, std::uint64_t seed,
                 const std::string& out_path) {
  Rng master(seed);
  Dataset data;
  Json side;
  side["seed"] = seed;
  side["n"] = n;
  if (generator == "burr") {
    BurrSpec spec;
    if (!spec_path.empty()) {
      spec = burr_from_json(load_json(spec_path));
    } else {
      Rng spec_rng = master.child(stream_tag("generator-spec"));
      spec = make_burr_spec(m, kappa, spec_rng, !no_noise);
    }
    Rng data_rng = master.child(stream_tag("data"));
    data = gen_burr_dataset(spec, n, data_rng);
    side["generator"] = generator_to_json(spec);
  } else if (generator == "discretized-gaussian") {
    DiscretizedGaussianSpec spec;
    if (!spec_path.empty()) {
      spec = discretized_from_json(load_json(spec_path));
    } else {
      spec.m = m;
      spec.rho = rho;
      spec.cutoffs.assign(static_cast<std::size_t>(m), {});
    }
    Rng data_rng = master.child(stream_tag("data"));
    data = gen_discretized_dataset(spec, n, data_rng);
    side["generator"] = generator_to_json(spec);
  } else {
    throw ConfigError("simulate: unknown generator " + generator);
  }
  write_dataset(data, out_path, side);
  std::printf("wrote %s (%d rows) and %s\n", out_path.c_str(), data.n(),
              (out_path + ".schema.json").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dependence-aware Shapley value explanations with a masked "
               "conditional generative sampler"};
  app.require_subcommand(1);

  // --- simulate ---------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  std::string sim_generator = "burr";
  std::string sim_spec;
  int sim_m = 5;
  double sim_kappa = 2.0;
  bool sim_no_noise = false;
  double sim_rho = 0.5;
  int sim_n = 1000;
  std::uint64_t sim_seed = 1;
  std::string sim_out = "data.csv";
  simulate->add_option("--generator", sim_generator, "burr | discretized-gaussian");
  simulate->add_option("--spec", sim_spec, "generator spec JSON (overrides flags)");
  simulate->add_option("--m", sim_m, "feature count");
  simulate->add_option("--kappa", sim_kappa, "Burr shape");
  simulate->add_flag("--no-noise", sim_no_noise, "omit response noise (burr)");
  simulate->add_option("--rho", sim_rho, "equicorrelation (discretized)");
  simulate->add_option("--n", sim_n, "rows");
  simulate->add_option("--seed", sim_seed, "master seed");
  simulate->add_option("--out", sim_out, "output CSV path");

  // --- train-vaeac ------------------------------------------------------------
  auto* train = app.add_subcommand("train-vaeac", "Train the conditional sampler");
  std::string tr_data, tr_out = "model.ckpt", tr_log, tr_coalitions;
  std::uint64_t tr_seed = 1;
  int tr_epochs = 0, tr_width = 32, tr_depth = 3, tr_latent = 8, tr_multistart = 15;
  train->add_option("--data", tr_data, "training CSV (response column y used for phi0)")
      ->required();
  train->add_option("--out", tr_out, "checkpoint path");
  train->add_option("--log", tr_log, "training log CSV path");
  train->add_option("--seed", tr_seed, "master seed");
  train->add_option("--epochs", tr_epochs, "epochs (0 = auto rule)");
  train->add_option("--width", tr_width, "hidden width");
  train->add_option("--depth", tr_depth, "hidden depth");
  train->add_option("--latent", tr_latent, "latent dimension");
  train->add_option("--multistart", tr_multistart, "number of warm starts");
  train->add_option("--coalitions", tr_coalitions,
                    "coalition CSV for the frequency masking scheme");

  // --- explain ----------------------------------------------------------------
  auto* explain_cmd = app.add_subcommand("explain", "Shapley values for CSV rows");
  std::string ex_data, ex_train, ex_model, ex_fit, ex_checkpoint, ex_method = "vaeac";
  std::string ex_out = "phi.csv", ex_tables, ex_save_model, ex_coalition_file;
  std::uint64_t ex_seed = 1;
  int ex_k = kDefaultMcSamples;
  long long ex_ns = 0;
  double ex_phi0 = std::numeric_limits<double>::quiet_NaN();
  explain_cmd->add_option("--data", ex_data, "rows to explain (CSV)")->required();
  explain_cmd->add_option("--train", ex_train, "training CSV (conditioners, phi0)");
  explain_cmd->add_option("--model", ex_model, "saved predictor JSON");
  explain_cmd->add_option("--fit", ex_fit, "fit a predictor: linear | forest");
  explain_cmd->add_option("--save-model", ex_save_model, "save the fitted predictor");
  explain_cmd->add_option("--method", ex_method, "independence | gaussian | vaeac");
  explain_cmd->add_option("--checkpoint", ex_checkpoint, "vaeac checkpoint");
  explain_cmd->add_option("--k", ex_k, "Monte Carlo samples per coalition");
  explain_cmd->add_option("--coalitions", ex_ns, "sample N_S coalitions (0 = exact)");
  explain_cmd->add_option("--coalition-file", ex_coalition_file,
                          "reuse a coalition CSV instead of sampling");
  explain_cmd->add_option("--phi0", ex_phi0, "override phi0");
  explain_cmd->add_option("--seed", ex_seed, "master seed");
  explain_cmd->add_option("--out", ex_out, "explanations CSV");
  explain_cmd->add_option("--tables", ex_tables, "also dump contribution tables CSV");

  // --- evaluate ---------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "EC1/EC2/EC3 from result files");
  std::string ev_true_phi, ev_est_phi, ev_true_v, ev_est_v, ev_out;
  int ev_m = 0;
  evaluate->add_option("--true-phi", ev_true_phi, "truth explanations CSV");
  evaluate->add_option("--est-phi", ev_est_phi, "estimated explanations CSV");
  evaluate->add_option("--true-v", ev_true_v, "truth contribution tables CSV");
  evaluate->add_option("--est-v", ev_est_v, "estimated contribution tables CSV");
  evaluate->add_option("--m", ev_m, "feature count (needed for table files)");
  evaluate->add_option("--out", ev_out, "write the report JSON here");

  // --- run-experiment -----------------------------------------------------------
  auto* run = app.add_subcommand("run-experiment", "Full simulation-study run");
  std::string rx_config;
  std::string rx_out;
  std::uint64_t rx_seed = 0;
  bool rx_seed_set = false;
  int rx_k = 0;
  long long rx_ns = -1;
  std::vector<std::string> rx_methods;
  run->add_option("--config", rx_config, "experiment config JSON")->required();
  run->add_option("--out", rx_out, "override the output directory");
  run->add_option("--seed", rx_seed, "override the master seed")
      ->each([&](const std::string&) { rx_seed_set = true; });
  run->add_option("--k", rx_k, "override K");
  run->add_option("--coalitions", rx_ns, "override N_S");
  run->add_option("--method", rx_methods, "override the method list");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      return run_simulate(sim_generator, sim_spec, sim_m, sim_kappa, sim_no_noise,
                          sim_rho, sim_n, sim_seed, sim_out);
    }

    if (train->parsed()) {
      const Dataset data = read_dataset(tr_data);
      VaeacHyper hyper;
      hyper.epochs = tr_epochs;
      hyper.width = tr_width;
      hyper.depth = tr_depth;
      hyper.latent_dim = tr_latent;
      hyper.multistart = tr_multistart;
      MaskingScheme scheme = MaskingScheme::uniform();
      if (!tr_coalitions.empty()) {
        const CoalitionSample sample = coalitions_from_csv(tr_coalitions, data.m());
        std::vector<std::pair<Coalition, double>> table;
        for (const auto& [c, count] : sample.counts)
          table.emplace_back(c, static_cast<double>(count));
        scheme = MaskingScheme::frequency(std::move(table));
      }
      auto [model, log] =
          train_vaeac(data.x, data.schema, scheme, hyper, Rng(tr_seed));
      if (data.has_response()) {
        model.has_phi0 = true;
        model.phi0 = data.y.mean();
      }
      save_vaeac(model, tr_out);
      if (!tr_log.empty()) detail::write_file(tr_log, training_log_to_csv(log));
      std::printf("wrote %s (best epoch %d, %zu parameters)\n", tr_out.c_str(),
                  log.best_epoch, model.parameter_count());
      return 0;
    }

    if (explain_cmd->parsed()) {
      const Dataset rows = read_dataset(ex_data, /*expect_response=*/false);
      const int m = rows.m();

      std::unique_ptr<Predictor> predictor;
      Dataset train_data;
      if (!ex_train.empty()) train_data = read_dataset(ex_train);
      if (!ex_model.empty()) {
        predictor = predictor_from_json(load_json(ex_model));
      } else if (!ex_fit.empty()) {
        if (!train_data.has_response())
          throw ConfigError("explain --fit needs --train with a response column");
        if (ex_fit == "linear") {
          predictor = std::make_unique<LinearModel>(
              fit_linear(train_data.x, train_data.y, train_data.schema));
          if (!ex_save_model.empty())
            detail::write_file(ex_save_model,
                               predictor_to_json(*static_cast<LinearModel*>(predictor.get()))
                                       .dump(2) +
                                   "\n");
        } else if (ex_fit == "forest") {
          ForestHyper fh;
          predictor = std::make_unique<ForestModel>(
              fit_forest(train_data.x, train_data.y, train_data.schema, fh,
                         Rng(derive_seed(ex_seed, {stream_tag("predictor")}))));
          if (!ex_save_model.empty())
            detail::write_file(ex_save_model,
                               predictor_to_json(*static_cast<ForestModel*>(predictor.get()))
                                       .dump(2) +
                                   "\n");
        } else {
          throw ConfigError("explain: unknown --fit " + ex_fit);
        }
      } else {
        throw ConfigError("explain: provide --model or --fit");
      }

      std::unique_ptr<Conditioner> conditioner;
      double phi0 = ex_phi0;
      if (ex_method == "vaeac") {
        if (ex_checkpoint.empty()) throw ConfigError("explain: vaeac needs --checkpoint");
        auto model = std::make_shared<VaeacModel>(load_vaeac(ex_checkpoint));
        if (std::isnan(phi0) && model->has_phi0) phi0 = model->phi0;
        conditioner = std::make_unique<VaeacConditioner>(model);
      } else if (ex_method == "independence") {
        if (train_data.n() == 0) throw ConfigError("explain: independence needs --train");
        conditioner = std::make_unique<IndependenceConditioner>(train_data.x);
      } else if (ex_method == "gaussian") {
        if (train_data.n() == 0) throw ConfigError("explain: gaussian needs --train");
        conditioner = std::make_unique<GaussianConditioner>(
            GaussianConditioner::from_training(train_data.x));
      } else {
        throw ConfigError("explain: unknown method " + ex_method);
      }
      if (std::isnan(phi0)) {
        if (!train_data.has_response())
          throw ConfigError("explain: pass --phi0 or --train with responses");
        phi0 = train_data.y.mean();
      }

      CoalitionPlan plan = CoalitionPlan::make_exact();
      if (!ex_coalition_file.empty()) {
        plan = CoalitionPlan::sampled(coalitions_from_csv(ex_coalition_file, m));
      } else if (ex_ns > 0 && !(m <= kMaxExactM && ex_ns >= (1LL << m))) {
        Rng coal_rng(derive_seed(ex_seed, {stream_tag("coalitions")}));
        plan = CoalitionPlan::sampled(sample_coalitions(m, ex_ns, coal_rng));
      }

      const Rng master(ex_seed);
      const auto results =
          explain(*predictor, *conditioner, rows.x, plan, ex_k, phi0, master);
      detail::write_file(ex_out, explanations_to_csv(results));
      if (!ex_tables.empty()) {
        const CoalitionSet set = plan.exact ? CoalitionSet::all_proper(m)
                                            : CoalitionSet::from_sample(plan.sample);
        detail::write_file(ex_tables, tables_to_csv(results, set));
      }
      if (!plan.exact && ex_coalition_file.empty() && !ex_tables.empty())
        detail::write_file(ex_tables + ".coalitions.csv", coalitions_to_csv(plan.sample));
      std::printf("wrote %s (%d rows)\n", ex_out.c_str(), rows.n());
      return 0;
    }

    if (evaluate->parsed()) {
      Json report;
      if (!ev_true_phi.empty() && !ev_est_phi.empty()) {
        const PhiFile truth = read_phi_csv(ev_true_phi);
        const PhiFile est = read_phi_csv(ev_est_phi);
        report["ec1"] = ec1(truth.rows, est.rows);
      }
      if (!ev_est_v.empty()) {
        if (ev_m <= 0) throw ConfigError("evaluate: table files need --m");
        const TableFile est = read_tables_csv(ev_est_v, ev_m);
        if (!ev_true_v.empty()) {
          const TableFile truth = read_tables_csv(ev_true_v, ev_m);
          report["ec2"] = ec2(truth.tables, est.tables, est.coalitions);
        }
        if (!ev_est_phi.empty()) {
          const PhiFile est_phi = read_phi_csv(ev_est_phi);
          report["ec3"] = ec3(est_phi.predictions, est.tables, est.coalitions);
        }
      }
      const std::string text = report.dump(2) + "\n";
      if (!ev_out.empty())
        detail::write_file(ev_out, text);
      else
        std::fputs(text.c_str(), stdout);
      return 0;
    }

    if (run->parsed()) {
      ExperimentConfig config = config_from_json(load_json(rx_config));
      if (!rx_out.empty()) config.out_dir = rx_out;
      if (rx_seed_set) config.seed = rx_seed;
      if (rx_k > 0) config.k = rx_k;
      if (rx_ns >= 0) config.n_coalitions = rx_ns;
      if (!rx_methods.empty()) config.methods = rx_methods;
      const ExperimentResult result = run_experiment(config);
      for (const auto& r : result.aggregate) {
        std::printf("%-14s", r.method.c_str());
        if (std::isfinite(r.ec1)) std::printf("  EC1 %.4f", r.ec1);
        if (std::isfinite(r.ec2)) std::printf("  EC2 %.4f", r.ec2);
        std::printf("  EC3 %.4f\n", r.ec3);
      }
      std::printf("reports in %s\n", config.out_dir.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

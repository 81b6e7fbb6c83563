#pragma once

// File formats: model checkpoints (plain-text architecture header + flat
// little-endian double blob), dataset CSV with a JSON schema sidecar, and the
// CSV tables for explanations, contribution values, EC rows and training
// logs. All floating-point text uses %.17g, which round-trips doubles
// exactly, so identical runs produce byte-identical files.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "condshap/datagen.hpp"
#include "condshap/metrics.hpp"
#include "condshap/predictors.hpp"
#include "condshap/shapley.hpp"
#include "condshap/types.hpp"
#include "condshap/vaeac.hpp"

namespace condshap {

using Json = nlohmann::json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline void append_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// --- Model checkpoints -----------------------------------------------------

// Header lines describe the schema, hyperparameters, per-net layer widths and
// skip declarations; the blob holds (normalization mean, sd, phi0 when
// present, then all net parameters in layer order: weights, bias).
inline std::string serialize_vaeac(const VaeacModel& model) {
  std::ostringstream h;
  h << "condshap-vaeac 1\n";
  h << "m " << model.m() << "\n";
  for (const auto& f : model.schema.features) {
    if (f.kind == FeatureKind::kCategorical)
      h << "feature categorical " << f.levels << "\n";
    else
      h << "feature continuous\n";
  }
  const VaeacHyper& hy = model.hyper;
  h << "hyper depth " << hy.depth << " width " << hy.width << " latent "
    << hy.latent_dim << " slope " << format_double(hy.slope) << " lr "
    << format_double(hy.lr) << " batch " << hy.batch_size << " epochs " << hy.epochs
    << " sigma_mu " << format_double(hy.sigma_mu) << " sigma_sigma "
    << format_double(hy.sigma_sigma) << " iwae " << hy.iwae_samples << " val_frac "
    << format_double(hy.validation_fraction) << " multistart " << hy.multistart
    << " warmup " << hy.warmup_epochs << "\n";
  h << "trained " << (model.trained ? 1 : 0) << "\n";
  h << "phi0 " << (model.has_phi0 ? format_double(model.phi0) : std::string("none"))
    << "\n";
  for (const auto* net : {&model.full_encoder, &model.masked_encoder, &model.decoder}) {
    h << "net " << net->depth() << "\n";
    for (int i = 0; i < net->depth(); ++i)
      h << "layer " << net->layers[static_cast<std::size_t>(i)].out() << " "
        << net->layers[static_cast<std::size_t>(i)].in() << " "
        << net->skip_widths[static_cast<std::size_t>(i)] << "\n";
  }

  std::string blob;
  for (int j = 0; j < model.m(); ++j) detail::append_le(blob, model.norm_mean[j]);
  for (int j = 0; j < model.m(); ++j) detail::append_le(blob, model.norm_sd[j]);
  if (model.has_phi0) detail::append_le(blob, model.phi0);
  for (const auto* net : {&model.full_encoder, &model.masked_encoder, &model.decoder}) {
    for (const auto& layer : net->layers) {
      for (int r = 0; r < layer.out(); ++r)
        for (int c = 0; c < layer.in(); ++c) detail::append_le(blob, layer.weights(r, c));
      for (int r = 0; r < layer.out(); ++r) detail::append_le(blob, layer.bias[r]);
    }
  }
  h << "blob " << blob.size() / 8 << "\n";
  return h.str() + blob;
}

inline VaeacModel deserialize_vaeac(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw IoError("checkpoint: truncated header");
    return line;
  };
  if (next_line() != "condshap-vaeac 1") throw IoError("checkpoint: bad magic");

  VaeacModel model;
  {
    std::istringstream ls(next_line());
    std::string key;
    int m;
    ls >> key >> m;
    if (key != "m" || m < 1) throw IoError("checkpoint: bad feature count");
    for (int j = 0; j < m; ++j) {
      std::istringstream fs(next_line());
      std::string tag, kind;
      fs >> tag >> kind;
      if (tag != "feature") throw IoError("checkpoint: expected feature line");
      if (kind == "categorical") {
        int levels;
        fs >> levels;
        model.schema.features.push_back({FeatureKind::kCategorical, levels});
      } else {
        model.schema.features.push_back({FeatureKind::kContinuous, 0});
      }
    }
  }
  {
    std::istringstream ls(next_line());
    std::string tag, key;
    ls >> tag;
    if (tag != "hyper") throw IoError("checkpoint: expected hyper line");
    VaeacHyper& hy = model.hyper;
    while (ls >> key) {
      if (key == "depth") ls >> hy.depth;
      else if (key == "width") ls >> hy.width;
      else if (key == "latent") ls >> hy.latent_dim;
      else if (key == "slope") ls >> hy.slope;
      else if (key == "lr") ls >> hy.lr;
      else if (key == "batch") ls >> hy.batch_size;
      else if (key == "epochs") ls >> hy.epochs;
      else if (key == "sigma_mu") ls >> hy.sigma_mu;
      else if (key == "sigma_sigma") ls >> hy.sigma_sigma;
      else if (key == "iwae") ls >> hy.iwae_samples;
      else if (key == "val_frac") ls >> hy.validation_fraction;
      else if (key == "multistart") ls >> hy.multistart;
      else if (key == "warmup") ls >> hy.warmup_epochs;
      else throw IoError("checkpoint: unknown hyper key " + key);
    }
  }
  {
    std::istringstream ls(next_line());
    std::string tag;
    int flag;
    ls >> tag >> flag;
    if (tag != "trained") throw IoError("checkpoint: expected trained line");
    model.trained = flag != 0;
  }
  {
    std::istringstream ls(next_line());
    std::string tag, value;
    ls >> tag >> value;
    if (tag != "phi0") throw IoError("checkpoint: expected phi0 line");
    model.has_phi0 = value != "none";
    if (model.has_phi0) model.phi0 = std::strtod(value.c_str(), nullptr);
  }
  Mlp* nets[3] = {&model.full_encoder, &model.masked_encoder, &model.decoder};
  for (Mlp* net : nets) {
    std::istringstream ls(next_line());
    std::string tag;
    int layers;
    ls >> tag >> layers;
    if (tag != "net" || layers < 1) throw IoError("checkpoint: bad net header");
    net->slope = model.hyper.slope;
    for (int i = 0; i < layers; ++i) {
      std::istringstream lls(next_line());
      std::string ltag;
      int out, in_w, skip;
      lls >> ltag >> out >> in_w >> skip;
      if (ltag != "layer") throw IoError("checkpoint: bad layer line");
      net->layers.push_back({Matrix::Zero(out, in_w), Vector::Zero(out)});
      net->skip_widths.push_back(skip);
    }
    net->check_wiring();
  }
  std::size_t blob_doubles = 0;
  {
    std::istringstream ls(next_line());
    std::string tag;
    ls >> tag >> blob_doubles;
    if (tag != "blob") throw IoError("checkpoint: expected blob length");
  }
  const auto header_len = static_cast<std::size_t>(in.tellg());
  if (bytes.size() != header_len + 8 * blob_doubles)
    throw IoError("checkpoint: blob size mismatch");
  const char* p = bytes.data() + header_len;
  auto take = [&]() {
    const double v = detail::read_le(p);
    p += 8;
    return v;
  };
  const int m = model.m();
  model.norm_mean.resize(m);
  model.norm_sd.resize(m);
  for (int j = 0; j < m; ++j) model.norm_mean[j] = take();
  for (int j = 0; j < m; ++j) model.norm_sd[j] = take();
  if (model.has_phi0) model.phi0 = take();
  for (Mlp* net : nets) {
    for (auto& layer : net->layers) {
      for (int r = 0; r < layer.out(); ++r)
        for (int c = 0; c < layer.in(); ++c) layer.weights(r, c) = take();
      for (int r = 0; r < layer.out(); ++r) layer.bias[r] = take();
    }
  }
  return model;
}

inline void save_vaeac(const VaeacModel& model, const std::string& path) {
  detail::write_file(path, serialize_vaeac(model));
}

inline VaeacModel load_vaeac(const std::string& path) {
  return deserialize_vaeac(detail::read_file(path));
}

// Fitted Gaussian conditioner parameters, for experiment reports.
inline Json gaussian_fit_to_json(const GaussianFit& fit) {
  Json j;
  j["mean"] = std::vector<double>(fit.mean.data(), fit.mean.data() + fit.mean.size());
  Json cov = Json::array();
  for (Eigen::Index r = 0; r < fit.cov.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(fit.cov.cols()));
    for (Eigen::Index c = 0; c < fit.cov.cols(); ++c)
      row[static_cast<std::size_t>(c)] = fit.cov(r, c);
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["jittered"] = fit.jittered;
  return j;
}

// --- Dataset CSV + schema sidecar -------------------------------------------

inline Json generator_to_json(const BurrSpec& spec) {
  Json j;
  j["type"] = "burr";
  j["kappa"] = spec.params.kappa;
  j["b"] = std::vector<double>(spec.params.b.data(), spec.params.b.data() + spec.params.b.size());
  j["r"] = std::vector<double>(spec.params.r.data(), spec.params.r.data() + spec.params.r.size());
  j["coeffs"] =
      std::vector<double>(spec.coeffs.data(), spec.coeffs.data() + spec.coeffs.size());
  j["noise"] = spec.noise;
  return j;
}

inline BurrSpec burr_from_json(const Json& j) {
  BurrSpec spec;
  spec.params.kappa = j.at("kappa").get<double>();
  const auto b = j.at("b").get<std::vector<double>>();
  const auto r = j.at("r").get<std::vector<double>>();
  const auto c = j.at("coeffs").get<std::vector<double>>();
  spec.params.b = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  spec.params.r = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
  spec.coeffs = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  spec.noise = j.value("noise", true);
  return spec;
}

inline Json generator_to_json(const DiscretizedGaussianSpec& spec) {
  Json j;
  j["type"] = "discretized-gaussian";
  j["m"] = spec.m;
  j["rho"] = spec.rho;
  if (spec.mu.size() == spec.m)
    j["mu"] = std::vector<double>(spec.mu.data(), spec.mu.data() + spec.mu.size());
  j["cutoffs"] = spec.cutoffs;
  return j;
}

inline DiscretizedGaussianSpec discretized_from_json(const Json& j) {
  DiscretizedGaussianSpec spec;
  spec.m = j.at("m").get<int>();
  spec.rho = j.at("rho").get<double>();
  if (j.contains("mu")) {
    const auto mu = j.at("mu").get<std::vector<double>>();
    spec.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  }
  spec.cutoffs = j.at("cutoffs").get<std::vector<std::vector<double>>>();
  return spec;
}

inline Json schema_to_json(const FeatureSchema& schema) {
  Json cols = Json::array();
  for (int j = 0; j < schema.size(); ++j) {
    Json col;
    col["name"] = "x" + std::to_string(j + 1);
    if (schema.is_categorical(j)) {
      col["kind"] = "categorical";
      col["levels"] = schema.levels(j);
    } else {
      col["kind"] = "continuous";
    }
    cols.push_back(col);
  }
  return cols;
}

inline FeatureSchema schema_from_json(const Json& cols) {
  FeatureSchema schema;
  for (const auto& col : cols) {
    if (col.at("kind") == "categorical")
      schema.features.push_back({FeatureKind::kCategorical, col.at("levels").get<int>()});
    else
      schema.features.push_back({FeatureKind::kContinuous, 0});
  }
  return schema;
}

inline std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  for (int j = 0; j < data.m(); ++j) {
    if (j) out += ',';
    out += "x" + std::to_string(j + 1);
  }
  if (data.has_response()) out += ",y";
  out += '\n';
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.m(); ++j) {
      if (j) out += ',';
      out += format_double(data.x(i, j));
    }
    if (data.has_response()) {
      out += ',';
      out += format_double(data.y[i]);
    }
    out += '\n';
  }
  return out;
}

// sidecar_extra may carry the generator spec and seed for re-runnability.
inline void write_dataset(const Dataset& data, const std::string& csv_path,
                          const Json& sidecar_extra = Json::object()) {
  detail::write_file(csv_path, dataset_to_csv(data));
  Json side = sidecar_extra;
  side["columns"] = schema_to_json(data.schema);
  side["response"] = data.has_response();
  side["rows"] = data.n();
  detail::write_file(csv_path + ".schema.json", side.dump(2) + "\n");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Loads a dataset CSV. When a sidecar is present it supplies the schema;
// otherwise numeric columns are continuous and integer-valued columns with
// few distinct values could not be told apart, so everything is continuous.
inline Dataset read_dataset(const std::string& csv_path, bool expect_response = true) {
  const std::string text = detail::read_file(csv_path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: empty file " + csv_path);
  const auto header = split_csv_line(line);
  bool has_y = !header.empty() && header.back() == "y";
  const int m = static_cast<int>(header.size()) - (has_y ? 1 : 0);
  if (m < 1) throw IoError("dataset: no feature columns in " + csv_path);

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != m + (has_y ? 1 : 0))
      throw IoError("dataset: ragged row in " + csv_path);
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      row[c] = std::strtod(cells[c].c_str(), nullptr);
    rows.push_back(std::move(row));
  }

  Dataset data;
  data.x.resize(static_cast<Eigen::Index>(rows.size()), m);
  if (has_y && expect_response) data.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < m; ++j) data.x(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    if (has_y && expect_response)
      data.y[static_cast<Eigen::Index>(i)] = rows[i][static_cast<std::size_t>(m)];
  }

  std::ifstream side(csv_path + ".schema.json");
  if (side) {
    Json j = Json::parse(side);
    data.schema = schema_from_json(j.at("columns"));
  } else {
    data.schema = FeatureSchema::continuous(m);
  }
  if (data.schema.size() != m) throw IoError("dataset: sidecar arity mismatch");
  return data;
}

// --- Result tables ------------------------------------------------------------

inline std::string explanations_to_csv(const std::vector<InstanceExplanation>& rows) {
  std::string out = "instance_id,phi0";
  const int m = rows.empty() ? 0 : static_cast<int>(rows.front().explanation.phi.size());
  for (int j = 1; j <= m; ++j) out += ",phi_" + std::to_string(j);
  out += ",prediction\n";
  for (const auto& r : rows) {
    out += std::to_string(r.table.instance_id);
    out += ',' + format_double(r.explanation.phi0);
    for (int j = 0; j < m; ++j) out += ',' + format_double(r.explanation.phi[j]);
    out += ',' + format_double(r.table.fx);
    out += '\n';
  }
  return out;
}

inline std::string tables_to_csv(const std::vector<InstanceExplanation>& rows,
                                 const CoalitionSet& coalitions) {
  std::string out = "instance_id,coalition_bitmask,count,v\n";
  for (const auto& r : rows) {
    for (const auto& [s, w] : coalitions.entries) {
      out += std::to_string(r.table.instance_id);
      out += ',' + std::to_string(s.bits());
      out += ',' + format_double(w);
      out += ',' + format_double(r.table.at(s));
      out += '\n';
    }
  }
  return out;
}

inline std::string training_log_to_csv(const TrainingLog& log) {
  std::string out = "epoch,train_vlb,val_iwae\n";
  for (const auto& row : log.rows) {
    out += std::to_string(row.epoch);
    out += ',' + format_double(row.train_vlb);
    out += ',' + format_double(row.val_iwae);
    out += '\n';
  }
  return out;
}

inline std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::string out =
      "method,repetition,ec1,ec2,ec3,n_test,n_coalitions\n";
  for (const auto& r : reports) {
    out += r.method;
    out += ',' + std::to_string(r.repetition);
    out += ',' + format_double(r.ec1);
    out += ',' + format_double(r.ec2);
    out += ',' + format_double(r.ec3);
    out += ',' + std::to_string(r.n_test);
    out += ',' + std::to_string(r.n_coalitions);
    out += '\n';
  }
  return out;
}

}  // namespace condshap

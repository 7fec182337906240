#pragma once

// Persistable model artifact: one JSON container for all four model kinds,
// holding the covariate schema, grid, population curve, training
// configuration and every named parameter tensor. Round-trips are lossless
// (save -> load -> save reproduces the bytes): keys serialize in sorted
// order and doubles use shortest-round-trip formatting.

#include "vsi/baselines.hpp"
#include "vsi/vsi_model.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <variant>

namespace vsi {

using AnyModel = std::variant<VsiParams, NoQParams, DirectMlpParams, AftModel>;

inline constexpr const char* kArtifactFormat = "vsi-artifact-v1";

inline std::string model_kind_string(const AnyModel& model) {
  switch (model.index()) {
    case 0: return "vsi";
    case 1: return "vsi_noq";
    case 2: return "mlp";
    default: return "aft_weibull";
  }
}

inline const TimeGrid& model_grid(const AnyModel& model) {
  return std::visit([](const auto& m) -> const TimeGrid& { return m.grid; }, model);
}

inline const CovariateSchema& model_schema(const AnyModel& model) {
  return std::visit([](const auto& m) -> const CovariateSchema& { return m.schema; }, model);
}

inline long model_param_count(const AnyModel& model) {
  return std::visit([](const auto& m) -> long { return m.param_count(); }, model);
}

namespace io {

using nlohmann::json;

inline json mat_to_json(const Mat& m) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", arr}};
}

inline Mat mat_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw data_error("artifact: tensor size mismatch");
  Mat m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[k++].get<double>();
  return m;
}

inline json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

inline json mlp_to_json(const Mlp& net) {
  json layers = json::array();
  for (int l = 0; l < net.n_layers(); ++l)
    layers.push_back(json{{"W", mat_to_json(net.weights[static_cast<std::size_t>(l)])},
                          {"b", mat_to_json(net.biases[static_cast<std::size_t>(l)])}});
  json widths = json::array();
  for (int w : net.widths) widths.push_back(w);
  return json{{"widths", widths}, {"layers", layers}, {"leaky_slope", net.leaky_slope}};
}

inline Mlp mlp_from_json(const json& j) {
  Mlp net;
  for (const auto& w : j.at("widths")) net.widths.push_back(w.get<int>());
  net.leaky_slope = j.at("leaky_slope").get<double>();
  for (const auto& layer : j.at("layers")) {
    net.weights.push_back(mat_from_json(layer.at("W")));
    net.biases.push_back(mat_from_json(layer.at("b")));
  }
  if (net.widths.size() != net.weights.size() + 1)
    throw data_error("artifact: inconsistent network layout");
  return net;
}

inline json schema_to_json(const CovariateSchema& s) {
  json cols = json::array();
  for (const auto& c : s.columns) {
    json jc{{"name", c.name},
            {"kind", c.kind == ColumnKind::continuous ? "continuous" : "categorical"},
            {"dropped", c.dropped}};
    if (c.kind == ColumnKind::continuous) {
      jc["impute_median"] = c.impute_median;
      jc["mean"] = c.mean;
      jc["sd"] = c.sd;
    } else {
      jc["levels"] = c.levels;
      jc["impute_mode"] = c.impute_mode;
    }
    cols.push_back(jc);
  }
  return json{{"columns", cols}};
}

inline CovariateSchema schema_from_json(const json& j) {
  CovariateSchema s;
  for (const auto& jc : j.at("columns")) {
    CovariateSchema::Column c;
    c.name = jc.at("name").get<std::string>();
    c.kind = jc.at("kind").get<std::string>() == "continuous" ? ColumnKind::continuous
                                                              : ColumnKind::categorical;
    c.dropped = jc.at("dropped").get<bool>();
    if (c.kind == ColumnKind::continuous) {
      c.impute_median = jc.at("impute_median").get<double>();
      c.mean = jc.at("mean").get<double>();
      c.sd = jc.at("sd").get<double>();
    } else {
      for (const auto& lv : jc.at("levels")) c.levels.push_back(lv.get<std::string>());
      c.impute_mode = jc.at("impute_mode").get<std::string>();
    }
    s.columns.push_back(std::move(c));
  }
  return s;
}

inline json grid_to_json(const TimeGrid& g) {
  return json{{"edges", vec_to_json(g.edges)},
              {"representative_times", vec_to_json(g.representative_times)}};
}

inline TimeGrid grid_from_json(const json& j) {
  TimeGrid g;
  g.edges = vec_from_json(j.at("edges"));
  g.representative_times = vec_from_json(j.at("representative_times"));
  return g;
}

inline json na_to_json(const NelsonAalenCurve& c) {
  return json{{"cumulative_hazard", vec_to_json(c.cumulative_hazard)},
              {"survival", vec_to_json(c.survival)},
              {"pmf", vec_to_json(c.pmf)}};
}

inline NelsonAalenCurve na_from_json(const json& j) {
  NelsonAalenCurve c;
  c.cumulative_hazard = vec_from_json(j.at("cumulative_hazard"));
  c.survival = vec_from_json(j.at("survival"));
  c.pmf = vec_from_json(j.at("pmf"));
  return c;
}

inline json cfg_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"seed", c.seed},
              {"latent_dim", c.latent_dim},
              {"M", c.M},
              {"mc_samples_train", c.mc_samples_train},
              {"leaky_slope", c.leaky_slope},
              {"encoder_raw_t_delta", c.encoder_raw_t_delta},
              {"noq_train_draws", c.noq_train_draws},
              {"mlp_dropout", c.mlp_dropout}};
}

inline TrainConfig cfg_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.M = j.at("M").get<int>();
  c.mc_samples_train = j.at("mc_samples_train").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.encoder_raw_t_delta = j.at("encoder_raw_t_delta").get<bool>();
  c.noq_train_draws = j.at("noq_train_draws").get<int>();
  c.mlp_dropout = j.at("mlp_dropout").get<double>();
  return c;
}

}  // namespace io

inline void save_model(const AnyModel& model, const std::string& path,
                       const std::string& config_hash = "") {
  using nlohmann::json;
  json j;
  j["format"] = kArtifactFormat;
  j["kind"] = model_kind_string(model);
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  if (const auto* m = std::get_if<VsiParams>(&model)) {
    j["train_config"] = io::cfg_to_json(m->cfg);
    j["schema"] = io::schema_to_json(m->schema);
    j["grid"] = io::grid_to_json(m->grid);
    j["na_curve"] = io::na_to_json(m->na_curve);
    j["latent_dim"] = m->latent_dim;
    j["prior_net"] = io::mlp_to_json(m->prior_net);
    j["encoder_net"] = io::mlp_to_json(m->encoder_net);
    j["decoder_net"] = io::mlp_to_json(m->decoder_net);
  } else if (const auto* m2 = std::get_if<NoQParams>(&model)) {
    j["train_config"] = io::cfg_to_json(m2->cfg);
    j["schema"] = io::schema_to_json(m2->schema);
    j["grid"] = io::grid_to_json(m2->grid);
    j["na_curve"] = io::na_to_json(m2->na_curve);
    j["latent_dim"] = m2->latent_dim;
    j["prior_net"] = io::mlp_to_json(m2->prior_net);
    j["decoder_net"] = io::mlp_to_json(m2->decoder_net);
  } else if (const auto* m3 = std::get_if<DirectMlpParams>(&model)) {
    j["train_config"] = io::cfg_to_json(m3->cfg);
    j["schema"] = io::schema_to_json(m3->schema);
    j["grid"] = io::grid_to_json(m3->grid);
    j["net"] = io::mlp_to_json(m3->net);
  } else {
    const auto& m4 = std::get<AftModel>(model);
    j["train_config"] = io::cfg_to_json(m4.cfg);
    j["schema"] = io::schema_to_json(m4.schema);
    j["grid"] = io::grid_to_json(m4.grid);
    j["mu"] = m4.w.mu;
    j["log_sigma"] = m4.w.log_sigma;
    j["theta"] = io::vec_to_json(m4.w.theta);
  }
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw data_error("write failed for " + path);
}

inline AnyModel load_model(const std::string& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw data_error("artifact parse failure in " + path + ": " + e.what());
  }
  if (j.value("format", "") != kArtifactFormat)
    throw data_error("artifact format tag mismatch in " + path);
  const std::string kind = j.value("kind", "");
  if (kind == "vsi") {
    VsiParams m;
    m.cfg = io::cfg_from_json(j.at("train_config"));
    m.schema = io::schema_from_json(j.at("schema"));
    m.grid = io::grid_from_json(j.at("grid"));
    m.na_curve = io::na_from_json(j.at("na_curve"));
    m.latent_dim = j.at("latent_dim").get<int>();
    m.prior_net = io::mlp_from_json(j.at("prior_net"));
    m.encoder_net = io::mlp_from_json(j.at("encoder_net"));
    m.decoder_net = io::mlp_from_json(j.at("decoder_net"));
    return m;
  }
  if (kind == "vsi_noq") {
    NoQParams m;
    m.cfg = io::cfg_from_json(j.at("train_config"));
    m.schema = io::schema_from_json(j.at("schema"));
    m.grid = io::grid_from_json(j.at("grid"));
    m.na_curve = io::na_from_json(j.at("na_curve"));
    m.latent_dim = j.at("latent_dim").get<int>();
    m.prior_net = io::mlp_from_json(j.at("prior_net"));
    m.decoder_net = io::mlp_from_json(j.at("decoder_net"));
    return m;
  }
  if (kind == "mlp") {
    DirectMlpParams m;
    m.cfg = io::cfg_from_json(j.at("train_config"));
    m.schema = io::schema_from_json(j.at("schema"));
    m.grid = io::grid_from_json(j.at("grid"));
    m.net = io::mlp_from_json(j.at("net"));
    return m;
  }
  if (kind == "aft_weibull") {
    AftModel m;
    m.cfg = io::cfg_from_json(j.at("train_config"));
    m.schema = io::schema_from_json(j.at("schema"));
    m.grid = io::grid_from_json(j.at("grid"));
    m.w.mu = j.at("mu").get<double>();
    m.w.log_sigma = j.at("log_sigma").get<double>();
    m.w.theta = io::vec_from_json(j.at("theta"));
    return m;
  }
  throw data_error("artifact has unknown model kind '" + kind + "' in " + path);
}

}  // namespace vsi

#pragma once

// CSV logs, model snapshots and embedding dumps.

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "cfcl/federation.hpp"
#include "cfcl/io/dataset.hpp"
#include "cfcl/model.hpp"

namespace cfcl::io {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string{}; }

/// t,device,loss
inline void write_run_log(const RunHistory& h, std::ostream& os) {
  os << "t,device,loss\n";
  for (const auto& r : h.step_losses) os << r.t << ',' << r.device << ',' << fmt_double(r.loss) << '\n';
}

/// t,i,j,candidate,probability,chosen (i receives from j)
inline void write_exchange_log(const RunHistory& h, std::ostream& os) {
  os << "t,i,j,candidate,probability,chosen\n";
  for (const auto& r : h.candidates)
    os << r.t << ',' << r.receiver << ',' << r.transmitter << ',' << r.candidate << ',' << fmt_double(r.probability)
       << ',' << (r.chosen ? 1 : 0) << '\n';
}

/// One row per pull: t,i,j,n,macro_probs (';'-separated),entropy
inline void write_pull_log(const RunHistory& h, std::ostream& os) {
  os << "t,i,j,n,macro_probs,entropy\n";
  for (const auto& r : h.pulls) {
    os << r.t << ',' << r.receiver << ',' << r.transmitter << ',' << r.n << ',';
    for (std::size_t k = 0; k < r.macro_probs.size(); ++k) os << (k ? ";" : "") << fmt_double(r.macro_probs[k]);
    os << ',' << fmt_double(r.entropy) << '\n';
  }
}

/// gamma,t,accuracy,label_variance_mean,cumulative_delay_s
inline void write_eval_log(const RunHistory& h, std::ostream& os) {
  os << "gamma,t,accuracy,label_variance_mean,cumulative_delay_s\n";
  for (const auto& r : h.aggregations)
    os << r.gamma << ',' << r.t << ',' << fmt_optional(r.accuracy) << ',' << fmt_optional(r.label_variance_mean) << ','
       << fmt_double(r.cumulative_delay_s) << '\n';
}

/// gamma,t,global_loss
inline void write_global_loss_log(const RunHistory& h, std::ostream& os) {
  os << "gamma,t,global_loss\n";
  for (const auto& r : h.aggregations) os << r.gamma << ',' << r.t << ',' << fmt_double(r.global_loss) << '\n';
}

inline nlohmann::json model_to_json(const EncoderModel& m) {
  nlohmann::json j;
  j["layer_dims"] = m.layer_dims();
  j["activation"] = std::string(to_string(m.activation()));
  j["params"] = std::vector<double>(m.params().begin(), m.params().end());
  return j;
}

inline EncoderModel model_from_json(const nlohmann::json& j) {
  try {
    EncoderModel m(j.at("layer_dims").get<std::vector<std::size_t>>(),
                   parse_activation(j.at("activation").get<std::string>()));
    const auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != m.parameter_count()) throw ShapeError("model snapshot: parameter count does not match layer_dims");
    std::copy(p.begin(), p.end(), m.params().begin());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model", std::string("malformed snapshot: ") + e.what());
  }
}

inline void save_model(const std::string& path, const EncoderModel& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("model", "cannot write " + path);
  out << model_to_json(m).dump() << '\n';
}

inline EncoderModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("model", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("model", std::string("parse error: ") + e.what());
  }
  return model_from_json(j);
}

/// label,e0,e1,...
inline void write_embeddings(const EncoderModel& m, const LabeledDataset& ds, std::ostream& os) {
  os << "label";
  for (std::size_t k = 0; k < m.embedding_dim(); ++k) os << ",e" << k;
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.labels[i];
    for (double v : embed(m, ds.points[i])) os << ',' << fmt_double(v);
    os << '\n';
  }
}

}  // namespace cfcl::io

#pragma once

// Command-line entry points: simulate, make-data, eval, dump-embeddings.
// Failures print one machine-readable line to stderr:
//   error: kind=<usage|config|io|runtime> field=<name> message="..."

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfcl/experiment.hpp"
#include "cfcl/io/config.hpp"
#include "cfcl/io/dataset.hpp"
#include "cfcl/io/idx.hpp"
#include "cfcl/io/report.hpp"
#include "cfcl/io/svg.hpp"

namespace cfcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out + '"';
}

inline void report_error(std::ostream& err, const char* kind, const std::string& field, const std::string& msg) {
  err << "error: kind=" << kind << " field=" << (field.empty() ? "-" : field) << " message=" << quote(msg) << '\n';
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw io::IdxError(io::IdxErrc::io_failure, "cannot write " + p.string());
  return f;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
};

inline io::RunConfig load_with_overrides(const std::string& path, const Overrides& o) {
  io::RunConfig cfg = io::load_config(path);
  if (o.seed) cfg.fed.seed = *o.seed;
  if (o.strategy) cfg.fed.strategy = parse_strategy(*o.strategy);
  io::validate(cfg);
  return cfg;
}

inline void write_charts(const std::filesystem::path& dir, const RunHistory& h, const std::string& name) {
  io::Series by_iter{name, {}}, by_delay{name, {}};
  for (const auto& r : h.aggregations) {
    if (!r.accuracy) continue;
    by_iter.points.emplace_back(static_cast<double>(r.t), *r.accuracy);
    by_delay.points.emplace_back(r.cumulative_delay_s, *r.accuracy);
  }
  auto f1 = open_out(dir / "accuracy_vs_iteration.svg");
  io::write_line_chart(f1, "Linear-probe accuracy", "local SGD iteration", "accuracy", {by_iter});
  auto f2 = open_out(dir / "accuracy_vs_delay.svg");
  io::write_line_chart(f2, "Linear-probe accuracy", "cumulative delay (s)", "accuracy", {by_delay});
}

inline int simulate(const std::string& config, const Overrides& o, const std::string& out_dir, bool svg,
                    std::ostream& out) {
  const io::RunConfig cfg = load_with_overrides(config, o);
  const Experiment ex = prepare_experiment(cfg);
  const RunReport rep = run_experiment(ex, cfg);
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  {
    auto f = open_out(dir / "run_log.csv");
    io::write_run_log(rep.history, f);
  }
  {
    auto f = open_out(dir / "exchange_log.csv");
    io::write_exchange_log(rep.history, f);
  }
  {
    auto f = open_out(dir / "pull_log.csv");
    io::write_pull_log(rep.history, f);
  }
  {
    auto f = open_out(dir / "eval_log.csv");
    io::write_eval_log(rep.history, f);
  }
  {
    auto f = open_out(dir / "global_loss.csv");
    io::write_global_loss_log(rep.history, f);
  }
  {
    auto f = open_out(dir / "edges.csv");
    ex.topology.write_edges_csv(f);
  }
  {
    // Wall-clock sampling cost; the only non-deterministic output.
    auto f = open_out(dir / "timing.csv");
    const auto& c = rep.history.counters;
    f << "pull_events,measured_compute_s,transmission_delay_s,delay_with_measured_overhead_s\n"
      << c.pull_events << ',' << io::fmt_double(c.measured_compute_s) << ','
      << io::fmt_double(rep.transmission_delay_s) << ',' << io::fmt_double(rep.delay_with_measured_overhead_s)
      << '\n';
  }
  {
    auto f = open_out(dir / "summary.json");
    const auto& c = rep.history.counters;
    nlohmann::json j;
    j["strategy"] = std::string(to_string(cfg.fed.strategy));
    j["seed"] = cfg.fed.seed;
    j["parameter_count"] = rep.parameter_count;
    j["uplink_model_transfers"] = c.uplink_model_transfers;
    j["datapoints_pushed"] = c.datapoints_pushed;
    j["datapoints_pulled"] = c.datapoints_pulled;
    j["transmission_delay_s"] = rep.transmission_delay_s;
    j["time_averaged_label_variance"] = rep.time_averaged_label_variance;
    if (!rep.history.aggregations.empty() && rep.history.aggregations.back().accuracy)
      j["final_accuracy"] = *rep.history.aggregations.back().accuracy;
    f << j.dump(2) << '\n';
  }
  io::save_model((dir / "model_final.json").string(), rep.history.final_model);
  if (svg) write_charts(dir, rep.history, std::string(to_string(cfg.fed.strategy)));
  out << "wrote " << dir.string() << '\n';
  return kExitOk;
}

inline int make_data(const std::optional<std::string>& config, const Overrides& o, const std::string& images_in,
                     const std::string& labels_in, std::size_t limit, const std::string& out_dir, std::ostream& out) {
  io::LabeledDataset ds;
  if (!images_in.empty() || !labels_in.empty()) {
    if (images_in.empty() || labels_in.empty())
      throw ConfigError("from-images", "re-packing needs both --from-images and --from-labels");
    auto images = io::read_idx_file(images_in);
    auto labels = io::read_idx_file(labels_in);
    if (images.dims.empty() || labels.dims.size() != 1 || images.dims.front() != labels.dims.front())
      throw ConfigError("from-images", "image and label files disagree in item count");
    const std::size_t n = limit ? std::min<std::size_t>(limit, images.dims.front()) : images.dims.front();
    const std::size_t item = images.item_size();
    images.data.resize(n * item);
    images.dims.front() = static_cast<std::uint32_t>(n);
    labels.data.resize(n);
    labels.dims.front() = static_cast<std::uint32_t>(n);
    std::filesystem::create_directories(out_dir);
    io::write_idx_file((std::filesystem::path(out_dir) / "images.idx").string(), images);
    io::write_idx_file((std::filesystem::path(out_dir) / "labels.idx").string(), labels);
    out << "wrote " << n << " items to " << out_dir << '\n';
    return kExitOk;
  }
  if (!config) throw ConfigError("config", "make-data needs --config (synthetic) or --from-images/--from-labels");
  const io::RunConfig cfg = load_with_overrides(*config, o);
  if (cfg.dataset.source != "synthetic") throw ConfigError("dataset.source", "make-data generates synthetic data only");
  const auto& d = cfg.dataset;
  Rng means_rng = derive_rng(cfg.fed.seed, {stream::data, 0});
  io::GaussianClasses gen(d.classes, d.dim, d.sigma, d.separation, means_rng);
  Rng r = derive_rng(cfg.fed.seed, {stream::data, 5});
  ds = gen.sample(d.per_class + d.probe_train_per_class + d.probe_test_per_class, r);
  if (limit && limit < ds.size()) {
    ds.points.resize(limit);
    ds.labels.resize(limit);
  }
  const auto [images, labels] = io::dataset_to_idx(ds);
  std::filesystem::create_directories(out_dir);
  io::write_idx_file((std::filesystem::path(out_dir) / "images.idx").string(), images);
  io::write_idx_file((std::filesystem::path(out_dir) / "labels.idx").string(), labels);
  out << "wrote " << ds.size() << " items to " << out_dir << '\n';
  return kExitOk;
}

inline int eval(const std::string& config, const Overrides& o, const std::string& model_path, std::ostream& out) {
  const io::RunConfig cfg = load_with_overrides(config, o);
  const Experiment ex = prepare_experiment(cfg);
  const EncoderModel model = io::load_model(model_path);
  if (model.input_dim() != ex.pool.dim) throw ConfigError("model", "input dim does not match the dataset");
  HarnessObserver obs(ex, cfg.eval, cfg.fed.seed);
  nlohmann::json j;
  j["accuracy"] = obs.probe_accuracy(model, 0);
  j["probe_iterations"] = cfg.eval.probe.iterations;
  out << j.dump() << '\n';
  return kExitOk;
}

inline int dump_embeddings(const std::string& config, const Overrides& o, const std::string& model_path,
                           const std::string& out_file, std::ostream& out) {
  const io::RunConfig cfg = load_with_overrides(config, o);
  const Experiment ex = prepare_experiment(cfg);
  const EncoderModel model = io::load_model(model_path);
  if (model.input_dim() != ex.pool.dim) throw ConfigError("model", "input dim does not match the dataset");
  io::LabeledDataset all = ex.probe_train;
  all.append(ex.probe_test);
  const std::filesystem::path p(out_file);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  auto f = open_out(p);
  io::write_embeddings(model, all, f);
  out << "wrote " << all.size() << " embeddings to " << out_file << '\n';
  return kExitOk;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Cooperative federated contrastive learning simulator"};
  app.require_subcommand(1);

  std::string config, out_dir = "out", model_path, out_file = "embeddings.csv", images_in, labels_in, strategy;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  bool svg = false;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config, "run configuration (JSON)");
    if (config_required) opt->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--strategy", strategy, "cf-cl | uniform | fedavg | cf-cl-localmodel")
        ->check(CLI::IsMember({"cf-cl", "uniform", "fedavg", "cf-cl-localmodel"}));
  };

  auto* sim = app.add_subcommand("simulate", "run a federated simulation and write CSV logs");
  add_common(sim, true);
  sim->add_option("--out", out_dir, "output directory");
  sim->add_flag("--svg", svg, "also write SVG accuracy charts");

  auto* mk = app.add_subcommand("make-data", "write synthetic or re-packed IDX files");
  add_common(mk, false);
  mk->add_option("--out", out_dir, "output directory");
  mk->add_option("--from-images", images_in, "IDX image file to re-pack");
  mk->add_option("--from-labels", labels_in, "IDX label file to re-pack");
  mk->add_option("--limit", limit, "keep only the first N items");

  auto* ev = app.add_subcommand("eval", "linear-probe accuracy of a saved model");
  add_common(ev, true);
  ev->add_option("--model", model_path, "model snapshot (JSON)")->required();

  auto* dump = app.add_subcommand("dump-embeddings", "write embeddings and labels of the held-out set");
  add_common(dump, true);
  dump->add_option("--model", model_path, "model snapshot (JSON)")->required();
  dump->add_option("--out", out_file, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    detail::report_error(err, "usage", "", e.what());
    return kExitUsage;
  }

  detail::Overrides o;
  auto collect = [&](CLI::App* sub) {
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--strategy")) o.strategy = strategy;
  };

  try {
    if (sim->parsed()) {
      collect(sim);
      return detail::simulate(config, o, out_dir, svg, out);
    }
    if (mk->parsed()) {
      collect(mk);
      return detail::make_data(mk->count("--config") ? std::optional<std::string>(config) : std::nullopt, o,
                               images_in, labels_in, limit, out_dir, out);
    }
    if (ev->parsed()) {
      collect(ev);
      return detail::eval(config, o, model_path, out);
    }
    if (dump->parsed()) {
      collect(dump);
      return detail::dump_embeddings(config, o, model_path, out_file, out);
    }
  } catch (const ConfigError& e) {
    detail::report_error(err, "config", e.field(), e.what());
    return kExitUsage;
  } catch (const io::IdxError& e) {
    detail::report_error(err, "io", io::to_string(e.code()), e.what());
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    detail::report_error(err, "io", "", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    detail::report_error(err, "runtime", "", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

inline int cli_main(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"cfcl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cfcl::cli

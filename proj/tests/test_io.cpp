#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "cfcl/io/config.hpp"
#include "cfcl/io/dataset.hpp"
#include "cfcl/io/idx.hpp"
#include "cfcl/io/report.hpp"
#include "cfcl/io/svg.hpp"

using namespace cfcl;
using namespace cfcl::io;

namespace {

IdxErrc parse_error(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_idx(bytes);
  } catch (const IdxError& e) {
    return e.code();
  }
  ADD_FAILURE() << "parse_idx accepted malformed input";
  return IdxErrc::io_failure;
}

std::string config_error_field(const std::string& text) {
  try {
    parse_config(nlohmann::json::parse(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

LabeledDataset labelled(std::size_t classes, std::size_t per_class) {
  Rng rng(1);
  return synth_generate(classes, per_class, 4, 1.0, 2.0, rng);
}

}  // namespace

TEST(Idx, ParsesConstructedImage) {
  const std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4};
  const auto t = parse_idx(bytes);
  EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{1, 2, 2}));
  EXPECT_EQ(t.data, (std::vector<std::uint8_t>{1, 2, 3, 4}));
  EXPECT_EQ(t.item_size(), 4u);
}

TEST(Idx, ParsesLabelVector) {
  const auto t = parse_idx(std::vector<std::uint8_t>{0, 0, 8, 1, 0, 0, 0, 3, 9, 0, 4});
  EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{3}));
  EXPECT_EQ(t.data, (std::vector<std::uint8_t>{9, 0, 4}));
}

TEST(Idx, DistinctErrors) {
  EXPECT_EQ(parse_error({0, 0, 7, 3, 0, 0, 0, 1}), IdxErrc::bad_magic);
  EXPECT_EQ(parse_error({1, 0, 8, 1, 0, 0, 0, 1, 5}), IdxErrc::bad_magic);
  EXPECT_EQ(parse_error({0, 0, 8, 0}), IdxErrc::bad_magic);
  EXPECT_EQ(parse_error({0, 0, 8}), IdxErrc::truncated);
  EXPECT_EQ(parse_error({0, 0, 8, 2, 0, 0, 0, 2}), IdxErrc::truncated);
  EXPECT_EQ(parse_error({0, 0, 8, 1, 0, 0, 0, 4, 1, 2}), IdxErrc::truncated);
  EXPECT_EQ(parse_error({0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255}),
            IdxErrc::dimension_overflow);
  EXPECT_EQ(parse_error({0, 0, 8, 1, 0, 0, 0, 1, 1, 2}), IdxErrc::trailing_data);
}

TEST(Idx, RoundTripIsByteExact) {
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    IdxTensor t;
    const std::size_t nd = 1 + uniform_index(rng, 4);
    for (std::size_t k = 0; k < nd; ++k) t.dims.push_back(static_cast<std::uint32_t>(uniform_index(rng, 6)));
    t.data.resize(t.element_count());
    for (auto& b : t.data) b = static_cast<std::uint8_t>(uniform_index(rng, 256));
    const auto bytes = serialize_idx(t);
    const auto back = parse_idx(bytes);
    EXPECT_EQ(back, t);
    EXPECT_EQ(serialize_idx(back), bytes);
  }
}

TEST(Idx, FileRoundTripAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "cfcl_idx_roundtrip.idx";
  const IdxTensor t{{2, 3}, {1, 2, 3, 4, 5, 6}};
  write_idx_file(path.string(), t);
  EXPECT_EQ(read_idx_file(path.string()), t);
  std::filesystem::remove(path);
  try {
    read_idx_file(path.string());
    FAIL();
  } catch (const IdxError& e) {
    EXPECT_EQ(e.code(), IdxErrc::io_failure);
  }
}

TEST(Dataset, FromIdxScalesPixels) {
  const IdxTensor images{{2, 1, 2}, {0, 255, 51, 102}}, labels{{2}, {3, 1}};
  const auto ds = dataset_from_idx(images, labels);
  EXPECT_EQ(ds.dim, 2u);
  EXPECT_EQ(ds.class_count, 4u);
  EXPECT_EQ(ds.points[0], (Vector{0.0, 1.0}));
  EXPECT_DOUBLE_EQ(ds.points[1][0], 0.2);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 1}));
  EXPECT_THROW(dataset_from_idx(images, IdxTensor{{3}, {0, 1, 2}}), std::invalid_argument);
}

TEST(Dataset, ToIdxRoundTripsLabelsAndShape) {
  const auto ds = labelled(3, 5);
  const auto [img, lab] = dataset_to_idx(ds);
  EXPECT_EQ(img.dims, (std::vector<std::uint32_t>{15, 1, 4}));
  const auto back = dataset_from_idx(img, lab);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.dim, ds.dim);
}

TEST(Synth, ZeroSigmaGivesMeans) {
  Rng rng(4);
  GaussianClasses gen(3, 5, 0.0, 2.0, rng);
  const auto ds = gen.sample(4, rng);
  ASSERT_EQ(ds.size(), 12u);
  for (std::size_t k = 0; k < ds.size(); ++k) EXPECT_EQ(ds.points[k], gen.means()[ds.labels[k]]);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b)
      EXPECT_GE(std::sqrt(squared_distance(gen.means()[a], gen.means()[b])), 2.0 - 1e-9);
}

TEST(Synth, CountsAndDeterminism) {
  Rng a(9), b(9);
  const auto x = synth_generate(4, 7, 3, 0.5, 1.0, a), y = synth_generate(4, 7, 3, 0.5, 1.0, b);
  EXPECT_EQ(x.size(), 28u);
  EXPECT_EQ(x.points, y.points);
  EXPECT_EQ(x.labels, y.labels);
}

TEST(Synth, InfeasibleSeparationRejected) {
  Rng rng(0);
  EXPECT_THROW(synth_generate(3, 2, 1, 1.0, 5.0, rng), std::invalid_argument);
  EXPECT_THROW(synth_generate(2, 2, 2, -1.0, 1.0, rng), std::invalid_argument);
}

TEST(Partition, DisjointDevicesWithAssignedLabels) {
  const auto ds = labelled(10, 60);
  Rng rng(3);
  const auto p = partition_noniid(ds, 10, 2, 50, rng);
  std::set<PointId> all;
  std::vector<std::size_t> label_use(10, 0);
  for (std::size_t d = 0; d < 10; ++d) {
    ASSERT_EQ(p.device_points[d].size(), 50u);
    const std::set<int> mine(p.device_labels[d].begin(), p.device_labels[d].end());
    EXPECT_EQ(mine.size(), 2u);
    for (int l : mine) ++label_use[l];
    std::map<int, int> counts;
    for (auto id : p.device_points[d]) {
      EXPECT_TRUE(all.insert(id).second);
      EXPECT_TRUE(mine.contains(ds.labels[id]));
      ++counts[ds.labels[id]];
    }
    for (auto [l, c] : counts) EXPECT_EQ(c, 25);
  }
  for (auto u : label_use) EXPECT_EQ(u, 2u);
}

TEST(Partition, AllLabelsPerDeviceIsIidLike) {
  const auto ds = labelled(4, 40);
  Rng rng(5);
  const auto p = partition_noniid(ds, 3, 4, 40, rng);
  for (const auto& pts : p.device_points) {
    std::set<int> seen;
    for (auto id : pts) seen.insert(ds.labels[id]);
    EXPECT_EQ(seen.size(), 4u);
  }
}

TEST(Partition, InfeasibleSizesRejected) {
  const auto ds = labelled(4, 10);
  Rng rng(1);
  EXPECT_THROW(partition_noniid(ds, 4, 2, 30, rng), std::invalid_argument);
  EXPECT_THROW(partition_noniid(ds, 4, 5, 4, rng), std::invalid_argument);
  EXPECT_THROW(partition_noniid(ds, 0, 1, 4, rng), std::invalid_argument);
}

TEST(Holdout, SplitsPerClass) {
  const auto ds = labelled(3, 20);
  Rng rng(2);
  const auto s = split_holdout(ds, 4, 5, rng);
  EXPECT_EQ(s.probe_train.size(), 12u);
  EXPECT_EQ(s.probe_test.size(), 15u);
  EXPECT_EQ(s.train.size(), 33u);
  EXPECT_THROW(split_holdout(ds, 15, 10, rng), std::invalid_argument);
}

TEST(Config, DefaultsFromEmptyObject) {
  const auto c = parse_config(nlohmann::json::object());
  EXPECT_EQ(c.fed.schedule.total_steps, 2500u);
  EXPECT_EQ(c.fed.schedule.aggregation_interval, 50u);
  EXPECT_EQ(c.fed.schedule.pull_interval, 10u);
  EXPECT_EQ(c.fed.k_reserve, 500u);
  EXPECT_EQ(c.fed.k_approx, 1000u);
  EXPECT_EQ(c.fed.cluster_count, 4u);
  EXPECT_EQ(c.devices, 10u);
  EXPECT_EQ(c.fed.layer_dims.front(), c.dataset.dim);
}

TEST(Config, ParsesSections) {
  const auto c = parse_config(nlohmann::json::parse(R"({
    "seed": 7, "strategy": "uniform", "devices": 3,
    "schedule": {"T": 100, "T_a": 20, "T_p": 5},
    "topology": {"kind": "explicit", "adjacency": [[1], [0, 2], [1]]},
    "exchange": {"k_reserve": 4, "k_approx": 30, "budget": 6, "buffer": "unlimited"},
    "training": {"layer_dims": [8, 5, 2], "activation": "tanh"},
    "augmentations": [{"kind": "noise", "sigma": 0.2}, {"kind": "masking", "fraction": 0.25}],
    "dataset": {"classes": 3, "per_class": 40, "dim": 8, "per_device": 30, "labels_per_device": 1},
    "delay": {"param_count": 45433, "elements_per_datapoint": 784}
  })"));
  EXPECT_EQ(c.fed.seed, 7u);
  EXPECT_EQ(c.fed.strategy, Strategy::uniform);
  EXPECT_EQ(c.fed.buffer, BufferMode::unlimited);
  EXPECT_EQ(c.fed.activation, Activation::tanh);
  EXPECT_EQ(c.topology.adjacency.size(), 3u);
  ASSERT_EQ(c.augmentations.size(), 2u);
  EXPECT_FALSE(c.augmentations[0].sigma_relative);
  EXPECT_EQ(c.augmentations[1].spec.mask_fraction, 0.25);
  EXPECT_EQ(c.fed.delay.param_count, 45433u);
}

TEST(Config, RejectsViolationsWithFieldNames) {
  EXPECT_EQ(config_error_field(R"({"exchange": {"budget": 2000}})"), "exchange.budget");
  EXPECT_EQ(config_error_field(R"({"exchange": {"k_reserve": 7000}})"), "exchange.k_reserve");
  EXPECT_EQ(config_error_field(R"({"schedule": {"T_a": 0}})"), "schedule.T_a");
  EXPECT_EQ(config_error_field(R"({"strategy": "greedy"})"), "strategy");
  EXPECT_EQ(config_error_field(R"({"training": {"layer_dims": [5, 3]}})"), "training.layer_dims");
  EXPECT_EQ(config_error_field(R"({"training": {"activation": "gelu"}})"), "training.activation");
  EXPECT_EQ(config_error_field(R"({"training": {"colour": 1}})"), "training.colour");
  EXPECT_EQ(config_error_field(R"({"typo": 1})"), "typo");
  EXPECT_EQ(config_error_field(R"({"augmentations": [{"kind": "blur"}]})"), "augmentations[0].kind");
  EXPECT_EQ(config_error_field(R"({"augmentations": [{"kind": "masking", "fraction": 2}]})"), "augmentations[0]");
  EXPECT_EQ(config_error_field(R"({"topology": {"avg_degree": 12}})"), "topology.avg_degree");
  EXPECT_EQ(config_error_field(R"({"devices": 2, "topology": {"kind": "explicit", "adjacency": [[5], [0]]}})"),
            "topology.adjacency");
  EXPECT_EQ(config_error_field(R"({"dataset": {"source": "csv"}})"), "dataset.source");
  EXPECT_EQ(config_error_field(R"({"seed": "seven"})"), "seed");
  EXPECT_EQ(config_error_field(R"({"delay": {"rate_bps": 0}})"), "delay");
}

TEST(Report, CsvSchemas) {
  RunHistory h;
  h.step_losses = {{1, 0, 0.5}, {1, 1, 0.25}};
  h.candidates = {{10, 0, 1, 42, 0.125, true}};
  h.pulls = {{10, 0, 1, 5, {0.75, 0.25}, 1.5}};
  h.aggregations = {{1, 50, 0.8, 120.0, 1.5, 0.3}, {2, 100, std::nullopt, std::nullopt, 3.0, 0.2}};
  std::ostringstream run, ex, pull, eval;
  write_run_log(h, run);
  write_exchange_log(h, ex);
  write_pull_log(h, pull);
  write_eval_log(h, eval);
  EXPECT_EQ(run.str(), "t,device,loss\n1,0,0.5\n1,1,0.25\n");
  EXPECT_EQ(ex.str(), "t,i,j,candidate,probability,chosen\n10,0,1,42,0.125,1\n");
  EXPECT_EQ(pull.str(), "t,i,j,n,macro_probs,entropy\n10,0,1,5,0.75;0.25,1.5\n");
  EXPECT_EQ(eval.str(), "gamma,t,accuracy,label_variance_mean,cumulative_delay_s\n1,50,0.8,120,1.5\n2,100,,,3\n");
}

TEST(Report, ModelSnapshotRoundTrip) {
  Rng rng(3);
  const auto m = EncoderModel::random({4, 3, 2}, Activation::tanh, rng);
  EXPECT_EQ(model_from_json(nlohmann::json::parse(model_to_json(m).dump())), m);
  auto bad = model_to_json(m);
  bad["params"].erase(0);
  EXPECT_THROW(model_from_json(bad), ShapeError);
  EXPECT_THROW(model_from_json(nlohmann::json::object()), ConfigError);
}

TEST(Svg, WritesPolylinePerSeries) {
  std::ostringstream os;
  write_line_chart(os, "acc", "t", "accuracy", {{"cf-cl", {{0, 0.1}, {1, 0.5}}}, {"uniform", {{0, 0.2}, {1, 0.4}}}});
  const auto s = os.str();
  EXPECT_NE(s.find("<svg"), std::string::npos);
  std::size_t lines = 0;
  for (auto pos = s.find("<polyline"); pos != std::string::npos; pos = s.find("<polyline", pos + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
}

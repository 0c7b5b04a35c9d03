#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nsn/data.hpp"
#include "nsn/train.hpp"

namespace nsn {

struct LayerTopology {
  std::string kind;  // nsn | dense
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t max_rank = 0;  // nsn only
  std::string activation = "relu";
};

struct DataConfig {
  std::string source = "synth";  // synth | csv | rawf32
  // synth
  std::size_t num_classes = 10;
  std::size_t dim = 64;
  std::size_t n_per_class = 500;
  std::size_t test_n_per_class = 100;
  double separation = 3.0;
  // file sources
  std::string train_path;
  std::string test_path;
};

struct AblateConfig {
  std::vector<std::string> modes;
  std::vector<std::uint64_t> seeds;
};

struct BaselineConfig {
  std::vector<std::size_t> ranks;
};

struct AnalysisConfig {
  std::vector<std::size_t> ranks;
  std::size_t layer = 0;
  std::size_t samples = 10000;
  double lipschitz = 1.4142135623730951;  // sqrt(2), valid for mean softmax CE
  std::size_t r1 = 1;
  std::size_t r_int = 0;  // 0: default to the probe layer's max rank
};

/// One structured document per run; unknown keys are rejected.
struct RunConfig {
  std::vector<LayerTopology> model_layers;
  DataConfig data;
  TrainConfig train;
  std::string output_dir = "out";
  AblateConfig ablate;
  BaselineConfig baseline;
  AnalysisConfig analysis;
  std::string digest;  // FNV-1a of the raw config text
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text);

/// Seeded from-scratch model construction from the declared topology.
Model build_model(const std::vector<LayerTopology>& layers, std::uint64_t seed);

/// (train, test) splits per the data section; deterministic in seed.
std::pair<Dataset, Dataset> load_data_splits(const DataConfig& data, std::uint64_t seed);

}  // namespace nsn

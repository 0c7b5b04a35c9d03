#include "nsn/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nsn {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& context, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config section '" + context + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in config section '" + context + "'");
    }
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

TrainConfig parse_train_section(const json& t) {
  check_keys(t, "train",
             {"epochs", "batch_size", "learning_rate", "momentum", "seed", "mode", "use_uncertainty",
              "lambda", "anchor_rank", "rank_pool", "eval_ranks", "interpolated_eval_ranks"});
  TrainConfig cfg;
  cfg.epochs = t.value("epochs", cfg.epochs);
  cfg.batch_size = t.value("batch_size", cfg.batch_size);
  cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
  cfg.momentum = t.value("momentum", cfg.momentum);
  cfg.seed = t.value("seed", cfg.seed);
  if (t.contains("mode")) cfg.mode = ablation_mode_from_name(t.at("mode").get<std::string>());
  cfg.use_uncertainty = t.value("use_uncertainty", cfg.use_uncertainty);
  cfg.lambda = t.value("lambda", cfg.lambda);
  if (!t.contains("anchor_rank")) throw ConfigError("train.anchor_rank is required");
  cfg.anchor_rank = t.at("anchor_rank").get<std::size_t>();
  if (t.contains("rank_pool")) cfg.rank_pool = t.at("rank_pool").get<std::vector<std::size_t>>();
  if (t.contains("eval_ranks")) cfg.eval_ranks = t.at("eval_ranks").get<std::vector<std::size_t>>();
  if (t.contains("interpolated_eval_ranks")) {
    cfg.interpolated_eval_ranks = t.at("interpolated_eval_ranks").get<std::vector<std::size_t>>();
  }
  validate_train_config(cfg);
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  check_keys(doc, "<root>", {"model", "data", "train", "output_dir", "ablate", "baseline", "analysis"});

  RunConfig cfg;
  cfg.digest = hex64(fnv1a64(text.data(), text.size()));
  cfg.output_dir = doc.value("output_dir", cfg.output_dir);

  if (!doc.contains("model")) throw ConfigError("config needs a 'model' section");
  check_keys(doc.at("model"), "model", {"layers"});
  for (const auto& l : doc.at("model").at("layers")) {
    check_keys(l, "model.layers[]", {"kind", "d_in", "d_out", "max_rank", "activation"});
    LayerTopology layer;
    layer.kind = l.at("kind").get<std::string>();
    if (layer.kind != "nsn" && layer.kind != "dense") {
      throw ConfigError("layer kind must be 'nsn' or 'dense', got '" + layer.kind + "'");
    }
    layer.d_in = l.at("d_in").get<std::size_t>();
    layer.d_out = l.at("d_out").get<std::size_t>();
    if (layer.kind == "nsn") {
      if (!l.contains("max_rank")) throw ConfigError("nsn layer needs max_rank");
      layer.max_rank = l.at("max_rank").get<std::size_t>();
      if (layer.max_rank == 0) throw ConfigError("max_rank must be >= 1");
    }
    layer.activation = l.value("activation", layer.activation);
    activation_from_name(layer.activation);  // validates
    cfg.model_layers.push_back(std::move(layer));
  }
  if (cfg.model_layers.empty()) throw ConfigError("model.layers must not be empty");

  if (doc.contains("data")) {
    const auto& d = doc.at("data");
    check_keys(d, "data",
               {"source", "num_classes", "dim", "n_per_class", "test_n_per_class", "separation",
                "train_path", "test_path"});
    cfg.data.source = d.value("source", cfg.data.source);
    if (cfg.data.source != "synth" && cfg.data.source != "csv" && cfg.data.source != "rawf32") {
      throw ConfigError("data.source must be synth, csv, or rawf32");
    }
    cfg.data.num_classes = d.value("num_classes", cfg.data.num_classes);
    cfg.data.dim = d.value("dim", cfg.data.dim);
    cfg.data.n_per_class = d.value("n_per_class", cfg.data.n_per_class);
    cfg.data.test_n_per_class = d.value("test_n_per_class", cfg.data.test_n_per_class);
    cfg.data.separation = d.value("separation", cfg.data.separation);
    cfg.data.train_path = d.value("train_path", cfg.data.train_path);
    cfg.data.test_path = d.value("test_path", cfg.data.test_path);
    if (cfg.data.source != "synth" && (cfg.data.train_path.empty() || cfg.data.test_path.empty())) {
      throw ConfigError("data.train_path and data.test_path are required for file sources");
    }
  }

  if (!doc.contains("train")) throw ConfigError("config needs a 'train' section");
  cfg.train = parse_train_section(doc.at("train"));

  if (doc.contains("ablate")) {
    const auto& a = doc.at("ablate");
    check_keys(a, "ablate", {"modes", "seeds"});
    if (a.contains("modes")) cfg.ablate.modes = a.at("modes").get<std::vector<std::string>>();
    for (const auto& m : cfg.ablate.modes) ablation_mode_from_name(m);
    if (a.contains("seeds")) cfg.ablate.seeds = a.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (doc.contains("baseline")) {
    check_keys(doc.at("baseline"), "baseline", {"ranks"});
    if (doc.at("baseline").contains("ranks")) {
      cfg.baseline.ranks = doc.at("baseline").at("ranks").get<std::vector<std::size_t>>();
    }
  }
  if (doc.contains("analysis")) {
    const auto& a = doc.at("analysis");
    check_keys(a, "analysis", {"ranks", "layer", "samples", "lipschitz", "r1", "r_int"});
    if (a.contains("ranks")) cfg.analysis.ranks = a.at("ranks").get<std::vector<std::size_t>>();
    cfg.analysis.layer = a.value("layer", cfg.analysis.layer);
    cfg.analysis.samples = a.value("samples", cfg.analysis.samples);
    cfg.analysis.lipschitz = a.value("lipschitz", cfg.analysis.lipschitz);
    cfg.analysis.r1 = a.value("r1", cfg.analysis.r1);
    cfg.analysis.r_int = a.value("r_int", cfg.analysis.r_int);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

Model build_model(const std::vector<LayerTopology>& layers, std::uint64_t seed) {
  RandomStream rng(derive_seed(seed, 0));
  Model model;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    Layer layer;
    bool last = (i + 1 == layers.size());
    layer.activation = last ? Activation::kIdentity : activation_from_name(spec.activation);
    if (spec.kind == "nsn") {
      layer.params = make_nsn_layer(spec.d_in, spec.d_out, spec.max_rank, rng);
    } else {
      layer.params = make_dense_layer(spec.d_in, spec.d_out, rng);
    }
    model.layers.push_back(std::move(layer));
  }
  validate_model(model);
  return model;
}

std::pair<Dataset, Dataset> load_data_splits(const DataConfig& data, std::uint64_t seed) {
  if (data.source == "synth") {
    // One draw with shared class centers, split class-wise into disjoint
    // train/test blocks.
    std::size_t per_class = data.n_per_class + data.test_n_per_class;
    Dataset all = synth_clusters(derive_seed(seed, 100), data.num_classes, data.dim, per_class,
                                 data.separation);
    Dataset train;
    Dataset test;
    train.features = Matrix(data.num_classes * data.n_per_class, data.dim);
    test.features = Matrix(data.num_classes * data.test_n_per_class, data.dim);
    train.num_classes = test.num_classes = data.num_classes;
    test.split = Split::kTest;
    std::size_t ti = 0, ei = 0;
    for (std::size_t c = 0; c < data.num_classes; ++c) {
      for (std::size_t i = 0; i < per_class; ++i) {
        std::size_t src = c * per_class + i;
        if (i < data.n_per_class) {
          std::copy(all.features.row(src).begin(), all.features.row(src).end(),
                    train.features.row(ti++).begin());
          train.labels.push_back(all.labels[src]);
        } else {
          std::copy(all.features.row(src).begin(), all.features.row(src).end(),
                    test.features.row(ei++).begin());
          test.labels.push_back(all.labels[src]);
        }
      }
    }
    return {std::move(train), std::move(test)};
  }
  DatasetFormat fmt = data.source == "csv" ? DatasetFormat::kCsv : DatasetFormat::kRawF32;
  Dataset train = load_dataset(data.train_path, fmt);
  Dataset test = load_dataset(data.test_path, fmt);
  test.split = Split::kTest;
  return {std::move(train), std::move(test)};
}

}  // namespace nsn

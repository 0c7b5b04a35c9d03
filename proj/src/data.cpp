#include "nsn/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nsn {

using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr char kDatasetMagic[4] = {'N', 'S', 'N', 'D'};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty csv file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  std::size_t label_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "label") label_col = i;
  }
  if (label_col == header.size()) throw DataError("csv header has no 'label' column: " + path);
  const std::size_t d = header.size() - 1;
  if (d == 0) throw DataError("csv has no feature columns: " + path);

  std::vector<double> values;
  std::vector<std::uint32_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("csv line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      try {
        if (i == label_col) {
          long v = std::stol(fields[i]);
          if (v < 0) throw DataError("negative label at csv line " + std::to_string(line_no));
          labels.push_back(static_cast<std::uint32_t>(v));
        } else {
          values.push_back(std::stod(fields[i]));
        }
      } catch (const std::invalid_argument&) {
        throw DataError("unparseable field '" + fields[i] + "' at csv line " + std::to_string(line_no));
      }
    }
  }
  if (labels.empty()) throw DataError("csv has no data rows: " + path);

  Dataset data;
  data.features = Matrix(labels.size(), d);
  std::copy(values.begin(), values.end(), data.features.data().begin());
  data.labels = std::move(labels);
  data.num_classes = 0;
  for (auto l : data.labels) data.num_classes = std::max<std::size_t>(data.num_classes, l + 1);
  return data;
}

Dataset load_rawf32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  char magic[4];
  std::uint32_t n = 0, d = 0, num_classes = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  in.read(reinterpret_cast<char*>(&num_classes), 4);
  if (!in) throw DataError("rawf32 header truncated at byte " + std::to_string(in.gcount()) + ": " + path);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) {
    throw DataError("rawf32 magic mismatch at byte 0 (expected NSND): " + path);
  }
  const std::size_t feature_count = static_cast<std::size_t>(n) * d;
  std::vector<float> feats(feature_count);
  in.read(reinterpret_cast<char*>(feats.data()), static_cast<std::streamsize>(feature_count * 4));
  if (static_cast<std::size_t>(in.gcount()) != feature_count * 4) {
    throw DataError("rawf32 feature payload truncated: expected " + std::to_string(feature_count * 4) +
                    " bytes after offset 16, got " + std::to_string(in.gcount()));
  }
  std::vector<std::uint32_t> labels(n);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n) * 4);
  if (static_cast<std::size_t>(in.gcount()) != static_cast<std::size_t>(n) * 4) {
    throw DataError("rawf32 label payload truncated: expected " + std::to_string(n * 4) +
                    " bytes at offset " + std::to_string(16 + feature_count * 4) + ", got " +
                    std::to_string(in.gcount()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw DataError("rawf32 label " + std::to_string(labels[i]) + " >= num_classes " +
                      std::to_string(num_classes) + " at byte offset " +
                      std::to_string(16 + feature_count * 4 + i * 4));
    }
  }
  Dataset data;
  data.features = Matrix(n, d);
  for (std::size_t i = 0; i < feature_count; ++i) data.features.data()[i] = static_cast<double>(feats[i]);
  data.labels = std::move(labels);
  data.num_classes = num_classes;
  return data;
}

}  // namespace

Dataset load_dataset(const std::string& path, DatasetFormat format) {
  switch (format) {
    case DatasetFormat::kCsv:
      return load_csv(path);
    case DatasetFormat::kRawF32:
      return load_rawf32(path);
  }
  throw ConfigError("unknown dataset format");
}

void save_dataset_rawf32(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  std::uint32_t n = static_cast<std::uint32_t>(data.size());
  std::uint32_t d = static_cast<std::uint32_t>(data.dim());
  std::uint32_t c = static_cast<std::uint32_t>(data.num_classes);
  out.write(kDatasetMagic, 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(&c), 4);
  std::vector<float> feats(data.features.data().begin(), data.features.data().end());
  out.write(reinterpret_cast<const char*>(feats.data()), static_cast<std::streamsize>(feats.size()) * 4);
  out.write(reinterpret_cast<const char*>(data.labels.data()),
            static_cast<std::streamsize>(data.labels.size()) * 4);
  if (!out) throw DataError("write failed: " + path);
}

Dataset synth_clusters(std::uint64_t seed, std::size_t num_classes, std::size_t d,
                       std::size_t n_per_class, double separation) {
  if (num_classes == 0 || d == 0 || n_per_class == 0) {
    throw ConfigError("synth_clusters arguments must be positive");
  }
  if (num_classes > d) {
    throw ConfigError("synth_clusters: num_classes " + std::to_string(num_classes) + " > dim " +
                      std::to_string(d) + "; orthonormal centers impossible");
  }
  RandomStream rng(seed);
  // Orthonormal class directions via Gram-Schmidt on Gaussian rows; each row
  // is unit-normalized before the next projects against it, then every
  // direction is scaled to the requested separation.
  Matrix centers = rng.gaussian_matrix(num_classes, d);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto row = centers.row(c);
    for (std::size_t k = 0; k < c; ++k) {
      double proj = dot(row, centers.row(k));
      for (std::size_t j = 0; j < d; ++j) row[j] -= proj * centers.row(k)[j];
    }
    double nrm = norm2(row);
    for (std::size_t j = 0; j < d; ++j) row[j] /= nrm;
  }
  scale_in_place(centers, separation);

  Dataset data;
  data.features = Matrix(num_classes * n_per_class, d);
  data.labels.resize(num_classes * n_per_class);
  data.num_classes = num_classes;
  std::size_t idx = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++idx) {
      auto row = data.features.row(idx);
      for (std::size_t j = 0; j < d; ++j) row[j] = centers(c, j) + rng.gaussian();
      data.labels[idx] = static_cast<std::uint32_t>(c);
    }
  }
  return data;
}

namespace {

constexpr int kCheckpointVersion = 1;

void append_payload(std::vector<double>& payload, const Model& model) {
  for (const auto& layer : model.layers) {
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      payload.insert(payload.end(), nsn->A.data().begin(), nsn->A.data().end());
      payload.insert(payload.end(), nsn->B.data().begin(), nsn->B.data().end());
      payload.insert(payload.end(), nsn->bias.begin(), nsn->bias.end());
    } else {
      const auto& dense = std::get<DenseLayer>(layer.params);
      payload.insert(payload.end(), dense.W.data().begin(), dense.W.data().end());
      payload.insert(payload.end(), dense.bias.begin(), dense.bias.end());
    }
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  validate_model(ckpt.model);
  std::vector<double> payload;
  append_payload(payload, ckpt.model);

  json header;
  header["version"] = kCheckpointVersion;
  json layers = json::array();
  for (const auto& layer : ckpt.model.layers) {
    json l;
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      l["kind"] = "nsn";
      l["d_in"] = nsn->d_in();
      l["d_out"] = nsn->d_out();
      l["max_rank"] = nsn->max_rank;
    } else {
      l["kind"] = "dense";
      l["d_in"] = layer.d_in();
      l["d_out"] = layer.d_out();
    }
    l["activation"] = activation_name(layer.activation);
    layers.push_back(l);
  }
  header["layers"] = layers;
  if (ckpt.uncertainty) {
    json u = json::object();
    for (const auto& [rank, s] : *ckpt.uncertainty) u[std::to_string(rank)] = s;
    header["uncertainty"] = u;
  } else {
    header["uncertainty"] = nullptr;
  }
  header["meta"] = {{"seed", ckpt.meta.seed}, {"config_digest", ckpt.meta.config_digest}};
  header["payload_doubles"] = payload.size();
  header["payload_digest"] = hex64(fnv1a64(payload.data(), payload.size() * sizeof(double)));

  std::string body = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << "NSNCKPT v" << kCheckpointVersion << " " << body.size() << "\n";
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw DataError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string magic, version_tag;
  std::size_t header_bytes = 0;
  in >> magic >> version_tag >> header_bytes;
  in.ignore(1);  // newline
  if (!in || magic != "NSNCKPT") throw DataError("not a checkpoint file (bad magic): " + path);
  if (version_tag != "v" + std::to_string(kCheckpointVersion)) {
    throw DataError("unknown checkpoint version '" + version_tag + "': " + path);
  }
  std::string body(header_bytes, '\0');
  in.read(body.data(), static_cast<std::streamsize>(header_bytes));
  if (static_cast<std::size_t>(in.gcount()) != header_bytes) {
    throw DataError("checkpoint header truncated: " + path);
  }
  json header;
  try {
    header = json::parse(body);
  } catch (const json::exception& e) {
    throw DataError("corrupted checkpoint header (" + std::string(e.what()) + "): " + path);
  }

  Checkpoint ckpt;
  std::size_t expected_doubles = header.at("payload_doubles").get<std::size_t>();
  std::vector<double> payload(expected_doubles);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(expected_doubles * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != expected_doubles * sizeof(double)) {
    throw DataError("checkpoint payload size mismatch: expected " +
                    std::to_string(expected_doubles * sizeof(double)) + " bytes, got " +
                    std::to_string(in.gcount()) + ": " + path);
  }
  std::string digest = hex64(fnv1a64(payload.data(), payload.size() * sizeof(double)));
  if (digest != header.at("payload_digest").get<std::string>()) {
    throw DataError("checkpoint payload digest mismatch (corruption): " + path);
  }

  std::size_t cursor = 0;
  auto take = [&](std::size_t count) {
    if (cursor + count > payload.size()) throw DataError("checkpoint payload shorter than topology: " + path);
    std::size_t at = cursor;
    cursor += count;
    return at;
  };
  for (const auto& l : header.at("layers")) {
    Layer layer;
    layer.activation = activation_from_name(l.at("activation").get<std::string>());
    std::size_t d_in = l.at("d_in").get<std::size_t>();
    std::size_t d_out = l.at("d_out").get<std::size_t>();
    if (l.at("kind") == "nsn") {
      NsnLayer nsn;
      nsn.max_rank = l.at("max_rank").get<std::size_t>();
      nsn.A = Matrix(nsn.max_rank, d_in);
      std::size_t at = take(nsn.A.size());
      std::copy_n(payload.begin() + at, nsn.A.size(), nsn.A.data().begin());
      nsn.B = Matrix(d_out, nsn.max_rank);
      at = take(nsn.B.size());
      std::copy_n(payload.begin() + at, nsn.B.size(), nsn.B.data().begin());
      nsn.bias.resize(d_out);
      at = take(d_out);
      std::copy_n(payload.begin() + at, d_out, nsn.bias.begin());
      layer.params = std::move(nsn);
    } else if (l.at("kind") == "dense") {
      DenseLayer dense;
      dense.W = Matrix(d_out, d_in);
      std::size_t at = take(dense.W.size());
      std::copy_n(payload.begin() + at, dense.W.size(), dense.W.data().begin());
      dense.bias.resize(d_out);
      at = take(d_out);
      std::copy_n(payload.begin() + at, d_out, dense.bias.begin());
      layer.params = std::move(dense);
    } else {
      throw DataError("unknown layer kind in checkpoint header: " + path);
    }
    ckpt.model.layers.push_back(std::move(layer));
  }
  if (cursor != payload.size()) {
    throw DataError("checkpoint payload size mismatch: topology consumes " + std::to_string(cursor) +
                    " doubles, payload has " + std::to_string(payload.size()) + ": " + path);
  }

  if (!header.at("uncertainty").is_null()) {
    std::map<std::size_t, double> u;
    for (const auto& [key, value] : header.at("uncertainty").items()) {
      u[std::stoul(key)] = value.get<double>();
    }
    ckpt.uncertainty = std::move(u);
  }
  ckpt.meta.seed = header.at("meta").at("seed").get<std::uint64_t>();
  ckpt.meta.config_digest = header.at("meta").at("config_digest").get<std::string>();
  validate_model(ckpt.model);
  return ckpt;
}

void write_runlog(const std::vector<RunRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write run log: " + path);
  for (const auto& rec : records) {
    json j;
    j["epoch"] = rec.epoch;
    j["phase"] = rec.phase;
    j["rank"] = rec.rank;
    j["loss"] = rec.loss;
    j["accuracy"] = rec.accuracy;
    json s = json::object();
    for (const auto& [rank, v] : rec.s) s[std::to_string(rank)] = v;
    j["s"] = s;
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<RunRecord> read_runlog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run log: " + path);
  std::vector<RunRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("run log line " + std::to_string(line_no) + " unparseable: " + e.what());
    }
    RunRecord rec;
    rec.epoch = j.at("epoch").get<std::size_t>();
    rec.phase = j.at("phase").get<std::string>();
    rec.rank = j.at("rank").get<std::size_t>();
    rec.loss = j.at("loss").get<double>();
    rec.accuracy = j.at("accuracy").get<double>();
    for (const auto& [key, value] : j.at("s").items()) rec.s[std::stoul(key)] = value.get<double>();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace nsn

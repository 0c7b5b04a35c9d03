#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsn/linalg.hpp"
#include "nsn/model.hpp"

namespace nsn {

enum class Split { kTrain, kVal, kTest };

struct Dataset {
  Matrix features;                  // N x d
  std::vector<std::uint32_t> labels;  // length N, values in [0, num_classes)
  std::size_t num_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

enum class DatasetFormat { kCsv, kRawF32 };

/// csv: header row, a column named "label", remaining columns features.
/// rawf32: 16-byte header (magic "NSND", u32 N, u32 d, u32 num_classes,
/// little-endian), N*d f32 features, N u32 labels. Values widen to f64.
Dataset load_dataset(const std::string& path, DatasetFormat format);
void save_dataset_rawf32(const Dataset& data, const std::string& path);

/// Balanced Gaussian clusters: class c centered at separation * u_c for
/// orthonormal random directions u_c, unit isotropic noise.
Dataset synth_clusters(std::uint64_t seed, std::size_t num_classes, std::size_t d,
                       std::size_t n_per_class, double separation);

struct UncertaintyParams;  // defined in train.hpp

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_digest;
};

struct Checkpoint {
  Model model;
  std::optional<std::map<std::size_t, double>> uncertainty;  // rank -> s_k
  CheckpointMeta meta;
};

/// Single-file container: one header line ("NSNCKPT v1 <json-bytes>"), a JSON
/// topology/metadata document, then the f64 little-endian payload in declared
/// layer order (NSN: A row-major, B row-major, bias; dense: W row-major, bias).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct RunRecord {
  std::size_t epoch = 0;
  std::string phase;  // train | id_eval | ood_eval
  std::size_t rank = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::map<std::size_t, double> s;
};

/// Line-delimited JSON records, one per evaluation event.
void write_runlog(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> read_runlog(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t bytes);

}  // namespace nsn

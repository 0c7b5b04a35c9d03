#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "nsn/model.hpp"

namespace nsn {

/// Which dense layers to replace, and the target max rank for each.
/// A target of 0 means the lossless default min(d_in, d_out).
struct SurgeryPlan {
  std::map<std::size_t, std::size_t> targets;
};

/// B = U sqrt(S), A = sqrt(S) V^T from the top target_rank singular
/// components. At full rank B A reconstructs W; below it, B_r A_r is the best
/// rank-r approximation for every r (components are ordered). Zero singular
/// values below 1e-12 * sigma_1 are kept so shapes match the requested rank.
struct SvdInitResult {
  Matrix A;  // target_rank x d_in
  Matrix B;  // d_out x target_rank
  std::vector<double> singular_values;
};
SvdInitResult svd_init(const Matrix& w, std::size_t target_rank);

struct SurgeryRecord {
  std::size_t index = 0;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t target_rank = 0;
  double relative_truncation_error = 0.0;
  std::size_t flops_before = 0;
  std::size_t flops_after_full = 0;
  std::size_t flops_after_half = 0;
  std::size_t near_zero_singular_values = 0;  // kept, not trimmed
};

struct SurgeryResult {
  Model model;
  std::vector<SurgeryRecord> report;
};

/// Replaces each selected dense layer with an SVD-initialized NSN layer,
/// copying the bias. Selecting an already-NSN layer or an invalid index is a
/// plan error.
SurgeryResult surgical_replace(const Model& model, const SurgeryPlan& plan);

}  // namespace nsn

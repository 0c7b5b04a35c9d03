#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "nsn/data.hpp"
#include "nsn/model.hpp"

namespace nsn {

/// score(r_small, r_large) = (1/r_small) * ||U_large^T U_small||_F^2 over the
/// leading columns of each matrix's left singular basis; 1 means the smaller
/// column space lies inside the larger one.
double containment_score(const Matrix& w_small, const Matrix& w_large, std::size_t r_small,
                         std::size_t r_large);

struct ContainmentGrid {
  std::vector<std::size_t> ranks;
  std::vector<std::vector<double>> scores;  // scores[i][j] = containment of ranks[i] in ranks[j]
};
ContainmentGrid containment_grid(const NsnLayer& layer, const std::vector<std::size_t>& ranks);

struct EnergyDecayReport {
  std::vector<double> a_norms;
  std::vector<double> b_norms;
  std::vector<double> products;         // ||a_i|| * ||b_i||
  std::vector<std::size_t> violations;  // indices i where the product increases from i to i+1
  double max_violation = 0.0;
};
/// Diagnoses the monotone-energy assumption; never enforces it.
EnergyDecayReport energy_decay_audit(const NsnLayer& layer);

struct PerturbationCheck {
  double lhs;  // ||f(x; r+1) - f(x; r)||
  double rhs;  // ||b_{r+1}|| * ||a_{r+1}|| * ||x||
  bool satisfied;
};
PerturbationCheck adjacent_perturbation_check(const NsnLayer& layer, std::span<const double> x,
                                              std::size_t r);

enum class ProbeLoss {
  kCrossEntropy,  // sqrt(2)-Lipschitz in the logits per example
  kL2Distance,    // ||logits - onehot(y)||, 1-Lipschitz
};

struct BoundReport {
  std::size_t r1 = 0;
  std::size_t r_int = 0;
  double empirical_gap = 0.0;
  double bound = 0.0;
  double constant = 0.0;                // lipschitz * mean ||x||
  std::vector<double> energies;         // ||b_i|| ||a_i|| for i in (r1, r_int]
  bool bound_dominates = false;
};
/// Interpolation-error bound check on a single-NSN-layer probe: the model
/// must be exactly one NSN layer feeding the loss. The caller supplies a
/// Lipschitz constant that genuinely bounds the loss in its first argument.
BoundReport interpolation_bound_report(const Model& model, const Dataset& data, std::size_t r1,
                                       std::size_t r_int, double lipschitz, ProbeLoss loss);

/// Mean pairwise cosine similarity between flattened effective weights at
/// rank r, over layers with identical effective shapes.
double inter_layer_similarity(const Model& model, RankSpec r);

/// Cosine similarity between NSN effective weights at rank r and reference
/// dense weights, averaged within each depth group of layer indices.
std::vector<double> convergence_similarity(const Model& nsn_model, const Model& reference, RankSpec r,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& depth_groups);

struct FrontierRow {
  std::size_t rank = 0;
  std::size_t flops = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};
using FrontierTable = std::vector<FrontierRow>;

/// Loss/accuracy/FLOPs at each requested rank, sorted by rank.
FrontierTable frontier_sweep(const Model& model, const Dataset& data, std::vector<std::size_t> ranks);

void write_frontier_csv(const FrontierTable& table, const std::string& path);
void write_containment_csv(const ContainmentGrid& grid, const std::string& path);

}  // namespace nsn

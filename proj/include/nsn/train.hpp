#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsn/data.hpp"
#include "nsn/model.hpp"

namespace nsn {

/// Learnable per-rank log-variances s_k = log(sigma_k^2), shared across
/// layers, lazily created at first use with s = 0 (sigma^2 = 1).
struct UncertaintyParams {
  std::map<std::size_t, double> s;

  double& at_rank(std::size_t k) { return s.try_emplace(k, 0.0).first->second; }
  double value(std::size_t k) const {
    auto it = s.find(k);
    return it == s.end() ? 0.0 : it->second;
  }
};

enum class AblationMode {
  kCeOnly,
  kCeHardOrtho,
  kTwoCe,
  kTwoCeLogitsReg,
  kTwoCeResidualOrtho,
  kTwoCeHiddenReg,
};

std::string ablation_mode_name(AblationMode mode);
AblationMode ablation_mode_from_name(const std::string& name);
bool mode_uses_variant(AblationMode mode);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  AblationMode mode = AblationMode::kTwoCe;
  bool use_uncertainty = true;
  double lambda = 1.0;  // weight of the mode's regularizer, if any
  std::size_t anchor_rank = 0;
  std::vector<std::size_t> rank_pool;
  std::vector<std::size_t> eval_ranks;               // ID
  std::vector<std::size_t> interpolated_eval_ranks;  // OOD
};

void validate_train_config(const TrainConfig& cfg);

/// Mean softmax cross-entropy with analytic gradient (softmax - onehot)/batch.
struct CrossEntropyResult {
  double loss;
  Matrix dlogits;
};
CrossEntropyResult cross_entropy(const Matrix& logits, const std::vector<std::uint32_t>& labels);

/// Uncertainty surrogate for one rank: exp(-s) * loss + s.
struct SurrogateTerm {
  double value;
  double d_loss_coeff;  // multiplier on the CE cotangent
  double ds;            // gradient with respect to s
};
SurrogateTerm surrogate_term(double loss_ce, double s_k);

struct LayerGrad {
  Matrix d_first;              // NSN: dA; dense: dW
  Matrix d_second;             // NSN: dB; dense: unused (0x0)
  std::vector<double> d_bias;
};

struct GradientSet {
  std::vector<LayerGrad> layers;
  std::map<std::size_t, double> ds;
};

GradientSet zero_gradients(const Model& model);

struct ObjectiveDiagnostics {
  double anchor_ce = 0.0;
  double variant_ce = 0.0;
  double reg_value = 0.0;
  double anchor_coeff = 1.0;
  double variant_coeff = 1.0;
  double anchor_accuracy = 0.0;
};

struct ObjectiveResult {
  double loss = 0.0;
  GradientSet grads;
  ObjectiveDiagnostics diag;
};

/// One training-step objective: anchor branch, optional variant branch, the
/// mode's regularizer, and analytic gradients for A, B, bias, W, and s.
/// Cotangents from a rank-r term reach only rows 1..r of A and columns 1..r
/// of B. Distillation-style penalties (logits / hidden) treat the anchor
/// branch as a constant target.
ObjectiveResult total_objective(const Model& model, const Matrix& x,
                                const std::vector<std::uint32_t>& labels, std::size_t anchor,
                                std::optional<std::size_t> variant, UncertaintyParams& u,
                                AblationMode mode, bool use_uncertainty, double lambda);

/// Epoch-indexed (anchor, variant) sampler. The admissible variant pool is a
/// prefix of the pool sorted from the highest rank down; the horizon widens
/// linearly over the first half of training: h(e) = ceil(P * min(1, (e+1)/(0.5*E))).
class CurriculumSampler {
 public:
  CurriculumSampler(std::size_t anchor_rank, std::vector<std::size_t> rank_pool,
                    std::size_t total_epochs, std::uint64_t seed);

  std::size_t horizon(std::size_t epoch) const;
  std::pair<std::size_t, std::size_t> sample(std::size_t epoch);  // (anchor, variant)

  std::size_t anchor_rank() const { return anchor_; }

 private:
  std::size_t anchor_;
  std::vector<std::size_t> pool_desc_;
  std::size_t total_epochs_;
  RandomStream rng_;
};

struct EvalResult {
  double loss;
  double accuracy;
};
EvalResult evaluate(const Model& model, const Dataset& data, RankSpec r);

using MetricsLog = std::vector<RunRecord>;

struct TrainResult {
  Model model;
  UncertaintyParams uncertainty;
  MetricsLog log;
};

/// SGD with momentum over all parameters, (anchor, variant) resampled per
/// batch, per-epoch evaluation at ID and OOD ranks on eval_data. Fully
/// deterministic under a fixed seed. Throws NumericalError on divergence.
TrainResult train(Model model, const Dataset& train_data, const Dataset& eval_data,
                  const TrainConfig& cfg);

}  // namespace nsn

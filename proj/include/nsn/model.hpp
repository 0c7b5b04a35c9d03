#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "nsn/linalg.hpp"

namespace nsn {

enum class Activation { kRelu, kGelu, kIdentity };

double activation_value(Activation act, double pre);
double activation_grad(Activation act, double pre);

std::string activation_name(Activation act);
Activation activation_from_name(const std::string& name);

/// Rank-parameterized linear layer. The effective weight at rank r is
/// W_r = B_r A_r, the sum of the first r rank-1 outer products. The bias is
/// shared across all ranks.
struct NsnLayer {
  Matrix A;                  // max_rank x d_in
  Matrix B;                  // d_out x max_rank
  std::vector<double> bias;  // d_out
  std::size_t max_rank = 0;

  std::size_t d_in() const { return A.cols(); }
  std::size_t d_out() const { return B.rows(); }

  bool operator==(const NsnLayer&) const = default;
};

struct DenseLayer {
  Matrix W;                  // d_out x d_in
  std::vector<double> bias;  // d_out

  std::size_t d_in() const { return W.cols(); }
  std::size_t d_out() const { return W.rows(); }

  bool operator==(const DenseLayer&) const = default;
};

using LayerParams = std::variant<NsnLayer, DenseLayer>;

struct Layer {
  LayerParams params;
  Activation activation = Activation::kIdentity;

  std::size_t d_in() const;
  std::size_t d_out() const;
  bool is_nsn() const { return std::holds_alternative<NsnLayer>(params); }
};

/// Ordered stack of layers. The last activation must be identity (logits).
struct Model {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().d_in(); }
  std::size_t output_dim() const { return layers.back().d_out(); }
};

/// Throws if adjacent dimensions do not chain or the last activation is not
/// identity.
void validate_model(const Model& model);

/// Requested evaluation rank: a positive integer or symbolic FULL. FULL
/// resolves to each layer's own max rank; a numeric rank is clamped to the
/// layer's max rank during model-level evaluation.
class RankSpec {
 public:
  static RankSpec full() { return RankSpec(); }
  static RankSpec at(std::size_t r) {
    if (r == 0) throw RankError("rank 0 is not admissible; ranks start at 1");
    RankSpec s;
    s.full_ = false;
    s.r_ = r;
    return s;
  }

  bool is_full() const { return full_; }
  std::size_t value() const { return r_; }

  /// Clamping resolution used by forward / FLOPs sweeps.
  std::size_t resolve(std::size_t max_rank) const {
    if (full_) return max_rank;
    return r_ < max_rank ? r_ : max_rank;
  }

  /// Strict resolution: a numeric rank above max_rank is an error.
  std::size_t resolve_strict(std::size_t max_rank) const;

 private:
  RankSpec() = default;
  bool full_ = true;
  std::size_t r_ = 0;
};

/// W_r = B_r A_r. Strict about the rank range.
Matrix effective_weight(const NsnLayer& layer, RankSpec r);

/// Batched forward pass, never materializing W_r: per NSN layer two thin
/// products B_r (A_r x) + bias. Dense layers ignore r.
Matrix forward(const Model& model, const Matrix& x, RankSpec r);

/// FLOPs of one linear map: factored form 2 r (d_in + d_out); FULL means the
/// dense form 2 d_in d_out.
std::size_t flops_linear(std::size_t d_in, std::size_t d_out, RankSpec r);
std::size_t flops_factored(std::size_t d_in, std::size_t d_out, std::size_t r);
std::size_t flops_dense(std::size_t d_in, std::size_t d_out);

/// floor(d_in * d_out / (d_in + d_out)): rank at which the factored form
/// stops saving FLOPs.
std::size_t break_even_rank(std::size_t d_in, std::size_t d_out);

/// Sum of per-layer FLOPs at rank r (clamped per layer); activation and bias
/// costs excluded.
std::size_t model_flops(const Model& model, RankSpec r);

/// Structural truncation: keep the first r rows of A and columns of B.
NsnLayer truncate(const NsnLayer& layer, std::size_t r);
Model truncate_model(const Model& model, std::size_t r);

/// From-scratch initialization: A entries N(0, 1/d_in), B entries N(0, 1/R).
/// B = 0 would zero the layer at every rank, so both factors carry signal.
NsnLayer make_nsn_layer(std::size_t d_in, std::size_t d_out, std::size_t max_rank, RandomStream& rng);
DenseLayer make_dense_layer(std::size_t d_in, std::size_t d_out, RandomStream& rng);

}  // namespace nsn

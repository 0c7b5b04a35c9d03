#include "nsn/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace nsn {

double activation_value(Activation act, double pre) {
  switch (act) {
    case Activation::kRelu:
      return pre > 0.0 ? pre : 0.0;
    case Activation::kGelu:
      return 0.5 * pre * (1.0 + std::erf(pre / std::numbers::sqrt2));
    case Activation::kIdentity:
      return pre;
  }
  return pre;
}

double activation_grad(Activation act, double pre) {
  switch (act) {
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kGelu: {
      double cdf = 0.5 * (1.0 + std::erf(pre / std::numbers::sqrt2));
      double pdf = std::exp(-0.5 * pre * pre) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + pre * pdf;
    }
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::kRelu:
      return "relu";
    case Activation::kGelu:
      return "gelu";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "gelu") return Activation::kGelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "' (expected relu, gelu, or identity)");
}

std::size_t Layer::d_in() const {
  return std::visit([](const auto& l) { return l.d_in(); }, params);
}

std::size_t Layer::d_out() const {
  return std::visit([](const auto& l) { return l.d_out(); }, params);
}

void validate_model(const Model& model) {
  if (model.layers.empty()) throw ConfigError("model has no layers");
  for (std::size_t i = 0; i + 1 < model.layers.size(); ++i) {
    if (model.layers[i].d_out() != model.layers[i + 1].d_in()) {
      throw DimensionError("layer " + std::to_string(i) + " output dim " +
                           std::to_string(model.layers[i].d_out()) + " does not chain into layer " +
                           std::to_string(i + 1) + " input dim " +
                           std::to_string(model.layers[i + 1].d_in()));
    }
  }
  if (model.layers.back().activation != Activation::kIdentity) {
    throw ConfigError("last activation must be identity (logits)");
  }
  for (const auto& layer : model.layers) {
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      if (nsn->max_rank == 0 || nsn->A.rows() != nsn->max_rank || nsn->B.cols() != nsn->max_rank ||
          nsn->bias.size() != nsn->d_out()) {
        throw DimensionError("inconsistent NSN layer shapes");
      }
    } else {
      const auto& dense = std::get<DenseLayer>(layer.params);
      if (dense.bias.size() != dense.d_out()) throw DimensionError("inconsistent dense layer shapes");
    }
  }
}

std::size_t RankSpec::resolve_strict(std::size_t max_rank) const {
  if (full_) return max_rank;
  if (r_ < 1 || r_ > max_rank) {
    throw RankError("rank " + std::to_string(r_) + " out of range [1, " + std::to_string(max_rank) + "]");
  }
  return r_;
}

Matrix effective_weight(const NsnLayer& layer, RankSpec r) {
  std::size_t rank = r.resolve_strict(layer.max_rank);
  return matmul(first_cols(layer.B, rank), first_rows(layer.A, rank));
}

namespace {

Matrix nsn_forward_one(const NsnLayer& layer, const Matrix& x, std::size_t rank) {
  // h = x A_r^T, y = h B_r^T + bias; W_r is never materialized.
  Matrix h(x.rows(), rank);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < rank; ++j) {
      h(i, j) = dot(x.row(i), layer.A.row(j));
    }
  }
  Matrix y(x.rows(), layer.d_out());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t o = 0; o < layer.d_out(); ++o) {
      double s = layer.bias[o];
      for (std::size_t j = 0; j < rank; ++j) s += h(i, j) * layer.B(o, j);
      y(i, o) = s;
    }
  }
  return y;
}

Matrix dense_forward_one(const DenseLayer& layer, const Matrix& x) {
  Matrix y = matmul_nt(x, layer.W);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t o = 0; o < y.cols(); ++o) y(i, o) += layer.bias[o];
  return y;
}

}  // namespace

Matrix forward(const Model& model, const Matrix& x, RankSpec r) {
  if (x.cols() != model.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(model.input_dim()));
  }
  Matrix h = x;
  for (const auto& layer : model.layers) {
    Matrix pre;
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      pre = nsn_forward_one(*nsn, h, r.resolve(nsn->max_rank));
    } else {
      pre = dense_forward_one(std::get<DenseLayer>(layer.params), h);
    }
    if (layer.activation == Activation::kIdentity) {
      h = std::move(pre);
    } else {
      h = Matrix(pre.rows(), pre.cols());
      for (std::size_t i = 0; i < pre.size(); ++i) h.data()[i] = activation_value(layer.activation, pre.data()[i]);
    }
  }
  return h;
}

std::size_t flops_factored(std::size_t d_in, std::size_t d_out, std::size_t r) {
  return 2 * r * (d_in + d_out);
}

std::size_t flops_dense(std::size_t d_in, std::size_t d_out) { return 2 * d_in * d_out; }

std::size_t flops_linear(std::size_t d_in, std::size_t d_out, RankSpec r) {
  if (r.is_full()) return flops_dense(d_in, d_out);
  return flops_factored(d_in, d_out, r.value());
}

std::size_t break_even_rank(std::size_t d_in, std::size_t d_out) {
  return (d_in * d_out) / (d_in + d_out);
}

std::size_t model_flops(const Model& model, RankSpec r) {
  std::size_t total = 0;
  for (const auto& layer : model.layers) {
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      total += flops_factored(nsn->d_in(), nsn->d_out(), r.resolve(nsn->max_rank));
    } else {
      total += flops_dense(layer.d_in(), layer.d_out());
    }
  }
  return total;
}

NsnLayer truncate(const NsnLayer& layer, std::size_t r) {
  if (r < 1 || r > layer.max_rank) {
    throw RankError("truncate rank " + std::to_string(r) + " out of range [1, " +
                    std::to_string(layer.max_rank) + "]");
  }
  NsnLayer out;
  out.A = first_rows(layer.A, r);
  out.B = first_cols(layer.B, r);
  out.bias = layer.bias;
  out.max_rank = r;
  return out;
}

Model truncate_model(const Model& model, std::size_t r) {
  Model out = model;
  for (auto& layer : out.layers) {
    if (auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      std::size_t rank = r < nsn->max_rank ? r : nsn->max_rank;
      *nsn = truncate(*nsn, rank);
    }
  }
  return out;
}

NsnLayer make_nsn_layer(std::size_t d_in, std::size_t d_out, std::size_t max_rank, RandomStream& rng) {
  NsnLayer layer;
  layer.A = rng.gaussian_matrix(max_rank, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
  layer.B = rng.gaussian_matrix(d_out, max_rank, 1.0 / std::sqrt(static_cast<double>(max_rank)));
  layer.bias.assign(d_out, 0.0);
  layer.max_rank = max_rank;
  return layer;
}

DenseLayer make_dense_layer(std::size_t d_in, std::size_t d_out, RandomStream& rng) {
  DenseLayer layer;
  layer.W = rng.gaussian_matrix(d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
  layer.bias.assign(d_out, 0.0);
  return layer;
}

}  // namespace nsn

#include "nsn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nsn/train.hpp"

namespace nsn {

double containment_score(const Matrix& w_small, const Matrix& w_large, std::size_t r_small,
                         std::size_t r_large) {
  if (!w_small.same_shape(w_large)) throw DimensionError("containment_score: shape mismatch");
  const std::size_t k = std::min(w_small.rows(), w_small.cols());
  if (r_small < 1 || r_large < 1 || r_small > k || r_large > k) {
    throw RankError("containment_score ranks must lie in [1, " + std::to_string(k) + "]");
  }
  Matrix u_small = first_cols(svd(w_small).U, r_small);
  Matrix u_large = first_cols(svd(w_large).U, r_large);
  Matrix proj = matmul_tn(u_large, u_small);  // r_large x r_small
  double mass = 0.0;
  for (double v : proj.data()) mass += v * v;
  return mass / static_cast<double>(r_small);
}

ContainmentGrid containment_grid(const NsnLayer& layer, const std::vector<std::size_t>& ranks) {
  ContainmentGrid grid;
  grid.ranks = ranks;
  std::sort(grid.ranks.begin(), grid.ranks.end());
  std::vector<Matrix> weights;
  weights.reserve(grid.ranks.size());
  for (auto r : grid.ranks) weights.push_back(effective_weight(layer, RankSpec::at(r)));
  grid.scores.assign(grid.ranks.size(), std::vector<double>(grid.ranks.size(), 0.0));
  for (std::size_t i = 0; i < grid.ranks.size(); ++i) {
    for (std::size_t j = 0; j < grid.ranks.size(); ++j) {
      grid.scores[i][j] = containment_score(weights[i], weights[j], grid.ranks[i], grid.ranks[j]);
    }
  }
  return grid;
}

EnergyDecayReport energy_decay_audit(const NsnLayer& layer) {
  EnergyDecayReport rep;
  for (std::size_t i = 0; i < layer.max_rank; ++i) {
    double an = norm2(layer.A.row(i));
    double bn = 0.0;
    for (std::size_t o = 0; o < layer.d_out(); ++o) bn += layer.B(o, i) * layer.B(o, i);
    bn = std::sqrt(bn);
    rep.a_norms.push_back(an);
    rep.b_norms.push_back(bn);
    rep.products.push_back(an * bn);
  }
  for (std::size_t i = 0; i + 1 < layer.max_rank; ++i) {
    double jump = rep.products[i + 1] - rep.products[i];
    if (jump > 0.0) {
      rep.violations.push_back(i);
      rep.max_violation = std::max(rep.max_violation, jump);
    }
  }
  return rep;
}

PerturbationCheck adjacent_perturbation_check(const NsnLayer& layer, std::span<const double> x,
                                              std::size_t r) {
  if (r < 1 || r >= layer.max_rank) {
    throw RankError("adjacent_perturbation_check needs 1 <= r < max_rank, got r = " + std::to_string(r));
  }
  if (x.size() != layer.d_in()) throw DimensionError("probe vector dim mismatch");
  // f(x; r+1) - f(x; r) = b_{r+1} (a_{r+1} . x); the shared bias cancels.
  double coeff = dot(layer.A.row(r), x);
  double b_norm = 0.0;
  for (std::size_t o = 0; o < layer.d_out(); ++o) b_norm += layer.B(o, r) * layer.B(o, r);
  b_norm = std::sqrt(b_norm);
  PerturbationCheck check;
  check.lhs = std::abs(coeff) * b_norm;
  check.rhs = b_norm * norm2(layer.A.row(r)) * norm2(x);
  check.satisfied = check.lhs <= check.rhs + 1e-9;
  return check;
}

namespace {

double probe_loss_value(ProbeLoss loss, const Matrix& logits, const std::vector<std::uint32_t>& labels) {
  if (loss == ProbeLoss::kCrossEntropy) return cross_entropy(logits, labels).loss;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double s = 0.0;
    auto row = logits.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) {
      double target = (c == labels[i]) ? 1.0 : 0.0;
      s += (row[c] - target) * (row[c] - target);
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(logits.rows());
}

double cosine_similarity(const Matrix& a, const Matrix& b) {
  double num = dot(a.data(), b.data());
  double den = frobenius_norm(a) * frobenius_norm(b);
  return den > 0.0 ? num / den : 0.0;
}

Matrix layer_weight_at(const Layer& layer, RankSpec r) {
  if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
    return effective_weight(*nsn, RankSpec::at(r.resolve(nsn->max_rank)));
  }
  return std::get<DenseLayer>(layer.params).W;
}

}  // namespace

BoundReport interpolation_bound_report(const Model& model, const Dataset& data, std::size_t r1,
                                       std::size_t r_int, double lipschitz, ProbeLoss loss) {
  if (model.layers.size() != 1 || !model.layers[0].is_nsn() ||
      model.layers[0].activation != Activation::kIdentity) {
    throw ConfigError(
        "interpolation_bound_report needs a probe model: a single NSN layer with identity activation");
  }
  const auto& layer = std::get<NsnLayer>(model.layers[0].params);
  if (r1 > r_int || r_int > layer.max_rank || r1 < 1) {
    throw RankError("interpolation_bound_report needs 1 <= r1 <= r_int <= max_rank");
  }
  if (lipschitz <= 0.0) throw ConfigError("lipschitz constant must be positive");

  BoundReport rep;
  rep.r1 = r1;
  rep.r_int = r_int;

  Matrix logits_low = forward(model, data.features, RankSpec::at(r1));
  Matrix logits_high = forward(model, data.features, RankSpec::at(r_int));
  rep.empirical_gap = std::abs(probe_loss_value(loss, logits_high, data.labels) -
                               probe_loss_value(loss, logits_low, data.labels));

  double mean_x_norm = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) mean_x_norm += norm2(data.features.row(i));
  mean_x_norm /= static_cast<double>(data.size());
  rep.constant = lipschitz * mean_x_norm;

  double energy_sum = 0.0;
  for (std::size_t i = r1; i < r_int; ++i) {
    double bn = 0.0;
    for (std::size_t o = 0; o < layer.d_out(); ++o) bn += layer.B(o, i) * layer.B(o, i);
    double e = norm2(layer.A.row(i)) * std::sqrt(bn);
    rep.energies.push_back(e);
    energy_sum += e;
  }
  rep.bound = rep.constant * energy_sum;
  rep.bound_dominates = rep.bound + 1e-9 >= rep.empirical_gap;
  return rep;
}

double inter_layer_similarity(const Model& model, RankSpec r) {
  // Group layers by effective-weight shape and compare within the largest group.
  std::vector<Matrix> weights;
  for (const auto& layer : model.layers) weights.push_back(layer_weight_at(layer, r));
  std::vector<std::size_t> group;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    std::vector<std::size_t> candidate;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      if (weights[j].same_shape(weights[i])) candidate.push_back(j);
    }
    if (candidate.size() > group.size()) group = candidate;
  }
  if (group.size() < 2) {
    throw ConfigError("inter_layer_similarity needs at least 2 layers with identical weight shapes");
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < group.size(); ++a) {
    for (std::size_t b = a + 1; b < group.size(); ++b) {
      total += cosine_similarity(weights[group[a]], weights[group[b]]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<double> convergence_similarity(
    const Model& nsn_model, const Model& reference, RankSpec r,
    const std::vector<std::pair<std::size_t, std::size_t>>& depth_groups) {
  if (nsn_model.layers.size() != reference.layers.size()) {
    throw DimensionError("convergence_similarity: models have different depths");
  }
  std::vector<double> sims(nsn_model.layers.size());
  for (std::size_t i = 0; i < nsn_model.layers.size(); ++i) {
    Matrix a = layer_weight_at(nsn_model.layers[i], r);
    Matrix b = layer_weight_at(reference.layers[i], RankSpec::full());
    if (!a.same_shape(b)) {
      throw DimensionError("convergence_similarity: layer " + std::to_string(i) + " shapes misaligned");
    }
    sims[i] = cosine_similarity(a, b);
  }
  std::vector<double> out;
  for (const auto& [first, last] : depth_groups) {
    if (first > last || last >= sims.size()) throw ConfigError("depth group out of range");
    double total = 0.0;
    for (std::size_t i = first; i <= last; ++i) total += sims[i];
    out.push_back(total / static_cast<double>(last - first + 1));
  }
  return out;
}

FrontierTable frontier_sweep(const Model& model, const Dataset& data, std::vector<std::size_t> ranks) {
  std::sort(ranks.begin(), ranks.end());
  FrontierTable table;
  for (auto r : ranks) {
    FrontierRow row;
    row.rank = r;
    row.flops = model_flops(model, RankSpec::at(r));
    EvalResult ev = evaluate(model, data, RankSpec::at(r));
    row.loss = ev.loss;
    row.accuracy = ev.accuracy;
    table.push_back(row);
  }
  return table;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_frontier_csv(const FrontierTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write frontier csv: " + path);
  out << "rank,flops,loss,accuracy\n";
  for (const auto& row : table) {
    out << row.rank << "," << row.flops << "," << fmt_double(row.loss) << ","
        << fmt_double(row.accuracy) << "\n";
  }
}

void write_containment_csv(const ContainmentGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write containment csv: " + path);
  out << "rank";
  for (auto r : grid.ranks) out << "," << r;
  out << "\n";
  for (std::size_t i = 0; i < grid.ranks.size(); ++i) {
    out << grid.ranks[i];
    for (double v : grid.scores[i]) out << "," << fmt_double(v);
    out << "\n";
  }
}

}  // namespace nsn

#include "nsn/surgery.hpp"

#include <cmath>
#include <string>

namespace nsn {

SvdInitResult svd_init(const Matrix& w, std::size_t target_rank) {
  const std::size_t k = std::min(w.rows(), w.cols());
  if (target_rank < 1 || target_rank > k) {
    throw RankError("svd_init target rank " + std::to_string(target_rank) + " out of range [1, " +
                    std::to_string(k) + "]");
  }
  SvdResult decomp = svd(w);
  SvdInitResult out;
  out.A = Matrix(target_rank, w.cols());
  out.B = Matrix(w.rows(), target_rank);
  out.singular_values.assign(decomp.singular_values.begin(),
                             decomp.singular_values.begin() + static_cast<std::ptrdiff_t>(target_rank));
  for (std::size_t i = 0; i < target_rank; ++i) {
    double root = std::sqrt(decomp.singular_values[i]);
    for (std::size_t j = 0; j < w.cols(); ++j) out.A(i, j) = root * decomp.Vt(i, j);
    for (std::size_t j = 0; j < w.rows(); ++j) out.B(j, i) = decomp.U(j, i) * root;
  }
  return out;
}

SurgeryResult surgical_replace(const Model& model, const SurgeryPlan& plan) {
  validate_model(model);
  SurgeryResult result;
  result.model = model;
  for (const auto& [index, requested_rank] : plan.targets) {
    if (index >= model.layers.size()) {
      throw ConfigError("surgery plan index " + std::to_string(index) + " out of range; model has " +
                        std::to_string(model.layers.size()) + " layers");
    }
    const auto* dense = std::get_if<DenseLayer>(&model.layers[index].params);
    if (!dense) {
      throw ConfigError("surgery plan selects layer " + std::to_string(index) +
                        " which is already an NSN layer");
    }
    std::size_t target = requested_rank == 0 ? std::min(dense->d_in(), dense->d_out()) : requested_rank;
    SvdInitResult init = svd_init(dense->W, target);

    NsnLayer nsn;
    nsn.A = std::move(init.A);
    nsn.B = std::move(init.B);
    nsn.bias = dense->bias;
    nsn.max_rank = target;

    SurgeryRecord rec;
    rec.index = index;
    rec.d_in = dense->d_in();
    rec.d_out = dense->d_out();
    rec.target_rank = target;
    double w_norm = frobenius_norm(dense->W);
    double err = frobenius_norm(subtract(dense->W, matmul(nsn.B, nsn.A)));
    rec.relative_truncation_error = w_norm > 0.0 ? err / w_norm : 0.0;
    rec.flops_before = flops_dense(dense->d_in(), dense->d_out());
    rec.flops_after_full = flops_factored(dense->d_in(), dense->d_out(), target);
    rec.flops_after_half = flops_factored(dense->d_in(), dense->d_out(), std::max<std::size_t>(1, target / 2));
    double sigma1 = init.singular_values.empty() ? 0.0 : init.singular_values.front();
    for (double s : init.singular_values) {
      if (s < 1e-12 * sigma1) ++rec.near_zero_singular_values;
    }

    result.model.layers[index].params = std::move(nsn);
    result.report.push_back(rec);
  }
  return result;
}

}  // namespace nsn

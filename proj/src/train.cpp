#include "nsn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nsn {

std::string ablation_mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::kCeOnly:
      return "ce_only";
    case AblationMode::kCeHardOrtho:
      return "ce_hard_ortho";
    case AblationMode::kTwoCe:
      return "two_ce";
    case AblationMode::kTwoCeLogitsReg:
      return "two_ce_logits_reg";
    case AblationMode::kTwoCeResidualOrtho:
      return "two_ce_residual_ortho";
    case AblationMode::kTwoCeHiddenReg:
      return "two_ce_hidden_reg";
  }
  return "two_ce";
}

AblationMode ablation_mode_from_name(const std::string& name) {
  if (name == "ce_only") return AblationMode::kCeOnly;
  if (name == "ce_hard_ortho") return AblationMode::kCeHardOrtho;
  if (name == "two_ce") return AblationMode::kTwoCe;
  if (name == "two_ce_logits_reg") return AblationMode::kTwoCeLogitsReg;
  if (name == "two_ce_residual_ortho") return AblationMode::kTwoCeResidualOrtho;
  if (name == "two_ce_hidden_reg") return AblationMode::kTwoCeHiddenReg;
  throw ConfigError("unknown ablation mode '" + name + "'");
}

bool mode_uses_variant(AblationMode mode) {
  return mode != AblationMode::kCeOnly && mode != AblationMode::kCeHardOrtho;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.anchor_rank < 1) throw ConfigError("anchor_rank must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  for (auto r : cfg.rank_pool) {
    if (r < 1 || r >= cfg.anchor_rank) {
      throw ConfigError("rank_pool entry " + std::to_string(r) + " must satisfy 1 <= r < anchor_rank " +
                        std::to_string(cfg.anchor_rank));
    }
  }
  if (mode_uses_variant(cfg.mode) && cfg.rank_pool.empty()) {
    throw ConfigError("mode " + ablation_mode_name(cfg.mode) + " needs a non-empty rank_pool");
  }
  for (auto r : cfg.eval_ranks) {
    if (r < 1 || r > cfg.anchor_rank) {
      throw ConfigError("eval_ranks entry " + std::to_string(r) + " outside [1, anchor_rank]");
    }
  }
  for (auto r : cfg.interpolated_eval_ranks) {
    if (r == cfg.anchor_rank ||
        std::find(cfg.rank_pool.begin(), cfg.rank_pool.end(), r) != cfg.rank_pool.end()) {
      throw ConfigError("interpolated_eval_ranks entry " + std::to_string(r) +
                        " overlaps rank_pool or anchor");
    }
  }
}

CrossEntropyResult cross_entropy(const Matrix& logits, const std::vector<std::uint32_t>& labels) {
  if (logits.rows() != labels.size()) {
    throw DimensionError("cross_entropy: " + std::to_string(logits.rows()) + " logit rows vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  Matrix dlogits(batch, classes);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " out of range [0, " +
                      std::to_string(classes) + ") at row " + std::to_string(i));
    }
    auto row = logits.row(i);
    double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double z : row) sum += std::exp(z - m);
    double lse = m + std::log(sum);
    total += lse - row[labels[i]];
    for (std::size_t c = 0; c < classes; ++c) {
      double p = std::exp(row[c] - lse);
      dlogits(i, c) = (p - (c == labels[i] ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
  }
  return {total / static_cast<double>(batch), std::move(dlogits)};
}

SurrogateTerm surrogate_term(double loss_ce, double s_k) {
  double coeff = std::exp(-s_k);
  return {coeff * loss_ce + s_k, coeff, -coeff * loss_ce + 1.0};
}

GradientSet zero_gradients(const Model& model) {
  GradientSet g;
  g.layers.reserve(model.layers.size());
  for (const auto& layer : model.layers) {
    LayerGrad lg;
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      lg.d_first = Matrix(nsn->A.rows(), nsn->A.cols());
      lg.d_second = Matrix(nsn->B.rows(), nsn->B.cols());
      lg.d_bias.assign(nsn->bias.size(), 0.0);
    } else {
      const auto& dense = std::get<DenseLayer>(layer.params);
      lg.d_first = Matrix(dense.W.rows(), dense.W.cols());
      lg.d_bias.assign(dense.bias.size(), 0.0);
    }
    g.layers.push_back(std::move(lg));
  }
  return g;
}

namespace {

struct ForwardCache {
  std::vector<Matrix> inputs;  // per layer: activation input x_l
  std::vector<Matrix> hidden;  // per layer: A_r x for NSN layers, else empty
  std::vector<Matrix> pre;     // per layer: pre-activation
  std::vector<Matrix> post;    // per layer: post-activation (last = logits)
};

ForwardCache forward_cached(const Model& model, const Matrix& x, std::size_t rank) {
  ForwardCache cache;
  Matrix h = x;
  for (const auto& layer : model.layers) {
    cache.inputs.push_back(h);
    Matrix pre;
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      std::size_t r = std::min(rank, nsn->max_rank);
      Matrix mid(h.rows(), r);
      for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) mid(i, j) = dot(h.row(i), nsn->A.row(j));
      pre = Matrix(h.rows(), nsn->d_out());
      for (std::size_t i = 0; i < h.rows(); ++i) {
        for (std::size_t o = 0; o < nsn->d_out(); ++o) {
          double s = nsn->bias[o];
          for (std::size_t j = 0; j < r; ++j) s += mid(i, j) * nsn->B(o, j);
          pre(i, o) = s;
        }
      }
      cache.hidden.push_back(std::move(mid));
    } else {
      const auto& dense = std::get<DenseLayer>(layer.params);
      pre = matmul_nt(h, dense.W);
      for (std::size_t i = 0; i < pre.rows(); ++i)
        for (std::size_t o = 0; o < pre.cols(); ++o) pre(i, o) += dense.bias[o];
      cache.hidden.emplace_back();
    }
    Matrix post(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      post.data()[i] = activation_value(layer.activation, pre.data()[i]);
    }
    cache.pre.push_back(std::move(pre));
    h = post;
    cache.post.push_back(std::move(post));
  }
  return cache;
}

// Reverse pass for one rank branch. extra_post, when present, holds extra
// cotangents injected at each layer's post-activation output.
void backward(const Model& model, const ForwardCache& cache, std::size_t rank, const Matrix& dlogits,
              const std::vector<Matrix>* extra_post, GradientSet& grads) {
  Matrix d_post = dlogits;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& layer = model.layers[li];
    if (extra_post && !(*extra_post)[li].data().empty() && li + 1 != model.layers.size()) {
      d_post = add(d_post, (*extra_post)[li]);
    }
    // d_pre = d_post (.) act'(pre)
    Matrix d_pre = d_post;
    if (layer.activation != Activation::kIdentity) {
      const Matrix& pre = cache.pre[li];
      for (std::size_t i = 0; i < d_pre.size(); ++i) {
        d_pre.data()[i] *= activation_grad(layer.activation, pre.data()[i]);
      }
    }
    const Matrix& x = cache.inputs[li];
    auto& lg = grads.layers[li];
    if (const auto* nsn = std::get_if<NsnLayer>(&layer.params)) {
      std::size_t r = std::min(rank, nsn->max_rank);
      const Matrix& mid = cache.hidden[li];
      // dB_r = d_pre^T * mid
      for (std::size_t o = 0; o < nsn->d_out(); ++o)
        for (std::size_t j = 0; j < r; ++j)
          for (std::size_t i = 0; i < d_pre.rows(); ++i) lg.d_second(o, j) += d_pre(i, o) * mid(i, j);
      // d_mid = d_pre * B_r
      Matrix d_mid(d_pre.rows(), r);
      for (std::size_t i = 0; i < d_pre.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) {
          double s = 0.0;
          for (std::size_t o = 0; o < nsn->d_out(); ++o) s += d_pre(i, o) * nsn->B(o, j);
          d_mid(i, j) = s;
        }
      // dA_r = d_mid^T * x
      for (std::size_t j = 0; j < r; ++j)
        for (std::size_t i = 0; i < d_mid.rows(); ++i) {
          double dm = d_mid(i, j);
          if (dm == 0.0) continue;
          auto xrow = x.row(i);
          auto arow = lg.d_first.row(j);
          for (std::size_t k = 0; k < xrow.size(); ++k) arow[k] += dm * xrow[k];
        }
      for (std::size_t o = 0; o < nsn->d_out(); ++o)
        for (std::size_t i = 0; i < d_pre.rows(); ++i) lg.d_bias[o] += d_pre(i, o);
      if (li > 0) {
        // dX = d_mid * A_r
        Matrix dx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < r; ++j) {
            double dm = d_mid(i, j);
            if (dm == 0.0) continue;
            auto arow = nsn->A.row(j);
            auto drow = dx.row(i);
            for (std::size_t k = 0; k < arow.size(); ++k) drow[k] += dm * arow[k];
          }
        d_post = std::move(dx);
      }
    } else {
      const auto& dense = std::get<DenseLayer>(layer.params);
      Matrix dW = matmul_tn(d_pre, x);  // d_out x d_in
      add_scaled(lg.d_first, dW, 1.0);
      for (std::size_t o = 0; o < dense.d_out(); ++o)
        for (std::size_t i = 0; i < d_pre.rows(); ++i) lg.d_bias[o] += d_pre(i, o);
      if (li > 0) d_post = matmul(d_pre, dense.W);
    }
  }
}

double batch_accuracy(const Matrix& logits, const std::vector<std::uint32_t>& labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[arg]) arg = c;
    }
    if (arg == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace

ObjectiveResult total_objective(const Model& model, const Matrix& x,
                                const std::vector<std::uint32_t>& labels, std::size_t anchor,
                                std::optional<std::size_t> variant, UncertaintyParams& u,
                                AblationMode mode, bool use_uncertainty, double lambda) {
  if (anchor < 1) throw RankError("anchor rank must be >= 1");
  const bool needs_variant = mode_uses_variant(mode);
  if (needs_variant) {
    if (!variant) throw ConfigError("mode " + ablation_mode_name(mode) + " requires a variant rank");
    if (*variant >= anchor) {
      throw RankError("variant rank " + std::to_string(*variant) + " must be below anchor rank " +
                      std::to_string(anchor));
    }
  }

  ObjectiveResult res;
  res.grads = zero_gradients(model);
  const double batch = static_cast<double>(x.rows());

  // Anchor branch.
  ForwardCache cache_a = forward_cached(model, x, anchor);
  auto [ce_a, dlogits_a] = cross_entropy(cache_a.post.back(), labels);
  res.diag.anchor_ce = ce_a;
  res.diag.anchor_accuracy = batch_accuracy(cache_a.post.back(), labels);
  double coeff_a = 1.0;
  if (use_uncertainty) {
    double& s_a = u.at_rank(anchor);
    SurrogateTerm term = surrogate_term(ce_a, s_a);
    res.loss += term.value;
    coeff_a = term.d_loss_coeff;
    res.grads.ds[anchor] += term.ds;
  } else {
    res.loss += ce_a;
  }
  res.diag.anchor_coeff = coeff_a;
  Matrix scaled_a = dlogits_a;
  scale_in_place(scaled_a, coeff_a);
  backward(model, cache_a, anchor, scaled_a, nullptr, res.grads);

  // Variant branch.
  if (needs_variant) {
    ForwardCache cache_v = forward_cached(model, x, *variant);
    auto [ce_v, dlogits_v] = cross_entropy(cache_v.post.back(), labels);
    res.diag.variant_ce = ce_v;
    double coeff_v = 1.0;
    if (use_uncertainty) {
      double& s_v = u.at_rank(*variant);
      SurrogateTerm term = surrogate_term(ce_v, s_v);
      res.loss += term.value;
      coeff_v = term.d_loss_coeff;
      res.grads.ds[*variant] += term.ds;
    } else {
      res.loss += ce_v;
    }
    res.diag.variant_coeff = coeff_v;

    Matrix d_variant_logits = dlogits_v;
    scale_in_place(d_variant_logits, coeff_v);

    std::vector<Matrix> extra_post;
    const std::vector<Matrix>* extra_ptr = nullptr;
    if (mode == AblationMode::kTwoCeLogitsReg) {
      // lambda * mean over batch of ||logits(anchor) - logits(variant)||^2,
      // anchor treated as a constant target.
      Matrix diff = subtract(cache_v.post.back(), cache_a.post.back());
      double penalty = 0.0;
      for (double v : diff.data()) penalty += v * v;
      res.diag.reg_value = lambda * penalty / batch;
      res.loss += res.diag.reg_value;
      add_scaled(d_variant_logits, diff, 2.0 * lambda / batch);
    } else if (mode == AblationMode::kTwoCeHiddenReg) {
      extra_post.resize(model.layers.size());
      double penalty = 0.0;
      for (std::size_t li = 0; li + 1 < model.layers.size(); ++li) {
        Matrix diff = subtract(cache_v.post[li], cache_a.post[li]);
        for (double v : diff.data()) penalty += v * v;
        scale_in_place(diff, 2.0 * lambda / batch);
        extra_post[li] = std::move(diff);
      }
      res.diag.reg_value = lambda * penalty / batch;
      res.loss += res.diag.reg_value;
      extra_ptr = &extra_post;
    }
    backward(model, cache_v, *variant, d_variant_logits, extra_ptr, res.grads);

    if (mode == AblationMode::kTwoCeResidualOrtho) {
      // lambda * ||A_r A_res^T||_F^2 with A_res = rows r+1..anchor, per layer.
      double penalty = 0.0;
      for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const auto* nsn = std::get_if<NsnLayer>(&model.layers[li].params);
        if (!nsn) continue;
        std::size_t ra = std::min(anchor, nsn->max_rank);
        std::size_t rv = std::min(*variant, nsn->max_rank);
        if (rv >= ra) continue;
        Matrix a_var = first_rows(nsn->A, rv);
        Matrix a_res(ra - rv, nsn->d_in());
        for (std::size_t i = 0; i < ra - rv; ++i)
          std::copy(nsn->A.row(rv + i).begin(), nsn->A.row(rv + i).end(), a_res.row(i).begin());
        Matrix m = matmul_nt(a_var, a_res);  // rv x (ra - rv)
        for (double v : m.data()) penalty += v * v;
        Matrix d_var = matmul(m, a_res);               // rv x d_in
        Matrix d_res = matmul_tn(m, a_var);            // (ra - rv) x d_in
        auto& lg = res.grads.layers[li];
        for (std::size_t i = 0; i < rv; ++i)
          for (std::size_t k = 0; k < nsn->d_in(); ++k) lg.d_first(i, k) += 2.0 * lambda * d_var(i, k);
        for (std::size_t i = 0; i < ra - rv; ++i)
          for (std::size_t k = 0; k < nsn->d_in(); ++k)
            lg.d_first(rv + i, k) += 2.0 * lambda * d_res(i, k);
      }
      res.diag.reg_value = lambda * penalty;
      res.loss += res.diag.reg_value;
    }
  }

  if (mode == AblationMode::kCeHardOrtho) {
    // lambda * ||A_a A_a^T - I||_F^2 over the anchor-visible rows of A.
    double penalty = 0.0;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      const auto* nsn = std::get_if<NsnLayer>(&model.layers[li].params);
      if (!nsn) continue;
      std::size_t ra = std::min(anchor, nsn->max_rank);
      Matrix a = first_rows(nsn->A, ra);
      Matrix p = subtract(matmul_nt(a, a), Matrix::identity(ra));
      for (double v : p.data()) penalty += v * v;
      Matrix d = matmul(p, a);  // ra x d_in
      auto& lg = res.grads.layers[li];
      for (std::size_t i = 0; i < ra; ++i)
        for (std::size_t k = 0; k < nsn->d_in(); ++k) lg.d_first(i, k) += 4.0 * lambda * d(i, k);
    }
    res.diag.reg_value = lambda * penalty;
    res.loss += res.diag.reg_value;
  }

  return res;
}

CurriculumSampler::CurriculumSampler(std::size_t anchor_rank, std::vector<std::size_t> rank_pool,
                                     std::size_t total_epochs, std::uint64_t seed)
    : anchor_(anchor_rank), pool_desc_(std::move(rank_pool)), total_epochs_(total_epochs), rng_(seed) {
  if (pool_desc_.empty()) throw ConfigError("curriculum sampler needs a non-empty rank pool");
  for (auto r : pool_desc_) {
    if (r >= anchor_) {
      throw ConfigError("variant rank " + std::to_string(r) + " must be below the anchor rank " +
                        std::to_string(anchor_));
    }
  }
  std::sort(pool_desc_.begin(), pool_desc_.end(), std::greater<>());
}

std::size_t CurriculumSampler::horizon(std::size_t epoch) const {
  const double p = static_cast<double>(pool_desc_.size());
  if (total_epochs_ == 0) return pool_desc_.size();
  double frac = std::min(1.0, static_cast<double>(epoch + 1) / (0.5 * static_cast<double>(total_epochs_)));
  auto h = static_cast<std::size_t>(std::ceil(p * frac));
  return std::clamp<std::size_t>(h, 1, pool_desc_.size());
}

std::pair<std::size_t, std::size_t> CurriculumSampler::sample(std::size_t epoch) {
  std::size_t h = horizon(epoch);
  return {anchor_, pool_desc_[rng_.below(h)]};
}

EvalResult evaluate(const Model& model, const Dataset& data, RankSpec r) {
  Matrix logits = forward(model, data.features, r);
  auto ce = cross_entropy(logits, data.labels);
  return {ce.loss, batch_accuracy(logits, data.labels)};
}

namespace {

struct Velocity {
  std::vector<LayerGrad> layers;
  std::map<std::size_t, double> ds;
};

void sgd_step(Model& model, UncertaintyParams& u, const GradientSet& grads, Velocity& vel,
              double lr, double momentum) {
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    auto& lg = vel.layers[li];
    const auto& g = grads.layers[li];
    auto update_matrix = [&](Matrix& param, Matrix& v, const Matrix& grad) {
      auto pd = param.data();
      auto vd = v.data();
      auto gd = grad.data();
      for (std::size_t i = 0; i < pd.size(); ++i) {
        vd[i] = momentum * vd[i] + gd[i];
        pd[i] -= lr * vd[i];
      }
    };
    if (auto* nsn = std::get_if<NsnLayer>(&model.layers[li].params)) {
      update_matrix(nsn->A, lg.d_first, g.d_first);
      update_matrix(nsn->B, lg.d_second, g.d_second);
      for (std::size_t o = 0; o < nsn->bias.size(); ++o) {
        lg.d_bias[o] = momentum * lg.d_bias[o] + g.d_bias[o];
        nsn->bias[o] -= lr * lg.d_bias[o];
      }
    } else {
      auto& dense = std::get<DenseLayer>(model.layers[li].params);
      update_matrix(dense.W, lg.d_first, g.d_first);
      for (std::size_t o = 0; o < dense.bias.size(); ++o) {
        lg.d_bias[o] = momentum * lg.d_bias[o] + g.d_bias[o];
        dense.bias[o] -= lr * lg.d_bias[o];
      }
    }
  }
  for (const auto& [rank, g] : grads.ds) {
    double& v = vel.ds.try_emplace(rank, 0.0).first->second;
    v = momentum * v + g;
    u.at_rank(rank) -= lr * v;
  }
}

}  // namespace

TrainResult train(Model model, const Dataset& train_data, const Dataset& eval_data,
                  const TrainConfig& cfg) {
  validate_model(model);
  validate_train_config(cfg);
  if (train_data.dim() != model.input_dim()) {
    throw DimensionError("dataset dim " + std::to_string(train_data.dim()) + " vs model input dim " +
                         std::to_string(model.input_dim()));
  }
  for (auto l : train_data.labels) {
    if (l >= model.output_dim()) {
      throw DataError("label " + std::to_string(l) + " >= model output dim " +
                      std::to_string(model.output_dim()));
    }
  }

  TrainResult result;
  RandomStream data_rng(derive_seed(cfg.seed, 1));
  std::optional<CurriculumSampler> sampler;
  if (mode_uses_variant(cfg.mode)) {
    sampler.emplace(cfg.anchor_rank, cfg.rank_pool, cfg.epochs, derive_seed(cfg.seed, 2));
  }

  Velocity vel;
  vel.layers = zero_gradients(model).layers;

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    data_rng.shuffle(order);
    double epoch_loss = 0.0;
    double epoch_acc = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t count = std::min(cfg.batch_size, order.size() - start);
      Matrix x(count, train_data.dim());
      std::vector<std::uint32_t> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t src = order[start + i];
        std::copy(train_data.features.row(src).begin(), train_data.features.row(src).end(),
                  x.row(i).begin());
        labels[i] = train_data.labels[src];
      }
      std::optional<std::size_t> variant;
      if (sampler) variant = sampler->sample(epoch).second;
      ObjectiveResult obj = total_objective(model, x, labels, cfg.anchor_rank, variant,
                                            result.uncertainty, cfg.mode, cfg.use_uncertainty,
                                            cfg.lambda);
      if (!std::isfinite(obj.loss)) {
        throw NumericalError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(start / cfg.batch_size));
      }
      sgd_step(model, result.uncertainty, obj.grads, vel, cfg.learning_rate, cfg.momentum);
      epoch_loss += obj.loss * static_cast<double>(count);
      epoch_acc += obj.diag.anchor_accuracy * static_cast<double>(count);
      seen += count;
    }

    RunRecord train_rec;
    train_rec.epoch = epoch;
    train_rec.phase = "train";
    train_rec.rank = cfg.anchor_rank;
    train_rec.loss = epoch_loss / static_cast<double>(seen);
    train_rec.accuracy = epoch_acc / static_cast<double>(seen);
    train_rec.s = result.uncertainty.s;
    result.log.push_back(std::move(train_rec));

    auto record_eval = [&](std::size_t rank, const std::string& phase) {
      EvalResult ev = evaluate(model, eval_data, RankSpec::at(rank));
      RunRecord rec;
      rec.epoch = epoch;
      rec.phase = phase;
      rec.rank = rank;
      rec.loss = ev.loss;
      rec.accuracy = ev.accuracy;
      rec.s = result.uncertainty.s;
      result.log.push_back(std::move(rec));
    };
    for (auto r : cfg.eval_ranks) record_eval(r, "id_eval");
    for (auto r : cfg.interpolated_eval_ranks) record_eval(r, "ood_eval");
  }

  result.model = std::move(model);
  return result;
}

}  // namespace nsn

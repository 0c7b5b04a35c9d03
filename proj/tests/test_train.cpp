#include <cmath>
#include <optional>

#include <doctest.h>

#include "fd_check.hpp"
#include "nsn/config.hpp"
#include "nsn/train.hpp"

using namespace nsn;
using nsn_test::FdProblem;
using nsn_test::oracle_forward;

namespace {

FdProblem make_problem(AblationMode mode) {
  FdProblem p;
  RandomStream rng(50);
  p.model = build_model({{"nsn", 5, 7, 4, "relu"}, {"dense", 7, 6, 0, "gelu"}, {"nsn", 6, 3, 3, "identity"}},
                        13);
  p.x = rng.gaussian_matrix(8, 5);
  p.labels = {0, 1, 2, 0, 1, 2, 0, 1};
  p.mode = mode;
  if (mode_uses_variant(mode)) p.variant = 2;
  p.u.at_rank(4) = 0.3;
  if (p.variant) p.u.at_rank(2) = -0.2;
  return p;
}

Dataset blob_dataset(std::uint64_t seed, std::size_t n_per_class) {
  return synth_clusters(seed, 2, 8, n_per_class, 8.0);
}

std::pair<Dataset, Dataset> blob_splits(std::uint64_t seed, std::size_t num_classes, std::size_t dim,
                                        double separation) {
  DataConfig data;
  data.num_classes = num_classes;
  data.dim = dim;
  data.n_per_class = 100;
  data.test_n_per_class = 40;
  data.separation = separation;
  return load_data_splits(data, seed);
}

}  // namespace

TEST_CASE("cross_entropy analytic cases") {
  Matrix uniform(3, 10);
  std::vector<std::uint32_t> labels = {0, 5, 9};
  auto res = cross_entropy(uniform, labels);
  CHECK(res.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Matrix confident(1, 4);
  confident(0, 2) = 1000.0;
  CHECK(cross_entropy(confident, {2}).loss < 1e-6);

  CHECK_THROWS_AS(cross_entropy(confident, {4}), DataError);
  CHECK_THROWS_AS(cross_entropy(confident, {2, 3}), DimensionError);
}

TEST_CASE("cross_entropy gradient matches finite differences") {
  RandomStream rng(51);
  Matrix logits = rng.gaussian_matrix(4, 5);
  std::vector<std::uint32_t> labels = {1, 0, 4, 2};
  auto res = cross_entropy(logits, labels);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Matrix up = logits, down = logits;
    up.data()[i] += eps;
    down.data()[i] -= eps;
    double fd = (cross_entropy(up, labels).loss - cross_entropy(down, labels).loss) / (2 * eps);
    CHECK(std::abs(fd - res.dlogits.data()[i]) / std::max(1.0, std::abs(fd)) < 1e-6);
  }
}

TEST_CASE("surrogate_term closed form") {
  auto t0 = surrogate_term(1.7, 0.0);
  CHECK(t0.value == doctest::Approx(1.7));
  CHECK(t0.d_loss_coeff == 1.0);
  // stationary point of exp(-s)L + s is s = log L
  CHECK(surrogate_term(1.0, 0.0).ds == doctest::Approx(0.0));
  CHECK(surrogate_term(std::exp(0.8), 0.8).ds == doctest::Approx(0.0));
  // attenuation for large s
  CHECK(surrogate_term(5.0, 20.0).d_loss_coeff < 1e-8);
}

TEST_CASE("total_objective in CE_ONLY mode reduces to anchor cross-entropy") {
  FdProblem p = make_problem(AblationMode::kCeOnly);
  p.use_uncertainty = false;
  auto posts = oracle_forward(p.model, p.x, p.anchor);
  double expected = cross_entropy(posts.back(), p.labels).loss;
  auto res = total_objective(p.model, p.x, p.labels, p.anchor, std::nullopt, p.u, p.mode, false, 0.0);
  CHECK(res.loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("TWO_CE with s = 0 is the plain sum of the two cross-entropies") {
  FdProblem p = make_problem(AblationMode::kTwoCe);
  UncertaintyParams zero;
  double ce_a = cross_entropy(oracle_forward(p.model, p.x, p.anchor).back(), p.labels).loss;
  double ce_v = cross_entropy(oracle_forward(p.model, p.x, *p.variant).back(), p.labels).loss;
  auto res = total_objective(p.model, p.x, p.labels, p.anchor, p.variant, zero, p.mode, true, 0.0);
  CHECK(res.loss == doctest::Approx(ce_a + ce_v).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences in every ablation mode") {
  for (AblationMode mode :
       {AblationMode::kCeOnly, AblationMode::kCeHardOrtho, AblationMode::kTwoCe,
        AblationMode::kTwoCeLogitsReg, AblationMode::kTwoCeResidualOrtho, AblationMode::kTwoCeHiddenReg}) {
    CAPTURE(ablation_mode_name(mode));
    FdProblem p = make_problem(mode);
    nsn_test::FdReport rep = nsn_test::run_fd_check(p);
    CHECK(rep.loss_err < 1e-12);
    CHECK(rep.grad_err < 1e-5);
  }
}

TEST_CASE("variant must stay below the anchor; variant modes require one") {
  FdProblem p = make_problem(AblationMode::kTwoCe);
  CHECK_THROWS_AS(total_objective(p.model, p.x, p.labels, 4, 4, p.u, p.mode, true, 0.0), RankError);
  CHECK_THROWS_AS(total_objective(p.model, p.x, p.labels, 4, 5, p.u, p.mode, true, 0.0), RankError);
  CHECK_THROWS_AS(total_objective(p.model, p.x, p.labels, 4, std::nullopt, p.u, p.mode, true, 0.0),
                  ConfigError);
}

TEST_CASE("rank masking: parameters above the active rank receive exactly zero gradient") {
  FdProblem p = make_problem(AblationMode::kTwoCe);
  p.anchor = 3;  // strictly below the first layer's max rank of 4
  p.variant = 2;
  auto res = total_objective(p.model, p.x, p.labels, p.anchor, p.variant, p.u, p.mode, true, 0.0);
  const auto& layer0 = std::get<NsnLayer>(p.model.layers[0].params);
  const auto& g0 = res.grads.layers[0];
  for (std::size_t k = 0; k < layer0.d_in(); ++k) CHECK(g0.d_first(3, k) == 0.0);
  for (std::size_t o = 0; o < layer0.d_out(); ++o) CHECK(g0.d_second(o, 3) == 0.0);

  // ...and perturbing them does not change the forward pass at that rank.
  Model perturbed = p.model;
  auto& nl = std::get<NsnLayer>(perturbed.layers[0].params);
  for (std::size_t k = 0; k < nl.d_in(); ++k) nl.A(3, k) += 123.0;
  for (std::size_t o = 0; o < nl.d_out(); ++o) nl.B(o, 3) -= 55.0;
  CHECK(forward(perturbed, p.x, RankSpec::at(3)) == forward(p.model, p.x, RankSpec::at(3)));
}

TEST_CASE("uncertainty stationarity: descent on s alone converges to log(L_CE)") {
  const double loss = 1.37;
  double s = 0.0;
  for (int step = 0; step < 4000; ++step) s -= 0.01 * surrogate_term(loss, s).ds;
  CHECK(std::abs(s - std::log(loss)) < 1e-4);
}

TEST_CASE("gradient scaling: halving s by ln 2 doubles the CE contribution") {
  FdProblem p = make_problem(AblationMode::kTwoCe);
  auto res1 = total_objective(p.model, p.x, p.labels, p.anchor, p.variant, p.u, p.mode, true, 0.0);
  UncertaintyParams u2 = p.u;
  u2.at_rank(p.anchor) -= std::log(2.0);
  auto res2 = total_objective(p.model, p.x, p.labels, p.anchor, p.variant, u2, p.mode, true, 0.0);
  CHECK(res2.diag.anchor_coeff == doctest::Approx(2.0 * res1.diag.anchor_coeff));
  // The last-layer bias gradient is the sum of the two CE branches. The
  // variant branch is identical in both runs, so subtracting a variant-only
  // run must leave a doubled anchor contribution.
  UncertaintyParams uv_only;
  uv_only.at_rank(*p.variant) = p.u.value(*p.variant);
  auto v_only = total_objective(p.model, p.x, p.labels, *p.variant, std::nullopt, uv_only,
                                AblationMode::kCeOnly, true, 0.0);
  const auto& bias1 = res1.grads.layers.back().d_bias;
  const auto& bias2 = res2.grads.layers.back().d_bias;
  const auto& bias_v = v_only.grads.layers.back().d_bias;
  for (std::size_t o = 0; o < bias1.size(); ++o) {
    CHECK(bias2[o] - bias_v[o] == doctest::Approx(2.0 * (bias1[o] - bias_v[o])).epsilon(1e-9));
  }
}

TEST_CASE("curriculum sampler: prefix unlocks from the highest rank down") {
  CurriculumSampler sampler(32, {1, 2, 4, 8, 16}, 30, 7);
  CHECK(sampler.horizon(0) == 1);
  CHECK(sampler.horizon(29) == 5);
  for (std::size_t e = 0; e + 1 < 30; ++e) CHECK(sampler.horizon(e) <= sampler.horizon(e + 1));
  for (int i = 0; i < 50; ++i) {
    auto [anchor, variant] = sampler.sample(0);
    CHECK(anchor == 32);
    CHECK(variant == 16);  // singleton prefix = highest pool rank
  }
  CHECK_THROWS_AS(CurriculumSampler(32, {}, 30, 7), ConfigError);
  CHECK_THROWS_AS(CurriculumSampler(8, {8}, 30, 7), ConfigError);
}

TEST_CASE("curriculum sampler: full horizon is uniform over the pool") {
  CurriculumSampler sampler(32, {1, 2, 4, 8, 16}, 30, 8);
  std::map<std::size_t, std::size_t> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[sampler.sample(29).second]++;
  // expected 2000 per rank; 3 sigma of Binomial(10^4, 0.2) is 120
  for (auto rank : {1, 2, 4, 8, 16}) {
    CHECK(std::abs(static_cast<double>(counts[rank]) - 2000.0) <= 120.0);
  }
  // determinism across identically-seeded samplers
  CurriculumSampler a(32, {1, 2, 4, 8}, 30, 9), b(32, {1, 2, 4, 8}, 30, 9);
  for (int i = 0; i < 100; ++i) CHECK(a.sample(20) == b.sample(20));
}

TEST_CASE("train for zero epochs is a no-op with an empty log") {
  Dataset data = blob_dataset(60, 20);
  Model model = build_model({{"nsn", 8, 8, 8, "relu"}, {"nsn", 8, 2, 8, "identity"}}, 61);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.anchor_rank = 8;
  cfg.rank_pool = {1, 2};
  Model original = model;
  TrainResult res = train(std::move(model), data, data, cfg);
  CHECK(res.log.empty());
  CHECK(std::get<NsnLayer>(res.model.layers[0].params) == std::get<NsnLayer>(original.layers[0].params));
  CHECK(res.uncertainty.s.empty());
}

TEST_CASE("train solves linearly separable blobs") {
  auto [train_data, test_data] = blob_splits(62, 2, 8, 8.0);
  Model model = build_model({{"nsn", 8, 16, 8, "relu"}, {"nsn", 16, 2, 8, "identity"}}, 64);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.anchor_rank = 8;
  cfg.rank_pool = {1, 2, 4};
  cfg.eval_ranks = {8};
  cfg.seed = 65;
  TrainResult res = train(std::move(model), train_data, test_data, cfg);
  CHECK(evaluate(res.model, test_data, RankSpec::at(8)).accuracy >= 0.95);
  // MetricsLog has one train + one id_eval record per epoch
  CHECK(res.log.size() == 2 * cfg.epochs);
}

TEST_CASE("TWO_CE training orders the learned uncertainties by rank") {
  auto [train_data, test_data] = blob_splits(66, 4, 16, 3.0);
  Model model = build_model({{"nsn", 16, 16, 8, "relu"}, {"nsn", 16, 4, 8, "identity"}}, 68);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.01;
  cfg.anchor_rank = 8;
  cfg.rank_pool = {1, 4};
  cfg.use_uncertainty = true;
  cfg.seed = 69;
  TrainResult res = train(std::move(model), train_data, test_data, cfg);
  // lowest sampled rank keeps higher task uncertainty than the highest rank
  CHECK(res.uncertainty.value(1) > res.uncertainty.value(8));
}

TEST_CASE("training is bit-deterministic in config and seed") {
  Dataset data = blob_dataset(70, 30);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.anchor_rank = 4;
  cfg.rank_pool = {1, 2};
  cfg.eval_ranks = {2, 4};
  cfg.interpolated_eval_ranks = {3};
  cfg.seed = 71;
  auto run = [&] {
    Model model = build_model({{"nsn", 8, 8, 4, "relu"}, {"nsn", 8, 2, 4, "identity"}}, cfg.seed);
    return train(std::move(model), data, data, cfg);
  };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].accuracy == b.log[i].accuracy);
    CHECK(a.log[i].s == b.log[i].s);
  }
  CHECK(std::get<NsnLayer>(a.model.layers[0].params) == std::get<NsnLayer>(b.model.layers[0].params));
}

TEST_CASE("train aborts with epoch and step on divergence") {
  Dataset data = blob_dataset(72, 30);
  Model model = build_model({{"nsn", 8, 8, 4, "relu"}, {"nsn", 8, 2, 4, "identity"}}, 73);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e6;  // guaranteed blow-up
  cfg.anchor_rank = 4;
  cfg.rank_pool = {1};
  CHECK_THROWS_WITH_AS(train(std::move(model), data, data, cfg), doctest::Contains("epoch"),
                       NumericalError);
}

TEST_CASE("validate_train_config rejects inconsistent rank sets") {
  TrainConfig cfg;
  cfg.anchor_rank = 8;
  cfg.rank_pool = {1, 2};
  validate_train_config(cfg);

  TrainConfig bad = cfg;
  bad.rank_pool = {8};
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.eval_ranks = {9};
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.interpolated_eval_ranks = {2};  // collides with the pool
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.interpolated_eval_ranks = {8};  // collides with the anchor
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.mode = AblationMode::kTwoCe;
  bad.rank_pool.clear();
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
}

TEST_CASE("ablation mode names round-trip") {
  for (AblationMode mode :
       {AblationMode::kCeOnly, AblationMode::kCeHardOrtho, AblationMode::kTwoCe,
        AblationMode::kTwoCeLogitsReg, AblationMode::kTwoCeResidualOrtho, AblationMode::kTwoCeHiddenReg}) {
    CHECK(ablation_mode_from_name(ablation_mode_name(mode)) == mode);
  }
  CHECK_THROWS_AS(ablation_mode_from_name("bogus"), ConfigError);
}

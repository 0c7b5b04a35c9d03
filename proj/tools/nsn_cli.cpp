#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsn/analysis.hpp"
#include "nsn/config.hpp"
#include "nsn/data.hpp"
#include "nsn/surgery.hpp"
#include "nsn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
};

void say(const GlobalOpts& g, const std::string& msg) {
  if (!g.quiet) std::cout << msg << "\n";
}

nsn::RunConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) throw nsn::ConfigError("--config PATH is required");
  nsn::RunConfig cfg = nsn::load_run_config(g.config_path);
  if (g.seed) cfg.train.seed = *g.seed;
  if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
  return cfg;
}

fs::path ensure_out_dir(const nsn::RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_surgery_report(const std::vector<nsn::SurgeryRecord>& report, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw nsn::DataError("cannot write surgery report: " + path.string());
  out << "index,d_in,d_out,target_rank,relative_truncation_error,flops_before,flops_after_full,"
         "flops_after_half,near_zero_singular_values\n";
  for (const auto& rec : report) {
    out << rec.index << "," << rec.d_in << "," << rec.d_out << "," << rec.target_rank << ","
        << fmt(rec.relative_truncation_error) << "," << rec.flops_before << ","
        << rec.flops_after_full << "," << rec.flops_after_half << ","
        << rec.near_zero_singular_values << "\n";
  }
}

std::vector<std::size_t> merged_eval_ranks(const nsn::TrainConfig& t) {
  std::set<std::size_t> ranks(t.eval_ranks.begin(), t.eval_ranks.end());
  ranks.insert(t.interpolated_eval_ranks.begin(), t.interpolated_eval_ranks.end());
  if (ranks.empty()) ranks.insert(t.anchor_rank);
  return {ranks.begin(), ranks.end()};
}

int cmd_train(const GlobalOpts& g) {
  nsn::RunConfig cfg = load_config(g);
  fs::path out = ensure_out_dir(cfg);
  nsn::Model model = nsn::build_model(cfg.model_layers, cfg.train.seed);
  auto [train_data, test_data] = nsn::load_data_splits(cfg.data, cfg.train.seed);
  nsn::TrainResult result = nsn::train(std::move(model), train_data, test_data, cfg.train);

  nsn::Checkpoint ckpt;
  ckpt.model = result.model;
  ckpt.uncertainty = result.uncertainty.s;
  ckpt.meta.seed = cfg.train.seed;
  ckpt.meta.config_digest = cfg.digest;
  nsn::save_checkpoint(ckpt, (out / "checkpoint.nsnckpt").string());
  nsn::write_runlog(result.log, (out / "runlog.jsonl").string());
  nsn::FrontierTable table = nsn::frontier_sweep(result.model, test_data, merged_eval_ranks(cfg.train));
  nsn::write_frontier_csv(table, (out / "frontier.csv").string());

  say(g, "wrote " + (out / "checkpoint.nsnckpt").string());
  say(g, "wrote " + (out / "runlog.jsonl").string());
  say(g, "wrote " + (out / "frontier.csv").string());
  return 0;
}

int cmd_baseline(const GlobalOpts& g, const std::string& kind) {
  nsn::RunConfig cfg = load_config(g);
  fs::path out = ensure_out_dir(cfg);
  auto [train_data, test_data] = nsn::load_data_splits(cfg.data, cfg.train.seed);

  if (kind == "native") {
    if (cfg.baseline.ranks.empty()) throw nsn::ConfigError("baseline.ranks is required for kind=native");
    nsn::FrontierTable table;
    for (auto r : cfg.baseline.ranks) {
      // A specialist: same topology with every NSN inner dimension fixed to r,
      // trained with plain CE at its own full rank.
      auto layers = cfg.model_layers;
      for (auto& l : layers) {
        if (l.kind == "nsn") l.max_rank = r;
      }
      nsn::TrainConfig t = cfg.train;
      t.mode = nsn::AblationMode::kCeOnly;
      t.use_uncertainty = false;
      t.anchor_rank = r;
      t.rank_pool.clear();
      t.eval_ranks.clear();
      t.interpolated_eval_ranks.clear();
      t.seed = nsn::derive_seed(cfg.train.seed, 200 + r);
      nsn::Model model = nsn::build_model(layers, t.seed);
      nsn::TrainResult res = nsn::train(std::move(model), train_data, test_data, t);
      nsn::EvalResult ev = nsn::evaluate(res.model, test_data, nsn::RankSpec::at(r));
      table.push_back({r, nsn::model_flops(res.model, nsn::RankSpec::at(r)), ev.loss, ev.accuracy});
    }
    std::sort(table.begin(), table.end(),
              [](const auto& a, const auto& b) { return a.rank < b.rank; });
    nsn::write_frontier_csv(table, (out / "native_frontier.csv").string());
    say(g, "wrote " + (out / "native_frontier.csv").string());
    return 0;
  }
  if (kind == "truncate") {
    nsn::TrainConfig t = cfg.train;
    t.mode = nsn::AblationMode::kCeOnly;
    t.use_uncertainty = false;
    t.rank_pool.clear();
    t.eval_ranks.clear();
    t.interpolated_eval_ranks.clear();
    nsn::Model model = nsn::build_model(cfg.model_layers, t.seed);
    nsn::TrainResult res = nsn::train(std::move(model), train_data, test_data, t);
    std::vector<std::size_t> ranks =
        cfg.baseline.ranks.empty() ? merged_eval_ranks(cfg.train) : cfg.baseline.ranks;
    nsn::FrontierTable table = nsn::frontier_sweep(res.model, test_data, ranks);
    nsn::write_frontier_csv(table, (out / "truncate_frontier.csv").string());
    say(g, "wrote " + (out / "truncate_frontier.csv").string());
    return 0;
  }
  throw nsn::ConfigError("baseline kind must be 'native' or 'truncate', got '" + kind + "'");
}

int cmd_ablate(const GlobalOpts& g) {
  nsn::RunConfig cfg = load_config(g);
  fs::path out = ensure_out_dir(cfg);
  auto [train_data, test_data] = nsn::load_data_splits(cfg.data, cfg.train.seed);

  std::vector<std::string> modes = cfg.ablate.modes;
  if (modes.empty()) {
    modes = {"ce_only",           "ce_hard_ortho",         "two_ce",
             "two_ce_logits_reg", "two_ce_residual_ortho", "two_ce_hidden_reg"};
  }
  std::vector<std::uint64_t> seeds = cfg.ablate.seeds;
  if (seeds.empty()) seeds = {cfg.train.seed};

  auto mean_std = [](const std::vector<double>& v) {
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return std::pair{mean, std::sqrt(var)};
  };

  std::ofstream csv(out / "ablation.csv");
  if (!csv) throw nsn::DataError("cannot write ablation csv");
  csv << "mode,highest_acc_mean,highest_acc_std,id_acc_mean,id_acc_std,ood_acc_mean,ood_acc_std\n";
  for (const auto& mode_name : modes) {
    std::vector<double> highest, id_avg, ood_avg;
    for (auto seed : seeds) {
      nsn::TrainConfig t = cfg.train;
      t.mode = nsn::ablation_mode_from_name(mode_name);
      t.seed = seed;
      nsn::Model model = nsn::build_model(cfg.model_layers, t.seed);
      nsn::TrainResult res = nsn::train(std::move(model), train_data, test_data, t);
      highest.push_back(nsn::evaluate(res.model, test_data, nsn::RankSpec::at(t.anchor_rank)).accuracy);
      auto avg_over = [&](const std::vector<std::size_t>& ranks) {
        double total = 0.0;
        for (auto r : ranks) total += nsn::evaluate(res.model, test_data, nsn::RankSpec::at(r)).accuracy;
        return ranks.empty() ? 0.0 : total / static_cast<double>(ranks.size());
      };
      id_avg.push_back(avg_over(t.eval_ranks));
      ood_avg.push_back(avg_over(t.interpolated_eval_ranks));
    }
    auto [hm, hs] = mean_std(highest);
    auto [im, is] = mean_std(id_avg);
    auto [om, os] = mean_std(ood_avg);
    csv << mode_name << "," << fmt(hm) << "," << fmt(hs) << "," << fmt(im) << "," << fmt(is) << ","
        << fmt(om) << "," << fmt(os) << "\n";
    say(g, mode_name + ": highest=" + fmt(hm) + " id=" + fmt(im) + " ood=" + fmt(om));
  }
  say(g, "wrote " + (out / "ablation.csv").string());
  return 0;
}

nsn::SurgeryPlan parse_plan_file(const std::string& path, const nsn::Model& model) {
  std::ifstream in(path);
  if (!in) throw nsn::ConfigError("cannot open surgery plan: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw nsn::ConfigError("surgery plan is not valid JSON: " + std::string(e.what()));
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "all_dense" && key != "max_rank" && key != "layers") {
      throw nsn::ConfigError("unknown key '" + key + "' in surgery plan");
    }
  }
  nsn::SurgeryPlan plan;
  if (doc.value("all_dense", false)) {
    std::size_t rank = doc.value("max_rank", std::size_t{0});
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (!model.layers[i].is_nsn()) plan.targets[i] = rank;
    }
    return plan;
  }
  for (const auto& l : doc.value("layers", json::array())) {
    for (const auto& [key, value] : l.items()) {
      if (key != "index" && key != "max_rank") {
        throw nsn::ConfigError("unknown key '" + key + "' in surgery plan layer entry");
      }
    }
    plan.targets[l.at("index").get<std::size_t>()] = l.value("max_rank", std::size_t{0});
  }
  return plan;
}

int cmd_surgery(const GlobalOpts& g, const std::string& input, const std::string& plan_path,
                const std::string& output) {
  nsn::Checkpoint ckpt = nsn::load_checkpoint(input);
  nsn::SurgeryPlan plan = parse_plan_file(plan_path, ckpt.model);
  nsn::SurgeryResult result = nsn::surgical_replace(ckpt.model, plan);

  nsn::Checkpoint transformed = ckpt;
  transformed.model = result.model;
  nsn::save_checkpoint(transformed, output);

  fs::path report_path = g.out_dir.empty() ? fs::path(output).parent_path() / "surgery_report.csv"
                                           : fs::path(g.out_dir) / "surgery_report.csv";
  if (!report_path.parent_path().empty()) fs::create_directories(report_path.parent_path());
  write_surgery_report(result.report, report_path);
  say(g, "wrote " + output);
  say(g, "wrote " + report_path.string());
  return 0;
}

int cmd_analyze(const GlobalOpts& g, const std::string& ckpt_path, const std::string& which) {
  nsn::RunConfig cfg = load_config(g);
  fs::path out = ensure_out_dir(cfg);
  nsn::Checkpoint ckpt = nsn::load_checkpoint(ckpt_path);

  auto nsn_layer_at = [&](std::size_t index) -> const nsn::NsnLayer& {
    if (index >= ckpt.model.layers.size() || !ckpt.model.layers[index].is_nsn()) {
      throw nsn::ConfigError("analysis.layer " + std::to_string(index) + " is not an NSN layer");
    }
    return std::get<nsn::NsnLayer>(ckpt.model.layers[index].params);
  };

  if (which == "containment") {
    const auto& layer = nsn_layer_at(cfg.analysis.layer);
    std::vector<std::size_t> ranks = cfg.analysis.ranks;
    if (ranks.empty()) ranks = {1, 2, 4, 8, 16};
    nsn::ContainmentGrid grid = nsn::containment_grid(layer, ranks);
    nsn::write_containment_csv(grid, (out / "containment.csv").string());
    say(g, "wrote " + (out / "containment.csv").string());
    return 0;
  }
  if (which == "energy") {
    std::ofstream csv(out / "energy.csv");
    csv << "layer,component,a_norm,b_norm,product,violation\n";
    for (std::size_t li = 0; li < ckpt.model.layers.size(); ++li) {
      if (!ckpt.model.layers[li].is_nsn()) continue;
      auto rep = nsn::energy_decay_audit(std::get<nsn::NsnLayer>(ckpt.model.layers[li].params));
      std::set<std::size_t> bad(rep.violations.begin(), rep.violations.end());
      for (std::size_t i = 0; i < rep.a_norms.size(); ++i) {
        csv << li << "," << i << "," << fmt(rep.a_norms[i]) << "," << fmt(rep.b_norms[i]) << ","
            << fmt(rep.products[i]) << "," << (bad.contains(i) ? 1 : 0) << "\n";
      }
    }
    say(g, "wrote " + (out / "energy.csv").string());
    return 0;
  }
  if (which == "lemma") {
    std::vector<const nsn::NsnLayer*> layers;
    for (const auto& l : ckpt.model.layers) {
      if (l.is_nsn()) layers.push_back(&std::get<nsn::NsnLayer>(l.params));
    }
    if (layers.empty()) throw nsn::ConfigError("lemma analysis needs at least one NSN layer");
    nsn::RandomStream rng(nsn::derive_seed(cfg.train.seed, 300));
    std::size_t violations = 0;
    double max_ratio = 0.0;
    for (std::size_t i = 0; i < cfg.analysis.samples; ++i) {
      const auto* layer = layers[rng.below(layers.size())];
      if (layer->max_rank < 2) continue;
      std::size_t r = 1 + rng.below(layer->max_rank - 1);
      std::vector<double> x = rng.gaussian_vector(layer->d_in());
      auto check = nsn::adjacent_perturbation_check(*layer, x, r);
      if (!check.satisfied) ++violations;
      if (check.rhs > 0.0) max_ratio = std::max(max_ratio, check.lhs / check.rhs);
    }
    std::ofstream csv(out / "lemma.csv");
    csv << "samples,violations,max_lhs_over_rhs\n";
    csv << cfg.analysis.samples << "," << violations << "," << fmt(max_ratio) << "\n";
    say(g, "wrote " + (out / "lemma.csv").string());
    return 0;
  }
  if (which == "bound") {
    if (ckpt.model.layers.size() != 1) {
      throw nsn::ConfigError(
          "bound analysis needs a single-NSN-layer probe checkpoint; deep models are unsupported");
    }
    auto [train_data, test_data] = nsn::load_data_splits(cfg.data, cfg.train.seed);
    const auto& layer = nsn_layer_at(0);
    std::size_t r_int = cfg.analysis.r_int == 0 ? layer.max_rank : cfg.analysis.r_int;
    nsn::BoundReport rep = nsn::interpolation_bound_report(
        ckpt.model, test_data, cfg.analysis.r1, r_int, cfg.analysis.lipschitz,
        nsn::ProbeLoss::kCrossEntropy);
    std::ofstream csv(out / "bound.csv");
    csv << "r1,r_int,empirical_gap,bound,constant,bound_dominates\n";
    csv << rep.r1 << "," << rep.r_int << "," << fmt(rep.empirical_gap) << "," << fmt(rep.bound) << ","
        << fmt(rep.constant) << "," << (rep.bound_dominates ? 1 : 0) << "\n";
    say(g, "wrote " + (out / "bound.csv").string());
    return 0;
  }
  if (which == "similarity") {
    std::vector<std::size_t> ranks = cfg.analysis.ranks;
    if (ranks.empty()) ranks = merged_eval_ranks(cfg.train);
    std::vector<double> sims;
    sims.reserve(ranks.size());
    for (auto r : ranks) sims.push_back(nsn::inter_layer_similarity(ckpt.model, nsn::RankSpec::at(r)));
    std::ofstream csv(out / "similarity.csv");
    csv << "rank,similarity\n";
    for (std::size_t i = 0; i < ranks.size(); ++i) csv << ranks[i] << "," << fmt(sims[i]) << "\n";
    say(g, "wrote " + (out / "similarity.csv").string());
    return 0;
  }
  if (which == "frontier") {
    auto [train_data, test_data] = nsn::load_data_splits(cfg.data, cfg.train.seed);
    std::vector<std::size_t> ranks = cfg.analysis.ranks;
    if (ranks.empty()) ranks = merged_eval_ranks(cfg.train);
    nsn::FrontierTable table = nsn::frontier_sweep(ckpt.model, test_data, ranks);
    nsn::write_frontier_csv(table, (out / "frontier.csv").string());
    say(g, "wrote " + (out / "frontier.csv").string());
    return 0;
  }
  throw nsn::ConfigError("unknown analysis '" + which +
                         "' (expected containment, energy, lemma, bound, similarity, or frontier)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nsn: nested subspace network experiment harness"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "run configuration file (JSON)");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out_dir, "override the output directory");
  app.add_flag("--quiet", g.quiet, "suppress progress output");
  app.fallthrough();

  auto* train_cmd = app.add_subcommand("train", "train an NSN model per the config");
  auto* baseline_cmd = app.add_subcommand("baseline", "native specialists or truncation baseline");
  std::string baseline_kind = "native";
  baseline_cmd->add_option("--kind", baseline_kind, "native | truncate");
  auto* ablate_cmd = app.add_subcommand("ablate", "compare training objectives");
  auto* surgery_cmd = app.add_subcommand("surgery", "replace dense layers with SVD-initialized NSN layers");
  std::string surgery_in, surgery_plan, surgery_out;
  surgery_cmd->add_option("--input", surgery_in, "input checkpoint")->required();
  surgery_cmd->add_option("--plan", surgery_plan, "surgery plan (JSON)")->required();
  surgery_cmd->add_option("--output", surgery_out, "output checkpoint")->required();
  auto* analyze_cmd = app.add_subcommand("analyze", "run an analysis over a checkpoint");
  std::string analyze_ckpt, analyze_which;
  analyze_cmd->add_option("--checkpoint", analyze_ckpt, "checkpoint to analyze")->required();
  analyze_cmd->add_option("--which", analyze_which, "containment | energy | lemma | bound | similarity | frontier")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(g);
    if (baseline_cmd->parsed()) return cmd_baseline(g, baseline_kind);
    if (ablate_cmd->parsed()) return cmd_ablate(g);
    if (surgery_cmd->parsed()) return cmd_surgery(g, surgery_in, surgery_plan, surgery_out);
    if (analyze_cmd->parsed()) return cmd_analyze(g, analyze_ckpt, analyze_which);
  } catch (const nsn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nsn::RankError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nsn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const nsn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <cstdlib>
#include <filesystem>
#include <string>

#include <doctest.h>

#include "test_util.hpp"

using nsn_test::TempDir;
using nsn_test::slurp;
using nsn_test::spit;

namespace {

namespace fs = std::filesystem;

const char* cli_path() {
  const char* p = std::getenv("NSN_CLI");
  REQUIRE_MESSAGE(p != nullptr, "NSN_CLI must point at the command-line binary");
  return p;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

// Tiny synthetic recipe that trains in well under a second.
std::string small_config(const std::string& extra_train = "") {
  return std::string(R"({
  "model": {"layers": [
    {"kind": "nsn", "d_in": 8, "d_out": 16, "max_rank": 8, "activation": "relu"},
    {"kind": "nsn", "d_in": 16, "d_out": 4, "max_rank": 8}
  ]},
  "data": {"source": "synth", "num_classes": 4, "dim": 8, "n_per_class": 40,
           "test_n_per_class": 10, "separation": 4.0},
  "train": {"epochs": 3, "batch_size": 16, "learning_rate": 0.02, "seed": 5,
            "mode": "two_ce", "anchor_rank": 8, "rank_pool": [1, 2, 4],
            "eval_ranks": [2, 8], "interpolated_eval_ranks": [3])") +
         extra_train + R"(},
  "ablate": {"modes": ["ce_only", "two_ce"], "seeds": [1, 2]},
  "baseline": {"ranks": [1, 2, 8]},
  "analysis": {"ranks": [1, 2, 4], "layer": 0, "samples": 200},
  "output_dir": "unused"
})";
}

}  // namespace

TEST_CASE("cli: no subcommand or unknown flag exits with the usage error code") {
  CHECK(run_cli("") == 2);
  CHECK(run_cli("train --bogus-flag") == 2);
}

TEST_CASE("cli train: writes checkpoint, runlog, and frontier; byte-identical on rerun") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), small_config());
  std::string base = "train --quiet --config " + tmp.file("cfg.json");
  CHECK(run_cli(base + " --out " + tmp.file("run_a")) == 0);
  for (const char* name : {"checkpoint.nsnckpt", "runlog.jsonl", "frontier.csv"}) {
    CHECK_MESSAGE(fs::exists(tmp.path() / "run_a" / name), name);
  }
  CHECK(run_cli(base + " --out " + tmp.file("run_b")) == 0);
  for (const char* name : {"checkpoint.nsnckpt", "runlog.jsonl", "frontier.csv"}) {
    CHECK(slurp(tmp.file("run_a/") + name) == slurp(tmp.file("run_b/") + name));
  }
  // a different seed changes the artifacts
  CHECK(run_cli(base + " --seed 99 --out " + tmp.file("run_c")) == 0);
  CHECK(slurp(tmp.file("run_a/checkpoint.nsnckpt")) != slurp(tmp.file("run_c/checkpoint.nsnckpt")));
}

TEST_CASE("cli: configuration problems exit 2") {
  TempDir tmp;
  CHECK(run_cli("train --quiet --config " + tmp.file("missing.json")) == 2);
  spit(tmp.file("bad.json"), "{ not json");
  CHECK(run_cli("train --quiet --config " + tmp.file("bad.json")) == 2);
  std::string unknown_key = small_config();
  unknown_key.insert(unknown_key.rfind('}'), ", \"typo_key\": 1");
  spit(tmp.file("unknown.json"), unknown_key);
  CHECK(run_cli("train --quiet --config " + tmp.file("unknown.json")) == 2);
}

TEST_CASE("cli: a missing data file exits 3") {
  TempDir tmp;
  std::string cfg = small_config();
  const std::string synth = "\"source\": \"synth\"";
  cfg.replace(cfg.find(synth), synth.size(),
              "\"source\": \"rawf32\", \"train_path\": \"" + tmp.file("nope.bin") +
                  "\", \"test_path\": \"" + tmp.file("nope.bin") + "\"");
  spit(tmp.file("cfg.json"), cfg);
  CHECK(run_cli("train --quiet --config " + tmp.file("cfg.json") + " --out " + tmp.file("out")) == 3);
}

TEST_CASE("cli baseline: native and truncate frontiers") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), small_config());
  std::string base = " --quiet --config " + tmp.file("cfg.json") + " --out " + tmp.file("out");
  CHECK(run_cli("baseline --kind native" + base) == 0);
  CHECK(fs::exists(tmp.path() / "out" / "native_frontier.csv"));
  CHECK(run_cli("baseline --kind truncate" + base) == 0);
  CHECK(fs::exists(tmp.path() / "out" / "truncate_frontier.csv"));
  CHECK(run_cli("baseline --kind nonsense" + base) == 2);
  // three configured ranks -> header + 3 rows
  std::string native = slurp(tmp.file("out/native_frontier.csv"));
  CHECK(std::count(native.begin(), native.end(), '\n') == 4);
}

TEST_CASE("cli ablate: one row per mode with the declared header") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), small_config());
  CHECK(run_cli("ablate --quiet --config " + tmp.file("cfg.json") + " --out " + tmp.file("out")) == 0);
  std::string csv = slurp(tmp.file("out/ablation.csv"));
  CHECK(csv.rfind("mode,highest_acc_mean,highest_acc_std,id_acc_mean,id_acc_std,ood_acc_mean,ood_acc_std\n",
                  0) == 0);
  CHECK(csv.find("\nce_only,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 modes
}

TEST_CASE("cli surgery: converts a trained checkpoint and rejects a malformed plan") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), small_config());
  CHECK(run_cli("train --quiet --config " + tmp.file("cfg.json") + " --out " + tmp.file("out")) == 0);
  std::string ckpt = tmp.file("out/checkpoint.nsnckpt");

  // The trained model is all-NSN, so any selection must fail cleanly ...
  spit(tmp.file("plan.json"), R"({"layers": [{"index": 0, "max_rank": 2}]})");
  CHECK(run_cli("surgery --quiet --input " + ckpt + " --plan " + tmp.file("plan.json") + " --output " +
                tmp.file("out/after.nsnckpt")) == 2);

  // ... while an empty plan is a lossless pass-through.
  spit(tmp.file("noop.json"), R"({"layers": []})");
  CHECK(run_cli("surgery --quiet --input " + ckpt + " --plan " + tmp.file("noop.json") + " --output " +
                tmp.file("out/after.nsnckpt")) == 0);
  CHECK(fs::exists(tmp.path() / "out" / "after.nsnckpt"));
  CHECK(fs::exists(tmp.path() / "out" / "surgery_report.csv"));

  spit(tmp.file("junk.json"), R"({"layers": [], "surprise": true})");
  CHECK(run_cli("surgery --quiet --input " + ckpt + " --plan " + tmp.file("junk.json") + " --output " +
                tmp.file("out/x.nsnckpt")) == 2);
  CHECK(run_cli("surgery --quiet --input " + tmp.file("ghost.nsnckpt") + " --plan " + tmp.file("noop.json") +
                " --output " + tmp.file("out/y.nsnckpt")) == 3);
}

TEST_CASE("cli analyze: containment and frontier artifacts from a checkpoint") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), small_config());
  REQUIRE(run_cli("train --quiet --config " + tmp.file("cfg.json") + " --out " + tmp.file("out")) == 0);
  std::string common = " --quiet --config " + tmp.file("cfg.json") + " --checkpoint " +
                       tmp.file("out/checkpoint.nsnckpt") + " --out " + tmp.file("out");
  CHECK(run_cli("analyze --which containment" + common) == 0);
  CHECK(slurp(tmp.file("out/containment.csv")).rfind("rank,1,2,4\n", 0) == 0);
  CHECK(run_cli("analyze --which energy" + common) == 0);
  CHECK(fs::exists(tmp.path() / "out" / "energy.csv"));
  CHECK(run_cli("analyze --which lemma" + common) == 0);
  CHECK(run_cli("analyze --which frontier" + common) == 0);
  // the interpolation-bound probe must be a single-layer model
  CHECK(run_cli("analyze --which bound" + common) == 2);
  CHECK(run_cli("analyze --which nonsense" + common) == 2);
  // similarity needs two same-shape layers; this topology has none
  CHECK(run_cli("analyze --which similarity" + common) == 2);
  CHECK(!fs::exists(tmp.path() / "out" / "similarity.csv"));
}

TEST_CASE("cli analyze bound: single-layer probe checkpoint passes the dominance check") {
  TempDir tmp;
  spit(tmp.file("probe.json"), R"({
  "model": {"layers": [{"kind": "nsn", "d_in": 8, "d_out": 4, "max_rank": 4, "activation": "identity"}]},
  "data": {"source": "synth", "num_classes": 4, "dim": 8, "n_per_class": 20,
           "test_n_per_class": 10, "separation": 3.0},
  "train": {"epochs": 1, "batch_size": 16, "learning_rate": 0.02, "seed": 6,
            "mode": "two_ce", "anchor_rank": 4, "rank_pool": [1, 2]},
  "analysis": {"ranks": [1, 2, 4], "layer": 0, "samples": 100, "r1": 1},
  "output_dir": "unused"
})");
  std::string base = " --quiet --config " + tmp.file("probe.json") + " --out " + tmp.file("out");
  REQUIRE(run_cli("train" + base) == 0);
  CHECK(run_cli("analyze --which bound --checkpoint " + tmp.file("out/checkpoint.nsnckpt") + base) == 0);
  std::string csv = slurp(tmp.file("out/bound.csv"));
  CHECK(csv.rfind("r1,r_int,empirical_gap,bound,constant,bound_dominates\n", 0) == 0);
  CHECK(csv.substr(csv.size() - 2) == "1\n");  // bound_dominates
}

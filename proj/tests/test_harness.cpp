#include <nlohmann/json.hpp>

#include "doctest.h"
#include "spkbal/harness.hpp"
#include "test_util.hpp"

using namespace spkbal;

namespace {

ExperimentPlan tiny_plan(const std::string& name) {
  ExperimentPlan p;
  p.generator = test_util::tiny_config();
  p.strategies = {"SD", "UN", "MU", "OV", "E1", "E2", "E3", "EN"};
  p.width_divisor = 64;
  p.feedback_embed_dim = 3;
  p.training.n_epochs = 2;
  p.bootstrap_draws = 6;
  p.seed = 5;
  p.out = test_util::temp_dir(name);
  return p;
}

}  // namespace

TEST_CASE("plan validation") {
  ExperimentPlan p = tiny_plan("plan_validation");
  CHECK_NOTHROW(p.validate());
  p.strategies = {"MU", "EN"};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.strategies = {"MU", "XX"};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.strategies = {"MU", "MU"};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.strategies = {};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = tiny_plan("plan_validation");
  p.workers = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = tiny_plan("plan_validation");
  p.ab_pairs = {{"MU", "ZZ"}};
  CHECK_THROWS_AS(p.validate(), ValidationError);

  // Invalid plans fail before touching the output directory.
  p = tiny_plan("plan_validation");
  std::filesystem::remove_all(p.out);
  p.strategies = {"EN"};
  CHECK_THROWS_AS(run(p), ValidationError);
  CHECK_FALSE(std::filesystem::exists(p.out));
}

TEST_CASE("plan JSON round-trip keeps the hash") {
  const ExperimentPlan p = tiny_plan("plan_json");
  const ExperimentPlan q = nlohmann::json(p).get<ExperimentPlan>();
  CHECK(q.config_hash() == p.config_hash());
  CHECK(q.ab_pairs == p.ab_pairs);
  ExperimentPlan r = p;
  r.out = "elsewhere";
  r.workers = 3;
  CHECK(r.config_hash() == p.config_hash());
  r.seed = 6;
  CHECK(r.config_hash() != p.config_hash());
}

TEST_CASE("recipes per strategy") {
  const ExperimentPlan p = tiny_plan("recipes");
  CHECK(plan_recipe(p, "SD", "B").strategy == Strategy::SpeakerDependent);
  CHECK(plan_recipe(p, "SD", "B").speaker == "B");
  CHECK(plan_recipe(p, "E1").draws_per_speaker == 6);
  CHECK(plan_recipe(p, "E1").seed != plan_recipe(p, "E2").seed);
  CHECK(plan_recipe(p, "E2").seed != plan_recipe(p, "E3").seed);
  CHECK_THROWS_AS(plan_recipe(p, "EN"), ValidationError);
}

TEST_CASE("full plan run") {
  const ExperimentPlan plan = tiny_plan("run_a");
  const RunResult result = run(plan);
  const auto& out = plan.out;

  // 3 SD models reported under one strategy; every strategy has 3 speaker rows and a pooled row.
  CHECK(result.report.rows.size() == 8 * 4);
  REQUIRE(result.ensemble_contraction.has_value());
  CHECK(*result.ensemble_contraction);
  for (const std::string spk : {"A", "B", "C", "ALL"}) {
    const double mean = (result.report.at("E1", spk).mcd_db + result.report.at("E2", spk).mcd_db +
                         result.report.at("E3", spk).mcd_db) / 3.0;
    CHECK(result.report.at("EN", spk).mcd_db <= mean + 1e-12);
  }

  const nlohmann::json& m = result.manifest;
  CHECK(m["models"]["UN"]["training_set_size"] == 9);
  CHECK(m["models"]["MU"]["training_set_size"] == 16);
  CHECK(m["models"]["OV"]["training_set_size"] == 24);
  CHECK(m["models"]["E2"]["training_set_size"] == 18);
  CHECK(m["models"]["SD_B"]["training_set_size"] == 5);
  CHECK(m["models"].size() == 9);
  CHECK(m["ensemble_unique_counts"]["A"].get<int>() <= 3);
  CHECK(m["models"]["E1"]["init_seed"] != m["models"]["E2"]["init_seed"]);

  for (const char* f : {"resolved_config.json", "manifest.json", "state.json", "corpus/manifest.json",
                        "models/MU_sar.ckpt", "models/SD_C_dar.ckpt", "models/E3_sar.log.csv",
                        "reports/metrics.csv", "reports/plot_mcd.csv", "reports/plot_f0_corr.csv",
                        "reports/preference_EN-MU.csv", "reports/summary.json"})
    CHECK_MESSAGE(std::filesystem::exists(out / f), f);
  CHECK(result.preferences.size() == 3);
  const Corpus corpus = load_corpus(out / "corpus");
  const std::string utt = corpus.utterances(Split::Test, 2).front().utt_id;
  const AcousticSequence en = read_acoustic(out / "outputs" / "EN" / (utt + ".rec"));
  CHECK(en.n_frames() == corpus.utterances(Split::Test, 2).front().linguistic.cols());
  const nlohmann::json state = nlohmann::json::parse(test_util::slurp(out / "state.json"));
  CHECK(state["phase"] == "done");
  CHECK(state["completed"].size() == 9);

  SUBCASE("rerun and resume reproduce the reports") {
    const std::string csv = test_util::slurp(out / "reports" / "metrics.csv");
    const std::string ckpt = test_util::slurp(out / "models" / "E2_dar.ckpt");
    run(plan);
    CHECK(test_util::slurp(out / "reports" / "metrics.csv") == csv);
    std::filesystem::remove(out / "models" / "E2_dar.ckpt");
    run(plan);
    CHECK(test_util::slurp(out / "models" / "E2_dar.ckpt") == ckpt);
    CHECK(test_util::slurp(out / "reports" / "metrics.csv") == csv);
  }
  SUBCASE("fresh directory, more workers") {
    ExperimentPlan other = tiny_plan("run_b");
    other.workers = 3;
    run(other);
    CHECK(test_util::slurp(other.out / "reports" / "metrics.csv") ==
          test_util::slurp(out / "reports" / "metrics.csv"));
    CHECK(test_util::slurp(other.out / "reports" / "summary.json") ==
          test_util::slurp(out / "reports" / "summary.json"));
  }
  SUBCASE("loading a saved corpus gives the same report") {
    ExperimentPlan other = tiny_plan("run_c");
    other.corpus_path = out / "corpus";
    run(other);
    CHECK(test_util::slurp(other.out / "reports" / "metrics.csv") ==
          test_util::slurp(out / "reports" / "metrics.csv"));
  }
}

TEST_CASE("contraction violation") {
  AcousticSequence ref{Matrix::Zero(3, 2), {std::nullopt, std::nullopt}};
  AcousticSequence a{Matrix::Ones(3, 2), {std::nullopt, std::nullopt}};
  AcousticSequence b{-Matrix::Ones(3, 2), {std::nullopt, std::nullopt}};
  AcousticSequence mean{Matrix::Zero(3, 2), {std::nullopt, std::nullopt}};
  CHECK(contraction_violation({a, b}, mean, ref) < 0.0);
  CHECK(contraction_violation({a, b}, AcousticSequence{2.0 * Matrix::Ones(3, 2), ref.f0}, ref) > 0.0);
}

// Command-line front end: corpus generation, training-set construction,
// training, synthesis, ensemble combination, evaluation and full plans.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spkbal/ensemble.hpp"
#include "spkbal/harness.hpp"

namespace {

using namespace spkbal;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

UtteranceOutputs read_outputs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  UtteranceOutputs outs;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".rec") outs.emplace(entry.path().stem().string(), read_acoustic(entry.path()));
  return outs;
}

void write_outputs(const UtteranceOutputs& outs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [utt, seq] : outs) write_acoustic(dir / (utt + ".rec"), seq);
}

// name=dir
std::pair<std::string, std::filesystem::path> named_dir(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    const std::filesystem::path p(spec);
    return {p.filename().string(), p};
  }
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-speaker acoustic modelling on speaker-imbalanced corpora"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 1;
  bool seed_given = false;

  // generate-corpus
  auto* gen = app.add_subcommand("generate-corpus", "Write a synthetic multi-speaker corpus");
  gen->add_option("--config", config_path, "Generator config (JSON)");
  gen->add_option("--seed", seed, "Master seed")->each([&](const std::string&) { seed_given = true; });
  gen->add_option("--out", out_path, "Corpus directory")->required();

  // build-set
  std::string corpus_path;
  std::string strategy;
  std::string speaker;
  std::size_t draws = 3000;
  bool metadata_only = false;
  auto* build = app.add_subcommand("build-set", "Build a training set from a corpus");
  build->add_option("--corpus", corpus_path, "Corpus directory")->required();
  build->add_option("--strategy", strategy, "SD, UN, MU, OV or BOOTSTRAP")->required();
  build->add_option("--speaker", speaker, "Speaker id for SD");
  build->add_option("--draws", draws, "Draws per speaker for BOOTSTRAP");
  build->add_option("--seed", seed, "Sampling seed");
  build->add_flag("--metadata-only", metadata_only, "Do not read utterance records");
  build->add_option("--out", out_path, "Training-set file (JSON)");

  // train
  std::string set_path;
  std::string variant = "sar";
  int width_divisor = 16;
  auto* tr = app.add_subcommand("train", "Train one SAR or DAR model");
  tr->add_option("--corpus", corpus_path, "Corpus directory")->required();
  tr->add_option("--set", set_path, "Training-set file")->required();
  tr->add_option("--variant", variant, "sar or dar")->check(CLI::IsMember({"sar", "dar"}));
  tr->add_option("--width-divisor", width_divisor, "Divide reference layer widths by this");
  tr->add_option("--config", config_path, "Training config (JSON)");
  tr->add_option("--seed", seed, "Initialisation and shuffle seed")->each([&](const std::string&) { seed_given = true; });
  tr->add_option("--out", out_path, "Checkpoint file")->required();

  // synthesize
  std::string sar_path;
  std::string dar_path;
  std::string split_name = "test";
  auto* syn = app.add_subcommand("synthesize", "Generate acoustic features for a corpus split");
  syn->add_option("--corpus", corpus_path, "Corpus directory")->required();
  syn->add_option("--sar", sar_path, "SAR checkpoint")->required();
  syn->add_option("--dar", dar_path, "DAR checkpoint")->required();
  syn->add_option("--split", split_name, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  syn->add_option("--speaker", speaker, "Only this speaker (required for speaker-dependent models)");
  syn->add_option("--out", out_path, "Output directory")->required();

  // combine
  std::vector<std::string> inputs;
  auto* comb = app.add_subcommand("combine", "Combine subsystem outputs frame by frame");
  comb->add_option("--inputs", inputs, "Subsystem output directories")->required()->expected(1, -1);
  comb->add_option("--out", out_path, "Output directory")->required();

  // evaluate
  std::vector<std::string> strategy_dirs;
  auto* eval = app.add_subcommand("evaluate", "Score generated outputs against the test split");
  eval->add_option("--corpus", corpus_path, "Corpus directory")->required();
  eval->add_option("--outputs", strategy_dirs, "name=dir per strategy")->required()->expected(1, -1);
  eval->add_option("--out", out_path, "Report directory")->required();

  // ab-test
  std::string a_dir;
  std::string b_dir;
  double judge_noise = 0.5;
  std::string label;
  auto* ab = app.add_subcommand("ab-test", "Simulated forced-choice preference test");
  ab->add_option("--corpus", corpus_path, "Corpus directory")->required();
  ab->add_option("--a", a_dir, "Outputs of system A")->required();
  ab->add_option("--b", b_dir, "Outputs of system B")->required();
  ab->add_option("--label", label, "Pair label, e.g. EN-MU");
  ab->add_option("--judge-noise", judge_noise, "Standard deviation of judgement noise (dB)");
  ab->add_option("--seed", seed, "Judge seed");
  ab->add_option("--out", out_path, "Tally CSV");

  // run-plan
  std::string strategies;
  int workers = 0;
  auto* plan_cmd = app.add_subcommand("run-plan", "Run a full experiment plan");
  plan_cmd->add_option("--config", config_path, "Plan (JSON)");
  plan_cmd->add_option("--strategies", strategies, "Comma-separated strategy subset");
  plan_cmd->add_option("--seed", seed, "Plan seed")->each([&](const std::string&) { seed_given = true; });
  plan_cmd->add_option("--workers", workers, "Concurrent trainings");
  plan_cmd->add_option("--out", out_path, "Artifact directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) {
      GeneratorConfig cfg = read_config(config_path).get<GeneratorConfig>();
      if (seed_given) cfg.master_seed = seed;
      const GeneratedCorpus g = generate_corpus(cfg);
      save_corpus(g.corpus, out_path);
      std::cout << "wrote " << g.corpus.split_size(Split::Train) << " train / "
                << g.corpus.split_size(Split::Validation) << " validation / " << g.corpus.split_size(Split::Test)
                << " test utterances to " << out_path << '\n';
    } else if (*build) {
      const Corpus corpus = load_corpus(corpus_path, metadata_only);
      TrainingSetRecipe recipe;
      recipe.strategy = strategy_from_string(strategy);
      recipe.speaker = speaker;
      recipe.draws_per_speaker = draws;
      recipe.seed = seed;
      const TrainingSet set = build_training_set(corpus, recipe);
      std::cout << "strategy " << strategy << ": " << set.size() << " items\n";
      const auto counts = set.item_counts();
      for (int k = 0; k < corpus.n_speakers(); ++k)
        std::cout << "  " << corpus.speakers[k].id << " items=" << counts[k] << " unique=" << set.unique_counts[k]
                  << '\n';
      if (!out_path.empty()) save_training_set(corpus, set, out_path);
    } else if (*tr) {
      const Corpus corpus = load_corpus(corpus_path);
      const TrainingSet set = load_training_set(corpus, set_path);
      TrainingConfig cfg = read_config(config_path).get<TrainingConfig>();
      if (seed_given) cfg.init_seed = cfg.shuffle_seed = seed;
      const int codes = set.recipe.strategy == Strategy::SpeakerDependent ? 0 : corpus.n_speakers();
      const NetworkTopology topo =
          variant == "sar"
              ? NetworkTopology::sar(corpus.d_lin, codes, corpus.features.d_mgc, width_divisor)
              : NetworkTopology::dar(corpus.d_lin, codes, corpus.features.n_f0_classes(), width_divisor);
      const TrainedModel model = train(corpus, set, topo, cfg);
      save_model(model, out_path);
      write_training_log(model.log, out_path + ".log.csv");
      std::cout << "best epoch " << model.best_epoch << " of " << model.log.size() << '\n';
    } else if (*syn) {
      const Corpus corpus = load_corpus(corpus_path);
      const TrainedModel sar = load_model(sar_path);
      const TrainedModel dar = load_model(dar_path);
      const Split split = split_name == "train" ? Split::Train
                          : split_name == "validation" ? Split::Validation
                                                       : Split::Test;
      const bool speaker_dependent = sar.network.topology().n_speakers == 0;
      if (speaker_dependent && speaker.empty())
        throw ValidationError("speaker-dependent model: pass --speaker");
      UtteranceOutputs outs;
      for (int k = 0; k < corpus.n_speakers(); ++k) {
        if (!speaker.empty() && corpus.speakers[k].id != speaker) continue;
        for (const Utterance& u : corpus.utterances(split, k))
          outs.emplace(u.utt_id, synthesize(sar, dar, u.linguistic, k));
      }
      if (!speaker.empty()) corpus.speaker_index(speaker);
      write_outputs(outs, out_path);
      std::cout << "wrote " << outs.size() << " acoustic records to " << out_path << '\n';
    } else if (*comb) {
      std::vector<UtteranceOutputs> subs;
      for (const std::string& dir : inputs) subs.push_back(read_outputs(dir));
      UtteranceOutputs combined;
      for (const auto& [utt, first] : subs.front()) {
        std::vector<AcousticSequence> frames;
        for (const UtteranceOutputs& s : subs) {
          const auto it = s.find(utt);
          if (it == s.end()) throw ValidationError("utterance " + utt + " missing from a subsystem");
          frames.push_back(it->second);
        }
        combined.emplace(utt, combine_sequences(frames));
      }
      write_outputs(combined, out_path);
      std::cout << "combined " << combined.size() << " utterances from " << subs.size() << " subsystems\n";
    } else if (*eval) {
      const Corpus corpus = load_corpus(corpus_path);
      StrategyOutputs outputs;
      for (const std::string& spec : strategy_dirs) {
        auto [name, dir] = named_dir(spec);
        outputs.emplace_back(name, read_outputs(dir));
      }
      const MetricReport report = build_metric_report(corpus, outputs);
      std::filesystem::create_directories(out_path);
      report.write_csv(std::filesystem::path(out_path) / "metrics.csv");
      report.write_plot_data(out_path);
      std::ofstream(std::filesystem::path(out_path) / "summary.json") << report.summary().dump(1) << '\n';
      for (const MetricRow& r : report.rows)
        if (r.speaker == kOverallRow)
          std::cout << r.strategy << ": MCD " << r.mcd_db << " dB, V/UV error " << r.vuv_error_rate << '\n';
    } else if (*ab) {
      const Corpus corpus = load_corpus(corpus_path);
      if (label.empty()) label = "A-B";
      const PreferenceTally tally =
          simulate_preference(corpus, read_outputs(a_dir), read_outputs(b_dir), label, judge_noise, seed);
      if (!out_path.empty()) tally.write_csv(out_path);
      const PreferenceCounts all = tally.overall();
      std::cout << label << ": " << all.wins_a << " vs " << all.wins_b << ", p = " << all.p_value() << '\n';
    } else if (*plan_cmd) {
      ExperimentPlan plan = read_config(config_path).get<ExperimentPlan>();
      if (!strategies.empty()) plan.strategies = split_list(strategies);
      if (seed_given) plan.seed = seed;
      if (workers > 0) plan.workers = workers;
      if (!out_path.empty()) plan.out = out_path;
      const RunResult result = run(plan);
      for (const MetricRow& r : result.report.rows)
        if (r.speaker == kOverallRow)
          std::cout << r.strategy << ": MCD " << r.mcd_db << " dB\n";
      if (result.ensemble_contraction)
        std::cout << "ensemble contraction " << (*result.ensemble_contraction ? "holds" : "VIOLATED") << '\n';
      std::cout << "artifacts in " << plan.out.string() << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

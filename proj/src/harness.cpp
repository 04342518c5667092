#include "spkbal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "spkbal/ensemble.hpp"

namespace spkbal {

namespace {

bool is_bootstrap(std::string_view s) { return s == "E1" || s == "E2" || s == "E3"; }

std::uint64_t mix(std::uint64_t seed, std::string_view tag) {
  return fnv1a(tag, fnv1a(std::to_string(seed)));
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

void write_json_file(const std::filesystem::path& file, const nlohmann::json& j) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << j.dump(1) << '\n';
}

}  // namespace

void ExperimentPlan::validate() const {
  if (strategies.empty()) throw ValidationError("plan: no strategies");
  std::set<std::string> seen;
  for (const std::string& s : strategies) {
    if (std::find(kAllStrategies.begin(), kAllStrategies.end(), s) == kAllStrategies.end())
      throw ValidationError("plan: unknown strategy '" + s + "'");
    if (!seen.insert(s).second) throw ValidationError("plan: strategy '" + s + "' listed twice");
  }
  if (has("EN") && !(has("E1") && has("E2") && has("E3")))
    throw ValidationError("plan: EN requires E1, E2 and E3");
  if (width_divisor < 1) throw ValidationError("plan: width_divisor must be >= 1");
  if (bootstrap_draws < 1) throw ValidationError("plan: bootstrap_draws must be >= 1");
  if (workers < 1) throw ValidationError("plan: workers must be >= 1");
  if (judge_noise < 0.0) throw ValidationError("plan: judge_noise must be >= 0");
  for (const auto& [a, b] : ab_pairs)
    if (std::find(kAllStrategies.begin(), kAllStrategies.end(), a) == kAllStrategies.end() ||
        std::find(kAllStrategies.begin(), kAllStrategies.end(), b) == kAllStrategies.end())
      throw ValidationError("plan: unknown strategy in AB pair " + a + "-" + b);
  training.validate();
  if (corpus_path.empty()) generator.validate();
}

bool ExperimentPlan::has(std::string_view strategy) const {
  return std::find(strategies.begin(), strategies.end(), strategy) != strategies.end();
}

std::uint64_t ExperimentPlan::config_hash() const {
  nlohmann::json j = *this;
  j.erase("out");
  j.erase("workers");
  return fnv1a(j.dump());
}

void to_json(nlohmann::json& j, const ExperimentPlan& p) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : p.ab_pairs) pairs.push_back(a + "-" + b);
  j = nlohmann::json{{"strategies", p.strategies},
                     {"width_divisor", p.width_divisor},
                     {"feedback_embed_dim", p.feedback_embed_dim},
                     {"training", p.training},
                     {"bootstrap_draws", p.bootstrap_draws},
                     {"seed", p.seed},
                     {"ab_pairs", pairs},
                     {"judge_noise", p.judge_noise},
                     {"out", p.out.string()},
                     {"workers", p.workers}};
  if (p.corpus_path.empty()) j["generator"] = p.generator;
  else j["corpus_path"] = p.corpus_path.string();
}

void from_json(const nlohmann::json& j, ExperimentPlan& p) {
  const ExperimentPlan d;
  p.generator = j.value("generator", d.generator);
  p.corpus_path = j.value("corpus_path", std::string{});
  p.strategies = j.value("strategies", d.strategies);
  p.width_divisor = j.value("width_divisor", d.width_divisor);
  p.feedback_embed_dim = j.value("feedback_embed_dim", d.feedback_embed_dim);
  p.training = j.value("training", d.training);
  p.bootstrap_draws = j.value("bootstrap_draws", d.bootstrap_draws);
  p.seed = j.value("seed", d.seed);
  p.judge_noise = j.value("judge_noise", d.judge_noise);
  p.out = j.value("out", d.out.string());
  p.workers = j.value("workers", d.workers);
  if (j.contains("ab_pairs")) {
    p.ab_pairs.clear();
    for (const auto& s : j.at("ab_pairs")) {
      const std::string pair = s.get<std::string>();
      const auto dash = pair.find('-');
      if (dash == std::string::npos) throw ValidationError("AB pair '" + pair + "' is not of the form A-B");
      p.ab_pairs.emplace_back(pair.substr(0, dash), pair.substr(dash + 1));
    }
  }
}

TrainingSetRecipe plan_recipe(const ExperimentPlan& plan, std::string_view strategy, std::string_view speaker) {
  TrainingSetRecipe r;
  r.seed = mix(plan.seed, strategy);
  if (strategy == "SD") {
    r.strategy = Strategy::SpeakerDependent;
    r.speaker = std::string(speaker);
    r.seed = 0;
  } else if (strategy == "UN") {
    r.strategy = Strategy::Undersampled;
  } else if (strategy == "MU") {
    r.strategy = Strategy::Pooled;
    r.seed = 0;
  } else if (strategy == "OV") {
    r.strategy = Strategy::Oversampled;
  } else if (is_bootstrap(strategy)) {
    r.strategy = Strategy::Bootstrap;
    r.draws_per_speaker = plan.bootstrap_draws;
  } else {
    throw ValidationError("strategy '" + std::string(strategy) + "' has no training set");
  }
  return r;
}

double contraction_violation(const std::vector<AcousticSequence>& subsystems, const AcousticSequence& combined,
                             const AcousticSequence& reference) {
  if (subsystems.empty()) throw ValidationError("contraction check needs subsystems");
  Vector mean_error = Vector::Zero(reference.n_frames());
  for (const AcousticSequence& s : subsystems) mean_error += frame_mcd(s.mgc, reference.mgc);
  mean_error /= static_cast<double>(subsystems.size());
  return (frame_mcd(combined.mgc, reference.mgc) - mean_error).maxCoeff();
}

namespace {

struct ModelJob {
  std::string key;       // "MU", "E2", "SD_XS01", ...
  std::string strategy;  // plan strategy name
  std::string speaker;   // SD only
  TrainingSetRecipe recipe;
};

class StateFile {
 public:
  StateFile(std::filesystem::path file, std::uint64_t hash) : file_(std::move(file)), hash_(hex64(hash)) {
    std::ifstream in(file_);
    if (!in) return;
    try {
      const nlohmann::json j = nlohmann::json::parse(in);
      if (j.value("config_hash", "") == hash_)
        for (const auto& k : j.at("completed")) completed_.insert(k.get<std::string>());
    } catch (const nlohmann::json::exception&) {
      completed_.clear();
    }
  }

  bool done(const std::string& key) const {
    std::lock_guard lock(mutex_);
    return completed_.contains(key);
  }

  void mark(const std::string& key, std::string_view phase) {
    std::lock_guard lock(mutex_);
    completed_.insert(key);
    save(phase);
  }

  void save(std::string_view phase) const {
    nlohmann::json j{{"config_hash", hash_}, {"phase", phase}, {"completed", completed_}};
    write_json_file(file_, j);
  }

 private:
  std::filesystem::path file_;
  std::string hash_;
  std::set<std::string> completed_;
  mutable std::mutex mutex_;
};

// Runs jobs on up to `workers` threads; the first failure stops new jobs and is rethrown.
template <typename Job, typename Fn>
void run_pool(const std::vector<Job>& jobs, int workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size() && !failed; i = next++) {
      try {
        fn(jobs[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
}

std::string model_path(const std::string& key, Variant v) {
  return "models/" + key + "_" + (v == Variant::SAR ? "sar" : "dar") + ".ckpt";
}

}  // namespace

RunResult run(const ExperimentPlan& plan) {
  plan.validate();
  const std::filesystem::path out = plan.out;
  std::filesystem::create_directories(out / "models");
  std::filesystem::create_directories(out / "outputs");
  std::filesystem::create_directories(out / "reports");
  const std::uint64_t hash = plan.config_hash();
  write_json_file(out / "resolved_config.json", plan);

  Corpus corpus;
  if (plan.corpus_path.empty()) {
    corpus = generate_corpus(plan.generator).corpus;
    if (!std::filesystem::exists(out / "corpus" / "manifest.json")) save_corpus(corpus, out / "corpus");
  } else {
    corpus = load_corpus(plan.corpus_path);
  }

  std::vector<ModelJob> jobs;
  for (const std::string& s : plan.strategies) {
    if (s == "EN") continue;
    if (s == "SD") {
      for (const Speaker& spk : corpus.speakers)
        jobs.push_back({"SD_" + spk.id, s, spk.id, plan_recipe(plan, s, spk.id)});
    } else {
      jobs.push_back({s, s, {}, plan_recipe(plan, s)});
    }
  }

  // Training-set statistics and per-model seeds, recorded before any training.
  nlohmann::json manifest;
  manifest["config_hash"] = hex64(hash);
  manifest["plan"] = plan;
  manifest["corpus_fingerprint"] = hex64(corpus.fingerprint());
  std::map<std::string, TrainingSet> sets;
  for (const ModelJob& job : jobs) {
    TrainingSet set = build_training_set(corpus, job.recipe);
    nlohmann::json unique = nlohmann::json::object();
    for (int k = 0; k < corpus.n_speakers(); ++k)
      if (set.unique_counts[k] > 0) unique[corpus.speakers[k].id] = set.unique_counts[k];
    manifest["models"][job.key] = {{"recipe", job.recipe},
                                   {"training_set_size", set.size()},
                                   {"unique_counts", unique},
                                   {"init_seed", mix(plan.training.init_seed, job.key)},
                                   {"shuffle_seed", mix(plan.training.shuffle_seed, job.key)}};
    sets.emplace(job.key, std::move(set));
  }
  if (plan.has("E1") && plan.has("E2") && plan.has("E3")) {
    const std::vector<TrainingSet> boot = {sets.at("E1"), sets.at("E2"), sets.at("E3")};
    const std::vector<std::size_t> u = union_unique(boot);
    for (int k = 0; k < corpus.n_speakers(); ++k) manifest["ensemble_unique_counts"][corpus.speakers[k].id] = u[k];
  }
  write_json_file(out / "manifest.json", manifest);

  StateFile state(out / "state.json", hash);
  state.save("training");
  run_pool(jobs, plan.workers, [&](const ModelJob& job) {
    if (state.done(job.key) && std::filesystem::exists(out / model_path(job.key, Variant::SAR)) &&
        std::filesystem::exists(out / model_path(job.key, Variant::DAR)))
      return;
    const int n_codes = job.strategy == "SD" ? 0 : corpus.n_speakers();
    TrainingConfig cfg = plan.training;
    cfg.init_seed = mix(plan.training.init_seed, job.key);
    cfg.shuffle_seed = mix(plan.training.shuffle_seed, job.key);
    const TrainingSet& set = sets.at(job.key);
    for (Variant v : {Variant::SAR, Variant::DAR}) {
      NetworkTopology topo =
          v == Variant::SAR
              ? NetworkTopology::sar(corpus.d_lin, n_codes, corpus.features.d_mgc, plan.width_divisor)
              : NetworkTopology::dar(corpus.d_lin, n_codes, corpus.features.n_f0_classes(), plan.width_divisor);
      topo.feedback_embed_dim = plan.feedback_embed_dim;
      const TrainedModel model = train(corpus, set, topo, cfg);
      const std::string path = model_path(job.key, v);
      save_model(model, out / path);
      write_training_log(model.log, out / (path.substr(0, path.size() - 5) + ".log.csv"));
    }
    state.mark(job.key, "training");
  });

  // Synthesis always reads the stored checkpoints so fresh and resumed runs agree.
  std::map<std::string, std::pair<TrainedModel, TrainedModel>> models;
  for (const ModelJob& job : jobs)
    models.emplace(job.key, std::pair{load_model(out / model_path(job.key, Variant::SAR)),
                                      load_model(out / model_path(job.key, Variant::DAR))});

  StrategyOutputs outputs;
  for (const std::string& s : plan.strategies) {
    if (s == "EN") continue;
    UtteranceOutputs outs;
    for (int k = 0; k < corpus.n_speakers(); ++k) {
      const auto& [sar, dar] = models.at(s == "SD" ? "SD_" + corpus.speakers[k].id : s);
      for (const Utterance& u : corpus.utterances(Split::Test, k))
        outs.emplace(u.utt_id, synthesize(sar, dar, u.linguistic, k));
    }
    outputs.emplace_back(s, std::move(outs));
  }

  RunResult result;
  if (plan.has("EN")) {
    const auto find = [&](std::string_view name) -> const UtteranceOutputs& {
      for (const auto& [s, o] : outputs)
        if (s == name) return o;
      throw Error("missing outputs for " + std::string(name));
    };
    const UtteranceOutputs& e1 = find("E1");
    const UtteranceOutputs& e2 = find("E2");
    const UtteranceOutputs& e3 = find("E3");
    UtteranceOutputs en;
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < corpus.n_speakers(); ++k) {
      for (const Utterance& u : corpus.utterances(Split::Test, k)) {
        const std::vector<AcousticSequence> subs = {e1.at(u.utt_id), e2.at(u.utt_id), e3.at(u.utt_id)};
        AcousticSequence combined = combine_sequences(subs);
        worst = std::max(worst, contraction_violation(subs, combined, u.acoustic));
        en.emplace(u.utt_id, std::move(combined));
      }
    }
    result.ensemble_contraction = worst <= 1e-12;
    // Keep EN in plan order.
    const auto pos = std::find(plan.strategies.begin(), plan.strategies.end(), "EN") - plan.strategies.begin();
    std::size_t insert_at = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const auto p = std::find(plan.strategies.begin(), plan.strategies.end(), outputs[i].first) -
                     plan.strategies.begin();
      if (p < pos) insert_at = i + 1;
    }
    outputs.insert(outputs.begin() + static_cast<std::ptrdiff_t>(insert_at), {"EN", std::move(en)});
  }

  for (const auto& [s, outs] : outputs) {
    std::filesystem::create_directories(out / "outputs" / s);
    for (const auto& [utt, seq] : outs) write_acoustic(out / "outputs" / s / (utt + ".rec"), seq);
  }

  result.report = build_metric_report(corpus, outputs);
  result.report.write_csv(out / "reports" / "metrics.csv");
  result.report.write_plot_data(out / "reports");

  const auto outputs_of = [&](const std::string& name) -> const UtteranceOutputs* {
    for (const auto& [s, o] : outputs)
      if (s == name) return &o;
    return nullptr;
  };
  nlohmann::json prefs = nlohmann::json::array();
  for (const auto& [a, b] : plan.ab_pairs) {
    const UtteranceOutputs* oa = outputs_of(a);
    const UtteranceOutputs* ob = outputs_of(b);
    if (!oa || !ob) continue;
    const std::string label = a + "-" + b;
    PreferenceTally tally = simulate_preference(corpus, *oa, *ob, label, plan.judge_noise, mix(plan.seed, label));
    tally.write_csv(out / "reports" / ("preference_" + label + ".csv"));
    prefs.push_back(tally.summary());
    result.preferences.push_back(std::move(tally));
  }

  nlohmann::json summary{{"config_hash", hex64(hash)}, {"metrics", result.report.summary()}, {"preferences", prefs}};
  if (result.ensemble_contraction) summary["ensemble_contraction_holds"] = *result.ensemble_contraction;
  write_json_file(out / "reports" / "summary.json", summary);
  state.save("done");
  result.manifest = std::move(manifest);
  return result;
}

}  // namespace spkbal

#include "spkbal/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace spkbal {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

const std::vector<Utterance>& Corpus::utterances(Split split, int speaker) const {
  return splits.at(static_cast<std::size_t>(split)).at(static_cast<std::size_t>(speaker));
}

std::vector<Utterance>& Corpus::utterances(Split split, int speaker) {
  return splits.at(static_cast<std::size_t>(split)).at(static_cast<std::size_t>(speaker));
}

int Corpus::speaker_index(std::string_view id) const {
  for (int k = 0; k < n_speakers(); ++k)
    if (speakers[k].id == id) return k;
  throw ValidationError("unknown speaker '" + std::string(id) + "'");
}

std::size_t Corpus::split_size(Split split) const {
  std::size_t n = 0;
  for (const auto& list : splits[static_cast<std::size_t>(split)]) n += list.size();
  return n;
}

std::uint64_t Corpus::fingerprint() const {
  std::uint64_t h = fnv1a("spkbal-corpus");
  for (int k = 0; k < n_speakers(); ++k) {
    h = fnv1a(speakers[k].id, h);
    h = fnv1a("\n", h);
    for (const Utterance& u : utterances(Split::Train, k)) {
      h = fnv1a(u.utt_id, h);
      h = fnv1a("\t", h);
    }
  }
  return h;
}

void Corpus::reset_splits() {
  for (auto& split : splits) split.assign(speakers.size(), {});
}

void Corpus::validate() const {
  if (speakers.empty()) throw ValidationError("corpus has no speakers");
  std::set<std::string> ids;
  std::vector<int> ranks;
  for (const Speaker& s : speakers) {
    if (!ids.insert(s.id).second) throw ValidationError("duplicate speaker id '" + s.id + "'");
    ranks.push_back(s.display_rank);
  }
  std::sort(ranks.begin(), ranks.end());
  for (int i = 0; i < n_speakers(); ++i)
    if (ranks[i] != i) throw ValidationError("speaker display ranks are not a permutation");
  features.validate();

  std::set<std::string> utt_ids;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    if (splits[s].size() != speakers.size())
      throw ValidationError("split table does not match the speaker count");
    for (int k = 0; k < n_speakers(); ++k) {
      for (const Utterance& u : splits[s][k]) {
        if (!utt_ids.insert(u.utt_id).second)
          throw ValidationError("utterance id '" + u.utt_id + "' appears more than once");
        if (u.speaker != k)
          throw ValidationError("utterance '" + u.utt_id + "' filed under the wrong speaker");
        if (metadata_only) continue;
        if (u.n_frames() < 1) throw ValidationError("utterance '" + u.utt_id + "' has no frames");
        if (u.linguistic.rows() != d_lin)
          throw ValidationError("utterance '" + u.utt_id + "' has wrong linguistic dimension");
        if (u.acoustic.n_frames() != u.n_frames() ||
            static_cast<Index>(u.acoustic.f0.size()) != u.n_frames())
          throw ValidationError("utterance '" + u.utt_id + "' has misaligned acoustic frames");
        if (u.acoustic.mgc.rows() != features.d_mgc)
          throw ValidationError("utterance '" + u.utt_id + "' has wrong spectral dimension");
      }
    }
  }
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::SpeakerDependent: return "SD";
    case Strategy::Undersampled: return "UN";
    case Strategy::Pooled: return "MU";
    case Strategy::Oversampled: return "OV";
    case Strategy::Bootstrap: return "BOOTSTRAP";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "SD") return Strategy::SpeakerDependent;
  if (s == "UN") return Strategy::Undersampled;
  if (s == "MU") return Strategy::Pooled;
  if (s == "OV") return Strategy::Oversampled;
  if (s == "BOOTSTRAP") return Strategy::Bootstrap;
  throw ValidationError("unknown strategy '" + std::string(s) + "'");
}

void TrainingSetRecipe::validate(const Corpus& corpus) const {
  if (strategy == Strategy::SpeakerDependent) corpus.speaker_index(speaker);
  if (strategy == Strategy::Bootstrap && draws_per_speaker < 1)
    throw ValidationError("bootstrap needs draws_per_speaker >= 1");
}

void to_json(nlohmann::json& j, const TrainingSetRecipe& r) {
  j = nlohmann::json{{"strategy", to_string(r.strategy)}, {"seed", r.seed}};
  if (r.strategy == Strategy::SpeakerDependent) j["speaker"] = r.speaker;
  if (r.strategy == Strategy::Bootstrap) j["draws_per_speaker"] = r.draws_per_speaker;
}

void from_json(const nlohmann::json& j, TrainingSetRecipe& r) {
  r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  r.seed = j.value("seed", std::uint64_t{0});
  r.speaker = j.value("speaker", std::string{});
  r.draws_per_speaker = j.value("draws_per_speaker", std::size_t{3000});
}

std::vector<std::size_t> TrainingSet::item_counts() const {
  std::vector<std::size_t> counts(unique_counts.size(), 0);
  for (const UtteranceRef& r : items) ++counts.at(static_cast<std::size_t>(r.speaker));
  return counts;
}

namespace {

// Independent stream per (seed, speaker, purpose).
std::mt19937_64 speaker_rng(std::uint64_t seed, int speaker, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(speaker), purpose};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kUndersample = 0x554e;
constexpr std::uint32_t kOversample = 0x4f56;
constexpr std::uint32_t kBootstrap = 0x4253;

TrainingSet empty_set(const Corpus& corpus, TrainingSetRecipe recipe) {
  TrainingSet set;
  set.recipe = std::move(recipe);
  set.corpus_fingerprint = corpus.fingerprint();
  set.unique_counts.assign(corpus.speakers.size(), 0);
  return set;
}

void finish_unique_counts(TrainingSet& set) {
  std::vector<UtteranceRef> distinct = set.items;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::fill(set.unique_counts.begin(), set.unique_counts.end(), 0);
  for (const UtteranceRef& r : distinct) ++set.unique_counts[static_cast<std::size_t>(r.speaker)];
}

std::size_t train_size(const Corpus& corpus, int k) {
  return corpus.utterances(Split::Train, k).size();
}

void require_nonempty_train(const Corpus& corpus) {
  if (corpus.speakers.empty()) throw ValidationError("empty corpus");
  for (int k = 0; k < corpus.n_speakers(); ++k)
    if (train_size(corpus, k) == 0)
      throw ValidationError("empty training data for speaker '" + corpus.speakers[k].id + "'");
}

std::vector<int> iota_indices(std::size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TrainingSet build_sd(const Corpus& corpus, std::string_view speaker) {
  const int k = corpus.speaker_index(speaker);
  const std::size_t n = train_size(corpus, k);
  if (n == 0) throw ValidationError("empty training data for speaker '" + std::string(speaker) + "'");
  TrainingSetRecipe recipe;
  recipe.strategy = Strategy::SpeakerDependent;
  recipe.speaker = std::string(speaker);
  TrainingSet set = empty_set(corpus, recipe);
  for (int i : iota_indices(n)) set.items.push_back({k, i});
  set.unique_counts[k] = n;
  return set;
}

TrainingSet build_undersampled(const Corpus& corpus, std::uint64_t seed) {
  require_nonempty_train(corpus);
  std::size_t m = train_size(corpus, 0);
  for (int k = 1; k < corpus.n_speakers(); ++k) m = std::min(m, train_size(corpus, k));

  TrainingSet set = empty_set(corpus, {Strategy::Undersampled, {}, 0, seed});
  for (int k = 0; k < corpus.n_speakers(); ++k) {
    std::vector<int> idx = iota_indices(train_size(corpus, k));
    auto rng = speaker_rng(seed, k, kUndersample);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    for (int i : idx) set.items.push_back({k, i});
  }
  finish_unique_counts(set);
  return set;
}

TrainingSet build_pooled(const Corpus& corpus) {
  TrainingSet set = empty_set(corpus, {Strategy::Pooled, {}, 0, 0});
  for (int k = 0; k < corpus.n_speakers(); ++k) {
    for (int i : iota_indices(train_size(corpus, k))) set.items.push_back({k, i});
    set.unique_counts[k] = train_size(corpus, k);
  }
  return set;
}

TrainingSet build_oversampled(const Corpus& corpus, std::uint64_t seed) {
  require_nonempty_train(corpus);
  std::size_t target = 0;
  for (int k = 0; k < corpus.n_speakers(); ++k) target = std::max(target, train_size(corpus, k));

  TrainingSet set = empty_set(corpus, {Strategy::Oversampled, {}, 0, seed});
  for (int k = 0; k < corpus.n_speakers(); ++k) {
    const std::size_t n = train_size(corpus, k);
    const std::vector<int> all = iota_indices(n);
    for (std::size_t rep = 0; rep < target / n; ++rep)
      for (int i : all) set.items.push_back({k, i});
    std::vector<int> extra = all;
    auto rng = speaker_rng(seed, k, kOversample);
    std::shuffle(extra.begin(), extra.end(), rng);
    extra.resize(target % n);
    std::sort(extra.begin(), extra.end());
    for (int i : extra) set.items.push_back({k, i});
  }
  finish_unique_counts(set);
  return set;
}

TrainingSet build_bootstrap(const Corpus& corpus, std::size_t draws_per_speaker,
                            std::uint64_t seed) {
  if (draws_per_speaker < 1) throw ValidationError("bootstrap needs draws_per_speaker >= 1");
  require_nonempty_train(corpus);
  TrainingSet set = empty_set(corpus, {Strategy::Bootstrap, {}, draws_per_speaker, seed});
  set.items.reserve(draws_per_speaker * corpus.speakers.size());
  for (int k = 0; k < corpus.n_speakers(); ++k) {
    auto rng = speaker_rng(seed, k, kBootstrap);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(train_size(corpus, k)) - 1);
    for (std::size_t d = 0; d < draws_per_speaker; ++d) set.items.push_back({k, pick(rng)});
  }
  finish_unique_counts(set);
  return set;
}

TrainingSet build_training_set(const Corpus& corpus, const TrainingSetRecipe& recipe) {
  recipe.validate(corpus);
  TrainingSet set;
  switch (recipe.strategy) {
    case Strategy::SpeakerDependent: set = build_sd(corpus, recipe.speaker); break;
    case Strategy::Undersampled: set = build_undersampled(corpus, recipe.seed); break;
    case Strategy::Pooled: set = build_pooled(corpus); break;
    case Strategy::Oversampled: set = build_oversampled(corpus, recipe.seed); break;
    case Strategy::Bootstrap:
      set = build_bootstrap(corpus, recipe.draws_per_speaker, recipe.seed);
      break;
  }
  set.recipe = recipe;
  return set;
}

std::vector<std::size_t> union_unique(std::span<const TrainingSet> sets) {
  if (sets.empty()) return {};
  const TrainingSet& first = sets.front();
  std::vector<UtteranceRef> all;
  for (const TrainingSet& s : sets) {
    if (s.corpus_fingerprint != first.corpus_fingerprint ||
        s.unique_counts.size() != first.unique_counts.size())
      throw ValidationError("union_unique: training sets reference different corpora");
    all.insert(all.end(), s.items.begin(), s.items.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<std::size_t> counts(first.unique_counts.size(), 0);
  for (const UtteranceRef& r : all) ++counts[static_cast<std::size_t>(r.speaker)];
  return counts;
}

}  // namespace spkbal

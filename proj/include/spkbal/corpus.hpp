#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spkbal/common.hpp"
#include "spkbal/features.hpp"

namespace spkbal {

struct Speaker {
  std::string id;
  int display_rank = 0;  // position when speakers are ordered by training-set size
};

/// One aligned utterance. Linguistic frames are the columns of `linguistic`
/// (d_lin x n_frames); the acoustic sequence has the same number of frames.
/// A metadata-only corpus leaves both empty.
struct Utterance {
  std::string utt_id;
  int speaker = 0;
  Matrix linguistic;
  AcousticSequence acoustic;

  Index n_frames() const { return linguistic.cols(); }
};

enum class Split { Train = 0, Validation = 1, Test = 2 };

std::string_view to_string(Split split);

class Corpus {
 public:
  std::vector<Speaker> speakers;
  FeatureConfig features;
  int d_lin = 0;
  bool metadata_only = false;

  /// splits[split][speaker] -> utterances of that speaker in that split.
  std::array<std::vector<std::vector<Utterance>>, 3> splits;

  int n_speakers() const { return static_cast<int>(speakers.size()); }
  const std::vector<Utterance>& utterances(Split split, int speaker) const;
  std::vector<Utterance>& utterances(Split split, int speaker);

  /// Throws ValidationError naming the id when absent.
  int speaker_index(std::string_view id) const;

  std::size_t split_size(Split split) const;

  /// Identity of speaker ids and train-split utterance ids.
  std::uint64_t fingerprint() const;

  /// Resizes every split to hold n_speakers() lists.
  void reset_splits();
  void validate() const;
};

enum class Strategy { SpeakerDependent, Undersampled, Pooled, Oversampled, Bootstrap };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct TrainingSetRecipe {
  Strategy strategy = Strategy::Pooled;
  std::string speaker;                  // SpeakerDependent only
  std::size_t draws_per_speaker = 3000;  // Bootstrap only
  std::uint64_t seed = 0;

  void validate(const Corpus& corpus) const;
};

void to_json(nlohmann::json& j, const TrainingSetRecipe& r);
void from_json(const nlohmann::json& j, TrainingSetRecipe& r);

/// Reference into the train split: corpus.utterances(Split::Train, speaker)[index].
struct UtteranceRef {
  int speaker = 0;
  int index = 0;

  friend bool operator==(const UtteranceRef&, const UtteranceRef&) = default;
  friend auto operator<=>(const UtteranceRef&, const UtteranceRef&) = default;
};

struct TrainingSet {
  TrainingSetRecipe recipe;
  std::uint64_t corpus_fingerprint = 0;
  std::vector<UtteranceRef> items;         // multiset, duplicates allowed
  std::vector<std::size_t> unique_counts;  // per speaker, distinct utterances in items

  std::size_t size() const { return items.size(); }
  std::vector<std::size_t> item_counts() const;  // per speaker, with multiplicity
};

TrainingSet build_sd(const Corpus& corpus, std::string_view speaker);
TrainingSet build_undersampled(const Corpus& corpus, std::uint64_t seed);
TrainingSet build_pooled(const Corpus& corpus);
TrainingSet build_oversampled(const Corpus& corpus, std::uint64_t seed);
TrainingSet build_bootstrap(const Corpus& corpus, std::size_t draws_per_speaker,
                            std::uint64_t seed);
TrainingSet build_training_set(const Corpus& corpus, const TrainingSetRecipe& recipe);

/// Per speaker, number of utterances appearing in at least one of the sets.
std::vector<std::size_t> union_unique(std::span<const TrainingSet> sets);

// Corpus directory I/O (see docs/FORMATS.md).
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir, bool metadata_only = false);

void save_training_set(const Corpus& corpus, const TrainingSet& set,
                       const std::filesystem::path& file);
TrainingSet load_training_set(const Corpus& corpus, const std::filesystem::path& file);

// Record files: one utterance, or one acoustic sequence (d_lin = 0).
void write_record(const std::filesystem::path& file, const Matrix& linguistic,
                  const AcousticSequence& acoustic);
void read_record(const std::filesystem::path& file, Matrix& linguistic, AcousticSequence& acoustic);
void write_acoustic(const std::filesystem::path& file, const AcousticSequence& acoustic);
AcousticSequence read_acoustic(const std::filesystem::path& file);

}  // namespace spkbal

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spkbal/acoustic_model.hpp"
#include "spkbal/corpus.hpp"

namespace spkbal {

/// Plain SGD, one utterance per step, early stopping on validation loss.
struct TrainingConfig {
  double learning_rate = 0.01;
  int n_epochs = 20;
  int early_stop_patience = 3;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t init_seed = 0;
  /// DAR only: feed back reference classes (true) or the model's own argmax (false).
  bool teacher_forcing = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainedModel {
  AcousticNetwork<double> network;
  TrainingSetRecipe recipe;
  FeatureConfig features;
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0: the initial parameters were kept
};

TrainedModel train(const Corpus& corpus, const TrainingSet& set, const NetworkTopology& topology,
                   const TrainingConfig& config);

/// Loss of one utterance under the model's variant (teacher-forced for DAR).
double utterance_loss(const AcousticNetwork<double>& net, const Utterance& utt, const FeatureConfig& features);

/// Spectral frames predicted by a SAR model.
Matrix predict_spectra(const TrainedModel& sar, const Matrix& linguistic, int speaker);

/// F0 track from a free-running DAR model, dequantized at bin midpoints.
std::vector<F0> predict_f0(const TrainedModel& dar, const Matrix& linguistic, int speaker);

AcousticSequence synthesize(const TrainedModel& sar, const TrainedModel& dar, const Matrix& linguistic,
                            int speaker);

// Checkpoints: versioned binary container (see docs/FORMATS.md).
void save_model(const TrainedModel& model, const std::filesystem::path& file);
TrainedModel load_model(const std::filesystem::path& file);
void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& file);

}  // namespace spkbal

#include "spkbal/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

namespace spkbal {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("training: learning_rate must be > 0");
  if (n_epochs < 0) throw ValidationError("training: n_epochs must be >= 0");
  if (early_stop_patience < 1) throw ValidationError("training: early_stop_patience must be >= 1");
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"n_epochs", c.n_epochs},
                     {"early_stop_patience", c.early_stop_patience},
                     {"shuffle_seed", c.shuffle_seed},
                     {"init_seed", c.init_seed},
                     {"teacher_forcing", c.teacher_forcing}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  const TrainingConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.n_epochs = j.value("n_epochs", d.n_epochs);
  c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
  c.shuffle_seed = j.value("shuffle_seed", d.shuffle_seed);
  c.init_seed = j.value("init_seed", d.init_seed);
  c.teacher_forcing = j.value("teacher_forcing", d.teacher_forcing);
}

namespace {

int code_for(const NetworkTopology& topo, int speaker) { return topo.n_speakers > 0 ? speaker : 0; }

GradientResult<double> utterance_gradient(const AcousticNetwork<double>& net, const Utterance& utt,
                                          const FeatureConfig& features, FeedbackMode mode) {
  const int code = code_for(net.topology(), utt.speaker);
  if (net.topology().variant == Variant::SAR)
    return sar_gradient(net, utt.linguistic, code, utt.acoustic.mgc);
  const std::vector<int> classes = quantize_track(utt.acoustic.f0, features);
  return dar_gradient(net, utt.linguistic, code, std::span<const int>(classes), mode);
}

}  // namespace

double utterance_loss(const AcousticNetwork<double>& net, const Utterance& utt, const FeatureConfig& features) {
  const int code = code_for(net.topology(), utt.speaker);
  if (net.topology().variant == Variant::SAR) return sar_loss(net, utt.linguistic, code, utt.acoustic.mgc);
  const std::vector<int> classes = quantize_track(utt.acoustic.f0, features);
  return dar_loss(net, utt.linguistic, code, std::span<const int>(classes));
}

TrainedModel train(const Corpus& corpus, const TrainingSet& set, const NetworkTopology& topology,
                   const TrainingConfig& config) {
  config.validate();
  topology.validate();
  if (set.items.empty()) throw ValidationError("train: empty training set");
  if (corpus.metadata_only) throw ValidationError("train: corpus has no frames loaded");
  if (set.corpus_fingerprint != corpus.fingerprint())
    throw ValidationError("train: training set was built from a different corpus");
  if (topology.n_speakers > 0 && topology.n_speakers != corpus.n_speakers())
    throw ValidationError("train: topology speaker count differs from the corpus");
  if (topology.input_dim != corpus.d_lin) throw ValidationError("train: input_dim differs from corpus d_lin");
  const int expected_out =
      topology.variant == Variant::SAR ? corpus.features.d_mgc : corpus.features.n_f0_classes();
  if (topology.output_dim != expected_out) throw ValidationError("train: output_dim does not match features");

  TrainedModel model{AcousticNetwork<double>(topology), set.recipe, corpus.features, {}, 0};
  model.network.initialize(config.init_seed);
  if (config.n_epochs == 0) return model;

  std::vector<const Utterance*> validation;
  for (int k = 0; k < corpus.n_speakers(); ++k) {
    if (set.unique_counts.at(k) == 0) continue;
    for (const Utterance& u : corpus.utterances(Split::Validation, k)) validation.push_back(&u);
  }

  const FeedbackMode mode = config.teacher_forcing ? FeedbackMode::TeacherForced : FeedbackMode::FreeRunning;
  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<UtteranceRef> order = set.items;
  VectorX<double> best = model.network.parameters();
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= config.n_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_total = 0.0;
    for (const UtteranceRef& ref : order) {
      const Utterance& utt = corpus.utterances(Split::Train, ref.speaker).at(ref.index);
      GradientResult<double> g = utterance_gradient(model.network, utt, corpus.features, mode);
      if (!std::isfinite(g.loss) || !g.gradient.allFinite())
        throw Error("training diverged at epoch " + std::to_string(epoch));
      model.network.parameters() -= config.learning_rate * g.gradient;
      train_total += g.loss;
    }
    const double train_loss = train_total / static_cast<double>(order.size());
    double val_loss = train_loss;
    if (!validation.empty()) {
      double total = 0.0;
      for (const Utterance* u : validation) total += utterance_loss(model.network, *u, corpus.features);
      val_loss = total / static_cast<double>(validation.size());
    }
    if (!std::isfinite(val_loss) || !model.network.parameters().allFinite())
      throw Error("training diverged at epoch " + std::to_string(epoch));
    model.log.push_back({epoch, train_loss, val_loss});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = model.network.parameters();
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  model.network.parameters() = best;
  return model;
}

Matrix predict_spectra(const TrainedModel& sar, const Matrix& linguistic, int speaker) {
  return forward_sar(sar.network, linguistic, code_for(sar.network.topology(), speaker));
}

std::vector<F0> predict_f0(const TrainedModel& dar, const Matrix& linguistic, int speaker) {
  const DarOutput<double> out =
      forward_dar(dar.network, linguistic, code_for(dar.network.topology(), speaker), FeedbackMode::FreeRunning);
  return dequantize_track(out.classes, dar.features);
}

AcousticSequence synthesize(const TrainedModel& sar, const TrainedModel& dar, const Matrix& linguistic,
                            int speaker) {
  return {predict_spectra(sar, linguistic, speaker), predict_f0(dar, linguistic, speaker)};
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << "epoch,train_loss,val_loss\n";
  out.precision(10);
  for (const EpochLog& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
}

}  // namespace spkbal

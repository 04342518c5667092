#include "spkbal/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace spkbal {

void GeneratorConfig::validate() const {
  if (speaker_ids.empty()) throw ValidationError("generator: no speakers");
  if (train_counts.size() != speaker_ids.size())
    throw ValidationError("generator: train_counts must have one entry per speaker");
  if (std::set<std::string>(speaker_ids.begin(), speaker_ids.end()).size() != speaker_ids.size())
    throw ValidationError("generator: duplicate speaker ids");
  for (int c : train_counts)
    if (c < 1) throw ValidationError("generator: train counts must be >= 1");
  if (val_count < 1 || test_count < 1) throw ValidationError("generator: split counts must be >= 1");
  if (d_lin < 2) throw ValidationError("generator: d_lin must be >= 2 (F0 and voicing channels)");
  if (min_frames < 1 || max_frames < min_frames)
    throw ValidationError("generator: zero frame count or empty frame range");
  if (noise_sigma < 0.0) throw ValidationError("generator: noise_sigma must be >= 0");
  if (!(smoothness >= 0.0 && smoothness < 1.0))
    throw ValidationError("generator: smoothness must be in [0, 1)");
  features.validate();
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"speaker_ids", c.speaker_ids}, {"train_counts", c.train_counts},
                     {"val_count", c.val_count},     {"test_count", c.test_count},
                     {"d_lin", c.d_lin},             {"features", c.features},
                     {"min_frames", c.min_frames},   {"max_frames", c.max_frames},
                     {"noise_sigma", c.noise_sigma}, {"speaker_spread", c.speaker_spread},
                     {"bias_scale", c.bias_scale},   {"smoothness", c.smoothness},
                     {"master_seed", c.master_seed}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  const GeneratorConfig d;
  c.speaker_ids = j.value("speaker_ids", d.speaker_ids);
  c.train_counts = j.value("train_counts", d.train_counts);
  c.val_count = j.value("val_count", d.val_count);
  c.test_count = j.value("test_count", d.test_count);
  c.d_lin = j.value("d_lin", d.d_lin);
  c.features = j.value("features", d.features);
  c.min_frames = j.value("min_frames", d.min_frames);
  c.max_frames = j.value("max_frames", d.max_frames);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.speaker_spread = j.value("speaker_spread", d.speaker_spread);
  c.bias_scale = j.value("bias_scale", d.bias_scale);
  c.smoothness = j.value("smoothness", d.smoothness);
  c.master_seed = j.value("master_seed", d.master_seed);
}

bool synth_voiced(double voicing_channel, double threshold) {
  return 1.0 / (1.0 + std::exp(-voicing_channel)) > threshold;
}

double synth_f0(const SpeakerProfile& profile, double f0_channel, Index t) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / 40.0;
  return profile.base_f0 +
         profile.f0_range * (0.5 + 0.3 * std::tanh(f0_channel) + 0.2 * std::sin(phase));
}

namespace {

std::mt19937_64 derived_rng(std::uint64_t master, std::uint32_t a, std::uint32_t b = 0,
                            std::uint32_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    a, b, c};
  return std::mt19937_64(seq);
}

// Values are rounded to float so an in-memory corpus equals its on-disk copy.
double f32(double v) { return static_cast<float>(v); }

Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

std::vector<SpeakerProfile> make_profiles(const GeneratorConfig& cfg) {
  const Index d_mgc = cfg.features.d_mgc;
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_lin));
  auto shared_rng = derived_rng(cfg.master_seed, 0x5348);
  const Matrix shared = gaussian(shared_rng, d_mgc, cfg.d_lin, w_scale);

  std::vector<SpeakerProfile> profiles;
  for (int k = 0; k < cfg.n_speakers(); ++k) {
    auto rng = derived_rng(cfg.master_seed, 0x5350, static_cast<std::uint32_t>(k));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SpeakerProfile p;
    p.base_f0 = 170.0 + 80.0 * u(rng);
    p.f0_range = 60.0 + 60.0 * u(rng);
    p.voicing_threshold = 0.3 + 0.2 * u(rng);
    p.noise_sigma = cfg.noise_sigma;
    p.spectral_transform = shared + gaussian(rng, d_mgc, cfg.d_lin, cfg.speaker_spread * w_scale);
    p.bias = gaussian(rng, d_mgc, 1, cfg.bias_scale);
    profiles.push_back(std::move(p));
  }
  return profiles;
}

Utterance make_utterance(const GeneratorConfig& cfg, const SpeakerProfile& profile, int speaker,
                         Split split, int index) {
  auto rng = derived_rng(cfg.master_seed, static_cast<std::uint32_t>(speaker) + 1,
                         static_cast<std::uint32_t>(split) + 1, static_cast<std::uint32_t>(index));
  std::uniform_int_distribution<int> length(cfg.min_frames, cfg.max_frames);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = length(rng);

  Utterance u;
  u.speaker = speaker;
  u.linguistic.resize(cfg.d_lin, n);
  // Stationary AR(1) trajectories with unit marginal variance.
  const double a = cfg.smoothness;
  const double innovation = std::sqrt(1.0 - a * a);
  Vector state(cfg.d_lin);
  for (Index i = 0; i < cfg.d_lin; ++i) state(i) = normal(rng);
  for (Index t = 0; t < n; ++t) {
    if (t > 0)
      for (Index i = 0; i < cfg.d_lin; ++i) state(i) = a * state(i) + innovation * normal(rng);
    for (Index i = 0; i < cfg.d_lin; ++i) u.linguistic(i, t) = f32(state(i));
  }

  u.acoustic.mgc = (profile.spectral_transform * u.linguistic).colwise() + profile.bias;
  if (profile.noise_sigma > 0.0) u.acoustic.mgc += gaussian(rng, cfg.features.d_mgc, n, profile.noise_sigma);
  u.acoustic.mgc = u.acoustic.mgc.unaryExpr([](double v) { return f32(v); });

  u.acoustic.f0.resize(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    if (synth_voiced(u.linguistic(kVoicingChannel, t), profile.voicing_threshold))
      u.acoustic.f0[t] = f32(synth_f0(profile, u.linguistic(kF0Channel, t), t));
  }
  return u;
}

}  // namespace

GeneratedCorpus generate_corpus(const GeneratorConfig& config) {
  config.validate();
  GeneratedCorpus out;
  out.profiles = make_profiles(config);
  Corpus& corpus = out.corpus;
  corpus.features = config.features;
  corpus.d_lin = config.d_lin;

  std::vector<int> order(config.speaker_ids.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return config.train_counts[a] < config.train_counts[b]; });
  corpus.speakers.resize(config.speaker_ids.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    corpus.speakers[order[r]] = {config.speaker_ids[order[r]], static_cast<int>(r)};
  }
  corpus.reset_splits();

  for (int k = 0; k < config.n_speakers(); ++k) {
    const std::pair<Split, int> plan[] = {{Split::Train, config.train_counts[k]},
                                          {Split::Validation, config.val_count},
                                          {Split::Test, config.test_count}};
    for (const auto& [split, count] : plan) {
      auto& list = corpus.utterances(split, k);
      for (int i = 0; i < count; ++i) {
        Utterance u = make_utterance(config, out.profiles[k], k, split, i);
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "%04d", i);
        u.utt_id = config.speaker_ids[k] + "_" + std::string(to_string(split)) + "_" + suffix;
        list.push_back(std::move(u));
      }
    }
  }
  corpus.validate();
  return out;
}

}  // namespace spkbal

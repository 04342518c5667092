#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spkbal/corpus.hpp"

namespace spkbal {

/// Ground truth of one synthetic speaker. Spectral frames are
/// `spectral_transform * x + bias + N(0, noise_sigma^2)` for linguistic frame x.
struct SpeakerProfile {
  double base_f0 = 200.0;
  double f0_range = 80.0;
  Matrix spectral_transform;  // d_mgc x d_lin
  Vector bias;                // d_mgc
  double noise_sigma = 0.1;
  double voicing_threshold = 0.4;
};

struct GeneratorConfig {
  std::vector<std::string> speaker_ids = {"XS01", "XS02", "S03", "S04", "S05",
                                          "M06",  "M07",  "M08", "L09", "XL10"};
  // Per-speaker train counts, one tenth of the reference corpus sizes.
  std::vector<int> train_counts = {74, 99, 139, 157, 175, 302, 398, 436, 552, 875};
  int val_count = 5;
  int test_count = 10;
  int d_lin = 8;
  FeatureConfig features;
  int min_frames = 20;
  int max_frames = 40;
  double noise_sigma = 0.1;
  // Scale of the per-speaker deviation from the shared spectral transform.
  double speaker_spread = 0.05;
  double bias_scale = 0.5;
  // AR(1) coefficient of the linguistic trajectories.
  double smoothness = 0.9;
  std::uint64_t master_seed = 1;

  int n_speakers() const { return static_cast<int>(speaker_ids.size()); }
  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

struct GeneratedCorpus {
  Corpus corpus;
  std::vector<SpeakerProfile> profiles;
};

// Channels of the linguistic frame that drive F0 and voicing.
inline constexpr Index kF0Channel = 0;
inline constexpr Index kVoicingChannel = 1;

/// Voicing rule shared by the generator and its checks.
bool synth_voiced(double voicing_channel, double threshold);

/// F0 contour in Hz at frame t.
double synth_f0(const SpeakerProfile& profile, double f0_channel, Index t);

GeneratedCorpus generate_corpus(const GeneratorConfig& config);

}  // namespace spkbal

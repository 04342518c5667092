#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spkbal/common.hpp"

namespace spkbal {

struct FeatureConfig {
  int d_mgc = 12;
  int n_f0_bins = 511;
  double f0_min = 50.0;
  double f0_max = 500.0;
  double frame_shift_ms = 5.0;
  double window_ms = 25.0;

  void validate() const;
  int n_f0_classes() const { return n_f0_bins + 1; }
};

void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);

/// F0 of one frame: a value in Hz when voiced, empty when unvoiced.
using F0 = std::optional<double>;

inline constexpr int kUnvoicedClass = 0;

/// Spectral frames are the columns of `mgc` (d_mgc x n_frames).
struct AcousticSequence {
  Matrix mgc;
  std::vector<F0> f0;

  Index n_frames() const { return mgc.cols(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Class 0 is unvoiced; voiced values are clamped to [f0_min, f0_max] and
/// assigned to one of n_f0_bins equal-width mel bins, classes 1..n_f0_bins.
int quantize_f0(F0 f0, const FeatureConfig& config);

/// Class 0 maps to unvoiced, class c to the Hz value of bin c's mel midpoint.
F0 dequantize_f0(int f0_class, const FeatureConfig& config);

struct HzInterval {
  double lo;
  double hi;
};

/// Hz edges of voiced class `f0_class`.
HzInterval f0_bin_edges(int f0_class, const FeatureConfig& config);

std::vector<int> quantize_track(std::span<const F0> track, const FeatureConfig& config);
std::vector<F0> dequantize_track(std::span<const int> classes, const FeatureConfig& config);

}  // namespace spkbal

#include "spkbal/features.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace spkbal {

void FeatureConfig::validate() const {
  if (d_mgc < 1) throw ValidationError("feature config: d_mgc must be >= 1");
  if (n_f0_bins < 2) throw ValidationError("feature config: n_f0_bins must be >= 2");
  if (!(f0_min > 0.0 && f0_min < f0_max))
    throw ValidationError("feature config: require 0 < f0_min < f0_max");
}

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = nlohmann::json{{"d_mgc", c.d_mgc},         {"n_f0_bins", c.n_f0_bins},
                     {"f0_min", c.f0_min},       {"f0_max", c.f0_max},
                     {"frame_shift_ms", c.frame_shift_ms}, {"window_ms", c.window_ms}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  FeatureConfig d;
  c.d_mgc = j.value("d_mgc", d.d_mgc);
  c.n_f0_bins = j.value("n_f0_bins", d.n_f0_bins);
  c.f0_min = j.value("f0_min", d.f0_min);
  c.f0_max = j.value("f0_max", d.f0_max);
  c.frame_shift_ms = j.value("frame_shift_ms", d.frame_shift_ms);
  c.window_ms = j.value("window_ms", d.window_ms);
}

double hz_to_mel(double hz) {
  if (!(hz >= 0.0)) throw ValidationError("hz_to_mel: negative frequency");
  return 1127.0 * std::log1p(hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

namespace {

struct MelGrid {
  double lo;
  double width;
};

MelGrid mel_grid(const FeatureConfig& config) {
  const double lo = hz_to_mel(config.f0_min);
  const double hi = hz_to_mel(config.f0_max);
  return {lo, (hi - lo) / config.n_f0_bins};
}

void check_class(int f0_class, const FeatureConfig& config) {
  if (f0_class < 0 || f0_class > config.n_f0_bins)
    throw ValidationError("F0 class " + std::to_string(f0_class) + " outside [0, " +
                          std::to_string(config.n_f0_bins) + "]");
}

}  // namespace

int quantize_f0(F0 f0, const FeatureConfig& config) {
  if (!f0) return kUnvoicedClass;
  const double hz = std::clamp(*f0, config.f0_min, config.f0_max);
  const MelGrid grid = mel_grid(config);
  const auto bin = static_cast<int>(std::floor((hz_to_mel(hz) - grid.lo) / grid.width));
  return std::clamp(bin, 0, config.n_f0_bins - 1) + 1;
}

F0 dequantize_f0(int f0_class, const FeatureConfig& config) {
  check_class(f0_class, config);
  if (f0_class == kUnvoicedClass) return std::nullopt;
  const MelGrid grid = mel_grid(config);
  return mel_to_hz(grid.lo + (f0_class - 0.5) * grid.width);
}

HzInterval f0_bin_edges(int f0_class, const FeatureConfig& config) {
  check_class(f0_class, config);
  if (f0_class == kUnvoicedClass) throw ValidationError("unvoiced class has no bin edges");
  const MelGrid grid = mel_grid(config);
  return {mel_to_hz(grid.lo + (f0_class - 1) * grid.width),
          mel_to_hz(grid.lo + f0_class * grid.width)};
}

std::vector<int> quantize_track(std::span<const F0> track, const FeatureConfig& config) {
  std::vector<int> out;
  out.reserve(track.size());
  for (const F0& f : track) out.push_back(quantize_f0(f, config));
  return out;
}

std::vector<F0> dequantize_track(std::span<const int> classes, const FeatureConfig& config) {
  std::vector<F0> out;
  out.reserve(classes.size());
  for (int c : classes) out.push_back(dequantize_f0(c, config));
  return out;
}

}  // namespace spkbal

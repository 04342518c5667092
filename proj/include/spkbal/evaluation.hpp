#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spkbal/corpus.hpp"

namespace spkbal {

/// 10 sqrt(2) / ln 10: converts a cepstral Euclidean distance to dB.
inline constexpr double kMcdScale = 10.0 * std::numbers::sqrt2 / std::numbers::ln10;

/// Per-frame mel-cepstral distortion in dB over coefficients 1..D-1 (frames are columns).
template <typename DerivedA, typename DerivedB>
Vector frame_mcd(const Eigen::MatrixBase<DerivedA>& predicted, const Eigen::MatrixBase<DerivedB>& reference) {
  if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols())
    throw ValidationError("mcd: sequence shapes differ");
  if (predicted.cols() < 1) throw ValidationError("mcd: empty sequence");
  if (predicted.rows() < 2) throw ValidationError("mcd: need at least two coefficients");
  const Index d = predicted.rows() - 1;
  return kMcdScale *
         (predicted.bottomRows(d) - reference.bottomRows(d)).colwise().norm().transpose().template cast<double>();
}

/// Mean over frames of the per-frame distortion.
template <typename DerivedA, typename DerivedB>
double mcd(const Eigen::MatrixBase<DerivedA>& predicted, const Eigen::MatrixBase<DerivedB>& reference) {
  return frame_mcd(predicted, reference).mean();
}

/// Pearson correlation over frames voiced in both tracks. Throws UndefinedMetric
/// with fewer than two such frames or zero variance in either track.
double f0_correlation(std::span<const F0> predicted, std::span<const F0> reference);

/// Fraction of frames whose voicing decisions disagree.
double vuv_error_rate(std::span<const F0> predicted, std::span<const F0> reference);

/// Two-sided exact binomial test against p = 0.5: the total probability of
/// outcomes no more likely than the observed one.
double exact_binomial_test(std::int64_t wins_a, std::int64_t wins_b);

inline bool significant(double p_value, double alpha = 0.05) { return p_value < alpha; }

// ---------------------------------------------------------------------------
// Reports

inline constexpr std::string_view kOverallRow = "ALL";

struct MetricRow {
  std::string strategy;
  std::string speaker;  // kOverallRow for the pooled row
  int display_rank = -1;
  double mcd_db = 0.0;
  std::optional<double> f0_corr;
  double vuv_error_rate = 0.0;
  std::size_t n_frames_scored = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  const MetricRow& at(std::string_view strategy, std::string_view speaker) const;
  void write_csv(const std::filesystem::path& file) const;
  /// Plot tables: one row per speaker, one column per strategy.
  void write_plot_data(const std::filesystem::path& dir) const;
  nlohmann::json summary() const;
};

/// utt_id -> generated acoustic sequence.
using UtteranceOutputs = std::map<std::string, AcousticSequence, std::less<>>;
/// Strategy name -> outputs, in report order.
using StrategyOutputs = std::vector<std::pair<std::string, UtteranceOutputs>>;

/// Scores every strategy on the test split, per speaker and pooled.
MetricReport build_metric_report(const Corpus& corpus, const StrategyOutputs& outputs);

struct PreferenceCounts {
  std::size_t wins_a = 0;
  std::size_t wins_b = 0;

  std::size_t total() const { return wins_a + wins_b; }
  double p_value() const;
};

struct PreferenceTally {
  std::string label;  // e.g. "EN-MU"
  std::vector<std::string> speakers;
  std::vector<PreferenceCounts> per_speaker;

  PreferenceCounts overall() const;
  void write_csv(const std::filesystem::path& file) const;
  nlohmann::json summary() const;
};

/// Stand-in for a forced-choice listener: per test utterance, prefers the output
/// whose spectral distortion plus N(0, judge_noise^2) is lower; exact ties are
/// decided by a seeded coin flip.
PreferenceTally simulate_preference(const Corpus& corpus, const UtteranceOutputs& a,
                                    const UtteranceOutputs& b, std::string label, double judge_noise,
                                    std::uint64_t seed);

}  // namespace spkbal

#pragma once

// Non-parametric combination of subsystem outputs: spectral frames are
// averaged; F0 is decided by a voiced/unvoiced majority vote and then
// averaged over the voiced subsystems.

#include <algorithm>
#include <span>
#include <vector>

#include "spkbal/features.hpp"

namespace spkbal {

/// Mean of the values, independent of their order and exact when all are equal.
template <typename Scalar>
Scalar order_free_mean(std::span<Scalar> values) {
  std::sort(values.begin(), values.end());
  const Scalar lo = values.front();
  Scalar excess = 0;
  for (const Scalar v : values) excess += v - lo;
  return std::clamp(lo + excess / static_cast<Scalar>(values.size()), lo, values.back());
}

template <typename Scalar>
VectorX<Scalar> combine_mgc(std::span<const VectorX<Scalar>> frames) {
  if (frames.empty()) throw ValidationError("combine_mgc: no subsystems");
  const Index d = frames.front().size();
  for (const auto& f : frames)
    if (f.size() != d) throw ValidationError("combine_mgc: subsystem dimensions differ");
  VectorX<Scalar> out(d);
  std::vector<Scalar> column(frames.size());
  for (Index i = 0; i < d; ++i) {
    for (std::size_t n = 0; n < frames.size(); ++n) column[n] = frames[n](i);
    out(i) = order_free_mean(std::span<Scalar>(column));
  }
  return out;
}

template <typename Scalar>
VectorX<Scalar> combine_mgc(const std::vector<VectorX<Scalar>>& frames) {
  return combine_mgc(std::span<const VectorX<Scalar>>(frames));
}

/// Voiced iff strictly more than half the subsystems are voiced; ties are unvoiced.
inline F0 combine_f0(std::span<const F0> votes) {
  if (votes.empty()) throw ValidationError("combine_f0: no subsystems");
  std::vector<double> voiced;
  for (const F0& v : votes)
    if (v) voiced.push_back(*v);
  if (2 * voiced.size() <= votes.size()) return std::nullopt;
  return order_free_mean(std::span<double>(voiced));
}

inline F0 combine_f0(std::initializer_list<F0> votes) {
  return combine_f0(std::span<const F0>(votes.begin(), votes.size()));
}

/// Frame-wise combination of equally long subsystem outputs.
inline AcousticSequence combine_sequences(std::span<const AcousticSequence> outputs) {
  if (outputs.empty()) throw ValidationError("combine_sequences: no subsystems");
  const AcousticSequence& first = outputs.front();
  for (const AcousticSequence& o : outputs) {
    if (o.n_frames() != first.n_frames() || static_cast<Index>(o.f0.size()) != first.n_frames())
      throw ValidationError("combine_sequences: subsystem sequence lengths differ");
    if (o.mgc.rows() != first.mgc.rows())
      throw ValidationError("combine_sequences: subsystem spectral dimensions differ");
  }
  const Index T = first.n_frames();
  AcousticSequence out;
  out.mgc.resize(first.mgc.rows(), T);
  out.f0.resize(static_cast<std::size_t>(T));
  std::vector<Vector> frames(outputs.size());
  std::vector<F0> votes(outputs.size());
  for (Index t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < outputs.size(); ++n) {
      frames[n] = outputs[n].mgc.col(t);
      votes[n] = outputs[n].f0[static_cast<std::size_t>(t)];
    }
    out.mgc.col(t) = combine_mgc<double>(frames);
    out.f0[static_cast<std::size_t>(t)] = combine_f0(votes);
  }
  return out;
}

inline AcousticSequence combine_sequences(const std::vector<AcousticSequence>& outputs) {
  return combine_sequences(std::span<const AcousticSequence>(outputs));
}

}  // namespace spkbal

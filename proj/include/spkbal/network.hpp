#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spkbal/common.hpp"

namespace spkbal {

/// SAR regresses spectral frames; DAR classifies quantized F0 with output feedback.
enum class Variant { SAR, DAR };

enum class LayerKind {
  FeedForward,    // tanh(W x + b)
  Bidirectional,  // tanh recurrences in both directions, halves concatenated
  Feedback,       // forward tanh recurrence fed the embedded previous output class
};

std::string_view to_string(Variant v);
std::string_view to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::FeedForward;
  int width = 0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkTopology {
  Variant variant = Variant::SAR;
  int input_dim = 0;
  /// Number of speaker codes. Zero removes the speaker path (speaker-dependent models).
  int n_speakers = 0;
  std::vector<LayerSpec> layers;
  /// d_mgc for SAR; number of F0 classes (bins + unvoiced) for DAR.
  int output_dim = 0;
  int feedback_embed_dim = 4;

  /// Two feed-forward layers of 512/divisor units, two bidirectional layers of 256/divisor.
  static NetworkTopology sar(int input_dim, int n_speakers, int d_mgc, int width_divisor = 16);
  /// Two feed-forward layers of 512/divisor, a bidirectional layer of 256/divisor,
  /// and a 128/divisor feedback layer.
  static NetworkTopology dar(int input_dim, int n_speakers, int n_classes, int width_divisor = 16);

  void validate() const;
  int n_classes() const { return output_dim; }
  int start_symbol() const { return output_dim; }

  friend bool operator==(const NetworkTopology&, const NetworkTopology&) = default;
};

void to_json(nlohmann::json& j, const NetworkTopology& t);
void from_json(const nlohmann::json& j, NetworkTopology& t);

struct TensorSlot {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;
  Index fan_in = 1;

  Index size() const { return rows * cols; }
};

struct LayerSlots {
  int W = -1;
  int U = -1;
  int b = -1;
  int W_rev = -1;
  int U_rev = -1;
  int b_rev = -1;
  int feedback = -1;
};

/// Placement of every named tensor inside one flat parameter vector.
class ParameterLayout {
 public:
  ParameterLayout() = default;
  explicit ParameterLayout(const NetworkTopology& topology);

  std::vector<TensorSlot> slots;
  std::vector<LayerSlots> layers;
  int speaker_projection = -1;
  int embedding = -1;
  int output_W = -1;
  int output_b = -1;
  Index size = 0;

  int find(std::string_view name) const;

 private:
  int add(std::string name, Index rows, Index cols, Index fan_in);
};

/// Network parameters stored contiguously; tensors are column-major views.
template <typename Scalar>
class AcousticNetwork {
 public:
  AcousticNetwork() = default;
  explicit AcousticNetwork(NetworkTopology topology)
      : topology_(std::move(topology)), layout_(topology_), theta_(VectorX<Scalar>::Zero(layout_.size)) {}

  const NetworkTopology& topology() const { return topology_; }
  const ParameterLayout& layout() const { return layout_; }

  VectorX<Scalar>& parameters() { return theta_; }
  const VectorX<Scalar>& parameters() const { return theta_; }

  Eigen::Map<MatrixX<Scalar>> tensor(int slot) {
    const TensorSlot& s = layout_.slots.at(static_cast<std::size_t>(slot));
    return {theta_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const MatrixX<Scalar>> tensor(int slot) const {
    const TensorSlot& s = layout_.slots.at(static_cast<std::size_t>(slot));
    return {theta_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<MatrixX<Scalar>> tensor(std::string_view name) { return tensor(layout_.find(name)); }
  Eigen::Map<const MatrixX<Scalar>> tensor(std::string_view name) const {
    return tensor(layout_.find(name));
  }

  /// Uniform in +-1/sqrt(fan_in), deterministic in `seed`.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const TensorSlot& s : layout_.slots) {
      const double r = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
      std::uniform_real_distribution<double> u(-r, r);
      for (Index i = 0; i < s.size(); ++i) theta_(s.offset + i) = static_cast<Scalar>(u(rng));
    }
  }

  template <typename Other>
  AcousticNetwork<Other> cast() const {
    AcousticNetwork<Other> out(topology_);
    out.parameters() = theta_.template cast<Other>();
    return out;
  }

 private:
  NetworkTopology topology_;
  ParameterLayout layout_;
  VectorX<Scalar> theta_;
};

}  // namespace spkbal

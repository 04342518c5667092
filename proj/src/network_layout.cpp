#include <nlohmann/json.hpp>

#include "spkbal/network.hpp"

namespace spkbal {

std::string_view to_string(Variant v) { return v == Variant::SAR ? "SAR" : "DAR"; }

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::FeedForward: return "feedforward";
    case LayerKind::Bidirectional: return "bidirectional";
    case LayerKind::Feedback: return "feedback";
  }
  return "?";
}

namespace {

LayerKind layer_kind_from_string(std::string_view s) {
  if (s == "feedforward") return LayerKind::FeedForward;
  if (s == "bidirectional") return LayerKind::Bidirectional;
  if (s == "feedback") return LayerKind::Feedback;
  throw ValidationError("unknown layer kind '" + std::string(s) + "'");
}

int scaled(int full_width, int divisor) { return std::max(2, full_width / divisor); }

int even(int w) { return w + (w % 2); }

}  // namespace

NetworkTopology NetworkTopology::sar(int input_dim, int n_speakers, int d_mgc, int width_divisor) {
  NetworkTopology t;
  t.variant = Variant::SAR;
  t.input_dim = input_dim;
  t.n_speakers = n_speakers;
  t.output_dim = d_mgc;
  t.layers = {{LayerKind::FeedForward, scaled(512, width_divisor)},
              {LayerKind::FeedForward, scaled(512, width_divisor)},
              {LayerKind::Bidirectional, even(scaled(256, width_divisor))},
              {LayerKind::Bidirectional, even(scaled(256, width_divisor))}};
  return t;
}

NetworkTopology NetworkTopology::dar(int input_dim, int n_speakers, int n_classes, int width_divisor) {
  NetworkTopology t;
  t.variant = Variant::DAR;
  t.input_dim = input_dim;
  t.n_speakers = n_speakers;
  t.output_dim = n_classes;
  t.layers = {{LayerKind::FeedForward, scaled(512, width_divisor)},
              {LayerKind::FeedForward, scaled(512, width_divisor)},
              {LayerKind::Bidirectional, even(scaled(256, width_divisor))},
              {LayerKind::Feedback, scaled(128, width_divisor)}};
  return t;
}

void NetworkTopology::validate() const {
  if (input_dim < 1) throw ValidationError("topology: input_dim must be >= 1");
  if (n_speakers < 0) throw ValidationError("topology: n_speakers must be >= 0");
  if (output_dim < 1) throw ValidationError("topology: output_dim must be >= 1");
  if (layers.empty() || layers.front().kind != LayerKind::FeedForward)
    throw ValidationError("topology: the first layer must be feed-forward");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& s = layers[l];
    if (s.width < 1) throw ValidationError("topology: layer widths must be >= 1");
    if (s.kind == LayerKind::Bidirectional && s.width % 2 != 0)
      throw ValidationError("topology: bidirectional widths must be even");
    if (s.kind == LayerKind::Feedback && (variant != Variant::DAR || l + 1 != layers.size()))
      throw ValidationError("topology: a feedback layer is only allowed as the last DAR layer");
  }
  if (variant == Variant::DAR) {
    if (layers.back().kind != LayerKind::Feedback)
      throw ValidationError("topology: DAR needs a final feedback layer");
    if (output_dim < 2) throw ValidationError("topology: DAR needs at least two classes");
    if (feedback_embed_dim < 1) throw ValidationError("topology: feedback_embed_dim must be >= 1");
  }
}

void to_json(nlohmann::json& j, const NetworkTopology& t) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& s : t.layers) layers.push_back({{"kind", to_string(s.kind)}, {"width", s.width}});
  j = nlohmann::json{{"variant", to_string(t.variant)},    {"input_dim", t.input_dim},
                     {"n_speakers", t.n_speakers},         {"layers", layers},
                     {"output_dim", t.output_dim},         {"feedback_embed_dim", t.feedback_embed_dim}};
}

void from_json(const nlohmann::json& j, NetworkTopology& t) {
  const std::string variant = j.at("variant").get<std::string>();
  if (variant != "SAR" && variant != "DAR") throw ValidationError("unknown variant '" + variant + "'");
  t.variant = variant == "SAR" ? Variant::SAR : Variant::DAR;
  t.input_dim = j.at("input_dim").get<int>();
  t.n_speakers = j.at("n_speakers").get<int>();
  t.output_dim = j.at("output_dim").get<int>();
  t.feedback_embed_dim = j.value("feedback_embed_dim", 4);
  t.layers.clear();
  for (const auto& l : j.at("layers"))
    t.layers.push_back({layer_kind_from_string(l.at("kind").get<std::string>()), l.at("width").get<int>()});
}

int ParameterLayout::add(std::string name, Index rows, Index cols, Index fan_in) {
  slots.push_back({std::move(name), rows, cols, size, std::max<Index>(fan_in, 1)});
  size += rows * cols;
  return static_cast<int>(slots.size()) - 1;
}

ParameterLayout::ParameterLayout(const NetworkTopology& topology) {
  topology.validate();
  Index in = topology.input_dim;
  for (std::size_t l = 0; l < topology.layers.size(); ++l) {
    const LayerSpec& spec = topology.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerSlots ls;
    switch (spec.kind) {
      case LayerKind::FeedForward:
        ls.W = add(p + "W", spec.width, in, in);
        ls.b = add(p + "b", spec.width, 1, in);
        if (l == 0 && topology.n_speakers > 0)
          speaker_projection = add("speaker_projection", spec.width, topology.n_speakers, in);
        break;
      case LayerKind::Bidirectional: {
        const Index half = spec.width / 2;
        ls.W = add(p + "fwd.W", half, in, in);
        ls.U = add(p + "fwd.U", half, half, half);
        ls.b = add(p + "fwd.b", half, 1, in);
        ls.W_rev = add(p + "bwd.W", half, in, in);
        ls.U_rev = add(p + "bwd.U", half, half, half);
        ls.b_rev = add(p + "bwd.b", half, 1, in);
        break;
      }
      case LayerKind::Feedback:
        ls.W = add(p + "W", spec.width, in, in);
        ls.U = add(p + "U", spec.width, spec.width, spec.width);
        ls.b = add(p + "b", spec.width, 1, in);
        ls.feedback = add(p + "feedback", spec.width, topology.feedback_embed_dim,
                          topology.feedback_embed_dim);
        embedding = add("class_embedding", topology.feedback_embed_dim, topology.n_classes() + 1, 1);
        break;
    }
    layers.push_back(ls);
    in = spec.width;
  }
  output_W = add("output.W", topology.output_dim, in, in);
  output_b = add("output.b", topology.output_dim, 1, in);
}

int ParameterLayout::find(std::string_view name) const {
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (slots[i].name == name) return static_cast<int>(i);
  throw ValidationError("no parameter tensor named '" + std::string(name) + "'");
}

}  // namespace spkbal

#pragma once

// Forward and backward passes of the SAR/DAR networks. Everything is
// templated on the scalar type so gradients can be checked in extended
// precision against the same forward code.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "spkbal/network.hpp"

namespace spkbal {

enum class FeedbackMode { TeacherForced, FreeRunning };

template <typename Scalar>
struct ForwardPass {
  std::vector<MatrixX<Scalar>> activations;  // per layer, width x n_frames
  std::vector<int> feedback_classes;         // DAR: class fed into frame t
  MatrixX<Scalar> output;                    // output_dim x n_frames
};

template <typename Scalar>
struct DarOutput {
  MatrixX<Scalar> logits;
  std::vector<int> classes;  // per-frame argmax
};

template <typename Scalar>
struct GradientResult {
  Scalar loss;
  VectorX<Scalar> gradient;  // same layout as AcousticNetwork::parameters()
};

namespace detail {

inline void check_speaker(const NetworkTopology& topo, int speaker) {
  if (topo.n_speakers > 0 && (speaker < 0 || speaker >= topo.n_speakers))
    throw ValidationError("speaker index " + std::to_string(speaker) + " outside [0, " +
                          std::to_string(topo.n_speakers) + ")");
}

inline void check_input(const NetworkTopology& topo, Index rows, Index cols) {
  if (rows != topo.input_dim)
    throw ValidationError("input dimension " + std::to_string(rows) + " != topology input_dim " +
                          std::to_string(topo.input_dim));
  if (cols < 1) throw ValidationError("empty input sequence");
}

template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

template <typename Scalar>
MatrixX<Scalar> tanh_of(const MatrixX<Scalar>& a) {
  return a.array().tanh().matrix();
}

// One direction of a tanh recurrence over precomputed input terms `wx` (+ bias).
// Writes rows [row0, row0 + U.rows()) of `out`.
template <typename Scalar, typename UType>
void recur(const MatrixX<Scalar>& wx, const UType& U, bool reverse, MatrixX<Scalar>& out, Index row0) {
  const Index T = wx.cols();
  VectorX<Scalar> h = VectorX<Scalar>::Zero(U.rows());
  for (Index s = 0; s < T; ++s) {
    const Index t = reverse ? T - 1 - s : s;
    h = (wx.col(t) + U * h).array().tanh().matrix();
    out.col(t).segment(row0, h.size()) = h;
  }
}

}  // namespace detail

/// W1 x + c1 + b^(k), where b^(k) is column k of the speaker projection.
template <typename Scalar>
VectorX<Scalar> first_layer_preactivation(const AcousticNetwork<Scalar>& net, const VectorX<Scalar>& x,
                                          int speaker) {
  const NetworkTopology& topo = net.topology();
  detail::check_input(topo, x.rows(), 1);
  detail::check_speaker(topo, speaker);
  const LayerSlots& s = net.layout().layers.front();
  VectorX<Scalar> a = net.tensor(s.W) * x + net.tensor(s.b).col(0);
  if (net.layout().speaker_projection >= 0) a += net.tensor(net.layout().speaker_projection).col(speaker);
  return a;
}

template <typename Scalar>
VectorX<Scalar> first_layer_forward(const AcousticNetwork<Scalar>& net, const VectorX<Scalar>& x,
                                    int speaker) {
  return first_layer_preactivation(net, x, speaker).array().tanh().matrix();
}

/// Full forward pass. `reference` supplies the fed-back classes in teacher-forced
/// mode; free-running feeds back the argmax of the previous frame.
template <typename Scalar>
ForwardPass<Scalar> forward(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X, int speaker,
                            FeedbackMode mode = FeedbackMode::TeacherForced,
                            std::span<const int> reference = {}) {
  const NetworkTopology& topo = net.topology();
  const ParameterLayout& layout = net.layout();
  detail::check_input(topo, X.rows(), X.cols());
  detail::check_speaker(topo, speaker);
  const Index T = X.cols();
  if (topo.variant == Variant::DAR && mode == FeedbackMode::TeacherForced) {
    if (static_cast<Index>(reference.size()) != T)
      throw ValidationError("teacher forcing needs " + std::to_string(T) + " reference classes, got " +
                            std::to_string(reference.size()));
    for (int c : reference)
      if (c < 0 || c >= topo.n_classes()) throw ValidationError("reference class out of range");
  }

  ForwardPass<Scalar> pass;
  const MatrixX<Scalar>* input = &X;
  for (std::size_t l = 0; l < topo.layers.size(); ++l) {
    const LayerSpec& spec = topo.layers[l];
    const LayerSlots& s = layout.layers[l];
    MatrixX<Scalar> wx = net.tensor(s.W) * *input;
    wx.colwise() += net.tensor(s.b).col(0);
    MatrixX<Scalar> H(spec.width, T);
    switch (spec.kind) {
      case LayerKind::FeedForward:
        if (l == 0 && layout.speaker_projection >= 0)
          wx.colwise() += net.tensor(layout.speaker_projection).col(speaker);
        H = detail::tanh_of(wx);
        break;
      case LayerKind::Bidirectional: {
        const Index half = spec.width / 2;
        MatrixX<Scalar> wx_rev = net.tensor(s.W_rev) * *input;
        wx_rev.colwise() += net.tensor(s.b_rev).col(0);
        detail::recur<Scalar>(wx, net.tensor(s.U), false, H, 0);
        detail::recur<Scalar>(wx_rev, net.tensor(s.U_rev), true, H, half);
        break;
      }
      case LayerKind::Feedback: {
        const auto U = net.tensor(s.U);
        const auto F = net.tensor(s.feedback);
        const auto E = net.tensor(layout.embedding);
        const auto Wo = net.tensor(layout.output_W);
        const auto bo = net.tensor(layout.output_b);
        pass.output.resize(topo.output_dim, T);
        pass.feedback_classes.resize(static_cast<std::size_t>(T));
        VectorX<Scalar> h = VectorX<Scalar>::Zero(spec.width);
        for (Index t = 0; t < T; ++t) {
          int prev = topo.start_symbol();
          if (t > 0)
            prev = mode == FeedbackMode::TeacherForced ? reference[t - 1]
                                                        : detail::argmax(pass.output.col(t - 1));
          pass.feedback_classes[t] = prev;
          h = (wx.col(t) + U * h + F * E.col(prev)).array().tanh().matrix();
          H.col(t) = h;
          pass.output.col(t) = Wo * h + bo.col(0);
        }
        break;
      }
    }
    pass.activations.push_back(std::move(H));
    input = &pass.activations.back();
  }
  if (topo.variant == Variant::SAR) {
    pass.output = net.tensor(layout.output_W) * pass.activations.back();
    pass.output.colwise() += net.tensor(layout.output_b).col(0);
  }
  return pass;
}

template <typename Scalar>
MatrixX<Scalar> forward_sar(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X, int speaker) {
  if (net.topology().variant != Variant::SAR) throw ValidationError("forward_sar needs a SAR network");
  return forward(net, X, speaker).output;
}

template <typename Scalar>
DarOutput<Scalar> forward_dar(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X, int speaker,
                              FeedbackMode mode, std::span<const int> reference = {}) {
  if (net.topology().variant != Variant::DAR) throw ValidationError("forward_dar needs a DAR network");
  ForwardPass<Scalar> pass = forward(net, X, speaker, mode, reference);
  DarOutput<Scalar> out;
  out.classes.resize(static_cast<std::size_t>(X.cols()));
  for (Index t = 0; t < X.cols(); ++t) out.classes[t] = detail::argmax(pass.output.col(t));
  out.logits = std::move(pass.output);
  return out;
}

/// Mean squared error over frames and dimensions.
template <typename Scalar>
Scalar mse_loss(const MatrixX<Scalar>& predicted, const MatrixX<Scalar>& target) {
  if (predicted.size() == 0) throw ValidationError("loss of an empty sequence");
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw ValidationError("loss: prediction and target shapes differ");
  return (predicted - target).squaredNorm() / static_cast<Scalar>(predicted.size());
}

/// Per-frame log-softmax probabilities.
template <typename Scalar>
MatrixX<Scalar> log_softmax(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Index t = 0; t < logits.cols(); ++t) {
    const Scalar m = logits.col(t).maxCoeff();
    const Scalar lse = m + std::log((logits.col(t).array() - m).exp().sum());
    out.col(t) = logits.col(t).array() - lse;
  }
  return out;
}

/// Mean cross-entropy over frames.
template <typename Scalar>
Scalar cross_entropy_loss(const MatrixX<Scalar>& logits, std::span<const int> classes) {
  if (logits.cols() == 0) throw ValidationError("loss of an empty sequence");
  if (static_cast<Index>(classes.size()) != logits.cols())
    throw ValidationError("loss: prediction and target lengths differ");
  const MatrixX<Scalar> lp = log_softmax(logits);
  Scalar total = 0;
  for (Index t = 0; t < lp.cols(); ++t) {
    const int c = classes[t];
    if (c < 0 || c >= lp.rows()) throw ValidationError("target class out of range");
    total -= lp(c, t);
  }
  return total / static_cast<Scalar>(lp.cols());
}

namespace detail {

// Backpropagation through time given dLoss/dOutput.
template <typename Scalar>
VectorX<Scalar> backprop(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X, int speaker,
                         const ForwardPass<Scalar>& pass, const MatrixX<Scalar>& d_output) {
  const NetworkTopology& topo = net.topology();
  const ParameterLayout& layout = net.layout();
  AcousticNetwork<Scalar> grad(topo);
  const Index T = X.cols();
  const std::size_t n_layers = topo.layers.size();

  const MatrixX<Scalar>& top = pass.activations.back();
  grad.tensor(layout.output_W) = d_output * top.transpose();
  grad.tensor(layout.output_b) = d_output.rowwise().sum();
  MatrixX<Scalar> dH = net.tensor(layout.output_W).transpose() * d_output;

  for (std::size_t l = n_layers; l-- > 0;) {
    const LayerSpec& spec = topo.layers[l];
    const LayerSlots& s = layout.layers[l];
    const MatrixX<Scalar>& in = l == 0 ? X : pass.activations[l - 1];
    const MatrixX<Scalar>& H = pass.activations[l];
    const MatrixX<Scalar> dtanh = (Scalar(1) - H.array().square()).matrix();
    MatrixX<Scalar> d_in;

    switch (spec.kind) {
      case LayerKind::FeedForward: {
        const MatrixX<Scalar> dA = dH.cwiseProduct(dtanh);
        grad.tensor(s.W) = dA * in.transpose();
        grad.tensor(s.b) = dA.rowwise().sum();
        if (l == 0 && layout.speaker_projection >= 0)
          grad.tensor(layout.speaker_projection).col(speaker) = dA.rowwise().sum();
        d_in = net.tensor(s.W).transpose() * dA;
        break;
      }
      case LayerKind::Bidirectional: {
        const Index half = spec.width / 2;
        MatrixX<Scalar> dA_f(half, T);
        MatrixX<Scalar> dA_b(half, T);
        const auto Uf = net.tensor(s.U);
        const auto Ub = net.tensor(s.U_rev);
        VectorX<Scalar> carry = VectorX<Scalar>::Zero(half);
        for (Index t = T; t-- > 0;) {
          dA_f.col(t) = (dH.col(t).head(half) + carry).cwiseProduct(dtanh.col(t).head(half));
          carry = Uf.transpose() * dA_f.col(t);
        }
        carry.setZero();
        for (Index t = 0; t < T; ++t) {
          dA_b.col(t) = (dH.col(t).tail(half) + carry).cwiseProduct(dtanh.col(t).tail(half));
          carry = Ub.transpose() * dA_b.col(t);
        }
        grad.tensor(s.W) = dA_f * in.transpose();
        grad.tensor(s.b) = dA_f.rowwise().sum();
        grad.tensor(s.W_rev) = dA_b * in.transpose();
        grad.tensor(s.b_rev) = dA_b.rowwise().sum();
        if (T > 1) {
          grad.tensor(s.U) = dA_f.rightCols(T - 1) * H.topRows(half).leftCols(T - 1).transpose();
          grad.tensor(s.U_rev) = dA_b.leftCols(T - 1) * H.bottomRows(half).rightCols(T - 1).transpose();
        }
        d_in = net.tensor(s.W).transpose() * dA_f + net.tensor(s.W_rev).transpose() * dA_b;
        break;
      }
      case LayerKind::Feedback: {
        MatrixX<Scalar> dA(spec.width, T);
        const auto U = net.tensor(s.U);
        const auto F = net.tensor(s.feedback);
        const auto E = net.tensor(layout.embedding);
        VectorX<Scalar> carry = VectorX<Scalar>::Zero(spec.width);
        for (Index t = T; t-- > 0;) {
          dA.col(t) = (dH.col(t) + carry).cwiseProduct(dtanh.col(t));
          carry = U.transpose() * dA.col(t);
        }
        grad.tensor(s.W) = dA * in.transpose();
        grad.tensor(s.b) = dA.rowwise().sum();
        if (T > 1) grad.tensor(s.U) = dA.rightCols(T - 1) * H.leftCols(T - 1).transpose();
        auto dF = grad.tensor(s.feedback);
        auto dE = grad.tensor(layout.embedding);
        for (Index t = 0; t < T; ++t) {
          const int c = pass.feedback_classes[t];
          dF += dA.col(t) * E.col(c).transpose();
          dE.col(c) += F.transpose() * dA.col(t);
        }
        d_in = net.tensor(s.W).transpose() * dA;
        break;
      }
    }
    dH = std::move(d_in);
  }
  return std::move(grad.parameters());
}

}  // namespace detail

template <typename Scalar>
Scalar sar_loss(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X, int speaker,
                const MatrixX<Scalar>& target) {
  return mse_loss<Scalar>(forward_sar(net, X, speaker), target);
}

template <typename Scalar>
Scalar dar_loss(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X, int speaker,
                std::span<const int> target, FeedbackMode mode = FeedbackMode::TeacherForced) {
  return cross_entropy_loss<Scalar>(forward_dar(net, X, speaker, mode, target).logits, target);
}

template <typename Scalar>
GradientResult<Scalar> sar_gradient(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X,
                                    int speaker, const MatrixX<Scalar>& target) {
  if (net.topology().variant != Variant::SAR) throw ValidationError("sar_gradient needs a SAR network");
  const ForwardPass<Scalar> pass = forward(net, X, speaker);
  const Scalar loss = mse_loss<Scalar>(pass.output, target);
  const MatrixX<Scalar> d_out = (pass.output - target) * (Scalar(2) / static_cast<Scalar>(target.size()));
  return {loss, detail::backprop(net, X, speaker, pass, d_out)};
}

/// Teacher forcing feeds back `target`; free-running feeds back the network's
/// own argmax, treated as a constant.
template <typename Scalar>
GradientResult<Scalar> dar_gradient(const AcousticNetwork<Scalar>& net, const MatrixX<Scalar>& X,
                                    int speaker, std::span<const int> target,
                                    FeedbackMode mode = FeedbackMode::TeacherForced) {
  if (net.topology().variant != Variant::DAR) throw ValidationError("dar_gradient needs a DAR network");
  if (static_cast<Index>(target.size()) != X.cols())
    throw ValidationError("target length differs from input length");
  const ForwardPass<Scalar> pass = forward(net, X, speaker, mode, target);
  const Scalar loss = cross_entropy_loss<Scalar>(pass.output, target);
  MatrixX<Scalar> d_out = log_softmax(pass.output).array().exp().matrix();
  for (Index t = 0; t < X.cols(); ++t) d_out(target[t], t) -= 1;
  d_out /= static_cast<Scalar>(X.cols());
  return {loss, detail::backprop(net, X, speaker, pass, d_out)};
}

}  // namespace spkbal

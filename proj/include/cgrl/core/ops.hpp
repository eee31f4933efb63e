#pragma once

#include "cgrl/core/autodiff.hpp"

namespace cgrl {

enum class ActivationKind { kRelu, kLeakyRelu, kSigmoid, kSoftmax, kLayerNorm };

struct ActivationSpec {
  ActivationKind kind = ActivationKind::kRelu;
  double slope = 0.2;  // leaky_relu
  int axis = 1;        // softmax

  static ActivationSpec relu() { return {ActivationKind::kRelu}; }
  static ActivationSpec leaky_relu(double slope) {
    return {ActivationKind::kLeakyRelu, slope};
  }
  static ActivationSpec sigmoid() { return {ActivationKind::kSigmoid}; }
  static ActivationSpec softmax(int axis) { return {ActivationKind::kSoftmax, 0.0, axis}; }
  static ActivationSpec layer_norm() { return {ActivationKind::kLayerNorm}; }
};

/// Dispatch over the supported activation transforms; all differentiable.
inline Var activation(Var x, const ActivationSpec& spec) {
  switch (spec.kind) {
    case ActivationKind::kRelu:
      return ad::relu(x);
    case ActivationKind::kLeakyRelu:
      return ad::leaky_relu(x, spec.slope);
    case ActivationKind::kSigmoid:
      return ad::sigmoid(x);
    case ActivationKind::kSoftmax:
      return ad::softmax(x, spec.axis);
    case ActivationKind::kLayerNorm:
      return ad::layer_norm(x);
  }
  throw ConfigError("activation: unknown kind");
}

/// Non-tape convenience: runs the activation on a scratch tape.
inline Tensor activation_eval(const Tensor& x, const ActivationSpec& spec) {
  Tape tape;
  return activation(tape.constant(x), spec).val();
}

}  // namespace cgrl

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qnopt/numerics.hpp"

namespace qnopt {

enum class OutputActivation { linear, softmax };
enum class LossKind { mse, cross_entropy };

/// Fully connected network: sigmoid hidden layers, linear or softmax output.
/// Parameters are packed layer by layer, weights (row-major, out x in) then
/// per-neuron biases.
struct NetworkSpec {
  std::vector<std::size_t> layer_sizes;
  OutputActivation output_activation = OutputActivation::linear;
  LossKind loss_kind = LossKind::mse;

  /// Throws ArgumentError unless there are >= 2 layers, all sizes >= 1, and
  /// the activation/loss pairing is linear+mse or softmax+cross_entropy.
  void validate() const;
};

/// Row-major view over b samples; does not own the data.
struct Batch {
  std::span<const double> inputs;   // size * input_dim
  std::span<const double> targets;  // size * target_dim
  std::size_t size = 0;
  std::size_t input_dim = 0;
  std::size_t target_dim = 0;
};

std::size_t param_count(const NetworkSpec& spec);

/// Mean per-sample loss over the batch: (1/b) sum 0.5*||out - target||^2 for
/// mse, mean cross-entropy for softmax outputs. Summation is in sample order.
double loss(const NetworkSpec& spec, const Vector& w, const Batch& batch);

/// Exact gradient of loss() via backpropagation, length param_count(spec).
Vector gradient(const NetworkSpec& spec, const Vector& w, const Batch& batch);

/// Fraction of argmax-correct predictions. Throws ModeError on regression
/// specs.
double accuracy(const NetworkSpec& spec, const Vector& w, const Batch& batch);

/// sqrt(mean squared residual) over every output component in the batch.
/// Reported separately from the training loss (which carries the 1/2 factor).
double rmse(const NetworkSpec& spec, const Vector& w, const Batch& batch);

/// Network outputs for one sample (length = last layer size).
Vector predict(const NetworkSpec& spec, const Vector& w, std::span<const double> input);

}  // namespace qnopt

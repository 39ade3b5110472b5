#include "qnopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qnopt {

namespace {

struct LayerView {
  std::size_t w_off;  // weights, row-major out x in
  std::size_t b_off;  // biases
  std::size_t in;
  std::size_t out;
};

std::vector<LayerView> layout(const NetworkSpec& spec) {
  std::vector<LayerView> views;
  std::size_t off = 0;
  for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
    LayerView v;
    v.in = spec.layer_sizes[l - 1];
    v.out = spec.layer_sizes[l];
    v.w_off = off;
    off += v.in * v.out;
    v.b_off = off;
    off += v.out;
    views.push_back(v);
  }
  return views;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Workspace {
  std::vector<Vector> act;  // act[0] = input copy, act[l] = layer l activations
  Vector logits;            // output-layer pre-activation

  explicit Workspace(const NetworkSpec& spec) {
    act.reserve(spec.layer_sizes.size());
    for (std::size_t s : spec.layer_sizes) act.emplace_back(s, 0.0);
    logits.assign(spec.layer_sizes.back(), 0.0);
  }
};

/// Forward pass for one sample; fills ws.act and ws.logits.
void forward(const NetworkSpec& spec, const std::vector<LayerView>& views, const Vector& w,
             const double* input, Workspace& ws) {
  std::copy(input, input + spec.layer_sizes.front(), ws.act[0].begin());
  const std::size_t last = views.size() - 1;
  for (std::size_t l = 0; l < views.size(); ++l) {
    const LayerView& v = views[l];
    const Vector& prev = ws.act[l];
    Vector& cur = ws.act[l + 1];
    for (std::size_t j = 0; j < v.out; ++j) {
      double z = w[v.b_off + j];
      const double* row = &w[v.w_off + j * v.in];
      for (std::size_t i = 0; i < v.in; ++i) z += row[i] * prev[i];
      if (l == last) {
        ws.logits[j] = z;
      } else {
        cur[j] = sigmoid(z);
      }
    }
    if (l == last) {
      if (spec.output_activation == OutputActivation::linear) {
        cur = ws.logits;
      } else {
        double zmax = ws.logits[0];
        for (double z : ws.logits) zmax = std::max(zmax, z);
        double sum = 0.0;
        for (std::size_t j = 0; j < v.out; ++j) {
          cur[j] = std::exp(ws.logits[j] - zmax);
          sum += cur[j];
        }
        for (std::size_t j = 0; j < v.out; ++j) cur[j] /= sum;
      }
    }
  }
}

double sample_loss(const NetworkSpec& spec, const Workspace& ws, const double* target,
                   std::size_t target_dim) {
  if (spec.loss_kind == LossKind::mse) {
    double acc = 0.0;
    for (std::size_t j = 0; j < target_dim; ++j) {
      const double r = ws.act.back()[j] - target[j];
      acc += 0.5 * r * r;
    }
    return acc;
  }
  // Cross entropy on softmax logits via log-sum-exp.
  double zmax = ws.logits[0];
  for (double z : ws.logits) zmax = std::max(zmax, z);
  double sum = 0.0;
  for (double z : ws.logits) sum += std::exp(z - zmax);
  const double lse = zmax + std::log(sum);
  double acc = 0.0;
  for (std::size_t j = 0; j < target_dim; ++j) {
    if (target[j] != 0.0) acc -= target[j] * (ws.logits[j] - lse);
  }
  return acc;
}

void check_shapes(const NetworkSpec& spec, const Vector& w, const Batch& batch) {
  spec.validate();
  if (w.size() != param_count(spec)) {
    throw DimensionError("model: parameter vector length " + std::to_string(w.size()) +
                         ", expected " + std::to_string(param_count(spec)));
  }
  if (batch.input_dim != spec.layer_sizes.front()) {
    throw DimensionError("model: batch input_dim " + std::to_string(batch.input_dim) +
                         ", expected " + std::to_string(spec.layer_sizes.front()));
  }
  if (batch.target_dim != spec.layer_sizes.back()) {
    throw DimensionError("model: batch target_dim " + std::to_string(batch.target_dim) +
                         ", expected " + std::to_string(spec.layer_sizes.back()));
  }
  if (batch.size == 0) throw ArgumentError("model: empty batch");
  if (batch.inputs.size() != batch.size * batch.input_dim ||
      batch.targets.size() != batch.size * batch.target_dim) {
    throw DimensionError("model: batch spans inconsistent with size");
  }
}

std::size_t argmax(const Vector& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

}  // namespace

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw ArgumentError("NetworkSpec: need at least 2 layers");
  for (std::size_t s : layer_sizes) {
    if (s < 1) throw ArgumentError("NetworkSpec: layer sizes must be >= 1");
  }
  const bool regression =
      output_activation == OutputActivation::linear && loss_kind == LossKind::mse;
  const bool classification =
      output_activation == OutputActivation::softmax && loss_kind == LossKind::cross_entropy;
  if (!regression && !classification) {
    throw ArgumentError("NetworkSpec: linear pairs with mse, softmax with cross_entropy");
  }
}

std::size_t param_count(const NetworkSpec& spec) {
  spec.validate();
  std::size_t d = 0;
  for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
    d += (spec.layer_sizes[l - 1] + 1) * spec.layer_sizes[l];
  }
  return d;
}

double loss(const NetworkSpec& spec, const Vector& w, const Batch& batch) {
  check_shapes(spec, w, batch);
  const auto views = layout(spec);
  Workspace ws(spec);
  double acc = 0.0;
  for (std::size_t p = 0; p < batch.size; ++p) {
    forward(spec, views, w, &batch.inputs[p * batch.input_dim], ws);
    acc += sample_loss(spec, ws, &batch.targets[p * batch.target_dim], batch.target_dim);
  }
  return acc / static_cast<double>(batch.size);
}

Vector gradient(const NetworkSpec& spec, const Vector& w, const Batch& batch) {
  check_shapes(spec, w, batch);
  const auto views = layout(spec);
  Workspace ws(spec);
  Vector grad(w.size(), 0.0);
  std::vector<Vector> delta;
  delta.reserve(views.size());
  for (const auto& v : views) delta.emplace_back(v.out, 0.0);

  for (std::size_t p = 0; p < batch.size; ++p) {
    forward(spec, views, w, &batch.inputs[p * batch.input_dim], ws);
    const double* target = &batch.targets[p * batch.target_dim];

    // Output delta is (output - target) for both linear+mse and
    // softmax+cross_entropy.
    const std::size_t last = views.size() - 1;
    for (std::size_t j = 0; j < views[last].out; ++j) {
      delta[last][j] = ws.act.back()[j] - target[j];
    }
    for (std::size_t l = last; l-- > 0;) {
      const LayerView& up = views[l + 1];
      for (std::size_t i = 0; i < views[l].out; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < up.out; ++j) acc += w[up.w_off + j * up.in + i] * delta[l + 1][j];
        const double a = ws.act[l + 1][i];
        delta[l][i] = acc * a * (1.0 - a);
      }
    }
    for (std::size_t l = 0; l < views.size(); ++l) {
      const LayerView& v = views[l];
      const Vector& prev = ws.act[l];
      for (std::size_t j = 0; j < v.out; ++j) {
        const double dj = delta[l][j];
        double* grow = &grad[v.w_off + j * v.in];
        for (std::size_t i = 0; i < v.in; ++i) grow[i] += dj * prev[i];
        grad[v.b_off + j] += dj;
      }
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  for (double& g : grad) g *= inv_b;
  return grad;
}

double accuracy(const NetworkSpec& spec, const Vector& w, const Batch& batch) {
  if (spec.loss_kind != LossKind::cross_entropy) {
    throw ModeError("accuracy: requires a classification spec");
  }
  check_shapes(spec, w, batch);
  const auto views = layout(spec);
  Workspace ws(spec);
  std::size_t correct = 0;
  Vector target(batch.target_dim);
  for (std::size_t p = 0; p < batch.size; ++p) {
    forward(spec, views, w, &batch.inputs[p * batch.input_dim], ws);
    std::copy(&batch.targets[p * batch.target_dim],
              &batch.targets[p * batch.target_dim] + batch.target_dim, target.begin());
    if (argmax(ws.act.back()) == argmax(target)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size);
}

double rmse(const NetworkSpec& spec, const Vector& w, const Batch& batch) {
  check_shapes(spec, w, batch);
  const auto views = layout(spec);
  Workspace ws(spec);
  double acc = 0.0;
  for (std::size_t p = 0; p < batch.size; ++p) {
    forward(spec, views, w, &batch.inputs[p * batch.input_dim], ws);
    for (std::size_t j = 0; j < batch.target_dim; ++j) {
      const double r = ws.act.back()[j] - batch.targets[p * batch.target_dim + j];
      acc += r * r;
    }
  }
  return std::sqrt(acc / static_cast<double>(batch.size * batch.target_dim));
}

Vector predict(const NetworkSpec& spec, const Vector& w, std::span<const double> input) {
  spec.validate();
  if (w.size() != param_count(spec)) throw DimensionError("predict: bad parameter length");
  if (input.size() != spec.layer_sizes.front()) throw DimensionError("predict: bad input length");
  const auto views = layout(spec);
  Workspace ws(spec);
  forward(spec, views, w, input.data(), ws);
  return ws.act.back();
}

}  // namespace qnopt

#pragma once

// Minimal fully-connected network engine: batched forward pass, exact
// reverse-mode gradients (parameters and inputs) and Adam.
//
// Batches are column-major: an input matrix is (input_dim x batch) and every
// column is one sample. Parameter gradients returned by backward() are summed
// over the batch columns, so callers scale output gradients (e.g. by 1/M)
// to get a mean.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace d4pg {

enum class Activation { kIdentity, kRelu, kTanh };

struct NetSpec {
  std::vector<int> layer_sizes;  // input dim first, output dim last
  Activation hidden = Activation::kRelu;
  Activation output = Activation::kIdentity;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  // Throws ConfigError.
  void validate() const;

  bool operator==(const NetSpec&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

struct DenseNet {
  NetSpec spec;
  std::vector<DenseLayer> layers;

  // Zero-initialised network with the shapes described by `spec`.
  static DenseNet zeros(const NetSpec& spec);

  int num_layers() const { return static_cast<int>(layers.size()); }
  std::size_t num_parameters() const;
  bool all_finite() const;
};

bool operator==(const DenseNet& a, const DenseNet& b);

// Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.
DenseNet init_net(const NetSpec& spec, std::uint64_t seed);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to layer l
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of layer l
  Eigen::MatrixXd output;
};

struct Forward {
  Eigen::MatrixXd output;  // output_dim x batch
  ForwardCache cache;
};

Forward forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs);
Forward forward(const DenseNet& net, const Eigen::VectorXd& input);

// Output only, no cache. Used on the acting path.
Eigen::VectorXd predict(const DenseNet& net, const Eigen::VectorXd& input);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd input;  // input_dim x batch

  static Gradients zeros_like(const DenseNet& net);

  double squared_norm() const;  // parameters only
  bool all_finite() const;
  void scale(double factor);
};

// Derivatives of sum_columns(output . output_grad) with respect to every
// parameter and to the inputs.
Gradients backward(const DenseNet& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& output_grad);

struct AdamState {
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_biases, v_biases;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_net(const DenseNet& net);
};

bool operator==(const AdamState& a, const AdamState& b);

// Gradient descent step: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
// Throws NumericalError (state untouched) if any gradient is non-finite.
void adam_update(DenseNet& net, const Gradients& grads, AdamState& state,
                 double lr);

// Flat views used by checksums, finite-difference checks and serialisation.
// Order: layer by layer, weights row-major then bias.
Eigen::VectorXd flatten(const DenseNet& net);
void unflatten(DenseNet& net, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten(const Gradients& grads);

}  // namespace d4pg

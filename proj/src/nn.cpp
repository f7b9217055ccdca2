#include "d4pg/nn.hpp"

#include <cmath>
#include <random>
#include <string>

#include "d4pg/errors.hpp"

namespace d4pg {
namespace {

void activate(Activation act, Eigen::MatrixXd& m) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::kTanh:
      m = m.array().tanh().matrix();
      break;
  }
}

// grad <- grad * act'(pre), where `post` = act(pre).
void activation_backward(Activation act, const Eigen::MatrixXd& pre,
                         const Eigen::MatrixXd& post, Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      grad = (pre.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::kTanh:
      grad = (grad.array() * (1.0 - post.array().square())).matrix();
      break;
  }
}

Activation layer_activation(const NetSpec& spec, int layer) {
  return layer + 1 == spec.num_layers() ? spec.output : spec.hidden;
}

}  // namespace

void NetSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw ConfigError("NetSpec needs at least an input and an output size");
  }
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (layer_sizes[i] < 1) {
      throw ConfigError("NetSpec layer " + std::to_string(i) +
                        " has non-positive size " +
                        std::to_string(layer_sizes[i]));
    }
  }
}

DenseNet DenseNet::zeros(const NetSpec& spec) {
  spec.validate();
  DenseNet net;
  net.spec = spec;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    net.layers.push_back(
        {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  return net;
}

std::size_t DenseNet::num_parameters() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  }
  return n;
}

bool DenseNet::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

bool operator==(const DenseNet& a, const DenseNet& b) {
  if (!(a.spec == b.spec) || a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weights != b.layers[l].weights ||
        a.layers[l].bias != b.layers[l].bias) {
      return false;
    }
  }
  return true;
}

DenseNet init_net(const NetSpec& spec, std::uint64_t seed) {
  DenseNet net = DenseNet::zeros(spec);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = dist(rng);
      }
    }
  }
  return net;
}

Forward forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != net.spec.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(inputs.rows()) +
                     " rows, network expects " +
                     std::to_string(net.spec.input_dim()));
  }
  Forward result;
  auto& cache = result.cache;
  cache.inputs.reserve(net.layers.size());
  cache.pre.reserve(net.layers.size());
  Eigen::MatrixXd activation = inputs;
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto& layer = net.layers[l];
    Eigen::MatrixXd pre = layer.weights * activation;
    pre.colwise() += layer.bias;
    cache.inputs.push_back(std::move(activation));
    activation = pre;
    activate(layer_activation(net.spec, l), activation);
    cache.pre.push_back(std::move(pre));
  }
  cache.output = activation;
  result.output = std::move(activation);
  return result;
}

Forward forward(const DenseNet& net, const Eigen::VectorXd& input) {
  return forward_batch(net, Eigen::MatrixXd(input));
}

Eigen::VectorXd predict(const DenseNet& net, const Eigen::VectorXd& input) {
  if (input.size() != net.spec.input_dim()) {
    throw ShapeError("predict: input has " + std::to_string(input.size()) +
                     " entries, network expects " +
                     std::to_string(net.spec.input_dim()));
  }
  Eigen::MatrixXd activation = input;
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto& layer = net.layers[l];
    Eigen::MatrixXd pre = layer.weights * activation;
    pre.colwise() += layer.bias;
    activate(layer_activation(net.spec, l), pre);
    activation = std::move(pre);
  }
  return activation.col(0);
}

Gradients Gradients::zeros_like(const DenseNet& net) {
  Gradients g;
  for (const auto& layer : net.layers) {
    g.weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  g.input = Eigen::MatrixXd::Zero(net.spec.input_dim(), 1);
  return g;
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& w : weights) total += w.squaredNorm();
  for (const auto& b : biases) total += b.squaredNorm();
  return total;
}

bool Gradients::all_finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

void Gradients::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
  input *= factor;
}

Gradients backward(const DenseNet& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& output_grad) {
  const int layers = net.num_layers();
  if (static_cast<int>(cache.pre.size()) != layers ||
      static_cast<int>(cache.inputs.size()) != layers) {
    throw ShapeError("backward: cache has " + std::to_string(cache.pre.size()) +
                     " layers, network has " + std::to_string(layers));
  }
  for (int l = 0; l < layers; ++l) {
    if (cache.pre[l].rows() != net.layers[l].weights.rows() ||
        cache.inputs[l].rows() != net.layers[l].weights.cols()) {
      throw ShapeError("backward: stale cache at layer " + std::to_string(l));
    }
  }
  if (output_grad.rows() != net.spec.output_dim() ||
      output_grad.cols() != cache.output.cols()) {
    throw ShapeError("backward: output_grad is " +
                     std::to_string(output_grad.rows()) + "x" +
                     std::to_string(output_grad.cols()) + ", expected " +
                     std::to_string(net.spec.output_dim()) + "x" +
                     std::to_string(cache.output.cols()));
  }

  Gradients grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  Eigen::MatrixXd delta = output_grad;
  for (int l = layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd& post = l + 1 == layers ? cache.output : cache.inputs[l + 1];
    activation_backward(layer_activation(net.spec, l), cache.pre[l], post, delta);
    grads.weights[l].noalias() = delta * cache.inputs[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    Eigen::MatrixXd next = net.layers[l].weights.transpose() * delta;
    delta = std::move(next);
  }
  grads.input = std::move(delta);
  return grads;
}

AdamState AdamState::for_net(const DenseNet& net) {
  AdamState s;
  for (const auto& layer : net.layers) {
    s.m_weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    s.v_weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    s.m_biases.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    s.v_biases.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return s;
}

bool operator==(const AdamState& a, const AdamState& b) {
  return a.m_weights == b.m_weights && a.v_weights == b.v_weights &&
         a.m_biases == b.m_biases && a.v_biases == b.v_biases &&
         a.step_count == b.step_count && a.beta1 == b.beta1 &&
         a.beta2 == b.beta2 && a.eps == b.eps;
}

void adam_update(DenseNet& net, const Gradients& grads, AdamState& state,
                 double lr) {
  const std::size_t layers = net.layers.size();
  if (grads.weights.size() != layers || grads.biases.size() != layers ||
      state.m_weights.size() != layers) {
    throw ShapeError("adam_update: layer count mismatch");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& layer = net.layers[l];
    if (grads.weights[l].rows() != layer.weights.rows() ||
        grads.weights[l].cols() != layer.weights.cols() ||
        grads.biases[l].size() != layer.bias.size() ||
        state.m_weights[l].rows() != layer.weights.rows() ||
        state.m_weights[l].cols() != layer.weights.cols()) {
      throw ShapeError("adam_update: shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!grads.all_finite()) {
    throw NumericalError("adam_update: non-finite gradient");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;

  auto step = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers; ++l) {
    step(net.layers[l].weights, state.m_weights[l], state.v_weights[l], grads.weights[l]);
    step(net.layers[l].bias, state.m_biases[l], state.v_biases[l], grads.biases[l]);
  }
}

Eigen::VectorXd flatten(const DenseNet& net) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(net.num_parameters()));
  Eigen::Index k = 0;
  for (const auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat[k++] = layer.weights(r, c);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) flat[k++] = layer.bias[r];
  }
  return flat;
}

void unflatten(DenseNet& net, const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(net.num_parameters())) {
    throw ShapeError("unflatten: expected " + std::to_string(net.num_parameters()) +
                     " values, got " + std::to_string(flat.size()));
  }
  Eigen::Index k = 0;
  for (auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = flat[k++];
  }
}

Eigen::VectorXd flatten(const Gradients& grads) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    n += grads.weights[l].size() + grads.biases[l].size();
  }
  Eigen::VectorXd flat(n);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    const auto& w = grads.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat[k++] = w(r, c);
    }
    for (Eigen::Index r = 0; r < grads.biases[l].size(); ++r) flat[k++] = grads.biases[l][r];
  }
  return flat;
}

}  // namespace d4pg

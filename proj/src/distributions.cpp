#include "d4pg/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "d4pg/errors.hpp"

namespace d4pg {
namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::kCategorical:
      return "categorical";
    case HeadKind::kMixtureOfGaussians:
      return "mog";
    case HeadKind::kScalar:
      return "scalar";
  }
  return "?";
}

HeadKind parse_head_kind(std::string_view name) {
  if (name == "categorical") return HeadKind::kCategorical;
  if (name == "mog") return HeadKind::kMixtureOfGaussians;
  if (name == "scalar") return HeadKind::kScalar;
  throw ConfigError("unknown head kind '" + std::string(name) +
                    "' (expected categorical|mog|scalar)");
}

Support make_support(int num_atoms, double v_min, double v_max) {
  if (num_atoms < 2) throw ConfigError("support needs at least 2 atoms");
  if (!(v_min < v_max)) throw ConfigError("support needs v_min < v_max");
  Support s;
  s.num_atoms = num_atoms;
  s.v_min = v_min;
  s.v_max = v_max;
  s.delta = (v_max - v_min) / (num_atoms - 1);
  s.atoms.resize(num_atoms);
  for (int i = 0; i < num_atoms; ++i) s.atoms[i] = v_min + i * s.delta;
  s.atoms[num_atoms - 1] = v_max;
  return s;
}

ProjectedTarget project_categorical(const Eigen::VectorXd& target_atoms,
                                    const Eigen::VectorXd& target_probs,
                                    const Support& support) {
  if (target_atoms.size() != target_probs.size()) {
    throw ShapeError("project_categorical: atoms/probs length mismatch");
  }
  if ((target_probs.array() < 0.0).any() || std::abs(target_probs.sum() - 1.0) > 1e-9) {
    throw ContractViolation("project_categorical: target probabilities not normalised");
  }
  const int n = support.num_atoms;
  const Eigen::VectorXd& z = support.atoms;
  ProjectedTarget out{Eigen::VectorXd::Zero(n)};
  for (Eigen::Index j = 0; j < target_atoms.size(); ++j) {
    const double p = target_probs[j];
    const double x = target_atoms[j];
    if (p == 0.0) continue;
    if (x <= support.v_min) {
      out.probs[0] += p;
      continue;
    }
    if (x >= support.v_max) {
      out.probs[n - 1] += p;
      continue;
    }
    int lo = static_cast<int>(std::floor((x - support.v_min) / support.delta));
    lo = std::clamp(lo, 0, n - 2);
    // Guard against the index estimate landing one cell off.
    while (lo > 0 && x < z[lo]) --lo;
    while (lo < n - 2 && x > z[lo + 1]) ++lo;
    const double width = z[lo + 1] - z[lo];
    out.probs[lo] += (z[lo + 1] - x) / width * p;
    out.probs[lo + 1] += (x - z[lo]) / width * p;
  }
  return out;
}

Eigen::VectorXd bellman_shift(const Support& support, double cumulative_reward,
                              double effective_discount) {
  return (cumulative_reward + effective_discount * support.atoms.array()).matrix();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  return (logits.array() - log_sum_exp(logits)).matrix();
}

LossAndGrad categorical_cross_entropy(const ProjectedTarget& target,
                                      const Eigen::VectorXd& logits) {
  if (target.probs.size() != logits.size()) {
    throw ShapeError("categorical_cross_entropy: target/logit length mismatch");
  }
  if (!logits.allFinite()) throw NumericalError("categorical_cross_entropy: non-finite logits");
  const Eigen::VectorXd log_p = log_softmax(logits);
  LossAndGrad out;
  out.loss = -target.probs.dot(log_p);
  out.grad = log_p.array().exp().matrix() - target.probs;
  return out;
}

double categorical_mean(const Eigen::VectorXd& probs, const Support& support) {
  if (probs.size() != support.num_atoms) {
    throw ShapeError("categorical_mean: probs length does not match support");
  }
  return probs.dot(support.atoms);
}

Eigen::VectorXd MoGParams::scales() const {
  return raw_scales.unaryExpr([](double s) { return softplus(s) + kMoGScaleFloor; });
}

MoGParams MoGParams::from_flat(const Eigen::VectorXd& flat) {
  if (flat.size() % 3 != 0 || flat.size() == 0) {
    throw ShapeError("MoGParams::from_flat: length must be a positive multiple of 3");
  }
  const Eigen::Index k = flat.size() / 3;
  return {flat.segment(0, k), flat.segment(k, k), flat.segment(2 * k, k)};
}

Eigen::VectorXd MoGParams::to_flat() const {
  Eigen::VectorXd flat(3 * size());
  flat << raw_weights, means, raw_scales;
  return flat;
}

namespace {

// log(w_i) + log N(y | mu_i, sigma_i^2) per component.
Eigen::VectorXd component_log_terms(const Eigen::VectorXd& log_w, const MoGParams& p,
                                    const Eigen::VectorXd& sigma, double y) {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  Eigen::VectorXd out(p.size());
  for (int i = 0; i < p.size(); ++i) {
    const double u = (y - p.means[i]) / sigma[i];
    out[i] = log_w[i] - kHalfLog2Pi - std::log(sigma[i]) - 0.5 * u * u;
  }
  return out;
}

}  // namespace

double mog_log_density(const MoGParams& params, double z) {
  return log_sum_exp(component_log_terms(log_softmax(params.raw_weights), params,
                                         params.scales(), z));
}

double mog_density(const MoGParams& params, double z) {
  return std::exp(mog_log_density(params, z));
}

double mog_mean(const MoGParams& params) { return params.weights().dot(params.means); }

Eigen::VectorXd mog_sample(const MoGParams& params, std::mt19937_64& rng, int count) {
  const Eigen::VectorXd w = params.weights();
  const Eigen::VectorXd sigma = params.scales();
  Eigen::VectorXd out(count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int j = 0; j < count; ++j) {
    double u = unit(rng);
    int c = 0;
    while (c + 1 < params.size() && u >= w[c]) {
      u -= w[c];
      ++c;
    }
    std::normal_distribution<double> gauss(params.means[c], sigma[c]);
    out[j] = gauss(rng);
  }
  return out;
}

MoGLoss mog_cross_entropy(const MoGParams& online, double cumulative_reward,
                          double effective_discount,
                          const Eigen::VectorXd& target_samples) {
  if (target_samples.size() < 1) {
    throw ContractViolation("mog_cross_entropy: need at least one target sample");
  }
  const int k = online.size();
  const Eigen::VectorXd log_w = log_softmax(online.raw_weights);
  const Eigen::VectorXd w = log_w.array().exp().matrix();
  const Eigen::VectorXd sigma = online.scales();
  static const double kLogUnderflow = std::log(1e-300);

  MoGLoss out;
  out.grad = {Eigen::VectorXd::Zero(k), Eigen::VectorXd::Zero(k), Eigen::VectorXd::Zero(k)};
  const double inv_j = 1.0 / static_cast<double>(target_samples.size());
  for (Eigen::Index j = 0; j < target_samples.size(); ++j) {
    const double y = cumulative_reward + effective_discount * target_samples[j];
    const Eigen::VectorXd terms = component_log_terms(log_w, online, sigma, y);
    const double log_p = log_sum_exp(terms);
    if (log_p < kLogUnderflow) out.underflow = true;
    out.loss -= inv_j * log_p;
    for (int i = 0; i < k; ++i) {
      const double resp = std::exp(terms[i] - log_p);
      const double diff = y - online.means[i];
      const double s2 = sigma[i] * sigma[i];
      out.grad.raw_weights[i] -= inv_j * (resp - w[i]);
      out.grad.means[i] -= inv_j * resp * diff / s2;
      const double dsigma = resp * (-1.0 / sigma[i] + diff * diff / (s2 * sigma[i]));
      out.grad.raw_scales[i] -= inv_j * dsigma * sigmoid(online.raw_scales[i]);
    }
  }
  if (!std::isfinite(out.loss)) throw NumericalError("mog_cross_entropy: non-finite loss");
  return out;
}

ScalarLoss scalar_td_loss(double q, double target) {
  const double diff = q - target;
  return {0.5 * diff * diff, diff};
}

double priority_of(double loss_or_td, HeadKind kind, double floor) {
  double p = 0.0;
  switch (kind) {
    case HeadKind::kScalar:
      p = std::abs(loss_or_td);
      break;
    case HeadKind::kCategorical:
      p = loss_or_td;
      break;
    case HeadKind::kMixtureOfGaussians:
      p = std::max(loss_or_td, 0.0);
      break;
  }
  return std::max(p, floor);
}

}  // namespace d4pg

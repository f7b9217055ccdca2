#pragma once

// Return-distribution heads for the critic and their losses.
//
//  * Categorical: logits over a fixed, evenly spaced support of atoms.
//    Bellman targets are shifted atoms r + gamma^k z_i, projected back onto
//    the support by splitting each atom's mass linearly between its two
//    neighbours (the "hat" projection).
//  * Mixture of Gaussians: softmaxed weights, means, softplus scales.
//    Trained by sample-based negative log-likelihood of target samples.
//  * Scalar: plain Q value with a squared TD loss (the non-distributional
//    ablation).

#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace d4pg {

enum class HeadKind { kCategorical, kMixtureOfGaussians, kScalar };

std::string to_string(HeadKind kind);
// Accepts "categorical", "mog" and "scalar". Throws ConfigError.
HeadKind parse_head_kind(std::string_view name);

inline constexpr double kPriorityFloor = 1e-3;

struct Support {
  int num_atoms = 0;
  double v_min = 0.0;
  double v_max = 0.0;
  double delta = 0.0;
  Eigen::VectorXd atoms;
};

// Throws ConfigError unless num_atoms >= 2 and v_min < v_max.
Support make_support(int num_atoms, double v_min, double v_max);

struct ProjectedTarget {
  Eigen::VectorXd probs;
};

// Projects the discrete distribution {(target_atoms[j], target_probs[j])} onto
// `support`. Mass outside [v_min, v_max] lands on the nearest end atom.
// Throws ContractViolation when the probabilities are negative or do not sum
// to one within 1e-9.
ProjectedTarget project_categorical(const Eigen::VectorXd& target_atoms,
                                    const Eigen::VectorXd& target_probs,
                                    const Support& support);

// r + discount * z_i for every atom.
Eigen::VectorXd bellman_shift(const Support& support, double cumulative_reward,
                              double effective_discount);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

struct LossAndGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// -sum_i p'_i log softmax(logits)_i, gradient softmax(logits) - p'.
// Throws NumericalError on non-finite logits.
LossAndGrad categorical_cross_entropy(const ProjectedTarget& target,
                                      const Eigen::VectorXd& logits);

double categorical_mean(const Eigen::VectorXd& probs, const Support& support);

// Mixture of Gaussians over returns. Flat layout on the critic output is
// [raw_weights; means; raw_scales].
struct MoGParams {
  Eigen::VectorXd raw_weights;
  Eigen::VectorXd means;
  Eigen::VectorXd raw_scales;

  int size() const { return static_cast<int>(means.size()); }
  Eigen::VectorXd weights() const { return softmax(raw_weights); }
  // softplus(raw) + 1e-4
  Eigen::VectorXd scales() const;

  static MoGParams from_flat(const Eigen::VectorXd& flat);
  Eigen::VectorXd to_flat() const;
};

inline constexpr double kMoGScaleFloor = 1e-4;

double mog_log_density(const MoGParams& params, double z);
double mog_density(const MoGParams& params, double z);
double mog_mean(const MoGParams& params);
Eigen::VectorXd mog_sample(const MoGParams& params, std::mt19937_64& rng, int count);

struct MoGLoss {
  double loss = 0.0;
  MoGParams grad;
  // Set when the target density would underflow 1e-300 in linear space.
  bool underflow = false;
};

// -(1/J) sum_j log p(r + discount * z_j) under the online mixture.
MoGLoss mog_cross_entropy(const MoGParams& online, double cumulative_reward,
                          double effective_discount,
                          const Eigen::VectorXd& target_samples);

struct ScalarLoss {
  double loss = 0.0;
  double grad = 0.0;
};

// 0.5 (q - y)^2.
ScalarLoss scalar_td_loss(double q, double target);

// Replay priority from a per-sample loss (distributional heads) or TD error
// (scalar head), floored at `floor`.
double priority_of(double loss_or_td, HeadKind kind, double floor = kPriorityFloor);

}  // namespace d4pg

#include "d4pg/envs.hpp"

#include <cmath>
#include <numbers>

#include "d4pg/errors.hpp"

namespace d4pg {

double soft_indicator(double eps, double c, double m) {
  if (!(m > 0.0)) throw ConfigError("soft_indicator: margin must be positive");
  if (eps <= c) return 1.0;
  static const double w = std::atanh(std::sqrt(0.95));
  // sech^2 rather than 1 - tanh^2 keeps the value positive far from the target.
  const double ch = std::cosh(w * eps / m);
  return 1.0 / (ch * ch);
}

Eigen::VectorXd Env::clip_action(const Eigen::VectorXd& action) {
  const auto& b = spec().bounds;
  if (action.size() != b.low.size()) {
    throw ShapeError(name() + ": action has " + std::to_string(action.size()) +
                     " entries, expected " + std::to_string(b.low.size()));
  }
  if (!b.contains(action)) ++clipped_actions_;
  return b.clip(action);
}

namespace {

void expect_state_size(std::span<const double> state, std::size_t n, const char* who) {
  if (state.size() != n) {
    throw LoadError(std::string(who) + ": expected " + std::to_string(n) +
                    " state values, got " + std::to_string(state.size()));
  }
}

}  // namespace

// --- pendulum ---

Pendulum::Pendulum() {
  spec_.observation_dim = 3;
  spec_.action_dim = 1;
  spec_.bounds = {Eigen::VectorXd::Constant(1, -kMaxTorque),
                  Eigen::VectorXd::Constant(1, kMaxTorque)};
  spec_.episode_limit = kEpisodeLimit;
}

Eigen::VectorXd Pendulum::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> start(std::numbers::pi - 0.1, std::numbers::pi + 0.1);
  theta_ = start(rng);
  theta_dot_ = 0.0;
  steps_ = 0;
  return observe();
}

StepResult Pendulum::step(const Eigen::VectorXd& action) {
  const double torque = clip_action(action)[0];
  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                       3.0 * torque / (kMass * kLength * kLength);
  // Semi-implicit Euler: velocity first, then position with the new velocity.
  theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
  theta_ += theta_dot_ * kDt;
  ++steps_;
  StepResult r;
  r.observation = observe();
  r.reward = 0.5 * (1.0 + std::cos(theta_));
  r.truncated = steps_ >= kEpisodeLimit;
  return r;
}

Eigen::VectorXd Pendulum::observe() const {
  Eigen::VectorXd obs(3);
  obs << std::cos(theta_), std::sin(theta_), theta_dot_ / kMaxSpeed;
  return obs;
}

void Pendulum::set_state(std::span<const double> state) {
  expect_state_size(state, 3, "pendulum");
  theta_ = state[0];
  theta_dot_ = state[1];
  steps_ = static_cast<int>(state[2]);
}

void Pendulum::set_physical_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

double Pendulum::energy(double theta, double theta_dot) {
  return 0.5 * theta_dot * theta_dot + 3.0 * kGravity / (2.0 * kLength) * std::cos(theta);
}

// --- point mass ---

PointMass::PointMass() {
  spec_.observation_dim = 6;
  spec_.action_dim = 2;
  spec_.bounds = {Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0)};
  spec_.episode_limit = kEpisodeLimit;
}

Eigen::VectorXd PointMass::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> arena(-1.0, 1.0);
  pos_ = {arena(rng), arena(rng)};
  target_ = {arena(rng), arena(rng)};
  vel_.setZero();
  steps_ = 0;
  return observe();
}

StepResult PointMass::step(const Eigen::VectorXd& action) {
  const Eigen::VectorXd a = clip_action(action);
  vel_ += a * kDt - kDamping * vel_ * kDt;
  pos_ += vel_ * kDt;
  for (int d = 0; d < 2; ++d) {
    if (pos_[d] < -1.0 || pos_[d] > 1.0) {
      pos_[d] = std::clamp(pos_[d], -1.0, 1.0);
      vel_[d] = 0.0;
    }
  }
  ++steps_;
  StepResult r;
  r.observation = observe();
  r.reward = soft_indicator((pos_ - target_).norm(), 0.05, 0.2);
  r.truncated = steps_ >= kEpisodeLimit;
  return r;
}

Eigen::VectorXd PointMass::observe() const {
  Eigen::VectorXd obs(6);
  obs << pos_, vel_, target_;
  return obs;
}

std::vector<double> PointMass::state() const {
  return {pos_[0], pos_[1], vel_[0], vel_[1], target_[0], target_[1], double(steps_)};
}

void PointMass::set_state(std::span<const double> state) {
  expect_state_size(state, 7, "point_mass");
  pos_ = {state[0], state[1]};
  vel_ = {state[2], state[3]};
  target_ = {state[4], state[5]};
  steps_ = static_cast<int>(state[6]);
}

void PointMass::set_physical_state(const Eigen::Vector2d& pos, const Eigen::Vector2d& vel,
                                   const Eigen::Vector2d& target) {
  pos_ = pos;
  vel_ = vel;
  target_ = target;
}

// --- lq ---

LqEnv::LqEnv() {
  spec_.observation_dim = 2;
  spec_.action_dim = 1;
  spec_.bounds = {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)};
  spec_.episode_limit = kEpisodeLimit;
}

double LqEnv::transition(Eigen::Vector2d& state, double action) {
  state[1] += action * kDt - kDamping * state[1] * kDt;
  state[0] += state[1] * kDt;
  return soft_indicator(std::abs(state[0]), 0.05, 0.4);
}

Eigen::VectorXd LqEnv::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  std::uniform_real_distribution<double> vel(-0.2, 0.2);
  pos_ = pos(rng);
  vel_ = vel(rng);
  steps_ = 0;
  return observe();
}

StepResult LqEnv::step(const Eigen::VectorXd& action) {
  Eigen::Vector2d s(pos_, vel_);
  StepResult r;
  r.reward = transition(s, clip_action(action)[0]);
  pos_ = s[0];
  vel_ = s[1];
  ++steps_;
  r.observation = observe();
  r.truncated = steps_ >= kEpisodeLimit;
  return r;
}

Eigen::VectorXd LqEnv::observe() const { return Eigen::Vector2d(pos_, vel_); }

void LqEnv::set_state(std::span<const double> state) {
  expect_state_size(state, 3, "lq");
  pos_ = state[0];
  vel_ = state[1];
  steps_ = static_cast<int>(state[2]);
}

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "point_mass") return std::make_unique<PointMass>();
  if (name == "lq") return std::make_unique<LqEnv>();
  throw ConfigError("unknown environment '" + name + "' (expected pendulum|point_mass|lq)");
}

double monte_carlo_q(const Policy& policy, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& action, double gamma, int horizon,
                     int episodes) {
  if (x.size() != 2 || action.size() != 1) {
    throw ShapeError("monte_carlo_q: expects an lq state (pos, vel) and a scalar action");
  }
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Eigen::Vector2d state = x;
    double a = std::clamp(action[0], -1.0, 1.0);
    double ret = 0.0;
    double discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
      ret += discount * LqEnv::transition(state, a);
      discount *= gamma;
      a = std::clamp(policy(Eigen::VectorXd(state))[0], -1.0, 1.0);
    }
    total += ret;
  }
  return total / episodes;
}

}  // namespace d4pg

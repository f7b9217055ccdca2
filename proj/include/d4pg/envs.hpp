#pragma once

// Self-contained continuous-control tasks with rewards in [0, 1].
//
//   pendulum    torque-limited swing-up, 1000-step episodes
//   point_mass  2-D double integrator reaching a random target, 500 steps
//   lq          1-D deterministic double integrator used as a Q oracle

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace d4pg {

struct ActionBounds {
  Eigen::VectorXd low;
  Eigen::VectorXd high;

  Eigen::VectorXd center() const { return (high + low) / 2.0; }
  Eigen::VectorXd half_range() const { return (high - low) / 2.0; }
  Eigen::VectorXd clip(const Eigen::VectorXd& a) const { return a.cwiseMax(low).cwiseMin(high); }
  bool contains(const Eigen::VectorXd& a) const {
    return (a.array() >= low.array()).all() && (a.array() <= high.array()).all();
  }
};

struct EnvSpec {
  int observation_dim = 0;
  int action_dim = 0;
  ActionBounds bounds;
  int episode_limit = 1;
};

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

// 1 - tanh(w eps / m)^2 when eps > c, else 1, with w = atanh(sqrt(0.95)).
// The tanh argument is eps itself, not eps - c. Throws ConfigError if m <= 0.
double soft_indicator(double eps, double c, double m);

class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::string name() const = 0;
  // Randomness comes only from `rng`; the env keeps no generator of its own.
  virtual Eigen::VectorXd reset(std::mt19937_64& rng) = 0;
  // Out-of-bounds actions are clipped and counted.
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
  virtual Eigen::VectorXd observe() const = 0;

  // Full physical state plus the episode step counter, for checkpoints.
  virtual std::vector<double> state() const = 0;
  virtual void set_state(std::span<const double> state) = 0;

  std::int64_t clipped_actions() const { return clipped_actions_; }

 protected:
  Eigen::VectorXd clip_action(const Eigen::VectorXd& action);

  std::int64_t clipped_actions_ = 0;
};

// theta_ddot = 3g/(2l) sin(theta) + 3a/(m l^2), theta = 0 upright.
// Observation (cos theta, sin theta, theta_dot / 8).
class Pendulum final : public Env {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMass = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr int kEpisodeLimit = 1000;

  Pendulum();

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "pendulum"; }
  Eigen::VectorXd reset(std::mt19937_64& rng) override;
  StepResult step(const Eigen::VectorXd& action) override;
  Eigen::VectorXd observe() const override;
  std::vector<double> state() const override { return {theta_, theta_dot_, double(steps_)}; }
  void set_state(std::span<const double> state) override;

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  void set_physical_state(double theta, double theta_dot);

  // 0.5 theta_dot^2 + 3g/(2l) cos(theta); conserved by the unforced dynamics.
  static double energy(double theta, double theta_dot);

 private:
  EnvSpec spec_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int steps_ = 0;
};

// Damped 2-D double integrator in [-1, 1]^2 with wall clamping.
// Observation (pos, vel, target). Reward soft_indicator(|pos - target|; 0.05, 0.2).
class PointMass final : public Env {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kDamping = 0.1;
  static constexpr int kEpisodeLimit = 500;

  PointMass();

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "point_mass"; }
  Eigen::VectorXd reset(std::mt19937_64& rng) override;
  StepResult step(const Eigen::VectorXd& action) override;
  Eigen::VectorXd observe() const override;
  std::vector<double> state() const override;
  void set_state(std::span<const double> state) override;

  void set_physical_state(const Eigen::Vector2d& pos, const Eigen::Vector2d& vel,
                          const Eigen::Vector2d& target);
  const Eigen::Vector2d& position() const { return pos_; }

 private:
  EnvSpec spec_;
  Eigen::Vector2d pos_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d vel_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d target_ = Eigen::Vector2d::Zero();
  int steps_ = 0;
};

// Deterministic scalar double integrator (pos, vel), a in [-1, 1],
// reward soft_indicator(|pos|; 0.05, 0.4), 200-step episodes.
class LqEnv final : public Env {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kDamping = 0.1;
  static constexpr int kEpisodeLimit = 200;

  LqEnv();

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "lq"; }
  Eigen::VectorXd reset(std::mt19937_64& rng) override;
  StepResult step(const Eigen::VectorXd& action) override;
  Eigen::VectorXd observe() const override;
  std::vector<double> state() const override { return {pos_, vel_, double(steps_)}; }
  void set_state(std::span<const double> state) override;

  // One step of the dynamics from an arbitrary state, no episode bookkeeping.
  // Returns the reward; `state` is updated in place.
  static double transition(Eigen::Vector2d& state, double action);

 private:
  EnvSpec spec_;
  double pos_ = 0.0;
  double vel_ = 0.0;
  int steps_ = 0;
};

// Throws ConfigError for unknown names.
std::unique_ptr<Env> make_env(const std::string& name);

using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Discounted return of taking `action` in lq state `x` and then following
// `policy`, truncated after `horizon` rewards, averaged over `episodes`
// rollouts. The dynamics are deterministic, so a single rollout is exact.
double monte_carlo_q(const Policy& policy, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& action, double gamma, int horizon,
                     int episodes);

}  // namespace d4pg

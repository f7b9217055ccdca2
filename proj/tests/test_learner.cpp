#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "d4pg/errors.hpp"
#include "d4pg/learner.hpp"
#include "oracles/oracles.hpp"

using namespace d4pg;

namespace {

LearnerConfig small_config(HeadKind head) {
  LearnerConfig c;
  c.head = head;
  c.hidden = {8, 8};
  c.batch = 4;
  c.atoms = 11;
  c.v_min = -5.0;
  c.v_max = 5.0;
  c.mixture_size = 3;
  c.mog_samples = 4;
  return c;
}

EnvSpec lq_spec() { return LqEnv().spec(); }

SampledBatch random_batch(std::mt19937_64& rng, int m, double discount = 0.9) {
  std::normal_distribution<double> g(0.0, 1.0);
  SampledBatch b;
  for (int i = 0; i < m; ++i) {
    Transition t;
    t.x = Eigen::Vector2d(g(rng), g(rng));
    t.a = Eigen::VectorXd::Constant(1, std::tanh(g(rng)));
    t.cumulative_reward = g(rng);
    t.bootstrap_x = Eigen::Vector2d(g(rng), g(rng));
    t.effective_discount = discount;
    b.transitions.push_back(t);
    b.indices.push_back(i);
    b.generations.push_back(i + 1);
    b.probabilities.push_back(1.0 / m);
    b.weights.push_back(1.0);
  }
  return b;
}

// Scramble every parameter so the nets are not near the small-output init.
void randomize(DenseNet& net, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  for (auto& l : net.layers) {
    l.weights = l.weights.unaryExpr([&](double) { return g(rng); });
    l.bias = l.bias.unaryExpr([&](double) { return g(rng); });
  }
}

bool has_kink(const DenseNet& net, const Eigen::MatrixXd& in, double margin) {
  const Forward f = forward_batch(net, in);
  for (std::size_t l = 0; l + 1 < f.cache.pre.size(); ++l) {
    if ((f.cache.pre[l].array().abs() < margin).any()) return true;
  }
  return false;
}

Eigen::MatrixXd critic_in(const Learner& L, const SampledBatch& b, bool policy_actions,
                          bool bootstrap) {
  Eigen::MatrixXd in(3, static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto& t = b.transitions[i];
    const Eigen::VectorXd& x = bootstrap ? t.bootstrap_x : t.x;
    Eigen::VectorXd a = t.a;
    if (policy_actions) {
      const DenseNet& actor = bootstrap ? L.nets().target_actor : L.nets().actor;
      a = policy_action(actor, x, L.env_spec().bounds);
    }
    in.col(static_cast<Eigen::Index>(i)) << x, a;
  }
  return in;
}

}  // namespace

TEST(BuildTargets, ZeroDiscountIsPointMassAtReward) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 1, 2);
  std::mt19937_64 rng(3);
  SampledBatch b = random_batch(rng, 4, 0.0);
  const Targets t = L.build_targets(b);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Eigen::VectorXd expected =
        project_categorical(Eigen::VectorXd::Constant(1, b.transitions[i].cumulative_reward),
                            Eigen::VectorXd::Ones(1), L.support())
            .probs;
    EXPECT_EQ(t.categorical[i].probs, expected);
  }
}

TEST(BuildTargets, IdentityShiftReturnsTargetCriticDistribution) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 4, 5);
  std::mt19937_64 rng(6);
  randomize(L.nets().critic, rng, 0.5);
  L.nets().target_critic = L.nets().critic;
  SampledBatch b = random_batch(rng, 4, 1.0);
  for (auto& t : b.transitions) t.cumulative_reward = 0.0;
  const Targets t = L.build_targets(b);
  const Eigen::MatrixXd out = forward_batch(L.nets().target_critic, critic_in(L, b, true, true)).output;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Eigen::VectorXd p = softmax(out.col(static_cast<Eigen::Index>(i)));
    EXPECT_LT((t.categorical[i].probs - p).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(BuildTargets, ScalarHandArithmetic) {
  Learner L(small_config(HeadKind::kScalar), lq_spec(), 1, 2);
  auto& last = L.nets().target_critic.layers.back();
  last.weights.setZero();
  last.bias[0] = 4.0;
  std::mt19937_64 rng(7);
  SampledBatch b = random_batch(rng, 1, 0.125);
  b.transitions[0].cumulative_reward = 2.75;
  EXPECT_EQ(L.build_targets(b).scalar[0], 3.25);
}

TEST(BuildTargets, OneStepMatchesDirectBellmanOperator) {
  LearnerConfig c = small_config(HeadKind::kCategorical);
  c.nstep = 1;
  Learner L(c, lq_spec(), 8, 9);
  std::mt19937_64 rng(10);
  randomize(L.nets().target_critic, rng, 0.7);
  randomize(L.nets().target_actor, rng, 0.7);
  SampledBatch b = random_batch(rng, 16, c.gamma);
  const Targets t = L.build_targets(b);
  const Eigen::MatrixXd out = forward_batch(L.nets().target_critic, critic_in(L, b, true, true)).output;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Eigen::VectorXd shifted =
        (b.transitions[i].cumulative_reward + c.gamma * L.support().atoms.array()).matrix();
    const Eigen::VectorXd expected = oracle::hat_projection(
        L.support().atoms, shifted, softmax(out.col(static_cast<Eigen::Index>(i))));
    EXPECT_LT((t.categorical[i].probs - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CriticStep, UnitWeightsGiveMeanOfPerSampleGradients) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 11, 12);
  std::mt19937_64 rng(13);
  randomize(L.nets().critic, rng, 0.5);
  SampledBatch b = random_batch(rng, 4);
  const Targets t = L.build_targets(b);
  const CriticGradient full = L.critic_gradient(b, t);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(flatten(full.grads).size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    SampledBatch one;
    one.transitions = {b.transitions[i]};
    one.weights = {1.0};
    Targets ti;
    ti.kind = t.kind;
    ti.categorical = {t.categorical[i]};
    mean += flatten(L.critic_gradient(one, ti).grads) / 4.0;
  }
  EXPECT_LT((flatten(full.grads) - mean).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CriticStep, ImportanceWeightScalesContributionLinearly) {
  Learner L(small_config(HeadKind::kScalar), lq_spec(), 14, 15);
  std::mt19937_64 rng(16);
  randomize(L.nets().critic, rng, 0.5);
  SampledBatch b = random_batch(rng, 2);
  const Targets t = L.build_targets(b);
  auto grad_with = [&](double w0, double w1) {
    b.weights = {w0, w1};
    return flatten(L.critic_gradient(b, t).grads);
  };
  const Eigen::VectorXd doubled = grad_with(2.0, 1.0);
  const Eigen::VectorXd base = grad_with(1.0, 1.0);
  const Eigen::VectorXd first_only = grad_with(1.0, 0.0);
  EXPECT_LT((doubled - base - first_only).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(CriticStep, PerfectCriticLeavesParametersUnchanged) {
  Learner L(small_config(HeadKind::kScalar), lq_spec(), 17, 18);
  std::mt19937_64 rng(19);
  SampledBatch b = random_batch(rng, 4);
  Targets t;
  t.kind = HeadKind::kScalar;
  const Eigen::MatrixXd q = forward_batch(L.nets().critic, critic_in(L, b, false, false)).output;
  for (Eigen::Index i = 0; i < q.cols(); ++i) t.scalar.push_back(q(0, i));
  const DenseNet before = L.nets().critic;
  L.critic_step(b, t);
  EXPECT_EQ(L.nets().critic, before);
}

TEST(CriticStep, DoesNotTouchActorOrTargets) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 20, 21);
  std::mt19937_64 rng(22);
  SampledBatch b = random_batch(rng, 4);
  const NetworkQuad before = L.nets();
  L.critic_step(b, L.build_targets(b));
  EXPECT_EQ(L.nets().actor, before.actor);
  EXPECT_EQ(L.nets().target_actor, before.target_actor);
  EXPECT_EQ(L.nets().target_critic, before.target_critic);
  EXPECT_FALSE(L.nets().critic == before.critic);
}

TEST(CriticStep, TargetsAreGradientBlocked) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 23, 24);
  std::mt19937_64 rng(25);
  randomize(L.nets().critic, rng, 0.5);
  L.nets().target_critic = L.nets().critic;
  SampledBatch b = random_batch(rng, 4);
  const Targets t = L.build_targets(b);
  const CriticGradient g0 = L.critic_gradient(b, t);
  randomize(L.nets().target_critic, rng, 0.5);
  // Once targets exist the target nets play no part in the gradient.
  const CriticGradient g1 = L.critic_gradient(b, t);
  EXPECT_EQ(flatten(g0.grads), flatten(g1.grads));
  // Rebuilding targets from the perturbed nets does change the loss.
  const CriticGradient g2 = L.critic_gradient(b, L.build_targets(b));
  EXPECT_NE(g0.loss, g2.loss);
}

TEST(ActorStep, ActionIndependentCriticGivesZeroGradient) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 26, 27);
  std::mt19937_64 rng(28);
  randomize(L.nets().critic, rng, 0.5);
  L.nets().critic.layers[0].weights.rightCols(1).setZero();
  SampledBatch b = random_batch(rng, 4);
  const ActorGradient g = L.actor_gradient(b);
  EXPECT_EQ(g.grads.squared_norm(), 0.0);
}

TEST(ActorStep, DominantAtomGivesNearZeroGradient) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 29, 30);
  std::mt19937_64 rng(31);
  auto& last = L.nets().critic.layers.back();
  last.weights *= 1e-3;
  last.bias.setZero();
  last.bias[6] = 40.0;
  SampledBatch b = random_batch(rng, 4);
  EXPECT_LT(std::sqrt(L.actor_gradient(b).grads.squared_norm()), 1e-12);
}

TEST(ActorStep, MatchesFiniteDifferencesForEveryHead) {
  for (auto head : {HeadKind::kCategorical, HeadKind::kMixtureOfGaussians, HeadKind::kScalar}) {
    std::mt19937_64 rng(32);
    int checked = 0;
    for (int trial = 0; checked < 10; ++trial) {
      ASSERT_LT(trial, 200);
      Learner L(small_config(head), lq_spec(), rng(), rng());
      randomize(L.nets().critic, rng, 0.6);
      randomize(L.nets().actor, rng, 0.6);
      SampledBatch b = random_batch(rng, 3);
      const Eigen::MatrixXd xs = [&] {
        Eigen::MatrixXd m(2, 3);
        for (int i = 0; i < 3; ++i) m.col(i) = b.transitions[i].x;
        return m;
      }();
      if (has_kink(L.nets().actor, xs, 1e-2) ||
          has_kink(L.nets().critic, critic_in(L, b, true, false), 1e-2)) {
        continue;
      }
      const ActorGradient g = L.actor_gradient(b);
      const DenseNet actor = L.nets().actor;
      const Eigen::VectorXd fd = oracle::five_point_difference(
          [&](const Eigen::VectorXd& theta) {
            unflatten(L.nets().actor, theta);
            const double obj = L.actor_gradient(b).objective;
            L.nets().actor = actor;
            return obj;
          },
          flatten(actor), 1e-4);
      EXPECT_LT(oracle::max_relative_error(flatten(g.grads), fd, 1e-6), 1e-4)
          << to_string(head) << " trial " << trial;
      ++checked;
    }
  }
}

TEST(ActorStep, DoesNotTouchCritic) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 33, 34);
  std::mt19937_64 rng(35);
  randomize(L.nets().critic, rng, 0.5);
  SampledBatch b = random_batch(rng, 4);
  const NetworkQuad before = L.nets();
  L.actor_step(b);
  EXPECT_EQ(L.nets().critic, before.critic);
  EXPECT_EQ(L.nets().target_critic, before.target_critic);
  EXPECT_EQ(L.nets().target_actor, before.target_actor);
  EXPECT_FALSE(L.nets().actor == before.actor);
}

TEST(ActorStep, ImprovesTheObjectiveForSmallSteps) {
  LearnerConfig c = small_config(HeadKind::kScalar);
  c.actor_lr = 1e-4;
  Learner L(c, lq_spec(), 36, 37);
  std::mt19937_64 rng(38);
  randomize(L.nets().critic, rng, 0.5);
  randomize(L.nets().actor, rng, 0.3);
  SampledBatch b = random_batch(rng, 8);
  const double before = L.actor_gradient(b).objective;
  L.actor_step(b);
  EXPECT_GT(L.actor_gradient(b).objective, before);
}

TEST(MaybeSync, CopiesOnlyOnCadence) {
  LearnerConfig c = small_config(HeadKind::kCategorical);
  c.t_target = 3;
  Learner L(c, lq_spec(), 39, 40);
  std::mt19937_64 rng(41);
  SampledBatch b = random_batch(rng, 4);
  L.critic_step(b, L.build_targets(b));
  EXPECT_FALSE(L.maybe_sync(2));
  EXPECT_FALSE(L.nets().target_critic == L.nets().critic);
  EXPECT_TRUE(L.maybe_sync(3));
  EXPECT_EQ(L.nets().target_critic, L.nets().critic);
  EXPECT_EQ(L.nets().target_actor, L.nets().actor);
  const NetworkQuad synced = L.nets();
  EXPECT_TRUE(L.maybe_sync(6));
  EXPECT_EQ(L.nets().target_critic, synced.target_critic);
  L.critic_step(b, L.build_targets(b));
  EXPECT_FALSE(L.maybe_sync(4));
  EXPECT_FALSE(L.nets().target_critic == L.nets().critic);
}

namespace {

void fill(PrioritizedReplay& r, std::mt19937_64& rng, int n) {
  for (auto& t : random_batch(rng, n).transitions) r.insert(t);
}

}  // namespace

TEST(TrainStep, UniformReplayNeverWritesPriorities) {
  LearnerConfig c = small_config(HeadKind::kCategorical);
  c.prioritized = false;
  Learner L(c, lq_spec(), 42, 43);
  PrioritizedReplay r({.capacity = 64, .prioritized = false});
  std::mt19937_64 rng(44);
  fill(r, rng, 40);
  for (int i = 0; i < 20; ++i) L.train_step(r, nullptr);
  for (std::size_t s = 0; s < r.size(); ++s) EXPECT_EQ(r.priority(s), 1.0);
}

TEST(TrainStep, PrioritizedReplayWritesPriorities) {
  Learner L(small_config(HeadKind::kCategorical), lq_spec(), 42, 43);
  PrioritizedReplay r({.capacity = 64});
  std::mt19937_64 rng(44);
  fill(r, rng, 40);
  L.train_step(r, nullptr);
  int changed = 0;
  for (std::size_t s = 0; s < r.size(); ++s) changed += r.priority(s) != 1.0;
  EXPECT_GT(changed, 0);
}

TEST(TrainStep, SameSeedsGiveIdenticalMetricStreams) {
  auto run = [] {
    Learner L(small_config(HeadKind::kMixtureOfGaussians), lq_spec(), 45, 46);
    PrioritizedReplay r({.capacity = 64});
    std::mt19937_64 rng(47);
    fill(r, rng, 50);
    std::vector<double> out;
    for (int i = 0; i < 30; ++i) {
      const StepMetrics m = L.train_step(r, nullptr);
      out.push_back(m.critic_loss);
      out.push_back(m.actor_objective);
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainStep, TargetsEqualHistoricalOnlineSnapshot) {
  LearnerConfig c = small_config(HeadKind::kScalar);
  c.t_target = 5;
  Learner L(c, lq_spec(), 48, 49);
  PrioritizedReplay r({.capacity = 64});
  std::mt19937_64 rng(50);
  fill(r, rng, 50);
  std::vector<NetworkQuad> history;
  for (int t = 1; t <= 17; ++t) {
    L.train_step(r, nullptr);
    history.push_back(L.nets());
    const int last_sync = (t / 5) * 5;
    if (last_sync == 0) {
      EXPECT_FALSE(L.nets().target_critic == L.nets().critic);
    } else {
      EXPECT_EQ(L.nets().target_critic, history[last_sync - 1].critic) << t;
      EXPECT_EQ(L.nets().target_actor, history[last_sync - 1].actor) << t;
    }
  }
}

TEST(TrainStep, PublishesEveryTActorsSteps) {
  LearnerConfig c = small_config(HeadKind::kCategorical);
  c.t_actors = 4;
  Learner L(c, lq_spec(), 51, 52);
  PrioritizedReplay r({.capacity = 64});
  std::mt19937_64 rng(53);
  fill(r, rng, 50);
  SnapshotStore store;
  for (int t = 1; t <= 10; ++t) {
    const StepMetrics m = L.train_step(r, &store);
    EXPECT_EQ(m.published, t % 4 == 0);
  }
  EXPECT_EQ(store.latest_version(), 2u);
}

TEST(Learner, RejectsInvalidConfig) {
  LearnerConfig c = small_config(HeadKind::kCategorical);
  c.gamma = 1.0;
  EXPECT_THROW(Learner(c, lq_spec(), 1, 2), ConfigError);
  c = small_config(HeadKind::kCategorical);
  c.atoms = 1;
  EXPECT_THROW(Learner(c, lq_spec(), 1, 2), ConfigError);
}

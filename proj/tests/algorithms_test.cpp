// Copyright 2026 The TrialMesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "trialmesh/algorithms.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace trialmesh::algo {
namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Transition random_transition(std::mt19937_64& rng, const JointLayout& layout) {
  Transition t;
  t.joint_obs = random_vector(rng, layout.joint_obs_size());
  t.next_joint_obs = random_vector(rng, layout.joint_obs_size());
  for (std::size_t i = 0; i < layout.n_agents; ++i) {
    t.actions.push_back(rng() % layout.n_actions);
    t.rewards.push_back(std::normal_distribution<double>()(rng));
  }
  t.done = rng() % 4 == 0;
  return t;
}

// --- targets ----------------------------------------------------------------

TEST(DqnTarget, ZeroGammaKillsBootstrap) {
  std::vector<double> q{3, 5};
  EXPECT_EQ(dqn_target(1.0, 0.0, q, false), 1.0);
}

TEST(DqnTarget, TerminalMasking) {
  std::vector<double> q{100.0};
  EXPECT_EQ(dqn_target(1.0, 0.9, q, true), 1.0);
}

TEST(DqnTarget, DirectEvaluation) {
  std::vector<double> q{1.0, 2.0};
  EXPECT_NEAR(dqn_target(0.5, 0.9, q, false), 2.3, 1e-12);
}

TEST(DqnTarget, EmptyActionSet) {
  std::vector<double> q;
  EXPECT_THROW(dqn_target(0.0, 0.9, q, false), Error);
}

TEST(DdqnTarget, SelectionByOnlineEvaluationByTarget) {
  std::vector<double> online{0.1, 0.9}, target{2.0, 0.5};
  EXPECT_NEAR(ddqn_target(1.0, 0.5, online, target, false), 1.25, 1e-12);
}

TEST(DdqnTarget, CollapsesToDqnWhenNetworksAgree) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    auto q = random_vector(rng, 1 + rng() % 6);
    const double r = std::normal_distribution<double>()(rng);
    const double g = std::uniform_real_distribution<double>(0, 1)(rng);
    const bool done = rng() % 2;
    EXPECT_EQ(ddqn_target(r, g, q, q, done), dqn_target(r, g, q, done));
  }
}

TEST(DdqnTarget, ZeroGammaReturnsReward) {
  std::vector<double> online{5, 1}, target{-3, 9};
  EXPECT_EQ(ddqn_target(0.7, 0.0, online, target, false), 0.7);
}

TEST(DdqnTarget, LengthMismatch) {
  std::vector<double> a{1, 2}, b{1};
  try {
    ddqn_target(0, 0.9, a, b, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(EpsilonGreedy, GreedyWhenEpsilonZero) {
  std::mt19937_64 rng(0);
  std::vector<double> q{0.1, 3.0, -1.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(epsilon_greedy(q, 0.0, rng), 1u);
  std::vector<double> tie{1.0, 1.0};
  EXPECT_EQ(epsilon_greedy(tie, 0.0, rng), 0u);
}

TEST(EpsilonGreedy, UniformWhenEpsilonOne) {
  std::mt19937_64 rng(4);
  std::vector<double> q{0.0, 10.0, 0.0, 0.0, 0.0};
  const int draws = 10000;
  std::vector<int> counts(q.size(), 0);
  for (int i = 0; i < draws; ++i) ++counts[epsilon_greedy(q, 1.0, rng)];
  const double p = 1.0 / q.size();
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (int c : counts) EXPECT_NEAR(c, draws * p, 3 * sigma);
}

TEST(EpsilonSchedule, LinearAnneal) {
  EpsilonSchedule s{1.0, 0.05, 5000};
  EXPECT_DOUBLE_EQ(s.at(0), 1.0);
  EXPECT_NEAR(s.at(2500), 0.525, 1e-12);
  EXPECT_DOUBLE_EQ(s.at(5000), 0.05);
  EXPECT_DOUBLE_EQ(s.at(90000), 0.05);
}

// --- replay -----------------------------------------------------------------

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer buf(5, 0);
  for (std::size_t k = 0; k < 5 + 3; ++k) {
    buf.push(Transition{{static_cast<double>(k)}, {0}, {0.0}, {0.0}, false});
  }
  ASSERT_EQ(buf.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(buf.at(i).joint_obs[0], static_cast<double>(i + 3));
}

TEST(ReplayBuffer, SamplingIsSeededAndCoversBuffer) {
  ReplayBuffer a(10, 9), b(10, 9);
  for (int k = 0; k < 10; ++k) {
    a.push(Transition{{double(k)}, {0}, {0.0}, {0.0}, false});
    b.push(Transition{{double(k)}, {0}, {0.0}, {0.0}, false});
  }
  auto sa = a.sample(500), sb = b.sample(500);
  EXPECT_EQ(sa, sb);
  std::set<double> seen;
  for (const auto& t : sa) seen.insert(t.joint_obs[0]);
  EXPECT_EQ(seen.size(), 10u);
  ReplayBuffer empty(3, 0);
  EXPECT_THROW(empty.sample(1), Error);
}

// --- dueling ----------------------------------------------------------------

TEST(Dueling, ZeroAdvantage) {
  std::vector<double> raw{2.0, 0.0, 0.0};
  auto out = aggregate(raw);
  EXPECT_EQ(out.q, (std::vector<double>{2.0, 2.0}));
}

TEST(Dueling, MeanSubtractedForm) {
  std::vector<double> raw{1.0, 1.0, -1.0};
  auto out = aggregate(raw);
  EXPECT_EQ(out.q, (std::vector<double>{2.0, 0.0}));
}

TEST(Dueling, IdentitiesOnRandomHeads) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto head = make_dueling_head(4, {6}, 1 + rng() % 5, rng());
    auto s = random_vector(rng, 4);
    auto out = dueling_q(head, s);
    double mean = 0.0;
    for (double q : out.q) mean += q - out.v;
    EXPECT_LE(std::abs(mean / out.q.size()), 1e-12);
    EXPECT_EQ(argmax(out.q), argmax(out.a));
  }
}

TEST(Dueling, ShapeMismatch) {
  auto head = make_dueling_head(4, {6}, 3, 0);
  std::vector<double> s{1.0};
  EXPECT_THROW(dueling_q(head, s), Error);
}

TEST(Dueling, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto head = make_dueling_head(3, {5, 4}, 4, 3);
  auto s = random_vector(rng, 3);
  auto g = random_vector(rng, 4);
  auto fwd = dueling_forward(head, s);
  std::vector<double> grad(head.params.flat.size(), 0.0);
  dueling_backward(head, fwd, g, grad);
  auto f = [&](const std::vector<double>& flat) {
    auto raw = oracle::mlp_eval(head.params.layer_sizes, flat, s);
    double mean_a = 0.0;
    for (std::size_t i = 1; i < raw.size(); ++i) mean_a += raw[i];
    mean_a /= static_cast<double>(raw.size() - 1);
    double total = 0.0;
    for (std::size_t i = 1; i < raw.size(); ++i) total += g[i - 1] * (raw[0] + raw[i] - mean_a);
    return total;
  };
  EXPECT_LE(oracle::max_relative_error(grad, oracle::central_difference(f, head.params.flat)), 1e-4);
}

// --- mixer ------------------------------------------------------------------

TEST(Mixer, ZeroWeightsLeaveOnlyFinalBias) {
  std::mt19937_64 rng(2);
  auto m = make_mixer(3, 4, 5, 1);
  std::fill(m.hyper_w1.flat.begin(), m.hyper_w1.flat.end(), 0.0);
  std::fill(m.hyper_w2.flat.begin(), m.hyper_w2.flat.end(), 0.0);
  auto s = random_vector(rng, 4);
  auto q = random_vector(rng, 3);
  EXPECT_NEAR(mix(m, q, s), nn::predict(m.hyper_b2, s)[0], 1e-15);
}

TEST(Mixer, SingleAgentPassThrough) {
  // |W1| = 1, b1 = 0, |w2| = 1, b2 = 0: Q_mix = elu(q1), identity for q1 > 0.
  auto m = make_mixer(1, 2, 1, 0);
  for (auto* p : {&m.hyper_w1, &m.hyper_b1, &m.hyper_w2, &m.hyper_b2}) {
    std::fill(p->flat.begin(), p->flat.end(), 0.0);
  }
  m.hyper_w1.flat.back() = -1.0;  // output bias of the W1 hypernet, |.| makes it 1
  m.hyper_w2.flat.back() = 1.0;
  std::vector<double> s{0.3, 0.7};
  double prev = -std::numeric_limits<double>::infinity();
  for (double q1 = -3.0; q1 <= 3.0; q1 += 0.25) {
    std::vector<double> q{q1};
    const double out = mix(m, q, s);
    EXPECT_GT(out, prev);
    if (q1 > 0) {
      EXPECT_NEAR(out, q1, 1e-15);
    }
    prev = out;
  }
}

TEST(Mixer, FiniteDifferenceMonotonicity) {
  std::mt19937_64 rng(31);
  const double eps = 1e-3;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 4;
    auto m = make_mixer(n, 3, 1 + rng() % 8, rng());
    for (auto* p : {&m.hyper_w1, &m.hyper_b1, &m.hyper_w2, &m.hyper_b2}) {
      for (auto& v : p->flat) v += std::normal_distribution<double>(0, 0.5)(rng);
    }
    auto s = random_vector(rng, 3);
    auto q = random_vector(rng, n, 3.0);
    const double base = mix(m, q, s);
    for (std::size_t i = 0; i < n; ++i) {
      auto bumped = q;
      bumped[i] += eps;
      EXPECT_GE((mix(m, bumped, s) - base) / eps, -1e-9);
    }
  }
}

TEST(Mixer, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto m = make_mixer(3, 4, 6, 9);
  for (auto* p : {&m.hyper_w1, &m.hyper_b1, &m.hyper_w2, &m.hyper_b2}) {
    for (auto& v : p->flat) v += std::normal_distribution<double>(0, 0.3)(rng);
  }
  auto s = random_vector(rng, 4);
  auto q = random_vector(rng, 3);
  auto f = mix_forward(m, q, s);
  MixerGrad grad(m);
  auto dq = mix_backward(m, f, 1.0, grad);

  auto dq_numeric = oracle::central_difference([&](const std::vector<double>& qq) { return mix(m, qq, s); }, q);
  EXPECT_LE(oracle::max_relative_error(dq, dq_numeric), 1e-4);

  auto check = [&](nn::ParamSet MixerParams::*member, const std::vector<double>& analytic) {
    auto fn = [&](const std::vector<double>& flat) {
      MixerParams copy = m;
      (copy.*member).flat = flat;
      return mix(copy, q, s);
    };
    return oracle::max_relative_error(analytic, oracle::central_difference(fn, (m.*member).flat));
  };
  EXPECT_LE(check(&MixerParams::hyper_w1, grad.w1), 1e-4);
  EXPECT_LE(check(&MixerParams::hyper_b1, grad.b1), 1e-4);
  EXPECT_LE(check(&MixerParams::hyper_w2, grad.w2), 1e-4);
  EXPECT_LE(check(&MixerParams::hyper_b2, grad.b2), 1e-4);
}

TEST(Mixer, ShapeMismatch) {
  auto m = make_mixer(2, 3, 4, 0);
  std::vector<double> q{1.0}, s{0.0, 0.0, 0.0};
  EXPECT_THROW(mix(m, q, s), Error);
}

// --- MADDPG actor gradient ---------------------------------------------------

// mu(o) = theta * o, one continuous action dimension.
struct LinearActor {
  double theta = 0.0;
  struct Forward {
    std::vector<double> action;
    double obs = 0.0;
  };
  Forward forward(std::span<const double> o) const { return {{theta * o[0]}, o[0]}; }
  void backward(Forward& f, std::span<const double> g, std::span<double> out) const { out[0] += g[0] * f.obs; }
  std::size_t param_count() const { return 1; }
};

// Q(a) = -(a - a*)^2 on the acting agent's slot.
struct QuadraticCritic {
  double a_star = 0.0;
  std::pair<double, std::vector<double>> value_and_action_grad(std::span<const double>,
                                                               std::span<const std::vector<double>> acts,
                                                               std::size_t i) const {
    const double d = acts[i][0] - a_star;
    return {-d * d, {-2.0 * d}};
  }
};

TEST(MaddpgActorGrad, MatchesClosedFormForLinearActorAndQuadraticCritic) {
  JointLayout layout{1, 1, 1};
  LinearActor actor{0.7};
  QuadraticCritic critic{2.5};
  for (double o : {0.5, -1.25, 3.0}) {
    std::vector<Transition> batch{Transition{{o}, {0}, {0.0}, {o}, false}};
    auto g = maddpg_actor_grad(actor, critic, batch, 0, layout);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_NEAR(g[0], 2.0 * (2.5 - 0.7 * o) * o, 1e-12);
  }
}

TEST(MaddpgActorGrad, ZeroWhenCriticIgnoresOwnAction) {
  JointLayout layout{2, 3, 5};
  std::mt19937_64 rng(3);
  auto actor = make_policy(3, {8}, 5, 1);
  auto critic = make_central_critic(layout, 0, {8}, 2);
  // Every output row zero except the value row: q is constant across actions,
  // so the objective a_0 . q = v does not depend on a_0.
  const std::size_t out_rows = layout.n_actions + 1, hidden = 8;
  const std::size_t w_off = critic.head.params.flat.size() - (hidden * out_rows + out_rows);
  for (std::size_t r = 1; r < out_rows; ++r) {
    for (std::size_t c = 0; c < hidden; ++c) critic.head.params.flat[w_off + r * hidden + c] = 0.0;
  }
  std::vector<Transition> batch{random_transition(rng, layout), random_transition(rng, layout)};
  auto g = maddpg_actor_grad(actor, critic, batch, 0, layout);
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(MaddpgActorGrad, MatchesFiniteDifferencesOfSampledObjective) {
  JointLayout layout{3, 4, 5};
  std::mt19937_64 rng(21);
  for (std::size_t agent = 0; agent < layout.n_agents; ++agent) {
    auto actor = make_policy(4, {6, 5}, 5, 10 + agent);
    auto critic = make_central_critic(layout, agent, {7}, 20 + agent);
    std::vector<Transition> batch{random_transition(rng, layout), random_transition(rng, layout)};
    auto g = maddpg_actor_grad(actor, critic, batch, agent, layout);
    auto objective = [&](const std::vector<double>& flat) {
      SoftmaxPolicy perturbed = actor;
      perturbed.params.flat = flat;
      return sampled_objective(perturbed, critic, std::span<const Transition>(batch), agent, layout);
    };
    EXPECT_LE(oracle::max_relative_error(g, oracle::central_difference(objective, actor.params.flat)), 1e-4);
  }
}

TEST(MaddpgActorGrad, EmptyBatch) {
  JointLayout layout{1, 1, 1};
  std::vector<Transition> batch;
  try {
    maddpg_actor_grad(LinearActor{}, QuadraticCritic{}, batch, 0, layout);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
  }
}

// --- critic -----------------------------------------------------------------

struct CriticFixture {
  JointLayout layout{2, 3, 5};
  std::vector<SoftmaxPolicy> target_actors;
  std::vector<CentralCritic> critics;
  std::vector<CentralCritic> target_critics;

  explicit CriticFixture(std::uint64_t seed) {
    for (std::size_t i = 0; i < layout.n_agents; ++i) {
      target_actors.push_back(make_policy(3, {6}, 5, seed + i));
      critics.push_back(make_central_critic(layout, i, {8, 6}, seed + 10 + i));
      target_critics.push_back(make_central_critic(layout, i, {8, 6}, seed + 20 + i));
    }
  }
};

TEST(CriticUpdate, ZeroLossWhenTargetsMatchPredictions) {
  CriticFixture fx(1);
  std::mt19937_64 rng(4);
  std::vector<Transition> batch;
  for (int k = 0; k < 8; ++k) {
    auto t = random_transition(rng, fx.layout);
    t.done = true;
    auto acts = detail::logged_actions(fx.layout, t);
    t.rewards[0] = fx.critics[0].q_values(t.joint_obs, acts)[t.actions[0]];
    batch.push_back(t);
  }
  CriticTargets targets{fx.target_actors, fx.target_critics[0]};
  auto before = fx.critics[0];
  const double loss = critic_update(fx.critics[0], targets, batch, 0.95, 0.05);
  EXPECT_LE(loss, 1e-30);
  EXPECT_EQ(fx.critics[0], before);
}

TEST(CriticUpdate, ZeroGammaRegressesOnReward) {
  CriticFixture fx(2);
  std::mt19937_64 rng(6);
  std::vector<Transition> batch;
  for (int k = 0; k < 16; ++k) batch.push_back(random_transition(rng, fx.layout));
  double want = 0.0;
  for (const auto& t : batch) {
    auto acts = detail::logged_actions(fx.layout, t);
    const double d = fx.critics[1].q_values(t.joint_obs, acts)[t.actions[1]] - t.rewards[1];
    want += d * d / batch.size();
  }
  CriticTargets targets{fx.target_actors, fx.target_critics[1]};
  EXPECT_NEAR(critic_update(fx.critics[1], targets, batch, 0.0, 0.05), want, 1e-12);
}

TEST(CriticUpdate, GradientMatchesFiniteDifferences) {
  CriticFixture fx(3);
  std::mt19937_64 rng(8);
  std::vector<Transition> batch{random_transition(rng, fx.layout), random_transition(rng, fx.layout)};
  batch[0].done = false;
  CriticTargets targets{fx.target_actors, fx.target_critics[0]};
  auto analytic = critic_loss_and_grad(fx.critics[0], targets, batch, 0.9);
  auto loss_at = [&](const std::vector<double>& flat) {
    CentralCritic c = fx.critics[0];
    c.head.params.flat = flat;
    // The online critic also selects the bootstrap action; that choice is
    // piecewise constant, so hold it at the unperturbed network.
    double total = 0.0;
    for (const auto& t : batch) {
      const double y = d3_target(fx.critics[0], targets, t, 0.9);
      auto acts = detail::logged_actions(fx.layout, t);
      const double d = c.q_values(t.joint_obs, acts)[t.actions[0]] - y;
      total += d * d / batch.size();
    }
    return total;
  };
  auto numeric = oracle::central_difference(loss_at, fx.critics[0].head.params.flat);
  EXPECT_LE(oracle::max_relative_error(analytic.grad, numeric), 1e-4);
}

TEST(CriticUpdate, LossDecreasesOnFixedBatch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CriticFixture fx(100 + seed);
    std::mt19937_64 rng(seed);
    std::vector<Transition> batch;
    for (int k = 0; k < 32; ++k) batch.push_back(random_transition(rng, fx.layout));
    CriticTargets targets{fx.target_actors, fx.target_critics[0]};
    const double start = critic_loss_and_grad(fx.critics[0], targets, batch, 0.95).loss;
    for (int step = 0; step < 500; ++step) critic_update(fx.critics[0], targets, batch, 0.95, 0.05);
    const double end = critic_loss_and_grad(fx.critics[0], targets, batch, 0.95).loss;
    EXPECT_LT(end, start) << "seed " << seed;
  }
}

TEST(CriticUpdate, EmptyBatch) {
  CriticFixture fx(0);
  std::vector<Transition> batch;
  CriticTargets targets{fx.target_actors, fx.target_critics[0]};
  EXPECT_THROW(critic_update(fx.critics[0], targets, batch, 0.9, 0.1), Error);
}

// --- learners and training loop ----------------------------------------------

TEST(MixedCritic, UpdateGradientMatchesFiniteDifferences) {
  JointLayout layout{2, 3, 5};
  Hyperparameters hp;
  hp.hidden = {6};
  hp.mixer_embed = 4;
  hp.lr_critic = 1.0;
  std::mt19937_64 rng(17);
  std::vector<Transition> batch{random_transition(rng, layout), random_transition(rng, layout)};
  for (auto& t : batch) t.done = true;  // keep the bootstrap out of the comparison

  MixedCriticLearner learner(layout, hp, 3);
  auto before = learner.snapshot();
  learner.update(batch);
  auto after = learner.snapshot();
  // With lr = 1 the parameter delta is exactly -grad.
  std::vector<double> analytic(before.size());
  for (std::size_t k = 0; k < before.size(); ++k) analytic[k] = before[k] - after[k];

  auto loss_at = [&](const std::vector<double>& flat) {
    MixedCriticLearner probe(layout, hp, 3);
    // Rebuild the networks from the flat vector in snapshot order.
    std::size_t off = 0;
    std::vector<DuelingHead> heads;
    for (std::size_t i = 0; i < 2; ++i) {
      auto h = make_dueling_head(3, hp.hidden, 5, 0);
      std::copy_n(flat.begin() + off, h.params.flat.size(), h.params.flat.begin());
      off += h.params.flat.size();
      heads.push_back(h);
    }
    MixerParams m = probe.mixer();
    for (auto* p : {&m.hyper_w1, &m.hyper_b1, &m.hyper_w2, &m.hyper_b2}) {
      std::copy_n(flat.begin() + off, p->flat.size(), p->flat.begin());
      off += p->flat.size();
    }
    double total = 0.0;
    for (const auto& t : batch) {
      std::vector<double> chosen;
      for (std::size_t i = 0; i < 2; ++i) chosen.push_back(dueling_q(heads[i], layout.local_obs(t.joint_obs, i)).q[t.actions[i]]);
      const double d = mix(m, chosen, t.joint_obs) - (t.rewards[0] + t.rewards[1]);
      total += d * d / batch.size();
    }
    return total;
  };
  EXPECT_LE(oracle::max_relative_error(analytic, oracle::central_difference(loss_at, before)), 1e-4);
}

TrainConfig small_config(Algorithm algorithm, std::size_t episodes, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.algorithm = algorithm;
  cfg.episodes = episodes;
  cfg.seed = seed;
  cfg.hp.hidden = {16};
  cfg.hp.mixer_embed = 4;
  cfg.hp.batch_size = 8;
  cfg.hp.target_sync = 10;
  return cfg;
}

TEST(TrainLoop, ZeroLearningRateKeepsInitialParams) {
  for (auto algorithm : {Algorithm::Dqn, Algorithm::Ddqn, Algorithm::D3Maddpg, Algorithm::MixedCritic}) {
    auto cfg = small_config(algorithm, 5, 3);
    cfg.hp.lr_critic = 0.0;
    cfg.hp.lr_actor = 0.0;
    DirectInteraction inter(env::EnvironmentSpec{}, 2, 3);
    auto learner = make_learner(algorithm, inter.layout(), cfg.hp, 3);
    auto initial = learner->snapshot();
    train_loop(cfg, inter, *learner);
    EXPECT_EQ(learner->snapshot(), initial) << to_string(algorithm);
  }
}

TEST(TrainLoop, StepCapCutsTraining) {
  auto cfg = small_config(Algorithm::Dqn, 1000, 4);
  cfg.max_steps = 123;
  DirectInteraction inter(env::EnvironmentSpec{}, 1, 4);
  auto learner = make_learner(Algorithm::Dqn, inter.layout(), cfg.hp, 4);
  std::size_t steps = 0;
  for (const auto& e : train_loop(cfg, inter, *learner)) steps += e.steps;
  EXPECT_EQ(steps, 123u);
}

// --- learning oracles ---------------------------------------------------------

TEST(Oracle, ValueIterationIsShortestPathReturn) {
  const double c = -0.01, r = 1.0, g = 0.9;
  auto sol = oracle::value_iteration(5, 5, 3, 1, c, r, g);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      if (x == 3 && y == 1) continue;
      const int d = std::abs(x - 3) + std::abs(y - 1);
      double expect = c + r;  // last step
      for (int k = 1; k < d; ++k) expect = c + g * expect;
      EXPECT_NEAR(sol.v[sol.cell(x, y)], expect, 1e-12);
    }
  }
  EXPECT_TRUE(sol.optimal(0, 0, 2));   // East
  EXPECT_TRUE(sol.optimal(0, 0, 1));   // South
  EXPECT_FALSE(sol.optimal(0, 0, 4));  // Stay
  EXPECT_FALSE(sol.optimal(4, 1, 2));  // East into the wall
}

TEST(Oracle, JointCoverageSearch) {
  // One drone sweeping a 2x2 grid: three other cells need three moves.
  EXPECT_EQ(oracle::min_ticks_to_cover(2, 2, {{0, 0}}, {{1, 0}, {0, 1}, {1, 1}}, 50), 3);
  // Two drones split the work.
  EXPECT_EQ(oracle::min_ticks_to_cover(5, 5, {{0, 0}, {4, 4}}, {{1, 0}, {3, 4}}, 50), 1);
  EXPECT_EQ(oracle::min_ticks_to_cover(5, 5, {{0, 0}, {4, 4}}, {{4, 0}, {0, 4}}, 50), 4);
  EXPECT_EQ(oracle::min_ticks_to_cover(5, 5, {{0, 0}, {4, 4}}, {{4, 0}, {0, 4}}, 3), -1);
}

TEST(TrainLoop, IdenticalSeedsGiveIdenticalCurves) {
  for (auto algorithm : {Algorithm::Ddqn, Algorithm::D3Maddpg, Algorithm::MixedCritic}) {
    std::string curves[2];
    for (auto& out : curves) {
      auto cfg = small_config(algorithm, 8, 11);
      DirectInteraction inter(env::EnvironmentSpec{}, 2, 11);
      auto learner = make_learner(algorithm, inter.layout(), cfg.hp, 11);
      std::ostringstream csv;
      train_loop(cfg, inter, *learner, &csv);
      out = csv.str();
    }
    EXPECT_EQ(curves[0], curves[1]);
    EXPECT_EQ(curves[0].substr(0, curves[0].find('\n')), "episode,team_return,epsilon,loss");
  }
}

TEST(TrainLoop, ZeroEpisodesWritesHeaderOnly) {
  auto cfg = small_config(Algorithm::Dqn, 0, 1);
  DirectInteraction inter(env::EnvironmentSpec{}, 1, 1);
  auto learner = make_learner(cfg.algorithm, inter.layout(), cfg.hp, 1);
  std::ostringstream csv;
  train_loop(cfg, inter, *learner, &csv);
  EXPECT_EQ(csv.str(), "episode,team_return,epsilon,loss\n");
}

TEST(TrainLoop, TargetSyncCopiesOnlineNetworks) {
  auto cfg = small_config(Algorithm::Dqn, 3, 2);
  DirectInteraction inter(env::EnvironmentSpec{}, 1, 2);
  IndependentQLearner learner(inter.layout(), cfg.hp, false, 2);
  train_loop(cfg, inter, learner);
  EXPECT_NE(learner.networks(), learner.target_networks());
  learner.sync_targets();
  EXPECT_EQ(learner.networks(), learner.target_networks());
}

TEST(Learners, CheckpointFileNames) {
  auto dir = std::filesystem::temp_directory_path() / "trialmesh_learner_ckpt";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  JointLayout layout{2, 3, 5};
  Hyperparameters hp;
  hp.hidden = {4};
  D3MaddpgLearner d3(layout, hp, 0);
  d3.save(dir);
  MixedCriticLearner mixed(layout, hp, 0);
  mixed.save(dir);
  for (const char* name : {"actor_0.json", "actor_1.json", "critic_0.json", "critic_1.json", "mixer.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  EXPECT_EQ(nn::load_checkpoint(dir / "actor_1.json"), d3.actors()[1].params);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace trialmesh::algo

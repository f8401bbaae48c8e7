#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <utility>

#include "coopshap/trainer.hpp"

using namespace coopshap;
using marl::AgentSet;
using marl::Algorithm;
using marl::ReplayBuffer;
using marl::TrainerConfig;
using marl::Transition;
using net::Vec;

namespace {

TrainerConfig small_config() {
    TrainerConfig cfg;
    cfg.batch = 1;
    cfg.warmup_factor = 1;
    cfg.hidden = 3;
    cfg.gamma = 0.5;
    return cfg;
}

Transition tiny_transition(int n, double reward, game::Mask coalition) {
    Transition t;
    for (int i = 0; i < n; ++i) {
        t.obs.push_back({0.5 + 0.1 * i, 0.2});
        t.actions.push_back({1.0, 0.0, 0.0, 0.0});
        t.next_obs.push_back({0.4 + 0.1 * i, 0.3});
        t.rewards.push_back(reward);
    }
    t.coalition = coalition;
    return t;
}

// Overwrite the shared characteristic net with a constant: zero weights, raw
// output b everywhere, so v(C) = softplus(b) for every nonempty C.
void make_constant_characteristic(AgentSet& agents, double b) {
    marl::NetWithTarget& cn = agents.characteristic();
    std::fill(cn.params.begin(), cn.params.end(), 0.0);
    cn.params.back() = b;  // final bias is the last flat parameter
    cn.target = cn.params;
}

}  // namespace

TEST_CASE("trainer config validation") {
    TrainerConfig cfg;
    cfg.validate();
    cfg.gamma = 1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("gamma"), std::runtime_error);
    cfg = TrainerConfig{};
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(), std::runtime_error);
    cfg = TrainerConfig{};
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::runtime_error);
}

TEST_CASE("sample_coalition is uniform over non-empty subsets") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) CHECK(marl::sample_coalition(1, rng) == 1);

    std::array<long, 8> counts{};
    const long draws = 70000;
    for (long d = 0; d < draws; ++d) ++counts[marl::sample_coalition(3, rng)];
    CHECK(counts[0] == 0);
    for (int c = 1; c < 8; ++c)
        CHECK(static_cast<double>(counts[c]) / draws ==
              doctest::Approx(1.0 / 7).epsilon(0.07));
    CHECK_THROWS_AS(marl::sample_coalition(0, rng), std::invalid_argument);
}

TEST_CASE("masked_joint_input layout") {
    const std::vector<Vec> obs{{1.0, 2.0}, {3.0, 4.0}};
    const std::vector<Vec> acts{{0.1, 0.2, 0.3, 0.4}, {0.5, 0.1, 0.2, 0.2}};

    const Vec x = marl::masked_joint_input(obs, acts, 0b01);
    CHECK(x == Vec{1.0, 2.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0});
    const Vec full = marl::masked_joint_input(obs, acts, 0b11);
    CHECK(full ==
          Vec{1.0, 2.0, 3.0, 4.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.1, 0.2, 0.2, 1.0, 1.0});
    CHECK_THROWS_AS(marl::masked_joint_input(obs, {acts[0]}, 0b01), std::invalid_argument);

    CHECK(marl::masked_obs_view(obs, 0b10) == Vec{0.0, 0.0, 3.0, 4.0, 0.0, 1.0});
}

TEST_CASE("softmax4") {
    const auto u = marl::softmax4({0.0, 0.0, 0.0, 0.0});
    for (double p : u) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

    const auto p = marl::softmax4({1.0, 2.0, 3.0, 4.0});
    const auto q = marl::softmax4({101.0, 102.0, 103.0, 104.0});  // shift invariant
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
        CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-12));
        CHECK(p[k] > 0.0);
        sum += p[k];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[3] > p[2]);
    CHECK_THROWS_AS(marl::softmax4({1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("select_action is greedy and deterministic at sigma 0") {
    const TrainerConfig cfg = small_config();
    Rng init(7);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 2, 2, cfg, init);
    const Vec view = marl::masked_obs_view({{0.1, 0.2}, {0.3, 0.4}}, 0b11);
    Rng a(1), b(2);
    const env::VehicleAction x = marl::select_action(agents, 0, view, 0.0, a);
    const env::VehicleAction y = marl::select_action(agents, 0, view, 0.0, b);
    CHECK(x.relaxed == y.relaxed);
    double sum = 0.0;
    for (double p : x.relaxed) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("replay buffer is a ring") {
    ReplayBuffer buf(3);
    for (int k = 0; k < 5; ++k) buf.push(tiny_transition(1, k, 1));
    CHECK(buf.size() == 3);
    CHECK(buf.at(0).rewards[0] == 3.0);  // overwrote the oldest
    CHECK(buf.at(1).rewards[0] == 4.0);
    CHECK(buf.at(2).rewards[0] == 2.0);

    Rng rng(1);
    for (std::size_t i : buf.sample_indices(100, rng)) CHECK(i < 3);
}

TEST_CASE("critic_update TD loss on a hand-built linear characteristic net") {
    const TrainerConfig cfg = small_config();  // gamma 0.5, batch 1
    Rng init(11);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 1, 2, cfg, init);

    // Replace the characteristic net with a single linear layer, zero weights,
    // zero bias: raw output 0, prediction softplus(0) = ln 2 on every input.
    marl::NetWithTarget& cn = agents.characteristic();
    cn.spec = net::NetSpec{{7, 1}};
    cn.params.assign(8, 0.0);
    cn.target = cn.params;
    cn.opt = net::Adam(8, cfg.critic_lr);

    ReplayBuffer buf(8);
    buf.push(tiny_transition(1, 2.0, 1));

    const marl::UpdateResult res = marl::critic_update(agents, buf, {0}, cfg);
    CHECK(res.ready);
    // y = r + gamma * softplus(0), loss = (softplus(0) - y)^2
    const double expect = std::pow(std::log(2.0) - 2.0 - 0.5 * std::log(2.0), 2.0);
    CHECK(res.value == doctest::Approx(expect).epsilon(1e-12));
    CHECK(cn.opt.step == 1);
}

TEST_CASE("critic_update reports not-ready below warmup and changes nothing") {
    TrainerConfig cfg = small_config();
    cfg.warmup_factor = 10;
    Rng init(11);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 1, 2, cfg, init);
    const Vec before = agents.characteristic().params;
    ReplayBuffer buf(8);
    buf.push(tiny_transition(1, 2.0, 1));
    const marl::UpdateResult res = marl::critic_update(agents, buf, {0}, cfg);
    CHECK_FALSE(res.ready);
    CHECK(agents.characteristic().params == before);
}

TEST_CASE("shapley_estimate on a constant characteristic net is softplus(b)/n") {
    const TrainerConfig cfg = small_config();
    Rng init(13);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 3, 2, cfg, init);
    make_constant_characteristic(agents, 1.0);

    const Transition t = tiny_transition(3, 1.0, 0b111);
    const double expect = std::log1p(std::exp(1.0)) / 3.0;
    for (int i = 0; i < 3; ++i)
        CHECK(marl::shapley_estimate(agents, t.obs, t.actions, i, cfg) ==
              doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("shapley_estimate matches the exact oracle on the induced table") {
    const TrainerConfig cfg = small_config();
    Rng init(17);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 3, 2, cfg, init);
    const Transition t = tiny_transition(3, 1.0, 0b111);

    const game::CharacteristicTable table = marl::induced_table(agents, t.obs, t.actions);
    table.validate();
    const game::PayoffVector oracle = game::shapley_exact(table);
    const game::PayoffVector exhaustive = game::shapley_permutation_mc(table, 0, 0, true);
    for (int i = 0; i < 3; ++i) {
        const double est = marl::shapley_estimate(agents, t.obs, t.actions, i, cfg);
        CHECK(est == doctest::Approx(oracle[i]).epsilon(1e-9));
        CHECK(est == doctest::Approx(exhaustive[i]).epsilon(1e-9));
    }

    // efficiency of the induced game's Shapley payoff
    CHECK(game::efficiency_check(table, {{game::full_mask(3)}, oracle}));
}

TEST_CASE("monte carlo shapley mode converges to exact and needs an rng") {
    TrainerConfig cfg = small_config();
    Rng init(19);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 3, 2, cfg, init);
    const Transition t = tiny_transition(3, 1.0, 0b111);
    const double exact = marl::shapley_estimate(agents, t.obs, t.actions, 0, cfg);

    cfg.shapley_mode = marl::ShapleyMode::MonteCarlo;
    cfg.mc_permutations = 4000;
    Rng mc(23);
    const double est = marl::shapley_estimate(agents, t.obs, t.actions, 0, cfg, &mc);
    CHECK(std::abs(est - exact) <= 0.02);
    CHECK_THROWS_AS(marl::shapley_estimate(agents, t.obs, t.actions, 0, cfg),
                    std::invalid_argument);
}

TEST_CASE("exact mode refuses agent counts beyond n_exact") {
    TrainerConfig cfg = small_config();
    cfg.n_exact = 2;
    Rng init(29);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 3, 2, cfg, init);
    const Transition t = tiny_transition(3, 1.0, 0b111);
    CHECK_THROWS_WITH_AS(marl::shapley_estimate(agents, t.obs, t.actions, 0, cfg),
                         doctest::Contains("n_exact"), std::runtime_error);
}

TEST_CASE("actor gradient vanishes under a constant characteristic net") {
    const TrainerConfig cfg = small_config();
    Rng init(31);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 2, 2, cfg, init);
    make_constant_characteristic(agents, 0.7);

    ReplayBuffer buf(8);
    buf.push(tiny_transition(2, 1.0, 0b11));

    const marl::ActorGradient g = marl::actor_gradient(agents, buf, {0}, 0, cfg);
    CHECK(g.grad == Vec(g.grad.size(), 0.0));
    CHECK(g.mean_phi == doctest::Approx(std::log1p(std::exp(0.7)) / 2.0).epsilon(1e-12));

    // Adam on an exactly zero gradient leaves the policy untouched.
    const Vec before = agents.actors[0].params;
    const marl::UpdateResult res = marl::actor_update(agents, buf, {0}, 0, cfg);
    CHECK(res.ready);
    CHECK(agents.actors[0].params == before);
}

TEST_CASE("batch mean: repeating one sample matches the single-sample gradient") {
    const TrainerConfig cfg = small_config();
    Rng init(37);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 2, 2, cfg, init);
    ReplayBuffer buf(8);
    buf.push(tiny_transition(2, 1.5, 0b01));

    const marl::ActorGradient one = marl::actor_gradient(agents, buf, {0}, 1, cfg);
    const marl::ActorGradient four = marl::actor_gradient(agents, buf, {0, 0, 0, 0}, 1, cfg);
    CHECK(one.mean_phi == doctest::Approx(four.mean_phi).epsilon(1e-12));
    for (std::size_t p = 0; p < one.grad.size(); ++p)
        CHECK(one.grad[p] == doctest::Approx(four.grad[p]).epsilon(1e-12));
}

TEST_CASE("baseline critic loss with a zeroed Q net is the squared return") {
    const TrainerConfig cfg = small_config();  // gamma 0.5
    Rng init(41);
    AgentSet agents = AgentSet::make(Algorithm::Independent, 1, 2, cfg, init);
    std::fill(agents.critics[0].params.begin(), agents.critics[0].params.end(), 0.0);
    agents.critics[0].target = agents.critics[0].params;

    ReplayBuffer buf(8);
    buf.push(tiny_transition(1, 2.0, 0b1));
    const marl::BaselineLosses res = marl::baseline_update(agents, buf, {0}, cfg);
    CHECK(res.ready);
    CHECK(res.critic_loss == doctest::Approx(4.0).epsilon(1e-12));  // (0 - 2)^2

    CHECK_THROWS_AS(marl::critic_update(agents, buf, {0}, cfg), std::logic_error);
}

TEST_CASE("independent and central learners coincide for a single agent") {
    const TrainerConfig cfg = small_config();
    Rng ia(5), ib(5);
    AgentSet ind = AgentSet::make(Algorithm::Independent, 1, 2, cfg, ia);
    AgentSet mad = AgentSet::make(Algorithm::Maddpg, 1, 2, cfg, ib);
    CHECK(ind.actors[0].params == mad.actors[0].params);
    CHECK(ind.critics[0].params == mad.critics[0].params);

    ReplayBuffer buf(8);
    buf.push(tiny_transition(1, 1.2, 0b1));
    const marl::BaselineLosses a = marl::baseline_update(ind, buf, {0}, cfg);
    const marl::BaselineLosses b = marl::baseline_update(mad, buf, {0}, cfg);
    CHECK(a.critic_loss == doctest::Approx(b.critic_loss).epsilon(1e-12));
    CHECK(ind.actors[0].params == mad.actors[0].params);
    CHECK(ind.critics[0].params == mad.critics[0].params);
}

TEST_CASE("train_episode basics") {
    env::EnvConfig env_cfg;
    env_cfg.n_vehicles = 3;
    TrainerConfig cfg = small_config();
    cfg.batch = 4;
    cfg.warmup_factor = 2;

    Rng ia(51);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 2, env::kObsDim, cfg, ia);
    ReplayBuffer buf(64);

    Rng run(100);
    const marl::EpisodeMetrics zero =
        marl::train_episode(agents, buf, env_cfg, cfg, 0, 0.0, run);
    CHECK(zero.steps == 0);
    CHECK(zero.system_reward == 0.0);
    CHECK(buf.size() == 0);

    const marl::EpisodeMetrics m =
        marl::train_episode(agents, buf, env_cfg, cfg, 25, 0.0, run);
    CHECK(m.steps == 25);
    CHECK(m.system_reward >= 0.0);
    CHECK(m.coalition_trace.size() == 25);
    for (game::Mask c : m.coalition_trace) {
        CHECK(c >= 1);
        CHECK(c <= 3);
    }
    CHECK(buf.size() == 25);
}

TEST_CASE("train_episode is deterministic given identical seeds") {
    env::EnvConfig env_cfg;
    env_cfg.n_vehicles = 3;
    TrainerConfig cfg = small_config();
    cfg.batch = 2;
    cfg.warmup_factor = 2;

    auto run_once = [&]() {
        Rng init(7);
        AgentSet agents = AgentSet::make(Algorithm::Shapley, 2, env::kObsDim, cfg, init);
        ReplayBuffer buf(64);
        Rng rng(9);
        marl::EpisodeMetrics last{};
        for (int e = 0; e < 3; ++e)
            last = marl::train_episode(agents, buf, env_cfg, cfg, 15, e / 3.0, rng);
        return std::pair{last, agents.actors[0].params};
    };
    const auto a = run_once();
    const auto b = run_once();
    CHECK(a.first.system_reward == b.first.system_reward);
    CHECK(a.first.mean_critic_loss == b.first.mean_critic_loss);
    CHECK(a.first.coalition_trace == b.first.coalition_trace);
    CHECK(a.second == b.second);
}

TEST_CASE("single learning agent always samples its own singleton") {
    env::EnvConfig env_cfg;
    env_cfg.n_vehicles = 2;
    const TrainerConfig cfg = small_config();
    Rng init(61);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 1, env::kObsDim, cfg, init);
    ReplayBuffer buf(32);
    Rng rng(62);
    const marl::EpisodeMetrics m = marl::train_episode(agents, buf, env_cfg, cfg, 10, 0.0, rng);
    for (game::Mask c : m.coalition_trace) CHECK(c == 1);
}

TEST_CASE("eval_episode runs greedy policies and pure scripted traffic") {
    env::EnvConfig env_cfg;
    env_cfg.n_vehicles = 4;
    const TrainerConfig cfg = small_config();

    Rng init(71);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 2, env::kObsDim, cfg, init);
    Rng ra(5), rb(5);
    const marl::EpisodeMetrics a = marl::eval_episode(agents, env_cfg, cfg, 30, ra);
    const marl::EpisodeMetrics b = marl::eval_episode(agents, env_cfg, cfg, 30, rb);
    CHECK(a.steps == 30);
    CHECK(a.system_reward == b.system_reward);
    CHECK(a.mean_velocity == b.mean_velocity);

    // no learning agents at all: scripted drivers only
    AgentSet none;
    Rng rc(5);
    const marl::EpisodeMetrics s = marl::eval_episode(none, env_cfg, cfg, 30, rc);
    CHECK(s.steps == 30);
    CHECK(s.system_reward >= 0.0);
}

TEST_CASE("targets start equal to online nets and track them after updates") {
    const TrainerConfig cfg = small_config();
    Rng init(81);
    AgentSet agents = AgentSet::make(Algorithm::Shapley, 2, env::kObsDim, cfg, init);
    for (const marl::NetWithTarget& nt : agents.actors) CHECK(nt.target == nt.params);
    CHECK(agents.characteristic().target == agents.characteristic().params);

    env::EnvConfig env_cfg;
    env_cfg.n_vehicles = 2;
    TrainerConfig run_cfg = small_config();
    run_cfg.batch = 2;
    run_cfg.warmup_factor = 1;
    run_cfg.tau = 0.5;
    ReplayBuffer buf(64);
    Rng rng(82);
    marl::train_episode(agents, buf, env_cfg, run_cfg, 20, 0.0, rng);
    // after learning, targets have moved off the start but lag the online nets
    CHECK(agents.characteristic().target != agents.characteristic().params);
}

#include "coopshap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coopshap::marl {

namespace {

using env::kObsDim;
using env::VehicleAction;

double softplus(double z) {
    if (z > 30.0) return z;
    if (z < -30.0) return std::exp(z);
    return std::log1p(std::exp(z));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Characteristic value v(s, a, C): softplus of the raw net output so the
// induced table stays nonnegative; the empty coalition is 0 by rule and the
// network is never queried on it.
double char_value(const net::NetSpec& spec, const Vec& params, const std::vector<Vec>& obs,
                  const std::vector<Vec>& actions, Mask coalition) {
    if (coalition == 0) return 0.0;
    return softplus(net::forward(spec, params, masked_joint_input(obs, actions, coalition))[0]);
}

Vec concat_all(const std::vector<Vec>& obs, const std::vector<Vec>& actions) {
    Vec x;
    for (const Vec& o : obs) x.insert(x.end(), o.begin(), o.end());
    for (const Vec& a : actions) x.insert(x.end(), a.begin(), a.end());
    return x;
}

std::array<double, 4> target_policy(const NetWithTarget& actor, const Vec& view) {
    return softmax4(net::forward(actor.spec, actor.target, view));
}

// d(softmax)/d(logits) applied to an upstream gradient on the probabilities.
Vec softmax_chain(const std::array<double, 4>& p, const std::array<double, 4>& upstream) {
    double dot = 0.0;
    for (int k = 0; k < 4; ++k) dot += upstream[k] * p[k];
    Vec z(4);
    for (int k = 0; k < 4; ++k) z[k] = p[k] * (upstream[k] - dot);
    return z;
}

Vec to_vec(const std::array<double, 4>& a) { return Vec(a.begin(), a.end()); }

// Coalition view an agent acts on: the sampled coalition when it is a
// member, otherwise its own singleton.
Mask acting_view(Mask coalition, int agent) {
    return game::contains(coalition, agent) ? coalition : (Mask{1} << agent);
}

}  // namespace

void TrainerConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::runtime_error("trainer config: gamma must be in (0,1)");
    if (!(tau > 0.0 && tau <= 1.0))
        throw std::runtime_error("trainer config: tau must be in (0,1]");
    if (batch < 1 || batch > capacity)
        throw std::runtime_error("trainer config: need 1 <= batch <= capacity");
    if (sigma < 0.0) throw std::runtime_error("trainer config: sigma must be >= 0");
    if (mc_permutations < 1)
        throw std::runtime_error("trainer config: mc_permutations must be >= 1");
    if (n_exact < 1 || n_exact > game::kMaxAgents)
        throw std::runtime_error("trainer config: n_exact out of range");
    if (hidden < 1) throw std::runtime_error("trainer config: hidden width must be >= 1");
    if (update_every < 1) throw std::runtime_error("trainer config: update_every must be >= 1");
}

void ReplayBuffer::push(Transition t) {
    if (capacity_ == 0) return;
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t k, Rng& rng) const {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = rng.uniform_index(data_.size());
    return idx;
}

net::NetSpec shapley_actor_spec(int n, int obs_dim, int hidden) {
    return {{n * obs_dim + n, hidden, hidden, 4}};
}
net::NetSpec baseline_actor_spec(int obs_dim, int hidden) {
    return {{obs_dim, hidden, hidden, 4}};
}
net::NetSpec characteristic_spec(int n, int obs_dim, int hidden) {
    return {{n * (obs_dim + 4) + n, hidden, hidden, 1}};
}
net::NetSpec maddpg_critic_spec(int n, int obs_dim, int hidden) {
    return {{n * (obs_dim + 4), hidden, hidden, 1}};
}
net::NetSpec independent_critic_spec(int obs_dim, int hidden) {
    return {{obs_dim + 4, hidden, hidden, 1}};
}

NetWithTarget NetWithTarget::make(net::NetSpec spec, double lr, Rng& rng) {
    NetWithTarget n;
    n.spec = std::move(spec);
    n.params = net::init_params(n.spec, rng);
    n.target = n.params;
    n.opt = net::Adam(n.spec.param_count(), lr);
    return n;
}

AgentSet AgentSet::make(Algorithm kind, int n_agents, int obs_dim, const TrainerConfig& cfg,
                        Rng& rng) {
    cfg.validate();
    if (n_agents < 1 || n_agents > game::kMaxAgents)
        throw std::runtime_error("agent set: agent count out of range");
    AgentSet a;
    a.kind = kind;
    a.n = n_agents;
    a.obs_dim = obs_dim;
    for (int i = 0; i < n_agents; ++i) {
        net::NetSpec spec = kind == Algorithm::Shapley
                                ? shapley_actor_spec(n_agents, obs_dim, cfg.hidden)
                                : baseline_actor_spec(obs_dim, cfg.hidden);
        a.actors.push_back(NetWithTarget::make(std::move(spec), cfg.actor_lr, rng));
    }
    switch (kind) {
        case Algorithm::Shapley:
            a.critics.push_back(NetWithTarget::make(
                characteristic_spec(n_agents, obs_dim, cfg.hidden), cfg.critic_lr, rng));
            break;
        case Algorithm::Maddpg:
            for (int i = 0; i < n_agents; ++i)
                a.critics.push_back(NetWithTarget::make(
                    maddpg_critic_spec(n_agents, obs_dim, cfg.hidden), cfg.critic_lr, rng));
            break;
        case Algorithm::Independent:
            for (int i = 0; i < n_agents; ++i)
                a.critics.push_back(NetWithTarget::make(
                    independent_critic_spec(obs_dim, cfg.hidden), cfg.critic_lr, rng));
            break;
    }
    return a;
}

Mask sample_coalition(int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_coalition: n must be >= 1");
    return static_cast<Mask>(1 + rng.uniform_index((std::uint64_t{1} << n) - 1));
}

Vec masked_joint_input(const std::vector<Vec>& obs, const std::vector<Vec>& actions,
                       Mask coalition) {
    const int n = static_cast<int>(obs.size());
    if (static_cast<int>(actions.size()) != n)
        throw std::invalid_argument("masked_joint_input: obs/action count mismatch");
    Vec x;
    for (int i = 0; i < n; ++i) {
        const bool in = game::contains(coalition, i);
        for (double v : obs[i]) x.push_back(in ? v : 0.0);
    }
    for (int i = 0; i < n; ++i) {
        const bool in = game::contains(coalition, i);
        for (double v : actions[i]) x.push_back(in ? v : 0.0);
    }
    for (int i = 0; i < n; ++i) x.push_back(game::contains(coalition, i) ? 1.0 : 0.0);
    return x;
}

Vec masked_obs_view(const std::vector<Vec>& obs, Mask coalition) {
    const int n = static_cast<int>(obs.size());
    Vec x;
    for (int i = 0; i < n; ++i) {
        const bool in = game::contains(coalition, i);
        for (double v : obs[i]) x.push_back(in ? v : 0.0);
    }
    for (int i = 0; i < n; ++i) x.push_back(game::contains(coalition, i) ? 1.0 : 0.0);
    return x;
}

std::array<double, 4> softmax4(const Vec& logits) {
    if (logits.size() != 4) throw std::invalid_argument("softmax4: need 4 logits");
    const double zmax = *std::max_element(logits.begin(), logits.end());
    std::array<double, 4> p{};
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
        p[k] = std::exp(logits[k] - zmax);
        sum += p[k];
    }
    for (double& x : p) x /= sum;
    return p;
}

VehicleAction select_action(const AgentSet& agents, int agent, const Vec& view, double sigma,
                            Rng& rng) {
    const NetWithTarget& actor = agents.actors.at(agent);
    Vec logits = net::forward(actor.spec, actor.params, view);
    for (double& z : logits) z += sigma * rng.normal();
    return VehicleAction::from_relaxed(softmax4(logits));
}

UpdateResult critic_update(AgentSet& agents, const ReplayBuffer& buffer,
                           const std::vector<std::size_t>& batch, const TrainerConfig& cfg) {
    if (agents.kind != Algorithm::Shapley)
        throw std::logic_error("critic_update: shapley agents expected");
    if (buffer.size() < static_cast<std::size_t>(cfg.warmup_factor) * cfg.batch)
        return {false, 0.0};

    NetWithTarget& cn = agents.characteristic();
    const double K = static_cast<double>(batch.size());
    Vec grad(cn.spec.param_count(), 0.0);
    double loss = 0.0;

    for (std::size_t idx : batch) {
        const Transition& t = buffer.at(idx);
        const double r_c = env::coalition_reward(t.rewards, t.coalition);

        std::vector<Vec> next_actions(agents.n);
        for (int j = 0; j < agents.n; ++j)
            next_actions[j] = to_vec(target_policy(
                agents.actors[j], masked_obs_view(t.next_obs, acting_view(t.coalition, j))));
        const double v_next =
            t.coalition == 0
                ? 0.0
                : softplus(net::forward(cn.spec, cn.target,
                                        masked_joint_input(t.next_obs, next_actions,
                                                           t.coalition))[0]);
        const double y = r_c + cfg.gamma * v_next;

        const Vec input = masked_joint_input(t.obs, t.actions, t.coalition);
        net::Grads g = net::backward(cn.spec, cn.params, input, {1.0});
        const double pred = softplus(g.output[0]);
        const double diff = pred - y;
        loss += diff * diff / K;
        const double scale = 2.0 * diff / K * sigmoid(g.output[0]);
        for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += scale * g.params[p];
    }

    net::clip_global_norm(grad, cfg.grad_clip);
    cn.opt.apply(cn.params, grad);
    return {true, loss};
}

double shapley_estimate(const AgentSet& agents, const std::vector<Vec>& obs,
                        const std::vector<Vec>& actions, int agent, const TrainerConfig& cfg,
                        Rng* mc_rng) {
    const NetWithTarget& cn = agents.characteristic();
    const int n = agents.n;
    auto value = [&](Mask c) { return char_value(cn.spec, cn.params, obs, actions, c); };

    if (cfg.shapley_mode == ShapleyMode::Exact) {
        if (n > cfg.n_exact)
            throw std::runtime_error("shapley_estimate: n=" + std::to_string(n) +
                                     " exceeds n_exact=" + std::to_string(cfg.n_exact) +
                                     " in exact mode");
        const std::vector<double> w = game::shapley_weights(n);
        double phi = 0.0;
        const Mask others = game::full_mask(n) & ~(Mask{1} << agent);
        // iterate subsets of N \ {agent}
        Mask c = 0;
        while (true) {
            phi += w[game::cardinality(c)] * (value(c | (Mask{1} << agent)) - value(c));
            if (c == others) break;
            c = (c - others) & others;  // next subset
        }
        return phi;
    }

    if (mc_rng == nullptr)
        throw std::invalid_argument("shapley_estimate: mc mode needs an rng");
    std::vector<int> order(n);
    double phi = 0.0;
    for (int s = 0; s < cfg.mc_permutations; ++s) {
        for (int i = 0; i < n; ++i) order[i] = i;
        for (int k = n - 1; k > 0; --k)
            std::swap(order[k], order[mc_rng->uniform_index(std::uint64_t(k) + 1)]);
        Mask preceding = 0;
        for (int i = 0; i < n && order[i] != agent; ++i) preceding |= Mask{1} << order[i];
        phi += value(preceding | (Mask{1} << agent)) - value(preceding);
    }
    return phi / cfg.mc_permutations;
}

game::CharacteristicTable induced_table(const AgentSet& agents, const std::vector<Vec>& obs,
                                        const std::vector<Vec>& actions) {
    const NetWithTarget& cn = agents.characteristic();
    game::CharacteristicTable t = game::CharacteristicTable::zeros(agents.n);
    for (Mask c = 1; c <= game::full_mask(agents.n); ++c)
        t.values[c] = char_value(cn.spec, cn.params, obs, actions, c);
    return t;
}

ActorGradient actor_gradient(const AgentSet& agents, const ReplayBuffer& buffer,
                             const std::vector<std::size_t>& batch, int agent,
                             const TrainerConfig& cfg, Rng* mc_rng) {
    const NetWithTarget& cn = agents.characteristic();
    const NetWithTarget& actor = agents.actors.at(agent);
    const int n = agents.n;
    const double K = static_cast<double>(batch.size());
    const int obs_block = n * agents.obs_dim;  // action slots start here

    ActorGradient out;
    out.grad.assign(actor.spec.param_count(), 0.0);

    const std::vector<double> weights = game::shapley_weights(n);

    for (std::size_t idx : batch) {
        const Transition& t = buffer.at(idx);
        const Vec view = masked_obs_view(t.obs, t.coalition);
        const Vec logits = net::forward(actor.spec, actor.params, view);
        const std::array<double, 4> a_i = softmax4(logits);

        std::vector<Vec> actions = t.actions;
        actions[agent] = to_vec(a_i);

        // phi^i and d(phi^i)/d(a^i). Only terms whose coalition contains the
        // agent depend on a^i: its action slot is zero-masked elsewhere.
        double phi = 0.0;
        std::array<double, 4> g_a{};
        auto add_term = [&](Mask preceding, double weight) {
            const Mask with = preceding | (Mask{1} << agent);
            net::Grads g = net::backward(cn.spec, cn.params,
                                         masked_joint_input(t.obs, actions, with), {1.0});
            const double v_with = softplus(g.output[0]);
            const double v_without =
                preceding == 0 ? 0.0
                               : softplus(net::forward(
                                     cn.spec, cn.params,
                                     masked_joint_input(t.obs, actions, preceding))[0]);
            phi += weight * (v_with - v_without);
            const double s = weight * sigmoid(g.output[0]);
            const std::size_t a_off = obs_block + std::size_t(agent) * 4;
            for (int k = 0; k < 4; ++k) g_a[k] += s * g.input[a_off + k];
        };

        if (cfg.shapley_mode == ShapleyMode::Exact) {
            if (n > cfg.n_exact)
                throw std::runtime_error("actor_gradient: n exceeds n_exact in exact mode");
            const Mask others = game::full_mask(n) & ~(Mask{1} << agent);
            Mask c = 0;
            while (true) {
                add_term(c, weights[game::cardinality(c)]);
                if (c == others) break;
                c = (c - others) & others;
            }
        } else {
            if (mc_rng == nullptr)
                throw std::invalid_argument("actor_gradient: mc mode needs an rng");
            std::vector<int> order(n);
            const double w = 1.0 / cfg.mc_permutations;
            for (int s = 0; s < cfg.mc_permutations; ++s) {
                for (int i = 0; i < n; ++i) order[i] = i;
                for (int k = n - 1; k > 0; --k)
                    std::swap(order[k], order[mc_rng->uniform_index(std::uint64_t(k) + 1)]);
                Mask preceding = 0;
                for (int i = 0; i < n && order[i] != agent; ++i)
                    preceding |= Mask{1} << order[i];
                add_term(preceding, w);
            }
        }

        out.mean_phi += phi / K;
        const Vec zgrad = softmax_chain(a_i, g_a);
        net::Grads ag = net::backward(actor.spec, actor.params, view, zgrad);
        for (std::size_t p = 0; p < out.grad.size(); ++p) out.grad[p] += ag.params[p] / K;
    }
    return out;
}

UpdateResult actor_update(AgentSet& agents, const ReplayBuffer& buffer,
                          const std::vector<std::size_t>& batch, int agent,
                          const TrainerConfig& cfg, Rng* mc_rng) {
    if (agents.kind != Algorithm::Shapley)
        throw std::logic_error("actor_update: shapley agents expected");
    if (buffer.size() < static_cast<std::size_t>(cfg.warmup_factor) * cfg.batch)
        return {false, 0.0};
    ActorGradient g = actor_gradient(agents, buffer, batch, agent, cfg, mc_rng);
    net::clip_global_norm(g.grad, cfg.grad_clip);
    for (double& x : g.grad) x = -x;  // ascent on mean phi
    NetWithTarget& actor = agents.actors[agent];
    actor.opt.apply(actor.params, g.grad);
    return {true, g.mean_phi};
}

BaselineLosses baseline_update(AgentSet& agents, const ReplayBuffer& buffer,
                               const std::vector<std::size_t>& batch, const TrainerConfig& cfg) {
    if (agents.kind == Algorithm::Shapley)
        throw std::logic_error("baseline_update: baseline agents expected");
    if (buffer.size() < static_cast<std::size_t>(cfg.warmup_factor) * cfg.batch)
        return {};

    const bool central = agents.kind == Algorithm::Maddpg;
    const double K = static_cast<double>(batch.size());
    BaselineLosses losses;
    losses.ready = true;

    for (int i = 0; i < agents.n; ++i) {
        NetWithTarget& q = agents.critics[i];
        NetWithTarget& actor = agents.actors[i];

        // Critic: y = r^i + gamma * Q'(s', a') with a'^j from target actors.
        Vec qgrad(q.spec.param_count(), 0.0);
        double loss = 0.0;
        for (std::size_t idx : batch) {
            const Transition& t = buffer.at(idx);
            double y;
            Vec input;
            if (central) {
                std::vector<Vec> next_actions(agents.n);
                for (int j = 0; j < agents.n; ++j)
                    next_actions[j] = to_vec(target_policy(agents.actors[j], t.next_obs[j]));
                y = t.rewards[i] +
                    cfg.gamma *
                        net::forward(q.spec, q.target, concat_all(t.next_obs, next_actions))[0];
                input = concat_all(t.obs, t.actions);
            } else {
                const Vec next_a = to_vec(target_policy(actor, t.next_obs[i]));
                y = t.rewards[i] +
                    cfg.gamma * net::forward(q.spec, q.target,
                                             concat_all({t.next_obs[i]}, {next_a}))[0];
                input = concat_all({t.obs[i]}, {t.actions[i]});
            }
            net::Grads g = net::backward(q.spec, q.params, input, {1.0});
            const double diff = g.output[0] - y;
            loss += diff * diff / K;
            const double scale = 2.0 * diff / K;
            for (std::size_t p = 0; p < qgrad.size(); ++p) qgrad[p] += scale * g.params[p];
        }
        net::clip_global_norm(qgrad, cfg.grad_clip);
        q.opt.apply(q.params, qgrad);
        losses.critic_loss += loss / agents.n;

        // Actor: ascend mean Q with the agent's own action re-derived from
        // its policy.
        Vec agrad(actor.spec.param_count(), 0.0);
        double objective = 0.0;
        for (std::size_t idx : batch) {
            const Transition& t = buffer.at(idx);
            const Vec& view = t.obs[i];
            const Vec logits = net::forward(actor.spec, actor.params, view);
            const std::array<double, 4> a_i = softmax4(logits);

            Vec input;
            std::size_t a_off;
            if (central) {
                std::vector<Vec> actions = t.actions;
                actions[i] = to_vec(a_i);
                input = concat_all(t.obs, actions);
                a_off = std::size_t(agents.n) * agents.obs_dim + std::size_t(i) * 4;
            } else {
                input = concat_all({t.obs[i]}, {to_vec(a_i)});
                a_off = static_cast<std::size_t>(agents.obs_dim);
            }
            net::Grads g = net::backward(q.spec, q.params, input, {1.0});
            objective += g.output[0] / K;
            std::array<double, 4> g_a{};
            for (int k = 0; k < 4; ++k) g_a[k] = g.input[a_off + k];
            const Vec zgrad = softmax_chain(a_i, g_a);
            net::Grads ag = net::backward(actor.spec, actor.params, view, zgrad);
            for (std::size_t p = 0; p < agrad.size(); ++p) agrad[p] += ag.params[p] / K;
        }
        net::clip_global_norm(agrad, cfg.grad_clip);
        for (double& x : agrad) x = -x;
        actor.opt.apply(actor.params, agrad);
        losses.actor_objective += objective / agents.n;
    }
    return losses;
}

namespace {

double noise_scale(const TrainerConfig& cfg, double progress) {
    // Linear decay to sigma_min_frac * sigma over the first half of training.
    const double frac = std::clamp(progress / 0.5, 0.0, 1.0);
    return cfg.sigma * (1.0 - (1.0 - cfg.sigma_min_frac) * frac);
}

struct StepAccumulator {
    double system_reward = 0.0;
    double velocity_sum = 0.0;
    double comfort_sum = 0.0;
    long vehicle_steps = 0;

    void add(const env::StepResult& res, const std::vector<VehicleAction>& actions,
             const env::EnvConfig& env_cfg) {
        for (std::size_t v = 0; v < res.rewards.size(); ++v) {
            system_reward += res.rewards[v];
            velocity_sum += res.next.vehicles[v].velocity;
            comfort_sum += env::comfort_score(res.next.vehicles[v].acceleration,
                                              actions[v].discrete, env_cfg);
            ++vehicle_steps;
        }
    }
};

std::vector<Vec> gather_obs(const env::WorldState& world, int n_agents,
                            const env::EnvConfig& env_cfg) {
    std::vector<Vec> obs(n_agents);
    for (int i = 0; i < n_agents; ++i) obs[i] = env::observe(world, i, env_cfg);
    return obs;
}

}  // namespace

EpisodeMetrics train_episode(AgentSet& agents, ReplayBuffer& buffer,
                             const env::EnvConfig& env_cfg, const TrainerConfig& cfg, int steps,
                             double progress, Rng& rng, bool learning_enabled) {
    cfg.validate();
    if (agents.n > env_cfg.n_vehicles)
        throw std::runtime_error("train_episode: more agents than vehicles");

    env::WorldState world = env::reset(env_cfg, rng.next_u64());
    for (int i = 0; i < agents.n; ++i) world.vehicles[i].is_cav = true;

    const double sigma = noise_scale(cfg, progress);
    const bool shapley = agents.kind == Algorithm::Shapley;
    EpisodeMetrics metrics;
    StepAccumulator acc;
    double loss_sum = 0.0, objective_sum = 0.0;
    long update_rounds = 0;

    std::vector<Vec> obs = gather_obs(world, agents.n, env_cfg);
    for (int step = 0; step < steps; ++step) {
        const Mask coalition =
            shapley ? sample_coalition(agents.n, rng) : game::full_mask(agents.n);
        metrics.coalition_trace.push_back(coalition);

        std::vector<VehicleAction> actions(env_cfg.n_vehicles);
        for (int v = 0; v < env_cfg.n_vehicles; ++v) {
            if (v < agents.n) {
                const Vec view = shapley ? masked_obs_view(obs, acting_view(coalition, v))
                                         : obs[v];
                actions[v] = select_action(agents, v, view, sigma, rng);
            } else {
                actions[v] = env::scripted_driver_action(world, v, env_cfg);
            }
        }

        env::StepResult res = env::step(world, actions, env_cfg);
        acc.add(res, actions, env_cfg);

        Transition t;
        t.obs = obs;
        t.coalition = coalition;
        t.actions.resize(agents.n);
        t.rewards.resize(agents.n);
        for (int i = 0; i < agents.n; ++i) {
            t.actions[i] = Vec(actions[i].relaxed.begin(), actions[i].relaxed.end());
            t.rewards[i] = res.rewards[i];
        }
        world = res.next;
        obs = gather_obs(world, agents.n, env_cfg);
        t.next_obs = obs;
        buffer.push(std::move(t));

        const bool warm = buffer.size() >= static_cast<std::size_t>(cfg.warmup_factor) * cfg.batch;
        if (learning_enabled && warm && step % cfg.update_every == 0) {
            if (shapley) {
                auto cu = critic_update(agents, buffer, buffer.sample_indices(cfg.batch, rng), cfg);
                loss_sum += cu.value;
                double phi_sum = 0.0;
                int updated = 0;
                for (int i = 0; i < agents.n; ++i) {
                    if (cfg.update_coalition_only && !game::contains(coalition, i)) continue;
                    auto au = actor_update(agents, buffer, buffer.sample_indices(cfg.batch, rng),
                                           i, cfg, &rng);
                    phi_sum += au.value;
                    ++updated;
                }
                objective_sum += updated > 0 ? phi_sum / updated : 0.0;
            } else {
                auto bl = baseline_update(agents, buffer, buffer.sample_indices(cfg.batch, rng),
                                          cfg);
                loss_sum += bl.critic_loss;
                objective_sum += bl.actor_objective;
            }
            for (NetWithTarget& nt : agents.actors) net::soft_update(nt.target, nt.params, cfg.tau);
            for (NetWithTarget& nt : agents.critics)
                net::soft_update(nt.target, nt.params, cfg.tau);
            ++update_rounds;
        }
        ++metrics.steps;
    }

    metrics.system_reward = acc.system_reward;
    if (acc.vehicle_steps > 0) {
        metrics.mean_velocity = acc.velocity_sum / acc.vehicle_steps;
        metrics.mean_comfort = acc.comfort_sum / acc.vehicle_steps;
    }
    if (update_rounds > 0) {
        metrics.mean_critic_loss = loss_sum / update_rounds;
        metrics.mean_actor_objective = objective_sum / update_rounds;
    }
    return metrics;
}

EpisodeMetrics eval_episode(const AgentSet& agents, const env::EnvConfig& env_cfg,
                            const TrainerConfig& cfg, int steps, Rng& rng) {
    env::WorldState world = env::reset(env_cfg, rng.next_u64());
    for (int i = 0; i < agents.n; ++i) world.vehicles[i].is_cav = true;

    const bool shapley = agents.kind == Algorithm::Shapley;
    const Mask grand = agents.n > 0 ? game::full_mask(agents.n) : 0;
    EpisodeMetrics metrics;
    StepAccumulator acc;

    std::vector<Vec> obs = gather_obs(world, agents.n, env_cfg);
    for (int step = 0; step < steps; ++step) {
        std::vector<VehicleAction> actions(env_cfg.n_vehicles);
        for (int v = 0; v < env_cfg.n_vehicles; ++v) {
            if (v < agents.n) {
                // Deployed CAVs all communicate: grand-coalition view, greedy.
                const Vec view = shapley ? masked_obs_view(obs, grand) : obs[v];
                const NetWithTarget& actor = agents.actors[v];
                actions[v] = VehicleAction::from_relaxed(
                    softmax4(net::forward(actor.spec, actor.params, view)));
            } else {
                actions[v] = env::scripted_driver_action(world, v, env_cfg);
            }
        }
        env::StepResult res = env::step(world, actions, env_cfg);
        acc.add(res, actions, env_cfg);
        world = res.next;
        if (agents.n > 0) obs = gather_obs(world, agents.n, env_cfg);
        ++metrics.steps;
    }
    metrics.system_reward = acc.system_reward;
    if (acc.vehicle_steps > 0) {
        metrics.mean_velocity = acc.velocity_sum / acc.vehicle_steps;
        metrics.mean_comfort = acc.comfort_sum / acc.vehicle_steps;
    }
    return metrics;
}

}  // namespace coopshap::marl

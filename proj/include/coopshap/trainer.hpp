#ifndef COOPSHAP_TRAINER_HPP
#define COOPSHAP_TRAINER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coopshap/diffnet.hpp"
#include "coopshap/freeway.hpp"
#include "coopshap/game.hpp"
#include "coopshap/rng.hpp"

namespace coopshap::marl {

using net::Vec;
using game::Mask;

enum class Algorithm { Shapley, Maddpg, Independent };

enum class ShapleyMode { Exact, MonteCarlo };

// One replay record: joint observations and relaxed joint actions over the
// learning agents (CAVs), the coalition sampled for the step, per-agent
// rewards, and the successor observations.
struct Transition {
    std::vector<Vec> obs;
    std::vector<Vec> actions;  // relaxed 4-vectors
    Mask coalition = 0;
    std::vector<double> rewards;
    std::vector<Vec> next_obs;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return data_[i]; }

    // K indices uniform over the filled region.
    std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> data_;

    friend struct BufferCodec;
};

struct TrainerConfig {
    double gamma = 0.95;
    double tau = 0.01;
    int batch = 32;
    int capacity = 100000;
    double sigma = 0.5;            // initial exploration noise scale
    double sigma_min_frac = 0.05;  // sigma decays linearly to this fraction
    ShapleyMode shapley_mode = ShapleyMode::Exact;
    int mc_permutations = 32;
    int n_exact = 8;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    int warmup_factor = 10;  // updates start once buffer >= warmup_factor * batch
    int update_every = 1;    // environment steps between update rounds
    bool update_coalition_only = false;
    int hidden = 64;         // width of the two hidden layers
    double grad_clip = 1.0;

    void validate() const;
};

struct NetWithTarget {
    net::NetSpec spec;
    Vec params;
    Vec target;
    net::Adam opt;

    static NetWithTarget make(net::NetSpec spec, double lr, Rng& rng);
};

// All learnable state for one run: per-agent actors and, depending on the
// algorithm, one shared characteristic network or per-agent Q critics.
struct AgentSet {
    Algorithm kind = Algorithm::Shapley;
    int n = 0;        // learning agents
    int obs_dim = 0;  // per-agent observation length
    std::vector<NetWithTarget> actors;
    std::vector<NetWithTarget> critics;  // size 1 (Shapley) or n (baselines)

    static AgentSet make(Algorithm kind, int n_agents, int obs_dim, const TrainerConfig& cfg,
                         Rng& rng);

    const NetWithTarget& characteristic() const { return critics[0]; }
    NetWithTarget& characteristic() { return critics[0]; }
};

// Actor input layouts. Shapley actors see the coalition view: all agents'
// observations with out-of-coalition slots zeroed, plus the n-bit mask.
// Baseline actors see only their own observation.
net::NetSpec shapley_actor_spec(int n, int obs_dim, int hidden);
net::NetSpec baseline_actor_spec(int obs_dim, int hidden);
net::NetSpec characteristic_spec(int n, int obs_dim, int hidden);
net::NetSpec maddpg_critic_spec(int n, int obs_dim, int hidden);
net::NetSpec independent_critic_spec(int obs_dim, int hidden);

// Uniform over the 2^n - 1 non-empty coalitions.
Mask sample_coalition(int n, Rng& rng);

// Characteristic-network input: all n observation slots then all n action
// slots in index order, out-of-coalition slots zero-filled, then the n-bit
// coalition indicator.
Vec masked_joint_input(const std::vector<Vec>& obs, const std::vector<Vec>& actions,
                       Mask coalition);

// Actor input for one agent under a coalition view.
Vec masked_obs_view(const std::vector<Vec>& obs, Mask coalition);

// Softmax over logits.
std::array<double, 4> softmax4(const Vec& logits);

// Policy + exploration: softmax(actor(view) + Normal(0, sigma^2) per logit).
env::VehicleAction select_action(const AgentSet& agents, int agent, const Vec& view,
                                 double sigma, Rng& rng);

struct UpdateResult {
    bool ready = false;   // false => buffer below warmup, nothing changed
    double value = 0.0;   // critic loss or mean actor objective
};

// One TD step on the characteristic network (Shapley) over a sampled batch.
UpdateResult critic_update(AgentSet& agents, const ReplayBuffer& buffer,
                           const std::vector<std::size_t>& batch, const TrainerConfig& cfg);

// Shapley value of one agent at (obs, actions) under the current
// characteristic network, with v(empty) = 0 held exactly (the network is
// never queried on the empty coalition).
double shapley_estimate(const AgentSet& agents, const std::vector<Vec>& obs,
                        const std::vector<Vec>& actions, int agent, const TrainerConfig& cfg,
                        Rng* mc_rng = nullptr);

// The full network-induced characteristic table at (obs, actions); for
// oracle cross-checks against game_core.
game::CharacteristicTable induced_table(const AgentSet& agents, const std::vector<Vec>& obs,
                                        const std::vector<Vec>& actions);

struct ActorGradient {
    Vec grad;              // d(mean phi^i)/d(actor params), pre-clip
    double mean_phi = 0.0;
};

// Batch gradient of the mean Shapley value w.r.t. one actor's parameters,
// chaining input-gradients of the characteristic network through the
// softmax relaxation.
ActorGradient actor_gradient(const AgentSet& agents, const ReplayBuffer& buffer,
                             const std::vector<std::size_t>& batch, int agent,
                             const TrainerConfig& cfg, Rng* mc_rng = nullptr);

// Ascent step on the actor; returns mean phi^i before the step.
UpdateResult actor_update(AgentSet& agents, const ReplayBuffer& buffer,
                          const std::vector<std::size_t>& batch, int agent,
                          const TrainerConfig& cfg, Rng* mc_rng = nullptr);

struct BaselineLosses {
    bool ready = false;
    double critic_loss = 0.0;
    double actor_objective = 0.0;
};

// MADDPG-style / independent-learner critic + actor updates for all agents.
BaselineLosses baseline_update(AgentSet& agents, const ReplayBuffer& buffer,
                               const std::vector<std::size_t>& batch, const TrainerConfig& cfg);

struct EpisodeMetrics {
    long steps = 0;
    double system_reward = 0.0;   // sum over steps and all vehicles
    double mean_velocity = 0.0;   // m/s, over all vehicles and steps
    double mean_comfort = 0.0;
    double mean_critic_loss = 0.0;
    double mean_actor_objective = 0.0;
    std::vector<Mask> coalition_trace;  // sampled coalition per step
};

// One Algorithm-1 episode (or baseline equivalent): act, step the
// environment, store transitions, update networks, soft-update targets.
// `progress` in [0,1] drives the exploration-noise decay.
EpisodeMetrics train_episode(AgentSet& agents, ReplayBuffer& buffer, const env::EnvConfig& env_cfg,
                             const TrainerConfig& cfg, int steps, double progress, Rng& rng,
                             bool learning_enabled = true);

// Frozen-policy evaluation (greedy actions, no noise, no updates).
EpisodeMetrics eval_episode(const AgentSet& agents, const env::EnvConfig& env_cfg,
                            const TrainerConfig& cfg, int steps, Rng& rng);

}  // namespace coopshap::marl

#endif

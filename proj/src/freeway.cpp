#include "coopshap/freeway.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace coopshap::env {

namespace {

constexpr double kMinSeparation = 0.1;  // hard floor on same-lane gaps, m

double wrap(double x, double length) {
    x = std::fmod(x, length);
    return x < 0.0 ? x + length : x;
}

// Forward circular distance from a to b.
double forward_dist(double a, double b, double length) { return wrap(b - a, length); }

struct Neighbor {
    int index = -1;
    double gap = std::numeric_limits<double>::infinity();
};

// Nearest vehicle ahead of / behind `vehicle` in `lane`.
Neighbor nearest_lead(const WorldState& s, int vehicle, int lane, double length) {
    Neighbor best;
    const double pos = s.vehicles[vehicle].position;
    for (int j = 0; j < static_cast<int>(s.vehicles.size()); ++j) {
        if (j == vehicle || s.vehicles[j].lane != lane) continue;
        const double d = forward_dist(pos, s.vehicles[j].position, length);
        if (d < best.gap) best = {j, d};
    }
    return best;
}

Neighbor nearest_lag(const WorldState& s, int vehicle, int lane, double length) {
    Neighbor best;
    const double pos = s.vehicles[vehicle].position;
    for (int j = 0; j < static_cast<int>(s.vehicles.size()); ++j) {
        if (j == vehicle || s.vehicles[j].lane != lane) continue;
        const double d = forward_dist(s.vehicles[j].position, pos, length);
        if (d < best.gap) best = {j, d};
    }
    return best;
}

double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

}  // namespace

void EnvConfig::validate() const {
    if (n_vehicles < 1) throw std::runtime_error("env config: n_vehicles must be >= 1");
    if (lanes != 3) throw std::runtime_error("env config: lanes must be 3");
    for (double q : {loop_length, dt, v_max, a_max, comfort_threshold, d_safe, d_lc, k_v,
                     v_des_min, v_des_max, vehicle_length})
        if (!(q > 0.0)) throw std::runtime_error("env config: physical quantities must be > 0");
    if (!(comfort_threshold < a_max))
        throw std::runtime_error("env config: comfort threshold must be below a_max");
    if (!(reward_weight >= 0.0)) throw std::runtime_error("env config: reward weight < 0");
    if (v_des_max > v_max || v_des_min > v_des_max)
        throw std::runtime_error("env config: desired-speed range must fit in [0, v_max]");
}

VehicleAction VehicleAction::pure(Maneuver m) {
    VehicleAction a;
    a.discrete = m;
    a.relaxed = {0.0, 0.0, 0.0, 0.0};
    a.relaxed[static_cast<int>(m)] = 1.0;
    return a;
}

VehicleAction VehicleAction::from_relaxed(const std::array<double, 4>& p) {
    double sum = 0.0;
    for (double x : p) {
        if (x < 0.0) throw std::invalid_argument("action: relaxed entry < 0");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("action: relaxed vector must sum to 1");
    VehicleAction a;
    a.relaxed = p;
    int arg = 0;
    for (int k = 1; k < 4; ++k)
        if (p[k] > p[arg]) arg = k;
    a.discrete = static_cast<Maneuver>(arg);
    return a;
}

WorldState reset(const EnvConfig& config, std::uint64_t seed) {
    config.validate();
    const int n = config.n_vehicles;
    const double per_slot = config.loop_length * config.lanes / n;
    if (per_slot < config.d_safe + config.vehicle_length)
        throw std::runtime_error("env reset: density infeasible, need L*lanes/n >= d_safe + "
                                 "vehicle length, got " + std::to_string(per_slot));

    std::vector<int> lane_count(config.lanes, 0);
    for (int i = 0; i < n; ++i) ++lane_count[i % config.lanes];
    std::vector<double> spacing(config.lanes, config.loop_length);
    for (int l = 0; l < config.lanes; ++l) {
        if (lane_count[l] == 0) continue;
        spacing[l] = config.loop_length / lane_count[l];
        if (lane_count[l] > 1 && spacing[l] < config.d_safe)
            throw std::runtime_error("env reset: lane " + std::to_string(l) +
                                     " too dense for d_safe");
    }

    Rng rng(seed);
    WorldState s;
    s.vehicles.resize(n);
    s.desired_speed.resize(n);
    for (int i = 0; i < n; ++i) {
        VehicleState& v = s.vehicles[i];
        v.lane = i % config.lanes;
        const int slot = i / config.lanes;
        const double amp = lane_count[v.lane] > 1
                               ? 0.5 * (spacing[v.lane] - config.d_safe)
                               : 0.25 * config.loop_length;
        v.position = wrap(slot * spacing[v.lane] + rng.uniform(-amp, amp), config.loop_length);
        v.velocity = rng.uniform(config.v_des_min, config.v_des_max);
        v.acceleration = 0.0;
        s.desired_speed[i] = rng.uniform(config.v_des_min, config.v_des_max);
    }
    return s;
}

int comfort_score(double acceleration, Maneuver action, const EnvConfig& config) {
    switch (action) {
        case Maneuver::KL:
            return std::abs(acceleration) < config.comfort_threshold ? 3 : 2;
        case Maneuver::CL:
        case Maneuver::CR:
            return 1;
        case Maneuver::ES:
            return 0;
    }
    return 0;
}

double individual_reward(const VehicleState& vehicle, Maneuver action, const EnvConfig& config) {
    return config.reward_weight * vehicle.velocity +
           comfort_score(vehicle.acceleration, action, config);
}

double coalition_reward(const std::vector<double>& rewards, game::Mask coalition) {
    if (coalition >> rewards.size())
        throw std::invalid_argument("coalition_reward: member index out of range");
    double sum = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i)
        if (game::contains(coalition, static_cast<int>(i))) sum += rewards[i];
    return sum;
}

StepResult step(const WorldState& state, const std::vector<VehicleAction>& actions,
                const EnvConfig& config) {
    config.validate();
    const int n = static_cast<int>(state.vehicles.size());
    if (static_cast<int>(actions.size()) != n)
        throw std::invalid_argument("step: expected " + std::to_string(n) + " actions, got " +
                                    std::to_string(actions.size()));

    StepResult res;
    res.next = state;
    WorldState& next = res.next;

    // Phase 1: lane changes, ascending index so a lower-index mover claims a
    // contested slot first and the later change re-checks against it.
    for (int i = 0; i < n; ++i) {
        const Maneuver m = actions[i].discrete;
        if (m != Maneuver::CL && m != Maneuver::CR) continue;
        const int target = next.vehicles[i].lane + (m == Maneuver::CL ? -1 : +1);
        if (target < 0 || target >= config.lanes) continue;
        const Neighbor lead = nearest_lead(next, i, target, config.loop_length);
        const Neighbor lag = nearest_lag(next, i, target, config.loop_length);
        if (lead.gap >= config.d_lc && lag.gap >= config.d_lc) next.vehicles[i].lane = target;
    }

    // Phase 2: longitudinal update against pre-move positions (order-free).
    res.rewards.resize(n);
    std::vector<double> moves(n);
    for (int i = 0; i < n; ++i) {
        VehicleState& v = next.vehicles[i];
        const Neighbor lead = nearest_lead(next, i, v.lane, config.loop_length);
        double acc = clamp(config.k_v * (state.desired_speed[i] - v.velocity), -config.a_max,
                           config.a_max);
        if (actions[i].discrete == Maneuver::ES || lead.gap < config.d_safe) acc = -config.a_max;
        double vel = clamp(v.velocity + acc * config.dt, 0.0, config.v_max);
        double move = vel * config.dt;
        if (lead.index >= 0)  // never cross the leader's pre-move position
            move = std::max(0.0, std::min(move, lead.gap - kMinSeparation));
        moves[i] = move;
        const double vel_real = move / config.dt;
        v.acceleration = clamp((vel_real - v.velocity) / config.dt, -config.a_max, config.a_max);
        v.velocity = vel_real;
        v.in_emergency_stop = actions[i].discrete == Maneuver::ES;
    }
    for (int i = 0; i < n; ++i) {
        next.vehicles[i].position =
            wrap(next.vehicles[i].position + moves[i], config.loop_length);
        res.rewards[i] = individual_reward(next.vehicles[i], actions[i].discrete, config);
    }
    ++next.step_count;
    return res;
}

double lead_gap(const WorldState& state, int vehicle, int lane, const EnvConfig& config) {
    const Neighbor nb = nearest_lead(state, vehicle, lane, config.loop_length);
    return nb.index < 0 ? config.loop_length : nb.gap;
}

double lag_gap(const WorldState& state, int vehicle, int lane, const EnvConfig& config) {
    const Neighbor nb = nearest_lag(state, vehicle, lane, config.loop_length);
    return nb.index < 0 ? config.loop_length : nb.gap;
}

std::vector<double> observe(const WorldState& state, int vehicle, const EnvConfig& config) {
    if (vehicle < 0 || vehicle >= static_cast<int>(state.vehicles.size()))
        throw std::invalid_argument("observe: vehicle index out of range");
    const VehicleState& me = state.vehicles[vehicle];
    std::vector<double> obs;
    obs.reserve(kObsDim);
    for (int l = 0; l < 3; ++l) obs.push_back(me.lane == l ? 1.0 : 0.0);
    obs.push_back(me.velocity / config.v_max);
    obs.push_back(me.acceleration / config.a_max);
    for (int l = 0; l < 3; ++l) {
        Neighbor lead = nearest_lead(state, vehicle, l, config.loop_length);
        Neighbor lag = nearest_lag(state, vehicle, l, config.loop_length);
        if (lead.index >= 0 && lead.index == lag.index) {
            // A lone neighbor is reported only in its nearer role.
            if (lead.gap <= lag.gap)
                lag = Neighbor{};
            else
                lead = Neighbor{};
        }
        for (const Neighbor& nb : {lead, lag}) {
            if (nb.index < 0) {
                obs.push_back(1.0);
                obs.push_back(0.0);
            } else {
                obs.push_back(nb.gap / config.loop_length);
                obs.push_back((state.vehicles[nb.index].velocity - me.velocity) / config.v_max);
            }
        }
    }
    return obs;
}

VehicleAction scripted_driver_action(const WorldState& state, int vehicle,
                                     const EnvConfig& config) {
    if (vehicle < 0 || vehicle >= static_cast<int>(state.vehicles.size()))
        throw std::invalid_argument("scripted_driver_action: vehicle index out of range");
    if (state.vehicles[vehicle].is_cav)
        throw std::invalid_argument("scripted_driver_action: called on a CAV");

    const int lane = state.vehicles[vehicle].lane;
    const double ahead = lead_gap(state, vehicle, lane, config);
    if (ahead < config.d_safe) return VehicleAction::pure(Maneuver::ES);
    if (ahead < 2.0 * config.d_lc) {
        for (Maneuver m : {Maneuver::CL, Maneuver::CR}) {  // prefer left
            const int target = lane + (m == Maneuver::CL ? -1 : +1);
            if (target < 0 || target >= config.lanes) continue;
            if (lead_gap(state, vehicle, target, config) >= 2.0 * config.d_lc &&
                lag_gap(state, vehicle, target, config) >= 2.0 * config.d_lc)
                return VehicleAction::pure(m);
        }
    }
    return VehicleAction::pure(Maneuver::KL);
}

}  // namespace coopshap::env

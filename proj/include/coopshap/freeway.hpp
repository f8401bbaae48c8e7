#ifndef COOPSHAP_FREEWAY_HPP
#define COOPSHAP_FREEWAY_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "coopshap/game.hpp"
#include "coopshap/rng.hpp"

namespace coopshap::env {

// Discrete maneuvers: keep lane, change left, change right, emergency stop.
enum class Maneuver : int { KL = 0, CL = 1, CR = 2, ES = 3 };

constexpr int kManeuvers = 4;

// Discrete maneuver plus its continuous relaxation on the 4-simplex.
// discrete is always argmax(relaxed) with index-order tie-break.
struct VehicleAction {
    Maneuver discrete = Maneuver::KL;
    std::array<double, 4> relaxed{1.0, 0.0, 0.0, 0.0};

    static VehicleAction pure(Maneuver m);
    static VehicleAction from_relaxed(const std::array<double, 4>& p);
};

struct VehicleState {
    int lane = 0;
    double position = 0.0;      // meters along the loop, [0, L)
    double velocity = 0.0;      // m/s
    double acceleration = 0.0;  // last step's realized value, m/s^2
    bool is_cav = false;
    bool in_emergency_stop = false;
};

struct EnvConfig {
    int n_vehicles = 4;
    int lanes = 3;
    double loop_length = 400.0;      // m
    double dt = 0.5;                 // s
    double v_max = 33.0;             // m/s
    double a_max = 4.0;              // m/s^2
    double comfort_threshold = 2.0;  // m/s^2 (Theta)
    double reward_weight = 0.1;      // velocity weight w
    double d_safe = 20.0;            // forced-braking gap, m
    double d_lc = 15.0;              // lane-change gap, m
    double k_v = 0.5;                // car-following gain, 1/s
    double v_des_min = 25.0;         // desired-speed range, m/s
    double v_des_max = 33.0;
    double vehicle_length = 5.0;     // m, used for density feasibility only

    void validate() const;
};

struct WorldState {
    std::vector<VehicleState> vehicles;
    std::vector<double> desired_speed;  // drawn at reset, fixed per episode
    long step_count = 0;
};

struct StepResult {
    WorldState next;
    std::vector<double> rewards;  // per vehicle, nonnegative
};

// Deterministic per (config, seed). Vehicles are placed round-robin across
// lanes with jittered even spacing; all initial same-lane gaps >= d_safe.
// Throws std::runtime_error when the density is infeasible.
WorldState reset(const EnvConfig& config, std::uint64_t seed);

// Pure transition: lane changes first (guarded, ascending index, lower index
// wins conflicts), then car-following longitudinal update with a hard
// collision guard, then kinematics and per-vehicle rewards.
StepResult step(const WorldState& state, const std::vector<VehicleAction>& actions,
                const EnvConfig& config);

// Passenger-comfort score on the commanded discrete maneuver.
int comfort_score(double acceleration, Maneuver action, const EnvConfig& config);

// w * velocity + comfort. Nonnegative on every reachable state.
double individual_reward(const VehicleState& vehicle, Maneuver action, const EnvConfig& config);

// Sum of member rewards; empty coalition is worth exactly 0.
double coalition_reward(const std::vector<double>& rewards, game::Mask coalition);

// Fixed-length local observation: own lane one-hot(3), velocity/v_max,
// acceleration/a_max, then 6 neighbor slots (lead/lag per lane) as
// (gap / L, relative velocity / v_max); absent neighbor = (1.0, 0.0).
constexpr int kObsDim = 3 + 2 + 6 * 2;
std::vector<double> observe(const WorldState& state, int vehicle, const EnvConfig& config);

// Rule-based human driver: ES when the lead gap is unsafe, an early lane
// change when blocked and the adjacent lane is clear (prefer left), else KL.
VehicleAction scripted_driver_action(const WorldState& state, int vehicle,
                                     const EnvConfig& config);

// Forward (lead) and backward (lag) circular gap from `vehicle` to the
// nearest same-lane neighbor in `lane`; loop_length when the lane is empty
// apart from the vehicle itself.
double lead_gap(const WorldState& state, int vehicle, int lane, const EnvConfig& config);
double lag_gap(const WorldState& state, int vehicle, int lane, const EnvConfig& config);

}  // namespace coopshap::env

#endif

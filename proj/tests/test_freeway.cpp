#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coopshap/freeway.hpp"
#include "coopshap/rng.hpp"

using namespace coopshap;
using env::EnvConfig;
using env::Maneuver;
using env::VehicleAction;
using env::WorldState;

namespace {

// Loop-wrapped same-lane gap from i to j.
double fwd(const WorldState& s, int i, int j, const EnvConfig& c) {
    double d = std::fmod(s.vehicles[j].position - s.vehicles[i].position, c.loop_length);
    return d < 0 ? d + c.loop_length : d;
}

WorldState lone_vehicle(double velocity, double desired, const EnvConfig&) {
    WorldState s;
    s.vehicles.resize(1);
    s.vehicles[0].lane = 0;
    s.vehicles[0].position = 10.0;
    s.vehicles[0].velocity = velocity;
    s.desired_speed = {desired};
    return s;
}

}  // namespace

TEST_CASE("config validation") {
    EnvConfig c;
    c.validate();
    c.comfort_threshold = 5.0;  // >= a_max
    CHECK_THROWS_AS(c.validate(), std::runtime_error);
    c = EnvConfig{};
    c.v_des_max = 40.0;
    CHECK_THROWS_AS(c.validate(), std::runtime_error);
    c = EnvConfig{};
    c.n_vehicles = 0;
    CHECK_THROWS_AS(c.validate(), std::runtime_error);
}

TEST_CASE("relaxed actions") {
    const VehicleAction p = VehicleAction::pure(Maneuver::CR);
    CHECK(p.discrete == Maneuver::CR);
    CHECK(p.relaxed == std::array<double, 4>{0.0, 0.0, 1.0, 0.0});

    const VehicleAction a = VehicleAction::from_relaxed({0.1, 0.2, 0.6, 0.1});
    CHECK(a.discrete == Maneuver::CR);
    // exact tie: lowest index wins
    CHECK(VehicleAction::from_relaxed({0.25, 0.25, 0.25, 0.25}).discrete == Maneuver::KL);

    CHECK_THROWS_AS(VehicleAction::from_relaxed({0.5, 0.5, 0.5, -0.5}), std::invalid_argument);
    CHECK_THROWS_AS(VehicleAction::from_relaxed({0.5, 0.4, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("reset is deterministic and respects initial gaps") {
    EnvConfig c;
    c.n_vehicles = 30;
    const WorldState a = env::reset(c, 9);
    const WorldState b = env::reset(c, 9);
    REQUIRE(a.vehicles.size() == 30);
    for (int i = 0; i < 30; ++i) {
        CHECK(a.vehicles[i].position == b.vehicles[i].position);
        CHECK(a.vehicles[i].velocity == b.vehicles[i].velocity);
        CHECK(a.vehicles[i].lane == i % 3);
        CHECK(a.vehicles[i].velocity >= c.v_des_min);
        CHECK(a.vehicles[i].velocity <= c.v_des_max);
        CHECK(env::lead_gap(a, i, a.vehicles[i].lane, c) >= c.d_safe);
    }
    CHECK(a.desired_speed == b.desired_speed);

    const WorldState one = env::reset(EnvConfig{.n_vehicles = 1}, 4);
    CHECK(one.vehicles.size() == 1);
    CHECK(env::lead_gap(one, 0, 0, EnvConfig{}) == EnvConfig{}.loop_length);
}

TEST_CASE("reset rejects infeasible density") {
    EnvConfig c;
    c.n_vehicles = 30;
    c.loop_length = 100.0;  // 10 m per slot < d_safe + length
    CHECK_THROWS_WITH_AS(env::reset(c, 1), doctest::Contains("density"), std::runtime_error);
}

TEST_CASE("comfort branches") {
    const EnvConfig c;  // threshold 2
    CHECK(env::comfort_score(0.0, Maneuver::KL, c) == 3);
    CHECK(env::comfort_score(-1.9, Maneuver::KL, c) == 3);
    CHECK(env::comfort_score(2.0, Maneuver::KL, c) == 2);  // boundary: not strictly below
    CHECK(env::comfort_score(-3.0, Maneuver::KL, c) == 2);
    CHECK(env::comfort_score(0.0, Maneuver::CL, c) == 1);
    CHECK(env::comfort_score(3.0, Maneuver::CR, c) == 1);
    CHECK(env::comfort_score(0.0, Maneuver::ES, c) == 0);
}

TEST_CASE("individual reward") {
    const EnvConfig c;  // reward weight 0.1
    env::VehicleState v;
    v.velocity = 20.0;
    v.acceleration = 0.0;
    CHECK(env::individual_reward(v, Maneuver::KL, c) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(env::individual_reward(v, Maneuver::CL, c) == doctest::Approx(3.0).epsilon(1e-15));
    v.velocity = 0.0;
    CHECK(env::individual_reward(v, Maneuver::ES, c) == 0.0);
    v.velocity = 30.0;
    v.acceleration = 2.5;
    CHECK(env::individual_reward(v, Maneuver::KL, c) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("coalition reward") {
    const std::vector<double> r{1.0, 2.0, 3.0};
    CHECK(env::coalition_reward(r, 0b000) == 0.0);
    CHECK(env::coalition_reward(r, 0b101) == 4.0);
    CHECK(env::coalition_reward(r, 0b111) == 6.0);
    CHECK(env::coalition_reward(r, 0b011) + env::coalition_reward(r, 0b100) ==
          env::coalition_reward(r, 0b111));
    CHECK_THROWS_AS(env::coalition_reward(r, 0b1000), std::invalid_argument);
}

TEST_CASE("keep lane at desired speed cruises with top comfort") {
    const EnvConfig c;
    WorldState s = lone_vehicle(30.0, 30.0, c);
    const env::StepResult res = env::step(s, {VehicleAction::pure(Maneuver::KL)}, c);
    CHECK(res.next.vehicles[0].velocity == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(res.next.vehicles[0].position == doctest::Approx(25.0).epsilon(1e-12));  // 10 + 15
    CHECK(res.next.vehicles[0].acceleration == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(res.rewards[0] == doctest::Approx(6.0).epsilon(1e-9));  // 0.1*30 + 3
    CHECK(res.next.step_count == 1);
}

TEST_CASE("emergency stop brakes at full deceleration") {
    const EnvConfig c;  // a_max 4, dt 0.5
    WorldState s = lone_vehicle(30.0, 30.0, c);
    const env::StepResult res = env::step(s, {VehicleAction::pure(Maneuver::ES)}, c);
    CHECK(res.next.vehicles[0].velocity == doctest::Approx(28.0).epsilon(1e-12));
    CHECK(res.next.vehicles[0].acceleration == doctest::Approx(-4.0).epsilon(1e-12));
    CHECK(res.next.vehicles[0].in_emergency_stop);
    CHECK(res.rewards[0] == doctest::Approx(2.8).epsilon(1e-9));  // comfort 0

    // braking saturates at standstill
    WorldState slow = lone_vehicle(1.0, 30.0, c);
    const env::StepResult stop = env::step(slow, {VehicleAction::pure(Maneuver::ES)}, c);
    CHECK(stop.next.vehicles[0].velocity == 0.0);
}

TEST_CASE("unsafe lead gap forces braking even under keep lane") {
    const EnvConfig c;  // d_safe 20
    WorldState s;
    s.vehicles.resize(2);
    s.vehicles[0] = {.lane = 0, .position = 0.0, .velocity = 30.0};
    s.vehicles[1] = {.lane = 0, .position = 15.0, .velocity = 30.0};
    s.desired_speed = {30.0, 30.0};
    const env::StepResult res = env::step(
        s, {VehicleAction::pure(Maneuver::KL), VehicleAction::pure(Maneuver::KL)}, c);
    CHECK(res.next.vehicles[0].velocity < 30.0);      // follower forced to brake
    CHECK(res.next.vehicles[1].velocity ==
          doctest::Approx(30.0).epsilon(1e-12));      // leader unaffected
    CHECK(fwd(res.next, 0, 1, c) > 0.0);
}

TEST_CASE("lane changes: guarded, edge-clamped, lower index wins") {
    const EnvConfig c;  // d_lc 15
    WorldState s;
    s.vehicles.resize(2);
    s.vehicles[0] = {.lane = 1, .position = 0.0, .velocity = 28.0};
    s.vehicles[1] = {.lane = 0, .position = 5.0, .velocity = 28.0};  // blocks lane 0
    s.desired_speed = {28.0, 28.0};

    // blocked: target lane occupant within d_lc
    env::StepResult res = env::step(
        s, {VehicleAction::pure(Maneuver::CL), VehicleAction::pure(Maneuver::KL)}, c);
    CHECK(res.next.vehicles[0].lane == 1);
    CHECK(env::comfort_score(res.next.vehicles[0].acceleration, Maneuver::CL, c) == 1);

    // clear: same maneuver succeeds once the blocker is far away
    s.vehicles[1].position = 200.0;
    res = env::step(s, {VehicleAction::pure(Maneuver::CL), VehicleAction::pure(Maneuver::KL)},
                    c);
    CHECK(res.next.vehicles[0].lane == 0);

    // off the edge: CL from lane 0 is a no-op
    s.vehicles[0].lane = 0;
    s.vehicles[1].lane = 2;
    res = env::step(s, {VehicleAction::pure(Maneuver::CL), VehicleAction::pure(Maneuver::KL)},
                    c);
    CHECK(res.next.vehicles[0].lane == 0);

    // contested slot: both want lane 1, lower index claims it first and the
    // later change re-checks against the claimant
    s.vehicles[0] = {.lane = 0, .position = 100.0, .velocity = 28.0};
    s.vehicles[1] = {.lane = 2, .position = 105.0, .velocity = 28.0};
    res = env::step(s, {VehicleAction::pure(Maneuver::CR), VehicleAction::pure(Maneuver::CL)},
                    c);
    CHECK(res.next.vehicles[0].lane == 1);
    CHECK(res.next.vehicles[1].lane == 2);
}

TEST_CASE("step is a pure deterministic function and validates action count") {
    const EnvConfig c{.n_vehicles = 6};
    WorldState s = env::reset(c, 3);
    std::vector<VehicleAction> acts(6, VehicleAction::pure(Maneuver::KL));
    acts[2] = VehicleAction::pure(Maneuver::CL);
    const env::StepResult a = env::step(s, acts, c);
    const env::StepResult b = env::step(s, acts, c);
    CHECK(a.rewards == b.rewards);
    for (int i = 0; i < 6; ++i)
        CHECK(a.next.vehicles[i].position == b.next.vehicles[i].position);
    CHECK(s.step_count == 0);  // input untouched

    acts.pop_back();
    CHECK_THROWS_WITH_AS(env::step(s, acts, c), doctest::Contains("expected 6"),
                         std::invalid_argument);
}

TEST_CASE("observation layout") {
    const EnvConfig c;
    WorldState s = lone_vehicle(16.5, 30.0, c);  // v_max/2
    std::vector<double> obs = env::observe(s, 0, c);
    REQUIRE(obs.size() == env::kObsDim);
    CHECK(obs[0] == 1.0);
    CHECK(obs[1] == 0.0);
    CHECK(obs[2] == 0.0);
    CHECK(obs[3] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(obs[4] == 0.0);
    for (int slot = 0; slot < 6; ++slot) {  // empty roads: sentinel pairs
        CHECK(obs[5 + 2 * slot] == 1.0);
        CHECK(obs[6 + 2 * slot] == 0.0);
    }

    // one neighbor ahead in the same lane, reported only in the lead slot
    s.vehicles.push_back({.lane = 0, .position = 110.0, .velocity = 23.1});
    s.desired_speed.push_back(25.0);
    obs = env::observe(s, 0, c);
    CHECK(obs[5] == doctest::Approx(100.0 / 400.0).epsilon(1e-12));
    CHECK(obs[6] == doctest::Approx((23.1 - 16.5) / 33.0).epsilon(1e-12));
    CHECK(obs[7] == 1.0);  // lag slot stays absent
    CHECK(obs[8] == 0.0);

    CHECK_THROWS_AS(env::observe(s, 5, c), std::invalid_argument);
}

TEST_CASE("scripted driver rules") {
    const EnvConfig c;  // d_safe 20, d_lc 15
    WorldState s;
    s.vehicles.resize(2);
    s.vehicles[0] = {.lane = 1, .position = 0.0, .velocity = 25.0};
    s.vehicles[1] = {.lane = 1, .position = 10.0, .velocity = 25.0};
    s.desired_speed = {25.0, 25.0};
    CHECK(env::scripted_driver_action(s, 0, c).discrete == Maneuver::ES);

    s.vehicles[1].position = 25.0;  // between d_safe and 2*d_lc, sides clear
    CHECK(env::scripted_driver_action(s, 0, c).discrete == Maneuver::CL);

    // left lane blocked: falls back to the right
    s.vehicles.push_back({.lane = 0, .position = 5.0, .velocity = 25.0});
    s.desired_speed.push_back(25.0);
    CHECK(env::scripted_driver_action(s, 0, c).discrete == Maneuver::CR);

    s.vehicles[1].position = 100.0;  // open road
    CHECK(env::scripted_driver_action(s, 0, c).discrete == Maneuver::KL);

    s.vehicles[0].is_cav = true;
    CHECK_THROWS_AS(env::scripted_driver_action(s, 0, c), std::invalid_argument);
}

TEST_CASE("random rollouts never collide and rewards stay nonnegative") {
    EnvConfig c;
    c.n_vehicles = 12;
    Rng rng(77);
    for (int trial = 0; trial < 4; ++trial) {
        WorldState s = env::reset(c, 1000 + trial);
        for (int t = 0; t < 500; ++t) {
            std::vector<VehicleAction> acts;
            for (int i = 0; i < c.n_vehicles; ++i)
                acts.push_back(VehicleAction::pure(
                    static_cast<Maneuver>(rng.uniform_index(4))));
            env::StepResult res = env::step(s, acts, c);
            for (int i = 0; i < c.n_vehicles; ++i) {
                REQUIRE(res.rewards[i] >= 0.0);
                const double gap = env::lead_gap(res.next, i, res.next.vehicles[i].lane, c);
                REQUIRE(gap > 0.0);
                REQUIRE(res.next.vehicles[i].velocity >= 0.0);
                REQUIRE(res.next.vehicles[i].velocity <= c.v_max);
            }
            s = res.next;
        }
    }
}

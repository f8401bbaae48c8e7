#include "coopshap/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coopshap/diffnet.hpp"
#include "coopshap/game.hpp"

namespace coopshap::verify {

namespace {

using game::CharacteristicTable;
using game::Mask;
using net::Vec;

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

CharacteristicTable random_game(int n, Rng& rng, double scale = 10.0) {
    CharacteristicTable t = CharacteristicTable::zeros(n);
    for (Mask c = 1; c <= game::full_mask(n); ++c) t.values[c] = rng.uniform(0.0, scale);
    return t;
}

CharacteristicTable glove_game() {
    // agents {1,2,3}: v({1,2}) = v({1,3}) = v(N) = 1, everything else 0
    CharacteristicTable t = CharacteristicTable::zeros(3);
    t.values[0b011] = 1.0;
    t.values[0b101] = 1.0;
    t.values[0b111] = 1.0;
    return t;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// --- criteria -------------------------------------------------------------

CheckResult c1_efficiency() {
    CheckResult r{1, "shapley efficiency: sum phi = v(N) on 100 random games"};
    Rng rng(101);
    double worst = 0.0;
    for (int g = 0; g < 100; ++g) {
        const int n = 2 + static_cast<int>(rng.uniform_index(7));  // 2..8
        CharacteristicTable t = random_game(n, rng);
        const game::PayoffVector phi = game::shapley_exact(t);
        double sum = 0.0;
        for (double p : phi) sum += p;
        worst = std::max(worst, std::abs(sum - t.values.back()));
    }
    r.pass = worst <= 1e-9;
    r.detail = "max |sum phi - v(N)| = " + fmt(worst);
    return r;
}

CheckResult c2_fairness() {
    CheckResult r{2, "fairness axioms: symmetry, dummy, additivity on 100 games each"};
    Rng rng(202);
    double worst_sym = 0.0, worst_dummy = 0.0, worst_add = 0.0;
    for (int g = 0; g < 100; ++g) {
        const int n = 3 + static_cast<int>(rng.uniform_index(5));  // 3..7

        // agents 0 and 1 made interchangeable
        CharacteristicTable sym = random_game(n, rng);
        for (Mask m = 0; m <= game::full_mask(n); ++m)
            if (!game::contains(m, 0) && !game::contains(m, 1))
                sym.values[m | 0b10] = sym.values[m | 0b01];
        const game::PayoffVector phi_s = game::shapley_exact(sym);
        worst_sym = std::max(worst_sym, std::abs(phi_s[0] - phi_s[1]));

        // agent 0 made a dummy
        CharacteristicTable dummy = random_game(n, rng);
        for (Mask m = 0; m <= game::full_mask(n); ++m)
            if (!game::contains(m, 0)) dummy.values[m | 1] = dummy.values[m];
        worst_dummy = std::max(worst_dummy, std::abs(game::shapley_exact(dummy)[0]));

        // additivity of the operator on a random pair
        CharacteristicTable a = random_game(n, rng), b = random_game(n, rng);
        CharacteristicTable ab = a;
        for (std::size_t m = 0; m < ab.values.size(); ++m) ab.values[m] += b.values[m];
        const auto pa = game::shapley_exact(a), pb = game::shapley_exact(b),
                   pab = game::shapley_exact(ab);
        for (int i = 0; i < n; ++i)
            worst_add = std::max(worst_add, std::abs(pab[i] - pa[i] - pb[i]));
    }
    r.pass = worst_sym <= 1e-9 && worst_dummy <= 1e-9 && worst_add <= 1e-9;
    r.detail = "symmetry " + fmt(worst_sym) + ", dummy " + fmt(worst_dummy) + ", additivity " +
               fmt(worst_add);
    return r;
}

CheckResult c3_core_membership() {
    CheckResult r{3, "core membership on 100 supermodular games (shapley + marginal vectors)"};
    Rng rng(303);
    int bad = 0;
    for (int g = 0; g < 100; ++g) {
        const int n = 3 + static_cast<int>(rng.uniform_index(6));  // 3..8
        CharacteristicTable t = game::random_supermodular_game(n, rng.next_u64());
        if (!game::core_violations(t, game::shapley_exact(t)).in_core()) ++bad;
        for (int o = 0; o < 5; ++o) {
            std::vector<int> order(n);
            for (int i = 0; i < n; ++i) order[i] = i;
            for (int k = n - 1; k > 0; --k)
                std::swap(order[k], order[rng.uniform_index(std::uint64_t(k) + 1)]);
            if (!game::core_violations(t, game::marginal_vector(t, order)).in_core()) ++bad;
        }
    }
    r.pass = bad == 0;
    r.detail = std::to_string(bad) + " payoff vectors outside the core";
    return r;
}

CheckResult c4_additive_games() {
    CheckResult r{4, "additive games are convex with shapley = individual values"};
    Rng rng(404);
    double worst = 0.0;
    int nonconvex = 0;
    for (int g = 0; g < 100; ++g) {
        const int n = 2 + static_cast<int>(rng.uniform_index(7));
        std::vector<double> individual(n);
        for (double& v : individual) v = rng.uniform(0.0, 5.0);
        CharacteristicTable t = game::additive_game(individual);
        if (!game::is_convex(t).convex) ++nonconvex;
        const game::PayoffVector phi = game::shapley_exact(t);
        for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(phi[i] - individual[i]));
    }
    r.pass = nonconvex == 0 && worst <= 1e-12;
    r.detail = std::to_string(nonconvex) + " non-convex, max |phi - individual| = " + fmt(worst);
    return r;
}

CheckResult c5_glove_negative_control() {
    CheckResult r{5, "glove game: non-convex, shapley outside the core at {1,2}"};
    const CharacteristicTable t = glove_game();
    const game::ConvexityResult cv = game::is_convex(t);
    const game::PayoffVector phi = game::shapley_exact(t);
    const game::CoreReport core = game::core_violations(t, phi);
    const bool witness_12 =
        std::find(core.violations.begin(), core.violations.end(), Mask{0b011}) !=
        core.violations.end();
    const bool phi_ok = std::abs(phi[0] - 2.0 / 3.0) <= 1e-12 &&
                        std::abs(phi[1] - 1.0 / 6.0) <= 1e-12 &&
                        std::abs(phi[2] - 1.0 / 6.0) <= 1e-12;
    r.pass = !cv.convex && cv.witness_c == 0b011 && cv.witness_d == 0b101 && witness_12 && phi_ok;
    r.detail = "phi = (" + fmt(phi[0]) + ", " + fmt(phi[1]) + ", " + fmt(phi[2]) +
               "), convex witness (" + game::mask_to_string(cv.witness_c, 3) + ", " +
               game::mask_to_string(cv.witness_d, 3) + ")";
    return r;
}

CheckResult c6_mc_estimator() {
    CheckResult r{6, "permutation-mc estimator: exhaustive = exact; sampled error bound"};
    Rng rng(606);
    double worst_exh = 0.0;
    for (int g = 0; g < 5; ++g) {
        const int n = 2 + static_cast<int>(rng.uniform_index(5));  // 2..6
        CharacteristicTable t = random_game(n, rng);
        const auto exact = game::shapley_exact(t);
        const auto exh = game::shapley_permutation_mc(t, 0, 0, /*exhaustive=*/true);
        for (int i = 0; i < n; ++i) worst_exh = std::max(worst_exh, std::abs(exh[i] - exact[i]));
    }
    // Sampled-error bound, relative to v(N). The supermodular generator keeps
    // v(N) the dominant value so the relative tolerance is meaningful (for
    // i.i.d. uniform tables v(N) is an arbitrary draw, not the game's scale).
    double worst_rel = 0.0;
    for (int g = 0; g < 10; ++g) {
        CharacteristicTable t = game::random_supermodular_game(8, rng.next_u64());
        const auto exact = game::shapley_exact(t);
        const auto est = game::shapley_permutation_mc(t, 10000, rng.next_u64());
        const double vn = t.values.back();
        for (int i = 0; i < 8; ++i)
            worst_rel = std::max(worst_rel, std::abs(est[i] - exact[i]) / vn);
    }
    r.pass = worst_exh <= 1e-9 && worst_rel <= 0.02;
    r.detail = "exhaustive gap " + fmt(worst_exh) + ", mc error " + fmt(worst_rel) + " of v(N)";
    return r;
}

// Central finite differences of dot(upstream, forward(params, input)).
double fd_rel_err(const net::NetSpec& spec, Vec params, Vec input, const Vec& upstream) {
    const net::Grads g = net::backward(spec, params, input, upstream);
    auto objective = [&]() {
        const Vec out = net::forward(spec, params, input);
        double dot = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) dot += upstream[k] * out[k];
        return dot;
    };
    const double h = 1e-5;
    double worst = 0.0;
    auto check = [&](double& slot, double analytic) {
        const double keep = slot;
        slot = keep + h;
        const double hi = objective();
        slot = keep - h;
        const double lo = objective();
        slot = keep;
        const double fd = (hi - lo) / (2.0 * h);
        const double err = std::abs(fd - analytic);
        if (err > 1e-7)  // absolute slack near zero
            worst = std::max(worst, err / std::max(std::abs(fd), std::abs(analytic)));
    };
    for (std::size_t p = 0; p < params.size(); ++p) check(params[p], g.params[p]);
    for (std::size_t i = 0; i < input.size(); ++i) check(input[i], g.input[i]);
    return worst;
}

CheckResult c7_gradients() {
    CheckResult r{7, "diffnet gradients + end-to-end actor gradient vs finite differences"};
    Rng rng(707);
    double worst_net = 0.0;
    for (int t = 0; t < 20; ++t) {
        net::NetSpec spec;
        const int depth = 2 + static_cast<int>(rng.uniform_index(3));
        for (int l = 0; l <= depth; ++l)
            spec.layers.push_back(1 + static_cast<int>(rng.uniform_index(5)));
        Vec params = net::init_params(spec, rng);
        Vec input(spec.input_size());
        for (double& x : input) x = rng.uniform(-2.0, 2.0);
        Vec upstream(spec.output_size());
        for (double& u : upstream) u = rng.uniform(-1.0, 1.0);
        worst_net = std::max(worst_net, fd_rel_err(spec, params, input, upstream));
    }

    // Tiny n=2 shapley instance: gradient of mean phi w.r.t. actor params.
    marl::TrainerConfig cfg;
    cfg.hidden = 6;
    cfg.batch = 2;
    cfg.warmup_factor = 1;
    const int obs_dim = 3;
    marl::AgentSet agents = marl::AgentSet::make(marl::Algorithm::Shapley, 2, obs_dim, cfg, rng);
    marl::ReplayBuffer buffer(8);
    for (int k = 0; k < 4; ++k) {
        marl::Transition t;
        for (int i = 0; i < 2; ++i) {
            Vec o(obs_dim), no(obs_dim);
            for (double& x : o) x = rng.uniform(-1.0, 1.0);
            for (double& x : no) x = rng.uniform(-1.0, 1.0);
            t.obs.push_back(o);
            t.next_obs.push_back(no);
            Vec a(4, 0.25);
            t.actions.push_back(a);
            t.rewards.push_back(rng.uniform(0.0, 2.0));
        }
        t.coalition = static_cast<Mask>(1 + rng.uniform_index(3));
        buffer.push(std::move(t));
    }
    const std::vector<std::size_t> batch{0, 1, 2, 3};
    const int agent = 0;
    const marl::ActorGradient ag = marl::actor_gradient(agents, buffer, batch, agent, cfg);

    auto mean_phi = [&]() {
        double total = 0.0;
        for (std::size_t idx : batch) {
            const marl::Transition& t = buffer.at(idx);
            const Vec view = marl::masked_obs_view(t.obs, t.coalition);
            const marl::NetWithTarget& actor = agents.actors[agent];
            const auto a_i = marl::softmax4(net::forward(actor.spec, actor.params, view));
            std::vector<Vec> actions = t.actions;
            actions[agent] = Vec(a_i.begin(), a_i.end());
            total += marl::shapley_estimate(agents, t.obs, actions, agent, cfg);
        }
        return total / batch.size();
    };

    double worst_actor = 0.0;
    const double h = 1e-5;
    Vec& params = agents.actors[agent].params;
    for (int probe = 0; probe < 25; ++probe) {
        const std::size_t p = rng.uniform_index(params.size());
        const double keep = params[p];
        params[p] = keep + h;
        const double hi = mean_phi();
        params[p] = keep - h;
        const double lo = mean_phi();
        params[p] = keep;
        const double fd = (hi - lo) / (2.0 * h);
        const double err = std::abs(fd - ag.grad[p]);
        if (err > 1e-8)
            worst_actor =
                std::max(worst_actor, err / std::max(std::abs(fd), std::abs(ag.grad[p])));
    }

    r.pass = worst_net <= 1e-4 && worst_actor <= 1e-3;
    r.detail = "net rel err " + fmt(worst_net) + ", actor rel err " + fmt(worst_actor);
    return r;
}

CheckResult c8_induced_oracle() {
    CheckResult r{8, "network-induced table: shapley_estimate = game_core oracle"};
    Rng rng(808);
    double worst = 0.0, worst_eff = 0.0;
    for (int snap = 0; snap < 10; ++snap) {
        marl::TrainerConfig cfg;
        cfg.hidden = 8;
        const int n = 2 + static_cast<int>(rng.uniform_index(3));  // 2..4
        const int obs_dim = 5;
        marl::AgentSet agents =
            marl::AgentSet::make(marl::Algorithm::Shapley, n, obs_dim, cfg, rng);
        std::vector<Vec> obs(n), actions(n);
        for (int i = 0; i < n; ++i) {
            obs[i].resize(obs_dim);
            for (double& x : obs[i]) x = rng.uniform(-1.0, 1.0);
            actions[i] = Vec(4, 0.25);
        }
        const game::CharacteristicTable table = marl::induced_table(agents, obs, actions);
        const game::PayoffVector oracle = game::shapley_exact(table);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double phi = marl::shapley_estimate(agents, obs, actions, i, cfg);
            worst = std::max(worst, std::abs(phi - oracle[i]));
            sum += phi;
        }
        worst_eff = std::max(worst_eff, std::abs(sum - table.values.back()));
    }
    r.pass = worst <= 1e-9 && worst_eff <= 1e-9;
    r.detail = "max |phi - oracle| = " + fmt(worst) + ", efficiency gap " + fmt(worst_eff);
    return r;
}

CheckResult c9_env_contract() {
    CheckResult r{9, "environment: 10k random steps keep gaps positive, rewards nonnegative"};
    env::EnvConfig cfg;
    cfg.n_vehicles = 12;
    Rng rng(909);
    long steps = 0;
    bool gap_ok = true, reward_ok = true;
    for (int rollout = 0; rollout < 20 && gap_ok && reward_ok; ++rollout) {
        env::WorldState world = env::reset(cfg, rng.next_u64());
        for (int s = 0; s < 500; ++s) {
            std::vector<env::VehicleAction> actions(cfg.n_vehicles);
            for (auto& a : actions)
                a = env::VehicleAction::pure(
                    static_cast<env::Maneuver>(rng.uniform_index(4)));
            env::StepResult res = env::step(world, actions, cfg);
            for (double rew : res.rewards) reward_ok = reward_ok && rew >= 0.0;
            for (int i = 0; i < cfg.n_vehicles && gap_ok; ++i) {
                const double gap =
                    env::lead_gap(res.next, i, res.next.vehicles[i].lane, cfg);
                gap_ok = gap > 0.0;
            }
            world = res.next;
            ++steps;
            if (!gap_ok || !reward_ok) break;
        }
    }
    const bool comfort_ok = env::comfort_score(0.5, env::Maneuver::KL, cfg) == 3 &&
                            env::comfort_score(3.0, env::Maneuver::KL, cfg) == 2 &&
                            env::comfort_score(0.0, env::Maneuver::CL, cfg) == 1 &&
                            env::comfort_score(5.0, env::Maneuver::CR, cfg) == 1 &&
                            env::comfort_score(0.0, env::Maneuver::ES, cfg) == 0;
    r.pass = gap_ok && reward_ok && comfort_ok;
    r.detail = std::to_string(steps * cfg.n_vehicles) + " vehicle-steps, gaps " +
               (gap_ok ? "ok" : "VIOLATED") + ", rewards " + (reward_ok ? "ok" : "VIOLATED") +
               ", comfort branches " + (comfort_ok ? "ok" : "WRONG");
    return r;
}

double final_window_mean(const std::vector<marl::EpisodeMetrics>& episodes, int window) {
    std::vector<double> rewards;
    for (const auto& m : episodes) rewards.push_back(m.system_reward);
    const auto windows = harness::window_mean(rewards, window);
    // mean of windows covering the final 10% of episodes
    const std::size_t tail_episodes = std::max<std::size_t>(1, rewards.size() / 10);
    std::size_t covered = 0;
    double sum = 0.0;
    int count = 0;
    for (auto it = windows.rbegin(); it != windows.rend() && covered < tail_episodes; ++it) {
        sum += it->mean;
        covered += it->length;
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

CheckResult c10_training_trend() {
    CheckResult r{10, "training trend: shapley beats independent baseline in >= 3 of 5 seeds"};
    harness::RunConfig cfg = desk_training_config();
    harness::RunConfig indep = cfg;
    indep.algorithm = marl::Algorithm::Independent;

    const harness::ExperimentResult shap = harness::run_experiment(cfg);
    const harness::ExperimentResult base = harness::run_experiment(indep);

    int wins = 0;
    std::string per_seed;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        const double a = final_window_mean(shap.seeds[s].episodes, cfg.window);
        const double b = final_window_mean(base.seeds[s].episodes, cfg.window);
        if (a > b) ++wins;
        per_seed += (s ? " " : "") + fmt(a) + (a > b ? ">" : "<=") + fmt(b);
    }
    r.pass = wins >= 3;
    r.detail = std::to_string(wins) + "/5 seeds (shapley vs independent final-10% window mean: " +
               per_seed + ")";
    return r;
}

CheckResult c11_mixed_traffic_trend() {
    CheckResult r{11, "mixed traffic: velocity non-decreasing over ratios {0, 0.5, 1}"};
    const harness::RunConfig cfg = desk_mixed_config();
    const std::vector<double> ratios{0.0, 0.5, 1.0};
    const harness::MixedResult res = harness::mixed_traffic_experiment(cfg, ratios);

    int ok_seeds = 0;
    std::string detail;
    for (std::size_t s = 0; s < res.per_seed.size(); ++s) {
        const auto& rows = res.per_seed[s];
        bool monotone = true;
        for (std::size_t k = 1; k < rows.size(); ++k)
            monotone = monotone && rows[k].velocity_mph >= rows[k - 1].velocity_mph;
        if (monotone) ++ok_seeds;
        detail += (s ? " | " : "");
        for (std::size_t k = 0; k < rows.size(); ++k)
            detail += (k ? "," : "") + fmt(rows[k].velocity_mph);
    }
    r.pass = ok_seeds >= 3;
    r.detail = std::to_string(ok_seeds) + "/" + std::to_string(res.per_seed.size()) +
               " seeds monotone (mph per seed: " + detail + ")";
    return r;
}

CheckResult c12_determinism_persistence() {
    CheckResult r{12, "determinism: byte-identical reruns; checkpoint continuation equivalence"};
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "coopshap_c12";
    fs::remove_all(dir);

    harness::RunConfig cfg = desk_training_config();
    cfg.episodes = 20;
    cfg.seeds = {7};
    cfg.window = 5;

    cfg.out_dir = (dir / "a").string();
    harness::run_experiment(cfg);
    cfg.out_dir = (dir / "b").string();
    harness::run_experiment(cfg);
    const std::string csv_a = read_file((dir / "a" / "metrics_seed7.csv").string());
    const std::string csv_b = read_file((dir / "b" / "metrics_seed7.csv").string());
    const bool rerun_identical = !csv_a.empty() && csv_a == csv_b;

    // Uninterrupted 20 episodes vs 10 + checkpoint + 10.
    cfg.out_dir.clear();
    harness::TrainerState full = harness::init_trainer(cfg, 7);
    auto series_full = harness::run_training(full, cfg, 20);

    harness::TrainerState part = harness::init_trainer(cfg, 7);
    auto series_a = harness::run_training(part, cfg, 10);
    const std::string ckpt = (dir / "state.ckpt").string();
    fs::create_directories(dir);
    harness::save_checkpoint(ckpt, part, cfg);
    harness::TrainerState restored = harness::load_checkpoint(ckpt, cfg);
    auto series_b = harness::run_training(restored, cfg, 10);
    series_a.insert(series_a.end(), series_b.begin(), series_b.end());

    std::ostringstream sa, sb;
    harness::write_metrics(series_full, sa);
    harness::write_metrics(series_a, sb);
    const bool continuation_identical = sa.str() == sb.str();

    fs::remove_all(dir);
    r.pass = rerun_identical && continuation_identical;
    r.detail = std::string("rerun ") + (rerun_identical ? "identical" : "DIFFERS") +
               ", continuation " + (continuation_identical ? "identical" : "DIFFERS");
    return r;
}

}  // namespace

harness::RunConfig desk_training_config() {
    harness::RunConfig cfg;
    cfg.env.n_vehicles = 4;
    cfg.env.loop_length = 120.0;
    cfg.algorithm = marl::Algorithm::Shapley;
    cfg.cav_ratio = 1.0;
    cfg.episodes = 2000;
    cfg.steps_per_episode = 40;
    cfg.window = 100;
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.trainer.hidden = 32;
    cfg.trainer.batch = 16;
    cfg.trainer.capacity = 20000;
    cfg.trainer.sigma = 0.4;
    cfg.trainer.actor_lr = 3e-4;
    cfg.trainer.critic_lr = 1e-3;
    cfg.trainer.shapley_mode = marl::ShapleyMode::Exact;
    cfg.trainer.n_exact = 8;
    return cfg;
}

harness::RunConfig desk_mixed_config() {
    harness::RunConfig cfg = desk_training_config();
    cfg.env.n_vehicles = 6;
    cfg.env.loop_length = 150.0;
    cfg.episodes = 300;
    cfg.eval_steps = 4000;
    cfg.trainer.shapley_mode = marl::ShapleyMode::MonteCarlo;
    cfg.trainer.mc_permutations = 8;
    return cfg;
}

CheckResult run_criterion(int id) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    switch (id) {
        case 1: r = c1_efficiency(); break;
        case 2: r = c2_fairness(); break;
        case 3: r = c3_core_membership(); break;
        case 4: r = c4_additive_games(); break;
        case 5: r = c5_glove_negative_control(); break;
        case 6: r = c6_mc_estimator(); break;
        case 7: r = c7_gradients(); break;
        case 8: r = c8_induced_oracle(); break;
        case 9: r = c9_env_contract(); break;
        case 10: r = c10_training_trend(); break;
        case 11: r = c11_mixed_traffic_trend(); break;
        case 12: r = c12_determinism_persistence(); break;
        default: throw std::invalid_argument("criterion id must be in 1.." +
                                             std::to_string(kCriteria));
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::vector<CheckResult> run_property_suite() {
    std::vector<CheckResult> out;
    for (int id = 1; id <= 9; ++id) out.push_back(run_criterion(id));
    return out;
}

}  // namespace coopshap::verify

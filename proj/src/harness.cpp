#include "coopshap/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coopshap::harness {

namespace {

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string algorithm_name(marl::Algorithm a) {
    switch (a) {
        case marl::Algorithm::Shapley: return "shapley";
        case marl::Algorithm::Maddpg: return "maddpg";
        case marl::Algorithm::Independent: return "independent";
    }
    return "?";
}

marl::Algorithm parse_algorithm(const std::string& s) {
    if (s == "shapley") return marl::Algorithm::Shapley;
    if (s == "maddpg") return marl::Algorithm::Maddpg;
    if (s == "independent") return marl::Algorithm::Independent;
    throw std::runtime_error("algorithm must be shapley|maddpg|independent, got '" + s + "'");
}

}  // namespace

int RunConfig::cav_count() const {
    const double exact = cav_ratio * env.n_vehicles;
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-9)
        throw std::runtime_error("cav_ratio * n_vehicles = " + std::to_string(exact) +
                                 " is not integral");
    return static_cast<int>(rounded);
}

void RunConfig::validate() const {
    env.validate();
    trainer.validate();
    if (episodes < 0) throw std::runtime_error("run config: episodes must be >= 0");
    if (steps_per_episode < 0) throw std::runtime_error("run config: steps cap must be >= 0");
    if (seeds.empty()) throw std::runtime_error("run config: seed list must be non-empty");
    if (cav_ratio < 0.0 || cav_ratio > 1.0)
        throw std::runtime_error("run config: cav_ratio must be in [0,1]");
    (void)cav_count();
    if (window < 1) throw std::runtime_error("run config: window must be >= 1");
    if (eval_steps < 0) throw std::runtime_error("run config: eval_steps must be >= 0");
}

RunConfig parse_config(std::istream& in) {
    RunConfig c;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw std::runtime_error("config line " + std::to_string(lineno) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        std::string key, value;
        {
            std::istringstream ks(eq == std::string::npos ? line : line.substr(0, eq));
            std::string extra;
            if (!(ks >> key)) continue;  // blank line
            if (eq == std::string::npos) fail("expected 'key = value'");
            if (ks >> extra) fail("malformed key");
            std::istringstream vs(line.substr(eq + 1));
            if (!(vs >> value)) fail("missing value for key '" + key + "'");
            if (vs >> extra) fail("trailing tokens after value");
        }

        auto as_double = [&]() {
            try {
                std::size_t pos;
                double d = std::stod(value, &pos);
                if (pos != value.size()) throw std::invalid_argument("");
                return d;
            } catch (...) {
                fail("key '" + key + "': expected a number, got '" + value + "'");
                return 0.0;
            }
        };
        auto as_int = [&]() {
            try {
                std::size_t pos;
                long v = std::stol(value, &pos);
                if (pos != value.size()) throw std::invalid_argument("");
                return static_cast<int>(v);
            } catch (...) {
                fail("key '" + key + "': expected an integer, got '" + value + "'");
                return 0;
            }
        };
        auto as_bool = [&]() {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            fail("key '" + key + "': expected true|false");
            return false;
        };

        try {
            if (key == "n_vehicles") c.env.n_vehicles = as_int();
            else if (key == "loop_length") c.env.loop_length = as_double();
            else if (key == "dt") c.env.dt = as_double();
            else if (key == "v_max") c.env.v_max = as_double();
            else if (key == "a_max") c.env.a_max = as_double();
            else if (key == "comfort_threshold") c.env.comfort_threshold = as_double();
            else if (key == "reward_weight") c.env.reward_weight = as_double();
            else if (key == "d_safe") c.env.d_safe = as_double();
            else if (key == "d_lc") c.env.d_lc = as_double();
            else if (key == "k_v") c.env.k_v = as_double();
            else if (key == "v_des_min") c.env.v_des_min = as_double();
            else if (key == "v_des_max") c.env.v_des_max = as_double();
            else if (key == "vehicle_length") c.env.vehicle_length = as_double();
            else if (key == "gamma") {
                const double g = as_double();
                if (!(g > 0.0 && g < 1.0)) fail("gamma must be in the open interval (0,1)");
                c.trainer.gamma = g;
            } else if (key == "tau") c.trainer.tau = as_double();
            else if (key == "batch") c.trainer.batch = as_int();
            else if (key == "capacity") c.trainer.capacity = as_int();
            else if (key == "sigma") c.trainer.sigma = as_double();
            else if (key == "sigma_min_frac") c.trainer.sigma_min_frac = as_double();
            else if (key == "shapley_mode") {
                if (value == "exact") c.trainer.shapley_mode = marl::ShapleyMode::Exact;
                else if (value == "mc") c.trainer.shapley_mode = marl::ShapleyMode::MonteCarlo;
                else fail("shapley_mode must be exact|mc");
            } else if (key == "mc_permutations") c.trainer.mc_permutations = as_int();
            else if (key == "n_exact") c.trainer.n_exact = as_int();
            else if (key == "actor_lr") c.trainer.actor_lr = as_double();
            else if (key == "critic_lr") c.trainer.critic_lr = as_double();
            else if (key == "warmup_factor") c.trainer.warmup_factor = as_int();
            else if (key == "update_every") c.trainer.update_every = as_int();
            else if (key == "update_coalition_only") c.trainer.update_coalition_only = as_bool();
            else if (key == "hidden") c.trainer.hidden = as_int();
            else if (key == "grad_clip") c.trainer.grad_clip = as_double();
            else if (key == "episodes") c.episodes = as_int();
            else if (key == "steps_per_episode") c.steps_per_episode = as_int();
            else if (key == "seed") {
                c.seeds.clear();
                std::istringstream ss(value);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    if (tok.empty()) fail("empty entry in seed list");
                    c.seeds.push_back(std::stoull(tok));
                }
                if (c.seeds.empty()) fail("seed list must be non-empty");
            } else if (key == "algorithm") c.algorithm = parse_algorithm(value);
            else if (key == "cav_ratio") c.cav_ratio = as_double();
            else if (key == "window") c.window = as_int();
            else if (key == "eval_steps") c.eval_steps = as_int();
            else if (key == "out_dir") c.out_dir = value;
            else fail("unknown key '" + key + "'");
        } catch (const std::runtime_error& e) {
            if (std::string(e.what()).rfind("config line", 0) == 0) throw;
            fail(e.what());
        }
    }

    try {
        c.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return parse_config(in);
}

std::string config_echo(const RunConfig& c) {
    std::ostringstream out;
    out << "n_vehicles = " << c.env.n_vehicles << "\n"
        << "loop_length = " << format_double(c.env.loop_length) << "\n"
        << "dt = " << format_double(c.env.dt) << "\n"
        << "v_max = " << format_double(c.env.v_max) << "\n"
        << "a_max = " << format_double(c.env.a_max) << "\n"
        << "comfort_threshold = " << format_double(c.env.comfort_threshold) << "\n"
        << "reward_weight = " << format_double(c.env.reward_weight) << "\n"
        << "d_safe = " << format_double(c.env.d_safe) << "\n"
        << "d_lc = " << format_double(c.env.d_lc) << "\n"
        << "k_v = " << format_double(c.env.k_v) << "\n"
        << "v_des_min = " << format_double(c.env.v_des_min) << "\n"
        << "v_des_max = " << format_double(c.env.v_des_max) << "\n"
        << "vehicle_length = " << format_double(c.env.vehicle_length) << "\n"
        << "gamma = " << format_double(c.trainer.gamma) << "\n"
        << "tau = " << format_double(c.trainer.tau) << "\n"
        << "batch = " << c.trainer.batch << "\n"
        << "capacity = " << c.trainer.capacity << "\n"
        << "sigma = " << format_double(c.trainer.sigma) << "\n"
        << "sigma_min_frac = " << format_double(c.trainer.sigma_min_frac) << "\n"
        << "shapley_mode = "
        << (c.trainer.shapley_mode == marl::ShapleyMode::Exact ? "exact" : "mc") << "\n"
        << "mc_permutations = " << c.trainer.mc_permutations << "\n"
        << "n_exact = " << c.trainer.n_exact << "\n"
        << "actor_lr = " << format_double(c.trainer.actor_lr) << "\n"
        << "critic_lr = " << format_double(c.trainer.critic_lr) << "\n"
        << "warmup_factor = " << c.trainer.warmup_factor << "\n"
        << "update_every = " << c.trainer.update_every << "\n"
        << "update_coalition_only = " << (c.trainer.update_coalition_only ? "true" : "false")
        << "\n"
        << "hidden = " << c.trainer.hidden << "\n"
        << "grad_clip = " << format_double(c.trainer.grad_clip) << "\n"
        << "episodes = " << c.episodes << "\n"
        << "steps_per_episode = " << c.steps_per_episode << "\n";
    out << "seed = ";
    for (std::size_t i = 0; i < c.seeds.size(); ++i)
        out << (i ? "," : "") << c.seeds[i];
    out << "\n"
        << "algorithm = " << algorithm_name(c.algorithm) << "\n"
        << "cav_ratio = " << format_double(c.cav_ratio) << "\n"
        << "window = " << c.window << "\n"
        << "eval_steps = " << c.eval_steps << "\n";
    if (!c.out_dir.empty()) out << "out_dir = " << c.out_dir << "\n";
    return out.str();
}

std::vector<WindowPoint> window_mean(const std::vector<double>& series, int window) {
    if (window < 1) throw std::invalid_argument("window_mean: window must be >= 1");
    std::vector<WindowPoint> out;
    for (std::size_t start = 0; start < series.size(); start += window) {
        const std::size_t end = std::min(series.size(), start + window);
        double sum = 0.0;
        for (std::size_t i = start; i < end; ++i) sum += series[i];
        const int len = static_cast<int>(end - start);
        out.push_back({sum / len, len, len != window});
    }
    return out;
}

void write_metrics(const std::vector<marl::EpisodeMetrics>& series, std::ostream& out) {
    out << "episode,system_reward,mean_velocity_mps,mean_velocity_mph,mean_comfort,"
           "critic_loss,actor_objective\n";
    for (std::size_t e = 0; e < series.size(); ++e) {
        const marl::EpisodeMetrics& m = series[e];
        out << e << ',' << format_double(m.system_reward) << ','
            << format_double(m.mean_velocity) << ','
            << format_double(m.mean_velocity * kMphPerMps) << ','
            << format_double(m.mean_comfort) << ',' << format_double(m.mean_critic_loss) << ','
            << format_double(m.mean_actor_objective) << '\n';
    }
}

void write_metrics(const std::vector<marl::EpisodeMetrics>& series, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
    if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
    write_metrics(series, out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

TrainerState init_trainer(const RunConfig& config, std::uint64_t seed) {
    config.validate();
    const int cavs = config.cav_count();
    TrainerState state;
    state.rng = Rng(seed);
    state.buffer = marl::ReplayBuffer(static_cast<std::size_t>(config.trainer.capacity));
    if (cavs > 0)
        state.agents = marl::AgentSet::make(config.algorithm, cavs, env::kObsDim, config.trainer,
                                            state.rng);
    return state;
}

std::vector<marl::EpisodeMetrics> run_training(TrainerState& state, const RunConfig& config,
                                               int count) {
    std::vector<marl::EpisodeMetrics> metrics;
    metrics.reserve(count);
    for (int e = 0; e < count; ++e) {
        const double progress =
            config.episodes > 1
                ? std::min(1.0, static_cast<double>(state.episode) / (config.episodes - 1))
                : 1.0;
        metrics.push_back(marl::train_episode(state.agents, state.buffer, config.env,
                                              config.trainer, config.steps_per_episode, progress,
                                              state.rng));
        ++state.episode;
    }
    return metrics;
}

namespace {

void write_summary(const std::vector<WindowPoint>& summary, int window, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open summary file for writing: " + path);
    out << "window,first_episode,last_episode,mean_system_reward,partial\n";
    long first = 0;
    for (std::size_t w = 0; w < summary.size(); ++w) {
        out << w << ',' << first << ',' << first + summary[w].length - 1 << ','
            << format_double(summary[w].mean) << ',' << (summary[w].partial ? 1 : 0) << '\n';
        first += summary[w].length;
    }
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config) {
    config.validate();
    if (!config.out_dir.empty()) std::filesystem::create_directories(config.out_dir);

    ExperimentResult result;
    try {
        for (std::uint64_t seed : config.seeds) {
            TrainerState state = init_trainer(config, seed);
            SeedSeries series;
            series.seed = seed;
            series.episodes = run_training(state, config, config.episodes);
            if (!config.out_dir.empty())
                write_metrics(series.episodes,
                              config.out_dir + "/metrics_seed" + std::to_string(seed) + ".csv");
            result.seeds.push_back(std::move(series));
        }
    } catch (...) {
        // Flush what completed before propagating.
        if (!config.out_dir.empty() && !result.seeds.empty()) {
            for (const SeedSeries& s : result.seeds)
                write_metrics(s.episodes, config.out_dir + "/metrics_seed" +
                                              std::to_string(s.seed) + ".csv");
        }
        throw;
    }

    // Window means per seed, then averaged across seeds per window index.
    std::vector<std::vector<WindowPoint>> per_seed;
    for (const SeedSeries& s : result.seeds) {
        std::vector<double> rewards;
        for (const marl::EpisodeMetrics& m : s.episodes) rewards.push_back(m.system_reward);
        per_seed.push_back(window_mean(rewards, config.window));
    }
    if (!per_seed.empty()) {
        for (std::size_t w = 0; w < per_seed.front().size(); ++w) {
            WindowPoint p = per_seed.front()[w];
            for (std::size_t s = 1; s < per_seed.size(); ++s) p.mean += per_seed[s][w].mean;
            p.mean /= per_seed.size();
            result.summary.push_back(p);
        }
    }
    if (!config.out_dir.empty() && config.episodes > 0)
        write_summary(result.summary, config.window, config.out_dir + "/summary.csv");
    return result;
}

MixedResult mixed_traffic_experiment(const RunConfig& base, const std::vector<double>& ratios) {
    base.validate();
    MixedResult result;
    result.per_seed.resize(base.seeds.size());

    for (std::size_t si = 0; si < base.seeds.size(); ++si) {
        for (double ratio : ratios) {
            RunConfig cfg = base;
            cfg.cav_ratio = ratio;
            cfg.seeds = {base.seeds[si]};
            const int cavs = cfg.cav_count();

            TrainerState state = init_trainer(cfg, base.seeds[si]);
            if (cavs > 0) run_training(state, cfg, cfg.episodes);

            // Frozen-policy evaluation over eval_steps timesteps.
            double velocity = 0.0, comfort = 0.0;
            long steps_done = 0;
            while (steps_done < cfg.eval_steps) {
                const int chunk = std::min(cfg.steps_per_episode,
                                           static_cast<int>(cfg.eval_steps - steps_done));
                if (chunk <= 0) break;
                marl::EpisodeMetrics m = marl::eval_episode(state.agents, cfg.env, cfg.trainer,
                                                            chunk, state.rng);
                velocity += m.mean_velocity * m.steps;
                comfort += m.mean_comfort * m.steps;
                steps_done += m.steps;
            }
            MixedRow row;
            row.ratio = ratio;
            if (steps_done > 0) {
                row.velocity_mph = velocity / steps_done * kMphPerMps;
                row.comfort = comfort / steps_done;
            }
            result.per_seed[si].push_back(row);
        }
    }

    for (std::size_t r = 0; r < ratios.size(); ++r) {
        MixedRow mean;
        mean.ratio = ratios[r];
        for (const auto& rows : result.per_seed) {
            mean.velocity_mph += rows[r].velocity_mph;
            mean.comfort += rows[r].comfort;
        }
        mean.velocity_mph /= result.per_seed.size();
        mean.comfort /= result.per_seed.size();
        result.mean.push_back(mean);
    }
    return result;
}

void write_mixed_table(const MixedResult& result, const std::vector<double>& ratios,
                       std::ostream& out) {
    out << "ratio,mean_velocity_mph,mean_comfort\n";
    for (std::size_t r = 0; r < ratios.size(); ++r)
        out << format_double(result.mean[r].ratio) << ','
            << format_double(result.mean[r].velocity_mph) << ','
            << format_double(result.mean[r].comfort) << '\n';
}

}  // namespace coopshap::harness

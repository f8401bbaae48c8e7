// coopshap: cooperative-game Shapley credit assignment for lane-change MARL.
//
// Subcommands: train, mixed, eval, game (shapley|convex|core|marginal|
// efficiency), verify. Exit status 0 on success, nonzero with a diagnostic
// on every error path.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coopshap/game.hpp"
#include "coopshap/harness.hpp"
#include "coopshap/verify.hpp"

namespace {

using namespace coopshap;

std::vector<double> parse_csv_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<int> parse_csv_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

void print_payoff(const game::PayoffVector& phi) {
    for (std::size_t i = 0; i < phi.size(); ++i)
        std::printf("%sphi_%zu = %.6f", i ? "\n" : "", i + 1, phi[i]);
    std::printf("\n");
}

int cmd_game(const std::string& sub, const std::string& game_file, long mc, std::uint64_t seed,
             const std::string& payoff, const std::string& order) {
    const game::CharacteristicTable table = game::read_game_file(game_file);
    if (sub == "shapley") {
        if (mc > 0)
            print_payoff(game::shapley_permutation_mc(table, static_cast<std::uint64_t>(mc),
                                                      seed));
        else
            print_payoff(game::shapley_exact(table));
        return 0;
    }
    if (sub == "convex") {
        const game::ConvexityResult res = game::is_convex(table);
        if (res.convex) {
            std::printf("convex: true\n");
        } else {
            std::printf("convex: false\nwitness: C=%s (mask %u), D=%s (mask %u)\n",
                        game::mask_to_string(res.witness_c, table.n).c_str(), res.witness_c,
                        game::mask_to_string(res.witness_d, table.n).c_str(), res.witness_d);
        }
        return 0;
    }
    if (sub == "core") {
        if (payoff.empty()) throw std::runtime_error("core: --payoff x1,..,xn is required");
        const game::CoreReport rep = game::core_violations(table, parse_csv_doubles(payoff));
        if (rep.in_core()) {
            std::printf("in core\n");
        } else {
            std::printf("not in core, %zu violating coalitions:\n", rep.violations.size());
            for (game::Mask c : rep.violations)
                std::printf("  %s (mask %u)\n", game::mask_to_string(c, table.n).c_str(), c);
        }
        std::printf("grand coalition feasible: %s\n", rep.grand_feasible ? "yes" : "no");
        return 0;
    }
    if (sub == "marginal") {
        if (order.empty()) throw std::runtime_error("marginal: --order p1,..,pn is required");
        std::vector<int> perm = parse_csv_ints(order);
        for (int& p : perm) --p;  // 1-based on the CLI
        print_payoff(game::marginal_vector(table, perm));
        return 0;
    }
    if (sub == "efficiency") {
        game::Outcome outcome;
        outcome.structure = {game::full_mask(table.n)};
        outcome.payoff = game::shapley_exact(table);
        std::printf("shapley payoff:\n");
        print_payoff(outcome.payoff);
        std::printf("grand-coalition outcome efficient: %s\n",
                    game::efficiency_check(table, outcome) ? "true" : "false");
        return 0;
    }
    throw std::runtime_error("unknown game subcommand: " + sub);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cooperative Shapley-value reward reallocation toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, ckpt_prefix, ratios_str = "0,0.5,1";
    int eval_episodes = 10;

    CLI::App* train = app.add_subcommand("train", "run the training experiment from a config");
    train->add_option("--config", config_path, "run config file")->required();
    train->add_option("--out", out_dir, "output directory for metrics CSVs");
    train->add_option("--checkpoint", ckpt_prefix,
                      "save <prefix>_seed<k>.ckpt with the final state of each seed");

    CLI::App* mixed = app.add_subcommand("mixed", "mixed-traffic protocol over CAV ratios");
    mixed->add_option("--config", config_path, "run config file")->required();
    mixed->add_option("--ratios", ratios_str, "comma-separated CAV ratios");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint with frozen policies");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--config", config_path, "run config file")->required();
    eval->add_option("--episodes", eval_episodes, "evaluation episodes");

    CLI::App* game_cmd = app.add_subcommand("game", "TU-game solution concepts on a game file");
    std::string game_sub, game_file, payoff, order;
    long mc = 0;
    std::uint64_t seed = 0;
    game_cmd->add_option("subcommand", game_sub, "shapley|convex|core|marginal|efficiency")
        ->required();
    game_cmd->add_option("gamefile", game_file, "game file (n=<count>, mask=<m> v=<x> lines)")
        ->required();
    game_cmd->add_option("--mc", mc, "shapley: sample this many permutations instead of exact");
    game_cmd->add_option("--seed", seed, "rng seed for --mc");
    game_cmd->add_option("--payoff", payoff, "core: payoff vector x1,..,xn");
    game_cmd->add_option("--order", order, "marginal: agent order p1,..,pn (1-based)");

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the full property suite");

    try {
        app.parse(argc, argv);

        if (*train) {
            harness::RunConfig cfg = harness::parse_config_file(config_path);
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            std::cout << "# resolved config\n" << harness::config_echo(cfg);
            if (ckpt_prefix.empty()) {
                const harness::ExperimentResult res = harness::run_experiment(cfg);
                for (const auto& s : res.seeds) {
                    double final_reward =
                        s.episodes.empty() ? 0.0 : s.episodes.back().system_reward;
                    std::printf("seed %llu: %zu episodes, final system reward %.4f\n",
                                static_cast<unsigned long long>(s.seed), s.episodes.size(),
                                final_reward);
                }
                return 0;
            }
            // Checkpointing run: drive the seeds directly so the final state
            // of each one can be persisted.
            if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);
            for (std::uint64_t seed : cfg.seeds) {
                harness::TrainerState state = harness::init_trainer(cfg, seed);
                const auto episodes = harness::run_training(state, cfg, cfg.episodes);
                if (!cfg.out_dir.empty())
                    harness::write_metrics(episodes, cfg.out_dir + "/metrics_seed" +
                                                         std::to_string(seed) + ".csv");
                const std::string path = ckpt_prefix + "_seed" + std::to_string(seed) + ".ckpt";
                harness::save_checkpoint(path, state, cfg);
                double final_reward =
                    episodes.empty() ? 0.0 : episodes.back().system_reward;
                std::printf("seed %llu: %zu episodes, final system reward %.4f, saved %s\n",
                            static_cast<unsigned long long>(seed), episodes.size(),
                            final_reward, path.c_str());
            }
            return 0;
        }
        if (*mixed) {
            harness::RunConfig cfg = harness::parse_config_file(config_path);
            const std::vector<double> ratios = parse_csv_doubles(ratios_str);
            const harness::MixedResult res = harness::mixed_traffic_experiment(cfg, ratios);
            harness::write_mixed_table(res, ratios, std::cout);
            return 0;
        }
        if (*eval) {
            harness::RunConfig cfg = harness::parse_config_file(config_path);
            harness::TrainerState state = harness::load_checkpoint(checkpoint_path, cfg);
            double reward = 0.0, velocity = 0.0, comfort = 0.0;
            for (int e = 0; e < eval_episodes; ++e) {
                const marl::EpisodeMetrics m = marl::eval_episode(
                    state.agents, cfg.env, cfg.trainer, cfg.steps_per_episode, state.rng);
                reward += m.system_reward;
                velocity += m.mean_velocity;
                comfort += m.mean_comfort;
            }
            if (eval_episodes > 0)
                std::printf("episodes %d: mean system reward %.4f, velocity %.2f mph, "
                            "comfort %.3f\n",
                            eval_episodes, reward / eval_episodes,
                            velocity / eval_episodes * harness::kMphPerMps,
                            comfort / eval_episodes);
            return 0;
        }
        if (*game_cmd) return cmd_game(game_sub, game_file, mc, seed, payoff, order);
        if (*verify_cmd) {
            bool all = true;
            for (const verify::CheckResult& r : verify::run_property_suite()) {
                std::printf("[%s] criterion %d: %s (%s) [%.2fs]\n", r.pass ? "PASS" : "FAIL",
                            r.id, r.name.c_str(), r.detail.c_str(), r.seconds);
                all = all && r.pass;
            }
            return all ? 0 : 1;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

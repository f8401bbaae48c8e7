#ifndef COOPSHAP_HARNESS_HPP
#define COOPSHAP_HARNESS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coopshap/freeway.hpp"
#include "coopshap/trainer.hpp"

namespace coopshap::harness {

constexpr double kMphPerMps = 2.23694;

struct RunConfig {
    env::EnvConfig env;
    marl::TrainerConfig trainer;
    int episodes = 2000;
    int steps_per_episode = 40;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    marl::Algorithm algorithm = marl::Algorithm::Shapley;
    double cav_ratio = 1.0;
    int window = 100;
    int eval_steps = 4000;
    std::string out_dir;

    int cav_count() const;  // throws when n * ratio is not integral
    void validate() const;
};

// Line-oriented `key = value` text, `#` comments, unknown keys rejected.
// Parse errors cite the line number.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);

// Canonical text echo of a fully-resolved config; parse(echo(c)) == c.
std::string config_echo(const RunConfig& config);

struct WindowPoint {
    double mean = 0.0;
    int length = 0;
    bool partial = false;  // trailing window shorter than requested
};

// Non-overlapping consecutive window averages.
std::vector<WindowPoint> window_mean(const std::vector<double>& series, int window);

// CSV schema: episode,system_reward,mean_velocity_mps,mean_velocity_mph,
// mean_comfort,critic_loss,actor_objective. 6 significant digits, LF endings.
void write_metrics(const std::vector<marl::EpisodeMetrics>& series, const std::string& path);
void write_metrics(const std::vector<marl::EpisodeMetrics>& series, std::ostream& out);

// Everything a run owns: networks, replay, the run rng, episode counter.
struct TrainerState {
    marl::AgentSet agents;
    marl::ReplayBuffer buffer{0};
    Rng rng;
    long episode = 0;
};

TrainerState init_trainer(const RunConfig& config, std::uint64_t seed);

// Advances `count` episodes, appending per-episode metrics.
std::vector<marl::EpisodeMetrics> run_training(TrainerState& state, const RunConfig& config,
                                               int count);

struct SeedSeries {
    std::uint64_t seed = 0;
    std::vector<marl::EpisodeMetrics> episodes;
};

struct ExperimentResult {
    std::vector<SeedSeries> seeds;
    std::vector<WindowPoint> summary;  // window means of system reward, averaged across seeds
};

// Full protocol: per seed, fresh trainer, `episodes` training episodes.
// When config.out_dir is set, writes metrics_seed<k>.csv per seed plus
// summary.csv; partial results are flushed before propagating an error.
ExperimentResult run_experiment(const RunConfig& config);

struct MixedRow {
    double ratio = 0.0;
    double velocity_mph = 0.0;
    double comfort = 0.0;
};

struct MixedResult {
    std::vector<std::vector<MixedRow>> per_seed;  // [seed][ratio]
    std::vector<MixedRow> mean;                   // across seeds
};

// Table-style protocol: per ratio, train the CAV fraction (ratio 0 skips
// training), then evaluate frozen policies for config.eval_steps timesteps.
MixedResult mixed_traffic_experiment(const RunConfig& base, const std::vector<double>& ratios);
void write_mixed_table(const MixedResult& result, const std::vector<double>& ratios,
                       std::ostream& out);

// Versioned checkpoint: UTF-8 manifest (segment lengths + checksums) followed
// by little-endian binary segments. Loading is fail-closed: any mismatch
// throws naming the segment and leaves no partial state.
void save_checkpoint(const std::string& path, const TrainerState& state,
                     const RunConfig& config);
TrainerState load_checkpoint(const std::string& path, const RunConfig& config);

}  // namespace coopshap::harness

#endif

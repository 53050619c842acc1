#pragma once

#include "oam/policies.hpp"

#include <map>
#include <string>
#include <vector>

namespace oam {

// Built-in environment catalogue. `u` shapes the near-optimal arm of
// fixed-u; `k` and `instance_seed` drive the seeded sphere arms; random-theta
// additionally redraws theta per replication from instance_seed + rep.
struct ScenarioSpec {
    std::string name;              // builtin name or path to an instance JSON
    double u = 0.1;
    int k = 100;
    std::uint64_t instance_seed = 424242;
};

// Names: fixed-u, changing-one, changing-two, span-bounded, sphere,
// random-theta. Throws std::invalid_argument for anything else.
BanditInstance builtin_scenario(const std::string& name,
                                const ScenarioSpec& spec);
bool is_builtin_scenario(const std::string& name);

// Instance for one replication: builtins via builtin_scenario (random-theta
// reseeded per rep), otherwise the JSON file at spec.name.
BanditInstance materialize_scenario(const ScenarioSpec& spec, int rep);

struct EpisodeResult {
    RegretTrace trace;
    std::vector<long> pull_counts;
    std::map<Phase, long> phase_counts;
    std::vector<std::string> audit_violations;
    double seconds = 0.0;
};

// Runs one select/observe loop for `horizon` rounds. The episode owns its
// generator (contexts, rewards, and any policy randomness all draw from it),
// its registry, and its policy instance.
EpisodeResult run_episode(const BanditInstance& inst,
                          const std::string& policy_name, long horizon,
                          std::uint64_t seed, const PolicyParams& params);

struct ExperimentConfig {
    ScenarioSpec scenario;
    long horizon = 10000;
    int reps = 20;
    std::uint64_t base_seed = 0;
    std::vector<std::string> policies;
    PolicyParams params;
    long stride = 1;               // trace thinning for CSV emission
    bool parallel = true;          // OpenMP over (policy, replication) jobs
    std::string out_dir;           // empty: skip file output
};

struct SummaryRow {
    long round = 0;
    std::string policy;
    double mean_cum_regret = 0.0;
    double stderr_cum_regret = 0.0;
    int reps = 0;
};

struct ExperimentResult {
    // episodes[policy_index][rep]
    std::vector<std::vector<EpisodeResult>> episodes;
    std::vector<SummaryRow> summary;
    std::vector<std::string> policies;
    // Realised regret (optimal mean reward minus observed reward, summed)
    // alongside the pseudo-regret mean, per policy at the horizon.
    std::vector<double> final_pseudo_regret;
    std::vector<double> final_realized_regret;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Rounds recorded by the thinning rule: multiples of the stride plus the
// horizon itself.
std::vector<long> recorded_rounds(long horizon, long stride);

// One row per recorded round per episode:
// round,context,arm,phase,inst_regret,cum_regret,replication,policy,seed
// Floats carry 17 significant digits; lines end with LF.
std::string trace_csv(const ExperimentResult& result,
                      const ExperimentConfig& config);
std::string summary_csv(const std::vector<SummaryRow>& rows);

void write_file(const std::string& path, const std::string& content);

// Mean/stderr series recomputed from an external trace CSV (same schema),
// step-resampled onto this configuration's recorded rounds. Policy names
// come from the file's policy column.
std::vector<SummaryRow> import_external_trace(const std::string& path,
                                              long horizon, long stride);

}  // namespace oam

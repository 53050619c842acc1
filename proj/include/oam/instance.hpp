#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oam {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One context's action set. Arm order is load order and is part of the
// contract: ties are always broken toward the lowest index.
struct ActionSet {
    int context_id = 0;
    std::vector<VectorXd> arms;
};

// A linear bandit environment: rewards are <arm, theta> plus unit Gaussian
// noise, contexts are drawn i.i.d. from context_probs.
struct BanditInstance {
    int d = 0;
    VectorXd theta;
    std::vector<ActionSet> contexts;
    VectorXd context_probs;   // empty => uniform (normalised on load)

    int num_contexts() const { return static_cast<int>(contexts.size()); }
};

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> errors;

    void fail(std::string msg) {
        ok = false;
        errors.push_back(std::move(msg));
    }
};

// Arms are nominally unit-ball vectors, but the canonical experiment
// families include arms with norm up to about 1.29, so the validator only
// rejects vectors outside this inflated ball.
inline constexpr double kArmNormBound = 1.5;

// Structural checks: dimensions agree, probabilities are positive and sum to
// one within 1e-12, arm norms stay inside the inflated unit ball, and the
// union of all arms spans R^d.
ValidationReport validate_instance(const BanditInstance& inst);

// Draws a context id by CDF inversion; always consumes exactly one uniform.
int sample_context(const BanditInstance& inst, std::mt19937_64& rng);

// <arm, theta> + standard normal noise.
double sample_reward(const BanditInstance& inst, const VectorXd& arm,
                     std::mt19937_64& rng);

// Lowest-index maximiser of <x, theta> within the context.
int optimal_arm(const BanditInstance& inst, int context_id);

// Per-round pseudo-regret <x*_m - x, theta>; zero for the optimal arm.
double instantaneous_regret(const BanditInstance& inst, int context_id,
                            const VectorXd& arm);
double instantaneous_regret(const BanditInstance& inst, int context_id,
                            int local_arm);

// Deduplicated union of all context arms. Identity is bitwise equality of
// the coefficient bytes; the registry index of an arm is stable across the
// episode and is what pull counts and allocation weights are keyed by.
struct ArmRegistry {
    std::vector<VectorXd> unique_arms;
    // index_of[context][local] -> registry index
    std::vector<std::vector<int>> index_of;
    std::vector<long> pull_counts;

    int size() const { return static_cast<int>(unique_arms.size()); }
    long total_pulls() const;
    // Registry index of a vector (bitwise match), -1 if absent.
    int find(const VectorXd& arm) const;
};

ArmRegistry build_registry(const BanditInstance& inst);

bool bitwise_equal(const VectorXd& a, const VectorXd& b);

// Which branch of the decision rule produced a pull. Policies without an
// explicit phase machine report Phase::None.
enum class Phase : std::uint8_t {
    None,
    Init,
    Exploit,
    ExploreForced,
    ExploreTracked,
    ExploreWasted,
};

const char* phase_name(Phase p);
Phase phase_from_name(const std::string& name);

struct TraceRecord {
    long round = 0;       // 1-based
    int context_id = 0;
    int registry_arm = 0;
    Phase phase = Phase::None;
    double inst_regret = 0.0;
    double cum_regret = 0.0;
};

// Full per-round history of one episode. Thinning happens only at CSV
// emission time; the in-memory trace always has one record per round.
struct RegretTrace {
    std::vector<TraceRecord> records;
    double realized_reward = 0.0;   // sum of observed rewards
    double optimal_reward = 0.0;    // sum of <x*_m, theta> over visited contexts

    void record(long round, int context_id, int registry_arm, Phase phase,
                double inst_regret);
    double final_regret() const {
        return records.empty() ? 0.0 : records.back().cum_regret;
    }
};

// JSON instance files: {"d": int, "theta": [...], "contexts": [[[...]]],
// "probs": [...]} with probs optional (uniform when absent).
BanditInstance load_instance_json(const std::string& path);
BanditInstance parse_instance_json(const std::string& text);
std::string instance_to_json(const BanditInstance& inst);

}  // namespace oam

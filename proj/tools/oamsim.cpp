// Command-line front end: run experiments, evaluate the instance-dependent
// lower-bound constant, or solve one allocation program directly.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include "oam/allocation.hpp"
#include "oam/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

using oam::BanditInstance;

struct ScenarioFlags {
    std::string scenario;
    double u = 0.1;
    int k = 100;
    std::uint64_t instance_seed = 424242;
};

void add_scenario_flags(CLI::App* cmd, ScenarioFlags& f, bool required) {
    auto* opt = cmd->add_option("--scenario", f.scenario,
                                "builtin scenario name or instance JSON path");
    if (required) opt->required();
    cmd->add_option("--u", f.u, "near-optimal arm parameter for fixed-u");
    cmd->add_option("--k", f.k, "arm count for sphere / random-theta");
    cmd->add_option("--instance-seed", f.instance_seed,
                    "seed for generated scenario arms");
}

oam::ScenarioSpec to_spec(const ScenarioFlags& f) {
    oam::ScenarioSpec spec;
    spec.name = f.scenario;
    spec.u = f.u;
    spec.k = f.k;
    spec.instance_seed = f.instance_seed;
    return spec;
}

void run_command(const ScenarioFlags& sf, long horizon, int reps,
                 std::uint64_t seed, const std::vector<std::string>& algos,
                 const oam::PolicyParams& params, long stride, bool serial,
                 const std::string& out_dir, const std::string& import_path) {
    oam::ExperimentConfig cfg;
    cfg.scenario = to_spec(sf);
    cfg.horizon = horizon;
    cfg.reps = reps;
    cfg.base_seed = seed;
    cfg.policies = algos;
    cfg.params = params;
    cfg.stride = stride;
    cfg.parallel = !serial;
    cfg.out_dir = out_dir;

    const oam::ExperimentResult result = oam::run_experiment(cfg);

    std::printf("scenario %s  horizon %ld  reps %d  base seed %llu\n",
                sf.scenario.c_str(), horizon, reps,
                static_cast<unsigned long long>(seed));
    std::printf("%-16s %16s %12s %18s\n", "policy", "pseudo-regret", "stderr",
                "realized-regret");
    for (size_t p = 0; p < result.policies.size(); ++p) {
        double se = 0.0;
        for (const auto& row : result.summary)
            if (row.policy == result.policies[p] && row.round == horizon)
                se = row.stderr_cum_regret;
        std::printf("%-16s %16.4f %12.4f %18.4f\n", result.policies[p].c_str(),
                    result.final_pseudo_regret[p], se,
                    result.final_realized_regret[p]);
    }

    if (params.audit) {
        for (size_t p = 0; p < result.policies.size(); ++p) {
            long total = 0;
            std::string first;
            for (const auto& ep : result.episodes[p]) {
                total += static_cast<long>(ep.audit_violations.size());
                if (first.empty() && !ep.audit_violations.empty())
                    first = ep.audit_violations.front();
            }
            if (total > 0)
                std::printf("audit %s: %ld violation(s), first: %s\n",
                            result.policies[p].c_str(), total, first.c_str());
            else
                std::printf("audit %s: clean\n", result.policies[p].c_str());
        }
    }

    if (!import_path.empty()) {
        std::vector<oam::SummaryRow> merged = result.summary;
        const std::vector<oam::SummaryRow> imported =
            oam::import_external_trace(import_path, horizon, stride);
        for (const auto& row : imported) {
            if (row.round == horizon)
                std::printf("%-16s %16.4f %12.4f %18s\n", row.policy.c_str(),
                            row.mean_cum_regret, row.stderr_cum_regret,
                            "(imported)");
            merged.push_back(row);
        }
        if (!out_dir.empty()) {
            const auto path =
                std::filesystem::path(out_dir) / "summary.csv";
            oam::write_file(path.string(), oam::summary_csv(merged));
        }
    }

    if (!out_dir.empty())
        std::printf("wrote %s/trace.csv and %s/summary.csv\n", out_dir.c_str(),
                    out_dir.c_str());
}

BanditInstance instance_from(const std::string& instance_path,
                             const ScenarioFlags& sf) {
    if (!instance_path.empty()) return oam::load_instance_json(instance_path);
    if (sf.scenario.empty())
        throw std::invalid_argument("need --instance or --scenario");
    return oam::materialize_scenario(to_spec(sf), 0);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"linear contextual bandit simulation toolkit"};
    app.require_subcommand(1);

    // --- run ---
    auto* run = app.add_subcommand("run", "run a regret experiment");
    ScenarioFlags run_sf;
    add_scenario_flags(run, run_sf, true);
    long horizon = 10000;
    int reps = 20;
    std::uint64_t seed = 0;
    std::vector<std::string> algos;
    oam::PolicyParams params;
    long stride = 1;
    bool serial = false;
    std::string out_dir, import_path;
    run->add_option("--horizon", horizon, "rounds per episode")->required();
    run->add_option("--reps", reps, "independent replications")->required();
    run->add_option("--seed", seed, "base seed; episode r uses seed + r")
        ->required();
    run->add_option("--algos", algos,
                    "comma-separated policies: oam,linucb,greedy,"
                    "lints-theory,lints-heuristic")
        ->required()
        ->delimiter(',');
    run->add_option("--c", params.c, "exploration threshold constant");
    run->add_option("--zeta", params.zeta, "allocation re-solve trigger");
    run->add_option("--lambda", params.ridge, "ridge for baseline policies");
    run->add_option("--ts-scale", params.ts_scale,
                    "posterior width multiplier for the sampling policies");
    run->add_option("--stride", stride, "trace thinning stride for CSV");
    run->add_flag("--serial", serial, "disable the parallel episode loop");
    run->add_flag("--audit", params.audit,
                  "record per-round invariant violations");
    run->add_option("--out", out_dir, "output directory for CSV files")
        ->required();
    run->add_option("--import", import_path,
                    "external trace CSV merged into the summary");

    // --- bound ---
    auto* bound = app.add_subcommand(
        "bound", "print the instance-dependent lower-bound constant");
    ScenarioFlags bound_sf;
    std::string bound_instance;
    bound->add_option("--instance", bound_instance, "instance JSON path");
    add_scenario_flags(bound, bound_sf, false);

    // --- solve-allocation ---
    auto* solve = app.add_subcommand(
        "solve-allocation", "solve one allocation program, print JSON");
    std::string solve_instance, gaps_path;
    double solve_n = 0.0, solve_delta = 0.0, solve_c = 2.0;
    solve->add_option("--instance", solve_instance, "instance JSON path")
        ->required();
    solve->add_option("--gaps", gaps_path,
                      "JSON array-of-arrays of per-context arm gaps")
        ->required();
    solve->add_option("--n", solve_n, "round count for the threshold")
        ->required();
    solve->add_option("--delta", solve_delta, "confidence level")->required();
    solve->add_option("--c", solve_c, "threshold constant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            run_command(run_sf, horizon, reps, seed, algos, params, stride,
                        serial, out_dir, import_path);
        } else if (bound->parsed()) {
            const BanditInstance inst = instance_from(bound_instance, bound_sf);
            std::printf("%.12g\n", oam::lower_bound_constant(inst));
        } else if (solve->parsed()) {
            const BanditInstance inst = oam::load_instance_json(solve_instance);
            std::ifstream gf(gaps_path);
            if (!gf)
                throw std::invalid_argument("cannot open gaps file: " +
                                            gaps_path);
            nlohmann::json gj = nlohmann::json::parse(gf);
            std::vector<std::vector<double>> gaps;
            for (const auto& row : gj)
                gaps.push_back(row.get<std::vector<double>>());

            const oam::ArmRegistry registry = oam::build_registry(inst);
            oam::AllocationProblem prob;
            prob.arms = registry.unique_arms;
            prob.gaps = oam::flatten_gaps(registry, gaps);
            prob.threshold = oam::exploration_threshold(solve_n, solve_delta,
                                                        inst.d, solve_c);
            const oam::AllocationSolution sol = oam::solve_allocation(prob);

            nlohmann::json out;
            out["weights"] = std::vector<double>(
                sol.weights.data(), sol.weights.data() + sol.weights.size());
            out["objective"] = sol.objective;
            out["converged"] = sol.converged;
            out["max_constraint_violation"] = sol.max_constraint_violation;
            out["iterations"] = sol.iterations;
            out["threshold"] = prob.threshold;
            nlohmann::json arms = nlohmann::json::array();
            for (const auto& a : registry.unique_arms)
                arms.push_back(std::vector<double>(a.data(),
                                                   a.data() + a.size()));
            out["arms"] = arms;
            std::printf("%s\n", out.dump(2).c_str());
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}

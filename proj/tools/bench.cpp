// Times the replication loop with the parallel schedule against the serial
// path and checks that both produce identical traces.

#include "oam/harness.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

double time_run(oam::ExperimentConfig cfg, bool parallel,
                oam::ExperimentResult& out) {
    cfg.parallel = parallel;
    const auto t0 = std::chrono::steady_clock::now();
    out = oam::run_experiment(cfg);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"replication loop benchmark: serial vs parallel"};
    std::string scenario = "fixed-u";
    long horizon = 4000;
    int reps = 16;
    std::vector<std::string> algos = {"linucb", "greedy"};
    app.add_option("--scenario", scenario, "builtin scenario name");
    app.add_option("--horizon", horizon, "rounds per episode");
    app.add_option("--reps", reps, "replications per policy");
    app.add_option("--algos", algos, "policies to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    oam::ExperimentConfig cfg;
    cfg.scenario.name = scenario;
    cfg.horizon = horizon;
    cfg.reps = reps;
    cfg.policies = algos;
    cfg.stride = horizon;

#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not available; both passes run serially\n");
#endif

    try {
        oam::ExperimentResult serial, parallel;
        const double ts = time_run(cfg, false, serial);
        const double tp = time_run(cfg, true, parallel);

        double max_diff = 0.0;
        for (size_t p = 0; p < serial.episodes.size(); ++p)
            for (size_t r = 0; r < serial.episodes[p].size(); ++r)
                max_diff = std::max(
                    max_diff,
                    std::abs(serial.episodes[p][r].trace.final_regret() -
                             parallel.episodes[p][r].trace.final_regret()));

        std::printf("episodes %zu  horizon %ld\n",
                    algos.size() * static_cast<size_t>(reps), horizon);
        std::printf("serial   %8.3f s\n", ts);
        std::printf("parallel %8.3f s  (speedup %.2fx)\n", tp,
                    tp > 0.0 ? ts / tp : 0.0);
        std::printf("max |serial - parallel| final regret: %.17g\n", max_diff);
        return max_diff == 0.0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

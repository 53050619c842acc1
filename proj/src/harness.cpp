#include "oam/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace oam {

namespace {

VectorXd vec2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

VectorXd vec3(double a, double b, double c) {
    VectorXd v(3);
    v << a, b, c;
    return v;
}

VectorXd probs2(double p0) {
    VectorXd p(2);
    p << p0, 1.0 - p0;
    return p;
}

// Shared by changing-two and span-bounded: two planar action sets whose
// optimal arms (1,0) and (0,1) together span R^2. The duplicated (-1,0) in
// the second set is deliberate.
std::vector<ActionSet> planar_two_sets() {
    ActionSet a0, a1;
    a0.context_id = 0;
    a0.arms = {vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(0.9, 0.5)};
    a1.context_id = 1;
    a1.arms = {vec2(0.0, 1.0), vec2(-1.0, 0.0), vec2(-1.0, 0.0)};
    return {a0, a1};
}

std::vector<ActionSet> circle_arms(int k, std::mt19937_64& rng) {
    if (k < 2) throw std::invalid_argument("sphere scenario needs k >= 2");
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    ActionSet a0;
    a0.context_id = 0;
    a0.arms.reserve(k);
    for (int i = 0; i < k; ++i) {
        const double phi = angle(rng);
        a0.arms.push_back(vec2(std::cos(phi), std::sin(phi)));
    }
    return {a0};
}

const char* kTraceHeader =
    "round,context,arm,phase,inst_regret,cum_regret,replication,policy,seed";
const char* kSummaryHeader = "round,policy,mean_cum_regret,stderr,reps";

// Shortest float text that round-trips the double exactly.
std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Standard error of the mean; zero for a single observation.
double stderr_of(const std::vector<double>& xs, double mean) {
    const size_t n = xs.size();
    if (n < 2) return 0.0;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(n - 1)) /
           std::sqrt(static_cast<double>(n));
}

}  // namespace

bool is_builtin_scenario(const std::string& name) {
    static const std::array<const char*, 6> names = {
        "fixed-u",      "changing-one", "changing-two",
        "span-bounded", "sphere",       "random-theta"};
    return std::find_if(names.begin(), names.end(), [&](const char* n) {
               return name == n;
           }) != names.end();
}

BanditInstance builtin_scenario(const std::string& name,
                                const ScenarioSpec& spec) {
    BanditInstance inst;
    inst.d = 2;
    if (name == "fixed-u") {
        if (!(spec.u > 0.0) || spec.u >= 1.0)
            throw std::invalid_argument("fixed-u needs u in (0, 1)");
        inst.theta = vec2(1.0, 0.0);
        ActionSet a0;
        a0.context_id = 0;
        a0.arms = {vec2(1.0, 0.0), vec2(0.0, 1.0),
                   vec2(1.0 - spec.u, 5.0 * spec.u)};
        inst.contexts = {a0};
        inst.context_probs = VectorXd::Ones(1);
    } else if (name == "changing-one") {
        inst.d = 3;
        inst.theta = vec3(1.0, 0.0, 1.0);
        ActionSet a0, a1;
        a0.context_id = 0;
        a0.arms = {vec3(1.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0),
                   vec3(0.9, 0.5, 0.0)};
        a1.context_id = 1;
        a1.arms = {vec3(0.0, 1.0, 0.0), vec3(0.0, 0.0, 1.0),
                   vec3(0.0, 0.5, 0.9)};
        inst.contexts = {a0, a1};
        inst.context_probs = probs2(0.3);
    } else if (name == "changing-two") {
        inst.theta = vec2(1.0, 0.0);
        inst.contexts = planar_two_sets();
        inst.context_probs = probs2(0.99);
    } else if (name == "span-bounded") {
        inst.theta = vec2(1.0, 0.0);
        inst.contexts = planar_two_sets();
        inst.context_probs = probs2(0.8);
    } else if (name == "sphere") {
        std::mt19937_64 rng(spec.instance_seed);
        inst.theta = vec2(1.0, 0.0);
        inst.contexts = circle_arms(spec.k, rng);
        inst.context_probs = VectorXd::Ones(1);
    } else if (name == "random-theta") {
        // One stream drives both theta and the arms, so instance_seed alone
        // pins the whole instance.
        std::mt19937_64 rng(spec.instance_seed);
        std::normal_distribution<double> normal(0.0, std::sqrt(10.0));
        VectorXd theta(2);
        do {
            for (int i = 0; i < 2; ++i) theta[i] = normal(rng);
        } while (theta.norm() == 0.0);
        inst.theta = theta / theta.norm();
        inst.contexts = circle_arms(spec.k, rng);
        inst.context_probs = VectorXd::Ones(1);
    } else {
        throw std::invalid_argument("unknown scenario name: " + name);
    }
    return inst;
}

BanditInstance materialize_scenario(const ScenarioSpec& spec, int rep) {
    if (rep < 0) throw std::invalid_argument("replication index must be >= 0");
    if (!is_builtin_scenario(spec.name)) return load_instance_json(spec.name);
    ScenarioSpec local = spec;
    if (spec.name == "random-theta")
        local.instance_seed = spec.instance_seed + static_cast<std::uint64_t>(rep);
    return builtin_scenario(spec.name, local);
}

EpisodeResult run_episode(const BanditInstance& inst,
                          const std::string& policy_name, long horizon,
                          std::uint64_t seed, const PolicyParams& params) {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    const auto start = std::chrono::steady_clock::now();

    std::mt19937_64 rng(seed);
    ArmRegistry registry = build_registry(inst);
    auto policy = make_policy(policy_name, inst, registry, rng, horizon, params);

    // Best mean reward per context, for regret accounting.
    const int M = inst.num_contexts();
    std::vector<double> best_mean(M);
    for (int m = 0; m < M; ++m) {
        const int star = optimal_arm(inst, m);
        best_mean[m] = inst.contexts[m].arms[star].dot(inst.theta);
    }

    EpisodeResult out;
    out.trace.records.reserve(static_cast<size_t>(horizon));
    for (long t = 1; t <= horizon; ++t) {
        const int m = sample_context(inst, rng);
        try {
            const Decision dec = policy->select(m, t);
            const VectorXd& x = inst.contexts[m].arms[dec.local_arm];
            const double y = sample_reward(inst, x, rng);
            policy->observe(x, y);

            out.trace.record(t, m, registry.index_of[m][dec.local_arm],
                             dec.phase, instantaneous_regret(inst, m, x));
            out.trace.realized_reward += y;
            out.trace.optimal_reward += best_mean[m];
            ++out.phase_counts[dec.phase];
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(t) +
                                     ", context " + std::to_string(m) + ": " +
                                     e.what());
        }
    }

    out.pull_counts = registry.pull_counts;
    if (params.audit) {
        if (auto* oam = dynamic_cast<OamPolicy*>(policy.get()))
            out.audit_violations = oam->audit_violations();
    }
    out.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return out;
}

std::vector<long> recorded_rounds(long horizon, long stride) {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    std::vector<long> rounds;
    for (long t = stride; t <= horizon; t += stride) rounds.push_back(t);
    if (rounds.empty() || rounds.back() != horizon) rounds.push_back(horizon);
    return rounds;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    if (config.horizon < 1)
        throw std::invalid_argument("horizon must be >= 1");
    if (config.reps < 1)
        throw std::invalid_argument("replication count must be >= 1");
    if (config.stride < 1)
        throw std::invalid_argument("stride must be >= 1");
    if (config.policies.empty())
        throw std::invalid_argument("at least one policy required");

    // Fail fast on a bad scenario or policy name before spawning episodes.
    {
        const BanditInstance probe = materialize_scenario(config.scenario, 0);
        const ValidationReport rep = validate_instance(probe);
        if (!rep.ok) {
            std::string msg = "invalid instance";
            for (const auto& e : rep.errors) msg += "; " + e;
            throw std::invalid_argument(msg);
        }
        std::mt19937_64 scratch_rng(0);
        ArmRegistry scratch = build_registry(probe);
        for (const auto& name : config.policies)
            make_policy(name, probe, scratch, scratch_rng,
                        std::max<long>(config.horizon, 3), config.params);
    }

    const int P = static_cast<int>(config.policies.size());
    const int R = config.reps;

    ExperimentResult result;
    result.policies = config.policies;
    result.episodes.assign(P, std::vector<EpisodeResult>(R));

    // Episodes are independent jobs; the first failure (in job order) wins.
    std::vector<std::string> errors(static_cast<size_t>(P) * R);
    const long jobs = static_cast<long>(P) * R;

#pragma omp parallel for schedule(dynamic) if (config.parallel)
    for (long j = 0; j < jobs; ++j) {
        const int p = static_cast<int>(j / R);
        const int r = static_cast<int>(j % R);
        const std::uint64_t seed =
            config.base_seed + static_cast<std::uint64_t>(r);
        try {
            const BanditInstance inst =
                materialize_scenario(config.scenario, r);
            result.episodes[p][r] = run_episode(inst, config.policies[p],
                                                config.horizon, seed,
                                                config.params);
        } catch (const std::exception& e) {
            errors[static_cast<size_t>(j)] =
                "policy " + config.policies[p] + ", replication " +
                std::to_string(r) + ", seed " + std::to_string(seed) + ": " +
                e.what();
        }
    }
    for (const auto& err : errors)
        if (!err.empty()) throw std::runtime_error(err);

    const std::vector<long> rounds =
        recorded_rounds(config.horizon, config.stride);
    result.summary.reserve(rounds.size() * static_cast<size_t>(P));
    for (int p = 0; p < P; ++p) {
        std::vector<double> finals(R), realized(R);
        for (int r = 0; r < R; ++r) {
            const RegretTrace& tr = result.episodes[p][r].trace;
            finals[r] = tr.final_regret();
            realized[r] = tr.optimal_reward - tr.realized_reward;
        }
        result.final_pseudo_regret.push_back(mean_of(finals));
        result.final_realized_regret.push_back(mean_of(realized));

        std::vector<double> cums(R);
        for (long t : rounds) {
            for (int r = 0; r < R; ++r)
                cums[r] = result.episodes[p][r]
                              .trace.records[static_cast<size_t>(t - 1)]
                              .cum_regret;
            SummaryRow row;
            row.round = t;
            row.policy = config.policies[p];
            row.mean_cum_regret = mean_of(cums);
            row.stderr_cum_regret = stderr_of(cums, row.mean_cum_regret);
            row.reps = R;
            result.summary.push_back(std::move(row));
        }
    }

    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        const auto dir = std::filesystem::path(config.out_dir);
        write_file((dir / "trace.csv").string(), trace_csv(result, config));
        write_file((dir / "summary.csv").string(),
                   summary_csv(result.summary));
    }
    return result;
}

std::string trace_csv(const ExperimentResult& result,
                      const ExperimentConfig& config) {
    const std::vector<long> rounds =
        recorded_rounds(config.horizon, config.stride);
    std::string out = kTraceHeader;
    out += '\n';
    for (size_t p = 0; p < result.episodes.size(); ++p) {
        for (size_t r = 0; r < result.episodes[p].size(); ++r) {
            const RegretTrace& tr = result.episodes[p][r].trace;
            const std::uint64_t seed = config.base_seed + r;
            for (long t : rounds) {
                const TraceRecord& rec = tr.records[static_cast<size_t>(t - 1)];
                out += std::to_string(rec.round);
                out += ',';
                out += std::to_string(rec.context_id);
                out += ',';
                out += std::to_string(rec.registry_arm);
                out += ',';
                out += phase_name(rec.phase);
                out += ',';
                out += fmt17(rec.inst_regret);
                out += ',';
                out += fmt17(rec.cum_regret);
                out += ',';
                out += std::to_string(r);
                out += ',';
                out += result.policies[p];
                out += ',';
                out += std::to_string(seed);
                out += '\n';
            }
        }
    }
    return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = kSummaryHeader;
    out += '\n';
    for (const auto& row : rows) {
        out += std::to_string(row.round);
        out += ',';
        out += row.policy;
        out += ',';
        out += fmt17(row.mean_cum_regret);
        out += ',';
        out += fmt17(row.stderr_cum_regret);
        out += ',';
        out += std::to_string(row.reps);
        out += '\n';
    }
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

long parse_long_field(const std::string& s, const char* what, size_t lineno) {
    try {
        size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": cannot parse " + what + " from '" + s +
                                 "'");
    }
}

double parse_double_field(const std::string& s, const char* what,
                          size_t lineno) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": cannot parse " + what + " from '" + s +
                                 "'");
    }
}

}  // namespace

std::vector<SummaryRow> import_external_trace(const std::string& path,
                                              long horizon, long stride) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open trace file: " + path);

    std::string line;
    if (!std::getline(f, line))
        throw std::runtime_error("line 1: empty file, expected header '" +
                                 std::string(kTraceHeader) + "'");
    {
        const std::vector<std::string> got = split_csv_line(line);
        const std::vector<std::string> want =
            split_csv_line(kTraceHeader);
        for (const auto& col : want)
            if (std::find(got.begin(), got.end(), col) == got.end())
                throw std::runtime_error("line 1: missing column '" + col +
                                         "'");
        if (got != want)
            throw std::runtime_error(
                "line 1: column order must match '" +
                std::string(kTraceHeader) + "'");
    }

    // policy -> replication -> sorted (round, cum_regret) series.
    std::map<std::string, std::map<long, std::vector<std::pair<long, double>>>>
        series;
    std::vector<std::string> policy_order;
    size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 9)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": expected 9 fields, got " +
                                     std::to_string(fields.size()));
        const long round = parse_long_field(fields[0], "round", lineno);
        if (round < 1)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": round must be >= 1, got " +
                                     std::to_string(round));
        const double cum = parse_double_field(fields[5], "cum_regret", lineno);
        const long rep = parse_long_field(fields[6], "replication", lineno);
        const std::string& policy = fields[7];
        if (policy.empty())
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": empty policy name");
        if (series.find(policy) == series.end()) policy_order.push_back(policy);
        series[policy][rep].emplace_back(round, cum);
    }
    if (series.empty())
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": no data rows");

    const std::vector<long> rounds = recorded_rounds(horizon, stride);
    std::vector<SummaryRow> out;
    out.reserve(rounds.size() * policy_order.size());
    for (const auto& policy : policy_order) {
        auto& reps = series[policy];
        // Step-function resampling: the value at a target round is the
        // last source value at or before it, zero before the first record.
        std::vector<std::vector<double>> resampled;
        for (auto& [rep, pts] : reps) {
            std::sort(pts.begin(), pts.end());
            std::vector<double> vals;
            vals.reserve(rounds.size());
            size_t i = 0;
            double last = 0.0;
            for (long t : rounds) {
                while (i < pts.size() && pts[i].first <= t)
                    last = pts[i++].second;
                vals.push_back(last);
            }
            resampled.push_back(std::move(vals));
        }
        std::vector<double> cums(resampled.size());
        for (size_t k = 0; k < rounds.size(); ++k) {
            for (size_t r = 0; r < resampled.size(); ++r)
                cums[r] = resampled[r][k];
            SummaryRow row;
            row.round = rounds[k];
            row.policy = policy;
            row.mean_cum_regret = mean_of(cums);
            row.stderr_cum_regret = stderr_of(cums, row.mean_cum_regret);
            row.reps = static_cast<int>(resampled.size());
            out.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace oam

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pfplan/analysis.hpp"
#include "pfplan/config.hpp"
#include "pfplan/coupled.hpp"
#include "pfplan/lowerbound.hpp"

namespace pfplan {

// Deterministic, round-trippable float rendering for CSV cells.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_opt(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

inline std::string format_opt(const std::optional<int>& v) {
    return v ? std::to_string(*v) : std::string();
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const {
        std::ostringstream out;
        for (std::size_t j = 0; j < header.size(); ++j)
            out << header[j] << (j + 1 < header.size() ? "," : "");
        out << "\n";
        for (const auto& row : rows) {
            for (std::size_t j = 0; j < row.size(); ++j)
                out << row[j] << (j + 1 < row.size() ? "," : "");
            out << "\n";
        }
        return out.str();
    }

    // Copy with the named column dropped; determinism checks strip timing.
    CsvTable without_column(const std::string& name) const {
        CsvTable out;
        std::size_t drop = header.size();
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) drop = j;
        for (std::size_t j = 0; j < header.size(); ++j)
            if (j != drop) out.header.push_back(header[j]);
        for (const auto& row : rows) {
            std::vector<std::string> r;
            for (std::size_t j = 0; j < row.size(); ++j)
                if (j != drop) r.push_back(row[j]);
            out.rows.push_back(std::move(r));
        }
        return out;
    }
};

struct CommandResult {
    CsvTable csv;
    std::optional<CsvTable> aggregate;
    std::string summary;
    int exit_code = 0;
};

namespace detail {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
    int n = 0;
};

inline MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    out.n = static_cast<int>(values.size());
    if (values.empty()) return out;
    CompensatedSum s;
    for (double v : values) s.add(v);
    out.mean = s.value() / static_cast<double>(values.size());
    if (values.size() > 1) {
        CompensatedSum sq;
        for (double v : values) sq.add((v - out.mean) * (v - out.mean));
        out.std = std::sqrt(sq.value() / static_cast<double>(values.size() - 1));
    }
    return out;
}

inline double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace detail

struct ExperimentCell {
    int run_id = 0;
    int particle_count = 0;
    int horizon = 0;
    int seed_index = 0;
    std::optional<double> regret;
    std::optional<int> died_at;
    double wall_time_ms = 0.0;
};

// Regret sweep of plain particle-filtering planning over a (T, N, seed)
// grid; no ideal process involved. Cell seeds derive from
// (master, T index, N index, seed index).
inline std::vector<ExperimentCell> experiment_sweep(const RunConfig& config) {
    const auto t_list = config.t_list();
    const auto n_list = config.n_list();
    const int seeds = config.seeds();
    const Policy policy = config.policy();
    const RewardFunction reward = config.reward();
    const std::uint64_t master = config.master_seed();

    std::vector<SystemSpec> specs;
    specs.reserve(t_list.size());
    for (int T : t_list) specs.push_back(config.system(T));

    const std::size_t per_t = n_list.size() * static_cast<std::size_t>(seeds);
    const std::size_t total = t_list.size() * per_t;
    std::vector<ExperimentCell> cells(total);
    parallel_for(config.jobs(), total, [&](std::size_t idx) {
        const std::size_t t_index = idx / per_t;
        const std::size_t n_index = (idx % per_t) / static_cast<std::size_t>(seeds);
        const std::size_t seed_index = idx % static_cast<std::size_t>(seeds);
        ExperimentCell& cell = cells[idx];
        cell.run_id = static_cast<int>(idx);
        cell.particle_count = n_list[n_index];
        cell.horizon = t_list[t_index];
        cell.seed_index = static_cast<int>(seed_index);
        const std::uint64_t cell_seed =
            derive_cell_seed(mix_stream(master, t_index), n_index, seed_index);
        const auto start = std::chrono::steady_clock::now();
        const SystemSpec& spec = specs[t_index];
        const NoiseRecord record =
            draw_noise_record(spec, mix_stream(cell_seed, stream_domain::shared_noise));
        const PlannerResult result = run_pf_planner(
            spec, policy, cell.particle_count, mix_stream(cell_seed, stream_domain::planner),
            record);
        cell.died_at = result.death_time;
        if (!result.death_time) cell.regret = trajectory_reward(reward, result.trajectory);
        cell.wall_time_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
    });
    return cells;
}

inline CommandResult cmd_experiment(const RunConfig& config) {
    const auto cells = experiment_sweep(config);
    CommandResult result;
    result.csv.header = {"run_id", "N", "T", "seed", "regret", "died_at", "wall_time_ms"};
    for (const auto& c : cells)
        result.csv.rows.push_back({std::to_string(c.run_id), std::to_string(c.particle_count),
                                   std::to_string(c.horizon), std::to_string(c.seed_index),
                                   format_opt(c.regret), format_opt(c.died_at),
                                   format_double(c.wall_time_ms)});

    CsvTable agg;
    agg.header = {"N", "T", "runs", "deaths", "mean_regret", "std_regret"};
    std::ostringstream summary;
    summary << "regret by (N, T), mean +/- sample std over seeds:\n";
    for (int T : config.t_list()) {
        for (int N : config.n_list()) {
            std::vector<double> regrets;
            int deaths = 0;
            for (const auto& c : cells) {
                if (c.particle_count != N || c.horizon != T) continue;
                if (c.regret)
                    regrets.push_back(*c.regret);
                else
                    ++deaths;
            }
            const auto ms = detail::mean_std(regrets);
            agg.rows.push_back({std::to_string(N), std::to_string(T), std::to_string(ms.n),
                                std::to_string(deaths), format_double(ms.mean),
                                format_double(ms.std)});
            summary << "  N=" << N << " T=" << T << "  regret=" << format_double(ms.mean)
                    << " +/- " << format_double(ms.std) << "  (runs=" << ms.n
                    << ", deaths=" << deaths << ")\n";
        }
    }
    result.aggregate = std::move(agg);
    result.summary = summary.str();
    return result;
}

inline CommandResult cmd_sweep(const RunConfig& config) {
    const SystemSpec spec = config.system();
    const OracleKind oracle = config.oracle();
    std::string why;
    if (!oracle_applicable(spec, oracle, &why))
        throw ConfigError("run.oracle not applicable to this system: " + why);
    const auto cells = gap_sweep(spec, config.policy(), config.reward(), config.n_list(),
                                 config.seeds(), oracle, config.master_seed(), config.jobs());
    CommandResult result;
    result.csv.header = {"run_id", "N",        "seed",    "T",       "reward_gap",
                         "reward_approx", "reward_ideal", "died_at", "wall_time_ms"};
    int failures = 0;
    std::vector<double> gaps;
    for (const auto& c : cells) {
        result.csv.rows.push_back(
            {std::to_string(c.run_id), std::to_string(c.particle_count),
             std::to_string(c.seed_index), std::to_string(c.horizon), format_opt(c.reward_gap),
             format_opt(c.reward_approx), format_opt(c.reward_ideal), format_opt(c.died_at),
             format_double(c.wall_time_ms)});
        if (c.error) ++failures;
        if (c.reward_gap) gaps.push_back(*c.reward_gap);
    }
    std::ostringstream summary;
    summary << "coupled gap sweep: " << cells.size() << " runs, " << failures << " failures\n";
    for (int N : config.n_list()) {
        std::vector<double> per_n;
        int deaths = 0;
        for (const auto& c : cells) {
            if (c.particle_count != N) continue;
            if (c.reward_gap) per_n.push_back(*c.reward_gap);
            if (c.died_at) ++deaths;
        }
        summary << "  N=" << N << "  median gap=" << format_double(detail::median(per_n))
                << "  (runs=" << per_n.size() << ", deaths=" << deaths << ")\n";
    }
    result.summary = summary.str();
    return result;
}

inline CommandResult cmd_lowerbound(const RunConfig& config) {
    std::vector<int> t_list = config.cfg.has("lowerbound.T_list")
                                  ? config.cfg.get_int_list("lowerbound.T_list")
                                  : std::vector<int>{1, 3, 5, 8};
    std::vector<int> n_list = config.cfg.has("lowerbound.N_list")
                                  ? config.cfg.get_int_list("lowerbound.N_list")
                                  : std::vector<int>{1, 2, 8, 64};
    if (t_list.empty() || n_list.empty())
        throw ConfigError("lowerbound.T_list and lowerbound.N_list must be nonempty");
    const int replications = config.cfg.get_int("lowerbound.replications", 10000);
    const double k = config.cfg.get_double("lowerbound.k", 2.0);
    const std::uint64_t master = config.master_seed();

    CommandResult result;
    result.csv.header = {"T", "N", "exact", "empirical", "bound_1_over_k", "pass"};
    std::ostringstream summary;
    bool all_pass = true;
    int grid_index = 0;
    for (int T : t_list) {
        for (int N : n_list) {
            const auto report = run_death_experiment(
                T, N, replications, mix_stream(master, static_cast<std::uint64_t>(grid_index)),
                k, config.jobs());
            const bool pass = report.within_3sigma && report.bound_holds;
            all_pass = all_pass && pass;
            result.csv.rows.push_back({std::to_string(T), std::to_string(N),
                                       format_double(report.exact_survival),
                                       format_double(report.empirical_survival),
                                       format_double(report.union_bound),
                                       pass ? "true" : "false"});
            summary << "  T=" << T << " N=" << N << "  survival empirical="
                    << format_double(report.empirical_survival)
                    << " exact=" << format_double(report.exact_survival)
                    << (report.bound_applicable ? " [union bound applies]" : "")
                    << (pass ? "  PASS" : "  FAIL") << "\n";
            ++grid_index;
        }
    }
    result.summary = "conditioned particle-death grid (" + std::to_string(replications) +
                     " replications per cell):\n" + summary.str();
    result.exit_code = all_pass ? 0 : 1;
    return result;
}

inline CommandResult cmd_bounds(const RunConfig& config) {
    const BoundParams params = config.bound_params();
    const std::string variant = config.cfg.get_string("bounds.variant", "both");
    std::vector<PolicyClass> classes;
    if (variant == "lipschitz" || variant == "both") classes.push_back(PolicyClass::lipschitz);
    if (variant == "linear" || variant == "both") classes.push_back(PolicyClass::linear);
    if (classes.empty())
        throw ConfigError("bounds.variant must be lipschitz|linear|both, got `" + variant + "`");

    CommandResult result;
    result.csv.header = {"variant",      "T",          "d",           "sigma_a",
                         "sigma_ab",     "sigma_ab_bar", "delta_T",   "n_expression",
                         "log_factor",   "stable_system_n", "beta",       "beta_prime",
                         "M"};
    std::ostringstream summary;
    for (PolicyClass pc : classes) {
        const BoundReport r = bound_calculator(params, pc);
        const std::string name = pc == PolicyClass::lipschitz ? "lipschitz" : "linear";
        result.csv.rows.push_back(
            {name, std::to_string(params.horizon), std::to_string(params.state_dim),
             format_double(r.sigma_a), format_double(r.sigma_ab), format_double(r.sigma_ab_bar),
             format_double(r.delta_T), format_double(r.n_expression),
             format_double(r.log_factor), format_double(r.stable_system_n), format_double(r.beta),
             format_double(r.beta_prime), format_double(r.big_m)});
        summary << name << ": Sigma_a=" << format_double(r.sigma_a)
                << " Sigma_ab=" << format_double(r.sigma_ab)
                << " Sigma_ab_bar=" << format_double(r.sigma_ab_bar)
                << " Delta_T=" << format_double(r.delta_T) << "\n  N expression "
                << format_double(r.n_expression) << " (times a universal constant and log factor "
                << format_double(r.log_factor) << "), stable-system simplification "
                << format_double(r.stable_system_n) << "\n";
    }
    result.summary = summary.str();
    return result;
}

// Plain-text gnuplot script referencing the written CSV files.
inline std::string gnuplot_script(const std::string& command, const std::string& csv_path,
                                  const std::string& aggregate_path) {
    std::ostringstream out;
    out << "set datafile separator ','\nset key autotitle columnhead\nset grid\n";
    if (command == "experiment") {
        out << "set logscale x\nset xlabel 'particles N'\nset ylabel 'regret'\n";
        out << "plot '" << aggregate_path
            << "' using 1:5:6 with yerrorlines title 'mean regret +/- std'\n";
    } else if (command == "sweep") {
        out << "set logscale x\nset xlabel 'particles N'\nset ylabel 'reward gap'\n";
        out << "plot '" << csv_path << "' using 2:5 with points title 'per-run gap'\n";
    } else if (command == "lowerbound") {
        out << "set xlabel 'N'\nset ylabel 'survival probability'\n";
        out << "plot '" << csv_path << "' using 2:3 with linespoints title 'exact', '"
            << csv_path << "' using 2:4 with points title 'empirical'\n";
    }
    return out.str();
}

}  // namespace pfplan

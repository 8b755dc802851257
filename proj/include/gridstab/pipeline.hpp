#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridstab/analysis.hpp"
#include "gridstab/case_model.hpp"
#include "gridstab/effective_network.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/io.hpp"
#include "gridstab/optimize.hpp"
#include "gridstab/power_flow.hpp"
#include "gridstab/rng.hpp"
#include "gridstab/uncertainty.hpp"

namespace gridstab {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int validation = 2;
inline constexpr int numerical = 3;
inline constexpr int partial = 4;
}  // namespace exit_code

struct MethodSettings {
    std::string method;  // equal | distinct | uncertain
    double sigma = 1.0;  // optimisation sigma (uncertain only)
    int restarts = 1;
    AnnealingSchedule schedule;
    NoisyObjectiveConfig objective;

    std::string plan_name() const {
        if (method == "equal") return "beta_eq";
        if (method == "distinct") return "beta_neq";
        std::ostringstream name;
        name << "beta_u_s" << sigma;
        return name.str();
    }
};

struct ExperimentConfig {
    int schema_version = 1;
    std::filesystem::path case_path;
    std::filesystem::path dynamics_path;     // optional when the case carries dynamics
    std::filesystem::path uncertainty_path;  // empty selects the printed-precision default
    std::vector<MethodSettings> methods;
    std::vector<double> test_sigmas{1.0};
    std::vector<TestChannels> test_channels{TestChannels::full};
    std::uint64_t draws = 10000;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    std::vector<double> quantile_grid{10, 20, 30, 40, 50, 60, 70, 80, 90};
    std::vector<double> critical_percents{95, 96, 97, 98, 99};
    double max_nonconvergent_fraction = 0.01;

    void validate() const {
        if (case_path.empty() || !std::filesystem::exists(case_path)) {
            throw ValidationError("case file not found: " + case_path.string());
        }
        if (!dynamics_path.empty() && !std::filesystem::exists(dynamics_path)) {
            throw ValidationError("dynamics file not found: " + dynamics_path.string());
        }
        if (!uncertainty_path.empty() && !std::filesystem::exists(uncertainty_path)) {
            throw ValidationError("uncertainty file not found: " + uncertainty_path.string());
        }
        for (double s : test_sigmas) {
            if (s < 0.0) throw ValidationError("test sigma must be >= 0");
        }
        for (const auto& m : methods) {
            if (m.method != "equal" && m.method != "distinct" && m.method != "uncertain") {
                throw ValidationError("unknown method '" + m.method + "'");
            }
            if (m.sigma < 0.0) throw ValidationError("method sigma must be >= 0");
            if (m.restarts < 1) throw ValidationError("restarts must be >= 1");
        }
        if (draws < 1) throw ValidationError("draws must be >= 1");
        if (out_dir.empty()) throw ValidationError("output directory not set");
    }

    static ExperimentConfig from_json(const ordered_json& j,
                                      const std::filesystem::path& base_dir = {}) {
        ExperimentConfig cfg;
        cfg.schema_version = j.value("schema_version", 1);
        if (cfg.schema_version != 1) {
            throw ValidationError("unsupported experiment schema version");
        }
        auto resolve = [&](const std::string& p) -> std::filesystem::path {
            if (p.empty()) return {};
            std::filesystem::path path(p);
            return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
        };
        cfg.case_path = resolve(j.at("case").get<std::string>());
        cfg.dynamics_path = resolve(j.value("dynamics", std::string{}));
        cfg.uncertainty_path = resolve(j.value("uncertainty", std::string{}));
        for (const auto& jm : j.value("methods", ordered_json::array())) {
            MethodSettings m;
            m.method = jm.at("method").get<std::string>();
            m.sigma = jm.value("sigma", 1.0);
            m.restarts = jm.value("restarts", 1);
            if (jm.contains("schedule")) {
                m.schedule = AnnealingSchedule::from_json(jm["schedule"]);
            }
            if (jm.contains("objective")) {
                const auto& jo = jm["objective"];
                m.objective.samples = jo.value("samples", 100);
                m.objective.penalty_b0 = jo.value("penalty_b0", 0.1);
                m.objective.penalty_k = jo.value("penalty_k", 2.0);
                m.objective.sample_beta_channel = jo.value("sample_beta_channel", true);
                m.objective.sample_system_channel =
                    jo.value("sample_system_channel", false);
                m.objective.confirmation_factor = jo.value("confirmation_factor", 10);
            }
            cfg.methods.push_back(std::move(m));
        }
        if (j.contains("test_sigmas")) {
            cfg.test_sigmas = j["test_sigmas"].get<std::vector<double>>();
        }
        if (j.contains("test_channels")) {
            cfg.test_channels.clear();
            for (const auto& c : j["test_channels"]) {
                cfg.test_channels.push_back(channels_from_string(c.get<std::string>()));
            }
        }
        cfg.draws = j.value("draws", std::uint64_t{10000});
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.out_dir = resolve(j.value("out", std::string{}));
        if (j.contains("quantile_grid")) {
            cfg.quantile_grid = j["quantile_grid"].get<std::vector<double>>();
        }
        if (j.contains("critical_percents")) {
            cfg.critical_percents = j["critical_percents"].get<std::vector<double>>();
        }
        cfg.max_nonconvergent_fraction = j.value("max_nonconvergent_fraction", 0.01);
        return cfg;
    }
};

/// Load + merge + validate the configured system.
inline PowerSystemCase load_case(const ExperimentConfig& cfg) {
    PowerSystemCase cs = parse_case(read_file(cfg.case_path));
    if (!cfg.dynamics_path.empty()) {
        cs = merge_dynamics(std::move(cs), parse_dynamics_csv(read_file(cfg.dynamics_path)));
    }
    cs.validate();
    return cs;
}

inline UncertaintySpec load_uncertainty(const ExperimentConfig& cfg,
                                        const PowerSystemCase& cs) {
    UncertaintySpec spec;
    if (cfg.uncertainty_path.empty()) {
        spec = default_uncertainty(cs);
    } else {
        spec = UncertaintySpec::from_json(ordered_json::parse(read_file(cfg.uncertainty_path)));
    }
    spec.validate(cs);
    return spec;
}

/// Best-of-restarts deterministic annealing.
inline DampingPlan run_distinct(const SteadyStateNetwork& net, const MethodSettings& m,
                                const SeededSampler& sampler) {
    DampingPlan best;
    double best_lambda = std::numeric_limits<double>::infinity();
    for (int r = 0; r < m.restarts; ++r) {
        const SeededSampler run_sampler =
            sampler.derive(channel::restart).derive(static_cast<std::uint64_t>(r));
        DampingPlan plan = optimize_beta_distinct(net, m.schedule, run_sampler);
        const double lambda = plan.provenance.at("lambda").get<double>();
        if (lambda < best_lambda) {
            best_lambda = lambda;
            best = std::move(plan);
        }
    }
    best.provenance["restarts"] = m.restarts;
    return best;
}

/// Best-of-restarts annealing under uncertainty, selected by the confirmed
/// objective of each restart's returned plan.
inline DampingPlan run_uncertain(const PowerSystemCase& cs, const SteadyStateNetwork& net,
                                 UncertaintySpec spec, const MethodSettings& m,
                                 const SeededSampler& sampler) {
    spec.beta_sigma = m.sigma;
    DampingPlan best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int r = 0; r < m.restarts; ++r) {
        const SeededSampler run_sampler =
            sampler.derive(channel::restart).derive(static_cast<std::uint64_t>(r));
        DampingPlan plan =
            optimize_beta_uncertain(cs, net, spec, m.objective, m.schedule, run_sampler);
        const double obj = plan.provenance.at("confirmed_objective").get<double>();
        if (obj < best_obj) {
            best_obj = obj;
            best = std::move(plan);
        }
    }
    best.provenance["restarts"] = m.restarts;
    return best;
}

struct PipelineResult {
    int code = exit_code::ok;
    ordered_json manifest;
    std::string failed_stage;
};

namespace detail {

/// Shared pipeline body. When preloaded plans are given the optimise stage
/// is skipped and those plans are evaluated instead.
inline PipelineResult run_stages(
    const ExperimentConfig& cfg, int jobs,
    const std::optional<std::vector<std::pair<std::string, DampingPlan>>>& preloaded) {
    namespace fs = std::filesystem;
    PipelineResult result;
    ordered_json& manifest = result.manifest;
    manifest["schema"] = "gridstab-manifest-v1";
    manifest["generated_at"] = static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    manifest["seed"] = cfg.seed;
    manifest["draws"] = cfg.draws;
    manifest["jobs"] = jobs;
    ordered_json artifact_hashes = ordered_json::object();

    auto persist = [&](const fs::path& rel, const std::string& content) {
        write_file(cfg.out_dir / rel, content);
        artifact_hashes[rel.generic_string()] = fnv1a64_hex(content);
    };
    auto finish = [&](int code, const std::string& stage) {
        manifest["artifacts"] = artifact_hashes;
        if (!stage.empty()) manifest["failed_stage"] = stage;
        write_file(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
        result.code = code;
        result.failed_stage = stage;
        return result;
    };

    std::string stage = "validate";
    try {
        cfg.validate();
        const SeededSampler sampler(cfg.seed);

        stage = "parse";
        const std::string case_text = read_file(cfg.case_path);
        ordered_json inputs;
        inputs["case"] = {{"path", cfg.case_path.string()},
                          {"hash", fnv1a64_hex(case_text)}};
        if (!cfg.dynamics_path.empty()) {
            inputs["dynamics"] = {{"path", cfg.dynamics_path.string()},
                                  {"hash", fnv1a64_hex(read_file(cfg.dynamics_path))}};
        }
        manifest["inputs"] = inputs;
        const PowerSystemCase cs = load_case(cfg);
        const UncertaintySpec base_spec = load_uncertainty(cfg, cs);
        manifest["uncertainty"] =
            cfg.uncertainty_path.empty() ? "printed-precision default"
                                         : cfg.uncertainty_path.string();
        persist("case.json", serialize_case(cs).dump(2) + "\n");
        persist("uncertainty.json", base_spec.to_json().dump(2) + "\n");

        stage = "powerflow";
        const PowerFlowSolution sol = solve_power_flow(cs);
        persist("solution.json", sol.to_json().dump(2) + "\n");
        if (!sol.converged) {
            throw NumericalError("base-case power flow did not converge");
        }

        stage = "reduce";
        const SteadyStateNetwork net = reduce_network(cs, sol);
        persist("network.json", net.to_json().dump(2) + "\n");

        stage = "optimize";
        std::vector<std::pair<std::string, DampingPlan>> plans;
        if (preloaded) {
            plans = *preloaded;
            for (const auto& [name, plan] : plans) {
                persist("plans/" + name + ".json", plan.to_json().dump(2) + "\n");
            }
        } else {
            for (const auto& m : cfg.methods) {
                const SeededSampler method_sampler = sampler.derive(fnv1a64(m.plan_name()));
                DampingPlan plan;
                if (m.method == "equal") {
                    plan = optimize_beta_equal(net, m.schedule.box_lo, m.schedule.box_hi);
                } else if (m.method == "distinct") {
                    plan = run_distinct(net, m, method_sampler);
                } else {
                    plan = run_uncertain(cs, net, base_spec, m, method_sampler);
                }
                persist("plans/" + m.plan_name() + ".json", plan.to_json().dump(2) + "\n");
                plans.emplace_back(m.plan_name(), std::move(plan));
            }
        }

        stage = "evaluate";
        bool partial = false;
        ordered_json summary_meta;
        std::ostringstream summary;
        summary.precision(10);
        summary << "plan,test_sigma,channels,draws,non_convergent,median";
        for (double p : cfg.critical_percents) summary << ",lambda_c_" << p;
        summary << "\n";
        std::vector<std::pair<std::string, QuantileCurve>> curves;
        std::vector<std::pair<std::string, std::vector<CriticalLambda>>> criticals;
        for (const auto& [name, plan] : plans) {
            for (double sigma_test : cfg.test_sigmas) {
                for (TestChannels chan : cfg.test_channels) {
                    UncertaintySpec spec = base_spec;
                    spec.beta_sigma = sigma_test;
                    std::ostringstream cell;
                    cell << name << "__test_s" << sigma_test << "__" << to_string(chan);
                    const SeededSampler cell_sampler = sampler.derive(fnv1a64(cell.str()));
                    const LyapunovDistribution dist = test_plan(
                        cs, net, plan, spec, chan, cfg.draws, cell_sampler, jobs);
                    const double frac =
                        static_cast<double>(dist.non_convergent) /
                        static_cast<double>(dist.requested);
                    if (frac > cfg.max_nonconvergent_fraction) partial = true;

                    const fs::path dir = fs::path("cells") / cell.str();
                    persist(dir / "distribution.csv", distribution_csv(dist));
                    const QuantileCurve curve = quantile_curve(dist, cfg.quantile_grid);
                    persist(dir / "quantiles.csv", quantiles_csv(curve));
                    const auto crit = critical_lambda(dist, cfg.critical_percents);
                    ordered_json jc;
                    for (const auto& c : crit) {
                        std::ostringstream key;
                        key << c.percent;
                        jc[key.str()] = c.lambda_c;
                    }
                    persist(dir / "critical_lambda.json", jc.dump(2) + "\n");
                    persist(dir / "histogram.csv", histogram_csv(histogram(dist, 0.05)));

                    const auto sorted = dist.sorted();
                    summary << name << "," << sigma_test << "," << to_string(chan) << ","
                            << dist.requested << "," << dist.non_convergent << ","
                            << empirical_quantile(sorted, 50.0);
                    for (const auto& c : crit) summary << "," << c.lambda_c;
                    summary << "\n";
                    curves.emplace_back(cell.str(), curve);
                    criticals.emplace_back(cell.str(), crit);
                }
            }
        }
        persist("summary.csv", summary.str());

        stage = "report";
        summary_meta["seed"] = cfg.seed;
        summary_meta["draws"] = cfg.draws;
        const ordered_json report = compare_report(curves, criticals, summary_meta);
        persist("report.json", report.dump(2) + "\n");

        return finish(partial ? exit_code::partial : exit_code::ok, "");
    } catch (const ValidationError& e) {
        manifest["error"] = e.what();
        return finish(exit_code::validation, stage);
    } catch (const NumericalError& e) {
        manifest["error"] = e.what();
        return finish(exit_code::numerical, stage);
    }
}

}  // namespace detail

/// End-to-end protocol: parse -> powerflow -> reduce -> optimize -> evaluate
/// -> report, persisting every intermediate artifact plus a manifest that
/// pins input hashes, seeds and settings. Any stage failure aborts with the
/// stage name; partial artifacts and the manifest stay on disk.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, int jobs = 1) {
    return detail::run_stages(cfg, jobs, std::nullopt);
}

/// Evaluate-and-report protocol over pre-existing plan files. plan_list is
/// a JSON array of {name, path} entries.
inline PipelineResult run_report(const ExperimentConfig& cfg, const ordered_json& plan_list,
                                 int jobs = 1) {
    std::vector<std::pair<std::string, DampingPlan>> plans;
    for (const auto& jp : plan_list) {
        const std::string name = jp.at("name").get<std::string>();
        const std::string path = jp.at("path").get<std::string>();
        plans.emplace_back(
            name, DampingPlan::from_json(ordered_json::parse(read_file(path))));
    }
    return detail::run_stages(cfg, jobs, plans);
}

}  // namespace gridstab

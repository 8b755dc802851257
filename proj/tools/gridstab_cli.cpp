// gridstab command-line tool: parse / powerflow / reduce / lyapunov /
// optimize / evaluate / report / run.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridstab/gridstab.hpp"

namespace fs = std::filesystem;
using namespace gridstab;

namespace {

std::uint64_t resolve_seed(std::optional<std::uint64_t> seed) {
    if (seed) return *seed;
    std::random_device rd;
    const std::uint64_t s =
        (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
    std::cerr << "note: no --seed given, using generated seed " << s << "\n";
    return s;
}

void emit(const ordered_json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << doc.dump(2) << "\n";
    } else {
        write_file(out_path, doc.dump(2) + "\n");
    }
}

PowerSystemCase load_case_files(const std::string& case_path,
                                const std::string& dynamics_path) {
    PowerSystemCase cs = parse_case(read_file(case_path));
    if (!dynamics_path.empty()) {
        cs = merge_dynamics(std::move(cs), parse_dynamics_csv(read_file(dynamics_path)));
    }
    cs.validate();
    return cs;
}

void print_powerflow_table(const PowerSystemCase& cs, const PowerFlowSolution& sol) {
    std::cout << std::fixed << std::setprecision(6);
    std::cout << "  bus       V (p.u.)     angle (deg)\n";
    for (std::size_t i = 0; i < cs.buses.size(); ++i) {
        std::cout << std::setw(5) << cs.buses[i].id << "   " << std::setw(10)
                  << sol.voltage_magnitude[i] << "   " << std::setw(12)
                  << sol.voltage_angle[i] * 180.0 / M_PI << "\n";
    }
    std::cout << (sol.converged ? "converged" : "NOT CONVERGED") << " in "
              << sol.iterations << " iterations, max mismatch " << std::scientific
              << sol.max_mismatch << " p.u., slack output " << std::fixed
              << sol.slack_active_injection << " MW\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-grid damping stability toolkit"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out;
    std::string format = "json";
    app.add_option("--seed", seed, "root seed for all stochastic commands");
    app.add_option("--jobs", jobs, "worker thread bound");
    app.add_option("--out", out, "output file or directory");
    app.add_option("--format", format, "output format (json or csv)")
        ->check(CLI::IsMember({"json", "csv"}));

    // parse
    auto* cmd_parse = app.add_subcommand("parse", "parse and validate a case file");
    std::string case_path, dynamics_path;
    cmd_parse->add_option("case", case_path, "MATPOWER .m or native JSON case")->required();
    cmd_parse->add_option("--dynamics", dynamics_path, "dynamics sidecar CSV");

    // powerflow
    auto* cmd_pf = app.add_subcommand("powerflow", "solve the AC power flow");
    std::string pf_case, pf_dynamics;
    double pf_tol = 1e-8;
    int pf_max_iter = 50;
    cmd_pf->add_option("case", pf_case)->required();
    cmd_pf->add_option("--dynamics", pf_dynamics);
    cmd_pf->add_option("--tol", pf_tol, "mismatch tolerance (p.u.)");
    cmd_pf->add_option("--max-iter", pf_max_iter, "iteration cap");

    // reduce
    auto* cmd_reduce = app.add_subcommand("reduce", "build the generator effective network");
    std::string red_case, red_dynamics;
    cmd_reduce->add_option("case", red_case)->required();
    cmd_reduce->add_option("--dynamics", red_dynamics, "dynamics sidecar CSV");

    // lyapunov
    auto* cmd_lyap = app.add_subcommand("lyapunov", "Lyapunov exponent of a network");
    std::string lyap_net, lyap_plan;
    bool lyap_spectrum = false;
    cmd_lyap->add_option("network", lyap_net, "network JSON from 'reduce'")->required();
    cmd_lyap->add_option("--beta", lyap_plan, "damping plan JSON (default: network betas)");
    cmd_lyap->add_flag("--spectrum", lyap_spectrum, "include the full spectrum");

    // optimize
    auto* cmd_opt = app.add_subcommand("optimize", "compute a damping plan");
    std::string opt_case, opt_dynamics, opt_method = "equal", opt_schedule_path;
    double opt_sigma = 1.0;
    int opt_samples = 100;
    int opt_restarts = 1;
    cmd_opt->add_option("case", opt_case)->required();
    cmd_opt->add_option("--dynamics", opt_dynamics);
    cmd_opt->add_option("--method", opt_method, "equal, distinct or uncertain")
        ->check(CLI::IsMember({"equal", "distinct", "uncertain"}));
    cmd_opt->add_option("--sigma", opt_sigma, "damping-noise sigma (uncertain)");
    cmd_opt->add_option("--samples", opt_samples, "objective samples N (uncertain)");
    cmd_opt->add_option("--restarts", opt_restarts, "independent restarts");
    cmd_opt->add_option("--schedule", opt_schedule_path, "annealing schedule JSON");

    // evaluate
    auto* cmd_eval = app.add_subcommand("evaluate", "Monte Carlo test of a plan");
    std::string ev_case, ev_dynamics, ev_plan, ev_channels = "full";
    double ev_sigma = 1.0;
    std::uint64_t ev_draws = 10000;
    cmd_eval->add_option("case", ev_case)->required();
    cmd_eval->add_option("--dynamics", ev_dynamics);
    cmd_eval->add_option("--plan", ev_plan, "damping plan JSON")->required();
    cmd_eval->add_option("--sigma", ev_sigma, "damping-noise sigma");
    cmd_eval->add_option("--channels", ev_channels, "full, beta or y")
        ->check(CLI::IsMember({"full", "beta", "y"}));
    cmd_eval->add_option("--draws", ev_draws, "Monte Carlo draws");

    // report
    auto* cmd_report = app.add_subcommand("report", "quantile matrix from existing plans");
    std::string rep_config;
    cmd_report->add_option("--matrix", rep_config, "experiment config JSON")->required();

    // run
    auto* cmd_run = app.add_subcommand("run", "full pipeline from an experiment config");
    std::string run_config;
    cmd_run->add_option("config", run_config, "experiment config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_parse) {
            const PowerSystemCase cs = load_case_files(case_path, dynamics_path);
            ordered_json j = serialize_case(cs);
            if (!cs.warnings.empty()) j["warnings"] = cs.warnings;
            emit(j, out);
            return exit_code::ok;
        }

        if (*cmd_pf) {
            const PowerSystemCase cs = load_case_files(pf_case, pf_dynamics);
            const PowerFlowSolution sol = solve_power_flow(cs, pf_tol, pf_max_iter);
            emit(sol.to_json(), out);
            if (out.empty()) print_powerflow_table(cs, sol);
            return sol.converged ? exit_code::ok : exit_code::numerical;
        }

        if (*cmd_reduce) {
            const PowerSystemCase cs = load_case_files(red_case, red_dynamics);
            const PowerFlowSolution sol = solve_power_flow(cs);
            if (!sol.converged) throw NumericalError("power flow did not converge");
            emit(reduce_network(cs, sol).to_json(), out);
            return exit_code::ok;
        }

        if (*cmd_lyap) {
            const SteadyStateNetwork net =
                SteadyStateNetwork::from_json(ordered_json::parse(read_file(lyap_net)));
            Eigen::VectorXd beta = net.beta;
            if (!lyap_plan.empty()) {
                beta = DampingPlan::from_json(ordered_json::parse(read_file(lyap_plan)))
                           .expand(net.n);
            }
            const LyapunovResult res = lyapunov_exponent(assemble_jacobian(net, beta));
            ordered_json j;
            j["lambda"] = res.lambda;
            j["zero_mode_magnitude"] = res.zero_mode_magnitude;
            if (lyap_spectrum) {
                ordered_json spec = ordered_json::array();
                for (Eigen::Index i = 0; i < res.spectrum.size(); ++i) {
                    spec.push_back({{"re", res.spectrum[i].real()},
                                    {"im", res.spectrum[i].imag()}});
                }
                j["spectrum"] = spec;
            }
            emit(j, out);
            return exit_code::ok;
        }

        if (*cmd_opt) {
            const PowerSystemCase cs = load_case_files(opt_case, opt_dynamics);
            const PowerFlowSolution sol = solve_power_flow(cs);
            if (!sol.converged) throw NumericalError("power flow did not converge");
            const SteadyStateNetwork net = reduce_network(cs, sol);
            MethodSettings m;
            m.method = opt_method;
            m.sigma = opt_sigma;
            m.restarts = opt_restarts;
            m.objective.samples = opt_samples;
            if (!opt_schedule_path.empty()) {
                m.schedule =
                    AnnealingSchedule::from_json(ordered_json::parse(read_file(opt_schedule_path)));
            }
            const SeededSampler sampler(resolve_seed(seed));
            DampingPlan plan;
            if (opt_method == "equal") {
                plan = optimize_beta_equal(net, m.schedule.box_lo, m.schedule.box_hi);
            } else if (opt_method == "distinct") {
                plan = run_distinct(net, m, sampler);
            } else {
                UncertaintySpec spec = default_uncertainty(cs);
                plan = run_uncertain(cs, net, spec, m, sampler);
            }
            emit(plan.to_json(), out);
            return exit_code::ok;
        }

        if (*cmd_eval) {
            const PowerSystemCase cs = load_case_files(ev_case, ev_dynamics);
            const PowerFlowSolution sol = solve_power_flow(cs);
            if (!sol.converged) throw NumericalError("power flow did not converge");
            const SteadyStateNetwork net = reduce_network(cs, sol);
            const DampingPlan plan =
                DampingPlan::from_json(ordered_json::parse(read_file(ev_plan)));
            UncertaintySpec spec = default_uncertainty(cs);
            spec.beta_sigma = ev_sigma;
            const SeededSampler sampler(resolve_seed(seed));
            const LyapunovDistribution dist =
                test_plan(cs, net, plan, spec, channels_from_string(ev_channels),
                          ev_draws, sampler, jobs);
            const fs::path dir = out.empty() ? fs::path("evaluate_out") : fs::path(out);
            write_file(dir / "distribution.csv", distribution_csv(dist));
            const QuantileCurve curve = quantile_curve(
                dist, {10, 20, 30, 40, 50, 60, 70, 80, 90, 95, 96, 97, 98, 99});
            write_file(dir / "quantiles.csv", quantiles_csv(curve));
            const auto crit = critical_lambda(dist);
            ordered_json jc;
            for (const auto& c : crit) {
                std::ostringstream key;
                key << c.percent;
                jc[key.str()] = c.lambda_c;
            }
            jc["non_convergent"] = dist.non_convergent;
            jc["draws"] = dist.requested;
            jc["seed"] = sampler.root_seed();
            write_file(dir / "critical_lambda.json", jc.dump(2) + "\n");
            write_file(dir / "histogram.csv", histogram_csv(histogram(dist, 0.05)));
            std::cerr << "wrote " << dir.string() << " (" << dist.samples.size()
                      << " samples, " << dist.non_convergent << " non-convergent)\n";
            const double frac = static_cast<double>(dist.non_convergent) /
                                static_cast<double>(dist.requested);
            return frac > 0.01 ? exit_code::partial : exit_code::ok;
        }

        if (*cmd_report || *cmd_run) {
            const std::string cfg_path = *cmd_run ? run_config : rep_config;
            const fs::path base = fs::path(cfg_path).parent_path();
            ordered_json j = ordered_json::parse(read_file(cfg_path));
            ExperimentConfig cfg = ExperimentConfig::from_json(j, base);
            if (seed) cfg.seed = *seed;
            if (!out.empty()) cfg.out_dir = out;
            if (*cmd_report) {
                // report mode: skip plan optimisation, read plans from config
                cfg.methods.clear();
            }
            PipelineResult res;
            if (*cmd_run) {
                res = run_pipeline(cfg, jobs);
            } else {
                if (!j.contains("plans")) {
                    throw ValidationError("report config needs a plans list");
                }
                // Reuse the pipeline with pre-baked plans by writing them in-place.
                res = run_report(cfg, j["plans"], jobs);
            }
            if (!res.failed_stage.empty()) {
                std::cerr << "pipeline failed at stage: " << res.failed_stage << "\n";
            }
            std::cerr << "manifest: " << (cfg.out_dir / "manifest.json").string() << "\n";
            return res.code;
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return exit_code::validation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_code::numerical;
    }
    return exit_code::ok;
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "gridstab/case_model.hpp"
#include "gridstab/effective_network.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/rng.hpp"
#include "gridstab/stability.hpp"
#include "gridstab/uncertainty.hpp"

namespace gridstab {

// ---------------------------------------------------------------------------
// Damping plans

enum class PlanKind { uniform, per_generator, distribution_means };

inline std::string to_string(PlanKind k) {
    switch (k) {
        case PlanKind::uniform: return "uniform";
        case PlanKind::per_generator: return "per_generator";
        default: return "distribution_means";
    }
}

inline PlanKind plan_kind_from_string(const std::string& s) {
    if (s == "uniform") return PlanKind::uniform;
    if (s == "per_generator") return PlanKind::per_generator;
    if (s == "distribution_means") return PlanKind::distribution_means;
    throw ValidationError("unknown plan kind '" + s + "'");
}

/// A named beta assignment: one scalar applied everywhere, a per-generator
/// vector, or per-generator distribution means.
struct DampingPlan {
    PlanKind kind = PlanKind::uniform;
    Eigen::VectorXd values;  // length 1 for uniform, n otherwise
    ordered_json provenance = ordered_json::object();

    /// Expanded beta vector of length n.
    Eigen::VectorXd expand(int n) const {
        if (kind == PlanKind::uniform) {
            if (values.size() != 1) throw ValidationError("uniform plan needs 1 value");
            return Eigen::VectorXd::Constant(n, values[0]);
        }
        if (values.size() != n) {
            throw ValidationError("plan length " + std::to_string(values.size()) +
                                  " does not match generator count " + std::to_string(n));
        }
        return values;
    }

    ordered_json to_json() const {
        ordered_json j;
        j["schema"] = "gridstab-plan-v1";
        j["kind"] = to_string(kind);
        j["values"] = std::vector<double>(values.data(), values.data() + values.size());
        j["provenance"] = provenance;
        return j;
    }

    static DampingPlan from_json(const ordered_json& j) {
        DampingPlan p;
        p.kind = plan_kind_from_string(j.at("kind").get<std::string>());
        auto v = j.at("values").get<std::vector<double>>();
        p.values = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
        p.provenance = j.value("provenance", ordered_json::object());
        return p;
    }
};

// ---------------------------------------------------------------------------
// Annealing machinery

enum class MoveKind { hypersphere, gaussian };

inline std::string to_string(MoveKind m) {
    return m == MoveKind::hypersphere ? "hypersphere" : "gaussian";
}

inline MoveKind move_kind_from_string(const std::string& s) {
    if (s == "hypersphere") return MoveKind::hypersphere;
    if (s == "gaussian") return MoveKind::gaussian;
    throw ValidationError("unknown move kind '" + s + "'");
}

struct AnnealingSchedule {
    double initial_temperature = 0.0;  // <= 0 requests auto-calibration
    double cooling = 0.998;            // geometric factor per step
    int steps = 6000;                  // temperature steps; moves = steps - 1
    MoveKind move = MoveKind::hypersphere;
    double step_size = 0.5;            // hypersphere radius or gaussian sigma
    double box_lo = 0.1;               // search box, moves reflect at the walls
    double box_hi = 30.0;

    void validate() const {
        if (!(cooling > 0.0 && cooling < 1.0)) {
            throw ValidationError("cooling factor must be in (0, 1)");
        }
        if (steps < 1) throw ValidationError("steps must be >= 1");
        if (step_size <= 0.0) throw ValidationError("step size must be > 0");
        if (!(box_lo < box_hi)) throw ValidationError("search box is empty");
    }

    ordered_json to_json() const {
        ordered_json j;
        j["initial_temperature"] = initial_temperature;
        j["cooling"] = cooling;
        j["steps"] = steps;
        j["move"] = to_string(move);
        j["step_size"] = step_size;
        j["box_lo"] = box_lo;
        j["box_hi"] = box_hi;
        return j;
    }

    static AnnealingSchedule from_json(const ordered_json& j) {
        AnnealingSchedule s;
        s.initial_temperature = j.value("initial_temperature", 0.0);
        s.cooling = j.value("cooling", 0.998);
        s.steps = j.value("steps", 6000);
        s.move = move_kind_from_string(j.value("move", std::string("hypersphere")));
        s.step_size = j.value("step_size", 0.5);
        s.box_lo = j.value("box_lo", 0.1);
        s.box_hi = j.value("box_hi", 30.0);
        return s;
    }
};

struct NoisyObjectiveConfig {
    int samples = 100;       // N per evaluation
    double penalty_b0 = 0.1; // small penalty constant
    double penalty_k = 2.0;  // growth constant
    bool sample_beta_channel = true;
    bool sample_system_channel = false;
    int confirmation_factor = 10;  // sample multiplier for the final pass

    void validate() const {
        if (samples < 1) throw ValidationError("samples must be >= 1");
        if (penalty_b0 < 0.0) throw ValidationError("penalty b0 must be >= 0");
        if (penalty_k <= 0.0) throw ValidationError("penalty k must be > 0");
    }

    ordered_json to_json() const {
        ordered_json j;
        j["samples"] = samples;
        j["penalty_b0"] = penalty_b0;
        j["penalty_k"] = penalty_k;
        j["sample_beta_channel"] = sample_beta_channel;
        j["sample_system_channel"] = sample_system_channel;
        j["confirmation_factor"] = confirmation_factor;
        return j;
    }
};

struct ObjectiveEvaluation {
    double mean = 0.0;              // r-bar_0
    double scaled_deviation = 0.0;  // sigma_0
    double penalty = 0.0;           // Psi_E
    double objective = 0.0;         // Phi_E = mean + penalty
    std::vector<double> samples;    // the set L
    int non_convergent = 0;
};

/// Accept a downhill move always, an uphill move with probability
/// exp(-delta/T). delta == 0 falls on the exp branch, which accepts.
inline bool metropolis_accept(double delta_lambda, double temperature, Rng& rng) {
    if (temperature <= 0.0) throw ValidationError("temperature must be > 0");
    if (delta_lambda < 0.0) return true;
    return rng.uniform() < std::exp(-delta_lambda / temperature);
}

/// Collapse a sample set into the penalised objective:
///   sigma_0 = sqrt(sum (r_i - rbar)^2) / N,
///   Psi = (b0 / k^T) * 2 sigma_0 / sqrt(N),  Phi = rbar + Psi.
inline ObjectiveEvaluation summarize_samples(std::vector<double> samples,
                                             const NoisyObjectiveConfig& cfg,
                                             double temperature) {
    if (samples.empty()) throw NumericalError("objective evaluation has no samples");
    ObjectiveEvaluation ev;
    const double n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (double r : samples) sum += r;
    ev.mean = sum / n;
    double sq = 0.0;
    for (double r : samples) sq += (r - ev.mean) * (r - ev.mean);
    ev.scaled_deviation = std::sqrt(sq) / n;
    ev.penalty = (cfg.penalty_b0 / std::pow(cfg.penalty_k, temperature)) *
                 (2.0 * ev.scaled_deviation / std::sqrt(n));
    ev.objective = ev.mean + ev.penalty;
    ev.samples = std::move(samples);
    return ev;
}

namespace detail {

inline Eigen::VectorXd reflect_into_box(Eigen::VectorXd x, double lo, double hi) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        while (x[i] < lo || x[i] > hi) {
            if (x[i] < lo) x[i] = 2.0 * lo - x[i];
            if (x[i] > hi) x[i] = 2.0 * hi - x[i];
        }
    }
    return x;
}

inline Eigen::VectorXd draw_move(const AnnealingSchedule& sched, int n, Rng& rng) {
    return sched.move == MoveKind::hypersphere
               ? hypersphere_step(n, sched.step_size, rng)
               : gaussian_step(n, sched.step_size, rng);
}

struct AnnealResult {
    Eigen::VectorXd best;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, Eigen::VectorXd>> accepted;  // (value, state)
    Eigen::VectorXd chain_tail_mean;
    double initial_temperature = 0.0;
    double final_temperature = 0.0;
    int accepted_moves = 0;
    std::vector<double> best_trace;  // best-so-far value after each step
};

/// Shared annealing chain. objective(x, eval_id, T) must be deterministic in
/// its arguments; eval ids 0..steps-1 are chain evaluations, ids >= 1<<32
/// are calibration probes.
template <typename Objective>
AnnealResult anneal(const AnnealingSchedule& sched, const Eigen::VectorXd& x0,
                    Objective&& objective, const SeededSampler& sampler) {
    sched.validate();
    const int n = static_cast<int>(x0.size());
    constexpr std::uint64_t kProbeBase = std::uint64_t{1} << 32;

    double t0 = sched.initial_temperature;
    if (t0 <= 0.0) {
        // pick T0 so a median uphill probe is accepted with probability ~0.8
        const double f0 = objective(x0, kProbeBase, 1.0);
        std::vector<double> uphill;
        for (int p = 0; p < 32; ++p) {
            Rng rng = sampler.stream(channel::calibrate, static_cast<std::uint64_t>(p));
            const Eigen::VectorXd probe =
                reflect_into_box(x0 + draw_move(sched, n, rng), sched.box_lo, sched.box_hi);
            const double d = objective(probe, kProbeBase + 1 + p, 1.0) - f0;
            if (d > 0.0) uphill.push_back(d);
        }
        if (uphill.empty()) {
            t0 = 0.1;
        } else {
            std::nth_element(uphill.begin(), uphill.begin() + uphill.size() / 2,
                             uphill.end());
            t0 = uphill[uphill.size() / 2] / std::log(1.0 / 0.8);
        }
    }

    AnnealResult res;
    res.initial_temperature = t0;
    Eigen::VectorXd x = x0;
    double T = t0;
    double f = objective(x, 0, T);
    res.best = x;
    res.best_value = f;
    res.accepted.emplace_back(f, x);
    res.best_trace.push_back(f);

    Eigen::VectorXd tail_sum = Eigen::VectorXd::Zero(n);
    int tail_count = 0;
    const int tail_start = sched.steps / 2;

    for (int k = 1; k < sched.steps; ++k) {
        Rng move_rng = sampler.stream(channel::move, static_cast<std::uint64_t>(k));
        const Eigen::VectorXd cand =
            reflect_into_box(x + draw_move(sched, n, move_rng), sched.box_lo, sched.box_hi);
        const double fc = objective(cand, static_cast<std::uint64_t>(k), T);
        Rng accept_rng = sampler.stream(channel::accept, static_cast<std::uint64_t>(k));
        if (metropolis_accept(fc - f, T, accept_rng)) {
            x = cand;
            f = fc;
            ++res.accepted_moves;
            res.accepted.emplace_back(f, x);
            if (f < res.best_value) {
                res.best_value = f;
                res.best = x;
            }
        }
        if (k >= tail_start) {
            tail_sum += x;
            ++tail_count;
        }
        res.best_trace.push_back(res.best_value);
        T *= sched.cooling;
    }
    res.final_temperature = T;
    res.chain_tail_mean = tail_count > 0 ? (tail_sum / tail_count).eval() : x;
    return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterministic objectives

/// lambda_L for a uniform beta on a fixed network.
inline double uniform_lambda(const SteadyStateNetwork& net, double beta) {
    return lyapunov_exponent(assemble_jacobian(net, Eigen::VectorXd::Constant(net.n, beta)))
        .lambda;
}

/// Golden-section search for the single beta value minimising lambda_L.
/// A coarse scan locates the bracket first; a minimum at either end of the
/// search interval means the map is monotone there and is an error.
inline DampingPlan optimize_beta_equal(const SteadyStateNetwork& net,
                                       double lo = 0.1, double hi = 30.0,
                                       double tolerance = 1e-4) {
    if (!(lo < hi)) throw ValidationError("empty search interval");
    if (tolerance <= 0.0) throw ValidationError("tolerance must be > 0");
    constexpr int kScan = 64;
    std::vector<double> grid(kScan), val(kScan);
    for (int i = 0; i < kScan; ++i) {
        grid[i] = lo + (hi - lo) * i / (kScan - 1);
        val[i] = uniform_lambda(net, grid[i]);
    }
    int imin = static_cast<int>(std::min_element(val.begin(), val.end()) - val.begin());
    if (imin == 0 || imin == kScan - 1) {
        throw ValidationError("no interior minimum of lambda_L(beta) in [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    double a = grid[imin - 1];
    double b = grid[imin + 1];
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double m1 = b - gr * (b - a);
    double m2 = a + gr * (b - a);
    double f1 = uniform_lambda(net, m1);
    double f2 = uniform_lambda(net, m2);
    while (b - a > tolerance) {
        if (f1 < f2) {
            b = m2;
            m2 = m1;
            f2 = f1;
            m1 = b - gr * (b - a);
            f1 = uniform_lambda(net, m1);
        } else {
            a = m1;
            m1 = m2;
            f1 = f2;
            m2 = a + gr * (b - a);
            f2 = uniform_lambda(net, m2);
        }
    }
    const double beta = 0.5 * (a + b);
    DampingPlan plan;
    plan.kind = PlanKind::uniform;
    plan.values = Eigen::VectorXd::Constant(1, beta);
    plan.provenance["method"] = "equal";
    plan.provenance["interval"] = {lo, hi};
    plan.provenance["tolerance"] = tolerance;
    plan.provenance["lambda"] = uniform_lambda(net, beta);
    return plan;
}

namespace detail {

/// Initial annealing point: the best uniform value on a coarse grid.
inline Eigen::VectorXd coarse_uniform_start(const SteadyStateNetwork& net, double lo,
                                            double hi) {
    constexpr int kScan = 32;
    double best_b = lo;
    double best_v = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kScan; ++i) {
        const double b = lo + (hi - lo) * (i + 0.5) / kScan;
        const double v = uniform_lambda(net, b);
        if (v < best_v) {
            best_v = v;
            best_b = b;
        }
    }
    return Eigen::VectorXd::Constant(net.n, best_b);
}

}  // namespace detail

/// Simulated annealing on the deterministic objective lambda_L({beta_i}).
/// Returns the best-ever visited plan.
inline DampingPlan optimize_beta_distinct(const SteadyStateNetwork& net,
                                          const AnnealingSchedule& schedule,
                                          const SeededSampler& sampler) {
    const Eigen::VectorXd x0 =
        detail::coarse_uniform_start(net, schedule.box_lo, schedule.box_hi);
    auto objective = [&](const Eigen::VectorXd& x, std::uint64_t, double) {
        return lyapunov_exponent(assemble_jacobian(net, x)).lambda;
    };
    const auto res = detail::anneal(schedule, x0, objective, sampler);
    DampingPlan plan;
    plan.kind = PlanKind::per_generator;
    plan.values = res.best;
    plan.provenance["method"] = "distinct";
    plan.provenance["seed"] = sampler.root_seed();
    plan.provenance["schedule"] = schedule.to_json();
    plan.provenance["initial_temperature"] = res.initial_temperature;
    plan.provenance["lambda"] = res.best_value;
    plan.provenance["accepted_moves"] = res.accepted_moves;
    return plan;
}

/// One noisy-objective evaluation (Eqs. of the global objective): N samples
/// of lambda_L with the configured channels drawn about the plan means.
/// cs may be null when the system channel is disabled.
inline ObjectiveEvaluation evaluate_noisy_objective(
    const PowerSystemCase* cs, const SteadyStateNetwork& net,
    const Eigen::VectorXd& plan_means, const NoisyObjectiveConfig& cfg,
    const UncertaintySpec& spec, const SeededSampler& sampler, double temperature,
    std::uint64_t eval_id = 0) {
    cfg.validate();
    if (cfg.sample_system_channel && cs == nullptr) {
        throw ValidationError("system-channel sampling requires the raw case");
    }
    const SeededSampler eval_sampler = sampler.derive(channel::objective).derive(eval_id);
    std::vector<double> samples;
    samples.reserve(cfg.samples);
    int failed = 0;
    for (int i = 0; i < cfg.samples; ++i) {
        const Eigen::VectorXd beta =
            cfg.sample_beta_channel
                ? sample_beta(plan_means, spec.beta_sigma, eval_sampler,
                              static_cast<std::uint64_t>(i))
                : plan_means;
        if (cfg.sample_system_channel) {
            const PerturbedInstance inst =
                sample_instance(*cs, spec, eval_sampler, static_cast<std::uint64_t>(i));
            if (!inst.converged) {
                ++failed;
                continue;
            }
            samples.push_back(lyapunov_exponent(assemble_jacobian(*inst.network, beta)).lambda);
        } else {
            samples.push_back(lyapunov_exponent(assemble_jacobian(net, beta)).lambda);
        }
    }
    if (samples.empty()) {
        throw NumericalError("all " + std::to_string(cfg.samples) +
                             " objective samples failed to converge");
    }
    ObjectiveEvaluation ev = summarize_samples(std::move(samples), cfg, temperature);
    ev.non_convergent = failed;
    return ev;
}

/// Simulated annealing under uncertainty over the distribution means
/// {<beta_i>}. The chain optimises the penalised sample objective; the
/// returned plan is chosen by re-evaluating the leading recorded candidates
/// (plus, for genuinely stochastic objectives, the tail-of-chain average,
/// which cancels sampling noise) at confirmation_factor * N samples.
inline DampingPlan optimize_beta_uncertain(const PowerSystemCase& cs,
                                           const SteadyStateNetwork& net,
                                           const UncertaintySpec& spec,
                                           const NoisyObjectiveConfig& cfg,
                                           const AnnealingSchedule& schedule,
                                           const SeededSampler& sampler) {
    cfg.validate();
    const Eigen::VectorXd x0 =
        detail::coarse_uniform_start(net, schedule.box_lo, schedule.box_hi);
    auto objective = [&](const Eigen::VectorXd& x, std::uint64_t id, double T) {
        return evaluate_noisy_objective(&cs, net, x, cfg, spec, sampler, T, id).objective;
    };
    auto res = detail::anneal(schedule, x0, objective, sampler);

    const bool beta_stochastic = cfg.sample_beta_channel && spec.beta_sigma > 0.0;
    const bool system_stochastic =
        cfg.sample_system_channel &&
        !(spec.bus_active_sd.isZero() && spec.bus_reactive_sd.isZero() &&
          spec.gen_active_sd.isZero() && spec.gen_reactive_sd.isZero() &&
          spec.branch_resistance_sd.isZero() && spec.branch_reactance_sd.isZero());
    const bool stochastic = beta_stochastic || system_stochastic;

    std::vector<Eigen::VectorXd> candidates;
    std::sort(res.accepted.begin(), res.accepted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < res.accepted.size() && i < 10; ++i) {
        candidates.push_back(res.accepted[i].second);
    }
    if (stochastic) candidates.push_back(res.chain_tail_mean);

    NoisyObjectiveConfig confirm_cfg = cfg;
    confirm_cfg.samples = cfg.samples * std::max(1, cfg.confirmation_factor);
    const SeededSampler confirm_sampler = sampler.derive(channel::confirm);
    double best_obj = std::numeric_limits<double>::infinity();
    ObjectiveEvaluation best_ev;
    Eigen::VectorXd best_x;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        ObjectiveEvaluation ev =
            evaluate_noisy_objective(&cs, net, candidates[i], confirm_cfg, spec,
                                     confirm_sampler, res.final_temperature,
                                     static_cast<std::uint64_t>(i));
        if (ev.objective < best_obj) {
            best_obj = ev.objective;
            best_ev = ev;
            best_x = candidates[i];
        }
    }

    DampingPlan plan;
    plan.kind = PlanKind::distribution_means;
    plan.values = best_x;
    plan.provenance["method"] = "uncertain";
    plan.provenance["seed"] = sampler.root_seed();
    plan.provenance["sigma"] = spec.beta_sigma;
    plan.provenance["objective_config"] = cfg.to_json();
    plan.provenance["schedule"] = schedule.to_json();
    plan.provenance["initial_temperature"] = res.initial_temperature;
    plan.provenance["best_recorded_objective"] = res.best_value;
    plan.provenance["confirmed_objective"] = best_ev.objective;
    plan.provenance["confirmed_mean"] = best_ev.mean;
    plan.provenance["confirmation_samples"] = confirm_cfg.samples;
    plan.provenance["accepted_moves"] = res.accepted_moves;
    return plan;
}

}  // namespace gridstab

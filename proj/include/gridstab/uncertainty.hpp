#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "gridstab/case_model.hpp"
#include "gridstab/effective_network.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/power_flow.hpp"
#include "gridstab/rng.hpp"

namespace gridstab {

/// Gaussian standard deviations for the raw system parameters (the fixed
/// y-channel) plus the common damping-noise sigma (the controllable beta
/// channel). Vector lengths follow the case's bus/generator/branch counts.
struct UncertaintySpec {
    Eigen::VectorXd bus_active_sd;         // MW
    Eigen::VectorXd bus_reactive_sd;       // MVAr
    Eigen::VectorXd gen_active_sd;         // MW
    Eigen::VectorXd gen_reactive_sd;       // MVAr
    Eigen::VectorXd branch_resistance_sd;  // p.u.
    Eigen::VectorXd branch_reactance_sd;   // p.u.
    double beta_sigma = 0.0;               // 1/s

    void validate(const PowerSystemCase& cs) const {
        auto check = [](const Eigen::VectorXd& v, std::size_t want, const char* name) {
            if (static_cast<std::size_t>(v.size()) != want) {
                throw ValidationError(std::string("uncertainty spec: ") + name +
                                      " has wrong length");
            }
            if ((v.array() < 0.0).any()) {
                throw ValidationError(std::string("uncertainty spec: negative sd in ") +
                                      name);
            }
        };
        check(bus_active_sd, cs.buses.size(), "bus_active_sd");
        check(bus_reactive_sd, cs.buses.size(), "bus_reactive_sd");
        check(gen_active_sd, cs.generators.size(), "gen_active_sd");
        check(gen_reactive_sd, cs.generators.size(), "gen_reactive_sd");
        check(branch_resistance_sd, cs.branches.size(), "branch_resistance_sd");
        check(branch_reactance_sd, cs.branches.size(), "branch_reactance_sd");
        if (beta_sigma < 0.0) throw ValidationError("beta_sigma must be >= 0");
    }

    bool all_zero() const {
        return beta_sigma == 0.0 && bus_active_sd.isZero() && bus_reactive_sd.isZero() &&
               gen_active_sd.isZero() && gen_reactive_sd.isZero() &&
               branch_resistance_sd.isZero() && branch_reactance_sd.isZero();
    }

    ordered_json to_json() const {
        ordered_json j;
        j["schema"] = "gridstab-uncertainty-v1";
        j["beta_sigma"] = beta_sigma;
        auto vec = [](const Eigen::VectorXd& v) {
            return std::vector<double>(v.data(), v.data() + v.size());
        };
        j["bus_active_sd"] = vec(bus_active_sd);
        j["bus_reactive_sd"] = vec(bus_reactive_sd);
        j["gen_active_sd"] = vec(gen_active_sd);
        j["gen_reactive_sd"] = vec(gen_reactive_sd);
        j["branch_resistance_sd"] = vec(branch_resistance_sd);
        j["branch_reactance_sd"] = vec(branch_reactance_sd);
        return j;
    }

    static UncertaintySpec from_json(const ordered_json& j) {
        UncertaintySpec s;
        s.beta_sigma = j.value("beta_sigma", 0.0);
        auto vec = [&](const char* key) {
            auto v = j.at(key).get<std::vector<double>>();
            return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).eval();
        };
        s.bus_active_sd = vec("bus_active_sd");
        s.bus_reactive_sd = vec("bus_reactive_sd");
        s.gen_active_sd = vec("gen_active_sd");
        s.gen_reactive_sd = vec("gen_reactive_sd");
        s.branch_resistance_sd = vec("branch_resistance_sd");
        s.branch_reactance_sd = vec("branch_reactance_sd");
        return s;
    }
};

/// Per-parameter standard deviation of one unit in the last printed decimal
/// digit, taken from the precision captured at parse time (or, failing
/// that, from the shortest round-trip decimal form of the stored value).
inline UncertaintySpec default_uncertainty(const PowerSystemCase& cs) {
    UncertaintySpec spec;
    auto fill = [](Eigen::VectorXd& out, const std::vector<double>& parsed,
                   std::size_t count, auto value_of) {
        out.resize(static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i) {
            out[i] = parsed.empty() ? last_digit_sigma(value_of(i)) : parsed[i];
        }
    };
    fill(spec.bus_active_sd, cs.precision.bus_active_sd, cs.buses.size(),
         [&](std::size_t i) { return cs.buses[i].active_demand; });
    fill(spec.bus_reactive_sd, cs.precision.bus_reactive_sd, cs.buses.size(),
         [&](std::size_t i) { return cs.buses[i].reactive_demand; });
    fill(spec.gen_active_sd, cs.precision.gen_active_sd, cs.generators.size(),
         [&](std::size_t i) { return cs.generators[i].active_generation; });
    fill(spec.gen_reactive_sd, cs.precision.gen_reactive_sd, cs.generators.size(),
         [&](std::size_t i) { return cs.generators[i].reactive_generation; });
    fill(spec.branch_resistance_sd, cs.precision.branch_resistance_sd, cs.branches.size(),
         [&](std::size_t i) { return cs.branches[i].resistance; });
    fill(spec.branch_reactance_sd, cs.precision.branch_reactance_sd, cs.branches.size(),
         [&](std::size_t i) { return cs.branches[i].reactance; });
    return spec;
}

/// One perturbed realisation of the system: the raw parameters drawn about
/// their means, re-solved and re-reduced. A failed power flow flags the
/// instance instead of replacing it.
struct PerturbedInstance {
    std::uint64_t index = 0;
    PowerSystemCase perturbed;
    bool converged = false;
    std::optional<SteadyStateNetwork> network;
};

/// Draw instance j. Raw parameters are perturbed in a fixed canonical order
/// (bus demands, generator outputs, branch impedances) from the dedicated
/// system channel, so instance j is reproducible regardless of how many
/// other draws happened.
inline PerturbedInstance sample_instance(const PowerSystemCase& cs,
                                         const UncertaintySpec& spec,
                                         const SeededSampler& sampler,
                                         std::uint64_t j,
                                         double pf_tolerance = 1e-8,
                                         int pf_max_iterations = 50) {
    PerturbedInstance inst;
    inst.index = j;
    inst.perturbed = cs;
    Rng rng = sampler.stream(channel::system, j);
    auto& c = inst.perturbed;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        c.buses[i].active_demand += spec.bus_active_sd[i] * rng.normal();
        c.buses[i].reactive_demand += spec.bus_reactive_sd[i] * rng.normal();
    }
    for (std::size_t i = 0; i < c.generators.size(); ++i) {
        c.generators[i].active_generation += spec.gen_active_sd[i] * rng.normal();
        c.generators[i].reactive_generation += spec.gen_reactive_sd[i] * rng.normal();
    }
    for (std::size_t i = 0; i < c.branches.size(); ++i) {
        c.branches[i].resistance += spec.branch_resistance_sd[i] * rng.normal();
        c.branches[i].reactance += spec.branch_reactance_sd[i] * rng.normal();
    }
    try {
        const PowerFlowSolution sol = solve_power_flow(c, pf_tolerance, pf_max_iterations);
        if (!sol.converged) return inst;
        inst.network = reduce_network(c, sol);
        inst.converged = true;
    } catch (const ValidationError&) {
        // e.g. a perturbed branch impedance collapsing to zero
    } catch (const NumericalError&) {
    }
    return inst;
}

/// Independent component-wise Normal(mean_i, sigma) draw for the damping
/// vector. No truncation: negative draws are legal Jacobian inputs.
inline Eigen::VectorXd sample_beta(const Eigen::VectorXd& mean_beta, double sigma,
                                   const SeededSampler& sampler, std::uint64_t j) {
    if (sigma < 0.0) throw ValidationError("sigma must be >= 0");
    Rng rng = sampler.stream(channel::beta_noise, j);
    Eigen::VectorXd out = mean_beta;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal();
    return out;
}

/// Uniform point on the radius-sphere: a normalised Gaussian vector.
inline Eigen::VectorXd hypersphere_step(int n, double radius, Rng& rng) {
    if (n < 1 || radius <= 0.0) {
        throw ValidationError("hypersphere_step needs n >= 1 and radius > 0");
    }
    while (true) {
        Eigen::VectorXd g = rng.normal_vector(n);
        const double norm = g.norm();
        if (norm > 0.0) return (radius / norm) * g;
    }
}

/// Independent Normal(0, sigma_step) components; the alternative neighbour
/// move.
inline Eigen::VectorXd gaussian_step(int n, double sigma_step, Rng& rng) {
    if (n < 1 || sigma_step < 0.0) {
        throw ValidationError("gaussian_step needs n >= 1 and sigma_step >= 0");
    }
    return rng.normal_vector(n, sigma_step);
}

}  // namespace gridstab

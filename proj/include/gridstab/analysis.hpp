#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "gridstab/case_model.hpp"
#include "gridstab/effective_network.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/optimize.hpp"
#include "gridstab/parallel.hpp"
#include "gridstab/rng.hpp"
#include "gridstab/stability.hpp"
#include "gridstab/uncertainty.hpp"

namespace gridstab {

enum class TestChannels { full, beta_only, y_only };

inline std::string to_string(TestChannels c) {
    switch (c) {
        case TestChannels::full: return "full";
        case TestChannels::beta_only: return "beta";
        default: return "y";
    }
}

inline TestChannels channels_from_string(const std::string& s) {
    if (s == "full") return TestChannels::full;
    if (s == "beta" || s == "beta_only") return TestChannels::beta_only;
    if (s == "y" || s == "y_only") return TestChannels::y_only;
    throw ValidationError("unknown channel selection '" + s + "'");
}

/// Monte Carlo lambda_L samples for one plan under one noise configuration.
/// samples holds converged draws in draw order; non-convergent draws are
/// counted, never silently resampled.
struct LyapunovDistribution {
    std::vector<double> samples;       // 1/s, in draw order
    std::uint64_t requested = 0;
    std::uint64_t non_convergent = 0;
    ordered_json provenance = ordered_json::object();

    std::vector<double> sorted() const {
        std::vector<double> s = samples;
        std::sort(s.begin(), s.end());
        return s;
    }
};

/// Monte Carlo test of a damping plan: per draw, sample the enabled noise
/// channels (damping noise and/or raw-parameter re-instancing), assemble the
/// Jacobian and record lambda_L. Draw j is seed-indexed, so results are
/// independent of jobs.
inline LyapunovDistribution test_plan(const PowerSystemCase& cs,
                                      const SteadyStateNetwork& base_net,
                                      const DampingPlan& plan,
                                      const UncertaintySpec& spec,
                                      TestChannels channels, std::uint64_t draws,
                                      const SeededSampler& sampler, int jobs = 1) {
    if (draws < 1) throw ValidationError("draws must be >= 1");
    const Eigen::VectorXd means = plan.expand(base_net.n);
    const bool use_beta = channels != TestChannels::y_only;
    const bool use_y = channels != TestChannels::beta_only;

    std::vector<double> slots(draws, std::numeric_limits<double>::quiet_NaN());
    parallel_for(draws, jobs, [&](std::uint64_t j) {
        Eigen::VectorXd beta = means;
        if (use_beta) beta = sample_beta(means, spec.beta_sigma, sampler, j);
        if (use_y) {
            const PerturbedInstance inst = sample_instance(cs, spec, sampler, j);
            if (!inst.converged) return;  // slot stays NaN
            slots[j] = lyapunov_exponent(assemble_jacobian(*inst.network, beta)).lambda;
        } else {
            slots[j] = lyapunov_exponent(assemble_jacobian(base_net, beta)).lambda;
        }
    });

    LyapunovDistribution dist;
    dist.requested = draws;
    dist.samples.reserve(draws);
    for (double v : slots) {
        if (std::isnan(v)) {
            ++dist.non_convergent;
        } else {
            dist.samples.push_back(v);
        }
    }
    if (dist.samples.empty()) {
        throw NumericalError("all " + std::to_string(draws) + " draws failed to converge");
    }
    dist.provenance["plan"] = plan.to_json();
    dist.provenance["channels"] = to_string(channels);
    dist.provenance["sigma"] = spec.beta_sigma;
    dist.provenance["draws"] = draws;
    dist.provenance["seed"] = sampler.root_seed();
    return dist;
}

struct QuantileCurve {
    std::vector<double> percents;
    std::vector<double> values;  // 1/s, non-decreasing
};

/// Empirical quantile by linear interpolation between order statistics
/// (rank h = (n-1) p/100 interpolated between adjacent ranks).
inline double empirical_quantile(const std::vector<double>& sorted, double percent) {
    if (sorted.empty()) throw ValidationError("empty sample set");
    if (percent <= 0.0) return sorted.front();
    if (percent >= 100.0) return sorted.back();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * percent / 100.0;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
    const double w = h - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

inline QuantileCurve quantile_curve(const LyapunovDistribution& dist,
                                    const std::vector<double>& grid) {
    if (dist.samples.empty()) throw ValidationError("empty sample set");
    const std::vector<double> sorted = dist.sorted();
    QuantileCurve curve;
    curve.percents = grid;
    curve.values.reserve(grid.size());
    for (double p : grid) curve.values.push_back(empirical_quantile(sorted, p));
    return curve;
}

struct CriticalLambda {
    double percent = 0.0;
    double lambda_c = 0.0;  // 1/s
};

/// Worst-reasonable-case values: the empirical p-quantiles of the
/// distribution for operator-chosen percentages.
inline std::vector<CriticalLambda> critical_lambda(
    const LyapunovDistribution& dist,
    const std::vector<double>& percents = {95, 96, 97, 98, 99}) {
    if (dist.samples.size() < 100) {
        throw ValidationError("critical lambda needs at least 100 samples, got " +
                              std::to_string(dist.samples.size()));
    }
    const std::vector<double> sorted = dist.sorted();
    std::vector<CriticalLambda> out;
    out.reserve(percents.size());
    for (double p : percents) out.push_back({p, empirical_quantile(sorted, p)});
    return out;
}

struct HistogramBin {
    double center = 0.0;
    std::uint64_t count = 0;
};

inline std::vector<HistogramBin> histogram(const LyapunovDistribution& dist,
                                           double bin_width) {
    if (bin_width <= 0.0) throw ValidationError("bin width must be > 0");
    if (dist.samples.empty()) return {};
    const double lo = *std::min_element(dist.samples.begin(), dist.samples.end());
    const double anchor = std::floor(lo / bin_width) * bin_width;
    std::map<std::int64_t, std::uint64_t> counts;
    for (double v : dist.samples) {
        auto idx = static_cast<std::int64_t>(std::floor((v - anchor) / bin_width));
        ++counts[idx];
    }
    std::vector<HistogramBin> bins;
    bins.reserve(counts.size());
    for (const auto& [idx, count] : counts) {
        bins.push_back({anchor + (static_cast<double>(idx) + 0.5) * bin_width, count});
    }
    return bins;
}

// ---------------------------------------------------------------------------
// Reports

/// Machine-readable comparison of named quantile curves and critical-lambda
/// sets; all curves must share one quantile grid.
inline ordered_json compare_report(
    const std::vector<std::pair<std::string, QuantileCurve>>& curves,
    const std::vector<std::pair<std::string, std::vector<CriticalLambda>>>& criticals,
    const ordered_json& metadata = ordered_json::object()) {
    ordered_json j;
    j["schema"] = "gridstab-report-v1";
    if (!metadata.empty()) j["metadata"] = metadata;
    if (!curves.empty()) {
        const auto& grid = curves.front().second.percents;
        for (const auto& [name, curve] : curves) {
            if (curve.percents != grid) {
                throw ValidationError("quantile grid mismatch for curve '" + name + "'");
            }
        }
        j["quantile_grid"] = grid;
        j["curves"] = ordered_json::object();
        for (const auto& [name, curve] : curves) j["curves"][name] = curve.values;
    }
    if (!criticals.empty()) {
        j["critical_lambda"] = ordered_json::object();
        for (const auto& [name, rows] : criticals) {
            ordered_json block = ordered_json::object();
            for (const auto& row : rows) {
                std::ostringstream key;
                key << row.percent;
                block[key.str()] = row.lambda_c;
            }
            j["critical_lambda"][name] = block;
        }
    }
    return j;
}

// CSV writers (plot-ready artifact outputs)

inline std::string distribution_csv(const LyapunovDistribution& dist) {
    std::ostringstream out;
    out.precision(17);
    out << "lambda\n";
    for (double v : dist.samples) out << v << "\n";
    return out.str();
}

inline std::string quantiles_csv(const QuantileCurve& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "percent,lambda\n";
    for (std::size_t i = 0; i < curve.percents.size(); ++i) {
        out << curve.percents[i] << "," << curve.values[i] << "\n";
    }
    return out.str();
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins) {
    std::ostringstream out;
    out.precision(17);
    out << "bin_center,count\n";
    for (const auto& b : bins) out << b.center << "," << b.count << "\n";
    return out.str();
}

}  // namespace gridstab

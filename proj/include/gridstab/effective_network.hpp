#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridstab/case_model.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/power_flow.hpp"

namespace gridstab {

/// The all-generator effective network: per-generator drive power alpha_i,
/// pairwise couplings c_ik with phase shifts gamma_ik, synchronous-state
/// angles delta*_i and effective damping beta_i. Everything the swing-
/// equation phase dynamics and its Jacobian consume lives here.
struct SteadyStateNetwork {
    int n = 0;
    Eigen::VectorXd alpha;        // 1/s^2
    Eigen::MatrixXd coupling;     // c_ik >= 0, zero diagonal, 1/s^2
    Eigen::MatrixXd phase_shift;  // gamma_ik, radians
    Eigen::VectorXd delta_star;   // radians
    Eigen::VectorXd beta;         // 1/s
    Eigen::VectorXd internal_emf; // p.u., provenance
    double omega_ref = 2.0 * std::numbers::pi * 60.0;  // rad/s

    ordered_json to_json() const {
        ordered_json j;
        j["schema"] = "gridstab-network-v1";
        j["n"] = n;
        j["omega_ref"] = omega_ref;
        auto vec = [](const Eigen::VectorXd& v) {
            return std::vector<double>(v.data(), v.data() + v.size());
        };
        j["alpha"] = vec(alpha);
        j["delta_star"] = vec(delta_star);
        j["beta"] = vec(beta);
        j["internal_emf"] = vec(internal_emf);
        auto mat = [](const Eigen::MatrixXd& m) {
            std::vector<std::vector<double>> rows;
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                rows.emplace_back(m.row(i).begin(), m.row(i).end());
            }
            return rows;
        };
        j["coupling"] = mat(coupling);
        j["phase_shift"] = mat(phase_shift);
        return j;
    }

    static SteadyStateNetwork from_json(const ordered_json& j) {
        SteadyStateNetwork net;
        net.n = j.at("n").get<int>();
        net.omega_ref = j.at("omega_ref").get<double>();
        auto vec = [&](const char* key) {
            auto v = j.at(key).get<std::vector<double>>();
            return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).eval();
        };
        net.alpha = vec("alpha");
        net.delta_star = vec("delta_star");
        net.beta = vec("beta");
        net.internal_emf = vec("internal_emf");
        auto mat = [&](const char* key) {
            auto rows = j.at(key).get<std::vector<std::vector<double>>>();
            Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
            }
            return m;
        };
        net.coupling = mat("coupling");
        net.phase_shift = mat("phase_shift");
        return net;
    }
};

/// Reduce a solved case to the generator effective network:
///  1. loads become constant shunt admittances at the solved voltages,
///  2. each generator gains an internal node behind its transient
///     reactance with EMF E_i from terminal conditions,
///  3. Kron reduction eliminates every non-internal node,
///  4. couplings, phase shifts and drive powers come from the reduced
///     admittance, normalised by omega_ref / (2 H_i).
inline SteadyStateNetwork reduce_network(const PowerSystemCase& cs,
                                         const PowerFlowSolution& sol) {
    if (!sol.converged) {
        throw NumericalError("reduce_network requires a converged power flow");
    }
    const int nb = static_cast<int>(cs.buses.size());
    const int ng = static_cast<int>(cs.generators.size());
    for (const auto& g : cs.generators) {
        if (!g.has_dynamics()) {
            throw ValidationError("generator at bus " + std::to_string(g.bus) +
                                  " is missing dynamic parameters");
        }
        if (g.transient_reactance == 0.0) {
            throw ValidationError("generator at bus " + std::to_string(g.bus) +
                                  " has zero transient reactance");
        }
    }

    Eigen::MatrixXcd Ybus = build_admittance(cs);
    const Eigen::VectorXcd inj = bus_injections(cs, sol);

    Eigen::VectorXcd V(nb);
    for (int i = 0; i < nb; ++i) {
        V[i] = std::polar(sol.voltage_magnitude[i], sol.voltage_angle[i]);
    }
    // constant-impedance load conversion at the solved operating point
    for (int i = 0; i < nb; ++i) {
        const std::complex<double> sload(cs.buses[i].active_demand / cs.base_mva,
                                         cs.buses[i].reactive_demand / cs.base_mva);
        if (sload != 0.0) {
            Ybus(i, i) += std::conj(sload) / std::norm(V[i]);
        }
    }

    Eigen::MatrixXcd Ygg = Eigen::MatrixXcd::Zero(ng, ng);
    Eigen::MatrixXcd Ygb = Eigen::MatrixXcd::Zero(ng, nb);
    Eigen::VectorXcd emf(ng);
    Eigen::VectorXd pmech(ng);
    for (int gi = 0; gi < ng; ++gi) {
        const auto& g = cs.generators[gi];
        const int i = cs.bus_position(g.bus);
        const std::complex<double> yg = 1.0 / std::complex<double>(0.0, g.transient_reactance);
        Ygg(gi, gi) += yg;
        Ybus(i, i) += yg;
        Ygb(gi, i) -= yg;
        // generator terminal output = solved net injection plus the local load
        const std::complex<double> sload(cs.buses[i].active_demand / cs.base_mva,
                                         cs.buses[i].reactive_demand / cs.base_mva);
        const std::complex<double> sgen = inj[i] + sload;
        const std::complex<double> igen = std::conj(sgen / V[i]);
        emf[gi] = V[i] + std::complex<double>(0.0, g.transient_reactance) * igen;
        pmech[gi] = (emf[gi] * std::conj(igen)).real();
    }

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Ybus);
    const Eigen::MatrixXcd X = lu.solve(Ygb.transpose());  // Ybb^-1 Ybg
    if (!X.allFinite()) {
        throw NumericalError("singular interior submatrix in Kron reduction");
    }
    const Eigen::MatrixXcd Yred = Ygg - Ygb * X;

    SteadyStateNetwork net;
    net.n = ng;
    net.omega_ref = 2.0 * std::numbers::pi * cs.nominal_frequency_hz;
    net.alpha.resize(ng);
    net.coupling = Eigen::MatrixXd::Zero(ng, ng);
    net.phase_shift = Eigen::MatrixXd::Zero(ng, ng);
    net.delta_star.resize(ng);
    net.beta.resize(ng);
    net.internal_emf.resize(ng);
    for (int i = 0; i < ng; ++i) {
        const double hi2 = 2.0 * cs.generators[i].inertia;
        const double Ei = std::abs(emf[i]);
        net.internal_emf[i] = Ei;
        net.delta_star[i] = std::arg(emf[i]);
        net.beta[i] = cs.generators[i].effective_damping();
        net.alpha[i] = net.omega_ref * (pmech[i] - Ei * Ei * Yred(i, i).real()) / hi2;
        for (int k = 0; k < ng; ++k) {
            if (k == i) continue;
            const double Ek = std::abs(emf[k]);
            net.coupling(i, k) = net.omega_ref * Ei * Ek * std::abs(Yred(i, k)) / hi2;
            // gamma fixed so that a lossless network has gamma = 0 exactly
            net.phase_shift(i, k) = std::arg(Yred(i, k)) - std::numbers::pi / 2.0;
        }
    }
    return net;
}

/// Per-generator imbalance of the synchronous fixed point:
/// residual_i = alpha_i - sum_k c_ik sin(delta*_i - delta*_k - gamma_ik).
inline Eigen::VectorXd steady_state_residual(const SteadyStateNetwork& net) {
    Eigen::VectorXd r = net.alpha;
    for (int i = 0; i < net.n; ++i) {
        for (int k = 0; k < net.n; ++k) {
            if (k == i) continue;
            r[i] -= net.coupling(i, k) *
                    std::sin(net.delta_star[i] - net.delta_star[k] - net.phase_shift(i, k));
        }
    }
    return r;
}

}  // namespace gridstab

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridstab/case_model.hpp"
#include "gridstab/errors.hpp"

namespace gridstab {

/// Standard bus-admittance assembly from branch impedances, charging, taps
/// and shunts. Row/column order follows the case's bus order.
inline Eigen::MatrixXcd build_admittance(const PowerSystemCase& cs) {
    const int n = static_cast<int>(cs.buses.size());
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t bi = 0; bi < cs.branches.size(); ++bi) {
        const auto& br = cs.branches[bi];
        if (br.resistance == 0.0 && br.reactance == 0.0) {
            throw ValidationError("branch " + std::to_string(br.from_bus) + "-" +
                                  std::to_string(br.to_bus) + " has zero impedance");
        }
        const int f = cs.bus_position(br.from_bus);
        const int t = cs.bus_position(br.to_bus);
        const std::complex<double> ys = 1.0 / std::complex<double>(br.resistance, br.reactance);
        const std::complex<double> ych(0.0, br.line_charging / 2.0);
        const std::complex<double> tap = std::polar(br.tap_ratio, br.phase_shift);
        Y(f, f) += (ys + ych) / (br.tap_ratio * br.tap_ratio);
        Y(f, t) += -ys / std::conj(tap);
        Y(t, f) += -ys / tap;
        Y(t, t) += ys + ych;
    }
    for (int i = 0; i < n; ++i) {
        Y(i, i) += std::complex<double>(cs.buses[i].shunt_conductance,
                                        cs.buses[i].shunt_susceptance);
    }
    return Y;
}

enum class PowerFlowFailure { none, max_iterations, singular_jacobian };

struct PowerFlowSolution {
    Eigen::VectorXd voltage_magnitude;  // p.u.
    Eigen::VectorXd voltage_angle;      // radians, slack at 0
    double slack_active_injection = 0.0;  // MW produced by the slack generator
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;  // p.u. power
    PowerFlowFailure failure = PowerFlowFailure::none;
    std::vector<double> mismatch_trace;  // max mismatch before each update

    ordered_json to_json() const {
        ordered_json j;
        j["converged"] = converged;
        j["iterations"] = iterations;
        j["max_mismatch"] = max_mismatch;
        j["slack_active_injection"] = slack_active_injection;
        j["voltage_magnitude"] = std::vector<double>(
            voltage_magnitude.data(), voltage_magnitude.data() + voltage_magnitude.size());
        j["voltage_angle"] = std::vector<double>(
            voltage_angle.data(), voltage_angle.data() + voltage_angle.size());
        return j;
    }
};

/// Newton-Raphson on the polar mismatch equations, flat start, PV buses held
/// at their setpoints (no reactive-limit switching). Non-convergence and a
/// singular mismatch Jacobian are reported in the result, not thrown, so
/// Monte Carlo callers can count failed instances.
inline PowerFlowSolution solve_power_flow(const PowerSystemCase& cs,
                                          double tolerance = 1e-8,
                                          int max_iterations = 50) {
    const int n = static_cast<int>(cs.buses.size());
    const Eigen::MatrixXcd Y = build_admittance(cs);
    const Eigen::MatrixXd G = Y.real();
    const Eigen::MatrixXd B = Y.imag();

    Eigen::VectorXd pspec = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd qspec = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd vset = Eigen::VectorXd::Ones(n);
    for (int i = 0; i < n; ++i) {
        pspec[i] -= cs.buses[i].active_demand / cs.base_mva;
        qspec[i] -= cs.buses[i].reactive_demand / cs.base_mva;
        if (cs.buses[i].kind != BusKind::pq) vset[i] = cs.buses[i].voltage_setpoint;
    }
    int slack = -1;
    for (const auto& g : cs.generators) {
        const int i = cs.bus_position(g.bus);
        pspec[i] += g.active_generation / cs.base_mva;
        vset[i] = g.voltage_setpoint;
    }
    for (int i = 0; i < n; ++i) {
        if (cs.buses[i].kind == BusKind::slack) slack = i;
    }
    if (slack < 0) throw ValidationError("no slack bus");

    std::vector<int> ang;  // PV + PQ positions (angle unknowns)
    std::vector<int> pq;   // PQ positions (magnitude unknowns)
    for (int i = 0; i < n; ++i) {
        if (cs.buses[i].kind == BusKind::pv) ang.push_back(i);
    }
    for (int i = 0; i < n; ++i) {
        if (cs.buses[i].kind == BusKind::pq) {
            ang.push_back(i);
            pq.push_back(i);
        }
    }
    const int na = static_cast<int>(ang.size());
    const int nq = static_cast<int>(pq.size());

    Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (cs.buses[i].kind != BusKind::pq) vm[i] = vset[i];
    }

    PowerFlowSolution sol;
    Eigen::VectorXd pcal(n), qcal(n);
    auto calc_injections = [&] {
        for (int i = 0; i < n; ++i) {
            double p = 0.0, q = 0.0;
            for (int k = 0; k < n; ++k) {
                const double d = va[i] - va[k];
                const double cg = G(i, k) * std::cos(d) + B(i, k) * std::sin(d);
                const double sb = G(i, k) * std::sin(d) - B(i, k) * std::cos(d);
                p += vm[i] * vm[k] * cg;
                q += vm[i] * vm[k] * sb;
            }
            pcal[i] = p;
            qcal[i] = q;
        }
    };

    for (int it = 0; it <= max_iterations; ++it) {
        calc_injections();
        double mx = 0.0;
        Eigen::VectorXd mis(na + nq);
        for (int a = 0; a < na; ++a) mis[a] = pspec[ang[a]] - pcal[ang[a]];
        for (int b = 0; b < nq; ++b) mis[na + b] = qspec[pq[b]] - qcal[pq[b]];
        mx = mis.size() > 0 ? mis.cwiseAbs().maxCoeff() : 0.0;
        sol.mismatch_trace.push_back(mx);
        if (mx <= tolerance) {
            sol.converged = true;
            sol.iterations = it;
            sol.max_mismatch = mx;
            break;
        }
        if (it == max_iterations) {
            sol.iterations = it;
            sol.max_mismatch = mx;
            sol.failure = PowerFlowFailure::max_iterations;
            break;
        }

        Eigen::MatrixXd J(na + nq, na + nq);
        for (int a = 0; a < na; ++a) {
            const int i = ang[a];
            for (int b = 0; b < na; ++b) {
                const int k = ang[b];
                if (i == k) {
                    J(a, b) = -qcal[i] - B(i, i) * vm[i] * vm[i];
                } else {
                    const double d = va[i] - va[k];
                    J(a, b) = vm[i] * vm[k] * (G(i, k) * std::sin(d) - B(i, k) * std::cos(d));
                }
            }
            for (int b = 0; b < nq; ++b) {
                const int k = pq[b];
                if (i == k) {
                    J(a, na + b) = pcal[i] / vm[i] + G(i, i) * vm[i];
                } else {
                    const double d = va[i] - va[k];
                    J(a, na + b) = vm[i] * (G(i, k) * std::cos(d) + B(i, k) * std::sin(d));
                }
            }
        }
        for (int a = 0; a < nq; ++a) {
            const int i = pq[a];
            for (int b = 0; b < na; ++b) {
                const int k = ang[b];
                if (i == k) {
                    J(na + a, b) = pcal[i] - G(i, i) * vm[i] * vm[i];
                } else {
                    const double d = va[i] - va[k];
                    J(na + a, b) = -vm[i] * vm[k] * (G(i, k) * std::cos(d) + B(i, k) * std::sin(d));
                }
            }
            for (int b = 0; b < nq; ++b) {
                const int k = pq[b];
                if (i == k) {
                    J(na + a, na + b) = qcal[i] / vm[i] - B(i, i) * vm[i];
                } else {
                    const double d = va[i] - va[k];
                    J(na + a, na + b) = vm[i] * (G(i, k) * std::sin(d) - B(i, k) * std::cos(d));
                }
            }
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
        const Eigen::VectorXd dx = lu.solve(mis);
        if (!dx.allFinite() || (J * dx - mis).cwiseAbs().maxCoeff() > 1e-6 * (1.0 + mis.cwiseAbs().maxCoeff())) {
            sol.iterations = it;
            sol.max_mismatch = mx;
            sol.failure = PowerFlowFailure::singular_jacobian;
            break;
        }
        for (int a = 0; a < na; ++a) va[ang[a]] += dx[a];
        for (int b = 0; b < nq; ++b) vm[pq[b]] += dx[na + b];
    }

    // reference angle at the slack bus
    const double ref = va[slack];
    for (int i = 0; i < n; ++i) va[i] -= ref;

    sol.voltage_magnitude = vm;
    sol.voltage_angle = va;
    if (sol.converged) {
        calc_injections();
        sol.slack_active_injection =
            (pcal[slack] + cs.buses[slack].active_demand / cs.base_mva) * cs.base_mva;
    }
    return sol;
}

/// Net complex power injection at every bus for a solved state.
inline Eigen::VectorXcd bus_injections(const PowerSystemCase& cs,
                                       const PowerFlowSolution& sol) {
    const Eigen::MatrixXcd Y = build_admittance(cs);
    const int n = static_cast<int>(cs.buses.size());
    Eigen::VectorXcd V(n);
    for (int i = 0; i < n; ++i) {
        V[i] = std::polar(sol.voltage_magnitude[i], sol.voltage_angle[i]);
    }
    return V.cwiseProduct((Y * V).conjugate());
}

}  // namespace gridstab

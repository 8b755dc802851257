#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gridstab/effective_network.hpp"
#include "gridstab/errors.hpp"

namespace gridstab {

/// Linearisation of the phase dynamics about the synchronous state.
/// interaction holds P with P_ik = -c_ik cos(delta*_i - delta*_k - gamma_ik)
/// off the diagonal and zero row sums; damping holds the beta vector.
struct StabilityJacobian {
    int n = 0;
    Eigen::MatrixXd interaction;  // P, 1/s^2
    Eigen::VectorXd damping;      // diag(B), 1/s

    /// The 2n x 2n block matrix [[0, I], [-P, -B]].
    Eigen::MatrixXd full() const {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
        J.topRightCorner(n, n).setIdentity();
        J.bottomLeftCorner(n, n) = -interaction;
        J.bottomRightCorner(n, n) = -damping.asDiagonal().toDenseMatrix();
        return J;
    }
};

inline StabilityJacobian assemble_jacobian(const SteadyStateNetwork& net,
                                           const Eigen::VectorXd& beta) {
    if (beta.size() != net.n) {
        throw ValidationError("beta length " + std::to_string(beta.size()) +
                              " does not match generator count " + std::to_string(net.n));
    }
    StabilityJacobian jac;
    jac.n = net.n;
    jac.damping = beta;
    jac.interaction = Eigen::MatrixXd::Zero(net.n, net.n);
    for (int i = 0; i < net.n; ++i) {
        double diag = 0.0;
        for (int k = 0; k < net.n; ++k) {
            if (k == i) continue;
            const double p = -net.coupling(i, k) *
                             std::cos(net.delta_star[i] - net.delta_star[k] -
                                      net.phase_shift(i, k));
            jac.interaction(i, k) = p;
            diag -= p;
        }
        jac.interaction(i, i) = diag;
    }
    return jac;
}

struct LyapunovResult {
    double lambda = 0.0;               // 1/s
    Eigen::VectorXcd spectrum;         // all 2n eigenvalues
    double zero_mode_magnitude = 0.0;  // |lambda| of the excluded eigenvalue
};

/// Largest real part of the Jacobian spectrum after excluding the single
/// rotational zero mode. The zero mode is identified by magnitude, not sort
/// order; anything but exactly one candidate signals a degenerate network.
inline LyapunovResult lyapunov_exponent(const StabilityJacobian& jac,
                                        double zero_mode_tolerance = 1e-8) {
    const Eigen::MatrixXd J = jac.full();
    Eigen::EigenSolver<Eigen::MatrixXd> solver(J, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eigensolver failed on the stability Jacobian");
    }
    LyapunovResult result;
    result.spectrum = solver.eigenvalues();
    const double tol = zero_mode_tolerance * J.norm();
    int zero_index = -1;
    int zero_count = 0;
    for (Eigen::Index i = 0; i < result.spectrum.size(); ++i) {
        if (std::abs(result.spectrum[i]) <= tol) {
            ++zero_count;
            zero_index = static_cast<int>(i);
        }
    }
    if (zero_count != 1) {
        throw NumericalError("expected exactly one zero mode, found " +
                             std::to_string(zero_count) +
                             " (degenerate or disconnected network)");
    }
    result.zero_mode_magnitude = std::abs(result.spectrum[zero_index]);
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < result.spectrum.size(); ++i) {
        if (static_cast<int>(i) == zero_index) continue;
        mx = std::max(mx, result.spectrum[i].real());
    }
    result.lambda = mx;
    return result;
}

/// Independent spectral route: the eigenvalues of the phase dynamics are the
/// roots of det(lambda^2 I + lambda B + P) = 0. Solved here through the
/// first companion form [[-B, -P], [I, 0]] with a complex Schur
/// decomposition, sharing no assembly or solver code with
/// lyapunov_exponent's path.
inline Eigen::VectorXcd qep_spectrum(const SteadyStateNetwork& net,
                                     const Eigen::VectorXd& beta) {
    if (beta.size() != net.n) {
        throw ValidationError("beta length does not match generator count");
    }
    const int n = net.n;
    Eigen::MatrixXcd K = Eigen::MatrixXcd::Zero(n, n);  // stiffness block P
    for (int i = 0; i < n; ++i) {
        double diag = 0.0;
        for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            const double p = -net.coupling(i, k) *
                             std::cos(net.delta_star[i] - net.delta_star[k] -
                                      net.phase_shift(i, k));
            K(i, k) = p;
            diag -= p;
        }
        K(i, i) = diag;
    }
    Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) companion(i, i) = -beta[i];
    companion.topRightCorner(n, n) = -K;
    companion.bottomLeftCorner(n, n).setIdentity();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(companion,
                                                       /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eigensolver failed on the companion matrix");
    }
    return solver.eigenvalues();
}

/// Sort complex values by (real, imag); used when comparing spectra.
inline std::vector<std::complex<double>> sorted_spectrum(const Eigen::VectorXcd& v) {
    std::vector<std::complex<double>> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return out;
}

}  // namespace gridstab

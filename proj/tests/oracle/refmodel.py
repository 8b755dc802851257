"""Independent reference model for the grid-stability pipeline.

Pure numpy implementation of the MATPOWER-subset parser, AC power flow,
effective-network reduction and Lyapunov-exponent computation.  Used only
to produce the golden files under tests/golden/ and to sanity-check the
C++ implementation; it deliberately shares no code with it.
"""

import cmath
import math
import re

import numpy as np

OMEGA_R = 2.0 * math.pi * 60.0


# ---------------------------------------------------------------------------
# MATPOWER subset parsing


def _matrix(text, name):
    m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, text, re.S)
    if m is None:
        raise ValueError("matrix %s not found" % name)
    rows = []
    raw_rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";")
        if not line:
            continue
        toks = line.split()
        rows.append([float(t) for t in toks])
        raw_rows.append(toks)
    return np.array(rows), raw_rows


def last_digit_sigma(token):
    """One unit in the last decimal place of the printed token; 0 for zero."""
    if float(token) == 0.0:
        return 0.0
    if "e" in token or "E" in token:
        mant, exp = re.split("[eE]", token)
        return last_digit_sigma(mant) * 10.0 ** float(exp)
    if "." in token:
        return 10.0 ** -(len(token) - token.index(".") - 1)
    return 1.0


class Case:
    def __init__(self, path):
        text = open(path).read()
        m = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;", text)
        self.base_mva = float(m.group(1))
        self.bus, self.bus_raw = _matrix(text, "bus")
        self.gen, self.gen_raw = _matrix(text, "gen")
        self.branch, self.branch_raw = _matrix(text, "branch")
        self.freq = 60.0
        # internal indices are positions; bus ids mapped to positions
        self.bus_pos = {int(b[0]): i for i, b in enumerate(self.bus)}

    def copy(self):
        import copy

        return copy.deepcopy(self)


def load_dynamics(path):
    rows = {}
    for line in open(path):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("gen_index"):
            continue
        idx, H, D, xdp = line.split(",")
        rows[int(idx)] = (float(H), float(D), float(xdp))
    n = len(rows)
    H = np.array([rows[i + 1][0] for i in range(n)])
    D = np.array([rows[i + 1][1] for i in range(n)])
    xdp = np.array([rows[i + 1][2] for i in range(n)])
    return H, D, xdp


# ---------------------------------------------------------------------------
# Power flow


def build_ybus(case):
    n = len(case.bus)
    Y = np.zeros((n, n), dtype=complex)
    for br in case.branch:
        f = case.bus_pos[int(br[0])]
        t = case.bus_pos[int(br[1])]
        r, x, b = br[2], br[3], br[4]
        tap = br[8] if br[8] != 0 else 1.0
        shift = math.radians(br[9])
        ys = 1.0 / complex(r, x)
        ybr = complex(0, b / 2.0)
        tcplx = tap * cmath.exp(1j * shift)
        Y[f, f] += (ys + ybr) / (tap * tap)
        Y[f, t] += -ys / tcplx.conjugate()
        Y[t, f] += -ys / tcplx
        Y[t, t] += ys + ybr
    for i, bus in enumerate(case.bus):
        Y[i, i] += complex(bus[4], bus[5]) / case.base_mva
    return Y


def solve_pf(case, tol=1e-10, max_iter=50):
    n = len(case.bus)
    Y = build_ybus(case)
    kind = case.bus[:, 1].astype(int)  # 1 PQ, 2 PV, 3 slack
    Pd = case.bus[:, 2] / case.base_mva
    Qd = case.bus[:, 3] / case.base_mva
    Pg = np.zeros(n)
    Qg = np.zeros(n)
    Vset = np.ones(n)
    for g in case.gen:
        i = case.bus_pos[int(g[0])]
        Pg[i] += g[1] / case.base_mva
        Vset[i] = g[5]
    Pspec = Pg - Pd
    Qspec = -Qd  # PQ buses have no gen here
    V = np.ones(n)
    th = np.zeros(n)
    for i in range(n):
        if kind[i] != 1:
            V[i] = Vset[i]
    pv = [i for i in range(n) if kind[i] == 2]
    pq = [i for i in range(n) if kind[i] == 1]
    ang_idx = pv + pq
    for it in range(max_iter):
        Vc = V * np.exp(1j * th)
        S = Vc * np.conj(Y @ Vc)
        dP = Pspec - S.real
        dQ = Qspec - S.imag
        mis = np.concatenate([dP[ang_idx], dQ[pq]])
        if np.max(np.abs(mis)) < tol:
            return V, th, S, it, np.max(np.abs(mis))
        # Jacobian by standard polar formulas
        nang = len(ang_idx)
        npq = len(pq)
        J = np.zeros((nang + npq, nang + npq))
        G = Y.real
        B = Y.imag
        for a, i in enumerate(ang_idx):
            for b, j in enumerate(ang_idx):
                if i == j:
                    J[a, b] = -S[i].imag - B[i, i] * V[i] ** 2
                else:
                    J[a, b] = V[i] * V[j] * (
                        G[i, j] * math.sin(th[i] - th[j])
                        - B[i, j] * math.cos(th[i] - th[j])
                    )
            for b, j in enumerate(pq):
                if i == j:
                    J[a, nang + b] = S[i].real / V[i] + G[i, i] * V[i]
                else:
                    J[a, nang + b] = V[i] * (
                        G[i, j] * math.cos(th[i] - th[j])
                        + B[i, j] * math.sin(th[i] - th[j])
                    )
        for a, i in enumerate(pq):
            for b, j in enumerate(ang_idx):
                if i == j:
                    J[nang + a, b] = S[i].real - G[i, i] * V[i] ** 2
                else:
                    J[nang + a, b] = -V[i] * V[j] * (
                        G[i, j] * math.cos(th[i] - th[j])
                        + B[i, j] * math.sin(th[i] - th[j])
                    )
            for b, j in enumerate(pq):
                if i == j:
                    J[nang + a, nang + b] = S[i].imag / V[i] - B[i, i] * V[i]
                else:
                    J[nang + a, nang + b] = V[i] * (
                        G[i, j] * math.sin(th[i] - th[j])
                        - B[i, j] * math.cos(th[i] - th[j])
                    )
        dx = np.linalg.solve(J, mis)
        for a, i in enumerate(ang_idx):
            th[i] += dx[a]
        for b, j in enumerate(pq):
            V[j] += dx[nang + b]
    raise RuntimeError("power flow did not converge")


# ---------------------------------------------------------------------------
# Effective network


def reduce_network(case, H, xdp, V=None, th=None, S=None):
    if V is None:
        V, th, S, _, _ = solve_pf(case)
    nb = len(case.bus)
    ng = len(case.gen)
    Y = build_ybus(case)
    # constant-impedance loads from solved voltages
    for i, bus in enumerate(case.bus):
        Sl = complex(bus[2], bus[3]) / case.base_mva
        if Sl != 0:
            Y[i, i] += np.conj(Sl) / V[i] ** 2
    # augary: internal nodes appended
    A = np.zeros((nb + ng, nb + ng), dtype=complex)
    A[:nb, :nb] = Y
    E = np.zeros(ng, dtype=complex)
    Igen = np.zeros(ng, dtype=complex)
    Pm = np.zeros(ng)
    for gi, g in enumerate(case.gen):
        i = case.bus_pos[int(g[0])]
        yg = 1.0 / complex(0, xdp[gi])
        A[nb + gi, nb + gi] += yg
        A[i, i] += yg
        A[i, nb + gi] -= yg
        A[nb + gi, i] -= yg
        Vc = V[i] * cmath.exp(1j * th[i])
        # generator's own injection: solved bus injection plus local load
        Sbus = S[i]
        Sload = complex(case.bus[i][2], case.bus[i][3]) / case.base_mva
        Sg = Sbus + Sload
        Igen[gi] = np.conj(Sg / Vc)
        E[gi] = Vc + complex(0, xdp[gi]) * Igen[gi]
        Pm[gi] = (E[gi] * np.conj(Igen[gi])).real
    Ybb = A[:nb, :nb]
    Ybg = A[:nb, nb:]
    Ygb = A[nb:, :nb]
    Ygg = A[nb:, nb:]
    Yred = Ygg - Ygb @ np.linalg.solve(Ybb, Ybg)
    Em = np.abs(E)
    delta = np.angle(E)
    c = np.zeros((ng, ng))
    gam = np.zeros((ng, ng))
    for i in range(ng):
        for k in range(ng):
            if i == k:
                continue
            c[i, k] = OMEGA_R * Em[i] * Em[k] * abs(Yred[i, k]) / (2 * H[i])
            gam[i, k] = cmath.phase(Yred[i, k]) - math.pi / 2
    alpha = OMEGA_R * (Pm - Em**2 * Yred.diagonal().real) / (2 * H)
    return alpha, c, gam, delta, Em


def residual(alpha, c, gam, delta):
    n = len(alpha)
    r = alpha.copy()
    for i in range(n):
        for k in range(n):
            if k != i:
                r[i] -= c[i, k] * math.sin(delta[i] - delta[k] - gam[i, k])
    return r


def lyapunov(alpha, c, gam, delta, beta, ztol_rel=1e-8):
    n = len(alpha)
    P = np.zeros((n, n))
    for i in range(n):
        for k in range(n):
            if i != k:
                P[i, k] = -c[i, k] * math.cos(delta[i] - delta[k] - gam[i, k])
    for i in range(n):
        P[i, i] = -(P[i, :].sum() - P[i, i])
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -P
    J[n:, n:] = -np.diag(beta)
    ev = np.linalg.eigvals(J)
    tol = ztol_rel * np.linalg.norm(J)
    zero = [e for e in ev if abs(e) <= tol]
    if len(zero) != 1:
        raise RuntimeError("zero-mode count %d" % len(zero))
    rest = [e for e in ev if abs(e) > tol]
    return max(e.real for e in rest)

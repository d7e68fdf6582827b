"""Independent reference computations used only by the tests."""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy.optimize import minimize
from scipy.signal import fftconvolve

mp.mp.dps = 50


def h_mp(u) -> float:
    """Binary entropy at 50 digits."""
    u = mp.mpf(u)
    if u in (0, 1):
        return 0.0
    return float(-u * mp.log(u, 2) - (1 - u) * mp.log(1 - u, 2))


def g_mp(u, p) -> float:
    u, p = mp.mpf(u), mp.mpf(p)
    return float(h_mp(p * (1 - u) + u * (1 - p))) - h_mp(u)


def scan_root(fun, lo, hi, step=1e-6):
    """First sign change of ``fun`` on a uniform grid, refined by bisection."""
    xs = np.arange(lo, hi, step)
    vals = np.array([fun(x) for x in xs])
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    assert idx.size == 1, f"expected one sign change, found {idx.size}"
    a, b = xs[idx[0]], xs[idx[0] + 1]
    for _ in range(60):
        m = 0.5 * (a + b)
        a, b = (m, b) if np.sign(fun(m)) == np.sign(fun(a)) else (a, m)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# density evolution on symmetric channels, SC index order (MSB first)


def bec_profile(eps: float, n: int) -> np.ndarray:
    z = np.array([eps])
    for _ in range(n):
        z = np.stack([2 * z - z * z, z * z], axis=1).ravel()
    return z


def bsc_profile(p: float, n: int, per_step: int = 16, llr_max: float = 30.0) -> np.ndarray:
    """Bhattacharyya parameters of the synthetic channels of a BSC(p).

    LLR densities (conditioned on a transmitted 0) live on a uniform grid
    whose spacing divides the channel LLR exactly; check-node outputs are
    rounded to the nearest grid point and the grid saturates at
    ``llr_max``.
    """
    L0 = math.log((1 - p) / p)
    step = L0 / per_step
    M = int(math.ceil(llr_max / step))
    grid = np.arange(-M, M + 1) * step
    K = grid.size
    d = np.zeros((1, K))
    d[0, M + per_step] = 1 - p
    d[0, M - per_step] = p
    # check-node index table, computed once
    t = np.tanh(grid / 2)
    prod = np.clip(np.outer(t, t), -1 + 1e-16, 1 - 1e-16)
    chk = np.clip(np.rint(2 * np.arctanh(prod) / step).astype(int), -M, M) + M
    for _ in range(n):
        C = d.shape[0]
        outer = d[:, :, None] * d[:, None, :]
        minus = np.zeros((C, K))
        for c in range(C):
            minus[c] = np.bincount(chk.ravel(), weights=outer[c].ravel(), minlength=K)
        full = np.clip(fftconvolve(d, d, axes=1), 0, None)      # index offset 2M
        plus = full[:, M:M + K].copy()
        plus[:, 0] += full[:, :M].sum(axis=1)
        plus[:, -1] += full[:, M + K:].sum(axis=1)
        d = np.stack([minus, plus], axis=1).reshape(2 * C, K)
        d /= d.sum(axis=1, keepdims=True)
    return d @ np.exp(-grid / 2)


# ---------------------------------------------------------------------------
# constrained optimization of S_{D1} with a general-purpose solver


def slsqp_minimum(cfg, feasible_params, binary_entropy, bconv, starts=40, seed=0):
    p, D1, D2 = cfg.p, cfg.D1, cfg.D2

    def h(v):
        v = np.clip(v, 1e-15, 1 - 1e-15)
        return float(-v * np.log2(v) - (1 - v) * np.log2(1 - v))

    def G(u):
        u = float(np.clip(u, 0, 1))
        return h(p * (1 - u) + u * (1 - p)) - h(u)

    base = 1 - binary_entropy(bconv(D1, p))

    def gam(v):
        a, m, t, t1 = v
        return (D1 - (t - t1) * (1 - a) - t1 * m) / (1 - t) if t < 1 - 1e-12 else 0.5

    def S(v):
        a, m, t, t1 = v
        return base + (t - t1) * G(a) + t1 * G(m) + (1 - t) * G(np.clip(gam(v), p, 1 - p))

    def d1_num(v):
        a, m, t, t1 = v
        return D1 - (t - t1) * (1 - a) - t1 * m

    cons = [{"type": "eq", "fun": lambda v: (v[2] - v[3]) * v[0] + v[3] * v[1] + (1 - v[2]) * p - D2},
            {"type": "ineq", "fun": lambda v: v[2] - v[3]},
            {"type": "ineq", "fun": lambda v: d1_num(v) - p * (1 - v[2])},
            {"type": "ineq", "fun": lambda v: (1 - p) * (1 - v[2]) - d1_num(v)}]
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(starts):
        x0 = feasible_params(cfg, rng)
        r = minimize(S, [x0.alpha, x0.mu, x0.theta, x0.theta1], method="SLSQP",
                     constraints=cons, bounds=[(0, p), (0, p), (0, 1), (0, 1)],
                     options={"ftol": 1e-14, "maxiter": 500})
        if (r.success and all(c["fun"](r.x) > -1e-9 for c in cons[1:])
                and abs(cons[0]["fun"](r.x)) < 1e-9):
            best = min(best, r.fun)
    return best


# ---------------------------------------------------------------------------
# lattice Gaussian references


def theta_flatness(scale: float, sigma: float, grid: int = 4001, terms: int = 60) -> float:
    """max |V f_{sigma,Lambda}(x) - 1| via the dual (Fourier) theta series."""
    x = np.linspace(0, scale, grid)
    k = np.arange(1, terms + 1)[:, None]
    series = 1 + 2 * np.sum(np.exp(-2 * (math.pi * sigma * k / scale) ** 2)
                            * np.cos(2 * math.pi * k * x / scale), axis=0)
    return float(np.max(np.abs(series - 1)))


def mmse_reference(sx, sz, D1, D2):
    """The Gaussian test-channel constants, recomputed from first principles.

    X = U' + Z4-type decomposition is avoided: alpha_q is obtained from the
    linear MMSE coefficient of X' on U' = X' + Z4 with Var(X') = D1 and
    Var(Z4) = gamma D2.
    """
    alpha = D1 / (D1 + sz)
    gamma = D1 * sz / (D1 * sz - D2 * (D1 + sz))
    d2p = gamma * D2
    alpha_q = D1 / (D1 + d2p)
    eta = D2 / sz
    return {"alpha": alpha, "gamma": gamma, "d2_prime": d2p, "alpha_q": alpha_q, "eta": eta}

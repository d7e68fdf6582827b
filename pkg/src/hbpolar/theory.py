"""
Closed-form and optimized rate-distortion quantities for the Heegard-Berger
problem with a doubly symmetric binary source (DSBS) or jointly Gaussian
source and side information.  All logarithms are base two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar


class RegionError(ValueError):
    """Distortion pair outside the region an operation is defined on."""


class InfeasibleParameterError(ValueError):
    """Test-channel parameters outside their admissible domain."""


# ---------------------------------------------------------------------------
# binary entropy machinery


def _check_unit(name, u):
    a = np.asarray(u, dtype=float)
    if np.any(a < 0) or np.any(a > 1) or np.any(np.isnan(a)):
        raise ValueError(f"{name} must lie in [0, 1], got {u}")
    return a


def binary_entropy(u):
    """h(u) in bits, with h(0) = h(1) = 0."""
    a = _check_unit("u", u)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -a * np.log2(a) - (1 - a) * np.log2(1 - a)
    h = np.where((a == 0) | (a == 1), 0.0, h)
    return float(h) if np.ndim(h) == 0 else h


def bconv(p, u):
    """Binary convolution p(1-u) + u(1-p): crossover of two cascaded BSCs."""
    p = _check_unit("p", p)
    u = _check_unit("u", u)
    r = p * (1 - u) + u * (1 - p)
    return float(r) if np.ndim(r) == 0 else r


def wz_gap(u, p):
    """G(u) = h(p * u) - h(u)."""
    r = binary_entropy(bconv(p, u)) - binary_entropy(u)
    return float(r) if np.ndim(r) == 0 else r


def _h_fast(x: float) -> float:
    # unchecked scalar entropy for inner optimization loops
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def _g_fast(u: float, p: float) -> float:
    return _h_fast(p * (1 - u) + u * (1 - p)) - _h_fast(u)


def _dh(x):
    return np.log2((1 - x) / x)


def wz_gap_derivative(u, p):
    """G'(u), analytic; only defined on the open interval (0, 1)."""
    return (1 - 2 * p) * _dh(bconv(p, u)) - _dh(u)


def critical_distortion(p: float) -> float:
    """The Wyner-Ziv tangency point d_c in (0, p): G(d_c) / (d_c - p) = G'(d_c)."""
    if not 0 < p < 0.5:
        raise ValueError(f"p must lie in (0, 0.5), got {p}")

    def t(d):
        return wz_gap(d, p) - (d - p) * wz_gap_derivative(d, p)

    lo, hi = 1e-9, p - 1e-9
    if t(lo) * t(hi) > 0:
        raise ArithmeticError(f"no sign change bracketing d_c for p={p}")
    return brentq(t, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class DSBSConfig:
    p: float
    D1: float
    D2: float

    def __post_init__(self):
        if not 0 < self.p < 0.5:
            raise ValueError("p must lie in (0, 0.5)")
        if self.D1 < 0 or self.D2 < 0:
            raise ValueError("distortions must be nonnegative")


@dataclass(frozen=True)
class GaussianHBConfig:
    sigma_x2: float
    sigma_z2: float
    D1: float
    D2: float

    def __post_init__(self):
        if min(self.sigma_x2, self.sigma_z2, self.D1, self.D2) <= 0:
            raise ValueError("variances and distortions must be positive")

    @property
    def d2_threshold(self) -> float:
        return self.D1 * self.sigma_z2 / (self.D1 + self.sigma_z2)


@dataclass(frozen=True)
class HBParams:
    alpha: float
    mu: float
    theta: float
    theta1: float
    gamma: float


# ---------------------------------------------------------------------------
# regions


def classify_region_binary(cfg: DSBSConfig) -> str:
    """One of ``I-A``, ``I-B``, ``II``, ``III``, ``IV``."""
    p, D1, D2 = cfg.p, cfg.D1, cfg.D2
    if D1 < 0.5 and D2 < min(D1, p):
        return "I-B" if D2 <= critical_distortion(p) else "I-A"
    if D1 >= 0.5 and D2 <= p:
        return "II"
    if D1 <= 0.5 and D2 >= min(D1, p):
        return "III"
    return "IV"


def classify_region_gaussian(cfg: GaussianHBConfig) -> str:
    """One of ``nondegenerate``, ``lossy-only``, ``wyner-ziv``, ``no-coding``."""
    small_d1 = cfg.D1 <= cfg.sigma_x2
    small_d2 = cfg.D2 <= cfg.d2_threshold
    if small_d1:
        return "nondegenerate" if small_d2 else "lossy-only"
    return "wyner-ziv" if small_d2 else "no-coding"


def hbrdf_binary_ib(cfg: DSBSConfig) -> float:
    """Closed-form rate 1 - h(D1 * p) + G(D2), valid when D1 <= 0.5 and D2 <= min(d_c, D1)."""
    if not (cfg.D1 <= 0.5 and cfg.D2 <= min(critical_distortion(cfg.p), cfg.D1)):
        raise RegionError(f"{cfg} is outside Region I-B")
    return 1 - binary_entropy(bconv(cfg.D1, cfg.p)) + wz_gap(cfg.D2, cfg.p)


def hbrdf_gaussian(cfg: GaussianHBConfig, region: str | None = None) -> float:
    """Gaussian rate-distortion function, choosing the formula for the region.

    Passing ``region`` asserts which region the caller expects.
    """
    actual = classify_region_gaussian(cfg)
    if region is not None and region != actual:
        raise RegionError(f"{cfg} lies in region {actual!r}, not {region!r}")
    sx, sz, D1, D2 = cfg.sigma_x2, cfg.sigma_z2, cfg.D1, cfg.D2
    if actual == "nondegenerate":
        return 0.5 * math.log2(sx * sz / (D2 * (D1 + sz)))
    if actual == "lossy-only":
        return 0.5 * math.log2(sx / D1)
    if actual == "wyner-ziv":
        # the printed boundary uses D1, so the formula can dip below zero near it
        return max(0.0, 0.5 * math.log2(sx * sz / (D2 * (sx + sz))))
    return 0.0


def wyner_ziv_binary(D: float, p: float) -> float:
    """Binary Wyner-Ziv rate: G(D) up to d_c, then the chord to (p, 0)."""
    if D >= p:
        return 0.0
    dc = critical_distortion(p)
    if D <= dc:
        return wz_gap(D, p)
    return wz_gap(dc, p) * (p - D) / (p - dc)


def hbrdf_binary(cfg: DSBSConfig, grid: int = 48):
    """``(rate, label)`` over every region; Region I-A runs the optimizer.

    Labels name the formula used: ``I-B`` and ``I-A`` as in
    ``classify_region_binary``, ``II`` (Wyner-Ziv at Decoder 2), ``III``
    (plain lossy compression to D1) and ``IV`` (no coding).
    """
    region = classify_region_binary(cfg)
    if region == "I-B":
        return hbrdf_binary_ib(cfg), region
    if region == "I-A":
        return minimize_S(cfg, grid=grid)[1], region
    if region == "II":
        return wyner_ziv_binary(cfg.D2, cfg.p), region
    if region == "III":
        return 1 - binary_entropy(min(cfg.D1, 0.5)), region
    return 0.0, region


# ---------------------------------------------------------------------------
# the S_{D1} optimization for Region I


def gamma_of(alpha, mu, theta, theta1, cfg: DSBSConfig):
    """Crossover of the u2 = 2 branch implied by the Decoder-1 distortion."""
    if theta == 1:
        return 0.5
    return (cfg.D1 - (theta - theta1) * (1 - alpha) - theta1 * mu) / (1 - theta)


def _check_domain(prm: HBParams, cfg: DSBSConfig, tol=1e-12):
    p = cfg.p
    ok = (-tol <= prm.theta1 <= prm.theta + tol and prm.theta <= 1 + tol
          and -tol <= prm.alpha <= p + tol and -tol <= prm.mu <= p + tol)
    if not ok:
        raise InfeasibleParameterError(f"parameters outside the domain: {prm}")
    if not p - tol <= prm.gamma <= 1 - p + tol:
        raise InfeasibleParameterError(f"gamma={prm.gamma} outside [p, 1-p]")


def make_params(alpha, mu, theta, theta1, cfg: DSBSConfig) -> HBParams:
    prm = HBParams(float(alpha), float(mu), float(theta), float(theta1),
                   float(gamma_of(alpha, mu, theta, theta1, cfg)))
    _check_domain(prm, cfg)
    return prm


def s_d1(params: HBParams, cfg: DSBSConfig) -> float:
    """S_{D1}(alpha, mu, theta, theta1) in bits."""
    _check_domain(params, cfg)
    p = cfg.p
    t, t1 = params.theta, params.theta1
    clip = lambda v: min(max(v, 0.0), 1.0)  # noqa: E731
    return (1 - binary_entropy(bconv(cfg.D1, p))
            + (t - t1) * wz_gap(clip(params.alpha), p)
            + t1 * wz_gap(clip(params.mu), p)
            + (1 - t) * wz_gap(clip(params.gamma), p))


def distortion_constraint(params: HBParams, cfg: DSBSConfig) -> float:
    """(theta - theta1) alpha + theta1 mu + (1 - theta) p, which must equal D2."""
    t, t1 = params.theta, params.theta1
    return (t - t1) * params.alpha + t1 * params.mu + (1 - t) * cfg.p


def _grid_eval(theta, frac, alpha, cfg):
    """S over (theta, theta1 = frac * theta, alpha) with mu eliminated; inf if infeasible."""
    p, D1, D2 = cfg.p, cfg.D1, cfg.D2
    theta1 = frac * theta
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = (D2 - (theta - theta1) * alpha - (1 - theta) * p) / theta1
        gamma = (D1 - (theta - theta1) * (1 - alpha) - theta1 * mu) / (1 - theta)
    feas = ((theta1 > 0) & (theta < 1) & (mu >= 0) & (mu <= p)
            & (gamma >= p) & (gamma <= 1 - p) & (alpha >= 0) & (alpha <= p))
    mu_c = np.clip(np.nan_to_num(mu), 0, 1)
    g_c = np.clip(np.nan_to_num(gamma), 0, 1)
    s = (1 - binary_entropy(bconv(D1, p)) + (theta - theta1) * wz_gap(np.clip(alpha, 0, 1), p)
         + theta1 * wz_gap(mu_c, p) + (1 - theta) * wz_gap(g_c, p))
    return np.where(feas, s, np.inf), mu, gamma


def _pattern_search(fun, x0, step, lo, hi, tol=1e-6):
    """Compass search on a box; infeasible points evaluate to inf."""
    x = np.array(x0, dtype=float)
    fx = fun(x)
    step = np.array(step, dtype=float)
    while np.max(step) > 1e-12:
        improved = False
        for d in range(x.size):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[d] = min(max(y[d] + sgn * step[d], lo[d]), hi[d])
                fy = fun(y)
                if fy < fx - tol * 1e-3 * abs(fx):
                    x, fx, improved = y, fy, True
                    break
        if not improved:
            step *= 0.5
    return x, fx


def minimize_S(cfg: DSBSConfig, grid: int = 48):
    """Minimize S_{D1} subject to the D2 constraint; returns ``(HBParams, rate)``.

    Three families are searched: the interior (theta < 1, theta1 > 0, mu
    solved from the constraint), the theta1 = 0 edge (alpha solved), and the
    theta = 1 face, where the Decoder-1 distortion is imposed directly.
    Grid seeds are refined by compass search.
    """
    p, D1, D2 = cfg.p, cfg.D1, cfg.D2
    if not (0 <= D1 < 0.5 and 0 <= D2 < min(D1, p)):
        raise RegionError(f"{cfg} is outside Region I")
    base = 1 - binary_entropy(bconv(D1, p))
    candidates = []

    # interior
    th, fr, al = np.meshgrid(np.linspace(0, 1, grid + 1)[1:-1], np.linspace(0, 1, grid + 1)[1:],
                             np.linspace(0, p, grid + 1), indexing="ij")
    s, _, _ = _grid_eval(th, fr, al, cfg)
    flat = np.argsort(s, axis=None)[:6]

    def f_int(x):
        theta, theta1, alpha = x[0], x[1] * x[0], x[2]
        if not (0 < theta1 and theta < 1 and 0 <= alpha <= p):
            return np.inf
        mu = (D2 - (theta - theta1) * alpha - (1 - theta) * p) / theta1
        gamma = (D1 - (theta - theta1) * (1 - alpha) - theta1 * mu) / (1 - theta)
        if not (0 <= mu <= p and p <= gamma <= 1 - p):
            return np.inf
        return (base + (theta - theta1) * _g_fast(alpha, p) + theta1 * _g_fast(mu, p)
                + (1 - theta) * _g_fast(gamma, p))

    for idx in flat:
        if not np.isfinite(s.flat[idx]):
            break
        x0 = [th.flat[idx], fr.flat[idx], al.flat[idx]]
        x, fx = _pattern_search(f_int, x0, [1.0 / grid, 1.0 / grid, p / grid],
                                [1e-12, 1e-12, 0.0], [1 - 1e-12, 1.0, p])
        if np.isfinite(fx):
            theta, theta1, alpha = x[0], x[1] * x[0], x[2]
            mu = (D2 - (theta - theta1) * alpha - (1 - theta) * p) / theta1
            candidates.append((fx, (alpha, mu, theta, theta1)))

    # theta1 = 0 edge: alpha fixed by the constraint
    def edge(theta):
        alpha = (D2 - (1 - theta) * p) / theta
        gamma = (D1 - theta * (1 - alpha)) / (1 - theta)
        if not (0 <= alpha <= p and p <= gamma <= 1 - p):
            return np.inf
        return base + theta * _g_fast(alpha, p) + (1 - theta) * _g_fast(gamma, p)

    ths = np.linspace(0, 1, 4 * grid + 1)[1:-1]
    vals = np.array([edge(t) for t in ths])
    if np.isfinite(vals).any():
        i = int(np.argmin(vals))
        lo, hi = ths[max(i - 1, 0)], ths[min(i + 1, ths.size - 1)]
        r = minimize_scalar(lambda t: min(edge(t), 1e3), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-12})
        t = r.x if r.fun <= vals[i] else ths[i]
        candidates.append((edge(t), ((D2 - (1 - t) * p) / t, min(D2, p), t, 0.0)))

    # theta = 1 face, with the Decoder-1 distortion imposed
    def face(theta1):
        if theta1 >= 1:
            return (np.inf, None) if abs(D1 - D2) > 1e-15 else (base + _g_fast(D2, p), (D2, D2))
        alpha = 0.5 * (1 - (D1 - D2) / (1 - theta1))
        mu = (D2 - (1 - theta1) * alpha) / theta1 if theta1 > 0 else None
        if mu is None or not (0 <= alpha <= p and 0 <= mu <= p):
            return np.inf, None
        return base + (1 - theta1) * _g_fast(alpha, p) + theta1 * _g_fast(mu, p), (alpha, mu)

    t1s = np.linspace(0, 1, 4 * grid + 1)[1:]
    fvals = np.array([face(t)[0] for t in t1s])
    if np.isfinite(fvals).any():
        i = int(np.argmin(fvals))
        lo, hi = t1s[max(i - 1, 0)], t1s[min(i + 1, t1s.size - 1)]
        r = minimize_scalar(lambda t: min(face(t)[0], 1e3), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-12})
        t1 = r.x if r.fun <= fvals[i] else t1s[i]
        val, am = face(t1)
        if am is not None:
            candidates.append((val, (am[0], am[1], 1.0, t1)))

    if not candidates:
        raise RegionError(f"no feasible parameters found for {cfg}")
    best_val, (alpha, mu, theta, theta1) = min(candidates, key=lambda c: c[0])
    prm = make_params(min(max(alpha, 0.0), p), min(max(mu, 0.0), p), theta, theta1, cfg)
    return prm, float(s_d1(prm, cfg))


def feasible_params(cfg: DSBSConfig, rng: np.random.Generator, max_tries: int = 100000) -> HBParams:
    """Random parameters meeting the domain and the D2 constraint (rejection sampling)."""
    p, D2 = cfg.p, cfg.D2
    for _ in range(max_tries):
        theta = rng.uniform(0, 1)
        theta1 = rng.uniform(0, theta)
        alpha = rng.uniform(0, p)
        if theta1 <= 1e-9:
            continue
        mu = (D2 - (theta - theta1) * alpha - (1 - theta) * p) / theta1
        if not 0 <= mu <= p:
            continue
        gamma = gamma_of(alpha, mu, theta, theta1, cfg)
        if p <= gamma <= 1 - p:
            return HBParams(alpha, mu, theta, theta1, gamma)
    raise RegionError(f"could not sample feasible parameters for {cfg}")


# ---------------------------------------------------------------------------
# test channels


@dataclass(frozen=True)
class HBTestChannel:
    """Joint pmf ``joint[u2, u1, x]`` plus the side-information crossover ``p``."""

    joint: np.ndarray
    p: float

    def with_y(self) -> np.ndarray:
        """Joint ``[u2, u1, x, y]`` with Y the output of BSC(p) fed by X."""
        bsc = np.array([[1 - self.p, self.p], [self.p, 1 - self.p]])
        return self.joint[..., None] * bsc[None, None]

    def expected_distortions(self):
        """(E d(X, U1), E d(X, phi2(U1, U2, Y))) with phi2 = u2 on {0, 1}, y on 2."""
        j = self.with_y()
        d1 = sum(j[:, u1, x, :].sum() for u1 in (0, 1) for x in (0, 1) if u1 != x)
        d2 = j[0, :, 1, :].sum() + j[1, :, 0, :].sum() + j[2, :, 0, 1].sum() + j[2, :, 1, 0].sum()
        return float(d1), float(d2)


def table1_joint(params: HBParams, cfg: DSBSConfig) -> HBTestChannel:
    """The Table-I joint distribution of (U2, U1, X)."""
    a, m, t, t1, g = params.alpha, params.mu, params.theta, params.theta1, params.gamma
    J = np.zeros((3, 2, 2))
    J[0, 0, 0], J[0, 0, 1] = t1 * (1 - m), t1 * m
    J[0, 1, 0], J[0, 1, 1] = (t - t1) * (1 - a), (t - t1) * a
    J[1, 0, 0], J[1, 0, 1] = (t - t1) * a, (t - t1) * (1 - a)
    J[1, 1, 0], J[1, 1, 1] = t1 * m, t1 * (1 - m)
    J[2, 0, 0], J[2, 0, 1] = (1 - t) * (1 - g), (1 - t) * g
    J[2, 1, 0], J[2, 1, 1] = (1 - t) * g, (1 - t) * (1 - g)
    J *= 0.5
    if np.any(J < -1e-15):
        raise InfeasibleParameterError(f"negative Table-I entry for {params}")
    return HBTestChannel(np.clip(J, 0, None), cfg.p)


def cascade_joint(D2: float, eta: float, p: float) -> HBTestChannel:
    """Region I-B test channel: U2 uniform, X = U2 + BSC(D2), U1 = U2 + BSC(eta)."""
    J = np.zeros((3, 2, 2))
    for u2 in (0, 1):
        for u1 in (0, 1):
            for x in (0, 1):
                J[u2, u1, x] = 0.5 * (eta if u1 != u2 else 1 - eta) * (D2 if x != u2 else 1 - D2)
    return HBTestChannel(J, p)


def inner_crossover(D1: float, D2: float) -> float:
    """eta with D2 * eta = D1."""
    if not 0 <= D2 <= D1 <= 0.5 or D2 >= 0.5:
        raise RegionError("need 0 <= D2 <= D1 <= 0.5 and D2 < 0.5")
    return (D1 - D2) / (1 - 2 * D2)


# ---------------------------------------------------------------------------
# pmf utilities


def entropy_of(joint, axes) -> float:
    """Entropy in bits of the marginal of ``joint`` on ``axes``."""
    j = np.asarray(joint, dtype=float)
    other = tuple(a for a in range(j.ndim) if a not in axes)
    m = j.sum(axis=other) if other else j
    m = m[m > 0]
    return float(-(m * np.log2(m)).sum())


def mutual_information(joint, a, b, given=()) -> float:
    """I(A; B | C) in bits for axis tuples ``a``, ``b``, ``given`` of a joint pmf."""
    a, b, c = tuple(a), tuple(b), tuple(given)
    return (entropy_of(joint, a + c) + entropy_of(joint, b + c)
            - entropy_of(joint, a + b + c) - (entropy_of(joint, c) if c else 0.0))

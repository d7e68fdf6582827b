"""
One-dimensional multilevel polar lattices for the Gaussian Heegard-Berger
problem.

The top lattice is ``scale * Z`` and the chain ``Z / 2Z / 4Z / ...`` labels
a point ``scale * k`` by the binary digits of ``k`` (two's complement, so
negative points work too).  Level ``l`` carries digit ``l - 1``; it is coded
with a binary polar code whose observation is a real value together with the
already decided lower digits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .polar import (
    ConfigurationError,
    ConstructionParams,
    IndexPartition,
    SequentialSourceModel,
    build_nested_pair,
    build_partition,
    clamp_llr,
    estimate_profiles,
    polar_transform,
    sc_decode,
    sc_quantize,
    shared_bits,
)
from .theory import GaussianHBConfig, RegionError, classify_region_gaussian

def _substream(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# flatness and discrete Gaussians


def flatness_factor(scale: float, sigma: float, grid: int = 2001) -> float:
    """max over the fundamental interval of |scale * f_{sigma, scale Z}(x) - 1|."""
    if scale <= 0 or sigma <= 0:
        raise ValueError("scale and sigma must be positive")
    ratio = sigma / scale
    if ratio < 1e-3:
        # the periodic density is a spike of height scale / (sqrt(2 pi) sigma)
        return scale / (math.sqrt(2 * math.pi) * sigma) - 1.0
    xs = np.linspace(0.0, 0.5 * scale, grid)   # symmetric about 0 and scale/2
    kmax = int(math.ceil((10 * sigma + 10 * scale) / scale))
    lam = scale * np.arange(-kmax, kmax + 1)
    d = xs[:, None] - lam[None, :]
    f = np.exp(-d * d / (2 * sigma * sigma)).sum(axis=1) / (math.sqrt(2 * math.pi) * sigma)
    return float(np.max(np.abs(scale * f - 1.0)))


@dataclass(frozen=True)
class PartitionChain:
    base_scale: float
    levels: int

    def __post_init__(self):
        if self.base_scale <= 0:
            raise ValueError("base_scale must be positive")
        if self.levels < 1:
            raise ValueError("a chain needs at least one level")

    def labels(self, k) -> np.ndarray:
        """Label digits ``(..., levels)`` of integer coordinates ``k``; level l is column l-1."""
        k = np.asarray(k, dtype=np.int64)
        return ((k[..., None] >> np.arange(self.levels)) & 1).astype(np.uint8)

    def representative(self, bits) -> np.ndarray:
        """Coset point nearest 0 for the label digits ``(..., levels)``."""
        bits = np.asarray(bits, dtype=np.int64)
        c = (bits << np.arange(self.levels)).sum(axis=-1)
        m = 1 << self.levels
        return np.where(c >= m // 2, c - m, c)


@dataclass(frozen=True)
class DiscreteGaussianSpec:
    """D_{scale Z, sigma}: centered discrete Gaussian on the top lattice."""

    chain: PartitionChain
    sigma2: float
    points: np.ndarray = field(init=False, repr=False)
    pmf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        sigma = math.sqrt(self.sigma2)
        scale = self.chain.base_scale
        width = 10 * sigma
        while True:
            kmax = int(math.ceil(width / scale))
            k = np.arange(-kmax, kmax + 1)
            logw = -(scale * k) ** 2 / (2 * self.sigma2)
            logz = logsumexp(logw)
            # the first omitted term dominates the (super-geometric) tail
            edge = math.exp(-(scale * (kmax + 1)) ** 2 / (2 * self.sigma2) - logz)
            if edge < 1e-20:
                break
            width *= 1.5
        object.__setattr__(self, "points", k)
        object.__setattr__(self, "pmf", np.exp(logw - logz))

    @property
    def scale(self) -> float:
        return self.chain.base_scale

    def log_pmf(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pmf)

    def second_moment(self) -> float:
        return float((self.pmf * (self.scale * self.points) ** 2).sum())

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Integer coordinates ``k`` (the point is ``scale * k``)."""
        cdf = np.cumsum(self.pmf)
        idx = np.searchsorted(cdf, rng.random(shape) * cdf[-1], side="right")
        return self.points[np.minimum(idx, self.points.size - 1)]

    def label_entropies(self, levels: int) -> np.ndarray:
        """H(A_l | A_1..A_{l-1}) in bits for l = 1..levels, plus the tail H(A | A_1..A_levels)."""
        out = []
        prev = 0.0
        for l in range(1, levels + 1):
            m = 1 << l
            cos = np.bincount(self.points % m, weights=self.pmf, minlength=m)
            cos = cos[cos > 0]
            h = float(-(cos * np.log2(cos)).sum())
            out.append(h - prev)
            prev = h
        p = self.pmf[self.pmf > 0]
        total = float(-(p * np.log2(p)).sum())
        out.append(max(total - prev, 0.0))
        return np.array(out)


def discrete_gaussian(spec: DiscreteGaussianSpec):
    """``(points, pmf)`` with points on the real line."""
    return spec.scale * spec.points, spec.pmf


def sample(spec: DiscreteGaussianSpec, seed: int, shape=()) -> np.ndarray:
    return spec.scale * spec.sample(np.random.default_rng(seed), shape)


def choose_chain(sigma_a2: float, sigma_q2_tilde: float, eps_target: float = 1e-3,
                 rate_tail_target: float = 1e-3, max_levels: int = 16) -> PartitionChain:
    """Largest scale whose flatness at sigma_q_tilde is within ``eps_target``, and
    the fewest levels whose label-entropy tail is within ``rate_tail_target``."""
    if min(sigma_a2, sigma_q2_tilde, eps_target, rate_tail_target) <= 0:
        raise ConfigurationError("chain targets must be positive")
    sq = math.sqrt(sigma_q2_tilde)
    lo, hi = 1e-3 * sq, sq
    while flatness_factor(hi, sq) <= eps_target:
        lo, hi = hi, 2 * hi
        if hi > 1e6 * sq:
            raise ConfigurationError("flatness search diverged")
    if flatness_factor(lo, sq) > eps_target:
        raise ConfigurationError(f"flatness target {eps_target} unattainable")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if flatness_factor(mid, sq) <= eps_target:
            lo = mid
        else:
            hi = mid
    scale = lo
    for r in range(1, max_levels + 1):
        spec = DiscreteGaussianSpec(PartitionChain(scale, r), sigma_a2)
        if spec.label_entropies(r)[-1] <= rate_tail_target:
            return PartitionChain(scale, r)
    raise ConfigurationError("rate tail target unattainable within max_levels")


# ---------------------------------------------------------------------------
# MMSE scalars


@dataclass(frozen=True)
class MMSEScalars:
    alpha: float
    gamma: float
    d2_prime: float
    alpha_q: float
    alpha_c: float
    eta: float
    sigma_u2: float
    sigma_y2: float
    sigma_a2: float
    sigma_b2: float
    sigma_z3_2: float
    sigma_q2_tilde: float
    sigma_c2_tilde: float

    @property
    def source_noise(self) -> float:
        """Variance of X' - A."""
        return self.alpha_q * self.d2_prime

    @property
    def channel_noise(self) -> float:
        """Variance of B - A."""
        return self.sigma_b2 - self.sigma_a2


def compute_scalars(cfg: GaussianHBConfig, tol: float = 1e-10) -> MMSEScalars:
    region = classify_region_gaussian(cfg)
    denom = cfg.D1 * cfg.sigma_z2 - cfg.D2 * (cfg.D1 + cfg.sigma_z2)
    if region != "nondegenerate" or denom <= 0:
        raise RegionError(f"{cfg} is not in the nondegenerate region")
    D1, D2, sz = cfg.D1, cfg.D2, cfg.sigma_z2
    alpha = D1 / (D1 + sz)
    gamma = D1 * sz / denom
    d2p = gamma * D2
    alpha_q = (D1 * (sz - D2) - D2 * sz) / (D1 * (sz - D2))
    alpha_c = (D1 * (sz - D2) - D2 * sz) / ((D1 + sz) * (sz - D2))
    eta = D2 / sz
    sigma_u2 = D1 + d2p
    sigma_y2 = D1 + sz
    sigma_a2 = alpha_q ** 2 * sigma_u2
    sigma_b2 = (alpha_q / alpha_c) ** 2 * alpha ** 2 * sigma_y2
    sigma_z3_2 = alpha * sz
    sq = sigma_a2 * sz * D2 / (D1 * (sz - D2))
    sc = sigma_a2 * sz ** 2 / ((D1 + sz) * (sz - D2))
    s = MMSEScalars(alpha, gamma, d2p, alpha_q, alpha_c, eta, sigma_u2, sigma_y2, sigma_a2,
                    sigma_b2, sigma_z3_2, sq, sc)
    checks = {
        "alpha_q two routes": alpha_q - D1 / (D1 + d2p),
        "quantization identity": alpha_q * d2p - D2 - D2 ** 2 / (sz - D2),
        "reconstruction identity": eta ** 2 * (alpha_q * d2p + (alpha_q / alpha_c) * sigma_z3_2)
        - D2 ** 2 / (sz - D2),
        "eta": eta * sz - D2,
    }
    for name, resid in checks.items():
        if abs(resid) > tol:
            raise ArithmeticError(f"{name} violated by {resid:.3e}")
    return s


# ---------------------------------------------------------------------------
# per-level models


class LatticeLevelModel(SequentialSourceModel):
    """Digit ``level`` of ``A ~ D_{scale Z, sigma}`` observed through ``V = A + N(0, noise)``.

    Observations are ``(v, lower)`` with ``lower`` the integer formed by the
    already decided digits (``k mod 2^(level-1)``).
    """

    _CHUNK = 1 << 18

    def __init__(self, spec: DiscreteGaussianSpec, level: int, noise: float):
        if not 1 <= level <= spec.chain.levels:
            raise ValueError("level outside the chain")
        if noise <= 0:
            raise ValueError("noise variance must be positive")
        self.spec = spec
        self.level = level
        self.noise = noise
        self.mod = 1 << (level - 1)
        k = spec.points
        self._bit = ((k >> (level - 1)) & 1).astype(bool)
        self._low = k & (self.mod - 1)
        logp = spec.log_pmf()
        self._logp = logp
        lo0 = np.full(self.mod, -np.inf)
        lo1 = np.full(self.mod, -np.inf)
        for c in range(self.mod):
            sel = self._low == c
            lo0[c] = logsumexp(logp[sel & ~self._bit]) if np.any(sel & ~self._bit) else -np.inf
            lo1[c] = logsumexp(logp[sel & self._bit]) if np.any(sel & self._bit) else -np.inf
        with np.errstate(invalid="ignore"):
            self._prior_table = clamp_llr(np.nan_to_num(lo0 - lo1, nan=0.0))

    def llr(self, obs):
        v, lower = obs
        v = np.asarray(v, dtype=float)
        lower = np.asarray(lower, dtype=np.int64)
        out = np.empty(v.shape)
        fv, fl, fo = v.ravel(), lower.ravel(), out.reshape(-1)
        lam = self.spec.scale * self.spec.points
        step = max(1, self._CHUNK // lam.size)
        for s in range(0, fv.size, step):
            vv = fv[s:s + step, None]
            logw = self._logp[None, :] - (vv - lam[None, :]) ** 2 / (2 * self.noise)
            ok = self._low[None, :] == fl[s:s + step, None]
            l0 = logsumexp(np.where(ok & ~self._bit[None, :], logw, -np.inf), axis=1)
            l1 = logsumexp(np.where(ok & self._bit[None, :], logw, -np.inf), axis=1)
            with np.errstate(invalid="ignore"):
                fo[s:s + step] = np.nan_to_num(l0 - l1, nan=0.0, posinf=np.inf, neginf=-np.inf)
        return clamp_llr(out)

    def prior_llr(self, obs):
        return self._prior_table[np.asarray(obs[1], dtype=np.int64)]

    def sample(self, rng, batch, N):
        k = self.spec.sample(rng, (batch, N))
        v = self.spec.scale * k + math.sqrt(self.noise) * rng.standard_normal((batch, N))
        return ((k >> (self.level - 1)) & 1).astype(np.uint8), (v, k & (self.mod - 1))


def level_informations(spec: DiscreteGaussianSpec, noise: float, grid: int = 4001) -> np.ndarray:
    """I(A_l; V | A_1..A_{l-1}) in bits for every chain level, by numeric integration."""
    sn = math.sqrt(noise)
    lam = spec.scale * spec.points
    lo = lam.min() - 12 * sn
    hi = lam.max() + 12 * sn
    v = np.linspace(lo, hi, grid)
    dv = v[1] - v[0]
    # joint density p(v, k)
    dens = spec.pmf[None, :] * np.exp(-(v[:, None] - lam[None, :]) ** 2 / (2 * noise)) \
        / math.sqrt(2 * math.pi * noise)
    out = []
    prev = 0.0  # I(V; A_1..A_{l-1})
    pv = dens.sum(axis=1)
    hv = -np.sum(pv * np.log2(np.clip(pv, 1e-300, None))) * dv
    for l in range(1, spec.chain.levels + 1):
        m = 1 << l
        cos = np.zeros((v.size, m))
        np.add.at(cos.T, spec.points % m, dens.T)
        # h(V | A mod 2^l) = -sum_c P(c) int p(v|c) log p(v|c)
        pc = cos.sum(axis=0) * dv
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(cos > 0, cos / pc[None, :], 0.0)
            hvc = -np.sum(np.where(cos > 0, cos * np.log2(np.where(cond > 0, cond, 1.0)), 0.0)) * dv
        mi = hv - hvc
        out.append(mi - prev)
        prev = mi
    return np.array(out)


# ---------------------------------------------------------------------------
# multilevel codes


def _level_sampler(spec: DiscreteGaussianSpec, level: int, noises):
    """Joint sampler of digit ``level`` and its observation under each noise, sharing A."""
    mod = 1 << (level - 1)

    def draw(rng, batch, N):
        k = spec.sample(rng, (batch, N))
        base = spec.scale * k
        g = rng.standard_normal((batch, N))
        obs = tuple((base + math.sqrt(s) * g, k & (mod - 1)) for s in noises)
        return ((k >> (level - 1)) & 1).astype(np.uint8), obs

    return draw


@dataclass(frozen=True)
class LatticeQuantizer:
    """Source-only multilevel quantizer ``V -> A`` (used for U1 in coded mode)."""

    chain: PartitionChain
    spec: DiscreteGaussianSpec
    n: int
    parts: tuple
    models: tuple

    @property
    def rate(self) -> float:
        return sum(p.info.size for p in self.parts) / (1 << self.n)

    def quantize(self, v, seed: int) -> np.ndarray:
        """Integer lattice coordinates of the quantized frame."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        lower = np.zeros(v.shape, dtype=np.int64)
        digits = []
        for l, (part, model) in enumerate(zip(self.parts, self.models), start=1):
            pre = shared_bits(_substream(seed, 100 + l), v.shape)
            k = sc_quantize(model, (v, lower), part, pre, _substream(seed, 200 + l))
            d = polar_transform(k).astype(np.int64)
            digits.append(d)
            lower = lower + (d << (l - 1))
        return self.chain.representative(np.stack(digits, axis=-1))


def build_quantizer(prior_var: float, noise: float, n: int, params: ConstructionParams,
                    eps: float = 1e-3, tail: float = 1e-3) -> LatticeQuantizer:
    post = prior_var * noise / (prior_var + noise)
    chain = choose_chain(prior_var, post, eps, tail)
    spec = DiscreteGaussianSpec(chain, prior_var)
    infos = level_informations(spec, noise)
    ents = spec.label_entropies(chain.levels)[:-1]
    parts, models = [], []
    for l in range(1, chain.levels + 1):
        model = LatticeLevelModel(spec, l, noise)
        draw = _level_sampler(spec, l, (noise,))
        zs, zu = estimate_profiles(model, n, params,
                                   lambda r, b, N, d=draw: (lambda u, o: (u, o[0]))(*d(r, b, N)))
        target = float(np.clip(infos[l - 1], 0.0, ents[l - 1]))
        parts.append(build_partition(zs, zu, params, target, float(ents[l - 1]), role="source"))
        models.append(model)
    return LatticeQuantizer(chain, spec, n, tuple(parts), tuple(models))


@dataclass(frozen=True)
class MultilevelCode:
    cfg: GaussianHBConfig
    scalars: MMSEScalars
    chain: PartitionChain
    spec: DiscreteGaussianSpec
    n: int
    levels: tuple             # ((quantization partition, channel partition), ...)
    models_q: tuple
    models_c: tuple
    targets: dict = field(repr=False)

    @property
    def N(self) -> int:
        return 1 << self.n

    def transmitted(self, l: int) -> np.ndarray:
        q, c = self.levels[l - 1]
        return np.setdiff1d(q.info, c.info)

    @property
    def rate(self) -> float:
        """Decoder-2 refinement rate sum_l |I_l^Q minus I_l^C| / N."""
        return sum(self.transmitted(l).size for l in range(1, self.chain.levels + 1)) / self.N


def build_multilevel(chain: PartitionChain, scalars: MMSEScalars, n: int,
                     params: ConstructionParams, cfg: GaussianHBConfig | None = None
                     ) -> MultilevelCode:
    spec = DiscreteGaussianSpec(chain, scalars.sigma_a2)
    sq, scn = scalars.source_noise, scalars.channel_noise
    info_q = level_informations(spec, sq)
    info_c = level_informations(spec, scn)
    ents = spec.label_entropies(chain.levels)[:-1]
    levels, mq, mc = [], [], []
    for l in range(1, chain.levels + 1):
        model_q = LatticeLevelModel(spec, l, sq)
        model_c = LatticeLevelModel(spec, l, scn)
        draw = _level_sampler(spec, l, (sq, scn))
        zs, zu = estimate_profiles(model_q, n, params,
                                   lambda r, b, N: (lambda u, o: (u, o[0]))(*draw(r, b, N)))
        zc, _ = estimate_profiles(model_c, n, params,
                                  lambda r, b, N: (lambda u, o: (u, o[1]))(*draw(r, b, N)))
        H = float(ents[l - 1])
        tq = float(np.clip(info_q[l - 1], 0.0, H))
        tc = float(np.clip(info_c[l - 1], 0.0, H))
        levels.append(build_nested_pair(zs, zc, zu, params, tq, tc, H))
        mq.append(model_q)
        mc.append(model_c)
    targets = {"info_q": info_q, "info_c": info_c, "entropy": ents}
    return MultilevelCode(cfg, scalars, chain, spec, n, tuple(levels), tuple(mq), tuple(mc), targets)


def design_gaussian(cfg: GaussianHBConfig, n: int, params: ConstructionParams,
                    eps: float = 1e-3, tail: float = 1e-3) -> MultilevelCode:
    s = compute_scalars(cfg)
    chain = choose_chain(s.sigma_a2, s.sigma_q2_tilde, eps, tail)
    return build_multilevel(chain, s, n, params, cfg)


# ---------------------------------------------------------------------------
# Decoder-1 reconstruction


def quantize_u1(x, cfg: GaussianHBConfig, mode: str = "ideal", seed: int = 0,
                quantizer: LatticeQuantizer | None = None) -> np.ndarray:
    """U1 frame for the source frame ``x``.

    ``ideal`` draws U1 from the backward test channel X = U1 + N(0, D1);
    ``coded`` runs ``quantizer`` (see ``build_quantizer``) on ``x``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sx, D1 = cfg.sigma_x2, cfg.D1
    if D1 >= sx:
        raise RegionError("D1 must be below the source variance")
    if mode == "ideal":
        rng = np.random.default_rng(seed)
        mean = x * (sx - D1) / sx
        return mean + math.sqrt(D1 * (sx - D1) / sx) * rng.standard_normal(x.shape)
    if mode == "coded":
        if quantizer is None:
            raise ConfigurationError("coded mode needs a LatticeQuantizer")
        u1 = quantizer.chain.base_scale * quantizer.quantize(x, seed)
        mse = float(np.mean((x - u1) ** 2))
        if abs(mse - D1) > 0.25 * D1:
            warnings.warn(f"coded U1 distortion {mse:.4f} is more than 25% off D1={D1}",
                          RuntimeWarning, stacklevel=2)
        return u1
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Decoder-2 scheme


@dataclass(frozen=True)
class GaussianMessage:
    bits: tuple      # one (B, |I_l^Q minus I_l^C|) array per level


def hb_gaussian_encode(code: MultilevelCode, x, u1, seed: int = 0):
    """Quantize x' = x - u1 level by level; returns ``(GaussianMessage, A)``."""
    xp = np.atleast_2d(np.asarray(x, dtype=float) - np.asarray(u1, dtype=float))
    lower = np.zeros(xp.shape, dtype=np.int64)
    digits, msgs = [], []
    for l in range(1, code.chain.levels + 1):
        q, _ = code.levels[l - 1]
        pre = shared_bits(_substream(seed, 100 + l), xp.shape)
        k = sc_quantize(code.models_q[l - 1], (xp, lower), q, pre, _substream(seed, 200 + l))
        msgs.append(k[:, code.transmitted(l)])
        d = polar_transform(k).astype(np.int64)
        digits.append(d)
        lower = lower + (d << (l - 1))
    A = code.chain.base_scale * code.chain.representative(np.stack(digits, axis=-1))
    return GaussianMessage(tuple(msgs)), A


def hb_gaussian_decode2(code: MultilevelCode, msg: GaussianMessage, y, u1, seed: int = 0,
                        return_point: bool = False):
    """Decoder-2 estimate u1 + A + eta (B - A) from y and u1."""
    if len(msg.bits) != code.chain.levels:
        raise ConfigurationError("message level count does not match the chain")
    s = code.scalars
    u1 = np.atleast_2d(np.asarray(u1, dtype=float))
    yp = np.atleast_2d(np.asarray(y, dtype=float)) - u1
    bbar = (s.alpha_q / s.alpha_c) * s.alpha * yp
    lower = np.zeros(bbar.shape, dtype=np.int64)
    digits = []
    for l in range(1, code.chain.levels + 1):
        q, c = code.levels[l - 1]
        trans = code.transmitted(l)
        known = np.zeros(code.N, dtype=bool)
        known[q.frozen] = True
        known[trans] = True
        bits = shared_bits(_substream(seed, 100 + l), bbar.shape)
        bits[:, trans] = msg.bits[l - 1]
        k = sc_decode(code.models_c[l - 1], (bbar, lower), known, bits,
                      np.intersect1d(q.info, c.info), q.shaping)
        d = polar_transform(k).astype(np.int64)
        digits.append(d)
        lower = lower + (d << (l - 1))
    A = code.chain.base_scale * code.chain.representative(np.stack(digits, axis=-1))
    x2 = u1 + A + s.eta * (bbar - A)
    return (x2, A) if return_point else x2

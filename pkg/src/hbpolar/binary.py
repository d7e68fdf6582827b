"""
Polar-code realizations of the binary Heegard-Berger schemes.

Two codecs are provided.  The nested scheme for Region I-B quantizes X to
U1 (a BSC(D1) test channel) and then (X, U1) to U2 through the cascade
U1 - U2 - X.  The two-level scheme for all of Region I splits the ternary
U2 of the Table-I test channel into two bits, U2 = 2 U_b + U_a, and codes
them one after the other.  Decoder 2 sees both messages and the side
information Y = X + BSC(p).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .polar import (
    ConfigurationError,
    ConstructionParams,
    DiscreteModel,
    IndexPartition,
    NestingError,  # noqa: F401  (re-exported)
    build_nested_pair,
    build_partition,
    check_nesting,  # noqa: F401
    estimate_profiles,
    polar_transform,
    sc_decode,
    sc_quantize,
    shared_bits,
)
from .theory import (
    DSBSConfig,
    HBParams,
    HBTestChannel,
    RegionError,
    bconv,
    binary_entropy,
    cascade_joint,
    classify_region_binary,
    critical_distortion,
    entropy_of,
    inner_crossover,
    make_params,
    minimize_S,
    mutual_information,
    table1_joint,
)


class DegradationError(ArithmeticError):
    """Composition of the source test channel with the witness misses the channel one."""


def _bsc(p):
    return np.array([[1 - p, p], [p, 1 - p]])


# ---------------------------------------------------------------------------
# degradation


def degradation_witness(channel: HBTestChannel, tol: float = 1e-10):
    """Intermediate channel ``W`` with ``T_c = T_s W``.

    ``T_s`` maps U2 to (X, U1) and ``T_c`` maps U2 to (Y, U1).  The witness
    passes U1 through and sends X through BSC(p).  Returns ``(bsc_kernel,
    residual)``; raises ``DegradationError`` if the residual exceeds ``tol``.
    """
    j = channel.with_y()                       # [u2, u1, x, y]
    pu2 = j.sum(axis=(1, 2, 3))
    live = pu2 > 0
    Ts = j.sum(axis=3)[live] / pu2[live, None, None]   # [u2, u1, x]
    Tc = j.sum(axis=2)[live] / pu2[live, None, None]   # [u2, u1, y]
    kernel = _bsc(channel.p)
    composed = np.einsum("aux,xy->auy", Ts, kernel)
    residual = float(np.max(np.abs(composed - Tc)))
    if residual > tol:
        raise DegradationError(f"composition residual {residual:.3e} exceeds {tol:.0e}")
    return kernel, residual


# ---------------------------------------------------------------------------
# shared helpers


def _substream(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1, np.uint64)[0])


def _source_and_channel(src_model, chan_model, n, params, src_target, chan_target, entropy,
                        sampler):
    """Nested (source, channel) partitions for one binary variable.

    Both profiles are estimated from the same draws of U (``sampler`` returns
    ``(u, (obs_source, obs_channel))`` and is called with identically seeded
    generators), so the prior profile and the shaping set coincide.
    """
    zs, zu = estimate_profiles(src_model, n, params, lambda r, b, N: _pick(sampler, r, b, N, 0))
    zc, _ = estimate_profiles(chan_model, n, params, lambda r, b, N: _pick(sampler, r, b, N, 1))
    src, chan = build_nested_pair(zs, zc, zu, params, src_target, chan_target, entropy)
    return src, chan, (zs, zc, zu)


def _pick(sampler, rng, batch, N, which):
    u, obs = sampler(rng, batch, N)
    return u, obs[which]


def _transmitted(src: IndexPartition, chan: IndexPartition) -> np.ndarray:
    return np.setdiff1d(src.info, chan.info)


def _decoded(src: IndexPartition, chan: IndexPartition) -> np.ndarray:
    return np.intersect1d(src.info, chan.info)


@dataclass(frozen=True)
class HBMessage:
    """Decoder-1 payload ``msg1`` and the Decoder-2 refinement ``msg2`` (one row per frame).

    Both carry polar-input bits (before the transform) at the designed indices.
    """

    msg1: np.ndarray
    msg2: np.ndarray


@dataclass(frozen=True)
class LossyCode:
    """Polar lossy source code for X through a BSC(D1) test channel."""

    D1: float
    n: int
    model: DiscreteModel
    part: IndexPartition

    def encode(self, x, seed):
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        if x.shape[1] != self.part.N:
            raise ValueError(f"frame length {x.shape[1]} != {self.part.N}")
        pre = shared_bits(_substream(seed, 1), x.shape)
        k = sc_quantize(self.model, x, self.part, pre, _substream(seed, 2))
        return k[:, self.part.info], polar_transform(k)

    def decode(self, msg1, seed):
        msg1 = np.atleast_2d(msg1)
        if msg1.shape[1] != self.part.info.size:
            raise ValueError("msg1 length does not match the information set")
        k = shared_bits(_substream(seed, 1), (msg1.shape[0], self.part.N))
        k[:, self.part.info] = msg1
        return polar_transform(k)


@lru_cache(maxsize=32)
def design_lossy_bsc(D1: float, n: int, params: ConstructionParams) -> LossyCode:
    """Decoder-1 code: uniform U1, X = U1 + BSC(D1), rate target 1 - h(D1)."""
    if not 0 <= D1 <= 0.5:
        raise RegionError("D1 must lie in [0, 0.5]")
    model = DiscreteModel(0.5 * _bsc(D1))
    zs, zu = estimate_profiles(model, n, params)
    part = build_partition(zs, zu, params, 1 - binary_entropy(D1), 1.0, role="source")
    if part.shaping.size:
        raise ConfigurationError("uniform U1 cannot have shaping indices")
    return LossyCode(D1, n, model, part)


# ---------------------------------------------------------------------------
# Region I-B


@dataclass(frozen=True)
class RegionIBCode:
    cfg: DSBSConfig
    n: int
    eta: float
    cs1: LossyCode
    cs2: IndexPartition
    cc2: IndexPartition
    model_s2: DiscreteModel
    model_c2: DiscreteModel
    profiles: tuple = field(repr=False, default=())

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def transmitted2(self) -> np.ndarray:
        return _transmitted(self.cs2, self.cc2)

    @property
    def designed_rate(self) -> float:
        return (self.cs1.part.info.size + self.transmitted2.size) / self.N


def region_ib_models(cfg: DSBSConfig):
    """Cascade test channel and the (2, 4) source / channel joints used for U2."""
    eta = inner_crossover(cfg.D1, cfg.D2)
    ch = cascade_joint(cfg.D2, eta, cfg.p)
    jy = ch.with_y()[:2]                              # [u2, u1, x, y]
    js = jy.sum(axis=3).transpose(0, 2, 1).reshape(2, 4)   # obs = 2x + u1
    jc = jy.sum(axis=2).transpose(0, 2, 1).reshape(2, 4)   # obs = 2y + u1
    return eta, ch, DiscreteModel(js), DiscreteModel(jc)


def design_region_ib(cfg: DSBSConfig, n: int, params: ConstructionParams) -> RegionIBCode:
    if cfg.D1 > 0.5 or cfg.D2 > min(critical_distortion(cfg.p), cfg.D1):
        raise RegionError(f"{cfg} is outside Region I-B")
    eta, ch, ms, mc = region_ib_models(cfg)
    if abs(bconv(cfg.D2, eta) - cfg.D1) > 1e-9:
        raise ArithmeticError("inner crossover does not reproduce D1")
    cs1 = design_lossy_bsc(cfg.D1, n, params)
    j = ch.with_y()[:2]

    def sampler(rng, batch, N):
        flat = rng.choice(16, size=(batch, N), p=j.ravel())
        u2, u1, x, y = np.unravel_index(flat, j.shape)
        return u2.astype(np.uint8), (2 * x + u1, 2 * y + u1)

    src_target = mutual_information(j, (0,), (1, 2))
    chan_target = mutual_information(j, (0,), (1, 3))
    cs2, cc2, prof = _source_and_channel(ms, mc, n, params, src_target, chan_target, 1.0, sampler)
    return RegionIBCode(cfg, n, eta, cs1, cs2, cc2, ms, mc, prof)


def encode_ib(code: RegionIBCode, x, seed: int = 0):
    """Returns ``(HBMessage, u1, u2)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    msg1, u1 = code.cs1.encode(x, _substream(seed, 10))
    pre = shared_bits(_substream(seed, 11), x.shape)
    k2 = sc_quantize(code.model_s2, 2 * x + u1, code.cs2, pre, _substream(seed, 12))
    msg = HBMessage(msg1, k2[:, code.transmitted2])
    return msg, u1, polar_transform(k2)


def decode1_ib(code: RegionIBCode, msg: HBMessage, seed: int = 0):
    return code.cs1.decode(msg.msg1, _substream(seed, 10))


def decode2_ib(code: RegionIBCode, msg: HBMessage, y, seed: int = 0):
    """Decoder-2 reconstruction x2 = u2."""
    y = np.atleast_2d(np.asarray(y, dtype=np.int64))
    if msg.msg2.shape[1] != code.transmitted2.size:
        raise ValueError("msg2 length does not match the designed set")
    u1 = decode1_ib(code, msg, seed).astype(np.int64)
    N = code.N
    known = np.zeros(N, dtype=bool)
    known[code.cs2.frozen] = True
    known[code.transmitted2] = True
    bits = shared_bits(_substream(seed, 11), y.shape)
    bits[:, code.transmitted2] = msg.msg2
    k2 = sc_decode(code.model_c2, 2 * y + u1, known, bits, _decoded(code.cs2, code.cc2),
                   code.cs2.shaping)
    return polar_transform(k2)


# ---------------------------------------------------------------------------
# Region I (two-level)


def level_joint(channel: HBTestChannel) -> np.ndarray:
    """Joint ``P[u_a, u_b, u1, x, y]`` with U2 = 2 U_b + U_a."""
    j = channel.with_y()
    out = np.zeros((2, 2, 2, 2, 2))
    out[0, 0] = j[0]
    out[1, 0] = j[1]
    out[0, 1] = j[2]
    return out


def level_rate_targets(channel: HBTestChannel) -> dict:
    """Exact mutual informations that the set sizes of the two-level code track."""
    P = level_joint(channel)
    A, B, U1, X, Y = range(5)
    return {
        "src_a": mutual_information(P, (A,), (U1, X)),
        "chan_a": mutual_information(P, (A,), (U1, Y)),
        "src_b": mutual_information(P, (B,), (U1, X, A)),
        "chan_b": mutual_information(P, (B,), (U1, Y, A)),
        "H_a": entropy_of(P, (A,)),
        "H_b": entropy_of(P, (B,)),
        "level_a": mutual_information(P, (X,), (A,), (U1, Y)),
        "level_b": mutual_information(P, (X,), (B,), (U1, A, Y)),
        "total": mutual_information(channel.with_y(), (2,), (0,), (1, 3)),
        "decoder1": 1 - entropy_of(P, (U1, X)) + entropy_of(P, (X,)),
    }


@dataclass(frozen=True)
class TwoLevelCode:
    cfg: DSBSConfig
    params: HBParams
    n: int
    cs1: LossyCode
    level_a: tuple          # (source partition, channel partition)
    level_b: tuple
    models: dict = field(repr=False)
    targets: dict = field(repr=False)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def transmitted(self):
        return _transmitted(*self.level_a), _transmitted(*self.level_b)

    @property
    def designed_rate(self) -> float:
        ta, tb = self.transmitted
        return (self.cs1.part.info.size + ta.size + tb.size) / self.N


def _flat_models(P):
    """Level-a and level-b DiscreteModels from ``P[u_a, u_b, u1, x, y]``."""
    pa_x = P.sum(axis=(1, 4)).transpose(0, 2, 1).reshape(2, 4)        # (ua, 2x+u1)
    pa_y = P.sum(axis=(1, 3)).transpose(0, 2, 1).reshape(2, 4)        # (ua, 2y+u1)
    pb_x = P.sum(axis=4).transpose(1, 0, 3, 2).reshape(2, 8)          # (ub, 4ua+2x+u1)
    pb_y = P.sum(axis=3).transpose(1, 0, 3, 2).reshape(2, 8)          # (ub, 4ua+2y+u1)
    return {"sa": DiscreteModel(pa_x), "ca": DiscreteModel(pa_y),
            "sb": DiscreteModel(pb_x), "cb": DiscreteModel(pb_y)}


def design_region_i(cfg: DSBSConfig, n: int, params: ConstructionParams,
                    hb: HBParams | None = None) -> TwoLevelCode:
    region = classify_region_binary(cfg)
    if region not in ("I-A", "I-B"):
        raise RegionError(f"{cfg} lies in region {region}, not Region I")
    if hb is None:
        hb, _ = minimize_S(cfg)
    hb = make_params(hb.alpha, hb.mu, hb.theta, hb.theta1, cfg)
    channel = table1_joint(hb, cfg)
    P = level_joint(channel)
    models = _flat_models(P)
    targets = level_rate_targets(channel)
    cs1 = design_lossy_bsc(cfg.D1, n, params)
    flat_p = P.sum(axis=0).sum(axis=0).ravel()       # (u1, x, y)
    flat_p = flat_p / flat_p.sum()
    pabuxy = P

    def draw_uxy(rng, batch, N):
        flat = rng.choice(8, size=(batch, N), p=flat_p)
        return np.unravel_index(flat, (2, 2, 2))

    def sampler_a(rng, batch, N):
        flat = rng.choice(32, size=(batch, N), p=pabuxy.ravel() / pabuxy.sum())
        ua, ub, u1, x, y = np.unravel_index(flat, pabuxy.shape)
        return ua.astype(np.uint8), (2 * x + u1, 2 * y + u1)

    part_a = _source_and_channel(models["sa"], models["ca"], n, params, targets["src_a"],
                                 targets["chan_a"], targets["H_a"], sampler_a)
    src_a = part_a[0]

    # level-b contexts use u_a as produced by the level-a quantizer
    cond_b = models["sb"].joint / models["sb"].joint.sum(axis=0, keepdims=True).clip(1e-300)

    def sampler_b(rng, batch, N):
        u1, x, y = draw_uxy(rng, batch, N)
        pre = rng.integers(0, 2, size=(batch, N), dtype=np.uint8)
        ka = sc_quantize(models["sa"], 2 * x + u1, src_a, pre, int(rng.integers(2**63)))
        ua = polar_transform(ka).astype(np.int64)
        ob = 4 * ua + 2 * x + u1
        ub = (rng.random((batch, N)) < cond_b[1, ob]).astype(np.uint8)
        return ub, (ob, 4 * ua + 2 * y + u1)

    part_b = _source_and_channel(models["sb"], models["cb"], n, params, targets["src_b"],
                                 targets["chan_b"], targets["H_b"], sampler_b)
    return TwoLevelCode(cfg, hb, n, cs1, part_a[:2], part_b[:2], models, targets)


def encode_region_i(code: TwoLevelCode, x, seed: int = 0):
    """Returns ``(HBMessage, u1, u_a, u_b)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    msg1, u1 = code.cs1.encode(x, _substream(seed, 10))
    u1 = u1.astype(np.int64)
    ta, tb = code.transmitted
    ka = sc_quantize(code.models["sa"], 2 * x + u1, code.level_a[0],
                     shared_bits(_substream(seed, 21), x.shape), _substream(seed, 22))
    ua = polar_transform(ka)
    kb = sc_quantize(code.models["sb"], 4 * ua.astype(np.int64) + 2 * x + u1, code.level_b[0],
                     shared_bits(_substream(seed, 31), x.shape), _substream(seed, 32))
    msg2 = np.concatenate([ka[:, ta], kb[:, tb]], axis=1)
    return HBMessage(msg1, msg2), u1.astype(np.uint8), ua, polar_transform(kb)


def reconstruct2(ua, ub, y) -> np.ndarray:
    """phi2 on the two-level labels: u2 in {0, 1} is output as is, u2 = 2 (or the
    invalid pair u_a = u_b = 1) outputs the side information."""
    return np.where(np.asarray(ub) == 0, ua, y).astype(np.uint8)


def decode2_region_i(code: TwoLevelCode, msg: HBMessage, y, seed: int = 0,
                     return_levels: bool = False):
    y = np.atleast_2d(np.asarray(y, dtype=np.int64))
    ta, tb = code.transmitted
    if msg.msg2.shape[1] != ta.size + tb.size:
        raise ValueError("msg2 length does not match the designed sets")
    u1 = code.cs1.decode(msg.msg1, _substream(seed, 10)).astype(np.int64)
    N = code.N

    def level(part, trans, payload, obs, model, tag):
        src, chan = part
        known = np.zeros(N, dtype=bool)
        known[src.frozen] = True
        known[trans] = True
        bits = shared_bits(_substream(seed, tag), y.shape)
        bits[:, trans] = payload
        return polar_transform(sc_decode(model, obs, known, bits, _decoded(src, chan),
                                         src.shaping))

    ua = level(code.level_a, ta, msg.msg2[:, :ta.size], 2 * y + u1, code.models["ca"], 21)
    ub = level(code.level_b, tb, msg.msg2[:, ta.size:], 4 * ua.astype(np.int64) + 2 * y + u1,
               code.models["cb"], 31)
    x2 = reconstruct2(ua, ub, y)
    return (x2, ua, ub) if return_levels else x2


# ---------------------------------------------------------------------------
# exact small-n analysis


@dataclass(frozen=True)
class ExactAnalysis:
    """Exact quantities for a code at n <= 3.

    ``V`` is the variational distance between the joint law of (O, K) under
    ideal randomized rounding at every index and under the actual scheme.
    """

    V: float
    z_cond: np.ndarray
    z_prior: np.ndarray


def exact_small_n_distributions(model: DiscreteModel, partition: IndexPartition) -> ExactAnalysis:
    """Enumerate every observation sequence and every polar input to get V and Z exactly."""
    n, N = partition.n, partition.N
    M = model.joint.shape[1]
    if n > 3 or M ** N * 2 ** N > 2 ** 26:
        raise ValueError("exact enumeration is limited to n <= 3 and small alphabets")
    ks = np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.uint8)   # MSB = index 0
    us = polar_transform(ks)
    obs = np.array(list(itertools.product(range(M), repeat=N)))
    # P(o, k) = prod_i P(u_i, o_i)
    logj = np.log(np.clip(model.joint, 1e-300, None))
    Pok = np.exp(sum(logj[us[None, :, i], obs[:, None, i]] for i in range(N)))
    Pok *= (model.joint[us[None, :, 0], obs[:, None, 0]] > 0)  # exact zeros
    for i in range(1, N):
        Pok *= (model.joint[us[None, :, i], obs[:, None, i]] > 0)
    pu = model.p_u
    Pk = np.prod(pu[us], axis=1)

    shape = (obs.shape[0],) + (2,) * N
    T = Pok.reshape(shape)
    Tp = Pk.reshape((2,) * N)
    roles = partition.quantizer_roles()
    from .polar import MAP, PIN, ROUND, SHAPE  # noqa: F401

    q = np.ones_like(T)
    z_cond = np.zeros(N)
    z_prior = np.zeros(N)
    for i in range(N):
        marg = T.sum(axis=tuple(range(i + 2, N + 1))) if i + 1 < N else T   # (O, k_1..k_{i+1})
        margp = Tp.sum(axis=tuple(range(i + 1, N))) if i + 1 < N else Tp
        z_cond[i] = 2 * np.sqrt(marg[..., 0] * marg[..., 1]).sum()
        z_prior[i] = 2 * np.sqrt(margp[..., 0] * margp[..., 1]).sum()
        tot = marg.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(tot > 0, marg / tot, 0.5)
        if roles[i] == PIN:
            fac = np.full_like(cond, 0.5)
        elif roles[i] == SHAPE:
            bit1 = margp[..., 1] > margp[..., 0]
            fac = np.stack([~bit1, bit1], axis=-1).astype(float)
            fac = np.broadcast_to(fac, cond.shape)
        else:
            fac = cond
        q = q * fac.reshape(fac.shape + (1,) * (N - i - 1))
    Po = T.reshape(obs.shape[0], -1).sum(axis=1)
    Q = q.reshape(obs.shape[0], -1) * Po[:, None]
    V = 0.5 * float(np.abs(Pok - Q).sum())
    return ExactAnalysis(V, z_cond, z_prior)

"""
Polar coding engine shared by every codec in the package.

Everything here is driven by *leaf log-likelihood ratios*: for a memoryless
model, position ``j`` of a frame carries ``log P(U_j = 0 | o_j) / P(U_j = 1 | o_j)``
and the successive-cancellation (SC) recursion turns those into the
sequential posteriors ``P(K_i | K_{1:i-1}, o_{1:N})`` of the synthesized bits
``K = U G_N``.  The same recursion is used for

* construction (genie-aided, every bit pinned to its true value),
* lossy compression (randomized rounding on the information set, MAP on the
  shaping set, shared random bits on the frozen set),
* channel decoding (MAP on the decodable set).

Frames are numpy ``uint8`` arrays of shape ``(N,)`` or ``(batch, N)``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace, field

import numpy as np
from scipy.special import expit

# Leaf posteriors are clamped to [1e-12, 1 - 1e-12].
LLR_MAX = math.log((1.0 - 1e-12) / 1e-12)

# SC leaf roles.
PIN, ROUND, MAP, SHAPE = 0, 1, 2, 3


class ConfigurationError(ValueError):
    """Raised when a code or decoder is asked to do something ill-posed."""


def _log2_length(length: int) -> int:
    n = int(length).bit_length() - 1
    if length < 1 or (1 << n) != length:
        raise ConfigurationError(f"frame length must be a power of two, got {length}")
    return n


def as_frame(bits, n: int | None = None) -> np.ndarray:
    """Validate a bit frame (or batch of frames) and return it as uint8."""
    arr = np.asarray(bits)
    if arr.ndim not in (1, 2):
        raise ConfigurationError("expected a frame (N,) or a batch of frames (B, N)")
    m = _log2_length(arr.shape[-1])
    if n is not None and m != n:
        raise ConfigurationError(f"expected frames of length {1 << n}, got {arr.shape[-1]}")
    if arr.dtype != np.uint8:
        if np.any((arr != 0) & (arr != 1)):
            raise ConfigurationError("frame entries must be 0 or 1")
        arr = arr.astype(np.uint8)
    return arr


def polar_transform(u) -> np.ndarray:
    """Multiply by ``G_N = G_2^{(x)n}`` over GF(2) with butterfly passes.

    Works on the last axis, so batches of frames are transformed at once.
    The transform is its own inverse.
    """
    x = as_frame(u).copy()
    N = x.shape[-1]
    lead = x.shape[:-1]
    h = N // 2
    while h >= 1:
        view = x.reshape(*lead, N // (2 * h), 2, h)
        view[..., 0, :] ^= view[..., 1, :]
        h //= 2
    return x


def bhattacharyya(joint) -> float:
    """Bhattacharyya parameter ``2 sum_y sqrt(P(0, y) P(1, y))`` of a joint pmf.

    ``joint`` has shape ``(2, M)``: the first axis is the binary variable,
    the second an arbitrary finite observation alphabet (flattened).
    """
    p = np.asarray(joint, dtype=float)
    if p.shape[0] != 2:
        raise ConfigurationError("joint pmf must have a leading axis of size 2")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigurationError("joint pmf must be nonnegative and sum to 1")
    p = p.reshape(2, -1)
    return float(min(1.0, 2.0 * np.sum(np.sqrt(p[0] * p[1]))))


def z_from_llr(llr) -> np.ndarray:
    """``2 sqrt(p0 p1)`` for posteriors given as LLRs, overflow-free."""
    a = np.abs(np.asarray(llr, dtype=float))
    e = np.exp(-a)
    return 2.0 * np.sqrt(e) / (1.0 + e)


def clamp_llr(llr) -> np.ndarray:
    return np.clip(llr, -LLR_MAX, LLR_MAX)


def shared_bits(seed: int, shape) -> np.ndarray:
    """Pre-shared uniform bits; encoder and decoders call this with the same seed."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x5EED])
    return rng.integers(0, 2, size=shape, dtype=np.uint8)


# ---------------------------------------------------------------------------
# source models


class SequentialSourceModel(ABC):
    """A binary variable ``U`` observed per position through some side data.

    Subclasses provide leaf LLRs with and without the observation, and a way
    to sample joint realizations for Monte-Carlo construction.  Observations
    are whatever object the model understands (an array, a tuple of arrays).
    """

    @abstractmethod
    def llr(self, obs) -> np.ndarray:
        """Per-position ``log P(U=0 | o) / P(U=1 | o)``, shape ``(B, N)``."""

    def prior_llr(self, obs) -> np.ndarray | None:
        """Per-position LLR of ``U`` ignoring the observation (``None`` = uniform)."""
        return None

    @abstractmethod
    def sample(self, rng: np.random.Generator, batch: int, N: int):
        """Draw ``(u, obs)`` from the joint law; ``u`` has shape ``(batch, N)``."""


class DiscreteModel(SequentialSourceModel):
    """Memoryless model given by a joint pmf ``P(U = u, O = o)`` of shape ``(2, M)``.

    Observations are integer codes in ``range(M)``.
    """

    def __init__(self, joint):
        p = np.asarray(joint, dtype=float)
        if p.ndim != 2 or p.shape[0] != 2:
            raise ValueError("joint must have shape (2, M)")
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("joint pmf must be nonnegative and sum to 1")
        p = np.clip(p, 0.0, None)
        self.joint = p / p.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            table = np.log(self.joint[0]) - np.log(self.joint[1])
        table = np.nan_to_num(table, nan=0.0, posinf=LLR_MAX, neginf=-LLR_MAX)
        self._table = clamp_llr(table)
        pu = self.joint.sum(axis=1)
        self._prior = None
        if abs(pu[0] - 0.5) > 1e-15:
            self._prior = float(clamp_llr(math.log(pu[0]) - math.log(pu[1])) if pu[1] > 0 else LLR_MAX)
        self._cdf = np.cumsum(self.joint.ravel())

    @property
    def p_u(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def llr(self, obs):
        return self._table[np.asarray(obs)]

    def prior_llr(self, obs):
        if self._prior is None:
            return None
        return np.full(np.shape(obs), self._prior)

    def sample(self, rng, batch, N):
        r = rng.random((batch, N))
        flat = np.minimum(np.searchsorted(self._cdf, r, side="right"), self._cdf.size - 1)
        u, o = np.divmod(flat, self.joint.shape[1])
        return u.astype(np.uint8), o


# ---------------------------------------------------------------------------
# successive cancellation


def _f(a, b):
    # exact check-node update 2 atanh(tanh(a/2) tanh(b/2)), min-sum plus correction
    core = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    return core + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


class _SCPass:
    """One batched SC sweep over a (T, B, N) stack of leaf LLR trees.

    Tree 0 carries the conditional LLRs; tree ``T-1`` the prior LLRs used by
    ``SHAPE`` leaves.  All trees share the decided bits.
    """

    def __init__(self, llr, roles, pinned, uniforms, record):
        self.roles = roles
        self.pinned = pinned
        self.uniforms = uniforms
        T, B, N = llr.shape
        self.bits = np.zeros((B, N), dtype=np.uint8)
        self.leaf = np.zeros((T, B, N)) if record else None
        self.record = record
        # prefix counts of pinned leaves, to skip fully pinned subtrees
        self._pin_csum = np.concatenate([[0], np.cumsum(roles == PIN)])

    def run(self, llr):
        self._node(llr, 0)
        return self.bits

    def _node(self, llr, lo):
        m = llr.shape[-1]
        if not self.record and self._pin_csum[lo + m] - self._pin_csum[lo] == m:
            seg = self.pinned[:, lo:lo + m]
            self.bits[:, lo:lo + m] = seg
            return polar_transform(seg) if m > 1 else seg
        if m == 1:
            return self._leaf(llr, lo)
        h = m // 2
        a = llr[..., :h]
        b = llr[..., h:]
        left = self._node(_f(a, b), lo)
        right = self._node(np.where(left[None].astype(bool), b - a, b + a), lo + h)
        return np.concatenate([left ^ right, right], axis=-1)

    def _leaf(self, llr, i):
        if self.record:
            self.leaf[:, :, i] = llr[:, :, 0]
        role = self.roles[i]
        if role == PIN:
            bit = self.pinned[:, i]
        elif role == ROUND:
            bit = (self.uniforms[:, i] >= expit(llr[0, :, 0])).astype(np.uint8)
        elif role == MAP:
            bit = (llr[0, :, 0] < 0).astype(np.uint8)
        else:
            bit = (llr[-1, :, 0] < 0).astype(np.uint8)
        self.bits[:, i] = bit
        return bit[:, None]


def successive_cancellation(llr, roles, pinned=None, uniforms=None, prior_llr=None,
                            record=False):
    """Run a batched SC sweep.

    Parameters
    ----------
    llr : array (B, N)
        Conditional leaf LLRs.
    roles : int array (N,)
        ``PIN`` copies ``pinned``, ``ROUND`` draws from the conditional
        posterior using ``uniforms``, ``MAP`` takes the arg-max of the
        conditional posterior, ``SHAPE`` the arg-max of the prior posterior
        (ties go to 0).
    prior_llr : array (B, N), optional
        Prior leaf LLRs for ``SHAPE`` leaves; uniform prior if omitted.
    record : bool
        Also return the sequential LLRs seen at every leaf, shape (T, B, N).
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=float))
    B, N = llr.shape
    _log2_length(N)
    roles = np.asarray(roles, dtype=np.int8)
    if roles.shape != (N,):
        raise ValueError("roles must have one entry per position")
    trees = [clamp_llr(llr)]
    if prior_llr is not None:
        trees.append(clamp_llr(np.broadcast_to(prior_llr, (B, N))))
    elif np.any(roles == SHAPE) or record:
        trees.append(np.zeros((B, N)))
    stack = np.stack(trees)
    if pinned is None:
        if np.any(roles == PIN):
            raise ConfigurationError("pinned leaves need pinned values")
        pinned = np.zeros((B, N), dtype=np.uint8)
    pinned = np.broadcast_to(np.asarray(pinned, dtype=np.uint8), (B, N))
    if uniforms is None:
        if np.any(roles == ROUND):
            raise ConfigurationError("randomized rounding needs uniforms")
    sc = _SCPass(stack, roles, pinned, uniforms, record)
    bits = sc.run(stack)
    if record:
        return bits, sc.leaf
    return bits


# ---------------------------------------------------------------------------
# construction


@dataclass(frozen=True)
class ConstructionParams:
    """Knobs for Monte-Carlo construction and set partitioning.

    ``rate_margin`` is the slack added to source codes and ``channel_margin``
    (defaulting to ``rate_margin``) the slack removed from channel codes in
    rank mode.  At blocklength N the slack actually used is
    ``margin * (N / 1024) ** -margin_decay``, so ``margin_decay = 0`` keeps
    it fixed.
    """

    num_samples: int = 200
    beta: float = 0.25
    beta_prime: float = 0.2
    rate_margin: float = 0.0
    seed: int = 0
    mode: str = "rank"
    margin_decay: float = 0.0
    channel_margin: float | None = None
    error_budget: float | None = None
    batch_size: int = 64

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        if not 0 < self.beta_prime < self.beta < 0.5:
            raise ValueError("need 0 < beta_prime < beta < 0.5")
        if self.rate_margin < 0:
            raise ValueError("rate_margin must be nonnegative")
        if self.channel_margin is not None and self.channel_margin < 0:
            raise ValueError("channel_margin must be nonnegative")
        if self.error_budget is not None and self.error_budget <= 0:
            raise ValueError("error_budget must be positive")
        if self.margin_decay < 0:
            raise ValueError("margin_decay must be nonnegative")
        if self.mode not in ("threshold", "rank"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def threshold(self, n: int) -> float:
        return 2.0 ** -((2 ** n) ** self.beta)

    def margin(self, n: int, role: str = "source") -> float:
        base = self.rate_margin
        if role == "channel" and self.channel_margin is not None:
            base = self.channel_margin
        return base * (2.0 ** (n - 10)) ** -self.margin_decay


def estimate_profiles(model: SequentialSourceModel, n: int, params: ConstructionParams,
                      sampler=None):
    """Monte-Carlo Bhattacharyya profiles ``(z_cond, z_prior)``.

    ``z_cond[i]`` estimates ``Z(K_i | K_{1:i-1}, O)`` and ``z_prior[i]``
    estimates ``Z(K_i | K_{1:i-1})``.  Contexts are drawn from
    ``model.sample`` unless a ``sampler(rng, batch, N) -> (u, obs)`` is given.
    """
    if params.num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    N = 1 << n
    rng = np.random.default_rng(params.seed)
    draw = sampler or model.sample
    acc = np.zeros((2, N))
    done = 0
    roles = np.full(N, PIN, dtype=np.int8)
    while done < params.num_samples:
        b = min(params.batch_size, params.num_samples - done)
        u, obs = draw(rng, b, N)
        k = polar_transform(u)
        _, leaf = successive_cancellation(model.llr(obs), roles, pinned=k,
                                          prior_llr=model.prior_llr(obs), record=True)
        acc += z_from_llr(leaf).sum(axis=1)
        done += b
    return acc[0] / done, acc[1] / done


def estimate_profile(model: SequentialSourceModel, n: int, params: ConstructionParams,
                     sampler=None) -> np.ndarray:
    """Monte-Carlo estimate of ``Z(K_i | K_{1:i-1}, O)`` for every index."""
    return estimate_profiles(model, n, params, sampler)[0]


@dataclass(frozen=True)
class IndexPartition:
    """Disjoint frozen / information / shaping index sets covering ``[N]``."""

    frozen: np.ndarray
    info: np.ndarray
    shaping: np.ndarray
    n: int
    _roles: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        N = 1 << self.n
        sets = [np.unique(np.asarray(s, dtype=np.int64)) for s in (self.frozen, self.info, self.shaping)]
        for name, s in zip(("frozen", "info", "shaping"), sets):
            object.__setattr__(self, name, s)
        allidx = np.concatenate(sets)
        if allidx.size != N or np.unique(allidx).size != N or allidx.min(initial=0) < 0 or allidx.max(initial=0) >= N:
            raise ValueError("frozen, info and shaping sets must partition range(N)")
        roles = np.empty(N, dtype=np.int8)
        roles[self.frozen] = PIN
        roles[self.info] = ROUND
        roles[self.shaping] = SHAPE
        object.__setattr__(self, "_roles", roles)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def rate(self) -> float:
        return self.info.size / self.N

    def quantizer_roles(self) -> np.ndarray:
        return self._roles.copy()

    def mask(self, which: str) -> np.ndarray:
        m = np.zeros(self.N, dtype=bool)
        m[getattr(self, which)] = True
        return m


def build_partition(z_good, z_uncond, params: ConstructionParams, target: float | None = None,
                    entropy: float = 1.0, role: str = "source") -> IndexPartition:
    """Split ``[N]`` into frozen / information / shaping sets.

    ``threshold`` mode applies the ``2^{-N^beta}`` rules literally (the
    ``role`` picks the source-code or channel-code variant).  ``rank`` mode
    sizes the sets from ``entropy`` = H(U) and ``target``, the mutual
    information between ``U`` and the observation:

    * shaping: the threshold rule on ``z_uncond`` as in ``threshold`` mode;
    * source: freeze the ``N (entropy - target - margin)`` least reliable
      remaining indices and keep the rest as information bits;
    * channel: freeze the ``N (entropy - target + margin)`` least reliable
      remaining indices and keep the rest as information bits.  With an
      ``error_budget`` the information set is further cut to the longest
      most-reliable run whose summed ``z_good`` stays within the budget.
    """
    zg = np.asarray(z_good, dtype=float)
    zu = np.asarray(z_uncond, dtype=float)
    if zg.shape != zu.shape or zg.ndim != 1:
        raise ValueError("profiles must be 1-D and of equal length")
    n = _log2_length(zg.size)
    N = zg.size
    delta = params.threshold(n)
    idx = np.arange(N)
    if role not in ("source", "channel"):
        raise ValueError(f"unknown role {role!r}")

    if params.mode == "threshold":
        if role == "source":
            shaping = zu <= delta
            frozen = (zg >= 1 - delta) & ~shaping
            info = ~frozen & ~shaping
        else:
            frozen = zg >= 1 - delta
            info = (zg <= delta) & (zu >= 1 - delta)
            shaping = ~info & ((zu < 1 - delta) | ((zg > delta) & (zg < 1 - delta)))
            frozen &= ~shaping
            # indices matching no rule stay with the shaping set
            shaping |= ~(frozen | info | shaping)
        return IndexPartition(idx[frozen], idx[info], idx[shaping], n)

    if target is None:
        raise ConfigurationError("rank mode needs a target rate")
    if not 0.0 <= target <= 1.0:
        raise ConfigurationError(f"target rate must lie in [0, 1], got {target}")
    margin = params.margin(n, role)
    shaping = zu <= delta
    free = idx[~shaping]
    order = free[np.argsort(zg[free], kind="stable")]  # most reliable first
    if role == "source":
        k = int(math.floor(N * (entropy - target - margin) + 1e-9))
        k = min(max(k, 0), order.size)
        frozen = order[order.size - k:]
        info = order[:order.size - k]
    else:
        n_frozen = int(math.ceil(N * (entropy - target + margin) - 1e-9))
        k = min(max(order.size - n_frozen, 0), order.size)
        if params.error_budget is not None:
            spent = np.cumsum(zg[order[:k]])
            k = int(np.searchsorted(spent, params.error_budget, side="right"))
        info = order[:k]
        frozen = order[k:]
    return IndexPartition(frozen, info, idx[shaping], n)


class NestingError(ConfigurationError):
    """Constructed source and channel sets are not nested."""


def check_nesting(src: IndexPartition, chan: IndexPartition):
    """Raise ``NestingError`` unless F_S within F_C, I_C within I_S, S_S within S_C."""
    ok = (np.all(np.isin(src.frozen, chan.frozen)) and np.all(np.isin(chan.info, src.info))
          and np.all(np.isin(src.shaping, chan.shaping)))
    if not ok:
        raise NestingError("source/channel sets are not nested; raise num_samples")


def build_nested_pair(z_src, z_chan, z_uncond, params: ConstructionParams, src_target=None,
                      chan_target=None, entropy: float = 1.0):
    """Source and channel partitions for one variable, nested as F_S <= F_C, I_C <= I_S.

    Threshold mode builds both literally and checks the nesting.  Rank mode
    restricts the channel information set to the source one (those are the
    only indices the decoder has to estimate) and applies ``error_budget``
    to that restricted set.
    """
    src = build_partition(z_src, z_uncond, params, src_target, entropy, role="source")
    if params.mode == "threshold":
        chan = build_partition(z_chan, z_uncond, params, chan_target, entropy, role="channel")
        check_nesting(src, chan)
        return src, chan
    chan = build_partition(z_chan, z_uncond, replace(params, error_budget=None), chan_target,
                           entropy, role="channel")
    zc = np.asarray(z_chan, dtype=float)
    info = np.intersect1d(chan.info, src.info)
    if params.error_budget is not None:
        info = info[np.argsort(zc[info], kind="stable")]
        spent = np.cumsum(zc[info])
        info = np.sort(info[:int(np.searchsorted(spent, params.error_budget, side="right"))])
    rest = np.setdiff1d(np.arange(src.N), np.union1d(info, src.shaping))
    return src, IndexPartition(rest, info, src.shaping, src.n)


# ---------------------------------------------------------------------------
# compression and decoding


def sc_quantize(model: SequentialSourceModel, obs, partition: IndexPartition, preshared,
                seed: int) -> np.ndarray:
    """Lossy compression of ``obs`` into ``k`` (so that ``U = k G_N``).

    Frozen bits are copied from ``preshared``, information bits are drawn
    from the sequential posterior, shaping bits take the prior arg-max.
    """
    llr = np.atleast_2d(model.llr(obs))
    B, N = llr.shape
    if N != partition.N:
        raise ValueError("observation length does not match the partition")
    pre = np.asarray(preshared, dtype=np.uint8)
    if pre.shape[-1] == partition.frozen.size and partition.frozen.size != N:
        full = np.zeros((B, N), dtype=np.uint8)
        full[:, partition.frozen] = pre
        pre = full
    uniforms = np.random.default_rng(seed).random((B, N))
    return successive_cancellation(llr, partition.quantizer_roles(), pinned=pre,
                                   uniforms=uniforms, prior_llr=model.prior_llr(obs))


def sc_decode(model: SequentialSourceModel, obs, known_mask, known_bits, decode_set,
              shaping_set=()) -> np.ndarray:
    """SC decoding with pinned indices.

    Indices in ``known_mask`` are copied from ``known_bits``; indices in
    ``shaping_set`` take the prior arg-max; indices in ``decode_set`` take the
    arg-max of the conditional posterior.  Any other index is an error.
    """
    llr = np.atleast_2d(model.llr(obs))
    B, N = llr.shape
    known_mask = np.asarray(known_mask, dtype=bool)
    roles = np.full(N, -1, dtype=np.int8)
    roles[np.asarray(decode_set, dtype=np.int64)] = MAP
    roles[np.asarray(shaping_set, dtype=np.int64)] = SHAPE
    roles[known_mask] = PIN
    if np.any(roles < 0):
        bad = np.flatnonzero(roles < 0)[:5]
        raise ConfigurationError(f"indices neither pinned nor decodable: {bad.tolist()}...")
    return successive_cancellation(llr, roles, pinned=known_bits,
                                   prior_llr=model.prior_llr(obs))

"""
Seeded Monte-Carlo experiment driver with CSV output.

One ``ResultRow`` is produced per (n, D2) point.  Seeds are split with
``numpy.random.SeedSequence``: the construction seed of a point depends on
(master seed, n) only, so the Decoder-1 code is shared across the D2 sweep,
and the frame seed depends on (master seed, n, point index).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .binary import (
    decode2_ib,
    decode2_region_i,
    design_region_i,
    design_region_ib,
    encode_ib,
    encode_region_i,
)
from .lattice import (
    build_quantizer,
    design_gaussian,
    hb_gaussian_decode2,
    hb_gaussian_encode,
    quantize_u1,
)
from .polar import ConfigurationError, ConstructionParams
from .theory import (
    DSBSConfig,
    GaussianHBConfig,
    InfeasibleParameterError,
    RegionError,
    classify_region_binary,
    classify_region_gaussian,
    hbrdf_binary,
    hbrdf_binary_ib,
    hbrdf_gaussian,
    minimize_S,
)

log = logging.getLogger(__name__)

KINDS = ("binary-ib", "binary-region-i", "gaussian")
DESIGN_ERRORS = (ConfigurationError, RegionError, InfeasibleParameterError, ArithmeticError)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "binary-ib"
    p: float = 0.4
    sigma_x2: float = 1.0
    sigma_z2: float = 1.0
    d1: float = 0.35
    d2: tuple = (0.05, 0.10, 0.15)
    n: tuple = (10, 12, 14, 16)
    frames: int = 500
    rate_margin: float = 0.04
    channel_margin: float | None = 0.10
    error_budget: float | None = None
    margin_decay: float = 0.15
    num_samples: int = 128
    seed: int = 0
    mode: str = "rank"
    u1_mode: str = "ideal"
    batch: int = 100
    eps: float = 1e-3
    tail: float = 1e-3
    out: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "d2", tuple(float(v) for v in np.atleast_1d(self.d2)))
        object.__setattr__(self, "n", tuple(int(v) for v in np.atleast_1d(self.n)))
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.d2 or not self.n:
            raise ConfigurationError("d2 and n sweeps must be non-empty")
        if self.frames < 1 or self.batch < 1:
            raise ConfigurationError("frames and batch must be at least 1")
        if self.u1_mode not in ("ideal", "coded"):
            raise ConfigurationError(f"unknown u1_mode {self.u1_mode!r}")
        if any(v < 1 for v in self.n):
            raise ConfigurationError("every n must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def construction(self, n: int, seed: int) -> ConstructionParams:
        return ConstructionParams(num_samples=self.num_samples, rate_margin=self.rate_margin,
                                  channel_margin=self.channel_margin,
                                  error_budget=self.error_budget, margin_decay=self.margin_decay,
                                  mode=self.mode, seed=seed)


def _fmt(v: float) -> float:
    return float("%.10g" % v)


@dataclass(frozen=True)
class ResultRow:
    n: int
    D2_target: float
    designed_rate: float
    empirical_D1: float
    empirical_D2: float
    block_error_rate_decoder2: float
    theory_rate: float
    seed: int

    def __post_init__(self):
        # round once so the CSV round trip is exact
        for f in fields(self):
            v = getattr(self, f.name)
            object.__setattr__(self, f.name, int(v) if f.type in (int, "int") else _fmt(v))


# ---------------------------------------------------------------------------
# seeds


def _split(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0] >> 1)


def construction_seed(master: int, n: int) -> int:
    return _split(master, n)


def frame_seed(master: int, n: int, index: int) -> int:
    return _split(master, n, index)


def _streams(fseed: int):
    """Source generator and a per-batch codec seed rule, kept independent."""
    return np.random.default_rng(_split(fseed, 0)), lambda done: _split(fseed, 1, done)


# ---------------------------------------------------------------------------
# theory


def theory_rate(cfg: ExperimentConfig, D2: float) -> float:
    if cfg.kind == "gaussian":
        return float(hbrdf_gaussian(GaussianHBConfig(cfg.sigma_x2, cfg.sigma_z2, cfg.d1, D2)))
    dsbs = DSBSConfig(cfg.p, cfg.d1, D2)
    if cfg.kind == "binary-ib":
        return float(hbrdf_binary_ib(dsbs))
    if classify_region_binary(dsbs) in ("I-A", "I-B"):
        return float(minimize_S(dsbs)[1])
    return float(hbrdf_binary(dsbs)[0])


def emit_theory_curve(cfg: ExperimentConfig, points: int = 200, d2_range=None):
    """Dense ``(D2, rate, label)`` triples over the configured D2 range.

    Binary curves use the region-appropriate expression; ``label`` names it.
    """
    if points < 100:
        raise ValueError("a theory curve needs at least 100 points")
    lo, hi = d2_range if d2_range is not None else (min(cfg.d2), max(cfg.d2))
    if lo == hi:
        lo, hi = 0.0, max(hi, 1e-3)
    grid = np.linspace(lo, hi, points)
    out = []
    for D2 in grid:
        if cfg.kind == "gaussian":
            g = GaussianHBConfig(cfg.sigma_x2, cfg.sigma_z2, cfg.d1, float(D2))
            out.append((float(D2), float(hbrdf_gaussian(g)), classify_region_gaussian(g)))
        else:
            rate, label = hbrdf_binary(DSBSConfig(cfg.p, cfg.d1, float(D2)))
            out.append((float(D2), float(rate), label))
    return out


# ---------------------------------------------------------------------------
# one point


def _binary_frames(rng, batch, N, p):
    x = rng.integers(0, 2, (batch, N), dtype=np.int64)
    y = x ^ (rng.random((batch, N)) < p)
    return x, y


def _run_binary_ib(cfg, D2, n, cseed, fseed):
    dsbs = DSBSConfig(cfg.p, cfg.d1, D2)
    code = design_region_ib(dsbs, n, cfg.construction(n, cseed))
    rng, codec_seed = _streams(fseed)
    N, done, d1, d2, bl = code.N, 0, 0, 0, 0
    while done < cfg.frames:
        B = min(cfg.batch, cfg.frames - done)
        x, y = _binary_frames(rng, B, N, cfg.p)
        msg, u1, u2 = encode_ib(code, x, seed=codec_seed(done))
        x2 = decode2_ib(code, msg, y, seed=codec_seed(done))
        d1 += int((x != u1).sum())
        d2 += int((x != x2).sum())
        bl += int(np.any(x2 != u2, axis=1).sum())
        done += B
    return code.designed_rate, d1 / (done * N), d2 / (done * N), bl / done


def _run_region_i(cfg, D2, n, cseed, fseed):
    dsbs = DSBSConfig(cfg.p, cfg.d1, D2)
    code = design_region_i(dsbs, n, cfg.construction(n, cseed))
    rng, codec_seed = _streams(fseed)
    N, done, d1, d2, bl = code.N, 0, 0, 0, 0
    while done < cfg.frames:
        B = min(cfg.batch, cfg.frames - done)
        x, y = _binary_frames(rng, B, N, cfg.p)
        msg, u1, ua, ub = encode_region_i(code, x, seed=codec_seed(done))
        x2, ua2, ub2 = decode2_region_i(code, msg, y, seed=codec_seed(done), return_levels=True)
        d1 += int((x != u1).sum())
        d2 += int((x != x2).sum())
        bl += int(np.any((ua2 != ua) | (ub2 != ub), axis=1).sum())
        done += B
    return code.designed_rate, d1 / (done * N), d2 / (done * N), bl / done


def _run_gaussian(cfg, D2, n, cseed, fseed):
    g = GaussianHBConfig(cfg.sigma_x2, cfg.sigma_z2, cfg.d1, D2)
    params = cfg.construction(n, cseed)
    code = design_gaussian(g, n, params, cfg.eps, cfg.tail)
    quant = None
    if cfg.u1_mode == "coded":
        quant = build_quantizer(g.sigma_x2 - g.D1, g.D1, n, params, cfg.eps, cfg.tail)
        rate1 = quant.rate
    else:
        rate1 = 0.5 * math.log2(g.sigma_x2 / g.D1)
    rng, codec_seed = _streams(fseed)
    N, done, d1, d2, bl = code.N, 0, 0.0, 0.0, 0
    while done < cfg.frames:
        B = min(cfg.batch, cfg.frames - done)
        x = rng.standard_normal((B, N)) * math.sqrt(g.sigma_x2)
        y = x + rng.standard_normal((B, N)) * math.sqrt(g.sigma_z2)
        s = codec_seed(done)
        u1 = quantize_u1(x, g, cfg.u1_mode, seed=_split(s, 1), quantizer=quant)
        msg, A = hb_gaussian_encode(code, x, u1, seed=s)
        x2, Ad = hb_gaussian_decode2(code, msg, y, u1, seed=s, return_point=True)
        d1 += float(((x - u1) ** 2).sum())
        d2 += float(((x - x2) ** 2).sum())
        bl += int(np.any(np.abs(A - Ad) > 1e-9, axis=1).sum())
        done += B
    return rate1 + code.rate, d1 / (done * N), d2 / (done * N), bl / done


_RUNNERS = {"binary-ib": _run_binary_ib, "binary-region-i": _run_region_i,
            "gaussian": _run_gaussian}


def run_point(cfg: ExperimentConfig, n: int, index: int) -> ResultRow:
    """Design, simulate and aggregate the point ``(n, cfg.d2[index])``."""
    D2 = cfg.d2[index]
    cseed, fseed = construction_seed(cfg.seed, n), frame_seed(cfg.seed, n, index)
    try:
        theory = theory_rate(cfg, D2)
    except DESIGN_ERRORS as exc:
        log.warning("theory rate unavailable at n=%d D2=%g: %s", n, D2, exc)
        theory = math.nan
    try:
        rate, d1, d2, bler = _RUNNERS[cfg.kind](cfg, D2, n, cseed, fseed)
    except DESIGN_ERRORS as exc:
        log.error("design failed at n=%d D2=%g: %s", n, D2, exc)
        rate = d1 = d2 = bler = math.nan
    return ResultRow(n, D2, rate, d1, d2, bler, theory, fseed)


def _workers() -> int:
    env = os.environ.get("HB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRow]:
    """All (n, D2) points, ordered by (n, D2) whatever the completion order."""
    jobs = [(n, i) for n in sorted(set(cfg.n)) for i in range(len(cfg.d2))]
    workers = min(workers or _workers(), len(jobs))
    if workers <= 1:
        rows = [run_point(cfg, n, i) for n, i in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(run_point, [cfg] * len(jobs), *zip(*jobs)))
    return sorted(rows, key=lambda r: (r.n, r.D2_target))


# ---------------------------------------------------------------------------
# CSV


FIELDS = tuple(f.name for f in fields(ResultRow))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([v if isinstance(v, int) else "%.10g" % v
                    for v in dataclasses.astuple(r)])
    return buf.getvalue()


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def parse_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != FIELDS:
        raise ValueError(f"unexpected header {header}")
    types = [f.type for f in fields(ResultRow)]
    return [ResultRow(*(int(v) if t in (int, "int") else float(v) for v, t in zip(rec, types)))
            for rec in reader if rec]


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        return parse_csv(fh.read())


def theory_to_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("D2", "rate", "label"))
    for D2, rate, label in curve:
        w.writerow(("%.10g" % D2, "%.10g" % rate, label))
    return buf.getvalue()

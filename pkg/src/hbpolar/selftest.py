"""
Standalone invariant suite behind ``hb selftest``.

Each check raises ``AssertionError`` on failure; ``run_all`` reports one
line per check and returns the number of failures.
"""

from __future__ import annotations

import time
import traceback

import numpy as np

from .binary import design_lossy_bsc, region_ib_models, design_region_ib
from .lattice import (
    DiscreteGaussianSpec,
    PartitionChain,
    compute_scalars,
    flatness_factor,
)
from .polar import ConstructionParams, polar_transform
from .sim import ExperimentConfig, ResultRow, parse_csv, rows_to_csv, run_experiment
from .theory import DSBSConfig, GaussianHBConfig, feasible_params, table1_joint


def check_transform_involution(rng):
    for n in range(1, 11):
        u = rng.integers(0, 2, (4, 1 << n), dtype=np.uint8)
        assert np.array_equal(polar_transform(polar_transform(u)), u), n


def check_pmf_normalization(rng):
    for _ in range(20):
        p = rng.uniform(0.02, 0.48)
        D1 = rng.uniform(0.01, 0.49)
        cfg = DSBSConfig(p, D1, rng.uniform(0.3, 0.95) * min(D1, p))
        prm = feasible_params(cfg, rng)
        j = table1_joint(prm, cfg).with_y()
        assert np.all(j >= 0) and abs(j.sum() - 1) < 1e-12
        assert np.allclose(j.sum(axis=(0, 1, 3)), 0.5)
    for _ in range(10):
        s2 = rng.uniform(0.05, 4.0)
        spec = DiscreteGaussianSpec(PartitionChain(rng.uniform(0.1, 2.0), 3), s2)
        assert abs(spec.pmf.sum() - 1) < 1e-12 and np.all(spec.pmf >= 0)
    _, ch, ms, mc = region_ib_models(DSBSConfig(0.4, 0.35, 0.1))
    for m in (ms, mc):
        assert abs(m.joint.sum() - 1) < 1e-12


def check_partitions(rng):
    params = ConstructionParams(num_samples=32, rate_margin=0.04, channel_margin=0.1, seed=3)
    for D2 in (0.05, 0.15):
        code = design_region_ib(DSBSConfig(0.4, 0.35, D2), 8, params)
        for part in (code.cs1.part, code.cs2, code.cc2):
            sets = [set(part.frozen), set(part.info), set(part.shaping)]
            assert sum(map(len, sets)) == part.N
            assert set.union(*sets) == set(range(part.N))
        # channel info must lie inside source info and shaping sets coincide
        assert set(code.cc2.info) <= set(code.cs2.info)
        assert np.array_equal(np.sort(code.cc2.shaping), np.sort(code.cs2.shaping))


def check_flatness_monotone(rng):
    sig = np.linspace(0.2, 1.5, 30)
    eps = np.array([flatness_factor(1.0, s) for s in sig])
    assert np.all(np.diff(eps) <= 1e-12), eps
    scales = np.linspace(0.3, 3.0, 30)
    eps = np.array([flatness_factor(a, 0.5) for a in scales])
    assert np.all(np.diff(eps) >= -1e-12), eps


def check_scalars(rng):
    for _ in range(20):
        sx, sz = rng.uniform(0.2, 4.0, 2)
        D1 = rng.uniform(0.05, 0.95) * sx
        dmax = D1 * sz / (D1 + sz)
        compute_scalars(GaussianHBConfig(sx, sz, D1, rng.uniform(0.05, 0.95) * dmax))


def check_csv_roundtrip(rng):
    rows = [ResultRow(int(rng.integers(1, 20)), *rng.random(6) * 10 ** rng.uniform(-8, 3, 6),
                      int(rng.integers(2 ** 62))) for _ in range(50)]
    rows.append(ResultRow(10, 0.1, float("nan"), 0.2, 0.3, 0.0, 1.0, 7))
    text = rows_to_csv(rows)
    back = parse_csv(text)
    assert "\r" not in text
    assert rows_to_csv(back) == text
    assert all(a == b for a, b in zip(rows[:-1], back[:-1]))


def check_seed_determinism(rng):
    cfg = ExperimentConfig(n=(6,), d2=(0.1,), frames=4, num_samples=16, seed=11)
    a = rows_to_csv(run_experiment(cfg, workers=1))
    design_lossy_bsc.cache_clear()
    b = rows_to_csv(run_experiment(cfg, workers=1))
    assert a == b
    c = rows_to_csv(run_experiment(ExperimentConfig(n=(6,), d2=(0.1,), frames=4,
                                                    num_samples=16, seed=12), workers=1))
    assert c != a


CHECKS = [
    ("transform involution", check_transform_involution),
    ("pmf normalization", check_pmf_normalization),
    ("partition disjointness and nesting", check_partitions),
    ("flatness-factor monotonicity", check_flatness_monotone),
    ("MMSE scalar identities", check_scalars),
    ("CSV round trip", check_csv_roundtrip),
    ("seed determinism", check_seed_determinism),
]


def run_all(seed: int = 0, out=print) -> int:
    failures = 0
    for name, fn in CHECKS:
        t = time.perf_counter()
        try:
            fn(np.random.default_rng(seed))
            out(f"PASS  {name} ({time.perf_counter() - t:.1f}s)")
        except Exception:  # report and keep going
            failures += 1
            out(f"FAIL  {name}\n{traceback.format_exc()}")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures

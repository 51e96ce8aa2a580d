"""Fast invariant suites behind the ``selftest`` CLI subcommand.

Each suite is a cheap, seeded spot check of a contract the test suite proves
at full strength; the point is a sub-minute smoke run on a fresh install.
"""

from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np

from .calibration import Calibrator
from .codebook import Codebook, simplex_vectors
from .encoding import kclosest_probs
from .mechanisms import MMRC, RRSC, SQKR, PrivUnitG
from .montecarlo import decoded_moments
from .randomness import RandomStream, haar_orthogonal
from .sweep import SweepConfig, run_sweep

__all__ = ["run_selftest"]


def _suite_stream_determinism(seed: int) -> None:
    root = RandomStream(seed + 20240817)
    a = root.derive("user", 3).generator().random(100)
    b = root.derive("user", 3).generator().random(100)
    assert np.array_equal(a, b), "identical paths must replay identically"
    x = root.derive("user", 3).generator().random(100_000)
    y = root.derive("user", 4).generator().random(100_000)
    corr = np.corrcoef(x, y)[0, 1]
    assert abs(corr) < 0.02, f"sibling streams correlated: {corr}"


def _suite_simplex_identities(seed: int) -> None:
    for M, d in ((2, 2), (4, 11), (8, 8), (16, 40)):
        s = simplex_vectors(M, d)
        gram = s @ s.T
        assert np.abs(np.diag(gram) - 1.0).max() < 1e-9, "simplex norms"
        off = gram - np.diag(np.diag(gram))
        target = -1.0 / (M - 1.0)
        mask = ~np.eye(M, dtype=bool)
        assert np.abs(off[mask] - target).max() < 1e-9, "simplex inner products"
        assert np.abs(s.sum(axis=0)).max() < 1e-9, "simplex sum"


def _suite_score_fast_path(seed: int) -> None:
    rng = np.random.default_rng(seed + 7)
    for _ in range(10):
        M, d = 8, 20
        A = haar_orthogonal(d, rng)
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        naive = simplex_vectors(M, d) @ (A.T @ v)
        fast = Codebook.from_rotation(A, M).scores(v)
        assert np.abs(fast - naive).max() < 1e-10, "fast scores != naive scores"


def _suite_kclosest(seed: int) -> None:
    probs = kclosest_probs(np.array([0.9, 0.1, -0.3, -0.7]), 1, math.log(2.0))
    assert np.abs(probs - np.array([0.4, 0.2, 0.2, 0.2])).max() < 1e-12
    rng = np.random.default_rng(seed + 3)
    for _ in range(20):
        M = int(rng.integers(2, 40))
        k = int(rng.integers(1, M))
        eps = float(rng.uniform(0.1, 8.0))
        p = kclosest_probs(rng.standard_normal(M), k, eps)
        assert abs(p.sum() - 1.0) < 1e-12, "probabilities must sum to 1"
        assert abs(p.max() / p.min() - math.exp(eps)) < 1e-9, "integer-k ratio must be e^eps"


def _suite_ldp_certificate(seed: int) -> None:
    root = RandomStream(seed + 99)
    calibrator = Calibrator(root.derive("calib"), trials=20_000)
    for eps, M in ((1.0, 2), (3.0, 8)):
        bits = int(math.log2(M))
        mech = RRSC(eps, bits, calibrator=calibrator).configure(30)
        worst = 0.0
        for i in range(40):
            shared = root.derive("cert", i)
            g = shared.generator()
            v1 = g.standard_normal(30)
            v1 /= np.linalg.norm(v1)
            v2 = g.standard_normal(30)
            v2 /= np.linalg.norm(v2)
            p1 = mech.message_probs(v1, shared.derive("cb"))
            p2 = mech.message_probs(v2, shared.derive("cb"))
            worst = max(worst, (p1 / p2).max())
        assert abs(worst - math.exp(eps)) < 1e-9, f"RRSC ratio {worst} != e^{eps}"
    sq = SQKR(3.0, 3).configure(20)
    row = sq.rr_transition_row(2)
    assert abs(row[2] / row[0] - math.exp(3.0)) < 1e-9, "RR transition ratio"
    mm = MMRC(2.0, 2, calibrator=calibrator).configure(30)
    assert mm.w_hi_ / mm.w_lo_ <= math.exp(2.0) + 1e-9, "MMRC weight ratio"
    PrivUnitG(4.0).configure(30)  # feasibility asserted at configure time


def _suite_unbiasedness_smoke(seed: int) -> None:
    root = RandomStream(seed + 1234)
    calibrator = Calibrator(root.derive("calib"), trials=50_000)
    mech = RRSC(3.0, 3, calibrator=calibrator).configure(20)
    g = root.derive("dir").generator()
    v = g.standard_normal(20)
    v /= np.linalg.norm(v)
    stats = decoded_moments(mech, v, 20_000, root.derive("mc"))
    tol = 5.0 * mech.r_k_ * math.sqrt(20 / 20_000)
    assert stats.mean_error_norm <= tol, f"bias {stats.mean_error_norm} > {tol}"


def _suite_sweep_determinism(seed: int) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        cfg = {
            "mechanisms": ["rrsc", "privunitg"],
            "eps": [2.0],
            "bits": "eq_eps",
            "n": 20,
            "d": 10,
            "rounds": 2,
            "calib_trials": 20_000,
            "seed": seed + 5,
            "out": str(Path(tmp) / "a.csv"),
        }
        run_sweep(SweepConfig.from_dict(cfg))
        cfg["out"] = str(Path(tmp) / "b.csv")
        run_sweep(SweepConfig.from_dict(cfg))

        def strip_wall(path):
            lines = Path(path).read_text().splitlines()
            return [",".join(line.split(",")[:-1]) for line in lines]

        assert strip_wall(Path(tmp) / "a.csv") == strip_wall(Path(tmp) / "b.csv"), (
            "sweep rerun differs beyond wall_ms"
        )


SUITES = [
    ("stream-determinism", _suite_stream_determinism),
    ("simplex-identities", _suite_simplex_identities),
    ("score-fast-path", _suite_score_fast_path),
    ("kclosest-probabilities", _suite_kclosest),
    ("ldp-certificate", _suite_ldp_certificate),
    ("unbiasedness-smoke", _suite_unbiasedness_smoke),
    ("sweep-determinism", _suite_sweep_determinism),
]


def run_selftest(seed: int = 0) -> bool:
    """Run every suite, print one PASS/FAIL line each, return overall success."""
    ok = True
    for name, fn in SUITES:
        try:
            fn(seed)
        except Exception as exc:  # noqa: BLE001 - report and continue
            ok = False
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    return ok

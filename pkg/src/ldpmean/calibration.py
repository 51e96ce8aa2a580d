"""Monte Carlo calibration of the unbiasing constants.

For the rotated-simplex codebook the normalization is

    r_k = (k e^eps + M - k) / (e^eps - 1) * sqrt((M-1)/M) / C_k,

where C_k is the expected sum of the k largest among the first M coordinates
of a uniform unit vector in R^d. For the sphere codebook the analogous
constant solves r_k * (e^eps - 1)/(k e^eps + M - k) * E[top-k first-coordinate
sum] = 1 with M iid uniform codewords. Both expectations are estimated by
Monte Carlo (default 10^6 trials) and persisted in a JSON cache because
calibration dominates sweep runtime.

Sampling note: only the first M coordinates of a uniform sphere vector are
ever needed, so a draw is (M Gaussians, chi-square tail for the remaining
squared norm), which is exact and avoids O(d) work per trial.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .privunit import split_budget, sphere_cap_threshold
from .randomness import RandomStream

__all__ = [
    "DEFAULT_TRIALS",
    "CalibrationError",
    "CkEstimate",
    "Calibration",
    "estimate_ck",
    "compute_rk",
    "select_k",
    "sphere_calibration",
    "sphere_select_k",
    "rk_uniform_sphere",
    "mmrc_calibration",
    "CalibrationCache",
    "Calibrator",
]

DEFAULT_TRIALS = 1_000_000
MIN_TRIALS = 10_000

SIMPLEX = "simplex"
SPHERE = "sphere"
MMRC_VARIANT = "mmrc"


class CalibrationError(RuntimeError):
    """Monte Carlo produced an unusable estimate (increase trials)."""


@dataclass(frozen=True)
class CkEstimate:
    """Monte Carlo estimate of a top-k coordinate-sum expectation."""

    M: int
    d: int
    k: int
    trials: int
    value: float
    stderr: float


@dataclass(frozen=True)
class Calibration:
    """Everything needed to scale one codebook variant at one (M, d, eps)."""

    variant: str
    M: int
    d: int
    eps: float
    k: int
    r_k: float
    ck: CkEstimate

    @property
    def r_k_stderr(self) -> float:
        return self.r_k * self.ck.stderr / self.ck.value

    def error(self) -> float:
        """Predicted per-user squared error, r_k^2 - 1."""
        return self.r_k**2 - 1.0

    def error_stderr(self) -> float:
        return 2.0 * self.r_k * self.r_k_stderr


def _batch_size(M: int) -> int:
    return max(1000, int(25_000_000 // max(M, 1)))


def _first_coords_joint(M: int, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, M) first M coordinates of n independent uniform unit vectors in R^d."""
    z = rng.standard_normal((n, M))
    sq = np.einsum("ij,ij->i", z, z)
    if d > M:
        sq = sq + rng.chisquare(d - M, size=n)
    return z / np.sqrt(sq)[:, None]


def _first_coords_iid(M: int, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, M) iid copies of the first coordinate of a uniform unit vector in R^d."""
    z = rng.standard_normal((n, M))
    if d > 1:
        w = rng.chisquare(d - 1, size=(n, M))
    else:
        w = 0.0
    return z / np.sqrt(z * z + w)


def _topk_table(
    M: int, d: int, trials: int, rng: np.random.Generator, joint: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Expected cumulative top-k sums for every k = 1..M, with stderrs."""
    sums = np.zeros(M)
    sqs = np.zeros(M)
    done = 0
    batch = _batch_size(M)
    sampler = _first_coords_joint if joint else _first_coords_iid
    while done < trials:
        n = min(batch, trials - done)
        x = sampler(M, d, n, rng)
        x.sort(axis=1)
        cs = np.cumsum(x[:, ::-1], axis=1)
        sums += cs.sum(axis=0)
        sqs += np.einsum("ij,ij->j", cs, cs)
        done += n
    means = sums / trials
    var = np.maximum(sqs / trials - means**2, 0.0)
    return means, np.sqrt(var / trials)


def _topk_single(
    M: int, d: int, k: int, trials: int, rng: np.random.Generator, joint: bool
) -> tuple[float, float]:
    """Expected top-k sum for one k (partition instead of full sort)."""
    total = 0.0
    total_sq = 0.0
    done = 0
    batch = _batch_size(M)
    sampler = _first_coords_joint if joint else _first_coords_iid
    while done < trials:
        n = min(batch, trials - done)
        x = sampler(M, d, n, rng)
        s = np.partition(x, M - k, axis=1)[:, M - k :].sum(axis=1)
        total += s.sum()
        total_sq += s @ s
        done += n
    mean = total / trials
    var = max(total_sq / trials - mean**2, 0.0)
    return mean, math.sqrt(var / trials)


def _check_mc_inputs(M: int, d: int, k: int, trials: int, *, simplex: bool) -> None:
    if k < 1 or k >= M:
        raise ValueError(f"k must satisfy 1 <= k < M (C_M = 0 by symmetry); got k={k}, M={M}")
    if simplex and M > d:
        raise ValueError(f"simplex calibration requires M <= d, got M={M}, d={d}")
    if M < 2:
        raise ValueError("M must be >= 2")
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}")


def estimate_ck(M: int, d: int, k: int, trials: int, stream: RandomStream) -> CkEstimate:
    """Estimate C_k: the expected sum of the k top-scoring simplex coordinates.

    Equivalent to the expected sum of the k largest among the first M
    coordinates of a uniform unit vector in R^d (the constant score offset
    cancels in ranking).
    """
    _check_mc_inputs(M, d, k, trials, simplex=True)
    value, stderr = _topk_single(M, d, k, trials, stream.generator(), joint=True)
    if value <= 0:
        raise CalibrationError(f"C_k estimate {value} <= 0 at M={M}, d={d}, k={k}")
    return CkEstimate(M=M, d=d, k=k, trials=trials, value=value, stderr=stderr)


def compute_rk(M: int, eps: float, k: int, ck: CkEstimate | float) -> float:
    """Unbiasing constant for the rotated-simplex codebook."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    value = ck.value if isinstance(ck, CkEstimate) else float(ck)
    if value <= 0:
        raise CalibrationError("C_k must be positive to define r_k")
    e_eps = math.exp(eps)
    return (k * e_eps + M - k) / (e_eps - 1.0) * math.sqrt((M - 1.0) / M) / value


def _calibration_from_table(
    variant: str,
    M: int,
    d: int,
    eps: float,
    trials: int,
    means: np.ndarray,
    stderrs: np.ndarray,
    k: int | None,
    sphere: bool,
) -> Calibration:
    ks = np.arange(1, M)
    if sphere:
        e_eps = math.exp(eps)
        rks = (ks * e_eps + M - ks) / (e_eps - 1.0) / means[: M - 1]
    else:
        rks = np.array([compute_rk(M, eps, int(kk), means[kk - 1]) for kk in ks])
    if k is None:
        k = int(ks[np.argmin(rks)])  # argmin takes the smallest minimizing k
    r_k = float(rks[k - 1])
    ck = CkEstimate(M=M, d=d, k=k, trials=trials, value=float(means[k - 1]), stderr=float(stderrs[k - 1]))
    return _finish_calibration(variant, M, d, eps, k, r_k, ck)


def _finish_calibration(
    variant: str, M: int, d: int, eps: float, k: int, r_k: float, ck: CkEstimate
) -> Calibration:
    if ck.value <= 0:
        raise CalibrationError(f"nonpositive expectation estimate at M={M}, d={d}, k={k}")
    if r_k <= 1.0:
        # an unbiased eps-LDP scheme with error r^2 - 1 <= 0 would break privacy
        raise CalibrationError(f"calibrated scale {r_k} <= 1 at M={M}, d={d}, eps={eps}")
    return Calibration(variant=variant, M=M, d=d, eps=eps, k=k, r_k=r_k, ck=ck)


def select_k(M: int, d: int, eps: float, trials: int, stream: RandomStream) -> Calibration:
    """Pick the k in 1..M-1 minimizing r_k for the rotated-simplex codebook.

    Minimizing r_k minimizes the per-user error r_k^2 - 1. A single Monte
    Carlo pass yields C_k for every k at once (sort + cumulative sums).
    """
    _check_mc_inputs(M, d, 1, trials, simplex=True)
    if eps <= 0:
        raise ValueError("eps must be positive")
    means, stderrs = _topk_table(M, d, trials, stream.generator(), joint=True)
    return _calibration_from_table(SIMPLEX, M, d, eps, trials, means, stderrs, None, sphere=False)


def sphere_calibration(
    M: int, d: int, eps: float, k: int | None, trials: int, stream: RandomStream
) -> Calibration:
    """Calibrate the uniform-sphere codebook; k=None selects the best k."""
    _check_mc_inputs(M, d, 1 if k is None else k, trials, simplex=False)
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = stream.generator()
    if k is None:
        means, stderrs = _topk_table(M, d, trials, rng, joint=False)
        return _calibration_from_table(SPHERE, M, d, eps, trials, means, stderrs, None, sphere=True)
    value, stderr = _topk_single(M, d, k, trials, rng, joint=False)
    if value <= 0:
        raise CalibrationError(f"top-k expectation estimate {value} <= 0; increase trials")
    e_eps = math.exp(eps)
    r_k = (k * e_eps + M - k) / (e_eps - 1.0) / value
    ck = CkEstimate(M=M, d=d, k=k, trials=trials, value=value, stderr=stderr)
    return _finish_calibration(SPHERE, M, d, eps, k, r_k, ck)


def sphere_select_k(M: int, d: int, eps: float, trials: int, stream: RandomStream) -> Calibration:
    return sphere_calibration(M, d, eps, None, trials, stream)


def rk_uniform_sphere(
    M: int, d: int, eps: float, k: int, trials: int, stream: RandomStream
) -> float:
    """Unbiasing constant for M iid uniform-sphere codewords with k-closest encoding."""
    return sphere_calibration(M, d, eps, k, trials, stream).r_k


def mmrc_calibration(M: int, d: int, eps: float, trials: int, stream: RandomStream) -> Calibration:
    """Debiasing scale for importance-sampling simulation of the cap mechanism.

    Estimates mu = E[sum_m pi_m <u_m, e_1>] where pi is the normalized
    importance weight over M iid uniform-sphere candidates, then returns the
    scale beta = 1/mu packaged as a Calibration (variant "mmrc", k stored as
    0 since no closeness budget is involved).
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}")
    eps0, eps1 = split_budget(eps, d)
    p = 1.0 / (1.0 + math.exp(-eps0))
    cap_mass = 1.0 / (1.0 + math.exp(eps1))
    gamma = sphere_cap_threshold(cap_mass, d)
    w_hi = p / cap_mass
    w_lo = (1.0 - p) / (1.0 - cap_mass)
    rng = stream.generator()
    total = 0.0
    total_sq = 0.0
    done = 0
    batch = _batch_size(M)
    while done < trials:
        n = min(batch, trials - done)
        x = _first_coords_iid(M, d, n, rng)
        w = np.where(x >= gamma, w_hi, w_lo)
        s = np.einsum("ij,ij->i", w, x) / w.sum(axis=1)
        total += s.sum()
        total_sq += s @ s
        done += n
    mu = total / trials
    var = max(total_sq / trials - mu**2, 0.0)
    stderr = math.sqrt(var / trials)
    if mu <= 0:
        raise CalibrationError(f"alignment estimate {mu} <= 0; increase trials")
    ck = CkEstimate(M=M, d=d, k=0, trials=trials, value=mu, stderr=stderr)
    beta = 1.0 / mu
    if beta <= 1.0:
        raise CalibrationError(f"debiasing scale {beta} <= 1 at M={M}, d={d}, eps={eps}")
    return Calibration(variant=MMRC_VARIANT, M=M, d=d, eps=eps, k=0, r_k=beta, ck=ck)


# ---------------------------------------------------------------------------
# Persistence


class CalibrationCache:
    """JSON-file cache of Calibration records.

    Records carry {variant, M, d, eps, k, trials, seed, ck_value, ck_stderr,
    r_k} plus a ``selected`` flag distinguishing best-k records from fixed-k
    ones. Writes are atomic (temp file + rename), eps is matched to 1e-9.
    """

    def __init__(self, path: str | os.PathLike | None):
        self.path = Path(path) if path else None
        self._records: list[dict] = []
        if self.path is not None and self.path.exists():
            with open(self.path) as fh:
                self._records = json.load(fh)

    def records(self) -> list[dict]:
        return list(self._records)

    def find(
        self,
        variant: str,
        M: int,
        d: int,
        eps: float,
        trials: int,
        seed: int,
        k: int | None,
    ) -> dict | None:
        for rec in self._records:
            if (
                rec["variant"] == variant
                and rec["M"] == M
                and rec["d"] == d
                and abs(rec["eps"] - eps) <= 1e-9
                and rec["trials"] == trials
                and rec["seed"] == seed
            ):
                if k is None and rec.get("selected", False):
                    return rec
                if k is not None and rec["k"] == k:
                    return rec
        return None

    def add(self, record: dict) -> None:
        self._records.append(record)
        self._save()

    def _save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(self._records, fh, indent=1)
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _record_from(cal: Calibration, seed: int, selected: bool) -> dict:
    return {
        "variant": cal.variant,
        "M": cal.M,
        "d": cal.d,
        "eps": cal.eps,
        "k": cal.k,
        "trials": cal.ck.trials,
        "seed": seed,
        "ck_value": cal.ck.value,
        "ck_stderr": cal.ck.stderr,
        "r_k": cal.r_k,
        "selected": selected,
    }


def _calibration_from(rec: dict) -> Calibration:
    ck = CkEstimate(
        M=rec["M"], d=rec["d"], k=rec["k"], trials=rec["trials"],
        value=rec["ck_value"], stderr=rec["ck_stderr"],
    )
    return Calibration(
        variant=rec["variant"], M=rec["M"], d=rec["d"], eps=rec["eps"],
        k=rec["k"], r_k=rec["r_k"], ck=ck,
    )


class Calibrator:
    """Cache-aware front end used by mechanisms and the sweep harness.

    All Monte Carlo draws derive from ``stream`` keyed by the calibration
    parameters, so results never depend on lookup order. ``cache_misses``
    counts lookups that had to compute, ``mc_runs`` counts Monte Carlo passes
    actually executed.
    """

    def __init__(
        self,
        stream: RandomStream,
        trials: int = DEFAULT_TRIALS,
        cache: CalibrationCache | None = None,
    ):
        self.stream = stream
        self.trials = trials
        self.cache = cache
        self.cache_misses = 0
        self.mc_runs = 0

    def _seed(self) -> int:
        return self.stream.key()

    def _mc_stream(self, variant: str, M: int, d: int, k: int | None) -> RandomStream:
        return (
            self.stream.derive(variant, M)
            .derive("dim", d)
            .derive("trials", self.trials)
            .derive("k", 0 if k is None else k)
        )

    def _get(self, variant: str, M: int, d: int, eps: float, k: int | None) -> Calibration:
        if self.cache is not None:
            rec = self.cache.find(variant, M, d, eps, self.trials, self._seed(), k)
            if rec is not None:
                return _calibration_from(rec)
        self.cache_misses += 1
        self.mc_runs += 1
        mc = self._mc_stream(variant, M, d, k)
        if variant == SIMPLEX:
            if k is None:
                cal = select_k(M, d, eps, self.trials, mc)
            else:
                ck = estimate_ck(M, d, k, self.trials, mc)
                cal = _finish_calibration(SIMPLEX, M, d, eps, k, compute_rk(M, eps, k, ck), ck)
        elif variant == SPHERE:
            cal = sphere_calibration(M, d, eps, k, self.trials, mc)
        elif variant == MMRC_VARIANT:
            cal = mmrc_calibration(M, d, eps, self.trials, mc)
        else:
            raise ValueError(f"unknown calibration variant {variant!r}")
        if self.cache is not None:
            self.cache.add(_record_from(cal, self._seed(), selected=k is None))
        return cal

    def simplex(self, M: int, d: int, eps: float, k: int | None = None) -> Calibration:
        return self._get(SIMPLEX, M, d, eps, k)

    def sphere(self, M: int, d: int, eps: float, k: int | None = None) -> Calibration:
        return self._get(SPHERE, M, d, eps, k)

    def mmrc(self, M: int, d: int, eps: float) -> Calibration:
        return self._get(MMRC_VARIANT, M, d, eps, 0)

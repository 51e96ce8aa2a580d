"""Sweep orchestration: config parsing, calibration warm-up, CSV emission.

A sweep crosses mechanisms x eps x bits x rounds on one cohort family. Every
cell derives its streams from the root seed by config position, all rows are
emitted in config order regardless of worker completion order, and all
numeric fields are printed with 9 significant digits, so a rerun with the
same seed reproduces the file (wall_ms, a measured quantity, is the one
nondeterministic column).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .calibration import MIN_TRIALS, CalibrationCache, Calibrator, DEFAULT_TRIALS
from .estimation import estimate_mean, generate_cohort, l2_error
from .mechanisms import MECHANISM_KINDS, make_mechanism
from .randomness import RandomStream

__all__ = ["SweepConfig", "ExperimentRecord", "SweepConfigError", "run_sweep", "write_csv", "CSV_HEADER"]

CSV_HEADER = "mechanism,eps,bits,n,d,round,k,r_k,l2_error,wall_ms"


class SweepConfigError(ValueError):
    """Invalid sweep configuration; carries one message per offending item."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid sweep config:\n  " + "\n  ".join(problems))
        self.problems = problems


def _fmt9(x: float) -> str:
    return format(float(x), ".9g")


@dataclass(frozen=True)
class ExperimentRecord:
    """One (mechanism, eps, bits, round) -> l2-error row."""

    mechanism: str
    eps: float
    bits: int | None
    n: int
    d: int
    round: int
    k: int | None
    r_k: float | None
    l2_error: float
    wall_ms: float

    def csv_row(self) -> str:
        return ",".join(
            [
                self.mechanism,
                _fmt9(self.eps),
                "" if self.bits is None else str(self.bits),
                str(self.n),
                str(self.d),
                str(self.round),
                "" if self.k is None else str(self.k),
                "" if self.r_k is None else _fmt9(self.r_k),
                _fmt9(self.l2_error),
                _fmt9(self.wall_ms),
            ]
        )


@dataclass(frozen=True)
class Cell:
    mech_index: int
    mechanism: str
    eps_index: int
    eps: float
    bits_index: int
    bits: int | None


@dataclass
class SweepConfig:
    mechanisms: list[str]
    eps_list: list[float]
    bits_list: list[int] | str  # explicit list, or "eq_eps" to couple b = eps
    n: int
    d: int
    rounds: int
    calib_trials: int = DEFAULT_TRIALS
    root_seed: int = 0
    out_path: str = "sweep.csv"

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepConfig":
        try:
            return cls(
                mechanisms=list(raw["mechanisms"]),
                eps_list=[float(e) for e in raw["eps"]],
                bits_list=raw["bits"] if raw["bits"] == "eq_eps" else [int(b) for b in raw["bits"]],
                n=int(raw["n"]),
                d=int(raw["d"]),
                rounds=int(raw["rounds"]),
                calib_trials=int(raw.get("calib_trials", DEFAULT_TRIALS)),
                root_seed=int(raw.get("seed", 0)),
                out_path=str(raw.get("out", "sweep.csv")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SweepConfigError([f"malformed config: {exc!r}"]) from exc

    @classmethod
    def from_file(cls, path: str) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        problems: list[str] = []
        if not self.mechanisms:
            problems.append("mechanisms list is empty")
        for name in self.mechanisms:
            if name not in MECHANISM_KINDS:
                problems.append(f"unknown mechanism {name!r}")
        if not self.eps_list:
            problems.append("eps list is empty")
        for eps in self.eps_list:
            if eps <= 0:
                problems.append(f"eps must be positive, got {eps}")
        if self.bits_list == "eq_eps":
            for eps in self.eps_list:
                if eps != int(eps) or int(eps) < 1:
                    problems.append(f"eq_eps coupling needs integer eps >= 1, got {eps}")
        elif isinstance(self.bits_list, list):
            if not self.bits_list:
                problems.append("bits list is empty")
            for b in self.bits_list:
                if b < 1:
                    problems.append(f"bits must be >= 1, got {b}")
        else:
            problems.append(f"bits must be a list or 'eq_eps', got {self.bits_list!r}")
        if self.n < 2 or self.n % 2:
            problems.append(f"n must be even and >= 2, got {self.n}")
        if self.d < 1:
            problems.append(f"d must be >= 1, got {self.d}")
        if self.rounds < 1:
            problems.append(f"rounds must be >= 1, got {self.rounds}")
        if self.calib_trials < MIN_TRIALS:
            problems.append(f"calib_trials must be >= {MIN_TRIALS}, got {self.calib_trials}")
        if problems:
            raise SweepConfigError(problems)

    def bits_for(self, eps: float) -> list[int]:
        if self.bits_list == "eq_eps":
            return [int(eps)]
        return list(self.bits_list)

    def cells(self) -> list[Cell]:
        """All (mechanism, eps, bits) cells in config order. privunitg has no
        communication budget, so it contributes one cell per eps."""
        out: list[Cell] = []
        for mi, mech in enumerate(self.mechanisms):
            for ei, eps in enumerate(self.eps_list):
                if mech == "privunitg":
                    out.append(Cell(mi, mech, ei, eps, 0, None))
                    continue
                for bi, bits in enumerate(self.bits_for(eps)):
                    out.append(Cell(mi, mech, ei, eps, bi, bits))
        return out


def _build_mechanism(cell: Cell, config: SweepConfig, calibrator: Calibrator):
    mech = make_mechanism(
        cell.mechanism,
        eps=cell.eps,
        bits=cell.bits,
        calibrator=calibrator,
        calib_trials=config.calib_trials,
        random_state=config.root_seed,
    )
    return mech.configure(config.d)


def run_sweep(
    config: SweepConfig,
    cache_path: str | None = None,
    threads: int = 1,
) -> tuple[list[ExperimentRecord], Calibrator]:
    """Run every cell of the sweep and write the CSV to config.out_path.

    Calibrations happen serially up front (cache-aware); the per-round
    protocol work then runs in a thread pool sized by ``threads`` (0 = one
    worker per CPU). Output order is config order either way.
    """
    config.validate()
    root = RandomStream(config.root_seed)
    calibrator = Calibrator(
        root.derive("calib"),
        trials=config.calib_trials,
        cache=CalibrationCache(cache_path) if cache_path else None,
    )
    cells = config.cells()
    mechanisms = [_build_mechanism(cell, config, calibrator) for cell in cells]

    cohorts = [
        generate_cohort(config.n, config.d, root.derive("cohort", r))
        for r in range(config.rounds)
    ]

    def run_one(ci: int, r: int) -> ExperimentRecord:
        cell = cells[ci]
        mech = mechanisms[ci]
        proto = (
            root.derive("mech", cell.mech_index)
            .derive("eps", cell.eps_index)
            .derive("bits", cell.bits_index)
            .derive("round", r)
        )
        t0 = time.perf_counter()
        estimate = estimate_mean(cohorts[r], mech, proto)
        wall_ms = (time.perf_counter() - t0) * 1e3
        # rrsc rows carry (k, r_k); mmrc rows carry (0, beta), its debiasing
        # stand-in; privunitg/sqkr leave both empty
        cal = getattr(mech, "calibration_", None)
        return ExperimentRecord(
            mechanism=cell.mechanism,
            eps=cell.eps,
            bits=cell.bits,
            n=config.n,
            d=config.d,
            round=r,
            k=(cal.k if cal is not None else None),
            r_k=(cal.r_k if cal is not None else None),
            l2_error=l2_error(estimate, cohorts[r]),
            wall_ms=wall_ms,
        )

    jobs = [(ci, r) for ci in range(len(cells)) for r in range(config.rounds)]
    if threads == 1:
        records = [run_one(ci, r) for ci, r in jobs]
    else:
        workers = threads if threads > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda job: run_one(*job), jobs))

    write_csv(records, config.out_path)
    return records, calibrator


def write_csv(records: list[ExperimentRecord], path: str) -> None:
    out = Path(path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")

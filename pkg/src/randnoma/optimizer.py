"""Joint (p, R) sum-rate maximisation by exhaustive coarse-to-fine grid search.

The objective is non-convex, so every point of a rectangular grid is
evaluated, then the grid is repeatedly shrunk around the incumbent.  Two
backends: the closed-form two-user chain and Monte Carlo simulation for any
K.  Results can be tabulated offline per (K, B) and stored as CSV.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel import ParameterError, SystemConfig, db_to_linear
from .markov import analytical_sum_rate
from .simulator import run_monte_carlo

TABLE_HEADER = ("K", "B_dB", "p_star", "R_star", "Rs_star", "method", "stderr")
SWEEP_SCHEMES = ("cross-slot", "intra-only", "deterministic")

_DIGITS = 10  # grid coordinates are rounded to kill float drift from step arithmetic


@dataclass(frozen=True)
class GridSpec:
    p_min: float
    p_max: float
    p_step: float
    R_min: float
    R_max: float
    R_step: float
    refinement_rounds: int = 2
    refinement_shrink: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.p_min <= self.p_max <= 1.0):
            raise ParameterError(f"need 0 < p_min <= p_max <= 1, got [{self.p_min}, {self.p_max}]")
        if not (0.0 < self.R_min <= self.R_max):
            raise ParameterError(f"need 0 < R_min <= R_max, got [{self.R_min}, {self.R_max}]")
        if self.p_step <= 0 or self.R_step <= 0:
            raise ParameterError("grid steps must be positive")
        if self.refinement_rounds < 0:
            raise ParameterError("refinement_rounds must be >= 0")
        if not (0.0 < self.refinement_shrink < 1.0):
            raise ParameterError("refinement_shrink must lie in (0, 1)")

    @staticmethod
    def default_R_max(B: float) -> float:
        # comfortably above single-user capacity at the mean SNR
        return math.log2(1.0 + B) + 3.0

    @classmethod
    def default_analytical(cls, snr_db: float, **overrides) -> "GridSpec":
        base = dict(
            p_min=0.01, p_max=1.0, p_step=0.01,
            R_min=1.0, R_max=cls.default_R_max(db_to_linear(snr_db)), R_step=0.05,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def default_simulated(cls, snr_db: float, **overrides) -> "GridSpec":
        base = dict(
            p_min=0.01, p_max=1.0, p_step=0.01,
            R_min=0.05, R_max=cls.default_R_max(db_to_linear(snr_db)), R_step=0.05,
        )
        base.update(overrides)
        return cls(**base)

    def p_values(self) -> np.ndarray:
        return _axis(self.p_min, self.p_max, self.p_step)

    def R_values(self) -> np.ndarray:
        return _axis(self.R_min, self.R_max, self.R_step)

    @property
    def size(self) -> int:
        return len(self.p_values()) * len(self.R_values())


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), _DIGITS)


@dataclass
class OptimizationResult:
    p_star: float
    R_star: float
    Rs_star: float
    method: str
    grid: GridSpec
    stderr: float | None = None
    n_evaluations: int = 0
    evaluations: dict[tuple[float, float], float] = field(default_factory=dict, repr=False, compare=False)

    def as_row(self, K: int, snr_db: float) -> dict:
        return {
            "K": K,
            "B_dB": snr_db,
            "p_star": self.p_star,
            "R_star": self.R_star,
            "Rs_star": self.Rs_star,
            "method": self.method,
            "stderr": self.stderr,
        }


def _better(a: tuple[float, float, float], b: tuple[float, float, float] | None) -> bool:
    """Is (Rs, p, R) candidate ``a`` preferable to ``b``?  Ties go to smaller R, then smaller p."""
    if b is None:
        return True
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[2] != b[2]:
        return a[2] < b[2]
    return a[1] < b[1]


def coarse_to_fine(
    objective: Callable[[float, float], float],
    grid: GridSpec,
) -> tuple[float, float, float, dict[tuple[float, float], float]]:
    """Maximise ``objective(p, R)`` over the grid, then refine around the best point.

    Each refinement round re-grids a window of +-1 previous step around the
    incumbent with the step scaled by ``refinement_shrink``, clipped to the
    grid bounds.  Returns ``(p*, R*, value*, evaluations)``.
    """
    evals: dict[tuple[float, float], float] = {}
    best: tuple[float, float, float] | None = None

    def visit(ps: Iterable[float], Rs: Iterable[float]):
        nonlocal best
        Rs = list(Rs)
        for p in ps:
            for R in Rs:
                key = (float(p), float(R))
                if key not in evals:
                    evals[key] = objective(*key)
                cand = (evals[key], key[0], key[1])
                if _better(cand, best):
                    best = cand

    visit(grid.p_values(), grid.R_values())
    p_step, R_step = grid.p_step, grid.R_step
    for _ in range(grid.refinement_rounds):
        _, p0, R0 = best
        half = int(round(1.0 / grid.refinement_shrink))
        p_step, R_step = p_step * grid.refinement_shrink, R_step * grid.refinement_shrink
        ks = np.arange(-half, half + 1)
        ps = np.round(p0 + p_step * ks, _DIGITS)
        Rs = np.round(R0 + R_step * ks, _DIGITS)
        ps = ps[(ps >= grid.p_min) & (ps <= grid.p_max)]
        Rs = Rs[(Rs >= grid.R_min) & (Rs <= grid.R_max)]
        visit(ps, Rs)
    value, p_star, R_star = best
    return p_star, R_star, value, evals


def grid_search_analytical(snr_db: float, grid: GridSpec | None = None) -> OptimizationResult:
    """Two-user optimum from the closed-form chain (grid must have R_min >= 1)."""
    grid = grid or GridSpec.default_analytical(snr_db)
    B = db_to_linear(snr_db)
    p_star, R_star, Rs_star, evals = coarse_to_fine(lambda p, R: analytical_sum_rate(p, R, B)[1], grid)
    return OptimizationResult(p_star, R_star, Rs_star, "analytical", grid, None, len(evals), evals)


def grid_search_simulated(
    template: SystemConfig,
    grid: GridSpec | None = None,
    workers: int = 1,
) -> OptimizationResult:
    """Optimum of the Monte Carlo sum rate for ``template.K`` users.

    Every grid point reuses ``template.seed``, so points share random
    numbers and differences between them are not swamped by sampling noise.
    The incumbent is simply the best point estimate.
    """
    grid = grid or GridSpec.default_simulated(template.snr_db)
    stderrs: dict[tuple[float, float], float | None] = {}

    def objective(p: float, R: float) -> float:
        res = run_monte_carlo(replace(template, p=p, R=R), workers=workers)
        stderrs[(p, R)] = res.stderr["sum_rate_Rs"]
        return res.mean["sum_rate_Rs"]

    p_star, R_star, Rs_star, evals = coarse_to_fine(objective, grid)
    return OptimizationResult(
        p_star, R_star, Rs_star, "simulated", grid, stderrs[(p_star, R_star)], len(evals), evals
    )


@dataclass(frozen=True)
class SweepRow:
    K: int
    scheme: str
    p_star: float
    R_star: float
    Rs_star: float
    stderr: float | None


def sweep_k(
    template: SystemConfig,
    K_list: Sequence[int],
    schemes: Sequence[str] = SWEEP_SCHEMES,
    grid: GridSpec | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """Simulated optimum per (K, scheme).

    ``deterministic`` is the cross-slot receiver with p pinned to 1.
    """
    grid = grid or GridSpec.default_simulated(template.snr_db)
    rows = []
    for K in K_list:
        for scheme in schemes:
            if scheme == "deterministic":
                cfg = replace(template, K=K, scheme="cross-slot")
                g = replace(grid, p_min=1.0, p_max=1.0)
            elif scheme in ("cross-slot", "intra-only"):
                cfg = replace(template, K=K, scheme=scheme)
                g = grid
            else:
                raise ParameterError(f"unknown sweep scheme {scheme!r}")
            res = grid_search_simulated(cfg, g, workers=workers)
            rows.append(SweepRow(K, scheme, res.p_star, res.R_star, res.Rs_star, res.stderr))
    return rows


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def write_table(rows: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in TABLE_HEADER])
    return path


def read_table(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def build_lookup_table(
    snr_db_list: Sequence[float],
    K_list: Sequence[int],
    path: str | Path,
    template: SystemConfig | None = None,
    analytical_grid: GridSpec | None = None,
    simulated_grid: GridSpec | None = None,
    workers: int = 1,
) -> list[dict]:
    """Optimise every (K, B) cell and write the results as CSV.

    K = 2 cells use the closed form; other K are simulated with the Monte
    Carlo settings of ``template``.
    """
    template = template or SystemConfig()
    rows = []
    for K in K_list:
        for snr_db in snr_db_list:
            if K == 2:
                res = grid_search_analytical(snr_db, analytical_grid or GridSpec.default_analytical(snr_db))
            else:
                cfg = replace(template, K=K, snr_db=snr_db)
                res = grid_search_simulated(cfg, simulated_grid or GridSpec.default_simulated(snr_db), workers)
            rows.append(res.as_row(K, snr_db))
    write_table(rows, path)
    return rows

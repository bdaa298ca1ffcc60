"""Probabilistic snake: per-knot maximum-likelihood search along normals.

Each knot looks at ``2L+1`` candidates spaced one pixel apart along its normal.
The edge likelihood of a candidate is the intensity variance in a square window
centred on it (an edge maximises the variance). An optional taper favours
candidates near the current position. Knots then jump to their best candidate,
all at once, until nothing moves. :func:`fit` runs the coarse-to-fine schedule:
few knots with a deep search, arc-length resampling, then a shallow pass with
every knot.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .curve import Curve, normals, resample
from .raster import GrayImage, IntegralTables, build_integral, window_variance


@dataclass(frozen=True)
class PassConfig:
    depth: int = 5
    window_half: int = 3
    regularization: float = 0.0
    max_iterations: int = 100
    epsilon: float = 0.5

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValueError("depth must be an integer >= 1")
        if int(self.window_half) != self.window_half or self.window_half < 0:
            raise ValueError("window_half must be an integer >= 0")
        if not self.regularization >= 0:
            raise ValueError("regularization must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def window(self) -> int:
        return 2 * self.window_half + 1


@dataclass(frozen=True)
class Schedule:
    pass1: PassConfig
    resample_max_spacing: float
    pass2: PassConfig

    def __post_init__(self):
        if not self.resample_max_spacing > 0:
            raise ValueError("resample_max_spacing must be > 0")

    @classmethod
    def closed_default(cls) -> "Schedule":
        """Closed-contour settings: depth 25 then 5, 7-pixel window, taper 0 then 1."""
        return cls(PassConfig(25, 3, 0.0), 4.0, PassConfig(5, 3, 1.0))

    @classmethod
    def open_default(cls) -> "Schedule":
        """Open-contour settings: depth 20 then 5, 7-pixel window, no taper."""
        return cls(PassConfig(20, 3, 0.0), 4.0, PassConfig(5, 3, 0.0))


@dataclass
class FitReport:
    """Result of any of the fitting engines.

    ``iterations``, ``displacements``, ``durations`` and ``objective`` hold one
    entry per pass. ``objective`` is empty for engines without a scalar criterion.
    """

    curve: Curve
    iterations: list[int] = field(default_factory=list)
    displacements: list[list[float]] = field(default_factory=list)
    durations: list[float] = field(default_factory=list)
    objective: list[list[float]] = field(default_factory=list)
    knots: list[int] = field(default_factory=list)

    @property
    def total_time(self) -> float:
        return float(sum(self.durations))

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "curve": self.curve.to_dict(),
            "iterations": self.iterations,
            "knots": self.knots,
            "displacements": self.displacements,
            "objective": self.objective,
        }
        if timing:
            d["durations"] = self.durations
        return d


@dataclass(frozen=True)
class DensityProfile:
    """Candidate scores along one knot's normal; ``offsets`` run from ``-L`` to ``L``."""

    index: int
    offsets: np.ndarray
    raw: np.ndarray
    regularized: np.ndarray

    @property
    def depth(self) -> int:
        return (len(self.offsets) - 1) // 2


def _offsets(depth: int) -> np.ndarray:
    return np.arange(-depth, depth + 1)


def _scores(tables: IntegralTables, knots: np.ndarray, nrm: np.ndarray, depth: int, half: int) -> np.ndarray:
    """Raw window-variance scores, shape ``(len(knots), 2*depth+1)``."""
    j = _offsets(depth)
    pos = knots[:, None, :] + j[None, :, None] * nrm[:, None, :]
    # nearest pixel center; exact halves round to even
    px = np.rint(pos[..., 0]).astype(np.int64)
    py = np.rint(pos[..., 1]).astype(np.int64)
    inside = (px >= 0) & (px < tables.width) & (py >= 0) & (py < tables.height)
    s = np.zeros(px.shape)
    if inside.any():
        _, var = window_variance(tables, px[inside], py[inside], half)
        s[inside] = var
    return s


def _weights(depth: int, regularization: float) -> np.ndarray:
    j = _offsets(depth)
    return np.exp(-regularization * (j / depth) ** 2)


def score_profile(
    tables: IntegralTables, knot, normal, cfg: PassConfig, index: int = 0
) -> DensityProfile:
    """Window variance at ``knot + j*normal`` for ``j = -L..L``, with ``cfg``'s taper applied.

    Candidates whose nearest pixel falls outside the image score 0.
    """
    knot = np.asarray(knot, dtype=np.float64).reshape(1, 2)
    normal = np.asarray(normal, dtype=np.float64).reshape(1, 2)
    raw = _scores(tables, knot, normal, cfg.depth, cfg.window_half)[0]
    prof = DensityProfile(index, _offsets(cfg.depth), raw, raw.copy())
    return regularize_profile(prof, cfg.regularization)


def regularize_profile(p: DensityProfile, regularization: float) -> DensityProfile:
    """Multiply raw scores by ``exp(-regularization * (j/L)**2)``."""
    if regularization < 0:
        raise ValueError("regularization must be >= 0")
    if regularization == 0:
        r = p.raw.copy()
    else:
        r = p.raw * _weights(p.depth, regularization)
    return DensityProfile(p.index, p.offsets, p.raw, r)


def _tie_order(depth: int) -> np.ndarray:
    # candidate indices sorted by |j|, negative before positive
    j = _offsets(depth)
    return np.lexsort((j > 0, np.abs(j)))


def _select(r: np.ndarray, depth: int) -> np.ndarray:
    """Best offset per row of ``r``; ties go to smallest |j| then negative j."""
    order = _tie_order(depth)
    best = order[np.argmax(r[:, order], axis=1)]
    j = best - depth
    j[~np.any(r > 0, axis=1)] = 0
    return j


def select_offset(p: DensityProfile) -> int:
    return int(_select(p.regularized[None, :], p.depth)[0])


def _step(knots: np.ndarray, closed: bool, tables: IntegralTables, cfg: PassConfig, w: np.ndarray | None):
    c = Curve(knots, closed)
    nrm = normals(c)
    r = _scores(tables, knots, nrm, cfg.depth, cfg.window_half)
    if w is not None:
        r = r * w
    j = _select(r, cfg.depth)
    new = knots + j[:, None] * nrm
    new[:, 0] = np.clip(new[:, 0], 0, tables.width - 1)
    new[:, 1] = np.clip(new[:, 1], 0, tables.height - 1)
    _keep_distinct(new, knots, closed)
    # a move along a unit normal is |j| long; clamping only shortens it
    disp = np.minimum(np.hypot(*(new - knots).T), np.abs(j))
    return new, float(disp.max(initial=0.0))


def _keep_distinct(new: np.ndarray, old: np.ndarray, closed: bool) -> None:
    """Revert any knot that would land exactly on its predecessor's new position."""
    same = np.all(new == np.roll(new, 1, axis=0), axis=1)
    if not closed:
        same[0] = False
    if not same.any():
        return
    n = len(new)
    for i in range(0 if closed else 1, n):
        if np.array_equal(new[i], new[i - 1]):
            new[i] = old[i]
            if np.array_equal(new[i], new[i - 1]):
                raise ValueError(f"knots {i - 1} and {i} collapsed onto the same point")


def iterate(c: Curve, tables: IntegralTables, cfg: PassConfig) -> tuple[Curve, float]:
    """Move every knot to its best candidate, all from the same snapshot of ``c``.

    Returns the new curve and the largest knot displacement in pixels.
    """
    w = _weights(cfg.depth, cfg.regularization) if cfg.regularization > 0 else None
    new, disp = _step(c.knots, c.closed, tables, cfg, w)
    return Curve(new, c.closed), disp


@dataclass
class PassStats:
    iterations: int
    displacements: list[float]
    duration: float
    converged: bool


def run_pass(c: Curve, tables: IntegralTables, cfg: PassConfig) -> tuple[Curve, PassStats]:
    """Iterate until the largest displacement is ``<= epsilon`` or ``max_iterations`` is hit."""
    t0 = time.perf_counter()
    w = _weights(cfg.depth, cfg.regularization) if cfg.regularization > 0 else None
    knots = c.knots
    disps = []
    converged = False
    for _ in range(cfg.max_iterations):
        knots, d = _step(knots, c.closed, tables, cfg, w)
        disps.append(d)
        if d <= cfg.epsilon:
            converged = True
            break
    out = Curve(knots, c.closed)
    return out, PassStats(len(disps), disps, time.perf_counter() - t0, converged)


def fit(c0: Curve, img: GrayImage, schedule: Schedule) -> FitReport:
    """Coarse pass, arc-length resampling, fine pass.

    The summed-area tables are built inside the first pass's timing so that
    reported durations cover the whole fit.
    """
    if not c0.in_bounds(img.width, img.height):
        raise ValueError("initial curve lies outside the image")
    t0 = time.perf_counter()
    tables = build_integral(img)
    setup = time.perf_counter() - t0

    c1, s1 = run_pass(c0, tables, schedule.pass1)
    t1 = time.perf_counter()
    c1 = resample(c1, schedule.resample_max_spacing)
    resample_time = time.perf_counter() - t1
    c2, s2 = run_pass(c1, tables, schedule.pass2)
    return FitReport(
        curve=c2,
        iterations=[s1.iterations, s2.iterations],
        displacements=[s1.displacements, s2.displacements],
        durations=[setup + s1.duration, resample_time + s2.duration],
        knots=[len(c0), len(c1)],
    )

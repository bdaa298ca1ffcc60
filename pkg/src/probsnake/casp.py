"""Region-based contour criterion with Gaussian region densities.

A closed curve splits the image into inside (``a``) and outside (``b``) pixels.
Its score is::

    J = N_a * H_a + N_b * H_b + k_l + regularization * sum(d_i**2)

with ``H`` the Gaussian differential entropy at the maximum-likelihood variance of
each region and ``d_i`` the midpoint deviations of the knots. :func:`casp_fit`
minimises ``J`` by seeded single-knot perturbations with strict-descent
acceptance. Region statistics are updated incrementally: moving knot ``P`` to
``P'`` between neighbours ``A`` and ``B`` flips exactly the pixels whose parity
differs between triangles ``APB`` and ``ABP'``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .curve import Curve, CurveError, crossing_parity, edges_clear, is_simple, midpoint_deviations, rasterize_region
from .prob_snake import FitReport
from .raster import GrayImage

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class CaspParams:
    max_deviation: float = 5.0
    iterations: int = 3000
    regularization: float = 0.2
    k_l: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_deviation < 1:
            raise ValueError("max_deviation must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")


@dataclass(frozen=True)
class RegionStats:
    """Pixel count, intensity sum and sum of squares of one region."""

    count: int
    total: float
    total_sq: float

    @property
    def variance(self) -> float:
        if self.count == 0:
            return 0.0
        m = self.total / self.count
        return max(self.total_sq / self.count - m * m, 0.0)

    @classmethod
    def of(cls, values: np.ndarray) -> "RegionStats":
        return cls(int(values.size), float(values.sum()), float((values * values).sum()))


def gaussian_entropy(stats: RegionStats) -> float:
    """``0.5 * ln(2*pi*e*var)`` with the variance floored at ``1e-6``."""
    if stats.count < 2:
        raise ValueError("degenerate region")
    return 0.5 * math.log(2 * math.pi * math.e * max(stats.variance, VARIANCE_FLOOR))


def region_stats(c: Curve, img: GrayImage) -> tuple[RegionStats, RegionStats]:
    mask, _ = rasterize_region(c, (img.width, img.height))
    return RegionStats.of(img.data[mask]), RegionStats.of(img.data[~mask])


def _j(a: RegionStats, b: RegionStats, prior: float, params: CaspParams) -> float:
    return a.count * gaussian_entropy(a) + b.count * gaussian_entropy(b) + params.k_l + params.regularization * prior


def _prior(knots: np.ndarray) -> float:
    mid = 0.5 * (np.roll(knots, 1, axis=0) + np.roll(knots, -1, axis=0))
    d = knots - mid
    return float(np.sum(d * d))


def criterion(c: Curve, img: GrayImage, params: CaspParams) -> float:
    """Region criterion ``J`` of a closed, simple curve."""
    if not c.closed:
        raise CurveError("casp requires closed curve")
    if not is_simple(c):
        raise CurveError("curve is self-intersecting")
    a, b = region_stats(c, img)
    d = midpoint_deviations(c)
    return _j(a, b, float(d @ d), params)


class RegionState:
    """Inside mask plus running region sums for a closed polygon over an image.

    Intensities are centred on the image mean so the running sums stay well
    conditioned; variances are unaffected.
    """

    def __init__(self, c: Curve, img: GrayImage):
        self.values = img.data - img.data.mean()
        self.height, self.width = img.shape
        self.mask, _ = rasterize_region(c, (self.width, self.height))
        inside = self.values[self.mask]
        self.count = int(inside.size)
        self.total = float(inside.sum())
        self.total_sq = float((inside * inside).sum())
        self.all_count = self.values.size
        self.all_total = float(self.values.sum())
        self.all_total_sq = float((self.values * self.values).sum())

    def inside(self) -> RegionStats:
        return RegionStats(self.count, self.total, self.total_sq)

    def outside(self) -> RegionStats:
        return RegionStats(self.all_count - self.count, self.all_total - self.total, self.all_total_sq - self.total_sq)

    def flip_delta(self, a, p, b, q):
        """Pixels that change side when vertex ``p`` (between ``a`` and ``b``) moves to ``q``.

        Returns ``(window, flip)`` where ``flip`` is a bool array over ``window``,
        or ``None`` when nothing changes.
        """
        pts = np.array([a, p, b, q])
        x0 = max(int(math.floor(pts[:, 0].min())), 0)
        y0 = max(int(math.floor(pts[:, 1].min())), 0)
        x1 = min(int(math.ceil(pts[:, 0].max())) + 1, self.width)
        y1 = min(int(math.ceil(pts[:, 1].max())) + 1, self.height)
        start = np.array([a, p, b, a, b, q])
        end = np.array([p, b, a, b, q, a])
        flip = crossing_parity(start, end, x0, y0, x1 - x0, y1 - y0)
        if not flip.any():
            return None
        return (slice(y0, y1), slice(x0, x1)), flip

    def delta_stats(self, window, flip):
        vals = self.values[window]
        m = self.mask[window]
        entering = flip & ~m
        leaving = flip & m
        v_in, v_out = vals[entering], vals[leaving]
        dn = v_in.size - v_out.size
        ds = float(v_in.sum() - v_out.sum())
        dq = float((v_in * v_in).sum() - (v_out * v_out).sum())
        return dn, ds, dq

    def apply(self, window, flip, delta) -> None:
        self.mask[window] ^= flip
        dn, ds, dq = delta
        self.count += dn
        self.total += ds
        self.total_sq += dq


def casp_fit(c0: Curve, img: GrayImage, params: CaspParams) -> FitReport:
    """Seeded stochastic descent on ``J``.

    Each of ``params.iterations`` proposals moves one uniformly chosen knot by a
    uniform offset in ``[-max_deviation, max_deviation]`` on each axis. The move
    is kept only if ``J`` strictly decreases and the polygon stays simple and
    inside the image. ``objective`` records ``J`` after every accepted move
    (initial value first); ``displacements`` records each proposal's accepted
    move length, 0 for rejections.
    """
    if not c0.closed:
        raise CurveError("casp requires closed curve")
    if not is_simple(c0):
        raise CurveError("curve is self-intersecting")
    if not c0.in_bounds(img.width, img.height):
        raise CurveError("initial curve lies outside the image")
    t0 = time.perf_counter()
    rng = np.random.default_rng(params.seed)
    knots = c0.knots.copy()
    n = len(knots)
    w, h = img.width, img.height
    state = RegionState(c0, img)
    prior = _prior(knots)
    j_cur = _j(state.inside(), state.outside(), prior, params)
    trace = [j_cur]
    disps = []
    picks = rng.integers(0, n, size=params.iterations)
    moves = rng.uniform(-params.max_deviation, params.max_deviation, size=(params.iterations, 2))
    for i, mv in zip(picks, moves):
        p = knots[i].copy()
        q = p + mv
        disps.append(0.0)
        if not (0 <= q[0] <= w - 1 and 0 <= q[1] <= h - 1):
            continue
        a, b = knots[(i - 1) % n], knots[(i + 1) % n]
        if np.array_equal(q, a) or np.array_equal(q, b):
            continue
        knots[i] = q
        if not edges_clear(knots, i):
            knots[i] = p
            continue
        found = state.flip_delta(a, p, b, q)
        delta = state.delta_stats(*found) if found else (0, 0.0, 0.0)
        new_prior = prior + _local_prior_change(knots, p, i)
        a_stats = RegionStats(state.count + delta[0], state.total + delta[1], state.total_sq + delta[2])
        b_stats = RegionStats(
            state.all_count - a_stats.count,
            state.all_total - a_stats.total,
            state.all_total_sq - a_stats.total_sq,
        )
        if a_stats.count < 2 or b_stats.count < 2:
            knots[i] = p
            continue
        j_new = _j(a_stats, b_stats, new_prior, params)
        if j_new < j_cur:
            if found:
                state.apply(*found, delta)
            prior = new_prior
            j_cur = j_new
            trace.append(j_cur)
            disps[-1] = float(math.hypot(*mv))
        else:
            knots[i] = p
    elapsed = time.perf_counter() - t0
    return FitReport(
        curve=Curve(knots, True),
        iterations=[params.iterations],
        displacements=[disps],
        durations=[elapsed],
        objective=[trace],
        knots=[n],
    )


def _local_prior_change(knots: np.ndarray, old: np.ndarray, i: int) -> float:
    """Change in ``sum(d**2)`` after knot ``i`` moved from ``old`` to ``knots[i]``."""
    n = len(knots)
    idx = [(i - 1) % n, i, (i + 1) % n]

    def local(pts_i):
        s = 0.0
        for k in idx:
            pk = pts_i if k == i else knots[k]
            pp = pts_i if (k - 1) % n == i else knots[(k - 1) % n]
            pn = pts_i if (k + 1) % n == i else knots[(k + 1) % n]
            dx = pk[0] - 0.5 * (pp[0] + pn[0])
            dy = pk[1] - 0.5 * (pp[1] + pn[1])
            s += dx * dx + dy * dy
        return s

    return local(knots[i]) - local(old)

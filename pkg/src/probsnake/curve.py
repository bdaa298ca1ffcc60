"""Polyline snakes: normals, arc-length resampling, the midpoint regularity prior
and even-odd region rasterisation."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np


class CurveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Curve:
    """Ordered knots ``(x, y)`` in pixel units, open or closed.

    Closed curves need at least 3 knots, open curves 2. Consecutive knots
    (including last/first on closed curves) must not coincide.
    """

    knots: np.ndarray
    closed: bool = False

    def __post_init__(self):
        k = np.array(self.knots, dtype=np.float64)
        if k.ndim != 2 or k.shape[1] != 2:
            raise CurveError(f"knots must be an (N, 2) array, got shape {k.shape}")
        need = 3 if self.closed else 2
        if len(k) < need:
            raise CurveError(f"{'closed' if self.closed else 'open'} curve needs >= {need} knots")
        if not np.all(np.isfinite(k)):
            raise CurveError("knot coordinates must be finite")
        seg = np.diff(np.vstack([k, k[:1]]) if self.closed else k, axis=0)
        if np.any(np.all(seg == 0, axis=1)):
            raise CurveError("consecutive knots coincide")
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "closed", bool(self.closed))

    def __len__(self):
        return len(self.knots)

    def __eq__(self, other):
        if not isinstance(other, Curve):
            return NotImplemented
        return self.closed == other.closed and np.array_equal(self.knots, other.knots)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every segment, closing segment included."""
        k = self.knots
        if self.closed:
            return k, np.roll(k, -1, axis=0)
        return k[:-1], k[1:]

    def perimeter(self) -> float:
        a, b = self.segments()
        return float(np.linalg.norm(b - a, axis=1).sum())

    def in_bounds(self, width: int, height: int) -> bool:
        x, y = self.knots[:, 0], self.knots[:, 1]
        return bool(np.all((x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)))

    def to_dict(self) -> dict:
        return {"closed": self.closed, "knots": self.knots.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Curve":
        try:
            return cls(np.asarray(d["knots"], dtype=np.float64), bool(d["closed"]))
        except KeyError as e:
            raise CurveError(f"curve document is missing {e.args[0]!r}") from None


def load_curve(path: str | os.PathLike) -> Curve:
    with open(path) as fh:
        return Curve.from_dict(json.load(fh))


def save_curve(c: Curve, path: str | os.PathLike, **extra) -> None:
    """Write ``{"closed": ..., "knots": [[x, y], ...]}`` plus any ``extra`` keys."""
    doc = c.to_dict()
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Normals


def _neighbors(n: int, closed: bool) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n)
    if closed:
        return (idx - 1) % n, (idx + 1) % n
    return np.maximum(idx - 1, 0), np.minimum(idx + 1, n - 1)


def normals(c: Curve) -> np.ndarray:
    """Unit normals, one per knot, as an ``(N, 2)`` array.

    The normal is the left-hand perpendicular ``(-dy, dx)`` of the chord from the
    previous to the next knot. End knots of open curves use their single adjacent
    segment. A zero-length chord falls back to the incoming segment.
    """
    k = c.knots
    prev, nxt = _neighbors(len(k), c.closed)
    chord = k[nxt] - k[prev]
    length = np.hypot(chord[:, 0], chord[:, 1])
    bad = length == 0
    if np.any(bad):
        chord[bad] = k[bad] - k[prev[bad]]
        length[bad] = np.hypot(chord[bad, 0], chord[bad, 1])
        if np.any(length == 0):
            raise CurveError("degenerate normal: knot coincides with both neighbours")
    return np.column_stack([-chord[:, 1], chord[:, 0]]) / length[:, None]


# ---------------------------------------------------------------------------
# Midpoint regularity


def midpoint_deviation(c: Curve, i: int) -> float:
    """Distance from knot ``i`` to the midpoint of its two neighbours."""
    n = len(c)
    if not c.closed and (i <= 0 or i >= n - 1):
        raise CurveError(f"knot {i} has no neighbors on an open curve")
    if c.closed:
        i %= n
    k = c.knots
    mid = 0.5 * (k[(i - 1) % n] + k[(i + 1) % n])
    return float(math.hypot(*(k[i] - mid)))


def midpoint_deviations(c: Curve) -> np.ndarray:
    """Deviation of every knot that has two neighbours (open-curve ends excluded)."""
    k = c.knots
    if c.closed:
        mid = 0.5 * (np.roll(k, 1, axis=0) + np.roll(k, -1, axis=0))
        return np.linalg.norm(k - mid, axis=1)
    mid = 0.5 * (k[:-2] + k[2:])
    return np.linalg.norm(k[1:-1] - mid, axis=1)


def prior_log_density(c: Curve, phi: float) -> float:
    """``-sum(d_i**2) / (2 phi**2)``: the log of the Gaussian regularity prior, constant dropped."""
    if not phi > 0:
        raise ValueError("phi must be > 0")
    d = midpoint_deviations(c)
    return float(-(d @ d) / (2.0 * phi * phi))


# ---------------------------------------------------------------------------
# Resampling


def resample(c: Curve, max_spacing: float) -> Curve:
    """Redistribute knots uniformly in arc length along the existing polyline.

    The perimeter is split into ``ceil(perimeter / max_spacing)`` equal pieces.
    The first knot is kept, as is the last knot of an open curve.
    """
    if not max_spacing > 0:
        raise ValueError("max_spacing must be > 0")
    a, b = c.segments()
    seglen = np.linalg.norm(b - a, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1]
    # tolerance keeps inputs already spaced at exactly max_spacing unchanged
    n = max(math.ceil(total / max_spacing - 1e-9), 1 if not c.closed else 3)
    if c.closed:
        s = total * np.arange(n) / n
        pts = np.vstack([c.knots, c.knots[:1]])
    else:
        s = total * np.arange(n + 1) / n
        s[-1] = total
        pts = c.knots
    # piecewise-linear evaluation per segment keeps every knot on an original segment
    seg = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seglen) - 1)
    t = (s - cum[seg]) / seglen[seg]
    out = pts[seg] + t[:, None] * (pts[seg + 1] - pts[seg])
    if not c.closed:
        out[-1] = c.knots[-1]
    return Curve(out, c.closed)


# ---------------------------------------------------------------------------
# Rasterisation


def _canonical(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order each edge's endpoints by (y, x) so that an edge and its reverse rasterise identically."""
    swap = (p[:, 1] > q[:, 1]) | ((p[:, 1] == q[:, 1]) & (p[:, 0] > q[:, 0]))
    a = np.where(swap[:, None], q, p)
    b = np.where(swap[:, None], p, q)
    return a, b


def crossing_parity(p: np.ndarray, q: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    """Even-odd parity of edges ``p[k] -> q[k]`` sampled at pixel centers of a sub-grid.

    Returns an ``(h, w)`` bool array for pixels ``x0..x0+w-1``, ``y0..y0+h-1``. A pixel
    center counts an edge when the edge spans its row half-open in y and lies strictly
    to its right.
    """
    out_shape = (h, w)
    if w <= 0 or h <= 0 or len(p) == 0:
        return np.zeros((max(h, 0), max(w, 0)), dtype=bool)
    a, b = _canonical(np.asarray(p, float), np.asarray(q, float))
    r0 = np.clip(np.ceil(a[:, 1]).astype(np.int64), y0, y0 + h)
    r1 = np.clip(np.ceil(b[:, 1]).astype(np.int64), y0, y0 + h)
    counts = np.maximum(r1 - r0, 0)
    hist = np.zeros((h, w + 1), dtype=np.int64)
    total = int(counts.sum())
    if total:
        e = np.repeat(np.arange(len(a)), counts)
        start = np.repeat(np.cumsum(counts) - counts, counts)
        rows = np.repeat(r0, counts) + (np.arange(total) - start)
        ax, ay, bx, by = a[e, 0], a[e, 1], b[e, 0], b[e, 1]
        xi = ax + (rows - ay) * (bx - ax) / (by - ay)
        k = np.clip(np.ceil(xi).astype(np.int64) - x0, 0, w)
        np.add.at(hist, (rows - y0, k), 1)
    # pixel column c is left of every crossing with k > c
    right = hist[:, ::-1].cumsum(axis=1)[:, ::-1][:, 1:]
    return (right & 1).astype(bool).reshape(out_shape)


def rasterize_region(c: Curve, bounds: tuple[int, int]) -> tuple[np.ndarray, int]:
    """Inside mask (``(height, width)`` bool) of a closed curve and its pixel count.

    ``bounds`` is ``(width, height)``. Pixel centers are sampled with the even-odd rule.
    """
    if not c.closed:
        raise CurveError("region rasterisation requires a closed curve")
    w, h = bounds
    p, q = c.segments()
    mask = crossing_parity(p, q, 0, 0, w, h)
    return mask, int(mask.sum())


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _on_segment(a, b, p):
    return (
        (np.minimum(a[..., 0], b[..., 0]) <= p[..., 0])
        & (p[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
        & (np.minimum(a[..., 1], b[..., 1]) <= p[..., 1])
        & (p[..., 1] <= np.maximum(a[..., 1], b[..., 1]))
    )


def segments_intersect(a, b, c, d) -> np.ndarray:
    """Closed-segment intersection test for ``ab`` vs ``cd``; broadcasts over leading axes."""
    a, b, c, d = (np.asarray(v, float) for v in (a, b, c, d))
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    touch = (
        ((o1 == 0) & _on_segment(a, b, c))
        | ((o2 == 0) & _on_segment(a, b, d))
        | ((o3 == 0) & _on_segment(c, d, a))
        | ((o4 == 0) & _on_segment(c, d, b))
    )
    return proper | touch


def _folds_back(u, v, w) -> bool:
    """Adjacent segments ``u-v`` and ``v-w`` overlap when collinear and pointing the same way from v."""
    du, dw = u - v, w - v
    return bool(du[0] * dw[1] - du[1] * dw[0] == 0 and du @ dw > 0)


def edges_clear(knots: np.ndarray, i: int) -> bool:
    """True when the two edges touching knot ``i`` of a closed polygon cross no other edge."""
    n = len(knots)
    p, q = knots, np.roll(knots, -1, axis=0)
    prev, nxt = knots[(i - 1) % n], knots[(i + 1) % n]
    if _folds_back(knots[(i - 2) % n], prev, knots[i]) or _folds_back(prev, knots[i], nxt):
        return False
    if _folds_back(knots[i], nxt, knots[(i + 2) % n]):
        return False
    for e in ((i - 1) % n, i):
        others = np.array([k for k in range(n) if k not in (e, (e - 1) % n, (e + 1) % n)], dtype=int)
        if len(others) and np.any(segments_intersect(p[e], q[e], p[others], q[others])):
            return False
    return True


def is_simple(c: Curve) -> bool:
    """True when a closed polygon has no self-intersections."""
    if not c.closed:
        raise CurveError("simplicity is only defined for closed curves")
    k = c.knots
    n = len(k)
    p, q = k, np.roll(k, -1, axis=0)
    i, j = np.triu_indices(n, 1)
    adjacent = (j == i + 1) | ((i == 0) & (j == n - 1))
    i, j = i[~adjacent], j[~adjacent]
    if np.any(segments_intersect(p[i], q[i], p[j], q[j])):
        return False
    return not any(_folds_back(k[(m - 1) % n], k[m], k[(m + 1) % n]) for m in range(n))

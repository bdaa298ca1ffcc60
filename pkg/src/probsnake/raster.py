"""Gray images, netpbm/PNG I/O, summed-area tables, gradients and synthetic scenes.

Coordinates follow the image convention used throughout the package: ``x`` is
the column index (rightward), ``y`` the row index (downward) and the pixel
``(x, y)`` has its center at integer coordinates.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


class ImageFormatError(ValueError):
    """The file is recognised but its header or payload is malformed."""


class UnsupportedFormatError(ValueError):
    """The file is not a single-channel P5 or PNG image."""


@dataclass(frozen=True)
class GrayImage:
    """Scalar intensity field stored as a read-only ``(height, width)`` float array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_rows(cls, width: int, height: int, values: Sequence[float]) -> "GrayImage":
        if len(values) != width * height:
            raise ValueError(f"expected {width * height} samples, got {len(values)}")
        return cls(np.asarray(values, dtype=np.float64).reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x <= self.width - 1 and 0 <= y <= self.height - 1


# ---------------------------------------------------------------------------
# File I/O


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Return the next whitespace-delimited header token, skipping comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("unexpected end of header")
    return buf[start:pos], pos


def _parse_p5(buf: bytes) -> GrayImage:
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"malformed header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid maxval {maxval}")
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise ImageFormatError("missing whitespace after maxval")
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = width * height * dtype.itemsize
    payload = buf[pos : pos + nbytes]
    if len(payload) < nbytes:
        raise ImageFormatError("unexpected end of data")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return GrayImage(samples.astype(np.float64))


def _read_png(path: str) -> GrayImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16", "I;16B", "F"):
            raise UnsupportedFormatError(f"PNG mode {im.mode!r} is not single-channel")
        return GrayImage(np.asarray(im, dtype=np.float64))


def load_image(path: str | os.PathLike) -> GrayImage:
    """Read a binary graymap (P5, 8- or 16-bit) or a single-channel PNG.

    Raises ``FileNotFoundError`` for missing files, :class:`ImageFormatError`
    for malformed content and :class:`UnsupportedFormatError` otherwise.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] == b"P5":
        return _parse_p5(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    raise UnsupportedFormatError(f"{path}: not a P5 graymap or PNG file")


def save_pgm(img: GrayImage, path: str | os.PathLike, maxval: int | None = None) -> None:
    """Write ``img`` as P5. Intensities are rounded and clipped to ``[0, maxval]``.

    ``maxval`` defaults to 255, or 65535 when the data exceeds 255.
    """
    if maxval is None:
        maxval = 255 if img.data.max(initial=0) <= 255 else 65535
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    samples = np.clip(np.rint(img.data), 0, maxval).astype(dtype)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (img.width, img.height, maxval))
        fh.write(samples.tobytes())


def save_ppm(rgb: np.ndarray, path: str | os.PathLike) -> None:
    """Write an ``(h, w, 3)`` uint8 array as a binary P6 pixmap."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) array")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def load_ppm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] != b"P6":
        raise UnsupportedFormatError("not a P6 pixmap")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise UnsupportedFormatError("only 8-bit pixmaps are supported")
    payload = buf[pos + 1 : pos + 1 + 3 * w * h]
    if len(payload) < 3 * w * h:
        raise ImageFormatError("unexpected end of data")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


# ---------------------------------------------------------------------------
# Summed-area tables


@dataclass(frozen=True)
class IntegralTables:
    """Zero-padded summed-area tables of ``I`` and ``I**2``.

    ``sum[y, x]`` holds the total over rows ``< y`` and columns ``< x``. When the
    image is integer valued both tables are ``int64`` so rectangle sums are exact.
    Real-valued images get a second pair of tables built from ``I - mean(I)``,
    used for window variances so large offsets do not cancel catastrophically.
    """

    sum: np.ndarray
    sum_sq: np.ndarray
    centered: tuple[np.ndarray, np.ndarray] | None = None
    offset: float = 0.0

    @property
    def width(self) -> int:
        return self.sum.shape[1] - 1

    @property
    def height(self) -> int:
        return self.sum.shape[0] - 1

    @property
    def exact(self) -> bool:
        return self.sum.dtype.kind == "i"

    def rect_sum(self, x0, y0, x1, y1, centered: bool = False):
        """Sums over the half-open rectangle ``[x0, x1) x [y0, y1)``; vectorised."""
        s, q = self.centered if centered and self.centered is not None else (self.sum, self.sum_sq)
        return (
            s[y1, x1] - s[y0, x1] - s[y1, x0] + s[y0, x0],
            q[y1, x1] - q[y0, x1] - q[y1, x0] + q[y0, x0],
        )


def _tables(vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = vals.shape
    s = np.zeros((h + 1, w + 1), dtype=vals.dtype)
    q = np.zeros((h + 1, w + 1), dtype=vals.dtype)
    s[1:, 1:] = vals.cumsum(0).cumsum(1)
    q[1:, 1:] = (vals * vals).cumsum(0).cumsum(1)
    s.setflags(write=False)
    q.setflags(write=False)
    return s, q


def build_integral(img: GrayImage) -> IntegralTables:
    data = img.data
    if np.all(data == np.rint(data)) and np.abs(data).max(initial=0) < 2**31:
        return IntegralTables(*_tables(data.astype(np.int64)))
    offset = float(data.mean())
    return IntegralTables(*_tables(data), centered=_tables(data - offset), offset=offset)


def clipped_window(tables: IntegralTables, cx, cy, half: int):
    """Half-open bounds of the ``(2*half+1)**2`` window at ``(cx, cy)``, clipped to the image."""
    x0 = np.maximum(cx - half, 0)
    y0 = np.maximum(cy - half, 0)
    x1 = np.minimum(cx + half + 1, tables.width)
    y1 = np.minimum(cy + half + 1, tables.height)
    return x0, y0, x1, y1


def window_variance(tables: IntegralTables, cx, cy, half: int):
    """Vectorised population mean and variance for integer pixel centers ``cx, cy``.

    Centers must already lie inside the image; no bounds check is done here.
    """
    cx = np.asarray(cx, dtype=np.int64)
    cy = np.asarray(cy, dtype=np.int64)
    x0, y0, x1, y1 = clipped_window(tables, cx, cy, half)
    n = (x1 - x0) * (y1 - y0)
    s, q = tables.rect_sum(x0, y0, x1, y1, centered=True)
    if tables.exact:
        smax = float(np.abs(s).max(initial=0))
        if smax * smax < 9e18 and float(n.max(initial=0)) * float(q.max(initial=0)) < 9e18:
            num = n * q - s * s
        else:
            num = np.asarray(n, dtype=object) * q - np.asarray(s, dtype=object) ** 2
        var = np.asarray(num, dtype=np.float64) / (n.astype(np.float64) ** 2)
        mean = s / n
    else:
        m = s / n
        var = np.where(n > 1, np.maximum(q / n - m * m, 0.0), 0.0)
        mean = m + tables.offset
    return mean, var


def window_stats(tables: IntegralTables, center: tuple[int, int], half: int) -> tuple[float, float]:
    """Mean and population variance of the clipped square window around ``center``."""
    if half < 0:
        raise ValueError("window half-size must be >= 0")
    cx, cy = center
    if not (0 <= cx < tables.width and 0 <= cy < tables.height):
        raise ValueError(f"window center {center} outside {tables.width}x{tables.height} image")
    mean, var = window_variance(tables, cx, cy, half)
    return float(mean), float(var)


# ---------------------------------------------------------------------------
# Gradients


def _diff(a: np.ndarray, axis: int) -> np.ndarray:
    # central differences inside, one-sided at the borders
    return np.gradient(a, axis=axis, edge_order=1)


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    mag_sq: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mag_sq", self.gx * self.gx + self.gy * self.gy)

    @cached_property
    def mag_sq_gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """``(d/dx, d/dy)`` of ``mag_sq``, with the same difference scheme."""
        return _diff(self.mag_sq, 1), _diff(self.mag_sq, 0)


def gradient(img: GrayImage) -> GradientField:
    if img.width < 2 or img.height < 2:
        raise ValueError("gradient needs at least 2 pixels along each axis")
    return GradientField(_diff(img.data, 1), _diff(img.data, 0))


# ---------------------------------------------------------------------------
# Synthetic scenes


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


@dataclass(frozen=True)
class Truth:
    """Analytic ground-truth boundary of a synthetic scene."""

    kind: str  # "line", "circle" or "polyline"
    points: tuple[tuple[float, float], ...] = ()
    center: tuple[float, float] | None = None
    radius: float | None = None

    def distance(self, pts) -> np.ndarray:
        """Euclidean distance from each ``(x, y)`` point to the boundary."""
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.kind == "circle":
            return np.abs(np.linalg.norm(p - np.asarray(self.center), axis=1) - self.radius)
        verts = np.asarray(self.points, dtype=np.float64)
        d = np.stack([_point_segment_distance(p, verts[k], verts[k + 1]) for k in range(len(verts) - 1)])
        return d.min(axis=0)

    def polygon(self, spacing: float = 1.0) -> list[tuple[float, float]]:
        """Dense polyline/polygon sampling of the boundary (circle sampled by arc length)."""
        if self.kind != "circle":
            return [tuple(map(float, p)) for p in self.points]
        n = max(8, math.ceil(2 * math.pi * self.radius / spacing))
        t = 2 * math.pi * np.arange(n) / n
        cx, cy = self.center
        return [(cx + self.radius * math.cos(a), cy + self.radius * math.sin(a)) for a in t]

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "circle":
            d.update(center=list(self.center), radius=self.radius)
        else:
            d["points"] = [list(p) for p in self.points]
        return d


SCENE_KINDS = ("step-edge", "disk", "two-region-gaussian", "polyline-edge")


def _size(size) -> tuple[int, int]:
    if isinstance(size, (int, np.integer)):
        return int(size), int(size)
    w, h = size
    return int(w), int(h)


def make_scene(
    kind: str,
    size: int | tuple[int, int] = 64,
    noise: float = 0.0,
    seed: int = 0,
    **params,
) -> tuple[GrayImage, Truth]:
    """Generate a synthetic test image together with its true boundary.

    Parameters
    ----------
    kind : {"step-edge", "disk", "two-region-gaussian", "polyline-edge"}
    size : int or (width, height)
        Image dimensions, each at least 16.
    noise : float
        Standard deviation of additive Gaussian noise. For
        ``two-region-gaussian`` this is the per-region standard deviation
        (default 10 when 0 is passed).
    seed : int
        Seed for the noise generator; output is a pure function of the arguments.
    **params
        ``step-edge``: ``column`` (first foreground column), ``levels``.
        ``disk`` / ``two-region-gaussian``: ``center``, ``radius``, ``levels``
        (``means`` is accepted as an alias for the latter).
        ``polyline-edge``: ``vertices`` (pixels strictly below the polyline are
        foreground), ``levels``.
    """
    w, h = _size(size)
    if w < 16 or h < 16:
        raise ValueError("scene dimensions must be >= 16")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    if kind == "step-edge":
        lo, hi = params.get("levels", (0.0, 100.0))
        col = int(params.get("column", w // 2))
        if not 0 < col < w:
            raise ValueError(f"edge column {col} outside image")
        data = np.where(xs >= col, hi, lo)
        truth = Truth("line", points=((col - 0.5, 0.0), (col - 0.5, h - 1.0)))
    elif kind in ("disk", "two-region-gaussian"):
        default_levels = (50.0, 150.0) if kind == "two-region-gaussian" else (0.0, 100.0)
        lo, hi = params.get("levels", params.get("means", default_levels))
        cx, cy = params.get("center", ((w - 1) / 2, (h - 1) / 2))
        r = float(params.get("radius", min(w, h) / 4))
        if r <= 0 or cx - r < 0 or cy - r < 0 or cx + r > w - 1 or cy + r > h - 1:
            raise ValueError(f"disk of radius {r} at ({cx}, {cy}) does not fit in {w}x{h}")
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 < r * r
        data = np.where(inside, hi, lo)
        if kind == "two-region-gaussian" and noise == 0:
            noise = 10.0
        truth = Truth("circle", center=(float(cx), float(cy)), radius=r)
    elif kind == "polyline-edge":
        lo, hi = params.get("levels", (0.0, 100.0))
        verts = params.get(
            "vertices",
            ((0.0, 0.40 * h), (0.30 * w, 0.55 * h), (0.65 * w, 0.45 * h), (w - 1.0, 0.60 * h)),
        )
        verts = tuple((float(x), float(y)) for x, y in verts)
        vx = np.array([v[0] for v in verts])
        vy = np.array([v[1] for v in verts])
        if np.any(np.diff(vx) <= 0):
            raise ValueError("polyline vertices must have increasing x")
        if vx.min() < 0 or vx.max() > w - 1 or vy.min() < 0 or vy.max() > h - 1:
            raise ValueError("polyline exceeds image bounds")
        boundary = np.interp(np.arange(w, dtype=np.float64), vx, vy)
        data = np.where(ys > boundary[None, :], hi, lo)
        truth = Truth("polyline", points=verts)
    else:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")

    if noise > 0:
        data = data + rng.normal(0.0, noise, size=data.shape)
    return GrayImage(data), truth

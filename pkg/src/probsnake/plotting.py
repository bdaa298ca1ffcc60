"""Overlay pixmaps and matplotlib figures for run and bench reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .curve import Curve  # noqa: E402
from .raster import GrayImage  # noqa: E402

CURVE_RGB = (255, 0, 0)
INIT_RGB = (0, 255, 255)

plt.rcParams.update({
    "font.size": 8,
    "axes.linewidth": 0.6,
    "savefig.bbox": "tight",
    "image.interpolation": "none",
})


def bresenham(x0: int, y0: int, x1: int, y1: int):
    """Integer pixels on the segment between two pixel centers, endpoints included."""
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        yield x0, y0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def gray_to_rgb(img: GrayImage) -> np.ndarray:
    data = img.data
    peak = data.max(initial=0)
    if peak > 255:
        data = data * (255.0 / peak)
    g = np.clip(np.rint(data), 0, 255).astype(np.uint8)
    return np.repeat(g[:, :, None], 3, axis=2)


def draw_curve(rgb: np.ndarray, c: Curve, color=CURVE_RGB) -> np.ndarray:
    """Draw ``c`` as a 1-pixel polyline into ``rgb`` (in place) and return it."""
    h, w, _ = rgb.shape
    pts = np.rint(c.knots).astype(int)
    if c.closed:
        pts = np.vstack([pts, pts[:1]])
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        for x, y in bresenham(int(x0), int(y0), int(x1), int(y1)):
            if 0 <= x < w and 0 <= y < h:
                rgb[y, x] = color
    return rgb


def overlay(img: GrayImage, c: Curve) -> np.ndarray:
    return draw_curve(gray_to_rgb(img), c)


def _closed_xy(c: Curve):
    k = c.knots
    if c.closed:
        k = np.vstack([k, k[:1]])
    return k[:, 0], k[:, 1]


def fit_figure(img: GrayImage, init: Curve, final: Curve, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4, 4 * img.height / img.width))
    ax.imshow(img.data, cmap="gray")
    ax.plot(*_closed_xy(init), "--", color="c", lw=0.8, label="initial")
    ax.plot(*_closed_xy(final), "-", color="r", lw=0.8, label="final")
    ax.plot(final.knots[:, 0], final.knots[:, 1], ".", color="r", ms=2)
    ax.set_xlim(-0.5, img.width - 0.5)
    ax.set_ylim(img.height - 0.5, -0.5)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.legend(loc="lower right", fontsize=6, frameon=False, labelcolor="w")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bench_figure(rows, path) -> None:
    """Bar chart of median wall-clock per model (log scale)."""
    names = [r.model for r in rows]
    med = [r.median_s * 1e3 for r in rows]
    fig, ax = plt.subplots(figsize=(3.5, 2.4))
    bars = ax.bar(names, med, color="0.35", width=0.55)
    ax.set_yscale("log")
    ax.set_ylabel("median time per fit (ms)")
    for b, v in zip(bars, med):
        ax.annotate(f"{v:.3g}", (b.get_x() + b.get_width() / 2, v), ha="center", va="bottom", fontsize=6)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    fig.savefig(path, dpi=150)
    plt.close(fig)

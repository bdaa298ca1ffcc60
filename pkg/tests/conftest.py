import math

import numpy as np
import pytest

from probsnake.curve import Curve
from probsnake.raster import make_scene

ACCEPTANCE_LINES = []


def circle_curve(center, radius, n, phase=0.0):
    t = phase + 2 * np.pi * np.arange(n) / n
    return Curve(np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)]), True)


def brute_window(img_data, cx, cy, half):
    """Two-pass mean/variance over the clipped window with plain Python loops."""
    h, w = img_data.shape
    vals = []
    for y in range(max(cy - half, 0), min(cy + half, h - 1) + 1):
        for x in range(max(cx - half, 0), min(cx + half, w - 1) + 1):
            vals.append(float(img_data[y, x]))
    m = math.fsum(vals) / len(vals)
    return m, math.fsum((v - m) ** 2 for v in vals) / len(vals)


def point_segment_distance(p, a, b):
    p, a, b = (np.asarray(v, float) for v in (p, a, b))
    ab = b - a
    t = min(max(float((p - a) @ ab / (ab @ ab)), 0.0), 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def distance_to_polyline(p, verts, closed):
    verts = np.asarray(verts, float)
    segs = list(zip(verts[:-1], verts[1:]))
    if closed:
        segs.append((verts[-1], verts[0]))
    return min(point_segment_distance(p, a, b) for a, b in segs)


def random_convex_polygon(rng, w, h, n=None):
    n = n or int(rng.integers(3, 12))
    cx, cy = rng.uniform(0.3 * w, 0.7 * w), rng.uniform(0.3 * h, 0.7 * h)
    r = rng.uniform(2, 0.28 * min(w, h))
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    rx = r * rng.uniform(0.5, 1.0)
    return np.column_stack([cx + rx * np.cos(t), cy + r * np.sin(t)])


@pytest.fixture(scope="session")
def disk_scene():
    """256x256, disk radius 40, levels 0/100, noise 5, seed 1."""
    return make_scene("disk", 256, noise=5.0, seed=1, radius=40)


@pytest.fixture(scope="session")
def two_region_scene():
    return make_scene("two-region-gaussian", 128, noise=10.0, seed=3, radius=30)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

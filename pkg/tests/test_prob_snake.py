import math

import numpy as np
import pytest

from conftest import brute_window, circle_curve
from probsnake.curve import Curve, normals, resample
from probsnake.prob_snake import (
    DensityProfile,
    PassConfig,
    Schedule,
    fit,
    iterate,
    regularize_profile,
    run_pass,
    score_profile,
    select_offset,
)
from probsnake.raster import GrayImage, build_integral, make_scene


def profile(values, depth=None):
    values = np.asarray(values, dtype=float)
    depth = depth or (len(values) - 1) // 2
    return DensityProfile(0, np.arange(-depth, depth + 1), values, values.copy())


def peaks(depth, where):
    s = np.zeros(2 * depth + 1)
    for j, v in where.items():
        s[j + depth] = v
    return profile(s, depth)


@pytest.fixture(scope="module")
def step():
    img, truth = make_scene("step-edge", 96, column=48)
    return img, build_integral(img)


# -- configuration ------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs", [{"depth": 0}, {"window_half": -1}, {"regularization": -0.1}, {"max_iterations": 0}, {"epsilon": -1}]
)
def test_pass_config_ranges(kwargs):
    with pytest.raises(ValueError):
        PassConfig(**kwargs)


def test_default_schedules():
    closed = Schedule.closed_default()
    assert (closed.pass1.depth, closed.pass1.window, closed.pass1.regularization) == (25, 7, 0)
    assert closed.resample_max_spacing == 4
    assert (closed.pass2.depth, closed.pass2.window, closed.pass2.regularization) == (5, 7, 1)
    opened = Schedule.open_default()
    assert (opened.pass1.depth, opened.pass1.window, opened.pass1.regularization) == (20, 7, 0)
    assert (opened.pass2.depth, opened.pass2.window, opened.pass2.regularization) == (5, 7, 0)
    with pytest.raises(ValueError):
        Schedule(PassConfig(), 0, PassConfig())


# -- score_profile --------------------------------------------------------------


def test_profile_constant_image():
    t = build_integral(GrayImage(np.full((40, 40), 7.0)))
    p = score_profile(t, (20, 20), (1, 0), PassConfig(depth=10))
    assert not p.raw.any() and len(p.offsets) == 21


def test_profile_depth_one():
    t = build_integral(GrayImage(np.zeros((10, 10))))
    assert len(score_profile(t, (5, 5), (0, 1), PassConfig(depth=1)).raw) == 3


def test_profile_matches_brute_force_scan(step):
    img, t = step
    knot = np.array([38.3, 40.0])
    normal = np.array([math.cos(0.3), math.sin(0.3)])
    cfg = PassConfig(depth=25, window_half=3)
    p = score_profile(t, knot, normal, cfg)
    for j, s in zip(p.offsets, p.raw):
        x, y = np.rint(knot + j * normal).astype(int)
        if 0 <= x < img.width and 0 <= y < img.height:
            assert s == pytest.approx(brute_window(img.data, x, y, 3)[1], rel=1e-12, abs=1e-12)
        else:
            assert s == 0


def test_profile_peak_on_step_edge(step):
    _, t = step
    # knot 10 px left of the edge (edge between columns 47 and 48)
    p = score_profile(t, (37.5, 40.0), (1, 0), PassConfig(depth=25))
    j = p.offsets[np.argmax(p.raw)]
    assert abs(37.5 + j - 47.5) <= 1


def test_out_of_bounds_candidates_score_zero():
    img, _ = make_scene("step-edge", 32, column=3)
    p = score_profile(build_integral(img), (2.0, 16.0), (-1, 0), PassConfig(depth=10))
    assert np.all(p.raw[p.offsets > 2] == 0)
    assert p.raw[p.offsets == 0][0] > 0


# -- regularize_profile / select_offset -----------------------------------------


def test_regularization_zero_is_identity():
    p = profile(np.random.default_rng(0).uniform(size=11))
    assert np.array_equal(regularize_profile(p, 0).regularized, p.raw)


def test_regularization_uniform_prefers_center():
    assert select_offset(regularize_profile(profile(np.ones(21)), 0.5)) == 0


def test_regularization_picks_near_peak():
    p = peaks(25, {-3: 1.0, 20: 1.0})
    w_near, w_far = math.exp(-((3 / 25) ** 2)), math.exp(-((20 / 25) ** 2))
    r = regularize_profile(p, 1.0)
    assert r.regularized[25 - 3] == pytest.approx(w_near)
    assert r.regularized[25 + 20] == pytest.approx(w_far)
    assert select_offset(r) == -3


def test_regularization_negative():
    with pytest.raises(ValueError):
        regularize_profile(profile(np.ones(3)), -1)


def test_regularization_preserves_zero_set():
    s = np.random.default_rng(1).uniform(size=31) * (np.arange(31) % 3 != 0)
    r = regularize_profile(profile(s), 2.5)
    assert np.array_equal(r.regularized == 0, s == 0)


@pytest.mark.parametrize(
    "where, expect",
    [({}, 0), ({4: 1.0}, 4), ({-2: 1.0, 2: 1.0}, -2), ({-5: 2.0, 1: 2.0, 3: 2.0}, 1)],
)
def test_select_offset(where, expect):
    assert select_offset(peaks(5, where)) == expect


# -- iterate / run_pass ---------------------------------------------------------


def test_iterate_fixed_point(step):
    _, t = step
    c = Curve(np.array([[47.0, 20.0], [47.0, 50.0], [47.0, 80.0]]), False)
    new, disp = iterate(c, t, PassConfig(depth=5, regularization=1.0))
    assert disp == 0 and new == c


def test_iterate_lands_on_edge(step):
    _, t = step
    c = Curve(np.array([[42.5, 30.0], [42.5, 60.0]]), False)
    new, disp = iterate(c, t, PassConfig(depth=5))
    assert np.all(np.abs(new.knots[:, 0] - 47.5) <= 1)
    assert disp <= 5


def test_iterate_constant_image():
    t = build_integral(GrayImage(np.full((50, 50), 3.0)))
    c = circle_curve((25, 25), 10, 12)
    new, disp = iterate(c, t, PassConfig(depth=8))
    assert disp == 0 and new == c


def test_iterate_displacement_bound_and_monotone(disk_scene):
    img, truth = disk_scene
    t = build_integral(img)
    cfg = PassConfig(depth=7, regularization=0.7)
    c = circle_curve(truth.center, 50, 40, phase=0.1)
    new, _ = iterate(c, t, cfg)
    moves = np.linalg.norm(new.knots - c.knots, axis=1)
    assert np.all(moves <= cfg.depth + 1e-9)
    nrm = normals(c)
    for i in range(len(c)):
        p = score_profile(t, c.knots[i], nrm[i], cfg)
        j = select_offset(p)
        assert p.regularized[j + cfg.depth] >= p.regularized[cfg.depth]
        assert np.allclose(new.knots[i], np.clip(c.knots[i] + j * nrm[i], 0, 255))


def test_run_pass_epsilon_equal_depth(disk_scene):
    img, truth = disk_scene
    c = circle_curve(truth.center, 50, 20)
    _, stats = run_pass(c, build_integral(img), PassConfig(depth=10, epsilon=10))
    assert stats.iterations == 1 and stats.converged


def test_run_pass_constant_image():
    t = build_integral(GrayImage(np.zeros((40, 40))))
    c, stats = run_pass(circle_curve((20, 20), 8, 10), t, PassConfig())
    assert stats.iterations == 1 and stats.displacements == [0.0]


def test_run_pass_disk_from_outside(disk_scene):
    img, truth = disk_scene
    c0 = circle_curve(truth.center, 55, 40)
    c, stats = run_pass(c0, build_integral(img), PassConfig(depth=25))
    assert stats.converged and len(c) == 40
    assert truth.distance(c.knots).mean() <= 1.0


def test_run_pass_iteration_cap(disk_scene):
    img, truth = disk_scene
    _, stats = run_pass(circle_curve(truth.center, 55, 20), build_integral(img), PassConfig(depth=3, max_iterations=2))
    assert stats.iterations == 2 and not stats.converged


# -- fit ------------------------------------------------------------------------


def test_fit_fourteen_knot_disk(disk_scene):
    img, truth = disk_scene
    c0 = circle_curve(truth.center, 55, 14)
    rep = fit(c0, img, Schedule.closed_default())
    assert rep.knots[0] == 14
    assert truth.distance(rep.curve.knots).mean() <= 1.0
    assert [len(d) for d in rep.displacements] == rep.iterations
    assert len(rep.durations) == 2 and all(d > 0 for d in rep.durations)


def test_fit_resample_count(disk_scene):
    img, truth = disk_scene
    c0 = circle_curve(truth.center, 55, 14)
    sched = Schedule.closed_default()
    coarse, _ = run_pass(c0, build_integral(img), sched.pass1)
    rep = fit(c0, img, sched)
    assert rep.knots[1] == len(resample(coarse, 4.0)) == len(rep.curve)


def test_fit_deterministic(disk_scene):
    img, truth = disk_scene
    c0 = circle_curve(truth.center, 55, 14)
    a = fit(c0, img, Schedule.closed_default())
    b = fit(c0, img, Schedule.closed_default())
    assert a.to_dict(timing=False) == b.to_dict(timing=False)


def test_fit_out_of_bounds_init(disk_scene):
    img, _ = disk_scene
    with pytest.raises(ValueError):
        fit(circle_curve((10, 10), 30, 10), img, Schedule.closed_default())


def test_shift_invariance_of_selection(disk_scene):
    img, truth = disk_scene
    shifted = GrayImage(img.data + 1234.5)
    cfg = PassConfig(depth=25, regularization=0.5)
    c = circle_curve(truth.center, 52, 30)
    a, _ = iterate(c, build_integral(img), cfg)
    b, _ = iterate(c, build_integral(shifted), cfg)
    assert a == b

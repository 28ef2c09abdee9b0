import math

import numpy as np
import pytest

from sbamdt.synthdata import (CIRCLE_RADIUS, ROT, SCENARIOS, circle_cluster,
                              gp_features, in_ushape_axis, rotate,
                              sample_ushape, simulate, square_truth,
                              ushape_truth)

SQRT_HALF = 0.7071067811865476


def test_rotation_is_counterclockwise_and_invertible():
    out = rotate(np.array([[1.0, 0.0]]))
    assert out[0] == pytest.approx([SQRT_HALF, SQRT_HALF], abs=1e-15)
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(40, 2))
    back = rotate(rotate(pts), -ROT)
    assert np.allclose(back, pts, atol=1e-14)
    # rotation preserves radii
    assert np.allclose(np.linalg.norm(rotate(pts), axis=1),
                       np.linalg.norm(pts, axis=1), atol=1e-14)


def test_membership_frozen_points():
    inside = [(0.0, 0.0), (-0.3, 0.5), (0.0, 0.25), (0.8, 1.6), (-0.8, -0.25),
              (0.3, 1.0)]
    outside = [(0.0, 0.5), (0.85, 0.0), (0.29, 0.26), (0.0, 1.7),
               (0.0, -0.26), (-0.29, 1.6)]
    got = in_ushape_axis(np.array(inside + outside, dtype=float))
    assert got.tolist() == [True] * len(inside) + [False] * len(outside)


def test_area_fraction_matches_geometry():
    # outer box 1.6 x 1.85 = 2.96, open notch 0.6 x 1.35 = 0.81
    xs = np.linspace(-0.8, 0.8, 321)
    ys = np.linspace(-0.25, 1.6, 371)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    frac = in_ushape_axis(grid).mean()
    assert frac == pytest.approx(2.15 / 2.96, abs=5e-3)


def test_sample_ushape_stays_inside_and_fills_arms():
    rng = np.random.default_rng(7)
    pts = sample_ushape(500, rng)
    assert pts.shape == (500, 2)
    back = rotate(pts, -ROT)
    assert np.all(in_ushape_axis(back))
    labels = circle_cluster(pts)
    assert set(labels.tolist()) == {0, 1, 2}
    with pytest.raises(ValueError):
        sample_ushape(0, rng)


def flood_components(cells: set) -> list[set]:
    comps = []
    remaining = set(cells)
    while remaining:
        seed = remaining.pop()
        comp, stack = {seed}, [seed]
        while stack:
            i, j = stack.pop()
            for nb in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if nb in remaining:
                    remaining.remove(nb)
                    comp.add(nb)
                    stack.append(nb)
        comps.append(comp)
    return comps


def test_circle_severs_exactly_two_arm_components():
    # flood fill on a fine axis-aligned grid: the 0.9-radius circle splits the
    # U into one inside piece and two arm tips
    xs = np.linspace(-0.8, 0.8, 33)
    ys = np.linspace(-0.25, 1.6, 38)
    cells = {}
    for i, ux in enumerate(xs):
        for j, uy in enumerate(ys):
            if in_ushape_axis(np.array([[ux, uy]]))[0]:
                cells[(i, j)] = (ux, uy)
    radii = {k: math.hypot(*v) for k, v in cells.items()}
    inside = {k for k in cells if radii[k] < CIRCLE_RADIUS}
    outside = set(cells) - inside
    assert len(flood_components(inside)) == 1
    arm_comps = flood_components(outside)
    assert len(arm_comps) == 2
    # labels from the clustering function agree with the flood fill
    for comp, want in ((inside, {0}),):
        pts = rotate(np.array([cells[k] for k in comp]))
        assert set(circle_cluster(pts).tolist()) == want
    arm_labels = []
    for comp in arm_comps:
        pts = rotate(np.array([cells[k] for k in comp]))
        labs = set(circle_cluster(pts).tolist())
        assert len(labs) == 1
        arm_labels.append(labs.pop())
    assert sorted(arm_labels) == [1, 2]


def test_boundary_radius_counts_as_arm():
    pt = np.array([[0.9, 0.0]])        # rotated coords, radius exactly 0.9
    assert circle_cluster(pt)[0] in (1, 2)
    assert circle_cluster(0.999 * pt)[0] == 0


def test_ushape_truth_frozen_values():
    axis = np.array([(0.0, 0.0), (-0.55, 1.3), (0.55, 1.3), (0.75, 0.1)])
    x1 = np.array([0.7, 1.0, 1.0, -2.0])
    s = rotate(axis)
    assert circle_cluster(s).tolist() == [0, 1, 2, 0]
    f = ushape_truth(s, x1)
    want = [0.0, 1.9798074415939957, -2.69375, -1.9632727258818001]
    assert f == pytest.approx(want, abs=1e-14)
    # cluster 2 ignores x1 entirely
    f2 = ushape_truth(s, x1 + 100.0)
    assert f2[2] == pytest.approx(f[2], abs=1e-14)


def test_square_truth_frozen_values():
    assert float(square_truth(0.5, -0.5)) == \
        pytest.approx(0.14597733051683126, abs=1e-15)
    assert float(square_truth(0.5, 0.5)) == \
        pytest.approx(6.142857142857142, abs=1e-14)
    assert float(square_truth(-0.5, 0.1)) == 5.0
    assert float(square_truth(-0.5, 0.3)) == -5.0
    assert float(square_truth(-0.0001, 1.0)) == -5.0
    assert float(square_truth(0.0, 1.0)) == pytest.approx(
        1.0 + 2.0 / 7.0 + 9.0, abs=1e-14)


def test_gp_features_shapes_and_duplicates():
    rng = np.random.default_rng(3)
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [2.0, -1.0]])
    x = gp_features(pts, 5, rng)
    assert x.shape == (4, 5)
    assert np.array_equal(x[0], x[2])          # coincident rows exactly equal
    assert not np.array_equal(x[0], x[1])
    assert gp_features(pts, 0, rng).shape == (4, 0)
    assert np.array_equal(gp_features(pts, 3, rng, variance=0.0),
                          np.zeros((4, 3)))
    with pytest.raises(ValueError):
        gp_features(pts, -1, rng)
    with pytest.raises(ValueError):
        gp_features(pts, 2, rng, length_scale=0.0)
    with pytest.raises(ValueError):
        gp_features(pts, 2, rng, variance=-1.0)


def test_gp_features_covariance():
    # columns are iid GP draws; sample moments match the kernel
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [3.0, 0.0]])
    rng = np.random.default_rng(4)
    x = gp_features(pts, 6000, rng, length_scale=0.5, variance=2.0)
    emp = np.cov(x, ddof=1)
    want = 2.0 * np.exp(-np.array([[0.0, 0.25, 9.0],
                                   [0.25, 0.0, 6.25],
                                   [9.0, 6.25, 0.0]]) / 0.5)
    assert np.allclose(emp, want, atol=0.15)


def test_simulate_shapes_and_noise():
    train, test = simulate("ushape", 40, 25, seed=11)
    assert (train.n, test.n) == (40, 25)
    assert train.p == 10 and test.p == 10
    assert train.d_m == 2
    back = rotate(train.structured, -ROT)
    assert np.all(in_ushape_axis(back))
    want = ushape_truth(train.structured, train.unstructured[:, 0])
    assert np.allclose(train.f_true, want, atol=1e-12)
    assert not np.allclose(train.y, train.f_true)
    tr0, _ = simulate("ushape", 30, 5, seed=2, noise_sd=0.0)
    assert np.array_equal(tr0.y, tr0.f_true)


def test_simulate_square_uses_coordinates_as_features():
    train, test = simulate("square", 50, 20, seed=8)
    assert np.array_equal(train.unstructured, train.structured)
    assert np.all(np.abs(train.structured) <= 1.0)
    want = square_truth(train.structured[:, 0], train.structured[:, 1])
    assert np.array_equal(train.f_true, want)
    assert test.n == 20


def test_simulate_determinism_and_validation():
    a = simulate("ushape", 20, 10, seed=5)
    b = simulate("ushape", 20, 10, seed=5)
    for ds_a, ds_b in zip(a, b):
        assert np.array_equal(ds_a.structured, ds_b.structured)
        assert np.array_equal(ds_a.y, ds_b.y)
    c = simulate("ushape", 20, 10, seed=6)
    assert not np.array_equal(a[0].y, c[0].y)
    with pytest.raises(ValueError):
        simulate("triangle", 10, 5, seed=0)
    with pytest.raises(ValueError):
        simulate("square", 0, 5, seed=0)
    with pytest.raises(ValueError):
        simulate("square", 10, 5, seed=0, noise_sd=-0.1)
    assert "ushape" in SCENARIOS and "square" in SCENARIOS

import numpy as np
import pytest

from sbamdt.metrics import (crps_empirical, crps_mean, mape, metric_report,
                            rmspe)


def test_rmspe_and_mape_frozen():
    pred = np.array([3.0, 4.0])
    truth = np.array([0.0, 0.0])
    assert rmspe(pred, truth) == pytest.approx(np.sqrt(12.5))
    assert mape(pred, truth) == pytest.approx(3.5)
    assert rmspe(truth, truth) == 0.0


def test_pair_validation():
    with pytest.raises(ValueError):
        rmspe(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        mape(np.array([np.nan]), np.array([0.0]))
    with pytest.raises(ValueError):
        rmspe(np.zeros((2, 2)), np.zeros((2, 2)))


def crps_double_loop(draws_i, y_i):
    s = len(draws_i)
    t1 = np.mean(np.abs(draws_i - y_i))
    t2 = np.mean(np.abs(draws_i[:, None] - draws_i[None, :]))
    return t1 - 0.5 * t2


def test_crps_two_point_frozen():
    # ensemble {0, 1} against truth 0: E|X-y| = 0.5, E|X-X'| = 0.5
    draws = np.array([[0.0], [1.0]])
    got = crps_empirical(draws, np.array([0.0]))
    assert got[0] == pytest.approx(0.25, abs=1e-15)


def test_crps_matches_double_loop():
    rng = np.random.default_rng(0)
    for _ in range(25):
        s = int(rng.integers(2, 40))
        n = int(rng.integers(1, 6))
        draws = rng.normal(size=(s, n)) * rng.uniform(0.5, 3.0)
        y = rng.normal(size=n)
        got = crps_empirical(draws, y)
        want = [crps_double_loop(draws[:, i], y[i]) for i in range(n)]
        assert np.allclose(got, want, atol=1e-12)
        assert crps_mean(draws, y) == pytest.approx(np.mean(want))


def test_crps_perfect_point_mass():
    draws = np.full((5, 3), 2.0)
    assert np.allclose(crps_empirical(draws, np.full(3, 2.0)), 0.0)
    # point mass at distance d from the truth scores exactly d
    assert np.allclose(crps_empirical(draws, np.full(3, 5.0)), 3.0)


def test_crps_validation():
    with pytest.raises(ValueError):
        crps_empirical(np.zeros((1, 4)), np.zeros(4))   # needs >= 2 draws
    with pytest.raises(ValueError):
        crps_empirical(np.zeros((3, 4)), np.zeros(5))
    with pytest.raises(ValueError):
        crps_empirical(np.zeros(4), np.zeros(4))


def test_metric_report_keys():
    rng = np.random.default_rng(1)
    draws = rng.normal(size=(30, 8))
    truth = rng.normal(size=8)
    rep = metric_report(draws.mean(axis=0), draws, truth)
    assert set(rep) == {"rmspe", "mape", "crps"}
    assert rep["rmspe"] == pytest.approx(rmspe(draws.mean(axis=0), truth))
    assert rep["crps"] == pytest.approx(crps_mean(draws, truth))

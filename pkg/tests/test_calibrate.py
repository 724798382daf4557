import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from confest.calibrate import Pwlm, apply_pwlm, fit_pwlm, load_pwlm, save_pwlm
from confest.metrics import ScoredSet, auc, nce, pr_curve


def scored(c, p):
    return ScoredSet(np.asarray(c), np.asarray(p, dtype=float))


@st.composite
def dev_sets(draw):
    n = draw(st.integers(1, 80))
    c = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    # confidences on a 1e-6 grid: a float-valued map cannot keep scores apart
    # that differ by less than its output resolution
    p = draw(st.lists(st.integers(0, 10**6), min_size=n, max_size=n))
    return scored(c, np.array(p) / 10**6)


class TestApply:
    def test_identity(self):
        m = Pwlm([0.0, 1.0], [0.0, 1.0])
        p = np.linspace(0, 1, 11)
        np.testing.assert_array_equal(apply_pwlm(m, p), p)

    def test_knot_exact(self):
        m = Pwlm([0.0, 0.3, 0.7, 1.0], [0.1, 0.2, 0.65, 0.9])
        for x, y in m.knots:
            assert apply_pwlm(m, x) == y

    def test_two_knot_interpolation(self):
        m = Pwlm([0.0, 1.0], [0.0, 0.5])
        # y0 + (p - x0) * (y1 - y0) / (x1 - x0)
        expected = 0.0 + (0.4 - 0.0) * (0.5 - 0.0) / (1.0 - 0.0)
        assert apply_pwlm(m, 0.4) == pytest.approx(expected, abs=1e-15)
        assert apply_pwlm(m, 0.4) == pytest.approx(0.2, abs=1e-15)

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_out_of_range(self, p):
        with pytest.raises(ValueError):
            apply_pwlm(Pwlm([0.0, 1.0], [0.0, 1.0]), p)

    @pytest.mark.parametrize("x,y", [
        ([0.1, 1.0], [0.0, 1.0]),      # no knot at 0
        ([0.0, 0.5, 0.5, 1.0], [0, 0.1, 0.2, 1]),  # repeated x
        ([0.0, 1.0], [0.6, 0.5]),      # decreasing
        ([0.0, 1.0], [0.0, 1.2]),      # outside [0, 1]
    ])
    def test_invalid_knots(self, x, y):
        with pytest.raises(ValueError):
            Pwlm(x, y)


class TestFit:
    def test_calibrated_input_is_identity_on_knots(self):
        # 10 bins of 10 points; every point in bin k has confidence k/10 + 0.05
        # and exactly round(10 * conf) hits... use accuracies equal to conf
        confs, targets = [], []
        for k, acc in enumerate([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]):
            hits = round(acc * 10)
            confs += [acc] * 10
            targets += [1] * hits + [0] * (10 - hits)
        m = fit_pwlm(scored(targets, confs), num_bins=10)
        inner = [(x, y) for x, y in m.knots if 0.0 < x < 1.0]
        assert len(inner) == 9
        for x, y in inner:
            assert abs(y - x) < 1e-9

    def test_two_clusters(self):
        rng = np.random.default_rng(5)
        low = 0.3 + rng.uniform(-0.02, 0.02, 100)
        high = 0.9 + rng.uniform(-0.02, 0.02, 100)
        dev = scored([0] * 100 + [1] * 100, np.r_[low, high])
        m = fit_pwlm(dev, num_bins=2)
        inner = [(x, y) for x, y in m.knots if 0.0 < x < 1.0]
        assert len(inner) == 2
        (x0, y0), (x1, y1) = inner
        # direct count: each equal-population bin is exactly one cluster
        assert x0 == pytest.approx(low.mean()) and x1 == pytest.approx(high.mean())
        assert y0 == pytest.approx(0.0, abs=1e-6) and y1 == pytest.approx(1.0, abs=1e-6)

    def test_constant_targets(self):
        rng = np.random.default_rng(0)
        m = fit_pwlm(scored([1] * 50, rng.uniform(size=50)), num_bins=5)
        # the strict-monotone blend moves knots by at most strict_mix
        assert np.all(np.abs(m.y - 1.0) <= 1e-6 + 1e-15)
        exact = fit_pwlm(scored([1] * 50, rng.uniform(size=50)), num_bins=5, strict_mix=0.0)
        assert np.all(exact.y == 1.0)

    def test_pools_violators(self):
        # accuracies per bin of 2: 1.0, 0.0, 1.0 -> first two pooled
        dev = scored([1, 1, 0, 0, 1, 1], [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        m = fit_pwlm(dev, num_bins=3, strict_mix=0.0)
        assert m.knots == [(0.0, 0.5), (0.25, 0.5), (0.55, 1.0), (1.0, 1.0)]

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_pwlm(scored([], []), 5)
        with pytest.raises(ValueError):
            fit_pwlm(scored([1], [0.5]), 0)

    def test_all_confidences_one(self):
        m = fit_pwlm(scored([1, 0, 1], [1.0, 1.0, 1.0]), 3)
        assert m.x.tolist() == [0.0, 1.0]

    @settings(max_examples=200)
    @given(dev_sets(), st.integers(1, 25))
    def test_invariants(self, dev, bins):
        m = fit_pwlm(dev, bins)
        assert m.x[0] == 0.0 and m.x[-1] == 1.0
        assert np.all(np.diff(m.x) > 0)
        assert np.all(np.diff(m.y) >= 0)
        grid = np.linspace(0, 1, 101)
        out = apply_pwlm(m, grid)
        assert np.all(np.diff(out) >= 0)
        assert out.min() >= m.y.min() and out.max() <= m.y.max()
        assert 0.0 <= out.min() and out.max() <= 1.0

    @settings(max_examples=200)
    @given(dev_sets(), dev_sets(), st.integers(1, 25))
    def test_auc_preserved(self, dev, test, bins):
        if test.targets.sum() == 0:
            return
        m = fit_pwlm(dev, bins)
        mapped = scored(test.targets, apply_pwlm(m, test.confidences))
        assert abs(auc(pr_curve(mapped)) - auc(pr_curve(test))) <= 1e-9


def test_file_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    m = fit_pwlm(scored(rng.integers(0, 2, 300), rng.uniform(size=300)), 12)
    save_pwlm(m, tmp_path / "m.pwlm")
    back = load_pwlm(tmp_path / "m.pwlm")
    np.testing.assert_array_equal(back.x, m.x)
    np.testing.assert_array_equal(back.y, m.y)
    assert (tmp_path / "m.pwlm").read_text().startswith("confest-pwlm 1\nnum_knots ")


def test_load_rejects_garbage(tmp_path):
    (tmp_path / "bad").write_text("something else\n")
    with pytest.raises(ValueError):
        load_pwlm(tmp_path / "bad")

import numpy as np
import pytest

from scenecap.regions import (
    DEFAULT_R, CandidateBox, LogisticModel, geometry_features, is_hard_negative, objectness_train,
    overlap_fraction, select_regions,
)
from scenecap.regions import _strata


def test_geometry_examples():
    np.testing.assert_array_equal(geometry_features((0, 0, 100, 100), 100, 100), [0.5, 0.5, 1, 1, 1])
    np.testing.assert_array_equal(geometry_features((25, 25, 50, 50), 100, 100), [0.5, 0.5, 0.5, 0.5, 0.25])
    with pytest.raises(ValueError):
        geometry_features((0, 0, 1, 1), 0, 10)


def test_geometry_range_and_translation():
    rng = np.random.default_rng(0)
    for _ in range(100):
        w, h = rng.integers(1, 50, size=2)
        x, y = rng.integers(0, 50, size=2)
        g = geometry_features((x, y, w, h), 120, 90)
        assert np.all(g > 0) and np.all(g <= 1)
        moved = geometry_features((x + 3, y + 7, w, h), 120, 90)
        np.testing.assert_allclose(moved - g, [3 / 120, 7 / 90, 0, 0, 0], rtol=0, atol=1e-15)


def test_overlap_is_intersection_over_positive():
    assert overlap_fraction((0, 0, 10, 10), (5, 0, 10, 10)) == 0.5
    assert overlap_fraction((0, 0, 2, 2), (0, 0, 10, 10)) == 0.04
    assert is_hard_negative((0, 0, 10, 10), [(7, 2, 10, 10)])      # 3*8/100 = 0.24
    assert not is_hard_negative((0, 0, 10, 10), [(5, 0, 10, 10)])
    assert not is_hard_negative((50, 50, 1, 1), [(0, 0, 10, 10)])


def test_objectness_zero_model_and_range():
    zero = LogisticModel(np.zeros(3), 0.0)
    assert zero.score(np.array([5.0, -2.0, 1.0])) == 0.5
    m = LogisticModel(np.array([50.0, -50.0]), 3.0)
    s = m.score(np.random.default_rng(1).normal(size=(50, 2)))
    assert np.all(s >= 0) and np.all(s <= 1)


def test_objectness_separable_training():
    rng = np.random.default_rng(2)
    pos = rng.normal(size=(30, 2)) + [3, 3]
    neg = rng.normal(size=(30, 2)) - [3, 3]
    m = objectness_train(pos, neg, steps=300)
    assert np.all(m.score(pos) > 0.5) and np.all(m.score(neg) < 0.5)
    with pytest.raises(ValueError):
        objectness_train(pos, np.zeros((0, 2)))


def test_candidate_validation():
    with pytest.raises(ValueError):
        CandidateBox(0, 0, 0, 5)
    assert DEFAULT_R == 30


def test_single_full_image_candidate():
    sel = select_regions([CandidateBox(0, 0, 20, 10, np.ones(2), 0.3)], R=1, image_width=20, image_height=10)
    assert sel.indices == [0] and sel.coverage == 1.0
    np.testing.assert_array_equal(sel.features[0], [1, 1, 0.5, 0.5, 1, 1, 1])


def random_candidates(rng, n, W=64, H=48):
    out = []
    for j in range(n):
        w = int(rng.integers(4, W + 1))
        h = int(rng.integers(4, H + 1))
        x = int(rng.integers(0, W - w + 1))
        y = int(rng.integers(0, H - h + 1))
        out.append(CandidateBox(x, y, w, h, rng.normal(size=3), float(rng.random())))
    return out


def test_selection_constraints_hold():
    rng = np.random.default_rng(3)
    for seed in range(5):
        cands = random_candidates(rng, 100)
        sel = select_regions(cands, R=12, image_width=64, image_height=48, seed=seed)
        assert len(sel) == 12 and len(set(sel.indices)) == 12
        assert sel.coverage >= 0.95
        strata = _strata(np.array([c.area for c in cands]))
        assert len({strata[j] for j in sel.indices}) >= 3
        assert all(sel.boxes[k] == cands[j].box for k, j in enumerate(sel.indices))
        again = select_regions(cands, R=12, image_width=64, image_height=48, seed=seed)
        assert again.indices == sel.indices and np.array_equal(again.features, sel.features)


def test_unreachable_coverage_names_achieved_value():
    cands = [CandidateBox(0, 0, 5, 5, np.zeros(1), 0.9), CandidateBox(5, 5, 5, 5, np.zeros(1), 0.8)]
    with pytest.raises(ValueError, match="coverage 0.5000"):
        select_regions(cands, R=2, image_width=10, image_height=10)


def test_selection_input_errors():
    with pytest.raises(ValueError):
        select_regions([], image_width=5, image_height=5)
    with pytest.raises(ValueError):
        select_regions([CandidateBox(0, 0, 6, 5, np.zeros(1), 0.5)], image_width=5, image_height=5)
    with pytest.raises(ValueError):
        select_regions([CandidateBox(0, 0, 5, 5, np.zeros(1))], image_width=5, image_height=5)

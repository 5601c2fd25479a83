import numpy as np
import pytest

from scenecap import numcore as nc
from scenecap.attention import attend, attention_scores, blend, init_attention


def _net(seed=0, D=5, M=4, H=3, Ha=6):
    return init_attention(np.random.default_rng(seed), D, M, H, Ha)


def _hist(rng, D=5, M=4, H=3):
    return rng.normal(size=M), rng.normal(size=H), rng.normal(size=D)


def test_single_region_gets_all_weight():
    rng = np.random.default_rng(0)
    p = attend(_net(), rng.normal(size=(1, 5)), *_hist(rng))
    np.testing.assert_array_equal(p.data, [1.0])


def test_identical_regions_give_uniform_weights():
    rng = np.random.default_rng(1)
    r = np.tile(rng.normal(size=5), (4, 1))
    np.testing.assert_allclose(attend(_net(), r, *_hist(rng)).data, 0.25, rtol=0, atol=1e-15)


def test_weights_sum_to_one_and_shift_invariant():
    rng = np.random.default_rng(2)
    for seed in range(20):
        net = _net(seed)
        r = rng.normal(size=(7, 5))
        p = attend(net, r, *_hist(rng)).data
        assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12
    e, h, v = _hist(rng)
    scores = attention_scores(net, nc.Tensor(r[None]), nc.Tensor(e[None]), nc.Tensor(h[None]),
                              nc.Tensor(v[None])).data[0]
    p = nc.softmax_array(scores)
    assert np.argmax(nc.softmax_array(scores + 12.5)) == np.argmax(p)


def test_empty_region_set_rejected():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        attend(_net(), np.zeros((0, 5)), *_hist(rng))
    with pytest.raises(ValueError):
        attend(_net(), np.zeros((1, 2, 5)), *(x[None] for x in _hist(rng)), mask=[[0, 0]])


def test_mask_zeroes_padded_regions():
    rng = np.random.default_rng(4)
    r = rng.normal(size=(1, 4, 5))
    hist = [x[None] for x in _hist(rng)]
    p = attend(_net(), r, *hist, mask=[[1, 1, 0, 1]]).data[0]
    assert p[2] == 0.0
    q = attend(_net(), r[:, [0, 1, 3]], *hist).data[0]
    np.testing.assert_allclose(p[[0, 1, 3]], q, rtol=1e-12)


def test_permutation_equivariance():
    rng = np.random.default_rng(5)
    r = rng.normal(size=(6, 5))
    hist = _hist(rng)
    perm = rng.permutation(6)
    p = attend(_net(), r, *hist).data
    pp = attend(_net(), r[perm], *hist).data
    np.testing.assert_allclose(pp, p[perm], rtol=1e-12)
    np.testing.assert_allclose(blend(pp, r[perm]).data, blend(p, r).data, rtol=1e-12)


def test_blend_examples():
    r = np.array([[1.0, 2.0], [5.0, -2.0]])
    np.testing.assert_allclose(blend([0.25, 0.75], r).data, 0.25 * r[0] + 0.75 * r[1], rtol=1e-15)
    np.testing.assert_array_equal(blend([0.0, 1.0], r).data, r[1])
    rng = np.random.default_rng(6)
    regions = rng.normal(size=(9, 4))
    for _ in range(50):
        v = blend(nc.softmax_array(3 * rng.normal(size=9)), regions).data
        assert np.all(v >= regions.min(0) - 1e-12) and np.all(v <= regions.max(0) + 1e-12)
    with pytest.raises(ValueError):
        blend([0.5, 0.5], regions)


def test_attend_and_blend_pass_gradient_check():
    rng = np.random.default_rng(7)
    net = _net(7)
    r = rng.normal(size=(2, 4, 5))
    e, h, v = rng.normal(size=(2, 4)), rng.normal(size=(2, 3)), rng.normal(size=(2, 5))
    params = {k: getattr(net, k) for k in ("w_region", "w_word", "w_hidden", "w_context", "bias", "score")}
    target = rng.normal(size=(2, 5))

    def f(q):
        n = type(net)(**q)
        ctx = blend(attend(n, r, e, h, v), r)
        d = ctx - target
        return nc.reduce_sum(d * d)

    assert nc.finite_diff_check(f, params, h=1e-5) < 1e-5

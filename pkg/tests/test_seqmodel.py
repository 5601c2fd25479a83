import math

import numpy as np
import pytest

from scenecap import numcore as nc
from scenecap.numcore import Tensor
from scenecap.seqmodel import (
    GATES, InitMlp, InitMlpSet, LstmLayer, factorized_matrix, init_lstm_layer, init_scene_proj,
    init_states, lstm_step, mean_regions,
)


def sigm(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_lstm(W, b, x, h, c):
    """Scalar loops over a dense (in, 4H) weight, gates ordered i, f, o, g."""
    H = len(h)
    pre = [b[j] + sum(x[a] * W[a][j] for a in range(len(x))) for j in range(4 * H)]
    c_new, h_new = [], []
    for u in range(H):
        i = sigm(pre[u])
        f = sigm(pre[H + u])
        o = sigm(pre[2 * H + u])
        g = math.tanh(pre[3 * H + u])
        cu = f * c[u] + i * g
        c_new.append(cu)
        h_new.append(o * math.tanh(cu))
    return h_new, c_new


def dense_layer(W, b):
    n_in, four_h = W.shape
    return LstmLayer(n_in, four_h // 4, GATES, nc.parameter(W), nc.parameter(b))


def test_factorized_matrix_examples():
    I = np.eye(2)
    np.testing.assert_array_equal(factorized_matrix(I, I, I, [1.0, 0.0]).data, np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(factorized_matrix(I, I, I, [0.5, 0.5]).data, np.diag([0.5, 0.5]))
    rng = np.random.default_rng(0)
    A, B, F = rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    s = np.array([0.3, 0.7])
    np.testing.assert_allclose(factorized_matrix(A, B, F, 3 * s).data, 3 * factorized_matrix(A, B, F, s).data,
                               rtol=1e-12, atol=1e-12)


def test_factorized_matrix_errors():
    I = np.eye(2)
    with pytest.raises(ValueError):
        factorized_matrix(I, np.eye(3), I, [1.0, 0.0])
    with pytest.raises(ValueError):
        factorized_matrix(I, I, I, [1.0, 0.0, 0.0])


def test_zero_parameters_give_half_gates():
    layer = dense_layer(np.zeros((3, 8)), np.zeros(8))
    h, c = lstm_step(layer, np.ones(3), np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(h.data, 0.0)
    np.testing.assert_array_equal(c.data, 0.0)
    c0 = np.array([1.0, -2.0])
    h, c = lstm_step(layer, np.ones(3), np.zeros(2), c0)
    np.testing.assert_allclose(c.data, 0.5 * c0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(h.data, 0.5 * np.tanh(0.5 * c0), rtol=0, atol=1e-15)


def test_lstm_step_matches_scalar_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        H, n_in = 8, 5
        W, b = rng.normal(size=(n_in, 4 * H)), rng.normal(size=4 * H)
        x, h, c = rng.normal(size=n_in), rng.normal(size=H), rng.normal(size=H)
        h1, c1 = lstm_step(dense_layer(W, b), x, h, c)
        h2, c2 = scalar_lstm(W.tolist(), b.tolist(), x.tolist(), h.tolist(), c.tolist())
        np.testing.assert_allclose(h1.data, h2, rtol=0, atol=1e-12)
        np.testing.assert_allclose(c1.data, c2, rtol=0, atol=1e-12)


def test_batched_step_equals_row_by_row():
    rng = np.random.default_rng(2)
    layer = dense_layer(rng.normal(size=(4, 12)), rng.normal(size=12))
    X, Hp, Cp = rng.normal(size=(5, 4)), rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    hb, cb = lstm_step(layer, X, Hp, Cp)
    for r in range(5):
        h, c = lstm_step(layer, X[r], Hp[r], Cp[r])
        np.testing.assert_allclose(hb.data[r], h.data, rtol=0, atol=1e-15)
        np.testing.assert_allclose(cb.data[r], c.data, rtol=0, atol=1e-15)


def test_factorized_equals_dense_with_identity_factors():
    rng = np.random.default_rng(3)
    H, n_in, K = 4, 6, 3
    W0 = rng.normal(size=(n_in, 4 * H))
    b = rng.normal(size=4 * H)
    dense = dense_layer(W0, b)
    # k = H, A = I, B = gate block of W0 transposed, F s = ones
    F = nc.parameter(np.ones((H, K)))
    factors = {}
    for j, g in enumerate(GATES):
        factors[g] = (nc.parameter(np.eye(H)), nc.parameter(W0[:, j * H:(j + 1) * H].T.copy()))
    fact = LstmLayer(n_in, H, (), None, nc.parameter(b), factors, F)
    s = np.array([0.2, 0.5, 0.3])
    x, h, c = rng.normal(size=n_in), rng.normal(size=H), rng.normal(size=H)
    hd, cd = lstm_step(dense, x, h, c)
    hf, cf = lstm_step(fact, x, h, c, s)
    np.testing.assert_allclose(hf.data, hd.data, rtol=0, atol=1e-14)
    np.testing.assert_allclose(cf.data, cd.data, rtol=0, atol=1e-14)


def test_factorized_layer_needs_scene_and_right_width():
    rng = np.random.default_rng(4)
    F = init_scene_proj(rng, 6, 2)
    layer = init_lstm_layer(rng, 5, 3, ("i", "f", "o"), F)
    assert layer.dense_gates == ("g",) and set(layer.factors) == {"i", "f", "o"}
    with pytest.raises(ValueError):
        lstm_step(layer, np.ones(5), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        lstm_step(layer, np.ones(4), np.zeros(3), np.zeros(3), [0.5, 0.5])
    with pytest.raises(ValueError):
        lstm_step(layer, np.ones(5), np.zeros(3), np.zeros(3), [0.2, 0.3, 0.5])


def test_layer_rejects_double_parameterization():
    rng = np.random.default_rng(5)
    good = init_lstm_layer(rng, 2, 2, ("i",), init_scene_proj(rng, 4, 2))
    with pytest.raises(ValueError):
        LstmLayer(2, 2, GATES, nc.parameter(np.zeros((2, 8))), good.bias, good.factors, good.scene_proj)


def test_cell_bound_and_gate_ranges():
    rng = np.random.default_rng(6)
    layer = dense_layer(3 * rng.normal(size=(4, 20)), rng.normal(size=20))
    for _ in range(100):
        c0 = 5 * rng.normal(size=5)
        _, c = lstm_step(layer, rng.normal(size=4), rng.normal(size=5), c0)
        assert np.all(np.abs(c.data) <= np.abs(c0) + 1.0)


def test_five_chained_steps_pass_gradient_check():
    rng = np.random.default_rng(7)
    F = init_scene_proj(rng, 6, 2)
    layer = init_lstm_layer(rng, 4, 3, ("i", "f", "o"), F)
    xs = rng.normal(size=(5, 4))
    s = np.array([0.4, 0.6])
    params = {"W": layer.weight, "b": layer.bias, "F": F}
    for g, (A, B) in layer.factors.items():
        params[f"A{g}"], params[f"B{g}"] = A, B

    def f(q):
        fac = {g: (q[f"A{g}"], q[f"B{g}"]) for g in layer.factors}
        lay = LstmLayer(4, 3, layer.dense_gates, q["W"], q["b"], fac, q["F"])
        h, c = Tensor(np.zeros(3)), Tensor(np.zeros(3))
        for x in xs:
            h, c = lstm_step(lay, x, h, c, s)
        return nc.reduce_sum(h * h) + nc.reduce_sum(c)

    assert nc.finite_diff_check(f, params, h=1e-5) < 1e-5


def _zero_mlp(D, H):
    return InitMlp(nc.parameter(np.zeros((D, D))), nc.parameter(np.zeros(D)),
                   nc.parameter(np.zeros((D, H))), nc.parameter(np.zeros(H)))


def test_init_states_examples():
    mlps = InitMlpSet(*(_zero_mlp(2, 3) for _ in range(4)))
    v0, st = init_states(np.array([[1.0, 1.0], [3.0, 3.0]]), mlps)
    np.testing.assert_array_equal(v0.data, [2.0, 2.0])
    for x in st:
        np.testing.assert_array_equal(x.data, np.zeros(3))
    r = np.array([[0.5, -1.5]])
    np.testing.assert_array_equal(init_states(r, mlps)[0].data, r[0])
    with pytest.raises(ValueError):
        init_states(np.zeros((0, 2)), mlps)


def test_masked_mean_ignores_padding():
    regions = np.array([[[1.0], [3.0], [100.0]]])
    np.testing.assert_array_equal(mean_regions(regions, [[1, 1, 0]]).data, [[2.0]])
    with pytest.raises(ValueError):
        mean_regions(regions, [[0, 0, 0]])

"""Stacked LSTM layers with optional scene-factorized gates and state-init MLPs.

Gate pre-activations are computed row-wise for a batch of inputs ``x`` of
shape (B, in).  A dense gate block multiplies by a weight stored as
(in, out); a factorized block applies ``A diag(F s) B`` without
materializing the product, i.e. ``((x B^T) * (s F^T)) A^T``.
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import numcore as nc
from .numcore import Tensor

GATES = ("i", "f", "o", "g")


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _as_rows(x):
    x = _t(x)
    if x.ndim == 1:
        return nc.reshape(x, (1, x.shape[0])), True
    return x, False


def factorized_matrix(A, B, F, s):
    """Materialize ``A diag(F s) B`` for a scene vector ``s``."""
    A, B, F, s = _t(A), _t(B), _t(F), _t(s)
    if A.ndim != 2 or B.ndim != 2 or F.ndim != 2 or s.ndim != 1:
        raise ValueError("expected matrices A, B, F and a vector s")
    k = A.shape[1]
    if B.shape[0] != k or F.shape[0] != k:
        raise ValueError(f"rank mismatch: A {A.shape}, B {B.shape}, F {F.shape}")
    if F.shape[1] != s.shape[0]:
        raise ValueError(f"F has {F.shape[1]} topic columns but s has length {s.shape[0]}")
    fs = F @ nc.reshape(s, (s.shape[0], 1))  # (k, 1)
    return A @ (fs * B)


@dataclass
class LstmLayer:
    """Parameters of one LSTM layer.

    ``weight`` stacks the dense gate blocks (in ``dense_gates`` order) as an
    (in, n_dense * H) matrix.  ``factors`` maps a factorized gate name to
    its ``(A, B)`` pair; all factorized gates share ``scene_proj`` (F).
    """
    input_size: int
    hidden_size: int
    dense_gates: tuple
    weight: Optional[Tensor]
    bias: Tensor
    factors: dict = field(default_factory=dict)
    scene_proj: Optional[Tensor] = None

    def __post_init__(self):
        overlap = set(self.dense_gates) & set(self.factors)
        if overlap:
            raise ValueError(f"gates {sorted(overlap)} are both dense and factorized")
        if set(self.dense_gates) | set(self.factors) != set(GATES):
            raise ValueError("every gate needs exactly one parameterization")
        H = self.hidden_size
        if self.weight is not None and self.weight.shape != (self.input_size, H * len(self.dense_gates)):
            raise ValueError(f"dense weight has shape {self.weight.shape}")
        if self.bias.shape != (4 * H,):
            raise ValueError("bias must have length 4H")
        if self.factors:
            if self.scene_proj is None:
                raise ValueError("factorized gates need a scene projection F")
            k = self.scene_proj.shape[0]
            if k <= 0:
                raise ValueError("factorization rank must be positive")
            for g, (A, B) in self.factors.items():
                if A.shape != (H, k) or B.shape != (k, self.input_size):
                    raise ValueError(f"gate {g}: A {A.shape}, B {B.shape} inconsistent with H={H}, k={k}")

    @property
    def factorized(self):
        return bool(self.factors)


class LstmState(NamedTuple):
    h1: Tensor
    c1: Tensor
    h2: Tensor
    c2: Tensor


def init_lstm_layer(rng, input_size, hidden_size, factorized_gates=(), scene_proj=None):
    factorized_gates = tuple(g for g in GATES if g in factorized_gates)
    dense = tuple(g for g in GATES if g not in factorized_gates)
    H = hidden_size
    weight = None
    if dense:
        weight = nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(input_size), (input_size, H * len(dense))))
    bias = np.zeros(4 * H)
    bias[H:2 * H] = 1.0  # forget-gate bias
    factors = {}
    if factorized_gates:
        k = scene_proj.shape[0]
        for g in factorized_gates:
            A = nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(k), (H, k)))
            B = nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(input_size), (k, input_size)))
            factors[g] = (A, B)
    return LstmLayer(input_size, H, dense, weight, nc.parameter(bias), factors,
                     scene_proj if factorized_gates else None)


def init_scene_proj(rng, rank, n_topics):
    # F s is close to one for any probability vector s at init.
    return nc.parameter(1.0 + 0.1 * rng.normal(size=(rank, n_topics)))


def gate_preactivations(layer, x, s=None):
    """(B, 4H) pre-activations in i, f, o, g order, bias included."""
    x, _ = _as_rows(x)
    if x.shape[1] != layer.input_size:
        raise ValueError(f"input width {x.shape[1]} != layer input size {layer.input_size}")
    H = layer.hidden_size
    blocks = {}
    if layer.weight is not None:
        dense = x @ layer.weight
        if len(layer.dense_gates) == 1:
            blocks[layer.dense_gates[0]] = dense
        else:
            for j, g in enumerate(layer.dense_gates):
                blocks[g] = dense[:, j * H:(j + 1) * H]
    if layer.factors:
        if s is None:
            raise ValueError("scene vector required for a factorized layer")
        s, _ = _as_rows(s)
        if s.shape[1] != layer.scene_proj.shape[1]:
            raise ValueError(f"scene vector length {s.shape[1]} != F columns {layer.scene_proj.shape[1]}")
        fs = nc.matmul(s, layer.scene_proj, transpose_b=True)  # (B, k)
        for g, (A, B) in layer.factors.items():
            blocks[g] = nc.matmul(nc.matmul(x, B, transpose_b=True) * fs, A, transpose_b=True)
    if layer.weight is not None and len(layer.dense_gates) == 4:
        pre = dense
    else:
        pre = nc.concat([blocks[g] for g in GATES], axis=1)
    return pre + layer.bias


def lstm_step(layer, x, prev_h, prev_c, s=None):
    """One LSTM update; returns ``(h, c)``.

    Accepts a single input vector or a (B, in) batch; outputs match.
    """
    x, single = _as_rows(x)
    prev_h, _ = _as_rows(prev_h)
    prev_c, _ = _as_rows(prev_c)
    H = layer.hidden_size
    pre = gate_preactivations(layer, x, s)
    ifo = nc.sigmoid(pre[:, :3 * H])
    g = nc.tanh(pre[:, 3 * H:])
    i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
    c = f * prev_c + i * g
    h = o * nc.tanh(c)
    if single:
        return nc.reshape(h, (H,)), nc.reshape(c, (H,))
    return h, c


@dataclass
class InitMlp:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __call__(self, v0):
        return nc.tanh(nc.tanh(v0 @ self.w1 + self.b1) @ self.w2 + self.b2)


@dataclass
class InitMlpSet:
    """Independent networks producing c1, h1, c2, h2 from the mean region feature."""
    c1: InitMlp
    h1: InitMlp
    c2: InitMlp
    h2: InitMlp


def init_mlp_set(rng, feature_size, hidden_size):
    def one():
        D = feature_size
        return InitMlp(
            nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(D), (D, D))),
            nc.parameter(np.zeros(D)),
            nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(D), (D, hidden_size))),
            nc.parameter(np.zeros(hidden_size)),
        )
    return InitMlpSet(one(), one(), one(), one())


def mean_regions(regions, mask=None):
    """Mean feature over (valid) regions: (R, D) -> (D,), (B, R, D) -> (B, D)."""
    regions = _t(regions)
    if regions.ndim < 2 or regions.shape[-2] == 0:
        raise ValueError("at least one region is required")
    if mask is None:
        return nc.reduce_sum(regions, axis=-2) * (1.0 / regions.shape[-2])
    mask = np.asarray(mask, dtype=np.float64)
    counts = mask.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("at least one region is required")
    return nc.reduce_sum(regions * mask[..., None], axis=-2) * (1.0 / counts)


def init_states(regions, mlps, mask=None):
    """Return ``(v0, LstmState)`` with v0 the mean region feature."""
    v0 = mean_regions(regions, mask)
    v0_rows, single = _as_rows(v0)
    outs = [mlps.h1(v0_rows), mlps.c1(v0_rows), mlps.h2(v0_rows), mlps.c2(v0_rows)]
    if single:
        outs = [nc.reshape(o, (o.shape[1],)) for o in outs]
    h1, c1, h2, c2 = outs
    return v0, LstmState(h1, c1, h2, c2)

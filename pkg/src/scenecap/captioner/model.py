"""The caption decoder: attention -> two LSTM layers -> word softmax."""
import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import numcore as nc
from ..attention import AttentionNet, attend, blend, init_attention
from ..numcore import Tensor
from ..seqmodel import (
    InitMlpSet, LstmLayer, LstmState, init_lstm_layer, init_mlp_set,
    init_scene_proj, init_states, lstm_step,
)

BEGIN, END, OOV = 0, 1, 2


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    feature_size: int
    embed_size: int = 32
    hidden_size: int = 32
    attn_size: Optional[int] = None
    n_topics: int = 4
    rank: Optional[int] = None
    attention: bool = True
    scene: bool = False
    factorize_g: bool = False
    factorized_layers: tuple = ("bottom", "top")
    attend_h1: bool = False

    def __post_init__(self):
        for name in ("vocab_size", "feature_size", "embed_size", "hidden_size", "n_topics"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.vocab_size < 3:
            raise ValueError("vocabulary must hold the three reserved tokens")
        if self.rank is not None and self.rank <= 0:
            raise ValueError("rank must be positive")

    @property
    def attn_hidden(self):
        return self.attn_size or self.hidden_size

    @property
    def factor_rank(self):
        return self.rank or 2 * self.hidden_size

    @property
    def mode(self):
        return {(False, False): "base", (True, False): "ra",
                (False, True): "sf", (True, True): "ra+sf"}[(self.attention, self.scene)]


@dataclass
class WordPredictor:
    w_word: Tensor
    w_hidden: Tensor
    w_context: Tensor
    bias: Tensor
    w_out: Tensor
    b_out: Tensor

    def logits(self, e, h, v):
        hidden = nc.tanh(e @ self.w_word + h @ self.w_hidden + v @ self.w_context + self.bias)
        return hidden @ self.w_out + self.b_out


@dataclass
class CaptionModel:
    config: ModelConfig
    embedding: Tensor
    attention: Optional[AttentionNet]
    bottom: LstmLayer
    top: LstmLayer
    predictor: WordPredictor
    init_mlps: InitMlpSet
    scene_proj: Optional[Tensor] = None

    def named_parameters(self):
        """Ordered ``name -> Tensor`` of distinct parameters (shared F listed once)."""
        out, seen = {}, set()
        _collect(self, "", out, seen)
        return out

    def with_parameters(self, params):
        """Copy of the model with parameters swapped in by name."""
        current = self.named_parameters()
        missing = set(current) - set(params)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        by_id = {}
        for name, old in current.items():
            new = params[name]
            new = new if isinstance(new, Tensor) else Tensor(new, requires_grad=True)
            if new.shape != old.shape:
                raise ValueError(f"{name}: shape {new.shape} != {old.shape}")
            by_id[id(old)] = new
        return _rebuild(self, by_id)

    def zeroed(self):
        return self.with_parameters({k: nc.parameter(np.zeros(v.shape))
                                     for k, v in self.named_parameters().items()})

    def n_parameters(self):
        return int(np.sum([p.size for p in self.named_parameters().values()]))


def _collect(obj, prefix, out, seen):
    if isinstance(obj, Tensor):
        if id(obj) not in seen:
            seen.add(id(obj))
            out[prefix] = obj
        return
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            _collect(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name, out, seen)
    elif isinstance(obj, dict):
        for k in sorted(obj):
            _collect(obj[k], f"{prefix}.{k}", out, seen)
    elif isinstance(obj, tuple):
        for j, item in enumerate(obj):
            _collect(item, f"{prefix}.{j}", out, seen)


def _rebuild(obj, by_id):
    if isinstance(obj, Tensor):
        return by_id.get(id(obj), obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.replace(obj, **{
            f.name: _rebuild(getattr(obj, f.name), by_id)
            for f in dataclasses.fields(obj) if f.init})
    if isinstance(obj, dict):
        return {k: _rebuild(v, by_id) for k, v in obj.items()}
    if isinstance(obj, tuple) and not hasattr(obj, "_fields"):
        return tuple(_rebuild(v, by_id) for v in obj)
    return obj


def init_model(config, seed=0):
    rng = np.random.default_rng(seed)
    D, M, H, W = config.feature_size, config.embed_size, config.hidden_size, config.vocab_size
    scene_proj = init_scene_proj(rng, config.factor_rank, config.n_topics) if config.scene else None
    gates = ("i", "f", "o", "g") if config.factorize_g else ("i", "f", "o")

    def layer(name, n_in):
        fact = gates if config.scene and name in config.factorized_layers else ()
        return init_lstm_layer(rng, n_in, H, fact, scene_proj if fact else None)

    embedding = nc.parameter(rng.normal(0.0, 1.0, (W, M)))
    attention = init_attention(rng, D, M, H, config.attn_hidden) if config.attention else None
    bottom = layer("bottom", M + 2 * H + D)
    top = layer("top", 2 * H)

    def w(fan_in, fan_out):
        return nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)))

    predictor = WordPredictor(w(M, M), w(H, M), w(D, M), nc.parameter(np.zeros(M)),
                              w(M, W), nc.parameter(np.zeros(W)))
    mlps = init_mlp_set(rng, D, H)
    return CaptionModel(config, embedding, attention, bottom, top, predictor, mlps, scene_proj)


@dataclass
class DecoderState:
    """Batched decoder state; row b belongs to the b-th image/hypothesis."""
    lstm: LstmState
    context: Tensor        # v_t, (B, D)
    prev_token: np.ndarray  # (B,)
    t: int = 0

    @property
    def batch_size(self):
        return len(self.prev_token)

    def select(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return DecoderState(
            LstmState(*(Tensor(x.data[rows]) for x in self.lstm)),
            Tensor(self.context.data[rows]), self.prev_token[rows].copy(), self.t)


def _rows(x, batch):
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 1:
        x = nc.reshape(x, (1,) + x.shape)
        if batch > 1:
            x = x + np.zeros((batch, x.shape[1]))
    return x


def prepare_inputs(model, regions, s=None, mask=None):
    """Normalize regions to (B, R, D) and scene vectors to (B, K)."""
    regions = regions if isinstance(regions, Tensor) else Tensor(regions)
    if regions.ndim == 2:
        regions = nc.reshape(regions, (1,) + regions.shape)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)[None]
    if regions.shape[1] == 0:
        raise ValueError("image has no regions")
    if regions.shape[2] != model.config.feature_size:
        raise ValueError(f"region features have size {regions.shape[2]}, model expects {model.config.feature_size}")
    if model.config.scene:
        if s is None:
            raise ValueError("scene-factorized model needs a scene vector")
        s = _rows(s, regions.shape[0])
        if s.shape[-1] != model.config.n_topics:
            raise ValueError(f"scene vector has length {s.shape[-1]}, model expects {model.config.n_topics}")
    else:
        s = None
    return regions, s, mask


def initial_state(model, regions, mask=None):
    v0, lstm = init_states(regions, model.init_mlps, mask)
    B = regions.shape[0]
    return DecoderState(lstm, v0, np.full(B, BEGIN, dtype=np.int64), 0)


def step_logits(model, state, regions, s=None, mask=None):
    """Advance one timestep on prepared (B, R, D) inputs.

    Returns ``(new_state, logits, attention_weights)``.  Without attention
    the context stays at the mean region feature set by :func:`initial_state`.
    """
    cfg = model.config
    B, R, _ = regions.shape
    e = nc.take_rows(model.embedding, state.prev_token)
    h1, c1, h2, c2 = state.lstm
    if cfg.attention:
        query_h = nc.concat([h1, h2], axis=1) if cfg.attend_h1 else h2
        p = attend(model.attention, regions, e, query_h, state.context, mask)
        v = blend(p, regions)
    else:
        if mask is None:
            p = Tensor(np.full((B, R), 1.0 / R))
        else:
            m = np.asarray(mask, dtype=np.float64)
            p = Tensor(m / m.sum(axis=1, keepdims=True))
        v = state.context
    x1 = nc.concat([e, h1, h2, v], axis=1)
    h1n, c1n = lstm_step(model.bottom, x1, h1, c1, s)
    h2n, c2n = lstm_step(model.top, nc.concat([h1n, h2], axis=1), h2, c2, s)
    logits = model.predictor.logits(e, h2n, v)
    new_state = DecoderState(LstmState(h1n, c1n, h2n, c2n), v, state.prev_token, state.t + 1)
    return new_state, logits, p


def step(model, state, regions, s=None, mask=None):
    """One decoding step: ``(new_state, word_distribution, attention_weights)``.

    ``state.prev_token`` must already hold the token emitted at t-1; the
    returned state keeps it until the caller commits the next token with
    :func:`advance`.
    """
    regions, s, mask = prepare_inputs(model, regions, s, mask)
    new_state, logits, p = step_logits(model, state, regions, s, mask)
    return new_state, nc.softmax(logits, axis=-1), p


def advance(state, tokens):
    return dataclasses.replace(state, prev_token=np.asarray(tokens, dtype=np.int64).reshape(-1))


def start(model, regions, s=None, mask=None):
    regions, s, mask = prepare_inputs(model, regions, s, mask)
    return initial_state(model, regions, mask)


def teacher_forced_loss(model, regions, s, caption):
    """Summed negative log-likelihood (nats) of ``caption`` followed by #END#."""
    caption = [int(w) for w in caption]
    if not caption:
        raise ValueError("empty caption")
    W = model.config.vocab_size
    if min(caption) < 0 or max(caption) >= W:
        raise ValueError("caption token outside the vocabulary")
    regions, s, mask = prepare_inputs(model, regions, s)
    state = initial_state(model, regions)
    total = None
    for target in caption + [END]:
        state, logits, _ = step_logits(model, state, regions, s)
        nll = nc.reduce_sum(nc.softmax_cross_entropy(logits, [target]))
        total = nll if total is None else total + nll
        state = advance(state, [target])
    return total


def batch_loss(model, regions, s, inputs, targets, weights, mask=None):
    """Summed NLL over a padded batch of captions.

    ``inputs``/``targets``/``weights`` are (B, T) arrays where ``weights``
    zeroes the padded positions.
    """
    regions, s, mask = prepare_inputs(model, regions, s, mask)
    state = initial_state(model, regions, mask)
    total = None
    for t in range(inputs.shape[1]):
        state = advance(state, inputs[:, t])
        state, logits, _ = step_logits(model, state, regions, s, mask)
        nll = nc.reduce_sum(nc.softmax_cross_entropy(logits, targets[:, t], weights[:, t]))
        total = nll if total is None else total + nll
    return total

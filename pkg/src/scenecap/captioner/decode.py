"""Greedy and beam-search decoding."""
from dataclasses import dataclass, field

import numpy as np

from ..numcore import Tensor, log_softmax_array
from .model import BEGIN, END, DecoderState, advance, initial_state, prepare_inputs, step_logits

DEFAULT_MAX_LEN = 30


@dataclass
class Hypothesis:
    """A (partial) caption: emitted tokens, summed log-probability, state."""
    tokens: tuple
    logprob: float
    state: DecoderState = field(repr=False, default=None)
    finished: bool = False
    attention: tuple = field(repr=False, default=())

    @property
    def words(self):
        """Tokens without the terminating #END#."""
        return self.tokens[:-1] if self.finished else self.tokens


def _expand(model, state, regions, s):
    B = state.batch_size
    R = regions.shape[1]
    reg = Tensor(np.broadcast_to(regions.data, (B,) + regions.shape[1:])) if regions.shape[0] != B else regions
    sc = None
    if s is not None:
        sc = Tensor(np.broadcast_to(s.data, (B, s.shape[1]))) if s.shape[0] != B else s
    new_state, logits, p = step_logits(model, state, reg, sc)
    return new_state, log_softmax_array(logits.data, axis=-1), p.data.reshape(B, R)


def greedy_decode(model, regions, s=None, max_len=DEFAULT_MAX_LEN):
    """Argmax decoding; returns ``(tokens, attention_per_step)``.

    ``tokens`` excludes #BEGIN#; it ends with #END# unless ``max_len`` cut
    it short.  #BEGIN# is never emitted and ties go to the lowest index.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    hyp = greedy_hypothesis(model, regions, s, max_len)
    return list(hyp.tokens), list(hyp.attention)


def greedy_hypothesis(model, regions, s=None, max_len=DEFAULT_MAX_LEN):
    regions, s, _ = prepare_inputs(model, regions, s)
    state = initial_state(model, regions)
    tokens, attn, total = [], [], 0.0
    for _ in range(max_len):
        state, logp, p = _expand(model, state, regions, s)
        logp = logp[0]
        w = int(np.argmax(logp[1:])) + 1
        total += float(logp[w])
        tokens.append(w)
        attn.append(p[0])
        state = advance(state, [w])
        if w == END:
            break
    return Hypothesis(tuple(tokens), total, state, tokens[-1] == END, tuple(attn))


def greedy_decode_batch(model, regions, s=None, max_len=DEFAULT_MAX_LEN, mask=None):
    """Greedy decoding of a (B, R, D) batch; returns B token lists.

    Row b matches ``greedy_decode`` on image b alone.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    regions, s, mask = prepare_inputs(model, regions, s, mask)
    state = initial_state(model, regions, mask)
    B = regions.shape[0]
    out = [[] for _ in range(B)]
    live = np.ones(B, dtype=bool)
    for _ in range(max_len):
        state, logits, _ = step_logits(model, state, regions, s, mask)
        words = np.argmax(logits.data[:, 1:], axis=1) + 1
        for b in np.flatnonzero(live):
            out[b].append(int(words[b]))
        live &= words != END
        if not live.any():
            break
        state = advance(state, words)
    return out


def beam_decode(model, regions, s=None, beam=10, max_len=DEFAULT_MAX_LEN, length_norm=False):
    """Beam search; hypotheses sorted by summed log-probability, best first.

    At each step every live hypothesis is expanded by every token except
    #BEGIN#; the ``beam`` best expansions survive (ties: lower token index,
    then earlier parent).  Expansions ending in #END# retire to the result
    pool.  Hypotheses still live at ``max_len`` are returned unfinished.
    With ``length_norm`` the final pool is ranked by log-probability per
    token instead (pruning is unchanged).
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    regions, s, _ = prepare_inputs(model, regions, s)
    state = initial_state(model, regions)
    live = [Hypothesis((), 0.0, None, False, ())]
    done = []
    W = model.config.vocab_size
    tokens = np.arange(W)
    emittable = tokens != BEGIN
    for _ in range(max_len):
        state, logp, p = _expand(model, state, regions, s)
        scores = np.array([h.logprob for h in live])[:, None] + logp
        parent, tok = np.nonzero(np.broadcast_to(emittable, scores.shape))
        cand = scores[parent, tok]
        order = np.lexsort((parent, tok, -cand))[:beam]
        keep_rows, keep_tokens, next_live = [], [], []
        for j in order:
            par, w = int(parent[j]), int(tok[j])
            h = live[par]
            new = Hypothesis(h.tokens + (w,), float(cand[j]), None, w == END,
                             h.attention + (p[par],))
            if w == END:
                new.state = state.select([par])
                done.append(new)
            else:
                keep_rows.append(par)
                keep_tokens.append(w)
                next_live.append(new)
        if not next_live:
            live = []
            break
        state = advance(state.select(keep_rows), keep_tokens)
        for j, h in enumerate(next_live):
            h.state = state.select([j])
        live = next_live
    pool = done + live
    if length_norm:
        ranked = sorted(range(len(pool)), key=lambda j: (-pool[j].logprob / len(pool[j].tokens), j))
    else:
        ranked = sorted(range(len(pool)), key=lambda j: (-pool[j].logprob, j))
    return [pool[j] for j in ranked]

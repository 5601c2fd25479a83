"""Scene-vector pipeline and the minibatch training loop."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import numcore as nc
from ..captioner import (
    BEGIN, END, ModelConfig, advance, batch_loss, greedy_decode_batch, init_model,
    initial_state, prepare_inputs, step_logits,
)
from ..scene import LdaModel, SceneMlp, lda_fit, lda_infer, scene_mlp_train, scene_predict
from ..textmetrics import bleu, build_vocab
from .checkpoint import Checkpoint
from .data import check_consistent, stack_regions


# -- scene vectors ----------------------------------------------------------------

@dataclass
class ScenePipeline:
    """LDA for caption-derived vectors plus the MLP that predicts them from images."""
    config: object
    lda: Optional[LdaModel] = None
    mlp: Optional[SceneMlp] = None

    def caption_vectors(self, records):
        """LDA-inferred vectors from each record's captions (all captions pooled)."""
        c = self.config
        out = []
        for i, r in enumerate(records):
            doc = [t for toks in r.tokens() for t in toks]
            out.append(lda_infer(self.lda, doc, c.lda_infer_iterations, c.lda_burn_in, seed=[c.seed, i]))
        return np.array(out)

    def image_vectors(self, records):
        if self.config.scene_source == "given":
            return given_vectors(records)
        missing = [r.image_id for r in records if r.global_feature is None]
        if missing:
            raise ValueError(f"{missing[0]}: a global image feature is needed to predict its scene")
        return scene_predict(self.mlp, np.vstack([r.global_feature for r in records]))

    def training_vectors(self, records):
        source = self.config.scene_source
        if source == "given":
            return given_vectors(records)
        if source == "mlp":
            return self.image_vectors(records)
        return self.caption_vectors(records)


def given_vectors(records):
    missing = [r.image_id for r in records if r.scene is None]
    if missing:
        raise ValueError(f"{missing[0]}: no precomputed scene vector")
    return np.vstack([r.scene for r in records])


def fit_scene_pipeline(config, records, lda=None, mlp=None):
    """Fit LDA on training captions and the scene MLP on (global feature, LDA vector)."""
    if config.scene_source == "given":
        return ScenePipeline(config)
    if lda is None:
        docs = [[t for toks in r.tokens() for t in toks] for r in records]
        lda = lda_fit(docs, config.n_topics, config.alpha, config.lda_beta,
                      config.lda_iterations, seed=config.seed)
    pipe = ScenePipeline(config, lda)
    if mlp is None:
        missing = [r.image_id for r in records if r.global_feature is None]
        if missing:
            raise ValueError(f"{missing[0]}: scene MLP training needs global image features")
        targets = pipe.caption_vectors(records)
        mlp = scene_mlp_train(np.vstack([r.global_feature for r in records]), targets,
                              hidden=config.scene_hidden_sizes, lr=config.scene_lr,
                              epochs=config.scene_epochs, batch_size=config.scene_batch,
                              seed=config.seed)
    pipe.mlp = mlp
    return pipe


# -- batching -----------------------------------------------------------------------

@dataclass
class EncodedSet:
    regions: np.ndarray          # (N, R, D)
    mask: Optional[np.ndarray]   # (N, R) or None
    scenes: Optional[np.ndarray]  # (N, K) or None
    pairs: list                  # (record index, token ids)
    references: list             # per record: list of token lists


def encode_set(records, vocab, scenes=None):
    regions, mask = stack_regions(records)
    pairs = []
    refs = []
    for i, r in enumerate(records):
        toks = r.tokens()
        refs.append(toks)
        for t in toks:
            if not t:
                raise ValueError(f"{r.image_id}: empty caption")
            pairs.append((i, vocab.encode(t)))
    return EncodedSet(regions, mask, scenes, pairs, refs)


def make_batch(data, pair_ids):
    """Padded (inputs, targets, weights) for the chosen caption pairs."""
    chosen = [data.pairs[j] for j in pair_ids]
    T = max(len(c) for _, c in chosen) + 1
    B = len(chosen)
    inputs = np.full((B, T), END, dtype=np.int64)
    targets = np.full((B, T), END, dtype=np.int64)
    weights = np.zeros((B, T))
    for b, (_, cap) in enumerate(chosen):
        n = len(cap)
        inputs[b, 0] = BEGIN
        inputs[b, 1:n + 1] = cap
        targets[b, :n] = cap
        targets[b, n] = END
        weights[b, :n + 1] = 1.0
    rows = np.array([i for i, _ in chosen])
    regions = data.regions[rows]
    mask = None if data.mask is None else data.mask[rows]
    scenes = None if data.scenes is None else data.scenes[rows]
    return regions, scenes, inputs, targets, weights, mask


def mean_token_loss(model, data, batch_size=256):
    """Mean teacher-forced NLL per token (caption words plus #END#)."""
    total = count = 0.0
    for start in range(0, len(data.pairs), batch_size):
        regions, s, inp, tgt, w, mask = make_batch(data, range(start, min(start + batch_size, len(data.pairs))))
        total += batch_loss(model, regions, s, inp, tgt, w, mask).item()
        count += w.sum()
    return total / count


def next_token_accuracy(model, data, batch_size=256):
    """Fraction of teacher-forced positions whose argmax word (never #BEGIN#) is the target."""
    hits = count = 0.0
    for start in range(0, len(data.pairs), batch_size):
        regions, s, inp, tgt, w, mask = make_batch(data, range(start, min(start + batch_size, len(data.pairs))))
        regions, s, mask = prepare_inputs(model, regions, s, mask)
        state = initial_state(model, regions, mask)
        for t in range(inp.shape[1]):
            state = advance(state, inp[:, t])
            state, logits, _ = step_logits(model, state, regions, s, mask)
            pred = np.argmax(logits.data[:, 1:], axis=1) + 1
            hits += float(((pred == tgt[:, t]) * w[:, t]).sum())
            count += float(w[:, t].sum())
    return hits / count


def greedy_captions(model, data, max_len, batch_size=256):
    out = []
    N = len(data.regions)
    for start in range(0, N, batch_size):
        sl = slice(start, min(start + batch_size, N))
        s = None if data.scenes is None else data.scenes[sl]
        mask = None if data.mask is None else data.mask[sl]
        out.extend(greedy_decode_batch(model, data.regions[sl], s, max_len, mask))
    return out


def strip_end(tokens):
    return tokens[:-1] if tokens and tokens[-1] == END else tokens


def validation_bleu1(model, data, vocab, max_len):
    hyps = [vocab.decode(strip_end(t)) for t in greedy_captions(model, data, max_len)]
    return bleu(hyps, data.references, 1)


# -- training --------------------------------------------------------------------------

def model_config_for(config, vocab_size, feature_size):
    return ModelConfig(
        vocab_size=vocab_size, feature_size=feature_size, embed_size=config.embed_size,
        hidden_size=config.hidden_size, attn_size=config.attn_size or None,
        n_topics=config.n_topics, rank=config.rank, attention=config.attention,
        scene=config.scene, factorize_g=config.factorize_g)


def _better(bleu1, loss, best):
    if best is None:
        return True
    best_bleu, best_loss = best
    if bleu1 > best_bleu + 1e-12:
        return True
    return abs(bleu1 - best_bleu) <= 1e-12 and loss < best_loss


def train(config, train_set, val_set, lda=None, scene_mlp=None, on_epoch=None, checkpoint_path=None):
    """Minibatch ADAM training with BLEU-1 early stopping; returns the best Checkpoint.

    After every epoch the validation set is decoded greedily.  A checkpoint
    counts as better if its BLEU-1 is higher, or equal with a lower
    validation loss.  Training stops after ``patience`` epochs without
    improvement, after ``max_epochs``, or after ``max_steps`` updates.
    """
    if not train_set:
        raise ValueError("empty training split")
    if not val_set:
        raise ValueError("empty validation split")
    D = check_consistent(train_set, need_captions=True)
    if check_consistent(val_set, need_captions=True) != D:
        raise ValueError("training and validation features differ in size")
    vocab = build_vocab([t for r in train_set for t in r.tokens()], config.min_freq)

    pipe = None
    train_s = val_s = None
    if config.scene:
        pipe = fit_scene_pipeline(config, train_set, lda, scene_mlp)
        train_s = pipe.training_vectors(train_set)
        val_s = pipe.image_vectors(val_set)
    tr = encode_set(train_set, vocab, train_s)
    va = encode_set(val_set, vocab, val_s)

    mcfg = model_config_for(config, len(vocab), D)
    model = init_model(mcfg, seed=config.seed)
    params = model.named_parameters()
    state = nc.AdamState(lr=config.lr)
    rng = np.random.default_rng(config.seed)

    def snapshot(step, history):
        return Checkpoint(config, mcfg, vocab, {k: v.data.copy() for k, v in params.items()},
                          pipe.mlp if pipe else None, pipe.lda if pipe else None, step, list(history))

    history = []
    best = None
    best_ckpt = None
    stale = 0
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(tr.pairs))
        total = count = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            regions, s, inp, tgt, w, mask = make_batch(tr, order[start:start + config.batch_size])
            n_tok = w.sum()
            with nc.Tape():
                loss = batch_loss(model.with_parameters(params), regions, s, inp, tgt, w, mask) * (1.0 / n_tok)
                if not np.isfinite(loss.item()):
                    raise FloatingPointError(f"non-finite loss in epoch {epoch}, batch {b} (step {step + 1})")
                grads = nc.gradients(loss, params)
            params, state = nc.adam_step(params, grads, state)
            step += 1
            total += loss.item() * n_tok
            count += n_tok
            if config.max_steps and step >= config.max_steps:
                break
        current = model.with_parameters(params)
        val_loss = mean_token_loss(current, va)
        val_bleu = validation_bleu1(current, va, vocab, config.max_len)
        improved = _better(val_bleu, val_loss, best)
        history.append({"epoch": epoch, "step": step, "train_loss": float(total / count),
                        "val_loss": float(val_loss), "val_bleu1": float(val_bleu),
                        "improved": bool(improved)})
        if improved:
            best = (val_bleu, val_loss)
            best_ckpt = snapshot(step, history)
            stale = 0
            if checkpoint_path:
                best_ckpt.save(checkpoint_path)
        else:
            stale += 1
        if on_epoch is not None:
            on_epoch(history[-1])
        if stale >= config.patience or (config.max_steps and step >= config.max_steps):
            break
    best_ckpt.history = list(history)
    if checkpoint_path:
        best_ckpt.save(checkpoint_path)
    return best_ckpt

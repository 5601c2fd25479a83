"""Attention heatmaps, patch-to-word matching and scene distortion."""
from pathlib import Path

import numpy as np

from .decode import beam_decode
from .model import advance, initial_state, prepare_inputs, step_logits


def attention_heatmap(weights_per_step, boxes, width, height):
    """Per-step (height, width) grids of summed attention over covering boxes.

    ``boxes`` holds ``(x, y, w, h)`` in integer pixels, left/top inclusive.
    """
    boxes = [tuple(int(round(v)) for v in b) for b in boxes]
    for x, y, w, h in boxes:
        if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > width or y + h > height:
            raise ValueError(f"box {(x, y, w, h)} outside a {width}x{height} image")
    grids = []
    for p in weights_per_step:
        p = np.asarray(p, dtype=np.float64)
        if len(p) != len(boxes):
            raise ValueError(f"{len(p)} weights for {len(boxes)} boxes")
        grid = np.zeros((height, width))
        for weight, (x, y, w, h) in zip(p, boxes):
            grid[y:y + h, x:x + w] += weight
        grids.append(grid)
    return grids


def pgm_text(grid):
    """Plain (P2) graymap of ``grid`` scaled so its max cell is 255."""
    grid = np.asarray(grid, dtype=np.float64)
    top = grid.max()
    scaled = np.zeros(grid.shape, dtype=np.int64) if top <= 0 else \
        np.rint(grid / top * 255).astype(np.int64)
    rows = "\n".join(" ".join(str(v) for v in row) for row in scaled)
    return f"P2\n{grid.shape[1]} {grid.shape[0]}\n255\n{rows}\n"


def write_heatmaps(grids, out_dir, prefix="step"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, grid in enumerate(grids, start=1):
        path = out_dir / f"{prefix}{t:02d}.pgm"
        path.write_text(pgm_text(grid))
        paths.append(path)
    return paths


def read_pgm(path):
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise ValueError("not a plain PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w), maxval


def teacher_forced_attention(model, regions, s, tokens):
    """Attention weights at t = 1..len(tokens) when feeding ``tokens``."""
    regions, s, _ = prepare_inputs(model, regions, s)
    state = initial_state(model, regions)
    out = []
    for w in tokens:
        state, _, p = step_logits(model, state, regions, s)
        out.append(p.data[0])
        state = advance(state, [w])
    return out


def patch_word_match(model, regions, s, sentence, word, boxes=None):
    """Region with maximal attention when ``word`` (first occurrence) is emitted.

    ``sentence`` and ``word`` are token ids.  Returns ``(index, box)``; the
    box is None unless ``boxes`` is given.  Ties go to the lowest index.
    """
    sentence = [int(w) for w in sentence]
    if word not in sentence:
        raise ValueError(f"word {word} does not occur in the sentence")
    t = sentence.index(word)
    weights = teacher_forced_attention(model, regions, s, sentence[:t + 1])[t]
    idx = int(np.argmax(weights))
    return idx, (boxes[idx] if boxes is not None else None)


def one_hot(k, n):
    v = np.zeros(n)
    v[k] = 1.0
    return v


def distort_scene_decode(model, regions, topic_index, beam=10, max_len=30):
    """Decode with the scene vector replaced by a one-hot topic vector."""
    if not model.config.scene:
        raise ValueError("scene distortion needs a scene-factorized model")
    K = model.config.n_topics
    if not 0 <= topic_index < K:
        raise ValueError(f"topic {topic_index} outside 0..{K - 1}")
    best = beam_decode(model, regions, one_hot(topic_index, K), beam=beam, max_len=max_len)[0]
    return list(best.words)

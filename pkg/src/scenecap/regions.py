"""Region geometry, objectness scoring, and top-R region selection.

Selection takes candidates in descending objectness, visiting four size
strata (area quartiles) round-robin so that box sizes stay diverse, then
swaps boxes until their union covers enough of the image.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numcore as nc

DEFAULT_R = 30
COVERAGE_TARGET = 0.95
N_STRATA = 4


@dataclass
class CandidateBox:
    x: int
    y: int
    width: int
    height: int
    feature: np.ndarray = field(default_factory=lambda: np.zeros(0))
    score: Optional[float] = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box must have positive size, got {self.width}x{self.height}")
        self.feature = np.asarray(self.feature, dtype=np.float64)

    @property
    def box(self):
        return (self.x, self.y, self.width, self.height)

    @property
    def area(self):
        return self.width * self.height

    def inside(self, image_width, image_height):
        return (self.x >= 0 and self.y >= 0 and self.x + self.width <= image_width
                and self.y + self.height <= image_height)


@dataclass
class RegionSet:
    features: np.ndarray        # (R, D + 5)
    boxes: list                 # (x, y, w, h) per region
    indices: list               # positions in the candidate list
    coverage: float

    def __len__(self):
        return len(self.boxes)


def geometry_features(box, image_width, image_height):
    """(cx/W, cy/H, w/W, h/H, wh/WH) for a box ``(x, y, w, h)`` or CandidateBox."""
    if image_width <= 0 or image_height <= 0:
        raise ValueError("image dimensions must be positive")
    x, y, w, h = box.box if isinstance(box, CandidateBox) else box
    if w <= 0 or h <= 0:
        raise ValueError("box must have positive size")
    W, H = float(image_width), float(image_height)
    return np.array([(x + w / 2) / W, (y + h / 2) / H, w / W, h / H, (w * h) / (W * H)])


def overlap_fraction(box, positive):
    """Intersection area divided by the area of ``positive``.

    Negatives for objectness training are boxes whose overlap with a
    positive lies in [0.2, 0.3].
    """
    x, y, w, h = box
    px, py, pw, ph = positive
    iw = max(0, min(x + w, px + pw) - max(x, px))
    ih = max(0, min(y + h, py + ph) - max(y, py))
    return iw * ih / float(pw * ph)


def is_hard_negative(box, positives, low=0.2, high=0.3):
    """True if the box overlaps some positive within [low, high] and none above it."""
    fracs = [overlap_fraction(box, p) for p in positives]
    return bool(fracs) and max(fracs) <= high and any(f >= low for f in fracs)


# -- objectness ------------------------------------------------------------------

@dataclass
class LogisticModel:
    weight: np.ndarray
    bias: float

    def score(self, features):
        """Objectness in (0, 1) for one feature vector or a (N, d) batch."""
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != len(self.weight):
            raise ValueError(f"feature size {x.shape[-1]} != model size {len(self.weight)}")
        z = x @ self.weight + self.bias
        return 0.5 * (np.tanh(0.5 * z) + 1.0)


def objectness_train(positives, negatives, lr=0.05, steps=500, seed=0):
    """Logistic regression (positives 1, negatives 0) fitted with full-batch ADAM."""
    pos = np.asarray(positives, dtype=np.float64)
    neg = np.asarray(negatives, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("objectness training needs both positive and negative examples")
    if pos.ndim != 2 or neg.ndim != 2 or pos.shape[1] != neg.shape[1]:
        raise ValueError("positives and negatives must be (N, d) with the same d")
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))]).astype(np.int64)
    rng = np.random.default_rng(seed)
    params = {"w": nc.parameter(rng.normal(0.0, 0.01, X.shape[1])), "b": nc.parameter(np.zeros(1))}
    state = nc.AdamState(lr=lr)
    Xt = nc.Tensor(X)
    zeros = np.zeros((len(X), 1))
    for _ in range(steps):
        with nc.Tape():
            z = nc.reshape(nc.matmul(Xt, nc.reshape(params["w"], (X.shape[1], 1))), (len(X), 1)) + params["b"]
            # two-class softmax over (0, z) is the logistic likelihood
            logits = nc.concat([nc.Tensor(zeros), z], axis=1)
            loss = nc.reduce_sum(nc.softmax_cross_entropy(logits, y)) * (1.0 / len(X))
            grads = nc.gradients(loss, params)
        params, state = nc.adam_step(params, grads, state)
    return LogisticModel(params["w"].data.copy(), float(params["b"].data[0]))


# -- selection -------------------------------------------------------------------

def _strata(areas):
    """Stratum 0..3 per candidate from area quartiles (by rank, so ties split evenly)."""
    n = len(areas)
    order = np.argsort(areas, kind="stable")
    strata = np.empty(n, dtype=np.int64)
    strata[order] = (np.arange(n) * N_STRATA) // max(n, 1)
    return strata


def _cover_mask(box, image_width, image_height):
    m = np.zeros((image_height, image_width), dtype=bool)
    x, y, w, h = box
    m[y:y + h, x:x + w] = True
    return m


def select_regions(candidates, R=DEFAULT_R, image_width=None, image_height=None, seed=0,
                   coverage=COVERAGE_TARGET):
    """Choose ``min(R, len(candidates))`` scored candidates.

    Ordering: descending score within each size stratum, strata visited
    round-robin in a seeded order, within-stratum ties broken by a seeded
    random key.  If the union of chosen boxes covers less than ``coverage``
    of the image, the chosen box whose removal loses the least coverage is
    swapped for the unchosen box that gains the most, keeping at least three
    strata represented when available.
    """
    if not candidates:
        raise ValueError("at least one candidate is required")
    if image_width is None or image_height is None or image_width <= 0 or image_height <= 0:
        raise ValueError("positive image dimensions are required")
    for c in candidates:
        if not c.inside(image_width, image_height):
            raise ValueError(f"box {c.box} lies outside the {image_width}x{image_height} image")
        if c.score is None:
            raise ValueError("candidates must be scored before selection")
    n = len(candidates)
    R = min(R, n)
    rng = np.random.default_rng(seed)
    scores = np.array([c.score for c in candidates], dtype=np.float64)
    strata = _strata(np.array([c.area for c in candidates]))
    tie = rng.random(n)
    visit = rng.permutation(N_STRATA)

    queues = []
    for s in visit:
        members = np.flatnonzero(strata == s)
        queues.append(list(members[np.lexsort((tie[members], -scores[members]))]))
    chosen = []
    while len(chosen) < R:
        for q in queues:
            if q and len(chosen) < R:
                chosen.append(int(q.pop(0)))

    masks = [_cover_mask(c.box, image_width, image_height) for c in candidates]
    counts = np.zeros((image_height, image_width), dtype=np.int64)
    for j in chosen:
        counts += masks[j]
    total = image_width * image_height

    def cov():
        return np.count_nonzero(counts) / total

    n_strata_avail = len(set(strata.tolist()))
    need_strata = min(3, n_strata_avail, R)
    while cov() < coverage:
        unchosen = [j for j in range(n) if j not in set(chosen)]
        if not unchosen:
            break
        gains = [np.count_nonzero(masks[j] & (counts == 0)) for j in unchosen]
        best = int(np.argmax(gains))
        if gains[best] == 0:
            break
        add = unchosen[best]
        # drop the box that uniquely covers the fewest pixels, respecting strata
        best_drop = None
        for j in chosen:
            remaining = [strata[i] for i in chosen if i != j] + [strata[add]]
            if len(set(remaining)) < need_strata:
                continue
            loss = np.count_nonzero(masks[j] & (counts == 1))
            if loss >= gains[best]:
                continue
            key = (loss, scores[j], -j)
            if best_drop is None or key < best_drop[0]:
                best_drop = (key, j)
        if best_drop is None:
            break
        drop = best_drop[1]
        counts -= masks[drop]
        counts += masks[add]
        chosen[chosen.index(drop)] = add
    achieved = cov()
    if achieved < coverage:
        raise ValueError(f"coverage {achieved:.4f} is below the required {coverage:.2f}")

    feats = [np.concatenate([candidates[j].feature, geometry_features(candidates[j], image_width, image_height)])
             for j in chosen]
    return RegionSet(np.vstack(feats), [candidates[j].box for j in chosen], chosen, achieved)

"""Synthetic image/caption corpora with known structure.

Each image belongs to one scene.  A caption is a sequence of ``length``
slots; slot ``t`` shows an object code ``j`` drawn at random and is written
as the scene-specific word ``s{scene}w{j}``, so scenes have disjoint
sub-vocabularies.  Region features never reveal the scene; only the global
feature does (one-hot plus noise).

Two region layouts:

``shared``
    Region features are ``[onehot(code), onehot(role)]`` where the role is
    a slot index or "distractor".  Regions appear in random order and
    distractors carry random codes, so the code of slot ``t`` is only
    recoverable by looking at the right region (attention pays off).
``bound``
    Region ``t`` gets a one-hot at position ``t * codes + code``; the
    mean over regions keeps the code-to-slot binding.

Every region also carries the 5 geometry values of a random box.

With ``off_scene > 0`` each training word is, with that probability,
written in another scene's vocabulary.  Given the image's scene, earlier
words then say nothing about the scene of the next one, so a decoder has
to take the scene from the scene vector.  Validation and test captions are
always scene-consistent.
"""
from dataclasses import dataclass

import numpy as np

from ..regions import geometry_features
from .data import DatasetRecord


@dataclass
class SynthSpec:
    scenes: int = 2
    codes: int = 6                 # object codes, i.e. words per scene
    train: int = 200
    val: int = 50
    test: int = 50
    regions: int = 8
    min_len: int = 4
    max_len: int = 6
    noise: float = 0.1
    layout: str = "shared"
    global_size: int = 8
    image_size: tuple = (64, 64)
    captions_per_image: int = 1
    off_scene: float = 0.0         # training only: chance a word uses another scene's vocabulary

    def __post_init__(self):
        for name in ("scenes", "codes", "regions", "min_len", "max_len", "global_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.min_len > self.max_len:
            raise ValueError("min_len exceeds max_len")
        if self.regions < self.max_len:
            raise ValueError("need at least one region per caption slot")
        if self.layout not in ("shared", "bound"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.global_size < self.scenes:
            raise ValueError("global feature must be able to hold the scene one-hot")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if not 0.0 <= self.off_scene < 1.0:
            raise ValueError("off_scene must lie in [0, 1)")

    @property
    def base_feature_size(self):
        if self.layout == "shared":
            return self.codes + self.max_len + 1
        return self.max_len * self.codes

    @property
    def feature_size(self):
        return self.base_feature_size + 5


def scene_word(scene, code):
    return f"s{scene}w{code}"


def scene_vocabulary(spec, scene):
    return [scene_word(scene, j) for j in range(spec.codes)]


def _random_box(rng, W, H):
    w = int(rng.integers(4, W + 1))
    h = int(rng.integers(4, H + 1))
    return (int(rng.integers(0, W - w + 1)), int(rng.integers(0, H - h + 1)), w, h)


def make_record(spec, rng, image_id, scene, off_scene=0.0):
    W, H = spec.image_size
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    codes = rng.integers(0, spec.codes, size=length)
    C, L, R = spec.codes, spec.max_len, spec.regions
    base = np.zeros((R, spec.base_feature_size))
    if spec.layout == "shared":
        roles = list(range(length)) + [L] * (R - length)
        region_codes = list(codes) + list(rng.integers(0, C, size=R - length))
        order = rng.permutation(R)
        for slot, i in enumerate(order):
            base[i, region_codes[slot]] = 1.0
            base[i, C + roles[slot]] = 1.0
    else:
        for t, j in enumerate(codes):
            base[t, t * C + j] = 1.0
    base += spec.noise * rng.normal(size=base.shape)
    boxes = [_random_box(rng, W, H) for _ in range(R)]
    geo = np.array([geometry_features(b, W, H) for b in boxes])
    feats = np.hstack([base, geo])
    g = np.zeros(spec.global_size)
    g[scene] = 1.0
    g += spec.noise * rng.normal(size=spec.global_size)
    word_scenes = np.full(length, scene)
    if off_scene > 0 and spec.scenes > 1:
        flip = rng.random(length) < off_scene
        other = (scene + rng.integers(1, spec.scenes, size=length)) % spec.scenes
        word_scenes = np.where(flip, other, word_scenes)
    caption = " ".join(scene_word(int(k), int(j)) for k, j in zip(word_scenes, codes))
    return DatasetRecord(image_id, feats, boxes, [caption] * spec.captions_per_image,
                         global_feature=g, image_size=(W, H),
                         meta={"scene": int(scene), "codes": [int(j) for j in codes]})


def synth_dataset(spec, seed):
    """``{"train": [...], "val": [...], "test": [...]}`` of DatasetRecords.

    Scenes are assigned round-robin so every split is balanced.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for split in ("train", "val", "test"):
        n = getattr(spec, split)
        off = spec.off_scene if split == "train" else 0.0
        out[split] = [make_record(spec, rng, f"{split}{i}", i % spec.scenes, off) for i in range(n)]
    return out

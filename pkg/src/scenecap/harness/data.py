"""Dataset records, the line-delimited wire format, and split files.

One image per line::

    {"id": "img7", "regions": [{"feature": [...], "box": [x, y, w, h]}, ...],
     "captions": ["..."], "global_feature": [...], "scene": [...],
     "image_size": [W, H], "meta": {...}}

A split file holds ``<split> <id>`` pairs, one per line.
"""
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..textmetrics import tokenize


@dataclass
class DatasetRecord:
    image_id: str
    features: np.ndarray                 # (R, D) region features
    boxes: list                          # (x, y, w, h) per region
    captions: list = field(default_factory=list)
    global_feature: Optional[np.ndarray] = None
    scene: Optional[np.ndarray] = None
    image_size: tuple = (0, 0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise ValueError(f"{self.image_id}: at least one region feature vector is required")
        if len(self.boxes) != len(self.features):
            raise ValueError(f"{self.image_id}: {len(self.boxes)} boxes for {len(self.features)} regions")
        self.boxes = [tuple(int(v) for v in b) for b in self.boxes]
        if self.global_feature is not None:
            self.global_feature = np.asarray(self.global_feature, dtype=np.float64)
        if self.scene is not None:
            self.scene = np.asarray(self.scene, dtype=np.float64)
        self.image_size = tuple(int(v) for v in self.image_size)

    @property
    def n_regions(self):
        return len(self.features)

    @property
    def feature_size(self):
        return self.features.shape[1]

    def tokens(self):
        return [tokenize(c) for c in self.captions]

    def to_json(self):
        rec = {
            "id": self.image_id,
            "regions": [{"feature": f.tolist(), "box": list(b)} for f, b in zip(self.features, self.boxes)],
            "captions": list(self.captions),
            "image_size": list(self.image_size),
        }
        if self.global_feature is not None:
            rec["global_feature"] = self.global_feature.tolist()
        if self.scene is not None:
            rec["scene"] = self.scene.tolist()
        if self.meta:
            rec["meta"] = self.meta
        return rec

    @classmethod
    def from_json(cls, rec):
        regions = rec.get("regions") or []
        if not regions:
            raise ValueError(f"record {rec.get('id')!r} has no regions")
        return cls(
            str(rec["id"]),
            [r["feature"] for r in regions],
            [r["box"] for r in regions],
            list(rec.get("captions", [])),
            rec.get("global_feature"),
            rec.get("scene"),
            tuple(rec.get("image_size", (0, 0))),
            dict(rec.get("meta", {})),
        )


def check_consistent(records, need_captions=False):
    """Raise unless all records share feature sizes (and have captions if asked)."""
    if not records:
        raise ValueError("empty dataset split")
    D = records[0].feature_size
    for r in records:
        if r.feature_size != D:
            raise ValueError(f"{r.image_id}: feature size {r.feature_size}, expected {D}")
        if need_captions and not r.captions:
            raise ValueError(f"{r.image_id}: training record without captions")
    return D


def write_records(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_records(path):
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(DatasetRecord.from_json(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{n}: {exc}") from exc
    return out


def write_splits(path, splits):
    """``splits`` maps split name -> list of ids (or records)."""
    with open(path, "w") as fh:
        for name, items in splits.items():
            for item in items:
                fh.write(f"{name} {getattr(item, 'image_id', item)}\n")


def read_splits(path):
    splits = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{n}: expected '<split> <id>'")
            splits.setdefault(parts[0], []).append(parts[1])
    return splits


def select_split(records, splits, name):
    if name not in splits:
        raise ValueError(f"split {name!r} not in split file (have {sorted(splits)})")
    by_id = {r.image_id: r for r in records}
    missing = [i for i in splits[name] if i not in by_id]
    if missing:
        raise ValueError(f"split {name!r} names unknown ids, e.g. {missing[0]!r}")
    return [by_id[i] for i in splits[name]]


def stack_regions(records):
    """(N, R, D) features plus a (N, R) validity mask for ragged region counts."""
    R = max(r.n_regions for r in records)
    D = check_consistent(records)
    feats = np.zeros((len(records), R, D))
    mask = np.zeros((len(records), R), dtype=bool)
    for i, r in enumerate(records):
        feats[i, :r.n_regions] = r.features
        mask[i, :r.n_regions] = True
    return feats, (None if mask.all() else mask)

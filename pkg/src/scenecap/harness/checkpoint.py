"""Versioned, canonical checkpoint files.

Arrays are stored as base64 of little-endian float64 bytes, and the JSON
is written with sorted keys and fixed separators, so save -> load -> save
reproduces the file byte for byte.
"""
import base64
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import numcore as nc
from ..captioner import ModelConfig, init_model
from ..scene import LdaModel, SceneMlp
from ..textmetrics import Vocabulary
from .config import TrainConfig

CHECKPOINT_VERSION = 1


def encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(rec):
    raw = base64.b64decode(rec["data"].encode("ascii"))
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rec["shape"])


@dataclass
class Checkpoint:
    config: TrainConfig
    model_config: ModelConfig
    vocab: Vocabulary
    params: dict                          # name -> ndarray
    scene_mlp: Optional[SceneMlp] = None
    lda: Optional[LdaModel] = None
    step: int = 0
    history: list = field(default_factory=list)

    def model(self):
        template = init_model(self.model_config, seed=0)
        return template.with_parameters({k: nc.parameter(v) for k, v in self.params.items()})

    def to_record(self):
        mc = dataclasses.asdict(self.model_config)
        mc["factorized_layers"] = list(mc["factorized_layers"])
        rec = {
            "format": "scenecap-checkpoint",
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "model_config": mc,
            "vocab": self.vocab.to_record(),
            "params": {k: encode_array(v) for k, v in self.params.items()},
            "step": int(self.step),
            "history": self.history,
            "scene_mlp": None,
            "lda": None,
        }
        if self.scene_mlp is not None:
            rec["scene_mlp"] = {"weights": [encode_array(w.data) for w in self.scene_mlp.weights],
                                "biases": [encode_array(b.data) for b in self.scene_mlp.biases]}
        if self.lda is not None:
            rec["lda"] = self.lda.to_record()
        return rec

    def dumps(self):
        return json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_record(cls, rec):
        if rec.get("format") != "scenecap-checkpoint":
            raise ValueError("not a checkpoint file")
        if rec.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {rec.get('version')} is not supported "
                             f"(expected {CHECKPOINT_VERSION})")
        mc = dict(rec["model_config"])
        mc["factorized_layers"] = tuple(mc["factorized_layers"])
        mlp = None
        if rec.get("scene_mlp"):
            m = rec["scene_mlp"]
            mlp = SceneMlp([nc.parameter(decode_array(w)) for w in m["weights"]],
                           [nc.parameter(decode_array(b)) for b in m["biases"]])
        lda = LdaModel.from_record(rec["lda"]) if rec.get("lda") else None
        return cls(
            TrainConfig.from_dict(rec["config"]),
            ModelConfig(**mc),
            Vocabulary.from_record(rec["vocab"]),
            {k: decode_array(v) for k, v in rec["params"].items()},
            mlp, lda, int(rec["step"]), list(rec["history"]),
        )

    @classmethod
    def loads(cls, text):
        return cls.from_record(json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read())

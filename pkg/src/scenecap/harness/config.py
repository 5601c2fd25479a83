"""Training configuration, presets, and the flat ``key = value`` file format."""
import dataclasses
from dataclasses import dataclass
from typing import Optional

MODES = ("base", "ra", "sf", "ra+sf")
SCENE_SOURCES = ("lda", "mlp", "given")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "ra+sf"
    hidden_size: int = 32
    embed_size: int = 32
    attn_size: int = 0             # 0: same as hidden_size
    rank: int = 64
    n_topics: int = 4
    regions: int = 8
    batch_size: int = 64
    lr: float = 1e-3
    beam: int = 10
    max_epochs: int = 50
    patience: int = 5
    max_steps: int = 0             # 0: no limit
    seed: int = 0
    min_freq: int = 1
    max_len: int = 30
    factorize_g: bool = False
    # scene pipeline
    scene_source: str = "lda"      # scene vectors used for training captions
    lda_alpha: float = 0.0         # 0: 50 / n_topics
    lda_beta: float = 0.01
    lda_iterations: int = 200
    lda_infer_iterations: int = 50
    lda_burn_in: int = 25
    scene_hidden: str = "64,32"
    scene_epochs: int = 200
    scene_lr: float = 1e-2
    scene_batch: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.scene_source not in SCENE_SOURCES:
            raise ValueError(f"scene_source must be one of {SCENE_SOURCES}")
        for name in ("hidden_size", "embed_size", "rank", "n_topics", "regions", "batch_size",
                     "beam", "max_epochs", "patience", "min_freq", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_topics < 2:
            raise ValueError("n_topics must be at least 2")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.max_steps < 0 or self.attn_size < 0:
            raise ValueError("max_steps and attn_size must be nonnegative")
        self.scene_hidden_sizes  # validates

    @property
    def attention(self):
        return self.mode in ("ra", "ra+sf")

    @property
    def scene(self):
        return self.mode in ("sf", "ra+sf")

    @property
    def scene_hidden_sizes(self):
        try:
            sizes = tuple(int(x) for x in str(self.scene_hidden).split(",") if x.strip())
        except ValueError:
            raise ValueError(f"scene_hidden must be comma-separated sizes, got {self.scene_hidden!r}")
        if not sizes or min(sizes) <= 0:
            raise ValueError("scene_hidden needs positive layer sizes")
        return sizes

    @property
    def alpha(self):
        return self.lda_alpha or 50.0 / self.n_topics

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(known[k].type, v) for k, v in d.items()})


def _coerce(kind, value):
    if not isinstance(value, str):
        return value
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    if kind == "bool":
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value.strip()


DESK = TrainConfig()

# full-scale profile; not trainable on a desk machine
FULL = TrainConfig(hidden_size=512, embed_size=512, rank=1024, n_topics=80, regions=30,
                   min_freq=20, batch_size=64, beam=10, scene_hidden="1024,512")

PRESETS = {"desk": DESK, "full": FULL}


def parse_config_text(text):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def load_config(path=None, preset="desk", overrides: Optional[dict] = None):
    """Preset, then file values, then explicit overrides (e.g. CLI flags)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    values = PRESETS[preset].to_dict()
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(values)


def config_text(config):
    return "".join(f"{k} = {v}\n" for k, v in config.to_dict().items())

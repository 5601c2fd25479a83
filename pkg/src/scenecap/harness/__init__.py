"""Datasets, training, evaluation, checkpoints and the command line."""
from .checkpoint import CHECKPOINT_VERSION, Checkpoint
from .config import DESK, FULL, MODES, PRESETS, TrainConfig, config_text, load_config, parse_config_text
from .data import (
    DatasetRecord, read_records, read_splits, select_split, stack_regions,
    write_records, write_splits,
)
from .evaluation import (
    Bundle, evaluate, generate, ranks_from_scores, recall_report, retrieval_eval, score_matrix,
)
from .synth import SynthSpec, scene_vocabulary, scene_word, synth_dataset
from .training import (
    EncodedSet, ScenePipeline, encode_set, fit_scene_pipeline, make_batch,
    mean_token_loss, model_config_for, train,
)

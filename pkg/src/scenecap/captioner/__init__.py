"""Region-attention, scene-factorized caption decoder."""
from .analysis import (
    attention_heatmap, distort_scene_decode, patch_word_match, pgm_text,
    read_pgm, teacher_forced_attention, write_heatmaps,
)
from .decode import (
    DEFAULT_MAX_LEN, Hypothesis, beam_decode, greedy_decode, greedy_decode_batch,
    greedy_hypothesis,
)
from .model import (
    BEGIN, END, OOV, CaptionModel, DecoderState, ModelConfig, WordPredictor,
    advance, batch_loss, init_model, initial_state, prepare_inputs, start,
    step, step_logits, teacher_forced_loss,
)

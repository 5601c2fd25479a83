"""Captioning reports and image/caption retrieval from a checkpoint."""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..captioner import END, beam_decode, greedy_decode, teacher_forced_loss
from ..textmetrics import METRIC_KEYS, score_all
from .data import check_consistent
from .training import ScenePipeline, given_vectors


@dataclass
class Bundle:
    """A checkpoint unpacked into a ready model."""
    checkpoint: object
    model: object

    @classmethod
    def from_checkpoint(cls, ckpt):
        return cls(ckpt, ckpt.model())

    @property
    def vocab(self):
        return self.checkpoint.vocab

    def scene_vectors(self, records):
        """Test-time scene vectors (MLP-predicted, or given), None without scenes."""
        if not self.model.config.scene:
            return None
        cfg = self.checkpoint.config
        if cfg.scene_source == "given":
            return given_vectors(records)
        return ScenePipeline(cfg, self.checkpoint.lda, self.checkpoint.scene_mlp).image_vectors(records)

    def check(self, records):
        D = check_consistent(records)
        if D != self.model.config.feature_size:
            raise ValueError(f"dataset features have size {D}, checkpoint expects {self.model.config.feature_size}")


def _words(tokens):
    return list(tokens[:-1]) if tokens and tokens[-1] == END else list(tokens)


def generate(bundle, records, beam=None, max_len=None):
    """Decoded captions as token lists (beam search; beam 1 is greedy)."""
    bundle.check(records)
    cfg = bundle.checkpoint.config
    beam = beam or cfg.beam
    max_len = max_len or cfg.max_len
    scenes = bundle.scene_vectors(records)
    out = []
    for i, r in enumerate(records):
        s = None if scenes is None else scenes[i]
        if beam == 1:
            toks, _ = greedy_decode(bundle.model, r.features, s, max_len)
        else:
            toks = beam_decode(bundle.model, r.features, s, beam, max_len)[0].tokens
        out.append(bundle.vocab.decode(_words(list(toks))))
    return out


def evaluate(bundle, records, beam=None, max_len=None, report_dir=None):
    """Metric report with exactly the keys of ``METRIC_KEYS``.

    With ``report_dir`` also writes report.json (metrics and captions) and
    report.txt.
    """
    if not records:
        raise ValueError("empty evaluation split")
    if any(not r.captions for r in records):
        raise ValueError("evaluation records need reference captions")
    hyps = generate(bundle, records, beam, max_len)
    refs = [r.tokens() for r in records]
    report = score_all(hyps, refs)
    if report_dir is not None:
        d = Path(report_dir)
        d.mkdir(parents=True, exist_ok=True)
        payload = {"metrics": {k: report[k] for k in METRIC_KEYS},
                   "beam": beam or bundle.checkpoint.config.beam,
                   "captions": {r.image_id: " ".join(h) for r, h in zip(records, hyps)}}
        (d / "report.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
        # x100 column is the usual tabulation scale for these scores
        lines = [f"{k:8s} {report[k]:.4f} {100 * report[k]:6.1f}" for k in METRIC_KEYS]
        lines += [""] + [f"{r.image_id}\t{' '.join(h)}" for r, h in zip(records, hyps)]
        (d / "report.txt").write_text("\n".join(lines) + "\n")
    return report


def score_matrix(bundle, records):
    """(N, N) log P(caption j | image i) with teacher forcing; one caption per image."""
    bundle.check(records)
    scenes = bundle.scene_vectors(records)
    caps = [bundle.vocab.encode(r.tokens()[0]) for r in records]
    N = len(records)
    out = np.zeros((N, N))
    for i, r in enumerate(records):
        s = None if scenes is None else scenes[i]
        for j, cap in enumerate(caps):
            out[i, j] = -teacher_forced_loss(bundle.model, r.features, s, cap).item()
    return out


def ranks_from_scores(scores, axis):
    """1-based rank of the diagonal entry along ``axis`` (ties: lower index first).

    axis=0: caption j ranks the images (column j); axis=1: image i ranks
    the captions (row i).
    """
    S = scores if axis == 1 else scores.T
    N = len(S)
    ranks = np.zeros(N, dtype=np.int64)
    for q in range(N):
        order = np.lexsort((np.arange(N), -S[q]))
        ranks[q] = int(np.flatnonzero(order == q)[0]) + 1
    return ranks


def recall_report(ranks):
    return {"r1": float(np.mean(ranks <= 1)), "r5": float(np.mean(ranks <= 5)),
            "r10": float(np.mean(ranks <= 10)), "median_rank": float(np.median(ranks))}


def retrieval_eval(bundle, records, report_dir=None):
    """Recall@1/5/10 and median rank for caption->image and image->caption.

    Images are scored by log P(S|I), i.e. a uniform prior over images.
    """
    if not records:
        raise ValueError("empty retrieval set")
    if len(records) < 2:
        raise ValueError("retrieval needs at least two images")
    if any(not r.captions for r in records):
        raise ValueError("retrieval records need a caption")
    scores = score_matrix(bundle, records)
    report = {"caption_to_image": recall_report(ranks_from_scores(scores, axis=0)),
              "image_to_caption": recall_report(ranks_from_scores(scores, axis=1)),
              "n": len(records)}
    if report_dir is not None:
        d = Path(report_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "retrieval.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    return report, scores

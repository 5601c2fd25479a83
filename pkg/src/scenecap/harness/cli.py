"""Command-line entry point: ``scenecap <subcommand> ...``.

Every subcommand exits 0 on success; on failure it prints one
``scenecap: error: ...`` line to stderr and exits 1 (usage errors exit 2).
"""
import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from ..captioner import attention_heatmap, greedy_decode, patch_word_match, teacher_forced_attention, write_heatmaps
from ..scene import LdaModel, SceneMlp, lda_fit, scene_mlp_train
from ..textmetrics import tokenize
from .checkpoint import Checkpoint
from .config import TrainConfig, config_text, load_config
from .data import read_records, read_splits, select_split, write_records, write_splits
from .evaluation import Bundle, evaluate, generate, retrieval_eval
from .synth import SynthSpec, synth_dataset
from .training import ScenePipeline, train


def _records(args, split):
    records = read_records(args.data)
    if args.splits:
        return select_split(records, read_splits(args.splits), split)
    return records


def _find(records, image_id):
    for r in records:
        if r.image_id == image_id:
            return r
    raise ValueError(f"image {image_id!r} not in {len(records)} records")


def _config_overrides(args):
    out = {}
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            out[f.name] = v
    return out


# -- subcommands ---------------------------------------------------------------------

def cmd_synth(args):
    spec = SynthSpec(scenes=args.scenes, codes=args.codes, train=args.train, val=args.val,
                     test=args.test, regions=args.regions, min_len=args.min_len, max_len=args.max_len,
                     noise=args.noise, layout=args.layout, off_scene=args.off_scene)
    data = synth_dataset(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / "dataset.jsonl", [r for split in data.values() for r in split])
    write_splits(out / "splits.txt", data)
    print(f"wrote {sum(len(v) for v in data.values())} records to {out / 'dataset.jsonl'}")


def cmd_lda_fit(args):
    records = _records(args, args.split)
    docs = [[t for c in r.captions for t in tokenize(c)] for r in records]
    alpha = args.alpha if args.alpha else None
    model = lda_fit(docs, args.topics, alpha, args.beta, args.iterations, seed=args.seed)
    model.save(args.out)
    print(f"fitted {args.topics} topics over {len(model.vocabulary)} words -> {args.out}")


def cmd_scene_train(args):
    records = _records(args, args.split)
    lda = LdaModel.load(args.lda)
    cfg = TrainConfig(n_topics=lda.n_topics, seed=args.seed)
    targets = ScenePipeline(cfg, lda).caption_vectors(records)
    if any(r.global_feature is None for r in records):
        raise ValueError("records need global image features")
    hidden = TrainConfig(scene_hidden=args.hidden).scene_hidden_sizes
    mlp = scene_mlp_train(np.vstack([r.global_feature for r in records]), targets, hidden=hidden,
                          lr=args.lr, epochs=args.epochs, seed=args.seed)
    mlp.save(args.out)
    print(f"scene MLP {hidden} trained on {len(records)} images -> {args.out}")


def cmd_train(args):
    overrides = _config_overrides(args)
    overrides["seed"] = args.seed
    config = load_config(args.config, args.preset, overrides)
    train_set = _records(args, args.train_split)
    val_set = _records(args, args.val_split)
    lda = LdaModel.load(args.lda) if args.lda else None
    mlp = SceneMlp.load(args.scene_mlp) if args.scene_mlp else None

    def log(h):
        if not args.quiet:
            print(f"epoch {h['epoch']:3d} step {h['step']:6d} train {h['train_loss']:.4f} "
                  f"val {h['val_loss']:.4f} bleu1 {h['val_bleu1']:.4f}{' *' if h['improved'] else ''}")

    ckpt = train(config, train_set, val_set, lda, mlp, on_epoch=log, checkpoint_path=args.out)
    print(f"best checkpoint (step {ckpt.step}) -> {args.out}")


def cmd_generate(args):
    bundle = Bundle.from_checkpoint(Checkpoint.load(args.checkpoint))
    records = _records(args, args.split)
    caps = generate(bundle, records, args.beam, args.max_len)
    lines = [f"{r.image_id}\t{' '.join(c)}" for r, c in zip(records, caps)]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))


def cmd_evaluate(args):
    bundle = Bundle.from_checkpoint(Checkpoint.load(args.checkpoint))
    report = evaluate(bundle, _records(args, args.split), args.beam, args.max_len, args.report_dir)
    for k, v in report.items():
        print(f"{k:8s} {v:.4f}")


def cmd_retrieve(args):
    bundle = Bundle.from_checkpoint(Checkpoint.load(args.checkpoint))
    report, _ = retrieval_eval(bundle, _records(args, args.split), args.report_dir)
    for direction in ("caption_to_image", "image_to_caption"):
        r = report[direction]
        print(f"{direction:17s} R@1 {r['r1']:.3f} R@5 {r['r5']:.3f} R@10 {r['r10']:.3f} "
              f"median {r['median_rank']:g}")


def _image_and_scene(args):
    bundle = Bundle.from_checkpoint(Checkpoint.load(args.checkpoint))
    record = _find(read_records(args.data), args.image_id)
    bundle.check([record])
    scenes = bundle.scene_vectors([record])
    return bundle, record, (None if scenes is None else scenes[0])


def cmd_heatmap(args):
    bundle, record, s = _image_and_scene(args)
    if not bundle.model.config.attention:
        raise ValueError("heatmaps need a model with region attention")
    if args.sentence:
        ids = bundle.vocab.encode(tokenize(args.sentence))
        weights = teacher_forced_attention(bundle.model, record.features, s, ids)
    else:
        ids, weights = greedy_decode(bundle.model, record.features, s, bundle.checkpoint.config.max_len)
    W, H = record.image_size
    if W <= 0 or H <= 0:
        raise ValueError(f"{record.image_id}: record has no image size")
    grids = attention_heatmap(weights, record.boxes, W, H)
    paths = write_heatmaps(grids, args.out_dir)
    words = [bundle.vocab.tokens[i] for i in ids]
    (Path(args.out_dir) / "words.txt").write_text(
        "".join(f"{p.name}\t{w}\n" for p, w in zip(paths, words)))
    print(f"wrote {len(paths)} heatmaps to {args.out_dir}")


def cmd_match_words(args):
    bundle, record, s = _image_and_scene(args)
    if not bundle.model.config.attention:
        raise ValueError("patch-word matching needs a model with region attention")
    sentence = bundle.vocab.encode(tokenize(args.sentence))
    words = tokenize(args.word)
    if len(words) != 1:
        raise ValueError("--word must be a single token")
    word = bundle.vocab.encode(words)[0]
    idx, box = patch_word_match(bundle.model, record.features, s, sentence, word, record.boxes)
    print(json.dumps({"word": words[0], "region": idx, "box": list(box)}))


# -- parser -------------------------------------------------------------------------------

def _data_args(p, split_default):
    p.add_argument("--data", required=True, help="dataset JSONL file")
    p.add_argument("--splits", help="split file; without it every record is used")
    p.add_argument("--split", default=split_default)


def build_parser():
    parser = argparse.ArgumentParser(prog="scenecap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    spec = SynthSpec()
    for f in dataclasses.fields(SynthSpec):
        if f.name in ("image_size", "captions_per_image"):
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", type=type(getattr(spec, f.name)),
                       default=getattr(spec, f.name))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("lda-fit", help="fit LDA on caption text")
    _data_args(p, "train")
    p.add_argument("--topics", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.0, help="0 means 50/topics")
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lda_fit)

    p = sub.add_parser("scene-train", help="train the scene MLP on LDA targets")
    _data_args(p, "train")
    p.add_argument("--lda", required=True)
    p.add_argument("--hidden", default=TrainConfig().scene_hidden)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scene_train)

    p = sub.add_parser("train", help="train a caption model")
    p.add_argument("--data", required=True)
    p.add_argument("--splits")
    p.add_argument("--train-split", default="train")
    p.add_argument("--val-split", default="val")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--preset", default="desk", choices=["desk", "full"])
    p.add_argument("--lda", help="fitted LDA model (otherwise fitted here)")
    p.add_argument("--scene-mlp", help="trained scene MLP (otherwise trained here)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--quiet", action="store_true")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", default=None,
                       metavar=f.name.upper())
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (("generate", cmd_generate, "caption images"),
                                  ("evaluate", cmd_evaluate, "caption and score a split")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--checkpoint", required=True)
        _data_args(p, "test")
        p.add_argument("--beam", type=int, default=None)
        p.add_argument("--max-len", type=int, default=None)
        if name == "generate":
            p.add_argument("--out")
        else:
            p.add_argument("--report-dir", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("retrieve", help="image/caption retrieval metrics")
    p.add_argument("--checkpoint", required=True)
    _data_args(p, "test")
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("heatmap", help="per-step attention heatmaps as PGM files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--sentence", help="teacher-force this sentence instead of decoding")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("match-words", help="region attended when a word is emitted")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--sentence", required=True)
    p.add_argument("--word", required=True)
    p.set_defaults(func=cmd_match_words)

    p = sub.add_parser("show-config", help="print the effective training config")
    p.add_argument("--config")
    p.add_argument("--preset", default="desk", choices=["desk", "full"])
    p.set_defaults(func=lambda a: print(config_text(load_config(a.config, a.preset)), end=""))
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - one diagnostic line for any failure
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"scenecap: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

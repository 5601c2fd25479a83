import json

import numpy as np
import pytest

from scenecap.captioner import greedy_decode
from scenecap.harness import (
    Bundle, Checkpoint, DatasetRecord, SynthSpec, TrainConfig, evaluate, generate, load_config,
    parse_config_text, ranks_from_scores, read_records, read_splits, recall_report, retrieval_eval,
    scene_vocabulary, score_matrix, select_split, stack_regions, synth_dataset, train, write_records,
    write_splits,
)
from scenecap.harness.cli import main
from scenecap.textmetrics import METRIC_KEYS, build_vocab, tokenize
from scenecap.captioner import teacher_forced_loss


def tiny_data(seed=0, **kw):
    spec = SynthSpec(**{"train": 12, "val": 6, "test": 6, "regions": 6, "min_len": 3, "max_len": 4, **kw})
    return synth_dataset(spec, seed)


def tiny_config(**kw):
    base = dict(mode="ra+sf", hidden_size=8, embed_size=8, rank=8, n_topics=2, batch_size=8,
                max_epochs=3, patience=3, lda_alpha=0.5, lda_iterations=20, lda_infer_iterations=10,
                lda_burn_in=5, scene_hidden="8", scene_epochs=5, beam=2, max_len=8)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def trained():
    data = tiny_data()
    return data, train(tiny_config(), data["train"], data["val"])


# data

def test_record_round_trip(tmp_path):
    data = tiny_data()
    recs = data["train"] + data["val"]
    write_records(tmp_path / "d.jsonl", recs)
    write_splits(tmp_path / "s.txt", data)
    back = read_records(tmp_path / "d.jsonl")
    assert [r.image_id for r in back] == [r.image_id for r in recs]
    assert all(np.array_equal(a.features, b.features) and a.boxes == b.boxes and a.captions == b.captions
               for a, b in zip(recs, back))
    splits = read_splits(tmp_path / "s.txt")
    assert [r.image_id for r in select_split(back, splits, "val")] == [r.image_id for r in data["val"]]
    with pytest.raises(ValueError):
        select_split(back, splits, "nope")
    with pytest.raises(ValueError):
        select_split(back, {"x": ["missing"]}, "x")


def test_bad_records_are_rejected(tmp_path):
    with pytest.raises(ValueError):
        DatasetRecord("a", np.zeros((0, 3)), [])
    with pytest.raises(ValueError):
        DatasetRecord("a", np.zeros((2, 3)), [(0, 0, 1, 1)])
    (tmp_path / "bad.jsonl").write_text('{"id": "x", "regions": []}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        read_records(tmp_path / "bad.jsonl")


def test_ragged_regions_are_masked():
    a = DatasetRecord("a", np.ones((2, 3)), [(0, 0, 1, 1)] * 2, ["x"])
    b = DatasetRecord("b", np.ones((3, 3)), [(0, 0, 1, 1)] * 3, ["y"])
    feats, mask = stack_regions([a, b])
    assert feats.shape == (2, 3, 3)
    np.testing.assert_array_equal(mask, [[1, 1, 0], [1, 1, 1]])
    assert stack_regions([b, b])[1] is None


# synthetic data

def test_synth_is_deterministic_and_disjoint():
    a, b = tiny_data(3), tiny_data(3)
    assert all(np.array_equal(x.features, y.features) and x.captions == y.captions
               for x, y in zip(a["train"], b["train"]))
    vocab0, vocab1 = set(scene_vocabulary(SynthSpec(), 0)), set(scene_vocabulary(SynthSpec(), 1))
    assert not vocab0 & vocab1
    data = tiny_data(4, noise=0.0)
    for r in data["train"]:
        words = set(tokenize(r.captions[0]))
        assert words <= set(scene_vocabulary(SynthSpec(), r.meta["scene"]))
    v = build_vocab([t for r in data["train"] for t in r.tokens()], 1)
    assert all(i > 2 for r in data["train"] for i in v.encode(r.tokens()[0]))


def test_off_scene_noise_only_in_training():
    data = tiny_data(5, off_scene=0.5, train=40)
    flipped = sum(not set(tokenize(r.captions[0])) <= set(scene_vocabulary(SynthSpec(), r.meta["scene"]))
                  for r in data["train"])
    assert flipped > 0
    for r in data["val"] + data["test"]:
        assert set(tokenize(r.captions[0])) <= set(scene_vocabulary(SynthSpec(), r.meta["scene"]))


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(layout="grid")
    with pytest.raises(ValueError):
        SynthSpec(regions=3, max_len=4)


# config

def test_config_layers(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nhidden_size = 12\nlr = 0.01\nfactorize-g = yes\n")
    cfg = load_config(path, overrides={"lr": "0.5", "seed": 3})
    assert (cfg.hidden_size, cfg.lr, cfg.factorize_g, cfg.seed) == (12, 0.5, True, 3)
    full = load_config(preset="full")
    assert (full.hidden_size, full.n_topics, full.regions, full.min_freq, full.beam) == (512, 80, 30, 20, 10)
    assert TrainConfig().batch_size == 64
    with pytest.raises(ValueError):
        parse_config_text("no equals sign")
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        TrainConfig(mode="xyz")


# training and checkpoints

def test_training_is_deterministic_and_round_trips(trained, tmp_path):
    data, ckpt = trained
    again = train(tiny_config(), data["train"], data["val"])
    assert ckpt.dumps() == again.dumps()
    ckpt.save(tmp_path / "m.ckpt")
    loaded = Checkpoint.load(tmp_path / "m.ckpt")
    assert loaded.dumps() == ckpt.dumps()
    b1, b2 = Bundle.from_checkpoint(ckpt), Bundle.from_checkpoint(loaded)
    assert generate(b1, data["test"], beam=1) == generate(b2, data["test"], beam=1)


def test_checkpoint_version_is_checked(trained):
    rec = json.loads(trained[1].dumps())
    rec["version"] = 99
    with pytest.raises(ValueError, match="version"):
        Checkpoint.from_record(rec)


def test_history_and_best_checkpoint(trained):
    _, ckpt = trained
    h = ckpt.history
    assert [e["epoch"] for e in h] == list(range(1, len(h) + 1))
    best = [e for e in h if e["step"] == ckpt.step][0]
    assert best["val_bleu1"] == max(e["val_bleu1"] for e in h)


def test_written_checkpoints_never_get_worse(tmp_path):
    data = tiny_data(6)
    path = tmp_path / "best.ckpt"
    seen = []

    def watch(entry):
        ck = Checkpoint.load(path)
        rec = [e for e in ck.history if e["step"] == ck.step][-1]
        seen.append(rec["val_bleu1"])

    train(tiny_config(max_epochs=4, patience=4, lr=1e-2), data["train"], data["val"], on_epoch=watch,
          checkpoint_path=path)
    assert seen == sorted(seen)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_errors():
    data = tiny_data()
    with pytest.raises(ValueError):
        train(tiny_config(), [], data["val"])
    with pytest.raises(ValueError):
        train(tiny_config(), data["train"], [])
    with pytest.raises(FloatingPointError, match="batch"):
        train(tiny_config(lr=1e300, max_epochs=2), data["train"], data["val"])


def test_given_scene_vectors_mode():
    data = tiny_data(7)
    for split in data.values():
        for r in split:
            r.scene = np.eye(2)[r.meta["scene"]]
    ckpt = train(tiny_config(scene_source="given", max_epochs=1), data["train"], data["val"])
    assert ckpt.lda is None and ckpt.scene_mlp is None


# evaluation

def test_evaluate_report(trained, tmp_path):
    data, ckpt = trained
    bundle = Bundle.from_checkpoint(ckpt)
    report = evaluate(bundle, data["test"], beam=2, report_dir=tmp_path)
    assert tuple(report) == METRIC_KEYS
    saved = json.loads((tmp_path / "report.json").read_text())
    assert set(saved["metrics"]) == set(METRIC_KEYS) and len(saved["captions"]) == len(data["test"])
    assert (tmp_path / "report.txt").read_text().startswith("bleu1")
    with pytest.raises(ValueError):
        evaluate(bundle, [])


def test_beam_one_report_equals_greedy(trained):
    data, ckpt = trained
    bundle = Bundle.from_checkpoint(ckpt)
    s = bundle.scene_vectors(data["test"])
    greedy = [bundle.vocab.decode(greedy_decode(bundle.model, r.features, s[i], 8)[0])
              for i, r in enumerate(data["test"])]
    assert generate(bundle, data["test"], beam=1, max_len=8) == greedy


def test_dimension_mismatch_is_reported(trained):
    _, ckpt = trained
    other = tiny_data(layout="bound")["test"]
    with pytest.raises(ValueError, match="features have size"):
        generate(Bundle.from_checkpoint(ckpt), other)


def test_retrieval_scores_are_negated_losses(trained):
    data, ckpt = trained
    bundle = Bundle.from_checkpoint(ckpt)
    recs = data["test"][:4]
    S = score_matrix(bundle, recs)
    s = bundle.scene_vectors(recs)
    for i, r in enumerate(recs):
        for j, c in enumerate(recs):
            cap = bundle.vocab.encode(c.tokens()[0])
            assert S[i, j] == -teacher_forced_loss(bundle.model, r.features, s[i], cap).item()


def test_ranks_and_recalls():
    S = np.array([[3.0, 1.0, 0.0], [0.0, 2.0, 5.0], [1.0, 1.0, 1.0]])
    assert list(ranks_from_scores(S, axis=1)) == [1, 2, 3]
    assert list(ranks_from_scores(S, axis=0)) == [1, 1, 2]
    rep = recall_report(np.array([1, 4, 7, 12]))
    assert rep == {"r1": 0.25, "r5": 0.5, "r10": 0.75, "median_rank": 5.5}


def test_zero_model_retrieval_median_rank(trained, tmp_path):
    data, ckpt = trained
    zero = Bundle(ckpt, ckpt.model().zeroed())
    recs = [r for r in data["test"] + data["val"] if len(r.tokens()[0]) == 3][:5]
    assert len(recs) == 5
    report, scores = retrieval_eval(zero, recs, tmp_path)
    assert np.all(scores == scores[0, 0])
    for d in ("caption_to_image", "image_to_caption"):
        assert report[d]["median_rank"] == 3.0
        assert report[d]["r10"] >= report[d]["r5"] >= report[d]["r1"]
    assert json.loads((tmp_path / "retrieval.json").read_text())["n"] == 5
    with pytest.raises(ValueError):
        retrieval_eval(zero, recs[:1])


# command line

def test_cli_end_to_end(tmp_path, capsys):
    d = tmp_path / "data"
    assert main(["synth", "--seed", "1", "--out", str(d), "--train", "12", "--val", "6", "--test", "4",
                 "--regions", "6", "--min-len", "3", "--max-len", "4"]) == 0
    data, splits = str(d / "dataset.jsonl"), str(d / "splits.txt")
    ck = str(tmp_path / "m.ckpt")
    args = ["train", "--data", data, "--splits", splits, "--seed", "0", "--out", ck, "--quiet",
            "--hidden-size", "8", "--embed-size", "8", "--rank", "8", "--n-topics", "2", "--max-epochs", "1",
            "--lda-iterations", "10", "--lda-alpha", "0.5", "--scene-hidden", "8", "--scene-epochs", "3"]
    assert main(args) == 0
    assert main(["evaluate", "--checkpoint", ck, "--data", data, "--splits", splits, "--beam", "2",
                 "--report-dir", str(tmp_path / "rep")]) == 0
    assert main(["retrieve", "--checkpoint", ck, "--data", data, "--splits", splits,
                 "--report-dir", str(tmp_path / "rep")]) == 0
    assert main(["generate", "--checkpoint", ck, "--data", data, "--splits", splits, "--beam", "1",
                 "--out", str(tmp_path / "caps.txt")]) == 0
    assert len((tmp_path / "caps.txt").read_text().splitlines()) == 4
    assert main(["heatmap", "--checkpoint", ck, "--data", data, "--image-id", "test0",
                 "--out-dir", str(tmp_path / "heat")]) == 0
    assert (tmp_path / "heat" / "words.txt").exists()
    rec = read_records(data)[-1]
    sentence = rec.captions[0]
    word = sentence.split()[1]
    capsys.readouterr()
    assert main(["match-words", "--checkpoint", ck, "--data", data, "--image-id", rec.image_id,
                 "--sentence", sentence, "--word", word]) == 0
    assert json.loads(capsys.readouterr().out)["word"] == word
    assert main(["lda-fit", "--data", data, "--splits", splits, "--topics", "2", "--iterations", "5",
                 "--out", str(tmp_path / "lda.json")]) == 0
    assert main(["scene-train", "--data", data, "--splits", splits, "--lda", str(tmp_path / "lda.json"),
                 "--hidden", "4", "--epochs", "2", "--out", str(tmp_path / "mlp.json")]) == 0
    assert main(["show-config", "--preset", "full"]) == 0
    assert "hidden_size = 512" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert main(["evaluate", "--checkpoint", str(tmp_path / "none"), "--data", str(tmp_path / "x"),
                 "--report-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("scenecap: error:")
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", "x", "--out", "y"])
    assert exc.value.code == 2

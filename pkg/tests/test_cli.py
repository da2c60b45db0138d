import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from egoact.cli import main
from egoact.data import datasets_equal, load_dataset, load_prob_sequences
from egoact.evaluation import build_report, load_report
from egoact.geometry import SkinMask, write_pbm
from egoact.hlstm import load_hlstm, predict_frames
from egoact.scorer import ScorerParams, load_scorer, save_scorer
from egoact.temporal import ActionGroup, MetaSequence, enumerate_all, load_metas


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("synth", "--actions", 4, "--dim", 8, "--sequences", 12, "--seed", 7, "--out", d / "data") == 0
    assert run("train-frame", "--dataset", d / "data/dataset.jsonl", "--iterations", 60, "--seed", 1,
               "--probs-out", "--out", d / "frame") == 0
    assert run("train-hlstm", "--probs", d / "frame/probs.jsonl", "--epochs", 2, "--hidden", 6, "--seed", 1,
               "--out", d / "h0") == 0
    return d


def test_synth_byte_identical(tmp_path):
    for k in (1, 2):
        assert run("synth", "--actions", 4, "--dim", 8, "--seed", 7, "--out", tmp_path / str(k)) == 0
    a, b = (tmp_path / "1/dataset.jsonl").read_bytes(), (tmp_path / "2/dataset.jsonl").read_bytes()
    assert a == b
    ds = load_dataset(tmp_path / "1/dataset.jsonl")
    assert ds.num_actions == 4 and ds.feature_dim == 8


def test_missing_seed_exit_2(tmp_path, capsys):
    assert run("synth", "--actions", 4, "--out", tmp_path) == 2
    assert "--seed" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path):
    assert run("synth", "--seed", 1, "--placement", "primary", "--distractors", 0, "--out", tmp_path) == 2


def test_config_file_supplies_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 3, "actions": 5, "dim": 6}))
    assert run("synth", "--config", cfg, "--out", tmp_path / "o") == 0
    ds = load_dataset(tmp_path / "o/dataset.jsonl")
    assert ds.num_actions == 5 and ds.feature_dim == 6
    # command-line values win over the file
    assert run("synth", "--config", cfg, "--actions", 3, "--out", tmp_path / "p") == 0
    assert load_dataset(tmp_path / "p/dataset.jsonl").num_actions == 3


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nonsense": 1}')
    assert run("synth", "--seed", 1, "--config", cfg, "--out", tmp_path) == 2


def test_probability_synth(tmp_path):
    assert run("synth", "--kind", "probs", "--actions", 5, "--sequences", 4, "--seed", 2, "--out", tmp_path) == 0
    seqs = load_prob_sequences(tmp_path / "probs.jsonl")
    assert len(seqs) == 4 and seqs[0].probs.shape[1] == 5


def test_train_frame_outputs(pipeline):
    rows = list(csv.reader((pipeline / "frame/scorer_history.csv").open()))
    assert rows[0] == ["iteration", "lr", "loss"] and len(rows) - 1 == 60
    assert load_scorer(pipeline / "frame/scorer.json").num_actions == 4


def test_train_frame_zero_lr_equals_init(tmp_path, pipeline):
    assert run("train-frame", "--dataset", pipeline / "data/dataset.jsonl", "--lr", 0, "--iterations", 10,
               "--seed", 4, "--out", tmp_path) == 0
    a, b = load_scorer(tmp_path / "scorer.json"), load_scorer(tmp_path / "scorer_init.json")
    for k, v in a.named_arrays().items():
        np.testing.assert_array_equal(v, b.named_arrays()[k])


def test_train_frame_bad_dataset_exit_3(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"actions": [], "feature_dim": 3}\n{"id": 1\n')
    assert run("train-frame", "--dataset", p, "--seed", 1, "--out", tmp_path) == 3


def test_train_frame_config_error_exit_2(tmp_path, pipeline):
    assert run("train-frame", "--dataset", pipeline / "data/dataset.jsonl", "--momentum", 1.5, "--seed", 1,
               "--out", tmp_path) == 2


def test_phase_two_without_init_exit_4(tmp_path, pipeline):
    assert run("train-hlstm", "--probs", pipeline / "frame/probs.jsonl", "--beta", 0.5, "--seed", 1,
               "--out", tmp_path) == 4
    assert run("train-hlstm", "--probs", pipeline / "frame/probs.jsonl", "--beta", 0.5, "--seed", 1,
               "--init", tmp_path / "missing.json", "--out", tmp_path) == 4
    assert run("train-hlstm", "--probs", pipeline / "frame/probs.jsonl", "--beta", 0.5, "--seed", 1,
               "--force", "--epochs", 1, "--hidden", 4, "--out", tmp_path) == 0


def test_train_hlstm_reproducible_and_history(tmp_path, pipeline):
    args = ["train-hlstm", "--probs", pipeline / "frame/probs.jsonl", "--epochs", 2, "--hidden", 6, "--seed", 1]
    assert run(*args, "--out", tmp_path) == 0
    assert (tmp_path / "hlstm.json").read_bytes() == (pipeline / "h0/hlstm.json").read_bytes()
    assert run("train-hlstm", "--dataset", pipeline / "data/dataset.jsonl", "--frame-ckpt",
               pipeline / "frame/scorer.json", "--beta", 0.6, "--init", pipeline / "h0/hlstm.json", "--epochs", 2,
               "--seed", 1, "--out", tmp_path / "p2") == 0
    with (tmp_path / "p2/hlstm_history.csv").open() as fh:
        for row in csv.DictReader(fh):
            L_N, L_M, L = float(row["L_N"]), float(row["L_M"]), float(row["L"])
            assert L == pytest.approx(0.4 * L_N + 0.6 * L_M, rel=1e-12)
    assert load_hlstm(tmp_path / "p2/hlstm.json")[1]["phase"] == 2


def test_grid_beta(tmp_path, pipeline):
    base = ["grid-beta", "--probs", pipeline / "frame/probs.jsonl", "--epochs", 1, "--seed", 2]
    assert run(*base, "--out", tmp_path / "a") == 4
    base += ["--init", pipeline / "h0/hlstm.json"]
    assert run(*base, "--out", tmp_path / "a") == 0
    assert run(*base, "--out", tmp_path / "b") == 0
    text = (tmp_path / "a/grid.csv").read_text()
    assert text == (tmp_path / "b/grid.csv").read_text()
    assert len(text.strip().splitlines()) == 1 + 5
    assert run(*base, "--betas", 0.7, "--out", tmp_path / "c") == 0
    assert load_hlstm(tmp_path / "c/hlstm_best.json")[1]["beta"] == 0.7


def test_eval_reports_match_library(tmp_path, pipeline):
    assert run("eval", "--probs", pipeline / "frame/probs.jsonl", "--hlstm-ckpt", pipeline / "h0/hlstm.json",
               "--dataset", pipeline / "data/dataset.jsonl", "--out", tmp_path) == 0
    for name in ("frame", "hlstm_carry", "hlstm_reset"):
        assert (tmp_path / f"report_{name}.json").exists() and (tmp_path / f"report_{name}_confusion.csv").exists()
    rep = load_report(tmp_path / "report_hlstm_reset.json")
    seqs = load_prob_sequences(pipeline / "frame/probs.jsonl")
    params, _ = load_hlstm(pipeline / "h0/hlstm.json")
    want = build_report(predict_frames(params, seqs, state="reset"), seqs,
                        load_dataset(pipeline / "data/dataset.jsonl").actions)
    assert rep.mean_frame_acc == want.mean_frame_acc and rep.confusion == want.confusion
    assert rep.shot_acc_avg == want.shot_acc_avg and rep.shot_acc_weighted == want.shot_acc_weighted


def test_eval_zero_model_chance(tmp_path):
    assert run("synth", "--actions", 4, "--dim", 6, "--sequences", 60, "--seed", 5, "--out", tmp_path) == 0
    save_scorer(ScorerParams.zeros(4, 6), tmp_path / "zero.json")
    assert run("eval", "--dataset", tmp_path / "dataset.jsonl", "--frame-ckpt", tmp_path / "zero.json",
               "--out", tmp_path / "ev") == 0
    assert load_report(tmp_path / "ev/report_frame.json").mean_frame_acc == pytest.approx(0.25, abs=0.05)


def test_eval_dimension_mismatch_exit_3(tmp_path, pipeline):
    save_scorer(ScorerParams.zeros(4, 3), tmp_path / "z.json")
    assert run("eval", "--dataset", pipeline / "data/dataset.jsonl", "--frame-ckpt", tmp_path / "z.json",
               "--out", tmp_path) == 3


def test_augment_geom_zero_amplitude(tmp_path):
    boxes = [{"x": 10, "y": 20, "w": 30, "h": 40}] * 4
    (tmp_path / "b.json").write_text(json.dumps(boxes))
    assert run("augment", "geom", "--theta-max", 0, "--frames", 4, "--width", 320, "--height", 240,
               "--primaries", tmp_path / "b.json", "--seed", 1, "--out", tmp_path) == 0
    for rec in json.loads((tmp_path / "geom.json").read_text())["frames"]:
        assert rec["crop"] == {"x": 0.0, "y": 0.0, "w": 320.0, "h": 240.0}
        assert rec["primary"] == {"x": 10.0, "y": 20.0, "w": 30.0, "h": 40.0}


def test_augment_geom_bad_amplitude(tmp_path):
    assert run("augment", "geom", "--theta-max", 80, "--degrees", "--seed", 1, "--out", tmp_path) == 2


def _metas_file(ds, path):
    lines = []
    for seq in ds.sequences:
        labs = seq.shot_labels
        groups = [ActionGroup("a", (labs[0],)), ActionGroup("b", (labs[1],)), ActionGroup("c", tuple(labs[2:]))]
        lines.append(json.dumps(MetaSequence(groups, [("a", "b")], ["c"], {"a": [3]}, seq.id).to_dict()))
    path.write_text("\n".join(lines) + "\n")


def test_augment_temporal(tmp_path):
    assert run("synth", "--sequences", 5, "--shots", 3, 5, "--seed", 3, "--out", tmp_path) == 0
    ds = load_dataset(tmp_path / "dataset.jsonl")
    _metas_file(ds, tmp_path / "m.jsonl")
    base = ["augment", "temporal", "--dataset", tmp_path / "dataset.jsonl", "--metas", tmp_path / "m.jsonl"]
    assert run(*base, "--p-swap", 0, "--p-skip", 0, "--p-add", 0, "--seed", 1, "--out", tmp_path / "id") == 0
    same = load_dataset(tmp_path / "id/augmented.jsonl")
    for s in same.sequences:
        s.provenance = None
    assert datasets_equal(same, ds)
    assert run(*base, "--seed", 9, "--out", tmp_path / "aug") == 0
    out = load_dataset(tmp_path / "aug/augmented.jsonl")
    metas = load_metas(tmp_path / "m.jsonl")
    for s in out.sequences:
        assert tuple(s.shot_labels) in enumerate_all(metas[s.id])[0]


def test_augment_temporal_invalid_meta_exit_3(tmp_path):
    assert run("synth", "--sequences", 1, "--seed", 3, "--out", tmp_path) == 0
    sid = load_dataset(tmp_path / "dataset.jsonl").sequences[0].id
    bad = {"sequence_id": sid, "groups": [{"id": "a", "actions": [0]}], "swappable": [["a", "zz"]]}
    (tmp_path / "m.json").write_text(json.dumps(bad))
    assert run("augment", "temporal", "--dataset", tmp_path / "dataset.jsonl", "--metas", tmp_path / "m.json",
               "--seed", 1, "--out", tmp_path) == 3


def test_gradcheck_command(tmp_path, capsys):
    assert run("gradcheck", "--scorer-instances", 3, "--hlstm-instances", 1, "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "gradcheck.json").read_text())
    assert rep["passed"] and "level1.W_i" in rep["blocks"]
    assert run("gradcheck", "--scorer-instances", 2, "--hlstm-instances", 1, "--inject-fault", "level2.W_g") == 1
    assert "worst: level2.W_g" in capsys.readouterr().out


def test_levenshtein_command(capsys):
    assert run("levenshtein", "--seqs", "1,2,3", "1,3") == 0
    assert capsys.readouterr().out.strip() == "1"


def test_primary_region_command(tmp_path, capsys):
    (tmp_path / "w.json").write_text('[{"x": 100, "y": 200}, {"x": 300, "y": 210}]')
    bits = np.zeros((480, 640), dtype=bool)
    bits[50:60, 150:250] = True
    write_pbm(SkinMask(640, 480, bits), tmp_path / "m.pbm")
    assert run("primary-region", "--width", 640, "--height", 480, "--mask", tmp_path / "m.pbm",
               "--wrists", tmp_path / "w.json") == 0
    assert json.loads(capsys.readouterr().out) == {"x": 100.0, "y": 50.0, "w": 200.0, "h": 160.0}
    assert run("primary-region", "--width", 64, "--height", 48, "--mask", tmp_path / "m.pbm") == 3


def test_console_script_entry_point(tmp_path):
    res = subprocess.run(["egoact", "levenshtein", "--chars", "--seqs", "kitten", "sitting"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "3"
    res = subprocess.run([sys.executable, "-m", "egoact.cli", "levenshtein", "--seqs", "take,open", "open"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "1"


def test_config_supplies_dataset(tmp_path, pipeline):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": str(pipeline / "data/dataset.jsonl"), "seed": 2, "iterations": 5}))
    assert run("train-frame", "--config", cfg, "--out", tmp_path / "o") == 0
    assert len((tmp_path / "o/scorer_history.csv").read_text().splitlines()) == 6
    assert run("train-frame", "--seed", 1, "--out", tmp_path) == 2

import json
import re
import subprocess
import sys
import pytest

from cuefuse.cli import RunConfig, main
from cuefuse.pose_io import (parse_attributes, parse_gloss_vocab, parse_manifest, parse_video_pose,
                             read_scores, write_video_pose)
from cuefuse.sampling import CropPlan, parse_windows

TINY = ["--classes", "4", "--signers", "3", "--clips", "2"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["synth", "--out", str(root), "--workers", "1", *TINY]) == 0
    assert main(["window", "--data", str(root), "--workers", "1"]) == 0
    assert main(["score", "--data", str(root), "--workers", "1"]) == 0
    return root


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestSynth:
    def test_files_parse_back(self, dataset):
        vocab = parse_gloss_vocab((dataset / "glosses.txt").read_bytes())
        manifest = parse_manifest((dataset / "manifest.csv").read_bytes(), vocab)
        attrs = parse_attributes((dataset / "attributes.csv").read_bytes())
        assert len(vocab) == 4 and set(attrs) == set(range(4))
        for e in manifest.entries:
            data = (dataset / "poses" / f"{e.video_id}.json").read_bytes()
            assert write_video_pose(parse_video_pose(data)) == data

    def test_seed_repeat_identical(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "synth", "--out", tmp_path / name, "--seed", 5, *TINY)[0] == 0
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")

    def test_summary_percentages(self, tmp_path, capsys):
        code, out, _ = run(capsys, "--json", "synth", "--out", tmp_path, *TINY)
        doc = json.loads(out)
        assert code == 0 and abs(sum(doc["hand_settings"].values()) - 100) < 0.01
        code, out, _ = run(capsys, "synth", "--out", tmp_path, *TINY)
        assert "Hand spatial sampling settings" in out and "Only right hand moving" in out

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _, err = run(capsys, "synth", "--out", blocker / "sub", *TINY)
        assert code == 2 and "cannot write" in err


class TestWindow:
    def test_all_valid(self, dataset):
        wins = parse_windows((dataset / "windows.csv").read_bytes())
        assert len(wins) == 4 * 3 * 2 and all(w.valid for w in wins.values())

    def test_static_clip_flagged(self, dataset, tmp_path, capsys):
        src = sorted((dataset / "poses").glob("*.json"))[0]
        doc = json.loads(src.read_bytes())
        for fr in doc["frames"]:
            fr["left_hand"] = doc["frames"][0]["left_hand"]
            fr["right_hand"] = doc["frames"][0]["right_hand"]
        (tmp_path / "poses").mkdir()
        (tmp_path / "poses" / "still.json").write_text(json.dumps({**doc, "video_id": "still"}))
        code, out, _ = run(capsys, "window", "--data", tmp_path)
        assert code == 0 and "1 rejected" in out
        assert parse_windows((tmp_path / "windows.csv").read_bytes())["still"].rejection_reason == "no_movement"

    def test_padding_override(self, dataset, tmp_path, capsys):
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(capsys, "window", "--data", dataset, "--output", out_a)[0] == 0
        assert run(capsys, "--t-start", 5, "--t-end", 3, "window", "--data", dataset, "--output", out_b)[0] == 0
        a, b = parse_windows(out_a.read_bytes()), parse_windows(out_b.read_bytes())
        assert all(b[v].start >= a[v].start and b[v].end <= a[v].end for v in a)
        assert any((b[v].start, b[v].end) != (a[v].start, a[v].end) for v in a)

    def test_no_poses(self, tmp_path, capsys):
        code, _, err = run(capsys, "window", "--data", tmp_path)
        assert code == 2 and "no pose files" in err


class TestCrops:
    def test_plans_in_bounds(self, dataset, tmp_path, capsys):
        code, out, _ = run(capsys, "crops", "--data", dataset, "--out", tmp_path, "--cue", "hand", "face")
        assert code == 0
        plans = list((tmp_path / "hand").glob("*.json")) + list((tmp_path / "face").glob("*.json"))
        assert len(plans) == 2 * 24
        for p in plans:
            plan = CropPlan.from_json(p.read_text())
            assert (plan.output_width, plan.output_height) == (112, 112)
            for r in plan.regions:
                assert 0 <= r.x0 and r.x0 + r.width <= 1920 and 0 <= r.y0 and r.y0 + r.height <= 1080


class TestScoreFuseEval:
    def test_score_outputs(self, dataset):
        scores = dataset / "scores"
        for cue in ("body", "hand", "face"):
            m = read_scores((scores / f"{cue}.csv").read_bytes())
            assert m.cue_name == cue and m.kind == "logits" and len(m.rows) == 8
            meta = json.loads((scores / f"{cue}.meta.json").read_text())
            assert meta["val_signer"] == "signer2" and 0 <= meta["val_accuracy"] <= 1
            assert (scores / f"{cue}.val.csv").exists()

    def test_worker_count_does_not_change_scores(self, dataset, tmp_path, capsys):
        assert run(capsys, "score", "--data", dataset, "--out", tmp_path / "w2", "--workers", 2)[0] == 0
        assert snapshot(tmp_path / "w2") == snapshot(dataset / "scores")

    def test_fuse_and_eval(self, dataset, tmp_path, capsys):
        s = dataset / "scores"
        cues = [s / f"{c}.csv" for c in ("body", "hand", "face")]
        assert run(capsys, "fuse", *cues, "--output", tmp_path / "fusion.csv")[0] == 0
        code, out, _ = run(capsys, "--fusion-mode", "weighted", "fuse", *cues,
                           "--output", tmp_path / "weighted.csv", "--name", "weighted_fusion")
        assert code == 0
        fused = read_scores((tmp_path / "fusion.csv").read_bytes())
        assert fused.kind == "probabilities" and len(fused.rows) == 8
        code, out, _ = run(capsys, "eval", "--data", dataset, "--out", tmp_path / "rep", "--no-timestamp",
                           *cues, tmp_path / "fusion.csv", tmp_path / "weighted.csv")
        assert code == 0
        header = out.splitlines()[0].split()
        assert header == ["Setting", "Acc@1", "Acc@5"]
        rep = json.loads((tmp_path / "rep" / "fusion.json").read_text())
        assert rep["top_n"]["4"] == 1.0 and "generated_at" not in rep
        assert (tmp_path / "rep" / "summary.txt").exists()
        assert (tmp_path / "rep" / "hand.topn.csv").read_text().startswith("N,accuracy\n")

    def test_eval_idempotent_and_timestamp(self, dataset, tmp_path, capsys):
        f = dataset / "scores" / "hand.csv"
        for name in ("a", "b"):
            assert run(capsys, "eval", "--data", dataset, "--out", tmp_path / name, "--no-timestamp", f)[0] == 0
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")
        assert run(capsys, "eval", "--data", dataset, "--out", tmp_path / "c", f)[0] == 0
        assert "generated_at" in json.loads((tmp_path / "c" / "hand.json").read_text())

    def test_vocab_mismatch(self, dataset, tmp_path, capsys):
        other = tmp_path / "odd.csv"
        other.write_text("# cue=odd kind=logits\nvideo_id,s0,s1\nv,0.1,0.2\n")
        code, _, err = run(capsys, "fuse", dataset / "scores" / "hand.csv", other)
        assert code == 2 and "SchemaError" not in err and "vocabulary" in err

    def test_weighted_missing_weight(self, dataset, tmp_path, capsys):
        for cue in ("hand", "body"):
            (tmp_path / f"{cue}.csv").write_bytes((dataset / "scores" / f"{cue}.csv").read_bytes())
        code, _, err = run(capsys, "--json", "--fusion-mode", "weighted", "--weights", "hand=0.9",
                           "fuse", tmp_path / "hand.csv", tmp_path / "body.csv")
        assert code == 1
        doc = json.loads(err)
        assert doc["error"] == "ConfigError" and doc["exit_code"] == 1

    def test_explicit_weights(self, dataset, tmp_path, capsys):
        s = dataset / "scores"
        code, out, _ = run(capsys, "--json", "--fusion-mode", "weighted", "--weights", "hand=3,body=1", "--weights", "face=0",
                           "fuse", s / "hand.csv", s / "body.csv", s / "face.csv", "--output", tmp_path / "f.csv")
        assert code == 0 and json.loads(out)["weights"] == {"hand": 0.75, "body": 0.25, "face": 0.0}


class TestAblate:
    def test_reference_numbers(self, capsys):
        code, out, _ = run(capsys, "ablate", "--full", "93.88", "--pair", "face=91.80", "hand=84.66", "body=88.70")
        assert code == 0
        effects = dict(re.findall(r"(body|hand|face)\s+(\d+\.\d\d)\s*$", out, re.M))
        assert effects == {"face": "2.08", "hand": "9.22", "body": "5.18"}

    def test_needs_three_files(self, dataset, capsys):
        s = dataset / "scores"
        code, _, err = run(capsys, "ablate", "--data", dataset, s / "hand.csv", s / "body.csv")
        assert code == 1 and "at least 3" in err

    def test_from_scores(self, dataset, capsys):
        s = dataset / "scores"
        code, out, _ = run(capsys, "--json", "ablate", "--data", dataset, *(s / f"{c}.csv" for c in ("body", "hand", "face")))
        doc = json.loads(out)
        assert code == 0 and {r["excluded_cue"] for r in doc["rows"]} == {"body", "hand", "face"}
        for r in doc["rows"]:
            assert r["effect"] == doc["full_fusion_accuracy"] - r["pair_accuracy"]


class TestConfigAndErrors:
    def test_config_round_trip(self):
        cfg = RunConfig(data_dir="d", temperature=2.0)
        assert RunConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()

    def test_config_file_used(self, tmp_path, capsys):
        cfg = RunConfig(data_dir=str(tmp_path / "cfgdata"))
        cfg.synth = type(cfg.synth)(n_classes=3, n_signers=2, clips_per_class_per_signer=1)
        path = tmp_path / "run.json"
        path.write_text(cfg.to_json())
        assert run(capsys, "--config", path, "synth")[0] == 0
        assert len(list((tmp_path / "cfgdata" / "poses").glob("*.json"))) == 6

    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"sampling": {"t_start": -1}}')
        assert run(capsys, "--config", path, "window")[0] == 1
        path.write_text("{nope")
        assert run(capsys, "--config", path, "window")[0] == 1
        assert run(capsys, "--config", tmp_path / "missing.json", "window")[0] == 1

    def test_usage_errors_exit_1(self, capsys):
        assert run(capsys, "frobnicate")[0] == 1
        assert run(capsys, "--weights", "oops", "fuse", "x.csv")[0] == 1
        code, _, err = run(capsys, "--json", "--workers", "0", "window")
        assert code == 1 and json.loads(err)["exit_code"] == 1

    def test_data_error_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("video_id,s0\nv,abc\n")
        code, _, err = run(capsys, "--json", "fuse", bad)
        doc = json.loads(err)
        assert code == 2 and doc["error"] == "ParseError" and "line 2" in doc["message"]

    def test_global_flags_after_subcommand(self, tmp_path, capsys):
        code, out, _ = run(capsys, "synth", "--out", tmp_path, "--json", *TINY)
        assert code == 0 and json.loads(out)["clips"] == 24

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "cuefuse", "ablate", "--full", "50", "--pair", "a=40", "b=45", "c=30"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "10.00" in proc.stdout

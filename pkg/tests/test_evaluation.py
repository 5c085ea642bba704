import json

import numpy as np
import pytest

from cuefuse.errors import ConfigError, EmptyError, SchemaError
from cuefuse.evaluation import (Prediction, ablation_effects, accuracy, attribute_accuracy,
                                attribute_table, confusion_matrix, evaluate, per_gloss_f1, pct,
                                predictions_from_scores, summary_table, topn_curve)
from oracles import brute_force
from cuefuse.pose_io import Manifest, ManifestEntry, ScoreMatrix


def pred_with_rank(truth, rank, c, vid="v"):
    """Prediction whose true class sits at 1-based ``rank``."""
    others = [g for g in range(c) if g != truth]
    ranking = others[: rank - 1] + [truth] + others[rank - 1:]
    return Prediction(vid, ranking, truth)


class TestAccuracy:
    def test_all_correct(self):
        preds = [pred_with_rank(g, 1, 5) for g in range(5)]
        assert accuracy(preds, 1) == 1.0

    def test_n_equals_c(self):
        preds = [pred_with_rank(g % 4, 1 + g % 4, 4) for g in range(8)]
        assert accuracy(preds, 4) == 1.0

    def test_ranks_1_2_5(self):
        preds = [pred_with_rank(0, 1, 6), pred_with_rank(1, 2, 6), pred_with_rank(2, 5, 6)]
        assert accuracy(preds, 2) == 2 / 3

    def test_empty(self):
        with pytest.raises(EmptyError):
            accuracy([], 1)

    def test_n_out_of_range(self):
        with pytest.raises(ValueError):
            accuracy([pred_with_rank(0, 1, 3)], 4)


class TestTopN:
    def test_rank_three(self):
        curve = topn_curve([pred_with_rank(1, 3, 5)])
        assert curve == {1: 0.0, 2: 0.0, 3: 1.0, 4: 1.0, 5: 1.0}

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        c = 12
        preds = [Prediction(f"v{i}", rng.permutation(c), int(rng.integers(c))) for i in range(50)]
        curve = topn_curve(preds)
        for n in range(1, c + 1):
            assert curve[n] == sum(p.true_gloss in p.ranking[:n] for p in preds) / 50
        assert curve[c] == 1.0
        assert all(curve[n] <= curve[n + 1] for n in range(1, c))


class TestF1:
    def test_perfect(self):
        preds = [pred_with_rank(g, 1, 4) for g in (0, 1, 1, 3)]
        assert per_gloss_f1(preds) == {0: 1.0, 1: 1.0, 3: 1.0}

    def test_two_thirds(self):
        # gloss 0: TP 1 (a), FP 1 (b predicted 0), FN 0
        preds = [Prediction("a", [0, 1], 0), Prediction("b", [0, 1], 1)]
        f1 = per_gloss_f1(preds)
        assert f1[0] == 2 / 3
        assert f1[1] == 0.0

    def test_never_predicted(self):
        preds = [Prediction(f"v{i}", [1, 0, 2], 0) for i in range(4)]
        assert per_gloss_f1(preds)[0] == 0.0

    def test_absent_gloss_not_reported(self):
        preds = [Prediction("a", [0, 1, 2], 0)]
        assert 2 not in per_gloss_f1(preds)


class TestAttributes:
    ATTRS = {0: frozenset({"one_handed"}), 1: frozenset({"two_handed"})}

    def test_enumeration(self):
        preds = [Prediction("a", [0, 1], 0), Prediction("b", [1, 0], 0),
                 Prediction("c", [1, 0], 1), Prediction("d", [1, 0], 1)]
        acc = attribute_accuracy(preds, self.ATTRS)
        assert acc["one_handed"] == 0.5 and acc["two_handed"] == 1.0
        assert acc["all"] == 0.75

    def test_all_correct(self):
        preds = [Prediction("a", [0, 1], 0), Prediction("c", [1, 0], 1)]
        assert set(attribute_accuracy(preds, self.ATTRS).values()) == {1.0}

    def test_missing_row(self):
        with pytest.raises(ConfigError, match="gloss 2"):
            attribute_accuracy([Prediction("a", [2, 0, 1], 2)], self.ATTRS)


class TestAblation:
    def test_reference_effects(self):
        t = ablation_effects(0.9388, {"face": 0.9180, "hand": 0.8466, "body": 0.8870})
        effects = {r.excluded_cue: pct(r.effect) for r in t.rows}
        assert effects == {"face": "2.08", "hand": "9.22", "body": "5.18"}

    def test_zero_effect(self):
        t = ablation_effects(0.5, {"x": 0.5})
        assert t.rows[0].effect == 0.0

    def test_range_check(self):
        with pytest.raises(ValueError):
            ablation_effects(1.2, {"x": 0.5})

    def test_renderings(self):
        t = ablation_effects(0.9388, {"face": 0.9180, "hand": 0.8466, "body": 0.8870}, ["body", "hand", "face"])
        text = t.to_text()
        assert "body + hand" in text and "2.08" in text and "93.88" in text
        doc = json.loads(t.to_json())
        assert doc["full_fusion_accuracy"] == 0.9388 and len(doc["rows"]) == 3


class TestReports:
    def test_evaluate_and_render(self):
        rng = np.random.default_rng(2)
        preds = [Prediction(f"v{i}", rng.permutation(6), int(rng.integers(6))) for i in range(30)]
        attrs = {g: frozenset({"one_handed" if g % 2 else "two_handed"}) for g in range(6)}
        rep = evaluate("hand", preds, attrs)
        assert rep.top_n[6] == 1.0 and rep.n_samples == 30
        doc = json.loads(rep.to_json())
        assert doc["name"] == "hand" and "generated_at" not in doc
        assert rep.topn_csv().splitlines()[0] == "N,accuracy"
        assert "Acc@1" in summary_table([rep]) and "one_handed" in attribute_table([rep])

    def test_confusion(self):
        preds = [Prediction("a", [1, 0], 0), Prediction("b", [1, 0], 1)]
        assert confusion_matrix(preds, 2).tolist() == [[0, 1], [0, 1]]

    def test_predictions_from_scores(self):
        m = Manifest((ManifestEntry("a", "s1", 0, "test"), ManifestEntry("b", "s1", 1, "train")), ("x", "y"))
        scores = ScoreMatrix("hand", ("x", "y"), {"a": [0.2, 0.8], "b": [1.0, 0.0]})
        preds = predictions_from_scores(scores, m, "test")
        assert preds == [Prediction("a", (1, 0), 0)]
        generic = ScoreMatrix("hand", ("s0", "s1"), {"a": [0.9, 0.1]})
        assert predictions_from_scores(generic, m)[0].top1 == 0
        with pytest.raises(SchemaError):
            predictions_from_scores(ScoreMatrix("hand", ("p", "q", "r"), {"a": [1, 2, 3]}), m)
        with pytest.raises(SchemaError):
            predictions_from_scores(ScoreMatrix("hand", ("x", "z"), {"a": [1, 2]}), m)


def test_metric_oracles_random_sets():
    rng = np.random.default_rng(123)
    names = ["one_handed", "two_handed", "circular", "repetitive", "mono_morphemic", "compound"]
    for _ in range(100):
        c = int(rng.integers(2, 15))
        preds = [Prediction(f"v{i}", rng.permutation(c), int(rng.integers(c)))
                 for i in range(int(rng.integers(1, 60)))]
        attrs = {g: frozenset({names[int(rng.integers(2))], names[2 + int(rng.integers(2))],
                               names[4 + int(rng.integers(2))]}) for g in range(c)}
        top1, f1, attr = brute_force(preds, attrs)
        assert accuracy(preds, 1) == float(top1)
        assert per_gloss_f1(preds) == {g: float(v) for g, v in f1.items()}
        got = attribute_accuracy(preds, attrs)
        assert got.pop("all") == float(top1)
        assert got == {a: float(v) for a, v in attr.items()}

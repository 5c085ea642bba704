"""Accuracy, Top-N curves, per-gloss F1, attribute-wise accuracy and ablation tables."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, EmptyError, SchemaError
from .fusion import predict
from .pose_io import ATTRIBUTES, Manifest, ScoreMatrix


@dataclass(frozen=True)
class Prediction:
    video_id: str
    ranking: tuple[int, ...]
    true_gloss: int

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(int(r) for r in self.ranking))

    @property
    def top1(self) -> int:
        return self.ranking[0]

    def rank_of_truth(self) -> int:
        """1-based rank of the true gloss."""
        return self.ranking.index(self.true_gloss) + 1


def predictions_from_scores(scores: ScoreMatrix, manifest: Manifest, split: str = "test") -> list[Prediction]:
    """Rank every scored video of ``split`` against its manifest label."""
    if scores.num_classes != len(manifest.gloss_vocab):
        raise SchemaError(f"{scores.cue_name}: {scores.num_classes} classes, manifest has {len(manifest.gloss_vocab)}")
    placeholder = tuple(f"s{i}" for i in range(scores.num_classes))
    if scores.gloss_vocab not in (manifest.gloss_vocab, placeholder):
        raise SchemaError(f"{scores.cue_name}: gloss vocabulary differs from the manifest")
    preds = []
    for e in manifest.entries:
        if e.split != split or e.video_id not in scores.rows:
            continue
        _, ranking = predict(scores.rows[e.video_id])
        preds.append(Prediction(e.video_id, ranking, e.gloss_id))
    return preds


def _ranks(preds):
    if not preds:
        raise EmptyError("no predictions")
    return np.array([p.rank_of_truth() for p in preds])


def accuracy(preds: Sequence[Prediction], n: int = 1) -> float:
    """Fraction of predictions whose top ``n`` ranks contain the true gloss."""
    ranks = _ranks(preds)
    c = len(preds[0].ranking)
    if not 1 <= n <= c:
        raise ValueError(f"n must be in [1, {c}], got {n}")
    return int((ranks <= n).sum()) / len(preds)


def topn_curve(preds: Sequence[Prediction], n_max: int | None = None) -> dict[int, float]:
    ranks = _ranks(preds)
    c = len(preds[0].ranking)
    n_max = c if n_max is None else n_max
    if not 1 <= n_max <= c:
        raise ValueError(f"n_max must be in [1, {c}], got {n_max}")
    hits = np.bincount(ranks, minlength=c + 1).cumsum()
    return {n: int(hits[n]) / len(preds) for n in range(1, n_max + 1)}


def per_gloss_f1(preds: Sequence[Prediction]) -> dict[int, float]:
    """Top-1 F1 for every gloss seen as a truth or a prediction.

    Computed as 2TP / (2TP + FP + FN), which equals 2PR/(P+R) and is 0 when TP = 0.
    """
    tp, fp, fn = Counter(), Counter(), Counter()
    for p in preds:
        if p.top1 == p.true_gloss:
            tp[p.true_gloss] += 1
        else:
            fp[p.top1] += 1
            fn[p.true_gloss] += 1
    glosses = set(tp) | set(fp) | set(fn)
    return {g: 2 * tp[g] / (2 * tp[g] + fp[g] + fn[g]) for g in sorted(glosses)}


def attribute_accuracy(preds: Sequence[Prediction], attrs: Mapping[int, frozenset],
                       include_all: bool = True) -> dict[str, float]:
    """Top-1 accuracy restricted to samples whose true gloss carries each attribute.

    Attributes with no test samples are left out. ``"all"`` is the global top-1.
    """
    if not preds:
        raise EmptyError("no predictions")
    hits, totals = Counter(), Counter()
    for p in preds:
        if p.true_gloss not in attrs:
            raise ConfigError(f"no attribute row for gloss {p.true_gloss}")
        ok = p.top1 == p.true_gloss
        for a in attrs[p.true_gloss]:
            totals[a] += 1
            hits[a] += ok
    out = {a: hits[a] / totals[a] for a in ATTRIBUTES if totals[a]}
    if include_all:
        out["all"] = sum(p.top1 == p.true_gloss for p in preds) / len(preds)
    return out


def confusion_matrix(preds: Sequence[Prediction], num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p in preds:
        cm[p.true_gloss, p.top1] += 1
    return cm


# -- ablation ---------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    excluded_cue: str
    remaining: tuple[str, ...]
    pair_accuracy: float
    effect: float


@dataclass(frozen=True)
class AblationTable:
    full_fusion_accuracy: float
    rows: tuple[AblationRow, ...]

    def to_text(self) -> str:
        lines = [f"{'Setting':<22}{'Accuracy':>10}  {'Excluded Cue':<14}{'Effect (%)':>10}"]
        for r in self.rows:
            setting = " + ".join(r.remaining) or "-"
            lines.append(f"{setting:<22}{pct(r.pair_accuracy):>10}  {r.excluded_cue:<14}{pct(r.effect):>10}")
        lines.append(f"{'Full fusion':<22}{pct(self.full_fusion_accuracy):>10}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"full_fusion_accuracy": self.full_fusion_accuracy,
                           "rows": [asdict(r) for r in self.rows]}, indent=2)


def ablation_effects(full_fusion_acc: float, pair_accs: Mapping[str, float],
                     cues: Sequence[str] | None = None) -> AblationTable:
    """Effect of each cue = full-fusion accuracy minus accuracy of the fusion without it."""
    for v in (full_fusion_acc, *pair_accs.values()):
        if not 0 <= v <= 1:
            raise ValueError(f"accuracy {v} outside [0, 1]")
    cues = list(cues) if cues is not None else list(pair_accs)
    rows = tuple(
        AblationRow(ex, tuple(c for c in cues if c != ex), acc, full_fusion_acc - acc)
        for ex, acc in pair_accs.items()
    )
    return AblationTable(full_fusion_acc, rows)


# -- report -----------------------------------------------------------------

def pct(fraction: float) -> str:
    return f"{100 * fraction:.2f}"


@dataclass
class EvalReport:
    name: str
    n_samples: int
    top_n: dict[int, float]
    per_gloss_f1: dict[int, float]
    attribute_acc: dict[str, float] = field(default_factory=dict)
    generated_at: str | None = None

    @property
    def top1(self) -> float:
        return self.top_n[1]

    @property
    def top5(self) -> float | None:
        return self.top_n.get(5)

    def to_json(self) -> str:
        doc = {"name": self.name, "n_samples": self.n_samples,
               "top_n": {str(k): v for k, v in self.top_n.items()},
               "per_gloss_f1": {str(k): v for k, v in self.per_gloss_f1.items()},
               "attribute_acc": self.attribute_acc}
        if self.generated_at is not None:
            doc["generated_at"] = self.generated_at
        return json.dumps(doc, indent=2)

    def topn_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "accuracy"])
        for n, acc in self.top_n.items():
            w.writerow([n, repr(acc)])
        return buf.getvalue()


def evaluate(name: str, preds: Sequence[Prediction], attrs: Mapping[int, frozenset] | None = None,
             n_max: int | None = None) -> EvalReport:
    return EvalReport(
        name=name,
        n_samples=len(preds),
        top_n=topn_curve(preds, n_max),
        per_gloss_f1=per_gloss_f1(preds),
        attribute_acc=attribute_accuracy(preds, attrs) if attrs else {},
    )


def summary_table(reports: Sequence[EvalReport]) -> str:
    """Setting / Acc@1 / Acc@5 rows, one per report."""
    lines = [f"{'Setting':<18}{'Acc@1':>8}{'Acc@5':>8}"]
    for r in reports:
        top5 = pct(r.top5) if r.top5 is not None else "-"
        lines.append(f"{r.name:<18}{pct(r.top1):>8}{top5:>8}")
    return "\n".join(lines) + "\n"


def attribute_table(reports: Sequence[EvalReport]) -> str:
    cols = [a for a in (*ATTRIBUTES, "all") if any(a in r.attribute_acc for r in reports)]
    lines = [f"{'':<18}" + "".join(f"{c[:10]:>12}" for c in cols)]
    for r in reports:
        cells = "".join(f"{pct(r.attribute_acc[c]) if c in r.attribute_acc else '-':>12}" for c in cols)
        lines.append(f"{r.name:<18}{cells}")
    return "\n".join(lines) + "\n"

"""Score-level fusion of per-cue classifier outputs.

Two modes: the plain mean of the cue softmax outputs, and a convex
combination whose weights are proportional to each cue model's validation
accuracy.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, SchemaError, ShapeError, WeightError
from .pose_io import ScoreMatrix

FUSION_MODES = ("mean", "weighted")


@dataclass(frozen=True, eq=False)
class CueScores:
    cue_name: str
    scores: np.ndarray
    is_probability: bool = False

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ShapeError(f"{self.cue_name}: scores must be a non-empty vector")
        if self.is_probability and ((s < 0).any() or abs(s.sum() - 1.0) > 1e-6):
            raise ShapeError(f"{self.cue_name}: not a probability vector")
        object.__setattr__(self, "scores", s)

    def probabilities(self) -> np.ndarray:
        return self.scores if self.is_probability else softmax(self.scores)


@dataclass(frozen=True)
class FusionSpec:
    mode: str = "mean"
    cues: tuple[str, ...] = ()
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ConfigError(f"fusion mode must be one of {FUSION_MODES}, got {self.mode!r}")
        object.__setattr__(self, "cues", tuple(self.cues))
        object.__setattr__(self, "weights", {k: float(v) for k, v in self.weights.items()})
        if any(w < 0 for w in self.weights.values()):
            raise WeightError("weights must be non-negative")

    def weight_vector(self, cue_names: Sequence[str]) -> np.ndarray:
        missing = [c for c in cue_names if c not in self.weights]
        if missing:
            raise ConfigError(f"no fusion weight for cue(s) {missing}")
        w = np.array([self.weights[c] for c in cue_names], dtype=np.float64)
        if not w.sum() > 0:
            raise WeightError("fusion weights are all zero")
        return w / w.sum()

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode, "cues": list(self.cues), "weights": self.weights})

    @classmethod
    def from_json(cls, text) -> "FusionSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"fusion spec: {exc}") from None
        return cls(doc.get("mode", "mean"), doc.get("cues", ()), doc.get("weights", {}))


def softmax(logits, axis=-1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[axis] == 0:
        raise ShapeError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _stack(cues: Sequence[CueScores]) -> np.ndarray:
    if not cues:
        raise ShapeError("need at least one cue")
    sizes = {c.scores.size for c in cues}
    if len(sizes) != 1:
        raise ShapeError(f"cue score lengths differ: {sorted(sizes)}")
    return np.stack([c.probabilities() for c in cues])


def fuse_mean(cues: Sequence[CueScores]) -> np.ndarray:
    return _stack(cues).mean(axis=0)


def fuse_weighted(cues: Sequence[CueScores], spec: FusionSpec) -> np.ndarray:
    w = spec.weight_vector([c.cue_name for c in cues])
    return w @ _stack(cues)


def fuse(cues: Sequence[CueScores], spec: FusionSpec) -> np.ndarray:
    if spec.mode == "weighted":
        return fuse_weighted(cues, spec)
    return fuse_mean(cues)


def predict(scores) -> tuple[int, list[int]]:
    """Top class and full descending ranking; ties go to the lower class index."""
    s = np.asarray(scores, dtype=np.float64)
    ranking = np.argsort(-s, kind="stable")
    return int(ranking[0]), ranking.tolist()


def fuse_matrices(matrices: Sequence[ScoreMatrix], spec: FusionSpec,
                  name: str = "fusion") -> ScoreMatrix:
    """Fuse whole score files row by row over the videos they all share.

    Cue order follows ``spec.cues`` when given, else the order of ``matrices``.
    """
    if not matrices:
        raise ShapeError("need at least one score matrix")
    by_name = {m.cue_name: m for m in matrices}
    if spec.cues:
        missing = [c for c in spec.cues if c not in by_name]
        if missing:
            raise ConfigError(f"no scores for cue(s) {missing}")
        matrices = [by_name[c] for c in spec.cues]
    vocab = matrices[0].gloss_vocab
    for m in matrices[1:]:
        if m.gloss_vocab != vocab:
            raise SchemaError(f"vocabulary of {m.cue_name!r} differs from {matrices[0].cue_name!r}")
    shared = set(matrices[0].rows)
    for m in matrices[1:]:
        shared &= set(m.rows)
    ids = [v for v in matrices[0].rows if v in shared]

    probs = np.stack([
        m.matrix(ids) if m.kind == "probabilities" else softmax(m.matrix(ids))
        for m in matrices
    ]) if ids else np.zeros((len(matrices), 0, len(vocab)))
    if spec.mode == "weighted":
        w = spec.weight_vector([m.cue_name for m in matrices])
        fused = np.tensordot(w, probs, axes=1)
    else:
        fused = probs.mean(axis=0)
    return ScoreMatrix(name, vocab, dict(zip(ids, fused)), "probabilities")

"""In-memory end-to-end run: windows -> cue features -> centroid scores -> fusion -> reports.

The CLI drives the same steps through files; this module is what it calls
per stage, and what the synthetic benchmark uses directly.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Iterable, Sequence

from .errors import TrainError
from .evaluation import EvalReport, accuracy, evaluate, predictions_from_scores
from .fusion import FusionSpec, fuse_matrices
from .pose_io import Manifest, ScoreMatrix, VideoPose
from .sampling import ActiveWindow, SamplingConfig, active_window
from .toy import CUES, SynthSpec, extract_features, fit_centroids, generate_synthetic, score_matrix

log = logging.getLogger(__name__)


def default_workers() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Ordered map; results never depend on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def compute_windows(poses: Sequence[VideoPose], cfg: SamplingConfig, workers: int = 1) -> dict[str, ActiveWindow]:
    wins = parallel_map(partial(active_window, cfg=cfg), poses, workers)
    return {p.video_id: w for p, w in zip(poses, wins)}


def _features_one(pose, window, cue, cfg):
    return extract_features(pose, window, cue, cfg)


def _cue_features(args):
    pose, window, cues, cfg = args
    return [_features_one(pose, window, c, cfg) for c in cues]


def compute_features(poses, windows, cues, cfg, workers=1):
    """``{cue: [CueFeatures]}`` for every clip with a valid window."""
    usable = [p for p in poses if windows[p.video_id].valid]
    per_clip = parallel_map(_cue_features, [(p, windows[p.video_id], tuple(cues), cfg) for p in usable], workers)
    return {c: [feats[i] for feats in per_clip] for i, c in enumerate(cues)}


def validation_signer(manifest: Manifest) -> str | None:
    """Training signer held out for fusion weights when the manifest has no val split."""
    if manifest.split("val"):
        return None
    signers = sorted({e.signer_id for e in manifest.split("train")})
    if len(signers) < 2:
        return None
    return signers[-1]


@dataclass
class CueResult:
    cue: str
    test_scores: ScoreMatrix
    val_scores: ScoreMatrix | None
    val_accuracy: float | None


def score_cue(cue: str, features, manifest: Manifest, temperature: float = 1.0) -> CueResult:
    """Fit one cue model; score the test split and a validation set.

    With an explicit val split the model is fitted on train only. Otherwise
    one training signer is held out to obtain validation scores, and the
    test scores come from a model refitted on every training signer.
    """
    vocab = manifest.gloss_vocab
    held = validation_signer(manifest)
    if manifest.split("val"):
        model = fit_centroids(features, manifest, "train", temperature)
        val_ids = {e.video_id for e in manifest.split("val")}
        val_model = model
    elif held is not None:
        val_ids = {e.video_id for e in manifest.split("train") if e.signer_id == held}
        try:
            val_model = fit_centroids(features, manifest, "train", temperature, exclude_signers=[held])
        except TrainError:
            val_model, val_ids = None, set()
        model = fit_centroids(features, manifest, "train", temperature)
    else:
        model = fit_centroids(features, manifest, "train", temperature)
        val_model, val_ids = None, set()
    test_ids = {e.video_id for e in manifest.split("test")}
    test = score_matrix(model, [f for f in features if f.video_id in test_ids], vocab)
    val = val_acc = None
    if val_model is not None and val_ids:
        val = score_matrix(val_model, [f for f in features if f.video_id in val_ids], vocab)
        split = "val" if manifest.split("val") else "train"
        preds = predictions_from_scores(val, manifest, split)
        val_acc = accuracy(preds, 1) if preds else None
    log.info("cue %s: %d test rows, val accuracy %s (held-out signer %s)",
             cue, len(test.rows), val_acc, held)
    return CueResult(cue, test, val, val_acc)


@dataclass
class BenchmarkResult:
    windows: dict
    cues: dict  # cue -> CueResult
    fused: dict  # mode -> ScoreMatrix
    reports: dict  # name -> EvalReport

    def top1(self, name: str) -> float:
        return self.reports[name].top1


def run_benchmark(spec: SynthSpec = SynthSpec(), cfg: SamplingConfig = SamplingConfig(),
                  cues: Iterable[str] = CUES, workers: int = 1, temperature: float = 1.0) -> BenchmarkResult:
    poses, manifest, attrs = generate_synthetic(spec)
    cues = list(cues)
    windows = compute_windows(poses, cfg, workers)
    feats = compute_features(poses, windows, cues, cfg, workers)
    results = {c: score_cue(c, feats[c], manifest, temperature) for c in cues}
    weights = {c: r.val_accuracy or 0.0 for c, r in results.items()}
    matrices = [results[c].test_scores for c in cues]
    fused = {
        "fusion": fuse_matrices(matrices, FusionSpec("mean", cues), "fusion"),
        "weighted_fusion": fuse_matrices(matrices, FusionSpec("weighted", cues, weights), "weighted_fusion"),
    }
    reports: dict[str, EvalReport] = {}
    for name, m in [*((c, results[c].test_scores) for c in cues), *fused.items()]:
        reports[name] = evaluate(name, predictions_from_scores(m, manifest, "test"), attrs)
    return BenchmarkResult(windows, results, fused, reports)

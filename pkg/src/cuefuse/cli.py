"""``cuefuse`` command line: synth | window | crops | score | fuse | eval | ablate.

Data directory layout shared by the subcommands::

    DATA/poses/<video_id>.json   one pose document per clip
    DATA/manifest.csv            video_id,signer_id,gloss_id,split
    DATA/glosses.txt             gloss names, line number = gloss id
    DATA/attributes.csv          optional per-gloss attribute flags
    DATA/windows.csv             written by ``window``

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import ConfigError, CuefuseError, IoError
from .evaluation import (ablation_effects, accuracy, attribute_table, evaluate,
                         predictions_from_scores, summary_table)
from .fusion import FUSION_MODES, FusionSpec, fuse_matrices
from .pipeline import (compute_features, compute_windows, default_workers, parallel_map,
                       score_cue, validation_signer)
from .pose_io import (Manifest, ScoreMatrix, VideoPose, parse_attributes, parse_gloss_vocab,
                      parse_manifest, parse_video_pose, read_scores, write_attributes,
                      write_gloss_vocab, write_manifest, write_scores, write_video_pose)
from .sampling import (HAND_MODES, SamplingConfig, detect_moving_hands,
                       parse_windows, plan_body_crop, plan_face_crop, plan_hand_crop,
                       uniform_sample, write_windows)
from .toy import CUES, SynthSpec, generate_synthetic

log = logging.getLogger("cuefuse")


# -- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    """Everything a run needs; JSON file form plus flat flag overrides."""

    data_dir: str = "data"
    out_dir: str | None = None
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    fusion: FusionSpec = field(default_factory=FusionSpec)
    synth: SynthSpec = field(default_factory=SynthSpec)
    temperature: float = 1.0
    report_formats: tuple[str, ...] = ("json", "text", "csv")

    def to_dict(self) -> dict:
        return {
            "data_dir": self.data_dir,
            "out_dir": self.out_dir,
            "sampling": asdict(self.sampling),
            "fusion": json.loads(self.fusion.to_json()),
            "synth": self.synth.to_dict(),
            "temperature": self.temperature,
            "report_formats": list(self.report_formats),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        try:
            fusion = doc.get("fusion", {})
            return cls(
                data_dir=doc.get("data_dir", "data"),
                out_dir=doc.get("out_dir"),
                sampling=SamplingConfig(**doc.get("sampling", {})),
                fusion=FusionSpec(fusion.get("mode", "mean"), fusion.get("cues", ()), fusion.get("weights", {})),
                synth=SynthSpec.from_dict(doc.get("synth", {})),
                temperature=float(doc.get("temperature", 1.0)),
                report_formats=tuple(doc.get("report_formats", ("json", "text", "csv"))),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)


def _parse_weights(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in (part for chunk in items for part in chunk.split(",") if part):
        name, sep, val = item.partition("=")
        try:
            if not sep or not name:
                raise ValueError
            out[name] = float(val)
        except ValueError:
            raise ConfigError(f"expected name=value, got {item!r}") from None
    return out


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = RunConfig.from_json(_read_text(Path(args.config), ConfigError))
    if getattr(args, "data", None):
        cfg.data_dir = args.data
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    overrides = {k: v for k, v in (("t_start", args.t_start), ("t_end", args.t_end),
                                   ("motion_threshold", args.motion_threshold)) if v is not None}
    if overrides:
        try:
            cfg.sampling = replace(cfg.sampling, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.fusion_mode or args.weights:
        weights = dict(cfg.fusion.weights)
        weights.update(_parse_weights(args.weights or ()))
        cfg.fusion = FusionSpec(args.fusion_mode or cfg.fusion.mode, cfg.fusion.cues, weights)
    if args.seed is not None:
        cfg.synth = replace(cfg.synth, seed=args.seed)
    return cfg


# -- file helpers -----------------------------------------------------------

def _read_bytes(path: Path, missing=IoError) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise missing(f"cannot read {path}: {exc.strerror or exc}") from None


def _read_text(path: Path, missing=IoError) -> str:
    return _read_bytes(path, missing).decode("utf-8")


def _write(path: Path, data: bytes | str) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


def load_manifest(data_dir: Path) -> Manifest:
    vocab = parse_gloss_vocab(_read_bytes(data_dir / "glosses.txt"))
    return parse_manifest(_read_bytes(data_dir / "manifest.csv"), vocab)


def load_attributes(data_dir: Path):
    path = data_dir / "attributes.csv"
    return parse_attributes(_read_bytes(path)) if path.exists() else None


def _load_pose(path):
    try:
        return parse_video_pose(Path(path).read_bytes())
    except CuefuseError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def pose_paths(data_dir: Path) -> list[Path]:
    paths = sorted((data_dir / "poses").glob("*.json"))
    if not paths:
        raise IoError(f"no pose files found in {data_dir / 'poses'}")
    return paths


def load_poses(paths: Sequence[Path], workers: int) -> list[VideoPose]:
    for p in paths:
        if not p.exists():
            raise IoError(f"missing pose file {p}")
    return parallel_map(_load_pose, [str(p) for p in paths], workers)


def manifest_poses(data_dir: Path, manifest: Manifest, workers: int) -> list[VideoPose]:
    return load_poses([data_dir / "poses" / f"{e.video_id}.json" for e in manifest.entries], workers)


def _emit(args, text: str, doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n" if args.json else text)


def _timestamp(args) -> str | None:
    if args.no_timestamp:
        return None
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- subcommands ------------------------------------------------------------

def hand_distribution(poses: Sequence[VideoPose], cfg: SamplingConfig) -> dict[str, float]:
    """Share of clips per moving-hand category, in percent."""
    counts = {"both": 0, "left": 0, "right": 0, "none": 0}
    for p in poses:
        try:
            counts[detect_moving_hands(p, cfg).category] += 1
        except CuefuseError:
            counts["none"] += 1
    total = max(1, len(poses))
    return {k: 100.0 * v / total for k, v in counts.items()}


def cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir or cfg.data_dir)
    poses, manifest, attrs = generate_synthetic(cfg.synth)
    for p in poses:
        _write(out / "poses" / f"{p.video_id}.json", write_video_pose(p))
    _write(out / "manifest.csv", write_manifest(manifest))
    _write(out / "glosses.txt", write_gloss_vocab(manifest.gloss_vocab))
    _write(out / "attributes.csv", write_attributes(attrs))
    _write(out / "synth.json", json.dumps(cfg.synth.to_dict(), indent=2, sort_keys=True) + "\n")

    dist = hand_distribution(poses, cfg.sampling)
    splits = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    doc = {"out": str(out), "clips": len(poses), "classes": len(manifest.gloss_vocab),
           "signers": len(manifest.signers), "test_signer": cfg.synth.test_signer,
           "splits": splits, "hand_settings": dist}
    text = (f"wrote {len(poses)} clips to {out}\n"
            f"classes {len(manifest.gloss_vocab)}, signers {len(manifest.signers)} "
            f"(test: {cfg.synth.test_signer}), train {splits['train']}, test {splits['test']}\n\n"
            f"{'Hand spatial sampling settings':<32}{'%':>8}\n"
            f"{'Both hands moving':<32}{dist['both']:>8.2f}\n"
            f"{'Only left hand moving':<32}{dist['left']:>8.2f}\n"
            f"{'Only right hand moving':<32}{dist['right']:>8.2f}\n")
    if dist["none"]:
        text += f"{'No hand moving':<32}{dist['none']:>8.2f}\n"
    _emit(args, text, doc)
    return 0


def cmd_window(args, cfg: RunConfig) -> int:
    data = Path(cfg.data_dir)
    poses = load_poses(pose_paths(data), args.workers)
    wins = compute_windows(poses, cfg.sampling, args.workers)
    out = Path(args.output) if args.output else data / "windows.csv"
    _write(out, write_windows((p.video_id, wins[p.video_id]) for p in poses))
    reasons = {}
    for w in wins.values():
        if not w.valid:
            reasons[w.rejection_reason] = reasons.get(w.rejection_reason, 0) + 1
    rejected = sum(reasons.values())
    text = f"{len(wins)} windows written to {out}; {rejected} rejected"
    text += (" (" + ", ".join(f"{k} {v}" for k, v in sorted(reasons.items())) + ")\n") if rejected else "\n"
    _emit(args, text, {"out": str(out), "videos": len(wins), "rejected": rejected, "reasons": reasons})
    return 0


def _windows(data: Path, poses, cfg: RunConfig, workers: int):
    path = data / "windows.csv"
    if path.exists():
        wins = parse_windows(_read_bytes(path))
        missing = [p.video_id for p in poses if p.video_id not in wins]
        if not missing:
            return wins
        log.info("%s lacks %d clip(s); recomputing windows", path, len(missing))
    return compute_windows(poses, cfg.sampling, workers)


def _crop_plan(pose, window, cue, hand_mode, cfg: SamplingConfig):
    idx = uniform_sample(window.start, window.end, cfg.num_sampled_frames)
    if cue == "body":
        return plan_body_crop(pose, idx)
    if cue == "face":
        return plan_face_crop(pose, idx)
    return plan_hand_crop(pose, idx, detect_moving_hands(pose, cfg), hand_mode, cfg)


def cmd_crops(args, cfg: RunConfig) -> int:
    data = Path(cfg.data_dir)
    poses = load_poses(pose_paths(data), args.workers)
    wins = _windows(data, poses, cfg, args.workers)
    out = Path(cfg.out_dir) if cfg.out_dir else data / "crops"
    written, skipped = 0, 0
    for p in poses:
        w = wins[p.video_id]
        if not w.valid:
            skipped += 1
            continue
        for cue in args.cue:
            plan = _crop_plan(p, w, cue, args.hand_mode, cfg.sampling)
            _write(out / cue / f"{p.video_id}.json", plan.to_json() + "\n")
            written += 1
    text = f"{written} crop plans written to {out}; {skipped} clips skipped (invalid window)\n"
    _emit(args, text, {"out": str(out), "plans": written, "skipped": skipped})
    return 0


def cmd_score(args, cfg: RunConfig) -> int:
    data = Path(cfg.data_dir)
    manifest = load_manifest(data)
    poses = manifest_poses(data, manifest, args.workers)
    wins = _windows(data, poses, cfg, args.workers)
    cues = list(args.cue)
    feats = compute_features(poses, wins, cues, cfg.sampling, args.workers)
    out = Path(cfg.out_dir) if cfg.out_dir else data / "scores"
    held = validation_signer(manifest)
    if held is not None:
        log.info("no val split; holding out training signer %s for validation scores", held)
    summary = {}
    for cue in cues:
        res = score_cue(cue, feats[cue], manifest, cfg.temperature)
        _write(out / f"{cue}.csv", write_scores(res.test_scores))
        if res.val_scores is not None:
            _write(out / f"{cue}.val.csv", write_scores(res.val_scores))
        meta = {"cue": cue, "val_accuracy": res.val_accuracy, "val_signer": held,
                "temperature": cfg.temperature, "test_rows": len(res.test_scores.rows)}
        _write(out / f"{cue}.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
        summary[cue] = meta
    lines = []
    for c, m in summary.items():
        acc = "-" if m["val_accuracy"] is None else f"{100 * m['val_accuracy']:.2f}"
        lines.append(f"{c:<8} test rows {m['test_rows']:>5}  val acc {acc}")
    text = f"scores written to {out}" + (f" (validation signer {held})" if held else "") + "\n"
    _emit(args, text + "\n".join(lines) + "\n", {"out": str(out), "val_signer": held, "cues": summary})
    return 0


def _load_score_files(paths: Sequence[str]) -> list[ScoreMatrix]:
    mats = []
    for p in paths:
        path = Path(p)
        m = read_scores(_read_bytes(path))
        if not m.cue_name:
            m = ScoreMatrix(path.stem, m.gloss_vocab, m.rows, m.kind)
        mats.append(m)
    names = [m.cue_name for m in mats]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate cue names among score files: {names}")
    return mats


def _val_weights(paths: Sequence[str], mats: Sequence[ScoreMatrix]) -> dict[str, float]:
    """Validation accuracies recorded next to score files by ``score``."""
    weights = {}
    for p, m in zip(paths, mats):
        meta = Path(p).with_name(f"{m.cue_name}.meta.json")
        if meta.exists():
            acc = json.loads(_read_text(meta)).get("val_accuracy")
            if acc is not None:
                weights[m.cue_name] = float(acc)
    return weights


def _fusion_spec(cfg: RunConfig, paths, mats) -> FusionSpec:
    spec = cfg.fusion
    names = [m.cue_name for m in mats]
    if spec.mode == "weighted":
        weights = {**_val_weights(paths, mats), **spec.weights}
        spec = FusionSpec("weighted", names, weights)
        spec.weight_vector(names)  # ConfigError / WeightError up front
        return spec
    return FusionSpec("mean", names)


def cmd_fuse(args, cfg: RunConfig) -> int:
    mats = _load_score_files(args.scores)
    spec = _fusion_spec(cfg, args.scores, mats)
    fused = fuse_matrices(mats, spec, args.name)
    out = Path(args.output) if args.output else Path(args.scores[0]).with_name(f"{args.name}.csv")
    _write(out, write_scores(fused))
    doc = {"out": str(out), "mode": spec.mode, "cues": list(spec.cues), "rows": len(fused.rows)}
    if spec.mode == "weighted":
        doc["weights"] = dict(zip(spec.cues, spec.weight_vector(list(spec.cues)).tolist()))
    _emit(args, f"fused {len(mats)} cues ({spec.mode}) over {len(fused.rows)} videos -> {out}\n", doc)
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    data = Path(cfg.data_dir)
    manifest = load_manifest(data)
    attrs = load_attributes(data)
    mats = _load_score_files(args.scores)
    out = Path(cfg.out_dir) if cfg.out_dir else data / "reports"
    stamp = _timestamp(args)
    reports = []
    for m in mats:
        preds = predictions_from_scores(m, manifest, args.split)
        n_max = args.n_max or m.num_classes
        rep = evaluate(m.cue_name, preds, attrs, n_max)
        rep.generated_at = stamp
        reports.append(rep)
        if "json" in cfg.report_formats:
            _write(out / f"{m.cue_name}.json", rep.to_json() + "\n")
        if "csv" in cfg.report_formats:
            _write(out / f"{m.cue_name}.topn.csv", rep.topn_csv())
    text = summary_table(reports)
    if attrs:
        text += "\n" + attribute_table(reports)
    if "text" in cfg.report_formats:
        _write(out / "summary.txt", text)
    doc = {"out": str(out), "reports": [json.loads(r.to_json()) for r in reports]}
    _emit(args, text, doc)
    return 0


def _parse_pairs(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in items:
        name, sep, val = item.partition("=")
        try:
            if not sep or not name:
                raise ValueError
            out[name] = float(val) / 100.0
        except ValueError:
            raise ConfigError(f"--pair expects excluded_cue=percent, got {item!r}") from None
    return out


def cmd_ablate(args, cfg: RunConfig) -> int:
    if args.full is not None:
        if args.scores:
            raise ConfigError("give either score files or --full/--pair, not both")
        pairs = _parse_pairs(args.pair or ())
        if len(pairs) < 3:
            raise ConfigError("ablation needs at least 3 cues (--pair for each excluded cue)")
        order = [c for c in CUES if c in pairs] + [c for c in pairs if c not in CUES]
        table = ablation_effects(args.full / 100.0, pairs, order)
    else:
        if len(args.scores or ()) < 3:
            raise ConfigError("ablation needs at least 3 cue score files")
        manifest = load_manifest(Path(cfg.data_dir))
        mats = _load_score_files(args.scores)
        spec = _fusion_spec(cfg, args.scores, mats)
        names = list(spec.cues)

        def fused_top1(subset):
            sub = FusionSpec(spec.mode, subset, {c: spec.weights[c] for c in subset} if spec.mode == "weighted" else {})
            return accuracy(predictions_from_scores(fuse_matrices(mats, sub), manifest, args.split), 1)

        full = fused_top1(names)
        pairs = {ex: fused_top1([c for c in names if c != ex]) for ex in names}
        table = ablation_effects(full, pairs, names)
    _emit(args, table.to_text(), json.loads(table.to_json()))
    return 0


# -- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors raise instead of exiting with argparse's status 2."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON run config")
    p.add_argument("--seed", type=int, default=d, help="generator seed")
    p.add_argument("--workers", type=int, default=d, help="worker processes (default: all cores)")
    p.add_argument("--json", action="store_true", default=d if suppress else False,
                   help="machine-readable stdout and error output")
    p.add_argument("--t-start", type=int, default=d, help="frames of context before the first movement")
    p.add_argument("--t-end", type=int, default=d, help="frames of context after the last movement")
    p.add_argument("--motion-threshold", type=float, default=d, help="pixels")
    p.add_argument("--fusion-mode", choices=FUSION_MODES, default=d)
    p.add_argument("--weights", action="append", metavar="CUE=W[,CUE=W]", default=d,
                   help="fusion weight(s); repeatable")
    p.add_argument("--no-timestamp", action="store_true", default=d if suppress else False,
                   help="omit generated_at from reports")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cuefuse", description="Multi-cue sampling and score fusion for isolated sign recognition.")
    parser.add_argument("--version", action="version", version=f"cuefuse {__version__}")
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic labelled pose dataset")
    p.add_argument("--out", help="output data directory")
    p.add_argument("--classes", type=int)
    p.add_argument("--signers", type=int)
    p.add_argument("--clips", type=int, help="clips per class per signer")
    p.add_argument("--informativeness", nargs="+", metavar="CUE=V")

    p = add("window", cmd_window, "compute active windows for every pose file")
    p.add_argument("--data")
    p.add_argument("--output", help="windows CSV (default DATA/windows.csv)")

    p = add("crops", cmd_crops, "write per-clip crop plans")
    p.add_argument("--data")
    p.add_argument("--out", help="output directory (default DATA/crops)")
    p.add_argument("--cue", nargs="+", choices=CUES, default=list(CUES))
    p.add_argument("--hand-mode", choices=HAND_MODES, default="mixed")

    p = add("score", cmd_score, "fit the toy classifier per cue and write score CSVs")
    p.add_argument("--data")
    p.add_argument("--out", help="output directory (default DATA/scores)")
    p.add_argument("--cue", nargs="+", choices=CUES, default=list(CUES))
    p.add_argument("--temperature", type=float)

    p = add("fuse", cmd_fuse, "fuse per-cue score files")
    p.add_argument("scores", nargs="+")
    p.add_argument("--output", help="fused CSV (default: NAME.csv next to the first input)")
    p.add_argument("--name", default="fusion")

    p = add("eval", cmd_eval, "evaluate score files against the manifest")
    p.add_argument("scores", nargs="+")
    p.add_argument("--data")
    p.add_argument("--out", help="report directory (default DATA/reports)")
    p.add_argument("--split", default="test")
    p.add_argument("--n-max", type=int)

    p = add("ablate", cmd_ablate, "ablation by exclusion")
    p.add_argument("scores", nargs="*")
    p.add_argument("--data")
    p.add_argument("--split", default="test")
    p.add_argument("--full", type=float, help="full-fusion accuracy in percent")
    p.add_argument("--pair", nargs="+", action="extend", metavar="EXCLUDED=PCT",
                   help="accuracy of the fusion without EXCLUDED, in percent")
    return parser


def _apply_command_overrides(args, cfg: RunConfig) -> RunConfig:
    if args.command == "synth":
        changes = {k: v for k, v in (("n_classes", args.classes), ("n_signers", args.signers),
                                     ("clips_per_class_per_signer", args.clips)) if v is not None}
        if args.informativeness:
            inf = dict(cfg.synth.cue_informativeness)
            inf.update(_parse_weights(args.informativeness))
            changes["cue_informativeness"] = inf
        if changes:
            try:
                cfg.synth = replace(cfg.synth, **changes)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    if args.command == "score" and args.temperature is not None:
        if not args.temperature > 0:
            raise ConfigError("--temperature must be > 0")
        cfg.temperature = args.temperature
    return cfg


def _setup_logging() -> None:
    level = os.environ.get("CUEFUSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    json_errors = "--json" in (sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        json_errors = args.json
        if args.workers is None:
            args.workers = default_workers()
        elif args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = _apply_command_overrides(args, build_config(args))
        return args.func(args, cfg)
    except ConfigError as exc:
        return _fail(exc, 1, json_errors)
    except CuefuseError as exc:
        return _fail(exc, 2, json_errors)


def _fail(exc: Exception, code: int, as_json: bool) -> int:
    if as_json:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"cuefuse: error: {exc}\n")
    return code

"""On-disk formats: pose JSON, manifest/vocab/attribute CSVs and score CSVs.

Every parser takes ``bytes`` (or ``str``) and returns an immutable value;
serializers are the exact inverse, so ``parse(write(x)) == x``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DuplicateError, ParseError, SchemaError

# OpenPose layouts (BODY_25 + hand + face).
BODY_KEYPOINTS = 25
HAND_KEYPOINTS = 21
FACE_KEYPOINTS = 70
PART_ARITY = {
    "body": BODY_KEYPOINTS,
    "left_hand": HAND_KEYPOINTS,
    "right_hand": HAND_KEYPOINTS,
    "face": FACE_KEYPOINTS,
}

# BODY_25 indices used downstream.
NOSE = 0
NECK = 1
R_SHOULDER = 2
R_WRIST = 4
L_SHOULDER = 5
L_WRIST = 7
MID_HIP = 8

SPLITS = ("train", "val", "test")
ATTRIBUTES = ("one_handed", "two_handed", "circular", "repetitive",
              "mono_morphemic", "compound")


def _text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        try:
            return bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8 ({exc.reason})", f"byte {exc.start}") from None
    return data


class Keypoint2D(NamedTuple):
    x: float
    y: float
    confidence: float

    @property
    def missing(self) -> bool:
        return self.confidence == 0


@dataclass(frozen=True, eq=False)
class FramePose:
    """Keypoints of one frame; each part is an ``(n, 3)`` array of x, y, confidence."""

    body: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    face: np.ndarray

    def keypoint(self, part: str, index: int) -> Keypoint2D:
        x, y, c = getattr(self, part)[index]
        return Keypoint2D(float(x), float(y), float(c))


@dataclass(frozen=True, eq=False)
class VideoPose:
    """All frames of one clip, stored part-wise as ``(T, n, 3)`` arrays."""

    video_id: str
    frame_width: int
    frame_height: int
    body: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    face: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise SchemaError(f"{self.video_id}: frame dims must be positive")
        n = None
        for part, arity in PART_ARITY.items():
            arr = np.asarray(getattr(self, part), dtype=np.float64)
            if arr.ndim != 3 or arr.shape[1:] != (arity, 3):
                raise SchemaError(f"{self.video_id}: {part} must have shape (T, {arity}, 3), got {arr.shape}")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise SchemaError(f"{self.video_id}: parts disagree on frame count")
            arr.setflags(write=False)
            object.__setattr__(self, part, arr)
        if n == 0:
            raise SchemaError(f"{self.video_id}: no frames")

    @property
    def num_frames(self) -> int:
        return self.body.shape[0]

    @property
    def frames(self) -> list[FramePose]:
        return [self.frame(i) for i in range(self.num_frames)]

    def frame(self, i: int) -> FramePose:
        return FramePose(self.body[i], self.left_hand[i], self.right_hand[i], self.face[i])

    def hand(self, side: str) -> np.ndarray:
        return self.left_hand if side == "left" else self.right_hand

    def __eq__(self, other):
        if not isinstance(other, VideoPose):
            return NotImplemented
        return (self.video_id == other.video_id
                and self.frame_width == other.frame_width
                and self.frame_height == other.frame_height
                and self.fps == other.fps
                and all(np.array_equal(getattr(self, p), getattr(other, p)) for p in PART_ARITY))


def _part_array(value, part, frame_idx):
    arity = PART_ARITY[part]
    if not isinstance(value, list):
        raise SchemaError(f"frame {frame_idx}: {part} must be a list")
    if len(value) != arity:
        raise SchemaError(f"frame {frame_idx}: {part} arity {len(value)} ≠ {arity}")
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(f"frame {frame_idx}: {part} entries must be [x, y, c] numbers") from None
    if arr.shape != (arity, 3):
        raise SchemaError(f"frame {frame_idx}: {part} entries must be [x, y, c] triples")
    if not np.isfinite(arr).all():
        raise SchemaError(f"frame {frame_idx}: {part} has non-finite values")
    conf = arr[:, 2]
    if (conf < 0).any() or (conf > 1).any():
        raise SchemaError(f"frame {frame_idx}: {part} confidence outside [0, 1]")
    return arr


def parse_video_pose(data) -> VideoPose:
    text = _text(data)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} col {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", "document")
    for key in ("video_id", "width", "height", "frames"):
        if key not in doc:
            raise ParseError("missing field", key)
    video_id = doc["video_id"]
    if not isinstance(video_id, str):
        raise ParseError("must be a string", "video_id")
    dims = []
    for key in ("width", "height"):
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ParseError("must be an integer", key)
        if v <= 0:
            raise SchemaError(f"{key} must be positive, got {v}")
        dims.append(v)
    fps = doc.get("fps", 25.0)
    if isinstance(fps, bool) or not isinstance(fps, (int, float)) or not math.isfinite(fps):
        raise ParseError("must be a number", "fps")
    frames = doc["frames"]
    if not isinstance(frames, list):
        raise ParseError("must be a list", "frames")
    if not frames:
        raise SchemaError("frames must be non-empty")

    parts = {p: [] for p in PART_ARITY}
    for i, fr in enumerate(frames):
        if not isinstance(fr, dict):
            raise ParseError("must be an object", f"frames[{i}]")
        for part in PART_ARITY:
            if part not in fr:
                raise ParseError("missing part", f"frames[{i}].{part}")
            parts[part].append(_part_array(fr[part], part, i))
    return VideoPose(video_id, dims[0], dims[1],
                     fps=float(fps), **{p: np.stack(v) for p, v in parts.items()})


def write_video_pose(pose: VideoPose) -> bytes:
    frames = [
        {p: getattr(pose, p)[i].tolist() for p in PART_ARITY}
        for i in range(pose.num_frames)
    ]
    doc = {"video_id": pose.video_id, "width": pose.frame_width,
           "height": pose.frame_height, "fps": pose.fps, "frames": frames}
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


# -- manifest ---------------------------------------------------------------

class ManifestEntry(NamedTuple):
    video_id: str
    signer_id: str
    gloss_id: int
    split: str


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    gloss_vocab: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(ManifestEntry(*e) for e in self.entries))
        object.__setattr__(self, "gloss_vocab", tuple(self.gloss_vocab))
        index = {}
        for e in self.entries:
            if e.video_id in index:
                raise DuplicateError(f"duplicate video_id {e.video_id!r}")
            if e.split not in SPLITS:
                raise ParseError(f"unknown split {e.split!r}", e.video_id)
            if not 0 <= e.gloss_id < len(self.gloss_vocab):
                raise SchemaError(f"{e.video_id}: gloss_id {e.gloss_id} outside vocabulary of {len(self.gloss_vocab)}")
            index[e.video_id] = e
        object.__setattr__(self, "_index", index)

    def __getitem__(self, video_id: str) -> ManifestEntry:
        return self._index[video_id]

    def __contains__(self, video_id) -> bool:
        return video_id in self._index

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    @property
    def signers(self) -> list[str]:
        return sorted({e.signer_id for e in self.entries})


def parse_gloss_vocab(data) -> tuple[str, ...]:
    lines = _text(data).split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return tuple(line.rstrip("\r") for line in lines)


def write_gloss_vocab(vocab: Sequence[str]) -> bytes:
    return "".join(f"{g}\n" for g in vocab).encode("utf-8")


def _csv_rows(text):
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        yield from enumerate(reader, start=1)
    except csv.Error as exc:
        raise ParseError(str(exc), f"line {reader.line_num}") from None


def parse_manifest(data, gloss_vocab) -> Manifest:
    """Parse a manifest CSV. ``gloss_vocab`` is the companion list (bytes or names)."""
    if isinstance(gloss_vocab, (bytes, bytearray, str)):
        gloss_vocab = parse_gloss_vocab(gloss_vocab)
    header = ["video_id", "signer_id", "gloss_id", "split"]
    text = _text(data)
    if not text.strip():
        raise ParseError("empty manifest", "line 1")
    entries = []
    seen = set()
    for lineno, row in _csv_rows(text):
        if lineno == 1:
            if row != header:
                raise ParseError(f"expected header {','.join(header)}", "line 1")
            continue
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", f"line {lineno}")
        vid, signer, gloss, split = row
        try:
            gloss_id = int(gloss)
        except ValueError:
            raise ParseError(f"gloss_id {gloss!r} is not an integer", f"line {lineno}") from None
        if split not in SPLITS:
            raise ParseError(f"unknown split {split!r}", f"line {lineno}")
        if vid in seen:
            raise DuplicateError(f"line {lineno}: duplicate video_id {vid!r}")
        seen.add(vid)
        if not 0 <= gloss_id < len(gloss_vocab):
            raise SchemaError(f"line {lineno}: gloss_id {gloss_id} outside vocabulary of {len(gloss_vocab)}")
        entries.append(ManifestEntry(vid, signer, gloss_id, split))
    return Manifest(tuple(entries), tuple(gloss_vocab))


def write_manifest(manifest: Manifest) -> bytes:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["video_id", "signer_id", "gloss_id", "split"])
    for e in manifest.entries:
        w.writerow([e.video_id, e.signer_id, e.gloss_id, e.split])
    return buf.getvalue().encode("utf-8")


# -- score matrices ---------------------------------------------------------

SCORE_KINDS = ("logits", "probabilities")


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per-video class scores of one cue model.

    ``kind`` is ``"logits"`` or ``"probabilities"``; fusion softmaxes logits.
    Row order follows insertion order of ``rows``.
    """

    cue_name: str
    gloss_vocab: tuple[str, ...]
    rows: dict
    kind: str = "logits"

    def __post_init__(self):
        object.__setattr__(self, "gloss_vocab", tuple(self.gloss_vocab))
        if self.kind not in SCORE_KINDS:
            raise SchemaError(f"unknown score kind {self.kind!r}")
        c = len(self.gloss_vocab)
        rows = {}
        for vid, vec in self.rows.items():
            arr = np.array(vec, dtype=np.float64)
            if arr.shape != (c,):
                raise SchemaError(f"{vid}: row length {arr.size} ≠ {c}")
            if not np.isfinite(arr).all():
                raise SchemaError(f"{vid}: non-finite score")
            arr.setflags(write=False)
            rows[vid] = arr
        object.__setattr__(self, "rows", rows)

    @property
    def num_classes(self) -> int:
        return len(self.gloss_vocab)

    @property
    def video_ids(self) -> list[str]:
        return list(self.rows)

    def matrix(self, video_ids=None) -> np.ndarray:
        ids = self.video_ids if video_ids is None else video_ids
        if not ids:
            return np.zeros((0, self.num_classes))
        return np.stack([self.rows[v] for v in ids])

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (self.cue_name == other.cue_name and self.gloss_vocab == other.gloss_vocab
                and self.kind == other.kind and list(self.rows) == list(other.rows)
                and all(np.array_equal(self.rows[k], other.rows[k]) for k in self.rows))


def _looks_like_probabilities(rows) -> bool:
    return bool(rows) and all((v >= 0).all() and abs(v.sum() - 1.0) <= 1e-6 for v in rows.values())


def read_scores(data, gloss_vocab=None, cue_name=None, kind=None) -> ScoreMatrix:
    """Parse a score CSV (``video_id,s0..s{C-1}``).

    An optional leading ``# key=value ...`` comment carries ``cue`` and
    ``kind``. Without it the kind is inferred: rows that are all
    non-negative and sum to 1 are taken as probabilities.
    """
    text = _text(data)
    meta = {}
    if text.startswith("#"):
        first, _, text = text.partition("\n")
        for tok in first[1:].split():
            key, sep, val = tok.partition("=")
            if not sep:
                raise ParseError(f"bad metadata token {tok!r}", "line 1")
            meta[key] = val
        offset = 1
    else:
        offset = 0
    rows = {}
    ncols = None
    for lineno, row in _csv_rows(text):
        loc = f"line {lineno + offset}"
        if lineno == 1:
            if not row or row[0] != "video_id":
                raise ParseError("header must start with video_id", loc)
            expect = [f"s{i}" for i in range(len(row) - 1)]
            if row[1:] != expect:
                raise ParseError("score columns must be s0..s{C-1}", loc)
            ncols = len(row) - 1
            if gloss_vocab is not None and ncols != len(gloss_vocab):
                raise SchemaError(f"{loc}: {ncols} score columns but vocabulary has {len(gloss_vocab)} glosses")
            continue
        if not row:
            continue
        if len(row) - 1 != ncols:
            raise SchemaError(f"{loc}: ragged row with {len(row) - 1} scores, expected {ncols}")
        vid = row[0]
        if vid in rows:
            raise DuplicateError(f"{loc}: duplicate video_id {vid!r}")
        try:
            vec = np.array([float(c) for c in row[1:]], dtype=np.float64)
        except ValueError:
            bad = next(c for c in row[1:] if not _is_float(c))
            raise ParseError(f"non-numeric score {bad!r}", loc) from None
        if not np.isfinite(vec).all():
            raise ParseError("non-finite score", loc)
        rows[vid] = vec
    if ncols is None:
        raise ParseError("missing header", f"line {1 + offset}")
    if gloss_vocab is None:
        gloss_vocab = tuple(f"s{i}" for i in range(ncols))
    kind = kind or meta.get("kind") or ("probabilities" if _looks_like_probabilities(rows) else "logits")
    if kind not in SCORE_KINDS:
        raise ParseError(f"unknown score kind {kind!r}", "line 1")
    return ScoreMatrix(cue_name or meta.get("cue", ""), gloss_vocab, rows, kind)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_scores(scores: ScoreMatrix) -> bytes:
    buf = io.StringIO(newline="")
    meta = f"kind={scores.kind}"
    if scores.cue_name:
        meta = f"cue={scores.cue_name} " + meta
    buf.write(f"# {meta}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["video_id"] + [f"s{i}" for i in range(scores.num_classes)])
    for vid, vec in scores.rows.items():
        w.writerow([vid] + [repr(float(v)) for v in vec])
    return buf.getvalue().encode("utf-8")


# -- attributes -------------------------------------------------------------

AttributeTable = dict  # gloss_id -> frozenset of attribute names


def validate_attributes(table: AttributeTable) -> AttributeTable:
    for gid, flags in table.items():
        unknown = set(flags) - set(ATTRIBUTES)
        if unknown:
            raise SchemaError(f"gloss {gid}: unknown attributes {sorted(unknown)}")
        if {"one_handed", "two_handed"} <= flags:
            raise SchemaError(f"gloss {gid}: one_handed and two_handed are exclusive")
        if {"mono_morphemic", "compound"} <= flags:
            raise SchemaError(f"gloss {gid}: mono_morphemic and compound are exclusive")
    return table


def parse_attributes(data) -> AttributeTable:
    header = ["gloss_id", *ATTRIBUTES]
    table = {}
    for lineno, row in _csv_rows(_text(data)):
        loc = f"line {lineno}"
        if lineno == 1:
            if row != header:
                raise ParseError(f"expected header {','.join(header)}", loc)
            continue
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(f"{loc}: expected {len(header)} fields, got {len(row)}")
        try:
            gid = int(row[0])
        except ValueError:
            raise ParseError(f"gloss_id {row[0]!r} is not an integer", loc) from None
        if gid in table:
            raise DuplicateError(f"{loc}: duplicate gloss_id {gid}")
        flags = set()
        for name, cell in zip(ATTRIBUTES, row[1:]):
            if cell not in ("0", "1"):
                raise ParseError(f"{name} must be 0 or 1, got {cell!r}", loc)
            if cell == "1":
                flags.add(name)
        table[gid] = frozenset(flags)
    return validate_attributes(table)


def write_attributes(table: AttributeTable) -> bytes:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gloss_id", *ATTRIBUTES])
    for gid in sorted(table):
        w.writerow([gid] + [int(a in table[gid]) for a in ATTRIBUTES])
    return buf.getvalue().encode("utf-8")

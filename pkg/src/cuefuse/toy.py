"""Desk-scale stand-ins for the per-cue 3D CNNs.

``generate_synthetic`` renders labelled OpenPose-style clips. Every class owns
one code vector per cue, drawn into keypoints only that cue sees: finger
layout of the dominant hand (hand), elbow/hip/ear placement (body) and
brow/mouth shape (face). Per clip, a cue shows a random distractor code
instead with a probability that falls as its informativeness rises, and
Gaussian code noise grows as informativeness falls. Wrist trajectories
depend only on the class attributes, so they carry little class signal.

``extract_features`` turns a clip into a normalized keypoint vector for one
cue; ``fit_centroids``/``score`` form a nearest-centroid classifier whose
outputs are ordinary score matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import SchemaError, TrainError, WindowError
from .fusion import CueScores
from .pose_io import (FACE_KEYPOINTS, HAND_KEYPOINTS, L_SHOULDER, L_WRIST, NECK, R_SHOULDER,
                      R_WRIST, Manifest, ManifestEntry, ScoreMatrix, VideoPose)
from .sampling import ActiveWindow, SamplingConfig, filled_track, uniform_sample

CUES = ("body", "hand", "face")
CUE_KEYPOINTS = {"body": 25, "hand": 2 * HAND_KEYPOINTS, "face": FACE_KEYPOINTS}

FRAME_W, FRAME_H = 1920, 1080
NECK_Y = 330.0
SHOULDER_WIDTH = 300.0  # pixels at signer scale 1

# Code geometry, in units where one code unit moves the sampled-feature
# vector by about one (shoulder-width normalized) distance unit.
CODE_NORM = 1.2
CODE_UNIT_PX = 0.31 * SHOULDER_WIDTH
DISTRACTOR_FLOOR = 0.2
NOISE_SLOPE = 0.35
NOISE_FLOOR = 0.35


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 20
    n_signers: int = 4
    clips_per_class_per_signer: int = 10
    frame_count_range: tuple[int, int] = (110, 150)
    idle_range: tuple[int, int] = (15, 30)
    motion_noise: float = 2.0
    cue_informativeness: Mapping[str, float] = field(
        default_factory=lambda: {"hand": 0.9, "body": 0.6, "face": 0.3})
    seed: int = 0
    signer_style: float = 0.1

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.n_signers < 2:
            raise ValueError("need at least one training and one test signer")
        if self.clips_per_class_per_signer < 1:
            raise ValueError("clips_per_class_per_signer must be >= 1")
        lo, hi = self.frame_count_range
        ilo, ihi = self.idle_range
        if not (0 <= ilo <= ihi and lo <= hi and lo - 2 * ihi >= 20):
            raise ValueError("frame_count_range must leave >= 20 active frames after idle padding")
        for cue in CUES:
            v = self.cue_informativeness.get(cue, 0.0)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"informativeness of {cue} must be in [0, 1]")
        object.__setattr__(self, "cue_informativeness", dict(self.cue_informativeness))
        object.__setattr__(self, "frame_count_range", tuple(self.frame_count_range))
        object.__setattr__(self, "idle_range", tuple(self.idle_range))

    @property
    def test_signer(self) -> str:
        return signer_name(self.n_signers - 1)

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes, "n_signers": self.n_signers,
            "clips_per_class_per_signer": self.clips_per_class_per_signer,
            "frame_count_range": list(self.frame_count_range), "idle_range": list(self.idle_range),
            "motion_noise": self.motion_noise, "cue_informativeness": dict(self.cue_informativeness),
            "seed": self.seed, "signer_style": self.signer_style,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        return cls(**d)


def signer_name(i: int) -> str:
    return f"signer{i + 1}"


def distractor_probability(informativeness: float) -> float:
    """Chance that a clip's cue shows a random class code; 1 at informativeness 0."""
    miss = 1.0 - informativeness
    return miss * (DISTRACTOR_FLOOR + (1 - DISTRACTOR_FLOOR) * miss ** 8)


def code_noise(informativeness: float) -> float:
    return NOISE_SLOPE * (1.0 - informativeness) + NOISE_FLOOR


# -- canonical skeleton (pixels at scale 1, relative to the neck) -----------

_BODY = np.zeros((25, 2))
_BODY_VISIBLE = np.zeros(25, dtype=bool)
for _i, _xy in {0: (0, -110), 1: (0, 0), 2: (-150, 10), 3: (-185, 230), 4: (-130, 430),
                5: (150, 10), 6: (185, 230), 7: (130, 430), 8: (0, 450), 9: (-80, 450),
                12: (80, 450), 15: (-25, -135), 16: (25, -135), 17: (-60, -120),
                18: (60, -120)}.items():
    _BODY[_i] = _xy
    _BODY_VISIBLE[_i] = True
_BODY_CODED = [3, 6, 8, 9, 12, 17, 18]  # elbows, hips, ears
_ELBOW_ROWS = {3: 0, 6: 1}


def _canonical_hand():
    # left hand, wrist at origin, fingers hanging down at rest
    pts = [(0.0, 0.0)]
    for finger, angle in enumerate(np.linspace(-0.9, 0.5, 5)):
        direction = np.array([np.sin(angle), np.cos(angle)])
        base = 20.0 if finger else 12.0
        for j in range(4):
            pts.append(tuple(direction * (base + 18.0 * j)))
    return np.array(pts)


def _canonical_face():
    pts = []
    for a in np.linspace(-np.pi * 0.9, -np.pi * 0.1, 17):  # jaw
        pts.append((70 * np.cos(a), -95 * np.sin(a) - 10))
    for side in (-1, 1):  # brows
        for k in range(5):
            pts.append((side * (15 + 10 * k), -45 - 4 * np.sin(k / 4 * np.pi)))
    for k in range(9):  # nose bridge + base
        pts.append(((k - 6) * 8 if k > 3 else 0, -35 + 9 * k if k <= 3 else 2))
    for side in (-1, 1):  # eyes
        for a in np.linspace(0, 2 * np.pi, 6, endpoint=False):
            pts.append((side * 30 + 11 * np.cos(a), -25 + 5 * np.sin(a)))
    for a in np.linspace(0, 2 * np.pi, 12, endpoint=False):  # outer lips
        pts.append((26 * np.cos(a), 38 + 10 * np.sin(a)))
    for a in np.linspace(0, 2 * np.pi, 8, endpoint=False):  # inner lips
        pts.append((16 * np.cos(a), 38 + 5 * np.sin(a)))
    pts += [(-30, -25), (30, -25)]  # pupils
    return np.array(pts)


_HAND = _canonical_hand()
_FACE = _canonical_face()
_FACE_CODED = list(range(17, 27)) + list(range(48, 68))  # brows + lips
_SIGNING_SPOT = np.array([110.0, 150.0])  # left wrist while signing


def _class_codes(n_classes, dim, rng):
    """Equidistant-ish unit codes: a rotated cross-polytope when it fits, else random."""
    if n_classes <= 2 * dim:
        k = (n_classes + 1) // 2
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        axes = q[:, :k].T
        codes = np.concatenate([axes, -axes])[:n_classes]
    else:
        codes = rng.standard_normal((n_classes, dim))
        codes /= np.linalg.norm(codes, axis=1, keepdims=True)
    return codes


def _orthonormal_basis(dim, n_points, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n_points * 2, dim)))
    return q.T.reshape(dim, n_points, 2)


@dataclass(frozen=True)
class _World:
    codes: dict  # cue -> (C, D)
    bases: dict  # cue -> (D, k, 2) in pixels per code unit
    attributes: dict  # gloss_id -> frozenset
    styles: np.ndarray  # (signers, C, cues, D)


def _world(spec: SynthSpec) -> _World:
    """Class codes, rendering bases and attributes; a pure function of the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0,)))
    dim = min(10, max(1, (spec.n_classes + 1) // 2))
    dim = max(dim, 2)
    codes = {cue: _class_codes(spec.n_classes, dim, rng) for cue in CUES}
    bases = {
        "hand": _orthonormal_basis(dim, HAND_KEYPOINTS - 1, rng) * CODE_UNIT_PX,
        "body": _orthonormal_basis(dim, len(_BODY_CODED), rng) * CODE_UNIT_PX,
        "face": _orthonormal_basis(dim, len(_FACE_CODED), rng) * CODE_UNIT_PX,
    }
    attributes = {}
    for c in range(spec.n_classes):
        flags = {"two_handed" if c % 3 else "one_handed",
                 "compound" if rng.random() < 0.5 else "mono_morphemic"}
        if rng.random() < 0.4:
            flags.add("circular")
        if rng.random() < 0.5:
            flags.add("repetitive")
        attributes[c] = frozenset(flags)
    styles = rng.standard_normal((spec.n_signers, spec.n_classes, len(CUES), dim)) * spec.signer_style
    return _World(codes, bases, attributes, styles)


def class_attributes(spec: SynthSpec) -> dict[int, frozenset]:
    return dict(_world(spec).attributes)


def _clip_rng(spec, clip_index):
    return np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1, clip_index)))


def clip_layout(spec: SynthSpec, clip_index: int) -> tuple[int, int, int]:
    """(idle prefix, active length, idle suffix) of one clip."""
    rng = _clip_rng(spec, clip_index)
    n = int(rng.integers(spec.frame_count_range[0], spec.frame_count_range[1] + 1))
    pre = int(rng.integers(spec.idle_range[0], spec.idle_range[1] + 1))
    post = int(rng.integers(spec.idle_range[0], spec.idle_range[1] + 1))
    return pre, n - pre - post, post


def _wrist_path(attrs, u):
    """Small attribute-dependent motion around the signing spot (pixels at scale 1)."""
    cycles = 2.0 if "repetitive" in attrs else 1.0
    angle = 2 * np.pi * cycles * u
    if "circular" in attrs:
        offset = 20.0 * np.stack([np.cos(angle) - 1, np.sin(angle)], axis=1)
    else:
        offset = 20.0 * np.stack([np.sin(angle), np.zeros_like(angle)], axis=1)
    if "compound" in attrs:
        offset[:, 1] += np.where(u >= 0.5, 25.0, 0.0)
    return _SIGNING_SPOT + offset


def _render_clip(spec, world, gloss, signer, transform, clip_index, video_id):
    pre, active, post = clip_layout(spec, clip_index)
    rng = _clip_rng(spec, clip_index)
    rng.integers(0, 1, size=3)  # layout draws, already consumed by clip_layout
    n = pre + active + post
    scale, offset = transform
    attrs = world.attributes[gloss]

    shown = {}
    for k, cue in enumerate(CUES):
        inf = spec.cue_informativeness.get(cue, 0.0)
        label = gloss
        if rng.random() < distractor_probability(inf):
            label = int(rng.integers(spec.n_classes))
        dim = world.codes[cue].shape[1]
        shown[cue] = (CODE_NORM * world.codes[cue][label] + world.styles[signer, gloss, k]
                      + code_noise(inf) * rng.standard_normal(dim))

    t = np.arange(n)
    u = np.clip((t - pre) / max(active - 1, 1), 0.0, 1.0)
    w = ((t >= pre) & (t < pre + active)).astype(float)
    w[pre] = w[pre + active - 1] = 0.7  # quick raise and drop
    w = w[:, None]

    rest_l, rest_r = _BODY[L_WRIST], _BODY[R_WRIST]
    path = _wrist_path(attrs, u)
    left_wrist = rest_l + w * (path - rest_l)
    if "two_handed" in attrs:
        right_wrist = rest_r + w * (path * np.array([-1.0, 1.0]) - rest_r)
    else:
        right_wrist = np.repeat(rest_r[None], n, axis=0)

    body = np.repeat(_BODY[None], n, axis=0)
    body[:, L_WRIST] = left_wrist
    body[:, R_WRIST] = right_wrist
    for elbow, shoulder, wrist, sx in ((6, 5, left_wrist, 1.0), (3, 2, right_wrist, -1.0)):
        body[:, elbow] = 0.5 * (body[:, shoulder] + wrist) + np.array([sx * 45.0, 0.0])
    body_shift = np.tensordot(shown["body"], world.bases["body"], axes=1)
    body[:, _BODY_CODED] += w[:, :, None] * body_shift[None]

    hand_shift = np.tensordot(shown["hand"], world.bases["hand"], axes=1)
    left_hand = left_wrist[:, None] + _HAND[None]
    left_hand[:, 1:] += w[:, :, None] * hand_shift[None]
    right_hand = right_wrist[:, None] + _HAND[None] * np.array([-1.0, 1.0])

    face = body[:, 0][:, None] + _FACE[None]
    face_shift = np.tensordot(shown["face"], world.bases["face"], axes=1)
    face[:, _FACE_CODED] += w[:, :, None] * face_shift[None]

    def to_px(local, visible=None):
        xy = local * scale + offset + np.array([FRAME_W / 2, NECK_Y])
        xy = xy + rng.normal(0.0, spec.motion_noise, xy.shape)
        conf = np.full(xy.shape[:-1] + (1,), 0.9)
        if visible is not None:
            conf[:, ~visible] = 0.0
            xy = np.where(visible[None, :, None], xy, 0.0)
        return np.concatenate([np.round(xy, 2), conf], axis=-1)  # OpenPose-like precision

    return VideoPose(video_id, FRAME_W, FRAME_H,
                     body=to_px(body, _BODY_VISIBLE),
                     left_hand=to_px(left_hand), right_hand=to_px(right_hand),
                     face=to_px(face), fps=30.0)


def generate_synthetic(spec: SynthSpec = SynthSpec()):
    """Render a labelled clip set; returns ``(poses, manifest, attributes)``.

    The last signer is the held-out test signer; everyone else is ``train``.
    """
    world = _world(spec)
    srng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(2,)))
    transforms = [(srng.uniform(0.9, 1.1), srng.uniform(-40, 40, size=2)) for _ in range(spec.n_signers)]
    poses, entries = [], []
    clip_index = 0
    for s in range(spec.n_signers):
        split = "test" if s == spec.n_signers - 1 else "train"
        for c in range(spec.n_classes):
            for r in range(spec.clips_per_class_per_signer):
                vid = f"{signer_name(s)}_g{c:03d}_r{r:02d}"
                poses.append(_render_clip(spec, world, c, s, transforms[s], clip_index, vid))
                entries.append(ManifestEntry(vid, signer_name(s), c, split))
                clip_index += 1
    vocab = tuple(f"GLOSS_{c:03d}" for c in range(spec.n_classes))
    return poses, Manifest(tuple(entries), vocab), class_attributes(spec)


# -- features and classifier -------------------------------------------------

@dataclass(frozen=True, eq=False)
class CueFeatures:
    video_id: str
    cue: str
    vector: np.ndarray


def cue_keypoints(pose: VideoPose, cue: str) -> np.ndarray:
    """``(T, k, 3)`` keypoints feeding one cue."""
    if cue == "body":
        return pose.body
    if cue == "hand":
        return np.concatenate([pose.left_hand, pose.right_hand], axis=1)
    if cue == "face":
        return pose.face
    raise ValueError(f"unknown cue {cue!r}")


def _anchor(pose, cue, neck):
    """Per-frame origin(s) matching what each cue's crop is centred on: ``(T, k, 2)``."""
    if cue == "hand":
        parts = [filled_track(pose.left_hand[:, 0]), filled_track(pose.right_hand[:, 0])]
        parts = [p if p is not None else neck for p in parts]
        return np.concatenate([np.repeat(p[:, None], HAND_KEYPOINTS, axis=1) for p in parts], axis=1)
    if cue == "face":
        nose = filled_track(pose.body[:, 0])
        return (nose if nose is not None else neck)[:, None]
    return neck[:, None]


def extract_features(pose: VideoPose, window: ActiveWindow, cue: str,
                     cfg: SamplingConfig = SamplingConfig()) -> CueFeatures:
    """Cue keypoints over uniformly sampled window frames, scaled by shoulder width.

    Body points are taken relative to the neck, hand points relative to their
    own wrist and face points relative to the nose, mirroring where each crop
    is centred.

    Missing keypoints contribute zeros.
    """
    if not window.valid:
        raise WindowError(f"{pose.video_id}: window rejected ({window.rejection_reason})")
    idx = uniform_sample(window.start, window.end, cfg.num_sampled_frames)
    neck = filled_track(pose.body[:, NECK])
    ls = filled_track(pose.body[:, L_SHOULDER])
    rs = filled_track(pose.body[:, R_SHOULDER])
    if neck is None or ls is None or rs is None:
        raise SchemaError(f"{pose.video_id}: neck/shoulders never visible")
    width = np.linalg.norm(ls[idx] - rs[idx], axis=1)
    if (width <= 0).any():
        raise SchemaError(f"{pose.video_id}: zero shoulder width")
    kp = cue_keypoints(pose, cue)[idx]
    xy = (kp[:, :, :2] - _anchor(pose, cue, neck)[idx]) / width[:, None, None]
    xy = np.where(kp[:, :, 2:] > 0, xy, 0.0)
    return CueFeatures(pose.video_id, cue, xy.reshape(-1))


@dataclass(frozen=True, eq=False)
class CentroidModel:
    cue: str
    centroids: np.ndarray  # (C, D); row g is the centroid of gloss g
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


def fit_centroids(features: Sequence[CueFeatures], manifest: Manifest, split: str | Sequence[str] = "train",
                  temperature: float = 1.0, exclude_signers: Sequence[str] = ()) -> CentroidModel:
    splits = {split} if isinstance(split, str) else set(split)
    c = len(manifest.gloss_vocab)
    sums, counts, cue = None, np.zeros(c, dtype=np.int64), None
    for f in features:
        e = manifest[f.video_id]
        if e.split not in splits or e.signer_id in exclude_signers:
            continue
        if sums is None:
            sums, cue = np.zeros((c, f.vector.size)), f.cue
        sums[e.gloss_id] += f.vector
        counts[e.gloss_id] += 1
    if sums is None or (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise TrainError(f"no training samples for gloss id(s) {missing}")
    return CentroidModel(cue, sums / counts[:, None], temperature)


def score(model: CentroidModel, features: CueFeatures) -> CueScores:
    d = np.linalg.norm(model.centroids - features.vector, axis=1)
    return CueScores(model.cue, -d / model.temperature, is_probability=False)


def score_matrix(model: CentroidModel, features: Sequence[CueFeatures], vocab: Sequence[str]) -> ScoreMatrix:
    rows = {f.video_id: score(model, f).scores for f in features}
    return ScoreMatrix(model.cue, tuple(vocab), rows, "logits")

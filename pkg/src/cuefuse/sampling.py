"""Keypoint-driven spatial and temporal sampling.

Temporal side: detect which hands move, pick the active hand, and cut the
active window around its movement. Spatial side: per-frame crop rectangles
for the body, hand(s) and face cues, plus the pixel operations needed to
execute them (crop, horizontal concat, align-corners bilinear resize).

All pixel thresholds are in original frame coordinates.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (BoundsError, FaceNotFound, InvalidRange, NoHandsVisible,
                     NoMovement, ParseError, SchemaError, ShapeError)
from .pose_io import L_WRIST, MID_HIP, NOSE, R_WRIST, VideoPose

HANDS = ("left", "right")
REJECTION_REASONS = ("none", "no_movement", "too_short", "off_center")
HAND_MODES = ("single", "both", "mixed")

NETWORK_INPUT = 112
SINGLE_HAND_CROP = (350, 350)
BOTH_HANDS_CROP = (175, 350)  # per hand; two of them side by side make 350x350
FACE_CROP = (200, 200)


@dataclass(frozen=True)
class SamplingConfig:
    motion_threshold: float = 150.0
    t_start: int = 90
    t_end: int = 50
    num_sampled_frames: int = 16
    dominant_hand: str = "left"
    min_window: int = 8
    hip_margin: float = 100.0
    # "pad" extends the movement span by t_start/t_end, "trim" shrinks it.
    window_mode: str = "pad"
    # Hand keypoint used for motion and centering: 2 = thumb, 0 = wrist.
    thumb_index: int = 2

    def __post_init__(self):
        for name in ("motion_threshold", "t_start", "t_end", "min_window", "hip_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.num_sampled_frames < 1:
            raise ValueError("num_sampled_frames must be >= 1")
        if self.dominant_hand not in HANDS:
            raise ValueError(f"dominant_hand must be one of {HANDS}")
        if self.window_mode not in ("pad", "trim"):
            raise ValueError("window_mode must be 'pad' or 'trim'")
        if self.thumb_index not in (0, 2):
            raise ValueError("thumb_index must be 2 (thumb) or 0 (wrist)")


# -- temporal ---------------------------------------------------------------

@dataclass(frozen=True)
class HandActivity:
    left_moving: bool
    right_moving: bool
    left_first_move: int | None = None
    left_last_move: int | None = None
    right_first_move: int | None = None
    right_last_move: int | None = None

    def moving(self, hand: str) -> bool:
        return self.left_moving if hand == "left" else self.right_moving

    def span(self, hand: str) -> tuple[int, int] | None:
        if hand == "left":
            first, last = self.left_first_move, self.left_last_move
        else:
            first, last = self.right_first_move, self.right_last_move
        return None if first is None else (first, last)

    @property
    def category(self) -> str:
        """One of ``both``, ``left``, ``right``, ``none``."""
        if self.left_moving and self.right_moving:
            return "both"
        if self.left_moving:
            return "left"
        if self.right_moving:
            return "right"
        return "none"


def movement_frames(xy: np.ndarray, conf: np.ndarray, threshold: float) -> list[int] | None:
    """Frames at which a tracked keypoint moved more than ``threshold`` from its anchor.

    The anchor starts at the first visible position and is re-set to the
    current position each time a movement is registered. Returns ``None``
    when the keypoint is never visible.
    """
    visible = np.flatnonzero(conf > 0)
    if visible.size == 0:
        return None
    ax, ay = xy[visible[0]]
    moves = []
    for i in visible[1:]:
        x, y = xy[i]
        if math.hypot(x - ax, y - ay) > threshold:
            moves.append(int(i))
            ax, ay = x, y
    return moves


def detect_moving_hands(pose: VideoPose, cfg: SamplingConfig = SamplingConfig()) -> HandActivity:
    spans = {}
    any_visible = False
    for hand in HANDS:
        kp = pose.hand(hand)[:, cfg.thumb_index]
        moves = movement_frames(kp[:, :2], kp[:, 2], cfg.motion_threshold)
        if moves is not None:
            any_visible = True
        spans[hand] = (moves[0], moves[-1]) if moves else (None, None)
    if not any_visible:
        raise NoHandsVisible(f"{pose.video_id}: no thumb keypoint visible on either hand")
    return HandActivity(
        left_moving=spans["left"][0] is not None,
        right_moving=spans["right"][0] is not None,
        left_first_move=spans["left"][0], left_last_move=spans["left"][1],
        right_first_move=spans["right"][0], right_last_move=spans["right"][1],
    )


def select_active_hand(activity: HandActivity, cfg: SamplingConfig = SamplingConfig()) -> str:
    if activity.left_moving and activity.right_moving:
        return cfg.dominant_hand
    if activity.left_moving:
        return "left"
    if activity.right_moving:
        return "right"
    raise NoMovement("neither hand moves")


@dataclass(frozen=True)
class ActiveWindow:
    start: int
    end: int
    selected_hand: str
    valid: bool = True
    rejection_reason: str = "none"

    def __post_init__(self):
        if self.rejection_reason not in REJECTION_REASONS:
            raise ValueError(f"unknown rejection reason {self.rejection_reason!r}")
        if self.valid != (self.rejection_reason == "none"):
            raise ValueError("valid must be true iff rejection_reason is 'none'")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def _wrist_y(pose, hand, frame):
    kp = pose.hand(hand)[frame, 0]
    if kp[2] > 0:
        return kp[1]
    kp = pose.body[frame, L_WRIST if hand == "left" else R_WRIST]
    return kp[1] if kp[2] > 0 else None


def compute_active_window(pose: VideoPose, activity: HandActivity,
                          cfg: SamplingConfig = SamplingConfig()) -> ActiveWindow:
    last = pose.num_frames - 1
    try:
        hand = select_active_hand(activity, cfg)
    except NoMovement:
        return ActiveWindow(0, last, cfg.dominant_hand, False, "no_movement")
    m_s, m_e = activity.span(hand)

    if cfg.window_mode == "pad":
        start, end = max(0, m_s - cfg.t_start), min(last, m_e + cfg.t_end)
    else:
        start, end = m_s + cfg.t_start, m_e - cfg.t_end
        if start > end:
            return ActiveWindow(m_s, m_e, hand, False, "too_short")

    reason = "none"
    if m_e - m_s + 1 < cfg.min_window:
        reason = "too_short"
    else:
        wrist = _wrist_y(pose, hand, m_s)
        hip = pose.body[m_s, MID_HIP]
        if wrist is not None and hip[2] > 0 and wrist > hip[1] + cfg.hip_margin:
            reason = "off_center"
    return ActiveWindow(start, end, hand, reason == "none", reason)


def active_window(pose: VideoPose, cfg: SamplingConfig = SamplingConfig()) -> ActiveWindow:
    """Detect moving hands and compute the window in one step.

    A clip with no visible hands is reported as ``no_movement``.
    """
    try:
        activity = detect_moving_hands(pose, cfg)
    except NoHandsVisible:
        return ActiveWindow(0, pose.num_frames - 1, cfg.dominant_hand, False, "no_movement")
    return compute_active_window(pose, activity, cfg)


def uniform_sample(start: int, end: int, n: int) -> list[int]:
    """``n`` evenly spaced frame indices covering ``[start, end]``, rounded half up."""
    if start > end:
        raise InvalidRange(f"start {start} > end {end}")
    if n < 1:
        raise InvalidRange(f"n must be >= 1, got {n}")
    if n == 1:
        return [(start + end + 1) // 2]
    span = end - start
    # exact integer form of floor(start + k*span/(n-1) + 1/2)
    return [start + (2 * k * span + (n - 1)) // (2 * (n - 1)) for k in range(n)]


def write_windows(windows: Iterable[tuple[str, ActiveWindow]]) -> bytes:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["video_id", "start", "end", "hand", "valid", "reason"])
    for vid, win in windows:
        w.writerow([vid, win.start, win.end, win.selected_hand, int(win.valid), win.rejection_reason])
    return buf.getvalue().encode("utf-8")


def parse_windows(data) -> dict[str, ActiveWindow]:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    out = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text, newline="")), start=1):
        if lineno == 1:
            if row != ["video_id", "start", "end", "hand", "valid", "reason"]:
                raise ParseError("bad windows header", "line 1")
            continue
        if not row:
            continue
        try:
            vid, start, end, hand, valid, reason = row
            out[vid] = ActiveWindow(int(start), int(end), hand, valid == "1", reason)
        except ValueError as exc:
            raise ParseError(str(exc), f"line {lineno}") from None
    return out


# -- spatial ----------------------------------------------------------------

class CropRegion(NamedTuple):
    frame_index: int
    x0: int
    y0: int
    width: int
    height: int
    part: str

    @property
    def rect(self) -> list[int]:
        return [self.x0, self.y0, self.width, self.height]


class FrameCrop(NamedTuple):
    index: int
    regions: tuple[CropRegion, ...]


@dataclass(frozen=True)
class CropPlan:
    setting: str
    output_width: int
    output_height: int
    frames: tuple[FrameCrop, ...]

    @property
    def regions(self) -> list[CropRegion]:
        return [r for f in self.frames for r in f.regions]

    def to_json(self) -> str:
        return json.dumps({
            "setting": self.setting, "out_w": self.output_width, "out_h": self.output_height,
            "frames": [{"idx": f.index, "regions": [r.rect for r in f.regions]} for f in self.frames],
            "parts": [r.part for r in self.frames[0].regions] if self.frames else [],
        })

    @classmethod
    def from_json(cls, text) -> "CropPlan":
        doc = json.loads(text)
        parts = doc.get("parts") or ["body"]
        frames = []
        for f in doc["frames"]:
            regions = tuple(CropRegion(f["idx"], *rect, part)
                            for rect, part in zip(f["regions"], parts))
            frames.append(FrameCrop(f["idx"], regions))
        return cls(doc["setting"], doc["out_w"], doc["out_h"], tuple(frames))


def place_rect(cx: float, cy: float, w: int, h: int, frame_w: int, frame_h: int):
    """Top-left corner of a ``w x h`` rectangle centred on (cx, cy), shifted to fit the frame.

    Crops larger than the frame are shrunk to the frame size.
    """
    w, h = min(w, frame_w), min(h, frame_h)
    x0 = math.floor(cx - w / 2 + 0.5)
    y0 = math.floor(cy - h / 2 + 0.5)
    x0 = min(max(x0, 0), frame_w - w)
    y0 = min(max(y0, 0), frame_h - h)
    return x0, y0, w, h


def filled_track(points: np.ndarray) -> np.ndarray | None:
    """Forward-fill missing (confidence 0) positions of a ``(T, 3)`` track.

    Frames before the first visible one take its position. ``None`` if never visible.
    """
    visible = points[:, 2] > 0
    if not visible.any():
        return None
    idx = np.where(visible, np.arange(len(points)), -1)
    idx = np.maximum.accumulate(idx)
    idx[idx < 0] = np.argmax(visible)
    return points[idx, :2]


def _track_plan(pose, frame_indices, tracks, size, parts, setting):
    frames = []
    for i in frame_indices:
        regions = []
        for track, part in zip(tracks, parts):
            cx, cy = track[i]
            x0, y0, w, h = place_rect(cx, cy, *size, pose.frame_width, pose.frame_height)
            regions.append(CropRegion(i, x0, y0, w, h, part))
        frames.append(FrameCrop(i, tuple(regions)))
    return CropPlan(setting, NETWORK_INPUT, NETWORK_INPUT, tuple(frames))


def plan_body_crop(pose: VideoPose, frame_indices: Sequence[int]) -> CropPlan:
    side = min(pose.frame_width, pose.frame_height)
    x0 = (pose.frame_width - side) // 2
    y0 = (pose.frame_height - side) // 2
    frames = tuple(FrameCrop(i, (CropRegion(i, x0, y0, side, side, "body"),)) for i in frame_indices)
    return CropPlan("body", NETWORK_INPUT, NETWORK_INPUT, frames)


def plan_hand_crop(pose: VideoPose, frame_indices: Sequence[int], activity: HandActivity,
                   mode: str = "mixed", cfg: SamplingConfig = SamplingConfig()) -> CropPlan:
    if mode not in HAND_MODES:
        raise ValueError(f"mode must be one of {HAND_MODES}")
    hand = select_active_hand(activity, cfg)
    use_both = mode == "both" or (mode == "mixed" and activity.left_moving and activity.right_moving)
    setting = f"hand_{mode}"
    if not use_both:
        track = filled_track(pose.hand(hand)[:, cfg.thumb_index])
        return _track_plan(pose, frame_indices, [track], SINGLE_HAND_CROP, ["single_hand"], setting)
    order = [hand, "right" if hand == "left" else "left"]
    tracks = []
    for h in order:
        track = filled_track(pose.hand(h)[:, cfg.thumb_index])
        if track is None:
            raise NoHandsVisible(f"{pose.video_id}: {h} hand never visible")
        tracks.append(track)
    return _track_plan(pose, frame_indices, tracks, BOTH_HANDS_CROP,
                       [f"{h}_hand" for h in order], setting)


def plan_face_crop(pose: VideoPose, frame_indices: Sequence[int]) -> CropPlan:
    track = filled_track(pose.body[:, NOSE])
    if track is None:
        raise FaceNotFound(f"{pose.video_id}: nose keypoint never visible")
    return _track_plan(pose, frame_indices, [track], FACE_CROP, ["face"], "face")


# -- pixels -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Image:
    """Float image stored as an ``(height, width, channels)`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise ShapeError(f"image must be (H, W, C), got shape {px.shape}")
        if not np.isfinite(px).all():
            raise ShapeError("image has non-finite samples")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_samples(cls, width: int, height: int, channels: int, samples) -> "Image":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size != width * height * channels:
            raise ShapeError(f"{samples.size} samples for a {width}x{height}x{channels} image")
        return cls(samples.reshape(height, width, channels))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def samples(self) -> np.ndarray:
        return self.pixels.reshape(-1)


def crop(image: Image, region: CropRegion) -> Image:
    x0, y0, w, h = region.x0, region.y0, region.width, region.height
    if w <= 0 or h <= 0 or x0 < 0 or y0 < 0 or x0 + w > image.width or y0 + h > image.height:
        raise BoundsError(f"region {region.rect} outside {image.width}x{image.height} image")
    return Image(image.pixels[y0:y0 + h, x0:x0 + w].copy())


def _axis(n_out, n_in):
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2])
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def bilinear_resize(image: Image, out_w: int, out_h: int) -> Image:
    """Align-corners bilinear resampling."""
    if out_w < 1 or out_h < 1:
        raise ShapeError(f"output dims must be >= 1, got {out_w}x{out_h}")
    px = image.pixels
    x0, x1, fx = _axis(out_w, image.width)
    y0, y1, fy = _axis(out_h, image.height)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    a, b = px[y0][:, x0], px[y0][:, x1]
    c, d = px[y1][:, x0], px[y1][:, x1]
    top = a + (b - a) * fx
    bot = c + (d - c) * fx
    out = top + (bot - top) * fy
    # rounding can overshoot the neighbourhood by an ulp
    lo = np.minimum(np.minimum(a, b), np.minimum(c, d))
    hi = np.maximum(np.maximum(a, b), np.maximum(c, d))
    return Image(np.clip(out, lo, hi))


def concat_horizontal(a: Image, b: Image) -> Image:
    if a.height != b.height or a.channels != b.channels:
        raise ShapeError(f"cannot concat {a.width}x{a.height}x{a.channels} with "
                         f"{b.width}x{b.height}x{b.channels}")
    return Image(np.concatenate([a.pixels, b.pixels], axis=1))


def apply_crop_plan(images: Mapping[int, Image] | Sequence[Image], plan: CropPlan) -> list[Image]:
    """Execute a plan on decoded frames: crop, concat (both-hands), resize to network input."""
    out = []
    for frame in plan.frames:
        img = images[frame.index]
        parts = [crop(img, r) for r in frame.regions]
        joined = parts[0]
        for p in parts[1:]:
            if p.height != joined.height:
                raise SchemaError(f"frame {frame.index}: hand crops differ in height")
            joined = concat_horizontal(joined, p)
        out.append(bilinear_resize(joined, plan.output_width, plan.output_height))
    return out

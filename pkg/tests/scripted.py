"""Scripted thumb trajectories with hand-labelled moving-hand ground truth."""
import math

import numpy as np

from builders import scripted_pose, steps
from cuefuse.sampling import (HandActivity, SamplingConfig, detect_moving_hands, plan_body_crop,
                              plan_face_crop, plan_hand_crop)

REST_L, REST_R = (1100.0, 700.0), (820.0, 700.0)


# -- scripted moving-hand cases ---------------------------------------------
# (name, n, left (start, jumps) | None, right (start, jumps) | None,
#  expected (left_moving, left_first, left_last, right_moving, right_first, right_last))

SCRIPTED = [
    ("static both", 50, (REST_L, []), (REST_R, []), (False, None, None, False, None, None)),
    ("left jump 160 at 10", 50, ((400, 600), [(10, (400, 760))]), (REST_R, []), (True, 10, 10, False, None, None)),
    ("left jump exactly 150", 50, ((400, 600), [(10, (400, 750))]), (REST_R, []), (False, None, None, False, None, None)),
    ("left jump 150.5", 50, ((400, 600), [(10, (400, 750.5))]), (REST_R, []), (True, 10, 10, False, None, None)),
    ("diagonal 3-4-5 x40 = 200", 30, ((400, 600), [(5, (520, 760))]), (REST_R, []), (True, 5, 5, False, None, None)),
    ("diagonal 3-4-5 x30 = 150", 30, ((400, 600), [(5, (490, 720))]), (REST_R, []), (False, None, None, False, None, None)),
    ("right only", 40, (REST_L, []), ((800, 700), [(7, (800, 400))]), (False, None, None, True, 7, 7)),
    ("both same frame", 40, ((1100, 700), [(12, (1100, 400))]), ((800, 700), [(12, (800, 400))]), (True, 12, 12, True, 12, 12)),
    ("both different frames", 60, ((1100, 700), [(12, (1100, 400))]), ((800, 700), [(30, (800, 400))]), (True, 12, 12, True, 30, 30)),
    ("raise and lower", 80, ((1100, 700), [(20, (1100, 400)), (60, (1100, 700))]), (REST_R, []), (True, 20, 60, False, None, None)),
    ("raise, hold, return partly", 80, ((1100, 700), [(20, (1100, 400)), (60, (1100, 500))]), (REST_R, []), (True, 20, 20, False, None, None)),
    ("three big moves", 90, ((600, 700), [(10, (800, 700)), (40, (1000, 700)), (70, (1200, 700))]), (REST_R, []), (True, 10, 70, False, None, None)),
    ("small steps accumulate", 60, ((600, 700), [(10, (700, 700)), (20, (800, 700))]), (REST_R, []), (True, 20, 20, False, None, None)),
    ("small steps stay below", 60, ((600, 700), [(10, (700, 700)), (20, (740, 700))]), (REST_R, []), (False, None, None, False, None, None)),
    ("oscillation under threshold", 60, ((600, 700), [(10, (700, 700)), (20, (600, 700)), (30, (700, 700))]), (REST_R, []), (False, None, None, False, None, None)),
    ("oscillation over threshold", 60, ((600, 700), [(10, (800, 700)), (20, (600, 700)), (30, (800, 700))]), (REST_R, []), (True, 10, 30, False, None, None)),
    ("move on first frame after anchor", 20, ((600, 700), [(1, (900, 700))]), (REST_R, []), (True, 1, 1, False, None, None)),
    ("move on last frame", 20, ((600, 700), [(19, (900, 700))]), (REST_R, []), (True, 19, 19, False, None, None)),
    ("left invisible, right moves", 30, None, ((800, 700), [(5, (800, 300))]), (False, None, None, True, 5, 5)),
    ("right invisible, left static", 30, (REST_L, []), None, (False, None, None, False, None, None)),
    ("right invisible, left moves", 30, ((1100, 700), [(9, (1100, 300))]), None, (True, 9, 9, False, None, None)),
    ("negative coords", 30, ((-500, -500), [(4, (-500, -300))]), (REST_R, []), (True, 4, 4, False, None, None)),
    ("single frame clip", 1, (REST_L, []), (REST_R, []), (False, None, None, False, None, None)),
    ("two frames, move", 2, ((0, 0), [(1, (0, 151))]), (REST_R, []), (True, 1, 1, False, None, None)),
    ("two frames, no move", 2, ((0, 0), [(1, (0, 149))]), (REST_R, []), (False, None, None, False, None, None)),
    ("horizontal 151", 30, ((100, 100), [(3, (251, 100))]), (REST_R, []), (True, 3, 3, False, None, None)),
    ("many left moves, right once", 100, ((200, 700), [(10, (400, 700)), (30, (600, 700)), (50, (800, 700)), (70, (1000, 700))]),
     ((800, 700), [(55, (800, 500))]), (True, 10, 70, True, 55, 55)),
    ("back and forth every frame", 30, ((500, 500), [(k, (500 + 200 * ((k + 1) % 2), 500)) for k in range(10, 20)]), (REST_R, []), (True, 10, 19, False, None, None)),
]


def _hidden_cases():
    # visibility gaps: the anchor is the first visible frame
    return [
        ("anchor after hidden prefix", 30, ((400, 600), [(10, (400, 800))]), (REST_R, []),
         (False, None, None, False, None, None), dict(hidden_left=range(0, 12))),
        ("hidden frames skipped", 30, ((400, 600), [(10, (400, 800))]), (REST_R, []),
         (True, 12, 12, False, None, None), dict(hidden_left=range(8, 12))),
        ("hidden at the move frame only", 30, ((400, 600), [(10, (400, 800))]), (REST_R, []),
         (True, 11, 11, False, None, None), dict(hidden_left=[10])),
    ]


def _jump_cases():
    # single jumps of known size: moving iff size > 150
    cases = []
    for d in (0, 50, 100, 149, 149.99, 150, 150.01, 151, 200, 300, 500, 900):
        for k in (3, 17):
            moving = d > 150
            cases.append((f"jump {d} at {k}", 25, ((900, 300), [(k, (900, 300 + d))]), (REST_R, []),
                          (moving, k if moving else None, k if moving else None, False, None, None)))
    return cases


ALL_CASES = [c + ({},) for c in SCRIPTED] + _hidden_cases() + [c + ({},) for c in _jump_cases()]


def run_case(case, cfg=SamplingConfig()):
    _, n, left, right, _, kw = case
    lt = steps(n, *left) if left is not None else None
    rt = steps(n, *right) if right is not None else None
    return detect_moving_hands(scripted_pose(n, lt, rt, **kw), cfg)


def shuttle(n, first, last, base=(1100.0, 500.0)):
    """Thumb that registers a movement on every frame in [first, last]."""
    track = np.tile(base, (n, 1))
    for k in range(first, last + 1):
        track[k:] = (base[0] + 160.0 * ((k - first + 1) % 2), base[1])
    return track


def oracle_moves(track, threshold=150.0):
    anchor, moves = track[0], []
    for i in range(1, len(track)):
        if math.dist(track[i], anchor) > threshold:
            moves.append(i)
            anchor = track[i]
    return moves


def brute_window(n, moves, t_start, t_end):
    m_s, m_e = moves[0], moves[-1]
    inside = [t for t in range(n) if m_s - t_start <= t <= m_e + t_end]
    return inside[0], inside[-1]


def crop_border_fuzz(rng, target):
    """Plan crops for keypoints on, inside and far outside the frame border.

    Returns the number of keypoints placed and the list of out-of-bounds regions.
    """
    checked, bad = 0, []
    while checked < target:
        w = int(rng.choice([120, 300, 640, 1280, 1920]))
        h = int(rng.choice([100, 200, 360, 720, 1080]))
        n = 20

        def coords(size):
            pick = rng.integers(0, 4, n)
            return np.select([pick == 0, pick == 1, pick == 2],
                             [rng.choice([0.0, size - 1.0, float(size)], n),
                              rng.uniform(0, size, n), rng.uniform(-3 * size, 0, n)],
                             rng.uniform(size, 4 * size, n))

        lt = np.stack([coords(w), coords(h)], axis=1)
        rt = np.stack([coords(w), coords(h)], axis=1)
        nose = (float(coords(w)[0]), float(coords(h)[0]))
        pose = scripted_pose(n, lt, rt, width=w, height=h, nose=nose)
        act = HandActivity(True, True, 0, n - 1, 0, n - 1)
        plans = [plan_body_crop(pose, range(n)), plan_face_crop(pose, range(n))]
        plans += [plan_hand_crop(pose, range(n), act, m) for m in ("single", "both", "mixed")]
        for plan in plans:
            for r in plan.regions:
                if not (r.width > 0 and r.height > 0 and 0 <= r.x0 and r.x0 + r.width <= w
                        and 0 <= r.y0 and r.y0 + r.height <= h):
                    bad.append((r, w, h))
        checked += 2 * n + 1
    return checked, bad


def activity_tuple(a):
    return (a.left_moving, a.left_first_move, a.left_last_move,
            a.right_moving, a.right_first_move, a.right_last_move)

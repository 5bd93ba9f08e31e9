"""Synthetic corpus generation: toy videos with drifting gaze blobs, canned
caption/probe responses for the replay transport, and reference files.

Everything is seeded and deterministic, so generated fixtures are stable
across runs and usable in byte-identity checks.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

GRID = 64          # raw gaze grid side
RGB_SIZE = 32      # rgb frame side

SCENE_ADJ = ["busy", "quiet", "wide", "narrow", "wet", "sunlit"]
ENTITIES = [
    ("car", "traffic light"),
    ("truck", "stop sign"),
    ("pedestrian", "crosswalk"),
    ("cyclist", "intersection"),
    ("bus", "lane"),
    ("van", "bridge"),
]


def gaussian_blob(size: int, cy: float, cx: float, sigma: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    return np.exp(-(((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma**2)))


def write_video(root, video_id: str, n_frames: int, jump_at: int | None = None,
                seed: int = 0) -> dict[int, dict[str, str]]:
    """One toy video: rgb_####.png frames plus gaze_####.txt grids.

    The gaze blob drifts one cell per frame; at `jump_at` it teleports across
    the frame, which makes (jump_at, jump_at+1) the abrupt-shift pair.
    """
    from PIL import Image

    rng = np.random.default_rng(seed)
    vdir = Path(root) / video_id
    vdir.mkdir(parents=True, exist_ok=True)
    index: dict[int, dict[str, str]] = {}
    cy, cx = GRID * 0.25, GRID * 0.25
    for i in range(n_frames):
        if jump_at is not None and i == jump_at + 1:
            cy, cx = GRID * 0.78, GRID * 0.78
        else:
            cy += float(rng.uniform(-1.0, 1.0))
            cx += float(rng.uniform(-1.0, 1.0))
        cy = float(np.clip(cy, 4, GRID - 5))
        cx = float(np.clip(cx, 4, GRID - 5))
        grid = gaussian_blob(GRID, cy, cx, sigma=4.0) + 1e-4
        gaze_path = vdir / f"gaze_{i:04d}.txt"
        np.savetxt(gaze_path, grid, fmt="%.6f")
        rgb = rng.integers(0, 255, size=(RGB_SIZE, RGB_SIZE, 3), dtype=np.uint8)
        rgb_path = vdir / f"rgb_{i:04d}.png"
        Image.fromarray(rgb, mode="RGB").save(rgb_path)
        index[i] = {"rgb": str(rgb_path), "gaze": str(gaze_path)}
    return index


def make_corpus(root, n_videos: int = 3, frames_per_video: int = 8, seed: int = 0):
    """Small multi-video corpus; jump positions vary per video."""
    rng = np.random.default_rng(seed)
    videos = {}
    for v in range(n_videos):
        video_id = f"video{v:02d}"
        jump = int(rng.integers(1, frames_per_video - 1))
        videos[video_id] = write_video(root, video_id, frames_per_video,
                                       jump_at=jump, seed=seed * 1000 + v)
    return videos


def _pick(i: int):
    adj = SCENE_ADJ[i % len(SCENE_ADJ)]
    focus, target = ENTITIES[i % len(ENTITIES)]
    return adj, focus, target


def reference_text(i: int) -> str:
    adj, focus, target = _pick(i)
    return (
        f"A {adj} road scene with a {focus} near a {target}. "
        f"The driver focuses on the {focus} ahead. "
        f"The gaze will shift to the {target} next. "
        f"The {target} decides the coming maneuver."
    )


def refined_text(i: int) -> str:
    # Close to the reference: one adjective swapped.
    adj, focus, target = _pick(i)
    other = SCENE_ADJ[(i + 1) % len(SCENE_ADJ)]
    return (
        f"A {other} road scene with a {focus} near a {target}. "
        f"The driver focuses on the {focus} ahead. "
        f"The gaze will shift to the {target} next. "
        f"The {target} decides the coming maneuver."
    )


def draft_text(i: int) -> str:
    # Same entities, noticeably different phrasing: drafts score below refined.
    adj, focus, target = _pick(i)
    return (
        f"There is a {focus} in this {adj} view. "
        f"Right now the driver watches that {focus}. "
        f"Soon attention will move toward the {target} area. "
        f"Something about the {target} matters here."
    )


def probe_reference_answers(i: int) -> list[str]:
    adj, focus, target = _pick(i)
    return [
        f"A {focus} sits in the center of the view.",
        f"A {target} is visible ahead.",
        f"One {focus} is directly ahead.",
        f"The road looks {adj} with buildings nearby.",
        f"The focus will move to the {target}.",
    ]


def probe_answer_text(i: int) -> str:
    answers = probe_reference_answers(i)
    # Model answers drift slightly from the references.
    answers[3] = answers[3].replace("buildings", "trees")
    return "\n".join(f"A{n + 1}: {a}" for n, a in enumerate(answers))


def write_replay_responses(replay_dir, sample_ids: list[str]) -> None:
    """Canned draft + probe responses laid out as <sample_id>/<template>.txt."""
    replay = Path(replay_dir)
    for i, sid in enumerate(sample_ids):
        d = replay / sid
        d.mkdir(parents=True, exist_ok=True)
        (d / "caption_draft.txt").write_text(draft_text(i), encoding="utf-8")
        (d / "probe.txt").write_text(probe_answer_text(i), encoding="utf-8")


def write_references(path, sample_ids: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, sid in enumerate(sample_ids):
            fh.write(json.dumps({"sample_id": sid, "reference": reference_text(i)},
                                sort_keys=True) + "\n")


def write_refinements(path, sample_ids: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, sid in enumerate(sample_ids):
            fh.write(json.dumps({"sample_id": sid, "text": refined_text(i)},
                                sort_keys=True) + "\n")


def write_probe_references(path, sample_ids: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, sid in enumerate(sample_ids):
            fh.write(json.dumps({"sample_id": sid, "answers": probe_reference_answers(i)},
                                sort_keys=True) + "\n")

"""Gaze-heatmap normalization, KL attention-shift scoring, top-k keyframe selection.

Heatmaps are treated as normalized spatial probability distributions; the
divergence between consecutive frames quantifies how abruptly the driver's
attention moved. All operations are pure over immutable inputs.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import accel
from .errors import (
    EmptyInputError,
    InsufficientFramesError,
    InvalidArgumentError,
    ShapeError,
    ZeroMassError,
)

DEFAULT_EPSILON = 1e-10
DEFAULT_BINS = (32, 32)  # (width, height)
NORMALIZATION_ATOL = 1e-9

_TEXT_EXTENSIONS = {".txt", ".dat", ".csv"}
_IMAGE_EXTENSIONS = {".png", ".pgm", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class GazeHeatmap:
    """Normalized probability histogram over spatial bins.

    `bins` has shape (height, width) and sums to 1 within 1e-9.
    """

    bins: np.ndarray
    width: int
    height: int
    source_frame: str = ""

    def __post_init__(self):
        b = self.bins
        if b.ndim != 2 or b.size == 0:
            raise ShapeError(f"heatmap bins must be a non-empty 2D grid, got shape {b.shape}")
        if b.shape != (self.height, self.width):
            raise ShapeError(
                f"bins shape {b.shape} does not match (height={self.height}, width={self.width})"
            )
        if np.any(b < 0):
            raise InvalidArgumentError("heatmap bins must be non-negative")
        total = float(b.sum())
        if abs(total - 1.0) > NORMALIZATION_ATOL:
            raise InvalidArgumentError(f"heatmap mass {total} not within 1e-9 of 1")
        b.setflags(write=False)


@dataclass(frozen=True)
class ScoredFramePair:
    """Consecutive frame pair with its attention-shift score and asset refs."""

    video_id: str
    index_t: int
    index_t1: int
    kl_score: float
    rgb_t: str = ""
    rgb_t1: str = ""
    gaze_t: str = ""
    gaze_t1: str = ""

    def __post_init__(self):
        if self.index_t1 != self.index_t + 1:
            raise InvalidArgumentError(
                f"index_t1 must be index_t + 1, got {self.index_t} -> {self.index_t1}"
            )
        if self.kl_score < -1e-9:
            raise InvalidArgumentError(f"kl_score {self.kl_score} below -1e-9")
        if self.kl_score < 0:
            object.__setattr__(self, "kl_score", 0.0)

    @property
    def sample_id(self) -> str:
        return f"{self.video_id}:{self.index_t}"


class ClampCounter:
    """Counts KL values clamped up to zero and accumulates their magnitude."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0
        self.total_magnitude = 0.0

    def record(self, value: float) -> None:
        with self._lock:
            self.count += 1
            self.total_magnitude += -value

    def reset(self) -> None:
        with self._lock:
            self.count = 0
            self.total_magnitude = 0.0


clamp_counter = ClampCounter()


def _block_boundaries(n: int, parts: int) -> np.ndarray:
    # Contiguous near-equal partition; exact block pooling when divisible.
    return (np.arange(parts + 1) * n) // parts


def normalize_heatmap(raw, target_bins=DEFAULT_BINS, source_frame: str = "") -> GazeHeatmap:
    """Block-sum downsample `raw` onto a (width, height) grid and normalize to unit mass.

    Raises EmptyInputError on an empty grid, ZeroMassError when all cells are 0.
    """
    grid = np.asarray(raw, dtype=np.float64)
    if grid.size == 0:
        raise EmptyInputError("empty heatmap grid")
    if grid.ndim == 1:
        grid = grid.reshape(1, -1)
    if grid.ndim != 2:
        raise ShapeError(f"heatmap grid must be 2D, got {grid.ndim}D")
    if np.any(grid < 0):
        raise InvalidArgumentError("heatmap grid has negative cells")
    total = float(grid.sum())
    if total <= 0.0:
        raise ZeroMassError(f"all-zero heatmap {source_frame or '(unnamed)'}")

    width, height = int(target_bins[0]), int(target_bins[1])
    if width <= 0 or height <= 0:
        raise InvalidArgumentError(f"target bins must be positive, got {target_bins}")
    h_in, w_in = grid.shape
    if height > h_in or width > w_in:
        raise InvalidArgumentError(
            f"target grid {width}x{height} exceeds input {w_in}x{h_in}; only downsampling is supported"
        )

    rb = _block_boundaries(h_in, height)
    cb = _block_boundaries(w_in, width)
    row_sums = np.add.reduceat(grid, rb[:-1], axis=0)
    pooled = np.add.reduceat(row_sums, cb[:-1], axis=1)
    bins = pooled / total
    return GazeHeatmap(bins=bins, width=width, height=height, source_frame=source_frame)


def load_heatmap_grid(path) -> np.ndarray:
    """Read a raw (unnormalized) heatmap grid from disk.

    8-bit grayscale images carry mass as pixel value; text files carry rows of
    space-separated reals. The format is picked by extension.
    """
    p = Path(path)
    if not p.exists():
        raise EmptyInputError(f"heatmap file not found: {p}")
    ext = p.suffix.lower()
    if ext in _TEXT_EXTENSIONS:
        rows = []
        for line in p.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(v) for v in line.replace(",", " ").split()])
        if not rows:
            raise EmptyInputError(f"no grid rows in {p}")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise ShapeError(f"ragged grid rows in {p}")
        return np.asarray(rows, dtype=np.float64)
    if ext in _IMAGE_EXTENSIONS:
        from PIL import Image

        with Image.open(p) as img:
            gray = img.convert("L")
            return np.asarray(gray, dtype=np.float64)
    raise InvalidArgumentError(f"unsupported heatmap extension {ext!r} for {p}")


def kl_divergence(h_t: GazeHeatmap, h_t1: GazeHeatmap, epsilon: float = DEFAULT_EPSILON,
                  counter: ClampCounter | None = None) -> float:
    """Attention-shift divergence between consecutive gaze histograms, in nats.

    Sum_i h_t(i) * log((h_t(i) + eps) / (h_t1(i) + eps)), clamped at 0 from
    below (epsilon smoothing can push it vanishingly negative).
    """
    if epsilon <= 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    if h_t.bins.shape != h_t1.bins.shape:
        raise ShapeError(f"heatmap shapes differ: {h_t.bins.shape} vs {h_t1.bins.shape}")
    value = accel.kl_sum(h_t.bins, h_t1.bins, epsilon)
    if value < 0.0:
        (counter or clamp_counter).record(value)
        return 0.0
    return value


def score_video_pairs(frames, epsilon: float = DEFAULT_EPSILON) -> list[tuple[int, float]]:
    """Score every consecutive frame pair; returns [(index, kl_score)] of length N-1."""
    frames = list(frames)
    if len(frames) < 2:
        raise InsufficientFramesError(f"need >=2 frames, got {len(frames)}")
    shape = frames[0].bins.shape
    for f in frames[1:]:
        if f.bins.shape != shape:
            raise ShapeError(f"frame shapes differ: {shape} vs {f.bins.shape}")
    if epsilon <= 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    stack = np.stack([f.bins.ravel() for f in frames])
    raw = accel.kl_consecutive(stack, epsilon)
    scores = []
    for i, v in enumerate(raw):
        v = float(v)
        if v < 0.0:
            clamp_counter.record(v)
            v = 0.0
        scores.append((i, v))
    return scores


def select_top_k(scored, k: int) -> list[tuple[int, float]]:
    """Top-k scores in descending order; exact ties broken by smaller frame index."""
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    ordered = sorted(scored, key=lambda s: (-s[1], s[0]))
    return ordered[: min(k, len(ordered))]


def make_scored_pairs(video_id: str, selected, asset_index) -> list[ScoredFramePair]:
    """Attach asset references to selected (index, score) tuples.

    `asset_index` maps frame index -> {"rgb": path, "gaze": path}.
    """
    pairs = []
    for index, score in selected:
        a_t = asset_index[index]
        a_t1 = asset_index[index + 1]
        pairs.append(
            ScoredFramePair(
                video_id=video_id,
                index_t=index,
                index_t1=index + 1,
                kl_score=score,
                rgb_t=str(a_t["rgb"]),
                rgb_t1=str(a_t1["rgb"]),
                gaze_t=str(a_t["gaze"]),
                gaze_t1=str(a_t1["gaze"]),
            )
        )
    return pairs

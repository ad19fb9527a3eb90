"""Chunk-level decoding of per-frame azimuth class scores.

Frame-rate class scores are argmax-decoded to labels, then majority
voted over fixed-size chunks. Twenty 4 ms frames per chunk gives an
80 ms decision cadence by default. Ties always break toward the lower
class index, stated here once and tested.
"""

from dataclasses import dataclass

import numpy as np

from .grid import AzimuthGrid

DEFAULT_CHUNK_FRAMES = 20


@dataclass(frozen=True)
class ChunkSpec:
    """Frames per voting chunk."""

    frames: int = DEFAULT_CHUNK_FRAMES

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("chunk must cover at least one frame")


def argmax_labels(scores: np.ndarray) -> np.ndarray:
    """Per-frame class index; ties break toward the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise ValueError(f"expected a nonempty (frames, classes) matrix, got {scores.shape}")
    return np.argmax(scores, axis=1)


def chunk_vote(labels: np.ndarray, spec: ChunkSpec):
    """Modal class per chunk; returns (votes, dropped_tail_frames).

    Frames beyond the last whole chunk are dropped and reported, never
    silently folded into a short chunk.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError(f"expected a 1-D label sequence, got shape {labels.shape}")
    if np.any(labels < 0):
        raise ValueError("labels must be non-negative")
    if spec.frames > labels.size:
        raise ValueError(f"chunk of {spec.frames} frames exceeds {labels.size} labels")
    n_chunks = labels.size // spec.frames
    dropped = labels.size - n_chunks * spec.frames
    votes = np.empty(n_chunks, dtype=np.int64)
    for k in range(n_chunks):
        chunk = labels[k * spec.frames : (k + 1) * spec.frames]
        votes[k] = np.argmax(np.bincount(chunk))  # first max = lowest class
    return votes, dropped


def classes_to_degrees(classes, grid: AzimuthGrid) -> np.ndarray:
    """Map class indices onto grid azimuths in degrees."""
    classes = np.asarray(classes, dtype=np.int64)
    if np.any(classes < 0) or np.any(classes >= grid.count):
        raise ValueError(f"class index out of range [0, {grid.count})")
    return grid.min_deg + grid.step_deg * classes.astype(np.float64)


def decode_track(scores: np.ndarray, spec: ChunkSpec, grid: AzimuthGrid):
    """Scores straight to per-chunk degrees: argmax, vote, map to grid."""
    votes, dropped = chunk_vote(argmax_labels(scores), spec)
    return classes_to_degrees(votes, grid), dropped

"""Speaker-embedding bookkeeping: matching, clustering, and profiles.

Embedding slots emitted per frame have no stable speaker order. Two ways
to pin them down:

  * oracle-matched: per-frame permutation-invariant matching against a
    consistently ordered oracle sequence, then re-ordering the slots;
  * centroid: online k-means over frames, using the running centroids
    as the per-speaker profile (causal, no oracle needed).

All distances are L1, centralized in embedding_distance so the metric
can be swapped in exactly one place.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .container import ContainerError, read_container, write_container

MAX_SLOTS = 4  # permutation search is exhaustive over N!

DEFAULT_TRIPLET_MARGIN = 1.0


def embedding_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """L1 distance over the last axis."""
    return np.sum(np.abs(a - b), axis=-1)


def _check_seq(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (slots, frames, dim), got {arr.shape}")
    if arr.shape[0] > MAX_SLOTS:
        raise ValueError(f"{name} has {arr.shape[0]} slots; exhaustive matching caps at {MAX_SLOTS}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class SpeakerProfiles:
    """Per-speaker conditioning sequences: (n_speakers, frames, dim)."""

    values: np.ndarray
    mode: str  # 'oracle' or 'centroid'


def frame_pit_match(est: np.ndarray, oracle: np.ndarray):
    """Frame-level permutation-invariant match of slots to oracle speakers.

    Returns (loss, perms, reordered): loss is the summed per-frame
    minimum total distance; perms[t] maps slot i to oracle speaker
    perms[t, i]; reordered[j, t] is the estimated embedding assigned to
    oracle speaker j, so reordered aligns slot content with oracle order.
    """
    est = _check_seq(est, "est")
    oracle = _check_seq(oracle, "oracle")
    if est.shape != oracle.shape:
        raise ValueError(f"shape mismatch: est {est.shape} vs oracle {oracle.shape}")
    n_slots, n_frames, _ = est.shape

    perms_all = list(permutations(range(n_slots)))
    # costs[p, t] = total distance of permutation p at frame t
    costs = np.stack(
        [
            sum(embedding_distance(est[i], oracle[perm[i]]) for i in range(n_slots))
            for perm in perms_all
        ]
    )
    best = np.argmin(costs, axis=0)
    loss = float(np.sum(costs[best, np.arange(n_frames)]))

    perms = np.array([perms_all[p] for p in best], dtype=np.int64)
    reordered = np.empty_like(est)
    for t in range(n_frames):
        for i in range(n_slots):
            reordered[perms[t, i], t] = est[i, t]
    return loss, perms, reordered


def triplet_loss(
    oracle: np.ndarray, frame_pairs, margin: float = DEFAULT_TRIPLET_MARGIN
) -> float:
    """Hinge on intra-speaker minus inter-speaker embedding distances.

    Summed over all ordered speaker pairs (i, j), i != j, and all given
    (p, q) frame pairs. The sampling policy for frame pairs is the
    caller's; this just evaluates the given set.
    """
    oracle = _check_seq(oracle, "oracle")
    frame_pairs = list(frame_pairs)
    if not frame_pairs:
        raise ValueError("frame_pairs must be non-empty")
    n_slots = oracle.shape[0]
    total = 0.0
    for i in range(n_slots):
        for j in range(n_slots):
            if i == j:
                continue
            for p, q in frame_pairs:
                intra = embedding_distance(oracle[i, p], oracle[i, q])
                inter = embedding_distance(oracle[i, p], oracle[j, p])
                total += max(float(intra - inter + margin), 0.0)
    return total


@dataclass(frozen=True)
class OnlineKMeansState:
    """Running centroids and assignment counts; immutable snapshots."""

    centroids: np.ndarray | None  # (n_clusters, dim) once initialized
    counts: np.ndarray            # (n_clusters,)

    @classmethod
    def empty(cls, n_clusters: int = 2) -> "OnlineKMeansState":
        return cls(centroids=None, counts=np.zeros(n_clusters, dtype=np.int64))

    @property
    def initialized(self) -> bool:
        return self.centroids is not None


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def online_kmeans_step(
    state: OnlineKMeansState, frame: np.ndarray, normalize: bool = False
):
    """Consume one frame's slot vectors; returns (state, assignment, snapshot).

    Slots are assigned jointly to distinct clusters by the permutation
    minimizing total distance, then each touched centroid takes a
    running-mean update. The first frame seeds the centroids directly
    (slot i becomes cluster i, count 1). The snapshot is the centroid
    bank after the update.
    """
    frame = np.asarray(frame, dtype=np.float64)
    n_clusters = state.counts.shape[0]
    if frame.ndim != 2 or frame.shape[0] != n_clusters:
        raise ValueError(f"expected {n_clusters} slot vectors, got shape {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame embeddings must be finite")
    if normalize:
        frame = _normalize_rows(frame)

    if not state.initialized:
        centroids = frame.copy()
        counts = np.ones(n_clusters, dtype=np.int64)
        assignment = np.arange(n_clusters)
        return OnlineKMeansState(centroids, counts), assignment, centroids.copy()

    best_perm = None
    best_cost = np.inf
    for perm in permutations(range(n_clusters)):
        cost = sum(
            float(embedding_distance(frame[i], state.centroids[perm[i]]))
            for i in range(n_clusters)
        )
        if cost < best_cost:
            best_cost = cost
            best_perm = perm
    assignment = np.array(best_perm, dtype=np.int64)

    centroids = state.centroids.copy()
    counts = state.counts.copy()
    for slot, cluster in enumerate(assignment):
        counts[cluster] += 1
        centroids[cluster] += (frame[slot] - centroids[cluster]) / counts[cluster]
    return OnlineKMeansState(centroids, counts), assignment, centroids.copy()


def build_profiles(
    embeddings: np.ndarray,
    mode: str,
    oracle: np.ndarray | None = None,
    normalize: bool = False,
) -> SpeakerProfiles:
    """Turn raw slot embeddings into per-speaker profile sequences.

    'oracle' re-orders slots to oracle speaker order per frame;
    'centroid' runs online k-means and emits the centroid bank after
    each frame (causal: frame t sees data up to and including t).
    """
    embeddings = _check_seq(embeddings, "embeddings")
    if mode == "oracle":
        if oracle is None:
            raise ValueError("oracle mode needs an oracle embedding sequence")
        _, _, reordered = frame_pit_match(embeddings, oracle)
        return SpeakerProfiles(values=reordered, mode="oracle")
    if mode == "centroid":
        if oracle is not None:
            raise ValueError("centroid mode takes no oracle")
        n_slots, n_frames, dim = embeddings.shape
        state = OnlineKMeansState.empty(n_slots)
        values = np.empty((n_slots, n_frames, dim))
        for t in range(n_frames):
            state, _, snapshot = online_kmeans_step(state, embeddings[:, t], normalize=normalize)
            values[:, t] = snapshot
        return SpeakerProfiles(values=values, mode="centroid")
    raise ValueError(f"unknown profile mode {mode!r}")


def count_track_swaps(profiles: np.ndarray, truth: np.ndarray, n_segments: int = 10):
    """Segment-wise binding consistency of profile tracks against truth.

    Splits the frame axis into n_segments (remainder joins the last),
    picks per segment the profile-to-truth permutation with minimum
    total distance, and counts adjacent segments whose permutation
    differs. Returns (swap_count, permutation list).
    """
    profiles = _check_seq(profiles, "profiles")
    truth = _check_seq(truth, "truth")
    if profiles.shape != truth.shape:
        raise ValueError(f"shape mismatch: {profiles.shape} vs {truth.shape}")
    n_slots, n_frames, _ = profiles.shape
    if n_segments < 1 or n_frames < n_segments:
        raise ValueError("need at least one frame per segment")

    seg_len = n_frames // n_segments
    bounds = [(k * seg_len, (k + 1) * seg_len if k < n_segments - 1 else n_frames)
              for k in range(n_segments)]
    perms = []
    for lo, hi in bounds:
        best_perm, best_cost = None, np.inf
        for perm in permutations(range(n_slots)):
            cost = sum(
                float(np.sum(embedding_distance(profiles[perm[i], lo:hi], truth[i, lo:hi])))
                for i in range(n_slots)
            )
            if cost < best_cost:
                best_cost, best_perm = cost, perm
        perms.append(best_perm)
    swaps = sum(1 for a, b in zip(perms, perms[1:]) if a != b)
    return swaps, perms


def save_embeddings(path, values: np.ndarray):
    """Persist an embedding sequence in the binary tensor container."""
    values = _check_seq(values, "values")
    write_container(path, {"kind": "embeddings"}, {"embeddings": values})


def load_embeddings(path) -> np.ndarray:
    descriptor, tensors = read_container(path)
    if descriptor.get("kind") != "embeddings":
        raise ContainerError(f"{path}: container is not an embedding sequence")
    if "embeddings" not in tensors:
        raise ContainerError(f"{path}: missing 'embeddings' tensor")
    values = tensors["embeddings"].astype(np.float64)
    if values.ndim != 3:
        raise ContainerError(f"{path}: embeddings must be rank 3, got {values.ndim}")
    return values

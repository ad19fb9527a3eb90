from itertools import permutations

import numpy as np
import pytest

from binsep.tracking import (
    OnlineKMeansState,
    build_profiles,
    count_track_swaps,
    frame_pit_match,
    load_embeddings,
    online_kmeans_step,
    save_embeddings,
    triplet_loss,
)


def brute_force_pit(est, oracle):
    """Independent exhaustive per-frame permutation search."""
    n, T, _ = est.shape
    total = 0.0
    perms = []
    for t in range(T):
        best, best_perm = np.inf, None
        for perm in permutations(range(n)):
            cost = sum(np.sum(np.abs(est[i, t] - oracle[perm[i], t])) for i in range(n))
            if cost < best:
                best, best_perm = cost, perm
        total += best
        perms.append(best_perm)
    return total, perms


def drift_and_cross_stream(seed, n_frames=200, dim=16, n_flips=None):
    """Two well-separated tracks whose slot binding flips mid-stream.

    Returns (est with flipped slots, truth in consistent speaker order,
    flip frame list). The stream always starts unflipped.
    """
    rng = np.random.default_rng(seed)
    mean_a = np.full(dim, 1.5)
    mean_b = np.full(dim, -1.5)
    drift = 0.05 * np.cumsum(rng.standard_normal((n_frames, dim)), axis=0) / np.sqrt(
        np.arange(1, n_frames + 1)[:, None]
    )
    track_a = mean_a + drift + 0.05 * rng.standard_normal((n_frames, dim))
    track_b = mean_b - drift + 0.05 * rng.standard_normal((n_frames, dim))
    truth = np.stack([track_a, track_b])

    if n_flips is None:
        n_flips = int(rng.integers(1, 4))
    # flips land exactly on segment boundaries of non-adjacent tenths, so
    # each one is an unambiguous majority change for a 10-segment split
    seg = n_frames // 10
    segments = rng.choice(np.array([1, 3, 5, 7, 9]), size=n_flips, replace=False)
    flips = sorted(int(s) * seg for s in segments)

    est = truth.copy()
    flipped = False
    bounds = flips + [n_frames]
    for f, nxt in zip(flips, bounds[1:]):
        flipped = not flipped
        if flipped:
            est[:, f:nxt] = truth[::-1, f:nxt]
    return est, truth, flips


# --- frame_pit_match -----------------------------------------------------------


def test_pit_identity_match():
    rng = np.random.default_rng(0)
    emb = rng.standard_normal((2, 6, 4))
    loss, perms, reordered = frame_pit_match(emb, emb)
    assert loss == 0.0
    assert np.array_equal(perms, np.tile([0, 1], (6, 1)))
    assert np.array_equal(reordered, emb)


def test_pit_swapped_slots():
    rng = np.random.default_rng(1)
    oracle = rng.standard_normal((2, 5, 3))
    est = oracle[::-1].copy()
    loss, perms, reordered = frame_pit_match(est, oracle)
    assert loss == 0.0
    assert np.array_equal(perms, np.tile([1, 0], (5, 1)))
    assert np.array_equal(reordered, oracle)


def test_pit_matches_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(30):
        est = rng.standard_normal((2, 5, 4))
        oracle = rng.standard_normal((2, 5, 4))
        loss, perms, reordered = frame_pit_match(est, oracle)
        expected_loss, expected_perms = brute_force_pit(est, oracle)
        assert loss == pytest.approx(expected_loss, rel=1e-12)
        assert [tuple(p) for p in perms] == expected_perms
        # reordered slot j carries the estimate assigned to oracle speaker j
        for t in range(5):
            for i in range(2):
                assert np.array_equal(reordered[perms[t][i], t], est[i, t])


def test_pit_three_slots():
    rng = np.random.default_rng(3)
    est = rng.standard_normal((3, 4, 2))
    oracle = rng.standard_normal((3, 4, 2))
    loss, _, _ = frame_pit_match(est, oracle)
    expected, _ = brute_force_pit(est, oracle)
    assert loss == pytest.approx(expected, rel=1e-12)


def test_pit_invariant_to_slot_permutation():
    rng = np.random.default_rng(4)
    est = rng.standard_normal((2, 30, 6))
    oracle = rng.standard_normal((2, 30, 6))
    loss, _, _ = frame_pit_match(est, oracle)
    shuffled = est.copy()
    flip = rng.integers(0, 2, size=30).astype(bool)
    shuffled[:, flip] = est[::-1, flip]
    loss2, _, _ = frame_pit_match(shuffled, oracle)
    assert loss2 == pytest.approx(loss, rel=1e-12)


def test_pit_loss_nonnegative():
    rng = np.random.default_rng(5)
    for _ in range(10):
        loss, _, _ = frame_pit_match(
            rng.standard_normal((2, 8, 3)), rng.standard_normal((2, 8, 3))
        )
        assert loss >= 0.0


def test_pit_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        frame_pit_match(np.zeros((2, 3, 4)), np.zeros((2, 4, 4)))


# --- triplet_loss ---------------------------------------------------------------


def test_triplet_zero_when_margin_separated():
    # constant per-speaker embeddings, inter distance 8 >= margin
    emb = np.stack([np.zeros((10, 4)), np.full((10, 4), 2.0)])
    assert triplet_loss(emb, [(0, 3), (2, 7)], margin=1.0) == 0.0


def test_triplet_degenerate_identical():
    emb = np.zeros((2, 10, 4))
    pairs = [(0, 1), (2, 3), (4, 5)]
    margin = 0.7
    # every (i, j, p, q) term contributes exactly the margin
    expected = margin * 2 * 1 * len(pairs)
    assert triplet_loss(emb, pairs, margin=margin) == pytest.approx(expected)


def test_triplet_matches_direct_formula():
    rng = np.random.default_rng(6)
    emb = rng.standard_normal((2, 12, 5))
    pairs = [(0, 4), (3, 9), (10, 2)]
    margin = 1.0
    total = 0.0
    for i in range(2):
        for j in range(2):
            if i == j:
                continue
            for p, q in pairs:
                intra = np.sum(np.abs(emb[i, p] - emb[i, q]))
                inter = np.sum(np.abs(emb[i, p] - emb[j, p]))
                total += max(intra - inter + margin, 0.0)
    assert triplet_loss(emb, pairs, margin=margin) == pytest.approx(total, rel=1e-9)


def test_triplet_invariant_to_common_shift():
    rng = np.random.default_rng(7)
    emb = rng.standard_normal((2, 8, 4))
    pairs = [(0, 5), (1, 6)]
    shift = rng.standard_normal(4)
    assert triplet_loss(emb + shift, pairs) == pytest.approx(triplet_loss(emb, pairs), rel=1e-12)


def test_triplet_empty_pairs_rejected():
    with pytest.raises(ValueError):
        triplet_loss(np.zeros((2, 4, 3)), [])


# --- online k-means --------------------------------------------------------------


def test_kmeans_first_frame_seeds_centroids():
    state = OnlineKMeansState.empty(2)
    frame = np.array([[1.0, 0.0], [0.0, 1.0]])
    state, assign, snap = online_kmeans_step(state, frame)
    assert np.array_equal(assign, [0, 1])
    assert np.array_equal(snap, frame)
    assert np.array_equal(state.counts, [1, 1])


def test_kmeans_running_mean_two_points():
    state = OnlineKMeansState.empty(2)
    state, _, _ = online_kmeans_step(state, np.array([[0.0, 0.0], [10.0, 10.0]]))
    state, _, snap = online_kmeans_step(state, np.array([[2.0, 2.0], [10.0, 10.0]]))
    assert np.array_equal(snap[0], [1.0, 1.0])
    assert np.array_equal(snap[1], [10.0, 10.0])


def test_kmeans_fixed_points_converge_exactly():
    a = np.array([3.0, -1.0, 2.0])
    b = np.array([-5.0, 4.0, 0.0])
    state = OnlineKMeansState.empty(2)
    for _ in range(50):
        state, assign, _ = online_kmeans_step(state, np.stack([a, b]))
    assert np.array_equal(state.centroids, np.stack([a, b]))
    assert np.array_equal(assign, [0, 1])


def test_kmeans_centroid_equals_assigned_mean():
    rng = np.random.default_rng(8)
    state = OnlineKMeansState.empty(2)
    members = [[], []]
    for _ in range(300):
        frame = rng.standard_normal((2, 6))
        state, assign, _ = online_kmeans_step(state, frame)
        for slot, cluster in enumerate(assign):
            members[cluster].append(frame[slot])
    for c in range(2):
        mean = np.mean(members[c], axis=0)
        assert np.allclose(state.centroids[c], mean, rtol=1e-10, atol=1e-12)
        assert state.counts[c] == len(members[c])


def test_kmeans_joint_assignment_distinct_clusters():
    rng = np.random.default_rng(9)
    state = OnlineKMeansState.empty(2)
    for _ in range(100):
        # both slots near the same point would collapse under independent
        # nearest-centroid assignment
        frame = np.stack([rng.standard_normal(3), rng.standard_normal(3) * 0.01])
        state, assign, _ = online_kmeans_step(state, frame)
        assert sorted(assign) == [0, 1]


def test_kmeans_purity_and_batch_agreement():
    rng = np.random.default_rng(10)
    dim, n_frames = 8, 500
    mean_a = np.zeros(dim)
    mean_b = np.full(dim, 10.0)  # 10 sigma apart at unit noise
    frames = np.stack(
        [
            mean_a + rng.standard_normal((n_frames, dim)),
            mean_b + rng.standard_normal((n_frames, dim)),
        ]
    )
    state = OnlineKMeansState.empty(2)
    labels = []
    for t in range(n_frames):
        state, assign, _ = online_kmeans_step(state, frames[:, t])
        labels.append(assign)
    labels = np.array(labels)
    # perfect purity: slot 0 (track a) always cluster 0
    assert np.all(labels[:, 0] == 0) and np.all(labels[:, 1] == 1)
    for c, true_mean in ((0, mean_a), (1, mean_b)):
        sigma_bound = 3.0 / np.sqrt(state.counts[c])
        assert np.all(np.abs(state.centroids[c] - true_mean) < max(sigma_bound, 0.2))

    # Lloyd batch k-means oracle, same first-frame initialization
    data = frames.transpose(1, 0, 2).reshape(-1, dim)
    centroids = frames[:, 0].copy()
    for _ in range(100):
        dists = np.abs(data[:, None, :] - centroids[None]).sum(axis=2)
        hard = np.argmin(dists, axis=1)
        new = np.stack([data[hard == c].mean(axis=0) for c in range(2)])
        if np.allclose(new, centroids, atol=1e-14):
            break
        centroids = new
    assert np.allclose(state.centroids, centroids, atol=1e-6)


def test_kmeans_rejects_bad_frame():
    state = OnlineKMeansState.empty(2)
    with pytest.raises(ValueError):
        online_kmeans_step(state, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        online_kmeans_step(state, np.array([[np.nan, 0.0], [0.0, 0.0]]))


# --- build_profiles --------------------------------------------------------------


def test_profiles_centroid_constant_embeddings():
    emb = np.stack([np.full((20, 4), 2.0), np.full((20, 4), -3.0)])
    profiles = build_profiles(emb, mode="centroid")
    assert profiles.mode == "centroid"
    assert np.allclose(profiles.values, emb)


def test_profiles_oracle_mode_reorders():
    rng = np.random.default_rng(11)
    oracle = rng.standard_normal((2, 15, 4))
    est = oracle.copy()
    est[:, 7:] = oracle[::-1, 7:]
    profiles = build_profiles(est, mode="oracle", oracle=oracle)
    assert np.array_equal(profiles.values, oracle)


def test_profiles_mode_argument_validation():
    emb = np.zeros((2, 4, 3))
    with pytest.raises(ValueError):
        build_profiles(emb, mode="oracle")
    with pytest.raises(ValueError):
        build_profiles(emb, mode="centroid", oracle=emb)
    with pytest.raises(ValueError):
        build_profiles(emb, mode="nonsense")


def test_profiles_normalization_flag():
    emb = np.stack([np.full((10, 4), 4.0), np.full((10, 4), -4.0)])
    profiles = build_profiles(emb, mode="centroid", normalize=True)
    norms = np.linalg.norm(profiles.values, axis=-1)
    assert np.allclose(norms, 1.0)


def test_profiles_drift_and_cross_tracks_truth():
    est, truth, _ = drift_and_cross_stream(seed=12, n_frames=300, dim=16)
    profiles = build_profiles(est, mode="centroid")
    dim = truth.shape[2]
    mean_a = truth[0].mean(axis=0)
    # centroid profile 0 stays near track a's mean throughout the back half
    dist = np.sum(np.abs(profiles.values[0, 150:] - mean_a), axis=-1)
    assert np.all(dist < 0.2 * dim)
    # raw slot 0 does not: after a flip it sits on track b
    raw_dist = np.sum(np.abs(est[0] - mean_a), axis=-1)
    assert np.max(raw_dist) > 0.2 * dim


# --- count_track_swaps ------------------------------------------------------------


def test_track_swaps_zero_on_truth():
    _, truth, _ = drift_and_cross_stream(seed=13)
    swaps, perms = count_track_swaps(truth, truth, n_segments=10)
    assert swaps == 0
    assert all(p == (0, 1) for p in perms)


def test_track_swaps_counts_flips():
    est, truth, flips = drift_and_cross_stream(seed=14, n_frames=400, n_flips=3)
    swaps, _ = count_track_swaps(est, truth, n_segments=10)
    assert swaps == 3


def test_track_swaps_centroid_profiles_suppress_flips():
    est, truth, _ = drift_and_cross_stream(seed=15, n_frames=400, n_flips=2)
    raw_swaps, _ = count_track_swaps(est, truth, n_segments=10)
    profiles = build_profiles(est, mode="centroid")
    centroid_swaps, _ = count_track_swaps(profiles.values, truth, n_segments=10)
    assert raw_swaps >= 1
    assert centroid_swaps == 0


# --- embedding container ----------------------------------------------------------


def test_embeddings_file_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    emb = rng.standard_normal((2, 30, 8)).astype(np.float32).astype(np.float64)
    path = tmp_path / "emb.bsrw"
    save_embeddings(path, emb)
    back = load_embeddings(path)
    assert np.array_equal(back, emb)


def test_load_embeddings_rejects_weights(tmp_path):
    from binsep.container import write_container, ContainerError

    path = tmp_path / "w.bsrw"
    write_container(path, {"kind": "weights"}, {"x": np.zeros(3, "f4")})
    with pytest.raises(ContainerError):
        load_embeddings(path)

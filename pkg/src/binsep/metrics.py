"""Scoring: reconstruction SNR, spatial-cue accuracy, and speaker swaps.

The localizer used for scoring is deliberately not a trained model: it
derives one interaural delay per azimuth from the BRIR bank itself and
reads delays out of separation outputs with phase-weighted generalized
cross-correlation. Reports should label DOA errors as coming from this
delay-lookup stand-in.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy import signal as sig

from .audio import MonoSignal, StereoSignal
from .grid import AzimuthGrid
from .spatial import BrirSet, Trajectory

SNR_CLAMP_DB = 120.0
SNR_EPS_REL = 1e-12
DOA_WINDOW_S = 0.080
SILENCE_MEAN_SQUARE = 1e-6


class LengthMismatchError(ValueError):
    """Signals being compared do not align."""


def _samples(x) -> np.ndarray:
    if isinstance(x, MonoSignal):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def _snr_db_clamped(ref: np.ndarray, est: np.ndarray) -> float:
    ref_energy = float(np.sum(ref * ref))
    err = est - ref
    err_energy = float(np.sum(err * err))
    if ref_energy == 0.0:
        # degenerate reference: perfect silence reconstruction scores the
        # positive clamp, anything else the negative clamp
        return SNR_CLAMP_DB if err_energy == 0.0 else -SNR_CLAMP_DB
    ratio = ref_energy / (err_energy + SNR_EPS_REL * ref_energy)
    return float(np.clip(10.0 * np.log10(ratio), -SNR_CLAMP_DB, SNR_CLAMP_DB))


def snr_db(ref, est) -> float:
    """Scale- and shift-sensitive SNR in dB, clamped to +-120.

    10*log10(|x|^2 / (|x_hat - x|^2 + eps)) with eps tied to the
    reference energy so perfect reconstruction hits the +120 clamp.
    """
    ref = _samples(ref)
    est = _samples(est)
    if ref.shape != est.shape:
        raise LengthMismatchError(f"length mismatch: {ref.shape} vs {est.shape}")
    if float(np.sum(ref * ref)) == 0.0:
        raise ValueError("reference has zero energy")
    return _snr_db_clamped(ref, est)


def stereo_snr(ref: StereoSignal, est: StereoSignal, mean: bool = False) -> float:
    """Two-channel SNR: left + right (or their mean with mean=True)."""
    if len(ref) != len(est):
        raise LengthMismatchError(f"length mismatch: {len(ref)} vs {len(est)}")
    total = snr_db(ref.left, est.left) + snr_db(ref.right, est.right)
    return total / 2.0 if mean else total


@dataclass(frozen=True)
class EvalLocalizerTable:
    """One interaural delay (samples) per grid azimuth, from the BRIR bank."""

    azimuths_deg: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        if self.azimuths_deg.shape != self.delays.shape:
            raise ValueError("need one delay per azimuth")
        if not np.all(np.isfinite(self.delays)):
            raise ValueError("delays must be finite")

    def lookup_deg(self, delay: float) -> float:
        """Azimuth of the nearest tabulated delay (ties: lower index)."""
        return float(self.azimuths_deg[int(np.argmin(np.abs(self.delays - delay)))])

    @property
    def max_abs_delay(self) -> float:
        return float(np.max(np.abs(self.delays)))


def build_eval_localizer(brirs: BrirSet) -> EvalLocalizerTable:
    """Tabulate per-azimuth delay as the argmax of left/right cross-correlation."""
    delays = np.empty(brirs.n_azimuths)
    lags = sig.correlation_lags(brirs.filter_len, brirs.filter_len, mode="full")
    for i in range(brirs.n_azimuths):
        left = brirs.left[i]
        right = brirs.right[i]
        if not (np.any(left) and np.any(right)):
            raise ValueError(f"degenerate all-zero filter at azimuth {brirs.azimuths[i]}")
        xcorr = sig.correlate(left, right, mode="full")
        delays[i] = lags[int(np.argmax(xcorr))]
    return EvalLocalizerTable(azimuths_deg=brirs.azimuths.copy(), delays=delays)


def gcc_phat_delay(left: np.ndarray, right: np.ndarray, max_lag: int) -> int:
    """Phase-weighted cross-correlation delay, restricted to |lag| <= max_lag."""
    n = left.size + right.size
    spec_l = np.fft.rfft(left, n=n)
    spec_r = np.fft.rfft(right, n=n)
    cross = spec_l * np.conj(spec_r)
    cc = np.fft.irfft(cross / np.maximum(np.abs(cross), 1e-12), n=n)
    max_lag = min(max_lag, n // 2 - 1)
    cc = np.concatenate([cc[-max_lag:], cc[: max_lag + 1]])
    return int(np.argmax(cc)) - max_lag


def estimate_doa_track(
    out: StereoSignal,
    table: EvalLocalizerTable,
    window_s: float = DOA_WINDOW_S,
    silence_threshold: float = SILENCE_MEAN_SQUARE,
) -> np.ndarray:
    """Azimuth estimate per analysis window; NaN marks silent windows.

    Each window's interaural delay is measured with GCC-PHAT and mapped
    to the nearest tabulated azimuth. Windows whose two-channel mean
    square falls below the threshold yield no estimate.
    """
    if table.azimuths_deg.size == 0:
        raise ValueError("empty localizer table")
    window = int(round(window_s * out.sample_rate))
    arr = out.as_array()
    n_windows = arr.shape[1] // window
    if n_windows == 0:
        raise ValueError(f"output shorter than one {window}-sample window")
    max_lag = int(np.ceil(table.max_abs_delay)) + 2
    track = np.full(n_windows, np.nan)
    for w in range(n_windows):
        seg = arr[:, w * window : (w + 1) * window]
        if float(np.mean(seg * seg)) < silence_threshold:
            continue
        delay = gcc_phat_delay(seg[0], seg[1], max_lag)
        track[w] = table.lookup_deg(delay)
    return track


@dataclass(frozen=True)
class DoaError:
    mae_deg: float
    n_scored: int
    n_no_estimate: int


def doa_error(est_track: np.ndarray, truth_track: np.ndarray) -> DoaError:
    """Mean absolute azimuth error over scored (non-NaN) windows."""
    est_track = np.asarray(est_track, dtype=np.float64)
    truth_track = np.asarray(truth_track, dtype=np.float64)
    if est_track.shape != truth_track.shape:
        raise LengthMismatchError(
            f"window count mismatch: {est_track.shape} vs {truth_track.shape}"
        )
    scored = ~np.isnan(est_track)
    n_scored = int(np.count_nonzero(scored))
    if n_scored == 0:
        raise ValueError("no scored windows (all were silent)")
    mae = float(np.mean(np.abs(est_track[scored] - truth_track[scored])))
    return DoaError(mae_deg=mae, n_scored=n_scored, n_no_estimate=est_track.size - n_scored)


def truth_window_track(
    traj: Trajectory,
    grid: AzimuthGrid,
    n_windows: int,
    window_samples: int,
) -> np.ndarray:
    """Ground-truth azimuth per window, read at each window's first sample."""
    return np.array(
        [grid.degrees(traj.index_at(w * window_samples)) for w in range(n_windows)]
    )


@dataclass(frozen=True)
class SwapReport:
    """Segment-wise output/reference binding and its consistency."""

    n_segments: int
    permutations: tuple       # per segment, tuple mapping output slot -> reference
    flags: tuple              # per adjacent pair: did the permutation change
    swap_count: int
    segment_snr_db: tuple     # best summed stereo SNR per segment

    def permutation_string(self) -> str:
        """'A' for identity binding, 'B' for the swapped one (two-speaker case)."""
        letters = {(0, 1): "A", (1, 0): "B"}
        return "".join(letters.get(p, "?") for p in self.permutations)


def count_swaps(outputs, references, n_segments: int = 10) -> SwapReport:
    """Count binding changes between adjacent segments of long outputs.

    Splits the recording into n_segments equal segments (remainder joins
    the last), binds outputs to references per segment by maximizing the
    summed two-channel SNR over all permutations, and counts adjacent
    segments whose binding differs. Zero-energy reference segments score
    under the clamped SNR convention rather than erroring.
    """
    if len(outputs) != len(references):
        raise ValueError("need as many outputs as references")
    n_speakers = len(outputs)
    lengths = {len(x) for x in list(outputs) + list(references)}
    if len(lengths) != 1:
        raise LengthMismatchError(f"signals must share one length, got {sorted(lengths)}")
    total = lengths.pop()
    if n_segments < 1 or total < n_segments:
        raise ValueError("need at least one sample per segment")

    out_arr = np.stack([o.as_array() for o in outputs])   # (n, 2, total)
    ref_arr = np.stack([r.as_array() for r in references])
    seg_len = total // n_segments

    perms_all = list(permutations(range(n_speakers)))
    chosen = []
    seg_snrs = []
    for k in range(n_segments):
        lo = k * seg_len
        hi = (k + 1) * seg_len if k < n_segments - 1 else total
        best_perm, best_score = None, -np.inf
        for perm in perms_all:
            score = 0.0
            for i in range(n_speakers):
                for ch in range(2):
                    score += _snr_db_clamped(
                        ref_arr[i, ch, lo:hi], out_arr[perm[i], ch, lo:hi]
                    )
            if score > best_score:
                best_score, best_perm = score, perm
        chosen.append(best_perm)
        seg_snrs.append(best_score)

    flags = tuple(a != b for a, b in zip(chosen, chosen[1:]))
    return SwapReport(
        n_segments=n_segments,
        permutations=tuple(chosen),
        flags=flags,
        swap_count=sum(flags),
        segment_snr_db=tuple(seg_snrs),
    )

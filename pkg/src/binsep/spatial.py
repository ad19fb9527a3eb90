"""Moving binaural source simulation via time-varying BRIR convolution.

A moving source is rendered by selecting, for every output sample, the
impulse-response pair of the azimuth the source currently occupies:

    out_L[n] = sum_j sum_k 1[source at j when emitting n] * h_j_L[k] * s[n - k]

The filter is switched by the *output* sample index, so a position
change swaps the whole convolution tail at once (no crossfade). Motion
is quantized to the azimuth grid and reflects at the +-90 degree ends.
"""

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sig

from .audio import MonoSignal, StereoSignal, SAMPLE_RATE, read_wav, write_wav
from .configio import ConfigError, SectionView, check_version, format_config, load_config
from .grid import AzimuthGrid, default_grid

SPEED_OF_SOUND_M_S = 343.0
HEAD_RADIUS_M = 0.0875

BRIR_MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class BrirSet:
    """Bank of left/right impulse-response pairs over an azimuth grid."""

    azimuths: np.ndarray  # degrees, strictly increasing
    left: np.ndarray      # (n_azimuths, filter_len)
    right: np.ndarray     # (n_azimuths, filter_len)
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        az = np.asarray(self.azimuths, dtype=np.float64)
        left = np.asarray(self.left, dtype=np.float64)
        right = np.asarray(self.right, dtype=np.float64)
        if az.ndim != 1 or az.size == 0:
            raise ValueError("need at least one azimuth")
        if np.any(np.diff(az) <= 0):
            raise ValueError("azimuths must be strictly increasing")
        if left.shape != (az.size, left.shape[1]) or right.shape != left.shape:
            raise ValueError(
                f"filter banks must share one shape, got {left.shape} and {right.shape}"
            )
        if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
            raise ValueError("filters must be finite")
        object.__setattr__(self, "azimuths", az)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def n_azimuths(self) -> int:
        return self.azimuths.size

    @property
    def filter_len(self) -> int:
        return self.left.shape[1]

    def grid(self) -> AzimuthGrid:
        """Infer the uniform grid backing this set; error if non-uniform."""
        if self.n_azimuths == 1:
            return AzimuthGrid(float(self.azimuths[0]), 1.0, 1)
        steps = np.diff(self.azimuths)
        if not np.allclose(steps, steps[0], atol=1e-9):
            raise ValueError("azimuths are not uniformly spaced")
        return AzimuthGrid(float(self.azimuths[0]), float(steps[0]), self.n_azimuths)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant azimuth path: (start_sample, grid_index) breakpoints."""

    breakpoints: tuple

    def __post_init__(self):
        bps = tuple((int(s), int(j)) for s, j in self.breakpoints)
        if not bps:
            raise ValueError("trajectory needs at least one breakpoint")
        if bps[0][0] != 0:
            raise ValueError("first breakpoint must start at sample 0")
        starts = [s for s, _ in bps]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("breakpoint start samples must be strictly increasing")
        if any(j < 0 for _, j in bps):
            raise ValueError("grid indices must be non-negative")
        object.__setattr__(self, "breakpoints", bps)

    def max_index(self) -> int:
        return max(j for _, j in self.breakpoints)

    def segments(self, total_len: int):
        """Yield (start, end, grid_index) covering [0, total_len)."""
        starts = [s for s, _ in self.breakpoints]
        for k, (start, idx) in enumerate(self.breakpoints):
            if start >= total_len:
                break
            end = min(starts[k + 1], total_len) if k + 1 < len(starts) else total_len
            yield start, end, idx

    def index_at(self, n: int) -> int:
        """Grid index active at sample n (last segment extends forever)."""
        if n < 0:
            raise ValueError("sample index must be >= 0")
        idx = self.breakpoints[0][1]
        for start, j in self.breakpoints:
            if start > n:
                break
            idx = j
        return idx

    def n_direction_changes(self, grid_count: int | None = None) -> int:
        """Number of times the step direction reverses along the path."""
        idxs = [j for _, j in self.breakpoints]
        steps = [b - a for a, b in zip(idxs, idxs[1:])]
        return sum(1 for a, b in zip(steps, steps[1:]) if (a > 0) != (b > 0))


def _segment_convolve(src: np.ndarray, h: np.ndarray, start: int, end: int) -> np.ndarray:
    # Convolution restricted to output samples [start, end); anything the
    # filter would reach before sample 0 is implicitly zero.
    lo = max(start - (h.size - 1), 0)
    y = sig.convolve(src[lo:end], h)
    return y[start - lo : end - lo]


def spatialize(source: MonoSignal, brirs: BrirSet, traj: Trajectory) -> StereoSignal:
    """Render a moving source through its trajectory over the BRIR bank."""
    if source.sample_rate != brirs.sample_rate:
        raise ValueError(
            f"rate mismatch: source {source.sample_rate}, filters {brirs.sample_rate}"
        )
    if traj.max_index() >= brirs.n_azimuths:
        raise ValueError(
            f"trajectory index {traj.max_index()} outside grid of {brirs.n_azimuths}"
        )
    src = source.samples
    out = np.zeros((2, src.size))
    for start, end, j in traj.segments(src.size):
        out[0, start:end] = _segment_convolve(src, brirs.left[j], start, end)
        out[1, start:end] = _segment_convolve(src, brirs.right[j], start, end)
    return StereoSignal.from_array(out, source.sample_rate)


def make_trajectory(
    start_deg: float,
    velocity_deg_per_s: float,
    direction: str,
    duration_s: float,
    grid: AzimuthGrid,
    sample_rate: int = SAMPLE_RATE,
) -> Trajectory:
    """Constant-velocity path quantized to the grid, reflecting at the ends.

    The source dwells step_deg / velocity seconds at each grid point and
    hops to the neighbor in its movement direction; at a grid boundary
    the direction reverses ('ccw' increases azimuth, 'cw' decreases it).
    """
    if velocity_deg_per_s <= 0:
        raise ValueError("velocity must be positive")
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if direction in ("ccw", "+"):
        step = 1
    elif direction in ("cw", "-"):
        step = -1
    else:
        raise ValueError(f"direction must be 'cw' or 'ccw', got {direction!r}")

    idx = grid.index_of(start_deg)
    dwell_s = grid.step_deg / velocity_deg_per_s
    n_total = int(round(duration_s * sample_rate))
    bps = []
    m = 0
    while True:
        start = int(round(m * dwell_s * sample_rate))
        if start >= n_total:
            break
        bps.append((start, idx))
        if grid.count > 1:
            nxt = idx + step
            if nxt < 0 or nxt >= grid.count:
                step = -step
                nxt = idx + step
            idx = nxt
        m += 1
    return Trajectory(tuple(bps))


def _two_channel_energy(x: StereoSignal) -> float:
    arr = x.as_array()
    return float(np.sum(arr * arr))


def mix_at_relative_snr(a: StereoSignal, b: StereoSignal, rel_snr_db: float):
    """Mix two stereo signals so a is rel_snr_db louder than scaled b.

    Returns (mixture, scale) where scale is the gain applied to b. Energy
    is summed over both channels. 0 dB means equal energy.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    pa = _two_channel_energy(a)
    pb = _two_channel_energy(b)
    if pa <= 0.0 or pb <= 0.0:
        raise ValueError("both signals need nonzero energy")
    scale = float(np.sqrt(pa / (pb * 10.0 ** (rel_snr_db / 10.0))))
    mixture = a.as_array() + scale * b.as_array()
    return StereoSignal.from_array(mixture, a.sample_rate), scale


def _woodworth_itd_s(theta_deg: float) -> float:
    # Spherical-head interaural time difference; positive when the right
    # ear leads (source at positive azimuth).
    theta = np.deg2rad(theta_deg)
    return HEAD_RADIUS_M / SPEED_OF_SOUND_M_S * (np.sin(theta) + theta)


def pure_delay_brirs(
    grid: AzimuthGrid | None = None,
    delay_per_step: int = 2,
    base_delay: int = 40,
    filter_len: int = 128,
    sample_rate: int = SAMPLE_RATE,
) -> BrirSet:
    """Delta-pair bank whose interaural delay is linear in azimuth.

    Each azimuth k steps from center gets left delay base+k and right
    delay base-k (in units of delay_per_step/2 samples), so the
    interaural delay is exactly delay_per_step * k samples. Useful as a
    fully controlled scene for localizer checks.
    """
    grid = grid or default_grid()
    if delay_per_step % 2 != 0:
        raise ValueError("delay_per_step must be even (split across ears)")
    half = delay_per_step // 2
    center = (grid.count - 1) / 2.0
    left = np.zeros((grid.count, filter_len))
    right = np.zeros((grid.count, filter_len))
    for i in range(grid.count):
        k = int(round(i - center))
        dl = base_delay + half * k
        dr = base_delay - half * k
        if not (0 <= dl < filter_len and 0 <= dr < filter_len):
            raise ValueError("delays exceed filter_len; raise filter_len or base_delay")
        left[i, dl] = 1.0
        right[i, dr] = 1.0
    return BrirSet(grid.all_degrees(), left, right, sample_rate)


def synth_brir_set(
    grid: AzimuthGrid | None = None,
    rt60_s: float = 0.25,
    seed: int = 0,
    filter_len: int | None = None,
    n_reflections: int = 8,
    sample_rate: int = SAMPLE_RATE,
) -> BrirSet:
    """Synthetic binaural room responses for self-contained experiments.

    Direct path with a spherical-head interaural delay and a mild level
    shadow, sparse random early reflections, and an exponentially
    decaying noise tail matching the requested RT60. rt60_s = 0 with
    n_reflections = 0 degenerates to anechoic delta pairs. Deterministic
    in (grid, rt60_s, seed).
    """
    grid = grid or default_grid()
    base = 32
    if filter_len is None:
        filter_len = max(256, base + 64 + int(round(rt60_s * sample_rate)))
    rng = np.random.default_rng(seed)
    left = np.zeros((grid.count, filter_len))
    right = np.zeros((grid.count, filter_len))
    t = np.arange(filter_len) / sample_rate
    for i, theta in enumerate(grid.all_degrees()):
        itd = _woodworth_itd_s(theta) * sample_rate
        dl = base + int(round(itd / 2.0))
        dr = base - int(round(itd / 2.0))
        shadow = 0.2 * np.sin(np.deg2rad(theta))
        left[i, dl] = 1.0 - shadow
        right[i, dr] = 1.0 + shadow
        for ear, arr in ((0, left), (1, right)):
            for _ in range(n_reflections if rt60_s > 0 else 0):
                lag = rng.integers(base + 80, filter_len - 1)
                amp = rng.uniform(0.08, 0.35) * np.sign(rng.standard_normal())
                arr[i, lag] += amp * 10.0 ** (-3.0 * (lag / sample_rate) / max(rt60_s, 1e-6))
        if rt60_s > 0:
            envelope = 0.12 * 10.0 ** (-3.0 * t / rt60_s)
            tail_from = base + 40
            left[i, tail_from:] += envelope[tail_from:] * rng.standard_normal(
                filter_len - tail_from
            )
            right[i, tail_from:] += envelope[tail_from:] * rng.standard_normal(
                filter_len - tail_from
            )
    return BrirSet(grid.all_degrees(), left, right, sample_rate)


def _azimuth_filename(deg: float) -> str:
    d = int(round(deg))
    if abs(d - deg) > 1e-9:
        raise ValueError(f"azimuth {deg} is not an integer degree; cannot name its file")
    return f"az{'-' if d < 0 else '+'}{abs(d):03d}.wav"


def save_brir_set(brirs: BrirSet, directory, rt60_tag: str = "unknown"):
    """Write one stereo WAV per azimuth plus a manifest into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, deg in enumerate(brirs.azimuths):
        pair = StereoSignal.from_array(
            np.stack([brirs.left[i], brirs.right[i]]), brirs.sample_rate
        )
        write_wav(pair, directory / _azimuth_filename(deg), codec="float32")
    g = brirs.grid()
    manifest = format_config(
        [
            (
                "",
                {
                    "version": 1,
                    "grid_min_deg": float(g.min_deg),
                    "grid_step_deg": float(g.step_deg),
                    "grid_count": g.count,
                    "rt60_tag": rt60_tag,
                    "filter_len": brirs.filter_len,
                    "sample_rate": brirs.sample_rate,
                },
            )
        ]
    )
    (directory / BRIR_MANIFEST_NAME).write_text(manifest, encoding="utf-8")


def load_brir_set(directory) -> BrirSet:
    """Load a BRIR directory written by save_brir_set."""
    directory = Path(directory)
    manifest_path = directory / BRIR_MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"no {BRIR_MANIFEST_NAME} in {directory}")
    sections = load_config(manifest_path)
    if len(sections) != 1 or sections[0].name != "":
        raise ConfigError(f"{manifest_path}: expected a flat manifest")
    view = SectionView(sections[0], str(manifest_path))
    check_version(view)
    g = AzimuthGrid(
        view.get_float("grid_min_deg"),
        view.get_float("grid_step_deg"),
        view.get_int("grid_count"),
    )
    view.get_str("rt60_tag", default="unknown")
    filter_len = view.get_int("filter_len")
    rate = view.get_int("sample_rate")
    view.finish()

    left = np.zeros((g.count, filter_len))
    right = np.zeros((g.count, filter_len))
    for i, deg in enumerate(g.all_degrees()):
        pair = read_wav(directory / _azimuth_filename(deg), expected_rate=rate)
        if not isinstance(pair, StereoSignal):
            raise ConfigError(f"{directory}: BRIR file for {deg} deg is not stereo")
        if len(pair) != filter_len:
            raise ConfigError(
                f"{directory}: BRIR for {deg} deg has {len(pair)} samples, "
                f"manifest says {filter_len}"
            )
        left[i] = pair.left.samples
        right[i] = pair.right.samples
    return BrirSet(g.all_degrees(), left, right, rate)


def resolve_brirs(spec: str, env_root: str = "BINSEP_BRIR_ROOT") -> BrirSet:
    """Turn a BRIR spec string into a BrirSet.

    Accepts 'synth[:seed[:rt60_s[:filter_len]]]', 'puredelay[:step]', or a
    directory path (relative paths are also tried under $BINSEP_BRIR_ROOT).
    """
    if spec.startswith("synth"):
        parts = spec.split(":")
        seed = int(parts[1]) if len(parts) > 1 and parts[1] else 0
        rt60 = float(parts[2]) if len(parts) > 2 and parts[2] else 0.25
        flen = int(parts[3]) if len(parts) > 3 and parts[3] else None
        return synth_brir_set(rt60_s=rt60, seed=seed, filter_len=flen)
    if spec.startswith("puredelay"):
        parts = spec.split(":")
        step = int(parts[1]) if len(parts) > 1 and parts[1] else 2
        return pure_delay_brirs(delay_per_step=step)
    path = Path(spec)
    if not path.is_dir():
        root = os.environ.get(env_root)
        if root and (Path(root) / spec).is_dir():
            path = Path(root) / spec
        else:
            raise FileNotFoundError(f"BRIR directory {spec!r} not found")
    return load_brir_set(path)

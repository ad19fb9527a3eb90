"""Core audio types plus lossless WAV ingestion and emission.

Everything downstream operates on MonoSignal / StereoSignal at a fixed
16 kHz rate. Files are RIFF WAV, either PCM-16 little-endian or IEEE
float-32, with 1 or 2 channels. There is deliberately no resampling:
signals at other rates are rejected.
"""

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
PCM16_SCALE = 32768.0


class WavFormatError(ValueError):
    """Malformed header or unsupported WAV codec/layout."""


class SampleRateError(WavFormatError):
    """File sample rate differs from the expected rate."""


def _as_samples(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D sample array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    return arr


@dataclass(frozen=True)
class MonoSignal:
    """A single channel of finite float samples at a fixed rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_samples(self.samples))
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StereoSignal:
    """Two synchronized channels of equal length and rate."""

    left: MonoSignal
    right: MonoSignal

    def __post_init__(self):
        if len(self.left) != len(self.right):
            raise ValueError(
                f"channel lengths differ: left={len(self.left)} right={len(self.right)}"
            )
        if self.left.sample_rate != self.right.sample_rate:
            raise ValueError("channel sample rates differ")

    def __len__(self) -> int:
        return len(self.left)

    @property
    def sample_rate(self) -> int:
        return self.left.sample_rate

    @property
    def duration_s(self) -> float:
        return self.left.duration_s

    def as_array(self) -> np.ndarray:
        """Channels stacked as a (2, n) array, left first."""
        return np.stack([self.left.samples, self.right.samples])

    @classmethod
    def from_array(cls, arr, sample_rate: int = SAMPLE_RATE) -> "StereoSignal":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != 2:
            raise ValueError(f"expected a (2, n) array, got shape {arr.shape}")
        return cls(MonoSignal(arr[0], sample_rate), MonoSignal(arr[1], sample_rate))


@dataclass(frozen=True)
class FrameSpec:
    """Analysis framing: window length and hop, both in samples."""

    frame_len: int
    hop: int

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len):
            raise ValueError(
                f"need 0 < hop <= frame_len, got hop={self.hop} frame_len={self.frame_len}"
            )


def frame_count(signal_len: int, spec: FrameSpec) -> int:
    """Number of fully populated frames; 0 when the signal is too short.

    Only whole frames are counted (no tail padding) so that metric paths
    never score synthetic samples.
    """
    if signal_len < 0:
        raise ValueError("signal_len must be >= 0")
    if signal_len < spec.frame_len:
        return 0
    return (signal_len - spec.frame_len) // spec.hop + 1


def read_wav(path, expected_rate: int | None = None):
    """Read a PCM-16 or float-32 WAV into a MonoSignal or StereoSignal.

    PCM-16 is normalized by 32768 so the full-scale negative value maps
    to exactly -1.0. Float-32 samples are passed through unchanged.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise WavFormatError(f"{path}: malformed WAV ({exc})") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported sample format {data.dtype} (want PCM-16 or float-32)"
        )

    if expected_rate is not None and rate != expected_rate:
        raise SampleRateError(f"{path}: sample rate {rate}, expected {expected_rate}")

    if samples.ndim == 1:
        return MonoSignal(samples, rate)
    if samples.ndim == 2 and samples.shape[1] == 2:
        return StereoSignal(MonoSignal(samples[:, 0], rate), MonoSignal(samples[:, 1], rate))
    raise WavFormatError(f"{path}: unsupported channel count {samples.shape[1]}")


def write_wav(signal, path, codec: str = "float32") -> int:
    """Write a signal as WAV; returns the number of clipped samples.

    float-32 is exact (round trips bit for bit). PCM-16 quantizes via
    round(x * 32768) and clips anything outside [-32768, 32767], so a
    full-scale +1.0 clips to 32767 and counts as clipped.
    """
    if isinstance(signal, StereoSignal):
        data = signal.as_array().T
        rate = signal.sample_rate
    elif isinstance(signal, MonoSignal):
        data = signal.samples
        rate = signal.sample_rate
    else:
        raise TypeError(f"expected MonoSignal or StereoSignal, got {type(signal)!r}")

    if codec == "float32":
        wavfile.write(path, rate, data.astype(np.float32))
        return 0
    if codec == "pcm16":
        q = np.rint(data * PCM16_SCALE)
        clipped = int(np.count_nonzero((q > 32767.0) | (q < -32768.0)))
        q = np.clip(q, -32768.0, 32767.0)
        wavfile.write(path, rate, q.astype(np.int16))
        return clipped
    raise ValueError(f"unknown codec {codec!r} (want 'float32' or 'pcm16')")

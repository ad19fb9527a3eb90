"""Causal streaming inference primitives and the assembled networks.

All forwards are pure functions of (input, weights, stream state) and
strictly causal: frame t of any output depends only on input frames
<= t. Streaming is handled by a StreamState carrying per-layer left
context, cumulative-normalization statistics, and recurrent state, so
chunked evaluation reproduces whole-input evaluation.

Weights live in a self-describing container (see container.py) whose
descriptor pins every architecture dimension; loading validates each
tensor's shape against the descriptor.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.signal import windows
from scipy.special import expit

from .audio import MonoSignal, StereoSignal, SAMPLE_RATE
from .container import ContainerError, read_container, write_container

NORM_EPS = 1e-8
ILD_EPS = 1e-8


@dataclass(frozen=True)
class ArchSpec:
    """Network dimensions; the single source of truth for tensor shapes."""

    encoder_filters: int = 64
    encoder_kernel: int = 64    # samples; also the frame hop (non-overlapping)
    stft_win: int = 256
    tcn_kernel: int = 3
    bottleneck: int = 64
    hidden: int = 128
    embed_dim: int = 64
    doa_classes: int = 37
    speaker_stacks: int = 5
    fusion_stacks: int = 2
    extraction_stacks: int = 3
    blocks_per_stack: int = 7
    lstm_layers: int = 2
    lstm_hidden: int = 128
    n_speakers: int = 2

    def __post_init__(self):
        for field in dataclasses.fields(self):
            if getattr(self, field.name) <= 0:
                raise ValueError(f"{field.name} must be positive")
        if self.stft_win < self.encoder_kernel:
            raise ValueError("stft_win must cover at least one frame")

    @property
    def hop(self) -> int:
        return self.encoder_kernel

    @property
    def stft_bins(self) -> int:
        return self.stft_win // 2 + 1

    @property
    def feature_dim(self) -> int:
        # encoder features of both channels + IPD + ILD
        return 2 * self.encoder_filters + 2 * self.stft_bins

    def descriptor(self) -> dict:
        desc = {"kind": "weights"}
        for field in dataclasses.fields(self):
            desc[field.name] = getattr(self, field.name)
        return desc

    @classmethod
    def from_descriptor(cls, desc: dict) -> "ArchSpec":
        entries = dict(desc)
        entries.pop("kind", None)
        kwargs = {}
        for field in dataclasses.fields(cls):
            if field.name not in entries:
                raise ContainerError(f"descriptor missing {field.name!r}")
            try:
                kwargs[field.name] = int(entries.pop(field.name))
            except ValueError:
                raise ContainerError(f"descriptor field {field.name!r} is not an integer") from None
        if entries:
            raise ContainerError(f"descriptor has unknown field {next(iter(entries))!r}")
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ContainerError(f"bad descriptor: {exc}") from exc

    def _tcn_block_shapes(self, prefix: str, conditioned: bool) -> dict:
        shapes = {}
        if conditioned:
            shapes[prefix + "film.f"] = (self.embed_dim, self.bottleneck)
            shapes[prefix + "film.g"] = (self.embed_dim, self.bottleneck)
        shapes.update(
            {
                prefix + "conv_in.weight": (self.bottleneck, self.hidden),
                prefix + "conv_in.bias": (self.hidden,),
                prefix + "prelu1.alpha": (self.hidden,),
                prefix + "norm1.gamma": (self.hidden,),
                prefix + "norm1.beta": (self.hidden,),
                prefix + "dconv.weight": (self.tcn_kernel, self.hidden),
                prefix + "prelu2.alpha": (self.hidden,),
                prefix + "norm2.gamma": (self.hidden,),
                prefix + "norm2.beta": (self.hidden,),
                prefix + "conv_out.weight": (self.hidden, self.bottleneck),
                prefix + "conv_out.bias": (self.bottleneck,),
            }
        )
        return shapes

    def expected_shapes(self) -> dict:
        """Every tensor a weight container must provide, in stable order."""
        shapes = {
            "encoder.weight": (self.encoder_filters, self.encoder_kernel),
            "decoder.weight": (self.encoder_filters, self.encoder_kernel),
            "speaker.input.weight": (self.feature_dim, self.bottleneck),
            "speaker.input.bias": (self.bottleneck,),
        }
        for s in range(self.speaker_stacks):
            for b in range(self.blocks_per_stack):
                shapes.update(self._tcn_block_shapes(f"speaker.stack{s}.block{b}.", False))
        shapes["speaker.head.weight"] = (self.bottleneck, self.n_speakers * self.embed_dim)
        shapes["speaker.head.bias"] = (self.n_speakers * self.embed_dim,)

        shapes["fusion.input.weight"] = (self.feature_dim, self.bottleneck)
        shapes["fusion.input.bias"] = (self.bottleneck,)
        for s in range(self.fusion_stacks):
            for b in range(self.blocks_per_stack):
                shapes.update(self._tcn_block_shapes(f"fusion.stack{s}.block{b}.", True))

        shapes["loc.film.f"] = (self.embed_dim, self.bottleneck)
        shapes["loc.film.g"] = (self.embed_dim, self.bottleneck)
        in_dim = self.bottleneck
        for layer in range(self.lstm_layers):
            shapes[f"loc.lstm{layer}.w_ih"] = (in_dim, 4 * self.lstm_hidden)
            shapes[f"loc.lstm{layer}.w_hh"] = (self.lstm_hidden, 4 * self.lstm_hidden)
            shapes[f"loc.lstm{layer}.bias"] = (4 * self.lstm_hidden,)
            in_dim = self.lstm_hidden
        shapes["loc.head.weight"] = (self.lstm_hidden, self.doa_classes)
        shapes["loc.head.bias"] = (self.doa_classes,)

        shapes["extract.input.weight"] = (self.bottleneck + self.doa_classes, self.bottleneck)
        shapes["extract.input.bias"] = (self.bottleneck,)
        for s in range(self.extraction_stacks):
            for b in range(self.blocks_per_stack):
                shapes.update(self._tcn_block_shapes(f"extract.stack{s}.block{b}.", True))
        shapes["extract.head.weight"] = (self.bottleneck, 2 * self.encoder_filters)
        shapes["extract.head.bias"] = (2 * self.encoder_filters,)
        return shapes


class WeightContainer:
    """Validated, immutable tensor bank; safe to share across streams."""

    def __init__(self, arch: ArchSpec, tensors: dict):
        self.arch = arch
        self.tensors = tensors

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def load_weights(path) -> WeightContainer:
    """Load and shape-check a weight container."""
    descriptor, raw = read_container(path)
    kind = descriptor.get("kind", "weights")
    if kind != "weights":
        raise ContainerError(f"{path}: container kind {kind!r} is not a weight bank")
    arch = ArchSpec.from_descriptor(descriptor)
    expected = arch.expected_shapes()
    for name, shape in expected.items():
        if name not in raw:
            raise ContainerError(f"{path}: missing tensor {name!r}")
        if raw[name].shape != shape:
            raise ContainerError(
                f"{path}: tensor {name!r} has shape {raw[name].shape}, expected {shape}"
            )
    for name in raw:
        if name not in expected:
            raise ContainerError(f"{path}: unexpected tensor {name!r}")
    tensors = {name: raw[name].astype(np.float64) for name in expected}
    return WeightContainer(arch, tensors)


def gen_weights(arch: ArchSpec, seed: int, path):
    """Emit a deterministic random weight bank: uniform +-1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in arch.expected_shapes().items():
        fan_in = shape[0] if len(shape) > 1 else 1
        bound = 1.0 / np.sqrt(fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    write_container(path, arch.descriptor(), tensors)


class StreamState:
    """Per-stream mutable context: ring buffers, norm stats, LSTM state.

    Single-owner; share the WeightContainer across streams, never this.
    """

    def __init__(self):
        self.buffers = {}
        self.norms = {}
        self.lstm = {}
        self.frames = 0

    def reset(self):
        self.buffers.clear()
        self.norms.clear()
        self.lstm.clear()
        self.frames = 0

    def context(self, name: str, rows: int, cols: int) -> np.ndarray:
        if name not in self.buffers:
            self.buffers[name] = np.zeros((rows, cols))
        return self.buffers[name]

    def set_context(self, name: str, value: np.ndarray):
        self.buffers[name] = value

    def norm_stats(self, name: str):
        return self.norms.get(name, (0.0, 0.0, 0.0))

    def set_norm_stats(self, name: str, stats):
        self.norms[name] = stats

    def lstm_state(self, name: str, size: int):
        if name not in self.lstm:
            self.lstm[name] = (np.zeros(size), np.zeros(size))
        return self.lstm[name]

    def set_lstm_state(self, name: str, value):
        self.lstm[name] = value


# ---------------------------------------------------------------------------
# primitive layers


def prelu(x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + alpha * np.minimum(x, 0.0)


def film(x: np.ndarray, profile: np.ndarray, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Per-frame affine modulation of x by a projected conditioning vector."""
    if profile.shape[0] != x.shape[0]:
        raise ValueError(f"profile frames {profile.shape[0]} != activation frames {x.shape[0]}")
    return (profile @ f) * x + (profile @ g)


def cumulative_layer_norm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    state: StreamState,
    name: str,
    eps: float = NORM_EPS,
) -> np.ndarray:
    """Normalize each frame by statistics over all channels and frames <= t."""
    n_frames, n_chan = x.shape
    count0, sum0, sumsq0 = state.norm_stats(name)
    csum = sum0 + np.cumsum(np.sum(x, axis=1))
    csumsq = sumsq0 + np.cumsum(np.sum(x * x, axis=1))
    counts = count0 + n_chan * np.arange(1, n_frames + 1, dtype=np.float64)
    mean = csum / counts
    var = np.maximum(csumsq / counts - mean * mean, 0.0)
    state.set_norm_stats(name, (counts[-1], csum[-1], csumsq[-1]))
    return (x - mean[:, None]) / np.sqrt(var + eps)[:, None] * gamma + beta


def causal_depthwise_conv(
    x: np.ndarray, weight: np.ndarray, dilation: int, state: StreamState, name: str
) -> np.ndarray:
    """Dilated depthwise convolution over frames, left-padded with context.

    Left context is exactly dilation * (kernel - 1) frames; tap k of the
    kernel reads (kernel - 1 - k) * dilation frames into the past.
    """
    kernel, n_chan = weight.shape
    rows = dilation * (kernel - 1)
    n_frames = x.shape[0]
    if rows:
        ctx = state.context(name, rows, n_chan)
        padded = np.concatenate([ctx, x])
        state.set_context(name, padded[padded.shape[0] - rows :].copy())
    else:
        padded = x
    out = np.zeros_like(x)
    for k in range(kernel):
        out += weight[k] * padded[k * dilation : k * dilation + n_frames]
    return out


def causal_tcn_block(
    x: np.ndarray, state: StreamState, weights, prefix: str, dilation: int
) -> np.ndarray:
    """One residual block: pointwise expand, dilated depthwise, pointwise back."""
    y = x @ weights[prefix + "conv_in.weight"] + weights[prefix + "conv_in.bias"]
    y = prelu(y, weights[prefix + "prelu1.alpha"])
    y = cumulative_layer_norm(
        y, weights[prefix + "norm1.gamma"], weights[prefix + "norm1.beta"], state, prefix + "norm1"
    )
    y = causal_depthwise_conv(y, weights[prefix + "dconv.weight"], dilation, state, prefix + "dconv")
    y = prelu(y, weights[prefix + "prelu2.alpha"])
    y = cumulative_layer_norm(
        y, weights[prefix + "norm2.gamma"], weights[prefix + "norm2.beta"], state, prefix + "norm2"
    )
    y = y @ weights[prefix + "conv_out.weight"] + weights[prefix + "conv_out.bias"]
    return x + y


def _lstm_layer(
    x: np.ndarray, w_ih: np.ndarray, w_hh: np.ndarray, bias: np.ndarray, state: StreamState, name: str
) -> np.ndarray:
    size = w_hh.shape[0]
    h, c = state.lstm_state(name, size)
    z_in = x @ w_ih + bias
    out = np.empty((x.shape[0], size))
    for t in range(x.shape[0]):
        z = z_in[t] + h @ w_hh
        gate_i = expit(z[:size])
        gate_f = expit(z[size : 2 * size])
        gate_g = np.tanh(z[2 * size : 3 * size])
        gate_o = expit(z[3 * size :])
        c = gate_f * c + gate_i * gate_g
        h = gate_o * np.tanh(c)
        out[t] = h
    state.set_lstm_state(name, (h, c))
    return out


# ---------------------------------------------------------------------------
# framing, encoder/decoder, spatial features


def _pad_to_frames(x: np.ndarray, hop: int) -> np.ndarray:
    remainder = x.shape[-1] % hop
    if remainder == 0:
        return x
    pad = [(0, 0)] * (x.ndim - 1) + [(0, hop - remainder)]
    return np.pad(x, pad)


def encode(channel, weights: WeightContainer) -> np.ndarray:
    """Strided linear analysis: (T, filters) features, tail zero-padded."""
    x = channel.samples if isinstance(channel, MonoSignal) else np.asarray(channel, np.float64)
    if x.size == 0:
        raise ValueError("cannot encode an empty signal")
    hop = weights.arch.hop
    x = _pad_to_frames(x, hop)
    frames = x.reshape(-1, hop)
    return frames @ weights["encoder.weight"].T


def _decode_frames(features: np.ndarray, weights: WeightContainer) -> np.ndarray:
    # kernel == hop, so overlap-add reduces to frame concatenation
    synth = features @ weights["decoder.weight"]
    return synth.reshape(-1)


def decode(features: np.ndarray, weights: WeightContainer, sample_rate: int = SAMPLE_RATE) -> MonoSignal:
    """Linear synthesis back to samples; length is frames * hop."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != weights.arch.encoder_filters:
        raise ValueError(
            f"expected (frames, {weights.arch.encoder_filters}) features, got {features.shape}"
        )
    return MonoSignal(_decode_frames(features, weights), sample_rate)


@dataclass(frozen=True)
class SpatialFeatures:
    """Per-frame interaural cues: phase difference (rad) and level difference (dB)."""

    ipd: np.ndarray  # (T, bins), in (-pi, pi]
    ild: np.ndarray  # (T, bins)


def compute_spatial_features(
    mix,
    stft_win: int = 256,
    hop: int = 64,
    eps: float = ILD_EPS,
    state: StreamState | None = None,
) -> SpatialFeatures:
    """Interaural phase and level differences on a causal analysis lattice.

    Frame t uses the window of stft_win samples *ending* with frame t's
    last sample, so no lookahead beyond the current frame is needed;
    missing history at stream start is zero-padded.
    """
    arr = mix.as_array() if isinstance(mix, StereoSignal) else np.asarray(mix, np.float64)
    if arr.ndim != 2 or arr.shape[0] != 2:
        raise ValueError(f"expected stereo (2, n) input, got shape {arr.shape}")
    if arr.shape[1] == 0:
        raise ValueError("cannot analyze an empty signal")
    arr = _pad_to_frames(arr, hop)
    hist_rows = stft_win - hop
    if state is not None:
        history = state.context("stft.history", 2, hist_rows)
    else:
        history = np.zeros((2, hist_rows))
    buf = np.concatenate([history, arr], axis=1)
    if state is not None:
        state.set_context("stft.history", buf[:, buf.shape[1] - hist_rows :].copy())

    n_frames = arr.shape[1] // hop
    window = windows.hann(stft_win, sym=False)
    sliding = np.lib.stride_tricks.sliding_window_view(buf, stft_win, axis=1)
    frames = sliding[:, 0 : n_frames * hop : hop, :] * window
    spectrum = np.fft.rfft(frames, axis=-1)

    cross = spectrum[0] * np.conj(spectrum[1])
    ipd = np.angle(cross)
    ipd = np.where(ipd <= -np.pi, np.pi, ipd)
    mag_l = np.abs(spectrum[0])
    mag_r = np.abs(spectrum[1])
    ild = 20.0 * np.log10((mag_l + eps) / (mag_r + eps))
    return SpatialFeatures(ipd=ipd, ild=ild)


def mixture_features(mix, weights: WeightContainer, state: StreamState | None = None):
    """Shared front end: (concat features, encoded left, encoded right).

    The concatenated matrix stacks both channels' encoder features with
    the interaural phase and level differences, frame-aligned.
    """
    arr = mix.as_array() if isinstance(mix, StereoSignal) else np.asarray(mix, np.float64)
    arch = weights.arch
    arr = _pad_to_frames(arr, arch.hop)
    enc_l = encode(arr[0], weights)
    enc_r = encode(arr[1], weights)
    spatial = compute_spatial_features(arr, arch.stft_win, arch.hop, state=state)
    feats = np.concatenate([enc_l, enc_r, spatial.ipd, spatial.ild], axis=1)
    return feats, enc_l, enc_r


# ---------------------------------------------------------------------------
# assembled module forwards


def _run_stacks(
    x: np.ndarray,
    weights: WeightContainer,
    module: str,
    n_stacks: int,
    state: StreamState,
    profile: np.ndarray | None = None,
) -> np.ndarray:
    for s in range(n_stacks):
        for b in range(weights.arch.blocks_per_stack):
            prefix = f"{module}.stack{s}.block{b}."
            if profile is not None:
                x = film(x, profile, weights[prefix + "film.f"], weights[prefix + "film.g"])
            x = causal_tcn_block(x, state, weights, prefix, 2**b)
    return x


def speaker_profile_forward(
    feats: np.ndarray, weights: WeightContainer, state: StreamState | None = None
) -> np.ndarray:
    """Per-frame speaker embeddings, one slot per speaker: (n_speakers, T, D).

    Slot order carries no meaning across frames; downstream matching or
    clustering assigns slots to speakers.
    """
    state = state if state is not None else StreamState()
    arch = weights.arch
    x = feats @ weights["speaker.input.weight"] + weights["speaker.input.bias"]
    x = _run_stacks(x, weights, "speaker", arch.speaker_stacks, state)
    emb = x @ weights["speaker.head.weight"] + weights["speaker.head.bias"]
    dim = arch.embed_dim
    return np.stack([emb[:, i * dim : (i + 1) * dim] for i in range(arch.n_speakers)])


def fusion_forward(
    feats: np.ndarray,
    profile: np.ndarray,
    weights: WeightContainer,
    state: StreamState | None = None,
) -> np.ndarray:
    """Profile-conditioned fusion of spectral and spatial features: (T, bottleneck)."""
    state = state if state is not None else StreamState()
    arch = weights.arch
    x = feats @ weights["fusion.input.weight"] + weights["fusion.input.bias"]
    return _run_stacks(x, weights, "fusion", arch.fusion_stacks, state, profile=profile)


def localization_forward(
    fused: np.ndarray,
    profile: np.ndarray,
    weights: WeightContainer,
    state: StreamState | None = None,
) -> np.ndarray:
    """Per-frame azimuth class scores for the profiled speaker: (T, K)."""
    state = state if state is not None else StreamState()
    arch = weights.arch
    x = film(fused, profile, weights["loc.film.f"], weights["loc.film.g"])
    for layer in range(arch.lstm_layers):
        x = _lstm_layer(
            x,
            weights[f"loc.lstm{layer}.w_ih"],
            weights[f"loc.lstm{layer}.w_hh"],
            weights[f"loc.lstm{layer}.bias"],
            state,
            f"loc.lstm{layer}",
        )
    return x @ weights["loc.head.weight"] + weights["loc.head.bias"]


def extraction_forward(
    fused: np.ndarray,
    profile: np.ndarray,
    doa_scores: np.ndarray,
    enc_left: np.ndarray,
    enc_right: np.ndarray,
    weights: WeightContainer,
    state: StreamState | None = None,
) -> np.ndarray:
    """Mask-based stereo extraction of the profiled speaker: (2, T * hop) samples.

    Sigmoid masks are predicted per channel and applied to each channel's
    encoded mixture before linear synthesis.
    """
    state = state if state is not None else StreamState()
    arch = weights.arch
    x = np.concatenate([fused, doa_scores], axis=1)
    x = x @ weights["extract.input.weight"] + weights["extract.input.bias"]
    x = _run_stacks(x, weights, "extract", arch.extraction_stacks, state, profile=profile)
    masks = expit(x @ weights["extract.head.weight"] + weights["extract.head.bias"])
    n_filters = arch.encoder_filters
    out_l = _decode_frames(enc_left * masks[:, :n_filters], weights)
    out_r = _decode_frames(enc_right * masks[:, n_filters:], weights)
    return np.stack([out_l, out_r])

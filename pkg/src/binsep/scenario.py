"""Two-speaker moving scenarios: specs, source corpora, and truth manifests.

A scenario holds two moving sources, each with its own start azimuth,
angular velocity, and direction, mixed at a controlled relative SNR.
Randomized scenario batches draw velocities from [8, 15] deg/s and
relative SNRs from [0, 5] dB, with per-scenario child seeds spawned from
one master seed via numpy's SeedSequence so reruns are byte-identical.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import MonoSignal, StereoSignal, SAMPLE_RATE, read_wav
from .configio import (
    ConfigError,
    SectionView,
    check_version,
    format_config,
    load_config,
)
from .grid import AzimuthGrid
from .spatial import BrirSet, Trajectory, make_trajectory, mix_at_relative_snr, spatialize

N_SPEAKERS = 2
FRAME_HOP = 64

VELOCITY_RANGE_DEG_S = (8.0, 15.0)
REL_SNR_RANGE_DB = (0.0, 5.0)


class CorpusError(FileNotFoundError):
    """A scenario references a source the corpus cannot provide."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to deterministically rebuild one mixture."""

    scenario_id: str
    sources: tuple          # two corpus references
    start_deg: tuple        # degrees, on the grid
    velocity_deg_s: tuple
    direction: tuple        # 'cw' or 'ccw'
    rel_snr_db: float
    duration_s: float
    seed: int

    def __post_init__(self):
        for name in ("sources", "start_deg", "velocity_deg_s", "direction"):
            if len(getattr(self, name)) != N_SPEAKERS:
                raise ValueError(f"{name} must list exactly {N_SPEAKERS} entries")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if any(v <= 0 for v in self.velocity_deg_s):
            raise ValueError("velocities must be positive")


def synth_speech(n_samples: int, seed: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Deterministic speech-like test source.

    Harmonic tone with a wandering fundamental, syllable-rate amplitude
    modulation with occasional gaps, and a little noise. Never entirely
    silent, so energy-based mixing stays well defined.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / sample_rate

    f0_base = rng.uniform(90.0, 220.0)
    wobble = 0.08 * f0_base * np.cumsum(rng.standard_normal(n_samples)) / np.sqrt(
        np.arange(1, n_samples + 1)
    )
    f0 = f0_base + wobble
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate

    voiced = np.zeros(n_samples)
    for h in range(1, 7):
        voiced += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h

    syllable = 0.5 * (1.0 + np.sin(2.0 * np.pi * rng.uniform(2.5, 4.5) * t + rng.uniform(0, 6)))
    gate = np.ones(n_samples)
    n_gaps = max(1, n_samples // (2 * sample_rate))
    for _ in range(n_gaps):
        at = rng.integers(0, max(1, n_samples - sample_rate // 4))
        width = rng.integers(sample_rate // 20, sample_rate // 4)
        gate[at : at + width] = 0.0

    noise = 0.02 * rng.standard_normal(n_samples)
    x = voiced * syllable * gate * 0.15 + noise + 1e-4 * np.sin(2 * np.pi * 50.0 * t)
    peak = np.max(np.abs(x))
    return 0.5 * x / peak


class SynthCorpus:
    """Resolves 'synth:<seed>' references to generated sources."""

    def load(self, ref: str, n_samples: int, sample_rate: int = SAMPLE_RATE) -> MonoSignal:
        if not ref.startswith("synth:"):
            raise CorpusError(f"synthetic corpus cannot resolve {ref!r}")
        try:
            seed = int(ref.split(":", 1)[1])
        except ValueError:
            raise CorpusError(f"bad synthetic source reference {ref!r}") from None
        return MonoSignal(synth_speech(n_samples, seed, sample_rate), sample_rate)


class WavDirCorpus:
    """Resolves references to mono WAV files under a directory."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise CorpusError(f"corpus directory {directory!r} not found")

    def load(self, ref: str, n_samples: int, sample_rate: int = SAMPLE_RATE) -> MonoSignal:
        path = self.directory / ref
        if not path.exists():
            raise CorpusError(f"corpus entry {ref!r} not found under {self.directory}")
        source = read_wav(path, expected_rate=sample_rate)
        if isinstance(source, StereoSignal):
            raise CorpusError(f"corpus entry {ref!r} is stereo; sources must be mono")
        if len(source) < n_samples:
            raise CorpusError(
                f"corpus entry {ref!r} has {len(source)} samples, scenario needs {n_samples}"
            )
        return MonoSignal(source.samples[:n_samples], sample_rate)


class MappingCorpus:
    """Adapts a plain {ref: MonoSignal} mapping to the corpus interface."""

    def __init__(self, mapping):
        self.mapping = mapping

    def load(self, ref: str, n_samples: int, sample_rate: int = SAMPLE_RATE) -> MonoSignal:
        if ref not in self.mapping:
            raise CorpusError(f"corpus entry {ref!r} missing")
        source = self.mapping[ref]
        if len(source) < n_samples:
            raise CorpusError(
                f"corpus entry {ref!r} has {len(source)} samples, scenario needs {n_samples}"
            )
        return MonoSignal(source.samples[:n_samples], sample_rate)


def resolve_corpus(spec: str):
    """'synth' or a directory path."""
    if spec == "synth":
        return SynthCorpus()
    return WavDirCorpus(spec)


@dataclass(frozen=True)
class ScenarioResult:
    """Built scenario: mixture, per-speaker truth, and bookkeeping.

    references are the individually spatialized reverberant sources at
    their in-mixture level, so summing them reproduces the mixture
    exactly; scales records the gain each raw spatialized source
    received (first speaker always 1.0).
    """

    spec: ScenarioSpec
    mixture: StereoSignal
    references: tuple       # two StereoSignal
    trajectories: tuple     # two Trajectory
    scales: tuple           # two floats
    doa_labels: np.ndarray  # (2, n_frames) grid indices at each frame start
    grid: AzimuthGrid


def trajectory_frame_labels(traj: Trajectory, n_samples: int, hop: int = FRAME_HOP) -> np.ndarray:
    """Grid index active at the first sample of each analysis frame."""
    n_frames = -(-n_samples // hop)
    return np.array([traj.index_at(t * hop) for t in range(n_frames)], dtype=np.int64)


def build_scenario(spec: ScenarioSpec, brirs: BrirSet, corpus) -> ScenarioResult:
    """Spatialize, scale, and mix the two moving sources of a spec."""
    grid = brirs.grid()
    n_samples = int(round(spec.duration_s * brirs.sample_rate))

    sources = [corpus.load(ref, n_samples, brirs.sample_rate) for ref in spec.sources]
    trajectories = tuple(
        make_trajectory(
            spec.start_deg[i],
            spec.velocity_deg_s[i],
            spec.direction[i],
            spec.duration_s,
            grid,
            brirs.sample_rate,
        )
        for i in range(N_SPEAKERS)
    )
    spatialized = [spatialize(sources[i], brirs, trajectories[i]) for i in range(N_SPEAKERS)]
    mixture, scale = mix_at_relative_snr(spatialized[0], spatialized[1], spec.rel_snr_db)
    references = (
        spatialized[0],
        StereoSignal.from_array(scale * spatialized[1].as_array(), brirs.sample_rate),
    )
    labels = np.stack(
        [trajectory_frame_labels(trajectories[i], n_samples) for i in range(N_SPEAKERS)]
    )
    return ScenarioResult(
        spec=spec,
        mixture=mixture,
        references=references,
        trajectories=trajectories,
        scales=(1.0, scale),
        doa_labels=labels,
        grid=grid,
    )


def random_scenarios(
    count: int,
    duration_s: float,
    grid: AzimuthGrid,
    master_seed: int,
    source_refs: list[str] | None = None,
    velocity_range=VELOCITY_RANGE_DEG_S,
    rel_snr_range=REL_SNR_RANGE_DB,
) -> list[ScenarioSpec]:
    """Draw scenario specs from one master seed.

    Child seeds come from SeedSequence(master_seed).spawn, so scenario i
    is reproducible independently of the batch size. Without source_refs
    the sources are synthetic, named by their own child seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    children = np.random.SeedSequence(master_seed).spawn(count)
    specs = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        child_seed = int(child.generate_state(1)[0])
        if source_refs is None:
            sources = tuple(f"synth:{child_seed + k}" for k in range(N_SPEAKERS))
        else:
            picks = rng.choice(len(source_refs), size=N_SPEAKERS, replace=False)
            sources = tuple(source_refs[p] for p in picks)
        specs.append(
            ScenarioSpec(
                scenario_id=f"sc{i:03d}",
                sources=sources,
                start_deg=tuple(
                    grid.degrees(int(rng.integers(0, grid.count))) for _ in range(N_SPEAKERS)
                ),
                velocity_deg_s=tuple(rng.uniform(*velocity_range) for _ in range(N_SPEAKERS)),
                direction=tuple(("ccw", "cw")[rng.integers(0, 2)] for _ in range(N_SPEAKERS)),
                rel_snr_db=float(rng.uniform(*rel_snr_range)),
                duration_s=duration_s,
                seed=child_seed,
            )
        )
    return specs


def scenario_spec_from_section(view: SectionView) -> ScenarioSpec:
    """Parse one [scenario] config section: the ScenarioSpec fields, flattened.

    Per-speaker fields carry _0/_1 suffixes; see write_scenario_section
    for the exact layout.
    """
    spec = ScenarioSpec(
        scenario_id=view.get_str("id"),
        sources=(view.get_str("source_0"), view.get_str("source_1")),
        start_deg=(view.get_float("start_deg_0"), view.get_float("start_deg_1")),
        velocity_deg_s=(
            view.get_float("velocity_deg_s_0"),
            view.get_float("velocity_deg_s_1"),
        ),
        direction=(
            view.get_choice("direction_0", ("cw", "ccw")),
            view.get_choice("direction_1", ("cw", "ccw")),
        ),
        rel_snr_db=view.get_float("rel_snr_db"),
        duration_s=view.get_float("duration_s"),
        seed=view.get_int("seed", default=0),
    )
    view.finish()
    return spec


def scenario_spec_entries(spec: ScenarioSpec) -> dict:
    """ScenarioSpec as a flat [scenario] section entry dict."""
    entries = {"id": spec.scenario_id}
    for i in range(N_SPEAKERS):
        entries[f"source_{i}"] = spec.sources[i]
        entries[f"start_deg_{i}"] = float(spec.start_deg[i])
        entries[f"velocity_deg_s_{i}"] = float(spec.velocity_deg_s[i])
        entries[f"direction_{i}"] = spec.direction[i]
    entries["rel_snr_db"] = float(spec.rel_snr_db)
    entries["duration_s"] = float(spec.duration_s)
    entries["seed"] = spec.seed
    return entries


def _format_breakpoints(traj: Trajectory) -> str:
    return ",".join(f"{s}:{j}" for s, j in traj.breakpoints)


def _parse_breakpoints(text: str) -> Trajectory:
    bps = []
    for part in text.split(","):
        s, _, j = part.partition(":")
        bps.append((int(s), int(j)))
    return Trajectory(tuple(bps))


def write_truth_manifest(path, result: ScenarioResult, brir_spec: str):
    """Persist everything needed to re-simulate and score a scenario."""
    spec = result.spec
    sections = [
        (
            "",
            {
                "version": 1,
                "scenario": spec.scenario_id,
                "sample_rate": result.mixture.sample_rate,
                "duration_s": float(spec.duration_s),
                "rel_snr_db": float(spec.rel_snr_db),
                "seed": spec.seed,
                "brir": brir_spec,
                "grid_min_deg": float(result.grid.min_deg),
                "grid_step_deg": float(result.grid.step_deg),
                "grid_count": result.grid.count,
            },
        )
    ]
    for i in range(N_SPEAKERS):
        sections.append(
            (
                "speaker",
                {
                    "source": spec.sources[i],
                    "start_deg": float(spec.start_deg[i]),
                    "velocity_deg_s": float(spec.velocity_deg_s[i]),
                    "direction": spec.direction[i],
                    "scale": float(result.scales[i]),
                    "breakpoints": _format_breakpoints(result.trajectories[i]),
                },
            )
        )
    Path(path).write_text(format_config(sections), encoding="utf-8")


@dataclass(frozen=True)
class TruthManifest:
    spec: ScenarioSpec
    trajectories: tuple
    scales: tuple
    grid: AzimuthGrid
    brir_spec: str
    sample_rate: int


def read_truth_manifest(path) -> TruthManifest:
    source = str(path)
    sections = load_config(path)
    if not sections or sections[0].name != "":
        raise ConfigError(f"{source}: manifest must start with a preamble")
    head = SectionView(sections[0], source)
    check_version(head)
    scenario_id = head.get_str("scenario")
    rate = head.get_int("sample_rate")
    duration = head.get_float("duration_s")
    rel_snr = head.get_float("rel_snr_db")
    seed = head.get_int("seed")
    brir_spec = head.get_str("brir")
    grid = AzimuthGrid(
        head.get_float("grid_min_deg"), head.get_float("grid_step_deg"), head.get_int("grid_count")
    )
    head.finish()

    speakers = [s for s in sections[1:] if s.name == "speaker"]
    if len(speakers) != N_SPEAKERS or len(sections) != 1 + N_SPEAKERS:
        raise ConfigError(f"{source}: manifest must carry exactly {N_SPEAKERS} [speaker] sections")
    sources, starts, velocities, directions, scales, trajectories = [], [], [], [], [], []
    for sec in speakers:
        view = SectionView(sec, source)
        sources.append(view.get_str("source"))
        starts.append(view.get_float("start_deg"))
        velocities.append(view.get_float("velocity_deg_s"))
        directions.append(view.get_choice("direction", ("cw", "ccw")))
        scales.append(view.get_float("scale"))
        trajectories.append(_parse_breakpoints(view.get_str("breakpoints")))
        view.finish()
    spec = ScenarioSpec(
        scenario_id=scenario_id,
        sources=tuple(sources),
        start_deg=tuple(starts),
        velocity_deg_s=tuple(velocities),
        direction=tuple(directions),
        rel_snr_db=rel_snr,
        duration_s=duration,
        seed=seed,
    )
    return TruthManifest(
        spec=spec,
        trajectories=tuple(trajectories),
        scales=tuple(scales),
        grid=grid,
        brir_spec=brir_spec,
        sample_rate=rate,
    )


def rebuild_from_manifest(manifest: TruthManifest, brirs: BrirSet, corpus) -> ScenarioResult:
    """Re-simulate a scenario from its stored trajectories and scales."""
    spec = manifest.spec
    n_samples = int(round(spec.duration_s * brirs.sample_rate))
    sources = [corpus.load(ref, n_samples, brirs.sample_rate) for ref in spec.sources]
    spatialized = [
        spatialize(sources[i], brirs, manifest.trajectories[i]) for i in range(N_SPEAKERS)
    ]
    references = tuple(
        StereoSignal.from_array(manifest.scales[i] * spatialized[i].as_array(), brirs.sample_rate)
        for i in range(N_SPEAKERS)
    )
    mixture = StereoSignal.from_array(
        references[0].as_array() + references[1].as_array(), brirs.sample_rate
    )
    labels = np.stack(
        [
            trajectory_frame_labels(manifest.trajectories[i], n_samples)
            for i in range(N_SPEAKERS)
        ]
    )
    return ScenarioResult(
        spec=spec,
        mixture=mixture,
        references=references,
        trajectories=manifest.trajectories,
        scales=manifest.scales,
        doa_labels=labels,
        grid=manifest.grid,
    )

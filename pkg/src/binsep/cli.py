"""Command-line surface: simulate, separate, evaluate, run-experiment, gen-weights.

Exit codes map one-to-one to error classes:

    0  success
    1  unexpected error
    2  config or usage error
    3  missing file or corpus/BRIR asset
    4  weight/tensor container error
    5  WAV format error
    6  evaluation alignment error (length/window mismatch)

All randomization flows from a single master seed; per-scenario child
seeds are spawned with numpy's SeedSequence, so every command is
deterministic given its config. Reports are written as line-delimited
key=value records; wall-clock timing goes to stdout and a separate
timing file, never into the records, so reruns are byte-identical.
"""

import argparse
import sys
from itertools import permutations
from pathlib import Path

import numpy as np

from .audio import StereoSignal, WavFormatError, read_wav, write_wav
from .configio import (
    ConfigError,
    SectionView,
    check_version,
    load_config,
    write_records,
)
from .container import ContainerError
from .grid import AzimuthGrid
from .metrics import (
    LengthMismatchError,
    build_eval_localizer,
    count_swaps,
    doa_error,
    estimate_doa_track,
    stereo_snr,
    truth_window_track,
    DOA_WINDOW_S,
)
from .nets import ArchSpec, gen_weights, load_weights
from .pipeline import PipelineConfig, process_stream, process_with_report
from .scenario import (
    CorpusError,
    build_scenario,
    random_scenarios,
    read_truth_manifest,
    resolve_corpus,
    scenario_spec_from_section,
    write_truth_manifest,
)
from .spatial import resolve_brirs
from .tracking import load_embeddings

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_MISSING_ASSET = 3
EXIT_CONTAINER = 4
EXIT_WAV = 5
EXIT_ALIGNMENT = 6


def _scenario_paths(outdir: Path, scenario_id: str) -> dict:
    return {
        "mix": outdir / f"{scenario_id}_mix.wav",
        "refs": [outdir / f"{scenario_id}_ref{i}.wav" for i in range(2)],
        "manifest": outdir / f"{scenario_id}_truth.txt",
    }


def _parse_scenario_plan(sections, source: str, allowed_extra=()):
    """Shared config reader: scenario plan plus optional extra sections.

    A plan is either generated ([scenarios] with count/duration/seed and
    ranges) or explicit (repeated [scenario] sections carrying exactly
    the scenario-spec fields); [scenarios] may also just hold the shared
    brir/corpus keys for the explicit form.
    """
    if not sections or sections[0].name != "":
        raise ConfigError(f"{source}: config must start with a version preamble")
    head = SectionView(sections[0], source)
    check_version(head)
    head.finish()

    plan = {"brir": "synth", "corpus": "synth", "generator": None, "explicit": []}
    extras = {}
    for section in sections[1:]:
        view = SectionView(section, source)
        if section.name == "scenarios":
            plan["brir"] = view.get_str("brir", default="synth")
            plan["corpus"] = view.get_str("corpus", default="synth")
            count = view.get_int("count", default=None)
            if count is not None:
                plan["generator"] = {
                    "count": count,
                    "duration_s": view.get_float("duration_s"),
                    "velocity_range": (
                        view.get_float("velocity_min_deg_s", default=8.0),
                        view.get_float("velocity_max_deg_s", default=15.0),
                    ),
                    "rel_snr_range": (
                        view.get_float("rel_snr_min_db", default=0.0),
                        view.get_float("rel_snr_max_db", default=5.0),
                    ),
                    "master_seed": view.get_int("master_seed"),
                }
            view.finish()
        elif section.name == "scenario":
            plan["explicit"].append(scenario_spec_from_section(view))
        elif section.name in allowed_extra:
            extras[section.name] = view
        else:
            raise ConfigError(f"{source}:{section.line}: unknown section [{section.name}]")
    if plan["generator"] and plan["explicit"]:
        raise ConfigError(f"{source}: use either [scenarios] count or [scenario] sections, not both")
    if not plan["generator"] and not plan["explicit"]:
        raise ConfigError(f"{source}: no scenarios configured")
    ids = [s.scenario_id for s in plan["explicit"]]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{source}: duplicate scenario ids")
    return plan, extras


def _load_experiment_config(path):
    sections = load_config(path)
    plan, extras = _parse_scenario_plan(sections, str(path), allowed_extra=("pipeline", "evaluate"))

    pipe_cfg = None
    if "pipeline" in extras:
        view = extras["pipeline"]
        pipe_cfg = {
            "weights": view.get_str("weights"),
            "profile_mode": view.get_choice(
                "profile_mode", ("centroid", "oracle"), default="centroid"
            ),
            "chunk_frames": view.get_int("chunk_frames", default=50),
            "vote_frames": view.get_int("vote_frames", default=20),
            "normalize_embeddings": view.get_bool("normalize_embeddings", default=False),
        }
        view.finish()
    eval_cfg = {"n_segments": 10}
    if "evaluate" in extras:
        view = extras["evaluate"]
        eval_cfg = {"n_segments": view.get_int("n_segments", default=10)}
        view.finish()
    return plan, pipe_cfg, eval_cfg


def _simulate_scenarios(plan, outdir: Path):
    brirs = resolve_brirs(plan["brir"])
    corpus = resolve_corpus(plan["corpus"])
    if plan["generator"]:
        gen = plan["generator"]
        specs = random_scenarios(
            count=gen["count"],
            duration_s=gen["duration_s"],
            grid=brirs.grid(),
            master_seed=gen["master_seed"],
            velocity_range=gen["velocity_range"],
            rel_snr_range=gen["rel_snr_range"],
        )
    else:
        specs = plan["explicit"]
    outdir.mkdir(parents=True, exist_ok=True)
    results = []
    for spec in specs:
        result = build_scenario(spec, brirs, corpus)
        paths = _scenario_paths(outdir, spec.scenario_id)
        write_wav(result.mixture, paths["mix"], codec="float32")
        for i, ref in enumerate(result.references):
            write_wav(ref, paths["refs"][i], codec="float32")
        write_truth_manifest(paths["manifest"], result, plan["brir"])
        results.append(result)
    return results, brirs


def cmd_simulate(args) -> int:
    plan, _ = _parse_scenario_plan(load_config(args.config), str(args.config))
    results, _ = _simulate_scenarios(plan, Path(args.outdir))
    print(f"simulated {len(results)} scenario(s) into {args.outdir}")
    return EXIT_OK


def _pipeline_config(weights_path, profile_mode, chunk_frames, vote_frames, normalize):
    weights = load_weights(weights_path)
    return PipelineConfig(
        weights=weights,
        profile_mode=profile_mode,
        chunk_frames=chunk_frames,
        vote_frames=vote_frames,
        normalize_embeddings=normalize,
        grid=AzimuthGrid(count=weights.arch.doa_classes),
    )


def _write_track(path, track, chunk_s):
    records = [
        {"chunk": k, "t": round(k * chunk_s, 6), "deg": float(track[k])}
        for k in range(len(track))
    ]
    write_records(path, records)


def cmd_separate(args) -> int:
    mix = read_wav(args.mixture, expected_rate=16000)
    if not isinstance(mix, StereoSignal):
        raise WavFormatError(f"{args.mixture}: separation needs a stereo mixture")
    config = _pipeline_config(
        args.weights, args.profile_mode, args.chunk_frames, args.vote_frames,
        args.normalize_embeddings,
    )
    oracle = load_embeddings(args.oracle_embeddings) if args.oracle_embeddings else None
    result = process_stream(mix, config, oracle)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.mixture).stem
    for i, out in enumerate(result.outputs):
        write_wav(out, outdir / f"{stem}_spk{i}.wav", codec="float32")
        _write_track(outdir / f"{stem}_spk{i}_track.txt", result.doa_tracks[i],
                     result.track_chunk_s)
    print(
        f"separated {args.mixture}: rtf={result.timing['rtf']:.3f} "
        f"({result.timing['frames_per_s']:.0f} frames/s)"
    )
    return EXIT_OK


def _evaluate_one(outputs, references, manifest, brirs, n_segments):
    if len(outputs[0]) != len(references[0]):
        raise LengthMismatchError(
            f"outputs have {len(outputs[0])} samples, references {len(references[0])}"
        )
    table = build_eval_localizer(brirs)
    window = int(round(DOA_WINDOW_S * outputs[0].sample_rate))
    n_windows = len(outputs[0]) // window

    best_perm, best_score = None, -np.inf
    for perm in permutations(range(len(outputs))):
        score = sum(stereo_snr(references[i], outputs[perm[i]]) for i in range(len(outputs)))
        if score > best_score:
            best_score, best_perm = score, perm

    record = {"scenario": manifest.spec.scenario_id}
    for i in range(len(references)):
        matched = outputs[best_perm[i]]
        record[f"snr{i}_db"] = round(stereo_snr(references[i], matched), 6)
        record[f"snr{i}_mean_db"] = round(stereo_snr(references[i], matched, mean=True), 6)
        truth = truth_window_track(manifest.trajectories[i], manifest.grid, n_windows, window)
        est = estimate_doa_track(matched, table)
        err = doa_error(est[:n_windows], truth)
        record[f"doa{i}_mae_deg"] = round(err.mae_deg, 6)
        record[f"doa{i}_scored"] = err.n_scored
        record[f"doa{i}_silent"] = err.n_no_estimate
    swap_report = count_swaps(list(outputs), list(references), n_segments=n_segments)
    record["swaps"] = swap_report.swap_count
    record["perms"] = swap_report.permutation_string()
    return record


def cmd_evaluate(args) -> int:
    outputs = [read_wav(p, expected_rate=16000) for p in args.outputs]
    references = [read_wav(p, expected_rate=16000) for p in args.references]
    for sig, path in zip(outputs + references, args.outputs + args.references):
        if not isinstance(sig, StereoSignal):
            raise WavFormatError(f"{path}: expected stereo")
    manifest = read_truth_manifest(args.manifest)
    brirs = resolve_brirs(args.brir or manifest.brir_spec)
    record = _evaluate_one(outputs, references, manifest, brirs, args.n_segments)
    line = " ".join(f"{k}={v}" for k, v in record.items())
    if args.out:
        write_records(args.out, [record])
    print(line)
    return EXIT_OK


def cmd_run_experiment(args) -> int:
    plan, pipe_cfg, eval_cfg = _load_experiment_config(args.spec)
    if pipe_cfg is None:
        raise ConfigError(f"{args.spec}: missing [pipeline] section")
    outdir = Path(args.outdir)
    scen_dir = outdir / "scenarios"
    sep_dir = outdir / "outputs"
    sep_dir.mkdir(parents=True, exist_ok=True)

    results, brirs = _simulate_scenarios(plan, scen_dir)
    config = _pipeline_config(
        pipe_cfg["weights"],
        pipe_cfg["profile_mode"],
        pipe_cfg["chunk_frames"],
        pipe_cfg["vote_frames"],
        pipe_cfg["normalize_embeddings"],
    )

    records = []
    timings = []
    for result in results:
        record, out = process_with_report(
            result, config, brirs, n_segments=eval_cfg["n_segments"]
        )
        for i, sig in enumerate(out.outputs):
            write_wav(sig, sep_dir / f"{result.spec.scenario_id}_spk{i}.wav", codec="float32")
        records.append(record)
        timings.append(out.timing)

    write_records(outdir / "records.txt", records)
    rtf = float(np.mean([t["rtf"] for t in timings]))
    (outdir / "timing.txt").write_text(
        "".join(
            f"scenario={r['scenario']} rtf={t['rtf']:.4f} process_s={t['process_s']:.3f}\n"
            for r, t in zip(records, timings)
        ),
        encoding="utf-8",
    )

    swaps = float(np.mean([r["swaps"] for r in records]))
    snr = float(np.mean([(r["snr0_mean_db"] + r["snr1_mean_db"]) / 2 for r in records]))
    doa = float(np.mean([(r["doa0_mae_deg"] + r["doa1_mae_deg"]) / 2 for r in records]))
    print(f"scenarios: {len(records)}")
    print("# of swaps / SNR (dB) / DOA error (deg), means over scenarios")
    print(f"{swaps:.2f} / {snr:.2f} / {doa:.2f}")
    print(f"real-time factor (mean, single stream): {rtf:.3f}")
    print(f"records: {outdir / 'records.txt'}")
    return EXIT_OK


def cmd_gen_weights(args) -> int:
    overrides = {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        if not value:
            raise ConfigError(f"--set needs name=value, got {item!r}")
        overrides[key] = int(value)
    try:
        arch = ArchSpec(**overrides)
    except TypeError as exc:
        raise ConfigError(f"unknown architecture field: {exc}") from exc
    gen_weights(arch, args.seed, args.out)
    print(f"wrote {args.out} (seed {args.seed})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binsep",
        description="Binaural moving-speaker separation: simulation, inference, scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render scenario WAVs and truth manifests")
    p.add_argument("config")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("separate", help="run the pipeline over one mixture")
    p.add_argument("mixture")
    p.add_argument("--weights", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--chunk-frames", type=int, default=50, dest="chunk_frames")
    p.add_argument("--vote-frames", type=int, default=20, dest="vote_frames")
    p.add_argument(
        "--profile-mode", choices=("centroid", "oracle"), default="centroid",
        dest="profile_mode",
    )
    p.add_argument("--oracle-embeddings", default=None, dest="oracle_embeddings")
    p.add_argument(
        "--normalize-embeddings", action="store_true", dest="normalize_embeddings"
    )
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="score outputs against references")
    p.add_argument("--outputs", nargs=2, required=True)
    p.add_argument("--references", nargs=2, required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--brir", default=None, help="override the manifest's BRIR spec")
    p.add_argument("--n-seg", type=int, default=10, dest="n_segments")
    p.add_argument("--out", default=None, help="also write the record to this file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="simulate, separate, and evaluate a batch")
    p.add_argument("spec")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("gen-weights", help="emit a deterministic random weight bank")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="FIELD=VALUE",
                   help="override an architecture field (repeatable)")
    p.set_defaults(func=cmd_gen_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, FileNotFoundError) as exc:
        print(f"missing asset: {exc}", file=sys.stderr)
        return EXIT_MISSING_ASSET
    except ContainerError as exc:
        print(f"container error: {exc}", file=sys.stderr)
        return EXIT_CONTAINER
    except WavFormatError as exc:
        print(f"wav error: {exc}", file=sys.stderr)
        return EXIT_WAV
    except LengthMismatchError as exc:
        print(f"alignment error: {exc}", file=sys.stderr)
        return EXIT_ALIGNMENT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())

import numpy as np
import pytest

from binsep.audio import read_wav, write_wav
from binsep.cli import (
    EXIT_ALIGNMENT,
    EXIT_CONFIG,
    EXIT_CONTAINER,
    EXIT_MISSING_ASSET,
    EXIT_OK,
    main,
)
from binsep.configio import read_records
from binsep.scenario import SynthCorpus, read_truth_manifest, rebuild_from_manifest
from binsep.spatial import resolve_brirs


SIM_CONFIG = """\
version = 1

[scenarios]
count = 2
duration_s = 0.4
brir = synth:1:0.05:256
corpus = synth
master_seed = 31
"""


@pytest.fixture(scope="module")
def weights_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cliw") / "w.bsrw"
    assert main(["gen-weights", str(path), "--seed", "5"]) == EXIT_OK
    return path


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("sim")
    config = outdir / "sim.cfg"
    config.write_text(SIM_CONFIG)
    assert main(["simulate", str(config), "--outdir", str(outdir / "out")]) == EXIT_OK
    return outdir / "out"


def test_gen_weights_deterministic(tmp_path):
    a, b = tmp_path / "a.bsrw", tmp_path / "b.bsrw"
    assert main(["gen-weights", str(a), "--seed", "9"]) == EXIT_OK
    assert main(["gen-weights", str(b), "--seed", "9"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_gen_weights_with_overrides(tmp_path):
    path = tmp_path / "small.bsrw"
    code = main(["gen-weights", str(path), "--seed", "1", "--set", "doa_classes=9",
                 "--set", "speaker_stacks=1"])
    assert code == EXIT_OK
    from binsep.nets import load_weights

    w = load_weights(path)
    assert w.arch.doa_classes == 9
    assert w.arch.speaker_stacks == 1


def test_gen_weights_bad_override(tmp_path):
    assert main(["gen-weights", str(tmp_path / "x"), "--set", "nope=1"]) == EXIT_CONFIG


def test_simulate_file_counts(simulated):
    wavs = sorted(p.name for p in simulated.glob("*.wav"))
    assert wavs == [
        "sc000_mix.wav", "sc000_ref0.wav", "sc000_ref1.wav",
        "sc001_mix.wav", "sc001_ref0.wav", "sc001_ref1.wav",
    ]
    assert sorted(p.name for p in simulated.glob("*_truth.txt")) == [
        "sc000_truth.txt", "sc001_truth.txt",
    ]


def test_simulate_deterministic(tmp_path, simulated):
    config = tmp_path / "sim.cfg"
    config.write_text(SIM_CONFIG)
    assert main(["simulate", str(config), "--outdir", str(tmp_path / "out")]) == EXIT_OK
    for name in ("sc000_mix.wav", "sc001_ref1.wav"):
        assert (tmp_path / "out" / name).read_bytes() == (simulated / name).read_bytes()


def test_simulate_manifest_resimulates_identically(simulated):
    manifest = read_truth_manifest(simulated / "sc000_truth.txt")
    brirs = resolve_brirs(manifest.brir_spec)
    rebuilt = rebuild_from_manifest(manifest, brirs, SynthCorpus())
    mix = read_wav(simulated / "sc000_mix.wav", expected_rate=16000)
    # stored WAVs are float32-quantized; rebuild matches at that precision
    assert np.allclose(rebuilt.mixture.as_array(), mix.as_array(), atol=1e-6)


EXPLICIT_CONFIG = """\
version = 1

[scenarios]
brir = synth:1:0.05:256
corpus = synth

[scenario]
id = left_vs_right
source_0 = synth:100
source_1 = synth:101
start_deg_0 = -60
start_deg_1 = 45
velocity_deg_s_0 = 9.5
velocity_deg_s_1 = 14
direction_0 = ccw
direction_1 = cw
rel_snr_db = 1.25
duration_s = 0.3
seed = 4

[scenario]
id = crossing
source_0 = synth:102
source_1 = synth:103
start_deg_0 = -10
start_deg_1 = 10
velocity_deg_s_0 = 8
velocity_deg_s_1 = 8
direction_0 = ccw
direction_1 = cw
rel_snr_db = 0
duration_s = 0.3
"""


def test_simulate_explicit_scenario_sections(tmp_path):
    config = tmp_path / "explicit.cfg"
    config.write_text(EXPLICIT_CONFIG)
    assert main(["simulate", str(config), "--outdir", str(tmp_path / "out")]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "out").glob("*.wav"))
    assert names == [
        "crossing_mix.wav", "crossing_ref0.wav", "crossing_ref1.wav",
        "left_vs_right_mix.wav", "left_vs_right_ref0.wav", "left_vs_right_ref1.wav",
    ]
    manifest = read_truth_manifest(tmp_path / "out" / "left_vs_right_truth.txt")
    assert manifest.spec.sources == ("synth:100", "synth:101")
    assert manifest.spec.rel_snr_db == 1.25


def test_simulate_rejects_mixed_generator_and_explicit(tmp_path):
    config = tmp_path / "mixed.cfg"
    first_block = "[scenario]" + EXPLICIT_CONFIG.split("[scenario]", 2)[1]
    config.write_text(SIM_CONFIG + first_block)
    assert main(["simulate", str(config), "--outdir", str(tmp_path / "o")]) == EXIT_CONFIG


def test_simulate_rejects_duplicate_ids(tmp_path):
    block = "[scenario]" + EXPLICIT_CONFIG.split("[scenario]", 2)[1]
    config = tmp_path / "dup.cfg"
    config.write_text("version = 1\n" + block + block)
    assert main(["simulate", str(config), "--outdir", str(tmp_path / "o")]) == EXIT_CONFIG


def test_simulate_rejects_unknown_key(tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text(SIM_CONFIG + "typo_key = 3\n")
    assert main(["simulate", str(config), "--outdir", str(tmp_path / "o")]) == EXIT_CONFIG


def test_simulate_missing_config(tmp_path):
    code = main(["simulate", str(tmp_path / "nope.cfg"), "--outdir", str(tmp_path)])
    assert code == EXIT_MISSING_ASSET


def test_separate_writes_outputs_and_tracks(tmp_path, weights_path, simulated):
    outdir = tmp_path / "sep"
    code = main([
        "separate", str(simulated / "sc000_mix.wav"),
        "--weights", str(weights_path), "--outdir", str(outdir),
    ])
    assert code == EXIT_OK
    assert (outdir / "sc000_mix_spk0.wav").exists()
    assert (outdir / "sc000_mix_spk1.wav").exists()
    track = read_records(outdir / "sc000_mix_spk0_track.txt")
    assert track and {"chunk", "t", "deg"} <= set(track[0])


def test_separate_chunk_size_equivalence(tmp_path, weights_path, simulated):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    mix = str(simulated / "sc000_mix.wav")
    assert main(["separate", mix, "--weights", str(weights_path), "--outdir", str(out_a),
                 "--chunk-frames", "1"]) == EXIT_OK
    assert main(["separate", mix, "--weights", str(weights_path), "--outdir", str(out_b)]) == EXIT_OK
    for i in range(2):
        a = read_wav(out_a / f"sc000_mix_spk{i}.wav").as_array()
        b = read_wav(out_b / f"sc000_mix_spk{i}.wav").as_array()
        assert np.allclose(a, b, rtol=1e-6, atol=1e-7)


def test_separate_truncated_weights_exit_code(tmp_path, weights_path, simulated):
    broken = tmp_path / "broken.bsrw"
    broken.write_bytes(weights_path.read_bytes()[:-100])
    code = main([
        "separate", str(simulated / "sc000_mix.wav"),
        "--weights", str(broken), "--outdir", str(tmp_path / "o"),
    ])
    assert code == EXIT_CONTAINER


def test_separate_missing_mixture(tmp_path, weights_path):
    code = main([
        "separate", str(tmp_path / "nope.wav"),
        "--weights", str(weights_path), "--outdir", str(tmp_path),
    ])
    assert code == EXIT_MISSING_ASSET


def test_evaluate_identity_outputs(tmp_path, simulated, capsys):
    code = main([
        "evaluate",
        "--outputs", str(simulated / "sc000_ref0.wav"), str(simulated / "sc000_ref1.wav"),
        "--references", str(simulated / "sc000_ref0.wav"), str(simulated / "sc000_ref1.wav"),
        "--manifest", str(simulated / "sc000_truth.txt"),
        "--n-seg", "4",
        "--out", str(tmp_path / "rec.txt"),
    ])
    assert code == EXIT_OK
    record = read_records(tmp_path / "rec.txt")[0]
    assert record["swaps"] == "0"
    assert record["perms"] == "AAAA"
    assert float(record["snr0_db"]) == pytest.approx(240.0)
    # references carry their own trajectories; the delay localizer should
    # land within a couple of grid steps on these clean synthetic scenes
    assert float(record["doa0_mae_deg"]) <= 10.0


def test_evaluate_single_flip_counts_one_swap(tmp_path, simulated):
    ref0 = read_wav(simulated / "sc000_ref0.wav").as_array()
    ref1 = read_wav(simulated / "sc000_ref1.wav").as_array()
    half = ref0.shape[1] // 2
    out0 = np.concatenate([ref0[:, :half], ref1[:, half:]], axis=1)
    out1 = np.concatenate([ref1[:, :half], ref0[:, half:]], axis=1)
    from binsep.audio import StereoSignal

    write_wav(StereoSignal.from_array(out0), tmp_path / "o0.wav")
    write_wav(StereoSignal.from_array(out1), tmp_path / "o1.wav")
    code = main([
        "evaluate",
        "--outputs", str(tmp_path / "o0.wav"), str(tmp_path / "o1.wav"),
        "--references", str(simulated / "sc000_ref0.wav"), str(simulated / "sc000_ref1.wav"),
        "--manifest", str(simulated / "sc000_truth.txt"),
        "--n-seg", "4",
        "--out", str(tmp_path / "rec.txt"),
    ])
    assert code == EXIT_OK
    record = read_records(tmp_path / "rec.txt")[0]
    assert record["swaps"] == "1"
    assert record["perms"] == "AABB"


def test_evaluate_length_mismatch_exit_code(tmp_path, simulated):
    ref0 = read_wav(simulated / "sc000_ref0.wav").as_array()
    from binsep.audio import StereoSignal

    write_wav(StereoSignal.from_array(ref0[:, :1000]), tmp_path / "short.wav")
    code = main([
        "evaluate",
        "--outputs", str(tmp_path / "short.wav"), str(tmp_path / "short.wav"),
        "--references", str(simulated / "sc000_ref0.wav"), str(simulated / "sc000_ref1.wav"),
        "--manifest", str(simulated / "sc000_truth.txt"),
    ])
    assert code == EXIT_ALIGNMENT


def test_evaluate_record_matches_independent_recompute(tmp_path, simulated):
    # recompute one record with library calls as the checker
    from binsep.audio import StereoSignal
    from binsep.metrics import (
        build_eval_localizer, count_swaps, doa_error, estimate_doa_track,
        stereo_snr, truth_window_track,
    )

    code = main([
        "evaluate",
        "--outputs", str(simulated / "sc001_ref0.wav"), str(simulated / "sc001_ref1.wav"),
        "--references", str(simulated / "sc001_ref0.wav"), str(simulated / "sc001_ref1.wav"),
        "--manifest", str(simulated / "sc001_truth.txt"),
        "--n-seg", "4",
        "--out", str(tmp_path / "rec.txt"),
    ])
    assert code == EXIT_OK
    record = read_records(tmp_path / "rec.txt")[0]

    manifest = read_truth_manifest(simulated / "sc001_truth.txt")
    brirs = resolve_brirs(manifest.brir_spec)
    refs = [read_wav(simulated / f"sc001_ref{i}.wav") for i in range(2)]
    table = build_eval_localizer(brirs)
    window = int(round(0.08 * 16000))
    n_windows = len(refs[0]) // window
    for i in range(2):
        assert float(record[f"snr{i}_db"]) == pytest.approx(stereo_snr(refs[i], refs[i]))
        truth = truth_window_track(manifest.trajectories[i], manifest.grid, n_windows, window)
        est = estimate_doa_track(refs[i], table)
        expected = doa_error(est[:n_windows], truth)
        assert float(record[f"doa{i}_mae_deg"]) == pytest.approx(expected.mae_deg, abs=1e-5)
    assert int(record["swaps"]) == count_swaps(refs, refs, 4).swap_count


EXPERIMENT_SPEC = """\
version = 1

[scenarios]
count = 2
duration_s = 0.4
brir = synth:1:0.05:256
corpus = synth
master_seed = 77

[pipeline]
weights = {weights}
chunk_frames = 50
vote_frames = 20

[evaluate]
n_segments = 4
"""


def run_experiment(tmp_path, weights_path, name):
    spec = tmp_path / f"{name}.cfg"
    spec.write_text(EXPERIMENT_SPEC.format(weights=weights_path))
    outdir = tmp_path / name
    assert main(["run-experiment", str(spec), "--outdir", str(outdir)]) == EXIT_OK
    return outdir


def test_run_experiment_outputs_and_summary(tmp_path, weights_path, capsys):
    outdir = run_experiment(tmp_path, weights_path, "exp")
    captured = capsys.readouterr().out
    assert "swaps / SNR (dB) / DOA error (deg)" in captured
    assert "real-time factor" in captured
    records = read_records(outdir / "records.txt")
    assert len(records) == 2
    assert (outdir / "timing.txt").exists()
    assert (outdir / "outputs" / "sc000_spk0.wav").exists()
    # summary means equal manual averaging of the records
    swaps = np.mean([int(r["swaps"]) for r in records])
    lines = captured.splitlines()
    summary = lines[lines.index("# of swaps / SNR (dB) / DOA error (deg), means over scenarios") + 1]
    assert float(summary.split(" / ")[0]) == pytest.approx(swaps, abs=5e-3)


def test_run_experiment_records_deterministic(tmp_path, weights_path):
    out1 = run_experiment(tmp_path, weights_path, "e1")
    out2 = run_experiment(tmp_path, weights_path, "e2")
    assert (out1 / "records.txt").read_bytes() == (out2 / "records.txt").read_bytes()
    for name in ("scenarios/sc000_mix.wav", "outputs/sc001_spk1.wav"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_run_experiment_missing_pipeline_section(tmp_path, weights_path):
    spec = tmp_path / "bad.cfg"
    spec.write_text(SIM_CONFIG)
    assert main(["run-experiment", str(spec), "--outdir", str(tmp_path / "o")]) == EXIT_CONFIG

#!/usr/bin/env python3
# The three scoring axes: reconstruction SNR, spatial cues, speaker swaps.
#
# SNR is scale- and shift-sensitive on purpose: preserving interaural
# time and level differences requires penalizing any per-channel gain or
# delay the separator introduces. Spatial accuracy is read back with a
# delay-lookup localizer derived from the BRIR bank itself (a stand-in
# for a trained localizer; reports should say so). Swaps are counted as
# binding changes between adjacent segments of a long recording.

import numpy as np

from binsep import (
    MonoSignal,
    StereoSignal,
    build_eval_localizer,
    count_swaps,
    doa_error,
    estimate_doa_track,
    make_trajectory,
    pure_delay_brirs,
    snr_db,
    spatialize,
)
from binsep.metrics import truth_window_track
from binsep.spatial import Trajectory

FS = 16000
rng = np.random.default_rng(0)

# --- SNR --------------------------------------------------------------------
x = rng.standard_normal(FS)
print("SNR identities:")
print(f"  perfect reconstruction -> {snr_db(x, x):+7.1f} dB (clamped)")
print(f"  all-zero estimate      -> {snr_db(x, np.zeros_like(x)):+7.3f} dB")
print(f"  half-scale estimate    -> {snr_db(x, 0.5 * x):+7.4f} dB (analytic 6.0206)")
print(f"  1-sample shifted copy  -> {snr_db(x, np.roll(x, 1)):+7.3f} dB"
      "  <- shift sensitivity is the point")

# --- DOA --------------------------------------------------------------------
# A fully controlled scene: delta BRIRs whose interaural delay is linear
# in azimuth (2 samples per 5-degree step). The localizer table is read
# off the bank by cross-correlating each left/right filter pair.
brirs = pure_delay_brirs()
table = build_eval_localizer(brirs)
grid = brirs.grid()
print(f"\nlocalizer table: delays {table.delays[0]:+.0f}..{table.delays[-1]:+.0f} samples "
      f"across {grid.count} azimuths")

voice = MonoSignal(0.3 * rng.standard_normal(FS * 12))
traj = make_trajectory(-60.0, 10.0, "ccw", 12.0, grid)
moving = spatialize(voice, brirs, traj)
est = estimate_doa_track(moving, table)           # one estimate per 80 ms
truth = truth_window_track(traj, grid, est.size, int(0.08 * FS))
err = doa_error(est, truth)
print(f"moving source at 10 deg/s: MAE {err.mae_deg:.2f} deg over "
      f"{err.n_scored} windows ({err.n_no_estimate} silent)")

static = spatialize(MonoSignal(0.3 * rng.standard_normal(FS)), brirs,
                    Trajectory(((0, grid.index_of(35.0)),)))
print(f"static source at +35 deg: estimates "
      f"{sorted(set(estimate_doa_track(static, table).tolist()))}")

# --- swaps --------------------------------------------------------------------
# Build a 24 s two-speaker recording and flip the output pairing twice.
n = FS * 24
refs = [StereoSignal.from_array(0.2 * rng.standard_normal((2, n))) for _ in range(2)]
a, b = refs[0].as_array().copy(), refs[1].as_array().copy()
for lo, hi in ((n * 3 // 10, n * 6 // 10), (n * 8 // 10, n)):
    a[:, lo:hi] = refs[1].as_array()[:, lo:hi]
    b[:, lo:hi] = refs[0].as_array()[:, lo:hi]
outputs = [StereoSignal.from_array(a), StereoSignal.from_array(b)]

report = count_swaps(outputs, refs, n_segments=10)
print(f"\nswap counting over 10 segments of a 24 s recording:")
print(f"  binding string: {report.permutation_string()}  "
      f"(A = identity pairing, B = swapped)")
print(f"  swap count:     {report.swap_count}")

clean = count_swaps(refs, refs, n_segments=10)
print(f"  identity outputs for comparison: {clean.permutation_string()} "
      f"-> {clean.swap_count} swaps")

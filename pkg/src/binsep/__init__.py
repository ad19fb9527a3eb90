"""Binaural moving-speaker separation toolkit.

Spatializes moving sources through time-varying binaural room impulse
responses, runs a causal profile/tracking/localization/separation
pipeline over stereo audio, and scores outputs with reconstruction SNR,
azimuth error, and speaker-swap counts.
"""

from .audio import (
    FrameSpec,
    MonoSignal,
    SAMPLE_RATE,
    StereoSignal,
    frame_count,
    read_wav,
    write_wav,
)
from .grid import AzimuthGrid, default_grid
from .spatial import (
    BrirSet,
    Trajectory,
    load_brir_set,
    make_trajectory,
    mix_at_relative_snr,
    pure_delay_brirs,
    save_brir_set,
    spatialize,
    synth_brir_set,
)
from .scenario import (
    ScenarioResult,
    ScenarioSpec,
    SynthCorpus,
    build_scenario,
    random_scenarios,
    synth_speech,
)
from .nets import (
    ArchSpec,
    SpatialFeatures,
    StreamState,
    WeightContainer,
    causal_tcn_block,
    compute_spatial_features,
    decode,
    encode,
    extraction_forward,
    film,
    fusion_forward,
    gen_weights,
    load_weights,
    localization_forward,
    mixture_features,
    speaker_profile_forward,
)
from .tracking import (
    OnlineKMeansState,
    SpeakerProfiles,
    build_profiles,
    count_track_swaps,
    frame_pit_match,
    online_kmeans_step,
    triplet_loss,
)
from .doa import ChunkSpec, argmax_labels, chunk_vote, classes_to_degrees, decode_track
from .metrics import (
    DoaError,
    EvalLocalizerTable,
    SwapReport,
    build_eval_localizer,
    count_swaps,
    doa_error,
    estimate_doa_track,
    snr_db,
    stereo_snr,
)
from .pipeline import PipelineConfig, PipelineOutput, process_stream, process_with_report

__version__ = "0.1.0"

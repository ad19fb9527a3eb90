import numpy as np
import pytest

from binsep.nets import ArchSpec, gen_weights, load_weights


def tiny_arch(**overrides) -> ArchSpec:
    """Small architecture for fast layer/pipeline tests."""
    defaults = dict(
        encoder_filters=8,
        encoder_kernel=8,
        stft_win=32,
        bottleneck=8,
        hidden=12,
        embed_dim=8,
        doa_classes=9,
        speaker_stacks=1,
        fusion_stacks=1,
        extraction_stacks=1,
        blocks_per_stack=3,
        lstm_hidden=10,
    )
    defaults.update(overrides)
    return ArchSpec(**defaults)


@pytest.fixture(scope="session")
def tiny_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "tiny.bsrw"
    gen_weights(tiny_arch(), seed=11, path=path)
    return load_weights(path)


@pytest.fixture(scope="session")
def default_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "default.bsrw"
    gen_weights(ArchSpec(), seed=7, path=path)
    return load_weights(path)


def rig_passthrough(weights):
    """Identity encoder/decoder and saturated masks: output == mixture.

    Mutates a loaded container in place; use on a throwaway instance.
    """
    kernel = weights.arch.encoder_kernel
    weights.tensors["encoder.weight"] = np.eye(kernel)
    weights.tensors["decoder.weight"] = np.eye(kernel)
    weights.tensors["extract.head.bias"] = np.full(
        2 * weights.arch.encoder_filters, 1000.0
    )
    weights.tensors["extract.head.weight"] = np.zeros_like(
        weights.tensors["extract.head.weight"]
    )
    return weights

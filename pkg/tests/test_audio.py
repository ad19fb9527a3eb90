import numpy as np
import pytest
from scipy.io import wavfile

from binsep.audio import (
    FrameSpec,
    MonoSignal,
    SampleRateError,
    StereoSignal,
    WavFormatError,
    frame_count,
    read_wav,
    write_wav,
)


def test_mono_rejects_nonfinite():
    with pytest.raises(ValueError):
        MonoSignal([0.0, np.nan, 0.2])
    with pytest.raises(ValueError):
        MonoSignal([np.inf])


def test_mono_rejects_bad_rate():
    with pytest.raises(ValueError):
        MonoSignal([0.0], sample_rate=0)


def test_stereo_rejects_unequal_lengths():
    with pytest.raises(ValueError):
        StereoSignal(MonoSignal([0.0, 0.1]), MonoSignal([0.0]))


def test_stereo_rejects_rate_mismatch():
    with pytest.raises(ValueError):
        StereoSignal(MonoSignal([0.0], 16000), MonoSignal([0.0], 8000))


def test_stereo_array_round_trip():
    arr = np.array([[0.1, -0.2, 0.3], [0.0, 0.5, -0.5]])
    sig = StereoSignal.from_array(arr)
    assert np.array_equal(sig.as_array(), arr)


def test_frame_spec_validation():
    with pytest.raises(ValueError):
        FrameSpec(frame_len=64, hop=0)
    with pytest.raises(ValueError):
        FrameSpec(frame_len=64, hop=65)


def test_frame_count_basics():
    spec = FrameSpec(frame_len=64, hop=64)
    assert frame_count(64, spec) == 1
    assert frame_count(63, spec) == 0
    assert frame_count(0, spec) == 0
    # 2.4 s at 16 kHz in non-overlapping 4 ms frames
    assert frame_count(int(16000 * 2.4), spec) == 600


def test_frame_count_overlapping():
    spec = FrameSpec(frame_len=256, hop=64)
    # floor((1000 - 256) / 64) + 1
    assert frame_count(1000, spec) == 12


def test_frame_count_monotone():
    rng = np.random.default_rng(0)
    for _ in range(50):
        frame_len = int(rng.integers(1, 200))
        spec = FrameSpec(frame_len=frame_len, hop=int(rng.integers(1, frame_len + 1)))
        lengths = np.sort(rng.integers(0, 2000, size=10))
        counts = [frame_count(int(n), spec) for n in lengths]
        assert all(a <= b for a, b in zip(counts, counts[1:]))


def test_read_pcm16_one_second(tmp_path):
    path = tmp_path / "x.wav"
    data = np.zeros((16000, 2), dtype=np.int16)
    data[0] = (32767, -32768)
    wavfile.write(path, 16000, data)
    sig = read_wav(path)
    assert isinstance(sig, StereoSignal)
    assert len(sig) == 16000
    assert sig.left.samples[0] == pytest.approx(32767 / 32768)
    assert sig.right.samples[0] == -1.0


def test_float32_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.uniform(-1, 1, size=(2, 777)).astype(np.float32).astype(np.float64)
    sig = StereoSignal.from_array(arr)
    path = tmp_path / "rt.wav"
    assert write_wav(sig, path, codec="float32") == 0
    back = read_wav(path, expected_rate=16000)
    assert np.array_equal(back.as_array(), arr)


def test_mono_float32_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    x = MonoSignal(rng.uniform(-1, 1, size=300).astype(np.float32))
    path = tmp_path / "m.wav"
    write_wav(x, path, codec="float32")
    back = read_wav(path)
    assert isinstance(back, MonoSignal)
    assert np.array_equal(back.samples, x.samples)


def test_pcm16_quantized_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    x = MonoSignal(rng.uniform(-0.9, 0.9, size=200))
    path = tmp_path / "q.wav"
    assert write_wav(x, path, codec="pcm16") == 0
    back = read_wav(path)
    expected = np.rint(x.samples * 32768.0) / 32768.0
    assert np.array_equal(back.samples, expected)


def test_pcm16_clipping_counted(tmp_path):
    x = MonoSignal([0.0, 2.0, -3.0, 0.5])
    path = tmp_path / "c.wav"
    assert write_wav(x, path, codec="pcm16") == 2
    back = read_wav(path)
    assert back.samples[1] == pytest.approx(32767 / 32768)
    assert back.samples[2] == -1.0


def test_write_silence(tmp_path):
    path = tmp_path / "s.wav"
    write_wav(MonoSignal(np.zeros(100)), path, codec="pcm16")
    assert len(read_wav(path)) == 100


def test_read_rejects_rate_mismatch(tmp_path):
    path = tmp_path / "r8k.wav"
    wavfile.write(path, 8000, np.zeros(10, dtype=np.int16))
    with pytest.raises(SampleRateError):
        read_wav(path, expected_rate=16000)


def test_read_rejects_unsupported_codec(tmp_path):
    path = tmp_path / "i32.wav"
    wavfile.write(path, 16000, np.zeros(10, dtype=np.int32))
    with pytest.raises(WavFormatError):
        read_wav(path)


def test_read_rejects_malformed(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"this is not a wav file at all")
    with pytest.raises(WavFormatError):
        read_wav(path)


def test_unknown_codec_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_wav(MonoSignal([0.0]), tmp_path / "x.wav", codec="mp3")

"""
Tests for the WAV codec and resampling.
"""

import struct

import numpy as np
import pytest
import soundfile as sf

from acoustics.audio_io import load_audio, read_wav, resample, to_mono, write_wav
from acoustics.synthesis import AudioBuffer
from core.errors import FormatError, UnsupportedError


def _pcm24_file(path):
    payload = b"\x00\x00\x00" * 4
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, 16000, 48000, 3, 24,
        b"data", len(payload),
    )
    path.write_bytes(header + payload)
    return path


class TestWavCodec:
    def test_f32_is_lossless(self, tmp_dir, rng):
        samples = rng.uniform(-1, 1, (2, 1000)).astype(np.float32).astype(np.float64)
        path = tmp_dir / "x.wav"
        write_wav(path, AudioBuffer(samples, 22050), "f32")
        back = read_wav(path)
        assert back.sample_rate == 22050
        np.testing.assert_array_equal(back.channels, samples)

    def test_f32_header(self, tmp_dir):
        path = tmp_dir / "x.wav"
        write_wav(path, AudioBuffer.silence(250, 16000), "f32")
        info = sf.info(str(path))
        assert (info.format, info.subtype, info.frames, info.samplerate) == ("WAV", "FLOAT", 250, 16000)

    def test_pcm16_header(self, tmp_dir):
        path = tmp_dir / "x.wav"
        write_wav(path, AudioBuffer(np.zeros((2, 30)), 8000), "pcm16")
        info = sf.info(str(path))
        assert (info.subtype, info.channels, info.frames) == ("PCM_16", 2, 30)

    def test_pcm16_rounding_and_clipping(self, tmp_dir):
        path = tmp_dir / "x.wav"
        write_wav(path, AudioBuffer.mono([-1.0, 1.5, 0.5, -2.0], 16000), "pcm16")
        back = read_wav(path).channels[0]
        np.testing.assert_allclose(back, [-1.0, 32767 / 32768, 0.5, -1.0])

    def test_unknown_output_format(self, tmp_dir):
        with pytest.raises(UnsupportedError):
            write_wav(tmp_dir / "x.wav", AudioBuffer.silence(10, 16000), "mp3")

    def test_missing_riff(self, tmp_dir):
        path = tmp_dir / "bad.wav"
        path.write_bytes(b"RIFX" + b"\x00" * 40)
        with pytest.raises(FormatError) as info:
            read_wav(path)
        assert info.value.offset == 0

    def test_truncated_data_chunk(self, tmp_dir):
        path = tmp_dir / "x.wav"
        write_wav(path, AudioBuffer.silence(100, 16000), "f32")
        path.write_bytes(path.read_bytes()[:200])
        with pytest.raises(FormatError) as info:
            read_wav(path)
        assert info.value.offset is not None

    def test_unsupported_encoding(self, tmp_dir):
        with pytest.raises(UnsupportedError):
            read_wav(_pcm24_file(tmp_dir / "x.wav"))

    def test_foreign_pcm16_file(self, tmp_dir):
        path = tmp_dir / "x.wav"
        sf.write(str(path), np.array([[0, -32768], [16384, 32767]], dtype=np.int16), 8000, subtype="PCM_16")
        back = read_wav(path)
        assert back.n_channels == 2
        np.testing.assert_allclose(back.channels, [[0.0, 0.5], [-1.0, 32767 / 32768]])

    def test_float64_wav_rejected(self, tmp_dir):
        path = tmp_dir / "x.wav"
        sf.write(str(path), np.zeros(10), 8000, subtype="DOUBLE")
        with pytest.raises(UnsupportedError):
            read_wav(path)

    def test_missing_file(self, tmp_dir):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_dir / "none.wav")


class TestResample:
    def test_same_rate_is_noop(self):
        buf = AudioBuffer.mono(np.ones(100), 16000)
        assert resample(buf, 16000) is buf

    def test_length_follows_ratio(self):
        out = resample(AudioBuffer.mono(np.ones(44100), 44100), 16000)
        assert out.sample_rate == 16000
        assert out.n_samples == 16000

    def test_dc_preserved(self):
        out = resample(AudioBuffer.mono(np.ones(48000), 48000), 16000).channels[0]
        np.testing.assert_allclose(out[1000:-1000], 1.0, atol=1e-3)

    def test_tone_amplitude_preserved(self):
        t = np.arange(48000) / 48000.0
        out = resample(AudioBuffer.mono(np.sin(2 * np.pi * 1000.0 * t), 48000), 16000).channels[0]
        assert np.max(np.abs(out[1000:-1000])) == pytest.approx(1.0, rel=0.005)

    def test_load_audio_mixes_and_resamples(self, tmp_dir):
        path = tmp_dir / "stereo.wav"
        write_wav(path, AudioBuffer(np.vstack([np.ones(8000), np.zeros(8000)]), 8000), "f32")
        buf = load_audio(path, 16000)
        assert buf.n_channels == 1
        assert buf.sample_rate == 16000
        assert buf.n_samples == 16000
        np.testing.assert_allclose(buf.channels[0, 2000:-2000], 0.5, atol=1e-3)

    def test_to_mono_average(self):
        buf = to_mono(AudioBuffer(np.array([[1.0, 2.0], [3.0, 4.0]]), 16000))
        np.testing.assert_allclose(buf.channels, [[2.0, 3.0]])

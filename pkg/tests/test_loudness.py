"""
Tests for integrated loudness measurement and normalization.
"""

import numpy as np
import pytest

from acoustics.loudness import block_loudness, measure_lufs, normalize_to
from acoustics.synthesis import AudioBuffer
from core.errors import CannotNormalizeError, DurationError


def _sine(freq, seconds, sr, amplitude=1.0):
    t = np.arange(int(seconds * sr)) / sr
    return amplitude * np.sin(2 * np.pi * freq * t)


class TestMeasure:
    def test_full_scale_sine_reference(self):
        buf = AudioBuffer.mono(_sine(997.0, 5.0, 48000), 48000)
        assert measure_lufs(buf) == pytest.approx(-3.01, abs=0.1)

    def test_half_amplitude_is_six_db_lower(self):
        full = measure_lufs(AudioBuffer.mono(_sine(997.0, 3.0, 48000), 48000))
        half = measure_lufs(AudioBuffer.mono(_sine(997.0, 3.0, 48000, 0.5), 48000))
        assert full - half == pytest.approx(20 * np.log10(2.0), abs=1e-6)

    def test_channels_sum_with_unit_weights(self, rng):
        x = rng.standard_normal(16000 * 3) * 0.1
        mono = measure_lufs(AudioBuffer.mono(x, 16000))
        stereo = measure_lufs(AudioBuffer(np.vstack([x, x]), 16000))
        assert stereo - mono == pytest.approx(10 * np.log10(2.0), abs=1e-6)

    def test_silence_is_minus_infinity(self):
        assert measure_lufs(AudioBuffer.silence(16000, 16000)) == float("-inf")

    def test_too_short(self):
        with pytest.raises(DurationError):
            measure_lufs(AudioBuffer.mono(np.ones(1000), 16000))

    def test_block_layout(self):
        blocks = block_loudness(AudioBuffer.mono(np.ones(16000), 16000))
        # 400 ms blocks with a 100 ms hop over one second
        assert len(blocks) == 7

    def test_gating_ignores_silent_stretch(self):
        sr = 16000
        tone = _sine(1000.0, 2.0, sr, 0.3)
        padded = np.concatenate([tone, np.zeros(4 * sr)])
        assert measure_lufs(AudioBuffer.mono(padded, sr)) == pytest.approx(
            measure_lufs(AudioBuffer.mono(tone, sr)), abs=0.5
        )

    @pytest.mark.parametrize("channels", [1, 2, 4])
    @pytest.mark.parametrize("gain", [0.1, 0.5, 2.0])
    def test_gain_shifts_loudness_by_its_level(self, rng, channels, gain):
        buf = AudioBuffer(rng.standard_normal((channels, 16000 * 3)) * 0.05, 16000)
        expected = measure_lufs(buf) + 20.0 * np.log10(gain)
        assert measure_lufs(buf.scaled(gain)) == pytest.approx(expected, abs=1e-6)

    def test_wide_layout_matches_meter_per_channel_sum(self, rng):
        x = rng.standard_normal(16000 * 3) * 0.1
        mono = measure_lufs(AudioBuffer.mono(x, 16000))
        four = measure_lufs(AudioBuffer(np.vstack([x] * 4), 16000))
        assert four - mono == pytest.approx(10 * np.log10(4.0), abs=0.05)


class TestNormalize:
    @pytest.mark.parametrize("target", [-17.0, -21.0, -24.0])
    def test_hits_target(self, rng, target):
        buf = AudioBuffer.mono(rng.standard_normal(16000 * 4) * 0.05, 16000)
        result = normalize_to(buf, target)
        assert measure_lufs(result.buffer) == pytest.approx(target, abs=0.1)
        assert result.gain > 0

    def test_silence_cannot_normalize(self):
        with pytest.raises(CannotNormalizeError):
            normalize_to(AudioBuffer.silence(16000, 16000), -17.0)

    @pytest.mark.parametrize("channels", [1, 4])
    def test_normalizing_twice_is_a_no_op(self, rng, channels):
        buf = AudioBuffer(rng.standard_normal((channels, 16000 * 4)) * 0.05, 16000)
        once = normalize_to(buf, -21.0)
        twice = normalize_to(once.buffer, -21.0)
        assert twice.gain == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(twice.buffer.channels, once.buffer.channels, rtol=1e-6)

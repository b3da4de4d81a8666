"""
Tests for convolution and moving-source rendering.
"""

import numpy as np
import pytest

from acoustics.rir import ImpulseResponse, ReceiverConfig, RIRRequest, trace_rir
from acoustics.synthesis import (
    AudioBuffer, MovingRender, convolve, interp_weight, overlap_add, render_moving,
    render_static,
)
from acoustics.trajectory import Trajectory, sample_rir_positions, with_duration
from core.config import TracerConfig
from core.errors import DomainError, ValidationError

SR = 16000


def _ir(h, sr=SR):
    return ImpulseResponse(np.atleast_2d(h), sr, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))


def _moving(rirs, length=2.0, n_samples=SR, spacing=0.5):
    traj = with_duration(Trajectory(np.array([[0.0, 1.5, 0.0], [length, 1.5, 0.0]])), n_samples / SR)
    positions = sample_rir_positions(traj, spacing)
    if callable(rirs):
        rirs = [rirs(k) for k in range(len(positions))]
    return MovingRender(positions=positions, rirs=rirs, trajectory=traj)


class TestAudioBuffer:
    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            AudioBuffer.mono([0.0, np.nan], SR)

    def test_fit_length(self):
        buf = AudioBuffer.mono(np.arange(5.0), SR)
        np.testing.assert_array_equal(buf.fit_length(3).channels, [[0.0, 1.0, 2.0]])
        np.testing.assert_array_equal(buf.fit_length(7).channels, [[0, 1, 2, 3, 4, 0, 0]])

    def test_silence_shape(self):
        buf = AudioBuffer.silence(100, SR, n_channels=4)
        assert buf.channels.shape == (4, 100)
        assert buf.duration == pytest.approx(100 / SR)


class TestConvolution:
    def test_overlap_add_matches_direct(self, rng):
        x = rng.standard_normal(20000)
        h = rng.standard_normal(3000)
        np.testing.assert_allclose(overlap_add(x, h, block=1024), np.convolve(x, h), atol=1e-9)

    def test_delta_ir_is_identity(self, rng):
        x = rng.standard_normal(5000)
        out = convolve(AudioBuffer.mono(x, SR), _ir(np.array([1.0, 0.0, 0.0])))
        assert out.n_samples == 5002
        np.testing.assert_allclose(out.channels[0, :5000], x, atol=1e-12)

    def test_multichannel_ir(self, rng):
        x = rng.standard_normal(1000)
        out = convolve(AudioBuffer.mono(x, SR), _ir(np.array([[1.0, 0.0], [0.0, 2.0]])))
        assert out.n_channels == 2
        np.testing.assert_allclose(out.channels[1, 1:1001], 2.0 * x, atol=1e-12)

    def test_rate_mismatch(self):
        with pytest.raises(ValidationError):
            convolve(AudioBuffer.mono(np.ones(10), SR), _ir(np.ones(3), sr=8000))


class TestInterpWeight:
    def test_midpoint(self):
        assert interp_weight((0, 0, 0), (2, 0, 0), (1, 0, 0)) == pytest.approx(0.5)

    def test_clamped(self):
        assert interp_weight((0, 0, 0), (2, 0, 0), (5, 0, 0)) == pytest.approx(1.0)

    def test_coincident_endpoints(self):
        with pytest.raises(DomainError):
            interp_weight((1, 1, 1), (1, 1, 1), (0, 0, 0))


class TestRenderMoving:
    def test_identical_rirs_reduce_to_convolution(self, rng):
        x = rng.standard_normal(SR)
        h = rng.standard_normal(400) * np.exp(-np.arange(400) / 80.0)
        mr = _moving(lambda k: _ir(h))
        assert len(mr.rirs) == 5
        moving = render_moving(AudioBuffer.mono(x, SR), mr, block=2048)
        static = convolve(AudioBuffer.mono(x, SR), _ir(h), block=2048)
        np.testing.assert_allclose(moving.channels, static.channels, atol=1e-6)

    def test_crossfade_between_two_positions(self):
        n = 1000
        mr = _moving([_ir(np.array([1.0])), _ir(np.array([2.0]))], length=1.0, n_samples=n, spacing=1.0)
        out = render_moving(AudioBuffer.mono(np.ones(n), SR), mr).channels[0]
        assert out.shape == (n,)
        for t in (0, 250, 500, 999):
            assert out[t] == pytest.approx(1.0 + t / n)

    def test_linear_in_the_dry_signal(self, rng):
        n = 4000
        h0 = rng.standard_normal(200) * np.exp(-np.arange(200) / 40.0)
        h1 = rng.standard_normal(300) * np.exp(-np.arange(300) / 60.0)
        mr = _moving([_ir(h0), _ir(h1)], length=1.0, n_samples=n, spacing=1.0)
        x1, x2 = rng.standard_normal(n), rng.standard_normal(n)
        a, b = 0.7, -1.3

        def render(x):
            return render_moving(AudioBuffer.mono(x, SR), mr, block=1024).channels

        np.testing.assert_allclose(render(a * x1 + b * x2), a * render(x1) + b * render(x2), atol=1e-9)

    def test_bounded_by_neighbouring_renders(self, rng):
        n = 4000
        x = rng.standard_normal(n)
        h0 = rng.standard_normal(200) * np.exp(-np.arange(200) / 40.0)
        h1 = rng.standard_normal(200) * np.exp(-np.arange(200) / 40.0)
        mr = _moving([_ir(h0), _ir(h1)], length=1.0, n_samples=n, spacing=1.0)
        out = render_moving(AudioBuffer.mono(x, SR), mr, block=1024).channels[0]
        y0 = convolve(AudioBuffer.mono(x, SR), _ir(h0), block=1024).channels[0]
        y1 = convolve(AudioBuffer.mono(x, SR), _ir(h1), block=1024).channels[0]
        assert np.all(out >= np.minimum(y0, y1) - 1e-9)
        assert np.all(out <= np.maximum(y0, y1) + 1e-9)

    def test_duration_must_match(self):
        mr = _moving(lambda k: _ir(np.array([1.0])), n_samples=SR)
        with pytest.raises(ValidationError):
            render_moving(AudioBuffer.mono(np.ones(SR // 2), SR), mr)

    def test_needs_two_rirs(self):
        traj = with_duration(Trajectory(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])), 1.0)
        positions = sample_rir_positions(traj, 1.0)
        with pytest.raises(ValidationError):
            MovingRender(positions=positions[:1], rirs=[_ir(np.array([1.0]))], trajectory=traj)

    def test_mismatched_channel_counts(self):
        traj = with_duration(Trajectory(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])), 1.0)
        positions = sample_rir_positions(traj, 1.0)
        with pytest.raises(ValidationError):
            MovingRender(positions=positions, rirs=[_ir(np.ones(2)), _ir(np.ones((2, 2)))], trajectory=traj)


class TestRenderStatic:
    def test_static_render_matches_traced_convolution(self, make_shoebox, rng):
        scene = make_shoebox()
        tracer = TracerConfig(n_rays=300, max_ir_seconds=0.1, n_chunks=4)
        rcv = ReceiverConfig("mono", (3.0, 1.5, 2.0))
        dry = AudioBuffer.mono(rng.standard_normal(4000), SR)
        out = render_static(dry, scene, (1.0, 1.5, 1.0), rcv, seed=9, tracer=tracer)
        ir = trace_rir(scene, RIRRequest.from_config(tracer, (1.0, 1.5, 1.0), rcv, SR, 9))
        np.testing.assert_allclose(out.channels, convolve(dry, ir).channels, atol=1e-12)

"""
Shared fixtures: loggers, scenes, small pools and a fast pipeline config.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from acoustics.mixer import Pools, Utterance
from acoustics.scene import BandCoefficients, load_scene, shoebox_scene
from core.config import DATA_DIR, PipelineConfig
from core.logger import ProcessingLogger
from scripts.generate_mock_data import generate_pools


@pytest.fixture
def tmp_dir(tmp_path):
    return tmp_path


@pytest.fixture
def logger(tmp_dir):
    return ProcessingLogger(log_path=tmp_dir / "test_log.csv")


@pytest.fixture
def hall():
    """Bundled 12 x 3 x 10 m hall centred on the origin."""
    return load_scene(DATA_DIR / "shoebox.obj", DATA_DIR / "materials.json")


@pytest.fixture
def make_shoebox():
    def factory(dims=(5.0, 3.0, 4.0), absorption=0.3, scattering=0.0):
        return shoebox_scene(dims, BandCoefficients.flat(absorption, scattering))
    return factory


@pytest.fixture
def write_materials(tmp_dir):
    def factory(table=None, name="materials.json") -> Path:
        table = table or {
            "default": {"absorption": [0.2] * 6},
            "brick": {"absorption": [0.05] * 6, "scattering": [0.3] * 6},
        }
        path = tmp_dir / name
        path.write_text(json.dumps(table), encoding="utf-8")
        return path
    return factory


@pytest.fixture
def write_obj(tmp_dir):
    def factory(text: str, name="mesh.obj") -> Path:
        path = tmp_dir / name
        path.write_text(text, encoding="utf-8")
        return path
    return factory


@pytest.fixture
def fake_pools():
    """Pools whose files do not exist; enough for placement planning only."""
    speech = {
        f"spk{s}": [
            Utterance(f"/nonexistent/spk{s}-{u}.wav", f"WORDS {s} {u}", 2.0, f"spk{s}")
            for u in range(6)
        ]
        for s in range(4)
    }
    env = [Utterance(f"/nonexistent/env{i}.wav", "", 3.0, kind="environmental") for i in range(4)]
    music = [Utterance(f"/nonexistent/mus{i}.wav", "", 3.0, kind="music") for i in range(4)]
    return Pools(speech=speech, environmental=env, music=music)


@pytest.fixture
def mock_pool_manifest(tmp_dir):
    """Real synthetic WAV pool with short clips."""
    return generate_pools(
        tmp_dir / "pool", n_speakers=3, utterances_per_speaker=3,
        n_environmental=6, n_music=6, clip_seconds=(0.6, 1.0), seed=11,
    )


@pytest.fixture
def fast_config(tmp_dir):
    """Pipeline config scaled down to seconds-long clips and few rays."""
    config = PipelineConfig()
    config.output_dir = tmp_dir / "out"
    config.seed = 5
    config.tracer.n_rays = 300
    config.tracer.max_ir_seconds = 0.2
    config.tracer.max_bounces = 30
    config.tracer.n_chunks = 8
    config.render.rir_spacing = 2.0
    config.mix.clip_duration = 4.0
    config.mix.speech_gap_max = 0.3
    config.mix.noise_gap_max = 0.3
    config.log_level = "WARNING"
    return config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

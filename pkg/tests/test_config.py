"""
Tests for configuration loading, seeds and the error hierarchy.
"""

import json

import pytest

from core.config import (
    DATA_DIR, LoudnessTargets, get_config, load_generation_config, strip_json_comments,
)
from core.errors import ConfigurationError, FormatError, SonicForgeError, UnsupportedError
from core.utils import derive_seed, group_id, read_json, write_json


def _write_config(tmp_dir, mic_type="monaural", **extra_mic):
    mic = {"type": mic_type, "position": {"x": 0, "y": 1.5, "z": 0}, **extra_mic}
    raw = {
        "microphone": mic,
        "sound_source": {
            "audio_file": "a.wav",
            "start_point": {"x": 1, "y": 1.5, "z": 1},
            "movement_type": "static",
        },
    }
    path = tmp_dir / "config.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


class TestGenerationConfig:
    def test_bundled_example(self):
        gen = load_generation_config(DATA_DIR / "generation_config.json")
        assert gen.microphone_kind == "mono"
        assert gen.microphone_position == (0.0, 1.5, 0.0)
        assert gen.source_start == (5.0, 1.5, -3.0)
        assert gen.source_end == (-2.0, 1.5, 4.0)
        assert gen.movement_type == "dynamic"
        assert gen.noise_position == (2.0, 1.5, -1.0)
        assert gen.sample_rate == 44100
        assert gen.duration == pytest.approx(10.0)
        assert gen.scene == "shoebox"

    def test_binaural_unsupported(self, tmp_dir):
        with pytest.raises(UnsupportedError) as info:
            load_generation_config(_write_config(tmp_dir, "binaural"))
        assert info.value.exit_code == 2

    def test_ambisonics_kind(self, tmp_dir):
        gen = load_generation_config(_write_config(tmp_dir, "Ambisonics"))
        assert gen.microphone_kind == "ambisonics_fo"
        assert gen.source_end is None

    def test_custom_array_offsets(self, tmp_dir):
        offsets = [{"x": -0.05, "y": 0, "z": 0}, {"x": 0.05, "y": 0, "z": 0}]
        gen = load_generation_config(_write_config(tmp_dir, "Custom array", offsets=offsets))
        assert gen.microphone_kind == "array"
        assert gen.array_offsets == [(-0.05, 0.0, 0.0), (0.05, 0.0, 0.0)]

    def test_custom_array_needs_offsets(self, tmp_dir):
        with pytest.raises(ConfigurationError):
            load_generation_config(_write_config(tmp_dir, "Custom array"))

    def test_unknown_microphone(self, tmp_dir):
        with pytest.raises(ConfigurationError):
            load_generation_config(_write_config(tmp_dir, "shotgun"))

    def test_dynamic_needs_end_point(self, tmp_dir):
        path = _write_config(tmp_dir)
        raw = json.loads(path.read_text(encoding="utf-8"))
        raw["sound_source"]["movement_type"] = "dynamic"
        path.write_text(json.dumps(raw), encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_generation_config(path)

    def test_malformed_json_reports_line(self, tmp_dir):
        path = tmp_dir / "config.json"
        path.write_text('{\n  "microphone": {\n    "type": \n}\n', encoding="utf-8")
        with pytest.raises(FormatError) as info:
            load_generation_config(path)
        assert info.value.line is not None
        assert info.value.exit_code == 1

    def test_missing_file(self, tmp_dir):
        with pytest.raises(FileNotFoundError):
            load_generation_config(tmp_dir / "absent.json")


class TestJsonComments:
    def test_strips_comments_and_trailing_commas(self):
        text = '{\n  "a": 1, // one\n  "b": [1, 2,],\n}\n'
        assert json.loads(strip_json_comments(text)) == {"a": 1, "b": [1, 2]}

    def test_keeps_slashes_inside_strings(self):
        text = '{"url": "http://example.org/x"} // trailing'
        assert json.loads(strip_json_comments(text)) == {"url": "http://example.org/x"}


class TestPipelineConfig:
    def test_defaults(self):
        config = get_config()
        assert config.mix.clip_duration == 60.0
        assert config.mix.sample_rate == 16000
        assert config.tracer.n_rays == 20000
        assert config.render.rir_spacing == 0.5
        assert config.log_dir == config.output_dir / "logs"

    def test_log_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("SONICFORGE_LOG", "debug")
        assert get_config().log_level == "DEBUG"

    def test_loudness_targets(self):
        targets = LoudnessTargets()
        assert targets.for_kind("speech") == -17.0
        assert targets.for_kind("environmental") == -21.0
        assert targets.for_kind("music") == -24.0
        with pytest.raises(ConfigurationError):
            targets.for_kind("podcast")


class TestUtils:
    def test_derive_seed_deterministic(self):
        assert derive_seed(7, "group", 3) == derive_seed(7, "group", 3)
        assert derive_seed(7, "group", 3) != derive_seed(7, "group", 4)
        assert derive_seed(7, "group", 3) != derive_seed(8, "group", 3)
        assert 0 <= derive_seed(7, "plan") < 2 ** 63

    def test_group_id(self):
        assert group_id(12) == "group_00012"

    def test_json_round_trip(self, tmp_dir):
        import numpy as np

        path = tmp_dir / "nested" / "x.json"
        write_json(path, {"a": np.arange(3), "b": np.float64(1.5), "p": tmp_dir})
        assert read_json(path) == {"a": [0, 1, 2], "b": 1.5, "p": str(tmp_dir)}

    def test_every_error_has_exit_code(self):
        assert SonicForgeError("x").exit_code == 1
        assert issubclass(UnsupportedError, SonicForgeError)

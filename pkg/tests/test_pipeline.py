"""
Integration tests for the command line and the orchestrators.
"""

import json
import shutil

import numpy as np
import pandas as pd
import pytest

import main
from acoustics.audio_io import read_wav, write_wav
from acoustics.synthesis import AudioBuffer
from agents.placement_agent import PlacementAgent
from agents.quality_critic_agent import check_metadata
from core.config import DATA_DIR, strip_json_comments
from core.utils import read_json
from scripts.generate_mock_data import generate_config_audio

STEMS = ("source1", "source2", "source3", "noise", "music")


@pytest.fixture
def cli(monkeypatch, fast_config):
    monkeypatch.setattr(main, "get_config", lambda: fast_config)
    return main.main


@pytest.fixture
def eval_manifest(tmp_dir, rng):
    """Two rows: one exact estimate, one swapped two-source estimate."""
    sr = 16000
    signals = {name: rng.standard_normal(sr) * 0.1 for name in ("a", "b", "c")}
    for name, samples in signals.items():
        write_wav(tmp_dir / f"{name}.wav", AudioBuffer.mono(samples, sr), "f32")
    path = tmp_dir / "pairs.csv"
    pd.DataFrame([
        {"id": "single", "reference": "a.wav", "estimate": "a.wav"},
        {"id": "pair", "reference": "b.wav;c.wav", "estimate": "c.wav;b.wav"},
    ]).to_csv(path, index=False)
    return path


def _read_report(path):
    return pd.read_json(path, lines=True)


class TestEvaluateCommand:
    def test_writes_report(self, cli, eval_manifest, tmp_dir):
        out = tmp_dir / "report.jsonl"
        assert cli(["evaluate", str(eval_manifest), "--metrics", "si_snr,snr", "--out", str(out)]) == 0
        report = _read_report(out)
        assert set(report["metric"]) == {"si_snr", "snr"}
        assert len(report) == 6
        single = report[report["file"] == str(tmp_dir / "a.wav")]
        assert (single["value"] == 60.0).all()
        assert (tmp_dir / "logs" / "evaluation_log.csv").exists()

    def test_pit_assignment_rows(self, cli, eval_manifest, tmp_dir):
        out = tmp_dir / "report.jsonl"
        assert cli(["evaluate", str(eval_manifest), "--pit", "--out", str(out)]) == 0
        report = _read_report(out)
        pit = report[report["metric"] == "pit_assignment"]
        assert list(pit["file"]) == ["pair"]
        assert str(pit["value"].iloc[0]) == "1,0"
        scores = pd.to_numeric(report.loc[report["metric"] == "si_snr", "value"])
        assert (scores == 60.0).all()

    def test_missing_estimate_aborts(self, cli, eval_manifest, tmp_dir):
        frame = pd.read_csv(eval_manifest)
        frame.loc[0, "estimate"] = "gone.wav"
        frame.to_csv(eval_manifest, index=False)
        out = tmp_dir / "report.jsonl"
        assert cli(["evaluate", str(eval_manifest), "--out", str(out)]) == 1
        assert list(_read_report(out)["metric"]) == ["error"]

    def test_keep_going_records_error(self, cli, eval_manifest, tmp_dir):
        frame = pd.read_csv(eval_manifest)
        frame.loc[0, "estimate"] = "gone.wav"
        frame.to_csv(eval_manifest, index=False)
        out = tmp_dir / "report.jsonl"
        assert cli(["evaluate", str(eval_manifest), "--keep-going", "--out", str(out)]) == 0
        report = _read_report(out)
        errors = report[report["metric"] == "error"]
        assert list(errors["file"]) == ["single"]
        assert (report["metric"] == "si_snr").sum() == 2

    def test_threaded_matches_serial(self, cli, eval_manifest, tmp_dir):
        serial, threaded = tmp_dir / "serial.jsonl", tmp_dir / "threaded.jsonl"
        assert cli(["evaluate", str(eval_manifest), "--out", str(serial)]) == 0
        assert cli(["evaluate", str(eval_manifest), "--jobs", "2", "--out", str(threaded)]) == 0
        assert serial.read_text(encoding="utf-8") == threaded.read_text(encoding="utf-8")

    def test_unknown_metric(self, cli, eval_manifest, tmp_dir):
        assert cli(["evaluate", str(eval_manifest), "--metrics", "pesq", "--out", str(tmp_dir / "r.jsonl")]) == 1

    def test_manifest_missing_columns(self, cli, tmp_dir):
        path = tmp_dir / "pairs.csv"
        path.write_text("id,reference\nx,a.wav\n", encoding="utf-8")
        assert cli(["evaluate", str(path), "--out", str(tmp_dir / "r.jsonl")]) == 1


class TestRirCommand:
    def test_traces_bundled_config(self, cli, tmp_dir):
        config = tmp_dir / "generation_config.json"
        shutil.copy(DATA_DIR / "generation_config.json", config)
        out = tmp_dir / "rir" / "hall.wav"
        assert cli(["rir", "--config", str(config), "--out", str(out)]) == 0

        ir = read_wav(out)
        assert ir.sample_rate == 44100
        assert ir.n_channels == 1
        assert np.all(np.isfinite(ir.channels))
        sidecar = read_json(out.with_suffix(".json"))
        assert sidecar["room_dimensions"] == [12.0, 3.0, 10.0]
        assert set(sidecar["rt60_eyring"]) == {"125", "250", "500", "1000", "2000", "4000"}
        assert not out.with_name("hall_render.wav").exists()

    def test_renders_when_audio_present(self, cli, tmp_dir):
        config = tmp_dir / "generation_config.json"
        shutil.copy(DATA_DIR / "generation_config.json", config)
        generate_config_audio(tmp_dir, seconds=0.5, sample_rate=44100)
        out = tmp_dir / "rir.wav"
        assert cli(["rir", "--config", str(config), "--out", str(out)]) == 0
        render = read_wav(tmp_dir / "rir_render.wav")
        assert render.sample_rate == 44100
        assert render.n_samples >= int(0.5 * 44100)
        assert np.abs(render.channels).max() > 0

    def test_binaural_is_unsupported(self, cli, tmp_dir):
        raw = json.loads(strip_json_comments(
            (DATA_DIR / "generation_config.json").read_text(encoding="utf-8")))
        raw["microphone"]["type"] = "binaural"
        config = tmp_dir / "binaural.json"
        config.write_text(json.dumps(raw), encoding="utf-8")
        assert cli(["rir", "--config", str(config)]) == 2

    def test_missing_scene(self, cli, tmp_dir):
        config = tmp_dir / "generation_config.json"
        shutil.copy(DATA_DIR / "generation_config.json", config)
        assert cli(["rir", "--config", str(config), "--scene", str(tmp_dir / "none.obj")]) == 1


class TestGenerateCommand:
    def test_empty_pool_manifest(self, cli, tmp_dir):
        pools = tmp_dir / "pools.json"
        pools.write_text("[]", encoding="utf-8")
        assert cli(["generate", "--pools", str(pools), "--out", str(tmp_dir / "run")]) == 1

    def test_single_group(self, cli, mock_pool_manifest, tmp_dir):
        out = tmp_dir / "run"
        assert cli(["generate", "--pools", str(mock_pool_manifest), "--n-groups", "1", "--out", str(out)]) == 0
        group = out / "group_00000"
        for stem in STEMS:
            buf = read_wav(group / f"{stem}.wav")
            assert buf.n_samples == 4 * 16000
        summary = pd.read_csv(out / "summary.csv")
        assert list(summary["status"]) == ["ok"]
        assert (out / "logs" / "processing_log.csv").exists()
        metadata = read_json(group / "metadata.json")
        plan = read_json(group / "plan.json")
        for k, source in enumerate(plan["sources"], start=1):
            assert source["start_end_points"] == metadata[f"source{k}"]["start_end_points"]
        assert plan["music"]["start_end_points"] == metadata["music"]["start_end_points"]

    def test_unexpected_error_fails_only_its_group(self, cli, mock_pool_manifest, tmp_dir, monkeypatch):
        original = PlacementAgent.execute

        def flaky(agent, data):
            if data["group_id"] == "group_00001":
                raise ValueError("broken placement")
            return original(agent, data)

        monkeypatch.setattr(PlacementAgent, "execute", flaky)
        out = tmp_dir / "run"
        args = ["generate", "--pools", str(mock_pool_manifest), "--n-groups", "2", "--jobs", "1",
                "--out", str(out)]
        assert cli(args) == 1

        summary = pd.read_csv(out / "summary.csv")
        assert list(summary["status"]) == ["ok", "failed"]
        assert summary["error"][1] == "ValueError: broken placement"
        assert (out / "group_00000" / "metadata.json").exists()
        group_log = pd.read_csv(out / "logs" / "groups" / "group_00001.csv")
        errors = group_log[group_log["status"] == "ERROR"]
        assert "Traceback" in errors["details"].iloc[-1]
        assert "broken placement" in errors["details"].iloc[-1]

    @pytest.mark.slow
    def test_generation_is_reproducible(self, cli, mock_pool_manifest, tmp_dir):
        runs = {
            "a": ["--jobs", "1"],
            "b": ["--jobs", "1"],
            "c": ["--jobs", "2"],
        }
        for name, extra in runs.items():
            args = ["generate", "--pools", str(mock_pool_manifest), "--n-groups", "2",
                    "--seed", "21", "--out", str(tmp_dir / name), *extra]
            assert cli(args) == 0

        schema = read_json(DATA_DIR / "metadata_schema.json")
        for gid in ("group_00000", "group_00001"):
            reference = tmp_dir / "a" / gid
            metadata = read_json(reference / "metadata.json")
            assert check_metadata(metadata, schema, n_total=4 * 16000) == []
            for other in ("b", "c"):
                for stem in STEMS:
                    name = f"{stem}.wav"
                    np.testing.assert_array_equal(read_wav(reference / name).channels,
                                                  read_wav(tmp_dir / other / gid / name).channels)
                assert read_json(tmp_dir / other / gid / "metadata.json") == metadata

import json
import os

import numpy as np
import pytest

from placemix.checkpoint import save_checkpoint
from placemix.cli import main
from placemix.manifest import parse_manifest
from placemix.mixer import AggregatorConfig, init_model
from placemix.synth import synthesize
from placemix.tensorfile import read_tensor, write_tensor


@pytest.fixture()
def dataset(tmp_path):
    data = tmp_path / "data"
    synthesize(
        data, n_places=6, images_per_place=4, token_count=4, embed_dim=6,
        cluster_spread=0.3, seed=3,
    )
    return data


@pytest.fixture()
def checkpoint(tmp_path):
    model = init_model(4, 6, AggregatorConfig(depth=1, out_channels=4, out_rows=2), seed=0)
    ckpt = tmp_path / "ckpt"
    save_checkpoint(ckpt, model)
    return ckpt


def write_cfg(path, **overrides):
    lines = [f"{k}={v}" for k, v in overrides.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestInspect:
    def test_header_echo(self, tmp_path, capsys):
        path = tmp_path / "t.vprt"
        write_tensor(path, np.zeros((3, 5), dtype=np.float32))
        assert main(["inspect", str(path)]) == 0
        out = capsys.readouterr().out
        assert "f32" in out
        assert "[3,5]" in out

    def test_bad_magic_reported(self, tmp_path, capsys):
        path = tmp_path / "bad.vprt"
        path.write_bytes(b"XXXX1234")
        assert main(["inspect", str(path)]) == 1
        assert "magic" in capsys.readouterr().err


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag(self, capsys):
        assert main(["inspect", "--wat", "x"]) == 2

    def test_missing_required_flag(self, capsys):
        assert main(["evaluate"]) == 2


class TestAggregate:
    def test_writes_descriptor_per_record(self, dataset, checkpoint, tmp_path, capsys):
        out = tmp_path / "descs"
        code = main([
            "aggregate", "--checkpoint", str(checkpoint),
            "--manifest", str(dataset / "manifest.jsonl"),
            "--split", "database", "--out", str(out),
        ])
        assert code == 0
        records = [r for r in parse_manifest(dataset / "manifest.jsonl") if r.split == "database"]
        files = sorted(os.listdir(out))
        assert files == sorted(f"{r.image_id}.vprt" for r in records)
        d = read_tensor(out / files[0])
        assert d.shape == (8,)
        assert abs(np.linalg.norm(d) - 1.0) < 1e-5


class TestTrainCli:
    def test_train_then_wire_through_evaluate(self, dataset, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "run.cfg",
            depth=1, out_channels=8, out_rows=2, epochs=3, places_per_batch=3,
            manifest=str(dataset / "manifest.jsonl"), out=str(tmp_path / "run"),
        )
        assert main(["train", "--config", str(cfg), "--seed", "5"]) == 0
        assert (tmp_path / "run" / "checkpoint" / "model.cfg").exists()
        assert (tmp_path / "run" / "loss.log").exists()

        idx = tmp_path / "idx"
        assert main([
            "index", "--checkpoint", str(tmp_path / "run" / "checkpoint"),
            "--manifest", str(dataset / "manifest.jsonl"), "--out", str(idx),
        ]) == 0

        report_path = tmp_path / "report.json"
        assert main([
            "evaluate", "--index", str(idx),
            "--queries", str(dataset / "manifest.jsonl"),
            "--threshold-m", "25", "--out", str(report_path),
        ]) == 0
        report = json.loads(report_path.read_text())
        assert report["threshold_m"] == 25.0
        assert report["query_count"] == 6
        assert set(report["recalls"]) == {"1", "5", "10"}

    def test_train_determinism_bitwise(self, dataset, tmp_path):
        for name in ("a", "b"):
            cfg = write_cfg(
                tmp_path / f"{name}.cfg",
                depth=1, out_channels=8, out_rows=2, epochs=2, places_per_batch=3,
                manifest=str(dataset / "manifest.jsonl"), out=str(tmp_path / name),
            )
            assert main(["train", "--config", str(cfg), "--seed", "7"]) == 0
        a_dir = tmp_path / "a" / "checkpoint"
        b_dir = tmp_path / "b" / "checkpoint"
        for f in sorted(os.listdir(a_dir)):
            assert (a_dir / f).read_bytes() == (b_dir / f).read_bytes(), f
        assert (tmp_path / "a" / "loss.log").read_bytes() == (tmp_path / "b" / "loss.log").read_bytes()

    def test_evaluate_threshold_flag_respected(self, dataset, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "run.cfg",
            depth=0, out_channels=8, out_rows=2, epochs=0, places_per_batch=3,
            manifest=str(dataset / "manifest.jsonl"), out=str(tmp_path / "run"),
        )
        assert main(["train", "--config", str(cfg)]) == 0
        idx = tmp_path / "idx"
        assert main([
            "index", "--checkpoint", str(tmp_path / "run" / "checkpoint"),
            "--manifest", str(dataset / "manifest.jsonl"), "--out", str(idx),
        ]) == 0
        capsys.readouterr()
        assert main([
            "evaluate", "--index", str(idx),
            "--queries", str(dataset / "manifest.jsonl"), "--threshold-m", "7.5",
        ]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["threshold_m"] == 7.5

    def test_missing_manifest_is_user_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "run.cfg", out=str(tmp_path / "run"))
        assert main(["train", "--config", str(cfg)]) == 1
        assert "manifest" in capsys.readouterr().err

"""Run bookkeeping: manifests, hashing and artifact helpers."""

import hashlib
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import pytest

from src.errors import InputMissingError, NumericalError
from src.runs.base import MANIFEST_NAME, ArtifactRecord, BaseRun, RunManifest
from src.runs.files import read_json, read_points, sha256_file, write_json


class EchoRun(BaseRun):
    """Writes one file holding its payload."""

    command = "echo"

    def __init__(self, output_dir: Path, payload: str, fail: bool = False):
        super().__init__(output_dir, seed=7)
        self.payload = payload
        self.fail = fail

    def argv(self) -> list[str]:
        return [self.command, "--payload", self.payload]

    def config(self) -> dict[str, Any]:
        return {"payload": self.payload}

    def prepare(self) -> str:
        return self.payload

    def compute(self, prepared: str) -> str:
        if self.fail:
            raise NumericalError("boom")
        return prepared.upper()

    def persist(self, result: str) -> list[Path]:
        path = self.output_dir / "echo.txt"
        path.write_text(result)
        note = self.output_dir / "note.txt"
        note.write_text("secondary")
        self.secondary.append(note)
        return [path]


class TestFiles:
    def test_sha256_matches_hashlib(self, tmp_path):
        path = tmp_path / "blob.bin"
        data = bytes(range(256)) * 1000
        path.write_bytes(data)
        assert sha256_file(path) == hashlib.sha256(data).hexdigest()

    def test_sha256_missing_file(self, tmp_path):
        with pytest.raises(InputMissingError):
            sha256_file(tmp_path / "missing")

    def test_write_json_is_byte_stable(self, tmp_path):
        payload = {"b": np.float64(0.5), "a": np.arange(3), "path": tmp_path}
        first = write_json(payload, tmp_path / "one.json")
        second = write_json(dict(reversed(list(payload.items()))), tmp_path / "two.json")
        assert first.read_bytes() == second.read_bytes()
        assert first.read_text().endswith("\n")
        assert read_json(first)["a"] == [0, 1, 2]

    def test_write_json_rejects_unknown_types(self, tmp_path):
        with pytest.raises(TypeError):
            write_json({"x": object()}, tmp_path / "bad.json")

    def test_read_json_missing(self, tmp_path):
        with pytest.raises(InputMissingError):
            read_json(tmp_path / "missing.json")

    def test_read_points_plain(self, tmp_path):
        path = tmp_path / "points.csv"
        pd.DataFrame({"x": [0.1, 0.2], "y": [1.0, 2.0]}).to_csv(path, index=False)
        points, frame = read_points(path)
        np.testing.assert_array_equal(points, [[0.1, 1.0], [0.2, 2.0]])
        assert len(frame) == 2

    def test_read_points_trajectory_takes_final_snapshot(self, tmp_path):
        path = tmp_path / "trajectory.csv"
        pd.DataFrame(
            {
                "snapshot_t": [9, 9, 0, 0],
                "particle_id": [0, 1, 1, 0],
                "x": [5.0, 6.0, 1.0, 0.0],
                "y": [5.0, 6.0, 1.0, 0.0],
            }
        ).to_csv(path, index=False)
        points, _ = read_points(path)
        np.testing.assert_array_equal(points, [[0.0, 0.0], [1.0, 1.0]])

    def test_read_points_missing(self, tmp_path):
        with pytest.raises(InputMissingError):
            read_points(tmp_path / "none.csv")


class TestBaseRun:
    def test_manifest_contents(self, run_dir):
        manifest = EchoRun(run_dir, "hi").run()
        assert (run_dir / MANIFEST_NAME).exists()
        assert manifest.argv == ["echo", "--payload", "hi"]
        assert manifest.seed == 7
        assert manifest.primary_outputs() == {"echo.txt": sha256_file(run_dir / "echo.txt")}
        assert [r.path for r in manifest.outputs if not r.primary] == ["note.txt"]

    def test_manifest_round_trip(self, run_dir):
        manifest = EchoRun(run_dir, "hi").run()
        assert RunManifest.read(run_dir) == manifest
        assert RunManifest.read(run_dir / MANIFEST_NAME) == manifest

    def test_identical_runs_identical_manifests(self, tmp_path):
        EchoRun(tmp_path / "a", "same").run()
        EchoRun(tmp_path / "b", "same").run()
        assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()

    def test_failure_is_reraised_without_manifest(self, run_dir):
        with pytest.raises(NumericalError):
            EchoRun(run_dir, "hi", fail=True).run()
        assert not (run_dir / MANIFEST_NAME).exists()

    def test_outside_paths_are_recorded_absolute(self, tmp_path):
        outside = tmp_path / "input.txt"
        outside.write_text("data")
        run = EchoRun(tmp_path / "run", "x")
        run.inputs = [outside]
        manifest = run.run()
        assert manifest.inputs == [ArtifactRecord(path=str(outside), sha256=sha256_file(outside))]

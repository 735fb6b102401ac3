"""
Base Run Class

Abstract base class for all CLI runs with common bookkeeping: structured
start/complete logging and the manifest that makes each run directory
self-describing and reproducible.
"""

import abc
from pathlib import Path
from typing import Any, Optional

import structlog
from pydantic import BaseModel, Field

from src import __version__
from src.runs.files import read_json, sha256_file, write_json

logger = structlog.get_logger(__name__)

MANIFEST_NAME = "manifest.json"


class ArtifactRecord(BaseModel):
    """One file a run read or wrote."""

    path: str
    sha256: str
    primary: bool = True


class RunManifest(BaseModel):
    """
    Everything needed to re-execute a run: the command and its arguments
    (without the output directory), the resolved configuration and the
    hashes of its inputs and outputs. No timestamps, so identical runs
    produce identical manifests.
    """

    command: str
    argv: list[str]
    config: dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    kinds: dict[str, str] = Field(default_factory=dict)
    inputs: list[ArtifactRecord] = Field(default_factory=list)
    outputs: list[ArtifactRecord] = Field(default_factory=list)
    version: str = __version__

    def primary_outputs(self) -> dict[str, str]:
        return {record.path: record.sha256 for record in self.outputs if record.primary}

    def write(self, directory: Path) -> Path:
        return write_json(self.model_dump(mode="json"), Path(directory) / MANIFEST_NAME)

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        return cls.model_validate(read_json(path))


class BaseRun(abc.ABC):
    """
    Abstract base class for runs.

    Subclasses must implement:
        - command: The CLI command name
        - argv(): Arguments that reproduce the run (inputs as absolute paths)
        - prepare(): Load and validate inputs
        - compute(): Main computation
        - persist(): Write artifacts into the output directory
    """

    # Must be overridden by subclasses
    command: str = ""

    def __init__(self, output_dir: Path, seed: Optional[int] = None):
        self.output_dir = Path(output_dir)
        self.seed = seed
        self.inputs: list[Path] = []
        self.secondary: list[Path] = []

    @property
    def log(self) -> Any:
        """Get logger with command context."""
        return logger.bind(command=self.command, output_dir=str(self.output_dir))

    @abc.abstractmethod
    def argv(self) -> list[str]:
        pass

    def config(self) -> dict[str, Any]:
        return {}

    def kinds(self) -> dict[str, str]:
        return {}

    @abc.abstractmethod
    def prepare(self) -> Any:
        """
        Load inputs.

        Returns:
            Whatever compute() needs
        """
        pass

    @abc.abstractmethod
    def compute(self, prepared: Any) -> Any:
        pass

    @abc.abstractmethod
    def persist(self, result: Any) -> list[Path]:
        """
        Write artifacts.

        Returns:
            Primary artifact paths
        """
        pass

    def _record(self, path: Path, primary: bool = True) -> ArtifactRecord:
        path = Path(path)
        try:
            shown = str(path.relative_to(self.output_dir))
        except ValueError:
            shown = str(path)
        return ArtifactRecord(path=shown, sha256=sha256_file(path), primary=primary)

    def run(self) -> RunManifest:
        """
        Execute full pipeline: prepare -> compute -> persist -> manifest.

        Returns:
            The manifest written into the output directory
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.log.info("run_started", seed=self.seed)

        try:
            prepared = self.prepare()
            result = self.compute(prepared)
            outputs = self.persist(result)

            manifest = RunManifest(
                command=self.command,
                argv=self.argv(),
                config=self.config(),
                seed=self.seed,
                kinds=self.kinds(),
                inputs=[self._record(p) for p in self.inputs],
                outputs=[self._record(p) for p in outputs]
                + [self._record(p, primary=False) for p in self.secondary],
            )
            manifest.write(self.output_dir)
            self.log.info("run_completed", outputs=[r.path for r in manifest.outputs])
            return manifest

        except Exception as e:
            self.log.error("run_failed", error=str(e))
            raise

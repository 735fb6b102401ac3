"""
CLI Runs

One BaseRun subclass per command. Each records the arguments that reproduce
it, with input paths made absolute and the output directory left out.
"""

from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
import typer
from pydantic import BaseModel

from src.analysis.experiments import STUDIES, StudyScale, oracle_reference
from src.analysis.metrics import GridSpec, MetricsReport, evaluate, export_vector_field
from src.config.settings import settings
from src.diffusion.forward import ForwardKind, dump_forward_trajectory, forward_trajectory
from src.diffusion.net import load_checkpoint, save_checkpoint
from src.diffusion.sample import (
    InitMode,
    NetworkPredictor,
    Predictor,
    SamplerKind,
    ScoreOracle,
    Trajectory,
    init_particles,
    run_sampler,
)
from src.diffusion.schedule import Schedule, ScheduleKind, dump, make_schedule, schedule_from_dict
from src.diffusion.target import Dataset, GmmTarget, default_target, load_dataset, sample, save_dataset
from src.diffusion.train import Objective, TrainConfig, TrainResult, train_run
from src.discrete.demo import DiscreteConfig, DiscreteDemoResult, demo_states, discrete_demo_run
from src.errors import CheckpointError, DiffLabError, UsageError
from src.runs.base import BaseRun, RunManifest
from src.runs.files import read_points, sha256_file, write_json

logger = structlog.get_logger(__name__)

# Reference samples drawn by eval use a stream disjoint from gen's seeds
EVAL_REFERENCE_OFFSET = 20_000


def _steps_arg(steps: Sequence[int]) -> str:
    return ",".join(str(int(t)) for t in steps)


def _config_args(model: BaseModel, fields: dict[str, str]) -> list[str]:
    """Flags for selected config fields, enums written by value."""
    args = []
    for name, flag in fields.items():
        value = getattr(model, name)
        args += [flag, str(getattr(value, "value", value))]
    return args


class GenRun(BaseRun):
    """Draw a training dataset from the default mixture."""

    command = "gen"

    def __init__(self, output_dir: Path, n: int, seed: int):
        super().__init__(output_dir, seed)
        if n <= 0:
            raise UsageError(f"--n must be positive, got {n}")
        self.n = n

    def argv(self) -> list[str]:
        return [self.command, "--n", str(self.n), "--seed", str(self.seed)]

    def config(self) -> dict[str, Any]:
        return {"n": self.n}

    def prepare(self) -> GmmTarget:
        return default_target()

    def compute(self, target: GmmTarget) -> tuple[Dataset, GmmTarget]:
        return sample(target, self.n, self.seed or 0), target

    def persist(self, result: tuple[Dataset, GmmTarget]) -> list[Path]:
        dataset, target = result
        return list(save_dataset(dataset, target, self.output_dir / "dataset.csv"))


class TrainRun(BaseRun):
    """Train one network on a dataset file."""

    command = "train"

    def __init__(self, output_dir: Path, data_path: Path, config: TrainConfig):
        super().__init__(output_dir, config.seed)
        self.data_path = Path(data_path).resolve()
        self.train_config = config
        self.inputs = [self.data_path]

    def argv(self) -> list[str]:
        return [self.command, "--data", str(self.data_path)] + _config_args(
            self.train_config,
            {
                "objective": "--objective",
                "forward": "--forward",
                "schedule": "--schedule",
                "T": "--T",
                "epochs": "--epochs",
                "batch_size": "--batch",
                "learning_rate": "--lr",
                "seed": "--seed",
            },
        )

    def config(self) -> dict[str, Any]:
        return self.train_config.model_dump(mode="json")

    def kinds(self) -> dict[str, str]:
        c = self.train_config
        return {"schedule": c.schedule.value, "forward": c.forward.value, "objective": c.objective.value}

    def prepare(self) -> Dataset:
        dataset, _ = load_dataset(self.data_path)
        return dataset

    def compute(self, dataset: Dataset) -> TrainResult:
        return train_run(self.train_config, dataset)

    def persist(self, result: TrainResult) -> list[Path]:
        metadata = {
            "schedule": result.schedule.to_dict(),
            "train_config": self.config(),
            "optimizer_steps": result.optimizer_steps,
        }
        checkpoint = save_checkpoint(
            result.mlp, self.output_dir / "checkpoint.json", result.config.objective.value, metadata
        )
        return [checkpoint, result.dump_losses(self.output_dir / "losses.csv")]


def load_predictor(checkpoint_path: Path) -> tuple[NetworkPredictor, Schedule]:
    """Network predictor and its training schedule from a checkpoint."""
    mlp, objective, metadata = load_checkpoint(checkpoint_path)
    if "schedule" not in metadata:
        raise CheckpointError(f"Checkpoint {checkpoint_path} does not record its schedule")
    schedule = schedule_from_dict(metadata["schedule"])
    return NetworkPredictor(mlp, Objective(objective), schedule.T), schedule


class SampleRun(BaseRun):
    """Reverse sampling from a checkpoint, or from the exact score oracle."""

    command = "sample"

    def __init__(
        self,
        output_dir: Path,
        checkpoint_path: Optional[Path],
        sampler: Optional[SamplerKind],
        init: InitMode,
        particles: int,
        record: Sequence[int],
        seed: int,
        schedule_kind: ScheduleKind = ScheduleKind.COSINE,
        T: int = 100,
        svg: bool = False,
    ):
        super().__init__(output_dir, seed)
        self.checkpoint_path = Path(checkpoint_path).resolve() if checkpoint_path else None
        self.sampler = SamplerKind(sampler) if sampler else None
        self.init = InitMode(init)
        self.particles = particles
        self.record = list(record)
        self.schedule_kind = ScheduleKind(schedule_kind)
        self.T = T
        self.svg = svg
        if self.checkpoint_path:
            self.inputs = [self.checkpoint_path]

    def argv(self) -> list[str]:
        args = [self.command]
        if self.checkpoint_path:
            args += ["--checkpoint", str(self.checkpoint_path)]
        else:
            args += ["--oracle", "--schedule", self.schedule_kind.value, "--T", str(self.T)]
        if self.sampler:
            args += ["--sampler", self.sampler.value]
        args += [
            "--init", self.init.value,
            "--particles", str(self.particles),
            "--record", _steps_arg(self.record),
            "--seed", str(self.seed),
        ]
        return args + (["--svg"] if self.svg else [])

    def config(self) -> dict[str, Any]:
        return {"init": self.init.value, "particles": self.particles, "record": self.record}

    def kinds(self) -> dict[str, str]:
        return {"sampler": self.sampler.value if self.sampler else "checkpoint"}

    def prepare(self) -> tuple[Predictor, Schedule]:
        if self.checkpoint_path:
            return load_predictor(self.checkpoint_path)
        schedule = make_schedule(self.schedule_kind, self.T)
        return ScoreOracle(default_target(), schedule, self.sampler or Objective.NOISE), schedule

    def compute(self, prepared: tuple[Predictor, Schedule]) -> tuple[Trajectory, Schedule, SamplerKind]:
        model, schedule = prepared
        particles = init_particles(self.init, self.particles, self.seed or 0, settings.grid_limit)
        kind = SamplerKind(self.sampler or model.objective)
        trajectory = run_sampler(
            model, kind, schedule, particles, self.record, np.random.default_rng(self.seed)
        )
        return trajectory, schedule, kind

    def persist(self, result: tuple[Trajectory, Schedule, SamplerKind]) -> list[Path]:
        trajectory, schedule, kind = result
        path = trajectory.dump(self.output_dir / "trajectory.csv")
        sidecar = {
            "sampler": kind.value,
            "init": self.init.value,
            "seed": self.seed,
            "schedule": schedule.to_dict(),
            "source": "checkpoint" if self.checkpoint_path else "oracle",
            "checkpoint_sha256": sha256_file(self.checkpoint_path) if self.checkpoint_path else None,
            "snapshots": trajectory.steps,
        }
        sidecar_path = write_json(sidecar, self.output_dir / "trajectory.json")
        if self.svg:
            from src.analysis.plots import write_svg

            self.secondary.append(
                write_svg(trajectory.to_frame(), self.output_dir / "trajectory.svg", "snapshot_t")
            )
        return [path, sidecar_path]


class EvalRun(BaseRun):
    """Metrics report for a samples or trajectory CSV."""

    command = "eval"

    def __init__(
        self,
        output_dir: Path,
        samples_path: Path,
        reference_path: Optional[Path],
        seed: int,
        n_reference: int,
    ):
        super().__init__(output_dir, seed)
        self.samples_path = Path(samples_path).resolve()
        self.reference_path = Path(reference_path).resolve() if reference_path else None
        self.n_reference = n_reference
        self.inputs = [self.samples_path] + ([self.reference_path] if self.reference_path else [])

    def argv(self) -> list[str]:
        args = [self.command, "--samples", str(self.samples_path)]
        if self.reference_path:
            args += ["--reference", str(self.reference_path)]
        return args + ["--n-reference", str(self.n_reference), "--seed", str(self.seed)]

    def prepare(self) -> tuple[np.ndarray, np.ndarray, Optional[Trajectory], GmmTarget]:
        target = default_target()
        samples, frame = read_points(self.samples_path)
        trajectory = Trajectory.from_frame(frame) if "snapshot_t" in frame else None
        if self.reference_path:
            reference, _ = read_points(self.reference_path)
        else:
            reference = sample(target, self.n_reference, (self.seed or 0) + EVAL_REFERENCE_OFFSET).points
        return samples, reference, trajectory, target

    def compute(self, prepared: tuple[np.ndarray, np.ndarray, Optional[Trajectory], GmmTarget]) -> MetricsReport:
        samples, reference, trajectory, target = prepared
        if trajectory is not None and len(trajectory.steps) < 2:
            trajectory = None
        return evaluate(samples, target, reference, trajectory)

    def persist(self, report: MetricsReport) -> list[Path]:
        return [write_json(report.model_dump(mode="json"), self.output_dir / "metrics.json")]


class FieldRun(BaseRun):
    """Learned (or exact) function on a grid for vector-field figures."""

    command = "field"

    def __init__(
        self,
        output_dir: Path,
        checkpoint_path: Optional[Path],
        steps: Sequence[int],
        grid: GridSpec,
        schedule_kind: ScheduleKind = ScheduleKind.COSINE,
        T: int = 100,
    ):
        super().__init__(output_dir)
        self.checkpoint_path = Path(checkpoint_path).resolve() if checkpoint_path else None
        self.steps = list(steps)
        self.grid = grid
        self.schedule_kind = ScheduleKind(schedule_kind)
        self.T = T
        if self.checkpoint_path:
            self.inputs = [self.checkpoint_path]

    def argv(self) -> list[str]:
        args = [self.command]
        if self.checkpoint_path:
            args += ["--checkpoint", str(self.checkpoint_path)]
        else:
            args += ["--oracle", "--schedule", self.schedule_kind.value, "--T", str(self.T)]
        return args + [
            "--steps", _steps_arg(self.steps),
            "--points", str(self.grid.points_per_axis),
            "--limit", str(self.grid.limit),
        ]

    def config(self) -> dict[str, Any]:
        return {"steps": self.steps, "grid": self.grid.model_dump()}

    def prepare(self) -> tuple[Predictor, Schedule]:
        if self.checkpoint_path:
            return load_predictor(self.checkpoint_path)
        schedule = make_schedule(self.schedule_kind, self.T)
        return ScoreOracle(default_target(), schedule, Objective.NOISE), schedule

    def compute(self, prepared: tuple[Predictor, Schedule]) -> tuple[Predictor, Schedule]:
        _, schedule = prepared
        for t in self.steps:
            schedule.check_step(t)
        return prepared

    def persist(self, prepared: tuple[Predictor, Schedule]) -> list[Path]:
        model, schedule = prepared
        return [export_vector_field(model, schedule, self.steps, self.grid, self.output_dir / "field.csv")]


class ScheduleRun(BaseRun):
    """Dump a variance schedule."""

    command = "schedule"

    def __init__(self, output_dir: Path, kind: ScheduleKind, T: int):
        super().__init__(output_dir)
        self.kind = ScheduleKind(kind)
        self.T = T

    def argv(self) -> list[str]:
        return [self.command, "--kind", self.kind.value, "--T", str(self.T)]

    def kinds(self) -> dict[str, str]:
        return {"schedule": self.kind.value}

    def prepare(self) -> None:
        return None

    def compute(self, prepared: None) -> Schedule:
        return make_schedule(self.kind, self.T)

    def persist(self, schedule: Schedule) -> list[Path]:
        return [dump(schedule, self.output_dir / "schedule.csv")]


class ForwardRun(BaseRun):
    """Forward-process snapshots of a dataset."""

    command = "forward"

    def __init__(
        self,
        output_dir: Path,
        data_path: Path,
        kind: ForwardKind,
        schedule_kind: ScheduleKind,
        T: int,
        steps: Sequence[int],
        seed: int,
        svg: bool = False,
    ):
        super().__init__(output_dir, seed)
        self.data_path = Path(data_path).resolve()
        self.kind = ForwardKind(kind)
        self.schedule_kind = ScheduleKind(schedule_kind)
        self.T = T
        self.steps = list(steps)
        self.svg = svg
        self.inputs = [self.data_path]

    def argv(self) -> list[str]:
        args = [
            self.command,
            "--data", str(self.data_path),
            "--forward", self.kind.value,
            "--schedule", self.schedule_kind.value,
            "--T", str(self.T),
            "--steps", _steps_arg(self.steps),
            "--seed", str(self.seed),
        ]
        return args + (["--svg"] if self.svg else [])

    def kinds(self) -> dict[str, str]:
        return {"forward": self.kind.value, "schedule": self.schedule_kind.value}

    def prepare(self) -> Dataset:
        dataset, _ = load_dataset(self.data_path)
        return dataset

    def compute(self, dataset: Dataset) -> pd.DataFrame:
        schedule = make_schedule(self.schedule_kind, self.T)
        return forward_trajectory(dataset, schedule, self.kind, self.steps, self.seed or 0)

    def persist(self, frame: pd.DataFrame) -> list[Path]:
        path = dump_forward_trajectory(frame, self.output_dir / "forward.csv")
        if self.svg:
            from src.analysis.plots import write_svg

            self.secondary.append(write_svg(frame, self.output_dir / "forward.svg", "t", "cluster"))
        return [path]


class DiscreteRun(BaseRun):
    """Categorical diffusion demo on the quantised mixture dataset."""

    command = "discrete"

    def __init__(self, output_dir: Path, config: DiscreteConfig, data_path: Optional[Path], n: int):
        super().__init__(output_dir, config.seed)
        self.demo_config = config
        self.data_path = Path(data_path).resolve() if data_path else None
        self.n = n
        if self.data_path:
            self.inputs = [self.data_path]

    def argv(self) -> list[str]:
        args = [self.command]
        if self.data_path:
            args += ["--data", str(self.data_path)]
        return args + ["--n", str(self.n)] + _config_args(
            self.demo_config,
            {
                "d": "--d",
                "T": "--T",
                "chain": "--chain",
                "schedule": "--schedule",
                "lam": "--lambda",
                "epochs": "--epochs",
                "samples": "--samples",
                "seed": "--seed",
            },
        )

    def config(self) -> dict[str, Any]:
        return self.demo_config.model_dump(mode="json")

    def kinds(self) -> dict[str, str]:
        return {"chain": self.demo_config.chain.value, "schedule": self.demo_config.schedule.value}

    def prepare(self) -> np.ndarray:
        if self.data_path:
            dataset, _ = load_dataset(self.data_path)
            points = dataset.points
        else:
            points = sample(default_target(), self.n, self.demo_config.seed).points
        return demo_states(points, self.demo_config)

    def compute(self, states: np.ndarray) -> DiscreteDemoResult:
        return discrete_demo_run(self.demo_config, states)

    def persist(self, result: DiscreteDemoResult) -> list[Path]:
        generated = pd.DataFrame({"x_bin": result.generated[:, 0], "y_bin": result.generated[:, 1]})
        generated_path = self.output_dir / "generated.csv"
        generated.to_csv(generated_path, index=False)
        return [
            write_json(result.metrics, self.output_dir / "metrics.json"),
            result.dump_chain(self.output_dir / "chain.csv"),
            generated_path,
        ]


class CompareRun(BaseRun):
    """One comparison study over several seeds."""

    command = "compare"

    def __init__(self, output_dir: Path, study: str, seeds: Sequence[int], scale: StudyScale):
        super().__init__(output_dir)
        if study not in STUDIES and study != "oracle":
            raise UsageError(f"Unknown study '{study}', choose from {sorted([*STUDIES, 'oracle'])}")
        self.study = study
        self.seeds = list(seeds)
        self.scale = scale

    def argv(self) -> list[str]:
        return [
            self.command,
            "--study", self.study,
            "--seeds", _steps_arg(self.seeds),
            "--n", str(self.scale.n),
            "--epochs", str(self.scale.epochs),
            "--T", str(self.scale.T),
            "--particles", str(self.scale.particles),
        ]

    def config(self) -> dict[str, Any]:
        return {"study": self.study, "seeds": self.seeds, "n": self.scale.n, "epochs": self.scale.epochs}

    def prepare(self) -> None:
        return None

    def compute(self, prepared: None) -> dict[str, Any]:
        if self.study == "oracle":
            return oracle_reference(self.seeds[0], self.scale)
        if self.study == "discrete-chains":
            return STUDIES[self.study](self.seeds)
        return STUDIES[self.study](self.seeds, self.scale)

    def persist(self, report: dict[str, Any]) -> list[Path]:
        return [write_json(report, self.output_dir / "report.json")]


class ReproduceReport(BaseModel):
    manifest: str
    scratch_dir: str
    matches: dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.matches.values())


def reproduce(manifest_path: Path, scratch_dir: Path) -> ReproduceReport:
    """
    Re-run the command recorded in a manifest into scratch_dir and compare
    the hashes of its primary artifacts.
    """
    from src.main import app

    manifest = RunManifest.read(manifest_path)
    scratch_dir = Path(scratch_dir)
    args = [*manifest.argv, "--out", str(scratch_dir)]
    logger.info("reproduce_started", command=manifest.command, scratch_dir=str(scratch_dir))

    exit_code = typer.main.get_command(app).main(args=args, standalone_mode=False)
    if isinstance(exit_code, int) and exit_code != 0:
        raise DiffLabError(f"Re-run of '{manifest.command}' exited with code {exit_code}")

    rerun = RunManifest.read(scratch_dir)
    expected = manifest.primary_outputs()
    actual = rerun.primary_outputs()
    matches = {path: actual.get(path) == digest for path, digest in expected.items()}
    report = ReproduceReport(manifest=str(manifest_path), scratch_dir=str(scratch_dir), matches=matches)
    logger.info("reproduce_completed", ok=report.ok, mismatched=[p for p, m in matches.items() if not m])
    return report

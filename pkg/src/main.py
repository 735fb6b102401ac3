"""
DiffLab Command Line

Every command writes into its own run directory (default: OUTPUT_ROOT/<command>)
and leaves a manifest.json there. Exit codes: 0 success, 2 usage,
3 input missing, 4 objective/sampler mismatch, 5 numeric failure.
"""

from pathlib import Path
from typing import Callable, Optional

import structlog
import typer
from pydantic import ValidationError
from rich.console import Console

from src.analysis.experiments import StudyScale
from src.analysis.metrics import GridSpec
from src.config.logging import configure_logging
from src.config.settings import settings
from src.diffusion.forward import ForwardKind
from src.diffusion.sample import InitMode, SamplerKind
from src.diffusion.schedule import ScheduleKind
from src.diffusion.train import Objective, TrainConfig
from src.discrete.demo import ChainKind, DiscreteConfig
from src.errors import DiffLabError, UsageError
from src.runs.base import BaseRun
from src.runs.commands import (
    CompareRun,
    DiscreteRun,
    EvalRun,
    FieldRun,
    ForwardRun,
    GenRun,
    SampleRun,
    ScheduleRun,
    TrainRun,
    reproduce as reproduce_run,
)

logger = structlog.get_logger(__name__)

app = typer.Typer(
    name="difflab",
    help="Desk-scale diffusion laboratory",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)

OutOption = typer.Option(None, "--out", help="Run directory (default: OUTPUT_ROOT/<command>)")


@app.callback()
def main() -> None:
    configure_logging()


def _out(out: Optional[Path], command: str) -> Path:
    return out if out is not None else settings.output_root / command


def _parse_steps(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"Expected comma separated integers, got '{text}'") from e


def _fail(exit_code: int, message: str) -> None:
    err_console.print(f"[bold red]error[/bold red] {message}")
    raise typer.Exit(code=exit_code)


def _execute(build: Callable[[], BaseRun]) -> None:
    """Build and run one command, translating library errors into exit codes."""
    try:
        run = build()
        manifest = run.run()
    except ValidationError as e:
        _fail(UsageError.exit_code, f"invalid arguments: {e.errors()[0]['msg']} ({e.errors()[0]['loc']})")
    except DiffLabError as e:
        _fail(e.exit_code, str(e))
    else:
        console.print(f"[green]✓[/green] {manifest.command} → {run.output_dir}")
        for record in manifest.outputs:
            console.print(f"  {record.path}  [dim]{record.sha256[:12]}[/dim]")


@app.command()
def gen(
    n: int = typer.Option(settings.dataset_size, "--n", help="Number of points"),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = OutOption,
) -> None:
    """Draw a training dataset from the two-component mixture."""
    _execute(lambda: GenRun(_out(out, "gen"), n, seed))


@app.command()
def train(
    data: Path = typer.Option(..., "--data", help="Dataset CSV written by gen"),
    objective: Objective = typer.Option(Objective.NOISE, "--objective"),
    forward: ForwardKind = typer.Option(ForwardKind.GAUSSIAN, "--forward"),
    schedule: ScheduleKind = typer.Option(ScheduleKind.COSINE, "--schedule"),
    T: int = typer.Option(settings.default_steps, "--T"),
    epochs: int = typer.Option(settings.epochs, "--epochs"),
    batch: int = typer.Option(settings.batch_size, "--batch"),
    lr: float = typer.Option(settings.learning_rate, "--lr"),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = OutOption,
) -> None:
    """Train the regression network for one objective."""

    def build() -> BaseRun:
        config = TrainConfig(
            objective=objective,
            forward=forward,
            schedule=schedule,
            T=T,
            epochs=epochs,
            batch_size=batch,
            learning_rate=lr,
            seed=seed,
        )
        return TrainRun(_out(out, "train"), data, config)

    _execute(build)


@app.command()
def sample(
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint"),
    oracle: bool = typer.Option(False, "--oracle", help="Use the exact score instead of a network"),
    sampler: Optional[SamplerKind] = typer.Option(None, "--sampler", help="Defaults to the checkpoint objective"),
    init: InitMode = typer.Option(InitMode.GRID, "--init"),
    particles: int = typer.Option(settings.particle_count, "--particles"),
    record: str = typer.Option(settings.record_steps, "--record"),
    schedule: ScheduleKind = typer.Option(ScheduleKind.COSINE, "--schedule", help="Oracle only"),
    T: int = typer.Option(settings.default_steps, "--T", help="Oracle only"),
    seed: int = typer.Option(0, "--seed"),
    svg: bool = typer.Option(False, "--svg", help="Also render trajectory.svg"),
    out: Optional[Path] = OutOption,
) -> None:
    """Run a reverse sampler and record trajectory snapshots."""

    def build() -> BaseRun:
        if (checkpoint is None) == (not oracle):
            raise UsageError("Pass exactly one of --checkpoint or --oracle")
        return SampleRun(
            _out(out, "sample"),
            checkpoint,
            sampler,
            init,
            particles,
            _parse_steps(record),
            seed,
            schedule_kind=schedule,
            T=T,
            svg=svg,
        )

    _execute(build)


@app.command("eval")
def evaluate_samples(
    samples: Path = typer.Option(..., "--samples", help="Samples or trajectory CSV"),
    reference: Optional[Path] = typer.Option(None, "--reference", help="Default: fresh target samples"),
    n_reference: int = typer.Option(settings.particle_count, "--n-reference"),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = OutOption,
) -> None:
    """Score samples against the ground-truth mixture."""
    _execute(lambda: EvalRun(_out(out, "eval"), samples, reference, seed, n_reference))


@app.command()
def field(
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint"),
    oracle: bool = typer.Option(False, "--oracle"),
    steps: str = typer.Option(settings.record_steps, "--steps"),
    points: int = typer.Option(21, "--points", help="Grid points per axis"),
    limit: float = typer.Option(settings.grid_limit, "--limit"),
    schedule: ScheduleKind = typer.Option(ScheduleKind.COSINE, "--schedule", help="Oracle only"),
    T: int = typer.Option(settings.default_steps, "--T", help="Oracle only"),
    out: Optional[Path] = OutOption,
) -> None:
    """Export the learned function on a grid."""

    def build() -> BaseRun:
        if (checkpoint is None) == (not oracle):
            raise UsageError("Pass exactly one of --checkpoint or --oracle")
        grid = GridSpec(limit=limit, points_per_axis=points)
        return FieldRun(_out(out, "field"), checkpoint, _parse_steps(steps), grid, schedule, T)

    _execute(build)


@app.command("schedule")
def schedule_dump(
    kind: ScheduleKind = typer.Option(ScheduleKind.COSINE, "--kind"),
    T: int = typer.Option(settings.default_steps, "--T"),
    out: Optional[Path] = OutOption,
) -> None:
    """Dump a variance schedule as CSV."""
    _execute(lambda: ScheduleRun(_out(out, "schedule"), kind, T))


@app.command("forward")
def forward_dump(
    data: Path = typer.Option(..., "--data"),
    forward: ForwardKind = typer.Option(ForwardKind.GAUSSIAN, "--forward"),
    schedule: ScheduleKind = typer.Option(ScheduleKind.COSINE, "--schedule"),
    T: int = typer.Option(settings.default_steps, "--T"),
    steps: str = typer.Option(settings.forward_steps, "--steps"),
    seed: int = typer.Option(0, "--seed"),
    svg: bool = typer.Option(False, "--svg"),
    out: Optional[Path] = OutOption,
) -> None:
    """Snapshots of the forward process."""
    _execute(
        lambda: ForwardRun(
            _out(out, "forward"), data, forward, schedule, T, _parse_steps(steps), seed, svg
        )
    )


@app.command()
def discrete(
    d: int = typer.Option(8, "--d", help="States per axis"),
    T: int = typer.Option(10, "--T"),
    chain: ChainKind = typer.Option(ChainKind.MARGINAL, "--chain"),
    schedule: ScheduleKind = typer.Option(ScheduleKind.COSINE, "--schedule"),
    lam: float = typer.Option(settings.discrete_lambda, "--lambda"),
    epochs: int = typer.Option(settings.discrete_epochs, "--epochs"),
    samples: int = typer.Option(2000, "--samples"),
    data: Optional[Path] = typer.Option(None, "--data", help="Default: fresh mixture samples"),
    n: int = typer.Option(2000, "--n", help="Fresh points when --data is not given"),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = OutOption,
) -> None:
    """Categorical diffusion demo on the quantised dataset."""

    def build() -> BaseRun:
        config = DiscreteConfig(
            d=d, T=T, chain=chain, schedule=schedule, lam=lam, epochs=epochs, samples=samples, seed=seed
        )
        return DiscreteRun(_out(out, "discrete"), config, data, n)

    _execute(build)


@app.command()
def compare(
    study: str = typer.Option(..., "--study", help="sampler-ranking, schedules, noise-ablation, discrete-chains or oracle"),
    seeds: str = typer.Option("0,1,2,3,4", "--seeds"),
    n: int = typer.Option(settings.dataset_size, "--n"),
    epochs: int = typer.Option(settings.epochs, "--epochs"),
    T: int = typer.Option(settings.default_steps, "--T"),
    particles: int = typer.Option(settings.particle_count, "--particles"),
    out: Optional[Path] = OutOption,
) -> None:
    """Run a multi-seed comparison study."""

    def build() -> BaseRun:
        seed_list = _parse_steps(seeds)
        if not seed_list:
            raise UsageError("--seeds must name at least one seed")
        # noise-ablation starts from the lattice
        init = InitMode.GRID if study == "noise-ablation" else InitMode.GAUSSIAN
        scale = StudyScale(n=n, epochs=epochs, T=T, particles=particles, init=init)
        directory = out if out is not None else settings.output_root / "compare" / study
        return CompareRun(directory, study, seed_list, scale)

    _execute(build)


@app.command()
def reproduce(
    manifest: Path = typer.Argument(..., help="manifest.json or its run directory"),
    out: Optional[Path] = typer.Option(None, "--out", help="Scratch directory for the re-run"),
) -> None:
    """Re-run a manifest and verify its primary artifacts hash identically."""
    scratch = out if out is not None else settings.output_root / "reproduce"
    try:
        report = reproduce_run(manifest, scratch)
    except DiffLabError as e:
        _fail(e.exit_code, str(e))
        return
    for path, ok in report.matches.items():
        mark = "[green]✓[/green]" if ok else "[red]✗[/red]"
        console.print(f"{mark} {path}")
    if not report.ok:
        _fail(1, "artifacts differ from the manifest")


if __name__ == "__main__":
    app()

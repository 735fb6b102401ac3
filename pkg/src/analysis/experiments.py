"""
Comparison Studies

Seeded train-sample-evaluate loops that reproduce the qualitative findings:
- Sampler ranking: noise vs whole-step vs single-step objectives
- Schedules: cosine vs linear variance schedules
- Forward noise ablation: Gaussian vs deterministic digit pseudo-noise
- Oracle reference: exact-score sampler as the quality ceiling
- Discrete chains: marginal vs uniform transition matrices

Every study returns a JSON-ready summary with per-seed values and medians.
Findings are reported as booleans, never enforced here.
"""

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
import structlog

from src.analysis.metrics import MetricsReport, evaluate
from src.config.settings import settings
from src.diffusion.forward import ForwardKind
from src.diffusion.sample import (
    InitMode,
    NetworkPredictor,
    Predictor,
    ScoreOracle,
    Trajectory,
    init_particles,
    run_sampler,
)
from src.diffusion.schedule import Schedule, ScheduleKind, make_schedule
from src.diffusion.target import Dataset, GmmTarget, default_target, sample
from src.diffusion.train import Objective, TrainConfig, train_run
from src.discrete.demo import ChainKind, DiscreteConfig, demo_states, discrete_demo_run

logger = structlog.get_logger(__name__)

# Reference samples use a seed stream disjoint from training data
REFERENCE_SEED_OFFSET = 10_000


@dataclass
class StudyScale:
    """Sizes shared by the continuous studies; defaults are the full-size runs."""

    n: int = field(default_factory=lambda: settings.dataset_size)
    epochs: int = field(default_factory=lambda: settings.epochs)
    T: int = field(default_factory=lambda: settings.default_steps)
    particles: int = field(default_factory=lambda: settings.particle_count)
    init: InitMode = InitMode.GAUSSIAN


@dataclass
class RunOutcome:
    """One sampled model and its evaluation."""

    label: str
    seed: int
    report: MetricsReport

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "seed": self.seed, **self.report.model_dump()}


def _median(outcomes: list[RunOutcome], label: str, metric: str = "energy_distance") -> float:
    return float(np.median([getattr(o.report, metric) for o in outcomes if o.label == label]))


def _sample_and_score(
    model: Predictor,
    schedule: Schedule,
    target: GmmTarget,
    seed: int,
    scale: StudyScale,
) -> tuple[MetricsReport, Trajectory]:
    particles = init_particles(scale.init, scale.particles, seed, settings.grid_limit)
    trajectory = run_sampler(
        model, model.objective, schedule, particles, [], np.random.default_rng(seed)
    )
    reference = sample(target, scale.particles, seed + REFERENCE_SEED_OFFSET).points
    return evaluate(trajectory.final, target, reference, trajectory), trajectory


def _train_and_score(
    label: str,
    seed: int,
    dataset: Dataset,
    target: GmmTarget,
    scale: StudyScale,
    objective: Objective = Objective.NOISE,
    schedule_kind: ScheduleKind = ScheduleKind.COSINE,
    forward: ForwardKind = ForwardKind.GAUSSIAN,
) -> RunOutcome:
    config = TrainConfig(
        epochs=scale.epochs,
        T=scale.T,
        schedule=schedule_kind,
        forward=forward,
        objective=objective,
        seed=seed,
    )
    result = train_run(config, dataset)
    model = NetworkPredictor(result.mlp, objective, scale.T)
    report, _ = _sample_and_score(model, result.schedule, target, seed, scale)
    logger.info("study_run_completed", label=label, seed=seed, energy_distance=report.energy_distance)
    return RunOutcome(label=label, seed=seed, report=report)


def _summary(name: str, seeds: Sequence[int], outcomes: list[RunOutcome], **extra: Any) -> dict[str, Any]:
    labels = sorted({o.label for o in outcomes})
    return {
        "study": name,
        "seeds": list(seeds),
        "median_energy_distance": {label: _median(outcomes, label) for label in labels},
        "runs": [o.to_dict() for o in outcomes],
        **extra,
    }


def _true_std(target: GmmTarget) -> np.ndarray:
    return np.sqrt(target.covs)


def sampler_ranking(
    seeds: Sequence[int],
    scale: Optional[StudyScale] = None,
    target: Optional[GmmTarget] = None,
) -> dict[str, Any]:
    """
    Train one model per objective and seed; compare energy distances and
    check the whole-step model for variance collapse (per-mode spread below
    half the true spread).
    """
    scale = scale or StudyScale()
    target = target or default_target()
    outcomes: list[RunOutcome] = []
    collapse_ratios: list[float] = []
    for seed in seeds:
        dataset = sample(target, scale.n, seed)
        for objective in Objective:
            outcome = _train_and_score(objective.value, seed, dataset, target, scale, objective=objective)
            outcomes.append(outcome)
            if objective is Objective.WHOLE_STEP:
                ratio = np.asarray(outcome.report.per_mode_std) / _true_std(target)
                collapse_ratios.append(float(np.max(ratio)))

    summary = _summary("sampler_ranking", seeds, outcomes)
    medians = summary["median_energy_distance"]
    summary["noise_best"] = medians["noise"] < min(medians["whole"], medians["single"])
    summary["whole_std_ratio_median"] = float(np.median(collapse_ratios))
    summary["whole_collapsed"] = summary["whole_std_ratio_median"] < 0.5
    logger.info("sampler_ranking_completed", medians=medians, noise_best=summary["noise_best"])
    return summary


def schedule_comparison(
    seeds: Sequence[int],
    scale: Optional[StudyScale] = None,
    target: Optional[GmmTarget] = None,
) -> dict[str, Any]:
    """Cosine vs linear noise models, plus the exact last-quartile alpha_bar check."""
    scale = scale or StudyScale()
    target = target or default_target()
    cosine = make_schedule(ScheduleKind.COSINE, scale.T)
    linear = make_schedule(ScheduleKind.LINEAR, scale.T)
    quartile = slice(3 * scale.T // 4, scale.T - 1)
    cosine_above = bool(np.all(cosine.alpha_bar[quartile] > linear.alpha_bar[quartile]))

    outcomes = []
    for seed in seeds:
        dataset = sample(target, scale.n, seed)
        for kind in ScheduleKind:
            outcomes.append(_train_and_score(kind.value, seed, dataset, target, scale, schedule_kind=kind))

    summary = _summary("schedule_comparison", seeds, outcomes, cosine_alpha_bar_above_linear=cosine_above)
    medians = summary["median_energy_distance"]
    summary["cosine_not_worse"] = medians["cosine"] <= medians["linear"]
    logger.info("schedule_comparison_completed", medians=medians)
    return summary


def noise_ablation(
    seeds: Sequence[int],
    scale: Optional[StudyScale] = None,
    target: Optional[GmmTarget] = None,
    objectives: Sequence[Objective] = tuple(Objective),
) -> dict[str, Any]:
    """
    Gaussian vs deterministic forward noise under each sampler.

    Runs are labelled "<forward>/<objective>". Per objective the report
    holds whether the deterministic model stays within 2x of the Gaussian
    one and the positional-bias margin between the two.
    """
    scale = scale or StudyScale(init=InitMode.GRID)
    target = target or default_target()
    objectives = [Objective(o) for o in objectives]
    outcomes = []
    for seed in seeds:
        dataset = sample(target, scale.n, seed)
        for objective in objectives:
            for kind in ForwardKind:
                label = f"{kind.value}/{objective.value}"
                outcomes.append(
                    _train_and_score(label, seed, dataset, target, scale, objective=objective, forward=kind)
                )

    summary = _summary("noise_ablation", seeds, outcomes)
    medians = summary["median_energy_distance"]
    bias = {o.label: _median(outcomes, o.label, "positional_bias") for o in outcomes}
    summary["median_positional_bias"] = dict(sorted(bias.items()))
    summary["by_sampler"] = {}
    for objective in objectives:
        gaussian = f"{ForwardKind.GAUSSIAN.value}/{objective.value}"
        deterministic = f"{ForwardKind.DETERMINISTIC.value}/{objective.value}"
        summary["by_sampler"][objective.value] = {
            "deterministic_within_2x": medians[deterministic] <= 2.0 * medians[gaussian],
            "positional_bias_margin": bias[gaussian] - bias[deterministic],
        }
    logger.info("noise_ablation_completed", medians=medians, positional_bias=summary["median_positional_bias"])
    return summary


def oracle_reference(
    seed: int = 0,
    scale: Optional[StudyScale] = None,
    target: Optional[GmmTarget] = None,
    schedule_kind: ScheduleKind = ScheduleKind.COSINE,
) -> dict[str, Any]:
    """Noise sampler driven by the exact diffused score."""
    scale = scale or StudyScale()
    target = target or default_target()
    schedule = make_schedule(schedule_kind, scale.T)
    oracle = ScoreOracle(target, schedule, Objective.NOISE)
    report, _ = _sample_and_score(oracle, schedule, target, seed, scale)
    logger.info("oracle_reference_completed", energy_distance=report.energy_distance)
    return {"study": "oracle_reference", "seed": seed, **report.model_dump()}


def discrete_chain_comparison(
    seeds: Sequence[int],
    d: int = 8,
    T: int = 10,
    n: int = 2000,
    target: Optional[GmmTarget] = None,
) -> dict[str, Any]:
    """Marginal vs uniform transition chains on the quantised mixture dataset."""
    target = target or default_target()
    runs: list[dict[str, Any]] = []
    for seed in seeds:
        for chain in ChainKind:
            config = DiscreteConfig(d=d, T=T, chain=chain, seed=seed)
            states = demo_states(sample(target, n, seed).points, config)
            metrics = discrete_demo_run(config, states).metrics
            runs.append({key: value for key, value in metrics.items() if key != "loss_trace"})

    medians = {
        chain.value: float(np.median([r["tv_mean"] for r in runs if r["chain"] == chain.value]))
        for chain in ChainKind
    }
    logger.info("discrete_chain_comparison_completed", medians=medians)
    return {
        "study": "discrete_chain_comparison",
        "seeds": list(seeds),
        "median_tv": medians,
        "marginal_not_worse": medians["marginal"] <= medians["uniform"],
        "runs": runs,
    }


STUDIES = {
    "sampler-ranking": sampler_ranking,
    "schedules": schedule_comparison,
    "noise-ablation": noise_ablation,
    "discrete-chains": discrete_chain_comparison,
}

"""Comparison studies: report shape at toy scale, headline numbers at full scale."""

import numpy as np
import pytest

from src.analysis.experiments import (
    STUDIES,
    StudyScale,
    discrete_chain_comparison,
    noise_ablation,
    oracle_reference,
    sampler_ranking,
    schedule_comparison,
)
from src.diffusion.sample import InitMode
from src.diffusion.train import Objective

TINY = StudyScale(n=128, epochs=1, T=10, particles=64)


class TestStudyReports:
    def test_sampler_ranking(self):
        report = sampler_ranking([0], TINY)
        assert report["study"] == "sampler_ranking"
        assert set(report["median_energy_distance"]) == {"noise", "whole", "single"}
        assert len(report["runs"]) == 3
        assert isinstance(report["noise_best"], bool)
        assert report["whole_std_ratio_median"] >= 0.0

    def test_schedule_comparison(self):
        report = schedule_comparison([0, 1], StudyScale(n=128, epochs=1, T=100, particles=64))
        assert set(report["median_energy_distance"]) == {"cosine", "linear"}
        assert len(report["runs"]) == 4
        assert report["cosine_alpha_bar_above_linear"] is True

    def test_noise_ablation_covers_every_sampler(self):
        report = noise_ablation([0], StudyScale(n=128, epochs=1, T=10, particles=64, init=InitMode.GRID))
        labels = {f"{forward}/{objective}" for forward in ("gaussian", "deterministic") for objective in ("noise", "whole", "single")}
        assert set(report["median_energy_distance"]) == labels
        assert set(report["median_positional_bias"]) == labels
        assert len(report["runs"]) == 6
        for value in report["median_positional_bias"].values():
            assert 0.0 <= value <= 1.0
        assert set(report["by_sampler"]) == {"noise", "whole", "single"}
        bias = report["median_positional_bias"]
        for objective, entry in report["by_sampler"].items():
            assert isinstance(entry["deterministic_within_2x"], bool)
            assert entry["positional_bias_margin"] == pytest.approx(
                bias[f"gaussian/{objective}"] - bias[f"deterministic/{objective}"]
            )

    def test_noise_ablation_single_sampler(self):
        scale = StudyScale(n=128, epochs=1, T=10, particles=64, init=InitMode.GRID)
        report = noise_ablation([0], scale, objectives=[Objective.NOISE])
        assert set(report["by_sampler"]) == {"noise"}
        assert len(report["runs"]) == 2

    def test_discrete_chains(self):
        report = discrete_chain_comparison([0], d=3, T=2, n=200)
        assert set(report["median_tv"]) == {"marginal", "uniform"}
        assert len(report["runs"]) == 2
        assert all("loss_trace" not in run for run in report["runs"])

    def test_oracle_reference_fields(self):
        report = oracle_reference(0, StudyScale(T=100, particles=400))
        assert report["study"] == "oracle_reference"
        assert report["n_samples"] == 400
        assert sum(report["mode_fractions"]) == pytest.approx(1.0)

    def test_registry(self):
        assert set(STUDIES) == {"sampler-ranking", "schedules", "noise-ablation", "discrete-chains"}

    def test_same_seed_same_report(self):
        assert sampler_ranking([3], TINY) == sampler_ranking([3], TINY)


class TestFullScale:
    @pytest.mark.slow
    def test_oracle_reaches_the_target(self):
        report = oracle_reference(0, StudyScale())
        assert report["energy_distance"] < 0.05
        np.testing.assert_allclose(report["mode_fractions"], [0.5, 0.5], atol=0.03)

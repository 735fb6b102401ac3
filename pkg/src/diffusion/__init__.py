"""
Continuous Diffusion Module

Variance schedules, the ground-truth mixture, forward noising, the
regression network, training and reverse sampling.
"""

from src.diffusion.forward import ForwardKind, diffuse
from src.diffusion.net import Mlp, init_mlp, load_checkpoint, save_checkpoint
from src.diffusion.sample import NetworkPredictor, ScoreOracle, Trajectory, run_sampler
from src.diffusion.schedule import Schedule, ScheduleKind, make_schedule
from src.diffusion.target import Dataset, GmmTarget, default_target
from src.diffusion.train import Objective, TrainConfig, train_run

__all__ = [
    "Dataset",
    "ForwardKind",
    "GmmTarget",
    "Mlp",
    "NetworkPredictor",
    "Objective",
    "Schedule",
    "ScheduleKind",
    "ScoreOracle",
    "TrainConfig",
    "Trajectory",
    "default_target",
    "diffuse",
    "init_mlp",
    "load_checkpoint",
    "make_schedule",
    "run_sampler",
    "save_checkpoint",
    "train_run",
]

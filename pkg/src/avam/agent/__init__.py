"""Dual-agent value learning."""

from .features import FEATURE_DIM, observation_features
from .network import Adam, QNetwork
from .replay import Batch, ReplayBuffer, Sample
from .trainer import (
    DualAgent,
    TrainerConfig,
    TrainingAbort,
    run_episode,
    select_nbp,
    select_nbv,
    td_loss,
    td_update,
    train,
    transition_sample,
)

__all__ = [
    "FEATURE_DIM", "observation_features", "Adam", "QNetwork", "Batch", "ReplayBuffer", "Sample",
    "DualAgent", "TrainerConfig", "TrainingAbort", "run_episode", "select_nbp", "select_nbv",
    "td_loss", "td_update", "train", "transition_sample",
]

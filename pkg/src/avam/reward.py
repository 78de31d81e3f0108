"""Occupancy entropy and the auxiliary rewards."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .voxel import ObservedGrid, Visibility

ENTROPY_GAIN = 1.0  # k in r_e = k * (E_t - E_t')

INTERACTION_REWARDS = {
    "ReachableNonEmpty": 0.02,
    "ReachableEmpty": 0.0,
    "Unreachable": -0.02,
}


class RoiStatus(str, Enum):
    REACHABLE_NON_EMPTY = "ReachableNonEmpty"
    REACHABLE_EMPTY = "ReachableEmpty"
    UNREACHABLE = "Unreachable"


# belief assigned to each visibility label
_BELIEF = {Visibility.FREE: 0.0, Visibility.OCCUPIED: 1.0, Visibility.OCCLUDED: 0.5}


def voxel_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    h = 0.0
    for q in (p, 1.0 - p):
        if q > 0.0:
            h -= q * math.log2(q)
    return h


def occupancy_belief(labels: np.ndarray) -> np.ndarray:
    out = np.zeros(labels.shape)
    for label, p in _BELIEF.items():
        out[labels == label] = p
    return out


def roi_entropy(roi: ObservedGrid) -> float:
    """Mean voxel entropy over the ROI."""
    labels = roi.labels
    n = labels.size
    if n == 0:
        raise ValueError("empty ROI")
    # with beliefs in {0, 0.5, 1} only occluded voxels carry entropy, exactly 1 bit each
    table = {p: voxel_entropy(p) for p in set(_BELIEF.values())}
    total = 0.0
    for label, p in _BELIEF.items():
        total += table[p] * np.count_nonzero(labels == label)
    return total / n


def entropy_reduction_reward(e_t: float, e_t_prime: float, k: float = ENTROPY_GAIN) -> float:
    return k * (e_t - e_t_prime)


def interaction_reward(status) -> float:
    return INTERACTION_REWARDS[RoiStatus(status).value]


@dataclass(frozen=True)
class RewardBundle:
    """Exact rational rewards, so r_nbv - r_nbp == r_e holds without rounding.

    Inputs are floats, which convert to Fraction exactly; callers convert back
    with float() (correctly rounded) where numbers feed learning or logs.
    """

    r_task: Fraction
    r_i: Fraction
    r_e: Fraction
    r_nbv: Fraction
    r_nbp: Fraction

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("r_task", "r_i", "r_e", "r_nbv", "r_nbp")}


def compose_rewards(r_task: float, r_i: float, r_e: float) -> RewardBundle:
    if not 0.0 <= r_task <= 1.0:
        raise ValueError("task reward must lie in [0, 1]")
    task, inter, ent = Fraction(r_task), Fraction(r_i), Fraction(r_e)
    r_nbp = task + inter
    return RewardBundle(task, inter, ent, r_nbp + ent, r_nbp)

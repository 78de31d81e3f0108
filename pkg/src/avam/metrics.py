"""Evaluation metrics: task occlusion rate, information gains and episode statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import EXECUTION_FAILURE, SUCCESS, TIMEOUT, ActiveVisionEnv, EpisodeOutcome
from .geometry import Viewpoint

OUTCOMES = (SUCCESS, TIMEOUT, EXECUTION_FAILURE)

CSV_COLUMNS = (
    "label", "episodes", "SR", "EL_mean", "EL_std", "TO", "EF", "FI_mean", "FI_std",
    "NI_mean", "NI_std", "ASSIG_avg", "ASSIG_max", "AIIG_avg", "AIIG_max",
)


class MetricsError(ValueError):
    """Undefined or malformed metric input."""


@dataclass(frozen=True)
class StepEntry:
    e_t: float  # ROI entropy from the previous viewpoint
    e_t_prime: float  # ROI entropy from the new viewpoint
    e_init: float  # ROI entropy from the episode's initial viewpoint
    interaction: bool


@dataclass(frozen=True)
class EpisodeRecord:
    steps: tuple
    outcome: str
    length: int
    max_steps: int = 10

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.outcome not in OUTCOMES:
            raise MetricsError(f"unknown outcome {self.outcome!r}")
        if self.length != len(self.steps):
            raise MetricsError(f"length {self.length} does not match {len(self.steps)} step entries")
        for s in self.steps:
            for e in (s.e_t, s.e_t_prime, s.e_init):
                if not 0.0 <= e <= 1.0:
                    raise MetricsError(f"entropy {e} outside [0, 1]")

    @classmethod
    def from_outcome(cls, outcome: EpisodeOutcome, max_steps: int = 10) -> "EpisodeRecord":
        return cls.from_steps(outcome.steps, outcome.kind, max_steps)

    @classmethod
    def from_steps(cls, steps, kind: str, max_steps: int = 10) -> "EpisodeRecord":
        """Build from StepRecords or their dict form."""
        entries = []
        for s in steps:
            d = s if isinstance(s, dict) else s.to_dict()
            entries.append(StepEntry(float(d["e_t"]), float(d["e_t_prime"]), float(d["e_init"]), bool(d["interaction"])))
        return cls(tuple(entries), kind, len(entries), max_steps)


@dataclass(frozen=True)
class MetricsReport:
    episodes: int
    sr: float
    el_mean: float
    el_std: float
    to: float
    ef: float
    fi_mean: float
    fi_std: float
    ni_mean: float
    ni_std: float
    assig_avg: float
    assig_max: float
    aiig_avg: float | None  # None for cameras that cannot move
    aiig_max: float | None
    tor: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def row(self, label: str) -> dict:
        return {
            "label": label, "episodes": self.episodes, "SR": self.sr, "EL_mean": self.el_mean,
            "EL_std": self.el_std, "TO": self.to, "EF": self.ef, "FI_mean": self.fi_mean,
            "FI_std": self.fi_std, "NI_mean": self.ni_mean, "NI_std": self.ni_std,
            "ASSIG_avg": self.assig_avg, "ASSIG_max": self.assig_max,
            "AIIG_avg": "N/A" if self.aiig_avg is None else self.aiig_avg,
            "AIIG_max": "N/A" if self.aiig_max is None else self.aiig_max,
        }


def _mean(xs) -> float:
    # fsum is exact, so the result does not depend on episode order
    return math.fsum(xs) / len(xs)


def _mean_std(xs) -> tuple[float, float]:
    m = _mean(xs)
    return m, math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))


def _avg_max(per_episode) -> tuple[float, float]:
    if not per_episode:
        raise MetricsError("need at least one episode")
    return _mean(per_episode), max(per_episode)


# -- task occlusion rate -------------------------------------------------------

def tor(demos, viewpoint_source, env: ActiveVisionEnv | None = None) -> float:
    """Mean over demos of the summed goal-ROI entropy at gripper keyframes.

    ``demos`` holds (DemoTrajectory, KeyframeSet) pairs. ``viewpoint_source`` is a
    fixed Viewpoint or "oracle", meaning the demo's own camera at each viewpoint
    keyframe. The ROI is centred at the gripper position at the gripper keyframe.
    """
    demos = list(demos)
    if not demos:
        raise MetricsError("TOR needs at least one demo")
    env = env or ActiveVisionEnv()
    totals = []
    for traj, kfs in demos:
        if kfs is None or len(kfs) == 0:
            raise MetricsError("demo without keyframes")
        if traj.layout is None:
            raise MetricsError("demo has no scene layout")
        env.reset_to(traj.layout)
        per_key = []
        for k_c, k_g in kfs.pairs:
            if isinstance(viewpoint_source, Viewpoint):
                v = viewpoint_source
            elif viewpoint_source == "oracle":
                v = traj.frames[k_c].viewpoint
            else:
                raise MetricsError(f"unknown viewpoint source {viewpoint_source!r}")
            per_key.append(env.view_entropy(v, np.asarray(traj.frames[k_g].gripper.position)))
        totals.append(math.fsum(per_key))
    return _mean(totals)


def relative_tor(tor_vp: float, tor_oracle: float) -> float:
    if tor_oracle == 0:
        raise MetricsError("relative TOR is undefined when the oracle TOR is zero")
    return tor_vp / tor_oracle


# -- information gain ----------------------------------------------------------

def assig(episodes) -> tuple[float, float]:
    """Average single-step information gain as (avg, max) over episodes."""
    return _avg_max([math.fsum(s.e_t - s.e_t_prime for s in ep.steps) for ep in episodes])


def aiig(episodes) -> tuple[float, float]:
    """Information gain relative to the initial viewpoint as (avg, max) over episodes."""
    return _avg_max([math.fsum(s.e_init - s.e_t_prime for s in ep.steps) for ep in episodes])


def episode_stats(episodes, movable_camera: bool = True, tor_table: dict | None = None) -> MetricsReport:
    episodes = list(episodes)
    if not episodes:
        raise MetricsError("need at least one episode")
    n = len(episodes)
    kinds = [ep.outcome for ep in episodes]
    el = _mean_std([ep.length for ep in episodes])
    first = []
    idle = []
    for ep in episodes:
        hits = [i + 1 for i, s in enumerate(ep.steps) if s.interaction]
        first.append(hits[0] if hits else ep.max_steps)
        idle.append(sum(not s.interaction for s in ep.steps))
    fi = _mean_std(first)
    ni = _mean_std(idle)
    a_avg, a_max = assig(episodes)
    i_avg, i_max = aiig(episodes) if movable_camera else (None, None)
    sr, to, ef = (kinds.count(k) / n for k in OUTCOMES)
    return MetricsReport(n, sr, el[0], el[1], to, ef, fi[0], fi[1], ni[0], ni[1], a_avg, a_max, i_avg, i_max,
                         dict(tor_table or {}))


# -- CSV report ----------------------------------------------------------------

def report_csv(rows) -> str:
    """Render (label, MetricsReport) pairs with a fixed column order."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for label, report in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in report.row(label).items()})
    return buf.getvalue()


def read_report_csv(text: str) -> list[dict]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in row.items():
            if k == "label" or v == "N/A":
                parsed[k] = v
            elif k == "episodes":
                parsed[k] = int(v)
            else:
                parsed[k] = float(v)
        out.append(parsed)
    return out

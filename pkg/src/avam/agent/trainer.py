"""Dual NBV/NBP value learning: action selection, TD updates and the training loop."""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from ..env import ActiveVisionEnv, CameraAction, EpisodeOutcome, GripperAction, Observation
from .features import FEATURE_DIM, observation_features
from .network import Adam, QNetwork
from .replay import Batch, ReplayBuffer, Sample

CHECKPOINT_VERSION = 1
NBV_HEADS = (48, 512)
NBP_HEADS = (512, 8, 2)


def heads_for(env_config) -> tuple[tuple, tuple]:
    """Head sizes (NBV, NBP) implied by an EnvConfig."""
    return (env_config.n_viewpoints, env_config.n_roi), (env_config.n_translation, env_config.yaw_bins, 2)


class TrainingAbort(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    lr: float = 5e-4
    batch_size: int = 32
    updates: int = 20_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.2
    target_sync: int = 500
    buffer_capacity: int = 50_000
    hidden: tuple = (128, 128)
    env_steps_per_update: float = 1.0
    margin_weight: float = 1.0  # weight of the large-margin loss on demo samples (0 disables)
    margin: float = 0.8
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.lr <= 0 or self.batch_size < 1 or self.target_sync < 1 or self.buffer_capacity < 1:
            raise ValueError("learning rate, batch size, sync period and capacity must be positive")
        if self.margin_weight < 0 or self.margin < 0:
            raise ValueError("margin settings must be non-negative")
        if self.updates < 0 or self.env_steps_per_update < 0:
            raise ValueError("update and env-step counts must be non-negative")
        if not (0.0 <= self.eps_end <= 1.0 and 0.0 <= self.eps_start <= 1.0 and self.eps_fraction >= 0):
            raise ValueError("epsilon schedule out of range")

    def epsilon(self, update: int) -> float:
        horizon = self.eps_fraction * self.updates
        if horizon <= 0 or update >= horizon:
            return self.eps_end
        return self.eps_start + (self.eps_end - self.eps_start) * update / horizon

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# -- action selection ------------------------------------------------------------

def greedy(heads) -> tuple[int, ...]:
    """Per-head argmax; np.argmax returns the first maximum, i.e. the lowest index."""
    return tuple(int(np.argmax(h)) for h in heads)


def select_nbv(net: QNetwork, x, eps: float, rng: np.random.Generator) -> CameraAction:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if eps > 0.0 and rng.random() < eps:
        return CameraAction(int(rng.integers(net.heads[0])), int(rng.integers(net.heads[1])))
    return CameraAction(*greedy(net.forward(x)))


def select_nbp(net: QNetwork, x, eps: float, rng: np.random.Generator) -> GripperAction:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if eps > 0.0 and rng.random() < eps:
        k_t, k_yaw, d = (int(rng.integers(n)) for n in net.heads)
    else:
        k_t, k_yaw, d = greedy(net.forward(x))
    return GripperAction(k_t, k_yaw, bool(d))


# -- TD learning -----------------------------------------------------------------

def factored_max(net: QNetwork, x) -> np.ndarray:
    """max over the joint action of a sum of heads = sum of per-head maxima."""
    return sum(h.max(axis=-1) for h in net.forward(x))


def td_targets(target: QNetwork, x_next, rewards, terminal, gamma: float) -> np.ndarray:
    return rewards + gamma * (1.0 - terminal.astype(float)) * factored_max(target, x_next)


def q_loss(net: QNetwork, x, actions, targets, demo=None, margin: float = 0.8,
           margin_weight: float = 0.0) -> tuple[float, list[np.ndarray]]:
    """Squared TD error of Q(x, a) = sum_h head_h[a_h], plus an optional large-margin term.

    The margin term (demo rows only) pushes each head's demonstrated entry above
    every other entry by ``margin``; both terms are averaged over the batch.
    """
    out, cache = net.forward_raw(x)
    n = len(targets)
    rows = np.arange(n)
    cols = [net._offsets[h] + actions[:, h] for h in range(len(net.heads))]
    err = sum(out[rows, c] for c in cols) - targets
    loss = float(np.mean(err**2))
    d_out = np.zeros_like(out)
    g = 2.0 * err / n
    for c in cols:
        np.add.at(d_out, (rows, c), g)
    if margin_weight > 0 and demo is not None and np.any(demo):
        d_rows = np.flatnonzero(demo)
        r = np.arange(len(d_rows))
        for h, head in enumerate(net.split(out)):
            a = actions[d_rows, h]
            aug = head[d_rows] + margin
            aug[r, a] -= margin
            best = np.argmax(aug, axis=1)
            loss += margin_weight * float(np.sum(aug[r, best] - head[d_rows, a])) / n
            np.add.at(d_out, (d_rows, net._offsets[h] + best), margin_weight / n)
            np.add.at(d_out, (d_rows, net._offsets[h] + a), -margin_weight / n)
    return loss, net.backward(cache, d_out)


def td_loss(net: QNetwork, x, actions, targets) -> tuple[float, list[np.ndarray]]:
    """Mean squared TD error and its gradients."""
    return q_loss(net, x, actions, targets)


@dataclass
class DualAgent:
    nbv: QNetwork
    nbp: QNetwork

    @classmethod
    def create(cls, hidden=(128, 128), seed: int = 0, in_dim: int = FEATURE_DIM,
               env_config=None) -> "DualAgent":
        nbv_heads, nbp_heads = heads_for(env_config) if env_config is not None else (NBV_HEADS, NBP_HEADS)
        rng = np.random.default_rng(seed)
        return cls(QNetwork(in_dim, hidden, nbv_heads, rng), QNetwork(in_dim, hidden, nbp_heads, rng))

    def copy(self) -> "DualAgent":
        return DualAgent(self.nbv.copy(), self.nbp.copy())

    def params(self) -> list[np.ndarray]:
        return self.nbv.params() + self.nbp.params()

    def save(self, path, config_hash: str = "", config: dict | None = None) -> None:
        arrays = {f"nbv_{i}": p for i, p in enumerate(self.nbv.params())}
        arrays.update({f"nbp_{i}": p for i, p in enumerate(self.nbp.params())})
        meta = {"version": CHECKPOINT_VERSION, "config_hash": config_hash, "config": config or {},
                "in_dim": self.nbv.in_dim, "hidden": list(self.nbv.hidden),
                "nbv_heads": list(self.nbv.heads), "nbp_heads": list(self.nbp.heads)}
        arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
        # np.savez stamps entries with the wall clock; a fixed date keeps reruns byte-identical
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())

    @classmethod
    def load(cls, path) -> tuple["DualAgent", dict]:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            nbv = QNetwork(meta["in_dim"], meta["hidden"], meta["nbv_heads"], zero=True)
            nbp = QNetwork(meta["in_dim"], meta["hidden"], meta["nbp_heads"], zero=True)
            nbv.set_params([data[f"nbv_{i}"] for i in range(len(nbv.params()))])
            nbp.set_params([data[f"nbp_{i}"] for i in range(len(nbp.params()))])
        return cls(nbv, nbp), meta


def td_update(batch: Batch, agent: DualAgent, target: DualAgent, optimizers, cfg: TrainerConfig) -> float:
    """One gradient step on the summed NBV and NBP losses; returns the loss before the step."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    y_v = td_targets(target.nbv, batch.x_next, batch.r_nbv, batch.terminal, cfg.gamma)
    y_p = td_targets(target.nbp, batch.x_next_mid, batch.r_nbp, batch.terminal, cfg.gamma)
    demo = batch.demo if cfg.margin_weight > 0 else None
    loss_v, g_v = q_loss(agent.nbv, batch.x, batch.camera, y_v, demo, cfg.margin, cfg.margin_weight)
    loss_p, g_p = q_loss(agent.nbp, batch.x_mid, batch.gripper, y_p, demo, cfg.margin, cfg.margin_weight)
    loss = loss_v + loss_p
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in g_v + g_p):
        raise TrainingAbort(f"non-finite loss (nbv={loss_v}, nbp={loss_p})")
    optimizers[0].step(agent.nbv.params(), g_v)
    optimizers[1].step(agent.nbp.params(), g_p)
    return loss


# -- rollouts ----------------------------------------------------------------------

def transition_sample(t) -> Sample:
    """Feature-level sample from a demo Transition."""
    return Sample(
        observation_features(t.obs), (t.camera.k_v, t.camera.k_f),
        observation_features(t.obs_mid), (t.gripper.k_t, t.gripper.k_yaw, t.gripper.d),
        observation_features(t.next_obs), observation_features(t.next_obs_mid),
        float(t.rewards.r_nbv), float(t.rewards.r_nbp), t.terminal,
    )


def run_episode(env: ActiveVisionEnv, agent: DualAgent, task: str, seed: int, eps: float = 0.0,
                rng: np.random.Generator | None = None, random_view: bool = False,
                static_camera: bool = False) -> EpisodeOutcome:
    """One episode.

    ``random_view`` draws the viewpoint uniformly and ``static_camera`` keeps it;
    both leave the ROI choice to the NBV network.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    obs = env.reset(task, seed)
    while True:
        x = observation_features(obs)
        if static_camera:
            a_c = CameraAction(env.bins.discretize(obs.viewpoint_local), select_nbv(agent.nbv, x, eps, rng).k_f)
        elif random_view:
            a_c = CameraAction(int(rng.integers(agent.nbv.heads[0])), select_nbv(agent.nbv, x, 0.0, rng).k_f)
        else:
            a_c = select_nbv(agent.nbv, x, eps, rng)
        mid = env.step_camera(a_c)
        a_g = select_nbp(agent.nbp, observation_features(mid), eps, rng)
        res = env.step_gripper(a_g)
        if res.done:
            return res.outcome
        obs = res.obs


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    outcomes: dict = field(default_factory=lambda: {"Success": 0, "Timeout": 0, "ExecutionFailure": 0})

    COLUMNS = ("update", "loss", "epsilon", "episodes", "success", "timeout", "execution_failure")


def train(env: ActiveVisionEnv, task: str, demos, cfg: TrainerConfig, episode_seed: int = 1_000_000,
          agent: DualAgent | None = None, progress=None) -> tuple[DualAgent, TrainLog]:
    """Fill the demo partition, then alternate epsilon-greedy env steps with TD updates."""
    rng = np.random.default_rng(cfg.seed)
    agent = agent or DualAgent.create(cfg.hidden, cfg.seed, env_config=env.cfg)
    target = agent.copy()
    optimizers = (Adam(agent.nbv.params(), cfg.lr), Adam(agent.nbp.params(), cfg.lr))
    buffer = ReplayBuffer(cfg.buffer_capacity)
    for s in demos:
        buffer.add_demo(s if isinstance(s, Sample) else transition_sample(s))
    log = TrainLog()
    if cfg.updates == 0:
        return agent, log
    if len(buffer) == 0 and cfg.env_steps_per_update <= 0:
        raise ValueError("no demonstrations and no environment interaction: nothing to learn from")

    episodes = 0
    obs = None
    x = None
    credit = 0.0
    for u in range(cfg.updates):
        eps = cfg.epsilon(u)
        credit += cfg.env_steps_per_update
        while credit >= 1.0:
            credit -= 1.0
            if obs is None:
                obs = env.reset(task, episode_seed + episodes)
                x = observation_features(obs)
            a_c = select_nbv(agent.nbv, x, eps, rng)
            mid = env.step_camera(a_c)
            x_mid = observation_features(mid)
            a_g = select_nbp(agent.nbp, x_mid, eps, rng)
            res = env.step_gripper(a_g)
            x_next = observation_features(res.obs)
            buffer.add(Sample(x, (a_c.k_v, a_c.k_f), x_mid, (a_g.k_t, a_g.k_yaw, a_g.d), x_next,
                              observation_features(res.nbp_obs), float(res.rewards.r_nbv), float(res.rewards.r_nbp),
                              res.done))
            if res.done:
                episodes += 1
                log.outcomes[res.outcome.kind] += 1
                obs = None
            else:
                obs, x = res.obs, x_next
        if len(buffer) == 0:
            continue
        loss = td_update(buffer.sample(cfg.batch_size, rng), agent, target, optimizers, cfg)
        if (u + 1) % cfg.target_sync == 0:
            target = agent.copy()
        o = log.outcomes
        log.rows.append((u + 1, loss, eps, episodes, o["Success"], o["Timeout"], o["ExecutionFailure"]))
        if progress is not None:
            progress(u + 1, loss, eps, episodes, o)
    return agent, log

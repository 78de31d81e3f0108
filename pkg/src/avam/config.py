"""Run configuration: one JSON document with env, trainer and demo settings plus ablation toggles."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .agent.trainer import TrainerConfig
from .env import EnvConfig
from .scene import TASKS

ENV_PREFIX = "AVAM_"
TOGGLES = ("align", "aug", "aux")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class DemoConfig:
    count: int = 30
    augment_per_segment: int = 4

    def __post_init__(self):
        if self.count < 0 or self.augment_per_segment < 0:
            raise ConfigError("demo count and augmentation count must be non-negative")


def default_trainer() -> TrainerConfig:
    """Desk-scale training defaults."""
    return TrainerConfig(updates=2000, env_steps_per_update=0.1)


@dataclass
class RunConfig:
    task: str = "hidden-reach"
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    trainer: TrainerConfig = field(default_factory=default_trainer)
    demo: DemoConfig = field(default_factory=DemoConfig)
    align: bool = True
    aug: bool = True
    aux: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for t in TOGGLES:
            if not isinstance(getattr(self, t), bool):
                raise ConfigError(f"toggle {t} must be a boolean")

    def trainer_config(self) -> TrainerConfig:
        return dataclasses.replace(self.trainer, seed=self.seed)

    def ablate(self, *names: str) -> "RunConfig":
        bad = set(names) - set(TOGGLES)
        if bad:
            raise ConfigError(f"unknown ablation toggle(s) {sorted(bad)}; expected {TOGGLES}")
        return dataclasses.replace(self, **{n: False for n in names})

    def to_dict(self) -> dict:
        env = dataclasses.asdict(self.env)
        env["scene_center"] = list(self.env.scene_center)
        env["theta_centers_deg"] = list(self.env.theta_centers_deg)
        trainer = self.trainer.to_dict()
        trainer.pop("seed")  # the run seed is the only seed
        return {"task": self.task, "seed": self.seed, "env": env, "trainer": trainer,
                "demo": dataclasses.asdict(self.demo), "align": self.align, "aug": self.aug, "aux": self.aux}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            env = dict(d.pop("env", {}))
            for k in ("scene_center", "theta_centers_deg"):
                if k in env:
                    env[k] = tuple(env[k])
            trainer = {**default_trainer().to_dict(), **d.pop("trainer", {})}
            trainer.pop("seed", None)
            return cls(env=EnvConfig(**env), trainer=TrainerConfig(**trainer),
                       demo=DemoConfig(**d.pop("demo", {})), **d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def hash(self) -> str:
        """sha256 of the canonical JSON without the seed (the seed is logged separately)."""
        d = self.to_dict()
        d.pop("seed")
        return _sha(d)

    def demo_hash(self) -> str:
        """Hash of the settings demos depend on, so ablated runs can share one demo set."""
        d = self.to_dict()
        return _sha({"task": d["task"], "env": d["env"], "count": d["demo"]["count"]})


def _sha(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _parse_value(raw: str):
    low = raw.strip().lower()
    if low in ("on", "true", "yes"):
        return True
    if low in ("off", "false", "no"):
        return False
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_env_overrides(cfg: RunConfig, environ=None) -> RunConfig:
    """Apply AVAM_KEY or AVAM_SECTION__KEY variables, e.g. AVAM_TRAINER__UPDATES=200."""
    environ = os.environ if environ is None else environ
    d = cfg.to_dict()
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = d
        for key in path[:-1]:
            if not isinstance(node.get(key), dict):
                raise ConfigError(f"{name}: unknown section {key!r}")
            node = node[key]
        if path[-1] not in node:
            raise ConfigError(f"{name}: unknown key {path[-1]!r}")
        node[path[-1]] = _parse_value(environ[name])
    return RunConfig.from_dict(d)


def load_config(path=None, environ=None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        try:
            with open(path) as fh:
                cfg = RunConfig.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return apply_env_overrides(cfg, environ)

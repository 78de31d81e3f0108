"""Replay buffer with a permanent demonstration partition."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Sample:
    """Feature-level transition as stored for training."""

    x: np.ndarray  # NBV features at o_t
    camera: tuple  # (k_v, k_f)
    x_mid: np.ndarray  # NBP features at o_t'
    gripper: tuple  # (k_t, k_yaw, d)
    x_next: np.ndarray  # NBV features at o_{t+1}
    x_next_mid: np.ndarray  # NBP features at o_{t+1}
    r_nbv: float
    r_nbp: float
    terminal: bool
    demo: bool = False


@dataclass
class Batch:
    x: np.ndarray
    camera: np.ndarray  # (B, 2) int
    x_mid: np.ndarray
    gripper: np.ndarray  # (B, 3) int
    x_next: np.ndarray
    x_next_mid: np.ndarray
    r_nbv: np.ndarray
    r_nbp: np.ndarray
    terminal: np.ndarray
    demo: np.ndarray = None

    def __len__(self) -> int:
        return len(self.r_nbv)

    @classmethod
    def from_samples(cls, samples) -> "Batch":
        if not samples:
            raise ValueError("empty batch")
        return cls(
            x=np.stack([s.x for s in samples]).astype(float),
            camera=np.array([s.camera for s in samples], dtype=np.int64),
            x_mid=np.stack([s.x_mid for s in samples]).astype(float),
            gripper=np.array([s.gripper for s in samples], dtype=np.int64),
            x_next=np.stack([s.x_next for s in samples]).astype(float),
            x_next_mid=np.stack([s.x_next_mid for s in samples]).astype(float),
            r_nbv=np.array([s.r_nbv for s in samples], dtype=float),
            r_nbp=np.array([s.r_nbp for s in samples], dtype=float),
            terminal=np.array([s.terminal for s in samples], dtype=bool),
            demo=np.array([s.demo for s in samples], dtype=bool),
        )


class ReplayBuffer:
    """Demo transitions are never evicted; online ones live in a ring of fixed capacity."""

    def __init__(self, capacity: int = 50_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.demo: list[Sample] = []
        self.online: list[Sample] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self.demo) + len(self.online)

    def add_demo(self, sample: Sample) -> None:
        self.demo.append(replace(sample, demo=True))

    def add(self, sample: Sample) -> None:
        if len(self.online) < self.capacity:
            self.online.append(sample)
        else:
            self.online[self._next] = sample
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw (with replacement) over the union of both partitions."""
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty buffer")
        nd = len(self.demo)
        idx = rng.integers(0, n, size=batch_size)
        return Batch.from_samples([self.demo[i] if i < nd else self.online[i - nd] for i in idx])

"""Small fully connected Q-network with factored output heads, plus Adam."""

from __future__ import annotations

import numpy as np


class QNetwork:
    """ReLU MLP whose linear output is split into consecutive heads."""

    def __init__(self, in_dim: int, hidden=(128, 128), heads=(48, 512), rng=None, zero: bool = False,
                 zero_output: bool = True):
        self.in_dim = int(in_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.heads = tuple(int(h) for h in heads)
        sizes = [self.in_dim, *self.hidden, sum(self.heads)]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            scale = np.sqrt((1.0 if last else 2.0) / a)
            # a zero output layer starts every Q-value at 0, avoiding max-over-noise bias
            w = np.zeros((a, b)) if zero or (last and zero_output) else rng.normal(0.0, scale, size=(a, b))
            self.weights.append(w)
            self.biases.append(np.zeros(b))
        self._offsets = np.cumsum((0,) + self.heads)

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim, *self.hidden, sum(self.heads)]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params) -> None:
        params = list(params)
        if len(params) != 2 * len(self.weights):
            raise ValueError("parameter count mismatch")
        for i in range(len(self.weights)):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValueError("parameter shape mismatch")
            self.weights[i] = np.array(w, dtype=float)
            self.biases[i] = np.array(b, dtype=float)

    def copy(self) -> "QNetwork":
        net = QNetwork(self.in_dim, self.hidden, self.heads, zero=True)
        net.set_params([p.copy() for p in self.params()])
        return net

    def split(self, out: np.ndarray) -> list[np.ndarray]:
        return [out[..., a:b] for a, b in zip(self._offsets[:-1], self._offsets[1:])]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[-1]}")
        return x

    def forward_raw(self, x) -> tuple[np.ndarray, list]:
        """Concatenated head outputs and the activations needed for backprop."""
        h = self._check(x)
        cache = [h]
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == n - 1 else np.maximum(z, 0.0)
            cache.append(h)
        return h, cache

    def forward(self, x) -> list[np.ndarray]:
        return self.split(self.forward_raw(x)[0])

    def backward(self, cache: list, d_out: np.ndarray) -> list[np.ndarray]:
        """Gradients (same order as params()) given dLoss/d(output)."""
        grads = [None] * (2 * len(self.weights))
        delta = d_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            grads[2 * i] = a_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (cache[i] > 0)
        return grads


class Adam:
    def __init__(self, params, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        """In-place update of params."""
        self.t += 1
        lr_t = self.lr * np.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        eps_t = self.eps * np.sqrt(1.0 - self.beta2**self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            denom = np.sqrt(v)
            denom += eps_t
            p -= lr_t * m / denom

"""Minimal feedforward layers with hand-written backprop, plus Adam.

Parameters live in plain dicts of float64 arrays keyed by dotted names so
the same walk serves the optimizer, finite-difference checks and the
checkpoint writer.
"""

from __future__ import annotations

import numpy as np


def linear_init(rng: np.random.Generator, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, n_out)), np.zeros(n_out)


def mlp_init(rng: np.random.Generator, sizes: list[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Layers for sizes[0] -> ... -> sizes[-1], tanh between, linear output."""
    return [linear_init(rng, sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]


def mlp_forward(layers, x: np.ndarray):
    """Returns the output and the activation cache for mlp_backward."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = z if i == len(layers) - 1 else np.tanh(z)
        acts.append(h)
    return h, acts


def mlp_backward(layers, acts, d_out: np.ndarray):
    """Gradients for every layer plus the gradient w.r.t. the input."""
    grads = [None] * len(layers)
    d = d_out
    for i in reversed(range(len(layers))):
        w, _ = layers[i]
        h_out = acts[i + 1]
        if i != len(layers) - 1:
            d = d * (1.0 - h_out**2)
        grads[i] = (acts[i].T @ d, d.sum(axis=0))
        d = d @ w.T
    return grads, d


class Adam:
    """Adam with global-norm gradient clipping, updating arrays in place.

    Clipping matters here: the denoising objective produces rare gradient
    spikes two orders of magnitude above typical at low-noise timesteps.
    """

    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8, clip_norm=10.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        total = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
        scale = self.clip_norm / total if (self.clip_norm and total > self.clip_norm) else 1.0
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for k, g in grads.items():
            g = g * scale
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)

    def round_to_f32(self) -> None:
        """Quantize optimizer state through float32.

        Done at epoch boundaries together with the parameters so a run
        resumed from an f32 checkpoint replays the original trace exactly.
        """
        for d in (self.m, self.v):
            for k in d:
                d[k] = d[k].astype(np.float32).astype(np.float64)

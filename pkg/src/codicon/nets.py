"""Dense tanh MLPs with hand-rolled backward passes, in float64.

Everything downstream (policies, critics, the ranking module) runs on these
nets. The backward pass returns gradients as a single flat vector in a fixed
layout (per layer: weight matrix row-major, then bias), which keeps optimizer
steps and finite-difference checks trivial, and lets the meta-gradient treat a
whole net as one parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np


def _as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


class Mlp:
    """Fully connected net: tanh hidden layers, linear output.

    sizes = [in, h1, ..., out]. Weights are (out_dim, in_dim) matrices applied
    as x @ W.T + b.
    """

    def __init__(self, weights: List[np.ndarray], biases: List[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator) -> "Mlp":
        """Seeded init, uniform in +-1/sqrt(fan_in) for weights and biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "Mlp":
        """All-zero net of the given layout (a shell for set_flat)."""
        weights = [np.zeros((fo, fi)) for fi, fo in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(fo) for fo in sizes[1:]]
        return cls(weights, biases)

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    # --- parameter vector layout -------------------------------------------

    def flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} params, got {flat.shape}")
        k = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[k : k + w.size].reshape(w.shape).copy()
            k += w.size
            self.biases[i] = flat[k : k + b.size].copy()
            k += b.size

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    # --- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray) -> Tuple[np.ndarray, list]:
        """Returns (output, cache); cache holds every layer's activation,
        which is all tanh needs for the backward pass."""
        a, squeeze = _as_batch(x)
        acts = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == last else np.tanh(z)
            acts.append(a)
        out = acts[-1][0] if squeeze else acts[-1]
        return out, [acts, squeeze]

    def backward(self, cache: list, out_grad: np.ndarray) -> np.ndarray:
        """Flat-vector VJP: d(out_grad . output)/d(params).

        out_grad has the output's shape; for a batched forward, rows are
        per-sample seeds and the result is summed over the batch.
        """
        acts, squeeze = cache
        delta = np.asarray(out_grad, dtype=np.float64)
        if squeeze:
            delta = delta[None, :]
        grads_w: List[np.ndarray] = [None] * len(self.weights)
        grads_b: List[np.ndarray] = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = delta.T @ acts[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (1.0 - acts[i] ** 2)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb.ravel())
        return np.concatenate(parts)

    def per_sample_grad_dot(
        self, cache: list, out_grads: np.ndarray, direction: np.ndarray
    ) -> np.ndarray:
        """For each sample s: <d(out_grads[s] . output[s])/d(params), direction>.

        Same recursion as backward, but instead of materialising one flat
        gradient per sample, each layer's per-sample outer product is
        contracted against the matching block of `direction` on the fly.
        """
        acts, squeeze = cache
        delta = np.asarray(out_grads, dtype=np.float64)
        if squeeze:
            delta = delta[None, :]
        # slice direction into per-layer blocks once
        blocks = []
        k = 0
        for w, b in zip(self.weights, self.biases):
            blocks.append(
                (
                    direction[k : k + w.size].reshape(w.shape),
                    direction[k + w.size : k + w.size + b.size],
                )
            )
            k += w.size + b.size
        dots = np.zeros(delta.shape[0])
        for i in range(len(self.weights) - 1, -1, -1):
            dw, db = blocks[i]
            dots += np.einsum("bi,bj,ij->b", delta, acts[i], dw)
            dots += delta @ db
            if i > 0:
                delta = (delta @ self.weights[i]) * (1.0 - acts[i] ** 2)
        return dots[0] if squeeze else dots


# --- categorical head --------------------------------------------------------


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_sample(logits: np.ndarray, rng: np.random.Generator) -> Tuple[int, float]:
    """Sample an action index from softmax(logits); returns (action, logprob).

    Uses one uniform draw via the inverse CDF, so the rng stream advances by
    exactly one draw per call regardless of the outcome.
    """
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp))
    u = rng.random()
    action = int(np.searchsorted(cdf, u, side="right"))
    action = min(action, len(cdf) - 1)  # guard the u ~ 1.0 rounding edge
    return action, float(logp[action])


# --- optimizer steps ----------------------------------------------------------


def sgd_step(
    params: np.ndarray, grad: np.ndarray, lr: float, ascent: bool = False
) -> np.ndarray:
    """Plain gradient step: params +- lr * grad, exactly (no momentum, no scaling).

    Policy and ranking updates use this so that the realized parameter map is
    the literal expression later differentiated by the meta-gradient.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise ValueError(f"non-finite gradient ({bad}/{grad.size} entries); update aborted")
    sign = 1.0 if ascent else -1.0
    return params + sign * lr * grad


@dataclass
class AdamState:
    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def init(cls, params: np.ndarray) -> "AdamState":
        return cls(params.copy(), np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(
    state: AdamState, grad: np.ndarray, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8
) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step; returns (new params, new state)."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise ValueError(f"non-finite gradient ({bad}/{grad.size} entries); update aborted")
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grad
    v = b2 * state.v + (1 - b2) * grad**2
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    params = state.params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, AdamState(params, m, v, t)


# --- finite differences -------------------------------------------------------


def finite_diff_grad(
    fn: Callable[[np.ndarray], float], params: np.ndarray, step: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    O(2 * len(params)) evaluations; meant for small test instances only.
    """
    grad = np.zeros_like(params)
    for k in range(params.size):
        up = params.copy()
        dn = params.copy()
        up[k] += step
        dn[k] -= step
        grad[k] = (fn(up) - fn(dn)) / (2 * step)
    return grad

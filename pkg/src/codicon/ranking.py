"""Centralized ranking module: distinct intrinsic rewards for every agent.

One net maps (global state, joint action) to a raw score per agent, squashed
through tanh so every score lives in (-1, 1) — the same range the targets are
drawn from. A sorting layer orders the scores; the training signal pulls the
*sorted* scores toward a fixed, strictly increasing target sequence (mostly
negative, a few positive) while a variance term pushes the scores apart.
Together they approximate the constraint that some agent is always rewarded
strictly more than another, which is what makes the intrinsic signal
competitive rather than shared. The bounded output keeps the variance term
self-limiting: pushed alone it saturates at the rails instead of diverging.

By default each agent receives its own raw score (identity assignment); the
alternative `rank_position` assignment hands agent i the i-th smallest score,
so the earner of each ranked value is decided by the sort.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .nets import Mlp, sgd_step

log = logging.getLogger(__name__)

ASSIGNMENTS = ("identity", "rank_position")


@dataclass(frozen=True)
class TargetSequence:
    """Fixed ranking targets y_1 < ... < y_n, drawn once and never trained."""

    values: np.ndarray  # (n,) ascending


@dataclass
class IntrinsicRewards:
    raw: np.ndarray  # (n,) net outputs, indexed by agent
    sorted: np.ndarray  # (n,) ascending
    perm: np.ndarray  # (n,) agent indices; sorted[k] = raw[perm[k]]
    per_agent: np.ndarray  # (n,) reward actually assigned to each agent


@dataclass
class RankingModule:
    net: Mlp
    targets: TargetSequence
    n_agents: int
    n_actions: int
    state_dim: int
    assignment: str = "identity"

    @classmethod
    def create(
        cls,
        state_dim: int,
        n_agents: int,
        n_actions: int,
        rng: np.random.Generator,
        target_rng: np.random.Generator,
        hidden: Sequence[int] = (64, 64),
        assignment: str = "identity",
    ) -> "RankingModule":
        if assignment not in ASSIGNMENTS:
            raise ValueError(f"assignment must be one of {ASSIGNMENTS}")
        in_dim = state_dim + n_agents * (n_actions + n_agents)
        net = Mlp.init([in_dim, *hidden, n_agents], rng)
        return cls(net, init_targets(n_agents, target_rng), n_agents, n_actions, state_dim, assignment)


def init_targets(n_agents: int, rng: np.random.Generator) -> TargetSequence:
    """ceil(20%) positive in (0, 1], the rest negative in [-1, 0), ascending."""
    n_pos = math.ceil(0.2 * n_agents)
    while True:
        pos = 1.0 - rng.random(n_pos)  # (0, 1]
        neg = -1.0 + rng.random(n_agents - n_pos)  # [-1, 0)
        values = np.sort(np.concatenate([neg, pos]))
        if np.all(np.diff(values) > 0):
            return TargetSequence(values)


def encode_inputs(module: RankingModule, state_vecs: np.ndarray, joint_actions: np.ndarray) -> np.ndarray:
    """(B, state_dim + n*(n_actions + n)): state, then for every agent its
    action one-hot followed by its identity one-hot."""
    states = np.atleast_2d(np.asarray(state_vecs, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(joint_actions, dtype=np.int64))
    b = states.shape[0]
    n, a = module.n_agents, module.n_actions
    enc = np.zeros((b, module.state_dim + n * (a + n)))
    enc[:, : module.state_dim] = states
    base = module.state_dim
    rows = np.arange(b)
    for j in range(n):
        enc[rows, base + actions[:, j]] = 1.0
        enc[:, base + a + j] = 1.0
        base += a + n
    return enc


def _sort_batch(raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    perm = np.argsort(raw, axis=-1, kind="stable")  # ties broken by agent index
    return np.take_along_axis(raw, perm, axis=-1), perm


def compute_intrinsic_batch(
    module: RankingModule, state_vecs: np.ndarray, joint_actions: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (raw, sorted, perm, per_agent), each (B, n). Scores are
    tanh-squashed net outputs, so every entry lies in (-1, 1)."""
    raw = np.tanh(module.net.forward(encode_inputs(module, state_vecs, joint_actions)))
    raw = np.atleast_2d(raw)
    srt, perm = _sort_batch(raw)
    per_agent = srt if module.assignment == "rank_position" else raw
    return raw, srt, perm, per_agent


def compute_intrinsic(module: RankingModule, state_vec: np.ndarray, joint_action: np.ndarray) -> IntrinsicRewards:
    raw, srt, perm, per_agent = compute_intrinsic_batch(module, state_vec[None, :], np.asarray(joint_action)[None, :])
    return IntrinsicRewards(raw[0], srt[0], perm[0], per_agent[0].copy())


# --- losses ---------------------------------------------------------------------


def loss_mse(sorted_vals: np.ndarray, targets: TargetSequence) -> float:
    """Mean squared gap between the sorted scores and the target sequence."""
    return float(np.mean((sorted_vals - targets.values) ** 2))


def loss_var(raw: np.ndarray) -> float:
    """Population variance of the scores (the spread the module may amplify)."""
    return float(np.mean((raw - np.mean(raw)) ** 2))


def rank_loss(
    module: RankingModule,
    state_vecs: np.ndarray,
    joint_actions: np.ndarray,
    mse_coef: float,
    var_coef: float,
) -> Tuple[float, np.ndarray]:
    """Batch-mean ranking loss mse_coef * L_mse - var_coef * L_var and its
    gradient w.r.t. the net parameters (flat vector).

    The sort is a fixed permutation almost everywhere, so the MSE term's
    gradient routes each sorted slot back to the agent that produced it.
    """
    enc = encode_inputs(module, state_vecs, joint_actions)
    z, cache = module.net.forward_cached(enc)
    raw = np.tanh(np.atleast_2d(z))
    b, n = raw.shape
    srt, perm = _sort_batch(raw)
    y = module.targets.values

    mse = np.mean((srt - y) ** 2, axis=1)  # (B,)
    centered = raw - raw.mean(axis=1, keepdims=True)
    var = np.mean(centered**2, axis=1)  # (B,)
    loss = float(np.mean(mse_coef * mse - var_coef * var))

    # d loss / d raw, per sample, including the 1/B batch mean
    d_raw = np.zeros_like(raw)
    d_sorted = mse_coef * (2.0 / n) * (srt - y)
    np.put_along_axis(d_raw, perm, d_sorted, axis=1)
    d_raw -= var_coef * (2.0 / n) * centered
    grad = module.net.backward(cache, d_raw * (1.0 - raw**2) / b)
    return loss, grad


def update_eta_rank(
    module: RankingModule,
    state_vecs: np.ndarray,
    joint_actions: np.ndarray,
    lr: float,
    mse_coef: float,
    var_coef: float,
) -> Tuple[RankingModule, float]:
    """One plain gradient-descent step on the ranking loss; returns the
    updated module and the pre-step loss. Non-finite gradients skip the step."""
    loss, grad = rank_loss(module, state_vecs, joint_actions, mse_coef, var_coef)
    try:
        new_flat = sgd_step(module.net.flat_params(), grad, lr)
    except ValueError as err:
        log.warning("ranking step skipped: %s", err)
        return module, loss
    net = module.net.copy()
    net.set_flat(new_flat)
    return replace(module, net=net), loss


# --- hooks for the meta-gradient --------------------------------------------------


def intrinsic_grad_vjp(
    module: RankingModule,
    state_vecs: np.ndarray,
    joint_actions: np.ndarray,
    weights: np.ndarray,
    perms: Optional[np.ndarray] = None,
) -> np.ndarray:
    """sum_{s,i} weights[s, i] * d r_in[i, s] / d eta, as one flat vector.

    Under identity assignment agent i's reward is raw[i]; under rank_position
    it is raw[perm[i]], so the weight routes through the sample's permutation
    (pass the perms recorded when the rewards were computed).
    """
    enc = encode_inputs(module, state_vecs, joint_actions)
    z, cache = module.net.forward_cached(enc)
    squash = 1.0 - np.tanh(np.atleast_2d(z)) ** 2
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if module.assignment == "rank_position":
        if perms is None:
            raise ValueError("rank_position assignment needs the recorded perms")
        seeds = np.zeros_like(weights)
        np.put_along_axis(seeds, perms, weights, axis=1)
    else:
        seeds = weights
    return module.net.backward(cache, seeds * squash)

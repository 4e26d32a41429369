"""Differentiating the policy update with respect to the reward module.

The inner step is plain SGD on a clipped surrogate whose advantages are an
affine function of the per-agent intrinsic rewards, so the updated policy
parameters are an explicit, exactly differentiable function of the ranking
net. Chaining the extrinsic surrogate's gradient at the updated parameters
through that update gives the ascent direction for the ranking net:

    d J_ex(theta'_i) / d eta
      = g_ex_i . d theta'_i / d eta
      = (alpha * lam / S) * sum_s active_s * ratio_s
          * (g_ex_i . dlogpi_i(a_s | o_s)) * d r_in[i, s] / d eta

with `active` the surrogate's branch mask: a sample whose clipped branch won
outside the trust band contributes nothing to the inner gradient, hence
nothing here either. Everything is assembled from per-sample contractions —
no per-sample parameter gradients are ever materialised.

Two approximations are deliberate and documented: critics are treated as
constants of eta (they are refreshed only after the meta step), and the
one-step advantage keeps each sample's reward out of every other sample's
advantage. Under GAE the second property fails and this gradient becomes an
approximation.
"""

from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np

from .mappo import Agents, PpoCache, TrajectoryBatch, surrogate_grad, surrogate_parts
from .nets import sgd_step
from .ranking import RankingModule, compute_intrinsic_batch, intrinsic_grad_vjp

log = logging.getLogger(__name__)


def refresh_intrinsic(batch: TrajectoryBatch, ranking: RankingModule, lam: float) -> None:
    """Recompute the batch's intrinsic and hybrid rewards from `ranking`,
    in place. The sampled trajectories stay fixed; only the reward channels
    move. This is the eta -> rewards dependence the meta-gradient runs
    through."""
    raw, _, perms, per_agent = compute_intrinsic_batch(ranking, batch.states, batch.actions)
    batch.raw_scores = raw
    batch.perms = perms
    batch.intr_rewards = per_agent.copy()
    batch.hybrid_rewards = batch.ext_rewards[:, None] + lam * batch.intr_rewards


def extrinsic_policy_grad(
    agents_after: Agents, batch: TrajectoryBatch, clip_eps: float
) -> List[np.ndarray]:
    """Per-agent gradient of the clipped surrogate over *extrinsic*
    advantages, evaluated at the post-update policies against the collection
    behavior. This is the outer objective's ascent direction in policy
    space."""
    grads = []
    for i, policy in enumerate(agents_after.policies):
        parts = surrogate_parts(
            policy, batch.obs[:, i, :], batch.actions[:, i],
            batch.behavior_logps[:, i], batch.ext_adv, clip_eps,
        )
        grads.append(surrogate_grad(parts, policy, batch.ext_adv))
    return grads


def meta_gradient(
    agents_before: Agents,
    ppo_cache: PpoCache,
    batch: TrajectoryBatch,
    ranking: RankingModule,
    g_ex: List[np.ndarray],
    lam: float,
) -> np.ndarray:
    """Exact gradient of sum_i J_ex(theta'_i(eta)) with respect to the ranking
    parameters, as one flat vector.

    `agents_before` and `ppo_cache` must be the policies and cache from the
    update being differentiated; `ranking` is the module at the point of
    differentiation (its scores define d r_in / d eta, and under
    rank-position assignment also which agent owns which sorted slot).
    """
    s = batch.n_samples
    n = agents_before.n_agents
    weights = np.zeros((s, n))
    for i in range(n):
        parts = ppo_cache.parts[i]
        dots = agents_before.policies[i].per_sample_grad_dot(
            parts.fwd_cache, parts.logp_grads, g_ex[i]
        )
        weights[:, i] = parts.active * parts.ratios * dots
    weights *= ppo_cache.alpha * lam / s

    perms = None
    if ranking.assignment == "rank_position":
        _, _, perms, _ = compute_intrinsic_batch(ranking, batch.states, batch.actions)
    return intrinsic_grad_vjp(ranking, batch.states, batch.actions, weights, perms)


def update_eta_meta(ranking: RankingModule, grad: np.ndarray, lr: float) -> RankingModule:
    """One ascent step on the ranking net along the meta-gradient; a
    non-finite gradient skips the step."""
    try:
        new_flat = sgd_step(ranking.net.flat_params(), grad, lr, ascent=True)
    except ValueError as err:
        log.warning("meta step skipped: %s", err)
        return ranking
    net = ranking.net.copy()
    net.set_flat(new_flat)
    return RankingModule(
        net, ranking.targets, ranking.n_agents, ranking.n_actions,
        ranking.state_dim, ranking.assignment,
    )

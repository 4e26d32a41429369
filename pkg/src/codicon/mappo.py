"""On-policy actor-critic machinery for the gridworld team task.

Centralized training, decentralized execution: each agent owns a policy net
over its local observation, while critics condition on the global state. One
shared critic predicts the team (extrinsic) return; each agent additionally
gets its own critic for the hybrid return, because intrinsic bonuses differ
per agent. The same collection/update path serves the plain team-reward
baseline (intrinsic weight 0) and every intrinsic-reward variant — nothing in
here branches on a variant name, which is what makes the baseline exactly the
degenerate case of the full method.

The policy update is a single clipped-surrogate ascent step per batch with
plain SGD, so the update map stays an exact, differentiable function of the
rewards — the meta-gradient module leans on that. Critics use Adam; they are
treated as constants inside the surrogate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import pacmen
from .nets import (
    AdamState,
    Mlp,
    adam_step,
    log_softmax,
    sgd_step,
    softmax_sample,
)
from .pacmen import EnvConfig, EnvState, GridMap
from .ranking import RankingModule, compute_intrinsic_batch
from .seeding import CRITIC_INIT, POLICY_INIT, stream

log = logging.getLogger(__name__)


@dataclass
class Agents:
    """Per-agent policies plus the two kinds of centralized critics."""

    policies: List[Mlp]
    hybrid_critics: List[Mlp]  # one per agent: V_i(state) for the bonus-augmented return
    ext_critic: Mlp  # shared: V(state) for the plain team return

    @property
    def n_agents(self) -> int:
        return len(self.policies)

    def copy(self) -> "Agents":
        return Agents(
            [p.copy() for p in self.policies],
            [c.copy() for c in self.hybrid_critics],
            self.ext_critic.copy(),
        )


def create_agents(
    obs_dim: int,
    state_dim: int,
    n_actions: int,
    n_agents: int,
    master_seed: int,
    policy_hidden: Sequence[int] = (32, 32),
    critic_hidden: Sequence[int] = (32, 32),
) -> Agents:
    """Initialize every net from its own named seed stream, so adding or
    removing one component never shifts another's initial weights."""
    policies = [
        Mlp.init([obs_dim, *policy_hidden, n_actions], stream(master_seed, POLICY_INIT, i))
        for i in range(n_agents)
    ]
    hybrid_critics = [
        Mlp.init([state_dim, *critic_hidden, 1], stream(master_seed, CRITIC_INIT, i))
        for i in range(n_agents)
    ]
    ext_critic = Mlp.init([state_dim, *critic_hidden, 1], stream(master_seed, CRITIC_INIT, n_agents))
    return Agents(policies, hybrid_critics, ext_critic)


@dataclass
class TrajectoryBatch:
    """Flattened on-policy samples, episode-contiguous and time-ordered.

    S = total steps across the batch, n = agents, E = episodes. `dones[s]` is
    1.0 exactly on each episode's final sample, so the backward return scans
    never leak across episode boundaries.
    """

    states: np.ndarray  # (S, state_dim)
    next_states: np.ndarray  # (S, state_dim)
    obs: np.ndarray  # (S, n, obs_dim)
    actions: np.ndarray  # (S, n) int
    behavior_logps: np.ndarray  # (S, n) log pi(a|o) under the collection policy
    ext_rewards: np.ndarray  # (S,) shared team reward
    intr_rewards: np.ndarray  # (S, n) per-agent intrinsic reward as assigned
    raw_scores: np.ndarray  # (S, n) ranking-net outputs by agent index
    perms: np.ndarray  # (S, n) ascending sort order of the raw scores
    hybrid_rewards: np.ndarray  # (S, n) ext + lam * intr
    dones: np.ndarray  # (S,) float 0/1
    episode_ids: np.ndarray  # (S,) int
    step_t: np.ndarray  # (S,) time index within the episode (0-based)
    episode_returns: np.ndarray  # (E,) undiscounted extrinsic return
    episode_lengths: np.ndarray  # (E,) int
    dots_room_counts: np.ndarray  # (6,) dots eaten per room label, batch total
    visitation: np.ndarray  # (n, H, W) post-step cell counts
    # filled by add_advantages:
    ext_values: Optional[np.ndarray] = None  # (S,)
    ext_returns: Optional[np.ndarray] = None  # (S,)
    ext_adv: Optional[np.ndarray] = None  # (S,)
    hybrid_returns: Optional[np.ndarray] = None  # (S, n)
    hybrid_advs: Optional[np.ndarray] = None  # (S, n)

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def n_episodes(self) -> int:
        return len(self.episode_returns)


def collect_trajectories(
    gmap: GridMap,
    env_cfg: EnvConfig,
    agents: Agents,
    ranking: Optional[RankingModule],
    lam: float,
    rngs: Sequence[np.random.Generator],
    greedy: bool = False,
) -> TrajectoryBatch:
    """Roll out one episode per generator, all in lockstep.

    Episodes advance together so net forward passes are batched, but each
    episode consumes only its own generator — one uniform draw per agent per
    step, agents in ascending order — so the sampled trajectories are
    identical to running the episodes one at a time.
    """
    n = agents.n_agents
    n_ep = len(rngs)
    sims: List[EnvState] = [pacmen.reset(gmap) for _ in range(n_ep)]
    rec = [
        {key: [] for key in ("states", "next_states", "obs", "actions", "logps",
                             "ext", "intr", "raw", "perm", "done", "t")}
        for _ in range(n_ep)
    ]
    dot_rooms = np.array([gmap.room_of[r, c] for r, c in gmap.initial_dots])
    dots_room_counts = np.zeros(6)
    visitation = np.zeros((n, gmap.height, gmap.width))

    active = list(range(n_ep))
    while active:
        obs_act = np.stack([pacmen.observe_all(gmap, sims[e], env_cfg) for e in active])
        st_act = np.stack([pacmen.global_state(gmap, sims[e], env_cfg) for e in active])
        logits = [agents.policies[i].forward(obs_act[:, i, :]) for i in range(n)]
        logps_all = [log_softmax(lg) for lg in logits]
        acts = np.zeros((len(active), n), dtype=np.int64)
        lps = np.zeros((len(active), n))
        if greedy:
            for i in range(n):
                acts[:, i] = np.argmax(logits[i], axis=1)
                lps[:, i] = logps_all[i][np.arange(len(active)), acts[:, i]]
        else:
            for idx, e in enumerate(active):
                for i in range(n):
                    a, lp = softmax_sample(logits[i][idx], rngs[e])
                    acts[idx, i] = a
                    lps[idx, i] = lp

        if ranking is not None:
            raw, _, perms, per_agent = compute_intrinsic_batch(ranking, st_act, acts)
        else:
            raw = np.zeros((len(active), n))
            perms = np.tile(np.arange(n), (len(active), 1))
            per_agent = raw

        still = []
        for idx, e in enumerate(active):
            prev_dots = sims[e].dots
            out = pacmen.step(gmap, sims[e], acts[idx], env_cfg)
            r = rec[e]
            r["states"].append(st_act[idx])
            r["next_states"].append(pacmen.global_state(gmap, out.next_state, env_cfg))
            r["obs"].append(obs_act[idx])
            r["actions"].append(acts[idx])
            r["logps"].append(lps[idx])
            r["ext"].append(out.team_reward)
            r["intr"].append(per_agent[idx])
            r["raw"].append(raw[idx])
            r["perm"].append(perms[idx])
            r["done"].append(float(out.done))
            r["t"].append(sims[e].t)
            for k in np.nonzero(prev_dots & ~out.next_state.dots)[0]:
                dots_room_counts[dot_rooms[k]] += 1
            pacmen.accumulate_visitation(visitation, out.next_state)
            sims[e] = out.next_state
            if not out.done:
                still.append(e)
        active = still

    def cat(key, dtype=np.float64):
        return np.concatenate([np.asarray(rec[e][key], dtype=dtype) for e in range(n_ep)])

    lengths = np.array([len(rec[e]["ext"]) for e in range(n_ep)], dtype=np.int64)
    ext_rewards = cat("ext")
    intr = cat("intr")
    batch = TrajectoryBatch(
        states=cat("states"),
        next_states=cat("next_states"),
        obs=cat("obs"),
        actions=cat("actions", np.int64),
        behavior_logps=cat("logps"),
        ext_rewards=ext_rewards,
        intr_rewards=intr,
        raw_scores=cat("raw"),
        perms=cat("perm", np.int64),
        hybrid_rewards=ext_rewards[:, None] + lam * intr,
        dones=cat("done"),
        episode_ids=np.repeat(np.arange(n_ep), lengths),
        step_t=cat("t", np.int64),
        episode_returns=np.array([sum(rec[e]["ext"]) for e in range(n_ep)]),
        episode_lengths=lengths,
        dots_room_counts=dots_room_counts,
        visitation=visitation,
    )
    return batch


# --- returns and advantages -------------------------------------------------------


def discounted_returns(rewards: np.ndarray, dones: np.ndarray, gamma: float) -> np.ndarray:
    """Reward-to-go within each episode; rewards may be (S,) or (S, k)."""
    out = np.zeros_like(rewards, dtype=np.float64)
    running = np.zeros(rewards.shape[1:], dtype=np.float64)
    for s in range(len(rewards) - 1, -1, -1):
        running = rewards[s] + gamma * (1.0 - dones[s]) * running
        out[s] = running
    return out


def one_step_advantage(
    rewards: np.ndarray, values: np.ndarray, next_values: np.ndarray,
    dones: np.ndarray, gamma: float,
) -> np.ndarray:
    """A = r + gamma * V(s') * (1 - done) - V(s), elementwise."""
    if rewards.ndim == 2 and dones.ndim == 1:
        dones = dones[:, None]
    return rewards + gamma * next_values * (1.0 - dones) - values


def gae_advantage(
    rewards: np.ndarray, values: np.ndarray, next_values: np.ndarray,
    dones: np.ndarray, gamma: float, lam: float,
) -> np.ndarray:
    deltas = one_step_advantage(rewards, values, next_values, dones, gamma)
    out = np.zeros_like(deltas)
    running = np.zeros(deltas.shape[1:], dtype=np.float64)
    for s in range(len(deltas) - 1, -1, -1):
        running = deltas[s] + gamma * lam * (1.0 - dones[s]) * running
        out[s] = running
    return out


def critic_values(critic: Mlp, states: np.ndarray) -> np.ndarray:
    return critic.forward(states)[:, 0]


def add_advantages(
    batch: TrajectoryBatch,
    agents: Agents,
    gamma: float,
    use_gae: bool = False,
    gae_lambda: float = 0.95,
    normalize: bool = False,
) -> None:
    """Fill the value/return/advantage fields in place.

    The default is the plain one-step advantage: each sample's advantage then
    depends on no reward but its own, which keeps the policy update an exact
    linear function of the per-sample rewards (the meta-gradient assumes
    this). GAE is available for experiments but mixes future rewards into
    every advantage, so the meta-gradient becomes an approximation under it.
    """
    adv_fn = (
        (lambda r, v, nv: gae_advantage(r, v, nv, batch.dones, gamma, gae_lambda))
        if use_gae
        else (lambda r, v, nv: one_step_advantage(r, v, nv, batch.dones, gamma))
    )
    batch.ext_values = critic_values(agents.ext_critic, batch.states)
    ext_next = critic_values(agents.ext_critic, batch.next_states)
    batch.ext_adv = adv_fn(batch.ext_rewards, batch.ext_values, ext_next)
    batch.ext_returns = discounted_returns(batch.ext_rewards, batch.dones, gamma)

    hyb_v = np.stack([critic_values(c, batch.states) for c in agents.hybrid_critics], axis=1)
    hyb_next = np.stack([critic_values(c, batch.next_states) for c in agents.hybrid_critics], axis=1)
    batch.hybrid_advs = adv_fn(batch.hybrid_rewards, hyb_v, hyb_next)
    batch.hybrid_returns = discounted_returns(batch.hybrid_rewards, batch.dones, gamma)

    if normalize:
        batch.ext_adv = (batch.ext_adv - batch.ext_adv.mean()) / (batch.ext_adv.std() + 1e-8)
        mu = batch.hybrid_advs.mean(axis=0, keepdims=True)
        sd = batch.hybrid_advs.std(axis=0, keepdims=True)
        batch.hybrid_advs = (batch.hybrid_advs - mu) / (sd + 1e-8)


# --- the clipped-surrogate update -------------------------------------------------


@dataclass
class SurrogateParts:
    """Per-sample pieces of one agent's clipped surrogate, reused both for the
    update itself and for differentiating the update with respect to the
    rewards that built its advantages."""

    ratios: np.ndarray  # (S,) pi_new / pi_behavior at the sampled actions
    active: np.ndarray  # (S,) 1.0 where the surrogate passes gradient
    logp_grads: np.ndarray  # (S, A) d log pi(a_s) / d logits
    probs: np.ndarray  # (S, A) current policy probabilities
    fwd_cache: object  # policy forward cache on the batch observations
    surrogate: float  # mean clipped surrogate value


def surrogate_parts(
    policy: Mlp,
    obs: np.ndarray,
    actions: np.ndarray,
    behavior_logps: np.ndarray,
    advantages: np.ndarray,
    clip_eps: float,
) -> SurrogateParts:
    """Evaluate min(ratio * A, clip(ratio) * A) and record which branch won.

    Ties go to the unclipped branch; inside the trust band the branches agree,
    so only samples that are both clipped and strictly worse unclipped are
    gradient-dead.
    """
    logits, cache = policy.forward_cached(obs)
    logp_all = log_softmax(logits)
    rows = np.arange(len(actions))
    logp = logp_all[rows, actions]
    ratios = np.exp(logp - behavior_logps)
    unclipped = ratios * advantages
    clipped = np.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    take_unclipped = unclipped <= clipped
    in_band = (ratios > 1.0 - clip_eps) & (ratios < 1.0 + clip_eps)
    active = (take_unclipped | in_band).astype(np.float64)
    probs = np.exp(logp_all)
    logp_grads = -probs.copy()
    logp_grads[rows, actions] += 1.0
    return SurrogateParts(
        ratios=ratios,
        active=active,
        logp_grads=logp_grads,
        probs=probs,
        fwd_cache=cache,
        surrogate=float(np.mean(np.minimum(unclipped, clipped))),
    )


def surrogate_grad(parts: SurrogateParts, policy: Mlp, advantages: np.ndarray,
                   entropy_coef: float = 0.0) -> np.ndarray:
    """Flat-parameter gradient of the mean clipped surrogate (plus an optional
    entropy bonus), ready for an ascent step."""
    s = len(advantages)
    out_grads = (parts.active * parts.ratios * advantages)[:, None] * parts.logp_grads
    if entropy_coef:
        logp = np.log(np.clip(parts.probs, 1e-300, None))
        ent = -np.sum(parts.probs * logp, axis=1, keepdims=True)
        out_grads += entropy_coef * (-parts.probs * (logp + ent))
    return policy.backward(parts.fwd_cache, out_grads / s)


@dataclass
class PpoCache:
    """What the meta-gradient needs about the policy step that just happened:
    the per-sample branch masks, ratios, and score-function pieces, all
    evaluated at the pre-update parameters."""

    parts: List[SurrogateParts]
    alpha: float
    entropies: List[float] = field(default_factory=list)


def ppo_policy_update(
    agents: Agents,
    batch: TrajectoryBatch,
    alpha: float,
    clip_eps: float,
    entropy_coef: float = 0.0,
) -> Tuple[Agents, PpoCache]:
    """One plain-SGD ascent step on each agent's clipped surrogate over the
    hybrid advantages. Returns the stepped agents (critics untouched) and the
    cache for differentiating through this update. A non-finite gradient
    skips that agent's step."""
    new = agents.copy()
    cache = PpoCache(parts=[], alpha=alpha)
    for i, policy in enumerate(agents.policies):
        parts = surrogate_parts(
            policy, batch.obs[:, i, :], batch.actions[:, i],
            batch.behavior_logps[:, i], batch.hybrid_advs[:, i], clip_eps,
        )
        grad = surrogate_grad(parts, policy, batch.hybrid_advs[:, i], entropy_coef)
        try:
            new.policies[i].set_flat(sgd_step(policy.flat_params(), grad, alpha, ascent=True))
        except ValueError as err:
            log.warning("policy step skipped for agent %d: %s", i, err)
        cache.parts.append(parts)
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(parts.probs > 0, parts.probs * np.log(parts.probs), 0.0)
        cache.entropies.append(float(np.mean(-np.sum(plogp, axis=1))))
    return new, cache


# --- critic regression ------------------------------------------------------------


@dataclass
class CriticOpt:
    hybrid: List[AdamState]
    ext: AdamState

    @classmethod
    def init(cls, agents: Agents) -> "CriticOpt":
        return cls(
            [AdamState.init(c.flat_params()) for c in agents.hybrid_critics],
            AdamState.init(agents.ext_critic.flat_params()),
        )


def _regress(net: Mlp, opt: AdamState, states: np.ndarray, targets: np.ndarray,
             lr: float, epochs: int) -> Tuple[AdamState, float]:
    last = 0.0
    s = len(states)
    for _ in range(epochs):
        pred, cache = net.forward_cached(states)
        err = pred[:, 0] - targets
        last = float(np.mean(err**2))
        grad = net.backward(cache, (2.0 / s) * err[:, None])
        if not np.all(np.isfinite(grad)):
            log.warning("critic step skipped: non-finite gradient")
            break
        flat, opt = adam_step(opt, grad, lr)
        net.set_flat(flat)
    return opt, last


def critic_update(
    agents: Agents,
    opt: CriticOpt,
    batch: TrajectoryBatch,
    lr: float,
    epochs: int,
) -> Tuple[CriticOpt, dict]:
    """Adam regression of every critic onto its discounted reward-to-go.
    Mutates the critic nets in `agents`; returns fresh optimizer state and the
    final per-critic mean squared errors."""
    losses = {}
    for i, critic in enumerate(agents.hybrid_critics):
        opt.hybrid[i], losses[f"hybrid_{i}"] = _regress(
            critic, opt.hybrid[i], batch.states, batch.hybrid_returns[:, i], lr, epochs
        )
    opt.ext, losses["ext"] = _regress(
        agents.ext_critic, opt.ext, batch.states, batch.ext_returns, lr, epochs
    )
    return opt, losses

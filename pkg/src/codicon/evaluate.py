"""Evaluation and inspection of trained or scripted parameters.

Evaluation runs the policies greedily (argmax), reports returns, per-room
dwell mass per agent, and an ASCII replay of one episode. The state/reward
dump rolls the *stochastic* policy instead, so the visited-state distribution
keeps its spread — its rows (global state vector plus the team reward) are
meant for external embedding/plotting tools.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import pacmen
from .mappo import Agents, collect_trajectories
from .pacmen import EnvConfig, GridMap
from .params_io import ParamsBundle, training_from_bundle
from .seeding import DUMP, EVAL, stream


@dataclass
class EvalReport:
    returns: np.ndarray  # (E,)
    episode_lengths: np.ndarray  # (E,)
    heatmap: np.ndarray  # (H, W) occupancy counts, all agents
    room_mass: List[Dict[str, float]]  # per agent: room name -> dwell fraction
    dots_by_room: Dict[str, float]  # mean dots eaten per episode
    replay: str

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))

    @property
    def max_return(self) -> float:
        return float(np.max(self.returns))

    def summary_text(self) -> str:
        lines = [
            f"episodes: {len(self.returns)}",
            f"mean return: {self.mean_return:.3f} (max {self.max_return:.3f})",
            f"mean episode length: {float(np.mean(self.episode_lengths)):.2f}",
            "dots per episode by room: "
            + "  ".join(f"{k} {v:.2f}" for k, v in self.dots_by_room.items() if v),
            "dwell mass by room:",
        ]
        for i, masses in enumerate(self.room_mass):
            top = sorted(masses.items(), key=lambda kv: -kv[1])
            shown = "  ".join(f"{k} {v:.2f}" for k, v in top if v >= 0.01)
            lines.append(f"  agent {i}: {shown}")
        lines.append("replay of one episode:")
        lines.append(self.replay)
        return "\n".join(lines)


ActionFn = Callable[[pacmen.EnvState, int], np.ndarray]


def greedy_action_fn(gmap: GridMap, env_cfg: EnvConfig, agents: Agents) -> ActionFn:
    def act(state: pacmen.EnvState, t: int) -> np.ndarray:
        obs = pacmen.observe_all(gmap, state, env_cfg)
        return np.array(
            [int(np.argmax(agents.policies[i].forward(obs[i]))) for i in range(agents.n_agents)]
        )

    return act


def table_action_fn(table: np.ndarray) -> ActionFn:
    def act(state: pacmen.EnvState, t: int) -> np.ndarray:
        if t < table.shape[1]:
            return table[:, t]
        return np.full(table.shape[0], pacmen.STAY)

    return act


def _rollout(gmap: GridMap, env_cfg: EnvConfig, act: ActionFn):
    """One episode under a deterministic action function; returns per-step
    (pre-step state, actions, reward) plus the closing state."""
    state = pacmen.reset(gmap)
    steps = []
    done = False
    while not done:
        actions = np.asarray(act(state, state.t), dtype=np.int64)
        out = pacmen.step(gmap, state, actions, env_cfg)
        steps.append((state, actions, out.team_reward))
        state = out.next_state
        done = out.done
    return steps, state


def _render_replay(gmap: GridMap, env_cfg: EnvConfig, act: ActionFn) -> str:
    steps, final = _rollout(gmap, env_cfg, act)
    frames = [f"t=0\n{pacmen.render_state(gmap, steps[0][0])}"]
    total = 0.0
    for state, actions, reward in steps:
        total += reward
        names = " ".join(pacmen.ACTION_NAMES[a] for a in actions)
        frames.append(f"actions: {names}  reward {reward:+.2f}  return {total:+.2f}")
    frames.append(f"t={final.t} final board:")
    frames.append(pacmen.render_state(gmap, final))
    return "\n".join(frames)


def evaluate_actions(gmap: GridMap, env_cfg: EnvConfig, act: ActionFn, episodes: int) -> EvalReport:
    """Deterministic action function: every episode is the same play, run
    `episodes` times so masses and counts scale the way callers expect."""
    steps, final = _rollout(gmap, env_cfg, act)
    ep_return = float(sum(r for _, _, r in steps))
    visitation = np.zeros((gmap.n_agents, gmap.height, gmap.width))
    dot_rooms = np.array([gmap.room_of[r, c] for r, c in gmap.initial_dots])
    dots_room = np.zeros(6)
    prev = steps[0][0]
    for state, _, _ in steps[1:]:
        pacmen.accumulate_visitation(visitation, state)
        for k in np.nonzero(prev.dots & ~state.dots)[0]:
            dots_room[dot_rooms[k]] += 1
        prev = state
    pacmen.accumulate_visitation(visitation, final)
    for k in np.nonzero(prev.dots & ~final.dots)[0]:
        dots_room[dot_rooms[k]] += 1
    return _report(
        gmap,
        returns=np.full(episodes, ep_return),
        lengths=np.full(episodes, len(steps)),
        visitation=visitation * episodes,
        dots_room=dots_room,  # per episode already
        replay=_render_replay(gmap, env_cfg, act),
    )


def _report(gmap, returns, lengths, visitation, dots_room, replay) -> EvalReport:
    room_mass = []
    for i in range(visitation.shape[0]):
        by_room = pacmen.visits_by_room(gmap, visitation[i])
        total = max(sum(by_room.values()), 1)
        room_mass.append({k: v / total for k, v in by_room.items()})
    dots_by_room = {
        name: float(dots_room[label])
        for label, name in pacmen.ROOM_NAMES.items()
        if label != pacmen.WALL
    }
    return EvalReport(
        returns=np.asarray(returns, dtype=np.float64),
        episode_lengths=np.asarray(lengths, dtype=np.int64),
        heatmap=visitation.sum(axis=0).astype(np.int64),
        room_mass=room_mass,
        dots_by_room=dots_by_room,
        replay=replay,
    )


def evaluate_bundle(
    bundle: ParamsBundle,
    episodes: int,
    seed: int,
    gmap: Optional[GridMap] = None,
    env_cfg: Optional[EnvConfig] = None,
) -> EvalReport:
    gmap = gmap or pacmen.default_map()
    env_cfg = env_cfg or EnvConfig()
    if bundle.kind == "scripted":
        act = table_action_fn(bundle.table)
    else:
        agents, _ = training_from_bundle(bundle)
        act = greedy_action_fn(gmap, env_cfg, agents)
    return evaluate_actions(gmap, env_cfg, act, episodes)


def evaluate_agents(gmap: GridMap, env_cfg: EnvConfig, agents: Agents, episodes: int) -> EvalReport:
    return evaluate_actions(gmap, env_cfg, greedy_action_fn(gmap, env_cfg, agents), episodes)


# --- state/reward dump --------------------------------------------------------------


def dump_state_rewards(
    bundle: ParamsBundle,
    out_path,
    episodes: int,
    seed: int,
    gmap: Optional[GridMap] = None,
    env_cfg: Optional[EnvConfig] = None,
) -> int:
    """Write one CSV row per visited step: the global state vector followed by
    the team reward earned on that step. Returns the row count."""
    gmap = gmap or pacmen.default_map()
    env_cfg = env_cfg or EnvConfig()
    if bundle.kind == "scripted":
        rows = []
        for _ in range(episodes):
            steps, _ = _rollout(gmap, env_cfg, table_action_fn(bundle.table))
            for state, _, reward in steps:
                rows.append((pacmen.global_state(gmap, state, env_cfg), reward))
        states = np.array([r[0] for r in rows])
        rewards = np.array([r[1] for r in rows])
    else:
        agents, _ = training_from_bundle(bundle)
        rngs = [stream(seed, DUMP, e) for e in range(episodes)]
        batch = collect_trajectories(gmap, env_cfg, agents, None, 0.0, rngs)
        states, rewards = batch.states, batch.ext_rewards
    return write_state_reward_csv(out_path, states, rewards)


def write_state_reward_csv(out_path, states: np.ndarray, rewards: np.ndarray) -> int:
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"s{j}" for j in range(states.shape[1])] + ["reward"])
        for vec, r in zip(states, rewards):
            writer.writerow([repr(float(v)) for v in vec] + [repr(float(r))])
    return len(states)

"""Pac-Men: a plus-shaped foraging gridworld for four agents.

A central room connects four congruent peripheral rooms through straight
one-cell corridors, so every room entrance is equidistant from the center.
Agents spawn on the corridor cells. Each room holds dots; the south room holds
by far the most — more than one agent can physically reach in an episode — so
clearing it requires two agents, and the best strategy abandons one of the
small rooms. Rewards are shared: +1 per dot, -0.25 per timestep, 17 timesteps.

Default map (19x19):

  - center room rows 8-10 x cols 8-10; corridors at (7,9), (11,9), (9,7), (9,11)
  - north/south rooms 7x5, east/west rooms 5x7 (same shape, rotated)
  - 3 dots per small room at depth 3 from the entrance
  - 21 dots in the south room: the 5x5 block rows 13-17 x cols 7-11 minus the
    3-cell entry lane (13,9),(14,9),(15,9) and the cell (16,10)

Since an agent can enter at most 17 cells per episode and spawns hold no dots,
21 south dots are uncollectable by any single agent; a pair (the south agent
plus one defector arriving at t=5) clears them with one move to spare.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

# actions
UP, DOWN, LEFT, RIGHT, STAY = 0, 1, 2, 3, 4
N_ACTIONS = 5
ACTION_DELTAS = np.array([(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)], dtype=np.int64)
ACTION_NAMES = ("up", "down", "left", "right", "stay")

# room labels (values in GridMap.room_of)
WALL, CENTER, NORTH, SOUTH, EAST, WEST, CORRIDOR = -1, 0, 1, 2, 3, 4, 5
ROOM_NAMES = {CENTER: "center", NORTH: "north", SOUTH: "south", EAST: "east", WEST: "west", CORRIDOR: "corridor"}

VIEW = 5  # egocentric window side length
VIEW_R = VIEW // 2

# best achievable team return on the default map: 27 dots (south 21 + two own
# rooms) minus 17 * 0.25; the defector's room is unreachable by anyone else in
# time. Verified by simulating the scripted plan below in the test suite.
OPTIMAL_RETURN = 22.75


@dataclass(frozen=True)
class GridMap:
    walls: np.ndarray  # (H, W) bool
    spawns: Tuple[Tuple[int, int], ...]
    initial_dots: Tuple[Tuple[int, int], ...]  # fixed order; bitmap index = position here
    room_of: np.ndarray  # (H, W) int, WALL/CENTER/.../CORRIDOR

    @property
    def height(self) -> int:
        return self.walls.shape[0]

    @property
    def width(self) -> int:
        return self.walls.shape[1]

    @property
    def n_agents(self) -> int:
        return len(self.spawns)

    @property
    def n_dots(self) -> int:
        return len(self.initial_dots)


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 17
    step_penalty: float = 0.25
    dot_reward: float = 1.0
    per_agent_penalty: bool = False  # if True, the -0.25 is charged once per agent
    early_termination: bool = True  # end the episode when the last dot is eaten


@dataclass(frozen=True)
class EnvState:
    positions: np.ndarray  # (n, 2) int
    dots: np.ndarray  # (n_dots,) bool, aligned with GridMap.initial_dots
    t: int


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    team_reward: float
    done: bool
    dots_eaten: int


# --- default map --------------------------------------------------------------


def default_map() -> GridMap:
    h = w = 19
    walls = np.ones((h, w), dtype=bool)
    walls[8:11, 8:11] = False  # center
    walls[0:7, 7:12] = False  # north room
    walls[12:19, 7:12] = False  # south room
    walls[7:12, 0:7] = False  # west room
    walls[7:12, 12:19] = False  # east room
    for cell in [(7, 9), (11, 9), (9, 7), (9, 11)]:
        walls[cell] = False

    spawns = ((7, 9), (9, 7), (9, 11), (11, 9))  # north, west, east, south corridors

    dots: List[Tuple[int, int]] = []
    dots += [(3, 8), (3, 9), (3, 10)]  # north
    dots += [(8, 3), (9, 3), (10, 3)]  # west
    dots += [(8, 15), (9, 15), (10, 15)]  # east
    skip = {(13, 9), (14, 9), (15, 9), (16, 10)}
    dots += [(r, c) for r in range(13, 18) for c in range(7, 12) if (r, c) not in skip]

    return _finish_map(walls, spawns, tuple(dots))


def _finish_map(walls, spawns, dots) -> GridMap:
    room_of = _label_rooms(walls)
    for r, c in spawns:
        if walls[r, c]:
            raise ValueError(f"spawn {(r, c)} is inside a wall")
    for r, c in dots:
        if walls[r, c]:
            raise ValueError(f"dot {(r, c)} is inside a wall")
    if len(set(dots)) != len(dots):
        raise ValueError("duplicate dot cells")
    return GridMap(walls=walls, spawns=tuple(spawns), initial_dots=tuple(dots), room_of=room_of)


def _label_rooms(walls: np.ndarray) -> np.ndarray:
    """Label every floor cell as a room, the center, or a corridor.

    Corridor cells are straight-through bottlenecks: exactly two floor
    neighbours, opposite each other. Removing them splits the floor into the
    center component (nearest the map centroid) and four peripheral rooms,
    named by their bearing from the center. Maps must have this plus shape.
    """
    h, w = walls.shape
    room_of = np.full((h, w), WALL, dtype=np.int64)

    def floor_neighbors(r, c):
        out = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and not walls[rr, cc]:
                out.append((rr, cc))
        return out

    corridor = set()
    for r in range(h):
        for c in range(w):
            if walls[r, c]:
                continue
            nb = floor_neighbors(r, c)
            if len(nb) == 2:
                (r1, c1), (r2, c2) = nb
                if r1 + r2 == 2 * r and c1 + c2 == 2 * c:  # collinear through (r, c)
                    corridor.add((r, c))

    # connected components of floor minus corridors
    comp = -np.ones((h, w), dtype=np.int64)
    n_comp = 0
    for r in range(h):
        for c in range(w):
            if walls[r, c] or (r, c) in corridor or comp[r, c] >= 0:
                continue
            stack = [(r, c)]
            comp[r, c] = n_comp
            while stack:
                cur = stack.pop()
                for nb in floor_neighbors(*cur):
                    if nb not in corridor and comp[nb] < 0:
                        comp[nb] = n_comp
                        stack.append(nb)
            n_comp += 1

    if n_comp != 5:
        raise ValueError(f"expected a plus-shaped map (5 rooms), found {n_comp} room components")

    centroids = []
    for k in range(n_comp):
        cells = np.argwhere(comp == k)
        centroids.append(cells.mean(axis=0))
    mid = np.array([(h - 1) / 2, (w - 1) / 2])
    center_k = int(np.argmin([np.linalg.norm(c - mid) for c in centroids]))

    labels = {center_k: CENTER}
    for k in range(n_comp):
        if k == center_k:
            continue
        dr, dc = centroids[k] - centroids[center_k]
        if abs(dr) >= abs(dc):
            labels[k] = NORTH if dr < 0 else SOUTH
        else:
            labels[k] = WEST if dc < 0 else EAST
    if len(set(labels.values())) != 5:
        raise ValueError("could not assign distinct bearings to the four rooms")

    for r in range(h):
        for c in range(w):
            if (r, c) in corridor:
                room_of[r, c] = CORRIDOR
            elif comp[r, c] >= 0:
                room_of[r, c] = labels[comp[r, c]]
    return room_of


# --- map text format ----------------------------------------------------------


def render_map_text(gmap: GridMap) -> str:
    """'#' wall, '.' floor, 'o' dot, digits = agent spawns."""
    grid = np.where(gmap.walls, "#", ".").astype(object)
    for r, c in gmap.initial_dots:
        grid[r, c] = "o"
    for i, (r, c) in enumerate(gmap.spawns):
        grid[r, c] = str(i)
    return "\n".join("".join(row) for row in grid) + "\n"


def parse_map_text(text: str) -> GridMap:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty map")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise ValueError("ragged map rows")
    h = len(lines)
    walls = np.zeros((h, width), dtype=bool)
    dots: List[Tuple[int, int]] = []
    spawns_by_idx: Dict[int, Tuple[int, int]] = {}
    for r, ln in enumerate(lines):
        for c, ch in enumerate(ln):
            if ch == "#":
                walls[r, c] = True
            elif ch == "o":
                dots.append((r, c))
            elif ch.isdigit():
                spawns_by_idx[int(ch)] = (r, c)
            elif ch != ".":
                raise ValueError(f"unknown map character {ch!r} at {(r, c)}")
    if sorted(spawns_by_idx) != list(range(len(spawns_by_idx))) or not spawns_by_idx:
        raise ValueError("spawn digits must be 0..n-1")
    spawns = tuple(spawns_by_idx[i] for i in range(len(spawns_by_idx)))
    return _finish_map(walls, spawns, tuple(dots))


def load_map(path) -> GridMap:
    with open(path, "r", encoding="utf-8") as f:
        return parse_map_text(f.read())


# --- dynamics -----------------------------------------------------------------


def reset(gmap: GridMap) -> EnvState:
    return EnvState(
        positions=np.array(gmap.spawns, dtype=np.int64),
        dots=np.ones(gmap.n_dots, dtype=bool),
        t=0,
    )


def step(gmap: GridMap, state: EnvState, actions: Sequence[int], cfg: EnvConfig) -> StepOutcome:
    """All agents move simultaneously; moves into walls keep the agent in
    place; any number of agents may share a cell; each dot is consumed once."""
    pos = state.positions
    targets = pos + ACTION_DELTAS[np.asarray(actions, dtype=np.int64)]
    clipped = np.clip(targets, 0, [gmap.height - 1, gmap.width - 1])
    off_grid = np.any(clipped != targets, axis=1)  # the boundary blocks like a wall
    blocked = off_grid | gmap.walls[clipped[:, 0], clipped[:, 1]]
    new_pos = np.where(blocked[:, None], pos, targets)

    dots = state.dots.copy()
    eaten = 0
    occupied = {(int(r), int(c)) for r, c in new_pos}
    for k, cell in enumerate(gmap.initial_dots):
        if dots[k] and cell in occupied:
            dots[k] = False
            eaten += 1

    penalty = cfg.step_penalty * (gmap.n_agents if cfg.per_agent_penalty else 1)
    reward = cfg.dot_reward * eaten - penalty
    t = state.t + 1
    done = t >= cfg.max_steps or (cfg.early_termination and not dots.any())
    return StepOutcome(EnvState(new_pos, dots, t), float(reward), bool(done), eaten)


def _dots_grid(gmap: GridMap, state: EnvState) -> np.ndarray:
    grid = np.zeros((gmap.height, gmap.width), dtype=np.float64)
    for k, (r, c) in enumerate(gmap.initial_dots):
        if state.dots[k]:
            grid[r, c] = 1.0
    return grid


def obs_dim(gmap: GridMap) -> int:
    return 4 * VIEW * VIEW + 3


def observe_all(gmap: GridMap, state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """(n_agents, obs_dim) egocentric observations.

    Four 5x5 channels — walls, live dots, other agents, out-of-bounds — plus
    normalized (row, col) and normalized timestep. All entries in [0, 1].
    """
    h, w = gmap.height, gmap.width
    pad = VIEW_R
    walls_p = np.zeros((h + 2 * pad, w + 2 * pad))
    walls_p[pad : pad + h, pad : pad + w] = gmap.walls
    oob_p = np.ones((h + 2 * pad, w + 2 * pad))
    oob_p[pad : pad + h, pad : pad + w] = 0.0
    dots_p = np.zeros((h + 2 * pad, w + 2 * pad))
    dots_p[pad : pad + h, pad : pad + w] = _dots_grid(gmap, state)
    agents_p = np.zeros((h + 2 * pad, w + 2 * pad))
    for r, c in state.positions:
        agents_p[r + pad, c + pad] = 1.0

    n = gmap.n_agents
    out = np.empty((n, obs_dim(gmap)))
    for i in range(n):
        r, c = state.positions[i]
        sl = (slice(r, r + VIEW), slice(c, c + VIEW))
        others = agents_p[sl].copy()
        others[VIEW_R, VIEW_R] = 0.0  # self never appears in the others channel
        # another agent sharing my cell should still show up
        for j in range(n):
            if j != i and state.positions[j, 0] == r and state.positions[j, 1] == c:
                others[VIEW_R, VIEW_R] = 1.0
        out[i] = np.concatenate(
            [
                walls_p[sl].ravel(),
                dots_p[sl].ravel(),
                np.minimum(others, 1.0).ravel(),
                oob_p[sl].ravel(),
                [r / (h - 1), c / (w - 1), state.t / cfg.max_steps],
            ]
        )
    return out


def observe(gmap: GridMap, state: EnvState, agent: int, cfg: EnvConfig) -> np.ndarray:
    return observe_all(gmap, state, cfg)[agent]


def state_dim(gmap: GridMap) -> int:
    return 2 * gmap.n_agents + gmap.n_dots + 1


def global_state(gmap: GridMap, state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """Fixed-length centralized encoding: normalized agent positions, the dot
    bitmap, and the normalized timestep. Injective on reachable states."""
    h, w = gmap.height, gmap.width
    pos = np.empty(2 * gmap.n_agents)
    pos[0::2] = state.positions[:, 0] / (h - 1)
    pos[1::2] = state.positions[:, 1] / (w - 1)
    return np.concatenate([pos, state.dots.astype(np.float64), [state.t / cfg.max_steps]])


# --- visitation / rendering -----------------------------------------------------


def accumulate_visitation(counter: np.ndarray, state: EnvState) -> None:
    """counter (H, W): +1 per agent at its cell; counter (n, H, W): per agent."""
    if counter.ndim == 2:
        for r, c in state.positions:
            counter[r, c] += 1
    else:
        for i, (r, c) in enumerate(state.positions):
            counter[i, r, c] += 1


def visits_by_room(gmap: GridMap, counter: np.ndarray) -> Dict[str, int]:
    out = {}
    for label, name in ROOM_NAMES.items():
        out[name] = int(counter[..., gmap.room_of == label].sum())
    return out


def render_state(gmap: GridMap, state: EnvState) -> str:
    grid = np.where(gmap.walls, "#", ".").astype(object)
    for k, (r, c) in enumerate(gmap.initial_dots):
        if state.dots[k]:
            grid[r, c] = "o"
    for i, (r, c) in enumerate(state.positions):
        grid[r, c] = str(i)
    return "\n".join("".join(row) for row in grid)


# --- scripted optimal plan for the default map ----------------------------------


def scripted_optimal_actions() -> np.ndarray:
    """(4, 17) action table realizing the best-class strategy on the default
    map: agents 0 and 2 clear their rooms, agent 3 sweeps the near south block,
    agent 1 abandons the west room and sweeps the far south block."""
    plans = {
        0: "up up up up left right right".split() + ["stay"] * 10,
        1: "right right down down down down down down down left left down right right right right".split() + ["stay"],
        2: "right right right right up down down".split() + ["stay"] * 10,
        3: "down down left left down down right up right down right up up right down down down".split(),
    }
    name_to_idx = {n: k for k, n in enumerate(ACTION_NAMES)}
    table = np.full((4, 17), STAY, dtype=np.int64)
    for i, moves in plans.items():
        assert len(moves) == 17
        table[i] = [name_to_idx[m] for m in moves]
    return table


def rollout_actions(gmap: GridMap, actions_table: np.ndarray, cfg: EnvConfig) -> Tuple[float, EnvState, List[EnvState]]:
    """Run a fixed action table; returns (undiscounted return, final state, trajectory)."""
    state = reset(gmap)
    states = [state]
    total = 0.0
    for t in range(actions_table.shape[1]):
        out = step(gmap, state, actions_table[:, t], cfg)
        total += out.team_reward
        state = out.next_state
        states.append(state)
        if out.done:
            break
    return total, state, states

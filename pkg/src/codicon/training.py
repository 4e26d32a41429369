"""The full training loop, plus run-directory bookkeeping.

Per iteration: collect a fresh on-policy batch, take one clipped-surrogate
policy step on the hybrid advantages, give the ranking net its two updates
(descent on the ranking loss, then ascent along the meta-gradient of the
extrinsic objective through the policy step just taken), and refresh the
critics last so both eta steps saw the values the policy step actually used.
The baseline and the ablations run this exact loop — they only change
coefficients (and whether the ranking net trains at all).

Each run gets a fresh directory (never overwriting an existing one) holding
the effective config, a version stamp, metrics.csv / timings.csv /
intrinsic_trace.csv, the cumulative visitation heatmap, a state/reward dump,
and the final parameters. metrics.csv contains only deterministic values so
identical (config, seed) pairs produce byte-identical files; wall-clock
times live in timings.csv.
"""

from __future__ import annotations

import csv
import logging
import subprocess
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__, pacmen
from .config import RunConfig, config_to_ini
from .evaluate import dump_state_rewards
from .mappo import (
    Agents,
    CriticOpt,
    add_advantages,
    collect_trajectories,
    create_agents,
    critic_update,
    ppo_policy_update,
)
from .metagrad import extrinsic_policy_grad, meta_gradient, update_eta_meta
from .params_io import bundle_from_training, save_params
from .ranking import RankingModule, update_eta_rank
from .seeding import EPISODE, META, RANKING_INIT, TARGETS, stream

log = logging.getLogger(__name__)

METRICS_HEADER = (
    ["iteration", "episodes", "mean_return", "max_return", "mean_length"]
    + ["dots_north", "dots_south", "dots_east", "dots_west"]
    + [f"mean_in_{i}" for i in range(4)]
    + ["rank_loss", "meta_grad_norm", "mean_entropy"]
)


class TrainingDiverged(RuntimeError):
    """Raised after non-finite numbers appear; a checkpoint was written."""


def prepare_run_dir(root: Path, name: str) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    cand = root / name
    k = 0
    while cand.exists():
        k += 1
        cand = root / f"{name}-{k}"
    cand.mkdir()
    return cand


def _version_stamp() -> str:
    lines = [f"codicon {__version__}"]
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0:
            lines.append(f"commit {rev.stdout.strip()}")
    except OSError:
        pass
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _all_finite(agents: Agents, ranking: RankingModule) -> bool:
    vecs = [p.flat_params() for p in agents.policies]
    vecs += [c.flat_params() for c in agents.hybrid_critics]
    vecs += [agents.ext_critic.flat_params(), ranking.net.flat_params()]
    return all(np.all(np.isfinite(v)) for v in vecs)


def run_training(
    cfg: RunConfig,
    callback: Optional[Callable[[int, Agents, RankingModule], None]] = None,
) -> Path:
    """Train per the config; returns the run directory. Raises
    TrainingDiverged (after writing a checkpoint) if numbers go bad."""
    cfg.validate()
    gmap = pacmen.load_map(cfg.map_path) if cfg.map_path else pacmen.default_map()
    env_cfg = cfg.env_config()
    n = gmap.n_agents

    run_dir = prepare_run_dir(Path(cfg.out), f"{cfg.variant}-s{cfg.seed}")
    (run_dir / "config.ini").write_text(config_to_ini(cfg))
    (run_dir / "version.txt").write_text(_version_stamp())
    (run_dir / "map.txt").write_text(pacmen.render_map_text(gmap))

    agents = create_agents(
        pacmen.obs_dim(gmap), pacmen.state_dim(gmap), pacmen.N_ACTIONS, n,
        cfg.seed, cfg.policy_hidden, cfg.critic_hidden,
    )
    ranking = RankingModule.create(
        pacmen.state_dim(gmap), n, pacmen.N_ACTIONS,
        stream(cfg.seed, RANKING_INIT), stream(cfg.seed, TARGETS),
        cfg.ranking_hidden, cfg.assignment,
    )
    opt = CriticOpt.init(agents)
    visit_total = np.zeros((n, gmap.height, gmap.width))

    metrics_fh = open(run_dir / "metrics.csv", "w", newline="")
    timings_fh = open(run_dir / "timings.csv", "w", newline="")
    trace_fh = open(run_dir / "intrinsic_trace.csv", "w", newline="")
    metrics = csv.writer(metrics_fh)
    timings = csv.writer(timings_fh)
    trace = csv.writer(trace_fh)
    metrics.writerow(METRICS_HEADER)
    timings.writerow(["iteration", "seconds"])
    trace.writerow(["iteration", "step", "agent", "r_in"])

    try:
        for it in range(cfg.iterations):
            t0 = time.perf_counter()
            rngs = [stream(cfg.seed, EPISODE, it, e) for e in range(cfg.episodes_per_iter)]
            batch = collect_trajectories(gmap, env_cfg, agents, ranking, cfg.lam, rngs)
            add_advantages(
                batch, agents, cfg.gamma, cfg.use_gae, cfg.gae_lambda, cfg.normalize_adv
            )
            prev_agents = agents
            agents, ppo_cache = ppo_policy_update(
                agents, batch, cfg.alpha, cfg.clip_eps, cfg.entropy_coef
            )

            rank_loss_val = 0.0
            meta_norm = 0.0
            if cfg.train_eta:
                ranking, rank_loss_val = update_eta_rank(
                    ranking, batch.states, batch.actions, cfg.beta, cfg.beta1, cfg.beta2
                )
                if cfg.fresh_meta_samples:
                    meta_rngs = [
                        stream(cfg.seed, META, it, e) for e in range(cfg.episodes_per_iter)
                    ]
                    meta_batch = collect_trajectories(
                        gmap, env_cfg, agents, ranking, cfg.lam, meta_rngs
                    )
                    add_advantages(
                        meta_batch, agents, cfg.gamma, cfg.use_gae, cfg.gae_lambda,
                        cfg.normalize_adv,
                    )
                    g_ex = extrinsic_policy_grad(agents, meta_batch, cfg.clip_eps)
                else:
                    g_ex = extrinsic_policy_grad(agents, batch, cfg.clip_eps)
                meta = meta_gradient(prev_agents, ppo_cache, batch, ranking, g_ex, cfg.lam)
                meta_norm = float(np.linalg.norm(meta))
                ranking = update_eta_meta(ranking, meta, cfg.beta)

            opt, _ = critic_update(agents, opt, batch, cfg.critic_lr, cfg.critic_epochs)
            visit_total += batch.visitation

            row = (
                [it, (it + 1) * cfg.episodes_per_iter,
                 float(batch.episode_returns.mean()), float(batch.episode_returns.max()),
                 float(batch.episode_lengths.mean())]
                + [float(batch.dots_room_counts[label]) / cfg.episodes_per_iter
                   for label in (pacmen.NORTH, pacmen.SOUTH, pacmen.EAST, pacmen.WEST)]
                + [float(batch.intr_rewards[:, i].mean()) for i in range(n)]
                + [rank_loss_val, meta_norm, float(np.mean(ppo_cache.entropies))]
            )
            healthy = all(np.isfinite(v) for v in row[2:]) and _all_finite(agents, ranking)
            if not healthy:
                save_params(run_dir / "params_diverged.bin", bundle_from_training(agents, ranking))
                raise TrainingDiverged(
                    f"non-finite numbers at iteration {it}; "
                    f"checkpoint in {run_dir / 'params_diverged.bin'}"
                )
            metrics.writerow([_fmt(v) for v in row])
            timings.writerow([it, f"{time.perf_counter() - t0:.6f}"])
            if it % cfg.trace_interval == 0 or it == cfg.iterations - 1:
                first = batch.episode_ids == 0
                for s in np.nonzero(first)[0]:
                    for i in range(n):
                        trace.writerow(
                            [it, int(batch.step_t[s]), i, _fmt(batch.intr_rewards[s, i])]
                        )
            if callback is not None:
                callback(it, agents, ranking)
    finally:
        metrics_fh.close()
        timings_fh.close()
        trace_fh.close()

    save_params(run_dir / "params.bin", bundle_from_training(agents, ranking))
    np.savetxt(run_dir / "heatmap.csv", visit_total.sum(axis=0).astype(np.int64),
               fmt="%d", delimiter=",")
    dump_state_rewards(
        bundle_from_training(agents, ranking), run_dir / "state_reward_dump.csv",
        cfg.episodes_per_iter, cfg.seed, gmap, env_cfg,
    )
    return run_dir

"""Run configuration: one flat record, an INI file format, variant presets.

Precedence: built-in defaults < config file < command-line flags < variant
semantics. The variant is applied last because it *defines* the algorithm
(the baseline is the intrinsic-reward method with the intrinsic weight hard
at zero and the ranking net frozen), so no flag may accidentally turn a
baseline run into something else.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from .pacmen import EnvConfig
from .ranking import ASSIGNMENTS

VARIANTS = ("codicon", "mappo", "no-pri", "no-var", "no-rank")


@dataclass
class RunConfig:
    # run
    variant: str = "codicon"
    seed: int = 0
    iterations: int = 2000
    episodes_per_iter: int = 16
    out: str = "runs"
    # environment
    map_path: Optional[str] = None  # None -> built-in default map
    max_steps: int = 17
    step_penalty: float = 0.25
    dot_reward: float = 1.0
    per_agent_penalty: bool = False
    early_termination: bool = True
    # policy optimization
    alpha: float = 0.08  # policy learning rate
    clip_eps: float = 0.2
    gamma: float = 0.99
    entropy_coef: float = 0.03
    use_gae: bool = False
    gae_lambda: float = 0.95
    normalize_adv: bool = False
    policy_hidden: Tuple[int, ...] = (32, 32)
    # critics
    critic_lr: float = 2e-3
    critic_epochs: int = 3
    critic_hidden: Tuple[int, ...] = (32, 32)
    # intrinsic rewards
    lam: float = 0.1  # weight of the intrinsic term in the hybrid reward
    beta: float = 0.2  # ranking-net learning rate (both update steps)
    beta1: float = 0.1  # target-sequence loss coefficient
    beta2: float = 0.05  # variance-spread loss coefficient
    ranking_hidden: Tuple[int, ...] = (64, 64)
    assignment: str = "identity"
    train_eta: bool = True
    fresh_meta_samples: bool = False
    # logging
    trace_interval: int = 50

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            max_steps=self.max_steps,
            step_penalty=self.step_penalty,
            dot_reward=self.dot_reward,
            per_agent_penalty=self.per_agent_penalty,
            early_termination=self.early_termination,
        )

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        for name in ("alpha", "beta", "critic_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.assignment not in ASSIGNMENTS:
            raise ValueError(f"assignment must be one of {ASSIGNMENTS}")
        for name in ("iterations", "episodes_per_iter", "max_steps", "critic_epochs",
                     "trace_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def apply_variant(cfg: RunConfig) -> None:
    """Enforce what the variant name means, in place."""
    if cfg.variant == "mappo":
        cfg.lam = 0.0
        cfg.train_eta = False
    elif cfg.variant == "no-pri":
        cfg.beta1 = 0.0
    elif cfg.variant == "no-var":
        cfg.beta2 = 0.0
    elif cfg.variant == "no-rank":
        cfg.beta1 = 0.0
        cfg.beta2 = 0.0


# --- INI round-trip -----------------------------------------------------------------

# section -> fields; "lambda" is the file spelling of the lam attribute
_SECTIONS = {
    "run": ["variant", "seed", "iterations", "episodes_per_iter", "out"],
    "env": ["map_path", "max_steps", "step_penalty", "dot_reward",
            "per_agent_penalty", "early_termination"],
    "policy": ["alpha", "clip_eps", "gamma", "entropy_coef", "use_gae",
               "gae_lambda", "normalize_adv", "policy_hidden"],
    "critic": ["critic_lr", "critic_epochs", "critic_hidden"],
    "ranking": ["lam", "beta", "beta1", "beta2", "ranking_hidden", "assignment",
                "train_eta", "fresh_meta_samples"],
    "logging": ["trace_interval"],
}
_FILE_KEYS = {"lam": "lambda"}
_ATTR_KEYS = {v: k for k, v in _FILE_KEYS.items()}


def _parse_value(field: dataclasses.Field, raw: str):
    raw = raw.strip()
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    if field.type in ("bool", bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{field.name}: cannot parse {raw!r} as a boolean")
    if "Tuple" in str(field.type):
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    if "Optional" in str(field.type):
        return raw or None
    return raw


def load_config(path) -> RunConfig:
    """Defaults overlaid with whatever the file sets; unknown keys are errors."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ValueError(f"config file not found: {path}")
    cfg = RunConfig()
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        file_keys = {_FILE_KEYS.get(name, name) for name in _SECTIONS[section]}
        for key, raw in parser.items(section):
            if key not in file_keys:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            attr = _ATTR_KEYS.get(key, key)
            setattr(cfg, attr, _parse_value(fields[attr], raw))
    return cfg


def config_to_ini(cfg: RunConfig) -> str:
    """The effective configuration, as a file that reproduces this run."""
    lines = []
    for section, names in _SECTIONS.items():
        lines.append(f"[{section}]")
        for name in names:
            value = getattr(cfg, name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif value is None:
                value = ""
            lines.append(f"{_FILE_KEYS.get(name, name)} = {value}")
        lines.append("")
    return "\n".join(lines)

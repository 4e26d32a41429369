"""Competitive ranked intrinsic rewards for cooperative multi-agent RL.

A self-contained numpy implementation: a Pac-Men style gridworld, independent
PPO-family policies with centralized critics, a centralized ranking module
that assigns each agent a distinct intrinsic reward, and the constrained
bilevel meta-gradient that trains the ranking module against the team's
extrinsic objective.
"""

__version__ = "0.1.0"

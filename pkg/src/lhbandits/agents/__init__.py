"""Agents: the two doubling Lasso algorithms and three baselines."""

from __future__ import annotations

from .base import (
    Agent,
    Epoch,
    EpochSchedule,
    default_L,
    greedy_action,
    sin_angle,
)
from .doubling import (
    ADLassoAgent,
    ChunkSelection,
    DoublingLassoAgent,
    build_difference_system,
)
from .oracle import OracleAgent
from .pursuit import SWMPAgent, UCBMPAgent, locate_delay
from .sagd import SAGDAgent, alternating_descent, sagd_gradients, sagd_loss

AGENT_KINDS = {
    "doubling_lasso": DoublingLassoAgent,
    "ad_lasso": ADLassoAgent,
    "sa_gd": SAGDAgent,
    "sw_mp": SWMPAgent,
    "ucb_mp": UCBMPAgent,
    "oracle": OracleAgent,
}


def make_agent(spec: dict) -> Agent:
    """Instantiate an agent from a config entry: {'kind', 'name', params...}."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {kind!r}")
    name = spec.pop("name", None)
    try:
        return AGENT_KINDS[kind](name=name, **spec)
    except TypeError as exc:
        raise ValueError(f"bad hyperparameters for {kind}: {exc}") from exc


__all__ = [
    "Agent", "Epoch", "EpochSchedule", "default_L", "greedy_action",
    "sin_angle", "ADLassoAgent", "ChunkSelection", "DoublingLassoAgent",
    "build_difference_system", "OracleAgent", "SWMPAgent", "UCBMPAgent",
    "locate_delay", "SAGDAgent", "alternating_descent", "sagd_gradients",
    "sagd_loss", "AGENT_KINDS", "make_agent",
]

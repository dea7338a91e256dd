"""Harness-internal reference agent that plays the true-parameter greedy."""

from __future__ import annotations

import numpy as np

from .base import Agent

__all__ = ["OracleAgent"]


class OracleAgent(Agent):
    """Plays argmax <x, theta> using the injected ground truth.

    Only the harness may construct this agent; it exists to pin the
    zero-regret baseline in tests and experiment sanity checks.
    """

    kind = "oracle"

    def begin_trial(self, d, K, h, T, seed, theta_oracle=None):
        super().begin_trial(d, K, h, T, seed, theta_oracle)
        if theta_oracle is None:
            raise ValueError("oracle agent requires the injected theta")
        self.theta_hat = np.asarray(theta_oracle, dtype=float)

    def observe(self, t, chosen_context, reward):
        pass

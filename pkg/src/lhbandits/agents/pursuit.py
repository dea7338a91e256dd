"""Matching-pursuit baselines: locate the dominant lag, then regress.

Both agents first find the design block column most correlated with the
rewards. SW-MP refits theta by least squares on that column; UCB-MP runs a
ridge linear-UCB on (lagged chosen context, reward) pairs within the epoch.
"""

from __future__ import annotations

import numpy as np

from ..env import stream_rng
from ..linalg import build_design_rows
from .base import Agent, Epoch, EpochSchedule, greedy_action

__all__ = ["locate_delay", "SWMPAgent", "UCBMPAgent"]


def locate_delay(rows: np.ndarray, r: np.ndarray, d: int) -> int:
    """Lag whose design block column best explains the rewards.

    Scores ||(Xi^k)^T r||_2 / ||Xi^k||_F over block columns k; returns the
    0-based lag (block column k holds the contexts chosen k rounds before
    each reward). Ties resolve to the smallest lag.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValueError("window must contain at least one row")
    if rows.shape[1] % d != 0:
        raise ValueError("row length not divisible by block size")
    if not rows.any():
        raise ValueError("all-zero window")
    n_blocks = rows.shape[1] // d
    scores = np.full(n_blocks, -np.inf)
    for k in range(n_blocks):
        block = rows[:, k * d:(k + 1) * d]
        denom = np.linalg.norm(block)
        if denom > 0:
            scores[k] = np.linalg.norm(block.T @ r) / denom
    return int(np.argmax(scores))


def _least_squares(block: np.ndarray, r: np.ndarray, d: int) -> np.ndarray:
    G = block.T @ block
    try:
        return np.linalg.solve(G, block.T @ r)
    except np.linalg.LinAlgError:
        return np.linalg.solve(G + 1e-8 * np.eye(d), block.T @ r)


class SWMPAgent(Agent):
    """Single-weight matching pursuit: greedy play on a one-lag LS fit."""

    kind = "sw_mp"

    def begin_trial(self, d, K, h, T, seed, theta_oracle=None):
        super().begin_trial(d, K, h, T, seed, theta_oracle)
        self.schedule = EpochSchedule.datarich_tail(h, T)
        self.delay_hat: int | None = None

    def update_epoch(self, epoch: Epoch) -> None:
        d, h = self.d, self.h
        times = np.arange(epoch.start, epoch.end + 1)
        rows = build_design_rows(self.xs, times, h)
        r = self.rewards[times - 1]
        try:
            k = locate_delay(rows, r, d)
        except ValueError:
            self.log_epoch(epoch, status="empty_window", delay=None)
            return
        self.delay_hat = k
        theta = _least_squares(rows[:, k * d:(k + 1) * d], r, d)
        norm = np.linalg.norm(theta)
        if norm > 0:
            self.theta_hat = theta / norm
        self.log_epoch(epoch, status="ok", delay=k, support_size=1)


class UCBMPAgent(Agent):
    """Matching-pursuit delay location plus ridge linear-UCB decisions."""

    kind = "ucb_mp"

    def __init__(self, ridge: float = 1.0, alpha_ucb: float = 1.0,
                 name: str | None = None):
        super().__init__(name)
        self.ridge = ridge
        self.alpha_ucb = alpha_ucb

    def begin_trial(self, d, K, h, T, seed, theta_oracle=None):
        super().begin_trial(d, K, h, T, seed, theta_oracle)
        self.schedule = EpochSchedule.datarich_tail(h, T)
        self.delay_hat: int | None = None
        self._reset_ucb()

    def _reset_ucb(self):
        self._A = self.ridge * np.eye(self.d)
        self._b = np.zeros(self.d)

    def act(self, t: int, contexts: np.ndarray) -> int:
        rng = stream_rng(self.seed, "tie", t)
        if self.delay_hat is None:
            return greedy_action(contexts, self.theta_hat, rng)
        A_inv = np.linalg.inv(self._A)
        theta = A_inv @ self._b
        contexts = np.asarray(contexts)
        widths = np.sqrt(np.einsum("kd,dc,kc->k", contexts, A_inv, contexts))
        scores = contexts @ theta + self.alpha_ucb * widths
        best = np.flatnonzero(scores == scores.max())
        if best.size == 1:
            return int(best[0])
        return int(best[rng.integers(0, best.size)])

    def observe(self, t, chosen_context, reward):
        self.xs[t - 1] = chosen_context
        self.rewards[t - 1] = reward
        if self.delay_hat is not None:
            t_src = t - self.delay_hat  # context that earned this reward
            if t_src >= 1:
                x = self.xs[t_src - 1]
                self._A += np.outer(x, x)
                self._b += x * reward
        epoch = self.schedule.epoch_ending_at(t)
        if epoch is not None:
            self.update_epoch(epoch)

    def update_epoch(self, epoch: Epoch) -> None:
        d, h = self.d, self.h
        times = np.arange(epoch.start, epoch.end + 1)
        rows = build_design_rows(self.xs, times, h)
        r = self.rewards[times - 1]
        try:
            k = locate_delay(rows, r, d)
        except ValueError:
            self.log_epoch(epoch, status="empty_window", delay=None)
            return
        self.delay_hat = k
        self._reset_ucb()
        theta = _least_squares(rows[:, k * d:(k + 1) * d], r, d)
        norm = np.linalg.norm(theta)
        if norm > 0:
            self.theta_hat = theta / norm
        self.log_epoch(epoch, status="ok", delay=k, support_size=1)

"""Shared agent machinery: doubling epoch schedules and the greedy rule.

All agents see the environment only through the contexts offered each round
and the rewards returned for chosen arms; ground truth never enters except
as an optional read-only oracle for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import stream_rng

__all__ = [
    "Epoch",
    "EpochSchedule",
    "default_L",
    "greedy_action",
    "Agent",
    "sin_angle",
]


@dataclass(frozen=True)
class Epoch:
    phase: int      # 1 = initial doubling, 2 = full-horizon doubling
    index: int      # 1-based within its phase
    start: int      # first round of the epoch (1-based, inclusive)
    end: int        # last round of the epoch (inclusive)


@dataclass(frozen=True)
class EpochSchedule:
    """Epoch-end grid for the doubling algorithms.

    datapoor: ends at T_i = 4(2^i - 1)L, epoch i spanning 2^(i+1) L rounds.
    datarich: the datapoor grid while t <= h, then ends at
    (2^(j+1) - 1) h with epoch j spanning 2^j h rounds.
    """

    kind: str
    L: int
    h: int
    boundaries: tuple[int, ...]
    epochs: tuple[Epoch, ...]

    @classmethod
    def datapoor(cls, L: int, T: int, h: int | None = None) -> "EpochSchedule":
        if L < 1:
            raise ValueError("L must be positive")
        epochs = []
        i, end = 1, 4 * L
        while end <= T:
            epochs.append(Epoch(1, i, end - 2 ** (i + 1) * L + 1, end))
            i += 1
            end = 4 * (2**i - 1) * L
        return cls("datapoor", L, h if h is not None else T,
                   tuple(e.end for e in epochs), tuple(epochs))

    @classmethod
    def datarich(cls, L: int, h: int, T: int) -> "EpochSchedule":
        first = cls.datapoor(L, min(T, h))
        epochs = list(first.epochs) + list(cls.datarich_tail(h, T).epochs)
        return cls("datarich", L, h, tuple(e.end for e in epochs),
                   tuple(epochs))

    @classmethod
    def datarich_tail(cls, h: int, T: int) -> "EpochSchedule":
        """Only the full-horizon doubling grid: the shared epoch structure
        every estimator in the data-rich comparison refits on."""
        epochs = []
        j, end = 1, 3 * h
        while end <= T:
            epochs.append(Epoch(2, j, end - 2**j * h + 1, end))
            j += 1
            end = (2 ** (j + 1) - 1) * h
        return cls("datarich_tail", 0, h, tuple(e.end for e in epochs),
                   tuple(epochs))

    def epoch_ending_at(self, t: int) -> Epoch | None:
        for e in self.epochs:
            if e.end == t:
                return e
        return None

    @property
    def max_initial_index(self) -> int:
        """Largest phase-1 epoch index on the grid."""
        return max((e.index for e in self.epochs if e.phase == 1), default=0)


def default_L(s: int, d: int, h: int) -> int:
    """Practical doubling parameter: s*d clamped to [s, h//8].

    The theory-rate choice exceeds h at desk scale, so the product s*d is
    used instead; when s > h//8 the upper clamp wins and the initial phase
    cannot cover the support.
    """
    return int(max(1, np.clip(s * d, s, max(1, h // 8))))


def greedy_action(contexts: np.ndarray, theta_hat: np.ndarray, rng) -> int:
    """Arm maximizing <x, theta_hat>; exact ties broken uniformly."""
    scores = np.asarray(contexts) @ theta_hat
    best = np.flatnonzero(scores == scores.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(0, best.size)])


def sin_angle(u: np.ndarray, v: np.ndarray) -> float:
    """|sin| of the principal angle between the lines spanned by u and v.

    Computed as the rejection norm of one unit vector against the other,
    which stays accurate near zero where sqrt(1 - cos^2) loses half the
    significant digits.
    """
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 1.0
    uu, vv = u / nu, v / nv
    if uu @ vv < 0:
        vv = -vv
    return min(1.0, float(np.linalg.norm(uu - (uu @ vv) * vv)))


class Agent:
    """Round-driven agent with a doubling-epoch update hook.

    Subclasses set up ``self.schedule`` in :meth:`begin_trial` and implement
    :meth:`update_epoch`. History (chosen contexts and rewards) is recorded
    here since every estimator consumes it.
    """

    kind = "agent"

    def __init__(self, name: str | None = None):
        self.name = name or self.kind

    def begin_trial(self, d: int, K: int, h: int, T: int, seed: int,
                    theta_oracle: np.ndarray | None = None) -> None:
        self.d, self.K, self.h, self.T = d, K, h, T
        self.seed = seed
        self.theta_oracle = theta_oracle
        self.theta_hat = np.zeros(d)
        self.xs = np.zeros((T, d))       # xs[t-1] = context chosen at round t
        self.rewards = np.zeros(T)
        self.schedule: EpochSchedule | None = None
        self.epoch_log: list[dict] = []

    def act(self, t: int, contexts: np.ndarray) -> int:
        rng = stream_rng(self.seed, "tie", t)
        return greedy_action(contexts, self.theta_hat, rng)

    def observe(self, t: int, chosen_context: np.ndarray, reward: float) -> None:
        self.xs[t - 1] = chosen_context
        self.rewards[t - 1] = reward
        if self.schedule is not None:
            epoch = self.schedule.epoch_ending_at(t)
            if epoch is not None:
                self.update_epoch(epoch)

    def update_epoch(self, epoch: Epoch) -> None:  # pragma: no cover
        raise NotImplementedError

    def log_epoch(self, epoch: Epoch, **extra) -> None:
        record = {
            "phase": epoch.phase,
            "epoch": epoch.index,
            "t_end": epoch.end,
            "support_size": None,
            **extra,
        }
        if self.theta_oracle is not None:
            record["sin_theta"] = sin_angle(self.theta_hat, self.theta_oracle)
        self.epoch_log.append(record)

    def diagnostics(self) -> list[dict]:
        return list(self.epoch_log)

"""The two doubling Lasso agents.

The data-poor agent learns a growing prefix of phi = w (kron) theta from
differenced second/fourth epoch quarters; the adaptive agent switches to
full-vector estimation on the later half of each epoch once t exceeds the
reward horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grouplasso import LassoProblem, lambda_datapoor, lambda_datarich, solve
from ..linalg import (
    DENSE_ROW_LIMIT,
    DifferencedToeplitzOperator,
    PowerIterationError,
    ToeplitzOperator,
    block_l20,
    build_design_rows,
    matricize,
    top_singular_triplet,
)
from .base import Agent, Epoch, EpochSchedule

__all__ = ["ChunkSelection", "build_difference_system",
           "DoublingLassoAgent", "ADLassoAgent"]


@dataclass(frozen=True)
class ChunkSelection:
    """Second- and fourth-quarter row times of one initial-phase epoch."""

    epoch: int
    quarter2: range
    quarter4: range

    @classmethod
    def for_epoch(cls, epoch: Epoch, L: int) -> "ChunkSelection":
        if epoch.phase != 1:
            raise ValueError("chunking applies to initial-phase epochs only")
        m = 2 ** (epoch.index - 1) * L
        start = epoch.start - 1
        q2 = range(start + m + 1, start + 2 * m + 1)
        q4 = range(start + 3 * m + 1, start + 4 * m + 1)
        return cls(epoch.index, q2, q4)

    @classmethod
    def holdout_for_epoch(cls, epoch: Epoch, L: int) -> "ChunkSelection":
        """The complementary quarter pair (first and third), used only to
        score candidate estimates on rows the fit never saw."""
        m = 2 ** (epoch.index - 1) * L
        start = epoch.start - 1
        q1 = range(start + 1, start + m + 1)
        q3 = range(start + 2 * m + 1, start + 3 * m + 1)
        return cls(epoch.index, q1, q3)


def build_difference_system(
    xs: np.ndarray, chunks: ChunkSelection, rewards: np.ndarray, n_blocks: int
):
    """Differenced design and response over the selected quarters.

    Returns (barP, barr) with one row per quarter position: the fourth-
    quarter design row minus the second-quarter row, truncated to the first
    ``n_blocks`` lag blocks, and the matching reward difference. barP is a
    dense array up to :data:`DENSE_ROW_LIMIT` entries per row and an
    implicit operator beyond that.
    """
    t2 = np.asarray(chunks.quarter2)
    t4 = np.asarray(chunks.quarter4)
    if t2.size != t4.size:
        raise ValueError("quarter lengths differ")
    if t4.max() > xs.shape[0] or t4.max() > rewards.shape[0]:
        raise ValueError("history does not cover the selected chunks")
    d = xs.shape[1]
    if n_blocks * d <= DENSE_ROW_LIMIT:
        barP = (build_design_rows(xs, t4, n_blocks)
                - build_design_rows(xs, t2, n_blocks))
    else:
        barP = DifferencedToeplitzOperator(xs, t4, t2, n_blocks)
    barr = rewards[t4 - 1] - rewards[t2 - 1]
    return barP, barr


def _full_design(xs: np.ndarray, times, n_blocks: int):
    if n_blocks * xs.shape[1] <= DENSE_ROW_LIMIT:
        return build_design_rows(xs, times, n_blocks)
    return ToeplitzOperator(xs, times, n_blocks)


def _apply(design, x: np.ndarray) -> np.ndarray:
    return design @ x if isinstance(design, np.ndarray) else design.matvec(x)


def _debias(problem, phi: np.ndarray, d: int) -> np.ndarray:
    """Least-squares refit on the selected block support.

    The penalty shrinks active blocks toward zero, which rotates the
    extracted direction when the sample Gram is anisotropic. Refitting
    removes that bias, but only when the support is comfortably
    overdetermined (two rows per refit column); otherwise the shrunk
    estimate is kept as is.
    """
    norms = np.linalg.norm(phi.reshape(-1, d), axis=1)
    blocks = np.flatnonzero(norms > 0)
    A = problem.design
    m = A.shape[0]
    if blocks.size * d * 2 > m:
        return phi
    if isinstance(A, np.ndarray):
        cols = (blocks[:, None] * d + np.arange(d)).ravel()
        sub = A[:, cols]
    else:
        cols = (blocks[:, None] * d + np.arange(d)).ravel()
        sub = A.gather_blocks(blocks)
    fit, *_ = np.linalg.lstsq(sub, problem.response, rcond=None)
    out = np.zeros_like(phi)
    out[cols] = fit
    return out


def _oriented_theta(phi_flat: np.ndarray, d: int,
                    tol: float, max_iter: int) -> np.ndarray:
    """Top left singular direction of the matricized estimate.

    The global sign is chosen so the right factor (the lag-weight estimate,
    nonnegative in truth) has nonnegative total mass.
    """
    trip = top_singular_triplet(matricize(phi_flat, d), tol=tol,
                                max_iter=max_iter)
    theta = trip.left if float(trip.right.sum()) >= 0 else -trip.left
    return theta


class DoublingLassoAgent(Agent):
    """Greedy play with epoch-end prefix estimation of phi (data-poor)."""

    kind = "doubling_lasso"

    def __init__(self, L: int | None = None, c: float = 1.0,
                 gamma: float = 0.05, solver_tol: float = 1e-8,
                 solver_max_iter: int = 5000, warm_start: bool = True,
                 name: str | None = None):
        super().__init__(name)
        self.L = L
        self.c = c
        self.gamma = gamma
        self.solver_tol = solver_tol
        self.solver_max_iter = solver_max_iter
        self.warm_start = warm_start

    def begin_trial(self, d, K, h, T, seed, theta_oracle=None):
        super().begin_trial(d, K, h, T, seed, theta_oracle)
        if self.L is None:
            raise ValueError("L must be set before the trial starts")
        self.schedule = EpochSchedule.datapoor(self.L, T, h)
        self.phi_hat = np.zeros(0)

    def update_epoch(self, epoch: Epoch) -> None:
        self._difference_lasso_update(epoch)

    def _difference_lasso_update(self, epoch: Epoch) -> None:
        i, L, d = epoch.index, self.L, self.d
        m = 2 ** (i - 1) * L
        n_blocks = min(m, self.h)
        chunks = ChunkSelection.for_epoch(epoch, L)
        barP, barr = build_difference_system(
            self.xs, chunks, self.rewards, n_blocks
        )
        lam = lambda_datapoor(i, L, d, self.gamma, c=self.c)
        problem = LassoProblem(
            design=barP, response=barr, lam=lam, block_size=d,
            scale=1.0 / (2.0 * m),
        )
        x0 = None
        if self.warm_start and self.phi_hat.size:
            x0 = np.zeros(n_blocks * d)
            x0[: min(self.phi_hat.size, x0.size)] = \
                self.phi_hat[: min(self.phi_hat.size, x0.size)]
        holdout = ChunkSelection.holdout_for_epoch(epoch, L)
        vP, vr = build_difference_system(self.xs, holdout, self.rewards,
                                         n_blocks)
        self._finish_epoch(epoch, problem, x0, lam, vP, vr)

    def _finish_epoch(self, epoch, problem, x0, lam, val_design,
                      val_response) -> None:
        d = self.d
        sol = solve(problem, tol=self.solver_tol,
                    max_iter=self.solver_max_iter, x0=x0)
        support = block_l20(sol.phi_hat.data, d)
        status = "ok"
        if not sol.converged:
            status = "lasso_not_converged"  # keep the previous direction
        elif support == 0:
            status = "zero_estimate"
        else:
            phi = _debias(problem, sol.phi_hat.data, d)
            if phi is not sol.phi_hat.data:
                status = "debiased"
            if not self._improves_holdout(phi, val_design, val_response):
                status = "rejected_by_holdout"
            else:
                self.phi_hat = phi.copy()
                try:
                    self.theta_hat = _oriented_theta(
                        self.phi_hat, d, self.solver_tol,
                        self.solver_max_iter,
                    )
                except PowerIterationError:
                    status = "svd_not_converged"
        self.log_epoch(
            epoch, lam=lam, lasso_iterations=sol.iterations,
            support_size=support, status=status,
        )

    def _improves_holdout(self, phi: np.ndarray, val_design: np.ndarray,
                          val_response: np.ndarray) -> bool:
        """Adopt a candidate only if it predicts held-out rows at least as
        well as the incumbent estimate; at desk-scale L an epoch can be too
        short to identify anything, and its interpolating solution would
        otherwise poison the next epoch's greedy data."""
        n_cols = val_design.shape[1]
        incumbent = np.zeros(n_cols)
        k = min(self.phi_hat.size, n_cols)
        incumbent[:k] = self.phi_hat[:k]
        cand = np.zeros(n_cols)
        k = min(phi.size, n_cols)
        cand[:k] = phi[:k]
        err_new = np.linalg.norm(_apply(val_design, cand) - val_response)
        err_old = np.linalg.norm(_apply(val_design, incumbent) - val_response)
        return bool(err_new <= err_old)


class ADLassoAgent(DoublingLassoAgent):
    """Adaptive doubling Lasso: initial-phase prefix learning while t <= h,
    then full-vector Lasso on the later half of geometrically growing
    epochs."""

    kind = "ad_lasso"

    def __init__(self, L: int | None = None, c: float = 1.0,
                 gamma: float = 0.05, lambda_scale: float = 1.0,
                 solver_tol: float = 1e-8, solver_max_iter: int = 5000,
                 warm_start: bool = True, name: str | None = None):
        super().__init__(L, c, gamma, solver_tol, solver_max_iter,
                         warm_start, name)
        self.lambda_scale = lambda_scale

    def begin_trial(self, d, K, h, T, seed, theta_oracle=None):
        super().begin_trial(d, K, h, T, seed, theta_oracle)
        self.schedule = EpochSchedule.datarich(self.L, h, T)

    def update_epoch(self, epoch: Epoch) -> None:
        if epoch.phase == 1:
            self._difference_lasso_update(epoch)
            return
        j, d, h = epoch.index, self.d, self.h
        m = 2 ** (j - 1) * h
        times = np.arange(epoch.end - m + 1, epoch.end + 1)
        design = _full_design(self.xs, times, h)
        lam = self.lambda_scale * lambda_datarich(j, h, d, self.gamma)
        problem = LassoProblem(
            design=design, response=self.rewards[times - 1], lam=lam,
            block_size=d, scale=1.0 / (2.0 * m),
        )
        x0 = None
        if self.warm_start and self.phi_hat.size:
            x0 = np.zeros(h * d)
            x0[: min(self.phi_hat.size, x0.size)] = \
                self.phi_hat[: min(self.phi_hat.size, x0.size)]
        val_times = np.arange(epoch.start, epoch.start + m)
        self._finish_epoch(
            epoch, problem, x0, lam,
            _full_design(self.xs, val_times, h),
            self.rewards[val_times - 1],
        )

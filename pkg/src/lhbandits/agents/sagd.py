"""Sparse-alternating gradient descent baseline.

Fits the bilinear model r_t ~ theta^T Z_t w per epoch by joint gradient
steps on theta and w, then hard-thresholds w to its s largest entries.
"""

from __future__ import annotations

import numpy as np

from ..linalg import build_design_rows
from .base import Agent, Epoch, EpochSchedule
from .pursuit import locate_delay

__all__ = ["sagd_loss", "sagd_gradients", "alternating_descent", "SAGDAgent"]


def sagd_loss(rows3: np.ndarray, r: np.ndarray, theta: np.ndarray,
              w: np.ndarray) -> float:
    """Sum of squared residuals of the bilinear fit.

    ``rows3`` has shape (m, h, d): lag-stacked chosen contexts per row.
    """
    resid = r - (rows3 @ theta) @ w
    return float(resid @ resid)


def sagd_gradients(rows3: np.ndarray, r: np.ndarray, theta: np.ndarray,
                   w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of :func:`sagd_loss` in theta and w."""
    M = rows3 @ theta                      # (m, h): <xi_{t-i}, theta>
    Rw = np.einsum("thd,h->td", rows3, w)  # (m, d): Z_t w
    resid = r - M @ w
    return -2.0 * (Rw.T @ resid), -2.0 * (M.T @ resid)


def alternating_descent(
    rows3: np.ndarray, r: np.ndarray, theta0: np.ndarray, w0: np.ndarray,
    beta: float = 0.01, eps: float = 1e-6, max_steps: int = 2000,
) -> tuple[np.ndarray, np.ndarray, float, dict]:
    """Joint gradient descent on (theta, w) with a divergence guard.

    Steps use the row-averaged gradient so ``beta`` is scale-free in the
    number of rows. If the loss increases for 50 consecutive steps, beta is
    halved and the descent restarts once; a second divergence flags the run.
    """
    m = max(1, rows3.shape[0])
    diag = {"steps": 0, "restarted": False, "diverged": False}

    def run(beta_run):
        theta, w = theta0.copy(), w0.copy()
        f = sagd_loss(rows3, r, theta, w)
        best = (f, theta.copy(), w.copy())
        rises = 0
        with np.errstate(over="ignore", invalid="ignore"):
            for step in range(1, max_steps + 1):
                if f <= eps:
                    break
                g_theta, g_w = sagd_gradients(rows3, r, theta, w)
                theta = theta - beta_run * g_theta / m
                w = w - beta_run * g_w / m
                f_new = sagd_loss(rows3, r, theta, w)
                diag["steps"] = step
                if not np.isfinite(f_new):
                    return best, False
                rises = rises + 1 if f_new > f else 0
                f = f_new
                if f < best[0]:
                    best = (f, theta.copy(), w.copy())
                if rises >= 50:
                    return best, False
        return best, True

    best, ok = run(beta)
    if not ok:
        diag["restarted"] = True
        best2, ok = run(beta / 2.0)
        if best2[0] < best[0]:
            best = best2
        if not ok:
            diag["diverged"] = True
    f, theta, w = best
    return theta, w, f, diag


def project_sparse(w: np.ndarray, s: int) -> np.ndarray:
    """Keep the s entries of largest magnitude, zero the rest."""
    out = np.zeros_like(w)
    if s >= w.size:
        return w.copy()
    keep = np.argpartition(np.abs(w), -s)[-s:]
    out[keep] = w[keep]
    return out


class SAGDAgent(Agent):
    """Rank-1-then-sparse estimation by alternating gradient descent.

    Plays greedily on the current theta estimate; refits at the ends of the
    same doubling epochs the adaptive Lasso uses. The sparsity level s is a
    given hyperparameter, matching the information the other estimators
    receive about the problem class.
    """

    kind = "sa_gd"

    def __init__(self, s: int, beta: float = 0.01, eps: float = 1e-6,
                 max_steps: int = 2000, name: str | None = None):
        super().__init__(name)
        self.s = s
        self.beta = beta
        self.eps = eps
        self.max_steps = max_steps

    def begin_trial(self, d, K, h, T, seed, theta_oracle=None):
        super().begin_trial(d, K, h, T, seed, theta_oracle)
        self.schedule = EpochSchedule.datarich_tail(h, T)
        self._theta_fit: np.ndarray | None = None
        self._w_fit: np.ndarray | None = None

    def update_epoch(self, epoch: Epoch) -> None:
        d, h = self.d, self.h
        times = np.arange(epoch.start, epoch.end + 1)
        rows = build_design_rows(self.xs, times, h)
        rows3 = rows.reshape(times.size, h, d)
        r = self.rewards[times - 1]

        if self._theta_fit is None:
            theta0, w0 = self._spectral_init(rows, r)
        else:
            theta0, w0 = self._theta_fit.copy(), self._w_fit.copy()

        theta, w, loss, diag = alternating_descent(
            rows3, r, theta0, w0, beta=self.beta, eps=self.eps,
            max_steps=self.max_steps,
        )
        w = project_sparse(w, self.s)
        if w.sum() < 0:  # true lag weights are nonnegative
            theta, w = -theta, -w
        self._theta_fit, self._w_fit = theta, w
        norm = np.linalg.norm(theta)
        status = "diverged" if diag["diverged"] else "ok"
        if norm > 0:
            self.theta_hat = theta / norm
        else:
            status = "zero_theta"
        self.log_epoch(
            epoch, loss=loss, gd_steps=diag["steps"],
            support_size=int((w != 0).sum()), status=status,
        )

    def _spectral_init(self, rows: np.ndarray, r: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray]:
        """Seed (theta, w) from the best single-lag least-squares fit."""
        d, h = self.d, self.h
        try:
            k = locate_delay(rows, r, d)
        except ValueError:
            return np.zeros(d), np.zeros(h)
        block = rows[:, k * d:(k + 1) * d]
        G = block.T @ block
        try:
            theta = np.linalg.solve(G, block.T @ r)
        except np.linalg.LinAlgError:
            theta = np.linalg.solve(G + 1e-8 * np.eye(d), block.T @ r)
        w = np.zeros(h)
        w[k] = 1.0
        return theta, w

"""Dense block-vector utilities, power-iteration SVD, and Toeplitz row products.

Everything here is pure: no hidden state, safe to share read-only across
threads. Vectors and matrices are plain float ndarrays; block structure is
carried explicitly as a block size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BlockVector",
    "Rank1Factorization",
    "PowerIterationError",
    "block_l21",
    "block_l2inf",
    "block_l20",
    "block_norms",
    "matricize",
    "vectorize",
    "top_singular_triplet",
    "sym_top_eigval",
    "toeplitz_matvec",
    "build_design_rows",
    "ToeplitzOperator",
    "DifferencedToeplitzOperator",
    "DENSE_ROW_LIMIT",
]

# Entries-per-row threshold below which design matrices are materialized
# densely; above it the implicit Toeplitz product is used.
DENSE_ROW_LIMIT = 10_000


def _as_blocks(x: np.ndarray, block_size: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if block_size < 1 or x.size % block_size != 0:
        raise ValueError(
            f"vector length {x.size} not divisible by block size {block_size}"
        )
    return x.reshape(-1, block_size)


def block_norms(x: np.ndarray, block_size: int) -> np.ndarray:
    """Per-block Euclidean norms of a (n*block_size,) vector."""
    return np.linalg.norm(_as_blocks(x, block_size), axis=1)


def block_l21(x: np.ndarray, block_size: int) -> float:
    """Sum of per-block l2 norms."""
    return float(block_norms(x, block_size).sum())


def block_l2inf(x: np.ndarray, block_size: int) -> float:
    """Largest per-block l2 norm."""
    return float(block_norms(x, block_size).max())


def block_l20(x: np.ndarray, block_size: int, tol: float = 0.0) -> int:
    """Number of blocks with l2 norm strictly greater than ``tol``."""
    return int((block_norms(x, block_size) > tol).sum())


@dataclass(frozen=True)
class BlockVector:
    """A flat vector with an explicit block partition of equal size."""

    data: np.ndarray
    block_size: int

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=float))
        _as_blocks(self.data, self.block_size)  # validates divisibility

    @property
    def n_blocks(self) -> int:
        return self.data.size // self.block_size

    def blocks(self) -> np.ndarray:
        """(n_blocks, block_size) view of the data."""
        return self.data.reshape(self.n_blocks, self.block_size)

    def norm21(self) -> float:
        return block_l21(self.data, self.block_size)

    def norm2inf(self) -> float:
        return block_l2inf(self.data, self.block_size)

    def norm20(self, tol: float = 0.0) -> int:
        return block_l20(self.data, self.block_size, tol)


@dataclass(frozen=True)
class Rank1Factorization:
    """Unit left vector, scale, and right vector of a rank-1 approximation.

    Sign convention: the first coordinate of ``left`` with magnitude above
    1e-12 is positive, which makes extraction deterministic.
    """

    left: np.ndarray
    sigma: float
    right: np.ndarray


class PowerIterationError(RuntimeError):
    """Power iteration failed; ``last`` carries the final iterate."""

    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


def matricize(phi, block_size: int | None = None) -> np.ndarray:
    """Reshape a block vector into the matrix whose i-th column is block i.

    For phi = w (Kronecker) theta with blocks of size d, the result equals
    theta w^T.
    """
    if isinstance(phi, BlockVector):
        data, block_size = phi.data, phi.block_size
    else:
        if block_size is None:
            raise ValueError("block_size required for raw arrays")
        data = np.asarray(phi, dtype=float)
    return _as_blocks(data, block_size).T.copy()


def vectorize(mat: np.ndarray) -> BlockVector:
    """Inverse of :func:`matricize`: stack columns into one block vector."""
    mat = np.asarray(mat, dtype=float)
    return BlockVector(mat.T.reshape(-1), mat.shape[0])


def _fix_sign(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = np.flatnonzero(np.abs(u) > 1e-12)
    if nz.size and u[nz[0]] < 0:
        return -u, -v
    return u, v


def sym_top_eigval(
    matvec,
    n: int,
    tol: float = 1e-10,
    max_iter: int = 1000,
    seed: int = 0x5EED,
    return_vector: bool = False,
):
    """Largest eigenvalue of a PSD operator given by ``matvec`` on R^n.

    Plain power iteration with a deterministic pseudo-random start; raises
    :class:`PowerIterationError` when the relative eigen-residual has not
    dropped below ``tol`` within ``max_iter`` steps.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        lam = float(v @ w)
        resid = np.linalg.norm(w - lam * v)
        if resid <= tol * max(abs(lam), 1e-300):
            break
        nw = np.linalg.norm(w)
        if nw == 0.0:  # v is in the null space; operator may be zero there
            lam = 0.0
            break
        v = w / nw
    else:
        raise PowerIterationError("power iteration did not converge", last=v)
    if return_vector:
        return lam, v
    return lam


def top_singular_triplet(
    M: np.ndarray, tol: float = 1e-10, max_iter: int = 1000
) -> Rank1Factorization:
    """Top singular triplet of M by power iteration on the small Gram matrix.

    Returns (left, sigma, right) with M ~ sigma * left right^T at the top
    singular direction; left is unit norm with the deterministic sign
    convention of :class:`Rank1Factorization`.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.isfinite(M).all():
        raise ValueError("non-finite input")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not M.any():
        raise ValueError("degenerate matrix")
    d, k = M.shape
    if d <= k:
        G = M @ M.T
        lam, u = sym_top_eigval(G.__matmul__, d, tol=tol, max_iter=max_iter,
                                return_vector=True)
        sigma = float(np.sqrt(max(lam, 0.0)))
        v = M.T @ u / sigma if sigma > 0 else np.zeros(k)
    else:
        G = M.T @ M
        lam, v = sym_top_eigval(G.__matmul__, k, tol=tol, max_iter=max_iter,
                                return_vector=True)
        sigma = float(np.sqrt(max(lam, 0.0)))
        u = M @ v / sigma if sigma > 0 else np.zeros(d)
    u, v = _fix_sign(u, v)
    return Rank1Factorization(left=u, sigma=sigma, right=v)


def _gather_rows(contexts: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Rows contexts[t-1] for 1-based times t, zero for t <= 0."""
    out = np.zeros((times.size, contexts.shape[1]))
    valid = times >= 1
    out[valid] = contexts[times[valid] - 1]
    return out


def build_design_rows(
    contexts: np.ndarray, row_times, n_blocks: int
) -> np.ndarray:
    """Dense Toeplitz design rows over chosen contexts.

    Row for 1-based time t is [xi_t, xi_{t-1}, ..., xi_{t-n_blocks+1}]
    concatenated, with xi_j = 0 for j <= 0.
    """
    contexts = np.asarray(contexts, dtype=float)
    times = np.asarray(row_times, dtype=int)
    d = contexts.shape[1]
    out = np.empty((times.size, n_blocks * d))
    for i in range(n_blocks):
        out[:, i * d:(i + 1) * d] = _gather_rows(contexts, times - i)
    return out


def toeplitz_matvec(contexts: np.ndarray, phi, row_times) -> np.ndarray:
    """Product of the implicit Toeplitz design with a block vector.

    Entry for time t equals sum_i <xi_{t-i}, phi_block_i> without
    materializing the design matrix.
    """
    if isinstance(phi, BlockVector):
        blocks = phi.blocks()
    else:
        raise TypeError("phi must be a BlockVector")
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim != 2 or contexts.shape[1] != phi.block_size:
        raise ValueError(
            f"context dimension {contexts.shape} does not match block size "
            f"{phi.block_size}"
        )
    times = np.asarray(row_times, dtype=int)
    out = np.zeros(times.size)
    for i in range(phi.n_blocks):
        out += _gather_rows(contexts, times - i) @ blocks[i]
    return out


class ToeplitzOperator:
    """Implicit m x (n_blocks*d) Toeplitz design over a context stream.

    Provides the matvec/rmatvec pair the Lasso solver needs when a dense
    materialization would exceed :data:`DENSE_ROW_LIMIT` entries per row.
    """

    def __init__(self, contexts: np.ndarray, row_times, n_blocks: int):
        self.contexts = np.asarray(contexts, dtype=float)
        self.times = np.asarray(row_times, dtype=int)
        self.n_blocks = int(n_blocks)
        self.d = self.contexts.shape[1]
        self.shape = (self.times.size, self.n_blocks * self.d)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return toeplitz_matvec(
            self.contexts, BlockVector(x, self.d), self.times
        )

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.empty(self.shape[1])
        for i in range(self.n_blocks):
            rows = _gather_rows(self.contexts, self.times - i)
            out[i * self.d:(i + 1) * self.d] = rows.T @ y
        return out

    def gather_blocks(self, blocks) -> np.ndarray:
        """Materialize only the selected lag blocks as dense columns."""
        out = np.empty((self.shape[0], len(blocks) * self.d))
        for j, b in enumerate(blocks):
            out[:, j * self.d:(j + 1) * self.d] = _gather_rows(
                self.contexts, self.times - int(b)
            )
        return out


class DifferencedToeplitzOperator:
    """Row-wise difference of two implicit Toeplitz designs.

    Entry j is the design row at ``times_plus[j]`` minus the row at
    ``times_minus[j]``; the epoch chunk systems use this without ever
    materializing either side.
    """

    def __init__(self, contexts: np.ndarray, times_plus, times_minus,
                 n_blocks: int):
        self._plus = ToeplitzOperator(contexts, times_plus, n_blocks)
        self._minus = ToeplitzOperator(contexts, times_minus, n_blocks)
        if self._plus.shape != self._minus.shape:
            raise ValueError("time ranges must have equal length")
        self.shape = self._plus.shape

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._plus.matvec(x) - self._minus.matvec(x)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self._plus.rmatvec(y) - self._minus.rmatvec(y)

    def gather_blocks(self, blocks) -> np.ndarray:
        return self._plus.gather_blocks(blocks) \
            - self._minus.gather_blocks(blocks)

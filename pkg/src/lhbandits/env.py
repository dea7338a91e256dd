"""Bandit environment with sparse long-horizon reward filtering.

The reward at round t is <y_t, theta> + eps_t where y_t is the weighted sum
of the last h chosen contexts (zero before round 1). Pseudo-regret per round
is ||w||_1 times the gap to the per-round optimal arm.

All randomness flows through counter-based Philox streams keyed by
(seed, stream, round), so context sampling, noise, and any consumer-side
tie-breaking are mutually independent and reproducible regardless of
execution order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CONTEXT_DISTS",
    "ConfigError",
    "WeightPattern",
    "EnvConfig",
    "Environment",
    "stream_rng",
    "make_weights",
    "sample_theta",
    "cumulative_regret",
]

CONTEXT_DISTS = ("uniform", "rademacher", "truncated_gaussian")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def stream_rng(seed: int, stream: str, round_: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream, round)."""
    digest = hashlib.blake2b(
        f"{seed}|{stream}|{round_}".encode(), digest_size=8
    ).digest()
    return np.random.Generator(
        np.random.Philox(key=int.from_bytes(digest, "little"))
    )


@dataclass(frozen=True)
class WeightPattern:
    """Recipe for generating the lag-weight vector w.

    kinds:
      flat         1/s on s support lags
      spiking      80% of the l1 mass on ceil(0.2 s) of the support lags
      random       uniform positives on the support, normalized to l1 = 1
      single_delay unit mass at one lag
      custom       explicit values or (positions, masses)

    Support lags are 0-based (lag 0 = the current round) and drawn uniformly
    at random unless the params pin them.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("flat", "spiking", "random", "single_delay", "custom"):
            raise ConfigError("w_pattern.kind", f"unknown kind {self.kind!r}")


def _support(pattern: WeightPattern, h: int, s: int, rng) -> np.ndarray:
    pos = pattern.params.get("positions")
    if pos is not None:
        pos = np.asarray(pos, dtype=int)
        if pos.min() < 0 or pos.max() >= h:
            raise ConfigError("w_pattern.positions", "lag out of range")
        if len(set(pos.tolist())) != pos.size:
            raise ConfigError("w_pattern.positions", "duplicate lags")
        return np.sort(pos)
    return np.sort(rng.choice(h, size=s, replace=False))


def make_weights(pattern: WeightPattern, h: int, s: int, rng) -> np.ndarray:
    """Instantiate w from a pattern; nonnegative, s-sparse, l1 <= 1."""
    w = np.zeros(h)
    if pattern.kind == "flat":
        idx = _support(pattern, h, s, rng)
        w[idx] = 1.0 / idx.size
    elif pattern.kind == "spiking":
        idx = _support(pattern, h, s, rng)
        frac = float(pattern.params.get("spike_fraction", 0.2))
        n_spike = max(1, int(np.ceil(frac * idx.size)))
        spikes = rng.choice(idx, size=n_spike, replace=False)
        rest = np.setdiff1d(idx, spikes)
        w[spikes] = 0.8 / n_spike
        if rest.size:
            w[rest] = 0.2 / rest.size
        else:
            w[spikes] = 1.0 / n_spike
    elif pattern.kind == "random":
        idx = _support(pattern, h, s, rng)
        vals = rng.uniform(0.1, 1.0, size=idx.size)
        w[idx] = vals / vals.sum()
    elif pattern.kind == "single_delay":
        delay = pattern.params.get("delay")
        if delay is None:
            delay = int(rng.integers(0, h))
        if not 0 <= delay < h:
            raise ConfigError("w_pattern.delay", "lag out of range")
        w[delay] = 1.0
    elif pattern.kind == "custom":
        if "values" in pattern.params:
            vals = np.asarray(pattern.params["values"], dtype=float)
            if vals.shape != (h,):
                raise ConfigError("w_pattern.values", f"expected length {h}")
            w = vals.copy()
        else:
            idx = _support(pattern, h, s, rng)
            masses = np.asarray(pattern.params["masses"], dtype=float)
            if masses.shape != idx.shape:
                raise ConfigError("w_pattern.masses", "length mismatch")
            w[idx] = masses
    _validate_weights(w, s)
    return w


def _validate_weights(w: np.ndarray, s: int) -> None:
    if (w < 0).any():
        raise ConfigError("w", "weights must be nonnegative")
    if w.sum() > 1 + 1e-12:
        raise ConfigError("w", "l1 norm exceeds 1")
    if int((w > 0).sum()) > s:
        raise ConfigError("w", f"more than {s} nonzero lags")


def sample_theta(d: int, rng) -> np.ndarray:
    """Uniform direction on the unit sphere."""
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


@dataclass
class EnvConfig:
    """Ground truth and sampling law for one bandit instance."""

    d: int
    K: int
    h: int
    s: int
    T: int
    noise_std: float = 0.1
    context_dist: str = "uniform"
    seed: int = 0
    theta: np.ndarray | None = None
    w: np.ndarray | None = None
    w_pattern: WeightPattern | None = None

    def __post_init__(self):
        for name in ("d", "K", "h", "s", "T"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"env.{name}", "must be a positive integer")
        if self.s > self.h:
            raise ConfigError("env.s", "sparsity cannot exceed the horizon h")
        if self.noise_std < 0:
            raise ConfigError("env.noise_std", "must be nonnegative")
        if self.context_dist not in CONTEXT_DISTS:
            raise ConfigError(
                "env.context_dist", f"must be one of {CONTEXT_DISTS}"
            )
        if self.theta is not None:
            self.theta = np.asarray(self.theta, dtype=float)
            if self.theta.shape != (self.d,):
                raise ConfigError("env.theta", f"expected length {self.d}")
            if np.linalg.norm(self.theta) > 1 + 1e-12:
                raise ConfigError("env.theta", "l2 norm exceeds 1")
        if self.w is not None:
            self.w = np.asarray(self.w, dtype=float)
            if self.w.shape != (self.h,):
                raise ConfigError("env.w", f"expected length {self.h}")
            _validate_weights(self.w, self.s)
        if self.w is None and self.w_pattern is None:
            self.w_pattern = WeightPattern("flat")

    def resolve(self, seed: int | None = None) -> "ResolvedEnv":
        """Draw any unspecified ground truth from the init stream."""
        seed = self.seed if seed is None else seed
        rng = stream_rng(seed, "init")
        theta = self.theta if self.theta is not None else sample_theta(self.d, rng)
        w = self.w if self.w is not None else make_weights(
            self.w_pattern, self.h, self.s, rng
        )
        return ResolvedEnv(config=self, seed=seed, theta=theta, w=w)

    def to_dict(self) -> dict:
        out = {
            "d": self.d, "K": self.K, "h": self.h, "s": self.s, "T": self.T,
            "noise_std": self.noise_std, "context_dist": self.context_dist,
            "seed": self.seed,
        }
        if self.theta is not None:
            out["theta"] = [float(v) for v in self.theta]
        if self.w is not None:
            out["w"] = [float(v) for v in self.w]
        elif self.w_pattern is not None:
            out["w_pattern"] = {"kind": self.w_pattern.kind,
                                **self.w_pattern.params}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        data = dict(data)
        known = {"d", "K", "h", "s", "T", "noise_std", "context_dist",
                 "seed", "theta", "w", "w_pattern"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"env.{sorted(unknown)[0]}", "unknown field")
        pattern = None
        if "w_pattern" in data:
            pdata = dict(data.pop("w_pattern"))
            kind = pdata.pop("kind", None)
            if kind is None:
                raise ConfigError("env.w_pattern.kind", "missing")
            pattern = WeightPattern(kind, pdata)
        try:
            return cls(w_pattern=pattern, **data)
        except TypeError as exc:
            raise ConfigError("env", str(exc)) from exc


@dataclass
class ResolvedEnv:
    config: EnvConfig
    seed: int
    theta: np.ndarray
    w: np.ndarray


class Environment:
    """Single-trial environment: owns the context stream and ring buffer.

    Protocol per round: ``sample_contexts()`` then ``step(action)``. The
    generated contexts, noise, and ground truth are a pure function of
    (config, seed), independent of anything the agent does.
    """

    def __init__(self, config: EnvConfig, seed: int | None = None):
        resolved = config.resolve(seed)
        self.config = config
        self.seed = resolved.seed
        self.theta = resolved.theta
        self.w = resolved.w
        self.w_l1 = float(np.abs(self.w).sum())
        self.round = 0
        # ring[i] is the context chosen at lag i from the current round
        self._ring = np.zeros((config.h, config.d))
        self._contexts: np.ndarray | None = None

    def sample_contexts(self) -> np.ndarray:
        """Draw the K context vectors for the next round; entries in [-1,1]."""
        if self.round >= self.config.T:
            raise RuntimeError("horizon exhausted")
        if self._contexts is not None:
            raise RuntimeError("step() must consume the sampled contexts first")
        rng = stream_rng(self.seed, "contexts", self.round + 1)
        K, d = self.config.K, self.config.d
        dist = self.config.context_dist
        if dist == "uniform":
            ctx = rng.uniform(-1.0, 1.0, size=(K, d))
        elif dist == "rademacher":
            ctx = rng.integers(0, 2, size=(K, d)) * 2.0 - 1.0
        else:  # truncated_gaussian: N(0, 0.5^2) conditioned on [-1, 1]
            ctx = 0.5 * rng.standard_normal((K, d))
            bad = np.abs(ctx) > 1.0
            while bad.any():
                ctx[bad] = 0.5 * rng.standard_normal(int(bad.sum()))
                bad = np.abs(ctx) > 1.0
        self._contexts = ctx
        return ctx

    def step(self, action: int) -> tuple[float, float]:
        """Apply the chosen arm; returns (reward, instant pseudo-regret)."""
        if self._contexts is None:
            raise RuntimeError("sample_contexts() must be called first")
        K = self.config.K
        if not 0 <= action < K:
            raise IndexError(f"action {action} out of range [0, {K})")
        self.round += 1
        ctx = self._contexts
        self._contexts = None

        scores = ctx @ self.theta
        gap = float(scores.max() - scores[action])
        instant_regret = self.w_l1 * gap

        self._ring = np.roll(self._ring, 1, axis=0)
        self._ring[0] = ctx[action]
        mean_reward = float(self.w @ (self._ring @ self.theta))
        noise = 0.0
        if self.config.noise_std > 0:
            noise = self.config.noise_std * float(
                stream_rng(self.seed, "noise", self.round).standard_normal()
            )
        return mean_reward + noise, instant_regret


def cumulative_regret(instant: np.ndarray) -> np.ndarray:
    """Prefix sums of per-round pseudo-regret (nonnegative, nondecreasing)."""
    instant = np.asarray(instant, dtype=float)
    if (instant < 0).any():
        raise ValueError("instant regret must be nonnegative")
    return np.cumsum(instant)


def config_hash(payload: dict) -> str:
    """Stable hash of a JSON-serializable configuration."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()

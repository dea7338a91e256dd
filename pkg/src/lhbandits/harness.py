"""Batch experiment runner.

Parses experiment specs, schedules seeded trials, and writes regret traces
plus diagnostics as CSV/JSON. Every output is a pure function of the spec:
per-trial seeds are hashes of (base_seed, agent, trial), so execution order
and worker count never change a byte.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agents import default_L, make_agent
from .env import ConfigError, EnvConfig, Environment, config_hash, stream_rng
from .riplab import (
    MeasurementEnsemble,
    estimate_rip_constant,
    lemma1_witness,
    phase_transition_sweep,
)

__all__ = [
    "ExperimentSpec",
    "load_spec",
    "run_experiment",
    "preset",
    "PRESET_NAMES",
    "diagnostic_q",
    "trial_seed",
    "fig5_cell",
]

SCHEMA_VERSION = 1
WORKERS_ENV_VAR = "LHB_WORKERS"

PRESET_NAMES = (
    "fig2", "fig4", "fig5_flat", "fig5_spiking",
    "appendix_random_w", "appendix_single_w", "ripconst",
)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def trial_seed(base_seed: int, agent_name: str, trial: int) -> int:
    """Stable per-trial seed; adding agents never perturbs existing ones."""
    digest = hashlib.sha256(
        f"{base_seed}|{agent_name}|{trial}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class ExperimentSpec:
    """A validated experiment description.

    ``kind`` selects the runner: 'bandit' (env + agents + trials), 'suite'
    (named sub-experiments), or one of the measurement studies 'fig2',
    'ripconst', 'lemma1'.
    """

    kind: str
    payload: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version",
                              f"expected {SCHEMA_VERSION}, got {version!r}")
        kind = data.pop("kind", "bandit")
        if kind == "bandit":
            payload = _validate_bandit(data)
        elif kind == "suite":
            payload = _validate_suite(data)
        elif kind in ("fig2", "ripconst", "lemma1"):
            payload = _validate_measurement(kind, data)
        else:
            raise ConfigError("kind", f"unknown experiment kind {kind!r}")
        return cls(kind=kind, payload=payload)

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "kind": self.kind}
        payload = dict(self.payload)
        if self.kind == "bandit":
            payload["env"] = payload["env"].to_dict()
        elif self.kind == "suite":
            payload["experiments"] = {
                label: sub.to_dict()
                for label, sub in payload["experiments"].items()
            }
        out.update(payload)
        return out


def _validate_bandit(data: dict) -> dict:
    known = {"env", "agents", "trials", "base_seed", "notes"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    if "env" not in data:
        raise ConfigError("env", "missing")
    env = EnvConfig.from_dict(data["env"])
    agents = data.get("agents")
    if not agents:
        raise ConfigError("agents", "at least one agent is required")
    names = []
    for idx, a in enumerate(agents):
        if "kind" not in a:
            raise ConfigError(f"agents[{idx}].kind", "missing")
        names.append(a.get("name", a["kind"]))
    if len(set(names)) != len(names):
        raise ConfigError("agents", "agent names must be unique")
    trials = int(data.get("trials", 1))
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    return {
        "env": env,
        "agents": [dict(a) for a in agents],
        "trials": trials,
        "base_seed": int(data.get("base_seed", 0)),
        "notes": data.get("notes", {}),
    }


def _validate_suite(data: dict) -> dict:
    known = {"experiments", "notes"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    experiments = data.get("experiments")
    if not experiments:
        raise ConfigError("experiments", "missing or empty")
    subs = {}
    for label, sub in experiments.items():
        subs[label] = ExperimentSpec.from_dict(sub)
        if subs[label].kind == "suite":
            raise ConfigError(f"experiments.{label}", "suites cannot nest")
    return {"experiments": subs, "notes": data.get("notes", {})}


def _validate_measurement(kind: str, data: dict) -> dict:
    allowed = {
        "fig2": {"d", "h", "s_list", "m_grid", "trials", "kinds",
                 "generator_dist", "base_seed", "notes"},
        "ripconst": {"d", "n_blocks", "s", "m_grid", "support_samples",
                     "kinds", "generator_dist", "base_seed", "notes"},
        "lemma1": {"p_list", "trials", "base_seed", "notes"},
    }[kind]
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    return dict(data)


def load_spec(path: str | Path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return ExperimentSpec.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# bandit runner

def _run_bandit_trial(env_cfg: EnvConfig, agent_spec: dict, base_seed: int,
                      trial: int) -> dict:
    name = agent_spec.get("name", agent_spec["kind"])
    seed = trial_seed(base_seed, name, trial)
    env = Environment(env_cfg, seed=seed)
    agent = make_agent(agent_spec)
    theta_dir = env.theta / np.linalg.norm(env.theta)
    agent.begin_trial(env_cfg.d, env_cfg.K, env_cfg.h, env_cfg.T, seed,
                      theta_oracle=theta_dir)
    cum = 0.0
    rows = []
    for t in range(1, env_cfg.T + 1):
        contexts = env.sample_contexts()
        action = agent.act(t, contexts)
        reward, instant = env.step(action)
        agent.observe(t, contexts[action], reward)
        cum += instant
        rows.append((t, cum))
    return {
        "agent": name,
        "trial": trial,
        "seed": seed,
        "rows": rows,
        "diagnostics": agent.diagnostics(),
    }


def _trial_star(args):
    return _run_bandit_trial(*args)


def _write_trace(path: Path, rows) -> None:
    lines = ["t,cum_regret"]
    lines.extend(f"{t},{_fmt(c)}" for t, c in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _aggregate(curves: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error across trials, two-pass with a streaming
    cross-check."""
    stack = np.vstack(curves)
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    if n > 1:
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        stderr = np.zeros_like(mean)
    # streaming (Welford) recomputation must agree with the two-pass values
    s_mean = np.zeros_like(mean)
    s_m2 = np.zeros_like(mean)
    for k, row in enumerate(stack, start=1):
        delta = row - s_mean
        s_mean += delta / k
        s_m2 += delta * (row - s_mean)
    s_err = np.sqrt(s_m2 / (n - 1)) / math.sqrt(n) if n > 1 else s_m2
    if not (np.allclose(s_mean, mean, atol=1e-9)
            and np.allclose(s_err, stderr, atol=1e-9)):
        raise AssertionError("aggregate cross-check failed")
    return mean, stderr


def _run_bandit(payload: dict, out_dir: Path, workers: int) -> dict:
    env_cfg: EnvConfig = payload["env"]
    jobs = [
        (env_cfg, agent_spec, payload["base_seed"], trial)
        for agent_spec in payload["agents"]
        for trial in range(payload["trials"])
    ]
    results, errors = [], []
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            futures = {pool.submit(_trial_star, job): job for job in jobs}
            for fut in concurrent.futures.as_completed(futures):
                job = futures[fut]
                try:
                    results.append(fut.result())
                except Exception as exc:  # isolate the failing trial
                    errors.append({"agent": job[1].get("name", job[1]["kind"]),
                                   "trial": job[3], "error": str(exc)})
    else:
        for job in jobs:
            try:
                results.append(_trial_star(job))
            except Exception as exc:
                errors.append({"agent": job[1].get("name", job[1]["kind"]),
                               "trial": job[3], "error": str(exc)})

    by_agent: dict[str, list[dict]] = {}
    for res in sorted(results, key=lambda r: (r["agent"], r["trial"])):
        by_agent.setdefault(res["agent"], []).append(res)
        _write_trace(out_dir / f"{res['agent']}_{res['trial']:04d}.csv",
                     res["rows"])
        diag_path = out_dir / f"{res['agent']}_{res['trial']:04d}_epochs.json"
        diag_path.write_text(
            json.dumps(res["diagnostics"], sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    for name, trials in by_agent.items():
        curves = [np.array([c for _, c in res["rows"]]) for res in trials]
        mean, stderr = _aggregate(curves)
        lines = ["t,mean,stderr"]
        lines.extend(
            f"{t},{_fmt(mu)},{_fmt(se)}"
            for t, mu, se in zip(range(1, mean.size + 1), mean, stderr)
        )
        (out_dir / f"{name}_agg.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8", newline="\n"
        )

    summary = {"trials_completed": len(results), "errors": errors}
    if env_cfg.w is not None:
        prefix = np.sqrt(np.cumsum(np.asarray(env_cfg.w) ** 2))
        lines = ["k,prefix_l2"]
        lines.extend(f"{k},{_fmt(v)}" for k, v in enumerate(prefix, start=1))
        (out_dir / "w_prefix.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8", newline="\n"
        )
        # prefix-mass diagnostics: absolute mu = 1/2 (our canonical choice;
        # null when the weights carry less total mass) and half of the
        # actual l2 mass, which is always defined
        try:
            summary["q_w_mu_half"] = diagnostic_q(env_cfg.w, 0.5)
        except ValueError:
            summary["q_w_mu_half"] = None
        total = float(np.linalg.norm(env_cfg.w))
        summary["q_w_half_mass"] = (
            diagnostic_q(env_cfg.w, total / 2) if total > 0 else None
        )
    return summary


# ---------------------------------------------------------------------------
# measurement runners

def _write_table(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            _fmt(v) if isinstance(v, float) else str(v) for v in row
        ))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _run_fig2(payload: dict, out_dir: Path, workers: int) -> dict:
    d = payload.get("d", 10)
    h = payload.get("h", 100)
    s_list = payload.get("s_list", [1, 50, 100])
    m_grid = payload.get("m_grid", list(range(40, 501, 60)))
    trials = payload.get("trials", 50)
    kinds = payload.get("kinds", ["iid", "circulant_block"])
    dist = payload.get("generator_dist", "gaussian")
    seed = payload.get("base_seed", 0)
    info = {}
    for kind in kinds:
        table = phase_transition_sweep(
            kind, s_list, m_grid, trials, d=d, h=h,
            generator_dist=dist, seed=seed,
        )
        label = "iid" if kind == "iid" else "circulant"
        _write_table(
            out_dir / f"fig2_{label}.csv", ["s", "m", "success_prob"],
            [(row["s"], row["m"], float(row["success_prob"]))
             for row in table],
        )
        info[label] = len(table)
    return info


def _run_ripconst(payload: dict, out_dir: Path, workers: int) -> dict:
    d = payload.get("d", 2)
    n_blocks = payload.get("n_blocks", 256)
    s = payload.get("s", 8)
    m_grid = payload.get("m_grid", [32, 64, 128, 256])
    samples = payload.get("support_samples", 500)
    kinds = payload.get("kinds", ["circulant_block", "iid"])
    dist = payload.get("generator_dist", "rademacher")
    seed = payload.get("base_seed", 0)
    info = {}
    for kind in kinds:
        rows = []
        for m in m_grid:
            ens = MeasurementEnsemble(kind, m, (d, n_blocks), dist)
            rng_op = stream_rng(seed, f"ripconst-{kind}-m{m}", 0)
            A = ens.sample(rng_op)
            rng_sup = stream_rng(seed, f"ripconst-supports-{kind}-m{m}", 0)
            delta = estimate_rip_constant(
                A, s, support_samples=samples, rng=rng_sup, block_size=1
            )
            rows.append((int(m), float(delta)))
        _write_table(out_dir / f"ripconst_{kind}.csv",
                     ["m", "delta_estimate"], rows)
        info[kind] = rows
    return info


def _run_lemma1(payload: dict, out_dir: Path, workers: int) -> dict:
    p_list = payload.get("p_list", [4, 16, 64, 256])
    trials = payload.get("trials", 10_000)
    seed = payload.get("base_seed", 0)
    c = 1.0 - math.exp(-2.0)  # Pr[| |g|^2 - 1 | <= 1] for g ~ CN(0,1)
    rows = []
    for p in p_list:
        prob = lemma1_witness(p, trials, seed=seed)
        rows.append((int(p), float(prob), float(1.0 - c**p)))
    _write_table(out_dir / "lemma1.csv",
                 ["p", "prob_mp_gt_1", "closed_form"], rows)
    return {"rows": rows}


_RUNNERS = {
    "bandit": _run_bandit,
    "fig2": _run_fig2,
    "ripconst": _run_ripconst,
    "lemma1": _run_lemma1,
}


def run_experiment(spec: ExperimentSpec, out_dir: str | Path,
                   workers: int | None = None) -> dict:
    """Execute a spec, writing traces, tables, and metadata under out_dir."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    if spec.kind == "suite":
        info = {}
        for label, sub in spec.payload["experiments"].items():
            info[label] = run_experiment(sub, out_dir / label, workers)
        summary = info
    else:
        summary = _RUNNERS[spec.kind](spec.payload, out_dir, workers)
    spec_dict = spec.to_dict()
    metadata = {
        "schema_version": SCHEMA_VERSION,
        "spec": spec_dict,
        "config_hash": config_hash(spec_dict),
        "versions": {"lhbandits": __version__, "numpy": np.__version__},
        "wall_time_s": round(time.time() - started, 3),
        "summary": _jsonable(summary),
    }
    (out_dir / "metadata.json").write_text(
        json.dumps(metadata, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# ---------------------------------------------------------------------------
# presets

# Calibrated regularization levels for the desk-scale figure presets; the
# printed formulas assume unit-scale noise, which overshrinks at
# noise_std=0.1, so the presets scale them down and record the choice.
FIG5_AD_LASSO = {"c": 0.05, "lambda_scale": 0.01}
FIG4_C = 0.01
DEFAULT_K = 10
DEFAULT_NOISE = 0.1


def _bandit_dict(env: dict, agents: list[dict], trials: int,
                 base_seed: int = 0, notes: dict | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "bandit",
        "env": env,
        "agents": agents,
        "trials": trials,
        "base_seed": base_seed,
        "notes": notes or {},
    }


def fig5_cell(s: int, pattern: str, agent_kinds=("ad_lasso", "sa_gd",
                                                 "sw_mp", "ucb_mp"),
              trials: int = 20, T: int = 2000, base_seed: int = 0) -> dict:
    """One sparsity cell of the data-rich comparison (T=2000, h=100, d=5)."""
    d, h, K = 5, 100, DEFAULT_K
    L = default_L(s, d, h)
    env = {
        "d": d, "K": K, "h": h, "s": s, "T": T,
        "noise_std": DEFAULT_NOISE, "context_dist": "uniform", "seed": 0,
        "w_pattern": {"kind": pattern},
    }
    agent_map = {
        "ad_lasso": {"kind": "ad_lasso", "L": L, **FIG5_AD_LASSO},
        "sa_gd": {"kind": "sa_gd", "s": s},
        "sw_mp": {"kind": "sw_mp"},
        "ucb_mp": {"kind": "ucb_mp"},
    }
    agents = [agent_map[k] for k in agent_kinds]
    notes = {"our_choices": {
        "K": K, "noise_std": DEFAULT_NOISE, "L": L,
        "ad_lasso.c": FIG5_AD_LASSO["c"],
        "ad_lasso.lambda_scale": FIG5_AD_LASSO["lambda_scale"],
    }}
    return _bandit_dict(env, agents, trials, base_seed, notes)


def _fig5_suite(pattern: str, s_values=(5, 10, 25, 50)) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "suite",
        "experiments": {
            f"s{sv:02d}": fig5_cell(sv, pattern) for sv in s_values
        },
        "notes": {"our_choices": {"s_values": list(s_values)}},
    }


def _fig4_suite() -> dict:
    d, h, s, T, K = 5, 1000, 10, 999, DEFAULT_K
    L = default_L(s, d, h)
    placements = {
        "w1_early": list(range(0, 10)),
        "w2_late": list(range(600, 610)),
    }
    experiments = {}
    for label, lags in placements.items():
        w = [0.0] * h
        for lag in lags:
            w[lag] = 1.0 / s
        env = {
            "d": d, "K": K, "h": h, "s": s, "T": T,
            "noise_std": DEFAULT_NOISE, "context_dist": "uniform",
            "seed": 0, "w": w,
        }
        agents = [{"kind": "doubling_lasso", "L": L, "c": FIG4_C,
                   "name": "doubling_lasso"}]
        experiments[label] = _bandit_dict(
            env, agents, trials=10,
            notes={"our_choices": {"K": K, "noise_std": DEFAULT_NOISE,
                                   "L": L, "c": FIG4_C, "d": d,
                                   "support_lags": lags}},
        )
    return {"schema_version": SCHEMA_VERSION, "kind": "suite",
            "experiments": experiments, "notes": {}}


def preset(name: str) -> ExperimentSpec:
    """The documented parameterization for each figure reproduction."""
    if name == "fig2":
        data = {
            "schema_version": SCHEMA_VERSION, "kind": "fig2",
            "d": 10, "h": 100, "s_list": [1, 50, 100],
            "m_grid": [40, 80, 100, 150, 200, 260, 330, 420, 500],
            "trials": 50, "kinds": ["iid", "circulant_block"],
            "generator_dist": "gaussian", "base_seed": 0,
            "notes": {"our_choices": {"m_grid": "sweep granularity",
                                      "trials": 50}},
        }
    elif name == "fig4":
        data = _fig4_suite()
    elif name == "fig5_flat":
        data = _fig5_suite("flat")
    elif name == "fig5_spiking":
        data = _fig5_suite("spiking")
    elif name == "appendix_random_w":
        data = _fig5_suite("random")
    elif name == "appendix_single_w":
        data = _fig5_suite("single_delay", s_values=(1,))
    elif name == "ripconst":
        data = {
            "schema_version": SCHEMA_VERSION, "kind": "ripconst",
            "d": 2, "n_blocks": 256, "s": 8,
            "m_grid": [32, 64, 128, 256, 512], "support_samples": 300,
            "kinds": ["circulant_block", "iid"],
            "generator_dist": "rademacher", "base_seed": 0,
            "notes": {"our_choices": {"m_grid": "desk-scale sweep",
                                      "support_samples": 300}},
        }
    else:
        raise ConfigError("preset", f"unknown preset {name!r}")
    return ExperimentSpec.from_dict(data)


def lemma1_spec(p_list=(4, 16, 64, 256), trials: int = 10_000,
                base_seed: int = 0) -> ExperimentSpec:
    """Spec for the circulant rank-1 RIP failure witness."""
    return ExperimentSpec.from_dict({
        "schema_version": SCHEMA_VERSION, "kind": "lemma1",
        "p_list": list(p_list), "trials": trials, "base_seed": base_seed,
    })


# ---------------------------------------------------------------------------
# weight-mass diagnostic

def diagnostic_q(w, mu: float) -> float:
    """Smallest prefix length q with ||w[:q]||_2 >= mu.

    Reported alongside alpha = log_h(q), the exponent making q = h^alpha.
    The canonical choice mu = 1/2 probes where half the l2 mass sits.
    """
    w = np.asarray(w, dtype=float)
    total = float(np.linalg.norm(w))
    if mu <= 0:
        raise ValueError("mu must be positive")
    if mu > total:
        raise ValueError("mass unreachable")
    prefix = np.sqrt(np.cumsum(w**2))
    q = int(np.searchsorted(prefix, mu - 1e-15) + 1)
    return float(q)

"""Acceptance gate: one test per headline criterion, printed pass/fail.

Heavyweight figure reproductions run through the real presets and harness;
the statistical ordering checks drive matched environments directly so the
comparisons are paired. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import math
import sys

import numpy as np
import pytest

from lhbandits.agents import (
    ADLassoAgent,
    SAGDAgent,
    SWMPAgent,
    UCBMPAgent,
    default_L,
    sin_angle,
)
from lhbandits.agents.sagd import sagd_gradients, sagd_loss
from lhbandits.env import EnvConfig, Environment, WeightPattern
from lhbandits.grouplasso import LassoProblem, solve
from lhbandits.harness import (
    ExperimentSpec,
    fig5_cell,
    lemma1_spec,
    preset,
    run_experiment,
    trial_seed,
)
from lhbandits.linalg import block_norms, build_design_rows, \
    top_singular_triplet
from lhbandits.riplab import lemma1_witness

from oracles import central_diff_grad, exhaustive_support_ls


def report(name: str, ok: bool, detail: str) -> bool:
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} ({detail})",
          file=sys.stderr)
    return ok


def read_finals(out_dir, agent, trials):
    finals = []
    for k in range(trials):
        last = (out_dir / f"{agent}_{k:04d}.csv").read_text() \
            .strip().splitlines()[-1]
        finals.append(float(last.split(",")[1]))
    return np.array(finals)


def read_mean_curve(out_dir, agent):
    lines = (out_dir / f"{agent}_agg.csv").read_text().strip().splitlines()
    return np.array([float(line.split(",")[1]) for line in lines[1:]])


def run_matched_trial(env_kwargs, agent, seed):
    cfg = EnvConfig(**env_kwargs, seed=seed)
    env = Environment(cfg, seed=seed)
    agent.begin_trial(cfg.d, cfg.K, cfg.h, cfg.T, seed,
                      theta_oracle=env.theta)
    cum = 0.0
    trace = [0.0]
    for t in range(1, cfg.T + 1):
        ctx = env.sample_contexts()
        a = agent.act(t, ctx)
        r, g = env.step(a)
        agent.observe(t, ctx[a], r)
        cum += g
        trace.append(cum)
    return np.array(trace)


FIG5_ENV = dict(d=5, K=10, h=100, T=2000, noise_std=0.1,
                context_dist="uniform")


@pytest.fixture(scope="module")
def fig4_runs(tmp_path_factory):
    """The fig4 preset executed twice, for the ordering and determinism."""
    base = tmp_path_factory.mktemp("fig4")
    spec = preset("fig4")
    run_experiment(spec, base / "a")
    run_experiment(spec, base / "b")
    return base


def test_fig4_ordering(fig4_runs):
    w1 = read_finals(fig4_runs / "a" / "w1_early", "doubling_lasso", 10)
    w2 = read_finals(fig4_runs / "a" / "w2_late", "doubling_lasso", 10)
    gap = w2.mean() - w1.mean()
    pooled = math.sqrt(w1.var(ddof=1) / 10 + w2.var(ddof=1) / 10)
    ok = w1.mean() < w2.mean() and gap > pooled
    assert report(
        "fig4-ordering", ok,
        f"early={w1.mean():.1f} late={w2.mean():.1f} "
        f"gap={gap:.1f} pooled_se={pooled:.1f}",
    )


def test_sublinearity_ad_lasso(tmp_path):
    spec = ExperimentSpec.from_dict(
        fig5_cell(5, "flat", agent_kinds=("ad_lasso",), trials=10))
    run_experiment(spec, tmp_path)
    mean = np.concatenate([[0.0], read_mean_curve(tmp_path, "ad_lasso")])
    early = (mean[200] - mean[99]) / 101
    late = (mean[2000] - mean[1499]) / 501
    ts = np.arange(500, 2001)
    slope = np.polyfit(np.log(ts),
                       np.log(np.maximum(mean[500:2001], 1e-12)), 1)[0]
    ok = late < 0.5 * early and slope <= 0.75
    assert report(
        "sublinearity", ok,
        f"per-round late/early={late:.4f}/{early:.4f} "
        f"ratio={late / early:.3f} loglog_slope={slope:.3f}",
    )


def test_fig5_ordering_flat_s25():
    env_kwargs = dict(FIG5_ENV, s=25, w_pattern=WeightPattern("flat"))
    L = default_L(25, 5, 100)
    agents = {
        "ad_lasso": lambda: ADLassoAgent(L=L, c=0.05, lambda_scale=0.01),
        "sw_mp": SWMPAgent,
        "ucb_mp": UCBMPAgent,
    }
    finals = {name: [] for name in agents}
    for trial in range(20):
        seed = trial_seed(0, "fig5-s25-paired", trial)
        for name, factory in agents.items():
            finals[name].append(
                run_matched_trial(env_kwargs, factory(), seed)[-1])
    means = {k: float(np.mean(v)) for k, v in finals.items()}
    ok = means["ad_lasso"] < means["sw_mp"] \
        and means["ad_lasso"] < means["ucb_mp"]
    assert report(
        "fig5-ordering-flat-s25", ok,
        "mean finals " + " ".join(f"{k}={v:.1f}" for k, v in means.items()),
    )


def test_fig5_spiking_s5_competitive():
    env_kwargs = dict(FIG5_ENV, s=5, w_pattern=WeightPattern("spiking"))
    L = default_L(5, 5, 100)
    agents = {
        "ad_lasso": lambda: ADLassoAgent(L=L, c=0.05, lambda_scale=0.01),
        "sa_gd": lambda: SAGDAgent(s=5),
        "sw_mp": SWMPAgent,
        "ucb_mp": UCBMPAgent,
    }
    finals = {name: [] for name in agents}
    for trial in range(20):
        seed = trial_seed(0, "fig5-spiking-paired", trial)
        for name, factory in agents.items():
            finals[name].append(
                run_matched_trial(env_kwargs, factory(), seed)[-1])
    means = {k: float(np.mean(v)) for k, v in finals.items()}
    best = min(v for k, v in means.items() if k != "ad_lasso")
    ok = means["ad_lasso"] <= 1.2 * best
    assert report(
        "fig5-spiking-s5-competitive", ok,
        f"ad={means['ad_lasso']:.1f} best_baseline={best:.1f} "
        f"limit={1.2 * best:.1f}",
    )


def test_fig2_phase_transition(tmp_path):
    run_experiment(preset("fig2"), tmp_path)
    tables = {}
    for label in ("iid", "circulant"):
        rows = (tmp_path / f"fig2_{label}.csv").read_text() \
            .strip().splitlines()[1:]
        curves = {}
        for line in rows:
            s, m, p = line.split(",")
            curves.setdefault(int(s), {})[int(m)] = float(p)
        tables[label] = curves

    iid = tables["iid"]
    ms = sorted(iid[1])
    iid_spread = max(
        max(iid[s][m] for s in (1, 50, 100))
        - min(iid[s][m] for s in (1, 50, 100))
        for m in ms
    )
    circ = tables["circulant"]
    sep = max(circ[1][m] - circ[100][m] for m in ms if m <= 10 * 100 // 2)
    ok = iid_spread <= 0.1 and sep >= 0.3
    assert report(
        "fig2-phase-transition", ok,
        f"iid_max_spread={iid_spread:.2f} circulant_separation={sep:.2f}",
    )


def test_lemma1_witness_probabilities(tmp_path):
    run_experiment(lemma1_spec(p_list=(4, 256), trials=10_000), tmp_path)
    rows = (tmp_path / "lemma1.csv").read_text().strip().splitlines()[1:]
    table = {int(r.split(",")[0]): (float(r.split(",")[1]),
                                    float(r.split(",")[2])) for r in rows}
    p4, closed4 = table[4]
    p256, _ = table[256]
    ok = p256 >= 0.999 and abs(p4 - closed4) <= 0.02
    assert report(
        "lemma1-witness", ok,
        f"p256={p256:.4f} p4={p4:.4f} closed_form={closed4:.4f}",
    )


def test_group_lasso_oracle_equivalence():
    checked, failures = 0, []
    for n in (3, 4, 5, 6):
        for d in (2, 3):
            for s in (1, 2):
                for rep in range(5):
                    seed = rep * 97 + n * 7 + d * 3 + s
                    rng = np.random.default_rng(seed)
                    m = 2 * n * d
                    A = rng.standard_normal((m, n * d))
                    support = rng.choice(n, size=s, replace=False)
                    phi = np.zeros(n * d)
                    for b in support:
                        phi[b * d:(b + 1) * d] = rng.standard_normal(d)
                    y = A @ phi
                    scale = 1 / (2 * m)
                    lam0 = 2 * scale * block_norms(A.T @ y, d).max()
                    x0, sol = None, None
                    for frac in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
                        sol = solve(
                            LassoProblem(A, y, lam0 * frac, d, scale=scale),
                            tol=1e-13, max_iter=20000, x0=x0)
                        x0 = sol.phi_hat.data
                    o_supp, o_x, _ = exhaustive_support_ls(A, y, d, s)
                    got = set(np.flatnonzero(
                        block_norms(sol.phi_hat.data, d) > 1e-3).tolist())
                    err = np.linalg.norm(sol.phi_hat.data - o_x)
                    checked += 1
                    if got != set(o_supp) or err > 1e-3:
                        failures.append((n, d, s, rep, err))
    ok = checked == 80 and not failures
    assert report(
        "group-lasso-oracle-equivalence", ok,
        f"{checked - len(failures)}/{checked} instances matched "
        f"exhaustive search at 1e-3",
    )


def test_lasso_error_bound_property():
    worst, fails, checked = 0.0, 0, 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        m, n, d, s = 80, 10, 3, 2
        Psi = rng.integers(0, 2, size=(m, n * d)) * 2.0 - 1.0
        phi = np.zeros(n * d)
        for b in rng.choice(n, size=s, replace=False):
            phi[b * d:(b + 1) * d] = rng.standard_normal(d)
        eps = 0.5 * rng.standard_normal(m)
        y = Psi @ phi + eps
        lam = 2 * block_norms(Psi.T @ eps / m, d).max()
        sol = solve(LassoProblem(Psi, y, lam, d, scale=1 / (2 * m)),
                    tol=1e-12, max_iter=50_000)
        delta = sol.phi_hat.data - phi
        norm = np.linalg.norm(delta)
        if norm < 1e-9:
            continue
        kappa = (np.linalg.norm(Psi @ delta) ** 2 / m) / norm**2
        if kappa <= 0:
            continue
        checked += 1
        bound = 3 * math.sqrt(s) * lam / kappa
        worst = max(worst, norm / bound)
        fails += norm > bound
    ok = fails == 0 and checked >= 45
    assert report(
        "lasso-error-bound", ok,
        f"{checked - fails}/{checked} instances within (3/kappa)sqrt(s)lam; "
        f"worst ratio {worst:.3f}",
    )


def test_wedin_sin_theta_property():
    rng = np.random.default_rng(2024)
    checked, fails, worst = 0, 0, 0.0
    for _ in range(100):
        d, k = 4, 12
        theta = rng.standard_normal(d)
        theta /= np.linalg.norm(theta)
        w = np.abs(rng.standard_normal(k)) * rng.uniform(0.3, 2.0)
        M = np.outer(theta, w)
        sigma1 = np.linalg.norm(w)
        E = rng.standard_normal((d, k)) * rng.uniform(0.001, 0.25)
        if sigma1 - np.linalg.norm(E, 2) <= 0:
            continue
        checked += 1
        trip = top_singular_triplet(M + E, tol=1e-12)
        got = sin_angle(trip.left, theta)
        bound = math.sqrt(2) * np.linalg.norm(E) \
            / (sigma1 - np.linalg.norm(E, 2))
        worst = max(worst, got / bound) if bound > 0 else worst
        fails += got > bound + 1e-12
    ok = fails == 0 and checked >= 80
    assert report(
        "wedin-sin-theta", ok,
        f"{checked - fails}/{checked} draws within the bound; "
        f"worst ratio {worst:.3f}",
    )


def test_sagd_gradient_check():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(10, 40))
        h = int(rng.integers(2, 6))
        d = int(rng.integers(2, 5))
        xs = rng.uniform(-1, 1, (m + h, d))
        rows3 = build_design_rows(xs, np.arange(h + 1, m + h + 1), h) \
            .reshape(m, h, d)
        y = rng.standard_normal(m)
        th = rng.standard_normal(d)
        wv = rng.standard_normal(h)
        g_th, g_w = sagd_gradients(rows3, y, th, wv)
        ref_th = central_diff_grad(lambda v: sagd_loss(rows3, y, v, wv), th)
        ref_w = central_diff_grad(lambda v: sagd_loss(rows3, y, th, v), wv)
        rel = max(
            np.linalg.norm(g_th - ref_th) / max(1.0, np.linalg.norm(ref_th)),
            np.linalg.norm(g_w - ref_w) / max(1.0, np.linalg.norm(ref_w)),
        )
        worst = max(worst, rel)
    ok = worst <= 1e-5
    assert report("sagd-gradient-check", ok,
                  f"worst relative deviation {worst:.2e} over 20 instances")


def test_determinism_presets_byte_identical(fig4_runs, tmp_path):
    mismatched = []
    for p in sorted((fig4_runs / "a").rglob("*.csv")):
        rel = p.relative_to(fig4_runs / "a")
        if p.read_bytes() != (fig4_runs / "b" / rel).read_bytes():
            mismatched.append(str(rel))
    spec = preset("ripconst")
    run_experiment(spec, tmp_path / "r1")
    run_experiment(spec, tmp_path / "r2")
    for p in sorted((tmp_path / "r1").glob("*.csv")):
        if p.read_bytes() != (tmp_path / "r2" / p.name).read_bytes():
            mismatched.append(p.name)
    ok = not mismatched
    assert report(
        "determinism-presets", ok,
        "fig4 and ripconst reruns byte-identical" if ok
        else f"mismatched: {mismatched}",
    )

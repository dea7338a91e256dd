import math

import numpy as np
import pytest

from lhbandits.env import stream_rng
from lhbandits.riplab import (
    MeasurementEnsemble,
    circulant_rank1_gains,
    estimate_rip_constant,
    isotonic_increasing,
    lemma1_mp,
    lemma1_witness,
    phase_transition_sweep,
    rank1_recover,
)


def test_ensemble_shapes_and_normalization():
    rng = stream_rng(0, "ens")
    for kind, dims in [("iid", (3, 7)), ("circulant_block", (3, 7)),
                       ("circulant_scalar", (20,))]:
        ens = MeasurementEnsemble(kind, 5, dims, "rademacher")
        A = ens.sample(rng)
        assert A.shape == (5, int(np.prod(dims)))
        # rows carry the 1/sqrt(m) normalization of +-1 entries
        assert np.allclose(np.abs(A[A != 0]), 1 / np.sqrt(5))


def test_circulant_block_rows_are_shifts():
    rng = stream_rng(1, "ens")
    d, h, m = 2, 5, 4
    ens = MeasurementEnsemble("circulant_block", m, (d, h), "gaussian")
    A = ens.sample(rng) * np.sqrt(m)
    # row t, block k+1 equals row t+1, block k (one-block shift)
    for t in range(m - 1):
        for k in range(h - 1):
            assert np.allclose(A[t, (k) * d:(k + 1) * d],
                               A[t + 1, (k + 1) * d:(k + 2) * d])


def test_circulant_scalar_rejects_oversampling():
    with pytest.raises(ValueError, match="rows"):
        MeasurementEnsemble("circulant_scalar", 30, (20,)).sample(
            stream_rng(0, "x"))


def test_rank1_recover_square_iid_exact():
    d, h = 4, 6
    rng = stream_rng(2, "sq")
    ens = MeasurementEnsemble("iid", d * h, (d, h), "gaussian")
    A = ens.sample(rng)
    theta = rng.standard_normal(d)
    w = rng.standard_normal(h)
    truth = np.outer(theta, w)
    y = A @ truth.T.reshape(-1)
    _, _, rel, conv = rank1_recover(y, A, d, h, truth=truth)
    assert rel <= 1e-6


def test_rank1_recover_layout_matches_design_convention():
    # measurement = <Z_t, Phi> with Phi = theta w^T must equal the flat
    # row product against w (kron) theta
    d, h, m = 3, 5, 12
    rng = stream_rng(3, "lay")
    A = MeasurementEnsemble("circulant_block", m, (d, h), "gaussian").sample(rng)
    theta = rng.standard_normal(d)
    w = rng.standard_normal(h)
    assert np.allclose(A @ np.kron(w, theta),
                       A @ np.outer(theta, w).T.reshape(-1))


def test_rank1_recover_iid_plateau_insensitive_to_sparsity():
    # at m = 3(d+h) the iid ensemble recovers regardless of how sparse the
    # right factor is
    d, h = 4, 10
    m = 3 * (d + h)
    for s in (1, h // 2, h):
        wins = 0
        for trial in range(20):
            rng = stream_rng(trial, f"plateau-s{s}")
            A = MeasurementEnsemble("iid", m, (d, h), "gaussian").sample(rng)
            theta = rng.standard_normal(d)
            w = np.zeros(h)
            w[rng.choice(h, size=s, replace=False)] = rng.uniform(0.5, 1.5,
                                                                  size=s)
            truth = np.outer(theta, w)
            y = A @ truth.T.reshape(-1)
            _, _, rel, _ = rank1_recover(y, A, d, h, truth=truth)
            wins += rel < 1e-3
        assert wins >= 18


def test_phase_transition_edge_cases():
    table = phase_transition_sweep("iid", [1], [0], trials=3, d=3, h=4,
                                   seed=0)
    assert table[0]["success_prob"] == 0.0
    table = phase_transition_sweep("iid", [2], [12], trials=5, d=3, h=4,
                                   generator_dist="gaussian", seed=0)
    assert table[0]["success_prob"] == 1.0  # m = d*h fully determines Phi


def test_phase_transition_monotone_after_smoothing():
    table = phase_transition_sweep("iid", [2], [4, 8, 12, 16], trials=8,
                                   d=3, h=5, generator_dist="gaussian",
                                   seed=1)
    probs = [row["success_prob"] for row in table]
    smooth = isotonic_increasing(probs)
    assert np.all(np.diff(smooth) >= -1e-12)
    # smoothing is idempotent on monotone input
    assert np.allclose(isotonic_increasing(smooth), smooth)


def test_isotonic_pava_known_case():
    assert np.allclose(isotonic_increasing([1.0, 0.0, 2.0]), [0.5, 0.5, 2.0])
    assert np.allclose(isotonic_increasing([3.0, 2.0, 1.0]), [2.0, 2.0, 2.0])


def test_estimate_rip_orthonormal_is_zero():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((40, 40)))
    delta = estimate_rip_constant(Q, 4, support_samples=50,
                                  rng=np.random.default_rng(1))
    assert delta <= 1e-10


def test_estimate_rip_iid_small_at_log_rate():
    s, cols = 4, 128
    m = int(40 * s * math.log(cols))
    hits = 0
    for seed in range(10):
        rng = stream_rng(seed, "iidrip")
        A = (rng.integers(0, 2, size=(m, cols)) * 2.0 - 1.0) / math.sqrt(m)
        delta = estimate_rip_constant(A, s, support_samples=100,
                                      rng=np.random.default_rng(seed))
        hits += delta < 0.5
    assert hits >= 9


def test_estimate_rip_block_circulant_trend():
    deltas = []
    for m in (64, 128, 256, 512):
        ens = MeasurementEnsemble("circulant_block", m, (2, 256),
                                  "rademacher")
        A = ens.sample(stream_rng(0, f"bc{m}"))
        deltas.append(estimate_rip_constant(
            A, 8, support_samples=120, rng=np.random.default_rng(7)))
    assert all(d < 1.0 for d in deltas)
    # nonincreasing in m up to isotonic tolerance 0.05
    smooth = isotonic_increasing(deltas[::-1])[::-1]
    assert np.abs(np.array(deltas) - smooth).max() <= 0.05


def test_estimate_rip_block_units():
    rng = stream_rng(0, "bu")
    A = MeasurementEnsemble("circulant_block", 60, (3, 30),
                            "rademacher").sample(rng)
    delta = estimate_rip_constant(A, 4, support_samples=40,
                                  rng=np.random.default_rng(3), block_size=3)
    assert 0 < delta
    with pytest.raises(ValueError, match="support"):
        estimate_rip_constant(A, 40, support_samples=1,
                              rng=np.random.default_rng(3), block_size=3)


def test_lemma1_all_ones_generator():
    for p in (4, 8, 16):
        assert lemma1_mp(np.ones(p)) == pytest.approx(p - 1)


def test_lemma1_gains_match_dft():
    rng = np.random.default_rng(5)
    p = 12
    gen = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / np.sqrt(2)
    dft_gains = np.abs(np.fft.fft(gen) / np.sqrt(p)) ** 2
    for n_rows in (p, 7, 3):
        gains = circulant_rank1_gains(gen, n_rows)
        assert np.abs(gains - dft_gains).max() <= 1e-10
    assert lemma1_mp(gen) == pytest.approx(np.abs(dft_gains - 1).max())


def test_lemma1_witness_p4_matches_closed_form():
    prob = lemma1_witness(4, 10_000)
    c = 1 - math.exp(-2.0)
    assert prob == pytest.approx(1 - c**4, abs=0.02)
    assert 0 < prob < 1


def test_lemma1_witness_large_p_certain():
    assert lemma1_witness(256, 500) >= 0.999


def test_lemma1_witness_deterministic():
    assert lemma1_witness(16, 200, seed=3) == lemma1_witness(16, 200, seed=3)

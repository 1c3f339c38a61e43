"""End-to-end acceptance criteria, each at its stated tolerance and time budget."""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import three_state_chain
from psimix.bounds import convergence_sweep
from psimix.cli import main
from psimix.codesim import config_from_dict, simulate_block_length
from psimix.mixing import psi_brute_force, psi_markov, verify_decomposition
from psimix.process import (
    binary_symmetric_chain,
    block_process,
    conditional_law,
    cylinder_probability,
    iid_source,
    marginal_PT,
)
from psimix.ratedist import binary_entropy, rd_vector_source
from psimix.simulate import build_schedule, exact_simulated_law


def chains():
    return [binary_symmetric_chain(p) for p in (0.1, 0.3, 0.45)] + [three_state_chain()]


def test_criterion_1_psi_oracle(record):
    start = time.perf_counter()
    worst, ok = 0.0, True
    for s in chains():
        for tau in range(4):
            closed = psi_markov(s, tau)
            for t, T in itertools.product((1, 2), repeat=2):
                brute = psi_brute_force(s, tau, t, T)
                if t == T == 1:
                    worst = max(worst, abs(brute - closed))
                    ok &= abs(brute - closed) <= 1e-9
                else:
                    ok &= brute <= closed + 1e-9
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    record(1, ok, f"max |brute - closed| at t=T=1: {worst:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_decomposition(record):
    start = time.perf_counter()
    worst_err, worst_neg, ok = 0.0, 0.0, True
    for s in chains():
        for t, tau, T in itertools.product((1, 2, 3), (0, 1, 2), (1, 2)):
            lam = psi_markov(s, tau)
            p_T = marginal_PT(s, T).probabilities
            for rep in verify_decomposition(s, t, tau, T, lam):
                if rep.skipped:
                    continue
                res = rep.residual.probabilities
                ok &= res.min() >= 0 and abs(res.sum() - 1) <= 1e-12
                worst_err = max(worst_err, rep.max_identity_error)
                if lam > 0:
                    # unclipped residual straight from the conditional law
                    raw = (conditional_law(s, rep.prefix, tau, T).probabilities - (1 - lam) * p_T) / lam
                    worst_neg = min(worst_neg, raw.min())
    elapsed = time.perf_counter() - start
    ok &= worst_err <= 1e-12 and worst_neg >= -1e-12 and elapsed < 10
    record(2, ok, f"max reconstruction error {worst_err:.1e}, min raw residual {worst_neg:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_3_simulation_exact(record):
    start = time.perf_counter()
    s = binary_symmetric_chain(0.3)
    worst = 0.0
    for T, tau, k in [(2, 1, 2), (1, 1, 3), (3, 1, 1)]:
        sched = build_schedule(T, tau, k)
        sim = exact_simulated_law(s, sched).probabilities
        words = itertools.product(range(2), repeat=sched.n)
        truth = np.array([cylinder_probability(s, w) for w in words])
        worst = max(worst, 0.5 * np.abs(sim - truth).sum())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 30
    record(3, ok, f"max TV {worst:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_4_rate_distortion(record):
    start = time.perf_counter()
    worst_ba = 0.0
    for p in (0.3, 0.5):
        src = iid_source([1 - p, p])
        for D in np.linspace(0.01, p - 0.01, 10):
            got = rd_vector_source(src, 1, float(D)).R
            worst_ba = max(worst_ba, abs(got - (binary_entropy(p) - binary_entropy(float(D)))))
    worst_h = 0.0
    for p in (0.1, 0.3, 0.45):
        for T in range(1, 7):
            got = rd_vector_source(binary_symmetric_chain(p), T, 0.0).R
            worst_h = max(worst_h, abs(got - (1 + (T - 1) * binary_entropy(p)) / T))
    elapsed = time.perf_counter() - start
    ok = worst_ba <= 1e-4 and worst_h <= 1e-9 and elapsed < 30
    record(4, ok, f"BA error {worst_ba:.1e} bits, D=0 error {worst_h:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_5_envelopes(record):
    start = time.perf_counter()
    s = binary_symmetric_chain(0.3)
    log_x = math.log2(2)
    ok, rows, slack = True, 0, math.inf
    for D in (0.0, 0.05):
        for r in convergence_sweep(s, D, [2, 4, 8], [1, 2], [0.02, 0.05]):
            t = r.terms
            ok &= r.feasible and r.proxy_T == 8
            ok &= abs(t.T1) <= (r.lam + r.beta) * log_x
            ok &= abs(t.T2) <= r.tau / r.T * log_x and abs(t.T3) <= r.tau / r.T * log_x
            budget = (r.lam + r.beta) * log_x + abs(t.T2) + abs(t.T3) + abs(t.T4) + 1e-9
            ok &= r.gap <= budget
            slack = min(slack, budget - r.gap)
            rows += 1
    elapsed = time.perf_counter() - start
    ok &= rows == 24 and elapsed < 120
    record(5, ok, f"{rows} rows, smallest slack {slack:.2e} bits, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_6_achievability(record):
    start = time.perf_counter()
    base = dict(source={"states": ["0", "1"], "transition": [[0.5, 0.5], [0.5, 0.5]]},
                channel={"type": "bsc", "q": 0.02}, T=8, tau=0, beta=0.1, D=0.05,
                rate=0.5, k_list=[32, 64, 128], trials=2000, seed=20240601)
    cfg = config_from_dict(base)
    b32, b64, b128 = (simulate_block_length(cfg, k) for k in (32, 64, 128))
    neg = simulate_block_length(config_from_dict({**base, "rate": 0.95}), 64)
    elapsed = time.perf_counter() - start
    not_worse = b128.error_rate <= b32.error_rate or b128.ci[0] <= b32.ci[1]
    ok = b64.error_rate < 0.1 and not_worse and neg.error_rate >= 0.5 and elapsed < 600
    record(6, ok, f"error k=32 {b32.error_rate:.4f}, k=64 {b64.error_rate:.4f}, "
                  f"k=128 {b128.error_rate:.4f}, R=0.95 control {neg.error_rate:.4f}, {elapsed:.0f}s")
    assert ok


def test_criterion_7_blocking(record):
    start = time.perf_counter()
    parent = binary_symmetric_chain(0.3)
    z = block_process(parent, 2)
    ok, detail = True, []
    for tau, want in zip((0, 1, 2), (0.4, 0.064, 0.01024)):
        got = psi_markov(z, tau)
        brute = psi_brute_force(z, tau, 1, 1)
        ok &= got <= psi_markov(parent, tau) + 1e-9
        ok &= abs(got - want) <= 1e-9 and abs(brute - want) <= 1e-9
        detail.append(f"{got:.5g}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    record(7, ok, f"blocked psi {', '.join(detail)}, {elapsed:.2f}s")
    assert ok


def test_criterion_8_reproducibility(record, tmp_path):
    import json

    exp = tmp_path / "exp.json"
    exp.write_text(json.dumps(dict(
        source={"states": ["0", "1"], "transition": [[0.7, 0.3], [0.3, 0.7]]},
        channel={"type": "bsc", "q": 0.05}, T=3, tau=1, beta=0.05, D=0.1,
        rate=0.3, k_list=[4, 8], trials=150, seed=9)))
    commands = [
        ["psi", "bsc:0.3", "--tau-max", "3", "--brute", "1", "2", "--decomp", "2", "2"],
        ["simulate", "bsc:0.3", "--T", "2", "--tau", "1", "--k", "3", "--count", "5", "--seed", "4", "--exact-check"],
        ["rd", "bsc:0.3", "--T", "3", "--D", "0", "0.1"],
        ["bound", "bsc:0.3", "--D", "0.05", "--T", "4", "--tau", "1", "--beta", "0.05"],
        ["sweep", "bsc:0.3", "--D", "0.05", "--T", "2", "4", "--tau", "1", "--beta", "0.02", "0.95"],
        ["codesim", str(exp), "--seed", "12"],
    ]
    ok, differing = True, []
    for i, argv in enumerate(commands):
        outs = []
        for rep in "ab":
            d = tmp_path / f"{i}{rep}"
            ok &= main(argv + ["--out-dir", str(d)]) == 0
            outs.append({p.name: p.read_bytes() for p in d.iterdir() if not p.name.endswith("_manifest.json")})
        if not outs[0] or outs[0] != outs[1]:
            ok = False
            differing.append(argv[0])
    record(8, ok, f"{len(commands)} commands rerun, differing: {differing or 'none'}")
    assert ok

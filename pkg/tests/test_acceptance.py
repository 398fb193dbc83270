"""Acceptance criteria, one test each, at the published tolerances.

Each test prints a single ``PASS``/``FAIL`` line to the terminal (outside
pytest's capture) and then asserts.  Run ``python3 tests/test_acceptance.py``
to get the same lines without pytest.
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from factcheck.config import ExperimentConfig
from factcheck.estimator import add_beta_batch, oracle_add_beta, soft_update
from factcheck.harness import (
    decoder_error_exact,
    decoder_error_mc,
    optimal_weights,
    run_seed,
    sample_verdicts,
    simulate_stream,
)
from factcheck.lyapunov import descent_value, fd_gradient, lyapunov_gradient, lyapunov_value
from factcheck.meanfield import boundary_equilibria, census_distance, mean_field, ode_flow
from factcheck.model import all_verdicts, constraint_zero_census, output_prob, output_prob_cosh

PI3 = np.array([0.1, 0.2, 0.3])


def _report(number: int, title: str, ok: bool, detail: str, started: float, capsys=None) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail} [{time.perf_counter() - started:.1f}s]"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)


def criterion_1():
    rng = np.random.default_rng(101)
    worst_form = worst_norm = 0.0
    for n in range(2, 7):
        rows = all_verdicts(n)
        for x in rng.uniform(0.0, 1.0, size=(100, n)):
            a = output_prob(rows, x)
            worst_form = max(worst_form, float(np.max(np.abs(a - output_prob_cosh(rows, x)))))
            worst_norm = max(worst_norm, abs(float(a.sum()) - 1.0))
    ok = worst_form <= 1e-12 and worst_norm <= 1e-12
    return ok, f"max |product - cosh| = {worst_form:.2e}, max |sum - 1| = {worst_norm:.2e} (tol 1e-12)"


def criterion_2():
    zeros = constraint_zero_census(PI3, step=1e-3)
    expected = [PI3, 1.0 - PI3]
    matched = all(any(np.max(np.abs(z - e)) <= 1e-6 for z in zeros) for e in expected)
    clean = all(any(np.max(np.abs(z - e)) <= 1e-6 for e in expected) for z in zeros)
    ok = matched and clean and len(zeros) == 2
    return ok, f"{len(zeros)} zeros found: {[np.round(z, 9).tolist() for z in zeros]}"


def criterion_3():
    rng = np.random.default_rng(103)
    N = 10**6
    worst_z = worst_sup = worst_dev = 0.0
    for k in range(20):
        x, pi = rng.uniform(0.0, 1.0, 4), rng.uniform(0.0, 1.0, 4)
        ft = soft_update(sample_verdicts(pi, N, seed=1000 + k), x)
        dev = ft - mean_field(x, pi)
        sd = dev.std(axis=0)
        worst_z = max(worst_z, float(np.max(np.abs(dev.mean(axis=0)) / (sd / math.sqrt(N)))))
        worst_sup = max(worst_sup, float(np.max(np.abs(ft))))
        worst_dev = max(worst_dev, float(np.max(np.abs(dev))))
    ok = worst_z <= 4.0 and worst_sup <= 2.0 and worst_dev <= 2.0
    return ok, f"max |mean|/(sigma/sqrt N) = {worst_z:.2f} (tol 4), max |f~| = {worst_sup:.3f}, max |f~ - f| = {worst_dev:.3f} (tol 2)"


def criterion_4():
    rng = np.random.default_rng(104)
    worst_descent = -math.inf
    worst_grad = 0.0
    for n in range(2, 7):
        pi = rng.uniform(0.0, 1.0, n)
        for x in rng.uniform(0.0, 1.0, size=(10**4, n)):
            worst_descent = max(worst_descent, descent_value(x, pi))
            closed = lyapunov_gradient(x, pi)
            err = np.max(np.abs(closed - fd_gradient(x, pi))) / np.max(np.abs(closed))
            worst_grad = max(worst_grad, float(err))
    ok = worst_descent <= 1e-14 and worst_grad <= 1e-5
    return ok, f"max descent = {worst_descent:.2e} (tol 1e-14), max gradient rel. error = {worst_grad:.2e} (tol 1e-5)"


def criterion_5():
    rng = np.random.default_rng(105)
    worst_res = worst_gap = 0.0
    for _ in range(10):
        pi = rng.uniform(0.0, 1.0, 5)
        for b in boundary_equilibria(pi):
            worst_res = max(worst_res, float(np.max(np.abs(mean_field(b, pi)))))
            i = b.region.index
            near = []
            for eps in (1e-6, 1e-9):
                y = b.values.copy()
                y[i] = eps if b.values[i] == 0.0 else 1.0 - eps
                near.append(lyapunov_value(y, pi))
            limit = near[1] + (near[1] - near[0]) * 1e-9 / (1e-6 - 1e-9)
            worst_gap = max(worst_gap, abs(limit - lyapunov_value(b, pi)))
    ok = worst_res <= 1e-12 and worst_gap <= 1e-4
    return ok, f"max boundary residual = {worst_res:.2e} (tol 1e-12), max |closed form - limit| = {worst_gap:.2e} (tol 1e-4)"


def criterion_6():
    rng = np.random.default_rng(106)
    worst = 0.0
    for x0 in rng.uniform(0.0, 1.0, size=(50, 3)):
        # ode_flow raises FlowError if V rises by more than 1e-8 (1 + |V|) in a step
        flow = ode_flow(x0, PI3, duration=500.0, step=0.1, record_every=100)
        worst = max(worst, census_distance(flow.endpoint, PI3))
    ok = worst <= 1e-3
    return ok, f"V non-increasing on all 50 flows, max endpoint census distance = {worst:.2e} (tol 1e-3)"


def criterion_7():
    T = 10**6
    passing, lines = 0, []
    for seed in range(20):
        cfg = ExperimentConfig(pi=tuple(PI3), seed=seed, horizon=T)
        _, s = run_seed(cfg)
        late = s["last_reset_time"] is not None and s["last_reset_time"] > 0.1 * T
        good = s["census_distance"] <= 0.05 and not late
        passing += good
        lines.append(
            f"seed {seed}: census distance {s['census_distance']:.4f}, resets {s['reset_count']}, last reset {s['last_reset_time']}"
        )
    ok = passing >= 18
    return ok, f"{passing}/20 seeds within 0.05 and without late resets (need 18)\n    " + "\n    ".join(lines)


def criterion_8():
    rng = np.random.default_rng(108)
    pi = rng.uniform(0.0, 1.0, 4)
    alpha = optimal_weights(pi)
    best = decoder_error_exact(pi, alpha, 0.0)
    beaten = 0
    for _ in range(10**3):
        a = rng.normal(size=4) * rng.uniform(0.1, 5.0)
        tau = rng.normal() * rng.uniform(0.0, 3.0)
        beaten += decoder_error_exact(pi, a, tau) < best
    est, se = decoder_error_mc(pi, alpha, 0.0, 10**6, seed=8)
    ok = beaten == 0 and abs(est - best) <= 4 * se
    return ok, f"exact optimal error {best:.6f}, competitors below it: {beaten}/1000, MC {est:.6f} (|z| = {abs(est - best) / se:.2f}, tol 4)"


def criterion_9():
    pi = PI3
    worst = 0.0
    for seed in range(5):
        stream = simulate_stream(pi, 10**4, seed=900 + seed)
        beta = 0.5 * seed
        q = np.full(3, 0.5)
        mistakes = np.zeros(3)
        for t in range(len(stream)):
            r, s = stream.verdicts[t], stream.labels[t]
            q = oracle_add_beta(q, s, r, t, beta)
            mistakes += r != s
            worst = max(worst, float(np.max(np.abs(q - add_beta_batch(mistakes, t + 1, beta)))))
    T = 10**5
    stream = simulate_stream(pi, T, seed=909)
    q = add_beta_batch((stream.verdicts != stream.labels[:, None]).sum(axis=0), T, 1.0)
    band = 4 * np.sqrt(pi * (1 - pi) / T)
    ok = worst <= 1e-12 and bool(np.all(np.abs(q - pi) <= band))
    return ok, f"max |recursion - batch| = {worst:.2e} (tol 1e-12), |Q(T) - pi| / band = {np.round(np.abs(q - pi) / band, 3).tolist()}"


CRITERIA = [
    (1, "distribution correctness", criterion_1),
    (2, "indistinguishability census", criterion_2),
    (3, "martingale decomposition", criterion_3),
    (4, "descent certificate", criterion_4),
    (5, "boundary formulas", criterion_5),
    (6, "ODE convergence", criterion_6),
    (7, "estimator convergence at desk scale", criterion_7),
    (8, "decoder optimality", criterion_8),
    (9, "add-beta oracle baseline", criterion_9),
]


@pytest.mark.acceptance
@pytest.mark.parametrize("number,title,check", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, title, check, capsys):
    started = time.perf_counter()
    ok, detail = check()
    _report(number, title, ok, detail, started, capsys)
    assert ok, detail


if __name__ == "__main__":
    failures = 0
    for number, title, check in CRITERIA:
        started = time.perf_counter()
        ok, detail = check()
        _report(number, title, ok, detail, started)
        failures += not ok
    sys.exit(1 if failures else 0)

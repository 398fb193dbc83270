"""Seeded simulation, decoder evaluation, experiment runs and the verification sweep.

Randomness comes from NumPy's Philox4x64 counter-based bit generator.  The
source label and every agent have their own substream, keyed by
``SeedSequence(seed, spawn_key=(k,))`` with ``k = 0`` for the source and
``k = i + 1`` for agent ``i``.  Uniforms are derived from the raw 64-bit
output (top 53 bits), not from ``Generator`` methods, so the streams only
depend on the Philox bit stream itself.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .config import ExperimentConfig
from .estimator import TruncationFamily, Trajectory, run, soft_update, soft_update_ratio_form
from .model import (
    all_verdicts,
    check_enumerable,
    constraint_zero_census,
    distribution,
    interior_log_odds,
    output_prob,
    output_prob_cosh,
    require_interior,
)

RNG_NAME = "numpy.random.Philox (Philox4x64-10), raw 53-bit uniforms"
_CHUNK = 1 << 16


def _substream(seed: int, key: int) -> np.random.Philox:
    return np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,)))


def _uniforms(bitgen: np.random.Philox, size: int) -> np.ndarray:
    raw = bitgen.random_raw(size)
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class StreamSample:
    t: int
    s: int
    r: np.ndarray


@dataclass
class Stream:
    """Hidden labels ``labels[t]`` and verdicts ``verdicts[t]`` for rounds ``t = 1..T``."""

    labels: np.ndarray  # (T,) int8
    verdicts: np.ndarray  # (T, n) int8

    def __len__(self) -> int:
        return self.labels.size

    def __iter__(self) -> Iterator[StreamSample]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> StreamSample:
        return StreamSample(k + 1, int(self.labels[k]), self.verdicts[k])

    def flipped(self) -> "Stream":
        return Stream(-self.labels, -self.verdicts)


def simulate_stream(pi, T: int, seed: int) -> Stream:
    """Rademacher source through independent binary symmetric channels."""
    pv = require_interior(pi, "pi").values
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    n = pv.size
    labels = np.empty(T, dtype=np.int8)
    verdicts = np.empty((T, n), dtype=np.int8)
    source = _substream(seed, 0)
    agents = [_substream(seed, i + 1) for i in range(n)]
    for start in range(0, T, _CHUNK):
        size = min(_CHUNK, T - start)
        s = np.where(_uniforms(source, size) < 0.5, 1, -1).astype(np.int8)
        labels[start : start + size] = s
        for i, gen in enumerate(agents):
            flip = _uniforms(gen, size) < pv[i]
            verdicts[start : start + size, i] = np.where(flip, -s, s)
    return Stream(labels, verdicts)


def sample_verdicts(pi, size: int, seed: int) -> np.ndarray:
    """``size`` i.i.d. draws of the verdict vector (labels discarded)."""
    return simulate_stream(pi, size, seed).verdicts


# --------------------------------------------------------------------------
# linear-threshold decoders


def _decide(score: np.ndarray) -> np.ndarray:
    # sign with the tie sent to -1
    return np.where(score > 0.0, 1, -1)


def decoder_error_exact(pi, alpha, tau: float = 0.0) -> float:
    """Exact ``P(sgn(<alpha, R> - tau) != S)`` by enumerating verdicts and labels."""
    pv = require_interior(pi, "pi").values
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != pv.shape:
        raise ValueError(f"alpha has shape {alpha.shape}, expected {pv.shape}")
    check_enumerable(pv.size)
    rows = all_verdicts(pv.size)
    decision = _decide(rows @ alpha - tau)
    err = 0.0
    for s in (1, -1):
        p_given_s = np.prod(np.where(rows == s, 1.0 - pv, pv), axis=1)
        err += 0.5 * float(p_given_s[decision != s].sum())
    return err


def decoder_error_mc(pi, alpha, tau: float, T: int, seed: int) -> tuple[float, float]:
    """Monte Carlo error rate and its standard error."""
    stream = simulate_stream(pi, T, seed)
    decision = _decide(stream.verdicts @ np.asarray(alpha, dtype=float) - tau)
    wrong = decision != stream.labels
    p = float(wrong.mean())
    return p, math.sqrt(max(p * (1.0 - p), 1e-300) / T)


def optimal_weights(pi) -> np.ndarray:
    return interior_log_odds(require_interior(pi, "pi").values)


# --------------------------------------------------------------------------
# experiments


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def summarize(config: ExperimentConfig, traj: Trajectory) -> dict:
    from .meanfield import census_distance

    final = np.asarray(traj.final.P)
    pi = np.asarray(config.pi)
    return {
        "config": config.to_dict(),
        "steps": traj.steps,
        "stream_exhausted": traj.truncated,
        "final_P": final.tolist(),
        "final_gamma": traj.final.gamma,
        "dist_pi": float(np.linalg.norm(final - pi)),
        "dist_1mpi": float(np.linalg.norm(final - (1.0 - pi))),
        "dist_half": float(np.linalg.norm(final - 0.5)),
        "census_distance": census_distance(final, pi),
        "reset_count": traj.reset_count,
        "last_reset_time": traj.last_reset_time,
        "rng": RNG_NAME,
    }


def run_experiment(config: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> dict:
    """Simulate, estimate and write ``trajectory.csv``, ``resets.jsonl``, ``summary.json``."""
    out = Path(out_dir if out_dir is not None else config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    stream = simulate_stream(config.pi, config.horizon, config.seed)
    traj = run(config, stream)
    summary = summarize(config, traj)
    _write(out / "trajectory.csv", traj.to_csv())
    _write(out / "resets.jsonl", traj.resets_jsonl())
    _write(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    return summary


def run_seed(config: ExperimentConfig) -> tuple[Trajectory, dict]:
    """In-memory variant of :func:`run_experiment` for sweeps."""
    stream = simulate_stream(config.pi, config.horizon, config.seed)
    traj = run(config, stream)
    return traj, summarize(config, traj)


# --------------------------------------------------------------------------
# verification sweep

CHECKS = (
    "normalization",
    "form_equivalence",
    "martingale",
    "descent",
    "gradient_consistency",
    "boundary_equilibria",
    "lemma1_census",
    "reset_finiteness",
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_violation: float
    tolerance: float
    detail: str = ""
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "skipped": self.skipped,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass
class VerifyReport:
    n: int
    seed: int
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    @property
    def checks_run(self) -> int:
        return sum(not c.skipped for c in self.checks)

    @property
    def max_violation(self) -> float:
        """Largest violation relative to its tolerance, over the checks that ran."""
        ratios = [c.max_violation / c.tolerance for c in self.checks if not c.skipped]
        return max(ratios, default=0.0)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL")
            out.append(f"{status} {c.name}: max_violation={c.max_violation:.3e} tol={c.tolerance:.1e} {c.detail}".rstrip())
        return out

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    SWEEP_HEADER = "n,seed,checks_run,max_violation"

    def sweep_row(self) -> str:
        return f"{self.n},{self.seed},{self.checks_run},{self.max_violation!r}"


def _check(name: str, violation: float, tol: float, detail: str = "") -> CheckResult:
    violation = float(violation)
    return CheckResult(name, bool(violation <= tol), violation, tol, detail)


def verify_suite(
    config: ExperimentConfig,
    samples: int = 200,
    draws: int = 100_000,
    distribution_hook: Callable[[np.ndarray], np.ndarray] | None = None,
) -> VerifyReport:
    """Run the certificate sweep for ``config.pi`` and ``config.seed``.

    ``samples`` random interior points feed the pointwise checks and
    ``draws`` simulated verdicts feed the martingale check.
    ``distribution_hook`` replaces ``g_x`` in the normalization check; it
    exists so that a corrupted distribution can be shown to fail.
    """
    from .lyapunov import descent_value, fd_gradient, lyapunov_gradient
    from .meanfield import boundary_equilibria, mean_field

    pi = np.asarray(config.pi)
    n = pi.size
    rng = np.random.Generator(_substream(config.seed, n + 1))
    xs = rng.uniform(0.0, 1.0, size=(samples, n))
    xs = np.clip(xs, 1e-9, 1.0 - 1e-9)
    g_of = distribution_hook or distribution
    results = []

    results.append(_check("normalization", max(abs(float(np.sum(g_of(x))) - 1.0) for x in xs), 1e-12))

    rows = all_verdicts(n)
    form = 0.0
    for x in xs:
        a, b = output_prob(rows, x), output_prob_cosh(rows, x)
        form = max(form, float(np.max(np.abs(a - b))))
        scores = np.abs(rows @ interior_log_odds(x))
        ok = scores <= 500.0
        if ok.any():
            diff = soft_update(rows[ok], x) - soft_update_ratio_form(rows[ok], x)
            form = max(form, float(np.max(np.abs(diff))))
    results.append(_check("form_equivalence", form, 1e-10))

    # z-score of the sample mean of f~ - f, plus the sup-norm bound
    r = sample_verdicts(pi, draws, config.seed)
    worst_z, worst_sup = 0.0, 0.0
    for x in xs[: min(5, samples)]:
        dev = soft_update(r, x) - mean_field(x, pi)
        sd = dev.std(axis=0)
        z = np.abs(dev.mean(axis=0)) / np.maximum(4.0 * sd / math.sqrt(draws), 1e-300)
        worst_z = max(worst_z, float(z.max()))
        worst_sup = max(worst_sup, float(np.max(np.abs(dev))))
    mart = _check("martingale", worst_z, 1.0, f"sup|f~-f|={worst_sup:.3f}")
    if worst_sup > 2.0:
        mart.passed = False
    results.append(mart)

    results.append(_check("descent", max(descent_value(x, pi) for x in xs), 1e-14))

    grad = 0.0
    for x in xs:
        closed = lyapunov_gradient(x, pi)
        diff = np.max(np.abs(closed - fd_gradient(x, pi)))
        grad = max(grad, float(diff / max(np.max(np.abs(closed)), 1e-300)))
    results.append(_check("gradient_consistency", grad, 1e-5))

    res = max(float(np.max(np.abs(mean_field(b, pi)))) for b in boundary_equilibria(pi))
    results.append(_check("boundary_equilibria", res, 1e-12))

    if n == 3:
        zeros = constraint_zero_census(pi)
        expected = [pi, 1.0 - pi]
        miss = max(min(float(np.max(np.abs(z - e))) for z in zeros) for e in expected) if zeros else math.inf
        extra = max((min(float(np.max(np.abs(z - e))) for e in expected) for z in zeros), default=0.0)
        results.append(_check("lemma1_census", max(miss, extra), 1e-6, f"zeros={len(zeros)}"))
    else:
        results.append(CheckResult("lemma1_census", True, 0.0, 1e-6, "census scan is defined for n=3", skipped=True))

    results.append(_reset_finiteness(config))
    return VerifyReport(n, config.seed, results)


def _reset_finiteness(config: ExperimentConfig) -> CheckResult:
    """Every recorded estimate lies in K_gamma and the reset log is consistent."""
    traj, _ = run_seed(config.with_overrides(mode="truncated"))
    family = TruncationFamily(config.trunc_c, config.trunc_gamma)
    outside = 0
    for rec in traj.records:
        if not family.contains(rec.gamma, rec.P):
            outside += 1
    consistent = traj.reset_count == traj.final.gamma and traj.reset_count < max(traj.steps, 1) + 1
    violation = float(outside + (0 if consistent else 1))
    return _check(
        "reset_finiteness",
        violation,
        0.5,  # violation is a count
        f"resets={traj.reset_count} last_reset={traj.last_reset_time}",
    )

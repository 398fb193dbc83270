"""Exact mean-field vector field, its flow, and its equilibria.

``f(x) = E_{R ~ g_pi}[f~(R, x)]`` is evaluated by summing over all ``2**n``
verdict vectors.  On singly-extreme points the closed boundary form is used:
the extreme coordinate is stationary and every other coordinate relaxes
toward the agreement probability ``h(pi_i, h(x_i, pi_j))``.

Sign convention: ``f_i = -x_i (1 - x_i) dV/dx_i`` everywhere (interior and
boundary), i.e. the flow descends the KL Lyapunov function.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .estimator import soft_update
from .model import (
    UnreliabilityVector,
    all_verdicts,
    check_enumerable,
    distribution,
    h,
    require_interior,
    require_valid,
)

RESIDUAL_TOL = 1e-10
DEDUP_TOL = 1e-6
FD_STEP = 1e-6
CLAMP = 1e-12


class FlowError(RuntimeError):
    """Integration aborted because the Lyapunov function increased."""


@lru_cache(maxsize=64)
def _context(pi: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    rows = all_verdicts(len(pi)).astype(float)
    g = distribution(pi)
    return rows, g


def _pi_tuple(pi) -> tuple[float, ...]:
    p = require_interior(pi, "pi")
    return tuple(float(v) for v in p.values)


def mean_field_batch(X: np.ndarray, pi) -> np.ndarray:
    """``f`` at each row of ``X`` (all rows interior), vectorised."""
    rows, g = _context(_pi_tuple(pi))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ell = np.log1p(-X) - np.log(X)
    score = ell @ rows.T  # (m, 2**n)
    soft = expit(-rows[None, :, :] * score[:, :, None])
    return np.einsum("k,mkn->mn", g, soft) - X


def _boundary_field(v: np.ndarray, i: int, pv: np.ndarray) -> np.ndarray:
    out = h(pv[i], h(v[i], pv)) - v
    out[i] = 0.0
    return out


def mean_field(x, pi) -> np.ndarray:
    """Exact mean field ``f(x)`` for the true parameters ``pi``."""
    x = require_valid(x)
    pt = _pi_tuple(pi)
    if x.n != len(pt):
        raise ValueError(f"dimension mismatch: {x.n} vs {len(pt)}")
    check_enumerable(x.n)
    if x.region.is_extreme:
        return _boundary_field(np.array(x.values), x.region.index, np.array(pt))
    return mean_field_batch(x.values[None, :], pt)[0]


def mean_field_enumerated(x, pi) -> np.ndarray:
    """``f(x)`` as the ``g_pi``-weighted sum of :func:`soft_update` over all verdicts.

    Works on singly-extreme points too, through the extended update, and so
    checks the boundary closed form independently.
    """
    x = require_valid(x)
    rows, g = _context(_pi_tuple(pi))
    return g @ soft_update(rows.astype(np.int8), x)


def boundary_equilibria(pi) -> list[UnreliabilityVector]:
    """The ``2n`` singly-extreme zeros of ``f``.

    For extreme coordinate ``i`` at value ``e`` in {0, 1}, every other
    coordinate is ``(1 - e) h(pi_i, 1 - pi_j) + e h(pi_i, pi_j)``.
    """
    pv = np.array(_pi_tuple(pi))
    points = []
    for i in range(pv.size):
        for e in (0.0, 1.0):
            x = (1.0 - e) * h(pv[i], 1.0 - pv) + e * h(pv[i], pv)
            x[i] = e
            points.append(UnreliabilityVector.from_values(x))
    return points


def equilibrium_bounds_check(x, pi, tol: float = 1e-12) -> bool:
    """Pairwise bounds ``|x_i - x_j| <= h(pi_i, 1 - pi_j) <= x_i + x_j`` (within ``tol``)."""
    xv = np.asarray(getattr(x, "values", x), dtype=float)
    pv = np.asarray(getattr(pi, "values", pi), dtype=float)
    if xv.shape != pv.shape:
        raise ValueError(f"dimension mismatch: {xv.shape} vs {pv.shape}")
    i, j = np.triu_indices(xv.size, k=1)
    mid = h(pv[i], 1.0 - pv[j])
    return bool(np.all(np.abs(xv[i] - xv[j]) <= mid + tol) and np.all(mid <= xv[i] + xv[j] + tol))


# --------------------------------------------------------------------------
# flow


@dataclass
class FlowTrajectory:
    times: np.ndarray
    states: np.ndarray  # (samples, n)
    V: np.ndarray
    step: float
    clamp: float
    clamp_events: int = 0
    held_coordinate: int | None = None

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self) -> str:
        n = self.states.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", *(f"x_{i}" for i in range(1, n + 1)), "V"])
        for s, x, v in zip(self.times, self.states, self.V):
            writer.writerow([repr(float(s)), *(repr(float(c)) for c in x), repr(float(v))])
        return buf.getvalue()


def ode_flow(
    x0,
    pi,
    duration: float,
    step: float,
    clamp: float = CLAMP,
    record_every: int = 1,
    check_descent: bool = True,
) -> FlowTrajectory:
    """Integrate ``dx/ds = f(x)`` with fixed-step RK4.

    Iterates are clamped to ``[clamp, 1 - clamp]``.  A singly-extreme start
    keeps its extreme coordinate fixed and follows the boundary field.  ``V`` is
    checked after every step and must not rise by more than
    ``1e-8 * (1 + |V|)``.
    """
    from .lyapunov import lyapunov_value

    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    x0 = require_valid(x0)
    pt = _pi_tuple(pi)
    pv = np.array(pt)
    held = x0.region.index if x0.region.is_extreme else None

    if held is None:

        def field_at(v):
            return mean_field_batch(v[None, :], pt)[0]

    else:

        def field_at(v):
            return _boundary_field(v, held, pv)

    lo, hi = clamp, 1.0 - clamp
    free = np.ones(x0.n, dtype=bool)
    if held is not None:
        free[held] = False

    def clip(v):
        nonlocal clamp_events
        w = v.copy()
        c = np.clip(w[free], lo, hi)
        clamp_events += int(np.count_nonzero(c != w[free]))
        w[free] = c
        return w

    clamp_events = 0
    nsteps = int(math.ceil(duration / step - 1e-9))
    x = np.array(x0.values, dtype=float)
    v_prev = lyapunov_value(x, pt)
    times, states, values = [0.0], [x.copy()], [v_prev]
    for k in range(1, nsteps + 1):
        k1 = field_at(x)
        k2 = field_at(clip(x + 0.5 * step * k1))
        k3 = field_at(clip(x + 0.5 * step * k2))
        k4 = field_at(clip(x + step * k3))
        x = clip(x + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        v = lyapunov_value(x, pt)
        if check_descent and v > v_prev + 1e-8 * (1.0 + abs(v_prev)):
            raise FlowError(
                f"V rose from {v_prev!r} to {v!r} at s={k * step:g} (x={x.tolist()}); "
                f"reduce the step below {step:g}"
            )
        v_prev = v
        if k % record_every == 0 or k == nsteps:
            times.append(k * step)
            states.append(x.copy())
            values.append(v)
    return FlowTrajectory(
        times=np.array(times),
        states=np.array(states),
        V=np.array(values),
        step=step,
        clamp=clamp,
        clamp_events=clamp_events,
        held_coordinate=held,
    )


# --------------------------------------------------------------------------
# equilibria


@dataclass
class InteriorEquilibrium:
    x: UnreliabilityVector
    residual: float
    basin: dict[str, int] = field(default_factory=dict)

    @property
    def tag(self) -> str:
        # empirical: only attracting points collect damped fixed-point starts
        return "attracting" if self.basin.get("fixed_point", 0) > 0 else "newton_only"


@dataclass
class EquilibriumSet:
    interior: list[InteriorEquilibrium]
    boundary: list[UnreliabilityVector]
    metadata: dict = field(default_factory=dict)

    @property
    def interior_points(self) -> list[np.ndarray]:
        return [np.asarray(e.x.values) for e in self.interior]

    def census(self) -> list[np.ndarray]:
        return self.interior_points + [np.asarray(b.values) for b in self.boundary]

    def contains(self, x, tol: float = DEDUP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return any(np.max(np.abs(p - x)) <= tol for p in self.interior_points)

    def to_dict(self) -> dict:
        return {
            "interior": [
                {"x": e.x.values.tolist(), "residual": e.residual, "basin": e.basin, "tag": e.tag}
                for e in self.interior
            ],
            "boundary": [{"x": b.values.tolist()} for b in self.boundary],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def fd_jacobian(x: np.ndarray, pi, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference Jacobian of ``f`` at an interior point."""
    x = np.asarray(x, dtype=float)
    n = x.size
    probes = np.concatenate([x + step * np.eye(n), x - step * np.eye(n)])
    vals = mean_field_batch(probes, pi)
    return (vals[:n] - vals[n:]).T / (2.0 * step)


def newton_polish(
    x: np.ndarray, pi, max_iter: int = 60, tol: float = RESIDUAL_TOL
) -> tuple[np.ndarray, float] | None:
    """Damped Newton on ``f = 0`` from ``x``.

    Iterates stay at least ``2 * FD_STEP`` inside the cube so the difference
    stencil is defined; returns None if the solve stalls or is pushed there.
    """
    margin = 2.0 * FD_STEP
    x = np.clip(np.asarray(x, dtype=float), margin, 1.0 - margin)
    fx = mean_field_batch(x[None, :], pi)[0]
    res = float(np.max(np.abs(fx)))
    for _ in range(max_iter):
        if res <= tol * 1e-2:
            break
        try:
            delta = np.linalg.solve(fd_jacobian(x, pi), -fx)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-6:
            cand = x + lam * delta
            if np.all((cand > margin) & (cand < 1.0 - margin)):
                fc = mean_field_batch(cand[None, :], pi)[0]
                rc = float(np.max(np.abs(fc)))
                if rc < res or rc <= tol * 1e-2:
                    x, fx, res = cand, fc, rc
                    break
            lam *= 0.5
        else:
            break
    if res > tol:
        return None
    return x, res


def find_equilibria(
    pi,
    multistart: int = 200,
    seed: int = 0,
    alpha: float = 0.5,
    max_iter: int = 10**5,
    switch_tol: float = 1e-9,
    boundary_eps: float = 1e-9,
    dedup: float = DEDUP_TOL,
    newton_route: bool = True,
) -> EquilibriumSet:
    """Numerical census of the interior zeros of ``f``, plus the boundary zeros.

    Every uniform random start runs damped fixed-point iteration
    ``x <- x + alpha f(x)`` until ``|f| <= switch_tol`` and is then Newton
    polished.  Fixed-point iteration only reaches attracting zeros, so each
    start additionally seeds a direct damped-Newton solve, which also finds
    saddles.  Starts whose fixed-point iterate drifts to within
    ``boundary_eps`` of a face are counted as boundary-bound.
    """
    pt = _pi_tuple(pi)
    n = len(pt)
    if n > 8:
        raise ValueError(f"find_equilibria supports n <= 8, got {n}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    starts = rng.uniform(0.0, 1.0, size=(multistart, n))
    starts = np.clip(starts, 1e-6, 1.0 - 1e-6)

    found: list[InteriorEquilibrium] = []

    def register(point: np.ndarray, res: float, route: str) -> None:
        for e in found:
            if np.max(np.abs(e.x.values - point)) <= dedup:
                e.basin[route] = e.basin.get(route, 0) + 1
                return
        found.append(InteriorEquilibrium(UnreliabilityVector.from_values(point), res, {route: 1}))

    # damped fixed point, all starts at once
    X = starts.copy()
    active = np.ones(multistart, dtype=bool)
    converged = np.zeros(multistart, dtype=bool)
    boundary_bound = np.zeros(multistart, dtype=bool)
    iterations = 0
    while active.any() and iterations < max_iter:
        idx = np.flatnonzero(active)
        F = mean_field_batch(X[idx], pt)
        done = np.max(np.abs(F), axis=1) <= switch_tol
        converged[idx[done]] = True
        active[idx[done]] = False
        step_idx = idx[~done]
        X[step_idx] = X[step_idx] + alpha * F[~done]
        near = np.any((X[step_idx] < boundary_eps) | (X[step_idx] > 1.0 - boundary_eps), axis=1)
        boundary_bound[step_idx[near]] = True
        active[step_idx[near]] = False
        iterations += 1

    dropped = 0
    for k in np.flatnonzero(converged):
        out = newton_polish(X[k], pt)
        if out is None:
            dropped += 1
            continue
        register(out[0], out[1], "fixed_point")
    nonconverged = int(np.count_nonzero(active))

    newton_failed = 0
    if newton_route:
        for k in range(multistart):
            out = newton_polish(starts[k], pt, max_iter=100)
            if out is None:
                newton_failed += 1
                continue
            register(out[0], out[1], "newton")

    found.sort(key=lambda e: tuple(e.x.values))
    return EquilibriumSet(
        interior=found,
        boundary=boundary_equilibria(pt),
        metadata={
            "pi": list(pt),
            "multistart": multistart,
            "seed": seed,
            "alpha": alpha,
            "fixed_point_converged": int(np.count_nonzero(converged)),
            "boundary_bound": int(np.count_nonzero(boundary_bound)),
            "nonconverged": nonconverged,
            "polish_failed": dropped,
            "newton_failed": newton_failed,
            "fixed_point_iterations": iterations,
        },
    )


def census_points(pi) -> list[np.ndarray]:
    """``{pi, 1 - pi, 1/2} ∪ E_boundary``, the reference set for census distances."""
    pv = np.array(_pi_tuple(pi))
    pts = [pv, 1.0 - pv, np.full(pv.size, 0.5)]
    pts += [np.asarray(b.values) for b in boundary_equilibria(pv)]
    return pts


def census_distance(x, pi) -> float:
    """Euclidean distance from ``x`` to the nearest census point."""
    xv = np.asarray(getattr(x, "values", x), dtype=float)
    return float(min(np.linalg.norm(xv - p) for p in census_points(pi)))

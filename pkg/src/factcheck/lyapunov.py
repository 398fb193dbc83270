"""KL Lyapunov function ``V(x) = D_KL(g_pi || g_x)`` and its descent certificate."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .meanfield import boundary_equilibria, equilibrium_bounds_check, mean_field
from .model import (
    check_enumerable,
    cross_entropy_term,
    distribution,
    h,
    log_distribution,
    require_interior,
    require_valid,
)

FD_REL_STEP = 1e-4
FD_STEP_BOUNDARY = 1e-8
RESIDUAL_TOL = 1e-10


def _kl_sum(g_pi: np.ndarray, log_pi: np.ndarray, log_x: np.ndarray) -> float:
    terms = g_pi * (log_pi - log_x)
    # exactly rounded, so the order of the 2**n terms does not matter
    return math.fsum(terms[np.argsort(-np.abs(terms))].tolist())


def c_pi(pi) -> float:
    """``E_{R ~ g_pi}[log g_pi(R)]``, the negative entropy of the verdict distribution."""
    pi = require_interior(pi, "pi")
    check_enumerable(pi.n)
    g = distribution(pi)
    return math.fsum((g * log_distribution(pi)).tolist())


def lyapunov_value_enumerated(x, pi) -> float:
    """``V`` by direct KL enumeration, using the extended ``g_x`` on the boundary."""
    x = require_valid(x)
    pi = require_interior(pi, "pi")
    check_enumerable(pi.n)
    return max(0.0, _kl_sum(distribution(pi), log_distribution(pi), log_distribution(x)))


def boundary_value(x, pi) -> float:
    """Closed form on a singly-extreme point at coordinate ``i``:
    ``C_pi + log 2 + sum_{k != i} H_{h(pi_i, pi_k)}(h(x_i, x_k))``.
    """
    x = require_valid(x)
    pi = require_interior(pi, "pi")
    if not x.region.is_extreme:
        raise ValueError("boundary_value needs a singly-extreme point")
    i = x.region.index
    xv, pv = x.values, pi.values
    terms = [c_pi(pi), math.log(2.0)]
    for k in range(x.n):
        if k != i:
            terms.append(cross_entropy_term(h(pv[i], pv[k]), h(xv[i], xv[k])))
    return math.fsum(terms)


def lyapunov_value(x, pi) -> float:
    """``V(x) = D_KL(g_pi || g_x)``; finite on interior and singly-extreme points."""
    x = require_valid(x)
    if x.region.is_extreme:
        return boundary_value(x, pi)
    return lyapunov_value_enumerated(x, pi)


def lyapunov_gradient(x, pi) -> np.ndarray:
    """``dV/dx_i = -f_i(x) / (x_i (1 - x_i))`` on interior points.

    Singly-extreme points have no closed form for the extreme coordinate here;
    they fall back to :func:`fd_gradient`, one-sided at that coordinate.
    """
    x = require_valid(x)
    if x.region.is_extreme:
        return fd_gradient(x, pi)
    v = x.values
    return -mean_field(x, pi) / (v * (1.0 - v))


def fd_gradient(x, pi, rel_step: float = FD_REL_STEP, boundary_step: float = FD_STEP_BOUNDARY) -> np.ndarray:
    """Finite-difference gradient of ``V``.

    Central differences with step ``rel_step * min(x_k, 1 - x_k)``, so the
    step shrinks with the distance to the face where ``V`` curves sharply.  At
    an extreme coordinate, the one-sided quotient into the cube with
    ``boundary_step``.
    """
    x = require_valid(x)
    v = np.array(x.values)
    base = lyapunov_value(x, pi)
    grad = np.empty(x.n)
    for k in range(x.n):
        if x.region.is_extreme and k == x.region.index:
            direction = 1.0 if v[k] == 0.0 else -1.0
            probe = v.copy()
            probe[k] += direction * boundary_step
            grad[k] = (lyapunov_value(probe, pi) - base) / (direction * boundary_step)
            continue
        hk = rel_step * min(v[k], 1.0 - v[k])
        up, down = v.copy(), v.copy()
        up[k] += hk
        down[k] -= hk
        grad[k] = (lyapunov_value(up, pi) - lyapunov_value(down, pi)) / (up[k] - down[k])
    return grad


def descent_value(x, pi) -> float:
    """``<grad V, f> = -sum f_i**2 / (x_i (1 - x_i))``; extreme coordinates contribute 0."""
    x = require_valid(x)
    f = mean_field(x, pi)
    v = x.values
    free = np.ones(x.n, dtype=bool)
    if x.region.is_extreme:
        free[x.region.index] = False
    return -float(np.sum(f[free] ** 2 / (v[free] * (1.0 - v[free]))))


@dataclass
class LevelConstants:
    M_min: float
    boundary_minima: np.ndarray  # infimum of V over each boundary face family
    boundary_equilibrium_values: np.ndarray  # V at the 2n boundary zeros

    def to_dict(self) -> dict:
        return {
            "M_min": self.M_min,
            "boundary_minima": self.boundary_minima.tolist(),
            "boundary_equilibrium_values": self.boundary_equilibrium_values.tolist(),
        }


def level_constants(pi) -> LevelConstants:
    """Lowest level at which a sublevel set of ``V`` on the open cube stops being closed.

    On the faces with ``x_i`` extreme, ``V`` is at least
    ``C_pi + log 2 + sum_{k != i} H_a(a)`` with ``a = h(pi_i, pi_k)``; the
    minimum over ``i`` is ``M_min``.
    """
    pi = require_interior(pi, "pi")
    pv = pi.values
    base = c_pi(pi) + math.log(2.0)
    minima = np.empty(pi.n)
    for i in range(pi.n):
        minima[i] = base + math.fsum(
            cross_entropy_term(h(pv[i], pv[k]), h(pv[i], pv[k])) for k in range(pi.n) if k != i
        )
    eq_values = np.array([lyapunov_value(b, pi) for b in boundary_equilibria(pi)])
    return LevelConstants(float(minima.min()), minima, eq_values)


def sublevel_escape_sequence(pi, level: float, i: int | None = None, ks=range(1, 13)):
    """Interior points ``x^(k)`` with ``x_i = 10**-k`` and ``V(x^(k)) <= level``.

    The other coordinates sit at the minimiser of ``V`` on the face
    ``x_i = 0``; for ``level > M_min`` the values eventually drop below
    ``level`` while ``x_i -> 0``, so the sublevel set is not closed in the
    open cube.  Returns ``(points, values)``.
    """
    pi = require_interior(pi, "pi")
    lc = level_constants(pi)
    if i is None:
        i = int(np.argmin(lc.boundary_minima))
    pv = pi.values
    face_min = h(pv[i], 1.0 - pv)
    points, values = [], []
    for k in ks:
        x = face_min.copy()
        x[i] = 10.0**-k
        points.append(x)
        values.append(lyapunov_value(x, pi))
    return np.array(points), np.array(values)


def set_a_sup_surrogate(pi, samples: int = 20_000, seed: int = 0) -> float:
    """Sampled ``sup V`` over interior points satisfying the pairwise equilibrium bounds.

    A computable stand-in for the existential level that bounds the
    equilibria; it is a lower estimate of the true supremum.
    """
    pi = require_interior(pi, "pi")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    best = 0.0
    for x in rng.uniform(1e-9, 1 - 1e-9, size=(samples, pi.n)):
        if equilibrium_bounds_check(x, pi.values):
            best = max(best, lyapunov_value(x, pi))
    return best


@dataclass
class LyapunovReport:
    x: list[float]
    region: str
    V: float
    gradient: list[float]
    descent: float
    residual: float

    @property
    def is_equilibrium(self) -> bool:
        return self.residual <= RESIDUAL_TOL

    def to_json(self) -> str:
        return json.dumps(
            {
                "x": self.x,
                "region": self.region,
                "V": self.V,
                "gradient": self.gradient,
                "descent": self.descent,
                "residual": self.residual,
            }
        )


def lyapunov_report(x, pi) -> LyapunovReport:
    x = require_valid(x)
    f = mean_field(x, pi)
    return LyapunovReport(
        x=x.values.tolist(),
        region=str(x.region),
        V=lyapunov_value(x, pi),
        gradient=lyapunov_gradient(x, pi).tolist(),
        descent=descent_value(x, pi),
        residual=float(np.max(np.abs(f))),
    )

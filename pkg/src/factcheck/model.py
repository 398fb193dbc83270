"""Exact probability core for the source / binary-symmetric-agent model.

A hidden Rademacher label ``S`` is observed by ``n`` agents, each a binary
symmetric channel with crossover probability ``x_i``.  Everything here is
exact: distributions are enumerated over all ``2**n`` verdict vectors, and
likelihoods are formed through log-odds sums so nothing overflows near the
edges of the unit cube.

Vectors with a single coordinate at 0 or 1 ("singly-extreme") are supported
through their limiting definitions.  Two or more extreme coordinates make the
likelihood ratio undefined (a ``0 * inf`` product) and are rejected.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike

ENUMERATION_CAP = 20
DEFAULT_TOL = 1e-9


class InvalidRegionError(ValueError):
    """Raised when an operation receives a vector with two or more extreme coordinates."""


class EnumerationLimitError(ValueError):
    """Raised when an exact ``2**n`` enumeration is requested beyond the cap."""


class RegionKind(enum.Enum):
    INTERIOR = "interior"
    SINGLY_EXTREME = "singly_extreme"
    INVALID = "invalid"


@dataclass(frozen=True)
class Region:
    kind: RegionKind
    index: int | None = None  # extreme coordinate (0-based) for SINGLY_EXTREME

    @property
    def is_interior(self) -> bool:
        return self.kind is RegionKind.INTERIOR

    @property
    def is_extreme(self) -> bool:
        return self.kind is RegionKind.SINGLY_EXTREME

    def __str__(self) -> str:
        if self.is_extreme:
            return f"singly_extreme({self.index})"
        return self.kind.value


INTERIOR = Region(RegionKind.INTERIOR)
INVALID = Region(RegionKind.INVALID)


class ExtendedKind(enum.Enum):
    FINITE = "finite"
    POS_INF = "+inf"
    NEG_INF = "-inf"


@dataclass(frozen=True)
class ExtendedReal:
    """Real number or a signed infinity marker.

    Consumers branch on ``kind``; the infinite markers never take part in
    float arithmetic.
    """

    kind: ExtendedKind
    value: float = 0.0

    @classmethod
    def finite(cls, value: float) -> "ExtendedReal":
        return cls(ExtendedKind.FINITE, float(value))

    @property
    def is_finite(self) -> bool:
        return self.kind is ExtendedKind.FINITE

    def __float__(self) -> float:
        if self.kind is ExtendedKind.POS_INF:
            return math.inf
        if self.kind is ExtendedKind.NEG_INF:
            return -math.inf
        return self.value


POS_INF = ExtendedReal(ExtendedKind.POS_INF)
NEG_INF = ExtendedReal(ExtendedKind.NEG_INF)


def classify_region(values: ArrayLike) -> Region:
    """Classify a point of ``[0, 1]**n`` as interior, singly-extreme or invalid."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    if not np.all((v >= 0.0) & (v <= 1.0)):
        raise ValueError(f"values must lie in [0, 1], got {v.tolist()}")
    extreme = np.flatnonzero((v == 0.0) | (v == 1.0))
    if extreme.size == 0:
        return INTERIOR
    if extreme.size == 1:
        return Region(RegionKind.SINGLY_EXTREME, int(extreme[0]))
    return INVALID


@dataclass(frozen=True, eq=False)
class UnreliabilityVector:
    """Crossover probabilities of the ``n`` agents, tagged with their region."""

    values: np.ndarray
    region: Region

    @classmethod
    def from_values(cls, values: ArrayLike) -> "UnreliabilityVector":
        v = np.array(values, dtype=float)
        region = classify_region(v)
        v.setflags(write=False)
        return cls(v, region)

    @property
    def n(self) -> int:
        return self.values.size

    def mirror(self) -> "UnreliabilityVector":
        return UnreliabilityVector.from_values(1.0 - self.values)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"UnreliabilityVector({self.values.tolist()}, region={self.region})"


def as_unreliability(x) -> UnreliabilityVector:
    if isinstance(x, UnreliabilityVector):
        return x
    return UnreliabilityVector.from_values(x)


def require_valid(x) -> UnreliabilityVector:
    """Coerce ``x`` and reject the invalid (doubly-extreme) region."""
    x = as_unreliability(x)
    if x.region.kind is RegionKind.INVALID:
        raise InvalidRegionError(
            f"{x.values.tolist()} has two or more extreme coordinates; "
            "the likelihood is undefined there"
        )
    return x


def require_interior(x, name: str = "x") -> UnreliabilityVector:
    x = as_unreliability(x)
    if not x.region.is_interior:
        raise InvalidRegionError(f"{name} must be interior, got region {x.region}")
    return x


def check_verdicts(r: ArrayLike, n: int | None = None) -> np.ndarray:
    """Validate a verdict vector (or a stack of them) with entries in {-1, +1}."""
    arr = np.asarray(r)
    if arr.ndim not in (1, 2):
        raise ValueError(f"verdicts must be 1-d or 2-d, got shape {arr.shape}")
    if not np.all((arr == 1) | (arr == -1)):
        raise ValueError("verdict entries must be exactly -1 or +1")
    if n is not None and arr.shape[-1] != n:
        raise ValueError(f"verdict length {arr.shape[-1]} does not match n={n}")
    return arr.astype(np.int8, copy=False)


def check_enumerable(n: int, cap: int = ENUMERATION_CAP) -> None:
    if n > cap:
        raise EnumerationLimitError(f"exact enumeration needs n <= {cap}, got n={n}")


@lru_cache(maxsize=None)
def _all_verdicts(n: int) -> np.ndarray:
    rows = np.array(list(itertools.product((1, -1), repeat=n)), dtype=np.int8)
    rows.setflags(write=False)
    return rows


def all_verdicts(n: int) -> np.ndarray:
    """All ``2**n`` verdict vectors as an int8 array of shape ``(2**n, n)``."""
    check_enumerable(n)
    return _all_verdicts(n)


def h(a, b):
    """Agreement probability ``ab + (1-a)(1-b)`` of two independent flips."""
    return a * b + (1.0 - a) * (1.0 - b)


def cross_entropy_term(a: float, x: float) -> float:
    """``-a log x - (1-a) log(1-x)``; ``inf`` when a nonzero weight meets log 0."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a must lie in [0, 1], got {a}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    total = 0.0
    for weight, p in ((a, x), (1.0 - a, 1.0 - x)):
        if weight == 0.0:
            continue
        if p == 0.0:
            return math.inf
        total -= weight * math.log(p)
    return total


def interior_log_odds(values: np.ndarray) -> np.ndarray:
    """``log((1-x)/x)`` for interior coordinates, vectorised."""
    return np.log1p(-values) - np.log(values)


def log_odds(x) -> tuple[ExtendedReal, ...]:
    """Per-agent log-odds ``log((1 - x_i) / x_i)`` with infinite markers at 0 and 1."""
    x = require_valid(x)
    out = []
    for v in x.values:
        if v == 0.0:
            out.append(POS_INF)
        elif v == 1.0:
            out.append(NEG_INF)
        else:
            out.append(ExtendedReal.finite(math.log1p(-v) - math.log(v)))
    return tuple(out)


def _extreme_sign(value: float) -> int:
    # (-1)**x_i for x_i in {0, 1}
    return 1 if value == 0.0 else -1


def likelihood_ratio(r: ArrayLike, x) -> ExtendedReal:
    """Ratio ``P(r | S=-1) / P(r | S=+1)`` under crossover probabilities ``x``."""
    x = require_valid(x)
    r = check_verdicts(r, x.n)
    if r.ndim != 1:
        raise ValueError("likelihood_ratio takes a single verdict vector")
    if x.region.is_extreme:
        i = x.region.index
        if _extreme_sign(x.values[i]) == r[i]:
            return ExtendedReal.finite(0.0)
        return POS_INF
    score = float(np.dot(r, interior_log_odds(x.values)))
    # exp(-score) may exceed the float range without being infinite in the model
    if -score > 709.0:
        raise OverflowError(f"likelihood ratio exp({-score}) is not representable")
    return ExtendedReal.finite(math.exp(-score))


def _product_form(r: np.ndarray, v: np.ndarray) -> np.ndarray:
    # 0.5 * (prod over "S=-1" + prod over "S=+1"), each factor chosen per verdict sign
    plus = r > 0
    flip_if_plus = np.where(plus, v, 1.0 - v)  # source was -1: +1 verdict is a flip
    flip_if_minus = np.where(plus, 1.0 - v, v)
    return 0.5 * (np.prod(flip_if_plus, axis=-1) + np.prod(flip_if_minus, axis=-1))


def _boundary_form(r: np.ndarray, v: np.ndarray, i: int) -> np.ndarray:
    # agent i is perfectly (un)reliable, so the source equals (-1)**x_i * r_i
    others = np.delete(v, i)
    r_others = np.delete(r, i, axis=-1)
    agrees = r[..., i] == _extreme_sign(v[i])
    p_if_agree = np.prod(np.where(r_others > 0, 1.0 - others, others), axis=-1)
    p_if_not = np.prod(np.where(r_others > 0, others, 1.0 - others), axis=-1)
    return 0.5 * np.where(agrees, p_if_agree, p_if_not)


def output_prob(r: ArrayLike, x):
    """Probability ``g_x(r)`` of verdict vector(s) ``r``.

    Accepts a single verdict vector or a stack of shape ``(m, n)``.
    """
    x = require_valid(x)
    r = check_verdicts(r, x.n)
    if x.region.is_extreme:
        out = _boundary_form(r, x.values, x.region.index)
    else:
        out = _product_form(r, x.values)
    return float(out) if out.ndim == 0 else out


def output_prob_cosh(r: ArrayLike, x):
    """``g_x(r)`` through ``cosh(<r, l_x>/2) * prod sqrt(x_i (1 - x_i))`` (interior only)."""
    x = require_interior(x)
    r = check_verdicts(r, x.n)
    score = r @ interior_log_odds(x.values)
    scale = np.prod(np.sqrt(x.values * (1.0 - x.values)))
    out = np.cosh(score / 2.0) * scale
    return float(out) if np.ndim(out) == 0 else out


def distribution(x) -> np.ndarray:
    """``g_x`` over all verdicts, in :func:`all_verdicts` order."""
    x = require_valid(x)
    return output_prob(all_verdicts(x.n), x)


def log_distribution(x) -> np.ndarray:
    """``log g_x`` over all verdicts, computed in log space.

    Interior points use ``log cosh(s/2) + 0.5 * sum log(x(1-x))``.  Singly
    extreme points may contain ``-inf`` only where ``g_x`` is exactly zero,
    which cannot happen for an interior remainder.
    """
    x = require_valid(x)
    rows = all_verdicts(x.n).astype(float)
    v = x.values
    if x.region.is_extreme:
        i = x.region.index
        keep = np.arange(x.n) != i
        o, ro = v[keep], rows[:, keep]
        log_agree = np.where(ro > 0, np.log1p(-o), np.log(o)).sum(axis=1)
        log_not = np.where(ro > 0, np.log(o), np.log1p(-o)).sum(axis=1)
        agrees = rows[:, i] == _extreme_sign(v[i])
        return np.where(agrees, log_agree, log_not) - math.log(2.0)
    half = rows @ interior_log_odds(v) / 2.0
    log_cosh = np.logaddexp(half, -half) - math.log(2.0)
    return log_cosh + 0.5 * float(np.sum(np.log(v) + np.log1p(-v)))


def indistinguishable(x, pi, tol: float = DEFAULT_TOL, cap: int = ENUMERATION_CAP) -> bool:
    """True iff ``g_x`` and ``g_pi`` agree on every verdict within ``tol``."""
    x = require_interior(x)
    pi = require_interior(pi, "pi")
    if x.n != pi.n:
        raise ValueError(f"dimension mismatch: {x.n} vs {pi.n}")
    check_enumerable(x.n, cap)
    return bool(np.max(np.abs(distribution(x) - distribution(pi))) <= tol)


def pairwise_constraint_residual(x, pi) -> np.ndarray:
    """``(1/2 - x_i)(1/2 - x_j) - (1/2 - pi_i)(1/2 - pi_j)`` for every pair ``i < j``."""
    xv = np.asarray(as_unreliability(x).values)
    pv = np.asarray(as_unreliability(pi).values)
    if xv.size != pv.size:
        raise ValueError(f"dimension mismatch: {xv.size} vs {pv.size}")
    if xv.size < 2:
        raise ValueError("pairwise residuals need n >= 2")
    i, j = np.triu_indices(xv.size, k=1)
    dx = 0.5 - xv
    dp = 0.5 - pv
    return dx[i] * dx[j] - dp[i] * dp[j]


def _residual_jacobian(xv: np.ndarray) -> np.ndarray:
    n = xv.size
    i, j = np.triu_indices(n, k=1)
    d = 0.5 - xv
    jac = np.zeros((i.size, n))
    rows = np.arange(i.size)
    jac[rows, i] = -d[j]
    jac[rows, j] = -d[i]
    return jac


def _polish_residual_root(x0: np.ndarray, pv: np.ndarray, iters: int = 50) -> np.ndarray | None:
    x = x0.copy()
    for _ in range(iters):
        res = pairwise_constraint_residual(x, pv)
        if np.max(np.abs(res)) <= 1e-15:
            break
        step, *_ = np.linalg.lstsq(_residual_jacobian(x), -res, rcond=None)
        x = x + step
        if not np.all(np.isfinite(x)):
            return None
    if np.max(np.abs(pairwise_constraint_residual(x, pv))) > 1e-12:
        return None
    return x


def constraint_zero_census(pi, step: float = 1e-3, dedup: float = 1e-6) -> list[np.ndarray]:
    """Zeros in ``[0, 1]**n`` of :func:`pairwise_constraint_residual`.

    Brute-force grid scan at spacing ``step`` (the last two coordinates are
    broadcast, earlier ones looped), then Gauss-Newton polish of every grid
    point whose residual is below the scan's Lipschitz margin, then
    de-duplication in the max-norm.
    """
    pv = as_unreliability(pi).values
    n = pv.size
    if n < 2:
        raise ValueError("the pairwise constraints need n >= 2")
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    d = 0.5 - grid
    dp = 0.5 - pv
    # every residual moves by at most 1/2 per unit change of a coordinate
    margin = step
    last, tail = d[:, None], d[None, :]
    candidates = []
    for head in itertools.product(range(grid.size), repeat=n - 2):
        dh = d[list(head)]
        head_worst = 0.0
        for p, q in itertools.combinations(range(n - 2), 2):
            head_worst = max(head_worst, abs(dh[p] * dh[q] - dp[p] * dp[q]))
        if head_worst > margin:
            continue
        worst = np.abs(last * tail - dp[n - 2] * dp[n - 1])
        for p in range(n - 2):
            np.maximum(worst, np.abs(dh[p] * last - dp[p] * dp[n - 2]), out=worst)
            np.maximum(worst, np.abs(dh[p] * tail - dp[p] * dp[n - 1]), out=worst)
        for u, w in np.argwhere(worst <= margin):
            candidates.append(np.concatenate([grid[list(head)], [grid[u], grid[w]]]))
    roots: list[np.ndarray] = []
    for c in candidates:
        root = _polish_residual_root(c, pv)
        if root is None or np.any(root < -1e-12) or np.any(root > 1 + 1e-12):
            continue
        if all(np.max(np.abs(root - r)) > dedup for r in roots):
            roots.append(root)
    return roots

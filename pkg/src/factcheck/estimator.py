"""Online estimator of the agents' crossover probabilities.

Each round the estimator sees only the verdict vector ``r``.  It forms the
log-odds score ``s = <r, l_P>`` under its current estimate ``P``, turns it into
a soft "disagreement" label per agent, and moves ``P`` a step of size ``eta_t``
toward those labels.  The truncated variant additionally keeps ``P`` inside a
growing family of compact sets, resetting to ``P0`` whenever a step would
leave the active set.

The per-round arithmetic is done on plain Python floats: for the small ``n``
this targets, that is much faster than numpy per step and keeps the runner
and the public step functions on one code path.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .model import (
    InvalidRegionError,
    check_verdicts,
    interior_log_odds,
    require_valid,
)


# --------------------------------------------------------------------------
# step sizes


@dataclass(frozen=True)
class StepSchedule:
    """Step-size sequence ``eta_t``, ``t = 0, 1, ...``.

    ``harmonic``: ``1 / (t + offset)``.  ``power``: ``scale * (t + 1) ** -exponent``.
    ``custom``: any callable ``t -> eta_t``.
    """

    kind: str
    offset: float = 1.0
    exponent: float = 1.0
    scale: float = 1.0
    fn: Callable[[int], float] | None = field(default=None, compare=False)
    description: str = ""

    def __post_init__(self):
        if self.kind == "harmonic":
            if self.offset <= 0:
                raise ValueError(f"harmonic offset must be positive, got {self.offset}")
        elif self.kind == "power":
            if not 0.5 < self.exponent <= 1.0:
                raise ValueError(f"power exponent must lie in (1/2, 1], got {self.exponent}")
            if self.scale <= 0:
                raise ValueError(f"power scale must be positive, got {self.scale}")
        elif self.kind == "custom":
            if self.fn is None:
                raise ValueError("custom schedule needs a callable")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.eta(0) > 1.0:
            raise ValueError(
                f"eta_0 = {self.eta(0)} > 1 breaks [0, 1] containment of the update"
            )
        if not self.description:
            object.__setattr__(self, "description", self._describe())

    @classmethod
    def harmonic(cls, offset: float = 1.0) -> "StepSchedule":
        return cls("harmonic", offset=offset)

    @classmethod
    def power(cls, exponent: float, scale: float = 1.0) -> "StepSchedule":
        return cls("power", exponent=exponent, scale=scale)

    @classmethod
    def custom(cls, fn: Callable[[int], float], description: str = "custom") -> "StepSchedule":
        return cls("custom", fn=fn, description=description)

    @classmethod
    def parse(cls, text: str) -> "StepSchedule":
        """``harmonic``, ``harmonic:<offset>`` or ``power:<exponent>[:<scale>]``."""
        head, _, rest = text.strip().partition(":")
        args = [float(a) for a in rest.split(":")] if rest else []
        if head == "harmonic" and len(args) <= 1:
            return cls.harmonic(*args)
        if head == "power" and 1 <= len(args) <= 2:
            return cls.power(*args)
        raise ValueError(f"cannot parse schedule {text!r}; use harmonic or power:<p>")

    def _describe(self) -> str:
        if self.kind == "harmonic":
            return "harmonic" if self.offset == 1.0 else f"harmonic:{self.offset:g}"
        if self.kind == "power":
            return f"power:{self.exponent:g}" + ("" if self.scale == 1.0 else f":{self.scale:g}")
        return "custom"

    def eta(self, t: int) -> float:
        if self.kind == "harmonic":
            return 1.0 / (t + self.offset)
        if self.kind == "power":
            return self.scale * (t + 1.0) ** -self.exponent
        return float(self.fn(t))

    def etas(self, horizon: int) -> np.ndarray:
        """``eta_0 .. eta_{horizon-1}`` as an array."""
        t = np.arange(horizon, dtype=float)
        if self.kind == "harmonic":
            return 1.0 / (t + self.offset)
        if self.kind == "power":
            return self.scale * (t + 1.0) ** -self.exponent
        return np.fromiter((self.fn(k) for k in range(horizon)), dtype=float, count=horizon)


@dataclass
class ScheduleReport:
    passed: bool
    horizon: int
    checks: dict[str, bool]
    failed: list[str]
    first_offending_index: dict[str, int]
    details: dict[str, float]

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL " + ", ".join(self.failed)
        return f"schedule check over T={self.horizon}: {status}"


def validate_schedule(
    schedule: StepSchedule,
    horizon: int,
    growth_floor: float = 0.95,
    tail_ratio: float = 0.95,
) -> ScheduleReport:
    """Check the step-size conditions on ``eta_0 .. eta_T``.

    Positivity and monotonicity are checked exactly.  Divergence of the sum and
    convergence of the sum of squares are judged by a dyadic condensation
    test: for a power-like sequence ``t**-p`` the sum over ``(T/2, T]``
    divided by the sum over ``(T/4, T/2]`` tends to ``2**(1-p)``, so the sum
    diverges iff the ratio stays near or above one, and the squares are
    summable iff their ratio ``2**(1-2p)`` sits clearly below one.
    """
    if horizon < 8:
        raise ValueError("need horizon >= 8 for the dyadic tail tests")
    eta = schedule.etas(horizon + 1)
    checks: dict[str, bool] = {}
    first: dict[str, int] = {}

    bad = np.flatnonzero(~(eta > 0))
    checks["positive"] = bad.size == 0
    if bad.size:
        first["positive"] = int(bad[0])
    bad = np.flatnonzero(np.diff(eta) > 0)
    checks["non_increasing"] = bad.size == 0
    if bad.size:
        first["non_increasing"] = int(bad[0] + 1)

    q, h = horizon // 4, horizon // 2
    lin_ratio = eta[h + 1 :].sum() / eta[q + 1 : h + 1].sum()
    sq = eta**2
    sq_ratio = sq[h + 1 :].sum() / sq[q + 1 : h + 1].sum()
    checks["sum_diverges"] = bool(lin_ratio >= growth_floor)
    checks["squares_summable"] = bool(sq_ratio <= tail_ratio)
    failed = [name for name, ok in checks.items() if not ok]
    return ScheduleReport(
        passed=not failed,
        horizon=horizon,
        checks=checks,
        failed=failed,
        first_offending_index=first,
        details={
            "partial_sum": float(eta.sum()),
            "partial_sum_squares": float(sq.sum()),
            "tail_ratio_sum": float(lin_ratio),
            "tail_ratio_squares": float(sq_ratio),
        },
    )


# --------------------------------------------------------------------------
# truncation sets


@dataclass(frozen=True)
class TruncationFamily:
    """Nested sets K_q: all but at most one coordinate within ``radius(q)`` of 1/2.

    ``radius(q) = 1/2 - c * (q + 1) ** -gamma_exp`` increases strictly to 1/2.
    """

    c: float = 0.25
    gamma_exp: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.c < 0.5:
            raise ValueError(f"c must lie in (0, 1/2), got {self.c}")
        if self.gamma_exp <= 0:
            raise ValueError(f"gamma_exp must be positive, got {self.gamma_exp}")

    def radius(self, q: int) -> float:
        return 0.5 - self.c * (q + 1.0) ** -self.gamma_exp

    def contains(self, q: int, x: Sequence[float]) -> bool:
        rq = self.radius(q)
        outside = 0
        for v in x:
            if abs(v - 0.5) > rq:
                outside += 1
                if outside > 1:
                    return False
        return True

    def least_index(self, x: Sequence[float]) -> int | None:
        """Smallest ``q`` with ``x`` in K_q, or None when no set contains ``x``."""
        dev = sorted((abs(v - 0.5) for v in x), reverse=True)
        need = dev[1] if len(dev) > 1 else 0.0
        if need >= 0.5:
            return None
        if need <= self.radius(0):
            return 0
        # radius(q) >= need  <=>  q + 1 >= (c / (1/2 - need)) ** (1 / gamma_exp)
        q = max(0, math.ceil((self.c / (0.5 - need)) ** (1.0 / self.gamma_exp) - 1.0) - 1)
        while self.radius(q) < need:
            q += 1
        return q


def truncation_contains(family: TruncationFamily, q: int, x) -> bool:
    v = np.asarray(x, dtype=float)
    if np.any((v < 0) | (v > 1)):
        raise ValueError("x must lie in [0, 1]^n")
    return family.contains(q, v.tolist())


# --------------------------------------------------------------------------
# the stochastic update


def soft_update(r, x) -> np.ndarray:
    """Update direction ``f~(r, x)``; ``r`` may be one verdict vector or a stack.

    Interior: ``expit(-r_i <r, l_x>) - x_i``, which equals
    ``(1 - tanh(<r, l_x>/2) r_i) / 2 - x_i`` without cancellation near 0 and 1.
    Singly extreme at ``i``: the likelihood-ratio term becomes ``-1`` when the
    extreme agent's verdict matches ``(-1)**x_i`` and ``+1`` otherwise.
    """
    x = require_valid(x)
    r = check_verdicts(r, x.n)
    v = x.values
    if x.region.is_extreme:
        i = x.region.index
        sign = 1 if v[i] == 0.0 else -1
        ratio = np.where(r[..., i] == sign, -1.0, 1.0)
        return 0.5 * (1.0 + ratio[..., None] * r) - v
    score = r @ interior_log_odds(v)
    return expit(-r * score[..., None]) - v


def soft_update_ratio_form(r, x) -> np.ndarray:
    """``f~`` through the raw ``(L - 1)/(L + 1)`` expression (interior only).

    Independent of :func:`soft_update`; only meaningful while ``L`` is
    representable.
    """
    x = require_valid(x)
    if not x.region.is_interior:
        raise InvalidRegionError("the ratio form needs an interior point")
    r = check_verdicts(r, x.n).astype(float)
    L = np.prod((x.values / (1.0 - x.values)) ** r, axis=-1)
    ratio = (L - 1.0) / (L + 1.0)
    return 0.5 * (1.0 + ratio[..., None] * r) - x.values


def label_estimate(r, x) -> int:
    """+1 when the likelihood ratio is below one, else -1 (ties go to -1)."""
    x = require_valid(x)
    r = check_verdicts(r, x.n)
    if x.region.is_extreme:
        i = x.region.index
        # L = 0 when the extreme agent's verdict matches (-1)**x_i, else L = inf
        return 1 if r[i] == (1 if x.values[i] == 0.0 else -1) else -1
    score = float(r @ interior_log_odds(x.values))
    return 1 if score > 0.0 else -1


def _expit(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _soft_labels(r: Sequence[int], p: Sequence[float]) -> list[float]:
    """Targets ``P + f~(r, P)`` of a full step, on Python floats."""
    ext = -1
    for i, v in enumerate(p):
        if v == 0.0 or v == 1.0:
            if ext >= 0:
                raise InvalidRegionError(f"estimate {list(p)} has two extreme coordinates")
            ext = i
    if ext >= 0:
        ratio = -1 if (1 if p[ext] == 0.0 else -1) == r[ext] else 1
        return [0.5 * (1 + ratio * ri) for ri in r]
    s = 0.0
    for ri, v in zip(r, p):
        s += ri * (math.log1p(-v) - math.log(v))
    return [_expit(-ri * s) for ri in r]


def _proposal(p: Sequence[float], r: Sequence[int], eta: float) -> list[float]:
    target = _soft_labels(r, p)
    return [min(1.0, max(0.0, v + eta * (g - v))) for v, g in zip(p, target)]


# --------------------------------------------------------------------------
# estimator state and steps


@dataclass
class ResetEvent:
    t: int  # step index after the reset, i.e. the reset lands at P(t)
    y: list[float]
    gamma_after: int

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "y": self.y, "gamma_after": self.gamma_after})


@dataclass
class EstimatorState:
    """Mutable state of one estimator run; the step functions advance it in place."""

    P: list[float]
    schedule: StepSchedule
    family: TruncationFamily
    reset_point: list[float]
    t: int = 0
    gamma: int = 0
    reset_log: list[ResetEvent] = field(default_factory=list)
    correction_log: list[tuple[int, list[float]]] | None = None

    @classmethod
    def create(
        cls,
        n: int,
        schedule: StepSchedule | None = None,
        family: TruncationFamily | None = None,
        reset_point: Sequence[float] | None = None,
        init: Sequence[float] | None = None,
        track_corrections: bool = False,
    ) -> "EstimatorState":
        schedule = schedule or StepSchedule.harmonic()
        family = family or TruncationFamily()
        if reset_point is None:
            reset_point = [0.5 - 0.05 * (i / n) for i in range(1, n + 1)]
        reset_point = [float(v) for v in reset_point]
        if len(reset_point) != n:
            raise ValueError(f"reset point has {len(reset_point)} entries, expected {n}")
        require_valid(reset_point)
        if not family.contains(0, reset_point):
            raise ValueError(f"reset point {reset_point} is not in K_0")
        P = [float(v) for v in (init if init is not None else reset_point)]
        if len(P) != n:
            raise ValueError(f"initial point has {len(P)} entries, expected {n}")
        require_valid(P)
        return cls(
            P=P,
            schedule=schedule,
            family=family,
            reset_point=reset_point,
            correction_log=[] if track_corrections else None,
        )

    @property
    def n(self) -> int:
        return len(self.P)

    @property
    def estimate(self) -> np.ndarray:
        return np.array(self.P)


def _checked_eta(state: EstimatorState) -> float:
    eta = state.schedule.eta(state.t)
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta_{state.t} = {eta} must lie in (0, 1]")
    return eta


def step_plain(state: EstimatorState, r) -> EstimatorState:
    """``P <- P + eta_t f~(r, P)`` without truncation."""
    r = [int(v) for v in check_verdicts(r, state.n)]
    eta = _checked_eta(state)
    state.P = _proposal(state.P, r, eta)
    state.t += 1
    return state


def step_truncated(state: EstimatorState, r) -> EstimatorState:
    """One truncated step: accept the proposal if it stays in K_gamma, else reset to P0."""
    r = [int(v) for v in check_verdicts(r, state.n)]
    eta = _checked_eta(state)
    _truncated_advance(state, r, eta, state.family.radius(state.gamma))
    return state


def _truncated_advance(state: EstimatorState, r, eta: float, radius: float) -> bool:
    y = _proposal(state.P, r, eta)
    outside = 0
    for v in y:
        if abs(v - 0.5) > radius:
            outside += 1
    state.t += 1
    if outside <= 1:
        state.P = y
        return False
    state.P = list(state.reset_point)
    state.gamma += 1
    state.reset_log.append(ResetEvent(state.t, y, state.gamma))
    if state.correction_log is not None:
        z = [(p0 - yi) / eta for p0, yi in zip(state.reset_point, y)]
        state.correction_log.append((state.t, z))
    return True


# --------------------------------------------------------------------------
# add-beta oracle baseline


def oracle_add_beta(q, s_true: int, r, t: int, beta: float) -> np.ndarray:
    """One step of the add-beta estimator that knows the true label."""
    q = np.asarray(q, dtype=float)
    r = check_verdicts(r, q.size)
    nu = 1.0 / (t + 1.0 + 2.0 * beta)
    return (1.0 - nu) * q + nu * (r != s_true)


def add_beta_batch(mistakes: np.ndarray, t: int, beta: float) -> np.ndarray:
    """Closed form ``(beta + #mistakes) / (t + 2 beta)``; 1/2 at ``t = 0``."""
    mistakes = np.asarray(mistakes, dtype=float)
    if t == 0:
        return np.full(mistakes.shape, 0.5)
    return (beta + mistakes) / (t + 2.0 * beta)


# --------------------------------------------------------------------------
# runs and trajectories


CSV_TAIL = ("gamma", "reset", "V", "dist_pi", "dist_1mpi", "dist_half")


@dataclass
class TrajectoryRecord:
    t: int
    P: tuple[float, ...]
    gamma: int
    reset: bool
    V: float | None = None
    dist_pi: float | None = None
    dist_1mpi: float | None = None
    dist_half: float | None = None


@dataclass
class Trajectory:
    n: int
    records: list[TrajectoryRecord] = field(default_factory=list)
    resets: list[ResetEvent] = field(default_factory=list)
    steps: int = 0
    truncated: bool = False  # stream ran out before the horizon

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]

    @property
    def reset_count(self) -> int:
        return len(self.resets)

    @property
    def last_reset_time(self) -> int | None:
        return self.resets[-1].t if self.resets else None

    def header(self) -> list[str]:
        return ["t", *(f"P_{i}" for i in range(1, self.n + 1)), *CSV_TAIL]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for rec in self.records:
            writer.writerow(
                [
                    rec.t,
                    *(repr(v) for v in rec.P),
                    rec.gamma,
                    int(rec.reset),
                    *(_fmt(v) for v in (rec.V, rec.dist_pi, rec.dist_1mpi, rec.dist_half)),
                ]
            )
        return buf.getvalue()

    def resets_jsonl(self) -> str:
        return "".join(ev.to_json() + "\n" for ev in self.resets)


def _fmt(v: float | None) -> str:
    # repr gives the shortest round-tripping decimal
    return "" if v is None else repr(float(v))


def _euclid(a: Sequence[float], b: Sequence[float]) -> float:
    return math.sqrt(sum((u - w) ** 2 for u, w in zip(a, b)))


def _iter_rows(stream) -> Iterable[Sequence[int]]:
    verdicts = getattr(stream, "verdicts", stream)
    if isinstance(verdicts, np.ndarray):
        check_verdicts(verdicts[:0] if verdicts.size == 0 else verdicts[:1])
        for start in range(0, len(verdicts), 1 << 16):
            chunk = verdicts[start : start + (1 << 16)]
            check_verdicts(chunk)
            yield from chunk.tolist()
        return
    for item in verdicts:
        yield getattr(item, "r", item)


def run(config, stream, diagnostics: bool = True) -> Trajectory:
    """Run the estimator for ``config.horizon`` rounds over ``stream``.

    ``stream`` is a ``(T, n)`` verdict array, an object with a ``verdicts``
    array, or any iterable of verdict vectors.  Records are taken at ``t = 0``,
    every ``cadence`` steps, at every reset and at the last step.  Diagnostics
    use the true ``config.pi`` and never feed back into the estimate.
    """
    from .lyapunov import lyapunov_value  # deferred: lyapunov builds on this module

    n = config.n
    state = EstimatorState.create(
        n,
        schedule=StepSchedule.parse(config.schedule),
        family=TruncationFamily(config.trunc_c, config.trunc_gamma),
        reset_point=config.resolved_reset_point,
        init=config.resolved_init,
    )
    pi = list(config.pi)
    mirror = [1.0 - p for p in pi]
    half = [0.5] * n
    v_ok = diagnostics and n <= 20

    def record(reset: bool) -> None:
        P = tuple(state.P)
        rec = TrajectoryRecord(state.t, P, state.gamma, reset)
        if diagnostics:
            rec.dist_pi = _euclid(P, pi)
            rec.dist_1mpi = _euclid(P, mirror)
            rec.dist_half = _euclid(P, half)
            if v_ok:
                rec.V = lyapunov_value(P, pi)
        traj.records.append(rec)

    traj = Trajectory(n)
    record(False)
    horizon = config.horizon
    cadence = config.resolved_cadence
    truncated_mode = config.mode == "truncated"
    schedule = state.schedule
    rows = iter(_iter_rows(stream))
    for t in range(horizon):
        try:
            r = next(rows)
        except StopIteration:
            traj.truncated = True
            break
        if len(r) != n:
            raise ValueError(f"verdict at t={t} has {len(r)} entries, expected {n}")
        eta = schedule.eta(t)
        if not 0.0 < eta <= 1.0:
            raise ValueError(f"eta_{t} = {eta} must lie in (0, 1]")
        if truncated_mode:
            reset = _truncated_advance(state, r, eta, state.family.radius(state.gamma))
        else:
            state.P = _proposal(state.P, r, eta)
            state.t += 1
            reset = False
        if reset or state.t % cadence == 0 or state.t == horizon:
            record(reset)
    traj.resets = state.reset_log
    traj.steps = state.t
    if traj.truncated and traj.records[-1].t != state.t:
        record(False)
    return traj


def final_estimate(traj: Trajectory) -> np.ndarray:
    return np.asarray(traj.final.P)


__all__ = [
    "StepSchedule",
    "ScheduleReport",
    "validate_schedule",
    "TruncationFamily",
    "truncation_contains",
    "soft_update",
    "soft_update_ratio_form",
    "label_estimate",
    "EstimatorState",
    "ResetEvent",
    "step_plain",
    "step_truncated",
    "oracle_add_beta",
    "add_beta_batch",
    "Trajectory",
    "TrajectoryRecord",
    "run",
    "final_estimate",
]

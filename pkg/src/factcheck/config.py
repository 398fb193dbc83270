"""Experiment configuration shared by the estimator runner, harness and CLI."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"could not parse a comma-separated list from {text!r}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """One estimator experiment.

    ``init`` is P(0) and ``reset_point`` is P0; both default to the tilted
    centre ``1/2 - 0.05 * i / n`` (1-based ``i``), which sits inside K_0 but
    off the mean-field equilibrium at ``1/2``.  ``cadence=None`` means
    ``ceil(T / 10**4)``.
    """

    pi: tuple[float, ...] = (0.1, 0.2, 0.3)
    seed: int = 0
    horizon: int = 10_000
    schedule: str = "harmonic"
    trunc_c: float = 0.25
    trunc_gamma: float = 0.5
    init: tuple[float, ...] | None = None
    reset_point: tuple[float, ...] | None = None
    mode: str = "truncated"
    cadence: int | None = None
    out: str = "out"
    n: int | None = field(default=None, compare=False)

    def __post_init__(self):
        pi = tuple(float(p) for p in self.pi)
        object.__setattr__(self, "pi", pi)
        for name in ("init", "reset_point"):
            vec = getattr(self, name)
            if vec is not None:
                object.__setattr__(self, name, tuple(float(v) for v in vec))
        if self.n is None:
            object.__setattr__(self, "n", len(pi))
        self.validate()

    def validate(self) -> None:
        if self.n != len(self.pi):
            raise ConfigError(f"n={self.n} but pi has {len(self.pi)} entries")
        if self.n < 1:
            raise ConfigError("need at least one agent")
        if not all(0.0 < p < 1.0 for p in self.pi):
            raise ConfigError(f"pi must lie in (0, 1)^n, got {self.pi}")
        if self.horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        if self.cadence is not None and self.cadence < 1:
            raise ConfigError(f"cadence must be >= 1, got {self.cadence}")
        if self.mode not in ("truncated", "plain"):
            raise ConfigError(f"mode must be 'truncated' or 'plain', got {self.mode!r}")
        if not 0.0 < self.trunc_c < 0.5:
            raise ConfigError(f"trunc_c must lie in (0, 1/2), got {self.trunc_c}")
        if not self.trunc_gamma > 0.0:
            raise ConfigError(f"trunc_gamma must be positive, got {self.trunc_gamma}")
        for name in ("init", "reset_point"):
            vec = getattr(self, name)
            if vec is None:
                continue
            if len(vec) != self.n:
                raise ConfigError(f"{name} has {len(vec)} entries, expected {self.n}")
            if not all(0.0 <= v <= 1.0 for v in vec):
                raise ConfigError(f"{name} must lie in [0, 1]^n, got {vec}")
        # parse eagerly so a bad schedule is a config error, not a runtime one
        from .estimator import StepSchedule

        try:
            StepSchedule.parse(self.schedule)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def default_point(self) -> tuple[float, ...]:
        return tuple(0.5 - 0.05 * (i / self.n) for i in range(1, self.n + 1))

    @property
    def resolved_reset_point(self) -> tuple[float, ...]:
        return tuple(self.reset_point) if self.reset_point is not None else self.default_point

    @property
    def resolved_init(self) -> tuple[float, ...]:
        return tuple(self.init) if self.init is not None else self.resolved_reset_point

    @property
    def resolved_cadence(self) -> int:
        if self.cadence is not None:
            return self.cadence
        return max(1, math.ceil(self.horizon / 10**4))

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        clean = {k: v for k, v in kwargs.items() if v is not None}
        if "pi" in clean and "n" not in clean:
            clean["n"] = None
        return replace(self, **clean)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pi"] = list(self.pi)
        for key in ("init", "reset_point"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ExperimentConfig":
        """Build from flat string key/values (config file or CLI flags)."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for raw_key, raw in mapping.items():
            key = raw_key.strip().lower().replace("-", "_")
            if key == "t":
                key = "horizon"
            if key not in known:
                raise ConfigError(f"unknown config key {raw_key!r}")
            kwargs[key] = _coerce(key, str(raw).strip())
        if "pi" not in kwargs:
            raise ConfigError("config must set pi")
        return cls(**kwargs)


_INT_KEYS = {"seed", "horizon", "cadence", "n"}
_FLOAT_KEYS = {"trunc_c", "trunc_gamma"}
_LIST_KEYS = {"pi", "init", "reset_point"}


def _coerce(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return None if raw.lower() in ("", "none", "auto") else int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if key in _LIST_KEYS:
        return None if raw.lower() in ("", "none") else parse_float_list(raw)
    return raw


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out

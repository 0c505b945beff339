"""Gain functions a(t) and their classification against the divergence (A2),
square-integrability (A3) and vanishing (A4) conditions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import NegativeTime

QUAD_ABS_TOL = 1e-8
CUSTOM_DIFF_STEP = 1e-4


class Flag(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNKNOWN = "unknown"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class GainClassification:
    A2: Flag
    A3: Flag
    A4: Flag

    def as_tuple(self):
        return (self.A2, self.A3, self.A4)

    def __iter__(self):
        return iter(self.as_tuple())


FAMILIES = ("power-law", "log-over-linear", "constant", "custom")
_ALIASES = {
    "powerlaw": "power-law", "power": "power-law",
    "logoverlinear": "log-over-linear", "log": "log-over-linear",
    "const": "constant", "tabulated": "custom",
}


def _canonical_family(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    key = _ALIASES.get(key.replace("-", ""), key)
    if key not in FAMILIES:
        raise ValueError(f"unknown gain family {name!r}; choose from {', '.join(FAMILIES)}")
    return key


@dataclass(frozen=True, eq=False)
class GainSpec:
    """A nonnegative gain schedule.

    Families:
      power-law        c / (t+1)**p
      log-over-linear  c * log(t+1) / (t+1)
      constant         c
      custom           piecewise-linear through ``(times, values)``, held at the
                       last value beyond the final sample
    """

    family: str
    c: float = 1.0
    p: float = 1.0
    times: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        fam = _canonical_family(self.family)
        object.__setattr__(self, "family", fam)
        if fam == "custom":
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ValueError("custom gain needs matching 1-D times/values with >= 2 samples")
            if np.any(np.diff(t) <= 0) or t[0] != 0.0:
                raise ValueError("custom gain times must start at 0 and increase strictly")
            if np.any(v < 0):
                raise ValueError("gain values must be nonnegative")
            object.__setattr__(self, "times", tuple(t.tolist()))
            object.__setattr__(self, "values", tuple(v.tolist()))
        else:
            if self.c < 0:
                raise ValueError("gain scale c must be nonnegative")
            if fam == "power-law" and self.p < 0:
                raise ValueError("power-law exponent p must be nonnegative")

    # constructors
    @classmethod
    def power_law(cls, c=1.0, p=1.0):
        return cls("power-law", c=c, p=p)

    @classmethod
    def log_over_linear(cls, c=1.0):
        return cls("log-over-linear", c=c)

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", c=c)

    @classmethod
    def custom(cls, times, values):
        return cls("custom", times=tuple(times), values=tuple(values))

    @property
    def parameters(self) -> dict:
        if self.family == "power-law":
            return {"c": self.c, "p": self.p}
        if self.family == "custom":
            return {"samples": len(self.times)}
        return {"c": self.c}

    def describe(self) -> str:
        params = ",".join(f"{k}={v!r}" for k, v in self.parameters.items())
        return f"{self.family}({params})"

    def __call__(self, t):
        return evaluate(self, t)

    def derivative(self, t):
        return derivative(self, t)

    @property
    def classification(self) -> GainClassification:
        return classify(self)


def _check_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise NegativeTime(f"gain evaluated at negative time {arr.min()}")
    return arr


def evaluate(g: GainSpec, t):
    """a(t); scalar in, float out; array in, array out."""
    arr = _check_time(t)
    if g.family == "power-law":
        out = g.c / (arr + 1.0) ** g.p
    elif g.family == "log-over-linear":
        out = g.c * np.log1p(arr) / (arr + 1.0)
    elif g.family == "constant":
        out = np.full_like(arr, g.c)
    else:
        out = np.interp(arr, g.times, g.values)
    return float(out) if np.ndim(out) == 0 else out


def derivative(g: GainSpec, t):
    """da/dt; analytic per family, central differences for custom gains."""
    arr = _check_time(t)
    if g.family == "power-law":
        out = -g.c * g.p / (arr + 1.0) ** (g.p + 1.0)
    elif g.family == "log-over-linear":
        out = g.c * (1.0 - np.log1p(arr)) / (arr + 1.0) ** 2
    elif g.family == "constant":
        out = np.zeros_like(arr)
    else:
        h = CUSTOM_DIFF_STEP
        lo = np.maximum(arr - h, 0.0)
        hi = arr + h
        out = (np.interp(hi, g.times, g.values) - np.interp(lo, g.times, g.values)) / (hi - lo)
    return float(out) if np.ndim(out) == 0 else out


def classify(g: GainSpec) -> GainClassification:
    H, F, U = Flag.HOLDS, Flag.FAILS, Flag.UNKNOWN
    if g.family == "custom":
        a4 = H if g.values[-1] == 0.0 else F
        return GainClassification(U, U, a4)
    if g.c == 0:
        # a identically zero: no gain mass at all
        return GainClassification(F, H, H)
    if g.family == "power-law":
        return GainClassification(H if g.p <= 1 else F, H if g.p > 0.5 else F, H if g.p > 0 else F)
    if g.family == "log-over-linear":
        return GainClassification(H, H, H)
    return GainClassification(H, F, F)


def _breakpoints(g: GainSpec, T: float):
    """Split [0, T] at log-spaced points so quad never sees a huge smooth interval."""
    if g.family == "custom":
        knots = [t for t in g.times if 0 < t < T]
        return [0.0, *knots, T]
    pts = [0.0]
    edge = 1.0
    while edge < T:
        pts.append(edge)
        edge *= 4.0
    pts.append(T)
    return pts


def _integrate(fun, g: GainSpec, T: float) -> float:
    if T < 0:
        raise NegativeTime(f"integration horizon {T} is negative")
    if T == 0:
        return 0.0
    pts = _breakpoints(g, float(T))
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(fun, lo, hi, epsabs=QUAD_ABS_TOL / len(pts), epsrel=1e-12, limit=200)
        total += val
    return total


def integral_to(g: GainSpec, T: float) -> float:
    """Gain mass consumed on [0, T]."""
    return _integrate(lambda s: evaluate(g, s), g, T)


def square_integral_to(g: GainSpec, T: float) -> float:
    return _integrate(lambda s: evaluate(g, s) ** 2, g, T)


def closed_form_integral(g: GainSpec, T: float):
    """Antiderivative of a on [0, T] where the family admits one, else None."""
    if g.family == "constant":
        return g.c * T
    if g.family == "log-over-linear":
        return g.c * math.log1p(T) ** 2 / 2.0
    if g.family == "power-law":
        if g.p == 1.0:
            return g.c * math.log1p(T)
        return g.c * ((T + 1.0) ** (1.0 - g.p) - 1.0) / (1.0 - g.p)
    return None


def cumulative_integral(g: GainSpec, t_grid):
    """G(t) = integral of a on [0, t] evaluated on an increasing grid starting at 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    closed = closed_form_integral(g, 0.0)
    if closed is not None:
        return np.array([closed_form_integral(g, float(t)) for t in t_grid])
    return integrate.cumulative_trapezoid(evaluate(g, t_grid), t_grid, initial=0.0)


def numeric_witness(g: GainSpec, horizons=(1e1, 1e2, 1e3, 1e4, 1e5)) -> dict:
    """Quadrature values of the gain mass and squared mass over growing horizons.

    Divergence cannot be decided numerically; the witness only shows the trend
    that the analytic classification predicts.
    """
    horizons = [float(T) for T in horizons]
    return {
        "T": horizons,
        "integral": [integral_to(g, T) for T in horizons],
        "square_integral": [square_integral_to(g, T) for T in horizons],
        "a_at_T": [evaluate(g, T) for T in horizons],
    }


def gain_from_params(family: str, **params) -> GainSpec:
    fam = _canonical_family(family)
    if fam == "custom":
        return GainSpec.custom(params["times"], params["values"])
    kwargs = {"c": float(params.get("c", 1.0))}
    if fam == "power-law":
        kwargs["p"] = float(params.get("p", 1.0))
    return GainSpec(fam, **kwargs)


# presets used by bundled configs and the CLI
PRESETS = {
    "log-over-linear": GainSpec.log_over_linear(1.0),
    "harmonic": GainSpec.power_law(1.0, 1.0),
    "inverse-square": GainSpec.power_law(1.0, 2.0),
    "constant": GainSpec.constant(1.0),
}

"""Catalog of positive time-weight profiles and their exponential envelopes.

A time weight is a strictly positive function of the step counter
k = 0, 1, 2, ...  Each catalog variant comes with envelope constants
(c1, gamma_lo, c2, gamma_hi) such that

    c1 * gamma_lo**k  <=  weight(k)  <=  c2 * gamma_hi**k

for every k >= 0, and with the open interval of decay margins L for which
gamma_lo and gamma_hi both exceed 1 - L.  The envelope constants are not
unique; ``check_envelope`` accepts a user override.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError


class TimeWeight:
    """Base class for positive time-weight profiles.

    Subclasses implement ``__call__`` accepting an int or an integer
    ndarray and returning floats (vectorized).
    """

    variant = "abstract"

    def __call__(self, k):
        raise NotImplementedError


@dataclass(frozen=True)
class Band(TimeWeight):
    """Weight bounded in [a, b] with 0 < a <= b.

    The pointwise profile defaults to the constant ``a``; any user
    sequence (callable on step indices) may be supplied instead and is
    expected to stay inside [a, b].  ``check_envelope`` is the arbiter
    for that expectation.
    """

    a: float
    b: float
    values: Optional[Callable] = None

    variant = "band"

    def __post_init__(self):
        if not (0.0 < self.a <= self.b < math.inf):
            raise ParameterError(f"band requires 0 < a <= b < inf, got a={self.a}, b={self.b}")

    def __call__(self, k):
        k = np.asarray(k)
        if self.values is None:
            return np.full(k.shape, self.a) if k.ndim else float(self.a)
        out = np.asarray(self.values(k), dtype=float)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Geometric(TimeWeight):
    """gamma**k; discounted for gamma < 1, reverse-discounted for gamma > 1.

    Evaluated by exponentiation (``gamma**k``), not repeated
    multiplication.
    """

    gamma: float

    variant = "geometric"

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ParameterError(f"geometric weight requires gamma > 0, got {self.gamma}")

    def __call__(self, k):
        k = np.asarray(k)
        with np.errstate(over="ignore"):
            out = np.power(self.gamma, k.astype(float))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class PolyDecay(TimeWeight):
    """1 / (k**h + 1) with h > 0; decays slower than any exponential."""

    h: float

    variant = "poly-decay"

    def __post_init__(self):
        if not self.h > 0.0:
            raise ParameterError(f"poly-decay weight requires h > 0, got {self.h}")

    def __call__(self, k):
        k = np.asarray(k)
        out = 1.0 / (np.power(k.astype(float), self.h) + 1.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Laplacian(TimeWeight):
    """exp(-|k - mu| / (2 m)); rises until step mu, then decays."""

    m: float
    mu: int

    variant = "laplacian"

    def __post_init__(self):
        if not self.m > 0.0:
            raise ParameterError(f"laplacian weight requires m > 0, got {self.m}")
        if not (isinstance(self.mu, (int, np.integer)) and self.mu >= 0):
            raise ParameterError(f"laplacian weight requires integer mu >= 0, got {self.mu}")

    def __call__(self, k):
        k = np.asarray(k)
        out = np.exp(-np.abs(k.astype(float) - self.mu) / (2.0 * self.m))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Envelope:
    """Exponential sandwich c1*gamma_lo**k <= w(k) <= c2*gamma_hi**k."""

    c1: float
    gamma_lo: float
    c2: float
    gamma_hi: float

    def __post_init__(self):
        for name in ("c1", "gamma_lo", "c2", "gamma_hi"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"envelope constant {name} must be positive")

    def lower(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(over="ignore"):
            return self.c1 * np.power(self.gamma_lo, k)

    def upper(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(over="ignore"):
            return self.c2 * np.power(self.gamma_hi, k)


def evaluate(weight: TimeWeight, k):
    """Evaluate a weight at nonnegative step(s) k."""
    karr = np.asarray(k)
    if np.any(karr < 0):
        raise ParameterError("time weights are defined for k >= 0")
    return weight(k)


def envelope(weight: TimeWeight) -> Envelope:
    """Catalog envelope constants for a weight."""
    if isinstance(weight, Band):
        return Envelope(c1=weight.a, gamma_lo=1.0, c2=weight.b, gamma_hi=1.0)
    if isinstance(weight, Geometric):
        return Envelope(c1=1.0, gamma_lo=weight.gamma, c2=1.0, gamma_hi=weight.gamma)
    if isinstance(weight, PolyDecay):
        return Envelope(c1=1.0, gamma_lo=1.0 / (1.0 + math.exp(weight.h)), c2=1.0, gamma_hi=1.0)
    if isinstance(weight, Laplacian):
        return Envelope(
            c1=math.exp(-weight.mu / (2.0 * weight.m)),
            gamma_lo=math.exp(-1.0 / (2.0 * weight.m)),
            c2=1.0,
            gamma_hi=1.0,
        )
    raise ParameterError(f"unknown weight variant: {weight!r}")


def admissible_L_range(weight: TimeWeight):
    """Open interval of decay margins L compatible with the weight.

    For every L inside the returned interval, both envelope rates of the
    weight exceed 1 - L.
    """
    if isinstance(weight, Band):
        return (0.0, 1.0)
    if isinstance(weight, Geometric):
        return (max(0.0, 1.0 - weight.gamma), 1.0)
    if isinstance(weight, PolyDecay):
        return (1.0 - 1.0 / (1.0 + math.exp(weight.h)) ** 2, 1.0)
    if isinstance(weight, Laplacian):
        return (1.0 - math.exp(-1.0 / weight.m), 1.0)
    raise ParameterError(f"unknown weight variant: {weight!r}")


@dataclass(frozen=True)
class EnvelopeReport:
    """Outcome of a brute-force envelope check on k in [0, k_max]."""

    passed: bool
    k_max: int
    envelope: Envelope
    first_violation: Optional[int]
    violations: tuple
    min_lower_slack: float
    min_upper_slack: float

    def to_dict(self):
        return {
            "check": "envelope",
            "passed": self.passed,
            "k_max": self.k_max,
            "envelope": {
                "c1": self.envelope.c1,
                "gamma_lo": self.envelope.gamma_lo,
                "c2": self.envelope.c2,
                "gamma_hi": self.envelope.gamma_hi,
            },
            "first_violation": self.first_violation,
            "violations": list(self.violations),
            "min_lower_slack": self.min_lower_slack,
            "min_upper_slack": self.min_upper_slack,
        }


# Relative rounding allowance: the two sides of the sandwich are computed
# along different floating-point paths (power vs direct exp), which drifts
# by about k * eps at large k.
_ENVELOPE_RTOL = 1e-9


def check_envelope(weight: TimeWeight, k_max: int, env: Optional[Envelope] = None,
                   cap: int = 20) -> EnvelopeReport:
    """Verify the envelope sandwich on every k in [0, k_max].

    ``env`` overrides the catalog constants.  Violations are data, not
    errors; at most ``cap`` violating indices are retained.
    """
    if k_max < 1:
        raise ParameterError("k_max must be >= 1")
    if env is None:
        env = envelope(weight)
    k = np.arange(k_max + 1)
    vals = np.asarray(evaluate(weight, k), dtype=float)
    lo = env.lower(k)
    hi = env.upper(k)
    # comparisons, not differences: both sides may overflow to inf together
    with np.errstate(invalid="ignore", over="ignore"):
        bad = (vals < lo * (1.0 - _ENVELOPE_RTOL)) | (vals > hi * (1.0 + _ENVELOPE_RTOL))
        lower_slack = np.where(np.isfinite(vals - lo), vals - lo, 0.0)
        upper_slack = np.where(np.isfinite(hi - vals), hi - vals, 0.0)
    idx = np.flatnonzero(bad)
    return EnvelopeReport(
        passed=idx.size == 0,
        k_max=k_max,
        envelope=env,
        first_violation=int(idx[0]) if idx.size else None,
        violations=tuple(int(i) for i in idx[:cap]),
        min_lower_slack=float(lower_slack.min()),
        min_upper_slack=float(upper_slack.min()),
    )


def weight_from_spec(variant: str, params: dict) -> TimeWeight:
    """Construct a weight from a config-style (variant, params) pair."""
    variant = variant.lower().replace("_", "-")
    try:
        if variant == "band":
            return Band(a=float(params["a"]), b=float(params["b"]))
        if variant == "geometric":
            return Geometric(gamma=float(params["gamma"]))
        if variant == "poly-decay":
            return PolyDecay(h=float(params["h"]))
        if variant == "laplacian":
            return Laplacian(m=float(params["m"]), mu=int(params["mu"]))
    except KeyError as exc:
        raise ParameterError(f"weight variant {variant!r} is missing parameter {exc}") from exc
    raise ParameterError(f"unknown weight variant: {variant!r}")

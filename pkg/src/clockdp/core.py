"""Domain types for states, dynamics, costs and comparison functions.

The central construction is the clock augmentation: a time-varying plant
x+ = f(x, u, k) with stage cost l(x, k, u) becomes the stationary pair

    (x, tau)  ->  (f(x, u, tau), tau + 1),      cost read at the pre-step clock,

so that value iteration and the certificate machinery can treat the
problem as autonomous.  All types here are immutable values; operations
are pure functions and safe to share across workers.

Dynamics and cost callables are expected to be numpy-vectorized over a
leading batch dimension of states/inputs (the solvers call them with
`(N, n_x)` / `(N, n_u)` arrays and a scalar clock).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AdmissibilityError, ConfigurationError, NumericError, ParameterError
from .weights import TimeWeight


@dataclass(frozen=True)
class AugmentedState:
    """Plant state paired with the clock counter."""

    x: np.ndarray
    tau: int

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        if int(self.tau) != self.tau or self.tau < 0:
            raise ParameterError(f"clock must be a nonnegative integer, got {self.tau}")
        object.__setattr__(self, "tau", int(self.tau))

    @property
    def n_x(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class InputBox:
    """Axis-aligned bounded box of admissible inputs.

    Grid-based dynamic programming needs a compact input set, so bounds
    must be finite and are a declared approximation when the underlying
    problem allows unbounded inputs.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape:
            raise ConfigurationError("input box lo/hi shapes differ")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigurationError("input box bounds must be finite (declared bounds are required)")
        if np.any(lo > hi):
            raise ConfigurationError("input box requires lo <= hi componentwise")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n_u(self) -> int:
        return self.lo.shape[0]

    def contains(self, u, atol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return bool(np.all(u >= self.lo - atol) and np.all(u <= self.hi + atol))


class ConstantAdmissible:
    """State-independent admissible set; lets solvers skip per-node queries."""

    def __init__(self, box: InputBox):
        self.box = box

    def __call__(self, x, tau) -> InputBox:
        return self.box


def constant_admissible(lo, hi) -> ConstantAdmissible:
    return ConstantAdmissible(InputBox(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)))


@dataclass(frozen=True)
class Dynamics:
    """Plant model x+ = step(x, u, tau) with admissible input boxes.

    ``step`` must be defined for every admissible (x, u, tau) and accept
    batched x/u.  ``admissible`` maps (x, tau) to a non-empty InputBox.
    ``time_invariant`` lets solvers reuse transition tables across clock
    values.
    """

    n_x: int
    n_u: int
    step: Callable[[np.ndarray, np.ndarray, int], np.ndarray]
    admissible: Callable[[np.ndarray, int], InputBox]
    time_invariant: bool = False
    name: str = ""


@dataclass(frozen=True)
class StageCost:
    """Nonnegative stage cost, either general (x, tau, u) or separable.

    The separable form evaluates as ell1(x, u) * ell2(tau) with ell2 a
    strictly positive time weight.
    """

    fn: Optional[Callable] = None
    ell1: Optional[Callable] = None
    ell2: Optional[TimeWeight] = None

    def __post_init__(self):
        if self.fn is None and (self.ell1 is None or self.ell2 is None):
            raise ConfigurationError("stage cost needs either fn or (ell1, ell2)")
        if self.fn is not None and self.ell1 is not None:
            raise ConfigurationError("stage cost cannot be both general and separable")

    @classmethod
    def general(cls, fn) -> "StageCost":
        return cls(fn=fn)

    @classmethod
    def separable(cls, ell1, weight: TimeWeight) -> "StageCost":
        return cls(ell1=ell1, ell2=weight)

    @property
    def is_separable(self) -> bool:
        return self.fn is None

    def __call__(self, x, tau: int, u):
        if self.fn is not None:
            return self.fn(x, tau, u)
        return np.asarray(self.ell1(x, u)) * float(self.ell2(tau))


_COMPARISON_KINDS = ("k-infinity", "kl", "exp-kl", "time-indexed-k-infinity")


@dataclass(frozen=True)
class ComparisonFunction:
    """Typed comparison function used in stability statements.

    kinds:
      * ``k-infinity``: zero at zero, strictly increasing, unbounded.
      * ``kl``: K in the first argument, decreasing to 0 in the second.
      * ``exp-kl``: the explicit form lam1 * lam2**s2 * s1 (optionally
        times lam3**s3), with lam1 >= 1 and lam2 in [0, 1).
      * ``time-indexed-k-infinity``: K-infinity in s1 for each clock s2.
    """

    kind: str
    fn: Callable = None
    lam1: Optional[float] = None
    lam2: Optional[float] = None
    lam3: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _COMPARISON_KINDS:
            raise ParameterError(f"unknown comparison-function kind {self.kind!r}")
        if self.kind == "exp-kl":
            if self.lam1 is None or self.lam2 is None:
                raise ParameterError("exp-kl needs lam1 and lam2")
            if self.lam1 < 1.0:
                raise ParameterError(f"exp-kl requires lam1 >= 1, got {self.lam1}")
            if not (0.0 <= self.lam2 < 1.0):
                raise ParameterError(f"exp-kl requires lam2 in [0, 1), got {self.lam2}")
            if self.lam3 is not None and not self.lam3 > 0.0:
                raise ParameterError(f"exp-kl requires lam3 > 0, got {self.lam3}")
        elif self.fn is None:
            raise ParameterError(f"kind {self.kind!r} needs an eval function")

    @classmethod
    def kinf(cls, fn) -> "ComparisonFunction":
        return cls(kind="k-infinity", fn=fn)

    @classmethod
    def kl(cls, fn) -> "ComparisonFunction":
        return cls(kind="kl", fn=fn)

    @classmethod
    def time_kinf(cls, fn) -> "ComparisonFunction":
        return cls(kind="time-indexed-k-infinity", fn=fn)

    @classmethod
    def exp_kl(cls, lam1: float, lam2: float, lam3: Optional[float] = None) -> "ComparisonFunction":
        return cls(kind="exp-kl", lam1=lam1, lam2=lam2, lam3=lam3)

    def __call__(self, *args):
        if self.kind == "exp-kl":
            s1 = args[0]
            s2 = args[1]
            out = self.lam1 * np.power(self.lam2, s2) * np.asarray(s1, dtype=float)
            if self.lam3 is not None and len(args) > 2:
                out = out * np.power(self.lam3, args[2])
            return out
        return self.fn(*args)


def check_kinf_samples(fn, s_max: float = 1e9, n: int = 60) -> bool:
    """Sampled K-infinity check: zero at zero, strictly increasing on a
    logarithmic grid up to s_max (unboundedness is only probed)."""
    if abs(float(fn(0.0))) > 0.0:
        return False
    grid = np.logspace(-9, np.log10(s_max), n)
    vals = np.array([float(fn(s)) for s in grid])
    if vals[0] <= 0.0:
        return False
    return bool(np.all(np.diff(vals) > 0.0))


@dataclass(frozen=True)
class Kinf:
    """A K-infinity function with an optional closed-form inverse.

    Linear and pure-power shapes carry exact inverses; anything else
    falls back to bracketed bisection (``invert_kinf``).
    """

    fn: Callable[[float], float]
    inverse: Optional[Callable[[float], float]] = None
    label: str = ""

    def __call__(self, s):
        return self.fn(s)

    def inv(self, y: float, atol: float = 0.0) -> float:
        if self.inverse is not None:
            return float(self.inverse(y))
        return invert_kinf(self.fn, y, atol=atol)

    @staticmethod
    def linear(c: float, label: str = "") -> "Kinf":
        if not c > 0.0:
            raise ParameterError("linear K-infinity slope must be positive")
        return Kinf(fn=lambda s, c=c: c * s, inverse=lambda y, c=c: y / c,
                    label=label or f"{c}*s")

    @staticmethod
    def power(coef: float, p: float, label: str = "") -> "Kinf":
        if not (coef > 0.0 and p > 0.0):
            raise ParameterError("power K-infinity needs positive coefficient and exponent")
        return Kinf(fn=lambda s, c=coef, p=p: c * s ** p,
                    inverse=lambda y, c=coef, p=p: (y / c) ** (1.0 / p),
                    label=label or f"{coef}*s^{p}")

    @staticmethod
    def from_callable(fn, inverse=None, label: str = "") -> "Kinf":
        return Kinf(fn=fn, inverse=inverse, label=label)


def invert_kinf(fn, y: float, atol: float = 0.0, max_doublings: int = 2000) -> float:
    """Invert an increasing function with fn(0) = 0 by bracketed bisection.

    The bracket [0, hi] grows by doubling until fn(hi) >= y.  Bisection
    runs until the bracket width is below max(atol, floating-point
    resolution); atol=0 therefore means machine-tight.  The default
    guarantee is tighter than 1e-12 absolute on any bracket that float64
    can resolve to that width.
    """
    y = float(y)
    if y < 0.0:
        raise ParameterError("cannot invert a K-infinity function at a negative value")
    if y == 0.0:
        return 0.0
    hi = 1.0
    for _ in range(max_doublings):
        if fn(hi) >= y:
            break
        hi *= 2.0
    else:
        raise NumericError(
            f"bracket growth failed: fn({hi:g}) = {fn(hi):g} still below target {y:g}; "
            "is the function unbounded?")
    lo = 0.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fn(mid) < y:
            lo = mid
        else:
            hi = mid
        if (hi - lo) <= atol:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AugmentedDynamics:
    """Stationary form of a time-varying problem on the extended state.

    The clock component advances by exactly one per step; the stage cost
    is read at the pre-step clock.
    """

    base: Dynamics
    cost: StageCost

    def step_x(self, x, u, tau: int):
        return self.base.step(x, u, tau)

    def step_q(self, q: AugmentedState, u) -> AugmentedState:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        x_next = np.asarray(self.base.step(q.x, u, q.tau), dtype=float)
        return AugmentedState(x=x_next, tau=q.tau + 1)

    def stage(self, x, tau: int, u):
        return self.cost(x, tau, u)

    def admissible(self, x, tau: int) -> InputBox:
        return self.base.admissible(x, tau)


def augment(dynamics: Dynamics, cost: StageCost) -> AugmentedDynamics:
    """Attach the clock to a plant, checking that dimensions agree.

    The check is a probe evaluation at the origin: step and cost must
    accept (n_x, n_u)-shaped arguments and step must return n_x values.
    """
    x0 = np.zeros(dynamics.n_x)
    u0 = np.zeros(dynamics.n_u)
    try:
        box = dynamics.admissible(x0, 0)
        if box.n_u != dynamics.n_u:
            raise ConfigurationError(
                f"admissible box has {box.n_u} input dims, dynamics declares {dynamics.n_u}")
        x1 = np.asarray(dynamics.step(x0, u0, 0), dtype=float)
        if np.atleast_1d(x1).shape[-1] != dynamics.n_x:
            raise ConfigurationError(
                f"step returned {np.atleast_1d(x1).shape[-1]} state dims, "
                f"dynamics declares {dynamics.n_x}")
        float(np.asarray(cost(x0, 0, u0)))
    except ConfigurationError:
        raise
    except Exception as exc:
        raise ConfigurationError(f"dynamics/cost dimension probe failed: {exc}") from exc
    return AugmentedDynamics(base=dynamics, cost=cost)


def truncated_cost(aug: AugmentedDynamics, q: AugmentedState,
                   inputs: Sequence) -> float:
    """Partial sum of stage costs along the trajectory driven by ``inputs``.

    Nondecreasing in the truncation length.  Raises AdmissibilityError
    naming the offending step if an input leaves its admissible box.
    """
    x = np.array(q.x, dtype=float)
    tau = q.tau
    total = 0.0
    for k, u in enumerate(inputs):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        box = aug.admissible(x, tau)
        if not box.contains(u):
            raise AdmissibilityError(
                f"input {u} at step {k} (clock {tau}) is outside its admissible box", step=k)
        total += float(np.asarray(aug.stage(x, tau, u)))
        x = np.atleast_1d(np.asarray(aug.step_x(x, u, tau), dtype=float))
        tau += 1
    return total

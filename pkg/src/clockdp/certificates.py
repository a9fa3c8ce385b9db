"""Detectability/stabilizability checkers and explicit decay-bound builders.

A certificate bundle collects the state measure sigma, the storage
function W with its sandwich functions (w_lower, w_upper), the value
upper bound v_upper, and optional uniform data (linear constants ua_ell
and oa_V, a decay margin L, or K-infinity minorant/majorant ua and oa).

From a valid bundle the toolkit derives:

  * the Lyapunov-like map Y = V + W with sampled bounds
    w(sigma(x), tau) <= Y <= (v_upper + w_upper)(sigma(x), tau);
  * the one-step contraction theta and its k-fold recursion vartheta;
  * closed-form trajectory bounds beta(s1, k, tau), exponential when the
    uniform linear constants exist.

All inequality checks are sampled (deterministic grids or seeded
points), never symbolic: sigma, W and the stage cost are arbitrary user
code.  Bundle callables are expected to be numpy-vectorized in their
first argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .core import AugmentedDynamics, AugmentedState, Kinf, invert_kinf
from .dp import DiscountedSolution, TimeVaryingSolution, ValueTable, interpolate
from .errors import ParameterError
from .reporting import CheckReport, clip_violations
from .weights import Band, TimeWeight, envelope as weight_envelope


@dataclass(frozen=True)
class CertificateBundle:
    """Certificate data around a state measure sigma.

    w_lower(s1, s2) must be K-infinity in s1 for each clock s2;
    w_upper nondecreasing and zero at zero; v_upper K-infinity in s1.
    W is the storage function on (x, tau); None means identically zero,
    as does w_upper.  ``alpha_upper_inv`` optionally supplies the exact
    inverse of v_upper + w_upper in s1 (otherwise bisection is used).
    """

    sigma: Callable
    w_lower: Callable
    v_upper: Optional[Callable] = None
    W: Optional[Callable] = None
    w_upper: Optional[Callable] = None
    ua_ell: Optional[float] = None
    oa_V: Optional[float] = None
    L: Optional[float] = None
    ua: Optional[Kinf] = None
    oa: Optional[Kinf] = None
    alpha_upper_inv: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        if self.ua_ell is not None and not self.ua_ell > 0.0:
            raise ParameterError("ua_ell must be positive")
        if self.oa_V is not None and not self.oa_V > 0.0:
            raise ParameterError("oa_V must be positive")
        if self.ua_ell is not None and self.oa_V is not None and self.ua_ell > self.oa_V:
            raise ParameterError(
                f"ua_ell = {self.ua_ell} exceeds oa_V = {self.oa_V}; "
                "the lower bound on Y cannot exceed the upper bound")
        if self.L is not None and not 0.0 < self.L < 1.0:
            raise ParameterError(f"decay margin L must lie in (0, 1), got {self.L}")

    def storage(self, x, tau):
        if self.W is None:
            return np.zeros(np.shape(np.atleast_2d(x))[0]) if np.ndim(x) > 1 else 0.0
        return self.W(x, tau)

    def w_up(self, s1, s2):
        if self.w_upper is None:
            return np.zeros_like(np.asarray(s1, dtype=float)) if np.ndim(s1) else 0.0
        return self.w_upper(s1, s2)

    def alpha_upper(self, s1, s2):
        """Upper comparison v_upper + w_upper at (s1, s2)."""
        if self.v_upper is None:
            raise ParameterError("bundle has no value upper bound (detectability-only bundle)")
        return np.asarray(self.v_upper(s1, s2)) + np.asarray(self.w_up(s1, s2))

    def alpha_upper_inverse(self, y: float, s2: int) -> float:
        if self.alpha_upper_inv is not None:
            return float(self.alpha_upper_inv(y, s2))
        return invert_kinf(lambda r: float(self.alpha_upper(r, s2)), y)


def validate_bundle(bundle: CertificateBundle, s2_samples: Sequence[int] = (0, 1, 7),
                    s_max: float = 1e6, n: int = 40) -> CheckReport:
    """Sampled shape check of the comparison functions in a bundle.

    For each tested clock: w_lower must look K-infinity (zero at zero,
    strictly increasing on a log grid), w_upper nondecreasing and zero
    at zero, v_upper K-infinity when present.
    """
    grid = np.concatenate([[0.0], np.logspace(-9, math.log10(s_max), n)])
    violations = []
    for s2 in s2_samples:
        w_vals = np.array([float(bundle.w_lower(s, s2)) for s in grid])
        if w_vals[0] != 0.0 or np.any(np.diff(w_vals) <= 0.0):
            violations.append({"s2": int(s2), "function": "w_lower",
                               "reason": "not K-infinity on the sample grid"})
        wu = np.array([float(bundle.w_up(s, s2)) for s in grid])
        if wu[0] != 0.0 or np.any(np.diff(wu) < 0.0):
            violations.append({"s2": int(s2), "function": "w_upper",
                               "reason": "not nondecreasing from zero"})
        if bundle.v_upper is not None:
            vu = np.array([float(bundle.v_upper(s, s2)) for s in grid])
            if vu[0] != 0.0 or np.any(np.diff(vu) <= 0.0):
                violations.append({"s2": int(s2), "function": "v_upper",
                                   "reason": "not K-infinity on the sample grid"})
    return CheckReport(name="bundle-shapes", passed=not violations,
                       n_checked=len(s2_samples) * (3 if bundle.v_upper else 2),
                       worst_slack=math.nan, eta=0.0, violations=violations,
                       params={"label": bundle.label, "s_max": s_max})


def _as_xtau_samples(samples):
    out = []
    for s in samples:
        if isinstance(s, AugmentedState):
            out.append((s.x, s.tau))
        else:
            out.append((np.atleast_1d(np.asarray(s[0], dtype=float)), int(s[1])))
    return out


def check_detectability(bundle: CertificateBundle, aug: AugmentedDynamics,
                        samples: Iterable, eta: float = 1e-9, cap: int = 20) -> CheckReport:
    """Sampled check of the storage sandwich and its dissipation.

    Each sample is an (x, tau, u) triple.  Two inequalities are tested
    within slack eta:

      storage-upper-bound:   W(x, tau) <= w_upper(sigma(x), tau)
      storage-dissipation:   W(next) - W(x, tau) <= -w_lower(sigma(x), tau) + stage

    Violations are report content, not errors.
    """
    violations = []
    worst = math.inf
    n = 0
    for i, (x, tau, u) in enumerate(samples):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        tau = int(tau)
        s1 = float(bundle.sigma(x))
        Wq = float(bundle.storage(x, tau))
        m_bound = float(bundle.w_up(s1, tau)) - Wq
        x_next = np.atleast_1d(np.asarray(aug.step_x(x, u, tau), dtype=float))
        W_next = float(bundle.storage(x_next, tau + 1))
        stage = float(np.asarray(aug.stage(x, tau, u)))
        m_dissip = (-float(bundle.w_lower(s1, tau)) + stage) - (W_next - Wq)
        for name, margin in (("storage-upper-bound", m_bound),
                             ("storage-dissipation", m_dissip)):
            worst = min(worst, margin)
            if margin < -eta:
                violations.append({"sample": i, "inequality": name, "deficit": -margin,
                                   "sigma": s1, "tau": tau})
        n += 1
    return CheckReport(name="detectability", passed=not violations, n_checked=n,
                       worst_slack=worst if n else math.nan, eta=eta,
                       violations=clip_violations(violations, cap),
                       params={"label": bundle.label})


def check_stabilizability(bundle: CertificateBundle, value, samples: Iterable,
                          eta: float = 1e-9, cap: int = 20) -> CheckReport:
    """Sampled check of V(x, tau) <= v_upper(sigma(x), tau).

    ``value`` is a callable (x, tau) -> float or a ValueTable (a
    stationary table is read as clock-independent).  Against a lower
    approximation of the value this check is necessary but not
    sufficient, and the report says so.
    """
    if bundle.v_upper is None:
        raise ParameterError("bundle has no value upper bound to check against")
    notes = []
    if isinstance(value, ValueTable):
        table = value
        if table.approximation == "lower":
            notes.append("value source is a lower approximation; "
                         "this check is necessary but not sufficient")
        value_fn = lambda x, tau: float(
            interpolate(table, x, tau=tau if table.is_time_varying else None))
    else:
        value_fn = value
    violations = []
    worst = math.inf
    n = 0
    for i, (x, tau) in enumerate(_as_xtau_samples(samples)):
        s1 = float(bundle.sigma(x))
        v = float(value_fn(x, tau))
        margin = float(bundle.v_upper(s1, tau)) - v
        worst = min(worst, margin)
        if margin < -eta:
            violations.append({"sample": i, "deficit": -margin, "sigma": s1, "tau": tau})
        n += 1
    return CheckReport(name="stabilizability", passed=not violations, n_checked=n,
                       worst_slack=worst if n else math.nan, eta=eta,
                       violations=clip_violations(violations, cap),
                       params={"label": bundle.label}, notes=notes)


def vbar_from_exponential_sequence(alpha: Callable, lam: float) -> Callable:
    """Value upper bound from an exponentially vanishing stage-cost certificate.

    If some admissible input sequence keeps the stage cost below
    alpha(sigma(x), tau) * exp(-lam * k), the total cost is at most the
    geometric sum alpha / (1 - exp(-lam)).
    """
    if not lam > 0.0:
        raise ParameterError(f"decay rate must be positive, got {lam}")
    scale = 1.0 / (1.0 - math.exp(-lam))
    return lambda s1, s2: scale * np.asarray(alpha(s1, s2))


# ---------------------------------------------------------------------------
# Lyapunov-like map Y = V + W


@dataclass(frozen=True)
class YFunction:
    """Y(q) = V(q) + W(q) with its sampled comparison bounds."""

    value: Callable
    bundle: CertificateBundle

    @classmethod
    def from_table(cls, table: ValueTable, bundle: CertificateBundle,
                   gamma: Optional[float] = None) -> "YFunction":
        """Wrap a solved table.  For a stationary table of the discounted
        reduction, pass gamma so that V(x, tau) = gamma**tau * V(x)."""
        if table.is_time_varying:
            fn = lambda x, tau: float(interpolate(table, x, tau=int(tau)))
        elif gamma is not None:
            fn = lambda x, tau: float(gamma ** int(tau) * interpolate(table, x))
        else:
            fn = lambda x, tau: float(interpolate(table, x))
        return cls(value=fn, bundle=bundle)

    def __call__(self, x, tau: int) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(self.value(x, int(tau))) + float(self.bundle.storage(x, int(tau)))

    def bounds(self, x, tau: int):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s1 = float(self.bundle.sigma(x))
        lower = float(self.bundle.w_lower(s1, int(tau)))
        upper = float(self.bundle.alpha_upper(s1, int(tau)))
        return lower, upper


def y_eval(yf: YFunction, q: Union[AugmentedState, tuple]) -> float:
    x, tau = (q.x, q.tau) if isinstance(q, AugmentedState) else q
    return yf(x, tau)


def y_bounds(yf: YFunction, q: Union[AugmentedState, tuple]):
    x, tau = (q.x, q.tau) if isinstance(q, AugmentedState) else q
    return yf.bounds(x, tau)


# ---------------------------------------------------------------------------
# One-step contraction and its recursion

# Sample offsets (fractions of s1, log-spaced) probing the monotone
# envelope below a query point.
_THETA_PROBE = np.logspace(-6.0, -0.1, 12)


def theta(s1: float, s2: int, bundle: CertificateBundle, envelope: bool = True) -> float:
    """One-step contraction s1 - w_lower(alpha_upper^{-1}(s1), s2).

    Clamped below at zero.  With ``envelope`` on (the default), the raw
    map is replaced by its running maximum over a log-spaced probe of
    points below s1, a monotone upper bound that is exact whenever the
    raw map is already nondecreasing.
    """
    s1 = float(s1)
    if s1 < 0.0:
        raise ParameterError("theta is defined for s1 >= 0")
    if s1 == 0.0:
        return 0.0
    val = _theta_raw(s1, s2, bundle)
    if envelope:
        for t in _THETA_PROBE * s1:
            val = max(val, _theta_raw(float(t), s2, bundle))
    return val


def _theta_raw(s1: float, s2: int, bundle: CertificateBundle) -> float:
    r = bundle.alpha_upper_inverse(s1, s2)
    return max(0.0, s1 - float(bundle.w_lower(r, s2)))


def check_theta_monotone(bundle: CertificateBundle, s2: int, s_max: float,
                         n: int = 25) -> bool:
    """Probe whether the raw contraction is nondecreasing on (0, s_max]."""
    grid = np.logspace(math.log10(s_max) - 8, math.log10(s_max), n)
    vals = [_theta_raw(float(s), s2, bundle) for s in grid]
    return bool(np.all(np.diff(vals) >= -1e-12 * max(1.0, s_max)))


def vartheta_k(s1: float, k: int, tau_final: int, bundle: CertificateBundle,
               envelope: bool = True) -> float:
    """k-fold contraction bounding Y after k optimal steps.

    Applies theta at clocks tau_final - k, ..., tau_final - 1 starting
    from s1; k = 0 returns s1.  Nonincreasing in k.
    """
    k = int(k)
    tau_final = int(tau_final)
    if k < 0:
        raise ParameterError("k must be nonnegative")
    if tau_final < k:
        raise ParameterError("tau_final must be at least k (clock starts nonnegative)")
    z = float(s1)
    for j in range(k):
        z = theta(z, tau_final - k + j, bundle, envelope=envelope)
    return z


# ---------------------------------------------------------------------------
# Explicit trajectory bounds


@dataclass(frozen=True)
class BetaBound:
    """Decay bound beta(s1, k, tau) certified by a decay route.

    kinds: 'uniform-exp-kl' (lam1 * lam2**k * s1), 'separable-exp-kl'
    (times lam3**tau), 'separable-kl' (closed form through ua/oa), or
    'custom'.
    """

    kind: str
    fn: Callable
    lam1: Optional[float] = None
    lam2: Optional[float] = None
    lam3: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __call__(self, s1, k, tau=0):
        return self.fn(s1, k, tau)

    def scaled(self, factor: float) -> "BetaBound":
        """Same bound with the leading coefficient multiplied by factor."""
        base = self.fn
        return BetaBound(kind="custom", fn=lambda s1, k, tau: factor * base(s1, k, tau),
                         lam1=None if self.lam1 is None else factor * self.lam1,
                         lam2=self.lam2, lam3=self.lam3,
                         params={**self.params, "scale": factor})


def beta_uniform_exp(a_ell: float, a_V: float) -> BetaBound:
    """Exponential bound from uniform linear constants.

    Requires 0 < a_ell <= a_V; yields lam1 = a_V / a_ell and
    lam2 = 1 - a_ell / a_V, independent of the start clock.
    """
    _check_linear_pair(a_ell, a_V)
    lam1 = a_V / a_ell
    lam2 = 1.0 - a_ell / a_V
    fn = lambda s1, k, tau: lam1 * np.power(lam2, k) * np.asarray(s1, dtype=float)
    return BetaBound(kind="uniform-exp-kl", fn=fn, lam1=lam1, lam2=lam2,
                     params={"a_ell": a_ell, "a_V": a_V})


def beta_separable_exp(a_ell: float, a_V: float, c1: float, c2: float,
                       gamma_lo: float, gamma_hi: float) -> BetaBound:
    """Exponential bound for separable costs with an exponential envelope.

    Gate: both envelope rates must exceed 1 - a_ell / a_V.  Yields
    lam1 = a_V c2 / (a_ell c1), lam2 = (1 - a_ell / a_V) / gamma_lo and
    lam3 = gamma_hi / gamma_lo.
    """
    _check_linear_pair(a_ell, a_V)
    if not (c1 > 0.0 and c2 > 0.0):
        raise ParameterError("envelope constants c1, c2 must be positive")
    threshold = 1.0 - a_ell / a_V
    for name, g in (("gamma_lo", gamma_lo), ("gamma_hi", gamma_hi)):
        if not g > threshold:
            raise ParameterError(
                f"envelope rate {name} = {g} rejected: the exponential route requires "
                f"rates above 1 - a_ell/a_V = {threshold}")
    lam1 = a_V * c2 / (a_ell * c1)
    lam2 = (1.0 - a_ell / a_V) / gamma_lo
    lam3 = gamma_hi / gamma_lo
    fn = lambda s1, k, tau: (lam1 * np.power(lam2, k) * np.power(lam3, tau)
                             * np.asarray(s1, dtype=float))
    return BetaBound(kind="separable-exp-kl", fn=fn, lam1=lam1, lam2=lam2, lam3=lam3,
                     params={"a_ell": a_ell, "a_V": a_V, "c1": c1, "c2": c2,
                             "gamma_lo": gamma_lo, "gamma_hi": gamma_hi,
                             "rate_threshold": threshold})


def beta_separable(ua: Kinf, oa: Kinf, c1: float, c2: float, gamma_lo: float,
                   gamma_hi: float, L: float) -> BetaBound:
    """KL bound for separable costs through general comparison functions.

    beta(s1, k, tau) = ua^{-1}((c2 gamma_hi**tau / (c1 gamma_lo**tau))
    * ((1 - L) / gamma_lo)**k * oa(s1)); independent of tau when the
    envelope rates coincide and c1 = c2.
    """
    if not 0.0 < L < 1.0:
        raise ParameterError(f"decay margin L must lie in (0, 1), got {L}")
    if not (c1 > 0.0 and c2 > 0.0):
        raise ParameterError("envelope constants c1, c2 must be positive")
    for name, g in (("gamma_lo", gamma_lo), ("gamma_hi", gamma_hi)):
        if not g > 1.0 - L:
            raise ParameterError(
                f"envelope rate {name} = {g} rejected: the separable route requires "
                f"rates above 1 - L = {1.0 - L}")

    def fn(s1, k, tau):
        inner = (c2 * gamma_hi ** tau) / (c1 * gamma_lo ** tau) \
            * ((1.0 - L) / gamma_lo) ** k * float(oa(float(s1)))
        return ua.inv(inner)

    return BetaBound(kind="separable-kl", fn=fn,
                     params={"c1": c1, "c2": c2, "gamma_lo": gamma_lo,
                             "gamma_hi": gamma_hi, "L": L})


def _check_linear_pair(a_ell: float, a_V: float) -> None:
    if not a_ell > 0.0:
        raise ParameterError("a_ell must be positive")
    if a_ell > a_V:
        raise ParameterError(
            f"a_ell = {a_ell} exceeds a_V = {a_V}: contradicts the comparison sandwich "
            "(the lower bound on Y cannot exceed its upper bound)")


# ---------------------------------------------------------------------------
# Uniform margins and route selection


def check_uniform_margins(bundle: CertificateBundle, samples: Sequence,
                          weight: Optional[TimeWeight] = None, eta: float = 1e-9,
                          cap: int = 20) -> CheckReport:
    """Sampled margins behind the uniform / separable decay routes.

    samples are (s1, s2) pairs.  Verified within slack eta, whichever
    data the bundle carries:

      w_lower(s1, s2) >= lower(s1) * [l2(s2) if a weight is given]
      (v_upper + w_upper)(s1, s2) <= upper(s1) * [l2(s2)]
      L * upper(s) <= lower(s)

    with lower/upper either ua_ell*s1 / oa_V*s1 or the functions ua / oa.
    """
    has_linear = bundle.ua_ell is not None and bundle.oa_V is not None
    has_fns = bundle.ua is not None and bundle.oa is not None
    if not (has_linear or has_fns):
        raise ParameterError("bundle carries no uniform data (ua_ell/oa_V or ua/oa)")
    lower = (lambda s: bundle.ua_ell * s) if has_linear else bundle.ua
    upper = (lambda s: bundle.oa_V * s) if has_linear else bundle.oa

    violations = []
    worst = math.inf
    n = 0
    for i, (s1, s2) in enumerate(samples):
        s1 = float(s1)
        s2 = int(s2)
        scale = float(weight(s2)) if weight is not None else 1.0
        m_lo = float(bundle.w_lower(s1, s2)) - float(lower(s1)) * scale
        m_hi = float(upper(s1)) * scale - float(bundle.alpha_upper(s1, s2))
        checks = [("lower-margin", m_lo), ("upper-margin", m_hi)]
        if bundle.L is not None:
            checks.append(("decay-margin", float(lower(s1)) - bundle.L * float(upper(s1))))
        for name, margin in checks:
            worst = min(worst, margin)
            if margin < -eta:
                violations.append({"sample": i, "inequality": name, "deficit": -margin,
                                   "s1": s1, "s2": s2})
        n += 1
    return CheckReport(name="uniform-margins", passed=not violations, n_checked=n,
                       worst_slack=worst if n else math.nan, eta=eta,
                       violations=clip_violations(violations, cap),
                       params={"separable": weight is not None, "L": bundle.L,
                               "linear": has_linear, "label": bundle.label})


@dataclass
class RouteDecision:
    """Which decay-bound route the bundle supports, and its parameters."""

    route: str
    accepted: bool
    beta: Optional[BetaBound]
    params: dict = field(default_factory=dict)
    reason: str = ""

    def to_dict(self) -> dict:
        out = {"route": self.route, "accepted": self.accepted, "params": self.params,
               "reason": self.reason}
        if self.beta is not None:
            out["beta"] = {"kind": self.beta.kind, "lam1": self.beta.lam1,
                           "lam2": self.beta.lam2, "lam3": self.beta.lam3}
        return out


def choose_route(bundle: CertificateBundle, weight: Optional[TimeWeight] = None) -> RouteDecision:
    """Pick the strongest applicable decay route.

    ``weight`` is the separable time profile of the stage cost or None
    when the cost is not separable.  A band weight folds its bounds into
    the uniform constants; any other weight engages the separable routes
    through its exponential envelope.  Rejection at a parameter gate is a
    verdict (accepted=False), not an error.
    """
    has_linear = bundle.ua_ell is not None and bundle.oa_V is not None
    has_fns = bundle.ua is not None and bundle.oa is not None
    separable = weight is not None and not isinstance(weight, Band)

    if not separable:
        lo_scale, hi_scale = (weight.a, weight.b) if isinstance(weight, Band) else (1.0, 1.0)
        if has_linear:
            a_eff = bundle.ua_ell * lo_scale
            v_eff = bundle.oa_V * hi_scale
            beta = beta_uniform_exp(a_eff, v_eff)
            return RouteDecision(route="uniform-exp-kl", accepted=True, beta=beta,
                                 params={"a_ell": a_eff, "a_V": v_eff,
                                         "lam1": beta.lam1, "lam2": beta.lam2})
        if has_fns:
            return RouteDecision(
                route="uniform-kl", accepted=True, beta=None,
                params={"band_fold": [lo_scale, hi_scale]},
                reason="no closed-form bound on this route; the one-step decrease "
                       "Y(next) - Y <= -ua(oa^-1(Y)) is verified directly")
        return RouteDecision(route="none", accepted=False, beta=None,
                             reason="bundle carries no uniform data")

    env = weight_envelope(weight)
    if has_linear:
        threshold = 1.0 - bundle.ua_ell / bundle.oa_V
        try:
            beta = beta_separable_exp(bundle.ua_ell, bundle.oa_V, env.c1, env.c2,
                                      env.gamma_lo, env.gamma_hi)
        except ParameterError as exc:
            return RouteDecision(route="separable-exp-kl", accepted=False, beta=None,
                                 params={"rate_threshold": threshold,
                                         "gamma_lo": env.gamma_lo, "gamma_hi": env.gamma_hi},
                                 reason=str(exc))
        return RouteDecision(route="separable-exp-kl", accepted=True, beta=beta,
                             params={"a_ell": bundle.ua_ell, "a_V": bundle.oa_V,
                                     "rate_threshold": threshold,
                                     "lam1": beta.lam1, "lam2": beta.lam2, "lam3": beta.lam3})
    if has_fns and bundle.L is not None:
        try:
            beta = beta_separable(bundle.ua, bundle.oa, env.c1, env.c2,
                                  env.gamma_lo, env.gamma_hi, bundle.L)
        except ParameterError as exc:
            return RouteDecision(route="separable-kl", accepted=False, beta=None,
                                 params={"L": bundle.L, "gamma_lo": env.gamma_lo,
                                         "gamma_hi": env.gamma_hi},
                                 reason=str(exc))
        return RouteDecision(route="separable-kl", accepted=True, beta=beta,
                             params={"L": bundle.L})
    return RouteDecision(route="none", accepted=False, beta=None,
                         reason="bundle carries neither linear constants nor (ua, oa, L)")


# ---------------------------------------------------------------------------
# One-step decrease along solved tables


def check_value_decrease(solution: Union[DiscountedSolution, TimeVaryingSolution],
                         aug: AugmentedDynamics, bundle: CertificateBundle,
                         taus: Sequence[int] = (0,), slack: float = 0.0,
                         nodes: Optional[np.ndarray] = None, form: str = "w",
                         clean_only: bool = True, cap: int = 20,
                         value_fn: Optional[Callable] = None) -> CheckReport:
    """One-step Lyapunov decrease at grid nodes under the solved policy.

    For each departure node x (clean ones by default) and clock tau, the
    chosen input u leads to x+ and the check is

      form 'w':        Y(q+) - Y(q) <= -w_lower(sigma(x), tau) + slack
      form 'uniform':  Y(q+) - Y(q) <= -ua(oa^{-1}(Y(q))) + slack

    with Y = V + W read from the table (interpolated at x+) or from
    ``value_fn(x, tau)`` when given (e.g. an analytic value, which keeps
    the table's approximation error out of the comparison).  ``slack``
    should cover the solver tolerance, and the table's own error when no
    exact value source is available.
    """
    if form not in ("w", "uniform"):
        raise ParameterError(f"unknown decrease form {form!r}")
    if form == "uniform" and (bundle.ua is None or bundle.oa is None):
        raise ParameterError("form 'uniform' needs bundle.ua and bundle.oa")

    grid = solution.value.grid
    X = grid.nodes()
    stationary = isinstance(solution, DiscountedSolution)
    violations = []
    worst = math.inf
    n = 0
    for tau in taus:
        tau = int(tau)
        pol = solution.policy.at(tau) if not stationary else solution.policy.indices
        contam = (solution.value.contaminated if stationary
                  else solution.value.contaminated[tau])
        idx = np.arange(grid.n_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
        if clean_only:
            idx = idx[~contam[idx]]
        u_sel = solution.policy.input_grid.inputs[pol[idx]]
        x_dep = X[idx]
        step_tau = 0 if stationary else tau
        x_next = np.asarray(aug.step_x(x_dep, u_sel, step_tau), dtype=float)
        if value_fn is not None:
            v_dep = np.array([float(value_fn(x, tau)) for x in x_dep])
            v_next = np.array([float(value_fn(x, tau + 1)) for x in x_next])
        elif stationary:
            gamma = solution.gamma
            v_dep = gamma ** tau * solution.value.values[idx]
            v_next = gamma ** (tau + 1) * interpolate(solution.value, x_next)
        else:
            v_dep = solution.value.values[tau][idx]
            v_next = interpolate(solution.value, x_next, tau=tau + 1)
        y_dep = v_dep + _storage_vec(bundle, x_dep, tau)
        y_next = v_next + _storage_vec(bundle, x_next, tau + 1)
        sig = np.asarray(bundle.sigma(x_dep), dtype=float)
        if form == "w":
            required = np.asarray(bundle.w_lower(sig, tau), dtype=float)
        else:
            required = np.array([float(bundle.ua(bundle.oa.inv(float(y)))) for y in y_dep])
        margin = (-required + slack) - (y_next - y_dep)
        worst = min(worst, float(margin.min()) if margin.size else math.inf)
        bad = np.flatnonzero(margin < 0.0)
        for b in bad[:cap]:
            violations.append({"node": int(idx[b]), "tau": tau, "deficit": float(-margin[b]),
                               "sigma": float(sig[b])})
        n += int(margin.size)
    return CheckReport(name=f"value-decrease-{form}", passed=not violations, n_checked=n,
                       worst_slack=worst if n else math.nan, eta=slack,
                       violations=clip_violations(violations, cap),
                       params={"taus": list(int(t) for t in taus), "clean_only": clean_only,
                               "form": form})


def _storage_vec(bundle: CertificateBundle, x: np.ndarray, tau: int) -> np.ndarray:
    if bundle.W is None:
        return np.zeros(x.shape[0])
    return np.asarray([float(bundle.W(xi, tau)) for xi in x])

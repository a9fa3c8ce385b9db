"""Worked example problems with their certificate data.

Three built-ins:

  * ``harmonic_scalar``: a scalar plant converging non-exponentially to
    the origin, with an analytic value function given by a truncated
    series (the toolkit's main analytic oracle);
  * ``nonholonomic_integrator``: the 3-state integrator under a
    separable time-weighted cost, carrying the linear certificate
    constants (1, 22/5);
  * ``pendulum_tracking``: inverted-pendulum reference tracking with a
    two-step deadbeat input law and a sampled cost-ratio constant.

Plus the quadratic-cost detectability bundle and a generic linear
problem used by inline CLI configs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .certificates import CertificateBundle
from .core import (AugmentedDynamics, Dynamics, InputBox, Kinf, StageCost, augment,
                   constant_admissible)
from .dp import InputGrid, StateGrid
from .errors import ParameterError
from .weights import Band, TimeWeight


@dataclass(frozen=True)
class ExampleProblem:
    """A packaged problem: plant, cost, measure, certificates, grids."""

    name: str
    dynamics: Dynamics
    stage: StageCost
    sigma: Callable
    bundle: CertificateBundle
    grid: StateGrid
    input_grid: InputGrid
    analytic_value: Optional[Callable] = None
    analytic_controller: Optional[Callable] = None
    # constructive upper bound on the value (e.g. the cost of a known
    # stabilizing sequence); passing v_upper >= this is sufficient
    value_upper_estimate: Optional[Callable] = None
    weight: Optional[TimeWeight] = None
    meta: dict = field(default_factory=dict)

    @cached_property
    def aug(self) -> AugmentedDynamics:
        return augment(self.dynamics, self.stage)


# ---------------------------------------------------------------------------
# Scalar plant with non-exponential convergence


class HarmonicValue:
    """Analytic value of the scalar example, by truncated series.

    V(x) = x**2 for x <= 0 and x**2 * (1 + sum_{k>=1} (1+kx)^{-2}) for
    x > 0, with V(0) = 0 (the limit value).  The series is truncated at
    K = ceil(1/tol) terms, which keeps the truncation error below
    x/(1 + Kx) <= 1/K <= tol for every x (integral tail bound; the
    per-term form of the same bound is 1/(x^2 K) for the bare series).
    """

    def __init__(self, tol: float = 1e-6, chunk: int = 5000):
        if not 0.0 < tol < 1.0:
            raise ParameterError("series tolerance must be in (0, 1)")
        self.tol = tol
        self.terms = int(math.ceil(1.0 / tol))
        self.chunk = chunk

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.where(x <= 0.0, x * x, 0.0)
        pos = x > 0.0
        if np.any(pos):
            xp = x[pos]
            # aim for ~1e6 elements per chunk so small batches stay fast
            chunk = max(self.chunk, 1_000_000 // max(1, xp.size))
            s = np.zeros_like(xp)
            k = 1
            while k <= self.terms:
                hi = min(k + chunk, self.terms + 1)
                ks = np.arange(k, hi, dtype=float)
                s += (1.0 / (1.0 + xp[:, None] * ks) ** 2).sum(axis=1)
                k = hi
            out[pos] = xp * xp * (1.0 + s)
        return float(out[0]) if scalar else out


def harmonic_scalar(value_tol: float = 1e-6) -> ExampleProblem:
    """Scalar plant x+ = x/(1+x) on x >= 0 (0 past the origin), cost x**2.

    Closed form along rollouts: x(k) = x0 / (1 + k x0) for x0 >= 0.  The
    input is irrelevant (single admissible input 0); the stationary
    solve uses discount 1, valid because the cost is summable.
    """
    def step(x, u, tau):
        xs = x[..., 0]
        nxt = np.where(xs > 0.0, xs / (1.0 + np.maximum(xs, 0.0)), 0.0)
        nxt = np.broadcast_to(nxt, np.broadcast_shapes(nxt.shape, np.asarray(u)[..., 0].shape))
        return nxt[..., None]

    def ell1(x, u):
        base = x[..., 0] ** 2
        return np.broadcast_to(base, np.broadcast_shapes(base.shape, np.asarray(u)[..., 0].shape))

    sigma = lambda x: np.abs(np.asarray(x)[..., 0])
    value = HarmonicValue(tol=value_tol)

    dynamics = Dynamics(n_x=1, n_u=1, step=step,
                        admissible=constant_admissible([0.0], [0.0]),
                        time_invariant=True, name="harmonic-scalar")
    stage = StageCost.separable(ell1, Band(1.0, 1.0))
    bundle = CertificateBundle(
        sigma=sigma,
        w_lower=lambda s1, s2: np.asarray(s1, dtype=float) ** 2,
        v_upper=lambda s1, s2: value(np.asarray(s1, dtype=float)),
        ua=Kinf.power(1.0, 2.0),
        oa=Kinf.from_callable(lambda s: float(value(s)), label="analytic value"),
        label="harmonic-scalar",
    )
    return ExampleProblem(
        name="harmonic-scalar",
        dynamics=dynamics,
        stage=stage,
        sigma=sigma,
        bundle=bundle,
        grid=StateGrid(lo=(0.0,), hi=(5.0,), counts=(2001,)),
        input_grid=InputGrid(box=InputBox([0.0], [0.0]), counts=(1,)),
        analytic_value=lambda x, tau=0: float(value(np.asarray(x)[..., 0])),
        analytic_controller=lambda x, tau: np.zeros(1),
        weight=stage.ell2,
        meta={"value_tol": value_tol},
    )


def harmonic_closed_form_states(x0: float, horizon: int) -> np.ndarray:
    """x(k) = x0 / (1 + k x0) for x0 >= 0, the rollout oracle."""
    ks = np.arange(horizon + 1, dtype=float)
    if x0 <= 0.0:
        return np.concatenate([[x0], np.zeros(horizon)])
    return x0 / (1.0 + ks * x0)


# ---------------------------------------------------------------------------
# Non-holonomic integrator


def nonholonomic_integrator(weight: TimeWeight,
                            grid: Optional[StateGrid] = None,
                            input_grid: Optional[InputGrid] = None) -> ExampleProblem:
    """3-state integrator with drift-free lateral dynamics.

    x1+ = x1 + u1, x2+ = x2 + u2, x3+ = x3 + x1 u2 - x2 u1, under the
    separable cost (x1^2 + x2^2 + 10|x3| + |u|^2) * l2(tau) and measure
    sigma = x1^2 + x2^2 + 10|x3|.  The certificate bundle carries zero
    storage, w(s1, s2) = s1 l2(s2), v(s1, s2) = (22/5) s1 l2(s2), hence
    the linear constants (1, 22/5).  With a geometric weight the
    exponential route admits exactly the rates above 17/22.
    """
    def step(x, u, tau):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        u1, u2 = u[..., 0], u[..., 1]
        return np.stack([x1 + u1, x2 + u2, x3 + x1 * u2 - x2 * u1], axis=-1)

    def ell1(x, u):
        return (x[..., 0] ** 2 + x[..., 1] ** 2 + 10.0 * np.abs(x[..., 2])
                + u[..., 0] ** 2 + u[..., 1] ** 2)

    sigma = lambda x: (np.asarray(x)[..., 0] ** 2 + np.asarray(x)[..., 1] ** 2
                       + 10.0 * np.abs(np.asarray(x)[..., 2]))

    a_ell, a_V = 1.0, 22.0 / 5.0
    dynamics = Dynamics(n_x=3, n_u=2, step=step,
                        admissible=constant_admissible([-1.0, -1.0], [1.0, 1.0]),
                        time_invariant=True, name="nonholonomic-integrator")
    bundle = CertificateBundle(
        sigma=sigma,
        w_lower=lambda s1, s2, w=weight: np.asarray(s1, dtype=float) * float(w(s2)),
        v_upper=lambda s1, s2, w=weight: a_V * np.asarray(s1, dtype=float) * float(w(s2)),
        ua_ell=a_ell,
        oa_V=a_V,
        alpha_upper_inv=lambda y, s2, w=weight: y / (a_V * float(w(s2))),
        label="nonholonomic-integrator",
    )
    return ExampleProblem(
        name="nonholonomic-integrator",
        dynamics=dynamics,
        stage=StageCost.separable(ell1, weight),
        sigma=sigma,
        bundle=bundle,
        grid=grid or StateGrid(lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0), counts=(21, 21, 21)),
        input_grid=input_grid or InputGrid(box=InputBox([-1.0, -1.0], [1.0, 1.0]), counts=(9, 9)),
        weight=weight,
        meta={"a_ell": a_ell, "a_V": a_V, "rate_threshold": 1.0 - a_ell / a_V},
    )


# ---------------------------------------------------------------------------
# Inverted-pendulum tracking


def default_reference_input(k):
    """Square wave +-0.2 switching every 20 steps."""
    k = np.asarray(k)
    return np.where((k // 20) % 2 == 0, 0.2, -0.2)


def _default_band_profile(k):
    # stays inside [0.5, 2.0]; endpoints attained
    return 1.25 + 0.75 * np.sin(0.35 * np.asarray(k, dtype=float))


def pendulum_tracking(a: float = 1.0, b: float = 1.0, c: float = 1.0, T: float = 0.1,
                      r: float = 0.1, weight_band: Optional[Band] = None,
                      reference_inputs: Optional[Callable] = None,
                      theta: Optional[float] = None, theta_samples: int = 10_000,
                      theta_seed: int = 1234, theta_margin: float = 1.05) -> ExampleProblem:
    """Tracking-error problem for an Euler-discretized inverted pendulum.

    State x = (e1, e2, z1, z2): tracking error and reference.  The
    reference generator is driven by the bounded input v(k); the cost is
    lbar(tau) * (|e1| + |e2| + r |u - v(tau)|) with lbar a band profile
    in [m_lo, m_hi].

    The analytic controller cancels the error in two steps (deadbeat)
    and then follows v.  The cost ratio theta with
    total_cost <= theta * sigma(x) is estimated as the maximum of the
    ratio over ``theta_samples`` seeded tuples (e0, reference, clock),
    inflated by ``theta_margin`` to cover fresh samples from the same
    ranges; pass ``theta`` to override.
    """
    for name, val in (("a", a), ("b", b), ("c", c), ("T", T), ("r", r)):
        if not val > 0.0:
            raise ParameterError(f"pendulum parameter {name} must be positive, got {val}")
    band = weight_band or Band(0.5, 2.0, values=_default_band_profile)
    vref = reference_inputs or default_reference_input

    def step(x, u, tau):
        e1, e2, z1, z2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        uu = u[..., 0]
        vk = float(vref(tau))
        e1n = e1 + T * e2
        e2n = e2 + T * (a * (np.sin(e1 + z1) - np.sin(z1)) - b * e2 + c * (uu - vk))
        z1n = z1 + T * z2
        z2n = z2 + T * (a * np.sin(z1) - b * z2 + c * vk)
        # only e2n sees the input; broadcast the rest to the batched shape
        return np.stack(np.broadcast_arrays(e1n, e2n, z1n, z2n), axis=-1)

    sigma = lambda x: np.abs(np.asarray(x)[..., 0]) + np.abs(np.asarray(x)[..., 1])

    def stage_fn(x, tau, u):
        vk = float(vref(tau))
        return float(band(tau)) * (sigma(x) + r * np.abs(u[..., 0] - vk))

    def deadbeat(x, tau):
        e1, e2, z1 = float(x[0]), float(x[1]), float(x[2])
        u = float(vref(tau)) + (1.0 / c) * (
            b * e2 - a * (math.sin(e1 + z1) - math.sin(z1)) - e2 / T - (e1 + T * e2) / T ** 2)
        return np.array([u])

    def deadbeat_cost(x, tau):
        # total cost of the deadbeat sequence from (x, tau); the error is
        # cancelled after two steps, so three stages capture everything
        xk = np.array(x, dtype=float)
        total = 0.0
        for j in range(3):
            u = deadbeat(xk, tau + j)
            total += float(stage_fn(xk, tau + j, u))
            xk = step(xk, u, tau + j)
        return total

    m_lo = band.a
    if theta is None:
        ratios = _pendulum_cost_ratios(a, b, c, T, r, band, vref,
                                       *_pendulum_samples(theta_samples, theta_seed))
        theta_raw = float(ratios.max())
        theta = theta_margin * theta_raw
    else:
        theta_raw = theta

    bundle = CertificateBundle(
        sigma=sigma,
        w_lower=lambda s1, s2: m_lo * np.asarray(s1, dtype=float),
        v_upper=lambda s1, s2: theta * np.asarray(s1, dtype=float),
        ua_ell=m_lo,
        oa_V=theta,
        alpha_upper_inv=lambda y, s2: y / theta,
        label="pendulum-tracking",
    )
    # covers deadbeat inputs from e in [-2,2]^2 for any reference
    v_max = float(np.max(np.abs(vref(np.arange(1000)))))
    u_max = 1.2 * (v_max + (2.0 * b + 2.0 * a + 2.0 / T + (2.0 + 2.0 * T) / T ** 2) / c)
    return ExampleProblem(
        name="pendulum-tracking",
        dynamics=Dynamics(n_x=4, n_u=1, step=step,
                          admissible=constant_admissible([-u_max], [u_max]),
                          time_invariant=False, name="pendulum-tracking"),
        stage=StageCost.general(stage_fn),
        sigma=sigma,
        bundle=bundle,
        grid=StateGrid(lo=(-2.0, -2.0, -math.pi, -2.0), hi=(2.0, 2.0, math.pi, 2.0),
                       counts=(9, 9, 9, 9)),
        input_grid=InputGrid(box=InputBox([-u_max], [u_max]), counts=(31,)),
        analytic_controller=deadbeat,
        value_upper_estimate=deadbeat_cost,
        weight=None,  # the cost is not separable (the u - v(tau) coupling)
        meta={"a": a, "b": b, "c": c, "T": T, "r": r, "m_lo": m_lo, "m_hi": band.b,
              "theta": theta, "theta_raw": theta_raw, "theta_margin": theta_margin,
              "theta_samples": theta_samples, "theta_seed": theta_seed},
    )


def _pendulum_samples(n: int, seed: int):
    rng = np.random.default_rng(seed)
    e1 = rng.uniform(-2.0, 2.0, n)
    e2 = rng.uniform(-2.0, 2.0, n)
    z1 = rng.uniform(-math.pi, math.pi, n)
    z2 = rng.uniform(-2.0, 2.0, n)
    tau = rng.integers(0, 200, n)
    return e1, e2, z1, z2, tau


def _pendulum_cost_ratios(a, b, c, T, r, band, vref, e1, e2, z1, z2, tau,
                          sigma_floor: float = 1e-6) -> np.ndarray:
    """Vectorized deadbeat cost over total ratio J / sigma.

    Runs the deadbeat law for three steps (the third stage cost is
    identically zero once the error is cancelled) and divides by the
    initial measure, dropping samples below ``sigma_floor``.
    """
    sig0 = np.abs(e1) + np.abs(e2)
    J = np.zeros_like(sig0)
    E1, E2, Z1, Z2 = e1.copy(), e2.copy(), z1.copy(), z2.copy()
    for j in range(3):
        k = tau + j
        vk = np.asarray(vref(k), dtype=float)
        u = vk + (1.0 / c) * (b * E2 - a * (np.sin(E1 + Z1) - np.sin(Z1))
                              - E2 / T - (E1 + T * E2) / T ** 2)
        lb = np.asarray(band(k), dtype=float)
        J += lb * (np.abs(E1) + np.abs(E2) + r * np.abs(u - vk))
        E1n = E1 + T * E2
        E2n = E2 + T * (a * (np.sin(E1 + Z1) - np.sin(Z1)) - b * E2 + c * (u - vk))
        Z1n = Z1 + T * Z2
        Z2n = Z2 + T * (a * np.sin(Z1) - b * Z2 + c * vk)
        E1, E2, Z1, Z2 = E1n, E2n, Z1n, Z2n
    keep = sig0 >= sigma_floor
    return J[keep] / sig0[keep]


def pendulum_cost_ratios(problem: ExampleProblem, n: int, seed: int) -> np.ndarray:
    """Deadbeat cost ratios on a fresh seeded sample set for ``problem``."""
    m = problem.meta
    band = Band(m["m_lo"], m["m_hi"], values=_default_band_profile)
    return _pendulum_cost_ratios(m["a"], m["b"], m["c"], m["T"], m["r"], band,
                                 default_reference_input, *_pendulum_samples(n, seed))


# ---------------------------------------------------------------------------
# Quadratic-cost detectability bundle and inline linear problems


def _check_symmetric(mat: np.ndarray, name: str, strict: bool) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ParameterError(f"{name} must be a square matrix")
    if not np.allclose(mat, mat.T, atol=1e-12):
        raise ParameterError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    if strict and eigs.min() <= 1e-12:
        raise ParameterError(f"{name} must be positive definite (min eig {eigs.min():g})")
    if not strict and eigs.min() < -1e-12:
        raise ParameterError(f"{name} must be positive semidefinite (min eig {eigs.min():g})")
    return mat


def quadratic_detectability_example(Q, G, weight: TimeWeight) -> CertificateBundle:
    """Zero-storage bundle for the cost (x'Qx + u'Gu) * l2(tau).

    With sigma(x) = x'Qx the dissipation inequality holds with equality
    margin u'Gu * l2(tau) >= 0, so W = 0 and w(s1, s2) = l2(s2) * s1.
    The bundle is detectability-only (no value upper bound).
    """
    Q = _check_symmetric(Q, "Q", strict=True)
    _check_symmetric(G, "G", strict=False)
    sigma = lambda x: np.einsum("...i,ij,...j", np.asarray(x, dtype=float), Q,
                                np.asarray(x, dtype=float))
    return CertificateBundle(
        sigma=sigma,
        w_lower=lambda s1, s2, w=weight: float(w(s2)) * np.asarray(s1, dtype=float),
        label="quadratic-detectability",
    )


def linear_quadratic_problem(A, B, Q, G, weight: TimeWeight, grid: StateGrid,
                             input_grid: InputGrid) -> ExampleProblem:
    """Inline linear plant x+ = Ax + Bu with cost (x'Qx + u'Gu) * l2(tau)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Qm = _check_symmetric(Q, "Q", strict=True)
    Gm = _check_symmetric(G, "G", strict=False)
    if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise ParameterError("A must be square and B must have matching rows")
    n_x, n_u = B.shape

    def step(x, u, tau):
        return np.asarray(x, dtype=float) @ A.T + np.asarray(u, dtype=float) @ B.T

    def ell1(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.einsum("...i,ij,...j", x, Qm, x) + np.einsum("...i,ij,...j", u, Gm, u)

    bundle = quadratic_detectability_example(Qm, Gm, weight)
    return ExampleProblem(
        name="inline-linear",
        dynamics=Dynamics(n_x=n_x, n_u=n_u, step=step,
                          admissible=constant_admissible(input_grid.box.lo, input_grid.box.hi),
                          time_invariant=True, name="inline-linear"),
        stage=StageCost.separable(ell1, weight),
        sigma=bundle.sigma,
        bundle=bundle,
        grid=grid,
        input_grid=input_grid,
        weight=weight,
    )

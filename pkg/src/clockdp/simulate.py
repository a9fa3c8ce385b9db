"""Closed-loop rollouts, annotation, and trajectory bound verification.

Rollouts pair an augmented system with a controller:

  * ``PolicyController``: nearest-node lookup into a solved policy table
    (input indices are categorical, so no interpolation);
  * ``GreedyController``: the one-step argmin against a solved value
    table evaluated at the actual state, i.e. the closed-loop selection
    the difference inclusion prescribes;
  * any callable (x, tau) -> u, e.g. an analytic law.

verify_bound then checks sigma(x_k) <= beta(sigma(x_0), k, tau_0) along
the recorded states.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .certificates import BetaBound, CertificateBundle, YFunction, theta
from .core import AugmentedDynamics, AugmentedState
from .dp import (InputGrid, Policy, StateGrid, ValueTable, interpolate,
                 stationary_policy_discount)
from .errors import AdmissibilityError, ConfigurationError, ParameterError
from .reporting import CheckReport, clip_violations


@dataclass
class Trajectory:
    """Closed-loop record: states x_0..x_K, inputs u_0..u_{K-1}, stage costs.

    The clock along the trajectory is start.tau + k.  Optional columns
    (sigma, y, vartheta, bound) are attached by the annotation helpers.
    ``clean`` marks steps whose surrounding grid cell is free of
    boundary contamination; ``truncated`` is set when the rollout left
    the grid early.
    """

    start: AugmentedState
    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    sigma: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    vartheta: Optional[np.ndarray] = None
    bound: Optional[np.ndarray] = None
    clean: Optional[np.ndarray] = None
    truncated: bool = False

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @property
    def boundary_contaminated(self) -> bool:
        if self.truncated:
            return True
        return bool(self.clean is not None and not self.clean.all())

    def tau(self, k: int) -> int:
        return self.start.tau + k

    def state(self, k: int) -> AugmentedState:
        return AugmentedState(x=self.states[k], tau=self.start.tau + k)

    def total_cost(self) -> float:
        return float(self.stage_costs.sum())

    def to_csv(self, path) -> None:
        n_x = self.states.shape[1]
        n_u = self.inputs.shape[1] if self.inputs.size else 0
        header = (["k", "tau"] + [f"x{i}" for i in range(n_x)] + [f"u{i}" for i in range(n_u)]
                  + ["stage_cost", "sigma", "y", "vartheta", "beta"])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for k in range(self.states.shape[0]):
                row = [str(k), str(self.start.tau + k)]
                row += [repr(float(v)) for v in self.states[k]]
                if k < self.horizon:
                    row += [repr(float(v)) for v in self.inputs[k]]
                    row.append(repr(float(self.stage_costs[k])))
                else:
                    row += [""] * n_u + [""]
                for col in (self.sigma, self.y, self.vartheta, self.bound):
                    row.append("" if col is None or not np.isfinite(col[k]) else repr(float(col[k])))
                writer.writerow(row)


def trajectory_from_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_x = sum(1 for h in header if h.startswith("x"))
        n_u = sum(1 for h in header if h.startswith("u"))
        rows = list(reader)
    K = len(rows) - 1
    states = np.array([[float(r[2 + i]) for i in range(n_x)] for r in rows])
    inputs = np.array([[float(rows[k][2 + n_x + i]) for i in range(n_u)] for k in range(K)])
    inputs = inputs.reshape(K, n_u)
    costs = np.array([float(rows[k][2 + n_x + n_u]) for k in range(K)])

    def column(offset):
        vals = [r[2 + n_x + n_u + 1 + offset] for r in rows]
        if all(v == "" for v in vals):
            return None
        return np.array([float(v) if v != "" else np.nan for v in vals])

    tau0 = int(rows[0][1])
    return Trajectory(start=AugmentedState(x=states[0], tau=tau0), states=states,
                      inputs=inputs, stage_costs=costs, sigma=column(0), y=column(1),
                      vartheta=column(2), bound=column(3))


# ---------------------------------------------------------------------------
# Controllers


@dataclass
class PolicyController:
    """Nearest-node lookup into a policy table."""

    policy: Policy

    def __call__(self, x, tau: int) -> np.ndarray:
        eff_tau = tau
        if self.policy.is_time_varying:
            eff_tau = min(tau, self.policy.clock_horizon - 1)
        return self.policy.input_at(x, eff_tau)


@dataclass
class GreedyController:
    """Bellman argmin over the input grid at the actual state.

    For a stationary table the separable reduction min_u ell1 + gamma V
    is used; for a clock-indexed table the tau+1 slice.
    """

    value: ValueTable
    aug: AugmentedDynamics
    inputs: InputGrid

    def __call__(self, x, tau: int) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        U = self.inputs.inputs
        succ = np.asarray(self.aug.step_x(x[None, :], U, tau), dtype=float)
        succ = np.broadcast_to(succ, (U.shape[0], x.shape[0]))
        if self.value.is_time_varying:
            next_tau = min(tau + 1, self.value.clock_horizon)
            stage = np.asarray(self.aug.stage(x[None, :], tau, U), dtype=float)
            cont = interpolate(self.value, succ, tau=next_tau)
        else:
            stage = np.asarray(self.aug.cost.ell1(x[None, :], U), dtype=float)
            cont = stationary_policy_discount(self.aug) * interpolate(self.value, succ)
        q = np.broadcast_to(stage, (U.shape[0],)) + cont
        return U[int(np.argmin(q))]


def as_controller(controller) -> Callable:
    if isinstance(controller, Policy):
        return PolicyController(controller)
    if callable(controller):
        return controller
    raise ConfigurationError(f"not a controller: {controller!r}")


# ---------------------------------------------------------------------------
# Rollout


def rollout(aug: AugmentedDynamics, controller, q0: AugmentedState, horizon: int,
            sigma: Optional[Callable] = None, grid: Optional[StateGrid] = None,
            contaminated: Optional[np.ndarray] = None,
            check_admissible: bool = True) -> Trajectory:
    """Run the closed loop for ``horizon`` steps from q0.

    Stage costs are recorded at the pre-step clock.  When a grid is
    given, a state leaving it truncates the trajectory (flagged); with a
    contamination mask, each step is marked clean when every corner of
    its surrounding cell is uncontaminated.
    """
    if horizon < 1:
        raise ParameterError("rollout horizon must be >= 1")
    control = as_controller(controller)
    states = [np.array(q0.x, dtype=float)]
    inputs = []
    costs = []
    clean = []
    truncated = False
    x = np.array(q0.x, dtype=float)
    for k in range(horizon):
        tau = q0.tau + k
        if grid is not None:
            lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)
            if np.any(x < lo) or np.any(x > hi):
                truncated = True
                break
        clean.append(_cell_clean(grid, contaminated, x, tau))
        u = np.atleast_1d(np.asarray(control(x, tau), dtype=float))
        if check_admissible:
            box = aug.admissible(x, tau)
            if not box.contains(u):
                raise AdmissibilityError(
                    f"controller output {u} at step {k} is outside the admissible box", step=k)
        costs.append(float(np.asarray(aug.stage(x, tau, u))))
        inputs.append(u)
        x = np.atleast_1d(np.asarray(aug.step_x(x, u, tau), dtype=float))
        states.append(x)
    K = len(inputs)
    clean.append(_cell_clean(grid, contaminated, x, q0.tau + K) if not truncated else False)
    n_u = inputs[0].shape[0] if inputs else aug.base.n_u
    traj = Trajectory(
        start=q0,
        states=np.asarray(states),
        inputs=np.asarray(inputs).reshape(K, n_u),
        stage_costs=np.asarray(costs),
        clean=np.asarray(clean, dtype=bool),
        truncated=truncated,
    )
    if sigma is not None:
        traj.sigma = np.array([float(sigma(s)) for s in traj.states])
    return traj


def _cell_clean(grid, contaminated, x, tau) -> bool:
    if grid is None or contaminated is None:
        return True
    mask = contaminated if contaminated.ndim == 1 else contaminated[min(tau, len(contaminated) - 1)]
    idx, w, clamped = grid.corner_weights(np.asarray(x, dtype=float))
    if np.any(clamped):
        return False
    return not bool((mask[idx] & (w > 0.0)).any())


def default_horizon(beta: BetaBound, sigma0: float, tau0: int = 0,
                    ratio: float = 1e-6, cap: int = 10_000) -> int:
    """Smallest k with beta(sigma0, k, tau0) < ratio * sigma0, capped.

    Runs the rollout long enough for the bound itself to certify
    near-convergence.
    """
    if sigma0 <= 0.0:
        return 1
    target = ratio * sigma0
    for k in range(1, cap + 1):
        if float(beta(sigma0, k, tau0)) < target:
            return k
    return cap


# ---------------------------------------------------------------------------
# Verification and annotation


def verify_bound(traj: Trajectory, beta: BetaBound, sigma: Optional[Callable] = None,
                 eta: float = 1e-9, cap: int = 20) -> CheckReport:
    """Check sigma(x_k) <= beta(sigma(x_0), k, tau_0) + eta along a rollout.

    Reports the worst ratio sigma / beta and the first violating step.
    """
    if traj.sigma is None:
        if sigma is None:
            raise ConfigurationError("trajectory has no sigma column and no sigma was given")
        traj = replace(traj, sigma=np.array([float(sigma(s)) for s in traj.states]))
    s0 = float(traj.sigma[0])
    tau0 = traj.start.tau
    ks = np.arange(traj.states.shape[0])
    bound = np.array([float(beta(s0, int(k), tau0)) for k in ks])
    margin = bound + eta - traj.sigma
    bad = np.flatnonzero(margin < 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound > 0.0, traj.sigma / bound, np.where(traj.sigma <= eta, 0.0, np.inf))
    violations = [{"k": int(k), "sigma": float(traj.sigma[k]), "bound": float(bound[k]),
                   "deficit": float(-margin[k])} for k in bad]
    report = CheckReport(name="trajectory-bound", passed=bad.size == 0,
                         n_checked=int(ks.size), worst_slack=float(margin.min()), eta=eta,
                         violations=clip_violations(violations, cap),
                         params={"sigma0": s0, "tau0": tau0,
                                 "max_ratio": float(np.nanmax(ratios)),
                                 "first_violation": int(bad[0]) if bad.size else None,
                                 "beta_kind": beta.kind})
    return report


def annotate_bound(traj: Trajectory, beta: BetaBound) -> Trajectory:
    s0 = float(traj.sigma[0])
    ks = np.arange(traj.states.shape[0])
    traj.bound = np.array([float(beta(s0, int(k), traj.start.tau)) for k in ks])
    return traj


def annotate_y(traj: Trajectory, yf: YFunction, with_vartheta: bool = True,
               envelope: bool = True) -> Trajectory:
    """Attach Y = V + W along the trajectory, paired with its k-fold
    contraction bound starting from Y(q_0).

    States where the value source fails (e.g. off-grid queries) get NaN
    and are flagged clean=False.
    """
    n = traj.states.shape[0]
    y = np.full(n, np.nan)
    flagged = []
    for k in range(n):
        try:
            y[k] = yf(traj.states[k], traj.tau(k))
        except Exception:
            flagged.append(k)
    traj.y = y
    if traj.sigma is None:
        traj.sigma = np.array([float(yf.bundle.sigma(s)) for s in traj.states])
    if flagged and traj.clean is not None:
        traj.clean = traj.clean.copy()
        traj.clean[flagged] = False
    if with_vartheta and np.isfinite(y[0]):
        # vartheta^(k)(s1, k + tau0) applies the contraction at clocks
        # tau0 .. tau0 + k - 1, so consecutive k share their prefix
        vt = np.empty(n)
        vt[0] = y[0]
        for k in range(1, n):
            vt[k] = theta(vt[k - 1], traj.start.tau + k - 1, yf.bundle, envelope=envelope)
        traj.vartheta = vt
    return traj


def verify_decrease(traj: Trajectory, bundle: CertificateBundle, slack: float = 0.0,
                    clean_only: bool = True, cap: int = 20) -> CheckReport:
    """Per-step decrease Y(q_{k+1}) - Y(q_k) <= -w_lower(sigma_k, tau_k) + slack.

    Requires the y and sigma columns.  Only meaningful when Y is exact
    along the trajectory (analytic value) or the states sit on clean
    grid nodes; interpolated Y off the node set carries O(grid-spacing)
    model error that this check does not absorb.
    """
    if traj.y is None or traj.sigma is None:
        raise ConfigurationError("trajectory needs y and sigma columns (run annotate_y first)")
    violations = []
    worst = np.inf
    n = 0
    for k in range(traj.horizon):
        if clean_only and traj.clean is not None and not (traj.clean[k] and traj.clean[k + 1]):
            continue
        if not (np.isfinite(traj.y[k]) and np.isfinite(traj.y[k + 1])):
            continue
        required = float(bundle.w_lower(float(traj.sigma[k]), traj.tau(k)))
        margin = (-required + slack) - (traj.y[k + 1] - traj.y[k])
        worst = min(worst, margin)
        if margin < 0.0:
            violations.append({"k": k, "deficit": float(-margin)})
        n += 1
    return CheckReport(name="trajectory-decrease", passed=not violations, n_checked=n,
                       worst_slack=float(worst) if n else float("nan"), eta=slack,
                       violations=clip_violations(violations, cap),
                       params={"clean_only": clean_only})


def verify_vartheta_bound(traj: Trajectory, slack: float = 0.0, cap: int = 20) -> CheckReport:
    """Check Y(q_k) <= vartheta^(k)(Y(q_0), k + tau_0) + slack along a rollout."""
    if traj.y is None or traj.vartheta is None:
        raise ConfigurationError("trajectory needs y and vartheta columns")
    ok = np.isfinite(traj.y) & np.isfinite(traj.vartheta)
    margin = traj.vartheta[ok] + slack - traj.y[ok]
    bad = np.flatnonzero(margin < 0.0)
    violations = [{"k": int(k), "deficit": float(-margin[k])} for k in bad]
    return CheckReport(name="vartheta-bound", passed=bad.size == 0, n_checked=int(ok.sum()),
                       worst_slack=float(margin.min()) if ok.any() else float("nan"),
                       eta=slack, violations=clip_violations(violations, cap))

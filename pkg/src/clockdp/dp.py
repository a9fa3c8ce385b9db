"""Grid value iteration for the clock-augmented problem.

States live on a rectangular grid with multilinear interpolation; inputs
on a uniform grid over a declared box.  Backups that query successors
outside the state grid clamp to the boundary and mark the node
"boundary-contaminated"; the mask propagates through sweeps so that
certification can exclude nodes whose values depend on clamped queries.

Within a sweep, node backups are independent pure computations over the
immutable previous table; ``threads > 1`` splits the node set into
slices whose results are written into disjoint regions, so tables are
bit-identical regardless of worker count.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .core import AugmentedDynamics, ConstantAdmissible, Dynamics, InputBox
from .errors import ConfigurationError, ConvergenceError, GridRangeError, ParameterError
from .weights import Band, Geometric

# Successors this far (relative to the span) past a boundary are treated as
# on-grid roundoff, not genuine exits.
_EDGE_RTOL = 1e-12


@dataclass(frozen=True)
class StateGrid:
    """Rectangular grid: per-dimension bounds and node counts."""

    lo: tuple
    hi: tuple
    counts: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (len(lo) == len(hi) == len(counts)):
            raise ConfigurationError("grid lo/hi/counts lengths differ")
        for d, (a, b, c) in enumerate(zip(lo, hi, counts)):
            if not a < b:
                raise ConfigurationError(f"grid dim {d} requires lo < hi, got [{a}, {b}]")
            if c < 2:
                raise ConfigurationError(f"grid dim {d} needs at least 2 points, got {c}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "counts", counts)

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def axes(self):
        return tuple(np.linspace(a, b, c) for a, b, c in zip(self.lo, self.hi, self.counts))

    @cached_property
    def spacing(self):
        return np.array([(b - a) / (c - 1) for a, b, c in zip(self.lo, self.hi, self.counts)])

    @cached_property
    def _corner_offsets(self):
        return np.array(list(itertools.product([0, 1], repeat=self.ndim)), dtype=np.int64)

    def nodes(self) -> np.ndarray:
        """All nodes as an (n_nodes, ndim) array in C (row-major) order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.ndim)

    def node(self, flat_index: int) -> np.ndarray:
        idx = np.unravel_index(int(flat_index), self.counts)
        return np.array([ax[i] for ax, i in zip(self.axes, idx)])

    def _check_bounds(self, pts: np.ndarray, clamp: bool) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        edge = _EDGE_RTOL * (hi - lo)
        outside = (pts < lo - edge) | (pts > hi + edge)
        out_any = outside.any(axis=-1)
        if not clamp and np.any(out_any):
            bad = np.asarray(pts)[out_any][:1]
            raise GridRangeError(f"query point {bad.ravel()} is outside the grid and clamping is off")
        return out_any

    def locate(self, pts, clamp: bool = True):
        """Cell base index, in-cell fraction, and out-of-bounds mask."""
        pts = np.asarray(pts, dtype=float)
        clamped = self._check_bounds(pts, clamp)
        lo = np.asarray(self.lo)
        pos = (np.clip(pts, lo, np.asarray(self.hi)) - lo) / self.spacing
        # snap to the lattice so that node queries interpolate exactly
        nearest = np.round(pos)
        pos = np.where(np.abs(pos - nearest) <= 1e-9, nearest, pos)
        base = np.clip(np.floor(pos).astype(np.int64), 0, np.asarray(self.counts) - 2)
        frac = pos - base
        return base, frac, clamped

    def corner_weights(self, pts, clamp: bool = True):
        """Flat corner indices and multilinear weights for query points.

        Returns (idx, weights, clamped) with idx/weights shaped
        pts.shape[:-1] + (2**ndim,).
        """
        base, frac, clamped = self.locate(pts, clamp)
        offs = self._corner_offsets                      # (2^d, d)
        corner = base[..., None, :] + offs               # (..., 2^d, d)
        flat = np.zeros(corner.shape[:-1], dtype=np.int64)
        for d, c in enumerate(self.counts):
            flat = flat * c + corner[..., d]
        w = np.ones(corner.shape[:-1])
        for d in range(self.ndim):
            fd = frac[..., d][..., None]
            w = w * np.where(offs[:, d] == 1, fd, 1.0 - fd)
        return flat, w, clamped

    def nearest(self, pts, clamp: bool = True):
        """Flat index of the nearest node to each query point."""
        pts = np.asarray(pts, dtype=float)
        self._check_bounds(pts, clamp)
        lo = np.asarray(self.lo)
        pos = (np.clip(pts, lo, np.asarray(self.hi)) - lo) / self.spacing
        idx = np.clip(np.round(pos).astype(np.int64), 0, np.asarray(self.counts) - 1)
        flat = np.zeros(idx.shape[:-1], dtype=np.int64)
        for d, c in enumerate(self.counts):
            flat = flat * c + idx[..., d]
        return flat


@dataclass(frozen=True)
class InputGrid:
    """Uniform discretization of an input box; ties break at the lowest index."""

    box: InputBox
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if len(counts) != self.box.n_u:
            raise ConfigurationError("input grid counts must match the box dimension")
        if any(c < 1 for c in counts):
            raise ConfigurationError("input grid needs at least 1 point per dimension")
        object.__setattr__(self, "counts", counts)

    @cached_property
    def inputs(self) -> np.ndarray:
        axes = []
        for a, b, c in zip(self.box.lo, self.box.hi, self.counts):
            axes.append(np.linspace(a, b, c) if c > 1 else np.array([0.5 * (a + b)]))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.box.n_u)

    @property
    def n_inputs(self) -> int:
        return int(np.prod(self.counts))


@dataclass
class ValueTable:
    """Grid values of a cost-to-go function, stationary or clock-indexed.

    ``values`` has shape (n_nodes,) for a stationary table or
    (clock_horizon + 1, n_nodes) for a clock-indexed one.
    ``approximation`` records the side of the truncation error
    ('lower', 'upper' or 'exact').
    """

    grid: StateGrid
    values: np.ndarray
    clock_horizon: Optional[int] = None
    contaminated: Optional[np.ndarray] = None
    approximation: str = "exact"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expect = ((self.clock_horizon + 1, self.grid.n_nodes)
                  if self.clock_horizon is not None else (self.grid.n_nodes,))
        if self.values.shape != expect:
            raise ConfigurationError(f"value array shape {self.values.shape}, expected {expect}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("value table contains non-finite entries")
        if np.any(self.values < 0.0):
            raise ConfigurationError("value table must be nonnegative (costs are nonnegative)")

    @property
    def is_time_varying(self) -> bool:
        return self.clock_horizon is not None

    def at(self, tau: int) -> np.ndarray:
        if not self.is_time_varying:
            return self.values
        if not 0 <= tau <= self.clock_horizon:
            raise ParameterError(f"clock {tau} outside table range [0, {self.clock_horizon}]")
        return self.values[tau]

    def __call__(self, x, tau: Optional[int] = None, clamp: bool = True):
        return interpolate(self, x, tau=tau, clamp=clamp)

    def to_csv(self, path) -> None:
        _table_to_csv(path, self.grid, self.values, self.clock_horizon, "value", float)

    @classmethod
    def from_csv(cls, path) -> "ValueTable":
        grid, values, horizon = _table_from_csv(path, "value", float)
        return cls(grid=grid, values=values, clock_horizon=horizon, approximation="lower")


@dataclass
class Policy:
    """Chosen input index per node (per clock index when time-varying)."""

    grid: StateGrid
    input_grid: InputGrid
    indices: np.ndarray
    clock_horizon: Optional[int] = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if np.any(self.indices < 0) or np.any(self.indices >= self.input_grid.n_inputs):
            raise ConfigurationError("policy indices outside the input grid")

    @property
    def is_time_varying(self) -> bool:
        return self.clock_horizon is not None

    def at(self, tau: int) -> np.ndarray:
        if not self.is_time_varying:
            return self.indices
        if not 0 <= tau < self.clock_horizon:
            raise ParameterError(f"clock {tau} outside policy range [0, {self.clock_horizon - 1}]")
        return self.indices[tau]

    def input_at(self, x, tau: int = 0) -> np.ndarray:
        """Input at the node nearest to x (indices are categorical, so
        nearest-node lookup, never interpolation)."""
        node = int(self.grid.nearest(np.asarray(x, dtype=float)))
        return self.input_grid.inputs[self.at(tau)[node]]

    def to_csv(self, path) -> None:
        _table_to_csv(path, self.grid, self.indices, self.clock_horizon, "u_index", int)

    @classmethod
    def from_csv(cls, path, input_grid: InputGrid) -> "Policy":
        grid, values, horizon = _table_from_csv(path, "u_index", int)
        # policy rows run over clocks 0..T-1, so the horizon is one past them
        return cls(grid=grid, input_grid=input_grid, indices=values.astype(np.int64),
                   clock_horizon=None if horizon is None else horizon + 1)


def interpolate(table: ValueTable, x, tau: Optional[int] = None, clamp: bool = True):
    """Multilinear interpolation of a table; exact at nodes."""
    if table.is_time_varying and tau is None:
        raise ParameterError("time-varying table queried without a clock value")
    vals = table.at(tau) if table.is_time_varying else table.values
    idx, w, _ = table.grid.corner_weights(np.asarray(x, dtype=float), clamp=clamp)
    return (w * vals[idx]).sum(axis=-1)


# ---------------------------------------------------------------------------
# Transition tables and backups


class _Transitions:
    """Precomputed successors of every (node, input) pair at one clock value."""

    def __init__(self, grid: StateGrid, inputs: InputGrid, dynamics: Dynamics, tau: int):
        self.grid = grid
        self.inputs = inputs
        X = grid.nodes()
        U = inputs.inputs
        n, m = X.shape[0], U.shape[0]
        succ = np.asarray(dynamics.step(X[:, None, :], U[None, :, :], tau), dtype=float)
        succ = np.broadcast_to(succ, (n, m, grid.ndim))
        self.corner_idx, self.weights, self.clamped = grid.corner_weights(succ)
        self.admissible_mask = self._admissible_mask(X, U, dynamics, tau)

    @staticmethod
    def _admissible_mask(X, U, dynamics, tau):
        if isinstance(dynamics.admissible, ConstantAdmissible):
            return None
        n, m = X.shape[0], U.shape[0]
        mask = np.empty((n, m), dtype=bool)
        for i in range(n):
            box = dynamics.admissible(X[i], tau)
            mask[i] = np.all((U >= box.lo - 1e-12) & (U <= box.hi + 1e-12), axis=1)
            if not mask[i].any():
                raise ConfigurationError(
                    f"empty admissible input discretization at node {i} (x = {X[i]}, clock {tau})")
        return mask


def _backup_slice(values_next, trans, stage, discount, sl):
    idx = trans.corner_idx[sl]
    q = stage[sl] + discount * (trans.weights[sl] * values_next[idx]).sum(axis=-1)
    if trans.admissible_mask is not None:
        q = np.where(trans.admissible_mask[sl], q, np.inf)
    choice = np.argmin(q, axis=1)
    rows = np.arange(choice.shape[0])
    return q[rows, choice], choice, sl


def _backup(values_next, trans, stage, discount=1.0, contaminated_next=None, threads=1):
    """One Bellman sweep; returns (values, argmin indices, contamination)."""
    n = trans.corner_idx.shape[0]
    values = np.empty(n)
    choice = np.empty(n, dtype=np.int64)
    if threads <= 1:
        v, c, _ = _backup_slice(values_next, trans, stage, discount, slice(0, n))
        values[:], choice[:] = v, c
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for v, c, sl in pool.map(
                    lambda s: _backup_slice(values_next, trans, stage, discount, s), slices):
                values[sl], choice[sl] = v, c
    rows = np.arange(n)
    contam = trans.clamped[rows, choice].copy()
    if contaminated_next is not None:
        # only corners that actually enter the interpolation can contaminate
        touched = trans.weights[rows, choice] > 0.0
        contam |= (contaminated_next[trans.corner_idx[rows, choice]] & touched).any(axis=-1)
    if np.any(np.isinf(values)):
        raise ConfigurationError("backup produced infinite values (empty admissible set?)")
    return values, choice, contam


def _stage_matrix(aug: AugmentedDynamics, grid: StateGrid, inputs: InputGrid, tau: int,
                  ell1_cache: Optional[np.ndarray] = None):
    X = grid.nodes()
    U = inputs.inputs
    n, m = X.shape[0], U.shape[0]
    cost = aug.cost
    if cost.is_separable:
        if ell1_cache is None:
            ell1_cache = np.broadcast_to(
                np.asarray(cost.ell1(X[:, None, :], U[None, :, :]), dtype=float), (n, m)).copy()
        return ell1_cache * float(cost.ell2(tau)), ell1_cache
    stage = np.broadcast_to(
        np.asarray(cost.fn(X[:, None, :], tau, U[None, :, :]), dtype=float), (n, m)).copy()
    return stage, None


def bellman_backup(next_table: ValueTable, aug: AugmentedDynamics, tau: int,
                   inputs: InputGrid, threads: int = 1) -> ValueTable:
    """One exact Bellman backup at clock ``tau`` against ``next_table``.

    out(x) = min over the discrete inputs of stage(x, tau, u) plus the
    interpolated next value at f(x, u, tau).  When ``next_table`` is
    clock-indexed its tau+1 slice is used.
    """
    grid = next_table.grid
    trans = _Transitions(grid, inputs, aug.base, tau)
    stage, _ = _stage_matrix(aug, grid, inputs, tau)
    if np.any(stage < 0.0):
        raise ConfigurationError("stage cost is negative somewhere on the grid")
    vnext = next_table.at(tau + 1) if next_table.is_time_varying else next_table.values
    cnext = None
    if next_table.contaminated is not None:
        cnext = (next_table.contaminated[tau + 1] if next_table.is_time_varying
                 else next_table.contaminated)
    values, _, contam = _backup(vnext, trans, stage, 1.0, cnext, threads)
    return ValueTable(grid=grid, values=values, contaminated=contam,
                      approximation=next_table.approximation)


# ---------------------------------------------------------------------------
# Solvers


@dataclass
class DiscountedSolution:
    """Converged stationary solve: V(x) = min_u ell1(x,u) + gamma V(f(x,u))."""

    value: ValueTable
    policy: Policy
    gamma: float
    tol: float
    iterations: int
    residual: float
    error_bound: Optional[float]
    converged: bool

    @property
    def contaminated_fraction(self) -> float:
        return float(self.value.contaminated.mean())

    def report_dict(self) -> dict:
        return {
            "kind": "discounted",
            "gamma": self.gamma,
            "tol": self.tol,
            "iterations": self.iterations,
            "residual": self.residual,
            "error_bound": self.error_bound,
            "converged": self.converged,
            "contaminated_fraction": self.contaminated_fraction,
            "n_nodes": self.value.grid.n_nodes,
            "approximation": self.value.approximation,
        }


def _contamination_fixed_point(choice, trans):
    rows = np.arange(choice.shape[0])
    mask = trans.clamped[rows, choice].copy()
    chosen_corners = trans.corner_idx[rows, choice]
    touched = trans.weights[rows, choice] > 0.0
    for _ in range(choice.shape[0]):
        grown = mask | (mask[chosen_corners] & touched).any(axis=-1)
        if np.array_equal(grown, mask):
            break
        mask = grown
    return mask


def solve_discounted(dynamics: Dynamics, ell1: Callable, gamma: float, grid: StateGrid,
                     inputs: InputGrid, tol: float, max_iterations: int = 100_000,
                     threads: int = 1) -> DiscountedSolution:
    """Value iteration from V = 0 for the stationary discounted problem.

    gamma = 1 is accepted for problems whose cost is summable under the
    dynamics; the a-posteriori error bound tol * gamma / (1 - gamma) is
    then unavailable.  Iterates are pointwise nondecreasing.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"discount factor must be in (0, 1], got {gamma}")
    if not tol > 0.0:
        raise ParameterError("tol must be positive")
    trans = _Transitions(grid, inputs, dynamics, tau=0)
    X = grid.nodes()
    U = inputs.inputs
    stage = np.broadcast_to(np.asarray(ell1(X[:, None, :], U[None, :, :]), dtype=float),
                            (X.shape[0], U.shape[0])).copy()
    if np.any(stage < 0.0):
        raise ConfigurationError("ell1 is negative somewhere on the grid")

    values = np.zeros(grid.n_nodes)
    residual = np.inf
    choice = None
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        new_values, choice, _ = _backup(values, trans, stage, gamma, None, threads)
        residual = float(np.max(np.abs(new_values - values)))
        values = new_values
        if residual <= tol:
            break

    mask = _contamination_fixed_point(choice, trans)
    table = ValueTable(grid=grid, values=values, contaminated=mask, approximation="lower")
    policy = Policy(grid=grid, input_grid=inputs, indices=choice)
    error_bound = tol * gamma / (1.0 - gamma) if gamma < 1.0 else None
    solution = DiscountedSolution(value=table, policy=policy, gamma=gamma, tol=tol,
                                  iterations=iterations, residual=residual,
                                  error_bound=error_bound, converged=residual <= tol)
    if not solution.converged:
        raise ConvergenceError(
            f"value iteration did not reach tol {tol:g} in {max_iterations} sweeps "
            f"(last residual {residual:g})",
            residual=residual, iterations=iterations, solution=solution)
    return solution


@dataclass(frozen=True)
class TerminalRule:
    """Terminal condition of the backward sweep.

    'zero' underestimates the infinite tail (costs are nonnegative);
    'vbar-sigma' seeds the sweep with vbar(sigma(x), T), an upper bound
    on the tail when the stabilizability data is valid.
    """

    kind: str
    vbar: Optional[Callable] = None
    sigma: Optional[Callable] = None

    @classmethod
    def zero(cls) -> "TerminalRule":
        return cls(kind="zero")

    @classmethod
    def from_vbar(cls, vbar: Callable, sigma: Callable) -> "TerminalRule":
        return cls(kind="vbar-sigma", vbar=vbar, sigma=sigma)

    @property
    def side(self) -> str:
        return "lower" if self.kind == "zero" else "upper"


@dataclass
class TimeVaryingSolution:
    """Backward-sweep solve over clocks 0..T."""

    value: ValueTable
    policy: Policy
    clock_horizon: int
    terminal: TerminalRule
    tol: Optional[float]

    @property
    def contaminated_fraction(self) -> float:
        return float(self.value.contaminated.mean())

    def report_dict(self) -> dict:
        return {
            "kind": "time-varying",
            "clock_horizon": self.clock_horizon,
            "terminal_rule": self.terminal.kind,
            "approximation": self.value.approximation,
            "tol": self.tol,
            "contaminated_fraction": self.contaminated_fraction,
            "n_nodes": self.value.grid.n_nodes,
        }


def solve_time_varying(aug: AugmentedDynamics, grid: StateGrid, inputs: InputGrid,
                       clock_horizon: int, terminal_rule: TerminalRule,
                       tol: Optional[float] = None, threads: int = 1) -> TimeVaryingSolution:
    """Backward Bellman sweep tau = T-1 .. 0 of the augmented problem.

    With the zero terminal rule the result is a lower approximation of
    the infinite-horizon value (tail unquantified); with a vbar terminal
    it is an upper approximation.
    """
    T = int(clock_horizon)
    if T < 1:
        raise ParameterError("clock horizon must be >= 1")
    n = grid.n_nodes
    X = grid.nodes()

    if terminal_rule.kind == "zero":
        terminal = np.zeros(n)
    elif terminal_rule.kind == "vbar-sigma":
        sig = np.asarray(terminal_rule.sigma(X), dtype=float)
        terminal = np.array([float(terminal_rule.vbar(s, T)) for s in sig])
        if np.any(terminal < 0.0):
            raise ConfigurationError("terminal vbar values must be nonnegative")
    else:
        raise ParameterError(f"unknown terminal rule {terminal_rule.kind!r}")

    values = np.empty((T + 1, n))
    contam = np.zeros((T + 1, n), dtype=bool)
    indices = np.empty((T, n), dtype=np.int64)
    values[T] = terminal

    trans = None
    ell1_cache = None
    for tau in range(T - 1, -1, -1):
        if trans is None or not aug.base.time_invariant:
            trans = _Transitions(grid, inputs, aug.base, tau)
        stage, ell1_cache = _stage_matrix(aug, grid, inputs, tau, ell1_cache)
        if np.any(stage < 0.0):
            raise ConfigurationError("stage cost is negative somewhere on the grid")
        values[tau], indices[tau], contam[tau] = _backup(
            values[tau + 1], trans, stage, 1.0, contam[tau + 1], threads)

    table = ValueTable(grid=grid, values=values, clock_horizon=T, contaminated=contam,
                       approximation=terminal_rule.side)
    policy = Policy(grid=grid, input_grid=inputs, indices=indices, clock_horizon=T)
    return TimeVaryingSolution(value=table, policy=policy, clock_horizon=T,
                               terminal=terminal_rule, tol=tol)


def _stationary_weight(aug: AugmentedDynamics):
    cost = aug.cost
    if not cost.is_separable:
        raise ConfigurationError("stationary reduction needs a separable stage cost")
    w = cost.ell2
    if isinstance(w, Geometric):
        return w
    if isinstance(w, Band) and w.a == w.b and w.values is None:
        return w
    raise ConfigurationError(
        "stationary reduction needs a geometric or constant-band time weight")


def stationary_discount(aug: AugmentedDynamics) -> float:
    """Recursion discount of the stationary reduction: the table solves
    V = l2(0) * ell1 + discount * V(f)."""
    w = _stationary_weight(aug)
    return w.gamma if isinstance(w, Geometric) else 1.0


def stationary_stage_scale(aug: AugmentedDynamics) -> float:
    """Factor l2(0) multiplying ell1 in the stationary recursion."""
    w = _stationary_weight(aug)
    return 1.0 if isinstance(w, Geometric) else w.a


def stationary_policy_discount(aug: AugmentedDynamics) -> float:
    """Continuation weight for argmins against a stationary table T = V(., 0):
    argmin_u ell1(x, u) + this * T(f(x, u))."""
    w = _stationary_weight(aug)
    # l2(tau+1) / (l2(tau) * l2(0)); clock-independent for both shapes
    return w.gamma if isinstance(w, Geometric) else 1.0 / w.a


def extract_policy(value: ValueTable, aug: AugmentedDynamics, tau: int,
                   inputs: InputGrid, threads: int = 1) -> Policy:
    """Bellman argmin against ``value``; ties break at the lowest index.

    For a clock-indexed table the tau+1 slice is the continuation; for a
    stationary table the separable reduction min_u ell1 + gamma V(f) is
    used.
    """
    grid = value.grid
    if value.is_time_varying:
        trans = _Transitions(grid, inputs, aug.base, tau)
        stage, _ = _stage_matrix(aug, grid, inputs, tau)
        _, choice, _ = _backup(value.at(tau + 1), trans, stage, 1.0, None, threads)
        return Policy(grid=grid, input_grid=inputs, indices=choice)
    disc = stationary_policy_discount(aug)
    trans = _Transitions(grid, inputs, aug.base, 0)
    X = grid.nodes()
    U = inputs.inputs
    stage = np.broadcast_to(np.asarray(aug.cost.ell1(X[:, None, :], U[None, :, :]), dtype=float),
                            (X.shape[0], U.shape[0])).copy()
    _, choice, _ = _backup(value.values, trans, stage, disc, None, threads)
    return Policy(grid=grid, input_grid=inputs, indices=choice)


# ---------------------------------------------------------------------------
# CSV serialization (the documented tabular format: '.' decimals, LF endings)


def _table_to_csv(path, grid: StateGrid, values: np.ndarray, clock_horizon, col: str,
                  astype) -> None:
    nodes = grid.nodes()
    header = [f"dim{d}" for d in range(grid.ndim)] + ["tau", col]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        if clock_horizon is None:
            for i in range(nodes.shape[0]):
                writer.writerow([repr(float(v)) for v in nodes[i]] + ["", _cell(values[i], astype)])
        else:
            for tau in range(values.shape[0]):
                for i in range(nodes.shape[0]):
                    writer.writerow([repr(float(v)) for v in nodes[i]]
                                    + [str(tau), _cell(values[tau, i], astype)])


def _cell(v, astype):
    return str(int(v)) if astype is int else repr(float(v))


def _table_from_csv(path, col: str, astype):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != col or header[-2] != "tau":
            raise ConfigurationError(f"unexpected CSV header {header} (expected ...,tau,{col})")
        ndim = len(header) - 2
        coords = [[] for _ in range(ndim)]
        taus = []
        vals = []
        for row in reader:
            for d in range(ndim):
                coords[d].append(float(row[d]))
            taus.append(int(row[ndim]) if row[ndim] != "" else -1)
            vals.append(float(row[ndim + 1]))
    axes = [np.unique(np.asarray(c)) for c in coords]
    counts = tuple(len(a) for a in axes)
    grid = StateGrid(lo=tuple(a[0] for a in axes), hi=tuple(a[-1] for a in axes), counts=counts)
    taus = np.asarray(taus)
    horizon = None if taus.max() < 0 else int(taus.max())
    shape = (grid.n_nodes,) if horizon is None else (horizon + 1, grid.n_nodes)
    values = np.zeros(shape)
    flat = np.zeros(len(vals), dtype=np.int64)
    for d, a in enumerate(axes):
        flat = flat * counts[d] + np.searchsorted(a, np.asarray(coords[d]))
    if horizon is None:
        values[flat] = vals
    else:
        values[taus, flat] = vals
    return grid, values, horizon

"""Problem definitions and exact trajectory bookkeeping.

A drift counteraction problem couples a discrete-time control system with a
sequence of stage constraint sets X(0), ..., X(N) and a compact control set U.
The quantity of interest is the time before exit: the number of consecutive
steps the state stays inside its stage set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DcocError(Exception):
    """Base class for errors raised by this package."""


class SimulationDivergedError(DcocError):
    """A dynamics step produced a non-finite state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state after step {step}")


class InvalidInitialStateError(DcocError):
    """The initial state lies outside its own stage constraint set."""


class EvaluationError(DcocError):
    """A user callback returned non-finite values."""


def finite_difference_jacobian(fn: Callable[[np.ndarray], np.ndarray],
                               x: np.ndarray,
                               step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at ``x``.

    The default step scales with the magnitude of each coordinate, which keeps
    the truncation/roundoff balance acceptable for states spanning several
    orders of magnitude (angles ~1e-3 next to wheel speeds ~1e2).
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fn(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        hi = (step if step is not None else 1e-6) * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += hi
        xm[i] -= hi
        jac[:, i] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2.0 * hi)
    return jac


@dataclass(frozen=True)
class StageConstraint:
    """One stage set X(k) = {x : H(x) <= h} described by row functions.

    Attributes:
        h_fn: maps a state to the stacked row values H(x).
        bound: right-hand side vector h, one entry per row.
        jacobian: optional dH/dx callback; finite differences are used when
            absent and the fallback is flagged by ``uses_fd_jacobian``.
        row_names: optional labels, used for violation reporting.
    """

    h_fn: Callable[[np.ndarray], np.ndarray]
    bound: np.ndarray
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    row_names: tuple[str, ...] | None = None

    def __post_init__(self):
        bound = np.atleast_1d(np.asarray(self.bound, dtype=float))
        if bound.ndim != 1 or bound.size == 0:
            raise ValueError("constraint bound must be a nonempty vector")
        if not np.all(np.isfinite(bound)):
            raise ValueError("constraint bound must be finite")
        object.__setattr__(self, "bound", bound)
        if self.row_names is not None and len(self.row_names) != bound.size:
            raise ValueError("row_names length must match bound length")

    @property
    def n_rows(self) -> int:
        return self.bound.size

    @property
    def uses_fd_jacobian(self) -> bool:
        return self.jacobian is None

    def values(self, x: np.ndarray) -> np.ndarray:
        v = np.atleast_1d(np.asarray(self.h_fn(x), dtype=float))
        if v.shape != self.bound.shape:
            raise ValueError(
                f"h_fn returned shape {v.shape}, expected {self.bound.shape}")
        return v

    def margins(self, x: np.ndarray) -> np.ndarray:
        """Row margins h - H(x); nonnegative means satisfied."""
        return self.bound - self.values(x)

    def jacobian_at(self, x: np.ndarray) -> np.ndarray:
        if self.jacobian is not None:
            jac = np.atleast_2d(np.asarray(self.jacobian(x), dtype=float))
        else:
            jac = finite_difference_jacobian(self.values, np.asarray(x, float))
        if jac.shape != (self.n_rows, np.asarray(x).size):
            raise ValueError(
                f"constraint jacobian has shape {jac.shape}, "
                f"expected {(self.n_rows, np.asarray(x).size)}")
        return jac


def box_constraint(lower: np.ndarray, upper: np.ndarray,
                   names: tuple[str, ...] | None = None) -> StageConstraint:
    """Stage set {x : lower <= x <= upper} with exact jacobian rows.

    Infinite entries drop the corresponding row.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape:
        raise ValueError("lower/upper must have identical shapes")
    if np.any(lower > upper):
        raise ValueError("box is empty: lower > upper somewhere")
    n = lower.size
    rows = []
    bounds = []
    labels = []
    base = names if names is not None else tuple(f"x{i}" for i in range(n))
    for i in range(n):
        if np.isfinite(upper[i]):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
            bounds.append(upper[i])
            labels.append(f"{base[i]}<=hi")
        if np.isfinite(lower[i]):
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e)
            bounds.append(-lower[i])
            labels.append(f"{base[i]}>=lo")
    if not rows:
        raise ValueError("box has no finite bound rows")
    mat = np.array(rows)
    vec = np.array(bounds)
    return StageConstraint(
        h_fn=lambda x, _m=mat: _m @ np.asarray(x, dtype=float),
        bound=vec,
        jacobian=lambda x, _m=mat: _m,
        row_names=tuple(labels),
    )


@dataclass(frozen=True)
class ControlSet:
    """Compact convex control set: box bounds and an optional 1-norm cap.

    ``one_norm_cap`` restricts selected components: sum(|u[idx]|) <= cap.
    ``one_norm_floor`` exists for symmetry with problem statements of the form
    0 <= sum(|u|) <= cap; only the vacuous floor of zero is convex, so any
    positive floor is rejected.
    """

    dim: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    one_norm_cap: tuple[tuple[int, ...], float] | None = None
    one_norm_floor: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("control dimension must be >= 1")
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (self.dim,):
                    raise ValueError(f"{name} must have shape ({self.dim},)")
                object.__setattr__(self, name, v)
        if self.lower is not None and self.upper is not None:
            if np.any(self.lower > self.upper):
                raise ValueError("control box is empty")
        if self.one_norm_cap is not None:
            idx, cap = self.one_norm_cap
            idx = tuple(int(i) for i in idx)
            if len(idx) == 0 or len(set(idx)) != len(idx):
                raise ValueError("1-norm cap needs distinct component indices")
            if any(i < 0 or i >= self.dim for i in idx):
                raise ValueError("1-norm cap index out of range")
            if not (np.isfinite(cap) and cap > 0):
                raise ValueError("1-norm cap must be positive and finite")
            object.__setattr__(self, "one_norm_cap", (idx, float(cap)))
        if self.one_norm_floor != 0.0:
            raise ValueError("a positive 1-norm floor makes the set nonconvex")
        if not self._is_bounded():
            raise ValueError("control set must be compact: every component "
                             "needs finite box bounds or a 1-norm cap")

    def _is_bounded(self) -> bool:
        capped = set(self.one_norm_cap[0]) if self.one_norm_cap else set()
        for i in range(self.dim):
            boxed = (self.lower is not None and np.isfinite(self.lower[i])
                     and self.upper is not None and np.isfinite(self.upper[i]))
            if not boxed and i not in capped:
                return False
        return True

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            return False
        if self.lower is not None and np.any(u < self.lower - tol):
            return False
        if self.upper is not None and np.any(u > self.upper + tol):
            return False
        if self.one_norm_cap is not None:
            idx, cap = self.one_norm_cap
            if np.sum(np.abs(u[list(idx)])) > cap + tol:
                return False
        return True

    def project(self, u: np.ndarray) -> np.ndarray:
        """Cheap feasible point near ``u``: box clip, then cap rescale."""
        v = np.asarray(u, dtype=float).copy()
        if self.lower is not None:
            v = np.maximum(v, self.lower)
        if self.upper is not None:
            v = np.minimum(v, self.upper)
        if self.one_norm_cap is not None:
            idx, cap = self.one_norm_cap
            idx = list(idx)
            s = np.sum(np.abs(v[idx]))
            if s > cap:
                v[idx] *= cap / s
        return v


@dataclass(frozen=True)
class DcocProblem:
    """Discrete-time system, stage sets, control set, horizon, initial state.

    Attributes:
        dynamics: step map f(x, u) -> next state.
        horizon: number of steps N (>= 1); stage sets cover k = 0..N.
        constraints: one StageConstraint per stage, length N + 1.
        control_set: admissible controls, identical at every stage.
        x0: initial state; must belong to X(0).
        dynamics_jacobian: optional (x, u) -> (df/dx, df/du); finite
            differences are substituted when absent.
    """

    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    horizon: int
    constraints: tuple[StageConstraint, ...]
    control_set: ControlSet
    x0: np.ndarray
    dynamics_jacobian: Callable[[np.ndarray, np.ndarray],
                                tuple[np.ndarray, np.ndarray]] | None = None
    tol_feas: float = 1e-8
    state_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.constraints) != self.horizon + 1:
            raise ValueError(
                f"need {self.horizon + 1} stage constraints, "
                f"got {len(self.constraints)}")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be a finite vector")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        m0 = self.constraints[0].margins(x0)
        if np.min(m0) < -self.tol_feas:
            raise InvalidInitialStateError(
                f"x0 violates X(0): worst margin {np.min(m0):.3e}")
        if self.state_names is not None and len(self.state_names) != x0.size:
            raise ValueError("state_names length must match state dimension")

    @property
    def n_x(self) -> int:
        return self.x0.size

    @property
    def n_u(self) -> int:
        return self.control_set.dim

    @property
    def uses_fd_dynamics(self) -> bool:
        return self.dynamics_jacobian is None

    def step(self, x: np.ndarray, u: np.ndarray, k: int | None = None
             ) -> np.ndarray:
        xn = np.asarray(self.dynamics(np.asarray(x, float),
                                      np.asarray(u, float)), dtype=float)
        if xn.shape != (self.n_x,):
            raise ValueError(f"dynamics returned shape {xn.shape}, "
                             f"expected ({self.n_x},)")
        if not np.all(np.isfinite(xn)):
            raise SimulationDivergedError(0 if k is None else k)
        return xn

    def step_jacobian(self, x: np.ndarray, u: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.dynamics_jacobian is not None:
            A, B = self.dynamics_jacobian(x, u)
            A = np.asarray(A, dtype=float)
            B = np.asarray(B, dtype=float)
        else:
            A = finite_difference_jacobian(lambda xx: self.dynamics(xx, u), x)
            B = finite_difference_jacobian(lambda uu: self.dynamics(x, uu), u)
        if A.shape != (self.n_x, self.n_x) or B.shape != (self.n_x, self.n_u):
            raise ValueError("dynamics jacobian shapes are inconsistent")
        return A, B


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_N, controls u_0..u_{N-1}, and per-stage margins."""

    states: np.ndarray          # (N+1, n_x)
    controls: np.ndarray        # (N, n_u)
    stage_margins: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        if states.ndim != 2 or controls.ndim != 2:
            raise ValueError("states/controls must be 2-d arrays")
        if states.shape[0] != controls.shape[0] + 1:
            raise ValueError("need exactly one more state than controls")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        if self.stage_margins and len(self.stage_margins) != states.shape[0]:
            raise ValueError("stage_margins length must be N + 1")

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]


def simulate(problem: DcocProblem, controls: np.ndarray) -> Trajectory:
    """Roll the dynamics forward from x0 under the given control sequence.

    Raises SimulationDivergedError (with the offending step index) when a
    step produces a non-finite state.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.shape != (problem.horizon, problem.n_u):
        raise ValueError(
            f"controls must have shape {(problem.horizon, problem.n_u)}, "
            f"got {controls.shape}")
    states = np.empty((problem.horizon + 1, problem.n_x))
    states[0] = problem.x0
    for k in range(problem.horizon):
        states[k + 1] = problem.step(states[k], controls[k], k)
    margins = tuple(problem.constraints[k].margins(states[k])
                    for k in range(problem.horizon + 1))
    return Trajectory(states=states, controls=controls, stage_margins=margins)


def check_membership(x: np.ndarray, constraint: StageConstraint,
                     tol_feas: float = 1e-8) -> tuple[float, bool]:
    """Worst margin of x against one stage set, and whether it passes."""
    worst = float(np.min(constraint.margins(np.asarray(x, dtype=float))))
    return worst, worst >= -tol_feas


def time_before_exit(trajectory: Trajectory,
                     constraints: tuple[StageConstraint, ...],
                     tol_feas: float = 1e-8) -> int:
    """Largest k in [1, N] with x_i in X(i) for every i <= k; 0 when x_1
    already exits.

    The initial state is required to satisfy X(0); a trajectory whose first
    state is already outside its set is a modeling error, not a zero.
    """
    n = trajectory.states.shape[0]
    if len(constraints) != n:
        raise ValueError("one constraint per trajectory state is required")
    worst0, ok0 = check_membership(trajectory.states[0], constraints[0],
                                   tol_feas)
    if not ok0:
        raise InvalidInitialStateError(
            f"x0 violates X(0): worst margin {worst0:.3e}")
    kappa = 0
    for k in range(1, n):
        _, ok = check_membership(trajectory.states[k], constraints[k],
                                 tol_feas)
        if not ok:
            break
        kappa = k
    return kappa

"""Transcription of drift counteraction problems into smooth NLPs.

The exit-time objective is replaced by exponentially weighted stage slacks:

    minimize sum_k theta^(-k) eps_k
    subject to u_k in U,  0 <= eps_0,  eps_k <= eps_{k+1},
               H_k(x_k) <= h_k + M eps_k,   k = 0..N,

with states eliminated by forward substitution of the dynamics (single
shooting). Because later slacks cost geometrically less, any exchange that
postpones a violation lowers the objective, so minimizers push violations as
late as possible; the decreasing weights are a positive rescaling of the
textbook increasing ones and leave the minimizer set unchanged while keeping
the cost bounded for long horizons.

Decision vector: z = [u_0..u_{N-1}, eps_0..eps_N, s_0..s_{N-1}] where the s
blocks are 1-norm split auxiliaries (present only when the control set caps a
1-norm). All constraints are inequality rows c(z) >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ControlSet, DcocProblem, Trajectory, simulate, \
    time_before_exit


@dataclass(frozen=True)
class NlpInstance:
    """A dense inequality-constrained NLP: min cost(z) s.t. ineq(z) >= 0.

    ``layout`` maps variable block names ("u", "eps", "aux") to index ranges;
    ``row_layout`` does the same for constraint row blocks. ``meta`` carries
    the originating problem and transcription parameters.
    """

    n_vars: int
    n_ineq: int
    cost: Callable[[np.ndarray], float]
    cost_grad: Callable[[np.ndarray], np.ndarray]
    ineq: Callable[[np.ndarray], np.ndarray]
    ineq_jac: Callable[[np.ndarray], np.ndarray]
    layout: dict
    row_layout: dict
    meta: dict

    def slice_of(self, block: str) -> slice:
        lo, hi = self.layout[block]
        return slice(lo, hi)


@dataclass(frozen=True)
class SolutionExtract:
    """Controls, slacks, achieved exit time, and the resimulated trajectory."""

    controls: np.ndarray
    slacks: np.ndarray
    kappa: int
    objective: float
    trajectory: Trajectory


class _ShootingEvaluator:
    """Forward simulation plus stage-value sensitivities, cached on the
    control block so repeated calls at one iterate cost a single rollout."""

    def __init__(self, problem: DcocProblem, n_steps: int):
        self.problem = problem
        self.n_steps = n_steps
        self._val_key = None
        self._val = None
        self._jac_key = None
        self._jac = None

    def states_and_values(self, u_flat: np.ndarray):
        key = u_flat.tobytes()
        if self._val_key != key:
            prob = self.problem
            controls = u_flat.reshape(self.n_steps, prob.n_u)
            states = np.empty((self.n_steps + 1, prob.n_x))
            states[0] = prob.x0
            for k in range(self.n_steps):
                states[k + 1] = prob.step(states[k], controls[k], k)
            values = [prob.constraints[k].values(states[k])
                      for k in range(self.n_steps + 1)]
            self._val_key = key
            self._val = (states, values)
        return self._val

    def value_jacobians(self, u_flat: np.ndarray) -> list[np.ndarray]:
        """d(H_k(x_k))/d(u_flat) for k = 0..n_steps."""
        key = u_flat.tobytes()
        if self._jac_key != key:
            prob = self.problem
            states, _ = self.states_and_values(u_flat)
            controls = u_flat.reshape(self.n_steps, prob.n_u)
            n_u = prob.n_u
            sens = np.zeros((prob.n_x, self.n_steps * n_u))
            blocks = []
            for k in range(self.n_steps + 1):
                h_jac = prob.constraints[k].jacobian_at(states[k])
                blocks.append(h_jac @ sens)
                if k < self.n_steps:
                    a_mat, b_mat = prob.step_jacobian(states[k], controls[k])
                    sens = a_mat @ sens
                    sens[:, k * n_u:(k + 1) * n_u] += b_mat
            self._jac_key = key
            self._jac = blocks
        return self._jac


def _control_rows(control_set: ControlSet, n_steps: int, n_vars: int,
                  u_offset: int, s_offset: int):
    """Constant rows G z + g0 >= 0 putting every u_k inside U.

    Returns (G, g0, counts) with counts = (box, split, cap) row totals, in
    that block order.
    """
    n_u = control_set.dim
    cap = control_set.one_norm_cap
    idx = list(cap[0]) if cap else []
    n_s = len(idx)

    finite_lo = [] if control_set.lower is None else [
        i for i in range(n_u) if np.isfinite(control_set.lower[i])]
    finite_hi = [] if control_set.upper is None else [
        i for i in range(n_u) if np.isfinite(control_set.upper[i])]
    n_box = len(finite_lo) + len(finite_hi)

    m = n_steps * (n_box + 2 * n_s + (1 if cap else 0))
    G = np.zeros((m, n_vars))
    g0 = np.zeros(m)
    r = 0
    for k in range(n_steps):
        base = u_offset + k * n_u
        for i in finite_lo:                      # u_i - lo >= 0
            G[r, base + i] = 1.0
            g0[r] = -control_set.lower[i]
            r += 1
        for i in finite_hi:                      # hi - u_i >= 0
            G[r, base + i] = -1.0
            g0[r] = control_set.upper[i]
            r += 1
    box_rows = r
    for k in range(n_steps):
        ubase = u_offset + k * n_u
        sbase = s_offset + k * n_s
        for j, i in enumerate(idx):              # s >= u and s >= -u
            G[r, sbase + j] = 1.0
            G[r, ubase + i] = -1.0
            r += 1
            G[r, sbase + j] = 1.0
            G[r, ubase + i] = 1.0
            r += 1
    split_rows = r - box_rows
    if cap:
        for k in range(n_steps):                 # cap - sum(s) >= 0
            sbase = s_offset + k * n_s
            G[r, sbase:sbase + n_s] = -1.0
            g0[r] = cap[1]
            r += 1
    cap_rows = r - box_rows - split_rows
    return G, g0, (box_rows, split_rows, cap_rows)


def build_nlp(problem: DcocProblem, theta: float = 1.1,
              big_m: float | None = None) -> NlpInstance:
    """Assemble the weighted-slack NLP for a drift counteraction problem.

    ``theta`` must exceed 1 (strictly decreasing weights); ``big_m`` defaults
    to 10 * max_k ||h_k||_inf + 10, large enough that unit slack swallows any
    constraint row the bundled scenarios can reach.
    """
    if not theta > 1.0:
        raise ValueError(f"theta must exceed 1, got {theta}")
    if big_m is None:
        big_m = 10.0 * max(float(np.max(np.abs(c.bound)))
                           for c in problem.constraints) + 10.0
    if not big_m > 0.0:
        raise ValueError(f"big_m must be positive, got {big_m}")

    N = problem.horizon
    n_u = problem.n_u
    cap = problem.control_set.one_norm_cap
    n_s = len(cap[0]) if cap else 0

    u_lo, u_hi = 0, N * n_u
    e_lo, e_hi = u_hi, u_hi + (N + 1)
    s_lo, s_hi = e_hi, e_hi + N * n_s
    n_vars = s_hi
    layout = {"u": (u_lo, u_hi), "eps": (e_lo, e_hi), "aux": (s_lo, s_hi)}

    G_u, g0_u, (m_box, m_split, m_cap) = _control_rows(
        problem.control_set, N, n_vars, u_lo, s_lo)

    # slack chain: eps_0 >= 0 then eps_{k+1} - eps_k >= 0
    G_e = np.zeros((N + 1, n_vars))
    G_e[0, e_lo] = 1.0
    for k in range(N):
        G_e[k + 1, e_lo + k + 1] = 1.0
        G_e[k + 1, e_lo + k] = -1.0
    G = np.vstack([G_u, G_e])
    g0 = np.concatenate([g0_u, np.zeros(N + 1)])
    m_lin = G.shape[0]

    stage_sizes = [c.n_rows for c in problem.constraints]
    m_stage = sum(stage_sizes)
    stage_starts = np.concatenate([[0], np.cumsum(stage_sizes)])
    m_total = m_lin + m_stage

    row_layout = {
        "control_box": (0, m_box),
        "norm_split": (m_box, m_box + m_split),
        "norm_cap": (m_box + m_split, m_box + m_split + m_cap),
        "slack_chain": (m_box + m_split + m_cap, m_lin),
        "stage": (m_lin, m_total),
    }

    weights = theta ** (-np.arange(N + 1, dtype=float))
    grad = np.zeros(n_vars)
    grad[e_lo:e_hi] = weights

    shoot = _ShootingEvaluator(problem, N)
    bounds = [c.bound for c in problem.constraints]

    def cost(z: np.ndarray) -> float:
        return float(weights @ z[e_lo:e_hi])

    def cost_grad(z: np.ndarray) -> np.ndarray:
        return grad.copy()

    def ineq(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        _, values = shoot.states_and_values(z[u_lo:u_hi])
        c = np.empty(m_total)
        c[:m_lin] = G @ z + g0
        eps = z[e_lo:e_hi]
        for k in range(N + 1):
            lo = m_lin + stage_starts[k]
            hi = m_lin + stage_starts[k + 1]
            c[lo:hi] = bounds[k] - values[k] + big_m * eps[k]
        return c

    # template so the constant block is never rebuilt
    jac_template = np.zeros((m_total, n_vars))
    jac_template[:m_lin] = G
    for k in range(N + 1):
        lo = m_lin + stage_starts[k]
        hi = m_lin + stage_starts[k + 1]
        jac_template[lo:hi, e_lo + k] = big_m

    def ineq_jac(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        blocks = shoot.value_jacobians(z[u_lo:u_hi])
        jac = jac_template.copy()
        for k in range(N + 1):
            lo = m_lin + stage_starts[k]
            hi = m_lin + stage_starts[k + 1]
            jac[lo:hi, u_lo:u_hi] = -blocks[k]
        return jac

    meta = {
        "problem": problem,
        "theta": float(theta),
        "big_m": float(big_m),
        "weights": weights,
        "fd_dynamics": problem.uses_fd_dynamics,
        "fd_constraint_stages": tuple(
            k for k, c in enumerate(problem.constraints)
            if c.uses_fd_jacobian),
        "kind": "weighted-slack",
    }
    return NlpInstance(n_vars=n_vars, n_ineq=m_total, cost=cost,
                       cost_grad=cost_grad, ineq=ineq, ineq_jac=ineq_jac,
                       layout=layout, row_layout=row_layout, meta=meta)


def build_feasibility_nlp(problem: DcocProblem, n_steps: int) -> NlpInstance:
    """Hard-constrained feasibility NLP over the first ``n_steps`` steps.

    No slacks and zero cost: a point is optimal iff the truncated trajectory
    satisfies every stage set up to ``n_steps`` exactly. Used by the exact
    exit-time search.
    """
    if not 1 <= n_steps <= problem.horizon:
        raise ValueError("n_steps must lie in [1, horizon]")
    n_u = problem.n_u
    cap = problem.control_set.one_norm_cap
    n_s = len(cap[0]) if cap else 0

    u_lo, u_hi = 0, n_steps * n_u
    s_lo, s_hi = u_hi, u_hi + n_steps * n_s
    n_vars = s_hi
    layout = {"u": (u_lo, u_hi), "eps": (u_hi, u_hi), "aux": (s_lo, s_hi)}

    G, g0, (m_box, m_split, m_cap) = _control_rows(
        problem.control_set, n_steps, n_vars, u_lo, s_lo)
    m_lin = G.shape[0]

    stage_sizes = [problem.constraints[k].n_rows for k in range(n_steps + 1)]
    stage_starts = np.concatenate([[0], np.cumsum(stage_sizes)])
    m_total = m_lin + int(stage_starts[-1])
    row_layout = {
        "control_box": (0, m_box),
        "norm_split": (m_box, m_box + m_split),
        "norm_cap": (m_box + m_split, m_box + m_split + m_cap),
        "slack_chain": (m_lin, m_lin),
        "stage": (m_lin, m_total),
    }

    shoot = _ShootingEvaluator(problem, n_steps)
    bounds = [problem.constraints[k].bound for k in range(n_steps + 1)]

    def cost(z: np.ndarray) -> float:
        return 0.0

    def cost_grad(z: np.ndarray) -> np.ndarray:
        return np.zeros(n_vars)

    def ineq(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        _, values = shoot.states_and_values(z[u_lo:u_hi])
        c = np.empty(m_total)
        c[:m_lin] = G @ z + g0
        for k in range(n_steps + 1):
            lo = m_lin + stage_starts[k]
            hi = m_lin + stage_starts[k + 1]
            c[lo:hi] = bounds[k] - values[k]
        return c

    def ineq_jac(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        blocks = shoot.value_jacobians(z[u_lo:u_hi])
        jac = np.zeros((m_total, n_vars))
        jac[:m_lin] = G
        for k in range(n_steps + 1):
            lo = m_lin + stage_starts[k]
            hi = m_lin + stage_starts[k + 1]
            jac[lo:hi, u_lo:u_hi] = -blocks[k]
        return jac

    meta = {"problem": problem, "n_steps": n_steps, "kind": "feasibility"}
    return NlpInstance(n_vars=n_vars, n_ineq=m_total, cost=cost,
                       cost_grad=cost_grad, ineq=ineq, ineq_jac=ineq_jac,
                       layout=layout, row_layout=row_layout, meta=meta)


def feasible_point(nlp: NlpInstance, controls: np.ndarray) -> np.ndarray:
    """Lift a control sequence to a feasible NLP point.

    Splits are set to |u| exactly and each slack to the running maximum of
    the scaled stage violations, so every slack-chain and relaxed stage row
    holds by construction; the control rows hold whenever each u_k is in U.
    """
    if nlp.meta.get("kind") != "weighted-slack":
        raise ValueError("feasible_point needs a weighted-slack instance")
    problem: DcocProblem = nlp.meta["problem"]
    big_m = nlp.meta["big_m"]
    N = problem.horizon
    controls = np.asarray(controls, dtype=float).reshape(N, problem.n_u)

    traj = simulate(problem, controls)
    z = np.zeros(nlp.n_vars)
    z[nlp.slice_of("u")] = controls.ravel()

    eps = np.empty(N + 1)
    running = 0.0
    for k in range(N + 1):
        worst = float(np.max(-traj.stage_margins[k]))  # H - h, max row
        running = max(running, max(0.0, worst) / big_m)
        eps[k] = running
    z[nlp.slice_of("eps")] = eps

    cap = problem.control_set.one_norm_cap
    if cap:
        idx = list(cap[0])
        z[nlp.slice_of("aux")] = np.abs(controls[:, idx]).ravel()
    return z


def seeded_guess(nlp: NlpInstance, controls: np.ndarray,
                 slack_margin: float = 1e-3) -> np.ndarray:
    """Start for a weighted-slack instance from a control sequence, with
    every variable backed off its kink.

    Witness slacks sit exactly on the running maximum of the stage
    violations, which leaves the slack chain and the worst stage rows
    degenerately tied; a start there pins the first QP step into a corner
    where predicted progress drops below evaluation noise. A strictly
    increasing slack margin and a split-variable margin make those rows
    slack, so early iterations can move controls freely.
    """
    z = feasible_point(nlp, controls)
    problem: DcocProblem = nlp.meta["problem"]
    N = problem.horizon
    steps = np.arange(N + 1, dtype=float)
    z[nlp.slice_of("eps")] += slack_margin * (1.0 + steps / max(1, N))
    cap = problem.control_set.one_norm_cap
    if cap:
        idx, cap_val = cap
        cols = list(idx)
        u = np.asarray(controls, dtype=float).reshape(N, problem.n_u)
        headroom = cap_val - float(np.max(np.sum(np.abs(u[:, cols]),
                                                 axis=1)))
        margin = min(0.01 * cap_val, 0.5 * headroom) / len(cols)
        if margin > 0:
            z[nlp.slice_of("aux")] += margin
    return z


def initial_guess(nlp: NlpInstance) -> np.ndarray:
    """Deterministic start: held projection of zero control, margined
    witness slacks (on weighted-slack instances), and split variables
    backed off the kink."""
    problem: DcocProblem = nlp.meta["problem"]
    n_steps = nlp.meta.get("n_steps", problem.horizon)
    hold = problem.control_set.project(np.zeros(problem.n_u))
    controls = np.tile(hold, (n_steps, 1))
    if nlp.meta.get("kind") == "weighted-slack":
        return seeded_guess(nlp, controls)
    z = np.zeros(nlp.n_vars)
    z[nlp.slice_of("u")] = controls.ravel()
    cap = problem.control_set.one_norm_cap
    if cap:
        idx, cap_val = cap
        cols = list(idx)
        z[nlp.slice_of("aux")] = np.abs(controls[:, cols]).ravel()
        headroom = cap_val - float(np.sum(np.abs(hold[cols])))
        margin = min(0.01 * cap_val, 0.5 * headroom) / len(cols)
        if margin > 0:
            z[nlp.slice_of("aux")] += margin
    return z


def extract(nlp: NlpInstance, primal: np.ndarray,
            tol_feas: float = 1e-8) -> SolutionExtract:
    """Pull controls and slacks out of a solver point and resimulate.

    The achieved exit time comes from the resimulated trajectory, never from
    solver-reported feasibility.
    """
    problem: DcocProblem = nlp.meta["problem"]
    primal = np.asarray(primal, dtype=float)
    controls = primal[nlp.slice_of("u")].reshape(problem.horizon, problem.n_u)
    slacks = primal[nlp.slice_of("eps")].copy()
    traj = simulate(problem, controls)
    kappa = time_before_exit(traj, problem.constraints, tol_feas)
    return SolutionExtract(controls=controls, slacks=slacks, kappa=kappa,
                           objective=float(nlp.cost(primal)), trajectory=traj)


def nlp_gradients_check(nlp: NlpInstance, z: np.ndarray,
                        step: float = 1e-6) -> dict:
    """Compare analytic derivatives against central finite differences.

    Per-coordinate steps scale with |z_i|. Errors are |analytic - fd| over
    max(1, |fd|), reduced to the worst entry. Returns a dict with "cost",
    "ineq", and "max" entries.
    """
    z = np.asarray(z, dtype=float)
    g = nlp.cost_grad(z)
    jac = nlp.ineq_jac(z)
    g_fd = np.empty_like(g)
    jac_fd = np.empty_like(jac)
    for i in range(nlp.n_vars):
        hi = step * (1.0 + abs(z[i]))
        zp = z.copy()
        zm = z.copy()
        zp[i] += hi
        zm[i] -= hi
        g_fd[i] = (nlp.cost(zp) - nlp.cost(zm)) / (2.0 * hi)
        jac_fd[:, i] = (nlp.ineq(zp) - nlp.ineq(zm)) / (2.0 * hi)
    cost_err = float(np.max(np.abs(g - g_fd) / np.maximum(1.0, np.abs(g_fd))))
    ineq_err = float(np.max(np.abs(jac - jac_fd)
                            / np.maximum(1.0, np.abs(jac_fd))))
    return {"cost": cost_err, "ineq": ineq_err,
            "max": max(cost_err, ineq_err)}

"""Dense SQP solver for inequality-constrained NLPs.

Structure: damped-BFGS quadratic models, an l1 exact-penalty merit line
search, and a primal active-set QP subsolver. QP subproblems are solved in
elastic form: rows violated at the current iterate get a nonnegative relief
variable with a linear penalty, so every subproblem has a trivially feasible
start and linearization infeasibility shows up as relief that will not go to
zero rather than as a hard failure.

Constraint rows are scaled once per solve to unit infinity-norm; reported
multipliers and the KKT residual refer to the original scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import cho_factor, cho_solve

from .core import DcocError
from .transcription import NlpInstance

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max-iter"
STATUS_INFEASIBLE_QP = "infeasible-subproblem"
STATUS_LINE_SEARCH = "line-search-failure"


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and limits for ``solve``. Defaults suit the bundled
    problems; kkt_tol is the unscaled optimality/feasibility target."""

    kkt_tol: float = 1e-7
    max_iter: int = 300
    merit_growth: float = 2.0
    armijo_c1: float = 1e-4
    backtrack_ratio: float = 0.5
    max_backtracks: int = 30
    bfgs_damping: float = 0.2
    elastic_delta: float = 0.1
    relief_tol: float = 1e-8
    qp_max_iter: int | None = None

    def __post_init__(self):
        if not 0 < self.kkt_tol < 1:
            raise ValueError("kkt_tol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.merit_growth <= 1:
            raise ValueError("merit_growth must exceed 1")
        if not 0 < self.armijo_c1 < 0.5:
            raise ValueError("armijo_c1 must lie in (0, 0.5)")
        if not 0 < self.backtrack_ratio < 1:
            raise ValueError("backtrack_ratio must lie in (0, 1)")
        if not 0 < self.bfgs_damping < 1:
            raise ValueError("bfgs_damping must lie in (0, 1)")


@dataclass
class SolverSolution:
    """Primal point, multipliers (one per constraint row), and diagnostics."""

    primal: np.ndarray
    multipliers: np.ndarray
    status: str
    iterations: int
    kkt_residual: float
    objective: float
    max_violation: float
    diagnostics: dict = field(default_factory=dict)


def kkt_residual(nlp: NlpInstance, primal: np.ndarray,
                 multipliers: np.ndarray) -> float:
    """Infinity-norm KKT residual of (primal, multipliers) in the original
    problem scaling: max of stationarity, primal feasibility, multiplier
    nonnegativity, and complementarity."""
    z = np.asarray(primal, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    c = nlp.ineq(z)
    if lam.shape != c.shape:
        raise ValueError(f"need {c.size} multipliers, got {lam.size}")
    g = nlp.cost_grad(z)
    jac = nlp.ineq_jac(z)
    if c.size == 0:
        return float(np.max(np.abs(g)))
    stationarity = float(np.max(np.abs(g - jac.T @ lam)))
    primal_feas = float(max(0.0, np.max(-c)))
    dual_feas = float(max(0.0, np.max(-lam)))
    comp = float(np.max(np.abs(lam * c)))
    return max(stationarity, primal_feas, dual_feas, comp)


class _QpResult:
    __slots__ = ("step", "multipliers", "relief", "elastic_rows",
                 "iterations", "status", "active_set")

    def __init__(self, step, multipliers, relief, elastic_rows, iterations,
                 status, active_set):
        self.step = step
        self.multipliers = multipliers
        self.relief = relief
        self.elastic_rows = elastic_rows
        self.iterations = iterations
        self.status = status
        self.active_set = active_set


def _solve_qp(B: np.ndarray, g: np.ndarray, A: np.ndarray, b: np.ndarray,
              rho: float, delta: float, warm: tuple[int, ...] = (),
              max_iter: int | None = None) -> _QpResult:
    """min 0.5 p'Bp + g'p  s.t.  A p >= b, by a primal active-set method.

    Rows with b > 0 (infeasible at p = 0) get relief variables t >= 0 with
    objective rho * t + 0.5 * delta * t^2, giving the feasible start
    (p, t) = (0, b[elastic]). Violations below 1e-9 are clamped to the
    boundary instead of relieved: roundoff-scale infeasibility would
    otherwise spray elastic rows over the whole active face. Ties in
    blocking and dropping break toward the lowest row index so reruns are
    bit-reproducible.
    """
    n = g.size
    m = A.shape[0]
    b = np.where((b > 0.0) & (b <= 1e-9), 0.0, b)
    elastic = np.flatnonzero(b > 0.0)
    n_e = elastic.size
    n_w = n + n_e
    m_exp = m + n_e  # original rows, then t >= 0 rows

    # expanded rows over (p, t)
    A_exp = np.zeros((m_exp, n_w))
    A_exp[:m, :n] = A
    for i, j in enumerate(elastic):
        A_exp[j, n + i] = 1.0
        A_exp[m + i, n + i] = 1.0
    b_exp = np.concatenate([b, np.zeros(n_e)])

    chol_B = cho_factor(B, lower=True, check_finite=False)

    def solve_Bw(v: np.ndarray) -> np.ndarray:
        """Apply diag(B, delta*I)^-1 to a vector or a stack of columns."""
        out = np.empty_like(v)
        out[:n] = cho_solve(chol_B, v[:n], check_finite=False)
        out[n:] = v[n:] / delta
        return out

    g_w = np.zeros(n_w)
    g_w[:n] = g
    g_w[n:] = rho

    w = np.zeros(n_w)
    w[n:] = b[elastic]

    res0 = A_exp @ w - b_exp
    active0 = np.abs(res0) <= 1e-11 * (1.0 + np.abs(b_exp))
    work = sorted(set(int(j) for j in elastic)
                  | {int(j) for j in warm if j < m and active0[j]})
    if len(work) > n_w - 1:
        work = work[:n_w - 1]

    y_block = solve_Bw(A_exp[work].T) if work else np.zeros((n_w, 0))
    ys: dict[int, np.ndarray] = {j: y_block[:, i]
                                 for i, j in enumerate(work)}

    if max_iter is None:
        max_iter = 3 * (n_w + m_exp) + 50

    status = "iteration-limit"
    lam_work = np.zeros(0)
    in_work = np.zeros(m_exp, dtype=bool)
    in_work[work] = True
    at_minimizer = False  # previous step was full and unblocked
    it = 0
    while it < max_iter:
        it += 1
        r = -(np.concatenate([B @ w[:n], delta * w[n:]]) + g_w)
        q_unc = solve_Bw(r)
        if work:
            A_w = A_exp[work]
            Y = np.column_stack([ys[j] for j in work])
            S = A_w @ Y
            rhs = A_w @ q_unc
            scale = max(1.0, float(np.max(np.diagonal(S))))
            mu = None
            for jitter in (0.0, 1e-13, 1e-10, 1e-7):
                try:
                    cf = cho_factor(S + jitter * scale * np.eye(len(work)),
                                    lower=True, check_finite=False)
                    mu = cho_solve(cf, rhs, check_finite=False)
                    mu += cho_solve(cf, rhs - S @ mu, check_finite=False)
                    break
                except np.linalg.LinAlgError:
                    continue
            if mu is None:
                # dependent working set beyond what jitter absorbs
                mu = scipy.linalg.lstsq(S, rhs,
                                        lapack_driver="gelsy")[0]
            q = q_unc - Y @ mu
            lam_work = -mu
        else:
            q = q_unc
            lam_work = np.zeros(0)

        # a full unblocked step lands exactly on the working-face minimizer,
        # so treat the follow-up step as zero even when roundoff in the
        # projection leaves it slightly above the absolute threshold; a
        # working set of full variable rank pins w the same way
        if at_minimizer or len(work) >= n_w or \
                np.max(np.abs(q)) <= 1e-11 * (1.0 + np.max(np.abs(w))):
            at_minimizer = False
            if lam_work.size == 0 or np.min(lam_work) >= -1e-9:
                status = "optimal"
                break
            drop = work[int(np.argsort(lam_work, kind="stable")[0])]
            work.remove(drop)
            in_work[drop] = False
            continue

        # longest feasible step along q; ties pick the lowest row index.
        # The admission threshold is relative to the step size: directions
        # leak off the active face by roundoff, and rows dependent on the
        # working set must not be admitted on the back of that leak.
        d = A_exp @ q
        res = A_exp @ w - b_exp
        candidates = (~in_work) & (d < -1e-10 * (1.0 + np.max(np.abs(q))))
        alpha = 1.0
        blocker = -1
        if np.any(candidates):
            idx = np.flatnonzero(candidates)
            ratios = np.maximum(res[idx], 0.0) / (-d[idx])
            amin = float(np.min(ratios))
            if amin < alpha:
                alpha = max(amin, 0.0)
                blocker = int(idx[np.flatnonzero(
                    ratios <= amin + 1e-15)[0]])
        w = w + alpha * q
        at_minimizer = blocker < 0
        if blocker >= 0:
            work.append(blocker)
            work.sort()
            in_work[blocker] = True
            if blocker not in ys:
                ys[blocker] = solve_Bw(A_exp[blocker])

    lam = np.zeros(m)
    for j, lv in zip(work, lam_work):
        if j < m:
            lam[j] = max(0.0, float(lv))
    relief = w[n:].copy()
    active = tuple(j for j in work if j < m)
    return _QpResult(step=w[:n].copy(), multipliers=lam, relief=relief,
                     elastic_rows=elastic, iterations=it, status=status,
                     active_set=active)


def _violation_l1(c: np.ndarray) -> float:
    # residuals at roundoff depth (|c| <= 1e-12) count as boundary, not
    # violation, matching the directional-derivative model below; without
    # the shift, summed evaluation noise across thousands of rows puts a
    # floor under the merit that a sub-noise predicted decrease cannot beat
    return float(np.sum(np.maximum(0.0, -c - 1e-12)))


def solve(nlp: NlpInstance, init: np.ndarray,
          opts: SolverOptions | None = None) -> SolverSolution:
    """SQP iteration from ``init`` until the unscaled KKT residual drops
    below ``opts.kkt_tol``.

    Returns the last iterate with one of the statuses "optimal", "max-iter",
    "infeasible-subproblem", or "line-search-failure". Non-finite values from
    the problem callbacks at an accepted iterate raise; at trial points during
    the line search they reject the trial instead.
    """
    opts = opts or SolverOptions()
    z = np.asarray(init, dtype=float).copy()
    if z.shape != (nlp.n_vars,):
        raise ValueError(f"init must have shape ({nlp.n_vars},)")

    def evaluate(point: np.ndarray):
        c = nlp.ineq(point)
        f = nlp.cost(point)
        if not (np.isfinite(f) and np.all(np.isfinite(c))):
            raise DcocError("non-finite cost or constraint value")
        return f, c

    f, c = evaluate(z)
    jac = nlp.ineq_jac(z)
    if not np.all(np.isfinite(jac)):
        raise DcocError("non-finite constraint jacobian at the start point")
    m = c.size
    row_scale = np.maximum(1.0, np.max(np.abs(jac), axis=1)) if m else \
        np.ones(0)

    g = nlp.cost_grad(z)
    c_s = c / row_scale
    jac_s = jac / row_scale[:, None]

    B = np.eye(nlp.n_vars)
    scaled_B = False
    mu = 1.0
    lam_s = np.zeros(m)
    warm: tuple[int, ...] = ()
    history = {"merit": [], "violation": [], "step_norm": [], "alpha": [],
               "qp_iterations": [], "rho_escalations": 0}
    status = STATUS_MAX_ITER
    it = 0

    for it in range(1, opts.max_iter + 1):
        viol = _violation_l1(c_s)

        rho = max(100.0, 10.0 * mu)
        for attempt in range(4):
            try:
                qp = _solve_qp(B, g, jac_s, -c_s, rho=rho,
                               delta=opts.elastic_delta, warm=warm,
                               max_iter=opts.qp_max_iter)
            except np.linalg.LinAlgError:
                # accumulated updates can lose definiteness to roundoff;
                # restart the quasi-Newton model at its current scale
                B = max(1e-2, float(np.mean(np.diagonal(B)))) \
                    * np.eye(nlp.n_vars)
                qp = _solve_qp(B, g, jac_s, -c_s, rho=rho,
                               delta=opts.elastic_delta, warm=warm,
                               max_iter=opts.qp_max_iter)
            if qp.relief.size == 0 or np.max(qp.relief) <= opts.relief_tol:
                break
            if qp.status != "optimal":
                break  # raising rho cannot fix an unconverged subproblem
            warm = qp.active_set
            rho *= 100.0
            history["rho_escalations"] += 1
        p = qp.step
        lam_s = qp.multipliers
        warm = qp.active_set
        history["qp_iterations"].append(qp.iterations)

        lam = lam_s / row_scale if m else lam_s
        res = kkt_residual(nlp, z, lam)
        if res <= opts.kkt_tol:
            status = STATUS_OPTIMAL
            break

        stuck = qp.relief.size and np.max(qp.relief) > opts.relief_tol
        if stuck and float(np.sum(qp.relief)) > 0.9 * viol:
            status = STATUS_INFEASIBLE_QP
            break

        # exclude rows still relying on relief from the penalty update:
        # their multipliers sit at the artificial penalty rho
        lam_for_mu = lam_s.copy()
        if qp.relief.size:
            lam_for_mu[qp.elastic_rows[qp.relief > opts.relief_tol]] = 0.0
        mu = max(mu, opts.merit_growth
                 * float(np.max(np.abs(lam_for_mu), initial=0.0)) + 0.01)

        # directional derivative of the l1 merit at alpha = 0. On boundary
        # rows the QP enforces jp >= -c only to its own precision, so
        # sub-tolerance negative jp values are noise, not merit growth;
        # counting them (times mu) would fake a nondescent direction.
        jp = jac_s @ p
        qp_noise = 1e-9 * (1.0 + float(np.max(np.abs(p))))
        violated = c_s < -1e-12
        on_boundary = np.abs(c_s) <= 1e-12
        jp_b = np.where(jp[on_boundary] > -qp_noise, 0.0, jp[on_boundary])
        deriv = float(g @ p)
        deriv += mu * float(np.sum(-jp[violated]))
        deriv += mu * float(np.sum(np.maximum(0.0, -jp_b)))
        merit0 = f + mu * viol
        history["merit"].append(merit0)
        history["violation"].append(viol)

        if deriv >= -1e-10 * (1.0 + abs(merit0)):
            # the model predicts less improvement than the merit evaluation
            # can resolve, so a line search cannot verify progress
            status = STATUS_OPTIMAL if res <= 10 * opts.kkt_tol \
                else STATUS_LINE_SEARCH
            break

        alpha = 1.0
        accepted = False
        trial = z
        f_t, c_t = f, c
        for _ in range(opts.max_backtracks):
            trial = z + alpha * p
            try:
                f_t, c_t = evaluate(trial)
            except DcocError:
                alpha *= opts.backtrack_ratio
                continue
            merit_t = f_t + mu * _violation_l1(c_t / row_scale)
            # absolute allowance for merit evaluation noise; demanded
            # decreases below it are not measurable
            noise = 1e-11 * (1.0 + abs(merit0))
            if merit_t <= merit0 + opts.armijo_c1 * alpha * deriv + noise:
                accepted = True
                break
            alpha *= opts.backtrack_ratio
        if not accepted:
            status = STATUS_LINE_SEARCH
            break
        history["step_norm"].append(float(alpha * np.max(np.abs(p))))
        history["alpha"].append(alpha)

        jac_t = nlp.ineq_jac(trial)
        if not np.all(np.isfinite(jac_t)):
            raise DcocError("non-finite constraint jacobian at an iterate")
        jac_ts = jac_t / row_scale[:, None]
        g_t = nlp.cost_grad(trial)

        # damped BFGS on the Lagrangian gradient difference
        s_vec = trial - z
        y_vec = (g_t - jac_ts.T @ lam_s) - (g - jac_s.T @ lam_s)
        if not scaled_B:
            # size the initial model to the first observed curvature; the
            # problems here are close to linear, so unit curvature would
            # force dozens of creeping iterations
            ss = float(s_vec @ s_vec)
            sigma0 = float(s_vec @ y_vec) / ss if ss > 0 else 1.0
            B = np.clip(sigma0, 1e-2, 1e4) * np.eye(nlp.n_vars)
            scaled_B = True
        Bs = B @ s_vec
        sBs = float(s_vec @ Bs)
        sy = float(s_vec @ y_vec)
        if sBs > 0:
            if sy < opts.bfgs_damping * sBs:
                theta = (1.0 - opts.bfgs_damping) * sBs / (sBs - sy)
                y_vec = theta * y_vec + (1.0 - theta) * Bs
                sy = float(s_vec @ y_vec)
            if sy > 1e-8 * float(np.linalg.norm(s_vec)
                                 * np.linalg.norm(y_vec) + 1e-300):
                B = B - np.outer(Bs, Bs) / sBs + np.outer(y_vec, y_vec) / sy
                B = 0.5 * (B + B.T)

        z = trial
        f, c = f_t, c_t
        jac_s = jac_ts
        g = g_t
        c_s = c_t / row_scale

    lam = lam_s / row_scale if m else lam_s
    final_res = kkt_residual(nlp, z, lam)
    max_violation = float(max(0.0, np.max(-c))) if m else 0.0
    history["row_scale_max"] = float(np.max(row_scale)) if m else 1.0
    return SolverSolution(primal=z, multipliers=lam, status=status,
                          iterations=it, kkt_residual=final_res,
                          objective=f, max_violation=max_violation,
                          diagnostics=history)


def multi_start(nlp: NlpInstance, init: np.ndarray,
                opts: SolverOptions | None = None, n_starts: int = 1,
                seed: int = 0, sigma: float = 0.1) -> SolverSolution:
    """Run ``solve`` from the given start plus seeded perturbations of it.

    The returned solution is the feasible optimum with the lowest objective;
    with no optimal run, the one with the least violation (KKT residual as
    tie-break). Start index breaks exact ties, so results are reproducible
    for a fixed seed.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    opts = opts or SolverOptions()
    init = np.asarray(init, dtype=float)
    rng = np.random.default_rng(seed)
    best = None
    best_key = None
    summaries = []
    for i in range(n_starts):
        if i == 0:
            z0 = init.copy()
        else:
            z0 = init + sigma * (1.0 + np.abs(init)) * \
                rng.standard_normal(init.size)
        sol = solve(nlp, z0, opts)
        summaries.append((sol.status, sol.objective, sol.max_violation,
                          sol.kkt_residual))
        good = sol.status == STATUS_OPTIMAL and \
            sol.max_violation <= 10 * opts.kkt_tol
        key = (0 if good else 1,
               sol.objective if good else sol.max_violation,
               sol.kkt_residual, i)
        if best_key is None or key < best_key:
            best, best_key = sol, key
    best.diagnostics["starts"] = summaries
    return best

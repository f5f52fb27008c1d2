"""End-to-end acceptance gates.

Each test covers one numbered criterion and prints a single
``[criterion N] PASS/FAIL`` line (run pytest with ``-s`` to see the lines
for passing tests as well). The expensive case-study solves run once in
module-scoped fixtures and are shared across criteria.
"""

import json
import time

import numpy as np
import pytest

from driftkit.attitude import continuous_dynamics, srp_torque, wheel_momentum
from driftkit.cli import (
    _draw_box,
    main,
    read_trajectory_csv,
    run_scenario,
    solve_pipeline,
)
from driftkit.config import (
    ScenarioConfig,
    BUNDLED_SCENARIOS,
    build_problem,
    load_bundled,
    parse_config,
)
from driftkit.core import ControlSet, DcocProblem, box_constraint
from driftkit.oracle import OracleOptions, kappa_star_grid_dp, kappa_star_sweep
from driftkit.transcription import (
    build_nlp,
    feasible_point,
    initial_guess,
    nlp_gradients_check,
)


def _report(criterion: int, ok: bool, detail: str):
    line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, flush=True)
    if not ok:
        pytest.fail(line, pytrace=False)


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def fig1_runs(tmp_path_factory):
    out_a = tmp_path_factory.mktemp("fig1_a")
    out_b = tmp_path_factory.mktemp("fig1_b")
    t0 = time.time()
    code_a = main(["reproduce", "fig1", "--out", str(out_a)])
    elapsed = time.time() - t0
    code_b = main(["reproduce", "fig1", "--out", str(out_b)])
    assert code_a == 0 and code_b == 0
    return out_a, out_b, elapsed


@pytest.fixture(scope="module")
def saturated_run(tmp_path_factory):
    cfg = load_bundled("3rw_saturated")
    out = tmp_path_factory.mktemp("saturated")
    record = run_scenario(cfg, out, write_plots=False)
    return cfg, record, out


@pytest.fixture(scope="module")
def restricted_run(tmp_path_factory):
    cfg = load_bundled("2rw_restricted")
    out = tmp_path_factory.mktemp("restricted")
    record = run_scenario(cfg, out, write_plots=False)
    return cfg, record, out


# ------------------------------------------------------------- criterion 1

def random_convex_config(seed: int) -> dict:
    """Random drifting affine instance inside static unit boxes."""
    rng = np.random.default_rng(seed)
    n_x = int(rng.integers(1, 5))
    n_u = int(rng.integers(1, 3))
    N = int(rng.integers(10, 31))
    A = np.eye(n_x) + 0.08 * rng.standard_normal((n_x, n_x))
    rho = max(abs(np.linalg.eigvals(A)))
    A *= rng.uniform(0.96, 1.06) / rho
    B = 0.5 * rng.standard_normal((n_x, n_u))
    c = rng.uniform(0.04, 0.1, n_x) * rng.choice([-1.0, 1.0], n_x)
    return {
        "schema": 1, "name": f"rand{seed}", "kind": "linear",
        "horizon": N, "dt": 1.0, "n_starts": 2,
        "linear": {
            "A": A.tolist(), "B": B.tolist(), "c": c.tolist(),
            "state_lower": [-1.0] * n_x, "state_upper": [1.0] * n_x,
            "control_lower": [-0.4] * n_u, "control_upper": [0.4] * n_u,
            "x0": [0.0] * n_x,
        },
    }


def test_criterion_1_convex_equivalence():
    t0 = time.time()
    failures = []
    for seed in range(20):
        cfg = parse_config(random_convex_config(seed))
        problem, _ = build_problem(cfg)
        res = solve_pipeline(problem, cfg)
        rep = kappa_star_sweep(problem, OracleOptions(linear=True))
        if res.kappa != rep.kappa_star:
            failures.append(
                f"seed {seed}: kappa {res.kappa} != kappa* {rep.kappa_star}")
        bad = [k for k in range(rep.kappa_star + 1)
               if k < res.slacks.size and res.slacks[k] > 1e-6]
        if bad:
            failures.append(f"seed {seed}: slack > 1e-6 at stages {bad}")
    elapsed = time.time() - t0
    if elapsed >= 60.0:
        failures.append(f"runtime {elapsed:.1f}s exceeds 60s")
    _report(1, not failures,
            failures[0] if failures else
            f"20/20 instances match the exact sweep with clean slacks "
            f"({elapsed:.1f}s)")


# ------------------------------------------------------------- criterion 2

def test_criterion_2_scalar_drift_worked_example():
    cfg = load_bundled("scalar_drift")
    problem, _ = build_problem(cfg)
    t0 = time.time()
    rep = kappa_star_sweep(problem, OracleOptions(linear=True))
    res = solve_pipeline(problem, cfg)
    elapsed = time.time() - t0
    ok = rep.kappa_star == 2 and res.kappa == 2 and elapsed < 1.0
    _report(2, ok,
            f"oracle kappa*={rep.kappa_star}, pipeline kappa={res.kappa}, "
            f"{elapsed:.2f}s (need both 2 in under 1s)")


# ------------------------------------------------------------- criterion 3

def tiny_nonlinear_instances():
    out = []

    def mk(name, dyn, jac, N, x0, lo, hi, u_lo, u_hi, grids):
        prob = DcocProblem(
            dynamics=dyn, horizon=N,
            constraints=tuple([box_constraint(lo, hi)] * (N + 1)),
            control_set=ControlSet(dim=len(u_lo), lower=u_lo, upper=u_hi),
            x0=np.asarray(x0, dtype=float),
            dynamics_jacobian=jac,
        )
        out.append((name, prob, grids))

    mk("sin-control",
       lambda x, u: x + 0.5 * np.sin(u) - 0.2,
       lambda x, u: (np.eye(1), 0.5 * np.cos(u) * np.eye(1)),
       12, [1.0], [0.0], [3.0], [-2.0], [2.0],
       ([np.linspace(-0.5, 3.5, 41)], np.linspace(-2.0, 2.0, 9)[:, None]))
    mk("tanh-drift",
       lambda x, u: x + np.tanh(u) - 0.4,
       lambda x, u: (np.eye(1), (1.0 - np.tanh(u) ** 2) * np.eye(1)),
       10, [1.5], [0.0], [2.0], [-0.3], [0.3],
       ([np.linspace(-0.5, 2.5, 31)], np.linspace(-0.3, 0.3, 7)[:, None]))
    mk("bilinear",
       lambda x, u: x * (1.0 + 0.2 * u) - 0.25,
       lambda x, u: ((1.0 + 0.2 * u) * np.eye(1), 0.2 * x * np.eye(1)),
       12, [1.0], [0.0], [2.0], [-1.0], [1.0],
       ([np.linspace(-0.5, 2.5, 31)], np.linspace(-1.0, 1.0, 9)[:, None]))

    th = 0.2
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    Bv = np.array([[0.0], [0.3]])
    mk("rot-drift",
       lambda x, u: R @ x + Bv @ u - np.array([0.1, 0.0]),
       lambda x, u: (R, Bv),
       10, [0.5, 0.0], [-1.0, -1.0], [1.0, 1.0], [-1.0], [1.0],
       ([np.linspace(-1.2, 1.2, 17), np.linspace(-1.2, 1.2, 17)],
        np.linspace(-1.0, 1.0, 5)[:, None]))

    def dyn5(x, u):
        return np.array([x[0] + 0.3 * np.sin(x[1]),
                         x[1] + 0.4 * u[0] - 0.15])

    def jac5(x, u):
        return (np.array([[1.0, 0.3 * np.cos(x[1])], [0.0, 1.0]]),
                np.array([[0.0], [0.4]]))

    mk("sin-coupled", dyn5, jac5,
       10, [0.2, 0.0], [-0.8, -0.8], [0.8, 0.8], [-1.0], [1.0],
       ([np.linspace(-1.0, 1.0, 17), np.linspace(-1.0, 1.0, 17)],
        np.linspace(-1.0, 1.0, 5)[:, None]))
    return out


def test_criterion_3_grid_dp_sandwich():
    t0 = time.time()
    failures = []
    pairs = []
    for name, prob, (sg, cg) in tiny_nonlinear_instances():
        dp = kappa_star_grid_dp(prob, sg, cg)
        cfg = ScenarioConfig(name=name, kind="linear", horizon=prob.horizon,
                             dt=1.0, theta=1.1, big_m=None, seed=0,
                             n_starts=6, sigma=0.3, tol_feas=1e-8)
        res = solve_pipeline(prob, cfg)
        pairs.append(f"{name}: dp={dp.kappa_star} nlp={res.kappa}")
        if dp.kappa_star > res.kappa:
            failures.append(
                f"{name}: grid-dp {dp.kappa_star} exceeds nlp {res.kappa}")
    elapsed = time.time() - t0
    if elapsed >= 120.0:
        failures.append(f"runtime {elapsed:.1f}s exceeds 120s")
    _report(3, not failures,
            failures[0] if failures else
            f"{'; '.join(pairs)} ({elapsed:.1f}s)")


# ------------------------------------------------------------- criterion 4

def test_criterion_4_nominal_full_horizon(fig1_runs):
    out_a, _, elapsed = fig1_runs
    record = json.loads((out_a / "record.json").read_text())
    failures = []
    if record["kappa"] != 75:
        failures.append(f"kappa {record['kappa']} != 75")
    violated = {g: t for g, t in record["first_violation"].items()
                if t is not None}
    if violated:
        failures.append(f"violations at {violated}")
    if record["max_violation"] > 1e-8:
        failures.append(f"max violation {record['max_violation']:.2e}")
    if elapsed >= 300.0:
        failures.append(f"runtime {elapsed:.1f}s exceeds 5 min")
    _report(4, not failures,
            failures[0] if failures else
            f"kappa=75 with no violations over all 150s ({elapsed:.0f}s)")


# ------------------------------------------------------------- criterion 5

def _window(t, center, half=6.0):
    return t is not None and center - half <= t <= center + half


def test_criterion_5_violation_case_reproduction(saturated_run,
                                                 restricted_run):
    failures = []

    cfg, record, out = saturated_run
    fv = record.first_violation
    if record.kappa >= cfg.horizon:
        failures.append("saturated: no violation occurred")
    if not _window(fv.get("phi"), 48.0):
        failures.append(f"saturated: phi first violation {fv.get('phi')}s "
                        "outside 48+-6s")
    if not _window(fv.get("theta"), 52.0):
        failures.append(f"saturated: theta first violation "
                        f"{fv.get('theta')}s outside 52+-6s")
    t_psi = fv.get("psi")
    t_ang = [t for t in (fv.get("phi"), fv.get("theta")) if t is not None]
    if t_ang and t_psi is not None and min(t_ang) > t_psi:
        failures.append("saturated: psi violated before phi/theta")

    states = read_trajectory_csv(out / "trajectory.csv")["states"]
    lo = cfg.attitude["angle_lower"][0]
    band = 0.05 * (cfg.attitude["angle_upper"][0] - lo)
    stages = range(int(8.0 / cfg.dt), int(48.0 / cfg.dt) + 1)
    off = [k for k in stages if abs(states[k, 0] - lo) > band]
    if off:
        failures.append(f"saturated: phi leaves its lower bound at stages "
                        f"{off} inside the 8-48s plateau")

    cfg, record, _ = restricted_run
    fv = record.first_violation
    if record.kappa >= cfg.horizon:
        failures.append("restricted: no violation occurred")
    if not _window(fv.get("theta"), 84.0):
        failures.append(f"restricted: theta first violation "
                        f"{fv.get('theta')}s outside 84+-6s")
    for group in ("phi", "psi"):
        if not _window(fv.get(group), 88.0):
            failures.append(f"restricted: {group} first violation "
                            f"{fv.get(group)}s outside 88+-6s")
    t_theta = fv.get("theta")
    others = [fv.get("phi"), fv.get("psi")]
    if t_theta is None or any(t is not None and t < t_theta
                              for t in others):
        failures.append("restricted: theta did not violate first")

    _report(5, not failures,
            "; ".join(failures) if failures else
            "both violation cases reproduce the documented ordering, "
            "windows, and plateau")


# ------------------------------------------------------------- criterion 6

def test_criterion_6_gradient_fidelity():
    worst_all = {}
    for name in BUNDLED_SCENARIOS:
        cfg = load_bundled(name)
        problem, _ = build_problem(cfg)
        nlp = build_nlp(problem, theta=cfg.theta, big_m=cfg.big_m)
        z0 = initial_guess(nlp)
        rng = np.random.default_rng(cfg.seed)
        worst = nlp_gradients_check(nlp, z0)["max"]
        z1 = z0 + 0.01 * rng.standard_normal(z0.size)
        worst = max(worst, nlp_gradients_check(nlp, z1)["max"])
        worst_all[name] = worst
    bad = {n: e for n, e in worst_all.items() if e >= 1e-5}
    _report(6, not bad,
            f"worst relative derivative error "
            f"{max(worst_all.values()):.2e} across {len(worst_all)} "
            f"scenarios (tolerance 1e-5)" if not bad else f"failures: {bad}")


# ------------------------------------------------------------- criterion 7

def test_criterion_7_momentum_identity():
    attitude_names = [n for n in BUNDLED_SCENARIOS
                      if load_bundled(n).kind == "attitude"]
    per = 1000 // len(attitude_names)
    worst = 0.0
    for name in attitude_names:
        cfg = load_bundled(name)
        _, meta = build_problem(cfg)
        params = meta["params"]
        att = cfg.attitude
        rng = np.random.default_rng(cfg.seed)
        n_w = params.wheel_axes.shape[1]
        for _ in range(per):
            angles = rng.uniform(att["angle_lower"], att["angle_upper"])
            omega = rng.uniform(-1e-3, 1e-3, size=3)
            nu = rng.uniform(att["wheel_lower"], att["wheel_upper"],
                             size=n_w)
            u = rng.uniform(-att["rate_cap"], att["rate_cap"], size=n_w)
            x = np.concatenate([angles, omega, nu])
            xdot = continuous_dynamics(params, x, u)
            h = wheel_momentum(params, x)
            lhs = (params.locked_inertia @ xdot[3:6]
                   + params.wheel_inertia * (params.wheel_axes @ xdot[6:]))
            rhs = srp_torque(params, *angles) - np.cross(omega, h)
            rel = float(np.max(np.abs(lhs - rhs))
                        / max(np.max(np.abs(rhs)), 1e-300))
            worst = max(worst, rel)
    ok = worst <= 1e-12
    _report(7, ok,
            f"momentum balance relative error {worst:.2e} over "
            f"{per * len(attitude_names)} random states (tolerance 1e-12)")


# ------------------------------------------------------------- criterion 8

def test_criterion_8_witness_feasibility():
    worst = 0.0
    for name in BUNDLED_SCENARIOS:
        cfg = load_bundled(name)
        problem, _ = build_problem(cfg)
        nlp = build_nlp(problem, theta=cfg.theta, big_m=cfg.big_m)
        cs = problem.control_set
        lo, hi = _draw_box(cs, problem.n_u)
        rng = np.random.default_rng(cfg.seed + 1)
        for _ in range(10):
            controls = np.array([cs.project(rng.uniform(lo, hi))
                                 for _ in range(cfg.horizon)])
            z = feasible_point(nlp, controls)
            worst = max(worst, float(max(0.0, -np.min(nlp.ineq(z)))))
    ok = worst <= 1e-9
    _report(8, ok,
            f"worst witness violation {worst:.2e} over 10 random control "
            f"sequences per scenario (tolerance 1e-9)")


# ------------------------------------------------------------- criterion 9

def test_criterion_9_reproduce_determinism(fig1_runs):
    out_a, out_b, _ = fig1_runs
    same_csv = (out_a / "trajectory.csv").read_bytes() == \
        (out_b / "trajectory.csv").read_bytes()
    same_record = (out_a / "record.json").read_bytes() == \
        (out_b / "record.json").read_bytes()
    _report(9, same_csv and same_record,
            "repeated reproduce runs emit byte-identical trajectory.csv "
            "and record.json" if same_csv and same_record else
            f"csv identical: {same_csv}, record identical: {same_record}")

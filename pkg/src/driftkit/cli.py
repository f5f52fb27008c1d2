"""Command line front end: solve, oracle, simulate, check, reproduce.

All outputs are deterministic for a fixed config and seed: records carry no
timestamps, CSV floats are printed with 17 significant digits, and SVG
rendering is pinned so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import (
    BUNDLED_SCENARIOS,
    ConfigError,
    ScenarioConfig,
    build_problem,
    load_bundled,
    parse_config,
    resolve_config,
)
from .core import DcocError, DcocProblem, Trajectory, simulate, time_before_exit
from .oracle import OracleOptions, _pad_witness, _validated, kappa_star_sweep
from .solver import (
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    SolverOptions,
    multi_start,
    solve,
)
from .transcription import (
    build_feasibility_nlp,
    build_nlp,
    feasible_point,
    extract,
    initial_guess,
    nlp_gradients_check,
    seeded_guess,
)
from .attitude import continuous_dynamics, srp_torque, wheel_momentum

FIGURE_ALIASES = {
    "fig1": "3rw_nominal",
    "fig2": "3rw_saturated",
    "fig3": "2rw_coordinated",
    "fig4": "2rw_restricted",
}

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % float(x)


def _group_of(row_name: str) -> str:
    return row_name.split("<=")[0].split(">=")[0]


def _stage_row_names(problem: DcocProblem, k: int) -> list[str]:
    names = problem.constraints[k].row_names
    if names is None:
        return [f"c{i}" for i in range(problem.constraints[k].n_rows)]
    return list(names)


def first_violations(problem: DcocProblem, traj: Trajectory,
                     dt: float, tol: float) -> dict:
    """Earliest violation time per constraint group, None if never violated."""
    out: dict[str, float | None] = {}
    order: list[str] = []
    for k, margins in enumerate(traj.stage_margins):
        for name, margin in zip(_stage_row_names(problem, k), margins):
            group = _group_of(name)
            if group not in out:
                out[group] = None
                order.append(group)
            if margin < -tol and out[group] is None:
                out[group] = k * dt
    return {g: out[g] for g in order}


@dataclass(frozen=True)
class RunRecord:
    """Deterministic summary of one solve/simulate run."""

    scenario: str
    config_hash: str
    command: str
    kappa: int
    status: str
    objective: float | None
    iterations: int
    kkt_residual: float | None
    max_violation: float | None
    theta: float
    big_m: float | None
    seed: int
    n_starts: int
    first_violation: dict
    files: dict
    pipeline: dict | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path: Path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def write_trajectory_csv(path: Path, problem: DcocProblem, traj: Trajectory,
                         dt: float, eps: np.ndarray | None):
    n_x = problem.n_x
    n_u = problem.n_u
    state_names = problem.state_names or tuple(
        f"x{i + 1}" for i in range(n_x))
    row_names = _stage_row_names(problem, 0)
    uniform = all(_stage_row_names(problem, k) == row_names
                  for k in range(len(traj.stage_margins)))
    header = ["k", "t", *state_names, *(f"u{j + 1}" for j in range(n_u)),
              "eps"]
    if uniform:
        header += [f"margin:{name}" for name in row_names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        n_steps = traj.controls.shape[0]
        for k in range(n_steps + 1):
            row = [str(k), _fmt(k * dt)]
            row += [_fmt(v) for v in traj.states[k]]
            if k < n_steps:
                row += [_fmt(v) for v in traj.controls[k]]
            else:
                row += [""] * n_u
            row.append("" if eps is None else _fmt(eps[k]))
            if uniform:
                row += [_fmt(v) for v in traj.stage_margins[k]]
            writer.writerow(row)


def read_trajectory_csv(path: Path) -> dict:
    """Inverse of the writer, for round-trip checks and downstream reuse."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    state_cols = [i for i, h in enumerate(header)
                  if i >= 2 and not h.startswith(("u", "eps", "margin:"))]
    control_cols = [i for i, h in enumerate(header)
                    if h.startswith("u") and not h.startswith("margin:")
                    and i >= 2 and h[1:].isdigit()]
    states = np.array([[float(r[i]) for i in state_cols] for r in body])
    controls = np.array([[float(r[i]) for i in control_cols]
                         for r in body[:-1]])
    eps_col = header.index("eps")
    eps_vals = [r[eps_col] for r in body]
    eps = (None if any(v == "" for v in eps_vals)
           else np.array([float(v) for v in eps_vals]))
    t = np.array([float(r[1]) for r in body])
    return {"t": t, "states": states, "controls": controls, "eps": eps,
            "header": header}


def _plot_run(out_dir: Path, cfg: ScenarioConfig, problem: DcocProblem,
              traj: Trajectory, eps: np.ndarray | None) -> dict:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "driftkit"

    dt = cfg.dt
    n_steps = traj.controls.shape[0]
    t = np.arange(n_steps + 1) * dt
    names = problem.state_names or tuple(
        f"x{i + 1}" for i in range(problem.n_x))
    files = {}

    if cfg.kind == "attitude":
        att = cfg.attitude
        fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
        for i, label in enumerate(names[:3]):
            axes[0].plot(t, traj.states[:, i], label=label)
            axes[0].axhline(att["angle_lower"][i], ls="--", lw=0.7, c="gray")
            axes[0].axhline(att["angle_upper"][i], ls="--", lw=0.7, c="gray")
        axes[0].set_ylabel("attitude [rad]")
        axes[0].legend(loc="upper left", fontsize=8)
        for i in range(3, 6):
            axes[1].plot(t, traj.states[:, i], label=names[i])
        axes[1].set_ylabel("rate [rad/s]")
        axes[1].legend(loc="upper left", fontsize=8)
        for i in range(6, problem.n_x):
            axes[2].plot(t, traj.states[:, i], label=names[i])
        axes[2].axhline(att["wheel_lower"], ls="--", lw=0.7, c="gray")
        axes[2].axhline(att["wheel_upper"], ls="--", lw=0.7, c="gray")
        axes[2].set_ylabel("wheel speed [rad/s]")
        axes[2].set_xlabel("t [s]")
        axes[2].legend(loc="upper left", fontsize=8)
    else:
        fig, ax = plt.subplots(figsize=(7, 4))
        for i, label in enumerate(names):
            ax.plot(t, traj.states[:, i], label=label)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("state")
        ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    states_path = out_dir / "states.svg"
    fig.savefig(states_path, metadata={"Date": None})
    plt.close(fig)
    files["states"] = states_path.name

    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for j in range(problem.n_u):
        axes[0].step(t[:-1], traj.controls[:, j], where="post",
                     label=f"u{j + 1}")
    axes[0].set_ylabel("control")
    axes[0].legend(loc="upper left", fontsize=8)
    if eps is not None:
        axes[1].plot(t, eps, label="eps")
        axes[1].legend(loc="upper left", fontsize=8)
    axes[1].set_ylabel("slack")
    axes[1].set_xlabel("t [s]")
    fig.tight_layout()
    controls_path = out_dir / "controls.svg"
    fig.savefig(controls_path, metadata={"Date": None})
    plt.close(fig)
    files["controls"] = controls_path.name
    return files


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    updates = {}
    for attr, flag in (("theta", "theta"), ("big_m", "big_m"),
                       ("seed", "seed"), ("n_starts", "starts")):
        value = getattr(args, flag, None)
        if value is not None:
            updates[attr] = value
    solver = dict(cfg.solver)
    for key in ("kkt_tol", "max_iter"):
        value = getattr(args, key, None)
        if value is not None:
            solver[key] = value
    if solver != cfg.solver:
        updates["solver"] = solver
    if not updates:
        return cfg
    return parse_config({**cfg.to_dict(), **updates})


def certify_prefix(problem: DcocProblem, controls: np.ndarray, m: int,
                   opts: SolverOptions, tol: float, seed: int,
                   retries: int = 2, sigma: float = 0.05):
    """Polish a control sequence into a hard-feasible m-step prefix.

    Solves the zero-cost feasibility program over the first m steps, seeded
    by the given controls (hold-padded past their end); failed attempts
    retry from projected perturbations. Returns the m-step control witness
    whose simulated trajectory keeps stages 0..m within ``tol``, or None.
    """
    nlp = build_feasibility_nlp(problem, m)
    hold = problem.control_set.project(np.zeros(problem.n_u))
    u0 = np.tile(hold, (m, 1))
    controls = np.asarray(controls, dtype=float).reshape(-1, problem.n_u)
    take = min(m, controls.shape[0])
    u0[:take] = controls[:take]

    cap = problem.control_set.one_norm_cap
    rng = np.random.default_rng(seed)
    for attempt in range(retries + 1):
        if attempt == 0:
            u_try = u0
        else:
            noise = sigma * rng.standard_normal(u0.shape) * (1.0 + np.abs(u0))
            u_try = np.array([problem.control_set.project(u)
                              for u in u0 + noise])
        z0 = np.zeros(nlp.n_vars)
        z0[nlp.slice_of("u")] = u_try.ravel()
        if cap:
            idx, cap_val = cap
            cols = list(idx)
            z0[nlp.slice_of("aux")] = np.abs(u_try[:, cols]).ravel()
            headroom = cap_val - float(
                np.max(np.sum(np.abs(u_try[:, cols]), axis=1)))
            margin = min(0.01 * cap_val, 0.5 * headroom) / len(cols)
            if margin > 0:
                z0[nlp.slice_of("aux")] += margin
        sol = solve(nlp, z0, opts)
        u_sol = sol.primal[nlp.slice_of("u")].reshape(m, problem.n_u)
        if _validated(problem, u_sol, m, tol):
            return u_sol
    return None


@dataclass
class PipelineResult:
    """Final artifact of a scenario solve plus per-phase diagnostics."""

    controls: np.ndarray
    slacks: np.ndarray
    trajectory: Trajectory
    kappa: int
    objective: float
    status: str
    iterations: int
    kkt_residual: float
    max_violation: float
    big_m: float
    pipeline: dict


def solve_pipeline(problem: DcocProblem, cfg: ScenarioConfig,
                   certify: bool = True) -> PipelineResult:
    """Weighted-slack solve hardened by feasibility certification.

    Phase A solves the weighted program from multiple starts. The exit time
    read off a weighted solution is fragile: slack values at the KKT
    tolerance mask stage margins a few parts in 1e8 past the feasibility
    cut. Phase B therefore re-solves the hard feasibility program at the
    achieved prefix length (certification), then keeps extending the
    certified prefix one step at a time while those solves keep succeeding
    (climbing), which also escapes local basins the weighted solve is prone
    to park in. Phase C re-solves the weighted program seeded from the
    longest certified witness so the trailing, necessarily-violating steps
    are still shaped by the weighted objective. The reported trajectory is
    the best of the three phases; every phase is deterministic in cfg.seed.
    """
    opts = SolverOptions(**cfg.solver)
    nlp = build_nlp(problem, theta=cfg.theta, big_m=cfg.big_m)
    sol = multi_start(nlp, initial_guess(nlp), opts, n_starts=cfg.n_starts,
                      seed=cfg.seed, sigma=cfg.sigma)
    ex = extract(nlp, sol.primal, tol_feas=cfg.tol_feas)
    pipe = {"kappa_weighted": ex.kappa, "status_weighted": sol.status,
            "kappa_certified": None, "climbs": 0, "phase": "weighted"}
    iterations = sol.iterations

    final_controls = ex.controls
    final_slacks = ex.slacks
    final_traj = ex.trajectory
    final_kappa = ex.kappa
    final_obj = float(ex.objective)
    status = sol.status
    kkt = float(sol.kkt_residual)
    maxviol = float(sol.max_violation)

    N = problem.horizon
    cert_cfg = {"enabled": True, "max_climbs": None, "full_shot": True,
                **cfg.certify}
    if certify and cert_cfg["enabled"]:
        # a loose read of the margins spots prefixes that only miss the
        # feasibility cut by solver-tolerance dust
        kappa_loose = time_before_exit(ex.trajectory, problem.constraints,
                                       1e-6)
        cert_tol = 0.1 * cfg.tol_feas
        witness = None
        m = int(max(ex.kappa, kappa_loose))
        floor = max(ex.kappa, 1)
        while m >= floor and m >= 1:
            witness = certify_prefix(problem, ex.controls, m, opts, cert_tol,
                                     seed=cfg.seed + 31 * m)
            if witness is not None:
                break
            m -= 1
        if witness is not None:
            max_climbs = cert_cfg["max_climbs"]
            if m < N and cert_cfg["full_shot"] and max_climbs is None:
                # one shot at the full horizon before stepwise climbing;
                # worth a bounded try because easy instances certify whole
                cheap = dataclasses.replace(opts,
                                            max_iter=min(120, opts.max_iter))
                w_full = certify_prefix(problem, witness, N, cheap, cert_tol,
                                        seed=cfg.seed + 31 * N, retries=0)
                if w_full is not None:
                    witness, m = w_full, N
            while m < N and (max_climbs is None
                             or pipe["climbs"] < max_climbs):
                w2 = certify_prefix(problem, witness, m + 1, opts, cert_tol,
                                    seed=cfg.seed + 31 * (m + 1))
                if w2 is None:
                    break
                witness, m = w2, m + 1
                pipe["climbs"] += 1
            pipe["kappa_certified"] = m

        if witness is not None and m > ex.kappa:
            full = _pad_witness(problem, witness, m)
            sol2 = solve(nlp, seeded_guess(nlp, full), opts)
            ex2 = extract(nlp, sol2.primal, tol_feas=cfg.tol_feas)
            iterations += sol2.iterations
            if ex2.kappa >= m:
                pipe["phase"] = "reseeded"
                final_controls, final_slacks = ex2.controls, ex2.slacks
                final_traj, final_kappa = ex2.trajectory, ex2.kappa
                final_obj = float(ex2.objective)
                status, kkt = sol2.status, float(sol2.kkt_residual)
                maxviol = float(sol2.max_violation)
            else:
                # keep the certified prefix verbatim; the reseeded solve
                # still shapes the post-exit tail
                pipe["phase"] = "certified-witness"
                composed = full.copy()
                composed[m:] = ex2.controls[m:]
                zc = feasible_point(nlp, composed)
                exc = extract(nlp, zc, tol_feas=cfg.tol_feas)
                final_controls, final_slacks = composed, \
                    zc[nlp.slice_of("eps")].copy()
                final_traj, final_kappa = exc.trajectory, exc.kappa
                final_obj = float(exc.objective)
                status, kkt = sol2.status, float(sol2.kkt_residual)
                maxviol = float(max(0.0, -min(
                    float(np.min(mm)) for mm in exc.trajectory.stage_margins)))

    return PipelineResult(
        controls=final_controls, slacks=final_slacks, trajectory=final_traj,
        kappa=final_kappa, objective=final_obj, status=status,
        iterations=iterations, kkt_residual=kkt, max_violation=maxviol,
        big_m=float(nlp.meta["big_m"]), pipeline=pipe)


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path,
                 write_plots: bool = True) -> RunRecord:
    """Solve the scenario's slack program and emit csv/record/plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem, _ = build_problem(cfg)
    res = solve_pipeline(problem, cfg)

    csv_path = out / "trajectory.csv"
    write_trajectory_csv(csv_path, problem, res.trajectory, cfg.dt,
                         res.slacks)
    files = {"trajectory": csv_path.name, "record": "record.json"}
    if write_plots:
        files.update(_plot_run(out, cfg, problem, res.trajectory,
                               res.slacks))
    record = RunRecord(
        scenario=cfg.name,
        config_hash=cfg.config_hash(),
        command="solve",
        kappa=res.kappa,
        status=res.status,
        objective=res.objective,
        iterations=res.iterations,
        kkt_residual=res.kkt_residual,
        max_violation=res.max_violation,
        theta=cfg.theta,
        big_m=res.big_m,
        seed=cfg.seed,
        n_starts=cfg.n_starts,
        first_violation=first_violations(problem, res.trajectory, cfg.dt,
                                         cfg.tol_feas),
        pipeline=res.pipeline,
        files=files,
    )
    record.save(out / "record.json")
    return record


def run_oracle(cfg: ScenarioConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem, meta = build_problem(cfg)
    options = OracleOptions(
        linear=bool(meta.get("linear_dynamics")),
        n_starts=max(8, cfg.n_starts),
        seed=cfg.seed,
        tol_feas=cfg.tol_feas,
    )
    report = kappa_star_sweep(problem, options)
    payload = {
        "scenario": cfg.name,
        "config_hash": cfg.config_hash(),
        "kappa_star": report.kappa_star,
        "method": report.method,
        "exact": report.exact,
        "confidence": report.confidence,
        "verdicts": list(report.verdicts),
    }
    with open(out / "oracle.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload


def run_simulate(cfg: ScenarioConfig, out_dir: str | Path) -> RunRecord:
    """Roll the zero-effort hold control forward and report what it earns."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem, _ = build_problem(cfg)
    hold = problem.control_set.project(np.zeros(problem.n_u))
    controls = np.tile(hold, (cfg.horizon, 1))
    traj = simulate(problem, controls)
    kappa = time_before_exit(traj, problem.constraints, cfg.tol_feas)
    csv_path = out / "trajectory.csv"
    write_trajectory_csv(csv_path, problem, traj, cfg.dt, eps=None)
    record = RunRecord(
        scenario=cfg.name,
        config_hash=cfg.config_hash(),
        command="simulate",
        kappa=kappa,
        status="simulated",
        objective=None,
        iterations=0,
        kkt_residual=None,
        max_violation=None,
        theta=cfg.theta,
        big_m=None,
        seed=cfg.seed,
        n_starts=1,
        first_violation=first_violations(problem, traj, cfg.dt, cfg.tol_feas),
        files={"trajectory": csv_path.name, "record": "record.json"},
    )
    record.save(out / "record.json")
    return record


def _check_momentum(cfg: ScenarioConfig, n_samples: int = 200) -> float:
    problem, meta = build_problem(cfg)
    params = meta["params"]
    att = cfg.attitude
    rng = np.random.default_rng(cfg.seed)
    n_w = params.wheel_axes.shape[1]
    worst = 0.0
    for _ in range(n_samples):
        angles = rng.uniform(att["angle_lower"], att["angle_upper"])
        omega = rng.uniform(-1e-3, 1e-3, size=3)
        nu = rng.uniform(att["wheel_lower"], att["wheel_upper"], size=n_w)
        u = rng.uniform(-att["rate_cap"], att["rate_cap"], size=n_w)
        x = np.concatenate([angles, omega, nu])
        xdot = continuous_dynamics(params, x, u)
        h = wheel_momentum(params, x)
        lhs = (params.locked_inertia @ xdot[3:6]
               + params.wheel_inertia * (params.wheel_axes @ xdot[6:]))
        rhs = (srp_torque(params, *angles) - np.cross(omega, h))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def _draw_box(control_set, n_u: int) -> tuple[np.ndarray, np.ndarray]:
    """Finite sampling box for random admissible-after-projection draws."""
    span = 1.0
    if control_set.one_norm_cap is not None:
        span = control_set.one_norm_cap[1]
    lo = np.full(n_u, -span)
    hi = np.full(n_u, span)
    if control_set.lower is not None:
        lo = np.where(np.isfinite(control_set.lower), control_set.lower, lo)
    if control_set.upper is not None:
        hi = np.where(np.isfinite(control_set.upper), control_set.upper, hi)
    return lo, hi


def _check_witness(cfg: ScenarioConfig, n_draws: int = 3) -> float:
    problem, _ = build_problem(cfg)
    nlp = build_nlp(problem, theta=cfg.theta, big_m=cfg.big_m)
    rng = np.random.default_rng(cfg.seed + 1)
    cs = problem.control_set
    lo, hi = _draw_box(cs, problem.n_u)
    worst = 0.0
    for _ in range(n_draws):
        controls = np.array([cs.project(rng.uniform(lo, hi))
                             for _ in range(cfg.horizon)])
        z = feasible_point(nlp, controls)
        worst = max(worst, float(max(0.0, -np.min(nlp.ineq(z)))))
    return worst


def run_check(names: list[str] | None = None) -> list[dict]:
    """Structural self-checks on bundled (or given) scenarios."""
    results = []
    for name in names or BUNDLED_SCENARIOS:
        cfg = resolve_config(name)

        roundtrip = parse_config(cfg.to_dict())
        results.append({
            "scenario": cfg.name, "check": "config-roundtrip",
            "ok": roundtrip.to_dict() == cfg.to_dict()
            and roundtrip.config_hash() == cfg.config_hash(),
            "value": cfg.config_hash()[:12],
        })

        problem, _ = build_problem(cfg)
        nlp = build_nlp(problem, theta=cfg.theta, big_m=cfg.big_m)
        z0 = initial_guess(nlp)
        rng = np.random.default_rng(cfg.seed)
        worst = nlp_gradients_check(nlp, z0)["max"]
        z1 = z0 + 0.01 * rng.standard_normal(z0.size)
        worst = max(worst, nlp_gradients_check(nlp, z1)["max"])
        results.append({"scenario": cfg.name, "check": "gradients",
                        "ok": worst < 1e-5, "value": worst})

        if cfg.kind == "attitude":
            err = _check_momentum(cfg)
            results.append({"scenario": cfg.name, "check": "momentum",
                            "ok": err <= 1e-12, "value": err})

        worst = _check_witness(cfg)
        results.append({"scenario": cfg.name, "check": "witness",
                        "ok": worst <= 1e-9, "value": worst})
    return results


def _cmd_solve(args) -> int:
    cfg = _apply_overrides(resolve_config(args.scenario), args)
    out = args.out or f"runs/{cfg.name}"
    record = run_scenario(cfg, out)
    print(f"{cfg.name}: kappa={record.kappa} status={record.status} "
          f"objective={record.objective:.6e} "
          f"kkt={record.kkt_residual:.3e} -> {out}")
    return 0 if record.status in (STATUS_OPTIMAL, STATUS_MAX_ITER) else 1


def _cmd_oracle(args) -> int:
    cfg = _apply_overrides(resolve_config(args.scenario), args)
    out = args.out or f"runs/{cfg.name}"
    payload = run_oracle(cfg, out)
    print(f"{cfg.name}: kappa_star={payload['kappa_star']} "
          f"({payload['confidence']}) -> {out}/oracle.json")
    return 0


def _cmd_simulate(args) -> int:
    cfg = resolve_config(args.scenario)
    out = args.out or f"runs/{cfg.name}"
    record = run_simulate(cfg, out)
    print(f"{cfg.name}: hold control stays inside for kappa={record.kappa} "
          f"steps -> {out}")
    return 0


def _cmd_check(args) -> int:
    results = run_check(args.scenarios or None)
    failed = 0
    for res in results:
        mark = "pass" if res["ok"] else "FAIL"
        value = res["value"]
        shown = value if isinstance(value, str) else f"{value:.3e}"
        print(f"{res['scenario']}: {res['check']}: {mark} ({shown})")
        failed += 0 if res["ok"] else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def _cmd_reproduce(args) -> int:
    cfg = load_bundled(FIGURE_ALIASES[args.figure])
    out = args.out or f"runs/{args.figure}"
    record = run_scenario(cfg, out)
    print(f"{args.figure} ({cfg.name}): kappa={record.kappa} "
          f"status={record.status} -> {out}")
    return 0 if record.status in (STATUS_OPTIMAL, STATUS_MAX_ITER) else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftkit",
        description="Maximize time before exit from time-varying "
                    "constraint sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, oracle=False):
        p.add_argument("scenario",
                       help="bundled scenario name or config file path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--starts", type=int)
        if not oracle:
            p.add_argument("--theta", type=float)
            p.add_argument("--big-m", dest="big_m", type=float)
            p.add_argument("--kkt-tol", dest="kkt_tol", type=float)
            p.add_argument("--max-iter", dest="max_iter", type=int)

    p = sub.add_parser("solve", help="solve the weighted-slack program")
    common(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("oracle", help="sweep for the exact or certified "
                                      "best time before exit")
    common(p, oracle=True)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("simulate", help="roll the projected zero control "
                                        "forward")
    p.add_argument("scenario")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("check", help="run structural self-checks")
    p.add_argument("scenarios", nargs="*",
                   help="subset of scenarios (default: all bundled)")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("reproduce", help="re-run a bundled study case")
    p.add_argument("figure", choices=sorted(FIGURE_ALIASES))
    p.add_argument("--out")
    p.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DcocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

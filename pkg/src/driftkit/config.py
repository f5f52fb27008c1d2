"""Scenario configuration: JSON schema, validation, and problem assembly.

A scenario file fully determines a run: the plant (attitude spacecraft or an
affine system), stage sets, horizon, transcription parameters, and solver
seeds. Loading rejects unknown keys so typos fail loudly instead of being
silently ignored, and save -> load round-trips exactly.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attitude import AttitudeParams, attitude_problem
from .core import ControlSet, DcocError, DcocProblem, box_constraint

SCHEMA_VERSION = 1

BUNDLED_SCENARIOS = (
    "3rw_nominal",
    "3rw_saturated",
    "2rw_coordinated",
    "2rw_restricted",
    "double_integrator",
    "scalar_drift",
)

_TOP_KEYS = {"schema", "name", "kind", "horizon", "dt", "theta", "big_m",
             "seed", "n_starts", "sigma", "tol_feas", "solver", "certify",
             "attitude", "linear"}
_SOLVER_KEYS = {"kkt_tol", "max_iter", "max_backtracks", "qp_max_iter"}
_CERTIFY_KEYS = {"enabled", "max_climbs", "full_shot"}
_ATTITUDE_KEYS = {"inertia_diag", "wheel_inertia", "wheel_axes_cols", "dims",
                  "com_offset", "solar_flux", "diffuse_fraction",
                  "sun_inertial", "angle_lower", "angle_upper", "wheel_lower",
                  "wheel_upper", "rate_cap", "wheel_bound_mode", "x0"}
_LINEAR_KEYS = {"A", "B", "c", "state_lower", "state_upper", "control_lower",
                "control_upper", "control_one_norm_cap", "x0", "state_names"}


class ConfigError(DcocError):
    """Malformed or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description; ``raw`` is the canonical dict form."""

    name: str
    kind: str
    horizon: int
    dt: float
    theta: float
    big_m: float | None
    seed: int
    n_starts: int
    sigma: float
    tol_feas: float
    solver: dict = field(default_factory=dict)
    certify: dict = field(default_factory=dict)
    attitude: dict | None = None
    linear: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "kind": self.kind,
            "horizon": self.horizon,
            "dt": self.dt,
            "theta": self.theta,
            "big_m": self.big_m,
            "seed": self.seed,
            "n_starts": self.n_starts,
            "sigma": self.sigma,
            "tol_feas": self.tol_feas,
            "solver": dict(self.solver),
            "certify": dict(self.certify),
        }
        if self.attitude is not None:
            out["attitude"] = json.loads(json.dumps(self.attitude))
        if self.linear is not None:
            out["linear"] = json.loads(json.dumps(self.linear))
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def parse_config(data: dict) -> ScenarioConfig:
    _require(isinstance(data, dict), "config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    _require(data.get("schema") == SCHEMA_VERSION,
             f"config schema must be {SCHEMA_VERSION}, "
             f"got {data.get('schema')!r}")
    for key in ("name", "kind", "horizon"):
        _require(key in data, f"config is missing required key {key!r}")
    kind = data["kind"]
    _require(kind in ("attitude", "linear"),
             f"kind must be 'attitude' or 'linear', got {kind!r}")

    solver = data.get("solver", {})
    _require(isinstance(solver, dict), "solver section must be an object")
    bad = set(solver) - _SOLVER_KEYS
    _require(not bad, f"unknown solver keys: {sorted(bad)}")

    certify = data.get("certify", {})
    _require(isinstance(certify, dict), "certify section must be an object")
    bad = set(certify) - _CERTIFY_KEYS
    _require(not bad, f"unknown certify keys: {sorted(bad)}")
    _require(isinstance(certify.get("enabled", True), bool),
             "certify.enabled must be a boolean")
    _require(isinstance(certify.get("full_shot", True), bool),
             "certify.full_shot must be a boolean")
    climbs = certify.get("max_climbs")
    _require(climbs is None or (isinstance(climbs, int) and climbs >= 0),
             "certify.max_climbs must be null or a nonnegative integer")

    section = data.get(kind)
    _require(isinstance(section, dict),
             f"kind {kind!r} requires a {kind!r} section")
    allowed = _ATTITUDE_KEYS if kind == "attitude" else _LINEAR_KEYS
    bad = set(section) - allowed
    _require(not bad, f"unknown {kind} keys: {sorted(bad)}")
    other = "linear" if kind == "attitude" else "attitude"
    _require(data.get(other) is None,
             f"config of kind {kind!r} must not carry a {other!r} section")

    cfg = ScenarioConfig(
        name=str(data["name"]),
        kind=kind,
        horizon=int(data["horizon"]),
        dt=float(data.get("dt", 1.0)),
        theta=float(data.get("theta", 1.1)),
        big_m=(None if data.get("big_m") is None else float(data["big_m"])),
        seed=int(data.get("seed", 0)),
        n_starts=int(data.get("n_starts", 1)),
        sigma=float(data.get("sigma", 0.1)),
        tol_feas=float(data.get("tol_feas", 1e-8)),
        solver=solver,
        certify=certify,
        attitude=section if kind == "attitude" else None,
        linear=section if kind == "linear" else None,
    )
    _require(cfg.horizon >= 1, "horizon must be >= 1")
    _require(cfg.dt > 0, "dt must be positive")
    _require(cfg.theta > 1, "theta must exceed 1")
    _require(cfg.big_m is None or cfg.big_m > 0, "big_m must be positive")
    _require(cfg.n_starts >= 1, "n_starts must be >= 1")
    _require(cfg.tol_feas > 0, "tol_feas must be positive")
    # building catches deeper inconsistencies (dims, bounds, x0 membership)
    try:
        build_problem(cfg)
    except ConfigError:
        raise
    except (DcocError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid scenario {cfg.name!r}: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def save_config(cfg: ScenarioConfig, path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundled(name: str) -> ScenarioConfig:
    if name not in BUNDLED_SCENARIOS:
        raise ConfigError(f"unknown bundled scenario {name!r}; "
                          f"choose from {', '.join(BUNDLED_SCENARIOS)}")
    ref = importlib.resources.files("driftkit.data") / f"{name}.json"
    return parse_config(json.loads(ref.read_text(encoding="utf-8")))


def resolve_config(name_or_path: str) -> ScenarioConfig:
    """Bundled scenario name, else a path to a config file."""
    if name_or_path in BUNDLED_SCENARIOS:
        return load_bundled(name_or_path)
    if Path(name_or_path).exists():
        return load_config(name_or_path)
    raise ConfigError(f"{name_or_path!r} is neither a bundled scenario "
                      "nor an existing config file")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def build_problem(cfg: ScenarioConfig) -> tuple[DcocProblem, dict]:
    """Instantiate the problem plus presentation metadata (names, groups)."""
    if cfg.kind == "attitude":
        a = cfg.attitude
        cols = [_unit(np.asarray(c, dtype=float))
                for c in a["wheel_axes_cols"]]
        params = AttitudeParams(
            inertia=np.diag(np.asarray(a["inertia_diag"], dtype=float)),
            wheel_inertia=float(a["wheel_inertia"]),
            wheel_axes=np.column_stack(cols),
            dims=np.asarray(a["dims"], dtype=float),
            com_offset=np.asarray(a["com_offset"], dtype=float),
            solar_flux=float(a["solar_flux"]),
            diffuse_fraction=float(a["diffuse_fraction"]),
            sun_inertial=_unit(np.asarray(a["sun_inertial"], dtype=float)),
        )
        problem = attitude_problem(
            params=params,
            horizon=cfg.horizon,
            dt=cfg.dt,
            x0=np.asarray(a["x0"], dtype=float),
            angle_lower=np.asarray(a["angle_lower"], dtype=float),
            angle_upper=np.asarray(a["angle_upper"], dtype=float),
            wheel_lower=float(a["wheel_lower"]),
            wheel_upper=float(a["wheel_upper"]),
            rate_cap=float(a["rate_cap"]),
            wheel_bound_mode=a.get("wheel_bound_mode", "per-wheel"),
            tol_feas=cfg.tol_feas,
        )
        meta = {"params": params, "linear_dynamics": False}
        return problem, meta

    lin = cfg.linear
    A = np.atleast_2d(np.asarray(lin["A"], dtype=float))
    n_x = A.shape[0]
    _require(A.shape == (n_x, n_x), "A must be square")
    B = np.atleast_2d(np.asarray(lin["B"], dtype=float))
    _require(B.shape[0] == n_x, "B must have one row per state")
    n_u = B.shape[1]
    c_vec = np.asarray(lin.get("c", [0.0] * n_x), dtype=float)
    _require(c_vec.shape == (n_x,), "c must have one entry per state")

    def _bound(values, default):
        if values is None:
            return np.full(n_x, default)
        out = np.array([default if v is None else float(v) for v in values])
        _require(out.size == n_x, "state bounds must match the state size")
        return out

    lower = _bound(lin.get("state_lower"), -np.inf)
    upper = _bound(lin.get("state_upper"), np.inf)
    names = tuple(lin.get("state_names") or
                  (f"x{i + 1}" for i in range(n_x)))
    constraint = box_constraint(lower, upper, names=names)

    cap_raw = lin.get("control_one_norm_cap")
    cap = None
    if cap_raw is not None:
        cap = (tuple(int(i) for i in cap_raw["indices"]),
               float(cap_raw["cap"]))
    u_lower = lin.get("control_lower")
    u_upper = lin.get("control_upper")
    control_set = ControlSet(
        dim=n_u,
        lower=None if u_lower is None else np.array(
            [-np.inf if v is None else float(v) for v in u_lower]),
        upper=None if u_upper is None else np.array(
            [np.inf if v is None else float(v) for v in u_upper]),
        one_norm_cap=cap,
    )
    problem = DcocProblem(
        dynamics=lambda x, u: A @ x + B @ u + c_vec,
        horizon=cfg.horizon,
        constraints=tuple([constraint] * (cfg.horizon + 1)),
        control_set=control_set,
        x0=np.asarray(lin["x0"], dtype=float),
        dynamics_jacobian=lambda x, u: (A, B),
        tol_feas=cfg.tol_feas,
        state_names=names,
    )
    meta = {"linear_dynamics": True, "A": A, "B": B, "c": c_vec}
    return problem, meta

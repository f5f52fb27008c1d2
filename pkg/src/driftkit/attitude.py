"""Spacecraft attitude dynamics with reaction wheels and radiation-pressure
disturbance torques.

State layout: [phi, theta, psi, w1, w2, w3, nu_1 .. nu_p] with 3-2-1 Euler
angles (rad), body rates (rad/s), and wheel speeds (rad/s). Controls are the
wheel accelerations nu_dot (rad/s^2). The torque-free locked inertia
Jbar = J + Jw * W @ W.T treats wheel rotors as part of the rigid body for the
gyroscopic terms, while wheel accelerations exchange momentum internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import ControlSet, DcocError, DcocProblem, StageConstraint

SPEED_OF_LIGHT = 299792458.0

GIMBAL_MARGIN = 1e-6


class GimbalSingularityError(DcocError):
    """Pitch angle too close to +-pi/2 for the Euler kinematics."""


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


@dataclass(frozen=True)
class AttitudeParams:
    """Physical parameters of the spacecraft and its environment.

    Defaults describe a box-shaped bus with three orthogonal reaction wheels.
    ``wheel_axes`` holds one unit spin axis per column. ``com_offset`` is the
    center-of-mass position relative to the geometric center of the box, in
    body axes, which is what makes the radiation torque nonzero.
    """

    inertia: np.ndarray = None
    wheel_inertia: float = 0.043
    wheel_axes: np.ndarray = None
    dims: np.ndarray = None
    com_offset: np.ndarray = None
    solar_flux: float = 1367.0
    diffuse_fraction: float = 0.2
    sun_inertial: np.ndarray = None

    def __post_init__(self):
        inertia = (np.diag([430.0, 1210.0, 1300.0])
                   if self.inertia is None else np.asarray(self.inertia, float))
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(inertia) <= 0):
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", inertia)

        axes = (np.eye(3) if self.wheel_axes is None
                else np.atleast_2d(np.asarray(self.wheel_axes, float)))
        if axes.ndim != 2 or axes.shape[0] != 3 or axes.shape[1] < 1:
            raise ValueError("wheel_axes must be 3 x p with p >= 1")
        norms = np.linalg.norm(axes, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("wheel spin axes must be unit vectors")
        object.__setattr__(self, "wheel_axes", axes)

        if self.wheel_inertia <= 0:
            raise ValueError("wheel inertia must be positive")

        dims = (np.array([2.0, 2.5, 5.0]) if self.dims is None
                else np.asarray(self.dims, float))
        if dims.shape != (3,) or np.any(dims <= 0):
            raise ValueError("dims must be three positive lengths")
        object.__setattr__(self, "dims", dims)

        com = (np.array([0.0, 0.5, 0.0]) if self.com_offset is None
               else np.asarray(self.com_offset, float))
        if com.shape != (3,):
            raise ValueError("com_offset must be a 3-vector")
        object.__setattr__(self, "com_offset", com)

        if self.solar_flux < 0:
            raise ValueError("solar flux must be nonnegative")
        if not 0.0 <= self.diffuse_fraction <= 1.0:
            raise ValueError("diffuse fraction must lie in [0, 1]")

        sun = (np.ones(3) / np.sqrt(3.0) if self.sun_inertial is None
               else np.asarray(self.sun_inertial, float))
        if sun.shape != (3,) or abs(np.linalg.norm(sun) - 1.0) > 1e-9:
            raise ValueError("sun_inertial must be a unit 3-vector")
        object.__setattr__(self, "sun_inertial", sun)

    @property
    def n_wheels(self) -> int:
        return self.wheel_axes.shape[1]

    @property
    def n_x(self) -> int:
        return 6 + self.n_wheels

    @cached_property
    def locked_inertia(self) -> np.ndarray:
        W = self.wheel_axes
        return self.inertia + self.wheel_inertia * (W @ W.T)

    @cached_property
    def locked_inertia_inv(self) -> np.ndarray:
        return np.linalg.inv(self.locked_inertia)

    @cached_property
    def faces(self) -> tuple[tuple[np.ndarray, float, np.ndarray], ...]:
        """(outward normal, area, lever arm about the CoM) per box face."""
        Lx, Ly, Lz = self.dims
        areas = (Ly * Lz, Lx * Lz, Lx * Ly)
        out = []
        for axis in range(3):
            for sgn in (1.0, -1.0):
                n = np.zeros(3)
                n[axis] = sgn
                center = np.zeros(3)
                center[axis] = sgn * self.dims[axis] / 2.0
                out.append((n, areas[axis], center - self.com_offset))
        return tuple(out)


def euler_kinematics_matrix(phi: float, theta: float) -> np.ndarray:
    """Matrix K with [phi_dot, theta_dot, psi_dot] = K @ omega (3-2-1 set)."""
    ct = np.cos(theta)
    if abs(ct) <= GIMBAL_MARGIN:
        raise GimbalSingularityError(
            f"cos(theta) = {ct:.2e} within {GIMBAL_MARGIN:.0e} of gimbal lock")
    sp, cp = np.sin(phi), np.cos(phi)
    tt = np.tan(theta)
    return np.array([[1.0, sp * tt, cp * tt],
                     [0.0, cp, -sp],
                     [0.0, sp / ct, cp / ct]])


def _kinematics_matrix_partials(phi: float, theta: float
                                ) -> tuple[np.ndarray, np.ndarray]:
    """dK/dphi and dK/dtheta for the matrix above."""
    ct = np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    tt = np.tan(theta)
    st = np.sin(theta)
    dK_dphi = np.array([[0.0, cp * tt, -sp * tt],
                        [0.0, -sp, -cp],
                        [0.0, cp / ct, -sp / ct]])
    sec2 = 1.0 / ct ** 2
    dK_dtheta = np.array([[0.0, sp * sec2, cp * sec2],
                          [0.0, 0.0, 0.0],
                          [0.0, sp * st * sec2, cp * st * sec2]])
    return dK_dphi, dK_dtheta


def attitude_dcm(phi: float, theta: float, psi: float) -> np.ndarray:
    """Direction cosine matrix taking inertial vectors into body axes."""
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cs, ss = np.cos(psi), np.sin(psi)
    Cx = np.array([[1, 0, 0], [0, cp, sp], [0, -sp, cp]])
    Cy = np.array([[ct, 0, -st], [0, 1, 0], [st, 0, ct]])
    Cz = np.array([[cs, ss, 0], [-ss, cs, 0], [0, 0, 1]])
    return Cx @ Cy @ Cz


def _dcm_partials(phi: float, theta: float, psi: float
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cs, ss = np.cos(psi), np.sin(psi)
    Cx = np.array([[1, 0, 0], [0, cp, sp], [0, -sp, cp]])
    Cy = np.array([[ct, 0, -st], [0, 1, 0], [st, 0, ct]])
    Cz = np.array([[cs, ss, 0], [-ss, cs, 0], [0, 0, 1]])
    dCx = np.array([[0, 0, 0], [0, -sp, cp], [0, -cp, -sp]])
    dCy = np.array([[-st, 0, -ct], [0, 0, 0], [ct, 0, -st]])
    dCz = np.array([[-ss, cs, 0], [-cs, -ss, 0], [0, 0, 0]])
    return dCx @ Cy @ Cz, Cx @ dCy @ Cz, Cx @ Cy @ dCz


def _srp_force_of_sun(params: AttitudeParams, s_body: np.ndarray,
                      normal: np.ndarray, area: float) -> np.ndarray:
    pressure = params.solar_flux / SPEED_OF_LIGHT
    cd = params.diffuse_fraction
    ca = float(normal @ s_body)
    return -pressure * area * ca * ((1.0 - cd) * s_body
                                    + (2.0 / 3.0) * cd * normal)


def srp_torque_of_sun_body(params: AttitudeParams, s_body: np.ndarray
                           ) -> np.ndarray:
    """Radiation torque for a given body-frame sun direction.

    Flat-plate model per face: only faces with the sun above their horizon
    contribute, each with an absorbed/diffuse force along the sun line plus a
    diffuse-reemission component along the outward normal.
    """
    tau = np.zeros(3)
    for normal, area, lever in params.faces:
        if float(normal @ s_body) > 0.0:
            tau += np.cross(lever,
                            _srp_force_of_sun(params, s_body, normal, area))
    return tau


def _srp_torque_jac_sun(params: AttitudeParams, s_body: np.ndarray
                        ) -> np.ndarray:
    """d(torque)/d(s_body) holding the illuminated face set fixed."""
    pressure = params.solar_flux / SPEED_OF_LIGHT
    cd = params.diffuse_fraction
    jac = np.zeros((3, 3))
    eye = np.eye(3)
    for normal, area, lever in params.faces:
        ca = float(normal @ s_body)
        if ca <= 0.0:
            continue
        dF = -pressure * area * (
            (1.0 - cd) * (ca * eye + np.outer(s_body, normal))
            + (2.0 / 3.0) * cd * np.outer(normal, normal))
        jac += _skew(lever) @ dF
    return jac


def srp_torque(params: AttitudeParams, phi: float, theta: float, psi: float
               ) -> np.ndarray:
    """Radiation torque in body axes at the given attitude."""
    s_body = attitude_dcm(phi, theta, psi) @ params.sun_inertial
    return srp_torque_of_sun_body(params, s_body)


def _srp_torque_angle_jacobian(params: AttitudeParams, phi: float,
                               theta: float, psi: float) -> np.ndarray:
    s_body = attitude_dcm(phi, theta, psi) @ params.sun_inertial
    dtau_ds = _srp_torque_jac_sun(params, s_body)
    cols = [dC @ params.sun_inertial
            for dC in _dcm_partials(phi, theta, psi)]
    return dtau_ds @ np.column_stack(cols)


def wheel_momentum(params: AttitudeParams, x: np.ndarray) -> np.ndarray:
    """Total angular momentum Jbar w + Jw W nu in body axes."""
    omega = x[3:6]
    nu = x[6:]
    return (params.locked_inertia @ omega
            + params.wheel_inertia * (params.wheel_axes @ nu))


def continuous_dynamics(params: AttitudeParams, x: np.ndarray,
                        u: np.ndarray) -> np.ndarray:
    """Time derivative of [angles, rates, wheel speeds]."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    phi, theta, psi = x[0], x[1], x[2]
    omega = x[3:6]
    K = euler_kinematics_matrix(phi, theta)
    h = wheel_momentum(params, x)
    tau = srp_torque(params, phi, theta, psi)
    Jw_W = params.wheel_inertia * params.wheel_axes
    omega_dot = params.locked_inertia_inv @ (
        tau - np.cross(omega, h) - Jw_W @ u)
    return np.concatenate([K @ omega, omega_dot, u])


def continuous_jacobians(params: AttitudeParams, x: np.ndarray,
                         u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic d(xdot)/dx and d(xdot)/du of ``continuous_dynamics``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    p = params.n_wheels
    n = 6 + p
    phi, theta, psi = x[0], x[1], x[2]
    omega = x[3:6]
    K = euler_kinematics_matrix(phi, theta)
    dK_dphi, dK_dtheta = _kinematics_matrix_partials(phi, theta)
    h = wheel_momentum(params, x)
    Jbar_inv = params.locked_inertia_inv
    Jw_W = params.wheel_inertia * params.wheel_axes

    A = np.zeros((n, n))
    # angle rows
    A[0:3, 0] = dK_dphi @ omega
    A[0:3, 1] = dK_dtheta @ omega
    A[0:3, 3:6] = K
    # rate rows: torque balance differentiated
    A[3:6, 0:3] = Jbar_inv @ _srp_torque_angle_jacobian(params, phi, theta,
                                                        psi)
    A[3:6, 3:6] = Jbar_inv @ (_skew(h) - _skew(omega) @ params.locked_inertia)
    A[3:6, 6:] = -Jbar_inv @ _skew(omega) @ Jw_W

    B = np.zeros((n, p))
    B[3:6, :] = -Jbar_inv @ Jw_W
    B[6:, :] = np.eye(p)
    return A, B


def discretize_step(params: AttitudeParams, x: np.ndarray, u: np.ndarray,
                    dt: float) -> np.ndarray:
    """One explicit-Euler step of the continuous dynamics."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    return x + dt * continuous_dynamics(params, x, u)


def discrete_jacobians(params: AttitudeParams, x: np.ndarray, u: np.ndarray,
                       dt: float) -> tuple[np.ndarray, np.ndarray]:
    """d(x_next)/dx and d(x_next)/du of the explicit-Euler step."""
    A_c, B_c = continuous_jacobians(params, x, u)
    return np.eye(params.n_x) + dt * A_c, dt * B_c


def attitude_problem(params: AttitudeParams,
                     horizon: int,
                     dt: float,
                     x0: np.ndarray,
                     angle_lower: np.ndarray,
                     angle_upper: np.ndarray,
                     wheel_lower: float,
                     wheel_upper: float,
                     rate_cap: float,
                     wheel_bound_mode: str = "per-wheel",
                     tol_feas: float = 1e-8) -> DcocProblem:
    """Assemble the drift counteraction problem for this spacecraft.

    Stage sets box the Euler angles and keep wheel speeds inside
    [wheel_lower, wheel_upper]; both are softenable state constraints. The
    control set is the hard 1-norm ball sum(|nu_dot|) <= rate_cap.

    wheel_bound_mode selects between one bound pair per wheel ("per-wheel")
    and a single pair on the summed magnitude sum(|nu_i|) ("one-norm").
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = params.n_wheels
    angle_lower = np.asarray(angle_lower, dtype=float)
    angle_upper = np.asarray(angle_upper, dtype=float)
    if angle_lower.shape != (3,) or angle_upper.shape != (3,):
        raise ValueError("angle bounds must be 3-vectors")
    if not wheel_lower < wheel_upper:
        raise ValueError("wheel speed band is empty")
    if wheel_bound_mode not in ("per-wheel", "one-norm"):
        raise ValueError(f"unknown wheel_bound_mode {wheel_bound_mode!r}")

    angle_names = ("phi", "theta", "psi")
    rows = []
    bounds = []
    names = []
    for i in range(3):
        e = np.zeros(6 + p)
        e[i] = 1.0
        rows.append(e.copy())
        bounds.append(angle_upper[i])
        names.append(f"{angle_names[i]}<=hi")
        rows.append(-e)
        bounds.append(-angle_lower[i])
        names.append(f"{angle_names[i]}>=lo")
    lin_rows = np.array(rows)
    lin_bounds = np.array(bounds)

    if wheel_bound_mode == "per-wheel":
        extra = []
        for j in range(p):
            e = np.zeros(6 + p)
            e[6 + j] = 1.0
            extra.append(e.copy())
            lin_bounds = np.append(lin_bounds, wheel_upper)
            names.append(f"nu{j + 1}<=hi")
            extra.append(-e)
            lin_bounds = np.append(lin_bounds, -wheel_lower)
            names.append(f"nu{j + 1}>=lo")
        lin_rows = np.vstack([lin_rows, np.array(extra)])

        mat = lin_rows
        constraint = StageConstraint(
            h_fn=lambda x, _m=mat: _m @ np.asarray(x, dtype=float),
            bound=lin_bounds,
            jacobian=lambda x, _m=mat: _m,
            row_names=tuple(names),
        )
    else:
        # rows: [linear angle rows; sum|nu| <= hi; -sum|nu| <= -lo]
        mat = lin_rows
        names = names + ["wheel_norm<=hi", "wheel_norm>=lo"]
        all_bounds = np.concatenate([lin_bounds,
                                     [wheel_upper, -wheel_lower]])

        def h_fn(x, _m=mat, _p=p):
            x = np.asarray(x, dtype=float)
            s = np.sum(np.abs(x[6:6 + _p]))
            return np.concatenate([_m @ x, [s, -s]])

        def jac_fn(x, _m=mat, _p=p):
            x = np.asarray(x, dtype=float)
            g = np.zeros(6 + _p)
            g[6:6 + _p] = np.sign(x[6:6 + _p])
            return np.vstack([_m, g, -g])

        constraint = StageConstraint(h_fn=h_fn, bound=all_bounds,
                                     jacobian=jac_fn, row_names=tuple(names))

    control_set = ControlSet(dim=p,
                             one_norm_cap=(tuple(range(p)), float(rate_cap)))
    state_names = angle_names + ("w1", "w2", "w3") + tuple(
        f"nu{j + 1}" for j in range(p))
    return DcocProblem(
        dynamics=lambda x, u: discretize_step(params, x, u, dt),
        horizon=horizon,
        constraints=tuple([constraint] * (horizon + 1)),
        control_set=control_set,
        x0=np.asarray(x0, dtype=float),
        dynamics_jacobian=lambda x, u: discrete_jacobians(params, x, u, dt),
        tol_feas=tol_feas,
        state_names=state_names,
    )

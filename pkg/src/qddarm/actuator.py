"""Per-joint QDD servo model.

Each joint is driven through one or two belt paths. A path is: brushless
motor (torque constant, winding loss, cogging ripple, Karnopp friction at
the rotor) -> 16:114 timing belt with series elasticity -> half shaft.
Single-belt joints couple the half shaft to the joint directly; differential
joints combine two half shafts into pitch (sum) and roll (difference).

Friction magnitudes are configured output-referred per path; the rotor sees
them divided by the belt ratio (Coulomb/stiction) or ratio^2 (viscous).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class MotorParams:
    kt: float                   # Nm/A
    r_winding: float            # ohm
    rotor_inertia: float        # kg m^2
    cogging_amplitude: float    # Nm, motor side
    cogging_periods: int        # per mechanical revolution
    i_max: float                # A
    current_loop_tau: float = 1e-3   # s, idealized inner current loop

    def __post_init__(self):
        if self.kt <= 0 or self.r_winding <= 0 or self.i_max <= 0:
            raise ValueError("kt, r_winding, i_max must be > 0")
        if self.cogging_amplitude < 0:
            raise ValueError("cogging_amplitude must be >= 0")


@dataclass(frozen=True)
class BeltStage:
    """Transmission stiffness of one drive module, joint side.

    The stiffness figures are module-level measurements (what a locked
    2-DoF module shows on its output axis); a differential splits them
    evenly over its two belt paths via `per_path()`. A single-belt module
    (the base) is its own path.
    """

    ratio: float = 114.0 / 16.0
    stiffness_belt: float = 1300.0       # Nm/rad joint-side, module level
    stiffness_structure: float = 1200.0  # Nm/rad joint-side, module level
    efficiency: float = 0.95
    damping: float = 4.0                 # Nm s/rad joint-side, across the spring

    def __post_init__(self):
        if self.ratio <= 1:
            raise ValueError("ratio must be > 1")
        if self.stiffness_belt <= 0 or self.stiffness_structure <= 0:
            raise ValueError("stiffnesses must be > 0")

    @property
    def series_stiffness(self) -> float:
        """Belt and structural compliance in series, joint side (Nm/rad)."""
        kb, ks = self.stiffness_belt, self.stiffness_structure
        return kb * ks / (kb + ks)

    def per_path(self) -> "BeltStage":
        """Half of the module stiffness/damping: one of two parallel paths."""
        return replace(
            self,
            stiffness_belt=0.5 * self.stiffness_belt,
            stiffness_structure=0.5 * self.stiffness_structure,
            damping=0.5 * self.damping,
        )


@dataclass(frozen=True)
class FrictionParams:
    coulomb_output: float = 0.42        # Nm per belt path, output-referred
    viscous: float = 0.01               # Nm s/rad, output-referred
    stiction_ratio: float = 1.548
    deadband: float = 1e-3              # rad/s, Karnopp stick region
    backdrive_total_per_belt: float = 0.89   # Nm, reference figure
    cogging_share: float = 0.47              # Nm, reference figure
    joint_coulomb: float = 0.12         # Nm at the joint output bearing

    def __post_init__(self):
        if min(self.coulomb_output, self.viscous, self.joint_coulomb) < 0:
            raise ValueError("friction terms must be >= 0")
        if self.stiction_ratio < 1:
            raise ValueError("stiction_ratio must be >= 1")

    @property
    def stiction_output(self) -> float:
        return self.coulomb_output * self.stiction_ratio


@dataclass
class ActuatorState:
    theta_m: float = 0.0        # rad, motor angle
    omega_m: float = 0.0        # rad/s
    current: float = 0.0        # A
    tau_out: float = 0.0        # Nm delivered to the half shaft (joint side)
    temp: float = 27.0          # degC, winding (owned jointly with thermal)
    cogging_phase: float = 0.0  # rad, per-motor assembly phase
    saturated: bool = False

    def copy(self) -> "ActuatorState":
        return replace(self)


@dataclass
class StepPowers:
    """Per-substep energy bookkeeping (W), midpoint-velocity convention."""

    electrical_in: float = 0.0
    i2r_loss: float = 0.0
    friction_loss: float = 0.0
    damping_loss: float = 0.0
    to_shaft: float = 0.0


def motor_torque_and_loss(current: float, params: MotorParams) -> tuple[float, float]:
    """Air-gap torque kt*i and winding loss i^2 R."""
    if abs(current) > params.i_max * (1 + 1e-9):
        raise ValueError(f"current {current} exceeds i_max {params.i_max}")
    return params.kt * current, current * current * params.r_winding


def cogging_torque(theta_m: float, params: MotorParams, phase: float = 0.0) -> float:
    """Zero-mean position ripple from magnet/slot interaction."""
    return params.cogging_amplitude * math.sin(params.cogging_periods * theta_m + phase)


def cogging_potential(theta_m: float, params: MotorParams, phase: float = 0.0) -> float:
    """Potential energy whose negative gradient is cogging_torque (J)."""
    if params.cogging_periods == 0:
        return 0.0
    return (params.cogging_amplitude / params.cogging_periods) * math.cos(
        params.cogging_periods * theta_m + phase
    )


def friction_torque(omega: float, tau_applied: float, params: FrictionParams) -> float:
    """Karnopp friction, output-referred. Returns the friction torque.

    Inside the velocity deadband it cancels the applied torque up to the
    stiction limit (the load sticks); outside it is Coulomb + viscous drag.
    """
    if abs(omega) < params.deadband:
        limit = params.stiction_output
        if abs(tau_applied) <= limit:
            return -tau_applied
        return -math.copysign(limit, tau_applied)
    return -(math.copysign(params.coulomb_output, omega) + params.viscous * omega)


def differential_kinematics(theta_m: np.ndarray, ratio: float) -> tuple[float, float]:
    """Motor angles -> (pitch, roll) of the differential output."""
    t1, t2 = float(theta_m[0]), float(theta_m[1])
    return (t1 + t2) / (2.0 * ratio), (t1 - t2) / (2.0 * ratio)


def differential_inverse(pitch: float, roll: float, ratio: float) -> np.ndarray:
    """Exact inverse of differential_kinematics."""
    return np.array([ratio * (pitch + roll), ratio * (pitch - roll)])


def differential_statics(tau_joint: np.ndarray, ratio: float) -> np.ndarray:
    """Joint (pitch, roll) torques -> motor torques; transpose of the
    kinematics map, so motor power equals joint power."""
    tp, tr = float(tau_joint[0]), float(tau_joint[1])
    return np.array([(tp + tr) / (2.0 * ratio), (tp - tr) / (2.0 * ratio)])


def series_elastic_torque(theta_m: float, q_joint: float, stage: BeltStage) -> float:
    """Torque transmitted by the series element of one belt path (Nm)."""
    return stage.series_stiffness * (theta_m / stage.ratio - q_joint)


class BeltPath:
    """One motor + belt path driving a half shaft.

    The caller owns the shaft (joint) state; `step` advances the rotor and
    returns the torque the path applies to the shaft over the substep.
    """

    def __init__(self, motor: MotorParams, stage: BeltStage, friction: FrictionParams):
        self.motor = motor
        self.stage = stage
        self.friction = friction
        r = stage.ratio
        self._fc_m = friction.coulomb_output / r      # rotor-side Coulomb
        self._fs_m = friction.stiction_output / r
        self._bv_m = friction.viscous / (r * r)
        self._bd_m = stage.damping / (r * r)          # belt damping, rotor side

    def aligned_state(
        self, q_shaft: float, tau_hold: float = 0.0, temp: float = 27.0, phase: float = 0.0
    ) -> ActuatorState:
        """State with the belt pre-wound to transmit `tau_hold` at rest."""
        r, k = self.stage.ratio, self.stage.series_stiffness
        theta = r * (q_shaft + tau_hold / k)
        return ActuatorState(
            theta_m=theta,
            current=tau_hold / (r * self.motor.kt),
            tau_out=tau_hold,
            temp=temp,
            cogging_phase=phase,
        )

    def elastic_torque(self, state: ActuatorState, q_shaft: float, qdot_shaft: float) -> float:
        """Joint-side torque through spring + belt damping, current state."""
        r = self.stage.ratio
        spring = series_elastic_torque(state.theta_m, q_shaft, self.stage)
        return spring + self.stage.damping * (state.omega_m / r - qdot_shaft)

    def step(
        self,
        state: ActuatorState,
        i_cmd: float,
        q_shaft: float,
        qdot_shaft: float,
        dt: float,
    ) -> tuple[ActuatorState, float, StepPowers]:
        """Advance the rotor by dt. Returns (state', torque applied to the
        shaft over the step, power bookkeeping). Saturation is silent and
        flagged in the state."""
        m, st = self.motor, self.stage
        r = st.ratio
        i_sat = max(-m.i_max, min(m.i_max, i_cmd))
        saturated = i_sat != i_cmd
        # exact first-order current tracking over the substep
        alpha = 1.0 - math.exp(-dt / m.current_loop_tau)
        i_new = state.current + (i_sat - state.current) * alpha
        i_mid = 0.5 * (state.current + i_new)

        tau_motor = m.kt * i_mid
        cog = cogging_torque(state.theta_m, m, state.cogging_phase)
        tau_el = self.elastic_torque(state, q_shaft, qdot_shaft)  # joint side

        # net torque on the rotor before friction, motor side
        tau_net = tau_motor + cog - tau_el / r

        w = state.omega_m
        sticking = abs(w) < self.friction.deadband and abs(tau_net) <= self._fs_m
        if sticking:
            w_new = 0.0
            fric = -tau_net
        else:
            sgn = math.copysign(1.0, w if abs(w) >= self.friction.deadband else tau_net)
            fric_c = -sgn * self._fc_m
            # viscous + belt damping integrated implicitly for stiffness margin
            accel_expl = (tau_motor + cog - (tau_el - st.damping * (w / r - qdot_shaft)) / r
                          + fric_c + st.damping * qdot_shaft / r) / m.rotor_inertia
            denom = 1.0 + dt * (self._bd_m + self._bv_m) / m.rotor_inertia
            w_new = (w + dt * accel_expl) / denom
            fric = fric_c - self._bv_m * w_new
        w_mid = 0.5 * (w + w_new)
        theta_new = state.theta_m + w_new * dt

        # torque applied to the shaft over the step (joint side)
        tau_shaft = series_elastic_torque(state.theta_m, q_shaft, st) + st.damping * (
            w_mid / r - qdot_shaft
        )

        powers = StepPowers(
            electrical_in=i_mid * i_mid * m.r_winding + m.kt * i_mid * w_mid,
            i2r_loss=i_mid * i_mid * m.r_winding,
            friction_loss=-(fric * w_mid) if not sticking else 0.0,
            damping_loss=st.damping * (w_mid / r - qdot_shaft) ** 2,
            to_shaft=tau_shaft * qdot_shaft,
        )
        new = ActuatorState(
            theta_m=theta_new,
            omega_m=w_new,
            current=i_new,
            tau_out=tau_shaft,
            temp=state.temp,
            cogging_phase=state.cogging_phase,
            saturated=saturated,
        )
        return new, tau_shaft, powers

    def stored_energy(self, state: ActuatorState, q_shaft: float) -> float:
        """Spring + rotor kinetic + cogging potential (J)."""
        k = self.stage.series_stiffness
        d = state.theta_m / self.stage.ratio - q_shaft
        return (
            0.5 * k * d * d
            + 0.5 * self.motor.rotor_inertia * state.omega_m**2
            + cogging_potential(state.theta_m, self.motor, state.cogging_phase)
        )


class JointGroup:
    """Base class: a set of belt paths driving one or two joints."""

    joint_indices: tuple[int, ...]
    paths: list[BeltPath]
    states: list[ActuatorState]

    @property
    def n_motors(self) -> int:
        return len(self.paths)

    def currents_for(self, tau_joint: np.ndarray, kt: float) -> np.ndarray:
        raise NotImplementedError

    def shaft_coords(self, q: np.ndarray, qdot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def joint_torques(self, tau_shaft: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sensed_joints(self) -> np.ndarray:
        raise NotImplementedError


class SingleBeltJoint(JointGroup):
    """One motor, one belt, one joint (the base yaw)."""

    def __init__(self, joint_index: int, motor, stage, friction, phase: float = 0.0):
        self.joint_indices = (joint_index,)
        self.paths = [BeltPath(motor, stage, friction)]
        self.states = [ActuatorState(cogging_phase=phase)]
        self.ratio = stage.ratio

    def currents_for(self, tau_joint, kt):
        return np.array([float(tau_joint[0]) / (self.ratio * kt)])

    def shaft_coords(self, q, qdot):
        i = self.joint_indices[0]
        return np.array([q[i]]), np.array([qdot[i]])

    def joint_torques(self, tau_shaft):
        return np.array([float(tau_shaft[0])])

    def sensed_joints(self):
        return np.array([self.states[0].theta_m / self.ratio])

    def align(self, q, tau_hold, temp=27.0):
        self.states = [
            self.paths[0].aligned_state(
                q[self.joint_indices[0]], float(tau_hold[0]), temp,
                self.states[0].cogging_phase,
            )
        ]


class DifferentialPair(JointGroup):
    """Two motors driving (pitch, roll) of one 2-DoF differential module."""

    def __init__(self, joint_indices: tuple[int, int], motor, stage, friction,
                 phases: tuple[float, float] = (0.0, 0.0)):
        self.joint_indices = joint_indices
        path_stage = stage.per_path()
        self.paths = [BeltPath(motor, path_stage, friction),
                      BeltPath(motor, path_stage, friction)]
        self.states = [ActuatorState(cogging_phase=phases[0]),
                       ActuatorState(cogging_phase=phases[1])]
        self.ratio = stage.ratio

    def currents_for(self, tau_joint, kt):
        return differential_statics(np.asarray(tau_joint, dtype=float), self.ratio) / kt

    def shaft_coords(self, q, qdot):
        ip, ir = self.joint_indices
        s = np.array([q[ip] + q[ir], q[ip] - q[ir]])
        sd = np.array([qdot[ip] + qdot[ir], qdot[ip] - qdot[ir]])
        return s, sd

    def joint_torques(self, tau_shaft):
        t1, t2 = float(tau_shaft[0]), float(tau_shaft[1])
        return np.array([t1 + t2, t1 - t2])

    def sensed_joints(self):
        th = np.array([s.theta_m for s in self.states])
        pitch, roll = differential_kinematics(th, self.ratio)
        return np.array([pitch, roll])

    def align(self, q, tau_hold, temp=27.0):
        ip, ir = self.joint_indices
        shafts = np.array([q[ip] + q[ir], q[ip] - q[ir]])
        tau_paths = np.array(
            [(tau_hold[0] + tau_hold[1]) / 2.0, (tau_hold[0] - tau_hold[1]) / 2.0]
        )
        self.states = [
            p.aligned_state(shafts[i], tau_paths[i], temp, self.states[i].cogging_phase)
            for i, p in enumerate(self.paths)
        ]


def build_groups(motor: MotorParams, stage: BeltStage, friction: FrictionParams,
                 rng: np.random.Generator | None = None) -> list[JointGroup]:
    """The arm's drive layout: M1 base; M2/M3 shoulder; M4/M5 elbow module;
    M6/M7 wrist module. Cogging phases randomized per seed."""
    ph = (rng.uniform(0, 2 * np.pi, 7) if rng is not None else np.zeros(7))
    return [
        SingleBeltJoint(0, motor, stage, friction, phase=ph[0]),
        DifferentialPair((1, 2), motor, stage, friction, phases=(ph[1], ph[2])),
        DifferentialPair((3, 4), motor, stage, friction, phases=(ph[3], ph[4])),
        DifferentialPair((5, 6), motor, stage, friction, phases=(ph[5], ph[6])),
    ]

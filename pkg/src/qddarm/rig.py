"""Bench model of one 2-DoF differential module, mirroring the physical test
cell: the module is bolted down, the output either locked to load cells or
fitted with a known inertia, masses held so gravity does not preload the
transmission. Position control runs on motor-side sensing at the bus rate; a
separate output encoder records the true output angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .actuator import (
    ActuatorState,
    BeltPath,
    BeltStage,
    FrictionParams,
    MotorParams,
    differential_kinematics,
    differential_statics,
)
from .control import VelocityEstimator
from .sysid import ChirpSpec


@dataclass
class RigTrace:
    time: np.ndarray
    q_des: np.ndarray          # commanded pitch (rad) where applicable
    q_sensed: np.ndarray       # motor-derived pitch
    q_true: np.ndarray         # output-encoder pitch
    tau_cmd: np.ndarray        # commanded joint torque (pitch or roll)
    tau_meas: np.ndarray       # load-cell / transmitted torque on that axis
    currents: np.ndarray       # (N, 2) A
    cogging_joint: np.ndarray  # (N, 2) per-path cogging referred joint-side


class ModuleRig:
    def __init__(
        self,
        motor: MotorParams,
        stage: BeltStage,
        friction: FrictionParams,
        *,
        load_inertia: float = 0.0,
        output_inertia: float = 0.012,
        lock_pitch: bool = False,
        lock_roll: bool = True,
        control_rate: float = 170.0,
        substeps: int = 6,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        phases = rng.uniform(0.0, 2.0 * math.pi, 2)
        self.motor, self.stage, self.friction = motor, stage, friction
        path_stage = stage.per_path()
        self.paths = [BeltPath(motor, path_stage, friction) for _ in range(2)]
        self.states = [
            self.paths[i].aligned_state(0.0, 0.0, phase=phases[i]) for i in range(2)
        ]
        self.q = np.zeros(2)       # pitch, roll at the output
        self.qd = np.zeros(2)
        self.J = np.array([output_inertia + load_inertia, output_inertia])
        self.locked = np.array([lock_pitch, lock_roll])
        self.control_rate = control_rate
        self.substeps = substeps
        self.dt = 1.0 / (control_rate * substeps)
        self.time = 0.0

    # — helpers ————————————————————————————————————————————————

    def _shafts(self) -> tuple[np.ndarray, np.ndarray]:
        p, r = self.q
        pd, rd = self.qd
        return np.array([p + r, p - r]), np.array([pd + rd, pd - rd])

    def sensed(self) -> tuple[float, float]:
        th = np.array([s.theta_m for s in self.states])
        return differential_kinematics(th, self.stage.ratio)

    def measured_torques(self) -> tuple[float, float]:
        """Transmitted (pitch, roll) torque: what grounded load cells read."""
        s, sd = self._shafts()
        t = [
            self.paths[i].elastic_torque(self.states[i], s[i], sd[i])
            for i in range(2)
        ]
        return t[0] + t[1], t[0] - t[1]

    def cogging_now(self) -> np.ndarray:
        from .actuator import cogging_torque

        return np.array(
            [
                cogging_torque(self.states[i].theta_m, self.motor, self.states[i].cogging_phase)
                for i in range(2)
            ]
        )

    def currents_for(self, tau_pitch: float, tau_roll: float) -> np.ndarray:
        tm = differential_statics(np.array([tau_pitch, tau_roll]), self.stage.ratio)
        return tm / self.motor.kt

    # — physics ————————————————————————————————————————————————

    def substep(self, i_cmds: np.ndarray) -> None:
        dt = self.dt
        s, sd = self._shafts()
        taus = []
        for i in range(2):
            st, tau_shaft, _ = self.paths[i].step(
                self.states[i], float(i_cmds[i]), float(s[i]), float(sd[i]), dt
            )
            self.states[i] = st
            taus.append(tau_shaft)
        tau_axis = np.array([taus[0] + taus[1], taus[0] - taus[1]])
        # free axes: inertia + output-bearing friction; the belt-damping part
        # of tau_axis is handled implicitly for stiffness margin
        for a in range(2):
            if self.locked[a]:
                self.qd[a] = 0.0
                continue
            fric = -self.friction.joint_coulomb * math.tanh(self.qd[a] / 2e-3)
            b_axis = self.stage.damping    # two half-damping paths act on each axis
            expl = tau_axis[a] + b_axis * self.qd[a] + fric   # undo explicit damping
            self.qd[a] = (self.qd[a] + dt * expl / self.J[a]) / (
                1.0 + dt * b_axis / self.J[a]
            )
            self.q[a] += self.qd[a] * dt
        self.time += dt


def run_torque_profile(
    rig: ModuleRig,
    axis: str,
    tau_of_t,
    duration: float,
    sample_every: int = 1,
) -> RigTrace:
    """Open-loop torque (current) command profile on one axis."""
    n_sub = int(round(duration / rig.dt))
    rows = []
    for k in range(n_sub):
        t = rig.time
        tau = float(tau_of_t(t))
        tp, tr = (tau, 0.0) if axis == "pitch" else (0.0, tau)
        i_cmds = rig.currents_for(tp, tr)
        rig.substep(i_cmds)
        if k % sample_every == 0:
            mp, mr = rig.measured_torques()
            sp, sr = rig.sensed()
            cj = rig.cogging_now() * rig.stage.ratio
            rows.append(
                (
                    rig.time,
                    0.0,
                    sp if axis == "pitch" else sr,
                    rig.q[0] if axis == "pitch" else rig.q[1],
                    tau,
                    mp if axis == "pitch" else mr,
                    i_cmds[0],
                    i_cmds[1],
                    cj[0],
                    cj[1],
                )
            )
    a = np.array(rows)
    return RigTrace(
        time=a[:, 0], q_des=a[:, 1], q_sensed=a[:, 2], q_true=a[:, 3],
        tau_cmd=a[:, 4], tau_meas=a[:, 5], currents=a[:, 6:8], cogging_joint=a[:, 8:10],
    )


def run_position_tracking(
    rig: ModuleRig,
    q_des_of_t,
    duration: float,
    kp: float,
    kd: float,
    tau_limit: float = 60.0,
    sample_substeps: bool = False,
) -> RigTrace:
    """Closed-loop pitch position control at the bus rate on motor-side
    sensing; the output encoder is recorded for analysis only."""
    n_ticks = int(round(duration * rig.control_rate))
    vel = VelocityEstimator(40.0, rig.control_rate, n=1)
    rows = []
    for k in range(n_ticks):
        t_tick = k / rig.control_rate
        q_des = float(q_des_of_t(t_tick))
        sp, _ = rig.sensed()
        v = float(vel.update(np.array([sp]))[0])
        tau = kp * (q_des - sp) + kd * (0.0 - v)
        tau = max(-tau_limit, min(tau_limit, tau))
        i_cmds = rig.currents_for(tau, 0.0)
        for s in range(rig.substeps):
            rig.substep(i_cmds)
            if sample_substeps:
                mp, _ = rig.measured_torques()
                sp2, _ = rig.sensed()
                rows.append((rig.time, q_des, sp2, rig.q[0], tau, mp,
                             i_cmds[0], i_cmds[1], 0.0, 0.0))
        if not sample_substeps:
            mp, _ = rig.measured_torques()
            sp2, _ = rig.sensed()
            rows.append((rig.time, q_des, sp2, rig.q[0], tau, mp,
                         i_cmds[0], i_cmds[1], 0.0, 0.0))
    a = np.array(rows)
    return RigTrace(
        time=a[:, 0], q_des=a[:, 1], q_sensed=a[:, 2], q_true=a[:, 3],
        tau_cmd=a[:, 4], tau_meas=a[:, 5], currents=a[:, 6:8], cogging_joint=a[:, 8:10],
    )


def measure_position_bandwidth(
    motor: MotorParams,
    stage: BeltStage,
    friction: FrictionParams,
    kp: float,
    kd: float,
    *,
    load_inertia: float = 0.0,
    amplitude: float = math.radians(2.0),
    f0: float = 0.4,
    f1: float = 14.0,
    duration: float = 30.0,
    seed: int = 0,
) -> tuple[float, "FrequencyResponse"]:
    """Closed-loop chirp, output-encoder response, half-power bandwidth."""
    from .sysid import frequency_response, minus3db_bandwidth

    rig = ModuleRig(motor, stage, friction, load_inertia=load_inertia, seed=seed)
    spec = ChirpSpec(amplitude, f0, f1, duration, rig.control_rate * rig.substeps)

    def q_des(t):
        return amplitude * math.sin(spec.phase(t))

    trace = run_position_tracking(rig, q_des, duration, kp, kd, sample_substeps=True)
    # lowest frequency whose 4-cycle window still fits inside the record
    f_lo = max(2 * f0, 0.5)
    while spec.time_at_freq(f_lo) < 0.5 * max(4.0 / f_lo, 0.5) and f_lo < f1:
        f_lo *= 1.12
    freqs = np.geomspace(f_lo, f1 * 0.92, 25)
    resp = frequency_response(
        trace.time - trace.time[0], trace.q_des, trace.q_true, freqs, spec,
        metadata={"amplitude_rad": amplitude, "load_inertia": load_inertia},
    )
    return minus3db_bandwidth(resp), resp


def calibrate_position_gains(
    motor: MotorParams,
    stage: BeltStage,
    friction: FrictionParams,
    *,
    target_hz: float = 7.5,
    max_overshoot_pct: float = 3.0,
    output_inertia: float = 0.012,
    seed: int = 0,
    max_rounds: int = 6,
) -> dict:
    """Tune (kp, kd) so the no-load rig hits the half-power target, then back
    damping off/on until a small step keeps overshoot under the cap."""
    from .sysid import step_metrics

    r2 = stage.ratio**2
    j_total = output_inertia + 2.0 * motor.rotor_inertia * r2
    zeta = 0.9
    kp = j_total * (2.0 * math.pi * target_hz) ** 2
    history = []
    bw = None
    for _ in range(max_rounds):
        kd = 2.0 * zeta * math.sqrt(kp * j_total)
        bw, _ = measure_position_bandwidth(
            motor, stage, friction, kp, kd, load_inertia=0.0, seed=seed
        )
        history.append({"kp": kp, "kd": kd, "bandwidth_hz": bw})
        if abs(bw - target_hz) <= 0.15:
            break
        kp *= (target_hz / bw) ** 1.6
    kd = 2.0 * zeta * math.sqrt(kp * j_total)

    # small-amplitude step overshoot check
    for _ in range(4):
        rig = ModuleRig(motor, stage, friction, load_inertia=0.0, seed=seed)
        amp = math.radians(2.0)
        tr = run_position_tracking(rig, lambda t: amp if t >= 0.1 else 0.0, 1.5, kp, kd)
        m = step_metrics(tr.time, tr.q_true, amp, y0=0.0)
        if m.overshoot_pct <= max_overshoot_pct:
            break
        zeta *= 1.2
        kd = 2.0 * zeta * math.sqrt(kp * j_total)
    return {
        "kp": kp,
        "kd": kd,
        "zeta": zeta,
        "bandwidth_hz": bw,
        "overshoot_pct": m.overshoot_pct,
        "rounds": history,
    }

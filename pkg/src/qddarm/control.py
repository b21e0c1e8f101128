"""Outer-loop joint controller: PID with feed-forward gravity and Coriolis
compensation, impedance gain schedules, and thermal supervision.

The controller senses motor-side positions only (the robot has no output
encoders), so everything here operates on the motor-derived joint estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .arm import KinematicChain, N_JOINTS, bias_torques


@dataclass(frozen=True)
class PidGains:
    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    integral_clamp: float = 5.0

    def __post_init__(self):
        for g in (self.kp, self.ki, self.kd):
            if np.any(np.asarray(g) < 0):
                raise ValueError("gains must be non-negative")
        if np.any(np.asarray(self.ki) > 0) and self.integral_clamp <= 0:
            raise ValueError("integral clamp must be > 0 when ki > 0")

    def with_scaled(self, kp_scale: float = 1.0, kd_scale: float = 1.0) -> "PidGains":
        return replace(self, kp=self.kp * kp_scale, kd=self.kd * kd_scale)


@dataclass
class ControlCommand:
    tau: np.ndarray
    saturated: np.ndarray  # bool per joint

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)


def pid_gravity_control(
    q_des: np.ndarray,
    qd_des: np.ndarray,
    q: np.ndarray,
    qd: np.ndarray,
    integral: np.ndarray,
    gains: PidGains,
    chain: KinematicChain,
    torque_max: np.ndarray,
    dt: float,
    *,
    feedforward: bool = True,
) -> tuple[ControlCommand, np.ndarray]:
    """One PID + feed-forward evaluation. Returns the saturated command and
    the updated integral state (clamped; frozen on saturated joints)."""
    e = np.asarray(q_des, dtype=float) - np.asarray(q, dtype=float)
    edot = np.asarray(qd_des, dtype=float) - np.asarray(qd, dtype=float)
    # G(q) + C(q,qd)qd in one recursion
    tau_ff = bias_torques(chain, q, qd) if feedforward else np.zeros(N_JOINTS)
    integral_new = integral + e * dt
    if gains.integral_clamp > 0 and np.any(gains.ki > 0):
        lim = np.divide(
            gains.integral_clamp, gains.ki,
            out=np.full(N_JOINTS, np.inf), where=gains.ki > 0,
        )
        integral_new = np.clip(integral_new, -lim, lim)
    tau = gains.kp * e + gains.ki * integral_new + gains.kd * edot + tau_ff
    clipped = np.clip(tau, -torque_max, torque_max)
    saturated = clipped != tau
    # anti-windup: freeze the integral on joints in saturation
    integral_new = np.where(saturated, integral, integral_new)
    return ControlCommand(tau=clipped, saturated=saturated), integral_new


def impedance_select(
    mode: str,
    chain: KinematicChain,
    *,
    stiffness: np.ndarray | None = None,
    damping: np.ndarray | None = None,
) -> PidGains:
    """Gain schedule realizing a joint impedance.

    `stiff` tracks positions hard; `compliant` is soft enough that a light
    tool-tip push produces visible deflection; `custom` takes explicit K, D.
    """
    if mode == "custom":
        if stiffness is None or damping is None:
            raise ValueError("custom impedance needs stiffness and damping")
        K = np.asarray(stiffness, dtype=float)
        D = np.asarray(damping, dtype=float)
        if np.any(K < 0) or np.any(D < 0):
            raise ValueError("impedance parameters must be >= 0")
    elif mode == "stiff":
        K = np.array([900.0, 900.0, 900.0, 700.0, 500.0, 300.0, 300.0])
        D = 0.04 * K
    elif mode == "compliant":
        K = np.array([25.0, 25.0, 25.0, 18.0, 12.0, 8.0, 8.0])
        D = 0.15 * K
    else:
        raise ValueError(f"unknown impedance mode {mode!r}")
    return PidGains(kp=K, ki=np.zeros(N_JOINTS), kd=D, integral_clamp=5.0)


@dataclass
class ThermalSupervisor:
    """Linear torque derating near the temperature limit with a latched
    over-temperature fault."""

    t_limit: float
    derate_start_frac: float = 0.9
    faulted: bool = False

    def derate_factor(self, temp: float) -> float:
        start = self.derate_start_frac * self.t_limit
        if temp <= start:
            return 1.0
        if temp >= self.t_limit:
            return 0.0
        return 1.0 - (temp - start) / (self.t_limit - start)

    def supervise(self, cmd: ControlCommand, motor_temps: np.ndarray,
                  joint_of_motor: list[int]) -> ControlCommand:
        if self.faulted or np.any(motor_temps >= self.t_limit):
            self.faulted = True
            return ControlCommand(tau=np.zeros_like(cmd.tau),
                                  saturated=np.ones_like(cmd.saturated, dtype=bool))
        factor = np.ones(N_JOINTS)
        for m, t in enumerate(motor_temps):
            j = joint_of_motor[m]
            factor[j] = min(factor[j], self.derate_factor(float(t)))
        return ControlCommand(tau=cmd.tau * factor, saturated=cmd.saturated)

    def clear_fault(self) -> None:
        self.faulted = False


class VelocityEstimator:
    """Differenced position passed through a first-order low-pass filter."""

    def __init__(self, cutoff_hz: float, rate_hz: float, n: int = N_JOINTS):
        self.alpha = 1.0 - math.exp(-2.0 * math.pi * cutoff_hz / rate_hz)
        self.rate = rate_hz
        self._last_q: np.ndarray | None = None
        self._vel = np.zeros(n)

    def update(self, q: np.ndarray) -> np.ndarray:
        if self._last_q is None:
            self._last_q = np.asarray(q, dtype=float).copy()
            return self._vel.copy()
        raw = (q - self._last_q) * self.rate
        self._last_q = np.asarray(q, dtype=float).copy()
        self._vel = self._vel + self.alpha * (raw - self._vel)
        return self._vel.copy()

    def reset(self, q: np.ndarray | None = None) -> None:
        self._last_q = None if q is None else np.asarray(q, dtype=float).copy()
        self._vel = np.zeros_like(self._vel)

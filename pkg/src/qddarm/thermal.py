"""Lumped first-order thermal model per motor node and the burst/duty planner.

Node layout mirrors the arm: the base motor is bolted to the aluminum base
(heat sunk), the two shoulder motors share one lumped node, and each distal
motor is its own small node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ThermalParams:
    heat_capacity: float = 1103.0     # Ws/K, lumped shoulder pair
    k_fan: float = 0.93               # W/degC with the base fan
    k_nofan: float = 0.30             # W/degC
    t_ambient: float = 27.0           # degC
    t_limit: float = 70.0             # degC
    delta_budget: float = 10.0        # degC allowed burst rise
    base_heat_capacity: float = 4000.0
    base_k: float = 5.0               # heat-sunk base motor
    distal_heat_capacity: float = 551.5
    distal_k: float = 0.30

    def __post_init__(self):
        if min(self.heat_capacity, self.k_fan, self.k_nofan, self.t_limit,
               self.delta_budget) <= 0:
            raise ValueError("thermal parameters must be positive")
        if self.k_fan <= self.k_nofan:
            raise ValueError("fan dissipation must exceed no-fan dissipation")


@dataclass
class ThermalState:
    temp: float
    over_temperature: bool = False

    def stored_energy(self, params: ThermalParams, capacity: float) -> float:
        return capacity * (self.temp - params.t_ambient)


def thermal_step(
    state: ThermalState,
    p_in: float,
    params: ThermalParams,
    dt: float,
    *,
    capacity: float | None = None,
    k: float | None = None,
) -> ThermalState:
    """First-order step dT = (p_in - k (T - T_amb))/C dt.

    Uses the exact exponential update so large dt stays stable. Crossing
    t_limit latches the over-temperature flag (cleared by the caller).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    C = params.heat_capacity if capacity is None else capacity
    kk = params.k_fan if k is None else k
    t_eq = params.t_ambient + p_in / kk
    decay = math.exp(-kk * dt / C)
    temp = t_eq + (state.temp - t_eq) * decay
    return ThermalState(
        temp=temp,
        over_temperature=state.over_temperature or temp > params.t_limit,
    )


@dataclass(frozen=True)
class BurstBudget:
    feasible: bool
    t_burst: float          # s at burst torque before the budget is spent
    t_rest: float           # s to cool back to the pre-burst baseline
    duty: float             # t_burst / (t_burst + t_rest)
    p_burst: float          # W during the burst
    reason: str = ""
    # +/-10% heat-capacity sensitivity on the burst time
    t_burst_lo: float = 0.0
    t_burst_hi: float = 0.0


def burst_budget(
    tau_burst: float,
    tau_cont: float,
    p_cont: float,
    p_rest: float,
    params: ThermalParams,
    *,
    k: float | None = None,
) -> BurstBudget:
    """How long the arm can hold `tau_burst` given a `p_cont`-rated node.

    Winding loss scales as I^2 R with torque-proportional current, so burst
    power is p_cont (tau_burst/tau_cont)^2. The burst starts from the p_cont
    equilibrium and may raise the node by delta_budget; rest returns it to
    that same baseline while dissipating p_rest.
    """
    if tau_burst <= tau_cont:
        raise ValueError("tau_burst must exceed tau_cont")
    kk = params.k_fan if k is None else k
    C = params.heat_capacity
    tau_th = C / kk
    p_burst = p_cont * (tau_burst / tau_cont) ** 2
    dt0 = p_cont / kk                  # baseline rise over ambient
    dt1 = dt0 + params.delta_budget    # burst-end rise
    if params.t_ambient + dt1 > params.t_limit + 1e-9:
        return BurstBudget(False, 0.0, 0.0, 0.0, p_burst,
                           reason="budgeted rise exceeds the temperature limit")
    if p_burst / kk <= dt1:
        # burst equilibrium below the budget ceiling: indefinitely sustainable
        return BurstBudget(True, math.inf, 0.0, 1.0, p_burst,
                           reason="burst power sustainable continuously",
                           t_burst_lo=math.inf, t_burst_hi=math.inf)
    if p_rest / kk >= dt0:
        return BurstBudget(False, 0.0, 0.0, 0.0, p_burst,
                           reason="rest power cannot return to baseline")
    t_burst = tau_th * math.log((p_burst / kk - dt0) / (p_burst / kk - dt1))
    t_rest = tau_th * math.log((dt1 - p_rest / kk) / (dt0 - p_rest / kk))
    duty = t_burst / (t_burst + t_rest)
    return BurstBudget(
        True, t_burst, t_rest, duty, p_burst,
        t_burst_lo=0.9 * t_burst, t_burst_hi=1.1 * t_burst,
    )


@dataclass(frozen=True)
class DutyVerdict:
    feasible: bool
    rms_power: float
    peak_temp: float
    margin_w: float         # dissipation headroom at the limit, W
    reason: str = ""


def duty_feasibility(
    times: np.ndarray,
    powers: np.ndarray,
    params: ThermalParams,
    *,
    k: float | None = None,
    capacity: float | None = None,
) -> DutyVerdict:
    """RMS check plus a forward simulation of the node over the trace."""
    times = np.asarray(times, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if times.size == 0 or times.size != powers.size:
        raise ValueError("malformed trace: empty or mismatched arrays")
    if np.any(np.diff(times) <= 0):
        raise ValueError("malformed trace: time must be strictly increasing")
    kk = params.k_fan if k is None else k
    C = params.heat_capacity if capacity is None else capacity
    dt_all = np.diff(times)
    p_mid = 0.5 * (powers[1:] + powers[:-1])
    duration = times[-1] - times[0]
    rms = math.sqrt(float(np.sum(p_mid**2 * dt_all)) / duration) if duration > 0 else float(powers[0])
    # simulate from the long-run equilibrium of the average heat load, the
    # temperature a repeating trace settles around
    state = ThermalState(temp=params.t_ambient + rms / kk)
    peak = state.temp
    for p, dt in zip(p_mid, dt_all):
        state = thermal_step(state, float(p), params, float(dt), capacity=C, k=kk)
        peak = max(peak, state.temp)
    p_sustainable = kk * (params.t_limit - params.t_ambient)
    feasible = rms <= p_sustainable and peak <= params.t_limit
    reason = "" if feasible else (
        f"RMS {rms:.1f} W exceeds sustainable {p_sustainable:.1f} W"
        if rms > p_sustainable
        else f"simulated peak {peak:.1f} degC exceeds limit {params.t_limit:.1f} degC"
    )
    return DutyVerdict(feasible, rms, peak, p_sustainable - rms, reason)


class MotorThermalNodes:
    """The arm's node set: [M1 base] [M2+M3 pair] [M4] [M5] [M6] [M7]."""

    N_MOTORS = 7

    def __init__(self, params: ThermalParams, fan: bool = True):
        self.params = params
        k_body = params.k_fan if fan else params.k_nofan
        self.capacities = np.array(
            [params.base_heat_capacity, params.heat_capacity]
            + [params.distal_heat_capacity] * 4
        )
        self.ks = np.array([params.base_k, k_body] + [params.distal_k] * 4)
        self.states = [ThermalState(params.t_ambient) for _ in range(6)]
        self._node_of_motor = [0, 1, 1, 2, 3, 4, 5]

    def step(self, motor_losses: np.ndarray, dt: float) -> None:
        node_power = np.zeros(6)
        for m, loss in enumerate(motor_losses):
            node_power[self._node_of_motor[m]] += loss
        for n in range(6):
            self.states[n] = thermal_step(
                self.states[n], float(node_power[n]), self.params, dt,
                capacity=float(self.capacities[n]), k=float(self.ks[n]),
            )

    def motor_temps(self) -> np.ndarray:
        return np.array([self.states[self._node_of_motor[m]].temp for m in range(7)])

    def any_over_temperature(self) -> bool:
        return any(s.over_temperature for s in self.states)

    def margin(self) -> float:
        """degC to the limit at the hottest node."""
        return float(self.params.t_limit - max(s.temp for s in self.states))

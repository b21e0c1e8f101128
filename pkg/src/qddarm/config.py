"""Plain-text configuration: one key/value file with units in comments.

`load_config()` returns a `SimConfig` bundling the typed parameter objects
used across the package plus the SHA-256 hash of the file, which experiment
traces and reports embed so analysis can refuse mismatched pairs.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

import numpy as np

from .actuator import BeltStage, FrictionParams, MotorParams
from .arm import JointLimits, KinematicChain, N_JOINTS
from .control import PidGains
from .ik import IkConfig
from .thermal import ThermalParams


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _parser(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep case
    cp.read_string(text)
    return cp


def _vec(cp, section, key, n=None) -> np.ndarray:
    try:
        v = np.array([float(x) for x in cp.get(section, key).split()])
    except (configparser.Error, ValueError) as e:
        raise ConfigError(f"[{section}] {key}: {e}") from e
    if n is not None and v.shape != (n,):
        raise ConfigError(f"[{section}] {key}: expected {n} values, got {v.size}")
    return v


def _num(cp, section, key) -> float:
    try:
        raw = cp.get(section, key)
        return float(int(raw, 0)) if raw.lower().startswith("0x") else float(raw)
    except (configparser.Error, ValueError) as e:
        raise ConfigError(f"[{section}] {key}: {e}") from e


def _str(cp, section, key) -> str:
    try:
        return cp.get(section, key).strip()
    except configparser.Error as e:
        raise ConfigError(f"[{section}] {key}: {e}") from e


@dataclass(frozen=True)
class BusConfig:
    line_rate: int
    cycle_rate: int
    sync_byte: int
    interframe_gap_bits: int
    node_count: int
    command_hold_decay_tau: float


@dataclass(frozen=True)
class ControlConfig:
    rate: float
    physics_substeps: int
    velocity_filter_cutoff: float
    gains: PidGains
    derate_start_frac: float

    @property
    def period(self) -> float:
        return 1.0 / self.rate

    @property
    def physics_dt(self) -> float:
        return 1.0 / (self.rate * self.physics_substeps)


@dataclass(frozen=True)
class TeleopConfig:
    port: int
    telemetry_rate: float
    auth_token: str
    target_smoothing_tau: float
    stale_target_ms: float
    rate_limit_per_s: float
    workspace_margin: float


@dataclass(frozen=True)
class ExperimentConfig:
    home_q: np.ndarray
    end_poses: np.ndarray          # (8, 7)
    repeat_trials: int
    motion_time: float
    dwell_time: float
    mocap_noise_std: float
    step_amplitude_deg: float
    step_loads: np.ndarray
    chirp_torque_nm: float
    chirp_f0: float
    chirp_f1: float
    chirp_duration: float
    bode_amplitude_deg: float


@dataclass(frozen=True)
class SimConfig:
    chain: KinematicChain
    motor: MotorParams
    belt: BeltStage
    friction: FrictionParams
    thermal: ThermalParams
    control: ControlConfig
    ik: IkConfig
    bus: BusConfig
    teleop: TeleopConfig
    experiments: ExperimentConfig
    config_hash: str
    source: str


def default_config_path() -> Path:
    return Path(str(files("qddarm").joinpath("data/nominal.cfg")))


def config_hash_of(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path: str | Path | None = None) -> SimConfig:
    p = Path(path) if path is not None else default_config_path()
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    cp = _parser(text)

    errors: list[str] = []
    for section in (
        "chain", "limits", "motor", "belt", "friction", "thermal",
        "control", "ik", "bus", "teleop", "experiments",
    ):
        if not cp.has_section(section):
            errors.append(f"missing section [{section}]")
    if errors:
        raise ConfigError("; ".join(errors))

    limits = JointLimits(
        lower=_vec(cp, "limits", "lower", N_JOINTS),
        upper=_vec(cp, "limits", "upper", N_JOINTS),
        velocity_max=_vec(cp, "limits", "velocity_max", N_JOINTS),
        torque_max=_vec(cp, "limits", "torque_max", N_JOINTS),
    )
    chain = KinematicChain(
        joint_axes=np.stack([_vec(cp, "chain", f"joint{i}_axis", 3) for i in range(1, 8)]),
        joint_offsets=np.stack([_vec(cp, "chain", f"joint{i}_offset", 3) for i in range(1, 8)]),
        tool_offset=_vec(cp, "chain", "tool_offset", 3),
        link_masses=np.array([_num(cp, "chain", f"link{i}_mass") for i in range(1, 8)]),
        link_coms=np.stack([_vec(cp, "chain", f"link{i}_com", 3) for i in range(1, 8)]),
        link_inertias=np.stack(
            [np.diag(_vec(cp, "chain", f"link{i}_inertia", 3)) for i in range(1, 8)]
        ),
        gravity=_vec(cp, "chain", "gravity", 3),
        payload=_num(cp, "chain", "payload"),
        limits=limits,
    )
    motor = MotorParams(
        kt=_num(cp, "motor", "kt"),
        r_winding=_num(cp, "motor", "r_winding"),
        rotor_inertia=_num(cp, "motor", "rotor_inertia"),
        cogging_amplitude=_num(cp, "motor", "cogging_amplitude"),
        cogging_periods=int(_num(cp, "motor", "cogging_periods")),
        i_max=_num(cp, "motor", "i_max"),
        current_loop_tau=_num(cp, "motor", "current_loop_tau"),
    )
    belt = BeltStage(
        ratio=_num(cp, "belt", "pulley_teeth") / _num(cp, "belt", "pinion_teeth"),
        stiffness_belt=_num(cp, "belt", "stiffness_belt"),
        stiffness_structure=_num(cp, "belt", "stiffness_structure"),
        efficiency=_num(cp, "belt", "efficiency"),
        damping=_num(cp, "belt", "damping"),
    )
    friction = FrictionParams(
        coulomb_output=_num(cp, "friction", "coulomb_output"),
        viscous=_num(cp, "friction", "viscous"),
        stiction_ratio=_num(cp, "friction", "stiction_ratio"),
        deadband=_num(cp, "friction", "deadband"),
        backdrive_total_per_belt=_num(cp, "friction", "backdrive_total_per_belt"),
        cogging_share=_num(cp, "friction", "cogging_share"),
        joint_coulomb=_num(cp, "friction", "joint_coulomb"),
    )
    thermal = ThermalParams(
        heat_capacity=_num(cp, "thermal", "heat_capacity_pair"),
        k_fan=_num(cp, "thermal", "k_fan"),
        k_nofan=_num(cp, "thermal", "k_nofan"),
        t_ambient=_num(cp, "thermal", "t_ambient"),
        t_limit=_num(cp, "thermal", "t_limit"),
        delta_budget=_num(cp, "thermal", "delta_budget"),
        base_heat_capacity=_num(cp, "thermal", "base_heat_capacity"),
        base_k=_num(cp, "thermal", "base_k"),
        distal_heat_capacity=_num(cp, "thermal", "distal_heat_capacity"),
        distal_k=_num(cp, "thermal", "distal_k"),
    )
    gains = PidGains(
        kp=_vec(cp, "control", "kp", N_JOINTS),
        ki=_vec(cp, "control", "ki", N_JOINTS),
        kd=_vec(cp, "control", "kd", N_JOINTS),
        integral_clamp=_num(cp, "control", "integral_clamp"),
    )
    control = ControlConfig(
        rate=_num(cp, "control", "rate"),
        physics_substeps=int(_num(cp, "control", "physics_substeps")),
        velocity_filter_cutoff=_num(cp, "control", "velocity_filter_cutoff"),
        gains=gains,
        derate_start_frac=_num(cp, "control", "derate_start_frac"),
    )
    ik = IkConfig(
        damping=_num(cp, "ik", "damping"),
        nullspace_gain=_num(cp, "ik", "nullspace_gain"),
        q_rest=_vec(cp, "ik", "q_rest", N_JOINTS),
        max_iters=int(_num(cp, "ik", "max_iters")),
        pos_tol=_num(cp, "ik", "pos_tol"),
        ori_tol=_num(cp, "ik", "ori_tol"),
        step_clamp=_num(cp, "ik", "step_clamp"),
    )
    bus = BusConfig(
        line_rate=int(_num(cp, "bus", "line_rate")),
        cycle_rate=int(_num(cp, "bus", "cycle_rate")),
        sync_byte=int(_num(cp, "bus", "sync_byte")),
        interframe_gap_bits=int(_num(cp, "bus", "interframe_gap_bits")),
        node_count=int(_num(cp, "bus", "node_count")),
        command_hold_decay_tau=_num(cp, "bus", "command_hold_decay_tau"),
    )
    teleop = TeleopConfig(
        port=int(_num(cp, "teleop", "port")),
        telemetry_rate=_num(cp, "teleop", "telemetry_rate"),
        auth_token=_str(cp, "teleop", "auth_token"),
        target_smoothing_tau=_num(cp, "teleop", "target_smoothing_tau"),
        stale_target_ms=_num(cp, "teleop", "stale_target_ms"),
        rate_limit_per_s=_num(cp, "teleop", "rate_limit_per_s"),
        workspace_margin=_num(cp, "teleop", "workspace_margin"),
    )
    experiments = ExperimentConfig(
        home_q=_vec(cp, "experiments", "home_q", N_JOINTS),
        end_poses=np.stack([_vec(cp, "experiments", f"end_pose_{i}", N_JOINTS) for i in range(1, 9)]),
        repeat_trials=int(_num(cp, "experiments", "repeat_trials")),
        motion_time=_num(cp, "experiments", "motion_time"),
        dwell_time=_num(cp, "experiments", "dwell_time"),
        mocap_noise_std=_num(cp, "experiments", "mocap_noise_std"),
        step_amplitude_deg=_num(cp, "experiments", "step_amplitude_deg"),
        step_loads=_vec(cp, "experiments", "step_loads"),
        chirp_torque_nm=_num(cp, "experiments", "chirp_torque_nm"),
        chirp_f0=_num(cp, "experiments", "chirp_f0"),
        chirp_f1=_num(cp, "experiments", "chirp_f1"),
        chirp_duration=_num(cp, "experiments", "chirp_duration"),
        bode_amplitude_deg=_num(cp, "experiments", "bode_amplitude_deg"),
    )
    return SimConfig(
        chain=chain,
        motor=motor,
        belt=belt,
        friction=friction,
        thermal=thermal,
        control=control,
        ik=ik,
        bus=bus,
        teleop=teleop,
        experiments=experiments,
        config_hash=config_hash_of(text),
        source=str(p),
    )

"""Iterative damped-least-squares inverse kinematics with a null-space
posture objective for the redundant seventh degree of freedom."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arm import KinematicChain, N_JOINTS, forward_kinematics, jacobian
from .spatial import orientation_error


@dataclass(frozen=True)
class IkConfig:
    damping: float = 0.05
    nullspace_gain: float = 0.5        # 1/s
    q_rest: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    max_iters: int = 100
    pos_tol: float = 1e-3              # m
    ori_tol: float = 0.01              # rad
    step_clamp: float = 0.2            # rad per iteration

    def __post_init__(self):
        if self.damping <= 0:
            raise ValueError("damping must be > 0")
        if self.pos_tol <= 0 or self.ori_tol <= 0:
            raise ValueError("tolerances must be > 0")


def damped_pinv(J: np.ndarray, damping: float) -> np.ndarray:
    """J^T (J J^T + damping^2 I)^-1; damping > 0 keeps it bounded at
    singularities."""
    J = np.asarray(J, dtype=float)
    m = J.shape[0]
    return J.T @ np.linalg.solve(J @ J.T + damping**2 * np.eye(m), np.eye(m))


def nullspace_projector(J: np.ndarray) -> np.ndarray:
    """I - pinv(J) J with the exact pseudoinverse, so P is idempotent."""
    return np.eye(J.shape[1]) - np.linalg.pinv(J) @ J


def velocity_ik(
    J: np.ndarray,
    xdot_des: np.ndarray,
    q: np.ndarray,
    config: IkConfig,
) -> np.ndarray:
    """Damped task solution plus null-space motion toward the rest posture."""
    J_pinv = damped_pinv(J, config.damping)
    qdot_task = J_pinv @ np.asarray(xdot_des, dtype=float)
    P = nullspace_projector(J)
    qdot_null = P @ (config.nullspace_gain * (config.q_rest - np.asarray(q, dtype=float)))
    return qdot_task + qdot_null


@dataclass
class IkResult:
    q: np.ndarray
    converged: bool
    iterations: int
    pos_residual: float
    ori_residual: float
    residual_trace: np.ndarray

    def __bool__(self) -> bool:
        return self.converged


def _pose_error(chain, q, target_pos, target_quat) -> tuple[np.ndarray, float, float]:
    pose = forward_kinematics(chain, q)
    e_pos = np.asarray(target_pos, dtype=float) - pose.position
    e_ori = orientation_error(target_quat, pose.orientation)
    return np.concatenate([e_pos, e_ori]), float(np.linalg.norm(e_pos)), float(np.linalg.norm(e_ori))


def position_ik(
    chain: KinematicChain,
    target_pos: np.ndarray,
    target_quat: np.ndarray,
    q0: np.ndarray,
    config: IkConfig,
) -> IkResult:
    """Iterate damped-least-squares steps from q0 until the tool pose is
    within tolerance. The residual never increases (step halving), so a
    failed solve returns its best iterate with a monotone residual trace.

    Warm-starting from the previous solution keeps successive solutions on
    the same branch for nearby targets.
    """
    q = np.asarray(q0, dtype=float).copy()
    limits = chain.limits
    err, pr, orr = _pose_error(chain, q, target_pos, target_quat)
    weighted = np.linalg.norm(np.concatenate([err[:3], 0.1 * err[3:]]))
    residuals = [weighted]
    iters = 0
    for iters in range(1, config.max_iters + 1):
        if pr <= config.pos_tol and orr <= config.ori_tol:
            break
        J = jacobian(chain, q)
        dq = damped_pinv(J, config.damping) @ err
        # posture objective and soft limit avoidance in the null space
        posture = config.q_rest - q
        if limits is not None:
            mid = 0.5 * (limits.lower + limits.upper)
            span = limits.upper - limits.lower
            near = 2.0 * (q - mid) / span          # -1..1
            posture = posture - 0.5 * np.where(np.abs(near) > 0.8, near, 0.0)
        dq = dq + nullspace_projector(J) @ (0.5 * posture)
        scale = config.step_clamp / max(config.step_clamp, float(np.max(np.abs(dq))))
        dq *= scale
        # backtracking keeps the residual non-increasing
        step = 1.0
        for _ in range(8):
            q_try = q + step * dq
            if limits is not None:
                q_try = limits.clamp(q_try)
            err_try, pr_try, orr_try = _pose_error(chain, q_try, target_pos, target_quat)
            w_try = np.linalg.norm(np.concatenate([err_try[:3], 0.1 * err_try[3:]]))
            if w_try <= residuals[-1] + 1e-15:
                q, err, pr, orr = q_try, err_try, pr_try, orr_try
                residuals.append(w_try)
                break
            step *= 0.5
        else:
            residuals.append(residuals[-1])  # stuck; keep best iterate
    converged = pr <= config.pos_tol and orr <= config.ori_tol
    return IkResult(
        q=q,
        converged=converged,
        iterations=iters,
        pos_residual=pr,
        ori_residual=orr,
        residual_trace=np.array(residuals),
    )

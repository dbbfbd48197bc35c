"""RSS-derived minimum safe distance, response time window and safety score.

All velocities and accelerations are magnitudes (non-negative). Distances are
in meters, times in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Branch selection tolerance at t == theta; the reward branch wins ties.
BRANCH_TOL = 1e-12


class SafetyDomainError(ValueError):
    """Kinematic inputs outside the domain of the RSS formulas."""


class AlreadyUnsafeError(SafetyDomainError):
    """The current gap is below the minimum distance even at zero response time."""

    def __init__(self, deficit: float):
        self.deficit = deficit
        super().__init__(
            f"already unsafe at zero response time (deficit {deficit:.6g} m)"
        )


class ScenarioMode(str, Enum):
    OPPOSING = "opposing"
    SAME_DIRECTION = "same_direction"

    @property
    def m(self) -> int:
        return 1 if self is ScenarioMode.OPPOSING else 0

    @property
    def n(self) -> int:
        return 1 if self is ScenarioMode.OPPOSING else -1


@dataclass(frozen=True)
class DrivingState:
    """Kinematic state of the AV: speed and acceleration bounds."""

    v: float
    a_max_accel: float
    a_min_brake: float

    def __post_init__(self):
        for name in ("v", "a_max_accel", "a_min_brake"):
            if not getattr(self, name) >= 0:
                raise SafetyDomainError(f"{name} must be non-negative")


@dataclass(frozen=True)
class ObstacleState:
    """Kinematic state of the obstacle-of-attention."""

    v_o: float
    a_max_accel_o: float = 0.0
    a_min_brake_o: float = 1.0
    a_max_brake_o: float = 1.0
    response_time_o: float = 0.0

    def __post_init__(self):
        for name in ("v_o", "a_max_accel_o", "a_min_brake_o", "a_max_brake_o", "response_time_o"):
            if not getattr(self, name) >= 0:
                raise SafetyDomainError(f"{name} must be non-negative")


@dataclass(frozen=True)
class QuadCoefficients:
    """``d_min(t) = alpha*t**2 + beta*t + gamma + gamma_const``."""

    alpha: float
    beta: float
    gamma: float
    gamma_const: float = 0.0

    @property
    def constant(self) -> float:
        return self.gamma + self.gamma_const

    def distance(self, t):
        return self.alpha * t * t + self.beta * t + self.constant


@dataclass(frozen=True)
class ScoreWeights:
    """Reward ``sigma``, penalty ``eta``, full-stop gap ``d_mu``.

    ``score_cap`` is returned when the response time window is unbounded
    (a stationary AV that cannot accelerate).
    """

    sigma: float = 0.05
    eta: float = 0.1
    d_mu: float = 0.0
    score_cap: float = 100.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.eta > 0):
            raise SafetyDomainError("sigma and eta must be positive")
        if not self.d_mu >= 0:
            raise SafetyDomainError("d_mu must be non-negative")


def _braking(value: float, name: str) -> float:
    if not value > 0:
        raise SafetyDomainError(f"non-positive braking acceleration ({name}={value})")
    return value


def quad_coefficients(av: DrivingState) -> QuadCoefficients:
    """Collapse the AV terms of the minimum distance into a quadratic in t."""
    brake = _braking(av.a_min_brake, "a_min_brake")
    acc = av.a_max_accel
    return QuadCoefficients(
        alpha=0.5 * acc + acc * acc / (2.0 * brake),
        beta=av.v + av.v * acc / brake,
        gamma=av.v * av.v / (2.0 * brake),
    )


def obstacle_constant(obs: ObstacleState, mode: ScenarioMode, d_mu: float = 0.0) -> float:
    """Obstacle terms plus ``d_mu``: the part of d_min that does not depend on t."""
    mode = ScenarioMode(mode)
    if mode is ScenarioMode.OPPOSING:
        t_o = obs.response_time_o
        brake = _braking(obs.a_min_brake_o, "a_min_brake_o")
    else:
        t_o = 0.0
        brake = _braking(obs.a_max_brake_o, "a_max_brake_o")
    reach = obs.v_o * t_o + 0.5 * obs.a_max_accel_o * t_o * t_o
    stop = (obs.v_o + t_o * obs.a_max_accel_o) ** 2 / (2.0 * brake)
    return mode.m * reach + mode.n * stop + d_mu


def full_quad_coefficients(
    av: DrivingState, obs: ObstacleState, mode: ScenarioMode, d_mu: float = 0.0
) -> QuadCoefficients:
    """Quadratic coefficients with obstacle terms carried in ``gamma_const``."""
    q = quad_coefficients(av)
    return QuadCoefficients(q.alpha, q.beta, q.gamma, obstacle_constant(obs, mode, d_mu))


def min_safe_distance(
    av: DrivingState,
    obs: ObstacleState,
    mode: ScenarioMode,
    t_av: float,
    weights: ScoreWeights,
) -> float:
    """Minimum longitudinal gap that lets the AV avoid a collision.

    Evaluated term by term from the kinematics, independently of the
    quadratic collapse in :func:`quad_coefficients`.
    """
    if t_av < 0:
        raise SafetyDomainError("response time must be non-negative")
    mode = ScenarioMode(mode)
    v, acc = av.v, av.a_max_accel
    brake = _braking(av.a_min_brake, "a_min_brake")
    if mode is ScenarioMode.OPPOSING:
        t_o, brake_o = obs.response_time_o, _braking(obs.a_min_brake_o, "a_min_brake_o")
    else:
        t_o, brake_o = 0.0, _braking(obs.a_max_brake_o, "a_max_brake_o")
    own = v * t_av + 0.5 * acc * t_av**2 + (v + t_av * acc) ** 2 / (2 * brake)
    other_reach = obs.v_o * t_o + 0.5 * obs.a_max_accel_o * t_o**2
    other_stop = (obs.v_o + t_o * obs.a_max_accel_o) ** 2 / (2 * brake_o)
    return own + mode.m * other_reach + mode.n * other_stop + weights.d_mu


def response_time_window(d: float, q: QuadCoefficients) -> float:
    """Non-negative root theta of ``alpha*theta**2 + beta*theta + const = d``.

    Returns ``math.inf`` when alpha and beta are both zero and the gap exceeds
    the constant term. Raises :class:`AlreadyUnsafeError` when ``d`` is below
    the constant term.
    """
    slack = d - q.constant
    if slack < 0:
        raise AlreadyUnsafeError(-slack)
    if q.alpha == 0 and q.beta == 0:
        return math.inf if slack > 0 else 0.0
    # Cancellation-free form of (-b + sqrt(b^2 + 4 a s)) / 2a.
    return 2.0 * slack / (q.beta + math.sqrt(q.beta * q.beta + 4.0 * q.alpha * slack))


def safety_score(t, theta: float, q: QuadCoefficients, w: ScoreWeights):
    """Piecewise safety score: reward ``sigma`` below theta, penalty ``eta`` above.

    ``t`` may be a scalar or an array; an infinite ``theta`` yields
    ``w.score_cap``.
    """
    if math.isinf(theta):
        if np.ndim(t):
            return np.full(np.shape(t), w.score_cap, dtype=float)
        return float(w.score_cap)
    t_arr = np.asarray(t, dtype=float)
    core = q.alpha * (theta * theta - t_arr * t_arr) + q.beta * (theta - t_arr)
    score = np.where(t_arr - theta <= BRANCH_TOL, w.sigma * core, w.eta * core)
    if score.ndim == 0:
        return float(score)
    return score


def score_curve(t_start: float, t_stop: float, step: float, q: QuadCoefficients,
                w: ScoreWeights, theta: float):
    """Sample the safety score on ``[t_start, t_stop]`` with spacing ``step``.

    Returns ``(ts, scores)`` arrays; both are empty when ``t_stop < t_start``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if t_stop < t_start:
        return np.empty(0), np.empty(0)
    count = int(math.floor((t_stop - t_start) / step + 1e-9)) + 1
    ts = t_start + step * np.arange(count)
    return ts, np.atleast_1d(safety_score(ts, theta, q, w))

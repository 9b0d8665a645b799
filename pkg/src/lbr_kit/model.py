"""Kinematic model of the 7-DoF LBR family.

Variants are defined by self-describing config files: an explicit per-joint
(axis, origin_offset) chain instead of DH parameters, so the file alone fixes
the kinematics. The flange transform of a configuration q is

    T(q) = Π_i  Trans(origin_offset_i) · Rot(axis_i, q_i)  ·  Trans(flange_offset)

The iiwa and med variants of the same payload class share one kinematic
parameter set; they differ only in name.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, UnknownVariant

VARIANT_NAMES = ("iiwa7", "iiwa14", "med7", "med14")

QUAT_NORM_TOL = 1e-9


def quat_mul(a, b):
    """Hamilton product of two (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_rotvec(q):
    """Axis–angle vector of a unit quaternion, with angle in [0, π]."""
    w, x, y, z = q
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    norm = math.sqrt(x * x + y * y + z * z)
    if norm < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(norm, w)
    return np.array([x, y, z]) * (angle / norm)


def rotvec_to_quat(v):
    angle = math.sqrt(float(np.dot(v, v)))
    if angle < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = angle / 2.0
    s = math.sin(half) / angle
    return np.array([math.cos(half), v[0] * s, v[1] * s, v[2] * s])


@dataclass(frozen=True)
class Pose:
    """Rigid pose: position in meters, orientation as canonical unit quaternion."""

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]  # (w, x, y, z), w >= 0

    def __post_init__(self):
        norm = math.sqrt(sum(c * c for c in self.orientation))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise ConfigError(f"quaternion norm {norm} not unit")
        if self.orientation[0] < 0.0:
            object.__setattr__(self, "orientation", tuple(-c for c in self.orientation))

    @classmethod
    def from_arrays(cls, position, orientation) -> "Pose":
        return cls(tuple(float(v) for v in position), tuple(float(v) for v in orientation))

    @classmethod
    def identity(cls) -> "Pose":
        return cls((0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))

    def as_command_tuple(self) -> tuple[float, ...]:
        """The 7-value cartesian_pose wire field: x, y, z, qw, qx, qy, qz."""
        return self.position + self.orientation

    @classmethod
    def from_command_tuple(cls, values) -> "Pose":
        return cls.from_arrays(values[0:3], values[3:7])


@dataclass(frozen=True)
class RobotVariant:
    """One robot model: kinematic chain plus limits and impedance defaults."""

    name: str
    axes: np.ndarray            # (7, 3) unit joint axes in the zero pose
    origin_offsets: np.ndarray  # (7, 3) translation before each joint
    flange_offset: np.ndarray   # (3,) translation after the last joint
    joint_limits: np.ndarray    # (7, 2) [min, max] radians
    velocity_limits: np.ndarray  # (7,) rad/s
    stiffness: np.ndarray       # (7,) N·m/rad
    damping: np.ndarray         # (7,) N·m·s/rad
    cartesian_stiffness: np.ndarray  # (6,) N/m ×3, N·m/rad ×3

    @property
    def limits_lo(self) -> np.ndarray:
        return self.joint_limits[:, 0]

    @property
    def limits_hi(self) -> np.ndarray:
        return self.joint_limits[:, 1]

    def validate(self) -> "RobotVariant":
        if self.axes.shape != (7, 3) or self.origin_offsets.shape != (7, 3):
            raise ConfigError(f"{self.name}: variant must define exactly 7 joints")
        for i in range(7):
            norm = float(np.linalg.norm(self.axes[i]))
            if abs(norm - 1.0) > 1e-9:
                raise ConfigError(f"{self.name}: joint {i} axis is not unit length")
            lo, hi = self.joint_limits[i]
            if not lo < hi:
                raise ConfigError(f"{self.name}: joint {i} limits not ordered")
            if abs(lo + hi) > 1e-12:
                raise ConfigError(f"{self.name}: joint {i} limits not symmetric")
            if not self.velocity_limits[i] > 0:
                raise ConfigError(f"{self.name}: joint {i} velocity limit must be > 0")
        if np.any(self.origin_offsets < 0) or np.any(self.flange_offset < 0):
            raise ConfigError(f"{self.name}: negative link offsets")
        reach = float(np.sum(self.origin_offsets)) + float(np.sum(self.flange_offset))
        if not reach > 0:
            raise ConfigError(f"{self.name}: chain has zero reach")
        if np.any(self.stiffness <= 0) or np.any(self.damping <= 0):
            raise ConfigError(f"{self.name}: impedance defaults must be positive")
        if self.cartesian_stiffness.shape != (6,) or np.any(self.cartesian_stiffness <= 0):
            raise ConfigError(f"{self.name}: cartesian stiffness must be 6 positive values")
        return self


def _variant_from_dict(data: dict) -> RobotVariant:
    try:
        joints = data["joints"]
        variant = RobotVariant(
            name=data["name"],
            axes=np.array([j["axis"] for j in joints], dtype=float),
            origin_offsets=np.array([j["origin_offset"] for j in joints], dtype=float),
            flange_offset=np.array(data["flange_offset"], dtype=float),
            joint_limits=np.radians([j["limit_deg"] for j in joints]).astype(float),
            velocity_limits=np.radians([j["velocity_limit_deg_s"] for j in joints]).astype(float),
            stiffness=np.array(data["default_impedance"]["stiffness"], dtype=float),
            damping=np.array(data["default_impedance"]["damping"], dtype=float),
            cartesian_stiffness=np.array(data["cartesian_stiffness"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed variant config: {exc}") from exc
    return variant.validate()


def _config_dir():
    return resources.files("lbr_kit") / "configs"


def list_variants() -> tuple[str, ...]:
    """Names of all shipped variant configs."""
    names = sorted(p.name[: -len(".json")] for p in _config_dir().iterdir() if p.name.endswith(".json"))
    return tuple(names)


def load_variant(name: str) -> RobotVariant:
    """Load a shipped variant by name, or any variant config by file path."""
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        return _variant_from_dict(json.loads(path.read_text()))
    candidate = _config_dir() / f"{name}.json"
    if not candidate.is_file():
        raise UnknownVariant(f"unknown variant {name!r}; shipped: {', '.join(list_variants())}")
    return _variant_from_dict(json.loads(candidate.read_text()))


def within_limits(q, variant: RobotVariant) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(q >= variant.limits_lo) and np.all(q <= variant.limits_hi))


def forward_kinematics(q, variant: RobotVariant) -> Pose:
    """Flange pose in the base frame. Out-of-limit q still computes."""
    q = np.ascontiguousarray(q, dtype=float)
    if q.shape != (7,):
        raise ConfigError(f"expected 7 joint angles, got shape {q.shape}")
    pos, quat = kernels.fk_pose(variant.axes, variant.origin_offsets, variant.flange_offset, q)
    return Pose.from_arrays(pos, quat)


def jacobian(q, variant: RobotVariant) -> np.ndarray:
    """Geometric Jacobian (6×7): linear rows m/rad, angular rows rad/rad."""
    q = np.ascontiguousarray(q, dtype=float)
    if q.shape != (7,):
        raise ConfigError(f"expected 7 joint angles, got shape {q.shape}")
    return kernels.jacobian(variant.axes, variant.origin_offsets, variant.flange_offset, q)


def pose_error(target: Pose, current: Pose) -> np.ndarray:
    """ 6-vector error: translation difference and rotation vector of
    target ∘ current⁻¹, angle in [0, π]."""
    trans = np.subtract(target.position, current.position)
    rel = quat_mul(np.asarray(target.orientation), quat_conj(np.asarray(current.orientation)))
    return np.concatenate([trans, quat_to_rotvec(rel)])


def damped_least_squares(jac: np.ndarray, xdot: np.ndarray, damping: float = 0.05) -> np.ndarray:
    """Resolved-rate inverse: qd = Jᵀ (J Jᵀ + λ² I)⁻¹ ẋ, bounded near singularities."""
    jjt = jac @ jac.T + (damping * damping) * np.eye(jac.shape[0])
    return jac.T @ np.linalg.solve(jjt, xdot)

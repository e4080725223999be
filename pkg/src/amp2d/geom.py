"""Rotation encodings and angle arithmetic shared by the motion pipeline.

The runtime character is planar, so most call sites use scalar angles and the
2D normal/tangent encoding. The 3D exponential-map and axis-angle utilities are
kept for spherical-joint data; they are not on the simulation path.
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi

# Below this magnitude an exponential-map vector is treated as the identity
# rotation (axis undefined in the limit).
EXP_MAP_EPS = 1e-8


def wrap_angle(theta):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    t = np.asarray(theta, dtype=float)
    wrapped = -(np.mod(-t + math.pi, TWO_PI) - math.pi)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def angle_diff(a, b):
    """Shortest signed difference a - b, wrapped to (-pi, pi]."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def exp_map_to_rotation(q) -> tuple[np.ndarray, float]:
    """Decode a 3D exponential-map vector into (unit axis, angle).

    The axis is q normalized and the angle is ||q||. Magnitudes below
    EXP_MAP_EPS return the identity rotation with a zero axis.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (3,):
        raise ValueError(f"exponential map must be a 3-vector, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("exponential map components must be finite")
    angle = float(np.linalg.norm(q))
    if angle < EXP_MAP_EPS:
        return np.zeros(3), 0.0
    return q / angle, angle


def rotate_vector_3d(axis, angle: float, v) -> np.ndarray:
    """Rotate a 3-vector about a unit axis (Rodrigues form)."""
    axis = np.asarray(axis, dtype=float)
    v = np.asarray(v, dtype=float)
    c, s = math.cos(angle), math.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1.0 - c)


def normal_tangent_3d(axis, angle: float) -> tuple[np.ndarray, np.ndarray]:
    """6D normal/tangent encoding of a 3D rotation: images of x̂ and ŷ."""
    return (
        rotate_vector_3d(axis, angle, np.array([1.0, 0.0, 0.0])),
        rotate_vector_3d(axis, angle, np.array([0.0, 1.0, 0.0])),
    )


def rotation_to_normal_tangent(angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Planar normal/tangent encoding: the two columns of the rotation matrix.

    Smooth and unique per rotation; both vectors are unit length and mutually
    orthogonal by construction.
    """
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c, s]), np.array([-s, c])


def rot2(angle: float) -> np.ndarray:
    """2x2 rotation matrix."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def perp(v) -> np.ndarray:
    """Rotate a 2-vector by +90 degrees: (x, y) -> (-y, x)."""
    v = np.asarray(v, dtype=float)
    return np.array([-v[1], v[0]])

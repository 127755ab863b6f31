"""Closed-form weighted rotation estimate via SVD of the cross-covariance.

The returned rotation is the global minimizer of the weighted correspondence
cost over SO(3), including the reflection-corrected case where the plain
orthogonal Procrustes optimum would have determinant -1.
"""

from dataclasses import dataclass

import numpy as np

from .core import Rotation, RigidTransform, center

# Two smallest singular values of H below this (relative to ||H||_F) mean a
# rotation about the remaining axis is unobservable (e.g. collinear points).
DEGENERACY_TOL = 1e-12


class DegenerateGeometry(Exception):
    """Correspondence geometry does not determine a rotation."""


@dataclass(frozen=True, eq=False)
class CrossCovariance:
    """Weighted cross-covariance H = sum_i w_i t~_i s~_i^T, shape (3, 3)."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.shape != (3, 3):
            raise ValueError(f"cross-covariance must be 3x3, got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("cross-covariance must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)


def cross_covariance(centered):
    """Build H = sum_i w_i target_centered_i source_centered_i^T.

    Parameters
    ----------
    centered : CenteredCorrespondences

    Returns
    -------
    CrossCovariance
    """
    s = centered.source_centered.points
    t = centered.target_centered.points
    w = centered.weights
    return CrossCovariance((t * w[:, None]).T @ s)


def kabsch_rotation(cross_cov):
    """Globally optimal rotation from the cross-covariance SVD.

    With H = U S V^T, returns R = U diag(1, 1, det(U V^T)) V^T. The sign
    correction keeps det(R) = +1 when det(H) < 0 (reflection case).

    Parameters
    ----------
    cross_cov : CrossCovariance

    Returns
    -------
    Rotation

    Raises
    ------
    DegenerateGeometry
        If the two smallest singular values of H are both below
        1e-12 * ||H||_F; the caller decides the fallback.
    """
    h = cross_cov.h
    u, s, vt = np.linalg.svd(h)
    tol = DEGENERACY_TOL * np.linalg.norm(h)
    if s[1] <= tol and s[2] <= tol:
        raise DegenerateGeometry(
            f"two smallest singular values of H ({s[1]:.3e}, {s[2]:.3e}) below "
            f"tolerance {tol:.3e}; rotation not determined by the geometry"
        )
    d = 1.0 if np.linalg.det(u @ vt) > 0.0 else -1.0
    r = (u * np.array([1.0, 1.0, d])) @ vt
    return Rotation(r)


def estimate_pose_kabsch(correspondences):
    """Full closed-form pose: centered Kabsch rotation plus optimal translation.

    Parameters
    ----------
    correspondences : CorrespondenceSet

    Returns
    -------
    RigidTransform

    Raises
    ------
    DegenerateGeometry
        Propagated from kabsch_rotation.
    """
    centered = center(correspondences)
    rotation = kabsch_rotation(cross_covariance(centered))
    translation = centered.target_mean - rotation.m @ centered.source_mean
    return RigidTransform(rotation, translation)

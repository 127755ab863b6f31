"""Small SO(3) construction helpers shared across the package.

Angles are radians unless a function name says otherwise. Rotations follow the
right-hand rule about the named axis.
"""

import numpy as np


def skew(v):
    """Cross-product matrix: skew(v) @ u == np.cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_zyx(z, y, x, degrees=False):
    """Intrinsic z-y'-x'' composition, i.e. Rz(z) @ Ry(y) @ Rx(x)."""
    if degrees:
        z, y, x = np.radians(z), np.radians(y), np.radians(x)
    return rotation_z(z) @ rotation_y(y) @ rotation_x(x)

"""Euler-Rodrigues parameterization of the mean martensite orientation.

The orientation is carried as a unit 4-vector alpha = [a, b, c, d] (scalar
part first). Unlike Euler angles this parameterization has no gimbal lock;
the price is the unit-norm side constraint, which the evolution solver
enforces with a Lagrange-multiplier correction.
"""

from __future__ import annotations

import numpy as np


def rotation_from_quat(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of the Euler-Rodrigues 4-vector.

    Entries are quadratic polynomials in (a, b, c, d); the result is a proper
    rotation exactly when the 4-vector has unit norm. Non-unit input is
    accepted (the solvers evaluate trial states slightly off the sphere).
    """
    a, b, c, d = q
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
            [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
            [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )


def d_rotation_d_quat(q: np.ndarray) -> np.ndarray:
    """Analytic partials of the rotation matrix, shape (4, 3, 3).

    Each slice k is dQ/dq_k; entries are linear in (a, b, c, d) since the
    matrix itself is quadratic.
    """
    a, b, c, d = q
    da = np.array([[a, -d, c], [d, a, -b], [-c, b, a]])
    db = np.array([[b, c, d], [c, -b, -a], [d, a, -b]])
    dc = np.array([[-c, b, a], [b, c, d], [-a, d, -c]])
    dd = np.array([[-d, -a, b], [a, -d, c], [b, c, d]])
    return 2.0 * np.array([da, db, dc, dd])


def quat_from_rotation(r: np.ndarray) -> np.ndarray:
    """Extract the Euler-Rodrigues 4-vector from a proper rotation matrix.

    Uses Spurrier's branch rule: the largest of the trace and the three
    diagonal entries selects the component computed from a square root, and
    the remaining components follow from off-diagonal sums/differences. This
    keeps every division well away from zero. The representative with a >= 0
    is returned.

    Raises ValueError if r is not orthonormal with determinant +1 (1e-8).
    """
    r = np.asarray(r, dtype=float)
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-8:
        raise ValueError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > 1e-8:
        raise ValueError("rotation matrix determinant is not +1")

    tr = r[0, 0] + r[1, 1] + r[2, 2]
    q = np.empty(4)
    if tr >= max(r[0, 0], r[1, 1], r[2, 2]):
        a = 0.5 * np.sqrt(1.0 + tr)
        q[0] = a
        q[1] = (r[2, 1] - r[1, 2]) / (4.0 * a)
        q[2] = (r[0, 2] - r[2, 0]) / (4.0 * a)
        q[3] = (r[1, 0] - r[0, 1]) / (4.0 * a)
    else:
        i = int(np.argmax([r[0, 0], r[1, 1], r[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        qi = np.sqrt(0.5 * r[i, i] + 0.25 * (1.0 - tr))
        q[1 + i] = qi
        q[0] = (r[k, j] - r[j, k]) / (4.0 * qi)
        q[1 + j] = (r[j, i] + r[i, j]) / (4.0 * qi)
        q[1 + k] = (r[k, i] + r[i, k]) / (4.0 * qi)
    if q[0] < 0.0:
        q = -q
    return q

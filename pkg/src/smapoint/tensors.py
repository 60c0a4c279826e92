"""Dense algebra for symmetric 3x3 tensors and isotropic rank-4 stiffness.

Symmetric second-order tensors (strains, stresses, transformation strains)
are stored as 6-vectors in the order (11, 22, 33, 12, 13, 23) with *tensor*
off-diagonal components (no engineering factor 2 in storage). The double
contraction weights the off-diagonals by 2, so ``ddot(a, a)`` equals the
Frobenius norm squared of the full 3x3 tensor.

Isotropic stiffness operators are carried as (bulk, shear) modulus pairs,
which makes Reuss homogenization of isotropic phases exact without any 6x6
inversion: compliances add component-wise on 1/K and 1/G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# index pairs of the 6-vector layout: (11, 22, 33, 12, 13, 23)
IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

# double-contraction weights (off-diagonals count twice)
DDOT_W = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

IDENTITY6 = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


def sym3(a11=0.0, a22=0.0, a33=0.0, a12=0.0, a13=0.0, a23=0.0) -> np.ndarray:
    return np.array([a11, a22, a33, a12, a13, a23], dtype=float)


def to_matrix(s: np.ndarray) -> np.ndarray:
    """Expand a 6-vector to the full symmetric 3x3 matrix."""
    return np.array(
        [
            [s[0], s[3], s[4]],
            [s[3], s[1], s[5]],
            [s[4], s[5], s[2]],
        ]
    )


def from_matrix(m: np.ndarray) -> np.ndarray:
    """Collapse a (numerically) symmetric 3x3 matrix to the 6-vector."""
    return np.array(
        [
            m[0, 0],
            m[1, 1],
            m[2, 2],
            0.5 * (m[0, 1] + m[1, 0]),
            0.5 * (m[0, 2] + m[2, 0]),
            0.5 * (m[1, 2] + m[2, 1]),
        ]
    )


def ddot(a: np.ndarray, b: np.ndarray) -> float:
    """Double contraction a : b (off-diagonal terms weighted x2)."""
    return float(np.dot(DDOT_W * a, b))


def norm(a: np.ndarray) -> float:
    """Frobenius norm of the symmetric tensor."""
    return float(np.sqrt(ddot(a, a)))


def trace(a: np.ndarray) -> float:
    return float(a[0] + a[1] + a[2])


def deviator(a: np.ndarray) -> np.ndarray:
    return a - (trace(a) / 3.0) * IDENTITY6


def rotate_sym(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Orthogonal similarity R s R^T of a symmetric tensor (6-vector in/out)."""
    return from_matrix(r @ to_matrix(s) @ r.T)


@dataclass(frozen=True)
class IsoStiffness:
    """Isotropic rank-4 elasticity operator, parameterized by (E, nu).

    Positive definite for E > 0 and -1 < nu < 0.5. Realized on 6-vectors
    through the (K, G) split: C : e = K tr(e) I + 2 G dev(e).
    """

    E: float
    nu: float

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must be in (-1, 0.5), got {self.nu}")

    @property
    def K(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def G(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @staticmethod
    def from_moduli(K: float, G: float) -> "IsoStiffness":
        E = 9.0 * K * G / (3.0 * K + G)
        nu = (3.0 * K - 2.0 * G) / (2.0 * (3.0 * K + G))
        return IsoStiffness(E, nu)


def apply_stiffness(c: IsoStiffness, e: np.ndarray) -> np.ndarray:
    """C : e for an isotropic operator (result linear in e)."""
    tr = trace(e)
    return c.K * tr * IDENTITY6 + 2.0 * c.G * (e - (tr / 3.0) * IDENTITY6)


def apply_compliance(c: IsoStiffness, s: np.ndarray) -> np.ndarray:
    """C^-1 : s, the inverse map of apply_stiffness."""
    tr = trace(s)
    return (tr / (9.0 * c.K)) * IDENTITY6 + (s - (tr / 3.0) * IDENTITY6) / (2.0 * c.G)


def stiffness_matrix6(c: IsoStiffness) -> np.ndarray:
    """6x6 stiffness in engineering convention (sig = C @ eps_eng, gamma shears)."""
    lam = c.K - 2.0 * c.G / 3.0
    m = np.zeros((6, 6))
    m[:3, :3] = lam
    m[0, 0] = m[1, 1] = m[2, 2] = lam + 2.0 * c.G
    m[3, 3] = m[4, 4] = m[5, 5] = c.G
    return m


def reuss_effective(lam: np.ndarray, phases: tuple[IsoStiffness, ...]) -> IsoStiffness:
    """Compliance-averaged (Reuss) effective stiffness of a phase mixture.

    Exact for isotropic phases: 1/K_eff = sum lam_i / K_i and likewise for G.
    The result is bounded between the softest and stiffest phase moduli for
    any volume fractions on the simplex.
    """
    inv_k = sum(li / c.K for li, c in zip(lam, phases))
    inv_g = sum(li / c.G for li, c in zip(lam, phases))
    return IsoStiffness.from_moduli(1.0 / inv_k, 1.0 / inv_g)


def variant_strains(eta_max: float, nu_transform: float) -> np.ndarray:
    """Stress-free transformation strains of the three martensite variants.

    Variant i elongates along axis i by eta_max and contracts laterally by
    nu_transform * eta_max; austenite (index 0) transforms with zero strain.
    Returns an array of shape (4, 6).
    """
    e, v = eta_max, nu_transform
    return np.array(
        [
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [e, -v * e, -v * e, 0.0, 0.0, 0.0],
            [-v * e, e, -v * e, 0.0, 0.0, 0.0],
            [-v * e, -v * e, e, 0.0, 0.0, 0.0],
        ]
    )


def effective_eta(lam: np.ndarray, eta_max: float, nu_transform: float) -> np.ndarray:
    """Volume-fraction-weighted mean transformation strain (unrotated frame)."""
    return lam @ variant_strains(eta_max, nu_transform)


def jacobi_eigen(s: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric tensor by cyclic Jacobi rotations.

    Returns (eigenvalues, V) with eigenvalues sorted descending and the
    columns of V the corresponding orthonormal eigenvectors. Each eigenvector
    has its first nonzero component positive; afterwards det V is corrected
    to +1 by flipping the last column if needed. Diagonal input (including
    zero and isotropic tensors) yields identity-aligned eigenvectors.
    """
    a = to_matrix(s).copy()
    v = np.eye(3)
    scale = max(1.0, float(np.max(np.abs(a))))
    for _ in range(max_sweeps):
        off = np.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off <= 1e-15 * scale:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                if abs(a[p, q]) <= 1e-20 * scale:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / a[p, q]
                t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                rot = np.eye(3)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = sn
                rot[q, p] = -sn
                a = rot.T @ a @ rot
                v = v @ rot
    else:
        raise RuntimeError("jacobi_eigen failed to converge within the sweep cap")

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    v = v[:, order]
    for j in range(3):
        col = v[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0.0:
            v[:, j] = -col
    if np.linalg.det(v) < 0.0:
        v[:, 2] = -v[:, 2]
    return vals, v

"""Helmholtz free energy, its gradients, driving forces and yield functions.

The free energy of the phase mixture is

    Psi = 1/2 e_el : C_eff : e_el  +  c_eff(theta)  +  Psi_h(kappa)  +  Psi_pen(lam)

with the elastic strain e_el = eps - Q eta_eff Q^T - eps_pl, the
compliance-averaged (Reuss) stiffness C_eff, the fraction-weighted caloric
energy c_eff, a saturating isotropic hardening energy Psi_h and a penalty
energy Psi_pen that diverges at volume fractions 0 and 1. The caloric term
enters with a positive sign so that the analytic derivative block
(d Psi / d lam_i contains +c_i) is exact; with the tabulated caloric law this
makes austenite the stable phase at body temperature, as required for a
pseudoelastic response.

Volume fractions live strictly inside (0, 1) and are paired with logit
coordinates chi (lam_i = sigmoid(chi_i)), which is what the rate-independent
lambda solver actually steps in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rotations import d_rotation_d_quat, rotation_from_quat
from .tensors import (
    IsoStiffness,
    apply_compliance,
    apply_stiffness,
    ddot,
    deviator,
    effective_eta,
    rotate_sym,
    reuss_effective,
    to_matrix,
    variant_strains,
)

N_PHASES = 4

PROJECTION_VERBATIM = "verbatim"
PROJECTION_UNWEIGHTED = "unweighted-mean"


@dataclass(frozen=True)
class MaterialParams:
    """Material parameter record (stress-like quantities in MPa, theta in degC).

    Defaults are the tabulated NiTi set: elastic constants per phase, the
    linear caloric law of austenite c(theta) = c0 + c1 * theta (martensite
    caloric energy is the reference zero), transformation strain magnitude
    and transformation Poisson ratio, saturating hardening constants
    (k0 initial slope, k1 asymptotic slope, k2 saturation rate), penalty
    weight and the three dissipation radii.
    """

    E_austenite: float = 83000.0
    E_martensite: float = 40000.0
    nu_austenite: float = 0.35
    nu_martensite: float = 0.35
    c0_austenite: float = -3.2465
    c1_austenite: float = -0.51
    c_martensite: float = 0.0
    eta_max: float = 0.055
    nu_transform: float = 0.45
    k0: float = 40000.0
    k1: float = 1000.0
    k2: float = 300.0
    penalty: float = 5e-6
    r_lambda: float = 5.92
    r_alpha: float = 1.0
    r_plastic: float = 750.0

    def __post_init__(self):
        if self.E_austenite <= 0 or self.E_martensite <= 0:
            raise ValueError("elastic moduli must be positive")
        for nu in (self.nu_austenite, self.nu_martensite):
            if not -1.0 < nu < 0.5:
                raise ValueError(f"Poisson ratio out of range: {nu}")
        if self.penalty <= 0:
            raise ValueError("penalty weight must be positive")
        if min(self.r_lambda, self.r_alpha, self.r_plastic) <= 0:
            raise ValueError("dissipation radii must be positive")

    def phases(self) -> tuple[IsoStiffness, ...]:
        """Per-phase stiffness operators (austenite + three variants)."""
        c_a = IsoStiffness(self.E_austenite, self.nu_austenite)
        c_m = IsoStiffness(self.E_martensite, self.nu_martensite)
        return (c_a, c_m, c_m, c_m)

    def caloric(self, theta: float) -> np.ndarray:
        """Per-phase caloric energies c_i(theta), shape (4,)."""
        c_a = self.c0_austenite + self.c1_austenite * theta
        return np.array([c_a, self.c_martensite, self.c_martensite, self.c_martensite])

    def transformation_strains(self) -> np.ndarray:
        return variant_strains(self.eta_max, self.nu_transform)


# ---------------------------------------------------------------------------
# phase fractions <-> logit coordinates

def lam_from_chi(chi: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-chi))


def chi_from_lam(lam: np.ndarray) -> np.ndarray:
    return np.log(lam) - np.log1p(-lam)


def normalize_fractions(lam: np.ndarray) -> np.ndarray:
    """Rescale fractions to the simplex with an exactly-unit float sum.

    After the division the largest component absorbs the remaining few-ulp
    defect so that lam.sum() == 1.0 holds bit-exactly.
    """
    lam = lam / lam.sum()
    for _ in range(10):
        s = lam.sum()
        if s == 1.0:
            return lam
        lam[int(np.argmax(lam))] += 1.0 - s
    raise RuntimeError("fraction normalization did not reach an exact unit sum")


def check_interior(lam: np.ndarray) -> None:
    if np.any(lam <= 0.0) or np.any(lam >= 1.0):
        raise ValueError(f"volume fractions must lie strictly inside (0, 1), got {lam}")


# ---------------------------------------------------------------------------
# energy and gradients

@dataclass
class EnergyGradients:
    """Analytic partials of the free energy and the stress."""

    d_lam: np.ndarray      # (4,)
    d_alpha: np.ndarray    # (4,), unprojected
    d_eps_pl: np.ndarray   # (6,), equals -sigma
    d_kappa: float
    sigma: np.ndarray      # (6,), C_eff : e_el


@dataclass
class DrivingForces:
    """Projected driving forces of the three dissipative channels.

    p_lambda is the fraction driving force after removing (a multiple of)
    the all-ones constraint direction, p_alpha is tangential to the unit
    sphere at alpha, dev_sigma drives the plastic strain and mu = dPsi/dkappa
    raises the plastic threshold.
    """

    p_lambda: np.ndarray
    p_alpha: np.ndarray
    dev_sigma: np.ndarray
    mu: float


def _elastic_state(eps, state, params):
    lam = np.asarray(state.lam, dtype=float)
    check_interior(lam)
    q = rotation_from_quat(state.alpha)
    eta_bar = effective_eta(lam, params.eta_max, params.nu_transform)
    e_el = eps - rotate_sym(q, eta_bar) - state.eps_pl
    c_eff = reuss_effective(lam, params.phases())
    return lam, q, eta_bar, e_el, c_eff


def hardening_energy(kappa: float, params: MaterialParams) -> float:
    k0, k1, k2 = params.k0, params.k1, params.k2
    return 0.5 * k1 * kappa**2 - (k1 - k0) / k2 * (np.exp(-k2 * kappa) / k2 + kappa)


def penalty_energy(lam: np.ndarray, params: MaterialParams) -> float:
    return float(np.sum(params.penalty / (lam**2 * (1.0 - lam) ** 2)))


def free_energy(eps: np.ndarray, theta: float, state, params: MaterialParams) -> float:
    """Total Helmholtz free energy at the given strain, temperature and state.

    ``state`` provides lam, alpha, eps_pl and kappa. Raises ValueError when a
    volume fraction sits on 0 or 1 (penalty singular).
    """
    lam, _, _, e_el, c_eff = _elastic_state(eps, state, params)
    psi = 0.5 * ddot(e_el, apply_stiffness(c_eff, e_el))
    psi += float(np.dot(lam, params.caloric(theta)))
    psi += hardening_energy(state.kappa, params)
    psi += penalty_energy(lam, params)
    return psi


def d_free_energy(eps: np.ndarray, theta: float, state, params: MaterialParams) -> EnergyGradients:
    """Analytic gradients of the free energy w.r.t. all internal variables.

    d_lam collects the penalty derivative, the caloric term, the
    transformation-strain contraction and the Reuss stiffness-derivative
    term; d_alpha follows from the chain rule through the rotation matrix;
    d_eps_pl = -sigma; d_kappa is the hardening derivative. Every component
    is validated against finite differences of free_energy by the
    verification oracle.
    """
    lam, q, eta_bar, e_el, c_eff = _elastic_state(eps, state, params)
    sigma = apply_stiffness(c_eff, e_el)

    etas = params.transformation_strains()
    caloric = params.caloric(theta)
    pen = params.penalty * (2.0 - 4.0 * lam) / (lam**3 * (lam - 1.0) ** 3)
    d_lam = np.empty(N_PHASES)
    for i, c_i in enumerate(params.phases()):
        d_lam[i] = (
            pen[i]
            + caloric[i]
            - ddot(rotate_sym(q, etas[i]), sigma)
            - 0.5 * ddot(sigma, apply_compliance(c_i, sigma))
        )

    # dPsi/dalpha_k = -2 (sigma . Q . eta_bar) : dQ/dalpha_k
    s_q_eta = to_matrix(sigma) @ q @ to_matrix(eta_bar)
    dq = d_rotation_d_quat(state.alpha)
    d_alpha = -2.0 * np.array([np.sum(s_q_eta * dq[k]) for k in range(4)])

    k0, k1, k2 = params.k0, params.k1, params.k2
    d_kappa = k1 * state.kappa + (k1 - k0) / k2 * (np.exp(-k2 * state.kappa) - 1.0)

    return EnergyGradients(d_lam=d_lam, d_alpha=d_alpha, d_eps_pl=-sigma,
                           d_kappa=float(d_kappa), sigma=sigma)


def project_lambda_force(d_lam: np.ndarray, lam: np.ndarray, projection: str) -> np.ndarray:
    """Constraint-corrected fraction driving force.

    "verbatim" uses the fraction-weighted mean multiplier as printed in the
    source model; "unweighted-mean" uses the plain mean, which is the exact
    Lagrange multiplier for the unit-sum constraint (p . 1 = 0 holds).
    """
    if projection == PROJECTION_VERBATIM:
        mean = np.dot(d_lam, lam) / N_PHASES
    elif projection == PROJECTION_UNWEIGHTED:
        mean = np.sum(d_lam) / N_PHASES
    else:
        raise ValueError(f"unknown lambda projection variant: {projection!r}")
    return -d_lam + mean


def driving_forces(eps: np.ndarray, theta: float, state, params: MaterialParams,
                   projection: str = PROJECTION_VERBATIM) -> DrivingForces:
    """Projected driving forces at the given strain/temperature/state."""
    g = d_free_energy(eps, theta, state, params)
    p_lambda = project_lambda_force(g.d_lam, np.asarray(state.lam), projection)
    alpha = np.asarray(state.alpha, dtype=float)
    p_alpha = -g.d_alpha + np.dot(g.d_alpha, alpha) * alpha
    return DrivingForces(p_lambda=p_lambda, p_alpha=p_alpha,
                         dev_sigma=deviator(g.sigma), mu=g.d_kappa)


def yield_functions(forces: DrivingForces, params: MaterialParams) -> tuple[float, float, float]:
    """Flow functions (phi_lambda, phi_alpha, phi_pl); negative means elastic."""
    phi_lam = float(np.linalg.norm(forces.p_lambda)) - params.r_lambda
    phi_alpha = float(np.linalg.norm(forces.p_alpha)) - params.r_alpha
    phi_pl = float(np.sqrt(ddot(forces.dev_sigma, forces.dev_sigma))) - (params.r_plastic + forces.mu)
    return phi_lam, phi_alpha, phi_pl

"""Material-point update: orientation initialization, yield-gated evolution,
stress update and algorithmic tangent.

The update follows the user-subroutine pattern: on the first increment the
initial orientation is derived from the eigenvectors of the strain tensor
(so that twinned martensite responds identically for every loading
direction), then the three dissipative channels are evolved in the order
plastic -> fractions -> orientation inside an outer fixed-point loop until
every yield gate is closed. The stress is evaluated two ways: directly as
C_eff : e_el at the updated state (authoritative) and incrementally with the
explicit-Euler form whose partial derivatives are frozen at the old state;
their difference is reported as integration drift. The algorithmic tangent
handed back to the caller is the effective stiffness of the old state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import (
    MaterialParams,
    PROJECTION_VERBATIM,
    driving_forces,
    lam_from_chi,
    normalize_fractions,
    yield_functions,
)
from .evolution import (
    NonConvergenceError,
    SolverSettings,
    StepReport,
    evolve_alpha,
    evolve_lambda,
    evolve_plastic,
)
from .rotations import d_rotation_d_quat, quat_from_rotation, rotation_from_quat
from .state import MaterialState, state_from_fractions
from .tensors import (
    IsoStiffness,
    apply_compliance,
    apply_stiffness,
    effective_eta,
    from_matrix,
    jacobi_eigen,
    norm,
    reuss_effective,
    rotate_sym,
    stiffness_matrix6,
    to_matrix,
)

STATEV_SIZE = 16


@dataclass
class PointInput:
    """One increment of driving input for a single material point.

    eps_new must equal the previous total strain plus deps (the caller's
    bookkeeping); dt is carried along but the model is rate-independent.
    first_increment plays the role of the total-time == time-increment check
    of a user subroutine and triggers orientation initialization.
    """

    eps_new: np.ndarray
    deps: np.ndarray = field(default_factory=lambda: np.zeros(6))
    theta: float = 20.0
    dt: float = 1.0
    first_increment: bool = False


def initialize_orientation(eps_first: np.ndarray) -> np.ndarray:
    """Initial Euler-Rodrigues vector from the strain eigenvector frame.

    The eigenvector columns (descending eigenvalues, det-corrected) form the
    rotation that aligns variant 1 with the largest principal strain. Zero
    or isotropic strain yields the identity orientation.
    """
    _, vecs = jacobi_eigen(eps_first)
    return quat_from_rotation(vecs)


def compute_stress(eps: np.ndarray, state: MaterialState, params: MaterialParams) -> np.ndarray:
    """Direct (energy-gradient) stress at the given strain and state."""
    q = rotation_from_quat(state.alpha)
    eta_bar = effective_eta(state.lam, params.eta_max, params.nu_transform)
    e_el = eps - rotate_sym(q, eta_bar) - state.eps_pl
    return apply_stiffness(reuss_effective(state.lam, params.phases()), e_el)


def effective_stiffness(state: MaterialState, params: MaterialParams) -> IsoStiffness:
    return reuss_effective(state.lam, params.phases())


def _incremental_stress(eps_new, deps, old: MaterialState, new: MaterialState,
                        params: MaterialParams) -> np.ndarray:
    """Explicit-Euler stress update with all partial derivatives at the old state."""
    c_old = reuss_effective(old.lam, params.phases())
    q = rotation_from_quat(old.alpha)
    etas = params.transformation_strains()
    eta_bar = effective_eta(old.lam, params.eta_max, params.nu_transform)
    sigma_old = old.sigma

    sigma = sigma_old + apply_stiffness(c_old, deps - (new.eps_pl - old.eps_pl))

    d_lam = new.lam - old.lam
    for i, c_i in enumerate(params.phases()):
        sens = rotate_sym(q, etas[i]) + apply_compliance(c_i, sigma_old)
        sigma = sigma - d_lam[i] * apply_stiffness(c_old, sens)

    d_alpha = new.alpha - old.alpha
    dq = d_rotation_d_quat(old.alpha)
    eta3 = to_matrix(eta_bar)
    for k in range(4):
        m = dq[k] @ eta3 @ q.T
        sigma = sigma - d_alpha[k] * apply_stiffness(c_old, from_matrix(m + m.T))
    return sigma


def update_point(inputs: PointInput, state: MaterialState, params: MaterialParams,
                 settings: SolverSettings | None = None,
                 projection: str = PROJECTION_VERBATIM,
                 ) -> tuple[MaterialState, np.ndarray, IsoStiffness, StepReport]:
    """Advance one material point by one increment.

    Returns (new state, stress, algorithmic tangent, report). The tangent is
    the effective stiffness of the incoming state. Raises
    NonConvergenceError (with the report attached) if a channel solver or
    the outer coupling loop exhausts its budget.
    """
    if settings is None:
        settings = SolverSettings.for_params(params)
    eps, theta = inputs.eps_new, inputs.theta

    old = state.copy()
    if inputs.first_increment and not old.initialized:
        old.alpha = initialize_orientation(eps)
        old.initialized = True
        old.sigma = compute_stress(eps - inputs.deps, old, params)

    tangent = reuss_effective(old.lam, params.phases())

    work = old.copy()
    report = StepReport()
    for outer in range(settings.max_outer):
        eps_pl, kappa, rep_pl = evolve_plastic(eps, theta, work, params, settings, projection)
        work.eps_pl, work.kappa = eps_pl, kappa
        report.plastic.merge(rep_pl)

        lam, rep_lam = evolve_lambda(eps, theta, work, params, settings, projection)
        work.set_fractions(lam)
        report.lam.merge(rep_lam)

        alpha, rep_al = evolve_alpha(eps, theta, work, params, settings, projection)
        work.alpha = alpha
        report.alpha.merge(rep_al)

        report.outer_passes = outer + 1
        if not (rep_pl.iterations or rep_lam.iterations or rep_al.iterations):
            break
    else:
        raise NonConvergenceError(
            f"channel coupling did not settle in {settings.max_outer} outer passes",
            "outer", report)

    forces = driving_forces(eps, theta, work, params, projection)
    report.phi = yield_functions(forces, params)

    sigma = compute_stress(eps, work, params)
    sigma_incr = _incremental_stress(eps, inputs.deps, old, work, params)
    report.stress_drift = norm(sigma_incr - sigma)
    work.sigma = sigma
    return work, sigma, tangent, report


# ---------------------------------------------------------------------------
# flat-array facade mirroring the user-subroutine calling convention

def initial_statev(state: MaterialState) -> np.ndarray:
    """Pack a state into the 16-slot user-subroutine state array.

    Layout: [chi(4), alpha(4), eps_pl(6, tensor shear components), kappa,
    initialized flag]. The fractions are recovered from chi by sigmoid plus
    renormalization, so the array round-trips the state up to an exact
    re-normalization of the fraction sum.
    """
    sv = np.zeros(STATEV_SIZE)
    sv[0:4] = state.chi
    sv[4:8] = state.alpha
    sv[8:14] = state.eps_pl
    sv[14] = state.kappa
    sv[15] = 1.0 if state.initialized else 0.0
    return sv


def state_from_statev(statev: np.ndarray) -> MaterialState:
    statev = np.asarray(statev, dtype=float)
    if statev.shape != (STATEV_SIZE,):
        raise ValueError(f"state array must have shape ({STATEV_SIZE},), got {statev.shape}")
    lam = normalize_fractions(lam_from_chi(statev[0:4]))
    st = state_from_fractions(lam)
    st.alpha = statev[4:8].copy()
    st.eps_pl = statev[8:14].copy()
    st.kappa = float(statev[14])
    st.initialized = bool(statev[15] != 0.0)
    return st


def umat_update(stran: np.ndarray, dstran: np.ndarray, temp: float,
                statev: np.ndarray, params: MaterialParams,
                settings: SolverSettings | None = None,
                projection: str = PROJECTION_VERBATIM,
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray, StepReport]:
    """Flat-array material update (user-subroutine convention).

    stran/dstran are total strain and strain increment at the end of the
    increment as 6-vectors (11, 22, 33, 12, 13, 23) with *engineering* shear
    components; temp is the temperature in degC. statev is the 16-slot state
    array (see initial_statev). Returns (stress 6-vector, 6x6 tangent in
    engineering convention, updated statev, report).
    """
    stran = np.asarray(stran, dtype=float)
    dstran = np.asarray(dstran, dtype=float)
    eps = stran.copy()
    eps[3:] *= 0.5
    deps = dstran.copy()
    deps[3:] *= 0.5

    state = state_from_statev(statev)
    state.sigma = compute_stress(eps - deps, state, params)
    inputs = PointInput(eps_new=eps, deps=deps, theta=temp,
                        first_increment=not state.initialized)
    new_state, sigma, tangent, report = update_point(inputs, state, params,
                                                     settings, projection)
    return sigma, stiffness_matrix6(tangent), initial_statev(new_state), report

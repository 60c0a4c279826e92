"""Rate-independent evolution solvers with Lagrange-multiplier correction.

Each dissipative channel (orientation alpha, fractions lambda, plastic
strain) is integrated by the same pattern: while the yield residual phi
exceeds its gate, take one Newton-Raphson step on the scalar consistency
parameter rho (derivative by central finite difference on a trial update),
apply the projected update, and correct the constraint that the
time-discretized Lagrange multiplier no longer satisfies exactly:

* alpha: cap the step component-wise, then if the unit-norm defect exceeds
  its tolerance, bracket the multiplier beta around its analytic value and
  bisect the corrected update back onto the sphere;
* lambda: step in logit coordinates (sigmoid keeps fractions interior),
  then renormalize the fractions to an exactly-unit sum;
* plastic: flow along dev sigma (trace preserved to roundoff) with the
  hardening variable slaved to the accumulated flow norm.

An anti-oscillation rule halves the next Newton step whenever the residual
flips sign without shrinking by at least 10%.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import (
    MaterialParams,
    PROJECTION_VERBATIM,
    d_free_energy,
    driving_forces,
    lam_from_chi,
    yield_functions,
)
from .tensors import ddot
from .state import MaterialState


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration limits of the evolution solvers.

    Yield-residual tolerances are absolute (MPa) and default to 1e-6 times
    the corresponding dissipation radius of the default parameter set; use
    for_params() to derive them for a custom set.
    """

    tol_lambda: float = 5.92e-6
    tol_alpha: float = 1e-6
    tol_plastic: float = 7.5e-4
    tol_alpha_norm: float = 1e-10   # on |  ||alpha||^2 - 1 |
    tol_sum: float = 1e-12          # fraction-sum defect triggering renormalization
    dalpha_max: float = 0.05        # per-component cap on one alpha step
    max_iter: int = 200             # per solver, per increment
    bisect_tol: float = 1e-12
    bisect_max_iter: int = 200
    bracket_max_doublings: int = 60
    fd_step_rel: float = 1e-8       # relative step for d(phi)/d(rho)
    max_outer: int = 20             # outer passes over the three channels
    lam_min: float = 1e-6           # floating-point underflow guard only

    def __post_init__(self):
        for name in ("tol_lambda", "tol_alpha", "tol_plastic", "tol_alpha_norm",
                     "dalpha_max", "bisect_tol", "fd_step_rel", "lam_min"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @staticmethod
    def for_params(params: MaterialParams, **overrides) -> "SolverSettings":
        values = dict(
            tol_lambda=1e-6 * params.r_lambda,
            tol_alpha=1e-6 * params.r_alpha,
            tol_plastic=1e-6 * params.r_plastic,
        )
        values.update(overrides)
        return SolverSettings(**values)


@dataclass
class ChannelReport:
    """Per-channel record of one increment's solve."""

    channel: str
    iterations: int = 0
    residual: float = 0.0             # signed phi at acceptance
    constraint_residual: float = 0.0
    capped: bool = False
    bisected: bool = False
    damped: bool = False
    clamped: bool = False
    dissipation_dot: float = 0.0      # min over substeps of (step . driving force)

    def merge(self, other: "ChannelReport") -> None:
        if other.iterations:
            self.dissipation_dot = (
                min(self.dissipation_dot, other.dissipation_dot)
                if self.iterations else other.dissipation_dot
            )
        self.iterations += other.iterations
        self.residual = other.residual
        self.constraint_residual = other.constraint_residual
        self.capped |= other.capped
        self.bisected |= other.bisected
        self.damped |= other.damped
        self.clamped |= other.clamped


@dataclass
class StepReport:
    """Observability record of one material-point update."""

    lam: ChannelReport = field(default_factory=lambda: ChannelReport("lambda"))
    alpha: ChannelReport = field(default_factory=lambda: ChannelReport("alpha"))
    plastic: ChannelReport = field(default_factory=lambda: ChannelReport("plastic"))
    outer_passes: int = 0
    phi: tuple[float, float, float] = (0.0, 0.0, 0.0)  # accepted (lambda, alpha, pl)
    stress_drift: float = 0.0

    def residuals_dict(self) -> dict:
        return {
            "phi_lambda": self.phi[0],
            "phi_alpha": self.phi[1],
            "phi_pl": self.phi[2],
            "alpha_norm_defect": self.alpha.constraint_residual,
        }


class NonConvergenceError(RuntimeError):
    """A solver exhausted its iteration budget (or lost its search direction)."""

    def __init__(self, message: str, channel: str, report=None, increment=None):
        super().__init__(message)
        self.channel = channel
        self.report = report
        self.increment = increment


def damp_oscillation(phi_prev: float, phi_curr: float, scale: float = 1.0) -> float:
    """Step scale for the next Newton step given the last two residuals.

    Sign flip without at least a 10% decrease of |phi| halves the scale;
    a decrease of 10% or more resets it to 1; otherwise the scale is kept.
    """
    if abs(phi_curr) <= 0.9 * abs(phi_prev):
        return 1.0
    if phi_prev * phi_curr < 0.0:
        return 0.5 * scale
    return scale


def _fd_derivative(phi_of, rho_scale: float, rel_step: float) -> float:
    h = rel_step * max(1.0, abs(rho_scale))
    return (phi_of(h) - phi_of(-h)) / (2.0 * h)


def evolve_alpha(eps, theta, state: MaterialState, params: MaterialParams,
                 settings: SolverSettings,
                 projection: str = PROJECTION_VERBATIM) -> tuple[np.ndarray, ChannelReport]:
    """Drive phi_alpha to its gate while restoring the unit-norm constraint.

    Returns the accepted orientation and the channel report. No-op (zero
    iterations) when the state is already at or inside the yield surface.
    """
    report = ChannelReport("alpha")
    work = state.copy()
    phi_prev = None
    scale = 1.0
    rho_mag = 0.0
    diss_min = np.inf

    for it in range(settings.max_iter):
        forces = driving_forces(eps, theta, work, params, projection)
        phi = yield_functions(forces, params)[1]
        report.residual = phi
        converged = abs(phi) <= settings.tol_alpha if it else phi <= settings.tol_alpha
        if converged:
            report.iterations = it
            report.constraint_residual = abs(float(work.alpha @ work.alpha) - 1.0)
            report.dissipation_dot = diss_min if np.isfinite(diss_min) else 0.0
            return work.alpha, report

        if phi_prev is not None:
            new_scale = damp_oscillation(phi_prev, phi, scale)
            report.damped |= new_scale < scale
            scale = new_scale

        p_bar = forces.p_alpha

        def phi_of(rho):
            trial = work.with_(alpha=work.alpha + rho * p_bar)
            f = driving_forces(eps, theta, trial, params, projection)
            return yield_functions(f, params)[1]

        dphi = _fd_derivative(phi_of, rho_mag, settings.fd_step_rel)
        if abs(dphi) < 1e-12:
            raise NonConvergenceError(
                "zero driving force: yield residual insensitive to the orientation step",
                "alpha", report)
        rho = -phi / dphi * scale
        step = rho * p_bar
        peak = float(np.max(np.abs(step)))
        if peak > settings.dalpha_max:
            rho *= settings.dalpha_max / peak
            report.capped = True
        rho_mag = max(rho_mag, abs(rho))

        alpha_new = work.alpha + rho * p_bar
        defect = float(alpha_new @ alpha_new) - 1.0
        if abs(defect) > settings.tol_alpha_norm:
            grad = d_free_energy(eps, theta, work, params).d_alpha
            alpha_new = _bisect_alpha_multiplier(work.alpha, grad, rho, settings)
            report.bisected = True

        diss_min = min(diss_min, float((alpha_new - work.alpha) @ p_bar))
        phi_prev = phi
        work.alpha = alpha_new

    raise NonConvergenceError(
        f"alpha solver did not converge in {settings.max_iter} iterations "
        f"(|phi_alpha| = {abs(report.residual):.3e})", "alpha", report)


def _bisect_alpha_multiplier(alpha, grad, rho, settings: SolverSettings) -> np.ndarray:
    """Find the multiplier beta with || alpha + rho (-grad + 2 beta alpha) || = 1.

    The constraint residual is quadratic in beta; the bracket is expanded
    symmetrically (doubling) around the analytic multiplier until the
    residual changes sign, then plain bisection closes in.
    """

    def residual(beta):
        a = alpha + rho * (-grad + 2.0 * beta * alpha)
        return float(a @ a) - 1.0

    beta0 = 0.5 * float(grad @ alpha)   # projection multiplier: p = -grad + 2 beta0 alpha
    r0 = residual(beta0)
    if abs(r0) <= settings.bisect_tol:
        return alpha + rho * (-grad + 2.0 * beta0 * alpha)

    width = max(abs(r0) / max(4.0 * abs(rho), 1e-30), 1e-8 * max(1.0, abs(beta0)))
    lo = hi = None
    for _ in range(settings.bracket_max_doublings):
        for cand in (beta0 - width, beta0 + width):
            if residual(cand) * r0 < 0.0:
                lo, hi = (min(cand, beta0), max(cand, beta0))
                break
        if lo is not None:
            break
        width *= 2.0
    else:
        raise NonConvergenceError(
            "failed to bracket the orientation constraint multiplier", "alpha")

    r_lo = residual(lo)
    beta = 0.5 * (lo + hi)
    for _ in range(settings.bisect_max_iter):
        beta = 0.5 * (lo + hi)
        r_mid = residual(beta)
        if abs(r_mid) <= settings.bisect_tol:
            break
        if r_mid * r_lo < 0.0:
            hi = beta
        else:
            lo, r_lo = beta, r_mid
    return alpha + rho * (-grad + 2.0 * beta * alpha)


def evolve_lambda(eps, theta, state: MaterialState, params: MaterialParams,
                  settings: SolverSettings,
                  projection: str = PROJECTION_VERBATIM) -> tuple[np.ndarray, ChannelReport]:
    """Drive phi_lambda to its gate in logit coordinates.

    Each substep maps the consistency parameter through the sigmoid chain
    rule (dchi_i = rho p_i / (lam_i (1 - lam_i))), renormalizes the
    fractions to the simplex and re-syncs chi. Returns the accepted
    fractions (exactly unit-sum) and the channel report.
    """
    report = ChannelReport("lambda")
    work = state.copy()
    phi_prev = None
    scale = 1.0
    rho_mag = 0.0
    diss_min = np.inf

    for it in range(settings.max_iter):
        forces = driving_forces(eps, theta, work, params, projection)
        phi = yield_functions(forces, params)[0]
        report.residual = phi
        converged = abs(phi) <= settings.tol_lambda if it else phi <= settings.tol_lambda
        if converged:
            report.iterations = it
            report.dissipation_dot = diss_min if np.isfinite(diss_min) else 0.0
            return work.lam, report

        if phi_prev is not None:
            new_scale = damp_oscillation(phi_prev, phi, scale)
            report.damped |= new_scale < scale
            scale = new_scale

        p_bar = forces.p_lambda
        jac = work.lam * (1.0 - work.lam)

        def lam_of(rho):
            lam_t = lam_from_chi(work.chi + rho * p_bar / jac)
            low, high = settings.lam_min, 1.0 - settings.lam_min
            if np.any(lam_t < low) or np.any(lam_t > high):
                report.clamped = True
                lam_t = np.clip(lam_t, low, high)
            return lam_t / lam_t.sum()

        def phi_of(rho):
            trial = work.with_(lam=lam_of(rho))
            f = driving_forces(eps, theta, trial, params, projection)
            return yield_functions(f, params)[0]

        dphi = _fd_derivative(phi_of, rho_mag, settings.fd_step_rel)
        if abs(dphi) < 1e-12:
            raise NonConvergenceError(
                "zero driving force: yield residual insensitive to the fraction step",
                "lambda", report)
        rho = -phi / dphi * scale
        rho_mag = max(rho_mag, abs(rho))

        lam_new = lam_of(rho)
        diss_min = min(diss_min, float((lam_new - work.lam) @ p_bar))
        phi_prev = phi
        work.set_fractions(lam_new)

    raise NonConvergenceError(
        f"lambda solver did not converge in {settings.max_iter} iterations "
        f"(|phi_lambda| = {abs(report.residual):.3e})", "lambda", report)


def evolve_plastic(eps, theta, state: MaterialState, params: MaterialParams,
                   settings: SolverSettings,
                   projection: str = PROJECTION_VERBATIM) -> tuple[np.ndarray, float, ChannelReport]:
    """Newton-Raphson return of the plastic channel.

    Flows along the current stress deviator (recomputed every substep, so
    the trace of the plastic strain stays zero to roundoff) and slaves the
    hardening variable to the accumulated flow norm, which satisfies the
    discrete hardening constraint exactly. Returns (eps_pl, kappa, report).
    """
    report = ChannelReport("plastic")
    work = state.copy()
    phi_prev = None
    scale = 1.0
    rho_mag = 0.0
    diss_min = np.inf

    for it in range(settings.max_iter):
        forces = driving_forces(eps, theta, work, params, projection)
        phi = yield_functions(forces, params)[2]
        report.residual = phi
        converged = abs(phi) <= settings.tol_plastic if it else phi <= settings.tol_plastic
        if converged:
            report.iterations = it
            report.dissipation_dot = diss_min if np.isfinite(diss_min) else 0.0
            return work.eps_pl, work.kappa, report

        if phi_prev is not None:
            new_scale = damp_oscillation(phi_prev, phi, scale)
            report.damped |= new_scale < scale
            scale = new_scale

        n_dir = forces.dev_sigma
        n_norm = float(np.sqrt(ddot(n_dir, n_dir)))

        def phi_of(rho):
            # signed kappa trial keeps the FD derivative well-defined at rho = 0
            trial = work.with_(eps_pl=work.eps_pl + rho * n_dir,
                               kappa=work.kappa + rho * n_norm)
            f = driving_forces(eps, theta, trial, params, projection)
            return yield_functions(f, params)[2]

        dphi = _fd_derivative(phi_of, rho_mag, settings.fd_step_rel)
        if abs(dphi) < 1e-12:
            raise NonConvergenceError(
                "zero driving force: yield residual insensitive to the plastic step",
                "plastic", report)
        rho = -phi / dphi * scale
        rho_mag = max(rho_mag, abs(rho))

        d_eps = rho * n_dir
        diss_min = min(diss_min, ddot(d_eps, n_dir))
        phi_prev = phi
        work.eps_pl = work.eps_pl + d_eps
        work.kappa = work.kappa + float(np.sqrt(ddot(d_eps, d_eps)))

    raise NonConvergenceError(
        f"plastic solver did not converge in {settings.max_iter} iterations "
        f"(|phi_pl| = {abs(report.residual):.3e})", "plastic", report)

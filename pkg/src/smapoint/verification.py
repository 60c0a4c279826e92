"""Independent brute-force oracles: finite-difference gradient checks and
elastic-domain / solver-acceptance audits.

The finite-difference path shares no derivative code with the analytic
implementations; it only evaluates the free energy itself. All sampling is
seeded and reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .energy import (
    MaterialParams,
    PROJECTION_UNWEIGHTED,
    d_free_energy,
    driving_forces,
    free_energy,
    normalize_fractions,
    yield_functions,
)
from .evolution import SolverSettings
from .material_point import PointInput, update_point
from .rotations import rotation_from_quat
from .state import MaterialState, austenitic_state, state_from_fractions
from .tensors import (
    DDOT_W,
    apply_compliance,
    effective_eta,
    reuss_effective,
    rotate_sym,
    sym3,
)
from .tensors import norm as tnorm


@dataclass
class OracleReport:
    """Reproducible record of one oracle run."""

    name: str
    seed: int
    samples: int
    passed: bool = True
    rel_tol: float = 1e-6
    abs_floor: float = 1e-8
    families: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    runtime_s: float = 0.0

    def fail(self, message: str) -> None:
        self.passed = False
        self.checks.append({"ok": False, "detail": message})

    def ok(self, message: str) -> None:
        self.checks.append({"ok": True, "detail": message})

    def to_json(self, indent=2) -> str:
        payload = {
            "oracle": self.name,
            "seed": self.seed,
            "samples": self.samples,
            "passed": self.passed,
            "rel_tol": self.rel_tol,
            "abs_floor": self.abs_floor,
            "runtime_s": round(self.runtime_s, 3),
            "families": self.families,
            "checks": self.checks,
        }
        return json.dumps(payload, indent=indent)


def random_interior_state(rng: np.random.Generator,
                          params: MaterialParams) -> tuple[np.ndarray, float, MaterialState]:
    """Draw an interior random state: fractions in [0.05, 0.9] renormalized,
    random unit orientation, bounded strain/plastic strain, small hardening,
    temperature in [-20, 60] degC."""
    lam = normalize_fractions(rng.uniform(0.05, 0.9, size=4))
    alpha = rng.normal(size=4)
    alpha /= np.linalg.norm(alpha)
    eps = rng.normal(size=6)
    eps *= rng.uniform(0.0, 0.05) / tnorm(eps)
    eps_pl = rng.normal(size=6)
    eps_pl[:3] -= eps_pl[:3].mean()
    eps_pl *= rng.uniform(0.0, 0.01) / tnorm(eps_pl)
    state = state_from_fractions(lam)
    state.alpha = alpha
    state.eps_pl = eps_pl
    state.kappa = float(rng.uniform(0.0, 0.02))
    theta = float(rng.uniform(-20.0, 60.0))
    return eps, theta, state


def _central(psi_of, h: float) -> float:
    return (psi_of(h) - psi_of(-h)) / (2.0 * h)


def _richardson(psi_of, h: float) -> float:
    return (4.0 * _central(psi_of, 0.5 * h) - _central(psi_of, h)) / 3.0


def fd_gradient_check(samples: int = 200, seed: int = 42,
                      params: MaterialParams | None = None,
                      step: float = 1e-6, rel_tol: float = 1e-6,
                      abs_floor: float = 1e-8) -> OracleReport:
    """Compare every analytic derivative of the free energy with
    Richardson-extrapolated central differences at seeded random states.

    Five families are checked: fractions, orientation (projected onto the
    tangent space of the unit sphere), plastic strain, hardening variable
    and total strain (stress). Errors are measured relative to the family's
    magnitude at the sample (floored at 1), with an absolute floor set by
    the double-precision FD noise eps*|Psi|/(2h).
    """
    if params is None:
        params = MaterialParams()
    rng = np.random.default_rng(seed)
    report = OracleReport(name="fd_gradient_check", seed=seed, samples=samples,
                          rel_tol=rel_tol, abs_floor=abs_floor)
    families = {k: {"max_rel": 0.0, "max_abs": 0.0, "worst_sample": -1}
                for k in ("lambda", "alpha", "eps_pl", "kappa", "sigma")}
    t0 = time.perf_counter()

    for i in range(samples):
        eps, theta, state = random_interior_state(rng, params)
        grads = d_free_energy(eps, theta, state, params)

        def record(family: str, analytic: np.ndarray, fd: np.ndarray) -> None:
            analytic = np.atleast_1d(np.asarray(analytic, dtype=float))
            fd = np.atleast_1d(np.asarray(fd, dtype=float))
            scale = max(np.max(np.abs(analytic)), np.max(np.abs(fd)), 1.0)
            err = np.max(np.abs(analytic - fd))
            rel = max(err - abs_floor, 0.0) / scale
            f = families[family]
            f["max_abs"] = max(f["max_abs"], float(err))
            if rel > f["max_rel"]:
                f["max_rel"] = float(rel)
                f["worst_sample"] = i

        # fractions: plain partials (the energy is defined off the simplex)
        fd_lam = np.empty(4)
        for k in range(4):
            def psi_of(h, k=k):
                lam = state.lam.copy()
                lam[k] += h
                return free_energy(eps, theta, state.with_(lam=lam), params)
            fd_lam[k] = _richardson(psi_of, step)
        record("lambda", grads.d_lam, fd_lam)

        # orientation: compare in the tangent space of the unit sphere
        fd_alpha = np.empty(4)
        for k in range(4):
            def psi_of(h, k=k):
                a = state.alpha.copy()
                a[k] += h
                return free_energy(eps, theta, state.with_(alpha=a), params)
            fd_alpha[k] = _richardson(psi_of, step)
        proj = np.eye(4) - np.outer(state.alpha, state.alpha)
        record("alpha", proj @ grads.d_alpha, proj @ fd_alpha)

        # plastic strain: coordinate gradient carries the engineering weights
        fd_pl = np.empty(6)
        for k in range(6):
            def psi_of(h, k=k):
                e = state.eps_pl.copy()
                e[k] += h
                return free_energy(eps, theta, state.with_(eps_pl=e), params)
            fd_pl[k] = _richardson(psi_of, step)
        record("eps_pl", DDOT_W * grads.d_eps_pl, fd_pl)

        def psi_of_kappa(h):
            return free_energy(eps, theta, state.with_(kappa=state.kappa + h), params)
        record("kappa", grads.d_kappa, _richardson(psi_of_kappa, step))

        fd_sig = np.empty(6)
        for k in range(6):
            def psi_of(h, k=k):
                e = eps.copy()
                e[k] += h
                return free_energy(e, theta, state, params)
            fd_sig[k] = _richardson(psi_of, step)
        record("sigma", DDOT_W * grads.sigma, fd_sig)

    report.runtime_s = time.perf_counter() - t0
    report.families = families
    report.passed = all(f["max_rel"] <= rel_tol for f in families.values())
    return report


def _stationary_seed_fraction(params: MaterialParams, theta: float) -> float:
    """Seed fraction where the stress-free austenitic fraction force vanishes.

    At zero elastic strain the fraction gradient reduces to penalty +
    caloric terms; the stationary point balances the seed-side penalty wall
    against the chemical preference for austenite. Solved by bisection.
    """
    def imbalance(d):
        lam = np.array([1.0 - 3.0 * d, d, d, d])
        pen = params.penalty * (2.0 - 4.0 * lam) / (lam**3 * (lam - 1.0) ** 3)
        caloric = params.caloric(theta)
        return (pen[1] + caloric[1]) - (pen[0] + caloric[0])

    lo, hi = 1e-4, 0.2
    if imbalance(lo) * imbalance(hi) > 0:
        return 0.01
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if imbalance(lo) * imbalance(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14:
            break
    return 0.5 * (lo + hi)


def _stress_free_strain(state: MaterialState, params: MaterialParams) -> np.ndarray:
    q = rotation_from_quat(state.alpha)
    eta_bar = effective_eta(state.lam, params.eta_max, params.nu_transform)
    return rotate_sym(q, eta_bar) + state.eps_pl


def elastic_domain_check(samples: int = 40, seed: int = 7,
                         params: MaterialParams | None = None,
                         settings: SolverSettings | None = None,
                         projection: str = PROJECTION_UNWEIGHTED) -> OracleReport:
    """Audit the discrete flow-rule complementarity.

    Verifies that (a) no solver takes a step while every yield function is
    at or below its gate, and (b) whenever a solver runs, the accepted state
    meets the residual contract |phi| <= tolerance. Includes the boundary
    construction ||dev sigma|| = r_plastic with phi_pl = 0 to machine
    precision.
    """
    if params is None:
        params = MaterialParams()
    if settings is None:
        settings = SolverSettings.for_params(params)
    rng = np.random.default_rng(seed)
    report = OracleReport(name="elastic_domain_check", seed=seed, samples=samples)
    t0 = time.perf_counter()
    theta = 37.0

    # stress-free austenitic state at the stationary seed band: gates closed
    d_star = _stationary_seed_fraction(params, theta)
    base = austenitic_state(d_star)
    eps0 = _stress_free_strain(base, params)
    forces = driving_forces(eps0, theta, base, params, projection)
    phis = yield_functions(forces, params)
    if phis[0] < 0 and phis[1] < 0 and phis[2] < 0:
        report.ok(f"stress-free austenitic state at {theta} C is elastic "
                  f"(phi = {phis[0]:.3f}, {phis[1]:.3f}, {phis[2]:.3f})")
    else:
        report.fail(f"stress-free austenitic state not elastic: phi = {phis}")

    new_state, _, _, rep = update_point(
        PointInput(eps_new=eps0, deps=np.zeros(6), theta=theta), base, params,
        settings, projection)
    took_step = rep.lam.iterations or rep.alpha.iterations or rep.plastic.iterations
    if took_step or not np.array_equal(new_state.lam, base.lam):
        report.fail("solver stepped inside the elastic domain")
    else:
        report.ok("no evolution inside the elastic domain")

    # sub-critical perturbations around the stationary state: exact no-ops
    for _ in range(samples // 2):
        de = rng.normal(size=6)
        de *= 2e-4 / tnorm(de)
        st, _, _, rep = update_point(
            PointInput(eps_new=eps0 + de, deps=de, theta=theta), base, params,
            settings, projection)
        if rep.lam.iterations or rep.alpha.iterations or rep.plastic.iterations:
            report.fail(f"sub-critical strain perturbation evolved (|de| = {tnorm(de):.1e})")
            break
        if not (np.array_equal(st.lam, base.lam) and np.array_equal(st.eps_pl, base.eps_pl)
                and np.array_equal(st.alpha, base.alpha) and st.kappa == base.kappa):
            report.fail("state changed without any solver iteration")
            break
    else:
        report.ok("sub-critical perturbations leave the state bit-identical")

    # boundary construction: uniaxial stress with ||dev sigma|| = r_plastic
    s_axial = params.r_plastic / np.sqrt(2.0 / 3.0)
    c_eff = reuss_effective(base.lam, params.phases())
    eps_b = _stress_free_strain(base, params) + apply_compliance(c_eff, sym3(s_axial))
    phi_pl = yield_functions(driving_forces(eps_b, theta, base, params, projection), params)[2]
    if abs(phi_pl) <= 1e-12 * params.r_plastic:
        report.ok(f"plastic boundary construction: phi_pl = {phi_pl:.2e}")
    else:
        report.fail(f"plastic boundary construction off: phi_pl = {phi_pl:.2e}")

    # super-critical states: acceptance contract after the solve
    for _ in range(samples):
        de = rng.normal(size=6)
        de *= rng.uniform(0.01, 0.04) / tnorm(de)
        th = float(rng.uniform(20.0, 60.0))
        try:
            st, _, _, rep = update_point(
                PointInput(eps_new=eps0 + de, deps=de, theta=th), base, params,
                settings, projection)
        except Exception as exc:  # noqa: BLE001 - report, never raise
            report.fail(f"solver failed on super-critical state: {exc}")
            continue
        gates = (settings.tol_lambda, settings.tol_alpha, settings.tol_plastic)
        moved = (rep.lam.iterations > 0, rep.alpha.iterations > 0,
                 rep.plastic.iterations > 0)
        for phi, tol, ran, name in zip(rep.phi, gates, moved,
                                       ("lambda", "alpha", "plastic")):
            if ran and abs(phi) > tol:
                report.fail(f"{name} accepted with |phi| = {abs(phi):.2e} > {tol:.2e}")
            elif not ran and phi > tol:
                report.fail(f"{name} gate open (phi = {phi:.2e}) but no step taken")
    if report.passed:
        report.ok("acceptance contract holds on super-critical samples")

    report.runtime_s = time.perf_counter() - t0
    return report

"""Load-path engine: mixed strain/stress/temperature control of one material
point, CSV trace emission and trace audits.

Stress-controlled components are met by a quasi-Newton iteration on the free
strain components, seeded with the reported algorithmic tangent and refined
by Broyden updates from the kernel evaluations (the elastic tangent alone
contracts far too slowly on the transformation plateau).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import LoadStep, RunConfig
from .energy import driving_forces, yield_functions
from .evolution import NonConvergenceError, StepReport
from .material_point import PointInput, compute_stress, initialize_orientation, update_point
from .state import MaterialState, state_from_fractions
from .tensors import ddot, stiffness_matrix6, trace as ttrace
from .tensors import norm as tnorm

CSV_COLUMNS = (
    ["t_index", "theta_C"]
    + [f"eps_{c}" for c in ("11", "22", "33", "12", "13", "23")]
    + [f"sig_{c}" for c in ("11", "22", "33", "12", "13", "23")]
    + [f"lam_{i}" for i in range(4)]
    + [f"alpha_{c}" for c in "abcd"]
    + [f"epspl_{c}" for c in ("11", "22", "33", "12", "13", "23")]
    + ["kappa", "phi_lambda", "phi_alpha", "phi_pl"]
)

# strain-Jacobian column weights: stress sensitivity to tensor shear strain
_TENSOR_COLS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


@dataclass
class IncrementRecord:
    t_index: int
    theta: float
    eps: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    eps_pl: np.ndarray
    kappa: float
    phi: tuple[float, float, float]

    def row(self) -> list[float]:
        return ([float(self.t_index), self.theta] + list(self.eps) + list(self.sigma)
                + list(self.lam) + list(self.alpha) + list(self.eps_pl)
                + [self.kappa, *self.phi])


@dataclass
class PathResult:
    records: list[IncrementRecord]
    reports: list[StepReport]
    final_state: MaterialState
    peak_stress: float = 0.0

    def column(self, name: str) -> np.ndarray:
        i = CSV_COLUMNS.index(name)
        return np.array([r.row()[i] for r in self.records])


class MixedControlError(NonConvergenceError):
    """The stress-target iteration did not meet its tolerance."""


def _control_tolerance(peak_stress: float) -> float:
    return 1e-6 * max(1.0, peak_stress)


def _solve_increment(eps_old, state, modes, eps_target, sig_target, theta, first,
                     params, settings, projection, tol, max_iter=50):
    """Meet stress targets on the free components by Broyden-updated Newton.

    Every kernel evaluation restarts from the same incoming state (the
    update is a pure transition), so retrying with improved strains is safe.
    """
    free = [j for j, m in enumerate(modes) if m == "sig"]
    eps_new = np.where(np.array(modes) == "eps", eps_target, eps_old)

    def evaluate(eps_vec):
        inputs = PointInput(eps_new=eps_vec, deps=eps_vec - eps_old, theta=theta,
                            first_increment=first)
        return update_point(inputs, state, params, settings, projection)

    new_state, sigma, tangent, report = evaluate(eps_new)
    if not free:
        return new_state, eps_new, sigma, tangent, report

    jac = (stiffness_matrix6(tangent) * _TENSOR_COLS)[np.ix_(free, free)]
    resid = sigma[free] - sig_target[free]
    for _ in range(max_iter):
        if np.max(np.abs(resid)) <= tol:
            return new_state, eps_new, sigma, tangent, report
        delta = np.linalg.solve(jac, -resid)
        peak = np.max(np.abs(delta))
        if peak > 0.02:
            delta *= 0.02 / peak
        eps_trial = eps_new.copy()
        eps_trial[free] += delta
        new_state, sigma, tangent, report = evaluate(eps_trial)
        resid_new = sigma[free] - sig_target[free]
        denom = float(delta @ delta)
        if denom > 0.0:
            jac = jac + np.outer(resid_new - resid - jac @ delta, delta) / denom
        eps_new, resid = eps_trial, resid_new

    raise MixedControlError(
        f"stress targets not met within {max_iter} iterations "
        f"(max residual {np.max(np.abs(resid)):.3e} MPa > {tol:.3e})", "mixed-control",
        report)


def run_path(cfg: RunConfig) -> PathResult:
    """Execute the configured load path on one material point.

    Raises NonConvergenceError (with .increment set) if the kernel or the
    mixed-control iteration fails; the exception carries the last good
    increment index.
    """
    params = cfg.params
    settings = cfg.resolved_settings()
    state = cfg.initial_state()
    eps = np.zeros(6)
    state.sigma = compute_stress(eps, state, params)

    records: list[IncrementRecord] = []
    reports: list[StepReport] = []
    peak = 0.0
    t_index = 0
    first = True

    for step in cfg.steps:
        eps_start = eps.copy()
        sig_start = state.sigma.copy()
        theta_start = records[-1].theta if records else cfg.theta0
        modes = step.modes
        for k in range(1, step.increments + 1):
            f = k / step.increments
            theta = theta_start + f * (step.theta - theta_start)
            eps_target = eps_start + f * (step.targets - eps_start)
            sig_target = sig_start + f * (step.targets - sig_start)
            try:
                state, eps, sigma, tangent, report = _solve_increment(
                    eps, state, modes, eps_target, sig_target, theta, first,
                    params, settings, cfg.projection, _control_tolerance(peak))
            except NonConvergenceError as exc:
                exc.increment = t_index
                raise
            t_index += 1
            first = False
            peak = max(peak, float(np.max(np.abs(sigma))))
            records.append(IncrementRecord(
                t_index=t_index, theta=theta, eps=eps.copy(), sigma=sigma.copy(),
                lam=state.lam.copy(), alpha=state.alpha.copy(),
                eps_pl=state.eps_pl.copy(), kappa=state.kappa, phi=report.phi))
            reports.append(report)

    return PathResult(records=records, reports=reports, final_state=state,
                      peak_stress=peak)


# ---------------------------------------------------------------------------
# CSV trace

def format_row(values) -> str:
    out = [str(int(values[0]))]
    out += [format(v, ".17g") for v in values[1:]]
    return ",".join(out)


def write_csv(result: PathResult, path: str | Path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    lines += [format_row(r.row()) for r in result.records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}


def csv_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# sweep over increment counts

def scale_increments(cfg: RunConfig, total: int) -> RunConfig:
    """Copy of the configuration with step increments rescaled to the target total."""
    base_total = sum(s.increments for s in cfg.steps)
    steps = [LoadStep(increments=max(1, round(s.increments * total / base_total)),
                      modes=s.modes, targets=s.targets.copy(), theta=s.theta,
                      label=s.label) for s in cfg.steps]
    return dataclasses.replace(cfg, steps=steps)


def sweep_increments(cfg: RunConfig, counts: list[int]) -> dict:
    """Run the path at several increment counts and compare against the finest.

    Stress histories are compared on the finest run's normalized path time
    (linear interpolation per component); the summary maps each count to its
    maximum absolute stress deviation.
    """
    counts = sorted(set(counts))
    results = {n: run_path(scale_increments(cfg, n)) for n in counts}
    n_ref = counts[-1]
    ref = results[n_ref]
    t_ref = np.array([r.t_index for r in ref.records], dtype=float) / len(ref.records)
    sig_names = [f"sig_{c}" for c in ("11", "22", "33", "12", "13", "23")]

    deviations = {}
    for n in counts[:-1]:
        res = results[n]
        t = np.array([r.t_index for r in res.records], dtype=float) / len(res.records)
        dev = 0.0
        for name in sig_names:
            interp = np.interp(t_ref, t, res.column(name))
            dev = max(dev, float(np.max(np.abs(interp - ref.column(name)))))
        deviations[n] = dev

    return {
        "counts": counts,
        "reference_count": n_ref,
        "max_sigma_deviation": deviations,
        "peak_stress": ref.peak_stress,
        "results": results,
    }


# ---------------------------------------------------------------------------
# trace audits (constraint and dissipation contracts)

def audit_trace(result: PathResult, cfg: RunConfig) -> dict:
    """Audit every increment of a path for the constraint/dissipation contract.

    Checks: fraction sums exactly 1, |(alpha.alpha) - 1| <= 1e-10,
    |tr eps_pl| <= 1e-10, accepted yield residuals within their gates
    (two-sided whenever the channel moved), and non-negative dissipation
    dot products channel by channel.
    """
    params = cfg.params
    settings = cfg.resolved_settings()
    violations = []
    min_dots = {"lambda": np.inf, "alpha": np.inf, "plastic": np.inf}

    prev = cfg.initial_state()
    prev.alpha = initialize_orientation(result.records[0].eps)
    prev.initialized = True

    gates = {"lambda": settings.tol_lambda, "alpha": settings.tol_alpha,
             "plastic": settings.tol_plastic}

    for rec in result.records:
        if rec.lam.sum() != 1.0:
            violations.append(f"t={rec.t_index}: fraction sum {rec.lam.sum()!r} != 1")
        if abs(float(rec.alpha @ rec.alpha) - 1.0) > 1e-10:
            violations.append(f"t={rec.t_index}: orientation norm defect "
                              f"{abs(float(rec.alpha @ rec.alpha) - 1.0):.2e}")
        if abs(ttrace(rec.eps_pl)) > 1e-10:
            violations.append(f"t={rec.t_index}: plastic trace {ttrace(rec.eps_pl):.2e}")

        moved = {
            "lambda": not np.array_equal(rec.lam, prev.lam),
            "alpha": not np.array_equal(rec.alpha, prev.alpha),
            "plastic": not np.array_equal(rec.eps_pl, prev.eps_pl),
        }
        for name, phi in zip(("lambda", "alpha", "plastic"), rec.phi):
            if moved[name] and abs(phi) > gates[name]:
                violations.append(f"t={rec.t_index}: {name} moved, |phi| = {abs(phi):.2e}")
            elif not moved[name] and phi > gates[name]:
                violations.append(f"t={rec.t_index}: {name} gate open, phi = {phi:.2e}")

        # dissipation against the trial driving force that opened the gates
        forces = driving_forces(rec.eps, rec.theta, prev, params, cfg.projection)
        dots = {
            "lambda": float((rec.lam - prev.lam) @ forces.p_lambda),
            "alpha": float((rec.alpha - prev.alpha) @ forces.p_alpha),
            "plastic": ddot(rec.eps_pl - prev.eps_pl, forces.dev_sigma),
        }
        for name, dot in dots.items():
            min_dots[name] = min(min_dots[name], dot)
            if moved[name] and dot < -1e-12 * (1.0 + abs(dot)):
                violations.append(f"t={rec.t_index}: {name} dissipation dot {dot:.3e} < 0")

        prev = state_from_fractions(rec.lam)
        prev.alpha = rec.alpha.copy()
        prev.eps_pl = rec.eps_pl.copy()
        prev.kappa = rec.kappa
        prev.initialized = True

    return {
        "increments": len(result.records),
        "violations": violations,
        "ok": not violations,
        "min_dissipation_dots": {k: (v if np.isfinite(v) else 0.0) for k, v in min_dots.items()},
    }

"""Internal-variable state of one material point."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import chi_from_lam, normalize_fractions


@dataclass
class MaterialState:
    """Full internal-variable set: fractions (with logit coordinates),
    orientation, plastic strain, hardening, plus the cached stress.

    lam and chi are kept mutually consistent (chi = logit(lam)); lam carries
    the exactly-normalized values (lam.sum() == 1.0 bit-exact after every
    accepted update).
    """

    lam: np.ndarray
    chi: np.ndarray
    alpha: np.ndarray
    eps_pl: np.ndarray = field(default_factory=lambda: np.zeros(6))
    kappa: float = 0.0
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(6))
    initialized: bool = False

    def copy(self) -> "MaterialState":
        return MaterialState(
            lam=self.lam.copy(),
            chi=self.chi.copy(),
            alpha=self.alpha.copy(),
            eps_pl=self.eps_pl.copy(),
            kappa=self.kappa,
            sigma=self.sigma.copy(),
            initialized=self.initialized,
        )

    def with_(self, **kwargs) -> "MaterialState":
        """Copy with selected fields replaced (used for trial states)."""
        s = self.copy()
        for name, value in kwargs.items():
            setattr(s, name, value)
        return s

    def set_fractions(self, lam: np.ndarray) -> None:
        """Install fractions (renormalized to an exact unit sum) and re-sync chi."""
        self.lam = normalize_fractions(np.asarray(lam, dtype=float))
        self.chi = chi_from_lam(self.lam)


def state_from_fractions(lam) -> MaterialState:
    lam = normalize_fractions(np.asarray(lam, dtype=float))
    return MaterialState(lam=lam, chi=chi_from_lam(lam),
                         alpha=np.array([1.0, 0.0, 0.0, 0.0]))


def austenitic_state(seed_fraction: float = 0.01) -> MaterialState:
    """Nearly pure austenite with small equal martensite seeds (interior state)."""
    d = seed_fraction
    return state_from_fractions([1.0 - 3.0 * d, d, d, d])


def twinned_martensite_state(seed_fraction: float = 0.01) -> MaterialState:
    """Equal martensite variants (self-accommodated) with a small austenite seed."""
    d = seed_fraction
    m = (1.0 - d) / 3.0
    return state_from_fractions([d, m, m, m])

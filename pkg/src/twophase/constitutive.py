"""Two-phase Gibbs energy, reduced Helmholtz energy and state recovery.

The Gibbs energy of the mixture is

    G(p, theta, chi, grad chi) = T(chi) p - (delta/2) p^2 + W(theta, chi, |grad chi|^2)

with ``T(chi) = chi tau1 + (1 - chi) tau2``.  ``delta = 0`` is the
incompressible-phase case; ``delta > 0`` is a compressibility regularization
used only by the general (non-reduced) phase-field models.

When both phases are incompressible the concentration is slaved to the
density, ``chi = chi_bar(rho) = (1/rho - tau2) / tau_star``, and the mixture
is described by the Helmholtz energy

    F(theta, rho, grad rho) = W(theta, chi_bar(rho), chi_bar'(rho)^2 |grad rho|^2).

The gradient slot of ``W`` takes ``q = |grad chi|^2`` (no factor 1/2).
Every function here is vectorized: arguments may be floats or numpy arrays,
and gradient arguments carry their components on the leading axis.
"""

from __future__ import annotations

import abc
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, ParameterError, SimulationBlowup


class FreeEnergy(abc.ABC):
    """Interface for the specific energy ``W(theta, chi, q)`` with ``q = |grad chi|^2``.

    Implementations provide ``W`` and its first partials, the matching internal
    energy ``e = W - theta W_theta`` with its partials, and the inverse of
    ``e`` in ``theta``.
    """

    @abc.abstractmethod
    def value(self, theta, chi, q): ...

    @abc.abstractmethod
    def d_theta(self, theta, chi, q): ...

    @abc.abstractmethod
    def d_chi(self, theta, chi, q): ...

    @abc.abstractmethod
    def d_q(self, theta, chi, q): ...

    @abc.abstractmethod
    def d_chi_chi(self, theta, chi, q): ...

    def energy(self, theta, chi, q):
        return self.value(theta, chi, q) - theta * self.d_theta(theta, chi, q)

    @abc.abstractmethod
    def energy_partials(self, theta, chi, q):
        """Return ``(e_theta, e_chi, e_q)`` of the internal energy."""

    @abc.abstractmethod
    def entropy_partials(self, theta, chi, q):
        """Return ``(s_theta, s_chi, s_q)`` of the specific entropy ``s = -W_theta``."""

    @abc.abstractmethod
    def temperature(self, e, chi, q):
        """Solve ``energy(theta, chi, q) = e`` for ``theta``."""


@dataclass(frozen=True)
class SampleW(FreeEnergy):
    """``W = cv theta (1 - ln theta) + a chi^2 (1 - chi)^2 + (lam/2) q``.

    A caloric part, a symmetric double well with minima at ``chi = 0, 1``,
    and a quadratic gradient energy.
    """

    cv: float = 1.0
    a: float = 1.0
    lam: float = 1e-2

    def value(self, theta, chi, q):
        return self.cv * theta * (1.0 - np.log(theta)) + self.a * chi**2 * (1.0 - chi) ** 2 + 0.5 * self.lam * q

    def d_theta(self, theta, chi, q):
        return -self.cv * np.log(theta) + 0.0 * chi

    def d_chi(self, theta, chi, q):
        return 2.0 * self.a * chi * (1.0 - chi) * (1.0 - 2.0 * chi) + 0.0 * theta

    def d_q(self, theta, chi, q):
        return 0.5 * self.lam + 0.0 * (theta + chi + q)

    def d_chi_chi(self, theta, chi, q):
        return 2.0 * self.a * (1.0 - 6.0 * chi + 6.0 * chi**2) + 0.0 * theta

    def energy(self, theta, chi, q):
        return self.cv * theta + self.a * chi**2 * (1.0 - chi) ** 2 + 0.5 * self.lam * q

    def energy_partials(self, theta, chi, q):
        return (self.cv + 0.0 * theta, self.d_chi(theta, chi, q), self.d_q(theta, chi, q))

    def entropy_partials(self, theta, chi, q):
        zero = 0.0 * (theta + chi + q)
        return (self.cv / theta, zero, zero)

    def temperature(self, e, chi, q):
        return (e - self.a * chi**2 * (1.0 - chi) ** 2 - 0.5 * self.lam * q) / self.cv


@dataclass(frozen=True)
class FluidParams:
    """Constitutive and transport constants of the two-phase fluid.

    ``lam`` is the gradient-energy coefficient, ``eps`` the Allen-Cahn
    relaxation coefficient and ``gamma`` the Cahn-Hilliard mobility.  The
    optional ``free_energy`` replaces the sample ``W`` built from
    ``cv, a, lam``.
    """

    tau1: float = 1.0
    tau2: float = 0.5
    a: float = 1.0
    lam: float = 1e-2
    cv: float = 1.0
    eta: float = 1e-2
    zeta: float = 1e-2
    beta: float = 1e-2
    eps: float = 1e-2
    gamma: float = 1e-2
    delta: float = 1e-2
    free_energy: Optional[FreeEnergy] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("tau1", "tau2", "cv", "beta", "eps", "gamma"):
            _check(name, getattr(self, name), positive=True)
        for name in ("a", "lam", "eta", "zeta", "delta"):
            _check(name, getattr(self, name), positive=False)
        if self.tau1 == self.tau2:
            raise ParameterError("tau2", "tau* must be nonzero (tau1 == tau2)")

    @property
    def tau_star(self) -> float:
        return self.tau1 - self.tau2

    @property
    def W(self) -> FreeEnergy:
        if self.free_energy is not None:
            return self.free_energy
        return SampleW(self.cv, self.a, self.lam)

    def replace(self, **changes) -> FluidParams:
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "free_energy"}


def _check(name: str, value: float, positive: bool) -> None:
    if not np.isfinite(value):
        raise ParameterError(name, f"{name} must be finite")
    if positive and not value > 0:
        raise ParameterError(name, f"{name} must be > 0, got {value}")
    if not positive and value < 0:
        raise ParameterError(name, f"{name} must be >= 0, got {value}")


def specific_volume_mix(params: FluidParams, chi):
    """``T(chi) = chi tau1 + (1 - chi) tau2``."""
    return params.tau2 + params.tau_star * chi


def _sqnorm(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    return np.sum(g * g, axis=0)


# --- Gibbs description ------------------------------------------------------


@dataclass(frozen=True)
class GibbsPoint:
    p: np.ndarray
    theta: np.ndarray
    chi: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class ThermoGibbs:
    G: np.ndarray
    tau: np.ndarray
    s: np.ndarray
    G_chi: np.ndarray
    G_g: np.ndarray


def gibbs_eval(params: FluidParams, pt: GibbsPoint) -> ThermoGibbs:
    theta = np.asarray(pt.theta, dtype=float)
    if np.any(theta <= 0):
        raise DomainError("temperature must be positive")
    W = params.W
    p, chi = pt.p, pt.chi
    g = np.asarray(pt.g, dtype=float)
    q = _sqnorm(g)
    G = specific_volume_mix(params, chi) * p - 0.5 * params.delta * p**2 + W.value(theta, chi, q)
    return ThermoGibbs(
        G=G,
        tau=specific_volume_mix(params, chi) - params.delta * p,
        s=-W.d_theta(theta, chi, q),
        G_chi=params.tau_star * p + W.d_chi(theta, chi, q),
        G_g=2.0 * W.d_q(theta, chi, q) * g,
    )


# --- Helmholtz description of the reduced (incompressible-phase) fluid ------


def chi_bar(params: FluidParams, rho):
    """Concentration slaved to density, with its first two derivatives."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise DomainError("density must be positive")
    ts = params.tau_star
    return (1.0 / rho - params.tau2) / ts, -1.0 / (rho**2 * ts), 2.0 / (rho**3 * ts)


@dataclass(frozen=True)
class HelmholtzPoint:
    rho: np.ndarray
    theta: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class ThermoHelmholtz:
    F: np.ndarray
    s: np.ndarray
    F_rho: np.ndarray
    F_r: np.ndarray
    kappa: np.ndarray
    E: np.ndarray
    p: np.ndarray


def helmholtz_reduced_eval(params: FluidParams, pt: HelmholtzPoint) -> ThermoHelmholtz:
    theta = np.asarray(pt.theta, dtype=float)
    if np.any(theta <= 0):
        raise DomainError("temperature must be positive")
    rho = np.asarray(pt.rho, dtype=float)
    r = np.asarray(pt.r, dtype=float)
    chi, c1, c2 = chi_bar(params, rho)
    rr = _sqnorm(r)
    q = c1**2 * rr
    W = params.W
    F = W.value(theta, chi, q)
    s = -W.d_theta(theta, chi, q)
    Wq = W.d_q(theta, chi, q)
    F_rho = W.d_chi(theta, chi, q) * c1 + Wq * 2.0 * c1 * c2 * rr
    kappa = rho * 2.0 * Wq * c1**2
    return ThermoHelmholtz(
        F=F,
        s=s,
        F_rho=F_rho,
        F_r=2.0 * Wq * c1**2 * r,
        kappa=kappa,
        E=F + theta * s,
        p=rho**2 * F_rho,
    )


# --- conserved <-> primitive ------------------------------------------------


def general_pressure(params: FluidParams, rho, chi):
    """Pressure of the delta-regularized mixture, ``p = (T(chi) - 1/rho) / delta``."""
    if not params.delta > 0:
        raise DomainError("general phase-field models need delta > 0")
    return (specific_volume_mix(params, chi) - 1.0 / rho) / params.delta


def _thermal_args(params, rho, grad_rho, chi, grad_chi):
    if chi is None:
        c, c1, _ = chi_bar(params, rho)
        return c, c1**2 * _sqnorm(grad_rho), 0.0
    p = general_pressure(params, rho, chi)
    return chi, _sqnorm(grad_chi), 0.5 * params.delta * p**2


def total_energy(params: FluidParams, rho, u, theta, grad_rho=None, chi=None, grad_chi=None):
    """Total energy density ``rho (E + |u|^2 / 2)``.

    Without ``chi`` the fluid is the reduced one (``chi = chi_bar(rho)``);
    with ``chi`` it is the delta-regularized mixture, whose internal energy
    carries the extra ``delta p^2 / 2``.
    """
    c, q, extra = _thermal_args(params, rho, grad_rho, chi, grad_chi)
    e = params.W.energy(theta, c, q) + extra
    return rho * (e + 0.5 * _sqnorm(u))


def recover_state(params: FluidParams, rho, momentum, energy, grad_rho=None, chi=None, grad_chi=None):
    """Invert conserved ``(rho, rho u, rho (E + |u|^2/2))`` to ``(u, theta)``.

    Raises:
        SimulationBlowup: if density or the recovered temperature is not positive.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise SimulationBlowup(f"density lost positivity (min {np.min(rho):.3e})")
    u = momentum / rho
    c, q, extra = _thermal_args(params, rho, grad_rho, chi, grad_chi)
    e = energy / rho - 0.5 * _sqnorm(u) - extra
    theta = params.W.temperature(e, c, q)
    if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
        raise SimulationBlowup(f"temperature lost positivity (min {np.nanmin(theta):.3e})")
    return u, theta

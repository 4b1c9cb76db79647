"""Fluxes, stresses and entropy production for the diffuse-interface models.

Five model kinds share one conservative form

    d/dt rho      + div(rho u)                          = 0
    d/dt (rho u)  + div(rho u (x) u - T)                 = 0
    d/dt E_tot    + div(E_tot u - T u + w - beta grad theta) = 0
    d/dt (rho chi) + div(rho chi u)                     = rho j     (general kinds only)

and differ in the total stress ``T``, the interstitial work flux ``w`` and
the phase rate ``j``.

* ``NSK``: Korteweg fluid, ``T = -p I + K + S`` with the Helmholtz energy of
  the incompressible-phase mixture.
* ``NSAC_reduced`` / ``NSCH_reduced``: phase-field stress ``-p I + C + S``
  with ``chi = chi_bar(rho)``; the pressure is the Lagrange multiplier
  obtained from the Allen-Cahn resp. Cahn-Hilliard relation.  The
  ``route="korteweg"`` option assembles the same systems in Korteweg form
  with the modified viscous stress instead.
* ``NSAC_general`` / ``NSCH_general``: independent concentration with the
  delta-regularized equation of state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fields as fd
from .constitutive import (
    FluidParams,
    GibbsPoint,
    HelmholtzPoint,
    ThermoHelmholtz,
    chi_bar,
    general_pressure,
    gibbs_eval,
    helmholtz_reduced_eval,
    recover_state,
    total_energy,
)
from .errors import DomainError, UsageError
from .fields import GridSpec


class ModelKind(str, enum.Enum):
    NSK = "NSK"
    NSAC_REDUCED = "NSAC_reduced"
    NSCH_REDUCED = "NSCH_reduced"
    NSAC_GENERAL = "NSAC_general"
    NSCH_GENERAL = "NSCH_general"

    @property
    def general(self) -> bool:
        return self in (ModelKind.NSAC_GENERAL, ModelKind.NSCH_GENERAL)

    @property
    def reduced(self) -> bool:
        return self in (ModelKind.NSAC_REDUCED, ModelKind.NSCH_REDUCED)

    @property
    def phase(self) -> Optional[str]:
        """``"AC"``, ``"CH"`` or ``None`` for the plain Korteweg fluid."""
        if self in (ModelKind.NSAC_REDUCED, ModelKind.NSAC_GENERAL):
            return "AC"
        if self in (ModelKind.NSCH_REDUCED, ModelKind.NSCH_GENERAL):
            return "CH"
        return None

    @classmethod
    def parse(cls, name: str | ModelKind) -> ModelKind:
        if isinstance(name, ModelKind):
            return name
        for k in cls:
            if k.value.lower() == str(name).lower():
                return k
        raise UsageError(f"unknown model kind {name!r}; expected one of {[k.value for k in cls]}")


ROUTES = ("gibbs", "korteweg")


@dataclass(frozen=True)
class PrimState:
    """Primitive fields.  ``chi`` is present exactly for the general kinds."""

    grid: GridSpec
    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    chi: Optional[np.ndarray] = None

    def check(self, kind: ModelKind | None = None) -> PrimState:
        g = self.grid
        if g.rank_of(self.rho) != 0 or g.rank_of(self.theta) != 0 or g.rank_of(self.u) != 1:
            raise UsageError("state fields have the wrong rank")
        arrays = [self.rho, self.u, self.theta] + ([] if self.chi is None else [self.chi])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise DomainError("state contains non-finite values")
        if np.any(self.rho <= 0):
            raise DomainError("density must be positive")
        if np.any(self.theta <= 0):
            raise DomainError("temperature must be positive")
        if kind is not None:
            if kind.general and self.chi is None:
                raise DomainError(f"{kind.value} needs a concentration field")
            if not kind.general and self.chi is not None:
                raise DomainError(f"{kind.value} derives chi from rho; do not pass chi")
        return self


@dataclass
class Closure:
    """All pointwise and differentiated quantities of one model evaluation."""

    kind: ModelKind
    route: str
    state: PrimState
    grad_rho: np.ndarray
    grad_theta: np.ndarray
    div_u: np.ndarray
    sym_du: np.ndarray
    p: np.ndarray
    capillary: np.ndarray
    viscous: np.ndarray
    stress: np.ndarray
    work: np.ndarray
    energy: np.ndarray
    chi: Optional[np.ndarray] = None
    grad_chi: Optional[np.ndarray] = None
    G_chi: Optional[np.ndarray] = None
    G_g: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    j: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    helmholtz: Optional[ThermoHelmholtz] = None


@dataclass(frozen=True)
class FluxSet:
    mass: np.ndarray
    momentum: np.ndarray
    energy: np.ndarray
    work: np.ndarray
    heat: np.ndarray
    phase: Optional[np.ndarray] = None
    source: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EntropyPair:
    """Entropy flux ``Sigma`` and production ``sigma``; ``terms`` sum to ``sigma``."""

    Sigma: np.ndarray
    sigma: np.ndarray
    terms: dict = field(default_factory=dict)


# --- individual constitutive pieces ------------------------------------------


def zeta_eps(params: FluidParams, rho) -> np.ndarray:
    """Extra bulk viscosity ``eps / (rho tau*^2)`` of the reduced Allen-Cahn fluid."""
    return params.eps / (np.asarray(rho) * params.tau_star**2)


def viscous_stress(params: FluidParams, u: np.ndarray, grid: GridSpec, extra_bulk=0.0) -> np.ndarray:
    """``eta (Du)^s + (zeta + extra_bulk) div(u) I``."""
    d = fd.sym_grad(u, grid)
    return params.eta * d + (params.zeta + extra_bulk) * fd.div(u, grid) * fd.identity(grid)


def _helmholtz_fields(params, rho, theta, grid):
    r = fd.grad(rho, grid)
    return r, helmholtz_reduced_eval(params, HelmholtzPoint(rho, theta, r))


def korteweg_tensor(params: FluidParams, rho, theta, grid: GridSpec, _cache=None) -> np.ndarray:
    """``K = rho div(V) I - grad rho (x) V`` with ``V = d(rho F)/d(grad rho) = kappa grad rho``."""
    r, th = _cache or _helmholtz_fields(params, rho, theta, grid)
    V = rho * th.F_r
    return rho * fd.div(V, grid) * fd.identity(grid) - fd.outer(r, V)


def _chi_of(params, state: PrimState):
    if state.chi is not None:
        return state.chi
    return chi_bar(params, state.rho)[0]


def ericksen_tensor(params: FluidParams, state: PrimState) -> np.ndarray:
    """``C = -rho grad chi (x) dG/d(grad chi)``; chi is derived from rho when absent."""
    g = fd.grad(_chi_of(params, state), state.grid)
    # The p-dependent parts of G do not enter dG/d(grad chi).
    th = gibbs_eval(params, GibbsPoint(0.0, state.theta, _chi_of(params, state), g))
    return -state.rho * fd.outer(g, th.G_g)


def chemical_potential(params: FluidParams, state: PrimState, p) -> np.ndarray:
    """``mu = dG/dchi - div(rho dG/d(grad chi)) / rho``."""
    chi = _chi_of(params, state)
    g = fd.grad(chi, state.grid)
    th = gibbs_eval(params, GibbsPoint(p, state.theta, chi, g))
    return th.G_chi - fd.div(state.rho * th.G_g, state.grid) / state.rho


def phase_rate(params: FluidParams, kind: str, mu, theta, rho, grid: GridSpec) -> np.ndarray:
    """Allen-Cahn ``-mu/eps`` or Cahn-Hilliard ``div(gamma grad(mu/theta)) / rho``."""
    kind = kind.phase if isinstance(kind, ModelKind) else kind
    if kind == "AC":
        return -np.asarray(mu) / params.eps
    if kind == "CH":
        return fd.div(params.gamma * fd.grad(mu / theta, grid), grid) / rho
    raise UsageError(f"phase_rate kind must be 'AC' or 'CH', got {kind!r}")


def kinematic_rate(params: FluidParams, rho, div_u) -> np.ndarray:
    """Phase rate forced by incompressible phases: ``rho j = div(u) / tau*``."""
    return div_u / (rho * params.tau_star)


def interstitial_work(params: FluidParams, form: str, state: PrimState, j=None) -> np.ndarray:
    """Interstitial work flux.

    ``form="korteweg"``: ``kappa rho div(u) grad rho``.
    ``form="phase"``: ``-rho j dG/d(grad chi)``; ``j`` defaults to the
    kinematic rate of the reduced fluid.
    """
    grid = state.grid
    if form == "korteweg":
        r, th = _helmholtz_fields(params, state.rho, state.theta, grid)
        return th.kappa * state.rho * fd.div(state.u, grid) * r
    if form == "phase":
        if j is None:
            j = kinematic_rate(params, state.rho, fd.div(state.u, grid))
        chi = _chi_of(params, state)
        g = fd.grad(chi, grid)
        th = gibbs_eval(params, GibbsPoint(0.0, state.theta, chi, g))
        return -state.rho * j * th.G_g
    raise UsageError(f"unknown work-flux form {form!r}")


def lambda_term(params: FluidParams, state: PrimState, rtol: float = 1e-10) -> np.ndarray:
    """``phi = Lambda_gamma(div u)``: solution of ``-div(gamma grad phi) = div u``."""
    return fd.solve_lambda_gamma(state.u, params.gamma, state.grid, rtol=rtol)


def reduced_pressure(params: FluidParams, kind: str, state: PrimState, phi=None, _cache=None) -> np.ndarray:
    """Pressure of the reduced fluid from the Allen-Cahn or Cahn-Hilliard relation.

    AC: ``-eps div(u) / (tau*^2 rho) - rho chi' div(V / chi') - W_chi / tau*``
    CH: the first term becomes ``-theta phi / tau*^2`` with ``phi = Lambda_gamma(div u)``.
    Here ``V = d(rho F)/d(grad rho)`` and ``chi'`` is the derivative of ``chi_bar``.
    """
    kind = kind.phase if isinstance(kind, ModelKind) else kind
    grid, rho, theta = state.grid, state.rho, state.theta
    r, th = _cache or _helmholtz_fields(params, rho, theta, grid)
    chi, c1, _ = chi_bar(params, rho)
    V = rho * th.F_r
    q = c1**2 * np.sum(r * r, axis=0)
    capillary = -rho * c1 * fd.div(V / c1, grid)
    well = -params.W.d_chi(theta, chi, q) / params.tau_star
    div_u = fd.div(state.u, grid)
    if kind == "AC":
        first = -zeta_eps(params, rho) * div_u
    elif kind == "CH":
        if phi is None:
            phi = lambda_term(params, state)
        first = -theta * phi / params.tau_star**2
    else:
        raise UsageError(f"reduced_pressure kind must be 'AC' or 'CH', got {kind!r}")
    return first + capillary + well


# --- assembly -----------------------------------------------------------------


def closure(params: FluidParams, kind, state: PrimState, route: str = "gibbs", phi=None) -> Closure:
    """Evaluate every auxiliary field of ``kind`` at ``state``.

    ``route`` only matters for the reduced kinds: ``"gibbs"`` assembles the
    phase-field stress ``-p I + C + S``, ``"korteweg"`` the equivalent
    ``-p_bar I + K + S_eps`` (AC) or ``-p_bar I + K + S_gamma`` (CH).
    """
    kind = ModelKind.parse(kind)
    if route not in ROUTES:
        raise UsageError(f"route must be one of {ROUTES}")
    state.check(kind)
    if kind.general and not params.delta > 0:
        raise DomainError(f"{kind.value} requires delta > 0")
    grid = state.grid
    rho, u, theta = state.rho, state.u, state.theta
    eye = fd.identity(grid)
    div_u = fd.div(u, grid)
    sym_du = fd.sym_grad(u, grid)
    grad_theta = fd.grad(theta, grid)

    if kind.phase == "CH" and kind.reduced and phi is None:
        phi = lambda_term(params, state)

    if kind is ModelKind.NSK or (kind.reduced and route == "korteweg"):
        r, th = _helmholtz_fields(params, rho, theta, grid)
        K = korteweg_tensor(params, rho, theta, grid, _cache=(r, th))
        if kind.phase == "AC":
            S = viscous_stress(params, u, grid, extra_bulk=zeta_eps(params, rho))
        else:
            S = viscous_stress(params, u, grid)
            if kind.phase == "CH":
                S = S + (theta * phi / params.tau_star**2) * eye
        T = -th.p * eye + K + S
        w = th.kappa * rho * div_u * r
        energy = rho * (th.E + 0.5 * fd.dot(u, u))
        return Closure(
            kind, route, state, r, grad_theta, div_u, sym_du, th.p, K, S, T, w, energy,
            phi=phi, helmholtz=th,
        )

    r = fd.grad(rho, grid)
    if kind.reduced:
        cache = _helmholtz_fields(params, rho, theta, grid)
        th_h = cache[1]
        chi = chi_bar(params, rho)[0]
        p = reduced_pressure(params, kind, state, phi=phi, _cache=cache)
        energy = rho * (th_h.E + 0.5 * fd.dot(u, u))
    else:
        th_h = None
        chi = state.chi
        p = general_pressure(params, rho, chi)
        energy = total_energy(params, rho, u, theta, chi=chi, grad_chi=fd.grad(chi, grid))
    g = fd.grad(chi, grid)
    th = gibbs_eval(params, GibbsPoint(p, theta, chi, g))
    C = -rho * fd.outer(g, th.G_g)
    S = viscous_stress(params, u, grid)
    T = -p * eye + C + S
    mu = th.G_chi - fd.div(rho * th.G_g, grid) / rho
    if kind.reduced:
        j = kinematic_rate(params, rho, div_u)
    else:
        j = phase_rate(params, kind, mu, theta, rho, grid)
    w = -rho * j * th.G_g
    return Closure(
        kind, route, state, r, grad_theta, div_u, sym_du, p, C, S, T, w, energy,
        chi=chi, grad_chi=g, G_chi=th.G_chi, G_g=th.G_g, mu=mu, j=j, phi=phi, helmholtz=th_h,
    )


def fluxes_from_closure(params: FluidParams, c: Closure) -> FluxSet:
    s = c.state
    heat = -params.beta * c.grad_theta
    mom = s.rho * fd.outer(s.u, s.u) - c.stress
    en = c.energy * s.u - fd.matvec(c.stress, s.u) + c.work + heat
    phase = source = None
    if c.kind.general:
        phase = s.rho * s.chi * s.u
        source = s.rho * c.j
    return FluxSet(s.rho * s.u, mom, en, c.work, heat, phase, source)


def assemble_fluxes(params: FluidParams, kind, state: PrimState, route: str = "gibbs") -> FluxSet:
    return fluxes_from_closure(params, closure(params, kind, state, route))


def conserved(params: FluidParams, kind, state: PrimState) -> np.ndarray:
    """Stack ``(rho, rho u_1..d, E_tot[, rho chi])`` into one ``(nvar, *shape)`` array."""
    kind = ModelKind.parse(kind)
    grid, rho, u, theta = state.grid, state.rho, state.u, state.theta
    if kind.general:
        E = total_energy(params, rho, u, theta, chi=state.chi, grad_chi=fd.grad(state.chi, grid))
        return np.concatenate([rho[None], rho * u, E[None], (rho * state.chi)[None]])
    E = total_energy(params, rho, u, theta, grad_rho=fd.grad(rho, grid))
    return np.concatenate([rho[None], rho * u, E[None]])


def primitive(params: FluidParams, kind, grid: GridSpec, U: np.ndarray) -> PrimState:
    """Inverse of :func:`conserved`; raises ``SimulationBlowup`` on lost positivity."""
    kind = ModelKind.parse(kind)
    d = grid.dim
    rho, mom, E = U[0], U[1 : 1 + d], U[1 + d]
    if kind.general:
        if np.any(rho <= 0):
            recover_state(params, rho, mom, E)  # raises with a density diagnostic
        chi = U[2 + d] / rho
        u, theta = recover_state(params, rho, mom, E, chi=chi, grad_chi=fd.grad(chi, grid))
        return PrimState(grid, rho, u, theta, chi)
    if np.any(rho <= 0):
        recover_state(params, rho, mom, E)
    u, theta = recover_state(params, rho, mom, E, grad_rho=fd.grad(rho, grid))
    return PrimState(grid, rho, u, theta)


def rate_from_closure(params: FluidParams, c: Closure) -> np.ndarray:
    """``dU/dt = -div(F) + source`` in the layout of :func:`conserved`."""
    f = fluxes_from_closure(params, c)
    grid = c.state.grid
    parts = [-fd.div(f.mass, grid)[None], -fd.div_tensor(f.momentum, grid), -fd.div(f.energy, grid)[None]]
    if c.kind.general:
        parts.append((-fd.div(f.phase, grid) + f.source)[None])
    return np.concatenate(parts)


def time_derivative(params: FluidParams, kind, state: PrimState, route: str = "gibbs") -> np.ndarray:
    return rate_from_closure(params, closure(params, kind, state, route))


def entropy_from_closure(params: FluidParams, c: Closure, form: str | None = None) -> EntropyPair:
    """Entropy flux and production matching the closure's model and route.

    For ``NSCH_reduced`` two equivalent forms exist: ``form="phi"`` (the
    default, written with ``phi = Lambda_gamma(div u)``) and ``form="mu"``
    (the general Cahn-Hilliard form with the chemical potential).
    """
    s = c.state
    grid, rho, theta = s.grid, s.rho, s.theta
    bulk = params.zeta
    if c.kind.phase == "AC" and c.route == "korteweg":
        bulk = params.zeta + zeta_eps(params, rho)
    visc = (params.eta * fd.contract(c.sym_du, c.sym_du) + bulk * c.div_u**2) / theta
    heat = params.beta * fd.dot(c.grad_theta, c.grad_theta) / theta**2
    Sigma = params.beta * c.grad_theta / theta
    terms = {"viscous": visc, "heat": heat}

    if c.kind.phase == "AC" and c.route == "gibbs":
        terms["phase"] = params.eps * rho * c.j**2 / theta
    elif c.kind.phase == "CH":
        if form is None:
            form = "phi" if c.kind.reduced else "mu"
        if form == "phi":
            if c.phi is None:
                raise UsageError("phi-form entropy needs the reduced Cahn-Hilliard closure")
            gphi = fd.grad(c.phi, grid)
            k = params.gamma / params.tau_star**2
            Sigma = Sigma - k * c.phi * gphi
            terms["phase"] = k * fd.dot(gphi, gphi)
        elif form == "mu":
            mu = c.mu if c.mu is not None else _mu_for(params, c)
            m = mu / theta
            gm = fd.grad(m, grid)
            Sigma = Sigma - params.gamma * m * gm
            terms["phase"] = params.gamma * fd.dot(gm, gm)
        else:
            raise UsageError(f"unknown entropy form {form!r}")
    sigma = sum(terms.values())
    return EntropyPair(Sigma, sigma, terms)


def _mu_for(params, c: Closure):
    p = reduced_pressure(params, c.kind, c.state, phi=c.phi)
    return chemical_potential(params, c.state, p)


def entropy_production(params: FluidParams, kind, state: PrimState, route: str = "gibbs", form=None) -> EntropyPair:
    return entropy_from_closure(params, closure(params, kind, state, route), form=form)


def specific_entropy(params: FluidParams, kind, state: PrimState) -> np.ndarray:
    """``s = -dW/dtheta`` (the p-dependent parts of G are temperature free)."""
    chi = _chi_of(params, state)
    if state.chi is None:
        q = chi_bar(params, state.rho)[1] ** 2 * np.sum(fd.grad(state.rho, state.grid) ** 2, axis=0)
    else:
        q = np.sum(fd.grad(chi, state.grid) ** 2, axis=0)
    return -params.W.d_theta(state.theta, chi, q)


def material_rates(params: FluidParams, kind, state: PrimState, dU: np.ndarray) -> dict:
    """Time derivatives of the primitive and thermodynamic fields induced by ``dU/dt``.

    Exact chain rule through :func:`primitive`, including the dependence of
    the internal energy on density and concentration gradients.  Returns a
    dict with keys ``rho, u, theta, chi, q, s``.
    """
    kind = ModelKind.parse(kind)
    grid, rho, u, theta = state.grid, state.rho, state.u, state.theta
    d = grid.dim
    W = params.W
    drho, dmom, dE = dU[0], dU[1 : 1 + d], dU[1 + d]
    E = conserved(params, kind, state)[1 + d]
    du = (dmom - u * drho) / rho
    de_spec = (dE - E / rho * drho) / rho  # d/dt of E_tot / rho
    if kind.general:
        chi = state.chi
        dchi = (dU[2 + d] - chi * drho) / rho
        g = fd.grad(chi, grid)
        q = np.sum(g * g, axis=0)
        dq = 2.0 * fd.dot(g, fd.grad(dchi, grid))
        p = general_pressure(params, rho, chi)
        dp = (params.tau_star * dchi + drho / rho**2) / params.delta
        dextra = params.delta * p * dp
    else:
        chi, c1, c2 = chi_bar(params, rho)
        r = fd.grad(rho, grid)
        rr = np.sum(r * r, axis=0)
        q = c1**2 * rr
        dq = 2.0 * c1 * c2 * rr * drho + c1**2 * 2.0 * fd.dot(r, fd.grad(drho, grid))
        dchi = c1 * drho
        dextra = 0.0
    e_t, e_c, e_q = W.energy_partials(theta, chi, q)
    dtheta = (de_spec - fd.dot(u, du) - e_c * dchi - e_q * dq - dextra) / e_t
    s_t, s_c, s_q = W.entropy_partials(theta, chi, q)
    ds = s_t * dtheta + s_c * dchi + s_q * dq
    return {"rho": drho, "u": du, "theta": dtheta, "chi": dchi, "q": dq, "s": ds}

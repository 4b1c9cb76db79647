"""Explicit RK4 method-of-lines integration of the 1D models in conservative form."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import fields as fd
from . import manufactured as mf
from .constitutive import FluidParams, HelmholtzPoint, chi_bar, helmholtz_reduced_eval
from .errors import SimulationBlowup, UsageError
from .fields import GridSpec
from .models import (
    ModelKind,
    PrimState,
    closure,
    conserved,
    entropy_from_closure,
    primitive,
    rate_from_closure,
    specific_entropy,
    zeta_eps,
)

log = logging.getLogger(__name__)

DEFAULT_CFL = 0.4


# --- step-size control -----------------------------------------------------------


def dt_constraints(params: FluidParams, kind, state: PrimState) -> dict[str, float]:
    """Stability limits (before the CFL factor) of every active process."""
    kind = ModelKind.parse(kind)
    grid, rho, u, theta = state.grid, state.rho, state.u, state.theta
    h = grid.h
    W = params.W
    speed = np.sqrt(np.sum(u * u, axis=0))
    if kind.general:
        chi = state.chi
        c2 = 1.0 / (rho**2 * params.delta)
    else:
        chi, c1, _ = chi_bar(params, rho)
        # p_bar without gradients is -W_chi(chi_bar(rho)) / tau*.
        c2 = np.abs(W.d_chi_chi(theta, chi, 0.0 * chi) * c1 / params.tau_star)
    out = {"advective": float(np.min(h / (speed + np.sqrt(c2) + 1e-300)))}

    bulk = params.eta + params.zeta
    if kind is ModelKind.NSAC_REDUCED:
        bulk = bulk + zeta_eps(params, rho)
    if np.any(bulk > 0):
        out["viscous"] = float(np.min(h**2 * rho / bulk))
    out["thermal"] = float(np.min(h**2 * rho * params.cv / params.beta))

    r = fd.grad(rho, grid)
    kappa = helmholtz_reduced_eval(params, HelmholtzPoint(rho, theta, r)).kappa
    out["capillary"] = float(np.min(h**2 / np.sqrt(kappa * rho + 1e-300)))

    if kind.general:
        g = fd.grad(chi, grid)
        q = np.sum(g * g, axis=0)
        stiff = params.tau_star**2 / params.delta + np.abs(W.d_chi_chi(theta, chi, q)) + 2.0 * W.d_q(theta, chi, q) / h**2
        if kind.phase == "AC":
            out["phase"] = float(np.min(params.eps / stiff))
        else:
            out["phase"] = float(np.min(rho * theta * h**2 / (params.gamma * stiff)))
    elif kind is ModelKind.NSCH_REDUCED:
        out["nonlocal"] = float(np.min(rho * params.tau_star**2 * params.gamma / theta))
    return out


def stable_dt(params: FluidParams, kind, state: PrimState, cfl: float = DEFAULT_CFL) -> float:
    return cfl * min(dt_constraints(params, kind, state).values())


# --- RK4 ----------------------------------------------------------------------


def _stage(params, kind, grid, U, route):
    st = primitive(params, kind, grid, U)
    c = closure(params, kind, st, route)
    sigma = fd.integrate_domain(entropy_from_closure(params, c).sigma, grid)
    return rate_from_closure(params, c), sigma


def rk4_step(params: FluidParams, kind, grid: GridSpec, U: np.ndarray, dt: float, route: str = "gibbs"):
    """Advance conserved variables by ``dt``; also return the RK4 quadrature of ``int sigma dt``."""
    k1, s1 = _stage(params, kind, grid, U, route)
    k2, s2 = _stage(params, kind, grid, U + 0.5 * dt * k1, route)
    k3, s3 = _stage(params, kind, grid, U + 0.5 * dt * k2, route)
    k4, s4 = _stage(params, kind, grid, U + dt * k3, route)
    U_new = U + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return U_new, dt / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4)


def step(params: FluidParams, kind, state: PrimState, dt: float, route: str = "gibbs") -> PrimState:
    """One classical RK4 step; raises ``SimulationBlowup`` on lost positivity."""
    if not dt > 0:
        raise UsageError("dt must be positive")
    kind = ModelKind.parse(kind)
    state.check(kind)
    U = conserved(params, kind, state)
    U_new, _ = rk4_step(params, kind, state.grid, U, dt, route)
    return primitive(params, kind, state.grid, U_new)


# --- scenarios ----------------------------------------------------------------

PRESETS = ("uniform", "tanh", "manufactured", "random")


@dataclass
class Scenario:
    kind: ModelKind = ModelKind.NSK
    params: FluidParams = field(default_factory=FluidParams)
    grid: GridSpec = field(default_factory=GridSpec)
    preset: str = "manufactured"
    preset_options: dict = field(default_factory=dict)
    end_time: float = 0.1
    cfl: float = DEFAULT_CFL
    output_every: int = 10
    residuals: Sequence[str] = ()
    route: str = "gibbs"
    dt: Optional[float] = None
    max_steps: int = 10_000_000

    def initial_state(self) -> PrimState:
        return initial_state(self.preset, self.params, self.grid, self.kind, **self.preset_options)


def initial_state(preset: str, params: FluidParams, grid: GridSpec, kind=ModelKind.NSK, **opts) -> PrimState:
    kind = ModelKind.parse(kind)
    general = kind.general
    if preset == "uniform":
        rho = opts.get("rho", 1.5)
        chi = float(chi_bar(params, rho)[0]) if general else None
        return mf.uniform_state(params, grid, rho=rho, theta=opts.get("theta", 1.0), u=opts.get("u", 0.0), chi=chi)
    if preset == "tanh":
        return mf.tanh_interface_state(params, grid, with_chi=general, **opts)
    if preset == "manufactured":
        return mf.Family(**opts).state(params, grid, with_chi=general)
    if preset == "random":
        return mf.random_smooth_state(params, grid, with_chi=general, **opts)
    raise UsageError(f"unknown preset {preset!r}; expected one of {PRESETS}")


@dataclass
class Trajectory:
    """Snapshots ``(t, state)`` at the output cadence and one diagnostics row per step."""

    kind: ModelKind
    grid: GridSpec
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    aborted: Optional[str] = None
    failed_step: Optional[int] = None
    failed_state: Optional[PrimState] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([row["t"] for row in self.diagnostics])

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.diagnostics])

    @property
    def final_state(self) -> PrimState:
        return self.snapshots[-1][1]


DIAG_COLUMNS = ("t", "mass", "momentum", "energy", "entropy", "sigma_integral", "min_theta", "min_sigma")


def diagnostics(params: FluidParams, kind, state: PrimState, route: str = "gibbs") -> dict:
    kind = ModelKind.parse(kind)
    grid = state.grid
    U = conserved(params, kind, state)
    d = grid.dim
    c = closure(params, kind, state, route)
    sigma = entropy_from_closure(params, c).sigma
    s = specific_entropy(params, kind, state)
    mom = [fd.integrate_domain(U[1 + a], grid) for a in range(d)]
    return {
        "mass": fd.integrate_domain(U[0], grid),
        "momentum": mom[0] if d == 1 else float(np.linalg.norm(mom)),
        "energy": fd.integrate_domain(U[1 + d], grid),
        "entropy": fd.integrate_domain(state.rho * s, grid),
        "min_theta": float(np.min(state.theta)),
        "min_sigma": float(np.min(sigma)),
    }


def _residuals(params, state, names) -> dict:
    from .reduction import run_identity

    return {name: run_identity(name, params, state).linf for name in names}


def simulate(scenario: Scenario, progress: Callable | None = None) -> Trajectory:
    """Integrate ``scenario`` to its end time.

    A loss of positivity stops the run; the partial trajectory is returned
    with ``aborted``, ``failed_step`` and ``failed_state`` set.
    """
    kind = ModelKind.parse(scenario.kind)
    grid, params = scenario.grid, scenario.params
    if grid.dim != 1:
        raise UsageError("time integration is implemented for dim = 1 only")
    state = scenario.initial_state().check(kind)
    traj = Trajectory(kind, grid)
    t = 0.0
    sigma_int = 0.0

    def record(step_no, st, force_snapshot=False):
        row = {"t": t, **diagnostics(params, kind, st, scenario.route), "sigma_integral": sigma_int}
        if scenario.residuals:
            row.update(_residuals(params, st, scenario.residuals))
        traj.diagnostics.append(row)
        if force_snapshot or step_no % max(1, scenario.output_every) == 0:
            traj.snapshots.append((t, st))

    record(0, state, True)
    U = conserved(params, kind, state)
    n_step = 0
    while t < scenario.end_time and n_step < scenario.max_steps:
        try:
            dt = scenario.dt or stable_dt(params, kind, state, scenario.cfl)
            dt = min(dt, scenario.end_time - t)
            # Avoid a sliver step from round-off in the accumulated time.
            if scenario.end_time - (t + dt) < 1e-12 * max(1.0, scenario.end_time):
                dt = scenario.end_time - t
            U_new, dsig = rk4_step(params, kind, grid, U, dt, scenario.route)
            new_state = primitive(params, kind, grid, U_new)
        except SimulationBlowup as exc:
            traj.aborted = str(exc)
            traj.failed_step = n_step + 1
            traj.failed_state = exc.state if exc.state is not None else state
            log.error("step %d at t=%.6g aborted: %s", n_step + 1, t, exc)
            break
        n_step += 1
        U, state = U_new, new_state
        t = t + dt
        sigma_int += dsig
        done = t >= scenario.end_time
        record(n_step, state, force_snapshot=done)
        if progress is not None:
            progress(n_step, t)
    return traj


def diagnostics_csv(traj: Trajectory, residual_names: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(DIAG_COLUMNS) + list(residual_names)
    w.writerow(cols)
    for row in traj.diagnostics:
        w.writerow([repr(float(row[c])) for c in cols])
    return buf.getvalue()


def relative_drift(values: np.ndarray, scale: float | None = None) -> float:
    """Largest deviation from the initial value, relative to ``scale`` (default ``|initial|``)."""
    values = np.asarray(values, dtype=float)
    ref = abs(values[0]) if scale is None else scale
    if ref == 0.0:
        return float(np.max(np.abs(values - values[0])))
    return float(np.max(np.abs(values - values[0])) / ref)


def fourier_mode(f: np.ndarray, k: int = 1) -> complex:
    """Complex amplitude of ``exp(i k x)`` in a 1D periodic sample."""
    return complex(np.fft.fft(f)[k] / f.size)


def linearized_mode_eigs(params: FluidParams, kind, base: PrimState, k: int = 1, step: float = 1e-7,
                         route: str = "gibbs"):
    """Eigenpairs of the finite-difference Jacobian of ``dU/dt`` restricted to Fourier mode ``k``.

    ``base`` must be spatially uniform, so the Jacobian is translation
    invariant and maps ``exp(i k x)`` perturbations onto themselves.
    Returns ``(eigenvalues, eigenvectors)`` of the ``nvar x nvar`` block.
    """
    kind = ModelKind.parse(kind)
    grid = base.grid
    U0 = conserved(params, kind, base)
    nvar = U0.shape[0]
    (x,) = grid.coords()
    wave = np.exp(1j * k * 2.0 * np.pi * x / grid.length)

    def rate(U):
        return rate_from_closure(params, closure(params, kind, primitive(params, kind, grid, U), route))

    block = np.zeros((nvar, nvar), dtype=complex)
    for b in range(nvar):
        cols = []
        for part in (wave.real, wave.imag):
            dU = np.zeros_like(U0)
            dU[b] = part
            cols.append((rate(U0 + step * dU) - rate(U0 - step * dU)) / (2 * step))
        jv = cols[0] + 1j * cols[1]
        block[:, b] = (jv @ np.conj(wave)) / grid.n
    return np.linalg.eig(block)


def dominant_frequency(times: np.ndarray, amplitudes: np.ndarray) -> float:
    """Mean angular velocity of a complex amplitude history (unwrapped phase slope)."""
    phase = np.unwrap(np.angle(amplitudes))
    slope = np.polyfit(times, phase, 1)[0]
    return float(slope)


def entropy_budget(traj: Trajectory) -> float:
    """``|Delta int rho s - int int sigma dt dx|`` over the trajectory."""
    ent = traj.column("entropy")
    return abs((ent[-1] - ent[0]) - traj.diagnostics[-1]["sigma_integral"])


def max_entropy_decrease(traj: Trajectory) -> float:
    ent = traj.column("entropy")
    return float(max(0.0, np.max(ent[:-1] - ent[1:]))) if ent.size > 1 else 0.0

"""Smooth periodic test states shared by the checkers, presets and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import FluidParams, chi_bar, specific_volume_mix
from .fields import GridSpec
from .models import PrimState


@dataclass(frozen=True)
class Family:
    """``rho = rho0 (1 + alpha sin kx)``, ``u = u0 sin 2kx``, ``theta = theta0 (1 + alpha_t cos kx)``.

    In 2D each profile is the tensor product of the 1D modes in x and y,
    and the two velocity components are rotated copies of each other so
    that ``div u`` does not vanish.  ``alpha_chi`` perturbs the slaved
    concentration for the general phase-field kinds.
    """

    rho0: float = 1.5
    alpha: float = 0.1
    u0: float = 0.05
    theta0: float = 1.0
    alpha_t: float = 0.01
    alpha_chi: float = 0.02
    k: int = 1

    def wavenumber(self, grid: GridSpec) -> float:
        return 2.0 * np.pi * self.k / grid.length

    def state(self, params: FluidParams, grid: GridSpec, with_chi: bool = False) -> PrimState:
        k = self.wavenumber(grid)
        if grid.dim == 1:
            (x,) = grid.coords()
            rho = self.rho0 * (1.0 + self.alpha * np.sin(k * x))
            u = (self.u0 * np.sin(2 * k * x))[None]
            theta = self.theta0 * (1.0 + self.alpha_t * np.cos(k * x))
            dchi = self.alpha_chi * np.cos(k * x)
        else:
            x, y = grid.coords()
            rho = self.rho0 * (1.0 + self.alpha * np.sin(k * x) * np.sin(k * y))
            u = self.u0 * np.stack(
                [np.sin(2 * k * x) * np.cos(k * y), np.cos(k * x) * np.sin(2 * k * y)]
            )
            theta = self.theta0 * (1.0 + self.alpha_t * np.cos(k * x) * np.cos(k * y))
            dchi = self.alpha_chi * np.cos(k * x) * np.cos(k * y)
        chi = None
        if with_chi:
            chi = chi_bar(params, rho)[0] + dchi
        return PrimState(grid, rho, u, theta, chi)


DEFAULT_FAMILY = Family()


def manufactured_state(params: FluidParams, grid: GridSpec, with_chi: bool = False, family: Family = DEFAULT_FAMILY) -> PrimState:
    return family.state(params, grid, with_chi)


def uniform_state(params: FluidParams, grid: GridSpec, rho: float = 1.5, theta: float = 1.0,
                  u=0.0, chi: float | None = None) -> PrimState:
    shape = grid.shape
    uu = np.broadcast_to(np.asarray(u, dtype=float).reshape(-1, *([1] * grid.dim)), (grid.dim,) + shape).copy()
    return PrimState(
        grid,
        np.full(shape, float(rho)),
        uu,
        np.full(shape, float(theta)),
        None if chi is None else np.full(shape, float(chi)),
    )


def tanh_interface_state(params: FluidParams, grid: GridSpec, chi_lo: float = 0.1, chi_hi: float = 0.9,
                         width: float = 0.5, theta: float = 1.0, with_chi: bool = False) -> PrimState:
    """Two smooth interfaces at x = L/4 and 3L/4 between two concentration plateaus."""
    x = grid.coords()[0]
    L = grid.length
    s = 0.5 * (np.tanh((x - 0.25 * L) / width) - np.tanh((x - 0.75 * L) / width))
    chi = chi_lo + (chi_hi - chi_lo) * s
    rho = 1.0 / specific_volume_mix(params, chi)
    u = np.zeros((grid.dim,) + grid.shape)
    return PrimState(grid, rho, u, np.full(grid.shape, float(theta)), chi.copy() if with_chi else None)


def random_smooth_state(params: FluidParams, grid: GridSpec, seed: int = 0, modes: int = 3,
                        rho0: float = 1.5, amp: float = 0.05, with_chi: bool = False) -> PrimState:
    """Sum of a few random low Fourier modes around a uniform state."""
    rng = np.random.default_rng(seed)
    coords = grid.coords()
    kx = 2.0 * np.pi / grid.length

    def field():
        out = np.zeros(grid.shape)
        for m in range(1, modes + 1):
            phase = rng.uniform(0, 2 * np.pi, size=grid.dim)
            c = rng.normal(size=grid.dim)
            for a in range(grid.dim):
                out += c[a] * np.sin(m * kx * coords[a] + phase[a]) / m
        return out / max(1.0, np.max(np.abs(out)))

    rho = rho0 * (1.0 + amp * field())
    u = np.stack([amp * field() for _ in range(grid.dim)])
    theta = 1.0 + 0.5 * amp * field()
    chi = chi_bar(params, rho)[0] + 0.2 * amp * field() if with_chi else None
    return PrimState(grid, rho, u, theta, chi)

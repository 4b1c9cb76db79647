"""Periodic structured grids and second-order finite-difference operators.

Fields are plain numpy arrays whose trailing ``grid.dim`` axes are the cell
axes.  A scalar field has shape ``grid.shape``, a vector field
``(d, *grid.shape)`` and a tensor field ``(d, d, *grid.shape)``.  Component
``T[i, j]`` of a tensor is row ``i``, column ``j``; ``div_tensor`` contracts
over the column index.

All first derivatives are two-cell central differences.  Divergence and
gradient share that stencil, so ``div(grad f)`` is the operator called
``laplacian`` here and summation-by-parts identities hold to round-off.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ParameterError, SolverError, UsageError


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``n`` cells per axis on ``[0, length)^dim``."""

    dim: int = 1
    n: int = 64
    length: float = 2.0 * np.pi

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError("dim", f"dim must be 1 or 2, got {self.dim}")
        if int(self.n) != self.n or self.n < 8:
            raise ParameterError("n", f"n must be an integer >= 8, got {self.n}")
        if not self.length > 0 or not np.isfinite(self.length):
            raise ParameterError("length", f"length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def coords(self) -> tuple[np.ndarray, ...]:
        """Cell coordinates as ``dim`` arrays of shape ``grid.shape`` (``ij`` indexing)."""
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def refine(self) -> GridSpec:
        return GridSpec(self.dim, 2 * self.n, self.length)

    def rank_of(self, f: np.ndarray) -> int:
        """Tensor rank of ``f`` on this grid (0, 1 or 2)."""
        f = np.asarray(f)
        rank = f.ndim - self.dim
        if rank < 0 or rank > 2 or f.shape[rank:] != self.shape:
            raise UsageError(f"array of shape {f.shape} is not a field on a {self.shape} grid")
        if any(s != self.dim for s in f.shape[:rank]):
            raise UsageError(f"component shape {f.shape[:rank]} does not match dim={self.dim}")
        return rank


def _d(f: np.ndarray, axis: int, grid: GridSpec) -> np.ndarray:
    """Central difference along grid ``axis`` of an array with leading component axes."""
    ax = f.ndim - grid.dim + axis
    return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * grid.h)


def _require_finite(f: np.ndarray) -> None:
    if not np.all(np.isfinite(f)):
        raise UsageError("field contains non-finite values")


def grad(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.stack([_d(f, a, grid) for a in range(grid.dim)])


def div(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = _d(v[0], 0, grid)
    for a in range(1, grid.dim):
        out = out + _d(v[a], a, grid)
    return out


def div_tensor(t: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.stack([div(t[i], grid) for i in range(grid.dim)])


def jacobian(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Velocity gradient ``Du`` with ``Du[i, j] = d v_i / d x_j``."""
    return np.stack([grad(v[i], grid) for i in range(grid.dim)])


def sym_grad(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    du = jacobian(v, grid)
    return 0.5 * (du + np.swapaxes(du, 0, 1))


def laplacian(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return div(grad(f, grid), grid)


_KINDS = {
    "grad": (0, grad),
    "laplacian": (0, laplacian),
    "div": (1, div),
    "sym_grad": (1, sym_grad),
    "div_tensor": (2, div_tensor),
}


def differentiate(kind: str, f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Apply a named differential operator after checking the rank of ``f``.

    ``kind`` is one of ``grad``, ``laplacian`` (scalar input), ``div``,
    ``sym_grad`` (vector input) or ``div_tensor`` (tensor input).
    """
    if kind not in _KINDS:
        raise UsageError(f"unknown operator {kind!r}; expected one of {sorted(_KINDS)}")
    rank, op = _KINDS[kind]
    f = np.asarray(f, dtype=float)
    got = grid.rank_of(f)
    if got != rank:
        raise UsageError(f"{kind} expects a rank-{rank} field, got rank {got}")
    _require_finite(f)
    return op(f, grid)


def integrate_domain(f: np.ndarray, grid: GridSpec) -> float:
    """Midpoint-rule integral ``h^d * sum(f)`` in a fixed (C-order) summation order."""
    f = np.asarray(f, dtype=float)
    if grid.rank_of(f) != 0:
        raise UsageError("integrate_domain expects a scalar field")
    return float(np.sum(f.ravel()) * grid.cell_volume)


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise inner product of two vector fields."""
    return np.einsum("i...,i...->...", a, b)


def outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("i...,j...->ij...", a, b)


def contract(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Double contraction ``S : T`` of two tensor fields."""
    return np.einsum("ij...,ij...->...", s, t)


def matvec(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,j...->i...", t, v)


def identity(grid: GridSpec) -> np.ndarray:
    eye = np.zeros((grid.dim, grid.dim) + grid.shape)
    for i in range(grid.dim):
        eye[i, i] = 1.0
    return eye


def trace(t: np.ndarray) -> np.ndarray:
    return np.einsum("ii...->...", t)


# --- elliptic solution operator -------------------------------------------


def _null_modes(grid: GridSpec) -> list[np.ndarray]:
    """Orthonormal basis of the kernel of the central gradient.

    Constants always; for even ``n`` also the odd-even (checkerboard) modes
    along each axis, which the two-cell stencil cannot see.
    """
    idx = np.arange(grid.n)
    factors = [np.ones(grid.n)]
    if grid.n % 2 == 0:
        factors.append((-1.0) ** idx)
    modes = []
    for combo in np.ndindex(*([len(factors)] * grid.dim)):
        m = factors[combo[0]]
        for a in range(1, grid.dim):
            m = np.multiply.outer(m, factors[combo[a]])
        modes.append(m / np.sqrt(grid.size))
    return modes


def project_gauge(phi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Remove the kernel components of the central gradient (zero-mean gauge)."""
    for m in _null_modes(grid):
        phi = phi - np.sum(m * phi) * m
    return phi


def _symbol(grid: GridSpec) -> np.ndarray:
    """Fourier symbol of ``-div grad`` for the central stencil."""
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.h)
    s = (np.sin(k * grid.h) / grid.h) ** 2
    out = np.zeros(grid.shape)
    for a in range(grid.dim):
        shape = [1] * grid.dim
        shape[a] = grid.n
        out = out + s.reshape(shape)
    return out


def elliptic_operator(phi: np.ndarray, gamma, grid: GridSpec) -> np.ndarray:
    """``-div(gamma grad phi)`` with the shared central stencils."""
    return -div(gamma * grad(phi, grid), grid)


def _spectral_solve(rhs: np.ndarray, gamma: float, grid: GridSpec) -> np.ndarray:
    sym = gamma * _symbol(grid)
    rhat = np.fft.fftn(rhs)
    # Below this the symbol is a round-off zero of a kernel mode.
    mask = sym > 1e-12 * sym.max()
    phat = np.zeros_like(rhat)
    phat[mask] = rhat[mask] / sym[mask]
    return np.fft.ifftn(phat).real


def solve_lambda_gamma(
    u: np.ndarray,
    gamma: Union[float, np.ndarray],
    grid: GridSpec,
    rtol: float = 1e-10,
    maxiter: int | None = None,
) -> np.ndarray:
    """Solve ``-div(gamma grad phi) = div u`` on the periodic grid.

    A positive scalar ``gamma`` uses an FFT solve of the discrete operator.  A
    field ``gamma`` uses conjugate gradients preconditioned by the FFT solve
    with the mean coefficient.  The returned ``phi`` carries the zero-mean
    gauge (all kernel modes of the central gradient projected out).

    Raises:
        SolverError: if the relative residual does not reach ``rtol``.
    """
    u = np.asarray(u, dtype=float)
    if grid.rank_of(u) != 1:
        raise UsageError("solve_lambda_gamma expects a vector field")
    _require_finite(u)
    rhs = div(u, grid)
    scale = np.max(np.abs(rhs))
    if scale == 0.0:
        return np.zeros(grid.shape)

    if np.ndim(gamma) == 0:
        gamma = float(gamma)
        if not gamma > 0:
            raise UsageError("gamma must be positive")
        phi = project_gauge(_spectral_solve(rhs, gamma, grid), grid)
    else:
        gamma = np.asarray(gamma, dtype=float)
        if grid.rank_of(gamma) != 0 or not np.all(gamma > 0):
            raise UsageError("gamma must be a positive scalar field")
        gbar = float(np.mean(gamma))
        shape = grid.shape
        op = spla.LinearOperator(
            (grid.size, grid.size),
            matvec=lambda x: elliptic_operator(x.reshape(shape), gamma, grid).ravel(),
            dtype=float,
        )
        pre = spla.LinearOperator(
            (grid.size, grid.size),
            matvec=lambda x: project_gauge(_spectral_solve(x.reshape(shape), gbar, grid), grid).ravel(),
            dtype=float,
        )
        b = project_gauge(rhs, grid).ravel()
        # cg's own stopping test is on the 2-norm; tighten it and re-check in max-norm below.
        x, _ = spla.cg(op, b, rtol=1e-3 * rtol, atol=0.0, M=pre, maxiter=maxiter or 10 * grid.size)
        phi = project_gauge(x.reshape(shape), grid)

    res = np.max(np.abs(elliptic_operator(phi, gamma, grid) - rhs)) / scale
    if not res <= rtol:
        raise SolverError(f"elliptic solve stalled at relative residual {res:.3e}", residual=res)
    return phi


# --- snapshot export --------------------------------------------------------


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` so that the file is either complete or absent."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def snapshot_csv(f: np.ndarray, grid: GridSpec) -> str:
    """CSV text with header ``x[,y],value`` in row-major cell order."""
    f = np.asarray(f, dtype=float)
    if grid.rank_of(f) != 0:
        raise UsageError("snapshot export expects a scalar field")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = ["x", "y"][: grid.dim]
    writer.writerow(names + ["value"])
    coords = [c.ravel() for c in grid.coords()]
    for k, val in enumerate(f.ravel()):
        writer.writerow([repr(float(c[k])) for c in coords] + [repr(float(val))])
    return buf.getvalue()


def write_snapshot(path, f: np.ndarray, grid: GridSpec) -> None:
    atomic_write_text(path, snapshot_csv(f, grid))

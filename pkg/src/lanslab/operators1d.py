"""1D grids, banded linear algebra, and the reduced cross-section operators.

The channel geometry is the interval [-h, h] with walls at both ends; the
pipe geometry is [0, a] with the wall at r = a and the symmetry axis at
r = 0.  Everything downstream (profile solvers, covariance diagnostics,
the channel time integrator) builds on the grid types and the two linear
operators defined here:

    mass:       M[rho] u = u - alpha^2 (rho u')'            (channel)
                M[rho] u = u - alpha^2 (1/r)(r rho u')'     (pipe)
    diffusion:  D[rho] u = nu ((rho u')' - alpha^2 (rho (rho u')'')')

Both are discretized in flux (divergence) form with midpoint fluxes, so a
profile rho that vanishes at the walls degrades gracefully: nothing ever
divides by rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PhysicalParams",
    "Grid1D",
    "GridFunction1D",
    "BandedSystem",
    "SingularBandedError",
    "make_grid",
    "mass_operator",
    "diffusion_operator",
    "solve_banded",
    "fd_weights",
    "d1_triples",
    "d2_triples",
]

CHANNEL = "channel"
PIPE = "pipe"


@dataclass(frozen=True)
class PhysicalParams:
    """Scalar constants of a run.

    alpha   filter scale (length, >= 0; 0 is the unfiltered limit)
    nu      kinematic viscosity (length^2/time, >= 0)
    beta    parabolic-profile amplitude (1/(length*time))
    h       channel half-width (length, > 0)
    a       pipe radius (length, > 0)
    c       driving pressure gradient; None selects -2*nu*beta, the value
            that drives a channel profile of amplitude beta (pipe runs
            that want the analogous consistency should pass -4*nu*beta)
    bigU    wall speed for shear boundary data (length/time)
    p0      reference pressure
    """

    alpha: float = 0.1
    nu: float = 1.0
    beta: float = 1.0
    h: float = 1.0
    a: float = 1.0
    c: float | None = None
    bigU: float = 0.0
    p0: float = 0.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.h > 0:
            raise ValueError(f"h must be > 0, got {self.h}")
        if not self.a > 0:
            raise ValueError(f"a must be > 0, got {self.a}")
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.c is None:
            object.__setattr__(self, "c", -2.0 * self.nu * self.beta)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Ordered node set on [-h, h] (channel) or [0, a] (pipe).

    wall_distance maps each node to its normalized distance from the
    nearest physical wall: (h - |z|)/h for the channel, (a - r)/a for the
    pipe.  It is 0 exactly at walls and 1 at the centerline/axis.  Nodes
    need not be uniformly spaced.
    """

    nodes: np.ndarray
    geometry: str
    wall_distance: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = _readonly(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if self.geometry not in (CHANNEL, PIPE):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("need at least 3 nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        if self.geometry == CHANNEL:
            if nodes[0] != -nodes[-1]:
                raise ValueError("channel endpoints must be symmetric")
            ext = nodes[-1]
            d = (ext - np.abs(nodes)) / ext
        else:
            if nodes[0] != 0.0:
                raise ValueError("pipe grid must start at the axis r=0")
            ext = nodes[-1]
            d = (ext - nodes) / ext
        object.__setattr__(self, "wall_distance", _readonly(d))

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def extent(self) -> float:
        """Half-width h (channel) or radius a (pipe)."""
        return float(self.nodes[-1])

    def same_as(self, other: "Grid1D") -> bool:
        return (
            self is other
            or (
                self.geometry == other.geometry
                and self.nodes.size == other.nodes.size
                and bool(np.array_equal(self.nodes, other.nodes))
            )
        )


@dataclass(frozen=True, eq=False)
class GridFunction1D:
    """Real-valued nodal samples on a Grid1D."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(self.values)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.n,):
            raise ValueError(
                f"values length {vals.shape} does not match grid ({self.grid.n},)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")


class SingularBandedError(ValueError):
    """Banded factorization hit a pivot that is zero to working tolerance."""

    def __init__(self, pivot_index: int):
        self.pivot_index = pivot_index
        super().__init__(
            f"matrix singular to working precision at pivot index {pivot_index}"
        )


@dataclass(frozen=True, eq=False)
class BandedSystem:
    """Square banded system A x = b in diagonal-ordered storage.

    data[bandwidth + i - j, j] holds A[i, j]; rows outside the band are
    ignored.  bandwidth <= 3 by contract (a fourth-order operator on
    second-order stencils is at most heptadiagonal).
    """

    bandwidth: int
    data: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        if not (0 <= self.bandwidth <= 3):
            raise ValueError(f"bandwidth must be in 0..3, got {self.bandwidth}")
        data = _readonly(self.data)
        rhs = _readonly(self.rhs)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "rhs", rhs)
        if data.ndim != 2 or data.shape[0] != 2 * self.bandwidth + 1:
            raise ValueError(
                f"data must have {2 * self.bandwidth + 1} diagonal rows"
            )
        if rhs.shape != (data.shape[1],):
            raise ValueError("rhs length must match system size")
        if not (np.all(np.isfinite(data)) and np.all(np.isfinite(rhs))):
            raise ValueError("system entries must be finite")

    @property
    def n(self) -> int:
        return self.rhs.size

    @classmethod
    def from_dense(cls, a: np.ndarray, rhs: np.ndarray, bandwidth: int) -> "BandedSystem":
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        data = np.zeros((2 * bandwidth + 1, n))
        for i in range(n):
            for j in range(max(0, i - bandwidth), min(n, i + bandwidth + 1)):
                data[bandwidth + i - j, j] = a[i, j]
        return cls(bandwidth, data, rhs)


def make_grid(
    geometry: str,
    n: int,
    h: float = 1.0,
    a: float = 1.0,
    allow_small: bool = False,
) -> Grid1D:
    """Uniform grid with exact endpoints.

    n >= 8 unless allow_small is set (tiny grids are only useful in tests).
    """
    if geometry not in (CHANNEL, PIPE):
        raise ValueError(f"unknown geometry {geometry!r}")
    if n < 8 and not allow_small:
        raise ValueError(f"n too small: {n} < 8")
    if n < 3:
        raise ValueError(f"n too small: {n} < 3")
    if geometry == CHANNEL:
        nodes = np.linspace(-h, h, n)
        nodes[0], nodes[-1] = -h, h
    else:
        nodes = np.linspace(0.0, a, n)
        nodes[0], nodes[-1] = 0.0, a
    return Grid1D(nodes, geometry)


def fd_weights(x, x0: float, k: int) -> np.ndarray:
    """Finite-difference weights for the k-th derivative at x0 from nodes x.

    Solves the small Vandermonde moment system; exact for polynomials of
    degree len(x)-1.  Nodes are shifted and scaled before solving to keep
    the system well conditioned.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.size
    if k >= m:
        raise ValueError(f"need more than {k} nodes for derivative order {k}")
    scale = np.max(np.abs(x - x0))
    if scale == 0.0:
        raise ValueError("nodes must not all coincide with x0")
    t = (x - x0) / scale
    v = np.vander(t, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[k] = float(math.factorial(k))
    w = np.linalg.solve(v, rhs)
    return w / scale**k


def d1_triples(z: np.ndarray):
    """Centered 3-point first-derivative weights at interior nodes.

    Returns (a, b, c) with f'(z_i) ~ a*f[i-1] + b*f[i] + c*f[i+1] for
    i = 1..n-2 on an arbitrary strictly increasing node set.
    """
    dl = z[1:-1] - z[:-2]
    dr = z[2:] - z[1:-1]
    a = -dr / (dl * (dl + dr))
    c = dl / (dr * (dl + dr))
    b = -(a + c)
    return a, b, c


def d2_triples(z: np.ndarray):
    """Centered 3-point second-derivative weights at interior nodes."""
    dl = z[1:-1] - z[:-2]
    dr = z[2:] - z[1:-1]
    a = 2.0 / (dl * (dl + dr))
    c = 2.0 / (dr * (dl + dr))
    b = -(a + c)
    return a, b, c


def _check_same_grid(u, rho):
    if not u.grid.same_as(rho.grid):
        raise ValueError("grid mismatch between u and rho")


def _dual_widths(z: np.ndarray) -> np.ndarray:
    return 0.5 * (z[2:] - z[:-2])


def mass_operator(u, rho, params: PhysicalParams) -> GridFunction1D:
    """Apply u - alpha^2 (rho u')' (channel) or its cylindrical form (pipe).

    Interior rows use midpoint fluxes rho*u' (second order, symmetric).
    Wall rows pass the Dirichlet data of u through unchanged.  The pipe
    axis row assumes even symmetry of u about r=0 and regularizes the
    1/r factor by its r->0 limit.
    """
    _check_same_grid(u, rho)
    g = u.grid
    z = g.nodes
    uv = np.asarray(u.values, dtype=np.float64)
    rv = np.asarray(rho.values, dtype=np.float64)
    a2 = params.alpha**2
    out = uv.copy()
    du = np.diff(uv)
    dz = np.diff(z)
    rmid = 0.5 * (rv[1:] + rv[:-1])
    de = _dual_widths(z)
    if g.geometry == CHANNEL:
        flux = rmid * du / dz
        out[1:-1] = uv[1:-1] - a2 * (flux[1:] - flux[:-1]) / de
    else:
        rpos = 0.5 * (z[1:] + z[:-1])
        flux = rpos * rmid * du / dz
        out[1:-1] = uv[1:-1] - a2 * (flux[1:] - flux[:-1]) / (z[1:-1] * de)
        # axis: (1/r)(r rho u')' -> 2 rho(0) u''(0); even extension gives
        # u''(0) ~ 2 (u1 - u0) / r1^2
        out[0] = uv[0] - a2 * 2.0 * rv[0] * 2.0 * (uv[1] - uv[0]) / z[1] ** 2
    return GridFunction1D(g, out)


def diffusion_operator(u, rho, params: PhysicalParams) -> GridFunction1D:
    """Apply nu ((rho u')' - alpha^2 (rho (rho u')'')') compositionally.

    The chain is: w := rho u' at midpoints; (w)' at nodes; w'' at
    midpoints (one-sided 4-point stencils at the extreme midpoints);
    q := rho w'' at midpoints; outer derivative of q at nodes.  Wall rows
    are zero (Dirichlet rows are the caller's to pin).  The pipe variant
    carries the cylindrical 1/r weights and assumes even symmetry at the
    axis.
    """
    _check_same_grid(u, rho)
    g = u.grid
    z = g.nodes
    n = g.n
    uv = np.asarray(u.values, dtype=np.float64)
    rv = np.asarray(rho.values, dtype=np.float64)
    a2 = params.alpha**2
    nu = params.nu
    out = np.zeros(n)
    if nu == 0.0 or not np.any(rv):
        return GridFunction1D(g, out)
    dz = np.diff(z)
    zm = 0.5 * (z[1:] + z[:-1])
    rmid = 0.5 * (rv[1:] + rv[:-1])
    de = _dual_widths(z)
    # Closure rule: values the interior stencils cannot reach (extreme
    # midpoints, axis, wall) are quadratic extrapolations of their interior
    # neighbours.  A one-sided "exact" stencil there would carry a different
    # truncation-error function than the centered rows, and the outer
    # derivative divides that jump by dz, losing an order in the sup norm;
    # extrapolation continues the interior error smoothly instead.
    if g.geometry == CHANNEL:
        w = rmid * np.diff(uv) / dz
        wp = (w[1:] - w[:-1]) / de
        am, bm, cm = d2_triples(zm)
        q = np.empty(n - 1)
        q[1:-1] = rmid[1:-1] * (am * w[:-2] + bm * w[1:-1] + cm * w[2:])
        ns = min(3, n - 3)
        q[0] = fd_weights(zm[1 : 1 + ns], zm[0], 0) @ q[1 : 1 + ns]
        q[-1] = fd_weights(zm[-1 - ns : -1], zm[-1], 0) @ q[-1 - ns : -1]
        qp = (q[1:] - q[:-1]) / de
        out[1:-1] = nu * (wp - a2 * qp)
    else:
        # w := r rho u' at midpoints; inner := (1/r)(w)' at nodes
        w = zm * rmid * np.diff(uv) / dz
        inner = np.empty(n)
        inner[1:-1] = (w[1:] - w[:-1]) / (z[1:-1] * de)
        # inner's end values feed two successive divided differences, so
        # they need cubic (4-point) extrapolation to keep second order
        nc = min(4, n - 2)
        inner[0] = fd_weights(z[1 : 1 + nc], z[0], 0) @ inner[1 : 1 + nc]
        inner[-1] = fd_weights(z[-1 - nc : -1], z[-1], 0) @ inner[-1 - nc : -1]
        ns = min(3, n - 2)
        innerp = np.diff(inner) / dz
        q = zm * rmid * innerp
        qp = np.empty(n - 1)
        qp[1:] = (q[1:] - q[:-1]) / (z[1:-1] * de)
        qp[0] = fd_weights(z[1 : 1 + ns], z[0], 0) @ qp[1 : 1 + ns]
        out[0] = nu * (inner[0] - a2 * qp[0])
        out[1:-1] = nu * (inner[1:-1] - a2 * qp[1:])
        out[-1] = 0.0
    return GridFunction1D(g, out)


def solve_banded(system: BandedSystem) -> np.ndarray:
    """Direct banded solve by LU with partial pivoting.

    Deterministic (ties in the pivot search resolve to the smallest row
    index).  A pivot smaller than 30 eps times the matrix magnitude
    raises SingularBandedError carrying the offending pivot index.
    """
    bw = system.bandwidth
    n = system.n
    kl = ku = bw
    # LAPACK-style working storage with kl fill rows on top:
    # A[i, j] lives at W[kl + ku + i - j, j]
    w = np.zeros((2 * kl + ku + 1, n))
    w[kl:, :] = system.data
    diag = kl + ku
    anorm = float(np.max(np.abs(system.data))) if n else 0.0
    tol = 30.0 * np.finfo(np.float64).eps * max(anorm, np.finfo(np.float64).tiny)
    x = system.rhs.astype(np.float64).copy()

    for k in range(n):
        lm = min(kl, n - 1 - k)
        col = w[diag : diag + lm + 1, k]
        p = int(np.argmax(np.abs(col)))
        if abs(col[p]) <= tol:
            raise SingularBandedError(k)
        jhi = min(n, k + ku + kl + 1)
        if p != 0:
            for j in range(k, jhi):
                r1 = diag + k - j
                w[r1, j], w[r1 + p, j] = w[r1 + p, j], w[r1, j]
            x[k], x[k + p] = x[k + p], x[k]
        if lm > 0:
            m = w[diag + 1 : diag + lm + 1, k] / w[diag, k]
            x[k + 1 : k + 1 + lm] -= m * x[k]
            for j in range(k + 1, jhi):
                r = diag + k - j
                w[r + 1 : r + 1 + lm, j] -= m * w[r, j]

    for k in range(n - 1, -1, -1):
        jhi = min(n, k + ku + kl + 1)
        if jhi > k + 1:
            rows = np.arange(diag - 1, diag + k - jhi, -1)
            cols = np.arange(k + 1, jhi)
            x[k] -= np.dot(w[rows, cols], x[k + 1 : jhi])
        x[k] /= w[diag, k]
    return x

"""Brownian motion on the hyperbolic plane and plaque-level integral identities.

Brownian motion is generated by the Laplacian ``y^2 (d_xx + d_yy)`` (not half
of it), so that its distance from the start grows at unit speed like a
geodesic.  In half-plane coordinates

    dx = sqrt(2) y dW1,        dy = sqrt(2) y dW2,

and the y-equation is solved exactly, ``y <- y exp(sqrt(2) dW2 - dt)``.  The
x-update is an Euler step with the current y.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels as K
from .cocycle import (
    ExponentEstimate,
    PreconditionError,
    Representation,
    _prepare,
    liouville_point,
    n_steps_for,
    summarize,
    uniform_fiber,
)
from .hyperbolic import DomainError, SpherePoint
from .parallel import STREAM_BROWNIAN, STREAM_LIOUVILLE, ordered_map, orbit_rng
from .surface_group import DEFAULT_BUDGET, FuchsianGroup, ReductionBudgetError

__all__ = [
    "GENERATOR_SCALE",
    "BrownianState",
    "ZeroNoise",
    "brownian_advance",
    "brownian_lyapunov",
    "poisson_kernel",
    "poisson_kernel_gradient",
    "BoundaryMeasure",
    "DiskField",
    "candel_identity_residual",
    "CandelReport",
]

# Brownian motion is generated by GENERATOR_SCALE * Laplacian
GENERATOR_SCALE = 1.0

CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class BrownianState:
    position: complex
    time: float = 0.0
    fiber: SpherePoint = SpherePoint(np.array([1.0, 0.0]))
    log_deriv: float = 0.0

    def __post_init__(self):
        if not complex(self.position).imag > 0:
            raise DomainError("Brownian position must lie in the upper half-plane")


class ZeroNoise:
    """Stand-in random generator that switches the noise off (for testing).

    The Ito correction of the log-normal step belongs to the noise and is
    switched off with it, so the path stays where it started.
    """

    noise_scale = 0.0

    def standard_normal(self, size=None):
        return np.zeros(size)


def brownian_advance(s: BrownianState, dt: float, rng, n_steps: int = 1, group: FuchsianGroup | None = None,
                     rep: Representation | None = None, increments: np.ndarray | None = None,
                     tables=None) -> BrownianState:
    """Advance ``n_steps`` Brownian steps.

    Without ``group`` the path lives in the half-plane itself.  With a group
    (and representation) the position is reduced to the fundamental domain
    after every step and the fiber is moved by the holonomy of each
    crossing, exactly as in the geodesic case.

    ``increments`` of shape (n_steps, 2) replace the standard normal draws.
    """
    if not (0 < dt <= 1e-2):
        raise PreconditionError("dt", f"must lie in (0, 1e-2], got {dt}")
    if increments is None:
        increments = rng.standard_normal((n_steps, 2))
    increments = np.ascontiguousarray(increments, dtype=float).reshape(-1, 2)
    state = np.array([s.position.real, s.position.imag, s.log_deriv])
    v = np.array(s.fiber.v, dtype=complex)
    scaled_dt = GENERATOR_SCALE * dt * getattr(rng, "noise_scale", 1.0)
    if group is not None:
        rep = rep if rep is not None else Representation.trivial(group)
        tab, mats, iso = tables if tables is not None else _prepare(group, rep)
        status = K.brownian_run(state, v, scaled_dt, increments, tab.kinds, tab.ms, tab.rs, tab.sgns, tab.partner,
                                tab.moves, tab.centre, mats, iso, DEFAULT_BUDGET, True)
    else:
        z = np.zeros(1)
        status = K.brownian_run(state, v, scaled_dt, increments, z.astype(np.int64), z, z, z, z.astype(np.int64),
                                np.zeros((1, 2, 2)), 1j, np.zeros((1, 2, 2), complex), np.ones(1, np.bool_),
                                DEFAULT_BUDGET, False)
    if status != K.OK:
        raise ReductionBudgetError("reduction budget exceeded on a Brownian path")
    return BrownianState(complex(state[0], state[1]), s.time + len(increments) * dt, SpherePoint(v), float(state[2]))


def brownian_lyapunov(group: FuchsianGroup, rep: Representation, seed: int, T: float, dt: float, N: int,
                      threads: int | None = None) -> ExponentEstimate:
    """Fiber exponent along Brownian base paths, averaged over N starts."""
    if not T >= 100:
        raise PreconditionError("T", f"must be at least 100, got {T}")
    if N < 1:
        raise PreconditionError("N", "need at least one path")
    if not (0 < dt <= 1e-2):
        raise PreconditionError("dt", f"must lie in (0, 1e-2], got {dt}")
    n = n_steps_for(T, dt)
    tables = _prepare(group, rep)

    def one(i):
        start_rng = orbit_rng(seed, STREAM_LIOUVILLE, i)
        s = BrownianState(liouville_point(group, start_rng), 0.0, uniform_fiber(start_rng))
        rng = orbit_rng(seed, STREAM_BROWNIAN, i)
        done = 0
        while done < n:
            k = min(CHUNK, n - done)
            s = brownian_advance(s, dt, rng, k, group, rep, tables=tables)
            done += k
        return s.log_deriv / (n * dt)

    return summarize(ordered_map(one, range(N), threads), n * dt, dt)


# ---------------------------------------------------------------------------
# Poisson kernel and the plaque identity


def poisson_kernel(x, xi):
    """Poisson kernel of the unit disk, ``(1 - |x|^2) / |x - e^{i xi}|^2``."""
    x = np.asarray(x, dtype=complex)
    if np.any(np.abs(x) >= 1):
        raise DomainError("Poisson kernel needs |x| < 1")
    out = (1 - np.abs(x) ** 2) / np.abs(x - np.exp(1j * np.asarray(xi))) ** 2
    return out if out.ndim else float(out)


def poisson_kernel_gradient(x, xi):
    """Euclidean gradient of the Poisson kernel, as a complex number ``d_x + i d_y``."""
    x = np.asarray(x, dtype=complex)
    e = np.exp(1j * xi)
    return poisson_kernel(x, xi) * (-2 * x / (1 - np.abs(x) ** 2) - 2 * (x - e) / np.abs(x - e) ** 2)


@dataclass(frozen=True)
class BoundaryMeasure:
    """Finite measure on the circle: atoms at ``angles`` with ``weights``.

    ``closed_form`` and ``closed_gradient`` optionally give the harmonic
    extension and its gradient (``d_x + i d_y``) directly.
    """

    angles: np.ndarray
    weights: np.ndarray
    closed_form: Callable | None = None
    closed_gradient: Callable | None = None

    @classmethod
    def uniform(cls, nodes: int = 1024) -> "BoundaryMeasure":
        ang = 2 * np.pi * np.arange(nodes) / nodes
        return cls(ang, np.full(nodes, 1.0 / nodes), lambda x: np.ones(np.shape(x)),
                   lambda x: np.zeros(np.shape(x), dtype=complex))

    @classmethod
    def point(cls, xi: float) -> "BoundaryMeasure":
        return cls(np.array([float(xi)]), np.array([1.0]), lambda x: poisson_kernel(x, xi),
                   lambda x: poisson_kernel_gradient(x, xi))

    def harmonic(self, x) -> np.ndarray:
        if self.closed_form is not None:
            return np.asarray(self.closed_form(x), dtype=float)
        return sum(w * poisson_kernel(x, a) for a, w in zip(self.angles, self.weights))


@dataclass(eq=False)
class DiskField:
    """Values on an N x N equally spaced grid over [-1, 1]^2, masked to the disk."""

    n: int
    values: np.ndarray
    margin: float = 0.05

    def __post_init__(self):
        if self.n < 64:
            raise PreconditionError("grid", "need at least 64 nodes per side")

    @staticmethod
    def nodes(n):
        t = np.linspace(-1.0, 1.0, n)
        xx, yy = np.meshgrid(t, t, indexing="ij")
        return xx + 1j * yy, t[1] - t[0]

    @classmethod
    def from_function(cls, fn, n, margin=0.05) -> "DiskField":
        x, _ = cls.nodes(n)
        inside = np.abs(x) < 1
        vals = np.full(x.shape, np.nan)
        vals[inside] = fn(x[inside])
        return cls(n, vals, margin)

    @property
    def spacing(self) -> float:
        return 2.0 / (self.n - 1)

    @property
    def mask(self) -> np.ndarray:
        x, _ = self.nodes(self.n)
        return np.abs(x) < 1 - self.margin

    def gradient(self):
        """Finite-difference gradient; central where both neighbours exist, else one-sided."""
        return _fd_gradient(self.values, self.spacing)


_CENTRAL = {
    6: ((1, 45 / 60), (2, -9 / 60), (3, 1 / 60)),
    4: ((1, 8 / 12), (2, -1 / 12)),
    2: ((1, 1 / 2),),
}


def _fd_gradient(f, h):
    """Sixth-order central differences, dropping to lower orders (and finally
    one-sided differences) where the stencil leaves the disk (NaN values)."""
    out = []
    for axis in (0, 1):
        fwd = (np.roll(f, -1, axis) - f) / h
        bwd = (f - np.roll(f, 1, axis)) / h
        g = np.where(np.isfinite(fwd), fwd, bwd)
        for order in (2, 4, 6):
            c = sum(w * (np.roll(f, -k, axis) - np.roll(f, k, axis)) for k, w in _CENTRAL[order]) / h
            g = np.where(np.isfinite(c), c, g)
        # np.roll wraps around the grid; wrapped nodes lie outside the disk and are NaN
        out.append(g)
    return out


@dataclass
class CandelReport:
    lhs: float
    rhs: float
    residual: float
    grid: int
    boundary_nodes: int

    def as_dict(self):
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "grid": self.grid,
            "boundary_nodes": self.boundary_nodes,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def candel_identity_residual(h: BoundaryMeasure, log_u: Callable, grid: int = 256, margin: float = 0.05,
                             ) -> CandelReport:
    """Compare the two sides of the plaque-level integral identity.

    LHS integrates ``<grad log k(x, xi), grad log u> k(x, xi)`` over the disk
    and against the boundary measure of ``h``; RHS integrates
    ``<grad log h, grad log u> h = <grad h, grad log u>``.  On the left the
    gradients of ``log k`` are finite differences on the N x N grid; on the
    right the gradient of ``h`` is taken in closed form when available
    (finite differences otherwise).  Both use the same masked trapezoid
    rule, so the residual is the discretisation error of the left side.
    That error is set by how well the grid resolves the kernel pole at
    distance ``margin`` from the mask, hence the default of 0.05.

    Returns the report with ``residual = |LHS - RHS| / (1 + |RHS|)``.
    """
    x, dx = DiskField.nodes(grid)
    inside = np.abs(x) < 1
    mask = np.abs(x) < 1 - margin
    area = dx * dx

    lu = DiskField.from_function(log_u, grid, margin)
    gux, guy = lu.gradient()

    hv = DiskField.from_function(h.harmonic, grid, margin)
    if np.any(hv.values[mask] <= 0):
        raise ValueError("h must be positive on the integration mask")
    if h.closed_gradient is not None:
        gh = np.zeros(x.shape, dtype=complex)
        gh[mask] = h.closed_gradient(x[mask])
        ghx, ghy = gh.real, gh.imag
    else:
        ghx, ghy = hv.gradient()
    rhs = float(np.sum((ghx * gux + ghy * guy)[mask]) * area)

    lhs = 0.0
    xin = x[inside]
    for a, w in zip(h.angles, h.weights):
        k = np.full(x.shape, np.nan)
        k[inside] = (1 - np.abs(xin) ** 2) / np.abs(xin - np.exp(1j * a)) ** 2
        gkx, gky = _fd_gradient(np.log(k), dx)
        lhs += w * float(np.sum(((gkx * gux + gky * guy) * k)[mask]) * area)
    res = abs(lhs - rhs) / (1 + abs(rhs))
    return CandelReport(float(lhs), rhs, float(res), int(grid), int(len(h.angles)))

"""Exact geometry of the upper half-plane and of the Riemann sphere.

Frames are unit-determinant real 2x2 matrices read modulo sign.  The frame
``g`` stands for the unit tangent vector ``g_*(i, up)``: its base point is
``g(i)`` and the identity frame sits at ``i`` pointing straight up.  Right
multiplication by ``diag(e^{t/2}, e^{-t/2})`` is the unit speed geodesic
flow, right multiplication by unitriangular matrices the two horocycle
flows.

Points of the Riemann sphere are unit vectors of C^2 modulo a phase, so
infinity needs no special handling anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "Frame",
    "MoebiusC",
    "SpherePoint",
    "BoundaryPoint",
    "frame_from",
    "base_point",
    "direction",
    "geodesic_advance",
    "horocycle_advance",
    "endpoints",
    "time_flip",
    "mobius_apply",
    "mobius_point",
    "spherical_derivative",
    "hyperbolic_distance",
    "renormalize",
    "ROTATION_PI",
]


class DomainError(ValueError):
    """Input outside the domain of a geometric operation."""


def renormalize(m):
    """Divide a 2x2 matrix by the square root of its determinant."""
    m = np.asarray(m)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return m / np.sqrt(det)


@dataclass(frozen=True, eq=False)
class Frame:
    """Unit tangent vector of the hyperbolic plane as an element of PSL(2,R)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(2, 2)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Frame":
        return cls(np.eye(2))

    @property
    def det(self) -> float:
        m = self.m
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    def renormalized(self) -> "Frame":
        return Frame(renormalize(self.m))

    def close_to(self, other: "Frame", tol: float = 1e-9) -> bool:
        # frames are only defined up to sign
        d1 = np.abs(self.m - other.m).max()
        d2 = np.abs(self.m + other.m).max()
        return bool(min(d1, d2) <= tol)

    def __repr__(self):
        return f"Frame(base={base_point(self):.6g}, angle={direction(self):.6g})"


@dataclass(frozen=True, eq=False)
class MoebiusC:
    """Element of PSL(2,C) acting on the Riemann sphere."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=complex).reshape(2, 2)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "MoebiusC":
        return cls(np.eye(2, dtype=complex))

    @property
    def det(self) -> complex:
        m = self.m
        return complex(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    def __matmul__(self, other: "MoebiusC") -> "MoebiusC":
        return MoebiusC(self.m @ other.m)

    def inverse(self) -> "MoebiusC":
        a, b, c, d = self.m.ravel()
        return MoebiusC(np.array([[d, -b], [-c, a]]) / self.det)

    def is_unitary(self, tol: float = 1e-12) -> bool:
        """True when the matrix lies in SU(2), i.e. acts by a rotation of the sphere."""
        m = self.m
        return bool(np.abs(m @ m.conj().T - np.eye(2)).max() <= tol and abs(self.det - 1) <= tol)


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """Point of CP^1 stored as a unit vector of C^2 (defined up to phase)."""

    v: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=complex).reshape(2)
        n = np.sqrt((v.real**2 + v.imag**2).sum())
        if n == 0:
            raise DomainError("zero vector is not a point of the sphere")
        v = v / n
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_affine(cls, z) -> "SpherePoint":
        if z is None or (np.isscalar(z) and np.isinf(z)):
            return cls(np.array([1.0, 0.0]))
        return cls(np.array([complex(z), 1.0]))

    def affine(self) -> complex:
        """Affine coordinate ``v1/v2``; complex infinity when ``v2 == 0``."""
        v1, v2 = self.v
        if v2 == 0:
            return complex(np.inf, 0.0)
        return complex(v1 / v2)

    def xyz(self) -> np.ndarray:
        """Unit vector in R^3 (Hopf map); 0 goes to the south pole, infinity to the north."""
        v1, v2 = self.v
        w = 2 * v1 * np.conj(v2)
        return np.array([w.real, w.imag, abs(v1) ** 2 - abs(v2) ** 2])

    def chordal(self, other: "SpherePoint") -> float:
        """Chordal distance, 0 iff same point."""
        # 2 sqrt(1 - |<v, w>|^2) written as a determinant, which keeps accuracy near 0
        return float(2 * abs(self.v[0] * other.v[1] - self.v[1] * other.v[0]))


@dataclass(frozen=True)
class BoundaryPoint:
    """Point of the real projective line, the circle at infinity of the half-plane."""

    p: float
    q: float

    def __post_init__(self):
        if self.p == 0 and self.q == 0:
            raise DomainError("(0, 0) is not a projective point")

    @property
    def value(self) -> float:
        return np.inf if self.q == 0 else self.p / self.q

    def close_to(self, other: "BoundaryPoint", tol: float = 1e-9) -> bool:
        # angle on the circle RP^1 doubled; compare unit vectors
        u = np.array([self.p, self.q]) / np.hypot(self.p, self.q)
        w = np.array([other.p, other.q]) / np.hypot(other.p, other.q)
        return bool(abs(u[0] * w[1] - u[1] * w[0]) <= tol)

    def sphere(self) -> SpherePoint:
        return SpherePoint(np.array([self.p, self.q], dtype=complex))


def _rotation(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, s], [-s, c]])


ROTATION_PI = _rotation(np.pi / 2)  # turns every direction by pi


def frame_from(point: complex, angle: float) -> Frame:
    """Frame based at ``point`` pointing in direction ``angle`` (radians, 0 = +x)."""
    point = complex(point)
    if not point.imag > 0:
        raise DomainError(f"base point must have positive imaginary part, got {point}")
    if not np.isfinite(angle):
        raise DomainError("angle must be finite")
    x, y = point.real, point.imag
    sy = np.sqrt(y)
    translate = np.array([[sy, x / sy], [0.0, 1.0 / sy]])
    return Frame(translate @ _rotation((angle - np.pi / 2) / 2))


def base_point(g: Frame) -> complex:
    (a, b), (c, d) = g.m
    return (a * 1j + b) / (c * 1j + d)


def direction(g: Frame) -> float:
    """Direction angle of the frame in the half-plane chart, in [0, 2pi)."""
    (_, _), (c, d) = g.m
    return float(np.mod(np.pi / 2 - 2 * np.arctan2(c, d), 2 * np.pi))


def geodesic_advance(g: Frame, t: float) -> Frame:
    h = np.exp(t / 2)
    return Frame(g.m * np.array([h, 1.0 / h]))


def horocycle_advance(g: Frame, s: float, branch: str = "stable") -> Frame:
    """Slide along the stable (upper unitriangular) or unstable (lower) horocycle."""
    if branch == "stable":
        n = np.array([[1.0, s], [0.0, 1.0]])
    elif branch == "unstable":
        n = np.array([[1.0, 0.0], [s, 1.0]])
    else:
        raise ValueError(f"branch must be 'stable' or 'unstable', got {branch!r}")
    return Frame(g.m @ n)


def endpoints(g: Frame) -> tuple[BoundaryPoint, BoundaryPoint]:
    """(backward, forward) endpoints of the oriented geodesic through ``g``."""
    (a, b), (c, d) = g.m
    return BoundaryPoint(float(b), float(d)), BoundaryPoint(float(a), float(c))


def time_flip(g: Frame) -> Frame:
    """Same base point, opposite direction."""
    return Frame(g.m @ ROTATION_PI)


def mobius_point(m, z: complex) -> complex:
    """Action of a 2x2 matrix on an affine point (no infinity handling)."""
    (a, b), (c, d) = np.asarray(m)
    return (a * z + b) / (c * z + d)


def mobius_apply(M: MoebiusC, w: SpherePoint) -> SpherePoint:
    return SpherePoint(M.m @ w.v)


def spherical_derivative(M: MoebiusC, w: SpherePoint) -> float:
    """Norm of the derivative of ``M`` at ``w`` for the round metric.

    For a unit-determinant matrix and a unit representative ``v`` of ``w``
    this is ``1 / |M v|^2``; in the affine chart it reads
    ``(1 + |z|^2) / (|a z + b|^2 + |c z + d|^2)``.
    """
    mv = M.m @ w.v
    n2 = float((mv.real**2 + mv.imag**2).sum())
    return abs(M.det) / n2


def hyperbolic_distance(z1: complex, z2: complex) -> float:
    z1, z2 = complex(z1), complex(z2)
    if not (z1.imag > 0 and z2.imag > 0):
        raise DomainError("points must lie in the upper half-plane")
    return float(2 * np.arcsinh(abs(z1 - z2) / (2 * np.sqrt(z1.imag * z2.imag))))

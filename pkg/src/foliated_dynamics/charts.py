"""Equal-area charts of the fundamental domain and of the fiber sphere.

A sample of the foliated flow is described by five numbers in [0, 1):

    0  base area fraction   (hyperbolic area of the sector swept so far)
    1  angular area fraction around the domain centre
    2  direction of the frame, in the disk model centred at the domain centre
    3  fiber chart u        (octahedral equal-area map of the rotated sphere)
    4  fiber chart v

Columns 5-8 hold the chart coordinates of the backward and forward
endpoints of the frame's geodesic, seen as points of the fiber sphere.
Lebesgue measure on the domain times the round measure on the sphere is
uniform in these coordinates, so equal-size cells have equal volume.
"""

import numpy as np

from . import _kernels as K

N_COLUMNS = 9

# a fixed, generic rotation of the sphere so that the real circle (where
# Fuchsian endpoints live) crosses the octahedral cells transversally
_a, _b = np.cos(0.7) * np.exp(0.3j), np.sin(0.7) * np.exp(1.1j)
FIBER_ROTATION = np.array([[_a, -np.conj(_b)], [_b, np.conj(_a)]])
del _a, _b


def octahedral(xyz) -> np.ndarray:
    """Vectorised equal-area octahedral map, unit vectors -> [0, 1]^2."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    out = np.array([K.octahedral(*p) for p in xyz])
    return out


def octahedral_inverse(uv) -> np.ndarray:
    """Inverse of :func:`octahedral`, [0, 1]^2 -> unit vectors."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    u = 2 * uv[:, 0] - 1
    v = 2 * uv[:, 1] - 1
    au, av = np.abs(u), np.abs(v)
    south = au + av > 1
    # folded triangles: undo (u, v) -> (1 - v, 1 - u)
    au_f = np.where(south, 1 - av, au)
    av_f = np.where(south, 1 - au, av)
    r = au_f + av_f
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(r > 0, av_f / np.where(r > 0, r, 1) * (np.pi / 2), 0.0)
    z = 1 - r**2
    z = np.where(south, -z, z)
    s = np.sqrt(np.clip(1 - z**2, 0, None))
    x = s * np.cos(phi) * np.sign(u + (u == 0))
    y = s * np.sin(phi) * np.sign(v + (v == 0))
    return np.stack([x, y, z], axis=1)


def sphere_to_chart(v) -> np.ndarray:
    """Chart (u, v) of unit C^2 vectors (rows), after the fixed rotation."""
    v = np.atleast_2d(np.asarray(v, dtype=complex))
    return np.array([K.sphere_chart(p, q, FIBER_ROTATION) for p, q in v])


def chart_to_sphere(uv) -> np.ndarray:
    """Unit C^2 representatives of chart points (inverse of :func:`sphere_to_chart`)."""
    x, y, z = octahedral_inverse(uv).T
    # inverse Hopf map: [1+z : x - i y] up to phase, or [x + i y : 1 - z]
    top = np.where(z > -0.5, 1 + z, x + 1j * y)
    bot = np.where(z > -0.5, x - 1j * y, 1 - z)
    w = np.stack([top, bot], axis=1).astype(complex)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    w = w @ FIBER_ROTATION.conj()  # apply Q^{-1} = Q^H to each row
    return w

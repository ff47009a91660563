"""The foliated geodesic flow of a flat sphere bundle over a surface.

A state is a frame in the fundamental domain plus a point of the fiber
sphere.  The base frame follows the geodesic flow; each time it leaves the
domain and is pulled back by a side move ``gamma``, the fiber point is
moved by ``rho(gamma)`` and the log of the spherical derivative of that map
is added to the accumulator.  Between crossings the fiber does not move,
so the step size only decides how often crossings are checked.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm
from scipy.optimize import least_squares

from . import _kernels as K
from .charts import FIBER_ROTATION, N_COLUMNS
from .hyperbolic import Frame, MoebiusC, SpherePoint, ROTATION_PI, base_point, direction, frame_from
from .parallel import STREAM_LIOUVILLE, STREAM_REPRESENTATION, ordered_map, orbit_rng
from .surface_group import DEFAULT_BUDGET, FuchsianGroup, ReductionBudgetError

__all__ = [
    "Representation",
    "SkewState",
    "ExponentEstimate",
    "evolve",
    "record",
    "transverse_lyapunov",
    "time_reversed",
    "liouville_state",
    "trajectory",
    "write_trajectory_csv",
    "PreconditionError",
]

TAGS = ("fuchsian", "quasi-fuchsian-like", "unitary", "nondiscrete", "custom")


class PreconditionError(ValueError):
    """An argument violates the documented precondition; ``field`` names it."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _check_dt(dt):
    if not (0 < dt <= 1):
        raise PreconditionError("dt", f"step must lie in (0, 1], got {dt}")


# ---------------------------------------------------------------------------
# representations


def _inverse2(m):
    (a, b), (c, d) = m
    return np.array([[d, -b], [-c, a]], dtype=m.dtype)


@dataclass(frozen=True, eq=False)
class Representation:
    """Images of the generators in PSL(2, C); ``tag`` is informational only."""

    images: tuple
    tag: str = "custom"

    def __post_init__(self):
        ims = tuple(m if isinstance(m, MoebiusC) else MoebiusC(m) for m in self.images)
        for m in ims:
            if abs(m.det - 1) > 1e-9:
                raise ValueError(f"representation image has determinant {m.det}, expected 1")
        if self.tag not in TAGS:
            raise ValueError(f"tag must be one of {TAGS}")
        object.__setattr__(self, "images", ims)

    def __len__(self):
        return len(self.images)

    def letter(self, w: int) -> np.ndarray:
        m = self.images[abs(w) - 1].m
        return m if w > 0 else _inverse2(m)

    def evaluate(self, word) -> MoebiusC:
        """Image of a word; the first letter acts first."""
        out = np.eye(2, dtype=complex)
        for w in word:
            out = self.letter(w) @ out
        return MoebiusC(out)

    def side_tables(self, group: FuchsianGroup):
        """Per-side holonomy matrices and isometry flags for the compiled loops."""
        if len(self.images) != group.n_generators:
            raise ValueError(
                f"representation has {len(self.images)} images, group has {group.n_generators} generators"
            )
        mats = np.array([self.letter(w) for w in group.side_moves], dtype=complex)
        iso = np.array([MoebiusC(m).is_unitary(1e-12) for m in mats], dtype=np.bool_)
        return mats, iso

    def relator_residual(self, group: FuchsianGroup) -> float:
        r = self.evaluate(group.relator).m
        if group.relator_kind == "parabolic":
            return float(abs(abs(np.trace(r)) - 2))
        eye = np.eye(2)
        return float(min(np.abs(r - eye).max(), np.abs(r + eye).max()))

    # presets ---------------------------------------------------------------

    @classmethod
    def inclusion(cls, group: FuchsianGroup) -> "Representation":
        return cls(tuple(MoebiusC(g) for g in group.generators), "fuchsian")

    @classmethod
    def trivial(cls, group: FuchsianGroup) -> "Representation":
        return cls(tuple(MoebiusC.identity() for _ in group.generators), "unitary")

    @classmethod
    def unitary(cls, group: FuchsianGroup, seed: int = 0) -> "Representation":
        """Rotations of the sphere satisfying the relator.

        Generators are sent through a map onto a free group on two letters
        (an epimorphism of the genus-2 group kills the relator), then to two
        random rotations, so the image is dense in SO(3).
        """
        rng = orbit_rng(seed, STREAM_REPRESENTATION, 0)
        u, v = (_random_su2(rng) for _ in range(2))
        n = group.n_generators
        if n == 2:
            ims = (u, v)
        elif n == 4:
            ims = (u, u, v, v)
        else:
            raise ValueError("unitary preset is available for 2 or 4 generators")
        rep = cls(tuple(MoebiusC(m) for m in ims), "unitary")
        if rep.relator_residual(group) > 1e-9 and group.relator_kind == "identity":
            raise RuntimeError("unitary preset does not satisfy the relator")
        return rep

    @classmethod
    def quasi_fuchsian(cls, group: FuchsianGroup, seed: int = 0, size: float = 0.05) -> "Representation":
        """Small complex deformation of the inclusion that still satisfies the relator."""
        rng = orbit_rng(seed, STREAM_REPRESENTATION, 1)
        base = [g.astype(complex) for g in group.generators]
        n = len(base)
        target = size * (rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))) / np.sqrt(2)

        def images(p):
            x = p[: 3 * n] + 1j * p[3 * n :]
            out = []
            for k in range(n):
                a, b, c = x[3 * k : 3 * k + 3]
                out.append(base[k] @ expm(np.array([[a, b], [c, -a]])))
            return out

        def rel_res(p):
            r = np.eye(2, dtype=complex)
            for w in group.relator:
                m = images(p)[abs(w) - 1]
                r = (m if w > 0 else _inverse2(m)) @ r
            if group.relator_kind == "parabolic":
                return np.array([abs(np.trace(r)) - 2])
            r = r * np.sign(r[0, 0].real or 1.0)
            d = (r - np.eye(2)).ravel()
            return np.concatenate([d.real, d.imag])

        p0 = np.concatenate([target.real.ravel(), target.imag.ravel()])
        if group.relator_kind == "parabolic":
            p = p0  # free group: any images are a representation
        else:
            reg = lambda p: np.concatenate([1e3 * rel_res(p), p - p0])  # noqa: E731
            p = least_squares(reg, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15).x
            p = least_squares(rel_res, p, xtol=1e-15, ftol=1e-15, gtol=1e-15).x
        ims = images(p)
        ims = [m / np.sqrt(np.linalg.det(m)) for m in ims]
        rep = cls(tuple(MoebiusC(m) for m in ims), "quasi-fuchsian-like")
        if group.relator_kind == "identity" and rep.relator_residual(group) > 1e-9:
            raise RuntimeError("deformation did not converge to a representation")
        return rep

    # serialisation ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "images": [[[z.real, z.imag] for z in m.m.ravel()] for m in self.images],
            "tag": self.tag,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "Representation":
        doc = json.loads(text) if isinstance(text, str) else text
        ims = []
        for entries in doc["images"]:
            if len(entries) != 4:
                raise ValueError("each image needs 4 complex entries")
            ims.append(np.array([complex(re, im) for re, im in entries]).reshape(2, 2))
        return cls(tuple(ims), doc.get("tag", "custom"))


def _random_su2(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    a, b = complex(q[0], q[1]), complex(q[2], q[3])
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]])


def preset_representation(name: str, group: FuchsianGroup, seed: int = 0) -> Representation:
    if name in ("inclusion", "fuchsian"):
        return Representation.inclusion(group)
    if name == "trivial":
        return Representation.trivial(group)
    if name == "unitary":
        return Representation.unitary(group, seed)
    if name in ("quasi_fuchsian", "quasi-fuchsian-like"):
        return Representation.quasi_fuchsian(group, seed)
    raise KeyError(f"unknown representation preset {name!r}")


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class SkewState:
    """One point of the suspension with its derivative accumulator.

    Attributes
    ----------
    frame : Frame
        Base frame, inside the fundamental domain.
    fiber : SpherePoint
    log_deriv : float
        Sum of log spherical derivatives of the holonomy applied so far.
    time : float
    """

    frame: Frame
    fiber: SpherePoint
    log_deriv: float = 0.0
    time: float = 0.0


def time_reversed(s: SkewState) -> SkewState:
    """Same point, opposite direction."""
    return replace(s, frame=Frame(s.frame.m @ ROTATION_PI))


def _prepare(group, rep):
    tab = group.tables
    mats, iso = rep.side_tables(group)
    return tab, mats, iso


_EMPTY_REC = np.zeros((0, N_COLUMNS))


def _run(group, rep, s: SkewState, dt, n_steps, rec=None, flip_record=False, budget=DEFAULT_BUDGET,
         tables=None):
    tab, mats, iso = tables if tables is not None else _prepare(group, rep)
    g = np.array(s.frame.m, dtype=float)
    v = np.array(s.fiber.v, dtype=complex)
    if rec is None:
        rec = _EMPTY_REC
    status, logd, time, _ = K.geodesic_run(
        g, v, float(s.log_deriv), float(s.time), int(n_steps), float(dt), *tab.args(), mats, iso, budget, rec, flip_record,
        *tab.chart_args(), FIBER_ROTATION,
    )
    if status != K.OK:
        raise ReductionBudgetError(f"reduction exceeded {budget} steps at time {s.time}")
    return SkewState(Frame(g), SpherePoint(v), logd, time)


def evolve(group: FuchsianGroup, rep: Representation, s: SkewState, dt: float, n_steps: int,
           budget: int = DEFAULT_BUDGET) -> SkewState:
    """Advance ``n_steps`` steps of size ``dt`` of the foliated geodesic flow."""
    _check_dt(dt)
    if n_steps < 0:
        raise PreconditionError("n_steps", "must be non-negative")
    if n_steps == 0:
        return s
    return _run(group, rep, s, dt, n_steps, budget=budget)


def record(group, rep, s: SkewState, dt, n_steps, flip_record=False, tables=None):
    """Run and return ``(end state, chart samples)``; sample j is the state at time j*dt."""
    _check_dt(dt)
    rec = np.empty((int(n_steps), N_COLUMNS))
    end = _run(group, rep, s, dt, n_steps, rec=rec, flip_record=flip_record, tables=tables)
    return end, rec


def enter_domain(group, rep, s: SkewState) -> SkewState:
    """Reduce a state whose frame may lie outside the domain."""
    tab, mats, iso = _prepare(group, rep)
    g = np.array(s.frame.m, dtype=float)
    v = np.array(s.fiber.v, dtype=complex)
    status, _, dl = K.reduce_frame(g, v, *tab.args(), mats, iso, DEFAULT_BUDGET, np.zeros(0, np.int64))
    if status != K.OK:
        raise ReductionBudgetError("reduction budget exceeded")
    return SkewState(Frame(g), SpherePoint(v), s.log_deriv + dl, s.time)


# ---------------------------------------------------------------------------
# random starting points


def uniform_fiber(rng) -> SpherePoint:
    """Round-measure random point of the sphere."""
    x = rng.normal(size=4)
    return SpherePoint(np.array([complex(x[0], x[1]), complex(x[2], x[3])]))


def liouville_point(group: FuchsianGroup, rng) -> complex:
    """Hyperbolic-area uniform point of the domain (cusps truncated at ``rho_cap``)."""
    dom = group.domain
    c = dom.centre
    radius = min(dom.circumradius(), group.rho_cap)
    top = np.cosh(radius) - 1
    while True:
        rho = np.arccosh(1 + rng.random() * top)
        w = np.tanh(rho / 2) * np.exp(2j * np.pi * rng.random())
        z = (c - w * np.conj(c)) / (1 - w)
        if dom.contains(z):
            return complex(z)


def liouville_state(group: FuchsianGroup, rng) -> SkewState:
    """Liouville-random frame in the domain with a round-random fiber point."""
    z = liouville_point(group, rng)
    theta = 2 * np.pi * rng.random()
    return SkewState(frame_from(z, theta), uniform_fiber(rng))


def initial_states(group, seed, n, stream=STREAM_LIOUVILLE):
    return [liouville_state(group, orbit_rng(seed, stream, i)) for i in range(n)]


# ---------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class ExponentEstimate:
    mean: float
    stderr: float
    values: tuple = field(repr=False)
    T: float = 0.0
    dt: float = 0.0
    N: int = 1

    @property
    def ci95(self) -> float:
        return 1.96 * self.stderr

    def as_dict(self):
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "ci95": self.ci95,
            "T": self.T,
            "dt": self.dt,
            "N": self.N,
            "values": list(self.values),
        }


def summarize(values, T, dt) -> ExponentEstimate:
    vals = np.asarray(values, dtype=float)
    n = len(vals)
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return ExponentEstimate(float(vals.mean()), se, tuple(float(x) for x in vals), float(T), float(dt), n)


def n_steps_for(T, dt) -> int:
    return int(np.floor(T / dt + 1e-9))


def transverse_lyapunov(group: FuchsianGroup, rep: Representation, seed: int, T: float, dt: float, N: int,
                        threads: int | None = None) -> ExponentEstimate:
    """Mean of ``log_deriv / T`` over N Liouville-random orbits."""
    if not T >= 100:
        raise PreconditionError("T", f"must be at least 100, got {T}")
    if N < 1:
        raise PreconditionError("N", "need at least one orbit")
    _check_dt(dt)
    n = n_steps_for(T, dt)
    tables = _prepare(group, rep)

    def one(i):
        s = liouville_state(group, orbit_rng(seed, STREAM_LIOUVILLE, i))
        end = _run(group, rep, s, dt, n, tables=tables)
        return end.log_deriv / (n * dt)

    return summarize(ordered_map(one, range(N), threads), n * dt, dt)


# ---------------------------------------------------------------------------
# trajectories

TRAJECTORY_COLUMNS = ["t", "re_base", "im_base", "angle", "fiber_affine_re", "fiber_affine_im", "log_deriv"]


def trajectory(group, rep, s: SkewState, dt, n_steps, every: int = 1) -> list:
    """Rows of the trajectory table, one per ``every`` steps (including the start)."""
    rows = []
    for j in range(0, n_steps + 1):
        if j % every == 0:
            z = base_point(s.frame)
            f = s.fiber.affine()
            rows.append([s.time, z.real, z.imag, direction(s.frame), f.real, f.imag, s.log_deriv])
        if j < n_steps:
            s = evolve(group, rep, s, dt, 1)
    return rows


def write_trajectory_csv(rows, path, path_type: str | None = None):
    cols = list(TRAJECTORY_COLUMNS) + (["path_type"] if path_type else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(x)) for x in r] + ([path_type] if path_type else []))

"""Geodesic flow for a conformally perturbed hyperbolic metric.

The metric is ``e^{2 phi} |dz|^2 / y^2`` on the half-plane, with ``phi`` a
sum of compactly supported bumps centred on an orbit of the group, so it
descends to the surface.  Its curvature is

    K = e^{-2 phi} (-1 - Lap_hyp phi).

Along a unit-speed geodesic the Riccati variable ``u`` (geodesic curvature
of the unstable horocycle) solves ``u' = -u^2 - K`` and the unstable
Jacobian grows like ``exp(integral of u)``.  Positions are kept in the
fundamental domain; ``phi`` and ``K`` are group invariant so only the
direction needs adjusting when a side is crossed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .cocycle import PreconditionError, liouville_point
from .hyperbolic import DomainError, Frame, base_point, direction, frame_from, horocycle_advance
from .parallel import STREAM_PAIRS, orbit_rng
from .surface_group import DEFAULT_BUDGET, FuchsianGroup, ReductionBudgetError

__all__ = [
    "PinchError",
    "PairGenerationError",
    "ConformalMetric",
    "build_invariant_bump",
    "metric_from_spec",
    "GeodesicVCState",
    "JacobianLog",
    "geodesic_riccati_step",
    "advance",
    "log_jacobian_segment",
    "unstable_log_jacobian",
    "UnstableFamily",
    "UnstablePair",
    "unstable_family",
    "PsiEstimate",
    "psi_u",
    "DistortionReport",
    "distortion_constant",
]

PROFILES = {"wendland-c4": K.PROFILE_WENDLAND_C4, "wendland-c2": K.PROFILE_WENDLAND_C2}
DEFAULT_DT = 1e-3
MAX_DT = 1e-3


class PinchError(ValueError):
    """Curvature not uniformly negative, or a trajectory left the certified range."""


class PairGenerationError(RuntimeError):
    """Could not produce points sharing a common past."""


# ---------------------------------------------------------------------------
# the metric


def orbit_centres(group: FuchsianGroup, k: int, base: complex | None = None) -> np.ndarray:
    """Distinct points ``w . base`` over all group words of length at most k."""
    base = group.domain.centre if base is None else complex(base)
    letters = [g for g in group.generators] + [np.linalg.inv(g) for g in group.generators]
    n = len(group.generators)
    inverse_of = np.array([(j + n) % (2 * n) for j in range(2 * n)])
    mats = np.eye(2)[None]
    last = np.array([-1])
    pts = [base]
    for _ in range(k):
        new_m, new_l = [], []
        for j, L in enumerate(letters):
            keep = last != inverse_of[j]
            new_m.append(mats[keep] @ L)
            new_l.append(np.full(int(keep.sum()), j))
        mats = np.concatenate(new_m)
        last = np.concatenate(new_l)
        a, b, c, d = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
        pts.extend((a * base + b) / (c * base + d))
    pts = np.asarray(pts, dtype=complex)
    # different words can name the same element; keep one centre per point
    disk = (pts - base) / (pts - np.conj(base))
    key = np.round(np.stack([disk.real, disk.imag], 1) * 1e9).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    return pts[np.sort(idx)]


def _hyp_dist(z, c):
    return 2 * np.arcsinh(np.abs(z - c) / (2 * np.sqrt(z.imag * c.imag)))


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """Group-invariant conformal factor built from bumps on an orbit.

    Attributes
    ----------
    epsilon, word_radius, support_radius, profile
        Construction parameters.
    centres : complex array
        All orbit points used in the sum.
    active : complex array
        Centres whose support meets the fundamental domain; enough to
        evaluate ``phi`` at reduced points.
    kappa0, kappa1 : float
        Certified pinch ``-kappa1 <= K <= -kappa0`` (grid extremes widened by
        a margin of ``0.1 epsilon``).
    curvature_range : (float, float)
        Raw minimum and maximum of ``K`` on the certification grid.
    invariance_residual, tail_bound : float
        Largest ``|phi(g z) - phi(z)|`` over probe points and generators, and
        largest change in ``phi`` on those points when two more word lengths
        are summed.
    """

    group: FuchsianGroup
    epsilon: float
    word_radius: int
    support_radius: float
    profile: str
    centres: np.ndarray
    active: np.ndarray
    kappa0: float
    kappa1: float
    curvature_range: tuple
    invariance_residual: float
    tail_bound: float
    k_override: float | None = None
    _qs1: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_qs1", float(np.cosh(self.support_radius) - 1))

    def kernel_args(self):
        return (self.active.real.copy(), self.active.imag.copy(), float(self.epsilon), self._qs1,
                PROFILES[self.profile], np.nan if self.k_override is None else float(self.k_override))

    def fields(self, z, centres: np.ndarray | None = None) -> np.ndarray:
        """Columns (phi, phi_x, phi_y, Lap phi) at points ``z``.

        By default only the active centres are used, which is exact for
        points of the fundamental domain; pass ``self.centres`` for
        arbitrary points.
        """
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if np.any(z.imag <= 0):
            raise DomainError("points must lie in the upper half-plane")
        c = self.active if centres is None else np.asarray(centres, dtype=complex)
        out = np.empty((z.size, 4))
        K.conformal_fields_many(z.real.copy(), z.imag.copy(), c.real.copy(), c.imag.copy(),
                                float(self.epsilon), self._qs1, PROFILES[self.profile], out)
        return out

    def phi(self, z, centres=None) -> np.ndarray:
        return self.fields(z, centres)[:, 0]

    def curvature(self, z, centres=None) -> np.ndarray:
        f = self.fields(z, centres)
        return np.exp(-2 * f[:, 0]) * (-1 - f[:, 3])

    def with_curvature_override(self, k: float) -> "ConformalMetric":
        """Same geometry, but the Riccati equation sees the constant ``k``."""
        return replace(self, k_override=float(k), kappa0=-float(k), kappa1=-float(k))

    def spec(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "word_radius": self.word_radius,
            "bump": {"support_radius": self.support_radius, "profile": self.profile},
        }

    def report(self) -> dict:
        return {
            **self.spec(),
            "kappa0": self.kappa0,
            "kappa1": self.kappa1,
            "curvature_range": list(self.curvature_range),
            "invariance_residual": self.invariance_residual,
            "tail_bound": self.tail_bound,
            "n_centres": int(len(self.centres)),
        }


def _domain_grid(group: FuchsianGroup, n_r: int, n_a: int) -> np.ndarray:
    """Polar grid about the domain centre, restricted to the domain."""
    d = group.domain
    c = d.centre
    R = min(d.circumradius(), group.rho_cap)
    rho = np.linspace(0, R, n_r)
    ang = np.linspace(0, 2 * np.pi, n_a, endpoint=False)
    w = (np.tanh(rho / 2)[:, None] * np.exp(1j * ang)[None, :]).ravel()
    z = (c - np.conj(c) * w) / (1 - w)
    vals = np.stack([np.vectorize(s.value)(z) for s in d.sides])
    return z[np.all(vals <= 1e-12, axis=0)]


def _probe_points(group: FuchsianGroup, n: int, seed: int) -> np.ndarray:
    rng = orbit_rng(seed, STREAM_PAIRS, 0)
    return np.array([liouville_point(group, rng) for _ in range(n)])


def build_invariant_bump(group: FuchsianGroup, epsilon: float, word_radius: int = 3, support_radius: float = 1.8,
                         profile: str = "wendland-c4", grid: tuple = (240, 360), n_probes: int = 100,
                         probe_seed: int = 0) -> ConformalMetric:
    """Conformal factor ``phi = epsilon * sum B(cosh d(z, w z0))`` over words ``|w| <= word_radius``.

    The curvature is evaluated on a polar grid of the fundamental domain and
    the construction fails if it is not uniformly negative.  Invariance is
    measured on ``n_probes`` random points of the domain, against every
    generator, and the truncation tail by re-summing with two more word
    lengths.

    Raises
    ------
    PreconditionError
        ``epsilon`` outside [0, 0.1] or ``word_radius < 2``.
    PinchError
        Curvature reaches 0 somewhere on the grid.
    """
    if not (0 <= epsilon <= 0.1):
        raise PreconditionError("epsilon", f"must lie in [0, 0.1], got {epsilon}")
    if int(word_radius) < 2:
        raise PreconditionError("word_radius", f"must be at least 2, got {word_radius}")
    if profile not in PROFILES:
        raise PreconditionError("bump.profile", f"unknown profile {profile!r}")
    if not support_radius > 0:
        raise PreconditionError("bump.support_radius", "must be positive")
    word_radius = int(word_radius)
    z0 = group.domain.centre
    centres = orbit_centres(group, word_radius)
    R = min(group.domain.circumradius(), group.rho_cap)
    active = centres[_hyp_dist(centres, z0) < R + support_radius + 0.1]
    metric = ConformalMetric(group, float(epsilon), word_radius, float(support_radius), profile, centres, active,
                             1.0, 1.0, (-1.0, -1.0), 0.0, 0.0)

    pts = _domain_grid(group, *grid)
    kv = metric.curvature(pts)
    kmin, kmax = float(kv.min()), float(kv.max())
    margin = 0.1 * epsilon
    if kmax + margin >= 0:
        raise PinchError(f"curvature reaches {kmax:.4g}; not uniformly negative")

    probes = _probe_points(group, n_probes, probe_seed)
    base_phi = metric.phi(probes, centres)
    resid = 0.0
    images = [probes]
    for g in group.generators:
        (a, b), (c, d) = g
        for m in (np.array([[a, b], [c, d]]), np.array([[d, -b], [-c, a]])):
            img = (m[0, 0] * probes + m[0, 1]) / (m[1, 0] * probes + m[1, 1])
            images.append(img)
            resid = max(resid, float(np.max(np.abs(metric.phi(img, centres) - base_phi))))
    tail = 0.0
    if epsilon > 0:
        pts_all = np.concatenate(images)
        wide = orbit_centres(group, word_radius + 2)
        far = max(float(_hyp_dist(pts_all, z0).max()), 0.0) + support_radius + 0.1
        wide = wide[_hyp_dist(wide, z0) < far]
        tail = float(np.max(np.abs(metric.phi(pts_all, wide) - metric.phi(pts_all, centres))))
    return replace(metric, kappa0=-(kmax + margin), kappa1=-(kmin - margin), curvature_range=(kmin, kmax),
                   invariance_residual=resid, tail_bound=tail)


def metric_from_spec(group: FuchsianGroup, spec: dict | str) -> ConformalMetric:
    """Build from ``{epsilon, word_radius, bump: {support_radius, profile}}``."""
    if isinstance(spec, str):
        spec = json.loads(spec)
    bump = spec.get("bump", {})
    return build_invariant_bump(group, float(spec["epsilon"]), int(spec.get("word_radius", 3)),
                                float(bump.get("support_radius", 1.8)), bump.get("profile", "wendland-c4"))


# ---------------------------------------------------------------------------
# states and stepping


@dataclass(frozen=True)
class GeodesicVCState:
    """Unit tangent vector for the perturbed metric plus Riccati data.

    ``theta`` is the Euclidean angle of the velocity in the half-plane
    chart, ``u`` the Riccati variable, ``log_jacobian`` the running
    integral of ``u`` and ``time`` the elapsed arclength.
    """

    z: complex
    theta: float
    u: float = 1.0
    time: float = 0.0
    log_jacobian: float = 0.0

    def __post_init__(self):
        if not complex(self.z).imag > 0:
            raise DomainError("position must lie in the upper half-plane")

    @classmethod
    def from_frame(cls, g: Frame, u: float = 1.0) -> "GeodesicVCState":
        return cls(base_point(g), direction(g), u)

    def to_frame(self) -> Frame:
        return frame_from(self.z, self.theta)

    def row(self) -> np.ndarray:
        return np.array([self.z.real, self.z.imag, self.theta, self.u, self.log_jacobian, self.time])

    @classmethod
    def from_row(cls, r) -> "GeodesicVCState":
        return cls(complex(r[0], r[1]), float(r[2]), float(r[3]), float(r[5]), float(r[4]))


@dataclass(frozen=True)
class JacobianLog:
    """``value`` = log of the unstable Jacobian over a segment of length ``T``."""

    value: float
    T: float
    steps: int
    dt: float
    washout: float = 0.0

    def as_dict(self):
        return {"value": self.value, "T": self.T, "steps": self.steps, "dt": self.dt, "washout": self.washout}


def _check_dt(dt):
    if not (0 < dt <= MAX_DT):
        raise PreconditionError("dt", f"must lie in (0, {MAX_DT}], got {dt}")


def _steps(T, dt):
    return int(round(T / dt))


def _integrate(metric: ConformalMetric, rows: np.ndarray, n_steps: int, dt: float, reduce: bool = True):
    """Advance the rows in place (lockstep, shared reductions)."""
    tab = metric.group.tables
    cx, cy, eps, qs1, prof, kov = metric.kernel_args()
    if metric.k_override is None:
        lo, hi = -metric.kappa1, -metric.kappa0
    else:
        lo, hi = -np.inf, np.inf
    status = K.vc_run(rows, int(n_steps), float(dt), cx, cy, eps, qs1, prof, kov, lo, hi, bool(reduce),
                      tab.kinds, tab.ms, tab.rs, tab.sgns, tab.partner, tab.moves, tab.centre, DEFAULT_BUDGET)
    if status == K.OUT_OF_PINCH:
        raise PinchError("curvature left the certified pinch interval along the trajectory")
    if status == K.BUDGET_EXCEEDED:
        raise ReductionBudgetError("reduction budget exceeded")
    return rows


def geodesic_riccati_step(metric: ConformalMetric, s: GeodesicVCState, dt: float = DEFAULT_DT,
                          reduce: bool = True) -> GeodesicVCState:
    """One classical Runge-Kutta step of the geodesic and Riccati equations."""
    _check_dt(dt)
    rows = s.row()[None].copy()
    return GeodesicVCState.from_row(_integrate(metric, rows, 1, dt, reduce)[0])


def advance(metric: ConformalMetric, s: GeodesicVCState, T: float, dt: float = DEFAULT_DT,
            reduce: bool = True) -> GeodesicVCState:
    """``round(T / dt)`` steps from ``s``."""
    _check_dt(dt)
    if T < 0:
        raise PreconditionError("T", "must be non-negative")
    rows = s.row()[None].copy()
    return GeodesicVCState.from_row(_integrate(metric, rows, _steps(T, dt), dt, reduce)[0])


def log_jacobian_segment(metric: ConformalMetric, s: GeodesicVCState, T: float,
                         dt: float = DEFAULT_DT) -> tuple[JacobianLog, GeodesicVCState]:
    """Integral of ``u`` over the next ``T`` units, starting from the Riccati value in ``s``."""
    end = advance(metric, s, T, dt)
    return JacobianLog(end.log_jacobian - s.log_jacobian, float(T), _steps(T, dt), float(dt)), end


def unstable_log_jacobian(metric: ConformalMetric, x: GeodesicVCState, T: float, T_pre: float,
                          dt: float = DEFAULT_DT, u0: float | None = None) -> JacobianLog:
    """log Det of the unstable derivative over ``T``, after a washout of ``T_pre``.

    The orbit starts at ``x``; the Riccati variable is set to ``u0`` (default
    ``sqrt(kappa0)``) and integrated for ``T_pre`` before the integral of
    ``u`` is accumulated over the next ``T``.  The initial value is
    forgotten at rate ``exp(-2 sqrt(kappa0) T_pre)``.
    """
    _check_dt(dt)
    need = 20.0 / np.sqrt(metric.kappa0)
    if T_pre < need:
        raise PreconditionError("T_pre", f"washout must be at least {need:.4g}, got {T_pre}")
    if not T > 0:
        raise PreconditionError("T", f"must be positive, got {T}")
    u0 = np.sqrt(metric.kappa0) if u0 is None else float(u0)
    start = advance(metric, replace(x, u=u0), T_pre, dt)
    log, _ = log_jacobian_segment(metric, start, T, dt)
    return replace(log, washout=float(T_pre))


# ---------------------------------------------------------------------------
# points on a common unstable leaf


@dataclass(frozen=True, eq=False)
class UnstableFamily:
    """Orbits that share one computed past and separate only near the end.

    All members follow the same trajectory until ``split`` time units before
    the present, where the others are displaced along the unstable
    horocycle by amounts tuned so that their present distance from member 0
    hits the requested targets.  Because the pasts coincide before the split
    the Riccati histories coincide as well; the omitted contribution from
    the true (exponentially converging) pasts is below ``past_residual``.

    ``checkpoints[j, i]`` is the running integral of ``u`` for member ``i``
    at time ``-times[j]`` (``times`` runs from ``history`` down to 0).
    """

    metric: ConformalMetric
    states: tuple
    distances: np.ndarray
    times: np.ndarray
    checkpoints: np.ndarray
    split: float
    past_residual: float
    dt: float

    @property
    def history(self) -> float:
        return float(self.times[0])

    def jacobian_since(self, i: int, T: float) -> float:
        """Integral of ``u`` for member ``i`` over the last ``T`` units."""
        j = int(np.argmin(np.abs(self.times - T)))
        if abs(self.times[j] - T) > 1e-9 * max(1.0, T):
            raise PreconditionError("T", f"{T} is not a recorded checkpoint")
        return float(self.checkpoints[-1, i] - self.checkpoints[j, i])

    def pair(self, i: int = 0, j: int = 1) -> "UnstablePair":
        return UnstablePair(self, i, j)


@dataclass(frozen=True, eq=False)
class UnstablePair:
    family: UnstableFamily
    i: int
    j: int

    @property
    def x(self) -> GeodesicVCState:
        return self.family.states[self.i]

    @property
    def y(self) -> GeodesicVCState:
        return self.family.states[self.j]

    @property
    def distance(self) -> float:
        return conformal_distance(self.family.metric, self.x.z, self.y.z)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def conformal_distance(metric: ConformalMetric, z1: complex, z2: complex) -> float:
    """Length in the perturbed metric of the hyperbolic geodesic from z1 to z2."""
    if z1 == z2:
        return 0.0
    # move to the disk centred at z1, where the geodesic is a radius
    w = (z2 - z1) / (z2 - np.conj(z1))
    r = abs(w)
    t = 0.5 * (_GL_NODES + 1) * r
    pts_w = t * w / r
    pts = (z1 - np.conj(z1) * pts_w) / (1 - pts_w)
    dens = 2.0 / (1 - t**2)  # hyperbolic arclength per unit disk radius
    phi = metric.phi(pts, metric.centres)
    return float(0.5 * r * np.sum(_GL_WEIGHTS * dens * np.exp(phi)))


def _offset(s_row: np.ndarray, eta: float) -> np.ndarray:
    st = GeodesicVCState.from_row(s_row)
    g = horocycle_advance(st.to_frame(), eta, "unstable")
    out = s_row.copy()
    z = base_point(g)
    out[0], out[1], out[2] = z.real, z.imag, direction(g)
    return out


def unstable_family(metric: ConformalMetric, distances, history: float, seed: int = 0,
                    start: GeodesicVCState | None = None, split: float = 20.0, T_pre: float | None = None,
                    dt: float = DEFAULT_DT, checkpoint: float = 1.0, tol: float = 1e-3) -> UnstableFamily:
    """Member 0 plus one member per target unstable distance.

    The common past is integrated forward from ``start`` (a random point of
    the domain if omitted) for a washout ``T_pre`` plus ``history``.  The
    displacement at the split is tuned by a multiplicative secant iteration
    until each present distance is within relative ``tol`` of its target.
    """
    _check_dt(dt)
    distances = np.atleast_1d(np.asarray(distances, dtype=float))
    if np.any(distances < 0) or np.any(distances > 0.5):
        raise PreconditionError("distances", "unstable distances must lie in [0, 0.5]")
    if not history >= split:
        raise PreconditionError("history", f"must be at least the split time {split}")
    T_pre = 20.0 / np.sqrt(metric.kappa0) if T_pre is None else float(T_pre)
    if T_pre < 20.0 / np.sqrt(metric.kappa0):
        raise PreconditionError("T_pre", "washout too short")
    if start is None:
        rng = orbit_rng(seed, STREAM_PAIRS, 1)
        start = GeodesicVCState(liouville_point(metric.group, rng), float(rng.uniform(0, 2 * np.pi)))
    row = replace(start, u=float(np.sqrt(metric.kappa0)), time=0.0, log_jacobian=0.0).row()[None].copy()
    _integrate(metric, row, _steps(T_pre, dt), dt)
    row[0, 4] = 0.0
    row[0, 5] = 0.0

    per = _steps(checkpoint, dt)
    n_ck = int(round(history / checkpoint))
    n_pre = int(round((history - split) / checkpoint))
    if abs(n_ck * checkpoint - history) > 1e-9 or abs((history - split) - n_pre * checkpoint) > 1e-9:
        raise PreconditionError("history", "history and split must be multiples of the checkpoint spacing")
    ck = [row[0, 4]]
    for _ in range(n_pre):
        _integrate(metric, row, per, dt)
        ck.append(row[0, 4])
    split_row = row[0].copy()
    split_steps = (n_ck - n_pre) * per

    etas = np.zeros(len(distances))
    rate = np.exp(-np.sqrt(metric.kappa1) * split)
    for m, target in enumerate(distances):
        if target == 0:
            continue
        eta = target * rate
        for _ in range(30):
            trial = np.stack([split_row, _offset(split_row, eta)])
            _integrate(metric, trial, split_steps, dt)
            got = conformal_distance(metric, complex(trial[0, 0], trial[0, 1]), complex(trial[1, 0], trial[1, 1]))
            if not np.isfinite(got) or got <= 0:
                raise PairGenerationError("displaced orbit did not separate")
            if abs(got - target) <= tol * target:
                break
            eta *= target / got
        else:
            raise PairGenerationError(f"could not reach unstable distance {target}")
        etas[m] = eta

    rows = np.stack([split_row] + [_offset(split_row, e) if e else split_row.copy() for e in etas])
    cks = [np.full(len(rows), c) for c in ck]
    for _ in range(n_ck - n_pre):
        _integrate(metric, rows, per, dt)
        cks.append(rows[:, 4].copy())
    states = tuple(GeodesicVCState.from_row(r) for r in rows)
    dist = np.array([conformal_distance(metric, states[0].z, s.z) for s in states[1:]])
    times = history - checkpoint * np.arange(n_ck + 1)
    resid = float(dist.max(initial=0.0) * np.exp(-np.sqrt(metric.kappa0) * split))
    return UnstableFamily(metric, states, dist, times, np.array(cks), float(split), resid, float(dt))


@dataclass(frozen=True)
class PsiEstimate:
    value: float
    log_value: float
    defect: float
    T: float
    distance: float

    def as_dict(self):
        return {"value": self.value, "log_value": self.log_value, "defect": self.defect, "T": self.T,
                "distance": self.distance}


def _log_psi(pair: UnstablePair, T: float) -> float:
    f = pair.family
    return -(f.jacobian_since(pair.j, T) - f.jacobian_since(pair.i, T))


def psi_u(metric: ConformalMetric, pair: UnstablePair, T: float) -> PsiEstimate:
    """Ratio of backward unstable Jacobians, ``Det D^u X_{-T}(y) / Det D^u X_{-T}(x)``.

    ``defect`` is ``|log psi(T) - log psi(2T)|``; the family must record a
    history of at least ``2T``.
    """
    if pair.family.metric is not metric:
        raise PairGenerationError("pair was generated for a different metric")
    if T < 50:
        raise PreconditionError("T", f"must be at least 50, got {T}")
    if 2 * T > pair.family.history + 1e-9:
        raise PreconditionError("T", f"family history {pair.family.history} is shorter than 2T = {2 * T}")
    a = _log_psi(pair, T)
    b = _log_psi(pair, 2 * T)
    return PsiEstimate(float(np.exp(a)), a, abs(a - b), float(T), pair.distance)


@dataclass(frozen=True)
class DistortionReport:
    C: float
    distances: np.ndarray
    differences: np.ndarray
    T: float

    def as_dict(self):
        return {"C": self.C, "T": self.T, "distances": self.distances.tolist(),
                "differences": self.differences.tolist()}


def distortion_constant(metric: ConformalMetric, pairs, T: float) -> DistortionReport:
    """Largest ratio of ``|log Det D^u X_{-T}(x) - log Det D^u X_{-T}(y)|`` to the distance."""
    pairs = list(pairs)
    if not pairs:
        raise PreconditionError("pairs", "need at least one pair")
    d = np.array([p.distance for p in pairs])
    if np.any(d <= 0) or np.any(d > 0.5):
        raise PreconditionError("pairs", "unstable distances must lie in (0, 0.5]")
    diff = np.array([abs(psi_u(metric, p, T).log_value) for p in pairs])
    return DistortionReport(float(np.max(diff / d)), d, diff, float(T))

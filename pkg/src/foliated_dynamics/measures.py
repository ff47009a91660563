"""Empirical measures of the foliated flow and what is computed from them.

Samples live in the equal-area chart of :mod:`foliated_dynamics.charts`.
Distances between measures are multiscale histogram distances: for each
level of a :class:`GridSpec` the cell masses of the two measures are
compared in half-L1, and the levels are averaged with fixed weights.  The
default grid has three levels with 8^3, 16^3 and 32^3 cells, each split as
(base cells) x (direction bins) x (fiber cells):

    level 0: base 2 x 4,  8 directions, fiber 4 x 2
    level 1: base 4 x 4, 16 directions, fiber 4 x 4
    level 2: base 4 x 8, 32 directions, fiber 8 x 4
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .charts import N_COLUMNS, octahedral_inverse
from .cocycle import (
    PreconditionError,
    Representation,
    SkewState,
    _check_dt,
    _prepare,
    enter_domain,
    evolve,
    liouville_state,
    n_steps_for,
    record,
    time_reversed,
    uniform_fiber,
)
from .hyperbolic import Frame, SpherePoint, frame_from, horocycle_advance
from .parallel import STREAM_ARC, STREAM_LIOUVILLE, STREAM_VISIBILITY, ordered_map, orbit_rng
from .surface_group import FuchsianGroup

__all__ = [
    "GridSpec",
    "EmpiricalMeasure",
    "AttractorSet",
    "VisibilityEstimate",
    "GridMismatchError",
    "bl_distance",
    "tv_distance",
    "birkhoff_empirical",
    "unstable_arc_empirical",
    "invariance_defect",
    "classify_attractors",
    "visibility",
    "compare_time_reversal",
    "section_concentration",
    "regular_set_fraction",
    "DEFAULT_GRID",
]


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Histogram levels, each ``(n_area, n_angle, n_direction, n_fiber_u, n_fiber_v)``."""

    levels: tuple = ((2, 4, 8, 4, 2), (4, 4, 16, 4, 4), (4, 8, 32, 8, 4))
    weights: tuple = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if len(self.levels) != len(self.weights):
            raise ValueError("one weight per level")
        if abs(sum(self.weights) - 1) > 1e-12:
            raise ValueError("level weights must sum to 1")

    def as_dict(self):
        return {"levels": [list(x) for x in self.levels], "weights": list(self.weights)}


DEFAULT_GRID = GridSpec()

# columns of the sample array used by the histogram dimensions
_DIM_COLUMNS = (0, 1, 2, 3, 4)


def cell_index(samples: np.ndarray, dims, columns=_DIM_COLUMNS) -> np.ndarray:
    """Flat cell index of every sample row on the product grid ``dims``."""
    idx = np.zeros(len(samples), dtype=np.int64)
    for n, col in zip(dims, columns):
        k = np.floor(samples[:, col].astype(np.float64) * n).astype(np.int64)
        np.clip(k, 0, n - 1, out=k)
        idx = idx * n + k
    return idx


@dataclass(eq=False)
class EmpiricalMeasure:
    """Weighted sample cloud with cached histograms.

    ``samples`` may be dropped (``None``) once the histograms a caller
    needs are cached; mixtures of sample-free measures stay sample-free.
    """

    samples: np.ndarray | None
    weights: np.ndarray | None
    grid: GridSpec = DEFAULT_GRID
    meta: dict = field(default_factory=dict)
    _hists: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.samples is not None:
            self.samples = np.asarray(self.samples, dtype=np.float32)
            if self.samples.ndim != 2 or self.samples.shape[1] != N_COLUMNS:
                raise ValueError(f"samples must have shape (n, {N_COLUMNS})")
            self.weights = np.asarray(self.weights, dtype=float)
            if len(self.weights) != len(self.samples):
                raise ValueError("one weight per sample")
            if np.any(self.weights < 0):
                raise ValueError("weights must be non-negative")

    @property
    def n_samples(self) -> int:
        return 0 if self.samples is None else len(self.samples)

    @property
    def total_mass(self) -> float:
        if self.samples is not None:
            return float(self.weights.sum())
        return float(next(iter(self._hists.values())).sum())

    def histogram(self, dims, columns=_DIM_COLUMNS) -> np.ndarray:
        """Cell masses on the product grid ``dims`` (flat, C order)."""
        key = (tuple(dims), tuple(columns))
        if key not in self._hists:
            if self.samples is None:
                raise ValueError(f"histogram {dims} not cached and samples were dropped")
            idx = cell_index(self.samples, dims, columns)
            self._hists[key] = np.bincount(idx, weights=self.weights, minlength=int(np.prod(dims)))
        return self._hists[key]

    def level(self, k: int) -> np.ndarray:
        return self.histogram(self.grid.levels[k])

    def warm(self):
        for dims in self.grid.levels:
            self.histogram(dims)
        return self

    def drop_samples(self) -> "EmpiricalMeasure":
        """Cache the grid histograms and release the sample array."""
        self.warm()
        self.samples = None
        self.weights = None
        return self

    def base_marginal(self, n_area: int = 32, n_angle: int = 32) -> np.ndarray:
        return self.histogram((n_area, n_angle), (0, 1)).reshape(n_area, n_angle)

    def fiber_marginal(self, nu: int = 8, nv: int = 4) -> np.ndarray:
        return self.histogram((nu, nv), (3, 4)).reshape(nu, nv)

    @classmethod
    def mix(cls, measures, weights=None, keep_samples: bool = True) -> "EmpiricalMeasure":
        """Convex combination; equal weights by default."""
        measures = list(measures)
        if not measures:
            raise ValueError("nothing to mix")
        grid = measures[0].grid
        if any(m.grid != grid for m in measures):
            raise GridMismatchError("cannot mix measures on different grids")
        w = np.full(len(measures), 1.0 / len(measures)) if weights is None else np.asarray(weights, float)
        if len(measures) == 1 and w[0] == 1.0:
            m = measures[0]
            out = cls(m.samples, m.weights, grid, dict(m.meta))
            out._hists = dict(m._hists)
            return out
        if keep_samples and all(m.samples is not None for m in measures):
            samples = np.concatenate([m.samples for m in measures])
            wts = np.concatenate([m.weights * wi for m, wi in zip(measures, w)])
            return cls(samples, wts, grid)
        keys = set(measures[0].warm()._hists)
        for m in measures[1:]:
            keys &= set(m.warm()._hists)
        out = cls(None, None, grid)
        for key in keys:
            out._hists[key] = sum(wi * m._hists[key] for m, wi in zip(measures, w))
        return out

    # export ----------------------------------------------------------------

    def to_json(self, level: int = -1) -> str:
        h = self.level(level)
        nz = np.nonzero(h)[0]
        doc = {
            "gridspec": {**self.grid.as_dict(), "exported_level": level % len(self.grid.levels)},
            "cells": [[int(i), float(h[i])] for i in nz],
        }
        return json.dumps(doc, sort_keys=True)

    def to_csv(self, path, level: int = -1):
        h = self.level(level)
        dims = self.grid.levels[level]
        rows = []
        for i in np.nonzero(h)[0]:
            rows.append([int(i), *np.unravel_index(int(i), dims), repr(float(h[i]))])
        _atomic_write_rows(path, ["index", "area", "angle", "direction", "fiber_u", "fiber_v", "mass"], rows)

    def fiber_svg(self, nu: int = 8, nv: int = 4, cell: int = 40) -> str:
        """Self-contained SVG heatmap of the fiber marginal in the equal-area square."""
        h = self.fiber_marginal(nu, nv)
        top = h.max() if h.max() > 0 else 1.0
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{nu * cell}" height="{nv * cell}" '
            f'viewBox="0 0 {nu * cell} {nv * cell}">',
            f'<rect class="frame" x="0" y="0" width="{nu * cell}" height="{nv * cell}" fill="none" stroke="#888"/>',
        ]
        for i in range(nu):
            for j in range(nv):
                if h[i, j] <= 0:
                    continue
                shade = int(255 * (1 - h[i, j] / top))
                parts.append(
                    f'<rect class="cell" x="{i * cell}" y="{(nv - 1 - j) * cell}" width="{cell}" '
                    f'height="{cell}" fill="rgb(255,{shade},{shade})"><title>{h[i, j]:.6g}</title></rect>'
                )
        parts.append("</svg>")
        return "\n".join(parts)


def _atomic_write_rows(path, header, rows):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# distances


def tv_distance(m1: EmpiricalMeasure, m2: EmpiricalMeasure, dims, columns=_DIM_COLUMNS) -> float:
    """Half the L1 distance between the cell masses on one grid."""
    return float(0.5 * np.abs(m1.histogram(dims, columns) - m2.histogram(dims, columns)).sum())


def bl_distance(m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    """Multiscale histogram distance: weighted mean over levels of half-L1."""
    if m1.grid != m2.grid:
        raise GridMismatchError("measures are on different grids")
    return float(sum(w * tv_distance(m1, m2, dims) for dims, w in zip(m1.grid.levels, m1.grid.weights)))


# ---------------------------------------------------------------------------
# construction


def birkhoff_empirical(group: FuchsianGroup, rep: Representation, p: SkewState, T: float, dt: float,
                       grid: GridSpec = DEFAULT_GRID, reverse: bool = False, tables=None) -> EmpiricalMeasure:
    """Time average of the orbit of ``p`` over [0, T], one atom per step.

    With ``reverse`` the orbit of the time-reversed state is followed and
    every sample is turned back, i.e. the measure of the backward flow
    written in forward coordinates.
    """
    if not T > 0:
        raise PreconditionError("T", f"must be positive, got {T}")
    _check_dt(dt)
    n = max(1, n_steps_for(T, dt))
    start = time_reversed(p) if reverse else p
    _, rec = record(group, rep, start, dt, n, flip_record=reverse, tables=tables)
    m = EmpiricalMeasure(rec.astype(np.float32), np.full(n, 1.0 / n), grid)
    m.meta["origin"] = (p, float(dt), n, bool(reverse))
    return m


def unstable_arc_empirical(group: FuchsianGroup, rep: Representation, g, arc_len: float, n_samples: int,
                           T: float, dt: float, fiber: SpherePoint | None = None, seed: int = 0,
                           grid: GridSpec = DEFAULT_GRID, threads: int | None = None) -> EmpiricalMeasure:
    """Average of orbit measures started on an unstable horocycle arc through ``g``.

    ``g`` is a Frame or a SkewState.  The arc points are the midpoints of
    ``n_samples`` equal pieces of ``[-arc_len/2, arc_len/2]``; they all carry
    the same fiber point (the unstable leaf is flat in the fiber direction).
    """
    if not arc_len > 0:
        raise PreconditionError("arc_len", "must be positive")
    if n_samples < 1:
        raise PreconditionError("n_samples", "need at least one sample")
    if isinstance(g, SkewState):
        frame, fiber = g.frame, g.fiber
    else:
        frame = g
        if fiber is None:
            fiber = uniform_fiber(orbit_rng(seed, STREAM_ARC, 0))
    offsets = arc_len * ((np.arange(n_samples) + 0.5) / n_samples - 0.5)
    tables = _prepare(group, rep)

    def one(s):
        st = SkewState(horocycle_advance(frame, float(s), "unstable"), fiber)
        st = enter_domain(group, rep, st)
        return birkhoff_empirical(group, rep, st, T, dt, grid, tables=tables)

    parts = ordered_map(one, offsets, threads)
    return EmpiricalMeasure.mix(parts)


def _advance_by(group, rep, s, t, dt):
    k = t / dt
    if abs(k - round(k)) < 1e-9 and round(k) >= 1:
        return evolve(group, rep, s, dt, int(round(k)))
    n_full = int(np.floor(k))
    if n_full:
        s = evolve(group, rep, s, dt, n_full)
    return evolve(group, rep, s, t - n_full * dt, 1)


def invariance_defect(group: FuchsianGroup, rep: Representation, m: EmpiricalMeasure, s: float) -> float:
    """Total variation between an orbit measure and its push-forward by the time-s flow.

    The push-forward is the time average over [s, T + s] of the same orbit;
    both are compared on the finest grid level.
    """
    if "origin" not in m.meta:
        raise ValueError("measure does not come from a single orbit")
    p, dt, n, reverse = m.meta["origin"]
    T = n * dt
    if not (0 < s <= T / 10):
        raise PreconditionError("s", f"must lie in (0, T/10] = (0, {T / 10}], got {s}")
    start = time_reversed(p) if reverse else p
    shifted = _advance_by(group, rep, start, s, dt)
    if reverse:
        shifted = time_reversed(shifted)
    m2 = birkhoff_empirical(group, rep, shifted, T, dt, m.grid, reverse=reverse)
    return tv_distance(m, m2, m.grid.levels[-1])


# ---------------------------------------------------------------------------
# attractors and visibility


@dataclass(eq=False)
class AttractorSet:
    representatives: list
    labels: list
    eps: float

    @property
    def count(self) -> int:
        return len(self.representatives)


def classify_attractors(measures, eps: float, keep_samples: bool = False) -> AttractorSet:
    """Single-linkage clusters at radius ``eps``; one mixed representative per cluster.

    Clusters whose representatives end up closer than ``2 eps`` are merged,
    so the returned representatives are pairwise more than ``2 eps`` apart.
    """
    measures = list(measures)
    if not measures:
        raise ValueError("need at least one measure")
    if not eps > 0:
        raise PreconditionError("eps", "must be positive")
    n = len(measures)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if find(i) != find(j) and bl_distance(measures[i], measures[j]) <= eps:
                parent[find(j)] = find(i)

    while True:
        roots = sorted({find(i) for i in range(n)})
        reps = [EmpiricalMeasure.mix([measures[i] for i in range(n) if find(i) == r], keep_samples=keep_samples)
                for r in roots]
        merged = False
        for a in range(len(roots)):
            for b in range(a + 1, len(roots)):
                if bl_distance(reps[a], reps[b]) <= 2 * eps:
                    parent[roots[b]] = roots[a]
                    merged = True
                    break
            if merged:
                break
        if not merged:
            break
    labels = [roots.index(find(i)) for i in range(n)]
    return AttractorSet(reps, labels, float(eps))


@dataclass
class VisibilityEstimate:
    point: complex
    f: np.ndarray
    counts: np.ndarray
    unlabeled: int
    n_dirs: int
    half_width: np.ndarray

    @property
    def unlabeled_fraction(self) -> float:
        return self.unlabeled / self.n_dirs

    def as_dict(self):
        return {
            "point": [self.point.real, self.point.imag],
            "f": [float(x) for x in self.f],
            "counts": [int(x) for x in self.counts],
            "unlabeled": int(self.unlabeled),
            "unlabeled_fraction": self.unlabeled_fraction,
            "n_dirs": int(self.n_dirs),
            "half_width": [float(x) for x in self.half_width],
        }


def visibility(group: FuchsianGroup, rep: Representation, attractors: AttractorSet, x: complex, N_dirs: int,
               T: float, dt: float, seed: int = 0, fiber: SpherePoint | None = None,
               threads: int | None = None) -> VisibilityEstimate:
    """Fraction of directions at ``x`` whose orbit statistics approach each attractor.

    Directions are uniform on the circle; every orbit starts at the same
    fiber point.  An orbit is labeled by the nearest representative, or
    left unlabeled when it is farther than ``eps`` from all of them.
    """
    if attractors.count < 1:
        raise PreconditionError("attractors", "need at least one attractor")
    if N_dirs < 1:
        raise PreconditionError("N_dirs", "need at least one direction")
    x = complex(x)
    if fiber is None:
        fiber = uniform_fiber(orbit_rng(seed, STREAM_VISIBILITY, 10**9))
    tables = _prepare(group, rep)
    for r in attractors.representatives:
        r.warm()

    def one(i):
        theta = 2 * np.pi * orbit_rng(seed, STREAM_VISIBILITY, i).random()
        st = enter_domain(group, rep, SkewState(frame_from(x, theta), fiber))
        m = birkhoff_empirical(group, rep, st, T, dt, attractors.representatives[0].grid, tables=tables)
        d = [bl_distance(m, r) for r in attractors.representatives]
        k = int(np.argmin(d))
        return k if d[k] <= attractors.eps else -1

    labels = np.array(ordered_map(one, range(N_dirs), threads))
    counts = np.array([(labels == k).sum() for k in range(attractors.count)])
    labeled = counts.sum()
    f = counts / labeled if labeled else np.zeros(attractors.count)
    hw = 1.96 * np.sqrt(f * (1 - f) / max(labeled, 1))
    return VisibilityEstimate(x, f, counts, int((labels < 0).sum()), int(N_dirs), hw)


# ---------------------------------------------------------------------------
# forward versus backward statistics

COMPARE_DIMS = (2, 4, 8, 4, 2)


def _ensemble(group, rep, seed, T, dt, N, reverse, grid, threads, keep_samples=True):
    tables = _prepare(group, rep)

    def one(i):
        st = liouville_state(group, orbit_rng(seed, STREAM_LIOUVILLE, i))
        return birkhoff_empirical(group, rep, st, T, dt, grid, reverse=reverse, tables=tables)

    return EmpiricalMeasure.mix(ordered_map(one, range(N), threads), keep_samples=keep_samples)


def compare_time_reversal(group: FuchsianGroup, rep: Representation, T: float, dt: float, N: int, seed: int = 0,
                          dims=COMPARE_DIMS, grid: GridSpec = DEFAULT_GRID, threads: int | None = None):
    """Forward and backward ensemble measures and their joint total variation.

    Both ensembles start from the same Liouville-random states; the
    backward one follows the reversed flow and records frames turned back
    to the forward direction.  ``tv`` is half the L1 distance on the joint
    (area, angle, direction, fiber u, fiber v) grid ``dims``.

    Returns
    -------
    (float, EmpiricalMeasure, EmpiricalMeasure)
    """
    if not T >= 100:
        raise PreconditionError("T", f"must be at least 100, got {T}")
    if N < 1:
        raise PreconditionError("N", "need at least one orbit")
    plus = _ensemble(group, rep, seed, T, dt, N, False, grid, threads)
    minus = _ensemble(group, rep, seed, T, dt, N, True, grid, threads)
    return tv_distance(plus, minus, dims), plus, minus


def _fiber_cell_centres(nu, nv):
    uu, vv = np.meshgrid((np.arange(nu) + 0.5) / nu, (np.arange(nv) + 0.5) / nv, indexing="ij")
    return octahedral_inverse(np.stack([uu.ravel(), vv.ravel()], axis=1))


def section_concentration(m: EmpiricalMeasure, section: str = "backward", base_dims=(4, 4, 16),
                          fiber_dims=(8, 4), nearest: int = 2, threshold: float = 0.9,
                          chunk: int = 500_000) -> float:
    """Fraction of occupied base cells whose fiber mass sits next to a section.

    For every sample the ``nearest`` fiber cells of the chosen geodesic
    endpoint of its frame are the cell containing the endpoint followed by
    the cells whose centres are closest to it on the sphere.  A base cell
    (area x angle x direction) passes when at least ``threshold`` of its
    mass has its fiber point in one of those cells.
    """
    if m.samples is None:
        raise ValueError("section concentration needs samples")
    cols = {"backward": (5, 6), "forward": (7, 8)}[section]
    nu, nv = fiber_dims
    centres = _fiber_cell_centres(nu, nv)
    base_idx = cell_index(m.samples, base_dims, (0, 1, 2))
    n_base = int(np.prod(base_dims))
    hit = np.zeros(n_base)
    for a in range(0, m.n_samples, chunk):
        s = m.samples[a:a + chunk].astype(np.float64)
        sec = octahedral_inverse(s[:, cols])
        sec_cell = cell_index(s, fiber_dims, cols)
        closeness = sec @ centres.T
        closeness[np.arange(len(s)), sec_cell] = np.inf  # the containing cell comes first
        near = np.argpartition(-closeness, nearest - 1, axis=1)[:, :nearest]
        own = cell_index(s, fiber_dims, (3, 4))
        ok = (near == own[:, None]).any(axis=1)
        hit += np.bincount(base_idx[a:a + chunk], weights=m.weights[a:a + chunk] * ok, minlength=n_base)
    mass = np.bincount(base_idx, weights=m.weights, minlength=n_base)
    occupied = mass > 0
    return float(np.mean(hit[occupied] >= threshold * mass[occupied]))


def regular_set_fraction(group: FuchsianGroup, rep: Representation, seed: int, T: float, dt: float, N: int,
                         threshold: float = 0.1, threads: int | None = None) -> float:
    """Fraction of Liouville-random starts whose forward and backward orbit measures are BL-close."""
    tables = _prepare(group, rep)

    def one(i):
        st = liouville_state(group, orbit_rng(seed, STREAM_LIOUVILLE, i))
        fwd = birkhoff_empirical(group, rep, st, T, dt, tables=tables)
        bwd = birkhoff_empirical(group, rep, st, T, dt, reverse=True, tables=tables)
        return bl_distance(fwd, bwd) < threshold

    return float(np.mean(ordered_map(one, range(N), threads)))

"""Fuchsian groups, fundamental polygons and reduction to the polygon.

A group carries its generators, a convex geodesic polygon and, for every
side, the generator power that carries the outside of that side back
across the paired side.  Reduction repeatedly applies those moves and
records them as a word.

Words are tuples of signed 1-based generator indices: ``+k`` is generator
``k-1`` and ``-k`` its inverse.  A reduction word lists the moves in the
order they were applied, so ``reduce`` returns ``(h, w)`` with
``h = evaluate_word(gens, w) @ g`` and ``evaluate_word`` multiplies letters
from right to left (the first letter acts first).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import _kernels as K
from .hyperbolic import DomainError, Frame, mobius_point

__all__ = [
    "Side",
    "FundamentalDomain",
    "FuchsianGroup",
    "GroupReport",
    "ReductionBudgetError",
    "DomainTables",
    "evaluate_word",
    "invert_word",
    "preset_genus2",
    "preset_punctured_torus",
    "preset",
    "reduce",
    "reduce_point",
    "verify_group",
    "group_to_json",
    "group_from_json",
    "bisector_domain",
    "DEFAULT_BUDGET",
    "GroupVerificationError",
    "PRESETS",
    "vertex_cycle_relator",
]

DEFAULT_BUDGET = 10**6


class ReductionBudgetError(RuntimeError):
    """Raised when reduction does not terminate within its step budget."""


Word = tuple


def _letter_matrix(gens, letter):
    m = gens[abs(letter) - 1]
    if letter > 0:
        return m
    (a, b), (c, d) = m
    return np.array([[d, -b], [-c, a]], dtype=m.dtype)


def evaluate_word(gens, word) -> np.ndarray:
    """Matrix of a word; the first letter acts first (rightmost factor)."""
    gens = [np.asarray(g) for g in gens]
    out = np.eye(2, dtype=np.result_type(*gens))
    for letter in word:
        if letter == 0 or abs(letter) > len(gens):
            raise ValueError(f"letter {letter} out of range for {len(gens)} generators")
        out = _letter_matrix(gens, letter) @ out
    return out


def invert_word(word):
    return tuple(-x for x in reversed(word))


# ---------------------------------------------------------------------------
# geodesics of the half-plane


@dataclass(frozen=True)
class Side:
    """A side of the polygon.

    ``ends`` are the endpoints of the full geodesic on the real line
    (``inf`` allowed); ``kind`` 0 is a half-circle with centre ``m`` and
    radius ``r``, kind 1 the vertical line ``x = m``.  ``sign`` orients the
    side so that the polygon is on its negative side.
    """

    ends: tuple
    kind: int
    m: float
    r: float
    sign: float

    @classmethod
    def through(cls, e1, e2, inside: complex) -> "Side":
        if np.isinf(e1) or np.isinf(e2):
            a = e2 if np.isinf(e1) else e1
            kind, m, r = 1, float(a), 0.0
        else:
            kind, m, r = 0, 0.5 * (e1 + e2), 0.5 * abs(e1 - e2)
        raw = K.side_value(kind, m, r, 1.0, inside.real, inside.imag)
        if raw == 0:
            raise DomainError("interior point lies on a side")
        return cls((float(e1), float(e2)), kind, float(m), float(r), -float(np.sign(raw)))

    def value(self, z: complex) -> float:
        """Signed sinh-distance, positive outside the polygon."""
        return K.side_value(self.kind, self.m, self.r, self.sign, z.real, z.imag)

    def tangent(self, v, w) -> complex:
        """Unit tangent at v of the arc from v towards w (w may be ideal)."""
        if self.kind == 1:
            t = 1j
        else:
            t = 1j * (v - self.m)
        if np.isinf(w):
            chord = 1j
        else:
            chord = w - v
        if (t * np.conj(chord)).real < 0:
            t = -t
        return t / abs(t)


def _intersect(s1: Side, s2: Side, tol=1e-9):
    """Intersection of two geodesics: an interior point or a shared ideal endpoint."""
    for e in s1.ends:
        for f in s2.ends:
            if (np.isinf(e) and np.isinf(f)) or (not np.isinf(e) and not np.isinf(f) and abs(e - f) < tol):
                return complex(e, 0.0) if not np.isinf(e) else complex(np.inf, 0.0)
    if s1.kind == 1 and s2.kind == 1:
        raise DomainError("parallel sides do not meet")
    if s1.kind == 1 or s2.kind == 1:
        line, circ = (s1, s2) if s1.kind == 1 else (s2, s1)
        x = line.m
        y2 = circ.r**2 - (x - circ.m) ** 2
    else:
        x = (s1.r**2 - s2.r**2 - s1.m**2 + s2.m**2) / (2 * (s2.m - s1.m))
        y2 = s1.r**2 - (x - s1.m) ** 2
    if y2 <= 0:
        raise DomainError("consecutive sides do not meet inside the half-plane")
    return complex(x, np.sqrt(y2))


def _to_disk(z, centre):
    if np.isinf(z.real):
        return 1.0 + 0j
    return (z - centre) / (z - np.conj(centre))


@dataclass(frozen=True, eq=False)
class FundamentalDomain:
    """Convex geodesic polygon with a marked interior point.

    ``vertices[k]`` is the corner between sides k and k+1; side k runs from
    ``vertices[k-1]`` to ``vertices[k]``.  Ideal vertices lie on the real
    line or at ``complex(inf, 0)``.
    """

    sides: tuple
    centre: complex
    vertices: tuple = field(init=False)

    def __post_init__(self):
        n = len(self.sides)
        verts = tuple(_intersect(self.sides[k], self.sides[(k + 1) % n]) for k in range(n))
        object.__setattr__(self, "vertices", verts)
        if max(s.value(self.centre) for s in self.sides) >= 0:
            raise DomainError("centre is not strictly inside the polygon")

    def arc(self, k):
        n = len(self.sides)
        return self.vertices[(k - 1) % n], self.vertices[k]

    def angles(self) -> np.ndarray:
        n = len(self.sides)
        out = np.zeros(n)
        for k in range(n):
            v = self.vertices[k]
            if np.isinf(v.real) or abs(v.imag) < 1e-14:
                continue  # ideal vertex
            w_prev = self.vertices[(k - 1) % n]
            w_next = self.vertices[(k + 1) % n]
            t1 = self.sides[k].tangent(v, w_prev.real if np.isinf(w_prev.real) else w_prev)
            t2 = self.sides[(k + 1) % n].tangent(v, w_next.real if np.isinf(w_next.real) else w_next)
            out[k] = np.arccos(np.clip((t1 * np.conj(t2)).real, -1, 1))
        return out

    def area(self) -> float:
        return float((len(self.sides) - 2) * np.pi - self.angles().sum())

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        return all(s.value(z) <= tol for s in self.sides)

    def circumradius(self) -> float:
        """Largest distance from the centre to a vertex (inf with ideal vertices)."""
        c = self.centre
        best = 0.0
        for v in self.vertices:
            if np.isinf(v.real) or v.imag <= 0:
                return np.inf
            best = max(best, 2 * np.arcsinh(abs(v - c) / (2 * np.sqrt(v.imag * c.imag))))
        return best

    def disk_centres(self) -> np.ndarray:
        """Centres of the side circles in the disk model centred at ``centre``."""
        out = []
        for s in self.sides:
            p1, p2 = (_to_disk(complex(e, 0.0), self.centre) for e in s.ends)
            q = p1 + p2
            out.append(2 * q / abs(q) ** 2)
        return np.array(out, dtype=complex)


@dataclass(frozen=True, eq=False)
class DomainTables:
    """Flat arrays consumed by the compiled loops."""

    kinds: np.ndarray
    ms: np.ndarray
    rs: np.ndarray
    sgns: np.ndarray
    partner: np.ndarray
    moves: np.ndarray
    words: np.ndarray
    centre: complex
    disk_m: np.ndarray
    t_cap: float
    cdf: np.ndarray
    rho_cap: float

    def args(self):
        return (self.kinds, self.ms, self.rs, self.sgns, self.partner, self.moves, self.words, self.centre)

    def chart_args(self):
        return (self.disk_m, self.t_cap, self.cdf)


CDF_NODES = 4096


def _angular_cdf(disk_m, t_cap):
    alpha = np.linspace(0, 2 * np.pi, CDF_NODES + 1)
    t = np.array([K.boundary_t(a, disk_m, t_cap) for a in alpha])
    dens = 2 * t**2 / (1 - t**2)  # cosh(rho_b) - 1
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))])
    return cum / cum[-1]


@dataclass(frozen=True, eq=False)
class FuchsianGroup:
    """Surface group with a fundamental polygon and its side moves.

    Parameters
    ----------
    generators : list of (2, 2) arrays
    pairing : sequence of int
        Involution on side indices.
    domain : FundamentalDomain
    side_moves : sequence of int
        Signed 1-based generator index applied to a point beyond side k.
    relator : sequence of int
        Defining word.
    relator_kind : {"identity", "parabolic"}
        Whether the relator is +-identity or a parabolic (cusped surfaces).
    euler_characteristic : int
    """

    generators: tuple
    pairing: tuple
    domain: FundamentalDomain
    side_moves: tuple
    relator: tuple
    relator_kind: str = "identity"
    euler_characteristic: int = -2
    name: str = "custom"
    rho_cap: float = 8.0
    tables: DomainTables = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple(np.array(g, dtype=float).reshape(2, 2) for g in self.generators)
        for g in gens:
            g.setflags(write=False)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "pairing", tuple(int(p) for p in self.pairing))
        object.__setattr__(self, "side_moves", tuple(int(p) for p in self.side_moves))
        object.__setattr__(self, "relator", tuple(int(p) for p in self.relator))
        n = len(self.domain.sides)
        if len(self.pairing) != n or len(self.side_moves) != n:
            raise ValueError("pairing and side_moves must have one entry per side")
        if sorted(self.pairing) != list(range(n)) or any(self.pairing[self.pairing[k]] != k for k in range(n)):
            raise ValueError("pairing must be an involution on side indices")
        for w in self.side_moves + self.relator:
            if w == 0 or abs(w) > len(gens):
                raise ValueError(f"generator index {w} out of range")
        object.__setattr__(self, "tables", self._build_tables())

    def _build_tables(self) -> DomainTables:
        d = self.domain
        moves = np.array([_letter_matrix(self.generators, w) for w in self.side_moves])
        disk_m = d.disk_centres()
        if np.isfinite(d.circumradius()):
            t_cap = 1.0 - 1e-12
        else:
            t_cap = float(np.tanh(self.rho_cap / 2))
        return DomainTables(
            kinds=np.array([s.kind for s in d.sides], dtype=np.int64),
            ms=np.array([s.m for s in d.sides]),
            rs=np.array([s.r for s in d.sides]),
            sgns=np.array([s.sign for s in d.sides]),
            partner=np.array(self.pairing, dtype=np.int64),
            moves=moves,
            words=np.array(self.side_moves, dtype=np.int64),
            centre=complex(d.centre),
            disk_m=disk_m,
            t_cap=t_cap,
            cdf=_angular_cdf(disk_m, t_cap),
            rho_cap=float(self.rho_cap),
        )

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def evaluate(self, word) -> np.ndarray:
        return evaluate_word(self.generators, word)

    def min_translation_length(self) -> float:
        tr = [abs(np.trace(g)) for g in self.generators]
        return float(min(2 * np.arccosh(t / 2) for t in tr if t > 2))


# ---------------------------------------------------------------------------
# construction


def bisector_domain(generators, centre: complex = 1j):
    """Polygon cut out by the perpendicular bisectors of centre and its neighbours.

    Each generator and its inverse gives a side.  Sides are ordered by the
    direction (counter-clockwise from straight up) in which the neighbour
    lies.  Returns ``(domain, pairing, side_moves)``.
    """
    centre = complex(centre)
    letters = []
    for j in range(len(generators)):
        letters += [j + 1, -(j + 1)]
    entries = []
    for letter in letters:
        m = _letter_matrix([np.asarray(g, float) for g in generators], letter)
        q = mobius_point(m, centre)
        p = centre
        # disk-model angle of q seen from the centre; 0 is straight up in the half-plane
        w = (q - p) / (q - np.conj(p))
        ang = np.mod(np.angle(w), 2 * np.pi)
        if abs(q.imag - p.imag) < 1e-14 * p.imag:
            x = 0.5 * (p.real + q.real)
            side = Side.through(x, np.inf, centre)
        else:
            mc = ((q.imag * p - p.imag * q) / (q.imag - p.imag)).real
            c0 = (q.imag * abs(p) ** 2 - p.imag * abs(q) ** 2) / (q.imag - p.imag)
            r = np.sqrt(mc**2 - c0)
            side = Side.through(mc - r, mc + r, centre)
        # a point beyond this side is pulled back by the inverse letter
        entries.append((round(ang, 12), side, -letter, letter))
    entries.sort(key=lambda e: e[0])
    sides = tuple(e[1] for e in entries)
    moves = [e[2] for e in entries]
    pairing = [next(i for i, e in enumerate(entries) if e[3] == -entries[k][3]) for k in range(len(entries))]
    return FundamentalDomain(sides, centre), pairing, moves


def _genus2_generators(dps: int = 50):
    with mpmath.workdps(dps):
        d = mpmath.acosh(1 + mpmath.sqrt(2))
        a = mpmath.matrix([[mpmath.e**d, 0], [0, mpmath.e ** (-d)]])
        out = []
        for k in range(4):
            phi = k * mpmath.pi / 8
            c, s = mpmath.cos(phi), mpmath.sin(phi)
            r = mpmath.matrix([[c, s], [-s, c]])
            rinv = mpmath.matrix([[c, -s], [s, c]])
            t = r * a * rinv
            out.append(np.array([[float(t[i, j]) for j in range(2)] for i in range(2)]))
    return out


def preset_genus2() -> FuchsianGroup:
    """Genus-2 group of the regular octagon with angles pi/4.

    Generator k translates the centre ``i`` a distance ``2 arccosh(1+sqrt 2)``
    in the direction turned ``k pi/4`` counter-clockwise from straight up;
    side k faces that direction and is glued to the opposite side k+4.
    """
    gens = _genus2_generators()
    domain, pairing, moves = bisector_domain(gens, 1j)
    # a B c D A b C d: generator k with alternating signs, then the inverses
    relator = (1, -2, 3, -4, -1, 2, -3, 4)
    return FuchsianGroup(gens, pairing, domain, moves, relator, "identity", -2, "genus2")


def preset_punctured_torus() -> FuchsianGroup:
    """Once-punctured torus with the ideal quadrilateral -1, 0, 1, inf.

    A maps the side (inf, -1) to (0, 1) and B maps (1, inf) to (-1, 0);
    the commutator is parabolic with trace -2.
    """
    a = np.array([[1.0, 1.0], [1.0, 2.0]])
    b = np.array([[1.0, -1.0], [-1.0, 2.0]])
    c = 1j
    sides = (
        Side.through(-1.0, 0.0, c),
        Side.through(0.0, 1.0, c),
        Side.through(1.0, np.inf, c),
        Side.through(np.inf, -1.0, c),
    )
    domain = FundamentalDomain(sides, c)
    pairing = (2, 3, 0, 1)
    moves = (-2, -1, 2, 1)
    relator = (2, 1, -2, -1)  # A B A^-1 B^-1 as a product, first letter acts first
    return FuchsianGroup((a, b), pairing, domain, moves, relator, "parabolic", -1, "punctured_torus")


PRESETS = {"genus2": preset_genus2, "punctured_torus": preset_punctured_torus}
_cache: dict = {}


def preset(name: str) -> FuchsianGroup:
    if name not in PRESETS:
        raise KeyError(f"unknown group preset {name!r}; choose from {sorted(PRESETS)}")
    if name not in _cache:
        _cache[name] = PRESETS[name]()
    return _cache[name]


# ---------------------------------------------------------------------------
# reduction

_ID_REP = np.tile(np.eye(2, dtype=complex), (1, 1, 1))


def _identity_rep(n):
    return np.tile(np.eye(2, dtype=complex), (n, 1, 1)), np.ones(n, dtype=np.bool_)


def reduce(group: FuchsianGroup, g: Frame, budget: int = DEFAULT_BUDGET):
    """Move ``g`` into the fundamental polygon.

    Returns
    -------
    (Frame, tuple)
        The reduced frame and the word of applied moves, so that
        ``reduced = group.evaluate(word) @ g`` up to sign.
    """
    tab = group.tables
    n = len(tab.kinds)
    rep, iso = _identity_rep(n)
    buf_len = 64
    while True:
        m = np.array(g.m, dtype=float)
        v = np.array([1.0 + 0j, 0j])
        buf = np.zeros(buf_len, dtype=np.int64)
        status, count, _ = K.reduce_frame(m, v, *tab.args(), rep, iso, budget, buf)
        if status != K.OK:
            raise ReductionBudgetError(f"reduction exceeded {budget} steps")
        if count <= buf_len:
            break
        buf_len = count
    return Frame(m), tuple(int(x) for x in buf[:count])


def reduce_point(group: FuchsianGroup, z: complex, budget: int = DEFAULT_BUDGET) -> complex:
    tab = group.tables
    rep, iso = _identity_rep(len(tab.kinds))
    v = np.array([1.0 + 0j, 0j])
    status, x, y, _, _ = K.reduce_point(z.real, z.imag, v, *tab.args()[:6], tab.centre, rep, iso, budget)
    if status != K.OK:
        raise ReductionBudgetError(f"reduction exceeded {budget} steps")
    return complex(x, y)


# ---------------------------------------------------------------------------
# verification


@dataclass
class GroupReport:
    relator_residual: float
    pairing_residual: float
    area_defect: float
    min_abs_trace: float
    tol: float
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self):
        return {
            "relator_residual": self.relator_residual,
            "pairing_residual": self.pairing_residual,
            "area_defect": self.area_defect,
            "min_abs_trace": self.min_abs_trace,
            "tol": self.tol,
            "passed": self.passed,
            "failures": list(self.failures),
        }


def _disk_dist(z1, z2):
    return abs(_to_disk(z1, 1j) - _to_disk(z2, 1j))


def _mobius_ext(m, z):
    if np.isinf(z.real):
        (a, _), (c, _) = m
        return complex(np.inf, 0) if c == 0 else complex(a / c, 0)
    (a, b), (c, d) = m
    den = c * z + d
    if den == 0:
        return complex(np.inf, 0)
    return (a * z + b) / den


def verify_group(group: FuchsianGroup, tol: float = 1e-8) -> GroupReport:
    """Check relator, side pairing, hyperbolicity and Gauss-Bonnet area."""
    failures = []
    gens = group.generators
    traces = [abs(float(np.trace(g))) for g in gens]
    min_tr = min(traces) if traces else 0.0
    if min_tr <= 2 + tol:
        failures.append("non-hyperbolic generator")
    dets = [abs(np.linalg.det(g) - 1) for g in gens]
    if max(dets, default=0) > tol:
        failures.append("generator determinant")

    rel = group.evaluate(group.relator)
    if group.relator_kind == "parabolic":
        rel_res = abs(abs(np.trace(rel)) - 2)
    else:
        eye = np.eye(2)
        rel_res = min(np.abs(rel - eye).max(), np.abs(rel + eye).max())
    if rel_res > tol:
        failures.append("relator")

    dom = group.domain
    pair_res = 0.0
    for k, w in enumerate(group.side_moves):
        m = _letter_matrix(gens, w)
        src = [_mobius_ext(m, v) for v in dom.arc(k)]
        dst = list(dom.arc(group.pairing[k]))
        # arcs come back with reversed orientation
        r1 = max(_disk_dist(src[0], dst[1]), _disk_dist(src[1], dst[0]))
        r2 = max(_disk_dist(src[0], dst[0]), _disk_dist(src[1], dst[1]))
        pair_res = max(pair_res, min(r1, r2))
    if pair_res > tol:
        failures.append("side pairing")

    area_def = abs(dom.area() - 2 * np.pi * abs(group.euler_characteristic))
    if area_def > max(tol, 1e-6):
        failures.append("area")
    return GroupReport(float(rel_res), float(pair_res), float(area_def), float(min_tr), tol, failures)


# ---------------------------------------------------------------------------
# JSON


def _num(x):
    return None if np.isinf(x) else float(x)


def group_to_json(group: FuchsianGroup) -> str:
    d = group.domain
    doc = {
        "name": group.name,
        "generators": [g.tolist() for g in group.generators],
        "pairing": list(group.pairing),
        "side_moves": list(group.side_moves),
        "relator": list(group.relator),
        "relator_kind": group.relator_kind,
        "euler_characteristic": group.euler_characteristic,
        "centre": [d.centre.real, d.centre.imag],
        "sides": [[_num(e) for e in s.ends] for s in d.sides],
    }
    return json.dumps(doc, sort_keys=True)


class GroupVerificationError(ValueError):
    def __init__(self, report: GroupReport):
        super().__init__(f"group verification failed: {', '.join(report.failures)}")
        self.report = report


def vertex_cycle_relator(gens, domain: FundamentalDomain, pairing, moves) -> list:
    """Relator read off the vertex cycle of corner 0 of a compact polygon.

    Walking around the corner, each side move sends the current corner to a
    corner of the partner side; the other side at that corner is crossed
    next.  The letters collected until the walk closes multiply to +-I.  For
    polygons with ideal corners (or if the walk fails) the product of
    commutators ``[g1, g2][g3, g4]...`` is returned instead.
    """
    n = len(domain.sides)
    fallback = []
    for j in range(0, len(gens) - 1, 2):
        fallback += [j + 1, j + 2, -(j + 1), -(j + 2)]
    verts = domain.vertices
    if any(np.isinf(v.real) or v.imag <= 1e-12 for v in verts):
        return fallback
    disk = np.array([_to_disk(v, domain.centre) for v in verts])
    word = []
    corner, side = 0, 1  # corner k joins sides k and k+1
    for _ in range(4 * n):
        m = _letter_matrix(gens, moves[side])
        (a, b), (c, d) = m
        v = verts[corner]
        img = _to_disk((a * v + b) / (c * v + d), domain.centre)
        k = int(np.argmin(np.abs(disk - img)))
        if abs(disk[k] - img) > 1e-6:
            return fallback
        word.append(int(moves[side]))
        p = pairing[side]
        # the other side meeting at corner k
        side = (k + 1) % n if p == k else k
        corner = k
        if corner == 0 and side == 1:
            break
    else:
        return fallback
    for cand in (word, word[::-1]):
        r = evaluate_word(gens, cand)
        if min(np.abs(r - np.eye(2)).max(), np.abs(r + np.eye(2)).max()) < 1e-6:
            return cand
    return fallback


def group_from_json(text: str, tol: float = 1e-8) -> FuchsianGroup:
    """Rebuild a group and re-run :func:`verify_group`.

    Only ``generators`` and ``pairing`` are required; without a polygon the
    bisector polygon of the generators around ``i`` is used.
    """
    doc = json.loads(text) if isinstance(text, str) else text
    gens = [np.array(g, dtype=float) for g in doc["generators"]]
    centre = complex(*doc.get("centre", [0.0, 1.0]))
    if "sides" in doc:
        sides = tuple(
            Side.through(np.inf if a is None else a, np.inf if b is None else b, centre) for a, b in doc["sides"]
        )
        domain = FundamentalDomain(sides, centre)
        moves = doc["side_moves"]
    else:
        domain, _, moves = bisector_domain(gens, centre)
    relator = doc.get("relator")
    if relator is None:
        relator = vertex_cycle_relator(gens, domain, doc["pairing"], moves)
    group = FuchsianGroup(
        gens,
        doc["pairing"],
        domain,
        moves,
        relator,
        doc.get("relator_kind", "identity"),
        int(doc.get("euler_characteristic", 2 - len(gens))),
        doc.get("name", "custom"),
    )
    report = verify_group(group, tol)
    if not report.passed:
        raise GroupVerificationError(report)
    return group

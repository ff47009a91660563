import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foliated_dynamics.hyperbolic import (
    DomainError,
    Frame,
    MoebiusC,
    SpherePoint,
    base_point,
    direction,
    endpoints,
    frame_from,
    geodesic_advance,
    horocycle_advance,
    hyperbolic_distance,
    mobius_apply,
    spherical_derivative,
)

from conftest import random_frame_matrix


def random_moebius(rng):
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return MoebiusC(m / np.sqrt(np.linalg.det(m)))


def random_sphere(rng):
    return SpherePoint(rng.normal(size=2) + 1j * rng.normal(size=2))


def same_sphere(a, b, tol=1e-12):
    # |v1 w2 - v2 w1| is the sine of the angle between the lines, accurate near 0
    return abs(a.v[0] * b.v[1] - a.v[1] * b.v[0]) < tol


def chord(a, b):
    return 2 * abs(a.v[0] * b.v[1] - a.v[1] * b.v[0])


# -- frames ----------------------------------------------------------------


def test_frame_from_identity():
    assert frame_from(1j, np.pi / 2).close_to(Frame.identity(), 1e-15)


def test_frame_roundtrip_identity():
    g = frame_from(1j, np.pi / 2)
    assert frame_from(base_point(g), direction(g)).close_to(Frame.identity(), 1e-15)


def test_frame_from_2i_is_diagonal():
    assert frame_from(2j, np.pi / 2).close_to(Frame(np.diag([np.sqrt(2), 1 / np.sqrt(2)])), 1e-14)


@given(st.floats(-5, 5), st.floats(0.05, 20), st.floats(-10, 10))
def test_frame_from_post(x, y, angle):
    g = frame_from(complex(x, y), angle)
    assert abs(base_point(g) - complex(x, y)) < 1e-10 * max(1, y)
    assert abs(np.angle(np.exp(1j * (direction(g) - angle)))) < 1e-10
    assert abs(g.det - 1) < 1e-12


def test_frame_from_rejects_lower_half_plane():
    with pytest.raises(DomainError):
        frame_from(1 - 1j, 0.0)
    with pytest.raises(DomainError):
        frame_from(2.0, 0.0)


# -- geodesic flow -----------------------------------------------------------


def test_geodesic_zero_time():
    assert geodesic_advance(Frame.identity(), 0.0).close_to(Frame.identity(), 0)


def test_geodesic_unit_time_from_identity():
    g = geodesic_advance(Frame.identity(), 1.0)
    assert abs(base_point(g) - np.e * 1j) < 1e-14


def test_geodesic_group_law(rng):
    for _ in range(200):
        g = random_frame_matrix(rng)
        s, t = rng.uniform(-10, 10, 2)
        a = geodesic_advance(geodesic_advance(g, s), t)
        b = geodesic_advance(g, s + t)
        assert np.abs(a.m - b.m).max() <= 1e-9 * np.abs(b.m).max()


def test_geodesic_moves_unit_speed(rng):
    for _ in range(50):
        g = random_frame_matrix(rng)
        t = rng.uniform(-8, 8)
        d = hyperbolic_distance(base_point(g), base_point(geodesic_advance(g, t)))
        assert abs(d - abs(t)) < 1e-9


# -- horocycles --------------------------------------------------------------


def test_horocycle_zero_is_identity(rng):
    g = random_frame_matrix(rng)
    assert horocycle_advance(g, 0.0, "stable").close_to(g, 0)


def test_stable_horocycle_contracts():
    g = Frame.identity()
    h = horocycle_advance(g, 1.0, "stable")
    d = hyperbolic_distance(base_point(geodesic_advance(g, 10)), base_point(geodesic_advance(h, 10)))
    assert d < 10 * np.exp(-10)


def test_unstable_horocycle_contracts_backward():
    g = Frame.identity()
    h = horocycle_advance(g, 1.0, "unstable")
    d = hyperbolic_distance(base_point(geodesic_advance(g, -10)), base_point(geodesic_advance(h, -10)))
    assert d < 10 * np.exp(-10)


def test_stable_contraction_rate(rng):
    slopes = []
    Ts = np.linspace(2, 10, 17)
    for _ in range(20):
        g = random_frame_matrix(rng)
        s = rng.uniform(-1, 1)
        h = horocycle_advance(g, s, "stable")
        d = [hyperbolic_distance(base_point(geodesic_advance(g, T)), base_point(geodesic_advance(h, T))) for T in Ts]
        slopes.append(np.polyfit(Ts, np.log(d), 1)[0])
    assert np.all(np.abs(np.array(slopes) + 1) < 0.01)


def test_horocycle_branch_validated():
    with pytest.raises(ValueError):
        horocycle_advance(Frame.identity(), 1.0, "sideways")


# -- endpoints ---------------------------------------------------------------


def test_identity_endpoints():
    back, fwd = endpoints(Frame.identity())
    assert back.value == 0
    assert np.isinf(fwd.value)


def test_endpoints_flow_invariant(rng):
    for _ in range(50):
        g = random_frame_matrix(rng)
        t = rng.uniform(-5, 5)
        b0, f0 = endpoints(g)
        b1, f1 = endpoints(geodesic_advance(g, t))
        assert b0.close_to(b1) and f0.close_to(f1)


def test_stable_move_keeps_forward_endpoint(rng):
    for _ in range(50):
        g = random_frame_matrix(rng)
        s = rng.uniform(-2, 2)
        assert endpoints(horocycle_advance(g, s, "stable"))[1].close_to(endpoints(g)[1])
        assert endpoints(horocycle_advance(g, s, "unstable"))[0].close_to(endpoints(g)[0])


def test_forward_endpoint_is_limit(rng):
    g = random_frame_matrix(rng)
    z = base_point(geodesic_advance(g, 30))
    f = endpoints(g)[1].value
    assert abs(z.real - f) < 1e-6 and z.imag < 1e-6


# -- Moebius action on the sphere --------------------------------------------


def test_mobius_identity(rng):
    w = random_sphere(rng)
    assert same_sphere(mobius_apply(MoebiusC.identity(), w), w)


def test_mobius_action_law(rng):
    for _ in range(200):
        m1, m2, w = random_moebius(rng), random_moebius(rng), random_sphere(rng)
        assert same_sphere(mobius_apply(m1 @ m2, w), mobius_apply(m1, mobius_apply(m2, w)), 1e-10)


def test_mobius_diagonal_scales_affine_point():
    m = MoebiusC(np.diag([np.exp(0.5), np.exp(-0.5)]))
    z = 0.3 - 0.7j
    assert abs(mobius_apply(m, SpherePoint.from_affine(z)).affine() - np.e * z) < 1e-14


def test_mobius_handles_infinity():
    m = MoebiusC(np.array([[0, 1], [-1, 0]]))
    assert mobius_apply(m, SpherePoint.from_affine(np.inf)).affine() == 0


# -- spherical derivative ----------------------------------------------------


def test_spherical_derivative_identity(rng):
    for _ in range(20):
        assert abs(spherical_derivative(MoebiusC.identity(), random_sphere(rng)) - 1) < 1e-15


def test_spherical_derivative_unitary(rng):
    for _ in range(100):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        a, b = complex(q[0], q[1]), complex(q[2], q[3])
        u = MoebiusC(np.array([[a, -np.conj(b)], [b, np.conj(a)]]))
        assert abs(spherical_derivative(u, random_sphere(rng)) - 1) < 1e-12


def test_spherical_derivative_diagonal_at_zero():
    m = MoebiusC(np.diag([np.exp(0.5), np.exp(-0.5)]))
    assert abs(spherical_derivative(m, SpherePoint.from_affine(0)) - np.e) < 1e-14


def test_spherical_derivative_matches_finite_difference():
    # round-metric displacement of a small step at 0, pushed forward
    m = MoebiusC(np.diag([np.exp(0.5), np.exp(-0.5)]))
    h = 1e-6
    p0 = SpherePoint.from_affine(0)
    p1 = SpherePoint.from_affine(h)
    ratio = chord(mobius_apply(m, p0), mobius_apply(m, p1)) / chord(p0, p1)
    assert abs(ratio - np.e) < 1e-6


def test_spherical_derivative_affine_formula(rng):
    for _ in range(50):
        m = random_moebius(rng)
        z = complex(*rng.normal(size=2))
        (a, b), (c, d) = m.m
        want = (1 + abs(z) ** 2) / (abs(c * z + d) ** 2 + abs(a * z + b) ** 2)
        assert abs(spherical_derivative(m, SpherePoint.from_affine(z)) - want) < 1e-12 * want


def test_spherical_chain_rule(rng):
    errs = []
    for _ in range(10_000):
        m1, m2, w = random_moebius(rng), random_moebius(rng), random_sphere(rng)
        lhs = spherical_derivative(m1 @ m2, w)
        rhs = spherical_derivative(m1, mobius_apply(m2, w)) * spherical_derivative(m2, w)
        errs.append(abs(lhs - rhs) / rhs)
    assert max(errs) < 1e-10


# -- distance ----------------------------------------------------------------


def test_distance_zero():
    assert hyperbolic_distance(1j, 1j) == 0


def test_distance_vertical_unit():
    assert abs(hyperbolic_distance(1j, np.e * 1j) - 1) < 1e-15


def test_distance_isometry_invariance(rng):
    for _ in range(10):
        m = rng.normal(size=(2, 2))
        if np.linalg.det(m) < 0:
            m[0] *= -1
        m /= np.sqrt(np.linalg.det(m))
        z1 = complex(rng.normal(), np.exp(rng.normal()))
        z2 = complex(rng.normal(), np.exp(rng.normal()))
        (a, b), (c, d) = m
        w1, w2 = (a * z1 + b) / (c * z1 + d), (a * z2 + b) / (c * z2 + d)
        assert abs(hyperbolic_distance(z1, z2) - hyperbolic_distance(w1, w2)) < 1e-10


def test_distance_triangle_inequality(rng):
    for _ in range(100):
        z = [complex(rng.normal(), np.exp(rng.normal())) for _ in range(3)]
        assert hyperbolic_distance(z[0], z[2]) <= hyperbolic_distance(z[0], z[1]) + hyperbolic_distance(z[1], z[2]) + 1e-12


def test_distance_domain_error():
    with pytest.raises(DomainError):
        hyperbolic_distance(1j, -1j)


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(0.1, 5), st.floats(0, 6.28))
def test_sphere_point_unit_norm(x, y, t):
    p = SpherePoint(np.array([complex(x, y), np.exp(1j * t)]))
    assert abs(np.linalg.norm(p.v) - 1) < 1e-12

import numpy as np
import pytest
from scipy import stats

from foliated_dynamics.cocycle import PreconditionError, Representation
from foliated_dynamics.harmonic import (
    BoundaryMeasure,
    BrownianState,
    DiskField,
    ZeroNoise,
    brownian_advance,
    brownian_lyapunov,
    candel_identity_residual,
    poisson_kernel,
    poisson_kernel_gradient,
)
from foliated_dynamics.hyperbolic import DomainError, hyperbolic_distance


# -- Brownian paths ----------------------------------------------------------


def test_half_steps_match_full_step():
    rng = np.random.default_rng(1)
    dt, n = 1e-2, 10_000
    z = rng.standard_normal((n, 2, 2))
    s0 = BrownianState(0.3 + 1.2j)
    half = [brownian_advance(s0, dt / 2, None, 2, increments=z[i]).position.real - 0.3 for i in range(n)]
    full = [brownian_advance(s0, dt, None, 1, increments=z[i].sum(axis=0) / np.sqrt(2)).position.real - 0.3
            for i in range(n)]
    assert stats.ks_2samp(half, full).statistic < 0.02


def test_zero_noise_keeps_position():
    s = BrownianState(0.2 + 0.7j)
    e = brownian_advance(s, 1e-3, ZeroNoise(), 500)
    assert e.position == s.position
    assert e.time == pytest.approx(0.5)


def test_brownian_dt_range():
    with pytest.raises(PreconditionError):
        brownian_advance(BrownianState(1j), 0.1, np.random.default_rng(0))


def test_position_stays_in_half_plane():
    with pytest.raises(DomainError):
        BrownianState(0.5 - 0.1j)
    e = brownian_advance(BrownianState(1j), 1e-2, np.random.default_rng(0), 20_000)
    assert e.position.imag > 0


def test_escape_rate():
    rng = np.random.default_rng(2)
    t, dt = 500.0, 1e-2
    rates = []
    for _ in range(100):
        e = brownian_advance(BrownianState(1j), dt, rng, int(t / dt))
        rates.append(hyperbolic_distance(1j, e.position) / t)
    assert abs(np.mean(rates) - 1.0) < 0.1


def test_brownian_exponent_unitary_and_trivial(genus2):
    for rep in (Representation.unitary(genus2, seed=4), Representation.trivial(genus2)):
        est = brownian_lyapunov(genus2, rep, seed=1, T=100, dt=1e-2, N=4)
        assert est.mean == 0.0 and all(v == 0.0 for v in est.values)


def test_brownian_exponent_fuchsian_short(genus2, inclusion):
    est = brownian_lyapunov(genus2, inclusion, seed=1, T=200, dt=1e-2, N=16)
    assert abs(est.mean + 1) < 0.3


def test_brownian_exponent_precondition(genus2, inclusion):
    with pytest.raises(PreconditionError) as e:
        brownian_lyapunov(genus2, inclusion, seed=1, T=10, dt=1e-2, N=2)
    assert e.value.field == "T"


# -- Poisson kernel ----------------------------------------------------------


def test_kernel_at_centre():
    assert np.allclose(poisson_kernel(0.0, np.linspace(0, 6, 13)), 1.0)


def test_kernel_normalisation():
    xi = 2 * np.pi * np.arange(4096) / 4096
    for x in (0.0, 0.3 + 0.4j, -0.8j, 0.9):
        assert abs(np.mean(poisson_kernel(x, xi)) - 1) < 1e-6


def test_kernel_on_axis():
    for r in (0.0, 0.25, 0.5, 0.9):
        assert poisson_kernel(r, 0.0) == pytest.approx((1 + r) / (1 - r), rel=1e-14)


def test_kernel_domain():
    with pytest.raises(DomainError):
        poisson_kernel(1.0, 0.0)


def test_kernel_is_harmonic():
    x, h = 0.2 + 0.1j, 1e-3
    lap = (poisson_kernel(x + h, 1.0) + poisson_kernel(x - h, 1.0) + poisson_kernel(x + 1j * h, 1.0)
           + poisson_kernel(x - 1j * h, 1.0) - 4 * poisson_kernel(x, 1.0)) / h**2
    assert abs(lap) < 1e-4


def test_kernel_gradient_matches_differences():
    x, h = -0.3 + 0.5j, 1e-6
    g = poisson_kernel_gradient(x, 0.7)
    gx = (poisson_kernel(x + h, 0.7) - poisson_kernel(x - h, 0.7)) / (2 * h)
    gy = (poisson_kernel(x + 1j * h, 0.7) - poisson_kernel(x - 1j * h, 0.7)) / (2 * h)
    assert abs(g - complex(gx, gy)) < 1e-6


# -- plaque identity ---------------------------------------------------------


def test_candel_constant_u():
    r = candel_identity_residual(BoundaryMeasure.point(0.4), lambda x: np.zeros(np.shape(x)), grid=128)
    assert r.lhs == 0.0 and r.rhs == 0.0 and r.residual == 0.0


def test_candel_uniform_h():
    r = candel_identity_residual(BoundaryMeasure.uniform(1024), lambda x: x.real, grid=256)
    assert r.residual < 1e-3 and r.boundary_nodes == 1024 and r.grid == 256


def test_candel_point_mass():
    r = candel_identity_residual(BoundaryMeasure.point(0.4), lambda x: x.real, grid=256)
    assert r.residual < 1e-3


def test_candel_refines():
    res = [candel_identity_residual(BoundaryMeasure.point(0.4), lambda x: x.real, grid=n).residual
           for n in (128, 256, 512)]
    assert res[0] > res[1] > res[2]


def test_candel_uniform_at_roundoff():
    # the left side is a sum of exact gradients of a harmonic function, so
    # the uniform case is already at roundoff on the coarsest grid
    for n in (128, 256):
        r = candel_identity_residual(BoundaryMeasure.uniform(256), lambda x: x.real, grid=n)
        assert r.residual < 1e-12


def test_candel_rejects_non_positive_h():
    bad = BoundaryMeasure(np.array([0.0]), np.array([1.0]), lambda x: -np.ones(np.shape(x)))
    with pytest.raises(ValueError):
        candel_identity_residual(bad, lambda x: x.real, grid=64)


def test_disk_field_minimum_grid():
    with pytest.raises(PreconditionError):
        DiskField.from_function(lambda x: x.real, 32)

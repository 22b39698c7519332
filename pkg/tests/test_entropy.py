import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lyapgap import entropy
from lyapgap.entropy import CircleMeasure, JacobianFamily, MapFamily
from lyapgap.errors import InputError, SingularityError
from lyapgap.matcore import projective_action, projective_jacobian, rotation

from helpers import composition_case, random_family, random_smooth_measure

B = 512


def test_measure_validation():
    with pytest.raises(InputError):
        CircleMeasure([0.5, 0.6])
    with pytest.raises(InputError):
        CircleMeasure([1.5, -0.5])


def test_kl_examples():
    nu = CircleMeasure.from_masses(np.arange(1, 9))
    assert entropy.kl_divergence(nu, nu) == 0.0
    assert entropy.kl_divergence(CircleMeasure.point_mass(0, B), CircleMeasure.uniform(B)) == pytest.approx(math.log(512))
    v = entropy.kl_divergence(CircleMeasure([0.75, 0.25]), CircleMeasure([0.5, 0.5]))
    assert v == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5))
    assert v == pytest.approx(0.13081, abs=1e-5)


def test_kl_infinite():
    assert entropy.kl_divergence(CircleMeasure.uniform(4), CircleMeasure.point_mass(1, 4)) == math.inf


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 64))
def test_kl_nonnegative(seed, n):
    r = np.random.default_rng(seed)
    a = CircleMeasure(r.dirichlet(np.ones(n)))
    b = CircleMeasure(r.dirichlet(np.ones(n)))
    kl = entropy.kl_divergence(a, b)
    assert kl >= 0
    assert kl > 0 or np.array_equal(a.bins, b.bins)


def test_pushforward_identity(rng):
    nu = CircleMeasure(rng.dirichlet(np.ones(B)))
    assert np.allclose(entropy.pushforward(np.eye(2), nu).bins, nu.bins, atol=1e-14)


def test_pushforward_rotation_shifts(rng):
    nu = CircleMeasure(rng.dirichlet(np.ones(64)))
    out = entropy.pushforward(rotation(math.pi / 64), nu)
    assert np.allclose(out.bins, np.roll(nu.bins, 1), atol=1e-12)


def test_pushforward_diag_density():
    out = entropy.pushforward(np.diag([2.0, 1.0]), CircleMeasure.uniform(B)).density()
    # image of [1:0] is theta = 0, image of [0:1] is theta = pi/2
    assert out[0] == pytest.approx(2.0, rel=0.01)
    assert out[B // 2] == pytest.approx(0.5, rel=0.01)


def test_pushforward_density_matches_jacobian(rng):
    A = rng.standard_normal((2, 2))
    out = entropy.pushforward(A, CircleMeasure.uniform(4096)).density()
    centers = (np.arange(4096) + 0.5) * math.pi / 4096
    pre = projective_action(np.linalg.inv(A), centers)
    expected = 1.0 / projective_jacobian(A, pre)
    assert np.allclose(out, expected, rtol=0.02)


def test_pushforward_mass(rng):
    for _ in range(20):
        out = entropy.pushforward(rng.standard_normal((2, 2)), CircleMeasure(rng.dirichlet(np.ones(B))))
        assert abs(out.bins.sum() - 1) < 1e-10


def test_pushforward_composes(rng):
    A, C = rng.standard_normal((2, 2, 2))
    nu = random_smooth_measure(rng, 2048)
    two = entropy.pushforward(C, entropy.pushforward(A, nu))
    one = entropy.pushforward(C @ A, nu)
    assert np.abs(two.bins - one.bins).sum() < 1e-2


def test_pushforward_singular():
    with pytest.raises(SingularityError):
        entropy.pushforward(np.array([[1.0, 2.0], [2.0, 4.0]]), CircleMeasure.uniform(8))


def test_convolve_examples(rng):
    nu = CircleMeasure(rng.dirichlet(np.ones(B)))
    A = rng.standard_normal((2, 2))
    assert np.allclose(entropy.convolve(MapFamily.single(A), nu).bins, entropy.pushforward(A, nu).bins)
    fam = MapFamily([0.5, 0.5], [rotation(0.4), rotation(-0.4)])
    assert np.allclose(entropy.convolve(fam, CircleMeasure.uniform(B)).bins, 1 / B)
    mu = random_family(rng, 100)
    assert abs(entropy.convolve(mu, nu).bins.sum() - 1) < 1e-10


def test_map_family_validation():
    with pytest.raises(InputError):
        MapFamily([0.5, 0.4], [np.eye(2), np.eye(2)])
    with pytest.raises(SingularityError):
        MapFamily([1.0], [np.zeros((2, 2))])


def test_serialization_round_trip(rng):
    mu = random_family(rng, 10)
    back = MapFamily.from_dict(mu.to_dict())
    assert np.array_equal(back.maps, mu.maps) and np.array_equal(back.weights, mu.weights)
    nu = CircleMeasure(rng.dirichlet(np.ones(16)))
    assert np.array_equal(CircleMeasure.from_dict(nu.to_dict()).bins, nu.bins)
    with pytest.raises(InputError):
        CircleMeasure.from_dict({"bins": [1.0], "extra": 1})


def test_mean_relative_entropy_examples(rng):
    nu = random_smooth_measure(rng, B)
    assert entropy.mean_relative_entropy(MapFamily.single(np.eye(2)), nu, nu) == pytest.approx(0, abs=1e-14)
    fam = MapFamily([0.5, 0.5], [rotation(0.4), rotation(-0.4)])
    u = CircleMeasure.uniform(B)
    assert entropy.mean_relative_entropy(fam, u, u) == pytest.approx(0, abs=1e-12)


def test_minimizer_property(rng):
    for _ in range(10):
        mu = random_family(rng, 100)
        nu = random_smooth_measure(rng, B)
        best = entropy.mean_relative_entropy(mu, nu, entropy.convolve(mu, nu))
        assert best == pytest.approx(entropy.furstenberg_entropy(mu, nu))
        for _ in range(20):
            cand = CircleMeasure(rng.dirichlet(np.ones(B)))
            assert best <= entropy.mean_relative_entropy(mu, nu, cand)


def test_furstenberg_examples(rng):
    nu = random_smooth_measure(rng, B)
    assert entropy.furstenberg_entropy(MapFamily.single(rng.standard_normal((2, 2))), nu) == 0.0
    fam = MapFamily.uniform([rotation(t) for t in (0.1, 0.9, 2.0)])
    assert entropy.furstenberg_entropy(fam, CircleMeasure.uniform(B)) == pytest.approx(0, abs=1e-12)
    assert entropy.furstenberg_entropy(random_family(rng, 100), nu) >= 0


def test_composition_identity(rng):
    res = [composition_case(rng, 256) for _ in range(20)]
    for r1, _, err in res:
        assert abs(r1) <= 2 * err + 1e-9
    assert np.mean([abs(r[1]) for r in res]) <= 0.5 * np.mean([abs(r[0]) for r in res])


def test_superadditivity_proxy(rng):
    for _ in range(10):
        mu1, mu2 = random_family(rng, 10), random_family(rng, 10)
        nu = random_smooth_measure(rng, B)
        assert entropy.furstenberg_entropy(mu1.then(mu2), nu) >= entropy.furstenberg_entropy(mu1, nu) - 1e-6


def test_discretization_error():
    val, err = entropy.discretization_error(lambda n: 1.0 / n, 100)
    assert val == pytest.approx(0.01) and err == pytest.approx(0.005)


def test_pointwise_examples():
    assert entropy.pointwise_entropy(JacobianFamily([0.3, 0.7], [2.0, 2.0])) == 0.0
    v = entropy.pointwise_entropy(JacobianFamily([0.5, 0.5], [1.0, 3.0]))
    assert v == pytest.approx(0.25 * math.log(0.5) + 0.75 * math.log(1.5))
    assert v == pytest.approx(0.1308, abs=1e-4)


def test_pointwise_scale_invariant(rng):
    w = rng.dirichlet(np.ones(6))
    j = rng.uniform(0.1, 5, 6)
    assert entropy.pointwise_entropy((w, j)) == pytest.approx(entropy.pointwise_entropy((w, 7.3 * j)), rel=1e-12)


def test_pointwise_rejects_nonpositive():
    with pytest.raises(InputError):
        entropy.pointwise_entropy(JacobianFamily([0.5, 0.5], [1.0, 0.0]))


def test_psi_examples():
    assert entropy.psi_variance_bound_check([(1.0, 1.0)], 1.0)
    x = 0.5 + (np.arange(4096) + 0.5) / 4096
    samples = np.column_stack([np.full(4096, 1 / 4096), x])
    assert entropy.psi_variance_bound_check(samples, 1.5)
    assert np.sum(x * np.log(x)) / 4096 == pytest.approx(0.042791, abs=1e-6)


def test_psi_requires_unit_mean():
    with pytest.raises(InputError):
        entropy.psi_variance_bound_check([(0.5, 1.0), (0.5, 2.0)], 2.0)


def test_psi_random(rng):
    for _ in range(2000):
        m = int(rng.integers(1, 10))
        w = rng.dirichlet(np.ones(m))
        x = rng.uniform(0.01, 5, m)
        x /= np.sum(w * x)
        assert entropy.psi_variance_bound_check(np.column_stack([w, x]), x.max())


def test_b22_examples():
    assert entropy.b22_family_entropy(1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    v = entropy.b22_family_entropy(1.0, 0.5)
    assert v == pytest.approx(0.042791, abs=1e-6)
    assert v >= 1 / 48
    for lam in (0.1, 3.0, 40.0):
        assert entropy.b22_family_entropy(lam, lam * 0.5) == pytest.approx(v, abs=1e-10)


def test_b22_matches_closed_form():
    # E[X log X] for X uniform on [1-q, 1+q]
    for q in (0.1, 0.5, 0.9):
        F = lambda x: x * x * math.log(x) / 2 - x * x / 4
        exact = (F(1 + q) - F(1 - q)) / (2 * q)
        assert entropy.b22_family_entropy(1.0, q) == pytest.approx(exact, abs=1e-6)


def test_b22_off_diagonal_irrelevant():
    assert entropy.b22_family_entropy(2.0, 1.0, b=5.0, c=3.0) == pytest.approx(entropy.b22_family_entropy(2.0, 1.0))


def test_b22_rejects():
    with pytest.raises(InputError):
        entropy.b22_family_entropy(1.0, 1.0)


def test_distortion_examples(rng):
    fam = MapFamily.uniform([rotation(t) for t in (0.2, 1.1)])
    assert entropy.distortion_vs_entropy_check(fam, 256)
    assert entropy.distortion_vs_entropy_check(MapFamily.single(np.diag([2.0, 1.0])), 256)
    for _ in range(20):
        assert entropy.distortion_vs_entropy_check(random_family(rng, 100), 256)

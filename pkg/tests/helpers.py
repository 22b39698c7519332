"""Random instance generators shared by the unit and acceptance tests."""

import math

import numpy as np

from lyapgap import entropy
from lyapgap.matcore import rotation


def random_map(rng, max_cond):
    """2x2 map with condition number in [1, max_cond], random orientation and scale."""
    c = math.exp(rng.uniform(0, math.log(max_cond)))
    A = rotation(rng.uniform(0, math.pi)) @ np.diag([c ** 0.5, c ** -0.5]) @ rotation(rng.uniform(0, math.pi))
    if rng.random() < 0.5:
        A = A @ np.diag([1.0, -1.0])
    return A * rng.uniform(0.5, 2.0)


def random_family(rng, max_cond, size=None):
    m = int(rng.integers(2, 9)) if size is None else size
    return entropy.MapFamily(rng.dirichlet(np.ones(m)), [random_map(rng, max_cond) for _ in range(m)])


def random_smooth_measure(rng, n_bins, n_coeffs=2):
    raw = rng.uniform(-1, 1, (n_coeffs, 2))
    raw *= rng.uniform(0, 0.9) / np.abs(raw).sum()
    return entropy.trig_measure(raw, n_bins)


def composition_residual(mu1, mu2, coeffs, n_bins):
    """Phi_{mu2*mu1}(nu) - Phi_{mu1}(nu) - Phi_{mu2}(mu1*nu) and its two sides at ``n_bins``."""
    nu = entropy.trig_measure(coeffs, n_bins)
    lhs = entropy.furstenberg_entropy(mu1.then(mu2), nu)
    rhs = entropy.furstenberg_entropy(mu1, nu) + entropy.furstenberg_entropy(mu2, entropy.convolve(mu1, nu))
    return lhs - rhs, lhs, rhs


def composition_case(rng, n_bins):
    """One random instance: residual at B, residual at 2B, and the doubling error estimate."""
    mu1 = random_family(rng, 10, size=int(rng.integers(2, 4)))
    mu2 = random_family(rng, 10, size=int(rng.integers(2, 4)))
    raw = rng.uniform(-1, 1, (2, 2))
    coeffs = raw * rng.uniform(0, 0.9) / np.abs(raw).sum()
    r1, l1, s1 = composition_residual(mu1, mu2, coeffs, n_bins)
    r2, l2, s2 = composition_residual(mu1, mu2, coeffs, 2 * n_bins)
    return r1, r2, abs(l2 - l1) + abs(s2 - s1)

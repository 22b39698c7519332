"""Histogram measures on RP^1 and the entropy functionals built from them.

A :class:`CircleMeasure` is a probability vector over ``B`` equal arcs of
``[0, pi)``, read as a piecewise-constant density.  Push-forwards are exact
for that density: each target arc is pulled back through the inverse
projective map and its mass is read off the piecewise-linear CDF, so mass
is conserved to rounding error.

Entropy conventions follow the usual ones for random maps: KL divergence,
mean relative entropy of a weighted map family against a reference measure,
Furstenberg entropy (reference = the mean push-forward), and the pointwise
entropy of a family of inverse Jacobians at a common target point.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import InputError, SingularityError
from .matcore import as_matrix, projective_jacobian, singular_values_2x2

DEFAULT_BINS = 512
B22_QUADRATURE_POINTS = 1024


@dataclass(frozen=True, eq=False)
class CircleMeasure:
    bins: np.ndarray

    def __post_init__(self):
        p = np.array(self.bins, dtype=float)
        if p.ndim != 1 or len(p) < 1:
            raise InputError("bins must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InputError("bin masses must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InputError(f"bin masses sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "bins", p)

    @property
    def n_bins(self):
        return len(self.bins)

    @classmethod
    def uniform(cls, n_bins=DEFAULT_BINS):
        return cls(np.full(n_bins, 1.0 / n_bins))

    @classmethod
    def point_mass(cls, index, n_bins=DEFAULT_BINS):
        p = np.zeros(n_bins)
        p[index] = 1.0
        return cls(p)

    @classmethod
    def from_masses(cls, masses):
        """Normalize non-negative masses into a measure."""
        m = np.clip(np.asarray(masses, dtype=float), 0.0, None)
        return cls(m / m.sum())

    @classmethod
    def from_cdf(cls, cdf, n_bins=DEFAULT_BINS):
        """Exact bin masses of a measure with cumulative function ``cdf`` on [0, pi]."""
        edges = np.linspace(0.0, math.pi, n_bins + 1)
        return cls.from_masses(np.diff(cdf(edges)))

    def cdf(self, theta):
        """Cumulative mass of ``[0, theta)`` for theta in [0, pi], piecewise linear."""
        B = self.n_bins
        x = np.asarray(theta, dtype=float) * (B / math.pi)
        j = np.clip(np.floor(x).astype(int), 0, B - 1)
        cum = np.concatenate([[0.0], np.cumsum(self.bins)])
        return cum[j] + (x - j) * self.bins[j]

    def lifted_cdf(self, phi):
        """CDF extended to the real line with ``G(phi + pi) = G(phi) + 1``."""
        phi = np.asarray(phi, dtype=float)
        turns = np.floor(phi / math.pi)
        return turns + self.cdf(phi - turns * math.pi)

    def density(self):
        """Density with respect to normalized arc length (uniform measure = 1)."""
        return self.bins * self.n_bins

    def to_dict(self):
        return {"bins": self.bins.tolist()}

    @classmethod
    def from_dict(cls, data):
        if set(data) != {"bins"}:
            raise InputError(f"expected exactly the key 'bins', got {sorted(data)}")
        return cls(data["bins"])


def trig_measure(coeffs, n_bins=DEFAULT_BINS):
    """Measure with density ``(1 + sum a_j cos 2j t + b_j sin 2j t) / pi`` on [0, pi).

    ``coeffs`` is a sequence of ``(a_j, b_j)``; positivity requires
    ``sum |a_j| + |b_j| < 1``.  Bin masses are integrated exactly, so the
    same measure can be discretized at any resolution.
    """
    coeffs = [(float(a), float(b)) for a, b in coeffs]
    if sum(abs(a) + abs(b) for a, b in coeffs) >= 1.0:
        raise InputError("trigonometric coefficients do not give a positive density")

    def cdf(t):
        t = np.asarray(t, dtype=float)
        out = t.copy()
        for j, (a, b) in enumerate(coeffs, start=1):
            out += a * np.sin(2 * j * t) / (2 * j) + b * (1 - np.cos(2 * j * t)) / (2 * j)
        return out / math.pi

    return CircleMeasure.from_cdf(cdf, n_bins)


@dataclass(frozen=True, eq=False)
class MapFamily:
    """Finitely supported probability measure on projective maps of RP^1."""

    weights: np.ndarray
    maps: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        M = np.array(self.maps, dtype=float)
        if M.ndim != 3 or M.shape[1:] != (2, 2) or len(M) != len(w) or len(w) == 0:
            raise InputError("need one 2x2 matrix per weight")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("weights must be non-negative and sum to 1")
        det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
        if np.any(np.abs(det) < 1e-300) or not np.all(np.isfinite(M)):
            raise SingularityError("map family contains a singular matrix")
        w.setflags(write=False)
        M.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "maps", M)

    @classmethod
    def single(cls, A):
        return cls([1.0], [as_matrix(A)])

    @classmethod
    def uniform(cls, maps):
        maps = list(maps)
        return cls(np.full(len(maps), 1.0 / len(maps)), maps)

    def __len__(self):
        return len(self.weights)

    def to_dict(self):
        return {"members": [{"weight": float(w), "map": A.tolist()} for w, A in zip(self.weights, self.maps)]}

    @classmethod
    def from_dict(cls, data):
        if set(data) != {"members"}:
            raise InputError(f"expected exactly the key 'members', got {sorted(data)}")
        for m in data["members"]:
            if set(m) != {"weight", "map"}:
                raise InputError(f"member keys must be 'weight' and 'map', got {sorted(m)}")
        return cls([m["weight"] for m in data["members"]], [m["map"] for m in data["members"]])

    def then(self, other):
        """Family of compositions ``g o f`` (f from self, g from other), weights multiplied."""
        w = np.outer(other.weights, self.weights).ravel()
        M = np.einsum("aij,bjk->abik", other.maps, self.maps).reshape(-1, 2, 2)
        return MapFamily(w / w.sum(), M)


@dataclass(frozen=True, eq=False)
class JacobianFamily:
    """Weighted inverse Jacobians of a map family at one common target point."""

    weights: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        v = np.array(self.values, dtype=float)
        if w.shape != v.shape or w.ndim != 1 or len(w) == 0:
            raise InputError("weights and values must be matching vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("weights must be non-negative and sum to 1")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise InputError("inverse Jacobian values must be positive and finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "values", v)


def kl_divergence(nu, nu_tilde):
    """Relative entropy of ``nu`` with respect to ``nu_tilde``; ``math.inf`` if not abs. continuous."""
    p, q = nu.bins, nu_tilde.bins
    if p.shape != q.shape:
        raise InputError("measures have different bin counts")
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    return max(0.0, float(np.sum(p[support] * np.log(p[support] / q[support]))))


def _lifted_preimages(A, n_bins):
    """Continuous lift of the preimage angles of all bin edges under ``A``."""
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-300:
        raise SingularityError("pushforward by a singular matrix")
    inv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / det
    edges = np.linspace(0.0, math.pi, n_bins + 1)
    x = inv[0, 0] * np.cos(edges) + inv[0, 1] * np.sin(edges)
    y = inv[1, 0] * np.cos(edges) + inv[1, 1] * np.sin(edges)
    phi = np.mod(np.arctan2(y, x), math.pi)
    step = np.diff(phi)
    # the preimage moves monotonically, in the direction given by sign(det)
    step = np.mod(step, math.pi) if det > 0 else -np.mod(-step, math.pi)
    return np.concatenate([[phi[0]], phi[0] + np.cumsum(step)])


def pushforward(A, nu):
    """Image measure ``A_* nu`` under the projective action of a 2x2 matrix."""
    A = as_matrix(A)
    if A.shape != (2, 2):
        raise InputError("pushforward needs a 2x2 matrix")
    lift = _lifted_preimages(A, nu.n_bins)
    G = nu.lifted_cdf(lift)
    return CircleMeasure.from_masses(np.abs(np.diff(G)))


def convolve(mu, nu):
    """Mean push-forward ``sum_f w_f f_* nu``."""
    acc = np.zeros(nu.n_bins)
    for w, A in zip(mu.weights, mu.maps):
        acc += w * pushforward(A, nu).bins
    return CircleMeasure.from_masses(acc)


def mean_relative_entropy(mu, nu, nu_prime):
    total = 0.0
    for w, A in zip(mu.weights, mu.maps):
        if w == 0:
            continue
        kl = kl_divergence(pushforward(A, nu), nu_prime)
        if math.isinf(kl):
            return math.inf
        total += w * kl
    return total


def furstenberg_entropy(mu, nu):
    """Mean KL divergence of each push-forward from the mean push-forward."""
    pushed = [pushforward(A, nu) for A in mu.maps]
    mean = CircleMeasure.from_masses(sum(w * p.bins for w, p in zip(mu.weights, pushed)))
    return float(sum(w * kl_divergence(p, mean) for w, p in zip(mu.weights, pushed) if w > 0))


def discretization_error(fn, n_bins=DEFAULT_BINS):
    """Return ``(value at n_bins, |value(2 n_bins) - value(n_bins)|)``.

    ``fn`` takes a bin count and returns the quantity of interest.
    """
    v1 = fn(n_bins)
    v2 = fn(2 * n_bins)
    return v1, abs(v2 - v1)


def pointwise_entropy(fam):
    """Normalized ``x log x`` average of the inverse Jacobians."""
    if not isinstance(fam, JacobianFamily):
        fam = JacobianFamily(*fam)
    w, j = fam.weights, fam.values
    x = j / np.sum(w * j)
    return max(0.0, float(np.sum(w * x * np.log(x))))


def psi_variance_bound_check(samples, M):
    """Check ``E[X log X] >= Var(X) / (2M)`` for a weighted sample with mean 1, 0 < X <= M."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError("samples must be a list of (weight, value) pairs")
    w, x = arr[:, 0], arr[:, 1]
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
        raise InputError("weights must be non-negative and sum to 1")
    if np.any(x <= 0) or np.any(x > M * (1 + 1e-12)):
        raise InputError("values must lie in (0, M]")
    mean = float(np.sum(w * x))
    if abs(mean - 1.0) > 1e-8:
        raise InputError(f"weighted mean must be 1, got {mean!r}")
    lhs = float(np.sum(w * x * np.log(x)))
    var = float(np.sum(w * (x - mean) ** 2))
    return lhs >= var / (2 * M) - 1e-10


def b22_family(a, r, b=0.0, c=1.0, n_points=B22_QUADRATURE_POINTS):
    """Midpoint-quadrature family of ``[[t, b], [0, c]]``, t uniform on [a - r, a + r]."""
    if not (a > 0 and 0 <= r < a):
        raise InputError(f"need 0 <= r < a, got a={a}, r={r}")
    t = a - r + (np.arange(n_points) + 0.5) * (2 * r / n_points)
    maps = np.zeros((n_points, 2, 2))
    maps[:, 0, 0] = t
    maps[:, 0, 1] = b
    maps[:, 1, 1] = c
    return MapFamily(np.full(n_points, 1.0 / n_points), maps)


def b22_family_entropy(a, r, b=0.0, c=1.0, n_points=B22_QUADRATURE_POINTS):
    """Pointwise entropy at ``[1:0]`` of the upper-triangular family with t uniform on [a-r, a+r]."""
    fam = b22_family(a, r, b, c, n_points)
    inv_jac = np.array([1.0 / projective_jacobian(A, 0.0) for A in fam.maps])
    return pointwise_entropy(JacobianFamily(fam.weights, inv_jac))


def distortion_vs_entropy_check(mu, n_bins=DEFAULT_BINS):
    """``sum_f w_f log(s1/s2)(f) >= Furstenberg entropy of the uniform measure``.

    The right side is computed at ``n_bins`` and the slack is twice the change
    observed when the bin count doubles.
    """
    s = singular_values_2x2(mu.maps)
    lhs = float(np.sum(mu.weights * (np.log(s[:, 0]) - np.log(s[:, 1]))))
    rhs, err = discretization_error(lambda B: furstenberg_entropy(mu, CircleMeasure.uniform(B)), n_bins)
    return lhs >= rhs - 2 * err - 1e-12

"""Additive matrix noise: families, samplers, densities and moment diagnostics.

Three families are supported, all absolutely continuous:

``uniform-entries(half_width)``
    iid entries uniform on ``[-h, h]``.  With ``h = sqrt(3)`` the entries have
    mean 0 and variance 1 and the support is bounded, which is the bounded
    identity-covariance family used for the upper-bound experiments.
``uniform-operator-ball(radius)``
    Lebesgue-uniform on ``{E : ||E|| <= radius}`` (spectral norm).
``truncated-gaussian(sigma, cutoff)``
    iid ``N(0, sigma^2)`` entries conditioned on ``||E|| <= cutoff``.
"""

from dataclasses import asdict, dataclass
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy.special import gammaln

from .errors import ConditioningError, InputError, UnsupportedError
from .flags import haar_frames
from .matcore import as_matrix

FAMILIES = ("uniform-entries", "uniform-operator-ball", "truncated-gaussian")

_PARAMS = {
    "uniform-entries": ("half_width",),
    "uniform-operator-ball": ("radius",),
    "truncated-gaussian": ("sigma", "cutoff"),
}


@dataclass(frozen=True)
class NoiseSpec:
    dim: int
    family: str
    half_width: float = None
    radius: float = None
    sigma: float = None
    cutoff: float = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise InputError(f"dim must be an integer >= 2, got {self.dim!r}")
        wanted = _PARAMS[self.family]
        for name in ("half_width", "radius", "sigma", "cutoff"):
            value = getattr(self, name)
            if name in wanted:
                if value is None or not (float(value) > 0 and math.isfinite(value)):
                    raise InputError(f"{self.family} needs a positive finite {name}")
            elif value is not None:
                raise InputError(f"{name} is not a parameter of {self.family}")

    @classmethod
    def uniform_entries(cls, dim, half_width=math.sqrt(3.0)):
        return cls(dim, "uniform-entries", half_width=half_width)

    @classmethod
    def uniform_operator_ball(cls, dim, radius=1.0):
        return cls(dim, "uniform-operator-ball", radius=radius)

    @classmethod
    def truncated_gaussian(cls, dim, sigma=1.0, cutoff=10.0):
        return cls(dim, "truncated-gaussian", sigma=sigma, cutoff=cutoff)

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data, dim=None):
        data = dict(data)
        if dim is not None:
            data.setdefault("dim", dim)
        family = data.get("family")
        allowed = {"dim", "family", *_PARAMS.get(family, ())}
        unknown = set(data) - allowed
        if unknown:
            raise InputError(f"unknown noise keys: {sorted(unknown)}")
        return cls(**data)

    @property
    def operator_norm_bound(self):
        """A sure bound on ``||E||`` (the L of the bounded family)."""
        if self.family == "uniform-entries":
            return self.dim * self.half_width
        if self.family == "uniform-operator-ball":
            return self.radius
        return self.cutoff


def _op_norms(E):
    return np.linalg.norm(E, ord=2, axis=(-2, -1))


def _sample_operator_ball(d, radius, rng, n):
    # Lebesgue measure in SVD coordinates E = U diag(s) V^T is Haar(U) x Haar(V)
    # x prod_{i<j} |s_i^2 - s_j^2| ds.  On the unit ball s lies in [0, 1]^d and
    # every factor is at most 1, so that weight is a valid acceptance probability.
    sv = np.empty((n, d))
    filled = 0
    while filled < n:
        batch = max(256, 40 * (n - filled))
        s = rng.random((batch, d))
        w = np.ones(batch)
        for i in range(d):
            for j in range(i + 1, d):
                w *= np.abs(s[:, i] ** 2 - s[:, j] ** 2)
        acc = s[rng.random(batch) < w][: n - filled]
        sv[filled:filled + len(acc)] = acc
        filled += len(acc)
    U = haar_frames(d, d, rng, size=n)
    V = haar_frames(d, d, rng, size=n)
    return radius * np.einsum("nij,nj,nkj->nik", U, sv, V)


def _sample_truncated_gaussian(d, sigma, cutoff, rng, n):
    out = sigma * rng.standard_normal((n, d, d))
    bad = _op_norms(out) > cutoff
    while bad.any():
        out[bad] = sigma * rng.standard_normal((int(bad.sum()), d, d))
        bad = _op_norms(out) > cutoff
    return out


def sample_noise(spec, rng, size=None):
    """Draw one noise matrix, or an array of ``size`` of them."""
    n = 1 if size is None else int(size)
    d = spec.dim
    if spec.family == "uniform-entries":
        E = rng.uniform(-spec.half_width, spec.half_width, size=(n, d, d))
    elif spec.family == "uniform-operator-ball":
        E = _sample_operator_ball(d, spec.radius, rng, n)
    else:
        E = _sample_truncated_gaussian(d, spec.sigma, spec.cutoff, rng, n)
    return E[0] if size is None else E


@lru_cache(maxsize=None)
def _unit_op_ball_log_volume(d, n=400_000, seed=20240511):
    # vol(K) = vol(Euclidean unit ball) * E_theta[rho(theta)^N] for a star body K.
    N = d * d
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, d, d))
    G /= np.linalg.norm(G.reshape(n, -1), axis=1)[:, None, None]
    log_rho = -np.log(_op_norms(G))
    m = log_rho.max()
    log_mean = m * N + math.log(np.mean(np.exp(N * (log_rho - m))))
    log_ball = (N / 2) * math.log(math.pi) - gammaln(N / 2 + 1)
    return log_ball + log_mean


@lru_cache(maxsize=None)
def _truncated_gaussian_mass(d, cutoff_over_sigma, n=400_000, seed=20240512):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, d, d))
    return float(np.mean(_op_norms(G) <= cutoff_over_sigma))


def log_normalizer(spec):
    """Log of the total Lebesgue mass the density is normalized by."""
    d = spec.dim
    N = d * d
    if spec.family == "uniform-entries":
        return N * math.log(2 * spec.half_width)
    if spec.family == "uniform-operator-ball":
        return _unit_op_ball_log_volume(d) + N * math.log(spec.radius)
    mass = _truncated_gaussian_mass(d, spec.cutoff / spec.sigma)
    return 0.5 * N * math.log(2 * math.pi * spec.sigma ** 2) + math.log(mass)


def density(spec, E):
    """Probability density of the noise law at matrix ``E`` (Lebesgue on R^{d x d})."""
    if spec.family not in FAMILIES:
        raise UnsupportedError(f"{spec.family} has no density")
    E = np.asarray(E, dtype=float)
    single = E.ndim == 2
    E = E.reshape(-1, spec.dim, spec.dim)
    if spec.family == "uniform-entries":
        inside = np.all(np.abs(E) <= spec.half_width, axis=(1, 2))
        val = np.where(inside, math.exp(-log_normalizer(spec)), 0.0)
    elif spec.family == "uniform-operator-ball":
        inside = _op_norms(E) <= spec.radius
        val = np.where(inside, math.exp(-log_normalizer(spec)), 0.0)
    else:
        inside = _op_norms(E) <= spec.cutoff
        sq = np.sum(E * E, axis=(1, 2))
        val = np.where(inside, np.exp(-0.5 * sq / spec.sigma ** 2 - log_normalizer(spec)), 0.0)
    return float(val[0]) if single else val


def tail_constant(spec):
    """A constant C with ``density(E) <= C / ||E||^(d^2 + 1)`` for every E.

    Every family is bounded by its peak value on a support of operator-norm
    radius L, so ``peak * L^(d^2+1)`` works.
    """
    d = spec.dim
    peak = math.exp(-log_normalizer(spec))
    return peak * spec.operator_norm_bound ** (d * d + 1)


def perturb(A, eps, E):
    """``A + eps * E``."""
    A = np.asarray(A, dtype=float)
    E = np.asarray(E, dtype=float)
    if A.shape != E.shape[-2:]:
        raise InputError(f"shape mismatch: {A.shape} vs {E.shape}")
    return A + eps * E


@dataclass(frozen=True)
class MomentReport:
    gamma: float
    norm_moment: float
    conorm_moment: float
    n_samples: int
    gamma_prime: float
    hat_norm_moment: float
    hat_conorm_moment: float
    n_excluded: int = 0
    hat_violations: int = 0


def hat_bound_violations(B, rtol=1e-10):
    """Count samples violating ``||B^||, ||B^^-1|| <= (||B|| ||B^-1||)^((d-1)/d)``.

    ``B`` is a stack of invertible matrices, ``B^ = B / |det B|^(1/d)``.
    """
    B = np.asarray(B, dtype=float)
    d = B.shape[-1]
    s = np.linalg.svd(B, compute_uv=False)
    logdet = np.sum(np.log(s), axis=-1)
    log_hat_norm = np.log(s[..., 0]) - logdet / d
    log_hat_conorm = -np.log(s[..., -1]) + logdet / d
    log_rhs = (d - 1) / d * (np.log(s[..., 0]) - np.log(s[..., -1]))
    slack = np.log1p(rtol)
    return int(np.sum(log_hat_norm > log_rhs + slack) + np.sum(log_hat_conorm > log_rhs + slack))


def moment_report(spec, A, eps, gamma, n, rng, warn_fraction=0.01):
    """Empirical gamma-norm and translated gamma-conorm moments of the noise.

    Also reports the moments of the determinant-normalized factor
    ``(A + eps E)^`` at exponent ``gamma' = gamma / (2 - 2/d)`` and counts
    samplewise violations of the hat-norm inequalities.
    """
    A = as_matrix(A)
    if gamma <= 0:
        raise InputError("gamma must be positive")
    if n < 1000:
        raise InputError("need at least 1000 samples")
    d = spec.dim
    E = sample_noise(spec, rng, size=n)
    B = perturb(A, eps, E)
    s = np.linalg.svd(B, compute_uv=False)
    ok = s[:, -1] > 1e-300 * np.maximum(s[:, 0], 1.0)
    excluded = int(n - ok.sum())
    if excluded > warn_fraction * n:
        warnings.warn(f"{excluded} of {n} perturbed samples were singular", RuntimeWarning)
    if excluded == n:
        raise ConditioningError("every perturbed sample was singular")
    s = s[ok]
    gp = gamma / (2 - 2 / d)
    logdet = np.sum(np.log(s), axis=1)
    hat_norm = np.exp(np.log(s[:, 0]) - logdet / d)
    hat_conorm = np.exp(-np.log(s[:, -1]) + logdet / d)
    return MomentReport(
        gamma=float(gamma),
        norm_moment=float(np.mean(_op_norms(E) ** gamma)),
        conorm_moment=float(np.mean(s[:, -1] ** -gamma)),
        n_samples=int(n),
        gamma_prime=float(gp),
        hat_norm_moment=float(np.mean(hat_norm ** gp)),
        hat_conorm_moment=float(np.mean(hat_conorm ** gp)),
        n_excluded=excluded,
        hat_violations=hat_bound_violations(B[ok]),
    )

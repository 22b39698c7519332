"""Haar-random subspaces and partial flags, and the miniflag gap functional.

A partial flag ``(lower, upper)`` has ranks ``(k-1, k+1)``; the k-planes
between them form a circle (the miniflag).  A matrix B maps the miniflag of
``(lower, upper)`` onto the miniflag of ``(B lower, B upper)`` through the
2x2 restricted operator of B on ``upper ⊖ lower``.  Averaging
``log(s1/s2)`` of that 2x2 matrix over Haar-random flags stays within a
dimension-dependent constant of ``log(s_k(B)/s_{k+1}(B))``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConditioningError, GeometryError, InputError
from .matcore import (
    Subspace,
    as_matrix,
    complement_frame,
    restricted_operator,
    singular_values,
    singular_values_2x2,
)

LOG_FLOOR = -700.0
# QR-block path is backward stable; condition numbers up to 1e14 are fine.
GAP_AVERAGE_RCOND = 1e-14


def haar_frames(d, k, rng, size=None):
    """Haar-distributed d x k orthonormal frames (Gaussian + sign-fixed QR).

    Returns one frame, or an array of shape ``(size, d, k)``.
    """
    if not (0 <= k <= d):
        raise InputError(f"need 0 <= k <= d, got d={d}, k={k}")
    shape = (1 if size is None else size, d, k)
    if k == 0:
        out = np.zeros(shape)
        return out[0] if size is None else out
    G = rng.standard_normal(shape)
    Q, R = np.linalg.qr(G)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    bad = np.min(np.abs(diag), axis=-1) < 1e-12
    while bad.any():
        G[bad] = rng.standard_normal((int(bad.sum()), d, k))
        Q[bad], R[bad] = np.linalg.qr(G[bad])
        diag = np.diagonal(R, axis1=-2, axis2=-1)
        bad = np.min(np.abs(diag), axis=-1) < 1e-12
    Q = Q * np.sign(diag)[..., None, :]
    return Q[0] if size is None else Q


def haar_orthogonal(d, rng):
    return haar_frames(d, d, rng)


def sample_grassmannian(d, k, rng):
    """Haar-random k-dimensional subspace of R^d."""
    return Subspace(haar_frames(d, k, rng))


@dataclass(frozen=True, eq=False)
class PartialFlag:
    """Nested pair ``lower ⊂ upper`` of ranks ``k-1`` and ``k+1``."""

    lower: Subspace
    upper: Subspace

    def __post_init__(self):
        if self.lower.ambient_dim != self.upper.ambient_dim:
            raise GeometryError("lower and upper live in different ambient spaces")
        if self.upper.rank != self.lower.rank + 2:
            raise GeometryError(
                f"ranks must differ by two, got {self.lower.rank} and {self.upper.rank}"
            )
        if not self.upper.contains(self.lower):
            raise GeometryError("lower subspace is not contained in upper subspace")

    @property
    def ambient_dim(self):
        return self.lower.ambient_dim

    @property
    def k(self):
        return self.lower.rank + 1

    def fiber_basis(self):
        """Fixed orthonormal basis (u1, u2) of ``upper ⊖ lower`` as a d x 2 array."""
        return complement_frame(self.lower, self.upper)

    def point(self, theta):
        """Miniflag point whose middle space is ``lower + span(cos t u1 + sin t u2)``."""
        u = self.fiber_basis()
        w = math.cos(theta) * u[:, 0] + math.sin(theta) * u[:, 1]
        mid = Subspace(np.column_stack([self.lower.frame, w]))
        return MiniflagPoint(self, mid)


@dataclass(frozen=True, eq=False)
class MiniflagPoint:
    flag: PartialFlag
    mid: Subspace

    def __post_init__(self):
        if self.mid.rank != self.flag.k:
            raise GeometryError(f"middle space must have rank {self.flag.k}")
        if not (self.mid.contains(self.flag.lower) and self.flag.upper.contains(self.mid)):
            raise GeometryError("middle space is not between lower and upper")


def sample_partial_flag(d, k, rng):
    """Haar-random partial flag with ranks ``(k-1, k+1)``."""
    if not (1 <= k <= d - 1):
        raise InputError(f"need 1 <= k <= d-1, got d={d}, k={k}")
    F = haar_frames(d, k + 1, rng)
    return PartialFlag(Subspace(F[:, :k - 1]), Subspace(F))


def sample_miniflag_point(d, k, rng):
    """Haar-random point of PF(k-1, k, k+1)."""
    if not (1 <= k <= d - 1):
        raise InputError(f"need 1 <= k <= d-1, got d={d}, k={k}")
    F = haar_frames(d, k + 1, rng)
    flag = PartialFlag(Subspace(F[:, :k - 1]), Subspace(F))
    return MiniflagPoint(flag, Subspace(F[:, :k]))


def alpha(V):
    """Volume of the projection of V onto E_ell = span(e_1, ..., e_ell), ell = rank V.

    Equals ``|det|`` of the top ell x ell block of an orthonormal frame of V.
    The rank-zero subspace gets the empty-product value 1.
    """
    ell = V.rank
    if ell == 0:
        return 1.0
    return float(abs(np.linalg.det(V.frame[:ell, :])))


def log_alpha(V):
    a = alpha(V)
    return math.log(a) if a > 1e-300 else LOG_FLOOR


def miniflag_restriction(B, flag):
    """2x2 matrix of B acting from ``upper ⊖ lower`` to ``B upper ⊖ B lower``."""
    return restricted_operator(B, flag.lower, flag.upper)


def miniflag_log_gap(B, flag):
    s = singular_values(miniflag_restriction(B, flag))
    return math.log(s[0]) - math.log(max(s[1], 1e-300))


def batch_miniflag_log_gaps(B, frames, k):
    """log(s1/s2) of the miniflag restriction for a stack of Haar frames.

    ``frames`` has shape (n, d, k+1); lower = first k-1 columns, upper = all.
    With ``B F = Q R`` the first k-1 columns of Q span ``B lower`` and the next
    two span ``B upper ⊖ B lower``, so the restriction is the 2x2 block
    ``R[k-1:k+1, k-1:k+1]``.
    """
    _, R = np.linalg.qr(np.einsum("ij,njk->nik", B, frames))
    s = singular_values_2x2(R[:, k - 1:k + 1, k - 1:k + 1])
    return np.log(s[:, 0]) - np.log(np.maximum(s[:, 1], 1e-300))


def gap_average(B, k, n_samples, rng):
    """Monte Carlo mean and standard error of the miniflag log-gap over Haar flags."""
    B = as_matrix(B, name="B")
    d = B.shape[0]
    if not (1 <= k <= d - 1):
        raise InputError(f"need 1 <= k <= d-1, got d={d}, k={k}")
    if n_samples < 100:
        raise InputError("n_samples must be at least 100")
    s = singular_values(B)
    if s[-1] <= GAP_AVERAGE_RCOND * s[0]:
        raise ConditioningError(f"B is too close to singular (s_d/s_1 = {s[-1] / s[0]:.3e})")
    vals = batch_miniflag_log_gaps(B, haar_frames(d, k + 1, rng, size=n_samples), k)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return mean, stderr


def gapcomp_bounds(D, point):
    """Lower bound, miniflag ratio s1/s2, and upper bound for a diagonal D.

    The diagonal must be positive and non-increasing: the bounds compare the
    flag against the coordinate subspaces spanned by the leading axes.
    """
    D = as_matrix(D, name="D")
    b = np.diag(D)
    if np.any(D - np.diag(b)):
        raise InputError("D must be diagonal")
    if np.any(b <= 0):
        raise InputError("diagonal entries must be positive")
    if np.any(np.diff(b) > 0):
        raise InputError("diagonal entries must be non-increasing")
    flag = point.flag
    k = flag.k
    a_lo, a_mid, a_up = alpha(flag.lower), alpha(point.mid), alpha(flag.upper)
    s = singular_values(miniflag_restriction(D, flag))
    ratio = s[0] / s[1]
    base = b[k - 1] / b[k]
    lo = a_mid ** 2 * a_lo * base
    hi = base / (a_lo ** 2 * a_up) if a_lo > 0 and a_up > 0 else math.inf
    return lo, ratio, hi


def gapcomp_check(D, point, slack=1e-8):
    lo, ratio, hi = gapcomp_bounds(D, point)
    return bool(lo * (1 - slack) <= ratio <= hi * (1 + slack))

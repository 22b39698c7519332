"""Dense small-matrix numerics.

Everything here works on plain ``numpy`` arrays.  Square matrices are at most
16 x 16 in practice, so the SVD is a one-sided (Hestenes) Jacobi iteration,
which gives small singular values to high relative accuracy when the input is
a well-conditioned matrix with graded columns.

Real projective line RP^1 is parameterized by the angle ``theta`` in
``[0, pi)`` of a representative unit vector ``(cos theta, sin theta)``.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
import math

import numpy as np

from .errors import ConditioningError, GeometryError, InputError, SingularityError

CONTAINMENT_TOL = 1e-8
MAX_DIM = 16

_JACOBI_TOL = 4.0 * np.finfo(float).eps
_JACOBI_MAX_SWEEPS = 80


def as_matrix(A, square=True, name="A"):
    """Return ``A`` as a finite float array, validating its shape."""
    M = np.array(A, dtype=float)
    if M.ndim != 2:
        raise InputError(f"{name} must be a 2-d array, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.s) @ self.v.T


@lru_cache(maxsize=None)
def _round_robin(n):
    """Disjoint pair schedule covering every (i, j) once per sweep."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p), max(p)) for p in pairs if max(p) < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def _complete_basis(frame, d):
    """Extend orthonormal columns ``frame`` (d x r) to an orthonormal basis."""
    cols = [frame[:, i] for i in range(frame.shape[1])]
    for e in np.eye(d):
        if len(cols) == d:
            break
        w = e.copy()
        for _ in range(2):
            for c in cols:
                w -= (c @ w) * c
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            cols.append(w / nrm)
    return np.column_stack(cols)


def _jacobi(G):
    """One-sided Jacobi on the columns of G (m x n, m >= n). Returns (G V, V)."""
    n = G.shape[1]
    V = np.eye(n)
    schedule = _round_robin(n)
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for P, Q in schedule:
            gp, gq = G[:, P], G[:, Q]
            alpha = np.einsum("ij,ij->j", gp, gp)
            beta = np.einsum("ij,ij->j", gq, gq)
            gamma = np.einsum("ij,ij->j", gp, gq)
            active = np.abs(gamma) > _JACOBI_TOL * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            with np.errstate(over="ignore"):
                # |zeta| may overflow for graded columns; t -> 0 is then correct
                zeta = np.where(active, (beta - alpha) / np.where(active, 2.0 * gamma, 1.0), 0.0)
                az = np.abs(zeta)
                t = np.where(zeta >= 0, 1.0, -1.0) / (az + np.hypot(1.0, az))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            vp, vq = V[:, P], V[:, Q]
            G[:, P] = c * gp - s * gq
            G[:, Q] = s * gp + c * gq
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq
        if not rotated:
            break
    return G, V


def svd(A):
    """Singular value decomposition ``A = u @ diag(s) @ v.T`` by one-sided Jacobi.

    Accepts any finite 2-d array.  For square input ``u`` and ``v`` are full
    orthogonal matrices; for rectangular input they are thin.
    """
    M = as_matrix(A, square=False)
    transpose = M.shape[0] < M.shape[1]
    if transpose:
        M = M.T
    m, n = M.shape
    G, V = _jacobi(M.copy())
    s = np.linalg.norm(G, axis=0)
    order = np.argsort(-s, kind="stable")
    s, G, V = s[order], G[:, order], V[:, order]
    scale = s[0] if n and s[0] > 0 else 1.0
    good = s > 1e-300 * max(scale, 1.0)
    U = np.zeros((m, n))
    U[:, good] = G[:, good] / s[good]
    if not good.all():
        r = int(good.sum())
        U = _complete_basis(U[:, :r], m)[:, :n]
        s = np.where(good, s, 0.0)
    if transpose:
        U, V = V, U
    return SvdResult(U, s, V)


def singular_values(A):
    return svd(A).s


def singular_product(A, i, j):
    """Product ``s_i(A) s_{i+1}(A) ... s_j(A)`` with 1-based inclusive indices."""
    s = singular_values(A)
    if not (1 <= i <= j <= len(s)):
        raise InputError(f"need 1 <= i <= j <= {len(s)}, got i={i}, j={j}")
    return float(np.prod(s[i - 1:j]))


def singular_values_2x2(M):
    """Closed-form singular values of one or many 2x2 matrices (shape (..., 2, 2))."""
    M = np.asarray(M, dtype=float)
    e = 0.5 * (M[..., 0, 0] + M[..., 1, 1])
    f = 0.5 * (M[..., 0, 0] - M[..., 1, 1])
    g = 0.5 * (M[..., 1, 0] + M[..., 0, 1])
    h = 0.5 * (M[..., 1, 0] - M[..., 0, 1])
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    return np.stack([q + r, np.abs(q - r)], axis=-1)


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of R^d stored as a d x k matrix with orthonormal columns."""

    frame: np.ndarray

    def __post_init__(self):
        F = np.array(self.frame, dtype=float)
        if F.ndim != 2 or F.shape[1] > F.shape[0]:
            raise InputError(f"frame must be d x k with k <= d, got {F.shape}")
        if F.shape[1] and np.max(np.abs(F.T @ F - np.eye(F.shape[1]))) > 1e-10:
            raise InputError("frame columns are not orthonormal")
        F.setflags(write=False)
        object.__setattr__(self, "frame", F)

    @property
    def ambient_dim(self):
        return self.frame.shape[0]

    @property
    def rank(self):
        return self.frame.shape[1]

    @classmethod
    def zero(cls, d):
        return cls(np.zeros((d, 0)))

    @classmethod
    def full(cls, d):
        return cls(np.eye(d))

    @classmethod
    def coordinate(cls, d, ell):
        """The span E_ell of the first ``ell`` standard basis vectors."""
        return cls(np.eye(d)[:, :ell])

    @classmethod
    def span(cls, vectors, d=None):
        """Orthonormal frame for the span of the columns of ``vectors``."""
        V = np.array(vectors, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        if V.shape[1] == 0:
            return cls.zero(V.shape[0] if d is None else d)
        frame = gram_schmidt_complete(np.zeros((V.shape[0], 0)), V)
        return cls(frame)

    def projector(self):
        return self.frame @ self.frame.T

    def residual(self, other):
        """Largest sine of the principal angles from ``other`` into ``self``."""
        if other.rank == 0:
            return 0.0
        R = other.frame - self.frame @ (self.frame.T @ other.frame)
        return float(np.linalg.norm(R, 2))

    def contains(self, other, tol=CONTAINMENT_TOL):
        return other.ambient_dim == self.ambient_dim and self.residual(other) <= tol

    def equals(self, other, tol=CONTAINMENT_TOL):
        return self.rank == other.rank and self.contains(other, tol)

    def transform(self, B):
        """Image subspace ``B(self)``."""
        return Subspace.span(np.asarray(B, dtype=float) @ self.frame, d=self.ambient_dim)


def gram_schmidt_complete(inner, candidates, count=None):
    """Orthonormal vectors spanning ``span(inner, candidates)`` orthogonal to ``inner``.

    Columns of ``inner`` must be orthonormal.  At each step the candidate with
    the largest residual is taken (deterministic pivoting) and orthogonalized
    twice against everything accepted so far.  Stops after ``count`` vectors
    or when every residual is below ``1e-10`` relative to its original norm.
    """
    inner = np.asarray(inner, dtype=float)
    W = np.array(candidates, dtype=float)
    norms0 = np.linalg.norm(W, axis=0)
    basis = inner.copy()
    out = []
    limit = W.shape[1] if count is None else count
    for _ in range(2):
        if basis.shape[1]:
            W = W - basis @ (basis.T @ W)
    while len(out) < limit:
        res = np.linalg.norm(W, axis=0)
        rel = np.where(norms0 > 0, res / np.where(norms0 > 0, norms0, 1.0), 0.0)
        j = int(np.argmax(rel)) if W.shape[1] else -1
        if j < 0 or rel[j] <= 1e-10:
            break
        w = W[:, j] / res[j]
        for _ in range(2):
            if basis.shape[1]:
                w = w - basis @ (basis.T @ w)
            w = w / np.linalg.norm(w)
        out.append(w)
        basis = np.column_stack([basis, w])
        W = W - np.outer(w, w @ W)
        W[:, j] = 0.0
    if count is not None and len(out) < count:
        raise GeometryError(f"could only complete {len(out)} of {count} directions")
    d = inner.shape[0]
    return np.column_stack(out) if out else np.zeros((d, 0))


def _check_invertible(B, rtol=1e-12):
    s = singular_values(B)
    if s[-1] < rtol * s[0] or s[0] == 0.0:
        raise ConditioningError(f"matrix is numerically singular (s_d/s_1 = {s[-1] / max(s[0], 1e-300):.3e})")
    return s


def complement_frame(inner, outer):
    """Deterministic orthonormal basis of ``outer`` minus ``inner`` (outer ⊖ inner)."""
    if not outer.contains(inner):
        raise GeometryError("inner subspace is not contained in outer subspace")
    return gram_schmidt_complete(inner.frame, outer.frame, count=outer.rank - inner.rank)


def restricted_operator(B, inner, outer):
    """Matrix of ``B`` restricted to ``outer ⊖ inner``, landing in ``B(outer) ⊖ B(inner)``.

    The returned square matrix is written in the orthonormal bases chosen by
    :func:`complement_frame`; only its singular values are basis-free.
    """
    B = as_matrix(B, name="B")
    if inner.ambient_dim != B.shape[0] or outer.ambient_dim != B.shape[0]:
        raise InputError("subspace dimension does not match B")
    _check_invertible(B)
    X = complement_frame(inner, outer)
    BU = gram_schmidt_complete(np.zeros((B.shape[0], 0)), B @ inner.frame, count=inner.rank)
    W = gram_schmidt_complete(BU, B @ outer.frame, count=outer.rank - inner.rank)
    return W.T @ B @ X


def exterior_power(A, k):
    """Matrix of the k-th exterior power in the lexicographic basis of k-subsets."""
    A = as_matrix(A)
    d = A.shape[0]
    if not (1 <= k <= d):
        raise InputError(f"need 1 <= k <= {d}, got k={k}")
    idx = list(combinations(range(d), k))
    out = np.empty((len(idx), len(idx)))
    for a, rows in enumerate(idx):
        sub = A[list(rows)]
        for b, cols in enumerate(idx):
            out[a, b] = np.linalg.det(sub[:, list(cols)])
    return out


def normalize_det(A):
    """``A / |det A|^(1/d)``: same projective action, determinant +-1."""
    A = as_matrix(A)
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0 or not np.isfinite(logdet):
        raise SingularityError("cannot normalize a matrix with zero determinant")
    return A * math.exp(-logdet / A.shape[0])


def _as_2x2(A):
    A = as_matrix(A)
    if A.shape != (2, 2):
        raise InputError(f"expected a 2x2 matrix, got {A.shape}")
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if det == 0.0 or abs(det) < 1e-300:
        raise SingularityError("projective map of a singular matrix")
    return A, det


def projective_action(A, theta):
    """Image angle(s) in [0, pi) of the line(s) at ``theta`` under ``A``."""
    A, _ = _as_2x2(A)
    theta = np.asarray(theta, dtype=float)
    x = A[0, 0] * np.cos(theta) + A[0, 1] * np.sin(theta)
    y = A[1, 0] * np.cos(theta) + A[1, 1] * np.sin(theta)
    return np.mod(np.arctan2(y, x), np.pi)


def projective_jacobian(A, theta):
    """|derivative| of the induced map on RP^1 at angle ``theta`` (round metric).

    For a unit vector v, this equals |det A| / |A v|^2.
    """
    A, det = _as_2x2(A)
    theta = np.asarray(theta, dtype=float)
    x = A[0, 0] * np.cos(theta) + A[0, 1] * np.sin(theta)
    y = A[1, 0] * np.cos(theta) + A[1, 1] * np.sin(theta)
    out = abs(det) / (x * x + y * y)
    return float(out) if out.ndim == 0 else out


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])

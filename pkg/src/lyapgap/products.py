"""Non-stationary random matrix products and their log singular values.

Products ``B^n = (A_n + eps E_n) ... (A_1 + eps E_1)`` are accumulated with
the discrete QR method: the running frame ``q`` is re-orthonormalized after
every factor (or every block of factors), and the logarithms of the positive
R-diagonal entries are summed.  ``log_diag / n`` converges to the Lyapunov
spectrum; at finite n the cumulative sums differ from ``log s_k(B^n)`` by an
O(1) amount that does not grow with n.
"""

from dataclasses import dataclass
import csv
import io
import math

import numpy as np

from .errors import InputError, NumericalAbort, UnderflowError, UnsupportedError
from .matcore import as_matrix, svd
from .noise import sample_noise

RDIAG_FLOOR = 1e-300
NOISE_BLOCK = 4096
EXACT_MAX_FACTORS = 64
# exp() of a log-spread above this no longer fits in a double
_MAX_LOG_SPREAD = 650.0


@dataclass(frozen=True, eq=False)
class ProductState:
    """Renormalized factorization ``B^n Q_0 = q T`` of the running product.

    ``log_diag[k]`` is the sum of ``log R_kk`` over all renormalizations,
    i.e. ``log T_kk``.  When ``tri`` is tracked it holds ``diag(T)^-1 T``,
    which lets :func:`qr_log_singular_values` recover the singular values of
    the product itself for moderate n.
    """

    q: np.ndarray
    log_diag: np.ndarray
    steps: int = 0
    log_abs_det: float = 0.0
    tri: np.ndarray = None

    @property
    def dim(self):
        return self.q.shape[0]

    @classmethod
    def identity(cls, d, track_triangular=False):
        return cls(np.eye(d), np.zeros(d), 0, 0.0, np.eye(d) if track_triangular else None)


def _positive_qr(M):
    Q, R = np.linalg.qr(M)
    sign = np.where(np.diagonal(R, axis1=-2, axis2=-1) < 0, -1.0, 1.0)
    return Q * sign[..., None, :], R * sign[..., :, None]


def advance(state, A):
    """Multiply the product by one more factor ``A`` on the left."""
    A = as_matrix(A)
    if A.shape != state.q.shape:
        raise InputError(f"factor shape {A.shape} does not match dimension {state.dim}")
    step = state.steps + 1
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0 or not math.isfinite(logdet):
        raise NumericalAbort("factor is singular", step=step)
    Q, R = _positive_qr(A @ state.q)
    diag = np.diag(R).copy()
    if np.any(diag < RDIAG_FLOOR):
        raise UnderflowError(f"R diagonal underflow at step {step}", step=step)
    log_r = np.log(diag)
    tri = None
    if state.tri is not None:
        ld = state.log_diag
        expo = np.where(np.triu(np.ones_like(R, dtype=bool)), ld[None, :] - ld[:, None], -np.inf)
        tri = ((R / diag[:, None]) * np.exp(expo)) @ state.tri
    return ProductState(Q, state.log_diag + log_r, step, state.log_abs_det + logdet, tri)


def _block_products(F, group):
    """Left-products of consecutive groups of ``group`` factors: ``F[j+g-1] ... F[j]``."""
    m = len(F)
    full = m // group
    out = []
    if full:
        P = F[: full * group].reshape(full, group, *F.shape[1:])
        prod = P[:, 0]
        for j in range(1, group):
            prod = P[:, j] @ prod
        out.append(prod)
    if m % group:
        rest = F[full * group:]
        prod = rest[0]
        for M in rest[1:]:
            prod = M @ prod
        out.append(prod[None])
    ends = [min((i + 1) * group, m) for i in range(full + (1 if m % group else 0))]
    return (np.concatenate(out) if out else np.empty((0,) + F.shape[1:])), ends


def advance_block(state, factors, renorm_every=8):
    """Apply ``factors[0]``, then ``factors[1]``, ... in one vectorized pass.

    Factors are multiplied in groups of ``renorm_every`` before each QR
    renormalization.  By uniqueness of the positive-diagonal QR this gives the
    same cumulative sums as renormalizing after every factor, provided each
    group product stays well inside double precision range.
    """
    F = np.asarray(factors, dtype=float)
    if F.ndim != 3 or F.shape[1:] != state.q.shape:
        raise InputError(f"factors must have shape (m, {state.dim}, {state.dim})")
    if len(F) == 0:
        return state
    if state.tri is not None:
        for A in F:
            state = advance(state, A)
        return state
    if not np.all(np.isfinite(F)):
        bad = int(np.argmin(np.all(np.isfinite(F), axis=(1, 2))))
        raise NumericalAbort("non-finite factor", step=state.steps + bad + 1)
    sign, logdet = np.linalg.slogdet(F)
    singular = (sign == 0) | ~np.isfinite(logdet)
    if singular.any():
        bad = int(np.argmax(singular))
        raise NumericalAbort("perturbed factor is singular", step=state.steps + bad + 1)
    groups, ends = _block_products(F, max(1, int(renorm_every)))
    q = state.q
    log_diag = state.log_diag.copy()
    for P, end in zip(groups, ends):
        q, R = _positive_qr(P @ q)
        diag = np.diag(R)
        if np.any(diag < RDIAG_FLOOR):
            raise UnderflowError(f"R diagonal underflow by step {state.steps + end}", step=state.steps + end)
        log_diag += np.log(diag)
    return ProductState(q, log_diag, state.steps + len(F), state.log_abs_det + float(logdet.sum()), None)


def exponent_estimates(state):
    """``log_diag / steps`` sorted non-increasing."""
    if state.steps < 1:
        raise InputError("no steps taken yet")
    return np.sort(state.log_diag / state.steps)[::-1]


def qr_log_singular_values(state):
    """Log singular values of the accumulated product from the tracked triangular factor.

    ``B^n Q_0 = q diag(exp(log_diag)) tri``, so the singular values are those of
    the row-graded triangular matrix, computed by one-sided Jacobi on its
    column-graded transpose.
    """
    if state.tri is None:
        raise UnsupportedError("state was created without triangular tracking")
    ld = state.log_diag
    top = float(ld.max())
    if top - float(ld.min()) > _MAX_LOG_SPREAD:
        raise UnsupportedError("log singular value spread too large for double precision")
    T = np.exp(ld - top)[:, None] * state.tri
    s = svd(T.T).s
    return np.log(np.maximum(s, 1e-320)) + top


def exact_product_svd(factors):
    """Log singular values of ``factors[-1] @ ... @ factors[0]`` by direct multiplication.

    The running product is rescaled to unit Frobenius norm after each factor,
    with the scale kept in log form.  Accurate while the condition number of
    the product stays well below 1/machine-epsilon.
    """
    mats = [as_matrix(F) for F in factors]
    if not (1 <= len(mats) <= EXACT_MAX_FACTORS):
        raise UnsupportedError(f"exact product needs 1..{EXACT_MAX_FACTORS} factors, got {len(mats)}")
    P = np.eye(mats[0].shape[0])
    log_scale = 0.0
    for F in mats:
        P = F @ P
        c = np.linalg.norm(P)
        if c == 0.0:
            raise NumericalAbort("product collapsed to zero")
        P /= c
        log_scale += math.log(c)
    s = svd(P).s
    return np.log(np.maximum(s, 1e-320)) + log_scale


# -- base sequences ---------------------------------------------------------


class BaseSequence:
    """Deterministic sequence ``A_1, A_2, ...`` indexed from step 0."""

    dim = None
    norm_bound = None

    def matrices(self, start, stop):
        raise NotImplementedError

    def _check_bound(self, mats, declared):
        norms = [float(np.linalg.norm(A, 2)) for A in mats]
        bound = max(norms)
        if declared is not None:
            if bound > declared * (1 + 1e-12):
                raise InputError(f"base matrix norm {bound:.6g} exceeds declared bound M={declared}")
            bound = float(declared)
        self.norm_bound = bound


class IdentitySequence(BaseSequence):
    def __init__(self, d):
        self.dim = d
        self.norm_bound = 1.0

    def matrices(self, start, stop):
        return np.broadcast_to(np.eye(self.dim), (stop - start, self.dim, self.dim))


class CyclicSequence(BaseSequence):
    """Repeats a fixed schedule of matrices; one matrix gives a constant sequence."""

    def __init__(self, mats, norm_bound=None):
        mats = [as_matrix(A) for A in mats]
        if not mats:
            raise InputError("schedule is empty")
        if len({A.shape for A in mats}) != 1:
            raise InputError("schedule matrices differ in shape")
        self.mats = np.stack(mats)
        self.dim = self.mats.shape[1]
        self._check_bound(mats, norm_bound)

    def matrices(self, start, stop):
        return self.mats[np.arange(start, stop) % len(self.mats)]


def FixedSequence(A, norm_bound=None):
    return CyclicSequence([A], norm_bound)


# -- streams and runs ------------------------------------------------------


def block_rng(seed, trial, block):
    """Counter-based stream for noise block ``block`` of trial ``trial``.

    Keyed on (seed, trial, block) only, so trials and blocks can be generated
    in any order or in parallel with identical results.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def geometric_checkpoints(n):
    pts = []
    j = 0
    while 2 ** j < n:
        pts.append(2 ** j)
        j += 1
    pts.append(n)
    return pts


def _resolve_checkpoints(n, checkpoints):
    if checkpoints is None or checkpoints == "geometric":
        return geometric_checkpoints(n)
    if isinstance(checkpoints, (int, np.integer)):
        if checkpoints < 1:
            raise InputError("checkpoint_every must be positive")
        pts = list(range(int(checkpoints), n + 1, int(checkpoints)))
        if not pts or pts[-1] != n:
            pts.append(n)
        return pts
    pts = sorted({int(c) for c in checkpoints if 1 <= int(c) <= n} | {n})
    return pts


@dataclass(frozen=True)
class Checkpoint:
    n: int
    log_s_over_n: tuple
    gaps: tuple
    log_abs_det: float


@dataclass(frozen=True)
class GapTrace:
    checkpoints: tuple
    seed: int
    trial: int = 0
    config_digest: str = ""
    eps: float = 0.0

    @property
    def final(self):
        return self.checkpoints[-1]

    def to_csv(self, fh=None):
        """Rows ``n, k, log_s_k_over_n, gap_k, seed``; gap is blank for k = d."""
        own = fh is None
        fh = io.StringIO() if own else fh
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "k", "log_s_k_over_n", "gap_k", "seed"])
        for cp in self.checkpoints:
            for k, val in enumerate(cp.log_s_over_n, start=1):
                gap = repr(cp.gaps[k - 1]) if k <= len(cp.gaps) else ""
                w.writerow([cp.n, k, repr(val), gap, self.seed])
        return fh.getvalue() if own else None


def _checkpoint(state):
    if state.tri is not None:
        est = qr_log_singular_values(state) / state.steps
    else:
        est = exponent_estimates(state)
    return Checkpoint(
        n=state.steps,
        log_s_over_n=tuple(float(x) for x in est),
        gaps=tuple(float(x) for x in est[:-1] - est[1:]),
        log_abs_det=float(state.log_abs_det),
    )


def run_product(base, noise, eps, n, seed, trial=0, checkpoints=None,
                renorm_every=8, config_digest="", track_triangular=None):
    """Simulate one realization of the perturbed product and record checkpoints.

    ``checkpoints`` is ``None``/``"geometric"`` (powers of two), an integer
    spacing, or an explicit list of step counts; the final step is always
    included.  Noise for steps ``[b*4096, (b+1)*4096)`` comes from
    ``block_rng(seed, trial, b)``.

    With ``track_triangular`` (default: on when ``n <= EXACT_MAX_FACTORS``)
    checkpoints report the true finite-n singular values of the product
    instead of the R-diagonal estimates.
    """
    if n < 1:
        raise InputError("n must be at least 1")
    if noise is not None and noise.dim != base.dim:
        raise InputError("noise and base sequence dimensions differ")
    d = base.dim
    marks = _resolve_checkpoints(n, checkpoints)
    if track_triangular is None:
        track_triangular = n <= EXACT_MAX_FACTORS
    state = ProductState.identity(d, track_triangular=track_triangular)
    out = []
    mi = 0
    for block in range(math.ceil(n / NOISE_BLOCK)):
        start = block * NOISE_BLOCK
        stop = min(start + NOISE_BLOCK, n)
        F = np.array(base.matrices(start, stop), dtype=float)
        if eps != 0.0 and noise is not None:
            F += eps * sample_noise(noise, block_rng(seed, trial, block), size=stop - start)
        pos = start
        while pos < stop:
            cut = min(stop, marks[mi]) if mi < len(marks) else stop
            try:
                state = advance_block(state, F[pos - start:cut - start], renorm_every)
            except NumericalAbort as exc:
                raise NumericalAbort(f"{exc} (seed={seed}, trial={trial}, eps={eps})",
                                     step=exc.step, trial=trial) from exc
            except UnderflowError as exc:
                raise NumericalAbort(f"{exc} (seed={seed}, trial={trial}, eps={eps})",
                                     step=exc.step, trial=trial) from exc
            pos = cut
            if mi < len(marks) and pos == marks[mi]:
                out.append(_checkpoint(state))
                mi += 1
    return GapTrace(tuple(out), int(seed), int(trial), config_digest, float(eps))


def summarize_traces(traces):
    """Across-trial means and standard errors at the final checkpoint."""
    ests = np.array([t.final.log_s_over_n for t in traces])
    gaps = np.array([t.final.gaps for t in traces])
    m = len(traces)

    def se(x):
        return (x.std(axis=0, ddof=1) / math.sqrt(m)) if m > 1 else np.zeros(x.shape[1])

    return {
        "n": traces[0].final.n,
        "trials": m,
        "exponent_mean": ests.mean(axis=0).tolist(),
        "exponent_stderr": se(ests).tolist(),
        "gap_mean": gaps.mean(axis=0).tolist(),
        "gap_stderr": se(gaps).tolist(),
    }

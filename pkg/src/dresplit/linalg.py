"""Dense symmetric linear algebra kernels used by the DRE solver.

All routines operate on plain numpy arrays. Matrices that are symmetric by
contract are explicitly symmetrized before being returned, so downstream
code can rely on exact storage symmetry.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionError",
    "NotPositiveDefiniteError",
    "SingularLyapunovError",
    "symmetrize",
    "expm",
    "vanloan_flow",
    "cholesky",
    "spectral_norm",
    "lyapunov_solve",
]

# Dimension above which spectral_norm switches from a full symmetric
# eigensolver to a Lanczos iteration.
EIG_DIM_CUTOFF = 512


class DimensionError(ValueError):
    """Inputs have incompatible or invalid shapes."""


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be SPD has a non-positive pivot."""


class SingularLyapunovError(ValueError):
    """The Lyapunov operator X -> A X + X A^T is (numerically) singular."""


def _as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} has non-finite entries")
    return a


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part (a + a.T)/2."""
    return 0.5 * (a + a.T)


def expm(a, t: float = 1.0) -> np.ndarray:
    """Matrix exponential e^{t a}.

    Uses scaling-and-squaring with a degree-13 diagonal Pade approximant
    (the standard dense algorithm). ``t`` may have any sign.
    """
    a = _as_square(a)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return scipy.linalg.expm(t * a)


def vanloan_flow(a, q, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Propagator and forcing integral of the affine Lyapunov flow.

    Returns ``(E, X)`` with ``E = e^{t a}`` and
    ``X = int_0^t e^{s a} q e^{s a^T} ds``, computed from the block
    exponential of ``[[a, q], [0, -a^T]]`` (Van Loan's identity): if the
    top blocks of the exponential are G11 and G12, then ``X = G12 @ G11.T``.

    The -a^T block grows like e^{t ||a||}, so for stiff generators the
    base step is evaluated at t / 2^k with t/2^k * ||a|| <= 1 and the
    result is doubled k times via X(2s) = E(s) X(s) E(s)^T + X(s).
    """
    a = _as_square(a, "a")
    q = _as_square(q, "q")
    if a.shape != q.shape:
        raise DimensionError(f"a and q differ in shape: {a.shape} vs {q.shape}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = a.shape[0]
    anorm = np.linalg.norm(a, 1)
    doublings = 0
    if t * anorm > 1.0:
        doublings = int(math.ceil(math.log2(t * anorm)))
    dt = t / (1 << doublings)
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = a
    block[:n, n:] = q
    block[n:, n:] = -a.T
    g = expm(block, dt)
    e = g[:n, :n]
    x = symmetrize(g[:n, n:] @ e.T)
    for _ in range(doublings):
        x = symmetrize(e @ x @ e.T + x)
        e = e @ e
    return e, x


def cholesky(m) -> np.ndarray:
    """Lower-triangular L with L L^T = m; raises on non-SPD input."""
    m = _as_square(m)
    try:
        return scipy.linalg.cholesky(m, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def _lanczos_extreme(s: np.ndarray) -> float:
    """Largest-magnitude eigenvalue of a symmetric matrix via Lanczos."""
    import scipy.sparse.linalg

    n = s.shape[0]
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        vals = scipy.sparse.linalg.eigsh(
            s, k=1, which="LM", v0=v0, return_eigenvectors=False, tol=0
        )
        return float(abs(vals[0]))
    except scipy.sparse.linalg.ArpackNoConvergence:
        return float(np.abs(np.linalg.eigvalsh(symmetrize(s))).max())


def spectral_norm(s) -> float:
    """Largest |eigenvalue| of a symmetric matrix.

    Full eigendecomposition up to dimension 512, deterministic Lanczos
    iteration (fixed start vector) above.
    """
    s = _as_square(s)
    n = s.shape[0]
    if n <= EIG_DIM_CUTOFF:
        return float(np.abs(np.linalg.eigvalsh(symmetrize(s))).max())
    if not s.any():
        return 0.0
    return _lanczos_extreme(s)


def lyapunov_solve(a, rhs) -> np.ndarray:
    """Solve A X + X A^T = rhs (Bartels-Stewart).

    Requires that no two eigenvalues of A sum to zero; callers stabilize
    the generator with a spectral shift beforehand when needed.
    """
    a = _as_square(a, "a")
    rhs = _as_square(rhs, "rhs")
    if a.shape != rhs.shape:
        raise DimensionError(f"a and rhs differ in shape: {a.shape} vs {rhs.shape}")
    eigs = np.linalg.eigvals(a)
    scale = max(np.abs(eigs).max(), 1e-300)
    sums = eigs[:, None] + eigs[None, :]
    if np.abs(sums).min() <= 1e-12 * scale:
        raise SingularLyapunovError(
            "eigenvalue pair of A sums to ~0; apply a stabilizing shift first"
        )
    try:
        x = scipy.linalg.solve_sylvester(a, a.T, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularLyapunovError(str(exc)) from exc
    rhs_norm = np.linalg.norm(rhs)
    residual = np.linalg.norm(a @ x + x @ a.T - rhs)
    if rhs_norm > 0 and residual > 1e-10 * rhs_norm:
        raise SingularLyapunovError(
            f"Lyapunov residual {residual:.3e} exceeds 1e-10 * ||rhs||"
        )
    if np.allclose(rhs, rhs.T, rtol=0.0, atol=1e-14 * max(rhs_norm, 1.0)):
        x = symmetrize(x)
    return x

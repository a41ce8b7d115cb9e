"""Independent brute-force oracles used for cross-checking the solver.

These deliberately avoid the code paths they validate: the Gramian
integral is done by composite Simpson quadrature instead of a block
exponential, and the flows are integrated with classical RK4.
"""

from __future__ import annotations

import numpy as np

from .linalg import expm, symmetrize

__all__ = [
    "simpson_gramian",
    "rk4_quadratic_decay",
    "rk4_scalar_riccati",
]


def simpson_gramian(a: np.ndarray, q: np.ndarray, t: float, panels: int = 10_000) -> np.ndarray:
    """Composite-Simpson approximation of int_0^t e^{s a} q e^{s a^T} ds.

    The integrand is sampled on 2*panels + 1 equispaced points; successive
    exponentials are built incrementally from one half-step propagator.
    """
    if panels < 1:
        raise ValueError("panels must be positive")
    m = 2 * panels
    ds = t / m
    e_half = expm(a, ds)
    weights = np.ones(m + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    acc = np.zeros_like(np.asarray(q, dtype=float))
    e_s = np.eye(a.shape[0])
    for k in range(m + 1):
        acc += weights[k] * (e_s @ q @ e_s.T)
        if k < m:
            e_s = e_half @ e_s
    return symmetrize(acc * (ds / 3.0))


def rk4_quadratic_decay(p0: np.ndarray, ell: np.ndarray, t: float, steps: int = 10_000) -> np.ndarray:
    """RK4 integration of P' = -P (ell ell^T) P from P(0) = p0."""
    tau = t / steps

    def rhs(p):
        w = p @ ell
        return -np.outer(w, w)

    p = np.asarray(p0, dtype=float).copy()
    for _ in range(steps):
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * tau * k1)
        k3 = rhs(p + 0.5 * tau * k2)
        k4 = rhs(p + tau * k3)
        p = symmetrize(p + (tau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    return p


def rk4_scalar_riccati(a: float, q: float, s: float, p0: float, t: float, steps: int = 100_000) -> float:
    """RK4 integration of p' = 2 a p + q - s p^2."""
    tau = t / steps

    def rhs(p):
        return 2.0 * a * p + q - s * p * p

    p = float(p0)
    for _ in range(steps):
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * tau * k1)
        k3 = rhs(p + 0.5 * tau * k2)
        k4 = rhs(p + tau * k3)
        p += (tau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return p

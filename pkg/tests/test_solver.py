"""Unit tests for the Lie splitting solver and its companions."""

import math

import numpy as np
import pytest

from dresplit import fem, oracles, solver
from dresplit.linalg import DimensionError
from dresplit.solver import (
    SpectralStepper,
    Trajectory,
    nonlinear_flow,
    rk4_reference,
    regularized_initial,
    scalar_riccati_closed_form,
    solve,
    solve_transformed,
    transformed_nonlinear_flow,
)


def _random_psd(rng, n):
    b = rng.standard_normal((n, n))
    return b @ b.T


def test_nonlinear_flow_matches_rk4_oracle():
    rng = np.random.default_rng(21)
    for _ in range(5):
        p0 = _random_psd(rng, 5)
        ell = rng.standard_normal(5)
        got = nonlinear_flow(p0, ell, 0.7)
        ref = oracles.rk4_quadratic_decay(p0, ell, 0.7, steps=10_000)
        assert np.linalg.norm(got - ref) <= 1e-9 * np.linalg.norm(ref)


def test_nonlinear_flow_basic_properties():
    rng = np.random.default_rng(22)
    p0 = _random_psd(rng, 4)
    ell = rng.standard_normal(4)
    assert np.allclose(nonlinear_flow(p0, ell, 0.0), p0)
    p1 = nonlinear_flow(p0, ell, 1.0)
    assert np.array_equal(p1, p1.T)
    # flow only removes energy along ell: P(t) <= P(0) in the PSD order
    assert np.linalg.eigvalsh(p0 - p1).min() >= -1e-12
    assert np.linalg.eigvalsh(p1).min() >= -1e-12
    # semigroup property of the exact flow
    p_ab = nonlinear_flow(nonlinear_flow(p0, ell, 0.3), ell, 0.4)
    assert np.allclose(p_ab, nonlinear_flow(p0, ell, 0.7), atol=1e-12)


def test_nonlinear_flow_validation():
    with pytest.raises(ValueError):
        nonlinear_flow(np.eye(2), np.ones(2), -0.1)
    with pytest.raises(DimensionError):
        nonlinear_flow(np.eye(2), np.ones(3), 0.1)


def test_transformed_nonlinear_flow_is_time_rescaling():
    rng = np.random.default_rng(23)
    p0 = _random_psd(rng, 3)
    ell = rng.standard_normal(3)
    lam, t = 0.8, 0.4
    t_eff = math.expm1(2 * lam * t) / (2 * lam)
    assert np.allclose(
        transformed_nonlinear_flow(p0, ell, lam, t), nonlinear_flow(p0, ell, t_eff)
    )
    with pytest.raises(ValueError):
        transformed_nonlinear_flow(p0, ell, 0.0, t)


def test_solve_against_rk4_reference():
    pr = fem.build_problem(4)
    ref = rk4_reference(pr, 2048)
    errs = []
    for nt in (16, 32):
        traj = solve(pr, nt)
        errs.append(np.linalg.norm(traj.final - ref.final))
    assert 1.7 <= errs[0] / errs[1] <= 2.3  # first order in tau


def test_rk4_blowup_guard():
    pr = fem.build_problem(8)  # stiffness scale ~24 nx^2 needs tiny RK4 steps
    with pytest.raises(RuntimeError, match="blow-up"):
        rk4_reference(pr, 64)


def test_trajectory_bookkeeping():
    pr = fem.build_problem(2)
    traj = solve(pr, 8, stride=2)
    assert traj.nt == 8 and traj.stride == 2
    assert list(traj.steps) == [0, 2, 4, 6, 8]
    assert traj.horizon == pytest.approx(1.0)
    assert np.allclose(traj.kernel_at(0), pr.initial_kernel())
    assert np.array_equal(traj.final, traj.kernel_at(8))
    with pytest.raises(IndexError):
        traj.kernel_at(3)
    with pytest.raises(ValueError):
        Trajectory(tau=0.1, nt=8, kernels=[np.eye(2)], stride=3)


def test_spectral_stepper_matches_lie_iteration():
    pr = fem.build_problem(4, lambda_shift=0.3)
    stepper = SpectralStepper(pr)
    reference = {n: p for n, p in solver.iterate_lie(pr, 12)}
    for n, ptilde in stepper.iterate(12):
        p = stepper.to_nodal(ptilde)
        assert np.allclose(p, reference[n], atol=1e-11)
        assert np.allclose(stepper.from_nodal(p), ptilde, atol=1e-11)


def test_transformed_solve_back_maps_to_direct():
    # The change of variables targets the same solution as the plain scheme
    # on the unshifted problem, so the two first-order approximations differ
    # by O(tau).
    plain_pr = fem.build_problem(4, lambda_shift=0.0)
    shifted_pr = fem.build_problem(4, lambda_shift=1.0)

    def gap(nt):
        direct = solve(plain_pr, nt).final
        back = solve_transformed(shifted_pr, nt).final
        return np.linalg.norm(direct - back)

    assert 1.6 <= gap(64) / gap(128) <= 2.5
    traj = solve_transformed(shifted_pr, 64)
    plain = traj.back_mapped()
    assert plain.transformed is False
    assert np.allclose(plain.final, traj.final)


def test_regularized_initial_round_trip():
    pr = fem.build_problem(4, lambda_shift=1.0)
    p0 = pr.initial_kernel()
    rebuilt = regularized_initial(pr)
    assert np.linalg.norm(rebuilt - p0) <= 1e-10 * np.linalg.norm(p0)
    with pytest.raises(ValueError):
        regularized_initial(fem.build_problem(4, lambda_shift=0.0))


def test_scalar_riccati_closed_form_against_rk4():
    for a, q, s, p0 in [(-1.0, 1.0, 1.0, 0.0), (0.5, 2.0, 0.5, 1.0), (0.0, 0.3, 2.0, 0.2)]:
        exact = scalar_riccati_closed_form(a, q, s, p0, 1.0)
        approx = oracles.rk4_scalar_riccati(a, q, s, p0, 1.0, steps=20_000)
        assert exact == pytest.approx(approx, rel=1e-10)


def test_scalar_riccati_equilibrium_is_fixed():
    # p* solves 2 a p + q - s p^2 = 0, so the flow must hold it for all t.
    a, q, s = -1.0, 2.0, 0.5
    p_star = (a + math.sqrt(a * a + q * s)) / s
    for t in (0.1, 1.0, 10.0):
        assert scalar_riccati_closed_form(a, q, s, p_star, t) == pytest.approx(p_star, rel=1e-12)


def test_solver_input_validation():
    pr = fem.build_problem(2)
    with pytest.raises(ValueError):
        solve(pr, 0)
    with pytest.raises(ValueError):
        rk4_reference(pr, 0)
    with pytest.raises(ValueError):
        solve_transformed(pr, 8)  # shift is zero

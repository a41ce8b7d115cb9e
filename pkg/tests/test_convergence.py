"""Unit tests for injection, error measurement, and the ladder study."""

import math

import numpy as np
import pytest

from dresplit import convergence, fem, solver
from dresplit.convergence import (
    build_injection,
    err_tau_h,
    extend_kernel,
    observed_order,
    operator_norm_L2,
    run_study,
)


def test_injection_identity_and_partition_of_unity():
    inj = build_injection(4, 4)
    assert np.allclose(inj.matrix, np.eye(16))
    inj = build_injection(4, 8)
    assert inj.matrix.shape == (64, 16)
    # nodal interpolation preserves constants
    assert np.allclose(inj.matrix @ np.ones(16), np.ones(64))


def test_injection_reproduces_coarse_functions_exactly():
    # A coarse P1 function evaluated at fine nodes must equal its injected
    # coefficient vector: check against direct evaluation of the coarse
    # interpolant along a fine grid line through cell interiors.
    coarse, fine = 2, 8
    inj = build_injection(coarse, fine)
    rng = np.random.default_rng(4)
    c = rng.standard_normal(coarse * coarse)
    f = inj.matrix @ c
    mesh_f = fem.build_mesh(fine)
    # sample a point on the diagonal of the first coarse cell: x = y there,
    # so the interpolant is c00 (1 - t) + c11 t with t the cell fraction.
    for k in range(1, 4):
        node = k * fine // 8 * fine + k  # fine node (k/8, k/8) for fine=8
        x = mesh_f.nodes[node]
        t = x[0] / 0.5
        want = c[0] * (1 - t) + c[3] * t  # coarse nodes (0,0) and (1,1)
        assert f[node] == pytest.approx(want, abs=1e-14)


def test_injection_requires_nested_grids():
    with pytest.raises(ValueError):
        build_injection(4, 6)
    with pytest.raises(ValueError):
        build_injection(8, 4)


def test_extension_preserves_operator_norm():
    pr_c = fem.build_problem(2)
    pr_f = fem.build_problem(8)
    inj = build_injection(2, 8)
    rng = np.random.default_rng(6)
    b = rng.standard_normal((4, 4))
    p = b @ b.T
    n_c = operator_norm_L2(p, pr_c.mass_chol)
    n_f = operator_norm_L2(extend_kernel(p, inj), pr_f.mass_chol)
    assert n_f == pytest.approx(n_c, rel=1e-12)


def test_operator_norm_matches_generalized_eigenvalues():
    # ||P||_{L(L2)} equals the spectral radius of P M (similar to L^T P L).
    pr = fem.build_problem(4)
    rng = np.random.default_rng(8)
    b = rng.standard_normal((16, 16))
    p = 0.5 * (b + b.T)
    want = float(np.abs(np.linalg.eigvals(p @ pr.mass)).max())
    assert operator_norm_L2(p, pr.mass_chol) == pytest.approx(want, rel=1e-10)


def test_err_tau_h_zero_for_identical_trajectories():
    pr = fem.build_problem(2)
    traj = solver.solve(pr, 4)
    inj = build_injection(2, 2)
    assert err_tau_h(traj, traj, inj, inj, pr.mass_chol) == 0.0


def test_err_tau_h_subsamples_reference():
    pr = fem.build_problem(2)
    coarse = solver.solve(pr, 4)
    ref = solver.solve(pr, 16)
    inj = build_injection(2, 2)
    err = err_tau_h(coarse, ref, inj, inj, pr.mass_chol)
    assert 0 < err < 1
    with pytest.raises(ValueError):
        err_tau_h(ref, coarse, inj, inj, pr.mass_chol)  # ref must be finer


def test_observed_order_recovers_synthetic_slope():
    taus = [0.1, 0.05, 0.025, 0.0125]
    pairs = [(t, 3.0 * t**1.5) for t in taus]
    assert observed_order(pairs) == pytest.approx(1.5, rel=1e-12)
    with pytest.warns(UserWarning):
        assert observed_order([(0.1, 1.0), (0.05, 0.5), (0.025, 0.0)]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        observed_order([(0.1, 1.0)])


def test_run_study_temporal_smoke():
    report = run_study([4], [4, 8, 16, 32], ref_nx=4, ref_nt=256)
    errs = [e.err for e in sorted(report.entries, key=lambda e: e.nt)]
    assert all(a > b for a, b in zip(errs, errs[1:]))  # monotone in tau
    assert 0.8 <= report.temporal_orders[4] <= 1.2
    assert report.metadata["ref_nx"] == 4 and report.metadata["ref_nt"] == 256


def test_run_study_self_reference_is_exact_zero():
    report = run_study([4], [8], ref_nx=4, ref_nt=8)
    assert len(report.entries) == 1
    assert report.entries[0].err == 0.0


def test_run_study_coupled_spatial_smoke():
    report = run_study([2, 4], coupling="tau-h2", ref_nx=8, zeta="constant")
    by_nx = {e.nx: e for e in report.entries}
    assert by_nx[2].nt == 4 and by_nx[4].nt == 16  # nt = T nx^2
    assert by_nx[2].err > by_nx[4].err
    assert 1.5 <= report.spatial_orders["tau-h2"] <= 2.6


def test_run_study_keeps_trajectories_on_request():
    report = run_study([2], [2, 4], ref_nx=2, ref_nt=8, keep_trajectories=True)
    assert set(report.trajectories) == {(2, 2), (2, 4)}
    assert not run_study([2], [2], ref_nx=2, ref_nt=8).trajectories


def test_run_study_validation():
    with pytest.raises(ValueError):
        run_study([4], coupling="bogus")
    with pytest.raises(ValueError):
        run_study([4])  # nt ladder missing without coupling
    with pytest.raises(ValueError):
        run_study([8], [4], ref_nx=4)  # reference coarser than a run
    with pytest.raises(ValueError):
        run_study([4], [16], ref_nx=4, ref_nt=8)  # ref_nt coarser than run

"""Convergence measurement on ladders of space/time grids.

Runs on coarse grids are compared against a designated reference run after
exact nodal injection into the reference (finest) P1 space. Errors are
relative sup-in-time L2-operator norms; observed orders are least-squares
slopes in log-log coordinates, with points inside the stagnation plateau
discarded before fitting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fem, solver
from .linalg import DimensionError, spectral_norm

__all__ = [
    "InjectionOperator",
    "StudyEntry",
    "ConvergenceReport",
    "build_injection",
    "extend_kernel",
    "operator_norm_L2",
    "err_tau_h",
    "observed_order",
    "run_study",
]

# Ladder points with error within this factor of the run's plateau
# (its minimum error) are excluded from order fits.
PLATEAU_FACTOR = 3.0


@dataclass(frozen=True)
class InjectionOperator:
    """Nodal interpolation from a coarse periodic P1 space into a nested fine one."""

    coarse_nx: int
    fine_nx: int
    matrix: np.ndarray  # (fine_nx^2, coarse_nx^2)


def build_injection(coarse_nx: int, fine_nx: int) -> InjectionOperator:
    """Exact embedding between nested periodic P1 spaces.

    fine_nx must be a power-of-two multiple of coarse_nx; the injection is
    then plain nodal evaluation of the coarse basis at the fine nodes.
    """
    if fine_nx < coarse_nx or fine_nx % coarse_nx != 0:
        raise ValueError(f"grids not nested: coarse {coarse_nx}, fine {fine_nx}")
    ratio = fine_nx // coarse_nx
    if ratio & (ratio - 1) != 0:
        raise ValueError(f"fine/coarse ratio {ratio} is not a power of two")
    nc, nf = coarse_nx * coarse_nx, fine_nx * fine_nx
    j = np.zeros((nf, nc))
    for jj in range(fine_nx):
        for ii in range(fine_nx):
            fine_idx = jj * fine_nx + ii
            # position in coarse cell units
            xs, ys = ii / ratio, jj / ratio
            i0, j0 = int(math.floor(xs)), int(math.floor(ys))
            fx, fy = xs - i0, ys - j0
            i1, j1 = (i0 + 1) % coarse_nx, (j0 + 1) % coarse_nx
            g00 = j0 * coarse_nx + i0
            g10 = j0 * coarse_nx + i1
            g01 = j1 * coarse_nx + i0
            g11 = j1 * coarse_nx + i1
            if fy <= fx:  # lower triangle (v00, v10, v11)
                j[fine_idx, g00] += 1.0 - fx
                j[fine_idx, g10] += fx - fy
                j[fine_idx, g11] += fy
            else:  # upper triangle (v00, v11, v01)
                j[fine_idx, g00] += 1.0 - fy
                j[fine_idx, g11] += fx
                j[fine_idx, g01] += fy - fx
    return InjectionOperator(coarse_nx=coarse_nx, fine_nx=fine_nx, matrix=j)


def extend_kernel(p: np.ndarray, inj: InjectionOperator) -> np.ndarray:
    """Fine-space kernel J P J^T of the operator extended by injection."""
    j = inj.matrix
    if p.shape[0] != j.shape[1]:
        raise DimensionError(f"kernel dim {p.shape[0]} != coarse dim {j.shape[1]}")
    return j @ p @ j.T


def operator_norm_L2(p: np.ndarray, mass_chol: np.ndarray) -> float:
    """L2(Omega)-operator norm of a kernel: ||L^T P L|| with M = L L^T."""
    if p.shape[0] != mass_chol.shape[0]:
        raise DimensionError(
            f"kernel dim {p.shape[0]} != mass dim {mass_chol.shape[0]}"
        )
    return spectral_norm(mass_chol.T @ p @ mass_chol)


def err_tau_h(
    traj: solver.Trajectory,
    ref_traj: solver.Trajectory,
    inj_traj: InjectionOperator,
    inj_ref: InjectionOperator,
    mass_chol: np.ndarray,
) -> float:
    """Relative sup-in-time operator-norm error of ``traj`` against ``ref_traj``.

    Both trajectories are injected into a common fine space; the reference
    is subsampled onto the coarse time grid, and the max runs over the
    coarse steps n = 1..nt.
    """
    if not math.isclose(traj.horizon, ref_traj.horizon, rel_tol=1e-12):
        raise ValueError("trajectories span different horizons")
    if ref_traj.nt % traj.nt != 0:
        raise ValueError("reference time grid does not refine the compared grid")
    ratio = ref_traj.nt // traj.nt
    num = den = 0.0
    for n in traj.steps:
        if n == 0:
            continue
        ext = extend_kernel(traj.kernel_at(n), inj_traj)
        ext_ref = extend_kernel(ref_traj.kernel_at(n * ratio), inj_ref)
        num = max(num, operator_norm_L2(ext - ext_ref, mass_chol))
        den = max(den, operator_norm_L2(ext_ref, mass_chol))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def observed_order(pairs) -> float:
    """Least-squares slope of log(err) against log(step)."""
    pairs = [(float(s), float(e)) for s, e in pairs]
    kept = [(s, e) for s, e in pairs if e > 0]
    if len(kept) < len(pairs):
        warnings.warn("dropping non-positive errors from the order fit", stacklevel=2)
    if len(kept) < 2:
        raise ValueError("need at least two positive (step, err) pairs")
    steps = np.log([s for s, _ in kept])
    errs = np.log([e for _, e in kept])
    return float(np.polyfit(steps, errs, 1)[0])


def _prefit_filter(pairs):
    """Drop points inside the stagnation plateau (within 3x of the minimum)."""
    errs = [e for _, e in pairs if e > 0]
    if not errs:
        return pairs
    plateau = min(errs)
    kept = [(s, e) for s, e in pairs if e > PLATEAU_FACTOR * plateau]
    return kept if len(kept) >= 2 else pairs


@dataclass(frozen=True)
class StudyEntry:
    nx: int
    h: float
    nt: int
    tau: float
    err: float


@dataclass
class ConvergenceReport:
    entries: list[StudyEntry]
    temporal_orders: dict[int, float]
    spatial_orders: dict[str, float]
    plateaus: dict[int, float]  # per nx: ratio of the two finest-tau errors
    metadata: dict
    trajectories: dict = field(default_factory=dict, repr=False)


def _stream_errors(runs, ref_problem, ref_nt: int):
    """Relative errors of several runs against one streamed reference solve.

    ``runs`` is a list of (trajectory, injection-into-reference-space). The
    reference is advanced once in the eigenbasis of its generator, where a
    step is O(N^2) and the operator norm is the plain spectral norm; kernels
    are compared (and then dropped) at exactly the time points needed by
    each run, so only one reference kernel is ever held in memory.
    """
    stepper = solver.SpectralStepper(ref_problem)
    # Composite maps: inject into the reference space, then change basis.
    maps = [stepper.congruence @ inj.matrix for _, inj in runs]
    needed: dict[int, list[tuple[int, int]]] = {}
    for idx, (traj, _) in enumerate(runs):
        if ref_nt % traj.nt != 0:
            raise ValueError(
                f"reference nt {ref_nt} is not a multiple of run nt {traj.nt}"
            )
        ratio = ref_nt // traj.nt
        for n in traj.steps:
            if n > 0:
                needed.setdefault(n * ratio, []).append((idx, n))
    num = [0.0] * len(runs)
    den = [0.0] * len(runs)
    for m, pref in stepper.iterate(ref_nt):
        if m == 0 or m not in needed:
            continue
        norm_ref = spectral_norm(pref)
        for idx, n in needed[m]:
            traj, _ = runs[idx]
            g = maps[idx]
            diff = g @ traj.kernel_at(n) @ g.T - pref
            num[idx] = max(num[idx], spectral_norm(0.5 * (diff + diff.T)))
            den[idx] = max(den[idx], norm_ref)
    out = []
    for nu, de in zip(num, den):
        if de == 0.0:
            out.append(0.0 if nu == 0.0 else math.inf)
        else:
            out.append(nu / de)
    return out


def run_study(
    nx_ladder,
    nt_ladder=None,
    *,
    ref_nx: int | None = None,
    ref_nt: int | None = None,
    horizon: float = 1.0,
    lambda_shift: float = 0.0,
    xi="default-xi",
    zeta="default-zeta",
    xi_amplitude: float = 1.0,
    zeta_amplitude: float = 1.0,
    coupling: str | None = None,
    keep_trajectories: bool = False,
) -> ConvergenceReport:
    """Run the full ladder-of-grids error study.

    With ``coupling="tau-h2"`` each nx gets nt = horizon * nx^2 and the
    spatial order is fitted against h. Otherwise every (nx, nt) pair of the
    two ladders is run, and temporal orders are fitted per nx against the
    same-nx run with the reference step count (isolating the time error).
    All reported errors are measured against the (ref_nx, ref_nt) run.
    """
    nx_ladder = sorted(set(int(v) for v in nx_ladder))
    if coupling not in (None, "none", "tau-h2"):
        raise ValueError(f"unknown coupling {coupling!r}")
    coupled = coupling == "tau-h2"

    def coupled_nt(nx):
        nt = round(horizon * nx * nx)
        return max(nt, 1)

    if coupled:
        pairs = [(nx, coupled_nt(nx)) for nx in nx_ladder]
    else:
        if not nt_ladder:
            raise ValueError("nt_ladder is required unless coupling is tau-h2")
        nt_ladder = sorted(set(int(v) for v in nt_ladder))
        pairs = [(nx, nt) for nx in nx_ladder for nt in nt_ladder]

    ref_nx = int(ref_nx) if ref_nx is not None else max(nx for nx, _ in pairs)
    if ref_nt is not None:
        ref_nt = int(ref_nt)
    elif coupled:
        ref_nt = coupled_nt(ref_nx)
    else:
        ref_nt = max(nt for _, nt in pairs)
    for nx, nt in pairs:
        if nx > ref_nx or nt > ref_nt:
            raise ValueError(
                f"reference ({ref_nx}, {ref_nt}) is coarser than run ({nx}, {nt})"
            )

    def make_problem(nx):
        return fem.build_problem(
            nx,
            xi=xi,
            zeta=zeta,
            lambda_shift=lambda_shift,
            horizon=horizon,
            xi_amplitude=xi_amplitude,
            zeta_amplitude=zeta_amplitude,
        )

    problems = {nx: make_problem(nx) for nx in {nx for nx, _ in pairs} | {ref_nx}}
    injections = {nx: build_injection(nx, ref_nx) for nx in problems}

    trajectories = {}
    for nx, nt in pairs:
        trajectories[(nx, nt)] = solver.solve(problems[nx], nt)

    # A run with the reference configuration is the reference: its error is
    # zero by definition and needs no comparison pass.
    compared = [(nx, nt) for nx, nt in pairs if (nx, nt) != (ref_nx, ref_nt)]
    runs = [(trajectories[(nx, nt)], injections[nx]) for nx, nt in compared]
    streamed = _stream_errors(runs, problems[ref_nx], ref_nt) if runs else []
    by_pair = dict(zip(compared, streamed))
    errors = [by_pair.get((nx, nt), 0.0) for nx, nt in pairs]

    entries = [
        StudyEntry(nx=nx, h=1.0 / nx, nt=nt, tau=horizon / nt, err=err)
        for (nx, nt), err in zip(pairs, errors)
    ]

    by_nx: dict[int, list[StudyEntry]] = {}
    for e in entries:
        by_nx.setdefault(e.nx, []).append(e)

    # Temporal orders: per nx, errors against the same-nx finest-nt run so
    # the spatial error cancels. Reuse the global errors when the reference
    # already lives on that grid.
    temporal_orders: dict[int, float] = {}
    for nx, group in by_nx.items():
        if len(group) < 2:
            continue
        if nx == ref_nx:
            fit_pairs = [(e.tau, e.err) for e in group]
        else:
            same_runs = [(trajectories[(e.nx, e.nt)], build_injection(nx, nx)) for e in group]
            same_errors = _stream_errors(same_runs, problems[nx], ref_nt)
            fit_pairs = [(e.tau, err) for e, err in zip(group, same_errors)]
        fit_pairs = _prefit_filter(sorted(fit_pairs, reverse=True))
        positive = [p for p in fit_pairs if p[1] > 0]
        if len(positive) >= 2:
            temporal_orders[nx] = observed_order(positive)

    spatial_orders: dict[str, float] = {}
    if coupled:
        # A run that coincides with the reference only measures rounding
        # noise, so it is excluded from the fit.
        fit_pairs = [
            (e.h, e.err)
            for e in entries
            if e.err > 0 and (e.nx, e.nt) != (ref_nx, ref_nt)
        ]
        if len(fit_pairs) >= 2:
            spatial_orders["tau-h2"] = observed_order(fit_pairs)

    plateaus: dict[int, float] = {}
    for nx, group in by_nx.items():
        group = sorted(group, key=lambda e: e.nt)
        if len(group) >= 2 and group[-2].err > 0:
            plateaus[nx] = group[-1].err / group[-2].err

    metadata = {
        "horizon": horizon,
        "lambda": lambda_shift,
        "xi": xi if isinstance(xi, str) else "<callable>",
        "zeta": zeta if isinstance(zeta, str) else "<callable>",
        "xi_amplitude": xi_amplitude,
        "zeta_amplitude": zeta_amplitude,
        "coupling": "tau-h2" if coupled else "none",
        "ref_nx": ref_nx,
        "ref_nt": ref_nt,
    }
    return ConvergenceReport(
        entries=entries,
        temporal_orders=temporal_orders,
        spatial_orders=spatial_orders,
        plateaus=plateaus,
        metadata=metadata,
        trajectories=trajectories if keep_trajectories else {},
    )

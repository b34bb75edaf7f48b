"""
Steady state of the master equation and equal-time observables.

The steady state is the normalized null vector of the Liouvillian. It is found
by replacing the vacuum-population equation with the trace constraint and
solving the resulting nonsingular system with a sparse LU factorization. Only
the stationary coherence sector of the generator is factorized (see
:func:`twomode_om.model.stationary_sector`); the residual is still checked
against the full superoperator.

Under weak driving the density-matrix elements span many decades
(rho_ij ~ (Omega/kappa)^(n_i + n_j) with n the photon number), and a plain LU
solve loses the two-photon populations in rounding noise. The system is
therefore solved in the rescaled unknowns y = C^-1 vec(rho) with
C = diag(eps^(n_i + n_j)), eps = Omega/kappa, followed by two steps of
iterative refinement.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateSteadyStateError, SolverError, TwoModeError, UndefinedCorrelationError
from .fock import DensityMatrix, QOperator, expectation, identity
from .model import Liouvillian, SystemParams, liouvillian, mode_operator, unvec, vec

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
TRUNCATION_THRESHOLD = 1e-8
DENOMINATOR_FLOOR = 1e-300
OCCUPATION_FLOOR = 1e-9  # in units of n0; below this an occupation is roundoff from interference
REFINEMENT_STEPS = 2
PIVOT_TOL = 1e-11  # relative LU pivot below which the constrained system is treated as singular
EIG_SHIFT = 1e-7  # shift-invert target, relative to ||L||_1, kept off the exact null eigenvalue


@dataclass(frozen=True)
class SteadyObservables:
    """Equal-time steady-state quantities at one detuning.

    Occupations are absolute (not divided by n0). Undefined correlations are
    NaN with a matching entry in ``flags``.
    """

    delta: float
    n_a: float
    n_s: float
    n_R: float
    g2_aa_0: float
    g2_ss_0: float
    g2_RR_0: float
    g2_tot_0: float
    trunc_tail: float = 0.0
    residual: float = 0.0
    flags: tuple[str, ...] = field(default=())

    @property
    def trusted(self) -> bool:
        return not self.flags

    def normalized(self, n0: float) -> dict:
        return {
            "n_a_over_n0": self.n_a / n0,
            "n_s_over_n0": self.n_s / n0,
            "n_R_over_n0": self.n_R / n0,
        }


def _photon_scaling(L: Liouvillian, eps: float) -> np.ndarray:
    photons = L.space.occupation_table[:, :2].sum(axis=1)
    exponent = vec(photons[:, None] + photons[None, :])
    return eps ** exponent.astype(float)


def _lu_solve(L: Liouvillian, eps: float) -> np.ndarray:
    n = L.dim
    idx, block = L.sector_block()
    scale = _photon_scaling(L, eps)[idx]
    keep = np.ones(idx.size)
    # idx[0] = 0 is d/dt of the |000><000| population; swap it for the trace constraint
    keep[0] = 0.0
    A = sp.diags(keep / scale) @ block @ sp.diags(scale)
    diag_pos = np.searchsorted(idx, np.arange(n) * (n + 1))
    constraint = sp.csr_matrix((scale[diag_pos], (np.zeros(n, dtype=int), diag_pos)), shape=A.shape)
    A = (A + constraint).tocsc()
    rhs = np.zeros(idx.size, dtype=complex)
    rhs[0] = 1.0
    lu = spla.splu(A)
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() < PIVOT_TOL * pivots.max():
        raise RuntimeError(f"near-singular constrained system (pivot ratio {pivots.min() / pivots.max():.1e})")
    y = lu.solve(rhs)
    for _ in range(REFINEMENT_STEPS):
        y = y + lu.solve(rhs - A @ y)
    x = np.zeros(n * n, dtype=complex)
    x[idx] = scale * y
    return x


def _eig_solve(L: Liouvillian) -> np.ndarray:
    idx, block = L.sector_block()
    scale = L.norm1()
    vals, vecs = spla.eigs(block.tocsc(), k=2, sigma=EIG_SHIFT * scale, which="LM")
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    if abs(vals[1]) <= 1e-9 * scale:
        raise DegenerateSteadyStateError(
            f"Liouvillian has at least two null eigenvalues ({vals[0]:.2e}, {vals[1]:.2e})"
        )
    x = np.zeros(L.dim**2, dtype=complex)
    x[idx] = vecs[:, 0]
    return x


def _finish(L: Liouvillian, x: np.ndarray) -> tuple[np.ndarray, float]:
    n = L.dim
    rho = unvec(x, n)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho)
    if not np.isfinite(tr) or abs(tr) == 0:
        raise SolverError("steady-state solution has zero or non-finite trace", residual=np.inf)
    rho = rho / tr
    residual = float(np.linalg.norm(L.superop @ vec(rho)))
    return rho, residual


def steady_state(L: Liouvillian, *, check: bool = True) -> DensityMatrix:
    """Unique steady state rho with L(rho) = 0.

    Raises :class:`DegenerateSteadyStateError` when the null space is not
    one-dimensional and :class:`SolverError` (with ``.residual``) when the
    solution misses the residual or positivity requirements.
    """
    params = L.params
    space = L.space
    if params is not None and params.omega == 0 and params.n_th == 0:
        vac = space.projector(0, 0, 0)
        return vac

    eps = 1.0
    if params is not None and params.omega > 0:
        eps = min(params.omega / params.kappa, 1.0)

    bound = RESIDUAL_TOL * L.norm1()
    rho = None
    residual = np.inf
    try:
        x = _lu_solve(L, eps)
        if np.all(np.isfinite(x)):
            rho, residual = _finish(L, x)
    except RuntimeError as exc:  # splu "Factor is exactly singular" or a tiny pivot
        log.debug("sparse LU failed (%s); falling back to eigen-solver", exc)

    if rho is None or residual > bound:
        x = _eig_solve(L)
        rho, residual = _finish(L, x)
    if residual > bound:
        raise SolverError(f"steady-state residual {residual:.3e} exceeds {bound:.3e}", residual=residual)

    state = DensityMatrix(space, rho)
    if check:
        problems = state.violations()
        if problems:
            raise SolverError("steady state violates density-matrix invariants: " + "; ".join(problems),
                              residual=residual)
    return state


def steady_residual(L: Liouvillian, rho: DensityMatrix) -> float:
    return float(np.linalg.norm(L.superop @ vec(rho.matrix)))


def truncation_tail(rho: DensityMatrix) -> float:
    """Largest population of any mode's top Fock level."""
    return max(float(rho.mode_distribution(m)[-1]) for m in ("a", "s", "b"))


def _g2(rho: DensityMatrix, c: QOperator, name: str, flags: list, strict: bool,
        floor: float) -> tuple[float, float]:
    cd = c.dag()
    n = expectation(cd @ c, rho).real
    if abs(n) < floor:
        if strict:
            raise UndefinedCorrelationError(f"<{name}^dag {name}> vanishes; g2 undefined")
        flags.append(f"undefined_g2_{name}")
        return n, float("nan")
    return n, expectation(cd @ cd @ c @ c, rho).real / n**2


def observables(rho: DensityMatrix, params: SystemParams, *, strict: bool = True,
                trunc_threshold: float = TRUNCATION_THRESHOLD, residual: float = 0.0) -> SteadyObservables:
    """Mean occupations and normalized equal-time correlations of ``rho``.

    With ``strict=False`` vanishing denominators give NaN plus a flag instead
    of :class:`UndefinedCorrelationError`.
    """
    space = rho.space
    flags: list[str] = []
    c_a = mode_operator(params, space, "a")
    c_s = mode_operator(params, space, "s")
    c_R = mode_operator(params, space, "R")
    floor = max(DENOMINATOR_FLOOR, OCCUPATION_FLOOR * params.n0)
    n_a, g2_aa = _g2(rho, c_a, "a", flags, strict, floor)
    n_s, g2_ss = _g2(rho, c_s, "s", flags, strict, floor)
    n_R, g2_RR = _g2(rho, c_R, "R", flags, strict, floor)

    n_tot = c_a.dag() @ c_a + c_s.dag() @ c_s
    mean_tot = expectation(n_tot, rho).real
    if abs(mean_tot) < floor:
        if strict:
            raise UndefinedCorrelationError("<n_tot> vanishes; g2_tot undefined")
        flags.append("undefined_g2_tot")
        g2_tot = float("nan")
    else:
        pairs = n_tot @ (n_tot - identity(space))
        g2_tot = expectation(pairs, rho).real / mean_tot**2

    tail = truncation_tail(rho)
    if tail > trunc_threshold:
        flags.append("truncation")
    return SteadyObservables(
        delta=params.delta, n_a=n_a, n_s=n_s, n_R=n_R,
        g2_aa_0=g2_aa, g2_ss_0=g2_ss, g2_RR_0=g2_RR, g2_tot_0=g2_tot,
        trunc_tail=tail, residual=residual, flags=tuple(flags),
    )


def solve(params: SystemParams, *, strict: bool = True) -> tuple[DensityMatrix, SteadyObservables]:
    """Build the Liouvillian, solve for the steady state and evaluate observables."""
    L = liouvillian(params)
    rho = steady_state(L)
    obs = observables(rho, params, strict=strict, residual=steady_residual(L, rho))
    return rho, obs


def _nan_row(delta: float, flag: str) -> SteadyObservables:
    nan = float("nan")
    return SteadyObservables(delta, nan, nan, nan, nan, nan, nan, nan, nan, nan, (flag,))


def sweep_point(params: SystemParams) -> SteadyObservables:
    try:
        return solve(params, strict=False)[1]
    except TwoModeError as exc:
        log.warning("sweep point delta=%g failed: %s", params.delta, exc)
        return _nan_row(params.delta, "solver_failure")


def sweep(params: SystemParams, delta_grid: Sequence[float], *, workers: int = 1) -> list[SteadyObservables]:
    """Steady observables at each detuning of ``delta_grid`` (in units of kappa).

    Rows come back in grid order. A failing point yields a NaN row flagged
    ``solver_failure``; the sweep itself never aborts.
    """
    grid = [float(d) for d in delta_grid]
    if not grid:
        raise ValueError("delta_grid is empty")
    points = [replace(params, delta=d) for d in grid]
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(sweep_point, points, chunksize=max(1, len(points) // (4 * workers))))
    return [sweep_point(p) for p in points]


def occupations_from_field(rho: DensityMatrix, params: SystemParams) -> float:
    """n_R via |<c_a> + i Omega/kappa|^2 + (<c_a^dag c_a> - |<c_a>|^2)."""
    c_a = mode_operator(params, rho.space, "a")
    mean = expectation(c_a, rho)
    n_a = expectation(c_a.dag() @ c_a, rho).real
    return abs(mean + 1j * params.omega / params.kappa) ** 2 + (n_a - abs(mean) ** 2)

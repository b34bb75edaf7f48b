"""
Two-time intensity correlations from the quantum regression theorem.

For a detection of ``c1`` followed after a delay tau by one of ``c2``::

    g2_12(tau) = tr(c2^dag c2 exp(L tau)[c1 rho c1^dag]) / (<c1^dag c1> <c2^dag c2>)

The propagated matrix is split as ``c1 rho c1^dag = n1 rho + Y`` with ``Y``
traceless. Since ``rho`` is stationary only ``Y`` needs propagating, which
makes the long-delay limit g2 -> 1 exact rather than a small difference of
large numbers. Propagation runs in photon-number scaled variables (see
:mod:`twomode_om.steady`) so the tolerance applies to the two-photon sector
that carries the signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NoDetectionError, ParameterError, UndefinedCorrelationError
from .fock import DensityMatrix, QOperator
from .model import Liouvillian, SystemParams, mode_operator, vec
from .propagate import DEFAULT_RTOL, KrylovPropagator
from .steady import DENOMINATOR_FLOOR, OCCUPATION_FLOOR, _photon_scaling

BOUND_TOL = 1e-9
LINEAR_STEP = 0.02  # in units of 1/g
LINEAR_SPAN = 20.0  # in units of 1/kappa
LOG_POINTS_PER_DECADE = 60

PAIRS = ("aa", "ss", "RR", "as", "sa", "tot")


@dataclass(frozen=True)
class BoundReport:
    """Per-point violations of the two classical (Schwarz) inequalities.

    ``bound1[k]``: g2(tau_k) > g2(0). ``bound2[k]``: |g2(tau_k) - 1| > |g2(0) - 1|.
    """

    bound1: np.ndarray
    bound2: np.ndarray

    @property
    def any_bound1(self) -> bool:
        return bool(self.bound1.any())

    @property
    def any_bound2(self) -> bool:
        return bool(self.bound2.any())


@dataclass(frozen=True)
class CorrelationSeries:
    tau_grid: np.ndarray
    values: np.ndarray
    mode_pair: tuple[str, str]
    g2_zero: float
    bound_violations: Optional[BoundReport] = None


@dataclass(frozen=True)
class ConditionalState:
    rho_c: DensityMatrix
    jump_mode: str
    norm: float


def conditional_state(rho_ss: DensityMatrix, mode: str, params: Optional[SystemParams] = None) -> ConditionalState:
    """Normalized state c rho c^dag / tr(c rho c^dag) after one detection in ``mode``."""
    c = _jump(params, rho_ss.space, mode)
    m = c.matrix
    unnorm = m @ (m @ rho_ss.matrix.conj().T).conj().T  # c rho c^dag with rho Hermitian
    norm = float(np.trace(unnorm).real)
    if norm <= DENOMINATOR_FLOOR:
        raise NoDetectionError(f"detection probability in mode {mode!r} vanishes ({norm:.3e})")
    rho_c = unnorm / norm
    rho_c = 0.5 * (rho_c + rho_c.conj().T)
    return ConditionalState(DensityMatrix(rho_ss.space, rho_c), mode, norm)


def _jump(params: Optional[SystemParams], space, label: str) -> QOperator:
    if label == "R" and params is None:
        raise ParameterError("the reflected mode needs SystemParams for its drive offset")
    if params is None:
        from .fock import annihilation
        return annihilation(space, label)
    return mode_operator(params, space, label)


def parse_pair(pair) -> tuple[str, str]:
    if isinstance(pair, str):
        if pair == "tot":
            return ("tot", "tot")
        if len(pair) != 2:
            raise ParameterError(f"mode pair must be one of {PAIRS}, got {pair!r}")
        pair = (pair[0], pair[1])
    first, second = pair
    if (first == "tot") != (second == "tot"):
        raise ParameterError("'tot' can only be paired with itself")
    for label in (first, second):
        if label not in ("a", "s", "R", "tot"):
            raise ParameterError(f"unknown mode label {label!r}")
    return (first, second)


def _jump_superop_apply(ops: Sequence[QOperator], rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho)
    for c in ops:
        m = c.matrix
        out += m @ (m @ rho.conj().T).conj().T
    return out


def _number(ops: Sequence[QOperator]) -> sp.csr_matrix:
    return sum((c.matrix.conj().T @ c.matrix for c in ops), sp.csr_matrix(ops[0].matrix.shape, dtype=complex))


def _channel(params: Optional[SystemParams], space, label: str) -> list[QOperator]:
    if label == "tot":
        return [_jump(params, space, "a"), _jump(params, space, "s")]
    return [_jump(params, space, label)]


def default_tau_grid(params: SystemParams, tau_max: Optional[float] = None) -> np.ndarray:
    """Linear grid with step 0.02/g up to 20/kappa, then logarithmic up to ``tau_max``.

    ``tau_max`` defaults to 5/gamma (or 20/kappa when gamma = 0).
    """
    kappa = params.kappa
    if tau_max is None:
        tau_max = 5.0 / params.gamma if params.gamma > 0 else LINEAR_SPAN / kappa
    if tau_max <= 0:
        raise ParameterError(f"tau_max must be positive, got {tau_max}")
    step = LINEAR_STEP / params.g if params.g > 0 else LINEAR_STEP / kappa
    lin_end = min(LINEAR_SPAN / kappa, tau_max)
    n_lin = int(math.floor(lin_end / step + 1e-9))
    lin = step * np.arange(n_lin + 1)
    if tau_max <= lin[-1] * (1 + 1e-12):
        return lin
    decades = math.log10(tau_max / lin[-1])
    n_log = max(2, int(math.ceil(decades * LOG_POINTS_PER_DECADE)) + 1)
    log = np.geomspace(lin[-1], tau_max, n_log)[1:]
    return np.concatenate([lin, log])


def classical_bounds(series: CorrelationSeries, tol: float = BOUND_TOL) -> BoundReport:
    """Flag points beyond the classical bounds g2(tau) <= g2(0) and |g2(tau)-1| <= |g2(0)-1|."""
    v = np.asarray(series.values, dtype=float)
    g0 = float(series.g2_zero)
    bound1 = v > g0 + tol
    bound2 = np.abs(v - 1.0) > abs(g0 - 1.0) + tol
    return BoundReport(bound1, bound2)


def _check_grid(tau_grid) -> np.ndarray:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise ParameterError("tau_grid must be a non-empty 1-D sequence")
    if tau[0] != 0.0:
        raise ParameterError("tau_grid must start at 0")
    if np.any(np.diff(tau) <= 0):
        raise ParameterError("tau_grid must be strictly increasing")
    return tau


def g2_tau(L: Liouvillian, rho_ss: DensityMatrix, first: str, second: str, tau_grid,
           *, rtol: float = DEFAULT_RTOL) -> CorrelationSeries:
    """Delayed correlation of detecting ``second`` a time tau after ``first``.

    Labels are ``a``, ``s``, ``R`` (reflected field) or ``tot`` for both
    optical modes together. ``g2_as`` and ``g2_sa`` are distinct orderings.
    """
    first, second = parse_pair((first, second))
    tau = _check_grid(tau_grid)
    params = L.params
    space = L.space
    n = space.total_dim
    rho = rho_ss.matrix

    ops1 = _channel(params, space, first)
    ops2 = _channel(params, space, second)
    N1 = _number(ops1)
    N2 = _number(ops2)
    n1 = float(np.real(np.sum(N1.multiply(rho.T))))
    n2 = float(np.real(np.sum(N2.multiply(rho.T))))
    floor = DENOMINATOR_FLOOR if params is None else max(DENOMINATOR_FLOOR, OCCUPATION_FLOOR * params.n0)
    for label, val in ((first, n1), (second, n2)):
        if abs(val) < floor:
            raise UndefinedCorrelationError(f"mean occupation of mode {label!r} vanishes; g2 undefined")

    X0 = _jump_superop_apply(ops1, rho)
    Y = X0 - np.trace(X0).real * rho
    # tr(N X) = vec(N^T) . vec(X) under column stacking
    functional = vec(N2.T.toarray())

    eps = 1.0
    if params is not None and params.omega > 0:
        eps = min(params.omega / params.kappa, 1.0)
    y_full = vec(Y)
    idx, block = L.sector_block()
    outside = np.delete(np.abs(y_full), idx)
    if outside.size and outside.max() > 1e-13 * max(np.abs(y_full).max(), DENOMINATOR_FLOOR):
        # rho_ss is not confined to the stationary sector; propagate everything
        idx, block = np.arange(n * n), L.superop
    scale = _photon_scaling(L, eps)[idx]
    A = sp.diags(1.0 / scale) @ block @ sp.diags(scale)
    prop = KrylovPropagator(A, rtol=rtol)
    vals, _ = prop.run(y_full[idx] / scale, tau, functionals=(functional[idx] * scale)[None, :])
    values = 1.0 + vals[:, 0].real / (n1 * n2)

    g2_zero = float(np.real(np.sum(functional * vec(X0)))) / (n1 * n2)
    series = CorrelationSeries(tau, values, (first, second), g2_zero)
    return CorrelationSeries(tau, values, (first, second), g2_zero, classical_bounds(series))


def propagate_state(L: Liouvillian, rho: DensityMatrix, tau_grid, *, rtol: float = DEFAULT_RTOL) -> list[DensityMatrix]:
    """Density matrices exp(L tau) rho at each delay (used for fixed-point checks)."""
    tau = np.asarray(tau_grid, dtype=float)
    prop = KrylovPropagator(L.superop, rtol=rtol)
    _, states = prop.run(vec(rho.matrix), tau, keep_states=True)
    n = L.dim
    return [DensityMatrix(L.space, s.reshape(n, n, order="F")) for s in states]

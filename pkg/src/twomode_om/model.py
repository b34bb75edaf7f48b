"""
Effective three-mode optomechanical model and its Lindblad generator.

All rates are in units of the optical amplitude decay rate (``kappa = 1`` by
default). Superoperators act on column-stacked density matrices::

    vec(rho) = rho.reshape(-1, order="F")
    vec(A @ rho @ B) = kron(B.T, A) @ vec(rho)

Every module that reshapes between matrices and vectors goes through
:func:`vec` / :func:`unvec` so the convention lives in one place.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, WeakDriveError
from .fock import HilbertSpace, QOperator, annihilation, identity, make_space, mode_index

WEAK_DRIVE_LIMIT = 0.1
DEFAULT_OMEGA = 0.01
THERMAL_TAIL_TARGET = 1e-8


def thermal_weight(n_th: float, n: int) -> float:
    """Bose-Einstein occupation probability N^n / (1 + N)^(n + 1)."""
    if n_th == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(n_th) - (n + 1) * math.log1p(n_th))


def default_dims(n_th: float) -> tuple[int, int, int]:
    """Fock truncation used when none is given.

    Zero temperature: ``(4, 4, 4)``. Finite temperature: two-photon optical
    cutoff ``(3, 3, D)`` with ``D`` at least ``ceil(6 N) + 4`` and large enough
    that the thermal population of the top phonon level is below
    ``THERMAL_TAIL_TARGET``.
    """
    if n_th == 0:
        return (4, 4, 4)
    d = math.ceil(6 * n_th) + 4
    while thermal_weight(n_th, d - 1) > THERMAL_TAIL_TARGET:
        d += 1
    return (3, 3, d)


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, dimensionless in units of ``kappa``.

    ``delta`` is the laser detuning from the driven mode, ``omega`` the drive
    amplitude on that mode and ``gamma`` the mechanical energy decay rate.
    """

    g: float
    gamma: float
    delta: float = 0.0
    omega: float = DEFAULT_OMEGA
    n_th: float = 0.0
    kappa: float = 1.0
    dims: Optional[tuple[int, int, int]] = None
    allow_strong_drive: bool = False

    def __post_init__(self):
        for name in ("g", "gamma", "delta", "omega", "n_th", "kappa"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        for name in ("g", "gamma", "omega", "n_th"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.omega / self.kappa > WEAK_DRIVE_LIMIT and not self.allow_strong_drive:
            raise WeakDriveError(
                f"omega/kappa = {self.omega / self.kappa:g} exceeds the weak-drive limit "
                f"{WEAK_DRIVE_LIMIT:g}; pass allow_strong_drive=True to override"
            )
        if self.dims is not None:
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def n0(self) -> float:
        return (self.omega / self.kappa) ** 2

    @property
    def resolved_dims(self) -> tuple[int, int, int]:
        return self.dims if self.dims is not None else default_dims(self.n_th)

    def space(self) -> HilbertSpace:
        return make_space(self.resolved_dims)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dims"] = list(self.resolved_dims)
        return d


def vec(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix).reshape(-1, order="F")


def unvec(vector: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(vector).reshape(n, n, order="F")


def trace_row(n: int) -> np.ndarray:
    """Row vector t with t @ vec(X) = tr(X)."""
    row = np.zeros(n * n, dtype=complex)
    row[:: n + 1] = 1.0
    return row


def spre(op: sp.spmatrix) -> sp.csr_matrix:
    n = op.shape[0]
    return sp.kron(sp.identity(n, dtype=complex, format="csr"), op, format="csr")


def spost(op: sp.spmatrix) -> sp.csr_matrix:
    n = op.shape[0]
    return sp.kron(op.T, sp.identity(n, dtype=complex, format="csr"), format="csr")


def dissipator(op: sp.spmatrix) -> sp.csr_matrix:
    """Superoperator of D[o] rho = 2 o rho o^dag - o^dag o rho - rho o^dag o."""
    n = op.shape[0]
    op = sp.csr_matrix(op)
    od_o = (op.conj().T @ op).tocsr()
    ident = sp.identity(n, dtype=complex, format="csr")
    return (
        2.0 * sp.kron(op.conj(), op, format="csr")
        - sp.kron(ident, od_o, format="csr")
        - sp.kron(od_o.T, ident, format="csr")
    ).tocsr()


@lru_cache(maxsize=16)
def _mode_ops(space: HilbertSpace):
    return tuple(annihilation(space, m) for m in ("a", "s", "b"))


@lru_cache(maxsize=16)
def _superop_parts(space: HilbertSpace):
    """Parameter-independent pieces of the generator, built once per space."""
    c_a, c_s, b = (o.matrix for o in _mode_ops(space))
    n_opt = (c_a.conj().T @ c_a + c_s.conj().T @ c_s).tocsr()
    three_wave = (c_a.conj().T @ c_s @ b).tocsr()
    three_wave = (three_wave + three_wave.conj().T).tocsr()
    drive = (c_a + c_a.conj().T).tocsr()

    def comm(h):
        return (-1j * (spre(h) - spost(h))).tocsr()

    return {
        "detuning": comm(-n_opt),
        "coupling": comm(0.5 * three_wave),
        "drive": comm(drive),
        "optical": (dissipator(c_a) + dissipator(c_s)).tocsr(),
        "phonon_loss": dissipator(b),
        "phonon_gain": dissipator(b.conj().T),
    }


@lru_cache(maxsize=32)
def stationary_sector(space: HilbertSpace) -> np.ndarray:
    """Sorted vec indices of the matrix elements rho_ij with Q_i = Q_j, Q = n_s - n_b.

    The three-wave term, the drive and all dissipators are invariant under
    the phase rotation exp(i theta Q), so the generator never mixes these
    elements with the others. The steady state, c rho c^dag for every optical
    jump and all number-operator expectations live inside this block.
    """
    occ = space.occupation_table
    q = occ[:, 1] - occ[:, 2]
    return np.flatnonzero(vec(q[:, None] == q[None, :]))


def hamiltonian(params: SystemParams, space: Optional[HilbertSpace] = None) -> QOperator:
    """H = -Delta (n_a + n_s) + (g/2)(c_a^dag c_s b + h.c.) + Omega (c_a^dag + c_a)."""
    space = space or params.space()
    c_a, c_s, b = _mode_ops(space)
    n_opt = c_a.dag() @ c_a + c_s.dag() @ c_s
    hop = c_a.dag() @ c_s @ b
    return (-params.delta) * n_opt + (0.5 * params.g) * (hop + hop.dag()) + params.omega * (c_a.dag() + c_a)


@dataclass(frozen=True, eq=False)
class Liouvillian:
    space: HilbertSpace
    superop: sp.csr_matrix
    params: Optional[SystemParams] = None

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """L(rho) for a dense matrix rho."""
        n = self.dim
        return unvec(self.superop @ vec(rho), n)

    def trace_defect(self) -> float:
        """max_j |(trace row @ L)_j|, zero for an exactly trace-preserving generator."""
        row = sp.csr_matrix(trace_row(self.dim))
        out = row @ self.superop
        return float(np.max(np.abs(out.toarray()))) if out.nnz else 0.0

    def norm1(self) -> float:
        return float(abs(self.superop).sum(axis=0).max())

    def sector_block(self) -> tuple[np.ndarray, sp.csr_matrix]:
        """(indices, L restricted to them) for the stationary coherence sector."""
        idx = stationary_sector(self.space)
        return idx, self.superop[idx][:, idx].tocsr()


def liouvillian(params: SystemParams, space: Optional[HilbertSpace] = None) -> Liouvillian:
    """Column-stacked superoperator of the master equation.

    L rho = -i[H, rho] + kappa D[c_a] + kappa D[c_s]
            + (gamma/2)(N+1) D[b] + (gamma/2) N D[b^dag]
    """
    space = space or params.space()
    parts = _superop_parts(space)
    superop = (
        params.delta * parts["detuning"]
        + params.g * parts["coupling"]
        + params.omega * parts["drive"]
        + params.kappa * parts["optical"]
    )
    if params.gamma > 0:
        superop = superop + 0.5 * params.gamma * (params.n_th + 1) * parts["phonon_loss"]
        if params.n_th > 0:
            superop = superop + 0.5 * params.gamma * params.n_th * parts["phonon_gain"]
    superop = sp.csr_matrix(superop)
    superop.eliminate_zeros()
    return Liouvillian(space, superop, params)


def reflected_operator(params: SystemParams, space: Optional[HilbertSpace] = None) -> QOperator:
    """c_R = c_a + i (Omega / kappa), from input-output at a symmetric two-sided cavity."""
    space = space or params.space()
    c_a = _mode_ops(space)[0]
    return c_a + (1j * params.omega / params.kappa) * identity(space)


def mode_operator(params: SystemParams, space: HilbertSpace, label: str) -> QOperator:
    """Annihilation operator for an optical label: ``a``, ``s`` or reflected ``R``."""
    if label == "R":
        return reflected_operator(params, space)
    return _mode_ops(space)[mode_index(label)]

"""
Truncated three-mode Fock space and sparse operator algebra.

Mode order is fixed to ``("a", "s", "b")``: the antisymmetric (driven) optical
mode, the symmetric optical mode and the mechanical mode. The composite index
of ``|n_a n_s n_b>`` is row-major with mode ``a`` slowest::

    index = (n_a * dims[1] + n_s) * dims[2] + n_b

Truncation silently drops the top ladder rung; validity is checked downstream
from steady-state populations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidDimensionError, SpaceMismatchError, UnknownModeError

MODES = ("a", "s", "b")

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_FLOOR = -1e-8


def mode_index(mode: str) -> int:
    try:
        return MODES.index(mode)
    except ValueError:
        raise UnknownModeError(f"unknown mode label {mode!r}; expected one of {MODES}") from None


@dataclass(frozen=True)
class HilbertSpace:
    dims: tuple[int, int, int]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3:
            raise InvalidDimensionError(f"expected 3 mode dimensions, got {len(dims)}")
        if any(d < 2 for d in dims):
            raise InvalidDimensionError(f"every mode dimension must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, n_a: int, n_s: int, n_b: int) -> int:
        occ = (n_a, n_s, n_b)
        if any(not 0 <= n < d for n, d in zip(occ, self.dims)):
            raise InvalidDimensionError(f"occupation {occ} outside truncation {self.dims}")
        return (n_a * self.dims[1] + n_s) * self.dims[2] + n_b

    def occupations(self, index: int) -> tuple[int, int, int]:
        if not 0 <= index < self.total_dim:
            raise InvalidDimensionError(f"index {index} outside space of dimension {self.total_dim}")
        rest, n_b = divmod(index, self.dims[2])
        n_a, n_s = divmod(rest, self.dims[1])
        return n_a, n_s, n_b

    @cached_property
    def occupation_table(self) -> np.ndarray:
        """(total_dim, 3) integer array of (n_a, n_s, n_b) per basis index."""
        return np.stack(np.unravel_index(np.arange(self.total_dim), self.dims), axis=1)

    def basis(self, n_a: int, n_s: int, n_b: int) -> np.ndarray:
        vec = np.zeros(self.total_dim, dtype=complex)
        vec[self.index(n_a, n_s, n_b)] = 1.0
        return vec

    def projector(self, n_a: int, n_s: int, n_b: int) -> "DensityMatrix":
        vec = self.basis(n_a, n_s, n_b)
        return DensityMatrix(self, np.outer(vec, vec.conj()))


def make_space(dims: Sequence[int]) -> HilbertSpace:
    dims = tuple(dims)
    if len(dims) != 3:
        raise InvalidDimensionError(f"expected 3 mode dimensions, got {len(dims)}")
    return HilbertSpace(dims)


def _check_same_space(x, y):
    if x.space != y.space:
        raise SpaceMismatchError(f"operands live on different spaces: {x.space.dims} vs {y.space.dims}")


class QOperator:
    """Sparse complex operator on a :class:`HilbertSpace`.

    Supports ``+``, ``-``, scalar ``*``, ``@`` and :meth:`dag`. Values are
    treated as immutable; every operation returns a new operator.
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix):
        n = space.total_dim
        matrix = sp.csr_matrix(matrix, dtype=complex)
        if matrix.shape != (n, n):
            raise SpaceMismatchError(f"matrix shape {matrix.shape} does not match space dimension {n}")
        self.space = space
        self.matrix = matrix

    def __add__(self, other):
        if isinstance(other, QOperator):
            _check_same_space(self, other)
            return QOperator(self.space, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, QOperator):
            _check_same_space(self, other)
            return QOperator(self.space, self.matrix - other.matrix)
        return NotImplemented

    def __neg__(self):
        return QOperator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return QOperator(self.space, self.matrix * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            _check_same_space(self, other)
            return QOperator(self.space, self.matrix @ other.matrix)
        return NotImplemented

    def dag(self) -> "QOperator":
        return QOperator(self.space, self.matrix.conj().T)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def element(self, bra: tuple[int, int, int], ket: tuple[int, int, int]) -> complex:
        """Matrix element <bra| op |ket> for occupation tuples."""
        return complex(self.matrix[self.space.index(*bra), self.space.index(*ket)])

    def __repr__(self):
        return f"QOperator(dims={self.space.dims}, nnz={self.matrix.nnz})"


def identity(space: HilbertSpace) -> QOperator:
    return QOperator(space, sp.identity(space.total_dim, dtype=complex, format="csr"))


def annihilation(space: HilbertSpace, mode: str) -> QOperator:
    k = mode_index(mode)
    factors = [sp.identity(d, dtype=complex, format="csr") for d in space.dims]
    d = space.dims[k]
    factors[k] = sp.diags(np.sqrt(np.arange(1, d, dtype=float)), 1, shape=(d, d), format="csr", dtype=complex)
    matrix = factors[0]
    for f in factors[1:]:
        matrix = sp.kron(matrix, f, format="csr")
    matrix.eliminate_zeros()
    return QOperator(space, matrix)


def creation(space: HilbertSpace, mode: str) -> QOperator:
    return annihilation(space, mode).dag()


def number(space: HilbertSpace, mode: str) -> QOperator:
    """Diagonal occupation operator, built from the basis labels rather than c^dag c."""
    occ = space.occupation_table[:, mode_index(mode)].astype(complex)
    return QOperator(space, sp.diags(occ, format="csr"))


def adjoint(op: QOperator) -> QOperator:
    return op.dag()


def commutator(x: QOperator, y: QOperator) -> QOperator:
    return x @ y - y @ x


class DensityMatrix:
    """Dense density matrix with the Hermitian / unit-trace / positivity contract."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix):
        matrix = np.asarray(matrix.toarray() if sp.issparse(matrix) else matrix, dtype=complex)
        n = space.total_dim
        if matrix.shape != (n, n):
            raise SpaceMismatchError(f"matrix shape {matrix.shape} does not match space dimension {n}")
        self.space = space
        self.matrix = matrix

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def population(self, n_a: int, n_s: int, n_b: int) -> float:
        i = self.space.index(n_a, n_s, n_b)
        return float(self.matrix[i, i].real)

    def mode_distribution(self, mode: str) -> np.ndarray:
        """Reduced number distribution P(n) of one mode."""
        k = mode_index(mode)
        pops = self.populations().reshape(self.space.dims)
        other = tuple(j for j in range(3) if j != k)
        return pops.sum(axis=other)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def violations(self) -> list[str]:
        """Messages for every broken DensityMatrix invariant (empty if valid)."""
        problems = []
        herm = float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if self.matrix.size else 0.0
        if herm > HERMITIAN_TOL:
            problems.append(f"not Hermitian: max|rho - rho^dag| = {herm:.3e}")
        tr = self.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            problems.append(f"trace {tr:.12g} differs from 1")
        lam = self.min_eigenvalue()
        if lam < POSITIVITY_FLOOR:
            problems.append(f"minimum eigenvalue {lam:.3e} below {POSITIVITY_FLOOR:g}")
        return problems

    def is_valid(self) -> bool:
        return not self.violations()

    def __repr__(self):
        return f"DensityMatrix(dims={self.space.dims})"


def expectation(op: QOperator, rho: DensityMatrix) -> complex:
    """tr(op @ rho)."""
    _check_same_space(op, rho)
    # tr(A B) = sum_ij A_ij B_ji
    coo = op.matrix.tocoo()
    return complex(np.sum(coo.data * rho.matrix[coo.col, coo.row]))

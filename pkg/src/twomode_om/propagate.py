"""
Adaptive Krylov evaluation of exp(t A) v on a time grid.

Each step builds an Arnoldi basis V_m of the Krylov space of ``A`` and ``v``
and approximates exp(h A) v by beta V_m exp(h H_m) e_1, with the corrected
(m+1)-term formula and a posteriori error estimate of Sidje's Expokit. Output
times falling inside an accepted step are evaluated from the same basis, so a
dense output grid costs one small matrix exponential per point and no extra
matrix-vector products.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import IntegrationError

DEFAULT_RTOL = 1e-8
DEFAULT_KRYLOV_DIM = 30
_SAFETY = 0.9
_MAX_GROWTH = 5.0
_MAX_REJECTS = 50


class KrylovPropagator:
    """Propagate vectors under d/dt x = A x with relative local tolerance ``rtol``."""

    def __init__(self, A, *, rtol: float = DEFAULT_RTOL, krylov_dim: int = DEFAULT_KRYLOV_DIM):
        self.A = sp.csr_matrix(A)
        self.n = self.A.shape[0]
        self.rtol = float(rtol)
        self.m = min(int(krylov_dim), self.n)
        self.anorm = max(float(abs(self.A).sum(axis=0).max()), np.finfo(float).tiny)
        self.stats = {"steps": 0, "rejected": 0, "matvecs": 0}

    def _arnoldi(self, v: np.ndarray, beta: float):
        m = self.m
        V = np.zeros((self.n, m + 1), dtype=complex)
        H = np.zeros((m + 2, m + 2), dtype=complex)
        V[:, 0] = v / beta
        breakdown_tol = 1e-12 * self.anorm
        for j in range(m):
            w = self.A @ V[:, j]
            self.stats["matvecs"] += 1
            for i in range(j + 1):
                H[i, j] = np.vdot(V[:, i], w)
                w = w - H[i, j] * V[:, i]
            # one reorthogonalization pass keeps the basis orthonormal in long runs
            for i in range(j + 1):
                corr = np.vdot(V[:, i], w)
                H[i, j] += corr
                w = w - corr * V[:, i]
            h_next = np.linalg.norm(w)
            if h_next <= breakdown_tol:
                # happy breakdown: the Krylov space is invariant and the step is exact
                return V[:, : j + 1], H[: j + 1, : j + 1], 0.0, None, j + 1
            H[j + 1, j] = h_next
            V[:, j + 1] = w / h_next
        h_last = H[m, m - 1].real
        v_next = V[:, m]
        Av = self.A @ v_next
        self.stats["matvecs"] += 1
        return V, H, h_last, np.linalg.norm(Av), m

    @staticmethod
    def _augmented(H: np.ndarray, k: int, h_last: float) -> np.ndarray:
        Ha = np.zeros((k + 2, k + 2), dtype=complex)
        Ha[:k, :k] = H[:k, :k]
        Ha[k, k - 1] = 1.0
        Ha[k + 1, k] = 1.0
        return Ha

    def _step_error(self, F: np.ndarray, k: int, h_last: float, av_norm: float, beta: float) -> float:
        err1 = abs(beta * h_last * F[k, 0])
        err2 = abs(beta * h_last * F[k + 1, 0]) * av_norm
        if err1 > 10 * err2:
            return err2
        if err1 > err2:
            return err2 * err1 / (err1 - err2)
        return err1

    def _combine(self, V, F, k, h_last, beta, breakdown):
        if breakdown:
            return beta * (V[:, :k] @ F[:k, 0])
        coeff = np.concatenate([F[:k, 0], [h_last * F[k, 0]]])
        return beta * (V[:, : k + 1] @ coeff)

    def run(self, v0: np.ndarray, times: np.ndarray, functionals: Optional[np.ndarray] = None,
            keep_states: bool = False):
        """Evaluate exp(t A) v0 at every ``t`` in ``times`` (sorted, >= 0).

        Returns ``(values, states)``: ``values[j, k] = functionals[k] @ x(t_j)``
        when functionals (shape (K, n)) are given, and ``states`` the stacked
        vectors when ``keep_states`` is set. Either may be ``None``.
        """
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a non-empty 1-D array")
        if times[0] < 0 or np.any(np.diff(times) < 0):
            raise ValueError("times must be non-negative and non-decreasing")
        F_rows = None if functionals is None else np.atleast_2d(np.asarray(functionals, dtype=complex))
        values = None if F_rows is None else np.zeros((times.size, F_rows.shape[0]), dtype=complex)
        states = np.zeros((times.size, self.n), dtype=complex) if keep_states else None

        def record(j, x):
            if values is not None:
                values[j] = F_rows @ x
            if states is not None:
                states[j] = x

        x = np.asarray(v0, dtype=complex).copy()
        t_now = 0.0
        j = 0
        while j < times.size and times[j] == 0.0:
            record(j, x)
            j += 1
        t_end = float(times[-1])
        m = self.m
        xm = 1.0 / m
        fact = ((m + 1) / math.e) ** (m + 1) * math.sqrt(2 * math.pi * (m + 1))
        h = (1.0 / self.anorm) * ((fact * self.rtol) / (4.0 * self.anorm)) ** xm if j < times.size else 0.0

        while j < times.size:
            beta = float(np.linalg.norm(x))
            if beta == 0.0:
                while j < times.size:
                    record(j, x)
                    j += 1
                break
            V, H, h_last, av_norm, k = self._arnoldi(x, beta)
            breakdown = av_norm is None
            h = min(h, t_end - t_now) if not breakdown else t_end - t_now
            tol_abs = self.rtol * beta
            rejects = 0
            while True:
                if breakdown:
                    F = sla.expm(h * H[:k, :k])
                    err = 0.0
                else:
                    Ha = self._augmented(H, k, h_last)
                    F = sla.expm(h * Ha)
                    err = self._step_error(F, k, h_last, av_norm, beta)
                if err <= tol_abs:
                    break
                rejects += 1
                self.stats["rejected"] += 1
                if rejects > _MAX_REJECTS:
                    raise IntegrationError(
                        "Krylov step rejected repeatedly",
                        diagnostics={"t": t_now, "h": h, "err": err, "tol": tol_abs, **self.stats},
                    )
                h = min(_SAFETY * h * (tol_abs / err) ** xm, 0.5 * h)
            t_next = t_now + h
            if j < times.size and times[-1] - t_next < 1e-13 * max(1.0, t_end):
                t_next = t_end
            while j < times.size and times[j] <= t_next:
                dt = times[j] - t_now
                if breakdown:
                    Fj = sla.expm(dt * H[:k, :k])
                else:
                    Fj = sla.expm(dt * self._augmented(H, k, h_last))
                record(j, self._combine(V, Fj, k, h_last, beta, breakdown))
                j += 1
            x = self._combine(V, F, k, h_last, beta, breakdown)
            self.stats["steps"] += 1
            t_now = t_next
            if err > 0:
                h = min(_MAX_GROWTH * h, _SAFETY * h * (tol_abs / err) ** xm)
            else:
                h = _MAX_GROWTH * h
            if not np.all(np.isfinite(x)):
                raise IntegrationError("non-finite state during propagation",
                                       diagnostics={"t": t_now, **self.stats})
        return values, states

    def evolve(self, v0: np.ndarray, t: float) -> np.ndarray:
        _, states = self.run(v0, np.array([0.0, float(t)]), keep_states=True)
        return states[-1]

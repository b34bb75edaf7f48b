"""
Invariant suite run by ``twomode-om validate``.

Each check returns an :class:`InvariantResult` carrying the measured value,
the tolerance and a one-line message. Checks run at three canonical
parameter sets (the weak-drive spectrum, the thermal spectrum and the
delayed-correlation set) plus a few set-independent checks of the analytic
model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import analytic
from .errors import TwoModeError
from .fock import MODES, DensityMatrix, annihilation, commutator, make_space, number
from .model import DEFAULT_OMEGA, SystemParams, hamiltonian, liouvillian
from .regression import default_tau_grid, g2_tau, propagate_state
from .steady import TRUNCATION_THRESHOLD, observables, occupations_from_field, solve, steady_residual, steady_state

TRACE_PRESERVATION_TOL = 1e-10
HAMILTONIAN_HERMITIAN_TOL = 1e-12
RESIDUAL_TOL = 1e-10
OMEGA_TOL = 0.01
TRUNCATION_TOL = 1e-3
REFLECTED_TOL = 1e-10
ANCHOR_TOL = 1e-6
LONG_TIME_TOL = 0.01
FIDELITY_TOL = 1e-8
COHERENT_TOL = 1e-6
FIXED_POINT_TOL = 1e-12
SIMPLIFIED_TOL = 0.01
OMEGA_SWEEP = (0.005, 0.01, 0.02)

OBSERVABLE_KEYS = ("n_a", "n_s", "n_R", "g2_aa_0", "g2_ss_0", "g2_RR_0", "g2_tot_0")


@dataclass(frozen=True)
class CanonicalSet:
    name: str
    params: SystemParams
    regression: bool  # run the two-time checks (too costly at the thermal set)


def canonical_sets(dims: Optional[tuple[int, int, int]] = None, omega: float = DEFAULT_OMEGA) -> list[CanonicalSet]:
    """The spectrum, thermal and delayed-correlation parameter points.

    spectrum: g = 20, gamma = 0.2 at the g2_aa minimum Delta = g/sqrt(8).
    thermal: g = 20, gamma = 0.001, N_th = 2 at the n = 1 resonance (g/2)sqrt(2).
    delayed: g = 8, gamma = 0.02 at Delta = g/sqrt(2).
    """
    spectrum = SystemParams(g=20.0, gamma=0.2, delta=20.0 / math.sqrt(8), omega=omega, dims=dims)
    thermal = SystemParams(g=20.0, gamma=0.001, n_th=2.0, delta=10.0 * math.sqrt(2), omega=omega, dims=dims)
    delayed = SystemParams(g=8.0, gamma=0.02, delta=8.0 / math.sqrt(2), omega=omega, dims=dims)
    return [
        CanonicalSet("spectrum", spectrum, True),
        CanonicalSet("thermal", thermal, False),
        CanonicalSet("delayed", delayed, True),
    ]


@dataclass(frozen=True)
class InvariantResult:
    name: str
    where: str
    passed: bool
    value: float
    tolerance: float
    message: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.where:<9} {self.name:<24} value={self.value:.3e} tol={self.tolerance:.1e}  {self.message}"


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def _max_rel(o1, o2, keys=OBSERVABLE_KEYS, n0_1=1.0, n0_2=1.0) -> tuple[float, str]:
    worst, which = 0.0, ""
    for k in keys:
        a, b = getattr(o1, k), getattr(o2, k)
        if k.startswith("n_"):
            a, b = a / n0_1, b / n0_2
        if math.isnan(a) and math.isnan(b):
            continue
        err = _rel(a, b) if not (math.isnan(a) or math.isnan(b)) else math.inf
        if err > worst:
            worst, which = err, k
    return worst, which


def _result(name, where, value, tol, message="") -> InvariantResult:
    return InvariantResult(name, where, bool(value <= tol), float(value), tol, message)


def check_set(cs: CanonicalSet, rng: np.random.Generator) -> list[InvariantResult]:
    p = cs.params
    where = cs.name
    out: list[InvariantResult] = []
    space = p.space()
    L = liouvillian(p, space)

    H = hamiltonian(p, space).matrix
    herm = float(abs(H - H.conj().T).max()) if H.nnz else 0.0
    out.append(_result("hamiltonian_hermitian", where, herm, HAMILTONIAN_HERMITIAN_TOL))
    out.append(_result("trace_preservation", where, L.trace_defect(), TRACE_PRESERVATION_TOL))

    n = space.total_dim
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho_r = x @ x.conj().T
    rho_r /= np.trace(rho_r)
    drho = L.apply(rho_r)
    lind = max(abs(np.trace(drho)), float(np.max(np.abs(drho - drho.conj().T))))
    out.append(_result("lindblad_structure", where, lind, TRACE_PRESERVATION_TOL,
                       "trace and Hermiticity of L(rho) for random rho"))

    try:
        rho = steady_state(L, check=False)
    except TwoModeError as exc:
        out.append(InvariantResult("steady_state", where, False, math.inf, RESIDUAL_TOL, str(exc)))
        return out
    res = steady_residual(L, rho) / L.norm1()
    out.append(_result("steady_residual", where, res, RESIDUAL_TOL, "relative to ||L||_1"))
    problems = rho.violations()
    out.append(InvariantResult("density_matrix", where, not problems, float(len(problems)), 0.0,
                               "; ".join(problems) or "Hermitian, unit trace, positive"))
    obs = observables(rho, p, strict=False)
    out.append(_result("truncation_tail", where, obs.trunc_tail, TRUNCATION_THRESHOLD,
                       f"dims={space.dims}"))

    nR = occupations_from_field(rho, p)
    out.append(_result("reflected_field", where, abs(nR - obs.n_R) / p.n0, REFLECTED_TOL,
                       "n_R identity, in units of n0"))

    # weak-drive scaling
    sols = {}
    for om in OMEGA_SWEEP:
        q = p.replace(omega=om)
        sols[om] = solve(q, strict=False)[1] if om != p.omega else obs
    worst, which = 0.0, ""
    for i, o1 in enumerate(OMEGA_SWEEP):
        for o2 in OMEGA_SWEEP[i + 1:]:
            err, k = _max_rel(sols[o1], sols[o2], n0_1=o1**2, n0_2=o2**2)
            if err > worst:
                worst, which = err, f"{k} at omega {o1:g} vs {o2:g}"
    out.append(_result("omega_independence", where, worst, OMEGA_TOL, which))

    bigger = tuple(d + 1 for d in space.dims)
    _, obs_big = solve(p.replace(dims=bigger), strict=False)
    err, k = _max_rel(obs, obs_big, n0_1=p.n0, n0_2=p.n0)
    msg = f"{space.dims} -> {bigger}, worst {k}"
    if err > TRUNCATION_TOL:
        msg += "; truncation too small, enlarge --dims"
    out.append(_result("truncation_stability", where, err, TRUNCATION_TOL, msg))

    if p.n_th == 0 and p.gamma <= 0.02:
        ana = analytic.closed_form_observables(p)
        n_err = max(_rel(obs.n_a, ana.n_a), _rel(obs.n_s, ana.n_s))
        out.append(_result("analytic_occupations", where, n_err, 0.02))
        g_err, g_ok = 0.0, True
        for k in ("g2_aa_0", "g2_ss_0"):
            a, b = getattr(obs, k), getattr(ana, k)
            rel = abs(a - b) / abs(b)
            g_ok = g_ok and (rel <= 0.05 or abs(a - b) <= 0.02)
            g_err = max(g_err, rel)
        out.append(InvariantResult("analytic_g2", where, g_ok, g_err, 0.05,
                                   "relative, or absolute 0.02 near zeros"))

    for label, ref in (("a", obs.g2_aa_0), ("s", obs.g2_ss_0)):
        series = g2_tau(L, rho, label, label, [0.0])
        out.append(_result(f"regression_anchor_{label}{label}", where, _rel(series.values[0], ref), ANCHOR_TOL))

    if cs.regression:
        taus = default_tau_grid(p, tau_max=10.0 / p.gamma)
        for label in ("a", "s"):
            series = g2_tau(L, rho, label, label, taus)
            tail = series.values[taus >= 10.0 / p.gamma * (1 - 1e-12)]
            dev = float(np.max(np.abs(tail - 1.0)))
            out.append(_result(f"long_time_limit_{label}{label}", where, dev, LONG_TIME_TOL, "tau >= 10/gamma"))

        states = propagate_state(L, rho, [0.0, 1.0, 10.0])
        drift = 0.0
        for st in states[1:]:
            o_t = observables(DensityMatrix(space, 0.5 * (st.matrix + st.matrix.conj().T)), p, strict=False)
            drift = max(drift, _max_rel(obs, o_t, keys=("n_a", "n_s", "g2_aa_0", "g2_ss_0"))[0])
        out.append(_result("propagation_fidelity", where, drift, FIDELITY_TOL, "exp(L tau) rho_ss"))

        q = p.replace(g=0.0)
        Lq = liouvillian(q)
        rq = steady_state(Lq)
        series = g2_tau(Lq, rq, "a", "a", default_tau_grid(q, tau_max=5.0))
        dev = float(np.max(np.abs(series.values - 1.0)))
        out.append(_result("coherent_limit", where, dev, COHERENT_TOL, "g = 0, g2_aa(tau) = 1"))
    return out


def check_analytic(rng: np.random.Generator, samples: int = 100) -> list[InvariantResult]:
    out = []
    worst = 0.0
    for _ in range(samples):
        p = SystemParams(g=float(rng.uniform(0, 60)), gamma=0.0, delta=float(rng.uniform(-40, 40)),
                         omega=float(rng.uniform(1e-4, 0.1)))
        worst = max(worst, analytic.fixed_point_residual(p))
    out.append(_result("fixed_point_residual", "analytic", worst, FIXED_POINT_TOL, f"{samples} random sets"))

    worst = 0.0
    for g in (20.0, 40.0):
        for d in np.linspace(-g, g, 81):
            p = SystemParams(g=g, gamma=0.0, delta=float(d))
            e, s = analytic.closed_form_observables(p), analytic.simplified_observables(p)
            worst = max(worst, _rel(e.g2_aa_0, s.g2_aa_0), _rel(e.g2_ss_0, s.g2_ss_0))
    out.append(_result("simplified_vs_exact_g2", "analytic", worst, SIMPLIFIED_TOL, "g/kappa >= 20"))

    p = SystemParams(g=20.0, gamma=0.001, delta=3.0)
    same = analytic.thermal_observables(p) == analytic.closed_form_observables(p)
    out.append(InvariantResult("thermal_reduction", "analytic", same, 0.0 if same else 1.0, 0.0,
                               "N_th = 0 equals the zero-temperature forms exactly"))
    return out


def check_structure() -> list[InvariantResult]:
    """Operator algebra, g = 0 factorization and R-factor stationarity."""
    out = []
    space = make_space((3, 4, 5))
    ops = {m: annihilation(space, m) for m in MODES}
    worst = 0.0
    for m in MODES:
        diff = (number(space, m) - ops[m].dag() @ ops[m]).matrix
        worst = max(worst, float(abs(diff).max()) if diff.nnz else 0.0)
        for k in MODES:
            if k != m:
                for x in (ops[k], ops[k].dag()):
                    c = commutator(ops[m], x).matrix
                    worst = max(worst, float(abs(c).max()) if c.nnz else 0.0)
    out.append(_result("operator_algebra", "fock", worst, 1e-12, "n = c^dag c, distinct modes commute"))
    bad = sum(space.index(*space.occupations(i)) != i for i in range(space.total_dim))
    out.append(_result("index_round_trip", "fock", float(bad), 0.0))

    p = SystemParams(g=0.0, gamma=0.1, n_th=0.5, delta=0.7, omega=0.05, dims=(4, 3, 6))
    rho = steady_state(liouvillian(p)).matrix.reshape(p.resolved_dims * 2)
    parts = [np.einsum("ijkljk->il", rho), np.einsum("ijkilk->jl", rho), np.einsum("ijkijl->kl", rho)]
    product = np.einsum("ad,be,cf->abcdef", *parts)
    out.append(_result("g0_factorization", "model", float(np.max(np.abs(rho - product))), 1e-10,
                       "steady state is a product of single-mode states"))

    g, k = 20.0, 1.0
    grid = np.linspace(0.0, g, 201)
    step = grid[1] - grid[0]
    worst = 0.0
    for w in (0.0, g / math.sqrt(8), g / 2, math.sqrt(6) * g / 4):
        values = [analytic.r_factor(k, w, d) for d in grid]
        worst = max(worst, abs(grid[int(np.argmin(values))] - w) / step)
    out.append(_result("r_factor_stationary", "analytic", worst, 1.0,
                       "argmin of R_kappa(w) over Delta, in grid steps of g/200"))
    return out


def run_suite(dims: Optional[tuple[int, int, int]] = None, *, omega: float = DEFAULT_OMEGA, seed: int = 1234,
              report: Optional[Callable[[InvariantResult], None]] = None) -> list[InvariantResult]:
    """Run every check, calling ``report`` on each result as it becomes available."""
    rng = np.random.default_rng(seed)
    results: list[InvariantResult] = []

    def emit(batch):
        for r in batch:
            results.append(r)
            if report:
                report(r)

    for cs in canonical_sets(dims, omega):
        try:
            emit(check_set(cs, rng))
        except TwoModeError as exc:
            emit([InvariantResult("set_failed", cs.name, False, math.inf, 0.0, str(exc))])
    emit(check_structure())
    emit(check_analytic(rng))
    return results

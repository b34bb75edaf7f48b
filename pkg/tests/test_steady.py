import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twomode_om.errors import SolverError, UndefinedCorrelationError
from twomode_om.fock import number
from twomode_om.model import SystemParams, liouvillian
from twomode_om.steady import (
    RESIDUAL_TOL,
    observables,
    occupations_from_field,
    solve,
    steady_residual,
    steady_state,
    sweep,
    truncation_tail,
)

# frozen reference values of the kappa/g closed forms, x = g/kappa = 20
N_A_RESONANT = 101 / 401  # (1 + x^2/4)/(1 + x^2)
G2_AA_CENTER = ((1 + 400 / 8) * (1 + 400 / 4) / (1 + 3 * 400 / 8)) ** 2  # 1163.67...
G2_SS_RESONANT = 0.267


def test_frozen_constants():
    assert N_A_RESONANT == pytest.approx(0.2519, abs=1e-4)
    assert G2_AA_CENTER == pytest.approx(1163.67, abs=0.01)


def test_vacuum_without_drive():
    p = SystemParams(g=20, gamma=0.2, delta=3.0, omega=0.0)
    rho = steady_state(liouvillian(p))
    assert rho.population(0, 0, 0) == 1.0
    assert np.count_nonzero(rho.matrix) == 1


def test_linear_cavity_occupation():
    p = SystemParams(g=0, gamma=0.2, delta=0.0, omega=0.01)
    _, obs = solve(p, strict=False)
    assert obs.n_a == pytest.approx(1e-4, rel=1e-3)
    assert obs.g2_aa_0 == pytest.approx(1.0, abs=1e-6)
    assert "undefined_g2_s" in obs.flags


def test_resonant_transmission():
    p = SystemParams(g=20, gamma=0.002, delta=10.0, omega=0.002)
    _, obs = solve(p)
    assert obs.n_a / p.n0 == pytest.approx(N_A_RESONANT, rel=0.01)


def test_center_bunching_matches_limit():
    p = SystemParams(g=20, gamma=0.002, delta=0.0, omega=0.002)
    _, obs = solve(p)
    assert obs.g2_aa_0 == pytest.approx(G2_AA_CENTER, rel=0.05)


def test_resonant_antibunching_undriven_mode():
    p = SystemParams(g=20, gamma=0.002, delta=10.0, omega=0.002)
    _, obs = solve(p)
    assert obs.g2_ss_0 == pytest.approx(G2_SS_RESONANT, abs=0.01)


def test_residual_and_validity():
    p = SystemParams(g=20, gamma=0.2, delta=20 / math.sqrt(8))
    L = liouvillian(p)
    rho = steady_state(L)
    assert steady_residual(L, rho) <= RESIDUAL_TOL * L.norm1()
    assert rho.is_valid()
    assert truncation_tail(rho) < 1e-8


def test_residual_against_dense_null_vector():
    p = SystemParams(g=6, gamma=0.3, delta=1.3, omega=0.05, n_th=0.3, dims=(3, 3, 4))
    L = liouvillian(p)
    rho = steady_state(L)
    dense = L.superop.toarray()
    _, _, vh = np.linalg.svd(dense)
    null = vh[-1].conj().reshape(L.dim, L.dim, order="F")
    null /= np.trace(null)
    assert np.allclose(rho.matrix, null, atol=1e-10)


def test_reflected_field_identity():
    p = SystemParams(g=20, gamma=0.2, delta=7.0)
    rho, obs = solve(p)
    assert occupations_from_field(rho, p) == pytest.approx(obs.n_R, abs=1e-10 * p.n0)


def test_strict_undefined_correlation():
    p = SystemParams(g=0, gamma=0.2, delta=0.0, omega=0.01)
    rho, _ = solve(p, strict=False)
    with pytest.raises(UndefinedCorrelationError):
        observables(rho, p)


def test_reflected_cancellation_flagged():
    # on resonance with no coupling the reflected field cancels exactly
    p = SystemParams(g=0, gamma=0.2, delta=0.0, omega=0.01)
    _, obs = solve(p, strict=False)
    assert math.isnan(obs.g2_RR_0)
    assert "undefined_g2_R" in obs.flags


def test_truncation_flag():
    p = SystemParams(g=20, gamma=0.2, delta=10.0, dims=(2, 2, 2))
    _, obs = solve(p, strict=False)
    assert "truncation" in obs.flags


def test_solver_error_carries_residual():
    err = SolverError("x", residual=3.0)
    assert err.residual == 3.0


def test_single_point_sweep_matches_direct():
    p = SystemParams(g=20, gamma=0.2, delta=4.0)
    row = sweep(p, [4.0])[0]
    _, obs = solve(p, strict=False)
    assert row == obs


def test_sweep_empty_grid():
    with pytest.raises(ValueError):
        sweep(SystemParams(g=1, gamma=0.1), [])


def test_sweep_is_deterministic():
    p = SystemParams(g=8, gamma=0.02)
    grid = [-3.0, 0.5, 6.0]
    assert sweep(p, grid) == sweep(p, grid)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 30), st.floats(0.01, 0.5), st.floats(0, 30))
def test_detuning_symmetry(g, gamma, delta):
    p = SystemParams(g=g, gamma=gamma)
    lo, hi = sweep(p, [-delta, delta])
    for k in ("n_a", "n_s", "g2_aa_0", "g2_ss_0"):
        assert getattr(lo, k) == pytest.approx(getattr(hi, k), rel=1e-7)


@settings(max_examples=10, deadline=None)
@given(st.floats(1, 30), st.floats(0.05, 0.5), st.floats(-30, 30))
def test_omega_independence(g, gamma, delta):
    base = SystemParams(g=g, gamma=gamma, delta=delta)
    out = [solve(base.replace(omega=om))[1] for om in (0.005, 0.01, 0.02)]
    for o, om in zip(out, (0.005, 0.01, 0.02)):
        assert o.n_a / om**2 == pytest.approx(out[0].n_a / 0.005**2, rel=0.01)
        assert o.g2_aa_0 == pytest.approx(out[0].g2_aa_0, rel=0.01)


def test_truncation_stability():
    p = SystemParams(g=20, gamma=0.2, delta=20 / math.sqrt(8))
    _, small = solve(p)
    _, big = solve(p.replace(dims=(5, 5, 5)))
    for k in ("n_a", "n_s", "n_R", "g2_aa_0", "g2_ss_0", "g2_RR_0", "g2_tot_0"):
        assert getattr(small, k) == pytest.approx(getattr(big, k), rel=1e-3)


def test_thermal_phonon_population():
    p = SystemParams(g=20, gamma=0.001, n_th=2.0, delta=3.0)
    rho, obs = solve(p)
    n_b = (number(rho.space, "b").matrix @ rho.matrix).trace().real
    assert n_b == pytest.approx(2.0, rel=0.01)
    assert obs.trunc_tail < 1e-8

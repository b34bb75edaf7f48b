"""
Closed-form weak-drive model.

To second order in the drive the system stays in a pure state spanned by
|000>, the one-photon states |100>, |011> and the two-photon states |200>,
|111>, |022> (plus a spectator phonon number ``n`` at finite temperature).
Quantum jumps are neglected, so the amplitudes obey linear equations with the
non-Hermitian decay -kappa_t = -(kappa - i Delta) per photon. Their fixed
point is solved in closed form with

    alpha = Omega / kappa_t,   x = g / (4 kappa_t)

Within the phonon subspace ``n`` the couplings pick up Bose factors, which
enter the closed forms only through

    D1 = 1 + 4 x^2 (n + 1),    D2 = 1 + 2 x^2 (2 n + 3)

Thermal averages weight each subspace with the Bose-Einstein factor
zeta_n = N^n / (1 + N)^(n + 1). The mechanical damping is neglected
everywhere except in the decay of the heralded phonon after an s-photon jump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import CutoffError, ParameterError
from .fock import HilbertSpace, annihilation
from .model import SystemParams, thermal_weight
from .regression import CorrelationSeries, classical_bounds
from .steady import DENOMINATOR_FLOOR, SteadyObservables

THERMAL_WEIGHT_TOL = 1e-8
POLE_TOL = 1e-12

STEADY_LABELS = ("000", "100", "011", "200", "111", "022")
HERALD_LABELS = ("001", "101", "012")


def r_factor(K: float, omega: float, delta: float) -> float:
    """R_K(omega) = [K^2 + (delta - omega)^2][K^2 + (delta + omega)^2]."""
    return (K**2 + (delta - omega) ** 2) * (K**2 + (delta + omega) ** 2)


@dataclass(frozen=True)
class AnalyticContext:
    alpha: complex
    x: complex
    kappa_tilde: complex

    @classmethod
    def from_params(cls, params: SystemParams) -> "AnalyticContext":
        kt = complex(params.kappa, -params.delta)
        return cls(alpha=params.omega / kt, x=params.g / (4 * kt), kappa_tilde=kt)


@dataclass(frozen=True)
class AmplitudeState:
    """Labelled amplitudes. Phonon labels are relative to the spectator number ``n_phonon``."""

    amplitudes: dict
    time: Optional[float] = None
    n_phonon: int = 0

    def __getitem__(self, label: str) -> complex:
        return self.amplitudes[label]


def subspace_amplitudes(params: SystemParams, n: int = 0) -> AmplitudeState:
    """Fixed-point amplitudes in the subspace with ``n`` spectator phonons (gamma = 0)."""
    if n < 0:
        raise ParameterError(f"phonon subspace index must be >= 0, got {n}")
    ctx = AnalyticContext.from_params(params)
    a, x = ctx.alpha, ctx.x
    s1 = math.sqrt(n + 1)
    d1 = 1 + 4 * x**2 * (n + 1)
    d2 = 1 + 2 * x**2 * (2 * n + 3)
    amps = {
        "000": 1.0 + 0j,
        "100": -1j * a / d1,
        "011": -2 * a * x * s1 / d1,
        "200": -(a**2 / math.sqrt(2)) * (1 + 2 * x**2) / (d1 * d2),
        "111": 2j * a**2 * x * s1 / (d1 * d2),
        "022": 2 * a**2 * x**2 * math.sqrt(2 * (n + 1) * (n + 2)) / (d1 * d2),
    }
    return AmplitudeState(amps, None, n)


def steady_amplitudes(params: SystemParams) -> AmplitudeState:
    """Zero-temperature steady amplitudes A_000 ... A_022."""
    return subspace_amplitudes(params, 0)


def amplitude_rates(params: SystemParams, state: AmplitudeState) -> dict:
    """Right-hand sides dA/dt of the six amplitude equations (gamma = 0)."""
    A = state.amplitudes
    n = state.n_phonon
    kt = complex(params.kappa, -params.delta)
    g, om = params.g, params.omega
    c1 = 0.5 * g * math.sqrt(n + 1)       # <100|H|011>
    c2 = g * math.sqrt((n + 1) / 2)       # <200|H|111>
    c3 = g * math.sqrt((n + 2) / 2)       # <111|H|022>
    return {
        "000": 0j,
        "100": -1j * c1 * A["011"] - 1j * om * A["000"] - kt * A["100"],
        "011": -1j * c1 * A["100"] - kt * A["011"],
        "200": -1j * c2 * A["111"] - 1j * math.sqrt(2) * om * A["100"] - 2 * kt * A["200"],
        "111": -1j * c2 * A["200"] - 1j * c3 * A["022"] - 1j * om * A["011"] - 2 * kt * A["111"],
        "022": -1j * c3 * A["111"] - 2 * kt * A["022"],
    }


def fixed_point_residual(params: SystemParams, state: Optional[AmplitudeState] = None) -> float:
    """max |dA/dt| at the given amplitudes (defaults to the closed-form fixed point)."""
    state = state or steady_amplitudes(params)
    return max(abs(v) for v in amplitude_rates(params, state).values())


def _safe_ratio(num: float, den: float) -> float:
    return num / den if abs(den) >= DENOMINATOR_FLOOR else float("nan")


def _mixture_observables(params: SystemParams, weighted: Sequence[tuple[float, AmplitudeState]]) -> SteadyObservables:
    beta = params.omega / params.kappa
    n_a = n_s = n_R = 0.0
    p_aa = p_ss = p_RR = p_tot = 0.0
    for w, st in weighted:
        A = st.amplitudes
        n_a += w * abs(A["100"]) ** 2
        n_s += w * abs(A["011"]) ** 2
        n_R += w * abs(A["100"] + 1j * beta) ** 2
        p_aa += w * 2 * abs(A["200"]) ** 2
        p_ss += w * 2 * abs(A["022"]) ** 2
        p_RR += w * abs(-beta**2 + 2j * beta * A["100"] + math.sqrt(2) * A["200"]) ** 2
        p_tot += w * 2 * (abs(A["200"]) ** 2 + abs(A["111"]) ** 2 + abs(A["022"]) ** 2)
    n_tot = n_a + n_s
    g2 = {
        "a": _safe_ratio(p_aa, n_a**2),
        "s": _safe_ratio(p_ss, n_s**2),
        "R": _safe_ratio(p_RR, n_R**2),
        "tot": _safe_ratio(p_tot, n_tot**2),
    }
    flags = tuple(f"undefined_g2_{k}" for k, v in g2.items() if math.isnan(v))
    return SteadyObservables(
        delta=params.delta, n_a=n_a, n_s=n_s, n_R=n_R,
        g2_aa_0=g2["a"], g2_ss_0=g2["s"], g2_RR_0=g2["R"], g2_tot_0=g2["tot"],
        flags=flags,
    )


def closed_form_observables(params: SystemParams) -> SteadyObservables:
    """Occupations and g2(0) from the exact amplitude ratios of the six-level model.

    n_a = |A_100|^2, n_s = |A_011|^2, n_R = |A_100 + i Omega/kappa|^2,
    g2_aa = 2|A_200|^2/|A_100|^4, g2_ss = 2|A_022|^2/|A_011|^4 and g2_RR,
    g2_tot from the corresponding two-photon amplitudes.
    """
    return _mixture_observables(params, [(1.0, steady_amplitudes(params))])


def simplified_observables(params: SystemParams) -> SteadyObservables:
    """R-factor forms of the occupations and g2(0).

    n_a and n_s coincide with the amplitude ratios. n_R ~ R_{kappa/2}(g/2) /
    R_kappa(g/2) and g2_RR are approximations for kappa << g; g2_RR keeps the
    antiresonance shift g/2 - 2 kappa^2/g and width 16 kappa^3/g^2. The n_R
    form is the one consistent with the g2_RR denominator [R_{kappa/2}(g/2)]^2
    and with the exact ratio |A_100 + i Omega/kappa|^2. g2_tot is not
    available and is NaN.
    """
    k, g, d = params.kappa, params.g, params.delta
    n0 = params.n0
    R = lambda K, w: r_factor(K, w, d)  # noqa: E731
    r0, rh, rb, rd = R(k, 0.0), R(k, g / 2), R(k, g / math.sqrt(8)), R(k, math.sqrt(6) * g / 4)
    r_half = R(k / 2, g / 2)
    nan = float("nan")
    if g > 0:
        g2_RR = rh * R(16 * k**3 / g**2, g / 2 - 2 * k**2 / g) / r_half**2
    else:
        g2_RR = nan
    n_s = n0 * g**2 * k**2 / (4 * rh)
    return SteadyObservables(
        delta=d,
        n_a=n0 * k**2 * math.sqrt(r0) / rh,
        n_s=n_s,
        n_R=n0 * r_half / rh,
        g2_aa_0=rb * rh / (r0 * rd),
        g2_ss_0=2 * rh / rd if g > 0 else nan,
        g2_RR_0=g2_RR,
        g2_tot_0=nan,
        flags=() if g > 0 else ("undefined_g2_s", "undefined_g2_R"),
    )


def thermal_cutoff(n_th: float, tol: float = THERMAL_WEIGHT_TOL) -> int:
    """Smallest n_max with sum_{n <= n_max} zeta_n >= 1 - tol."""
    if n_th == 0:
        return 0
    # partial sum of the geometric series is 1 - (N/(1+N))^(n_max+1)
    q = n_th / (1 + n_th)
    return max(0, math.ceil(math.log(tol) / math.log(q)) - 1)


def thermal_observables(params: SystemParams, n_max: Optional[int] = None) -> SteadyObservables:
    """Thermal average over uncoupled phonon subspaces n = 0 .. n_max.

    Raises :class:`CutoffError` when the retained weight sum zeta_n falls
    short of 1 - 1e-8. At n_th = 0 this reduces to the single subspace n = 0
    and reproduces :func:`closed_form_observables` exactly.
    """
    if n_max is None:
        n_max = thermal_cutoff(params.n_th)
    weights = [thermal_weight(params.n_th, n) for n in range(n_max + 1)]
    total = math.fsum(weights)
    if total < 1 - THERMAL_WEIGHT_TOL:
        raise CutoffError(
            f"phonon cutoff n_max={n_max} keeps thermal weight {total:.10f} < 1 - {THERMAL_WEIGHT_TOL:g}"
        )
    weighted = [(w, subspace_amplitudes(params, n)) for n, w in enumerate(weights)]
    return _mixture_observables(params, weighted)


@dataclass(frozen=True)
class RabiRate:
    """Second-order 0 -> 2_0 transition amplitude and whether it hit a pole."""

    value: complex
    divergent: bool
    terms: tuple[complex, complex]


def _eigenstates(space: HilbertSpace) -> dict:
    def ket(*occ):
        return space.basis(*occ)

    r2, r3, r6 = math.sqrt(2), math.sqrt(3), math.sqrt(6)
    return {
        "0": ket(0, 0, 0),
        "1-": (ket(1, 0, 0) - ket(0, 1, 1)) / r2,
        "1+": (ket(1, 0, 0) + ket(0, 1, 1)) / r2,
        "2-": (ket(2, 0, 0) - r3 * ket(1, 1, 1) + r2 * ket(0, 2, 2)) / r6,
        "2+": (ket(2, 0, 0) + r3 * ket(1, 1, 1) + r2 * ket(0, 2, 2)) / r6,
        "20": (r2 * ket(2, 0, 0) - ket(0, 2, 2)) / r3,
    }


def two_photon_rabi(params: SystemParams) -> RabiRate:
    """Sum over n in {1-, 1+} of <2_0|H_dr|n><n|H_dr|0> / omega_n, omega_1pm = -Delta +- g/2.

    Matrix elements come from the explicit undriven eigenstates with
    H_dr = Omega (c_a^dag + c_a). When an intermediate state is resonant the
    value is infinite and ``divergent`` is set.
    """
    if params.g <= 0:
        raise ParameterError("two-photon Rabi frequency needs g > 0")
    space = HilbertSpace((3, 3, 3))
    c = annihilation(space, "a").matrix
    h_dr = params.omega * (c + c.conj().T)
    states = _eigenstates(space)
    energies = {"1-": -params.delta - params.g / 2, "1+": -params.delta + params.g / 2}
    terms = []
    divergent = False
    for label in ("1-", "1+"):
        mid = states[label]
        amp = np.vdot(states["20"], h_dr @ mid) * np.vdot(mid, h_dr @ states["0"])
        w = energies[label]
        if abs(w) <= POLE_TOL * max(params.g, params.kappa):
            divergent = True
            terms.append(complex(math.inf))
        else:
            terms.append(complex(amp / w))
    value = complex(math.inf) if divergent else terms[0] + terms[1]
    return RabiRate(value, divergent, (terms[0], terms[1]))


def _herald_generator(params: SystemParams, mode: str) -> np.ndarray:
    kt = complex(params.kappa, -params.delta)
    om = params.omega
    if mode == "a":
        c = params.g / 2
        # (A_000, A_100, A_011); A_000 is frozen
        return np.array([
            [0, 0, 0],
            [-1j * om, -kt, -1j * c],
            [0, -1j * c, -kt],
        ], dtype=complex)
    c = params.g / math.sqrt(2)
    # (A_001, A_101, A_012); the heralded phonon decays at gamma/2
    return np.array([
        [-params.gamma / 2, 0, 0],
        [-1j * om, -kt, -1j * c],
        [0, -1j * c, -kt],
    ], dtype=complex)


def conditional_amplitudes(params: SystemParams, mode: str, tau_grid) -> np.ndarray:
    """Amplitude trajectories after one detection, shape (len(tau_grid), 3).

    Mode ``a`` starts from c_a|psi> = A_100|000> + sqrt2 A_200|100> + A_111|011>,
    mode ``s`` from c_s|psi> = A_011|001> + A_111|101> + sqrt2 A_022|012>.
    The linear system is integrated exactly by the matrix exponential.
    """
    if mode not in ("a", "s"):
        raise ParameterError(f"conditional evolution is defined for modes 'a' and 's', got {mode!r}")
    A = steady_amplitudes(params).amplitudes
    r2 = math.sqrt(2)
    if mode == "a":
        y0 = np.array([A["100"], r2 * A["200"], A["111"]])
    else:
        y0 = np.array([A["011"], A["111"], r2 * A["022"]])
    M = _herald_generator(params, mode)
    tau = np.asarray(tau_grid, dtype=float)
    props = sla.expm(tau[:, None, None] * M[None, :, :])
    return props @ y0


def conditional_g2_tau(params: SystemParams, mode: str, tau_grid) -> CorrelationSeries:
    """Analytic g2_aa(tau) = |A_100(tau)|^2/|A_100|^4 or g2_ss(tau) = |A_012(tau)|^2/|A_011|^4.

    The s-mode result neglects re-excitation after the heralded phonon has
    decayed, so it tends to 0 instead of 1 once tau is comparable to 1/gamma.
    """
    traj = conditional_amplitudes(params, mode, tau_grid)
    A = steady_amplitudes(params).amplitudes
    if mode == "a":
        num, ref = traj[:, 1], A["100"]
    else:
        num, ref = traj[:, 2], A["011"]
    if abs(ref) ** 4 < DENOMINATOR_FLOOR:
        raise ParameterError(f"mode {mode!r} has no steady occupation; g2 undefined")
    values = np.abs(num) ** 2 / abs(ref) ** 4
    obs = closed_form_observables(params)
    g0 = obs.g2_aa_0 if mode == "a" else obs.g2_ss_0
    tau = np.asarray(tau_grid, dtype=float)
    series = CorrelationSeries(tau, values, (mode, mode), g0)
    return CorrelationSeries(tau, values, (mode, mode), g0, classical_bounds(series))

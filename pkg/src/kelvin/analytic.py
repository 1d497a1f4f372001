"""Closed-form weak-coupling predictions.

Everything here is second order in the coupling: overlap coefficients from
the time integrals, jump operators of the per-cycle Lindbladian, cooling and
heating rates (exact time averages and their Lorentzian approximation),
steady-state energies for the noiseless, depolarizing-noisy, DSP, and
finite-environment cases, and the cycle-count and ground-state-cooling
scaling estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBand,
    NoConvergenceRate,
    ResonantDenominator,
    UndefinedSteadyState,
)
from .model import CouplingScheme, ModelParams, band_edges, coupling_keys, dispersion

__all__ = [
    "NoiseSpec",
    "RateTable",
    "JumpOperators",
    "overlap_coeffs",
    "single_cycle_jump_ops",
    "averaged_rates",
    "multifreq_rates",
    "continuum_rates",
    "lindblad_steady",
    "general_ss_energy",
    "noisy_ss_energy",
    "dsp_ss_energy",
    "finite_env_ss_energy",
    "cycle_estimates",
    "gs_cooling_plan",
    "CoolingPlan",
    "cross_term_weight",
    "mode_grid",
    "coupling_arrays",
    "chain_relative_energy",
    "rate_table",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model selector: none, depolarizing(kappa), or finite_env."""

    kind: str = "none"
    kappa: float = 0.0
    kappa_prime: float = 0.0
    delta_e: float = 0.0
    p_e: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "depolarizing", "finite_env"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kappa < 0 or self.kappa_prime < 0:
            raise ValueError("noise strengths must be >= 0")
        if not (-1.0 <= self.p_e <= 1.0):
            raise ValueError(f"p_e must lie in [-1, 1], got {self.p_e}")

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls("none")

    @classmethod
    def depolarizing(cls, kappa: float) -> "NoiseSpec":
        return cls("depolarizing", kappa=kappa)

    @classmethod
    def finite_env(cls, kappa_prime: float, delta_e: float, p_e: float) -> "NoiseSpec":
        return cls("finite_env", kappa_prime=kappa_prime, delta_e=delta_e, p_e=p_e)


# ---------------------------------------------------------------------------
# overlap coefficients and jump operators
# ---------------------------------------------------------------------------

def _phase_integral(a, t: float, g: float):
    """g * integral_0^t e^{i a tau} d tau with a series branch near a = 0.

    Accepts scalars or arrays of a.
    """
    a = np.asarray(a, dtype=float)
    at = a * t
    small = np.abs(at) < 1e-7
    asafe = np.where(small, 1.0, a)
    full = g * (np.exp(1j * asafe * t) - 1.0) / (1j * asafe)
    series = g * t * (1.0 + 0.5j * at - at * at / 6.0)
    out = np.where(small, series, full)
    return complex(out[()]) if out.ndim == 0 else out


def overlap_coeffs(epsilon: float, delta: float, t: float, g: float) -> tuple[complex, complex]:
    """Resonance overlaps (x, y) of one cycle.

    x integrates the co-rotating phase e^{i(eps-delta)tau}, y the
    counter-rotating one; |x| = g t at resonance, and x vanishes at the
    accidental resonances (delta - eps) t = 2 pi r.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    x = _phase_integral(epsilon - delta, t, g)
    y = -_phase_integral(epsilon + delta, t, g)
    return x, y


@dataclass(frozen=True)
class JumpOperators:
    """Coefficient records of the two per-cycle jump operators.

    l1 = c1_a * a_k + c1_adag * a_-k^dag and
    l2 = c2_a * a_-k + c2_adag * a_k^dag.
    """

    c1_a: complex
    c1_adag: complex
    c2_a: complex
    c2_adag: complex


def single_cycle_jump_ops(a_k: complex, b_k: complex, x: complex, y: complex) -> JumpOperators:
    return JumpOperators(
        c1_a=np.conj(a_k) * x,
        c1_adag=np.conj(b_k) * y,
        c2_a=a_k * x,
        c2_adag=-b_k * y,
    )


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

GAMMA0_SQ_FACTOR = 1.5  # gamma_0^2 = 3 / (2 t^2)


def _avg_abs2_integral(a, t):
    """Time average over [0, 2t] of |int_0^{t'} e^{i a tau} d tau|^2.

    Equals 2/a^2 - sin(2 a t)/(a^3 t), with limit (4/3) t^2 at a = 0.
    """
    a = np.asarray(a, dtype=float)
    t = float(t)
    out = np.empty_like(a)
    small = np.abs(a * t) < 1e-4
    asafe = np.where(small, 1.0, a)
    out = 2.0 / asafe**2 - np.sin(2.0 * asafe * t) / (asafe**3 * t)
    at = a * t
    series = (4.0 / 3.0) * t * t * (1.0 - 0.2 * at * at + (2.0 / 105.0) * at**4)
    return np.where(small, series, out)


def averaged_rates(epsilon, delta, t: float, g: float, a2, b2,
                   mode: str = "exact_integral"):
    """Randomized-time cooling and heating rates per elementary cycle.

    `exact_integral` evaluates the uniform time average of |x|^2 and |y|^2
    exactly; `lorentzian` replaces the cooling line shape by
    2 g^2 A2 / ((eps - delta)^2 + gamma_0^2) with gamma_0^2 = 3/(2 t^2) and
    drops gamma_0 from the heating channel (cooling limit).  a2, b2 are
    |A_k|^2 and |B_k|^2.
    """
    if t <= 0:
        raise ValueError(f"t must be > 0, got {t}")
    epsilon = np.asarray(epsilon, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    if mode == "exact_integral":
        gc = g * g * a2 * _avg_abs2_integral(epsilon - delta, t)
        gh = g * g * b2 * _avg_abs2_integral(epsilon + delta, t)
    elif mode == "lorentzian":
        g0sq = GAMMA0_SQ_FACTOR / (t * t)
        gc = 2.0 * g * g * a2 / ((epsilon - delta) ** 2 + g0sq)
        gh = 2.0 * g * g * b2 / (epsilon + delta) ** 2
    else:
        raise ValueError(f"unknown rate mode {mode!r}")
    return gc, gh


def multifreq_rates(epsilon, deltas, t: float, g: float, a2, b2,
                    mode: str = "exact_integral"):
    """Arithmetic mean over bath frequencies of the per-frequency rates."""
    deltas = list(deltas)
    if not deltas:
        raise ValueError("frequency list must be nonempty")
    gc_tot, gh_tot = 0.0, 0.0
    for d in deltas:
        gc, gh = averaged_rates(epsilon, d, t, g, a2, b2, mode=mode)
        gc_tot = gc_tot + gc
        gh_tot = gh_tot + gh
    r = len(deltas)
    return gc_tot / r, gh_tot / r


def continuum_rates(epsilon, theta: float, t: float, g: float):
    """Dense-frequency (R -> infinity) rates for the local coupling.

    gamma_h = 2 g^2 / ((eps_M + eps)(eps_m + eps)),
    gamma_c = 2 g^2 t beta / (eps_M - eps_m) with
    beta = sqrt(2/3) [atan(z_M) - atan(z_m)], z_x = (eps_x - eps) t sqrt(2/3).
    """
    eps_m, eps_max = band_edges(theta)
    if eps_max - eps_m < 1e-12:
        raise DegenerateBand(f"band degenerate at theta={theta}")
    epsilon = np.asarray(epsilon, dtype=float)
    s23 = math.sqrt(2.0 / 3.0)
    z_m = (eps_m - epsilon) * t * s23
    z_max = (eps_max - epsilon) * t * s23
    beta = s23 * (np.arctan(z_max) - np.arctan(z_m))
    gh = 2.0 * g * g / ((eps_max + epsilon) * (eps_m + epsilon))
    gc = 2.0 * g * g * t * beta / (eps_max - eps_m)
    return gc, gh, beta


@dataclass(frozen=True)
class RateTable:
    """Per-mode rates for one protocol (arrays indexed by k = 0..N/2)."""

    ks: np.ndarray
    gamma_c: np.ndarray
    gamma_h: np.ndarray
    gamma0: float

    def __post_init__(self):
        if np.any(self.gamma_c < 0) or np.any(self.gamma_h < 0):
            raise ValueError("rates must be nonnegative")

    @property
    def alpha(self) -> np.ndarray:
        return self.gamma_c + self.gamma_h


def rate_table(params: ModelParams, deltas, t: float, g: float,
               a2=1.0, b2=1.0, mode: str = "exact_integral") -> RateTable:
    ks = np.arange(params.N // 2 + 1)
    eps = np.array([dispersion(params.theta, params.N, int(k)) for k in ks])
    a2 = np.broadcast_to(np.asarray(a2, dtype=float), eps.shape)
    b2 = np.broadcast_to(np.asarray(b2, dtype=float), eps.shape)
    gc, gh = multifreq_rates(eps, deltas, t, g, a2, b2, mode=mode)
    return RateTable(ks=ks, gamma_c=gc, gamma_h=gh,
                     gamma0=math.sqrt(GAMMA0_SQ_FACTOR) / t)


# ---------------------------------------------------------------------------
# steady states
# ---------------------------------------------------------------------------

def lindblad_steady(gamma_c, gamma_h, epsilon, noise_kappa_t: float = 0.0):
    """Steady state of the averaged per-mode Lindbladian.

    Returns (E_k, e_k, m_k, F_k) with both channels shifted by kappa*t:
    E_k = eps (gh~ - gc~)/(gc~ + gh~), e_k = 2 gh~/(gc~ + gh~), m_k the
    single-mode ground population, and F_k = m_k^2 the pair fidelity.
    """
    gc = np.asarray(gamma_c, dtype=float) + noise_kappa_t
    gh = np.asarray(gamma_h, dtype=float) + noise_kappa_t
    tot = gc + gh
    if np.any(tot <= 0):
        raise UndefinedSteadyState("all rates vanish")
    e_k = 2.0 * gh / tot
    m_k = gc / tot
    e_val = np.asarray(epsilon, dtype=float) * (gh - gc) / tot
    return e_val, e_k, m_k, m_k**2


def general_ss_energy(epsilon, a_k, b_k, x, y):
    """Noiseless per-pair steady energy eps (|By|^2 - |Ax|^2)/(|Ax|^2 + |By|^2)."""
    ax2 = np.abs(np.asarray(a_k) * np.asarray(x)) ** 2
    by2 = np.abs(np.asarray(b_k) * np.asarray(y)) ** 2
    denom = ax2 + by2
    if np.any(denom <= 0):
        raise UndefinedSteadyState("|Ax|^2 + |By|^2 vanishes")
    return np.asarray(epsilon, dtype=float) * (by2 - ax2) / denom


def noisy_ss_energy(epsilon, a_k, b_k, x, y, kappa: float, t: float):
    """Depolarizing-noise steady energy; 2 kappa t pads the denominator."""
    ax2 = np.abs(np.asarray(a_k) * np.asarray(x)) ** 2
    by2 = np.abs(np.asarray(b_k) * np.asarray(y)) ** 2
    return np.asarray(epsilon, dtype=float) * (by2 - ax2) / (ax2 + by2 + 2.0 * kappa * t)


def dsp_ss_energy(epsilon, a_k, b_k):
    """Steady energy with the system Hamiltonian switched off during cycles."""
    a2 = np.abs(np.asarray(a_k)) ** 2
    b2 = np.abs(np.asarray(b_k)) ** 2
    denom = a2 + b2
    if np.any(denom <= 0):
        raise UndefinedSteadyState("|A|^2 + |B|^2 vanishes")
    return np.asarray(epsilon, dtype=float) * (b2 - a2) / denom


def finite_env_ss_energy(epsilon, bath_terms, env_terms, p_e: float):
    """Steady energy with one engineered bath and one uncontrolled environment.

    Each of bath_terms and env_terms is (A, x, B, y); the bath carries
    polarization 1, the environment p_e.
    """
    a_b, x_b, b_b, y_b = bath_terms
    a_e, x_e, b_e, y_e = env_terms
    axb = np.abs(np.asarray(a_b) * np.asarray(x_b)) ** 2
    byb = np.abs(np.asarray(b_b) * np.asarray(y_b)) ** 2
    axe = np.abs(np.asarray(a_e) * np.asarray(x_e)) ** 2
    bye = np.abs(np.asarray(b_e) * np.asarray(y_e)) ** 2
    denom = axb + byb + axe + bye
    if np.any(denom <= 0):
        raise UndefinedSteadyState("total overlap weight vanishes")
    num = 1.0 * (byb - axb) + p_e * (bye - axe)
    return np.asarray(epsilon, dtype=float) * num / denom


def cross_term_weight(a_k: complex, b_k: complex, epsilon: float, delta: float) -> complex:
    """Residual off-diagonal Lindblad weight A B* / (eps^2 - delta^2)."""
    denom = epsilon**2 - delta**2
    if abs(denom) < 1e-9:
        raise ResonantDenominator(f"eps^2 - delta^2 = {denom:.2e}")
    return a_k * np.conj(b_k) / denom


# ---------------------------------------------------------------------------
# cycle counts and ground-state cooling plan
# ---------------------------------------------------------------------------

def cycle_estimates(alpha: float, n_sites: int, target_eps: float) -> tuple[float, float]:
    """(cycles to eps-close state, cycles to eps-close energy density)."""
    if alpha <= 0:
        raise NoConvergenceRate(f"alpha = {alpha} <= 0")
    return math.log(n_sites / target_eps) / alpha, math.log(1.0 / target_eps) / alpha


@dataclass(frozen=True)
class CoolingPlan:
    """Multi-frequency schedule scaling that cools to the ground state."""

    R: int
    t: float
    g: float
    n_cycles: float
    total_time: float


# Plan constants: R = N/5 frequencies, (eps_M - eps_m) t = N/10, g R t = 0.1.
PLAN_R_FRACTION = 0.2
PLAN_BANDWIDTH_TIME = 0.1
PLAN_GRT = 0.1


def gs_cooling_plan(n_sites: int, theta: float) -> CoolingPlan:
    """Parameter scalings reaching O(1) ground-state fidelity in O(N^4) time."""
    if n_sites % 2 != 0:
        raise ValueError("N must be even")
    eps_m, eps_max = band_edges(theta)
    r = max(int(round(PLAN_R_FRACTION * n_sites)), 1)
    t = PLAN_BANDWIDTH_TIME * n_sites / max(eps_max - eps_m, 1e-12)
    g = PLAN_GRT / (r * t)
    n_c = eps_max * t / (g * t) ** 2
    return CoolingPlan(R=r, t=t, g=g, n_cycles=n_c, total_time=n_c * t)


# ---------------------------------------------------------------------------
# per-chain aggregation (vectorized over modes)
# ---------------------------------------------------------------------------

def mode_grid(params: ModelParams):
    """(k, eps_k, phi_k, weight_k) arrays over k = 0..N/2."""
    n, theta = params.N, params.theta
    ks = np.arange(n // 2 + 1)
    x = 2.0 * math.pi * ks / n
    eps = np.sqrt(np.maximum(1.0 + math.sin(2 * theta) * np.cos(x), 0.0))
    w = math.sin(theta) + math.cos(theta) * np.cos(x)
    r = math.cos(theta) * np.sin(x)
    phi = np.arctan2(eps - w, r)
    phi[(np.abs(r) < 1e-15) & (w >= 0)] = 0.0
    phi[(np.abs(r) < 1e-15) & (w < 0)] = math.pi / 2
    weights = np.ones_like(eps)
    weights[0] = weights[-1] = 0.5
    return ks, eps, phi, weights


def coupling_arrays(scheme: CouplingScheme, params: ModelParams):
    """(A_k, B_k) arrays over k = 0..N/2."""
    ks, _, phi, _ = mode_grid(params)
    c, s = np.cos(phi), np.sin(phi)
    a = np.zeros(len(ks), dtype=complex)
    b = np.zeros(len(ks), dtype=complex)
    for j in coupling_keys(scheme.nn):
        ph = np.exp(-2j * math.pi * j * ks / params.N)
        a += (c * scheme.lam[j] + 1j * s * scheme.mu[j]) * ph
        b += (-s * scheme.lam[j] + 1j * c * scheme.mu[j]) * ph
    return a, b


def chain_relative_energy(params: ModelParams, scheme: CouplingScheme,
                          delta: float, t: float, noise: NoiseSpec,
                          mode: str = "cooling") -> float:
    """Total relative energy of the closed-form steady state.

    Sums the per-pair steady energies (edge modes half-weighted) and
    normalizes by the ground-state energy.  `mode` is "cooling" or "dsp";
    DSP evaluates the overlaps at zero system splitting, which removes the
    delta and t dependence in the noiseless case.
    """
    ks, eps, phi, wts = mode_grid(params)
    a, b = coupling_arrays(scheme, params)
    g = scheme.g
    eps_evo = np.zeros_like(eps) if mode == "dsp" else eps
    x = _phase_integral(eps_evo - delta, t, g)
    y = -_phase_integral(eps_evo + delta, t, g)

    if noise.kind == "none":
        e_k = general_ss_energy(eps, a, b, x, y)
    elif noise.kind == "depolarizing":
        e_k = noisy_ss_energy(eps, a, b, x, y, noise.kappa, t)
    elif noise.kind == "finite_env":
        a_e = np.cos(phi).astype(complex)
        b_e = (-np.sin(phi)).astype(complex)
        x_e = _phase_integral(eps_evo - noise.delta_e, t, noise.kappa_prime)
        y_e = -_phase_integral(eps_evo + noise.delta_e, t, noise.kappa_prime)
        e_k = finite_env_ss_energy(eps, (a, x, b, y), (a_e, x_e, b_e, y_e), noise.p_e)
    else:  # pragma: no cover
        raise ValueError(noise.kind)

    e_total = float(np.sum(wts * e_k))
    e_gs = -float(np.sum(wts * eps))
    return abs((e_total - e_gs) / e_gs)


def closed_form_relative_energies(params: ModelParams, scheme: CouplingScheme,
                                  deltas, t: float, noise: NoiseSpec,
                                  schedule_kind: str = "single",
                                  mode: str = "cooling") -> np.ndarray:
    """Per-mode relative energies e_k from the weak-coupling closed forms.

    Fixed-time schedules use the single-cycle overlap formulas; randomized
    and multi-frequency schedules use the time-averaged rates.  Entries are
    NaN where no closed form applies (finite environments with randomized
    times) or where eps = 0.
    """
    ks, eps, phi, wts = mode_grid(params)
    a, b = coupling_arrays(scheme, params)
    g = scheme.g
    eps_evo = np.zeros_like(eps) if mode == "dsp" else eps

    if schedule_kind == "single":
        delta = deltas[0]
        x = _phase_integral(eps_evo - delta, t, g)
        y = -_phase_integral(eps_evo + delta, t, g)
        if noise.kind == "none":
            e_val = general_ss_energy(eps, a, b, x, y)
        elif noise.kind == "depolarizing":
            e_val = noisy_ss_energy(eps, a, b, x, y, noise.kappa, t)
        else:
            a_e = np.cos(phi).astype(complex)
            b_e = (-np.sin(phi)).astype(complex)
            x_e = _phase_integral(eps_evo - noise.delta_e, t, noise.kappa_prime)
            y_e = -_phase_integral(eps_evo + noise.delta_e, t, noise.kappa_prime)
            e_val = finite_env_ss_energy(eps, (a, x, b, y),
                                         (a_e, x_e, b_e, y_e), noise.p_e)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(eps > 0, (e_val + eps) / eps, np.nan)

    if noise.kind == "finite_env":
        return np.full_like(eps, np.nan)
    gc, gh = multifreq_rates(eps, deltas, t, g, np.abs(a) ** 2, np.abs(b) ** 2)
    kappa_t = noise.kappa * t if noise.kind == "depolarizing" else 0.0
    _, e_rel, *_ = lindblad_steady(gc, gh, eps, noise_kappa_t=kappa_t)
    return np.asarray(e_rel)

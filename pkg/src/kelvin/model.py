"""Solvable chain model: dispersion, Bogoliubov frame, and per-mode blocks.

The chain of N fermionic sites is parametrized by a single angle theta.
Everything downstream works per momentum pair (k, -k), k = 0..N/2, on small
single-particle matrices ("blocks"): system pair, bath pair, and optionally
two environment pairs.  Edge modes k = 0 and k = N/2 are single modes and are
represented by half-weighted blocks on a doubled (particle-hole) basis.

All quantities are dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from ._linalg import HERMITICITY_ATOL

__all__ = [
    "ModelParams",
    "CouplingScheme",
    "BathSpec",
    "FiniteEnvSpec",
    "ModeBlock",
    "coupling_keys",
    "dispersion",
    "bogoliubov_angle",
    "ground_state_energy",
    "energy_density_limit",
    "coupling_coefficients",
    "block_hamiltonian",
    "canonicalize_theta",
    "band_edges",
]


@dataclass(frozen=True)
class ModelParams:
    """Chain size and angle; theta must already be canonical (in [0, pi/2])."""

    N: int
    theta: float

    def __post_init__(self):
        if self.N < 2 or self.N % 2 != 0:
            raise ValueError(f"N must be even and >= 2, got {self.N}")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if not (-1e-12 <= self.theta <= math.pi / 2 + 1e-12):
            raise ValueError(
                f"theta={self.theta} outside [0, pi/2]; use canonicalize_theta first"
            )

    @property
    def mode_indices(self) -> range:
        return range(0, self.N // 2 + 1)


def coupling_keys(nn: float) -> list[int]:
    """Neighbor offsets for range nn.

    Integer nn couples j = -nn..nn; half-integer nn couples only the +j side
    at the outermost distance, i.e. j = -floor(nn)..ceil(nn).
    """
    if nn < 0 or (2 * nn) != int(2 * nn):
        raise ValueError(f"nn must be a non-negative half-integer, got {nn}")
    return list(range(-math.floor(nn), math.ceil(nn) + 1))


@dataclass(frozen=True)
class CouplingScheme:
    """System-bath coupling: range nn, per-offset weights, overall strength g."""

    nn: float
    lam: dict[int, float]
    mu: dict[int, float]
    g: float

    def __post_init__(self):
        keys = coupling_keys(self.nn)
        for name, d in (("lambda", self.lam), ("mu", self.mu)):
            if sorted(d.keys()) != keys:
                raise ValueError(f"{name} keys {sorted(d.keys())} do not match nn={self.nn} (expect {keys})")
            for j, v in d.items():
                if abs(v) > 1 + 1e-12:
                    raise ValueError(f"{name}_{j} = {v} outside [-1, 1]")
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")

    @classmethod
    def local(cls, lam0: float = 1.0, mu0: float = 1.0, g: float = 1.0) -> "CouplingScheme":
        return cls(nn=0, lam={0: lam0}, mu={0: mu0}, g=g)

    def reflected(self) -> "CouplingScheme":
        """Couplings for the sublattice sign flip (theta -> pi - theta):
        c_j -> (-1)^j c_j."""
        return CouplingScheme(
            nn=self.nn,
            lam={j: v * (-1) ** j for j, v in self.lam.items()},
            mu={j: v * (-1) ** j for j, v in self.mu.items()},
            g=self.g,
        )

    def swapped(self) -> "CouplingScheme":
        """Couplings for the particle-hole map (theta -> theta + pi):
        lambda_j <-> mu_j."""
        return CouplingScheme(nn=self.nn, lam=dict(self.mu), mu=dict(self.lam),
                              g=self.g)

    def rescaled(self, c: float) -> "CouplingScheme":
        """Multiply all couplings by c and divide g by c (leaves g*A_k, g*B_k fixed)."""
        return CouplingScheme(
            nn=self.nn,
            lam={j: v * c for j, v in self.lam.items()},
            mu={j: v * c for j, v in self.mu.items()},
            g=self.g / c,
        )


@dataclass(frozen=True)
class BathSpec:
    """Bath splitting and mean cycle time."""

    delta: float
    cycle_time_mean: float

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if not (math.isfinite(self.cycle_time_mean) and self.cycle_time_mean > 0):
            raise ValueError(f"cycle_time_mean must be positive and finite, got {self.cycle_time_mean}")


@dataclass(frozen=True)
class FiniteEnvSpec:
    """Finite fermionic environments attached to system and bath."""

    kappa_prime: float
    delta_e: float
    p_e: float

    def __post_init__(self):
        if self.kappa_prime < 0:
            raise ValueError(f"kappa_prime must be >= 0, got {self.kappa_prime}")
        if not (-1 <= self.p_e <= 1):
            raise ValueError(f"p_e must lie in [-1, 1], got {self.p_e}")


def _w_r(theta: float, N: int, k: int) -> tuple[float, float]:
    x = 2 * math.pi * k / N
    return math.sin(theta) + math.cos(theta) * math.cos(x), math.cos(theta) * math.sin(x)


def dispersion(theta: float, N: int, k: int) -> float:
    """Mode energy sqrt(1 + sin(2 theta) cos(2 pi k / N)); symmetric in +-k."""
    val = 1.0 + math.sin(2 * theta) * math.cos(2 * math.pi * k / N)
    return math.sqrt(max(val, 0.0))


def bogoliubov_angle(theta: float, N: int, k: int) -> float:
    """Rotation angle phi_k diagonalizing the 2x2 pair block with +eps first.

    Branch: phi = atan2(eps - w, r), which gives phi in [0, pi/2] for
    k in [0, N/2]; at r = 0 this yields 0 for w >= 0 and pi/2 for w < 0.
    """
    w, r = _w_r(theta, N, k)
    eps = math.hypot(w, r)
    if eps == 0.0:
        return 0.0
    return math.atan2(eps - w, r)


def band_edges(theta: float) -> tuple[float, float]:
    """(eps_min, eps_max) = sqrt(1 -+ sin 2 theta)."""
    s = math.sin(2 * theta)
    return math.sqrt(max(1 - s, 0.0)), math.sqrt(1 + s)


def ground_state_energy(params: ModelParams) -> float:
    """-1/2 sum_k eps_k over the full Brillouin zone."""
    N, theta = params.N, params.theta
    return -0.5 * sum(dispersion(theta, N, k) for k in range(-N // 2 + 1, N // 2 + 1))


def energy_density_limit(theta: float) -> float:
    """Thermodynamic-limit energy density f(theta), absolute error <= 1e-10."""
    s = math.sin(2 * theta)
    val, err = quad(lambda x: math.sqrt(max(1 + s * math.cos(x), 0.0)), 0.0, math.pi,
                    epsabs=1e-12, epsrel=1e-12, limit=200)
    if err > 1e-10:
        raise RuntimeError(f"quadrature error {err:.2e} above tolerance")
    return val / (2 * math.pi)


def coupling_coefficients(scheme: CouplingScheme, theta: float, N: int, k: int) -> tuple[complex, complex]:
    """Momentum-space coupling amplitudes (A_k, B_k) in the Bogoliubov frame."""
    phi = bogoliubov_angle(theta, N, k)
    c, s = math.cos(phi), math.sin(phi)
    a = 0j
    b = 0j
    for j in coupling_keys(scheme.nn):
        ph = np.exp(-2j * math.pi * j * k / N)
        lam, mu = scheme.lam[j], scheme.mu[j]
        a += (c * lam + 1j * s * mu) * ph
        b += (-s * lam + 1j * c * mu) * ph
    return complex(a), complex(b)


def _pair_coupling_block(a: complex, b: complex, edge: bool) -> tuple[np.ndarray, np.ndarray]:
    """Upper 2x2 coupling sub-blocks (rows X, cols Y) and their conjugate layout.

    Generic pairs use the translation-invariant pattern [[A, B], [B, -A]].
    Edge modes live on a doubled (x, x^dag) basis where each physical term is
    counted twice; consistency of the expansion then requires
    [[A, B], [-B*, -A*]] (the two coincide when A is real and B imaginary).
    """
    if edge:
        top = np.array([[a, b], [-np.conj(b), -np.conj(a)]], dtype=complex)
    else:
        top = np.array([[a, b], [b, -a]], dtype=complex)
    return top, top.conj().T


@dataclass(frozen=True)
class ModeBlock:
    """Single-particle matrix and bookkeeping for one (k, -k) pair.

    `h_sb` is the weighted matrix whose second quantization is the exact block
    Hamiltonian.  For edge modes (k = 0, N/2, weight 1/2) the operator basis is
    doubled, (a, a^dag, b, b^dag, ...), so the Heisenberg generator of the
    mode operators is h_sb / weight.
    """

    k: int
    epsilon: float
    phi: float
    weight: float
    a_coeff: complex
    b_coeff: complex
    delta: float
    g: float
    h_sb: np.ndarray = field(repr=False)
    env: FiniteEnvSpec | None = None
    dsp: bool = False

    def __post_init__(self):
        h = self.h_sb
        if np.max(np.abs(h - h.conj().T)) > HERMITICITY_ATOL:
            raise ValueError("block Hamiltonian is not hermitian")

    @property
    def is_edge(self) -> bool:
        return self.weight == 0.5

    @property
    def n_modes(self) -> int:
        """Number of independent fermionic modes in the block's Fock space."""
        dim = self.h_sb.shape[0]
        return dim // 2 if self.is_edge else dim

    @property
    def generator(self) -> np.ndarray:
        """Single-particle Heisenberg generator (h_sb with the edge weight undone)."""
        return self.h_sb / self.weight


def block_hamiltonian(
    params: ModelParams,
    scheme: CouplingScheme,
    bath: BathSpec,
    k: int,
    env: FiniteEnvSpec | None = None,
    dsp: bool = False,
) -> ModeBlock:
    """Assemble the per-pair single-particle matrix.

    Without environments the matrix is 4x4 over (a_k, a_-k^dag, b_k, b_-k^dag);
    with a FiniteEnvSpec it is 8x8, appending one environment pair coupled to
    the system (amplitudes cos phi, -sin phi) and one coupled to the bath
    (amplitudes 1, 0).  With dsp=True the system splitting is removed from the
    evolution (the energy bookkeeping still uses the true epsilon).
    """
    return _block_raw(params.theta, params.N, scheme, bath, k, env=env, dsp=dsp)


def _block_raw(
    theta: float,
    N: int,
    scheme: CouplingScheme,
    bath: BathSpec,
    k: int,
    env: FiniteEnvSpec | None = None,
    dsp: bool = False,
) -> ModeBlock:
    """block_hamiltonian on raw values; accepts any finite theta (used by the
    theta-canonicalization equivalence checks)."""
    if not (0 <= k <= N // 2):
        raise ValueError(f"k must lie in [0, N/2], got {k}")
    eps = dispersion(theta, N, k)
    phi = bogoliubov_angle(theta, N, k)
    a, b = coupling_coefficients(scheme, theta, N, k)
    edge = k == 0 or k == N // 2
    weight = 0.5 if edge else 1.0

    n_pairs = 4 if env is not None else 2
    dim = 2 * n_pairs
    h = np.zeros((dim, dim), dtype=complex)

    eps_evo = 0.0 if dsp else eps
    diag = [eps_evo, bath.delta]
    if env is not None:
        diag += [env.delta_e, env.delta_e]
    for m, d in enumerate(diag):
        h[2 * m, 2 * m] = d
        h[2 * m + 1, 2 * m + 1] = -d

    def couple(m_row: int, m_col: int, amp_a: complex, amp_b: complex, strength: float):
        top, bot = _pair_coupling_block(strength * amp_a, strength * amp_b, edge)
        h[2 * m_row:2 * m_row + 2, 2 * m_col:2 * m_col + 2] = top
        h[2 * m_col:2 * m_col + 2, 2 * m_row:2 * m_row + 2] = bot

    couple(0, 1, a, b, scheme.g)
    if env is not None:
        couple(0, 2, math.cos(phi), -math.sin(phi), env.kappa_prime)
        couple(1, 3, 1.0, 0.0, env.kappa_prime)

    return ModeBlock(
        k=k,
        epsilon=eps,
        phi=phi,
        weight=weight,
        a_coeff=a,
        b_coeff=b,
        delta=bath.delta,
        g=scheme.g,
        h_sb=weight * h,
        env=env,
        dsp=dsp,
    )


@dataclass(frozen=True)
class CanonicalTheta:
    theta: float
    scheme: CouplingScheme
    mode_relabeled: bool
    """True when the mapping sends pair index k to N/2 - k."""


def canonicalize_theta(theta_raw: float, scheme: CouplingScheme) -> CanonicalTheta:
    """Map theta from [-pi/2, 3pi/2] into [0, pi/2].

    Two exact symmetries are available (verified by comparing the exact
    per-mode cycle maps):

    * sublattice sign flip: theta -> pi - theta, couplings c_j -> (-1)^j c_j,
      modes relabeled k -> k +- N/2;
    * particle-hole map: theta -> theta + pi, couplings lambda_j <-> mu_j,
      modes unchanged.

    Negative theta uses their composition (reflect, swap, and relabel).
    """
    if not math.isfinite(theta_raw):
        raise ValueError("theta must be finite")
    lo, hi = -math.pi / 2 - 1e-12, 3 * math.pi / 2 + 1e-12
    if not (lo <= theta_raw <= hi):
        raise ValueError(f"theta={theta_raw} outside [-pi/2, 3pi/2]")

    if theta_raw > math.pi + 1e-15:
        # particle-hole branch: theta - pi, lambda <-> mu
        theta_raw = theta_raw - math.pi
        scheme = scheme.swapped()
    if -1e-15 <= theta_raw <= math.pi / 2 + 1e-15:
        return CanonicalTheta(min(max(theta_raw, 0.0), math.pi / 2), scheme, False)
    if theta_raw < 0:
        # -theta = (pi - (theta + pi)): particle-hole then sublattice flip
        return CanonicalTheta(-theta_raw, scheme.swapped().reflected(), True)
    # (pi/2, pi]: sublattice flip alone
    return CanonicalTheta(math.pi - theta_raw, scheme.reflected(), True)

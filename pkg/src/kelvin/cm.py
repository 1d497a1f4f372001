"""Fast exact engine in the fermionic correlation-matrix formalism.

States are tracked per block through gamma_ij = (1/2) tr(rho [alpha_i,
alpha_j^dag]) over the operator vector (a_k, a_-k^dag) for the system pair
(2x2; edges reduce to a diagonal 2x2 on (a, a^dag)).  One cooling cycle acts
as gamma -> A_S gamma A_S^dag + A_SB gamma_B0 A_SB^dag with the A-blocks cut
out of the single-particle propagator, and uniform gain/loss noise of rate
kappa multiplies the whole cycle by exp(-2 kappa t).

Conventions differ from Majorana-covariance treatments that absorb a factor
of two into the time and normalize the noise rate differently; here the
propagator for a physical cycle of duration t is exp(-i G t) with G the
block's Heisenberg generator, which is what reproduces the Fock-space engine
exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from ._linalg import FIXED_POINT_ATOL, hermitize
from .errors import NonUniqueFixedPoint, ResonantDenominator
from .fock import DensityBlock, mode_operators
from .model import ModeBlock

logger = logging.getLogger(__name__)

__all__ = [
    "CorrelationMatrix",
    "EvolutionBlocks",
    "vacuum_cm",
    "most_excited_cm",
    "maximally_mixed_cm",
    "evolve_cm",
    "evolution_blocks",
    "averaged_evolution_kron",
    "cycle_map_cm",
    "steady_state_cm",
    "finite_env_evolution_blocks",
    "finite_env_steady_cm",
    "cm_energy",
    "cm_fidelity",
    "density_to_cm",
    "cm_to_density",
    "perturbative_blocks",
    "majorana_damping_check",
    "bravyi_noise_matrices",
]

CM_EIG_SLACK = 1e-10


@dataclass
class CorrelationMatrix:
    """Hermitian matrix of symmetrized two-point functions, spectrum in [-1/2, 1/2]."""

    matrix: np.ndarray
    basis: tuple[str, ...]

    def validate(self) -> "CorrelationMatrix":
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("correlation matrix not hermitian")
        ev = np.linalg.eigvalsh(hermitize(m))
        if ev.min() < -0.5 - CM_EIG_SLACK or ev.max() > 0.5 + CM_EIG_SLACK:
            raise ValueError(f"correlation-matrix spectrum {ev} outside [-1/2, 1/2]")
        return self


_SYS_BASIS = ("a_+", "a_-dag")


def vacuum_cm() -> np.ndarray:
    """Ground-state (Bogoliubov vacuum) system CM."""
    return np.diag([0.5, -0.5]).astype(complex)


def most_excited_cm() -> np.ndarray:
    return np.diag([-0.5, 0.5]).astype(complex)


def maximally_mixed_cm() -> np.ndarray:
    return np.zeros((2, 2), dtype=complex)


def evolve_cm(gamma: np.ndarray, generator: np.ndarray, t: float) -> np.ndarray:
    """Closed evolution of a CM under the quadratic generator for time t."""
    e, v = np.linalg.eigh(generator)
    u = (v * np.exp(-1j * e * t)) @ v.conj().T
    return u @ gamma @ u.conj().T


@dataclass
class EvolutionBlocks:
    """System/bath partition of the block propagator for one cycle."""

    a_s: np.ndarray
    a_sb: np.ndarray
    a_bs: np.ndarray
    a_b: np.ndarray

    def assemble(self) -> np.ndarray:
        top = np.hstack([self.a_s, self.a_sb])
        bot = np.hstack([self.a_bs, self.a_b])
        return np.vstack([top, bot])


def _propagator(block: ModeBlock, t: float) -> np.ndarray:
    e, v = np.linalg.eigh(block.generator)
    return (v * np.exp(-1j * e * t)) @ v.conj().T


def evolution_blocks(block: ModeBlock, t: float) -> EvolutionBlocks:
    u = _propagator(block, t)
    return EvolutionBlocks(u[:2, :2], u[:2, 2:4], u[2:4, :2], u[2:4, 2:4])


def cycle_map_cm(gamma_s: np.ndarray, blocks: EvolutionBlocks,
                 gamma_b0: np.ndarray) -> np.ndarray:
    """One cooling cycle: unitary block action plus fresh-bath injection."""
    return (blocks.a_s @ gamma_s @ blocks.a_s.conj().T
            + blocks.a_sb @ gamma_b0 @ blocks.a_sb.conj().T)


def _kron_pair(a: np.ndarray) -> np.ndarray:
    return np.kron(a, a.conj())


def averaged_evolution_kron(block: ModeBlock, t_mean: float,
                            nodes: int = 96) -> tuple[np.ndarray, np.ndarray]:
    """(E[A_S (x) A_S*], E[A_SB (x) A_SB*]) over uniform times on [0, 2 t_mean].

    These are the vectorized-map ingredients of the randomized-time cycle; the
    linear CM map averages directly because it is linear in the kron blocks.
    """
    x, w = leggauss(nodes)
    ts = t_mean * (x + 1.0)
    w = w / 2.0
    e, v = np.linalg.eigh(block.generator)
    ks = np.zeros((4, 4), dtype=complex)
    ksb = np.zeros((4, 4), dtype=complex)
    for wi, ti in zip(w, ts):
        u = (v * np.exp(-1j * e * ti)) @ v.conj().T
        ks += wi * _kron_pair(u[:2, :2])
        ksb += wi * _kron_pair(u[:2, 2:4])
    return ks, ksb


def _solve_fixed_point(k_s: np.ndarray, rhs: np.ndarray, damping: float) -> np.ndarray:
    """Solve (I - damping K_S) x = rhs by LU with one step of refinement.

    Weakly attracting fixed points make the system ill-conditioned, but the
    solution is a ratio of commensurately small quantities and the residual
    check downstream guards its quality; only a numerically singular system
    (no unique fixed point) is rejected here.
    """
    a = np.eye(4) - damping * k_s
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e14:
        sv = np.linalg.svd(a, compute_uv=False)
        raise NonUniqueFixedPoint(int(np.sum(sv < 1e-12 * sv[0])),
                                  f"fixed-point system singular (cond {cond:.2e})")
    logger.debug("cm fixed-point solve, condition number %.3e", cond)
    x = np.linalg.solve(a, rhs)
    # refinement with extended-precision residuals pushes the forward error
    # below the cond*eps floor (the 4x4 long-double matmul is negligible)
    a_ld = a.astype(np.clongdouble)
    rhs_ld = rhs.astype(np.clongdouble)
    for _ in range(2):
        r = np.asarray(rhs_ld - a_ld @ x.astype(np.clongdouble), dtype=complex)
        x = x + np.linalg.solve(a, r)
    return x


def steady_state_cm(blocks: EvolutionBlocks, gamma_b0: np.ndarray,
                    damping: float = 1.0,
                    kron_blocks: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Fixed point of the (possibly damped) cycle map by a vectorized solve.

    damping = 1 is the noiseless cycle; uniform gain/loss noise of rate kappa
    over a cycle of duration t enters as damping = exp(-2 kappa t).  Passing
    `kron_blocks` (from averaged_evolution_kron) replaces the single-time
    blocks with their randomized-time averages.
    """
    if kron_blocks is not None:
        k_s, k_sb = kron_blocks
    else:
        k_s, k_sb = _kron_pair(blocks.a_s), _kron_pair(blocks.a_sb)
    rhs = damping * (k_sb @ gamma_b0.reshape(-1))
    gamma = hermitize(_solve_fixed_point(k_s, rhs, damping).reshape(2, 2))
    resid = np.max(np.abs(
        gamma.reshape(-1) - damping * (k_s @ gamma.reshape(-1)) - rhs))
    if resid > FIXED_POINT_ATOL:
        raise NonUniqueFixedPoint(1, f"cm fixed-point residual {resid:.2e}")
    return gamma


def finite_env_evolution_blocks(block: ModeBlock, t: float) -> tuple[EvolutionBlocks, EvolutionBlocks]:
    """(system/bath, system/env1) partitions of the 8x8 block propagator."""
    if block.env is None:
        raise ValueError("block carries no environment")
    u = _propagator(block, t)
    sb = EvolutionBlocks(u[:2, :2], u[:2, 2:4], u[2:4, :2], u[2:4, 2:4])
    se1 = EvolutionBlocks(u[:2, :2], u[:2, 4:6], u[4:6, :2], u[4:6, 4:6])
    return sb, se1


def finite_env_steady_cm(blocks_sb: EvolutionBlocks, blocks_se1: EvolutionBlocks,
                         p_e: float, gamma_b0: np.ndarray | None = None) -> np.ndarray:
    """Fixed point with bath and environment injections summed.

    The environment pair injects p_e times the bath ground-state CM; the
    (higher-order) bath-environment channel is neglected, matching the
    closed-form treatment.
    """
    if gamma_b0 is None:
        gamma_b0 = vacuum_cm()
    k_s = _kron_pair(blocks_sb.a_s)
    inj = _kron_pair(blocks_sb.a_sb) + p_e * _kron_pair(blocks_se1.a_sb)
    rhs = inj @ gamma_b0.reshape(-1)
    gamma = hermitize(_solve_fixed_point(k_s, rhs, 1.0).reshape(2, 2))
    resid = np.max(np.abs(gamma.reshape(-1) - k_s @ gamma.reshape(-1) - rhs))
    if resid > FIXED_POINT_ATOL:
        raise NonUniqueFixedPoint(1, f"cm fixed-point residual {resid:.2e}")
    return gamma


# ---------------------------------------------------------------------------
# energies, fidelities, and conversions
# ---------------------------------------------------------------------------

def cm_energy(gamma: np.ndarray, epsilon: float, weight: float) -> float:
    """Block energy weight * eps * (gamma_22 - gamma_11)."""
    return float(weight * epsilon * (gamma[1, 1].real - gamma[0, 0].real))


def _occupations(gamma: np.ndarray) -> tuple[float, float, complex]:
    n1 = 0.5 - gamma[0, 0].real
    n2 = 0.5 + gamma[1, 1].real
    c = complex(gamma[0, 1])
    return n1, n2, c


def cm_fidelity(gamma: np.ndarray, edge: bool) -> float:
    """Overlap with the block ground state (vacuum probability), via Wick."""
    n1, n2, c = _occupations(gamma)
    if edge:
        return max(1.0 - n1, 0.0)
    r = n1 * n2 + abs(c) ** 2
    return max(1.0 - n1 - n2 + r, 0.0)


@lru_cache(maxsize=2)
def _pair_moment_ops():
    a1, a2 = mode_operators(2)
    return a1.conj().T @ a1, a2.conj().T @ a2, a1 @ a2


def density_to_cm(rho: DensityBlock | np.ndarray) -> np.ndarray:
    """System CM of a block density matrix (generic 4x4 or edge 2x2)."""
    m = rho.matrix if isinstance(rho, DensityBlock) else rho
    if m.shape[0] == 2:
        n = m[1, 1].real
        return np.diag([0.5 - n, n - 0.5]).astype(complex)
    n1_op, n2_op, pair_op = _pair_moment_ops()
    n1 = np.trace(m @ n1_op).real
    n2 = np.trace(m @ n2_op).real
    c = np.trace(m @ pair_op)
    return np.array([[0.5 - n1, c], [np.conj(c), n2 - 0.5]], dtype=complex)


def cm_to_density(gamma: np.ndarray, edge: bool, k: int = -1) -> DensityBlock:
    """Reconstruct the Gaussian block density matrix from its system CM.

    Wick's theorem fixes the double occupancy: <n_+ n_-> = n_+ n_- + |c|^2
    with c = <a_+ a_->; parity-even Gaussian blocks have no other freedom.
    """
    if edge:
        n = 0.5 + gamma[1, 1].real
        m = np.diag([1.0 - n, n]).astype(complex)
        return DensityBlock(np.clip(m.real, 0, None).astype(complex), k)
    n1, n2, c = _occupations(gamma)
    r = n1 * n2 + abs(c) ** 2
    q = n1 - r
    p = n2 - r
    m0 = 1.0 - p - q - r
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0], rho[1, 1], rho[2, 2], rho[3, 3] = m0, p, q, r
    rho[0, 3] = -np.conj(c)
    rho[3, 0] = -c
    return DensityBlock(rho, k)


# ---------------------------------------------------------------------------
# perturbative (Dyson) blocks used for validation
# ---------------------------------------------------------------------------

def quadrature_couplings(block: ModeBlock) -> tuple[complex, complex]:
    """Coupling combinations (f_k, p_k) used by the quadrature-basis expansion."""
    phi = block.phi
    f = 0j
    p = 0j
    # f = -e^{i phi} sum (lam_j + mu_j) e^{-i 2 pi j k / N} and
    # p = e^{-i phi} sum (lam_j - mu_j) e^{-i 2 pi j k / N}; recover the sums
    # from the stored (A, B): lam-sum = cos(phi)A - sin(phi)B parts.
    a, b = block.a_coeff, block.b_coeff
    c, s = math.cos(phi), math.sin(phi)
    lam_sum = c * a - s * b        # sum lam_j e^{-i phi_k j}
    mu_sum = (s * a + c * b) / 1j  # sum mu_j e^{-i phi_k j}
    f = -np.exp(1j * phi) * (lam_sum + mu_sum)
    p = np.exp(-1j * phi) * (lam_sum - mu_sum)
    return complex(f), complex(p)


def perturbative_blocks(epsilon: float, g: float, delta: float, t: float,
                        f_k: complex, p_k: complex):
    """Closed-form Dyson blocks (A_S^0, A_SB^1, A_S^2, Q) at internal time T = 2t.

    The blocks expand the quadrature-basis propagator P(T) = exp(+i h T):
    P_SS = A_S^0 + g^2 A_S^2 + O(g^4) and P_SB = g A_SB^1 + O(g^3).  Only
    |A_SB^1| enters steady-state energies, so the overall sign of the odd
    block is a convention.  Valid away from the resonant denominator
    eps^2 = delta^2; callers hitting it must use the exact engines.
    """
    if abs(epsilon**2 - delta**2) < 1e-9:
        raise ResonantDenominator(f"eps^2 - delta^2 = {epsilon**2 - delta**2:.2e}")
    T = 2.0 * t
    ce, se = math.cos(epsilon * T), math.sin(epsilon * T)
    cd, sd = math.cos(delta * T), math.sin(delta * T)
    x1 = (epsilon * p_k - delta * f_k) / (epsilon**2 - delta**2)
    x2 = -1j * (epsilon * f_k - delta * p_k) / (epsilon**2 - delta**2)

    a_s0 = np.array([[ce, se], [-se, ce]], dtype=complex)
    a_sb1 = -np.array(
        [[x1 * (cd - ce), x1 * sd + 1j * x2 * se],
         [x1 * se + 1j * x2 * sd, -1j * x2 * (cd - ce)]], dtype=complex)

    cross = 1j * f_k * np.conj(x2) - p_k * np.conj(x1)
    mag = abs(x1) ** 2 + abs(x2) ** 2
    im_term = (delta / epsilon) * se * np.imag(1j * x1 * np.conj(x2)) if epsilon != 0 else 0.0
    a11 = abs(x1) ** 2 * (cd - ce) + 0.5 * T * se * cross
    a12 = (1j * x1 * np.conj(x2) * sd - 0.5 * se * mag
           - 1j * im_term - cross * 0.5 * T * ce)
    a21 = (1j * x2 * np.conj(x1) * sd + 0.5 * se * mag
           - 1j * im_term + cross * 0.5 * T * ce)
    a22 = abs(x2) ** 2 * (cd - ce) + 0.5 * T * se * cross
    a_s2 = np.array([[a11, a12], [a21, a22]], dtype=complex)

    q = 2.0 * mag * (1.0 - cd * ce) + 4.0 * sd * se * np.imag(x1 * np.conj(x2))
    return a_s0, a_sb1, a_s2, float(np.real(q))


def omega_basis_generator(epsilon: float, g: float, delta: float,
                          f_k: complex, p_k: complex) -> np.ndarray:
    """Single-particle generator in the quadrature basis the Dyson blocks use."""
    return 1j * np.array(
        [[0, -epsilon, 0, g * f_k],
         [epsilon, 0, g * p_k, 0],
         [0, -g * np.conj(p_k), 0, -delta],
         [-g * np.conj(f_k), 0, delta, 0]], dtype=complex)


# ---------------------------------------------------------------------------
# noise damping in the Majorana picture
# ---------------------------------------------------------------------------

def bravyi_noise_matrices(n_modes: int, kappa: float) -> tuple[np.ndarray, np.ndarray]:
    """(M, Y) for uniform gain/loss noise in the Majorana covariance equation.

    In the convention d rho/dt = sum_mu (2 L rho L^dag - {L^dag L, rho}) with
    L linear in Majoranas, our rate-kappa gain/loss channel has M =
    (kappa/4) I and therefore Y = 4i(M* - M) = 0: the noise is pure damping.
    """
    m = np.zeros((2 * n_modes, 2 * n_modes), dtype=complex)
    for j in range(n_modes):
        for sign in (+1.0, -1.0):
            l = np.zeros(2 * n_modes, dtype=complex)
            l[2 * j] = 0.5 * math.sqrt(kappa / 2.0)
            l[2 * j + 1] = sign * 0.5j * math.sqrt(kappa / 2.0)
            m += np.outer(l, l.conj())
    y = 4j * (m.conj() - m)
    return m, y


def majorana_damping_check(block: ModeBlock, kappa: float, t: float,
                           gamma0: np.ndarray) -> np.ndarray:
    """Propagate a joint CM one noisy interval and confirm pure damping.

    Verifies M proportional to the identity (so Y = 0) and returns
    exp(-2 kappa t) U gamma0 U^dag, the damped unitary evolution of the full
    block CM.
    """
    n_modes = block.n_modes
    m, y = bravyi_noise_matrices(n_modes, kappa)
    if np.max(np.abs(m - m[0, 0] * np.eye(2 * n_modes))) > 1e-14:
        raise RuntimeError("noise M-matrix not proportional to identity")
    if np.max(np.abs(y)) > 1e-14:
        raise RuntimeError("noise Y-matrix does not vanish")
    return math.exp(-2.0 * kappa * t) * evolve_cm(gamma0, block.generator, t)

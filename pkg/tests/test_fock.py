import itertools
import math

import numpy as np
import pytest

from kelvin import fock
from kelvin._linalg import trace_norm
from kelvin.errors import NonUniqueFixedPoint
from kelvin.fock import mode_operators
from kelvin.model import (
    BathSpec,
    CouplingScheme,
    FiniteEnvSpec,
    ModelParams,
    block_hamiltonian,
    canonicalize_theta,
    coupling_keys,
)


# ---------------------------------------------------------------------------
# independent constructions used as oracles
# ---------------------------------------------------------------------------

def tilde_basis_pair_hamiltonian(theta, n, scheme, delta, k):
    """Second-quantize the (k, -k) pair directly in the unrotated momentum
    basis, from the 2x2 system block, the flat bath, and the real-space
    coupling Fourier components.  Mode order: (a_k, a_-k, b_k, b_-k)."""
    a_k, a_mk, b_k, b_mk = mode_operators(4)
    w = math.sin(theta) + math.cos(theta) * math.cos(2 * math.pi * k / n)
    r = math.cos(theta) * math.sin(2 * math.pi * k / n)
    eye = np.eye(16)

    def lam_sum(kk):
        return sum(scheme.lam[j] * np.exp(-2j * math.pi * j * kk / n)
                   for j in coupling_keys(scheme.nn))

    def mu_sum(kk):
        return sum(scheme.mu[j] * np.exp(-2j * math.pi * j * kk / n)
                   for j in coupling_keys(scheme.nn))

    h = w * (a_k.conj().T @ a_k + a_mk.conj().T @ a_mk - eye)
    h = h + r * (a_k.conj().T @ a_mk.conj().T + a_mk @ a_k)
    h = h + delta * (b_k.conj().T @ b_k + b_mk.conj().T @ b_mk - eye)
    g = scheme.g
    v = g * lam_sum(k) * (a_k.conj().T @ b_k) \
        + 1j * g * mu_sum(k) * (a_mk @ b_k) \
        + g * lam_sum(-k) * (a_mk.conj().T @ b_mk) \
        + 1j * g * mu_sum(-k) * (a_k @ b_mk)
    h = h + v + v.conj().T
    return h, (a_k, a_mk, b_k, b_mk)


def tilde_basis_edge_hamiltonian(theta, n, scheme, delta, k):
    """Edge-mode (k = 0 or N/2) Hamiltonian in the unrotated basis.

    The Fourier factors e^{-2 pi i j k / N} are (+-1)^j at the zone edges, so
    the coupling sums are real.
    """
    a, b = mode_operators(2)
    w = math.sin(theta) + math.cos(theta) * math.cos(2 * math.pi * k / n)
    lam = sum(scheme.lam[j] * math.cos(2 * math.pi * j * k / n)
              for j in coupling_keys(scheme.nn))
    mu = sum(scheme.mu[j] * math.cos(2 * math.pi * j * k / n)
             for j in coupling_keys(scheme.nn))
    g = scheme.g
    eye = np.eye(4)
    h = w * (a.conj().T @ a - 0.5 * eye) + delta * (b.conj().T @ b - 0.5 * eye)
    v = g * lam * (a.conj().T @ b) + 1j * g * mu * (a @ b)
    return h + v + v.conj().T, (a, b)


def evolve_and_trace(h, rho_s, rho_b, t, d_sys, d_rest):
    e, v = np.linalg.eigh(h)
    u = (v * np.exp(-1j * e * t)) @ v.conj().T
    joint = np.kron(rho_s, rho_b)
    out = u @ joint @ u.conj().T
    return np.trace(out.reshape(d_sys, d_rest, d_sys, d_rest), axis1=1, axis2=3)


# ---------------------------------------------------------------------------
# second quantization
# ---------------------------------------------------------------------------

class TestSecondQuantize:
    def test_decoupled_spectrum_is_occupation_enumeration(self, small_params, bath):
        scheme = CouplingScheme.local(1.0, 1.0, g=0.0)
        blk = block_hamiltonian(small_params, scheme, bath, k=3)
        fb = fock.second_quantize(blk)
        eps, dl = blk.epsilon, bath.delta
        expect = sorted(
            eps * (n1 + n2 - 1) + dl * (m1 + m2 - 1)
            for n1, n2, m1, m2 in itertools.product((0, 1), repeat=4))
        assert np.allclose(np.sort(np.linalg.eigvalsh(fb.hamiltonian)), expect,
                           atol=1e-12)

    def test_edge_decoupled_spectrum(self, small_params, bath):
        scheme = CouplingScheme.local(1.0, 1.0, g=0.0)
        blk = block_hamiltonian(small_params, scheme, bath, k=0)
        fb = fock.second_quantize(blk)
        eps, dl = blk.epsilon, bath.delta
        expect = sorted(eps * (n - 0.5) + dl * (m - 0.5)
                        for n, m in itertools.product((0, 1), repeat=2))
        assert np.allclose(np.sort(np.linalg.eigvalsh(fb.hamiltonian)), expect,
                           atol=1e-12)

    def test_hermitian_and_parity_conserving(self, small_params, generic_scheme, bath):
        for k in (0, 2, 6):
            fb = fock.second_quantize(
                block_hamiltonian(small_params, generic_scheme, bath, k=k))
            h = fb.hamiltonian
            assert np.max(np.abs(h - h.conj().T)) < 1e-12
            par = np.diag([(-1.0) ** bin(i).count("1") for i in range(h.shape[0])])
            assert np.max(np.abs(h @ par - par @ h)) < 1e-12

    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_pair_block_matches_unrotated_construction(self, k, generic_scheme, bath):
        """The Bogoliubov-frame block is unitarily equivalent to the pair
        Hamiltonian built independently in the unrotated momentum basis, and
        generates identical cooling dynamics."""
        theta, n = 0.7, 12
        p = ModelParams(n, theta)
        blk = block_hamiltonian(p, generic_scheme, bath, k=k)
        fb = fock.second_quantize(blk)
        h_tilde, (a_k, a_mk, _, _) = tilde_basis_pair_hamiltonian(
            theta, n, generic_scheme, bath.delta, k)

        assert np.allclose(np.sort(np.linalg.eigvalsh(fb.hamiltonian)),
                           np.sort(np.linalg.eigvalsh(h_tilde)), atol=1e-11)

        # dynamics check: evolve the unrotated vacuum |0000> in both frames
        # and compare the quasiparticle pair energy after every cycle.  The
        # pair Hamiltonian acts on the first two tensor factors only, so it
        # restricts exactly to the system block.
        phi = blk.phi
        ahat_k = math.cos(phi) * a_k + math.sin(phi) * a_mk.conj().T
        ahat_mk = math.cos(phi) * a_mk - math.sin(phi) * a_k.conj().T
        h_pair = blk.epsilon * (ahat_k.conj().T @ ahat_k
                                + ahat_mk.conj().T @ ahat_mk - np.eye(16))
        h_sys = np.trace(h_pair.reshape(4, 4, 4, 4), axis1=1, axis2=3) / 4.0
        assert np.max(np.abs(h_pair - np.kron(h_sys, np.eye(4)))) < 1e-12

        rho_t = np.zeros((4, 4), dtype=complex)
        rho_t[0, 0] = 1.0  # unrotated vacuum, system factor
        # the same state in the Bogoliubov frame: Gaussian with occupation
        # sin^2 phi per mode and pairing <a_k a_-k> = -sin phi cos phi
        s, c = math.sin(phi), math.cos(phi)
        from kelvin.cm import cm_to_density
        gamma = np.array([[0.5 - s * s, -s * c], [-s * c, s * s - 0.5]],
                         dtype=complex)
        rho_h = cm_to_density(gamma, edge=False).matrix
        assert np.trace(rho_h @ np.diag([-1.0, 0, 0, 1.0])).real * blk.epsilon == \
            pytest.approx(np.trace(rho_t @ h_sys).real, abs=1e-12)

        s_map = fock.exact_cycle_map(fb, 2.1)
        rho_b = np.zeros((4, 4), dtype=complex)
        rho_b[0, 0] = 1.0
        for _ in range(4):
            rho_h = s_map.apply(rho_h)
            rho_t = evolve_and_trace(h_tilde, rho_t, rho_b, 2.1, 4, 4)
            e_h, _ = fock.block_energy(rho_h, blk.epsilon, blk.weight)
            e_t = np.real(np.trace(rho_t @ h_sys))
            assert e_h == pytest.approx(e_t, abs=1e-10)

    @pytest.mark.parametrize("theta", [0.5, 1.0])
    @pytest.mark.parametrize("k_frac", [0.0, 0.5])
    def test_edge_block_matches_unrotated_construction(self, theta, k_frac,
                                                       generic_scheme, bath):
        """Edge modes: the doubled-basis block reproduces the map built from
        the real-space coupling in the unrotated frame, for both Bogoliubov
        branches (phi = 0 and phi = pi/2)."""
        n = 12
        k = int(k_frac * n)
        p = ModelParams(n, theta)
        blk = block_hamiltonian(p, generic_scheme, bath, k=k)
        s_map = fock.exact_cycle_map(blk, bath.cycle_time_mean)

        h_tilde, _ = tilde_basis_edge_hamiltonian(theta, n, generic_scheme,
                                                  bath.delta, k)
        flipped = blk.phi > 1.0  # phi = pi/2 branch: hatted mode is the hole
        rho_t = np.diag([0.0, 1.0]).astype(complex) if flipped \
            else np.diag([1.0, 0.0]).astype(complex)
        rho_h = np.diag([1.0, 0.0]).astype(complex)
        rho_b = np.diag([1.0, 0.0]).astype(complex)
        for _ in range(5):
            rho_h = s_map.apply(rho_h)
            rho_t = evolve_and_trace(h_tilde, rho_t, rho_b, bath.cycle_time_mean, 2, 2)
            n_h = rho_h[1, 1].real
            n_t = rho_t[1, 1].real
            expect = 1.0 - n_t if flipped else n_t
            assert n_h == pytest.approx(expect, abs=1e-11)


# ---------------------------------------------------------------------------
# cycle maps
# ---------------------------------------------------------------------------

class TestExactCycleMap:
    def test_zero_time_is_identity(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        s = fock.exact_cycle_map(blk, 0.0)
        assert np.allclose(s.matrix, np.eye(16), atol=1e-12)

    def test_decoupled_preserves_populations(self, small_params, bath, rng):
        scheme = CouplingScheme.local(1.0, 1.0, g=0.0)
        blk = block_hamiltonian(small_params, scheme, bath, k=2)
        s = fock.exact_cycle_map(blk, 3.7)
        pops = rng.dirichlet(np.ones(4))
        rho = np.diag(pops).astype(complex)
        assert np.allclose(s.apply(rho), rho, atol=1e-12)

    def test_negative_time_rejected(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        with pytest.raises(ValueError):
            fock.exact_cycle_map(blk, -1.0)

    def test_trace_preserving_and_cp(self, rng, bath):
        for _ in range(25):
            p = ModelParams(10, float(rng.uniform(0, math.pi / 2)))
            scheme = CouplingScheme.local(float(rng.uniform(-1, 1)),
                                          float(rng.uniform(-1, 1)),
                                          float(rng.uniform(0, 0.5)))
            k = int(rng.integers(0, 6))
            t = float(rng.uniform(0, 10))
            s = fock.exact_cycle_map(block_hamiltonian(p, scheme, bath, k=k), t)
            assert s.is_trace_preserving(1e-10)
            assert s.choi_min_eig() >= -1e-9

    def test_resonant_averaged_steady_energy(self):
        """Randomized-time steady state at exact resonance: the closed-form
        limit gives e = 2 gamma_h / (gamma_c + gamma_h) with
        gamma_c = (4/3) g^2 t^2, which evaluates to 3/(4 (Delta t)^2) up to
        the small heating correction; tolerance 20%."""
        p = ModelParams(200, math.pi / 3)
        scheme = CouplingScheme.local(1.0, 1.0, 1e-4)
        bath = BathSpec(1.0, 20.0)
        blk = block_hamiltonian(p, scheme, bath, k=50)
        s = fock.averaged_cycle_map(blk, 20.0, nodes=96)
        rho, _ = fock.steady_state(s)
        _, e_rel = fock.block_energy(rho, blk.epsilon, blk.weight)
        assert abs(e_rel - 3.0 / (4.0 * 400.0)) <= 0.2 * 3.0 / (4.0 * 400.0)

    def test_parity_superselection(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        s = fock.exact_cycle_map(blk, 2.3)
        assert s.parity_leakage() < 1e-12

    def test_concatenation_matches_product(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        s1 = fock.exact_cycle_map(blk, 1.2)
        s2 = fock.exact_cycle_map(blk, 2.9)
        composed = s2.compose(s1)
        rho = fock.most_excited_density(False).matrix
        assert np.max(np.abs(composed.apply(rho) - s2.apply(s1.apply(rho)))) < 1e-12


class TestNoisyCycleMap:
    def test_zero_noise_reduces_to_exact(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        a = fock.noisy_cycle_map(blk, 2.0, 0.0)
        b = fock.exact_cycle_map(blk, 2.0)
        assert np.allclose(a.matrix, b.matrix, atol=1e-13)

    def test_strong_noise_depolarizes(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        s = fock.noisy_cycle_map(blk, 2.0, kappa=50.0)
        rho, _ = fock.steady_state(s)
        assert np.allclose(rho.matrix, np.eye(4) / 4, atol=1e-8)
        e_val, e_rel = fock.block_energy(rho, blk.epsilon, blk.weight)
        assert abs(e_val) < 1e-8 and abs(e_rel - 1.0) < 1e-8

    def test_negative_kappa_rejected(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        with pytest.raises(ValueError):
            fock.noisy_cycle_map(blk, 1.0, -0.1)

    @pytest.mark.parametrize("k", [0, 2])
    def test_factorized_equals_joint_liouvillian(self, k, small_params,
                                                 generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=k)
        gap = fock.noise_factorization_gap(blk, kappa=0.03, t=2.7)
        assert gap <= 1e-8

    def test_noise_order_independence(self, small_params, generic_scheme, bath):
        """On physical (parity-diagonal) states, pre-mixing bath and system
        (noise first) equals running the pure-bath cycle and applying the
        noise channel afterwards."""
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=3)
        fb = fock.second_quantize(blk)
        t, kappa = 2.7, 0.03
        first = fock.noisy_cycle_map(fb, t, kappa)
        last = fock.Superoperator(
            fock.noise_transfer(fb.n_sys_modes, kappa, t)
            @ fock.exact_cycle_map(fb, t).matrix, fb.d_sys)
        a, idx = first.restricted()
        b, _ = last.restricted()
        assert np.max(np.abs(a - b)) < 1e-10


class TestFiniteEnvironmentMap:
    def test_zero_coupling_equals_exact(self, small_params, generic_scheme, bath):
        env = FiniteEnvSpec(0.0, 0.8, 0.3)
        blk_e = block_hamiltonian(small_params, generic_scheme, bath, k=2, env=env)
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        a = fock.finite_environment_map(blk_e, 2.0)
        b = fock.exact_cycle_map(blk, 2.0)
        assert np.max(np.abs(a.matrix - b.matrix)) < 1e-12

    def test_requires_environment(self, small_params, generic_scheme, bath):
        blk = block_hamiltonian(small_params, generic_scheme, bath, k=2)
        with pytest.raises(ValueError):
            fock.finite_environment_map(blk, 1.0)

    def test_quadratic_noise_scaling(self):
        p = ModelParams(12, 1.0)
        g = 0.1
        scheme = CouplingScheme.local(1.0, 0.0, g)
        bath = BathSpec(0.744, 3.33)
        blk0 = block_hamiltonian(p, scheme, bath, k=3)
        rho0, _ = fock.steady_state(fock.exact_cycle_map(blk0, bath.cycle_time_mean))
        e0, _ = fock.block_energy(rho0, blk0.epsilon, blk0.weight)
        kps = [1e-3 * g, 1e-2 * g, 1e-1 * g]
        incr = []
        for kp in kps:
            env = FiniteEnvSpec(kp, 0.7, 0.0)
            blk = block_hamiltonian(p, scheme, bath, k=3, env=env)
            rho, _ = fock.steady_state(
                fock.finite_environment_map(blk, bath.cycle_time_mean))
            e, _ = fock.block_energy(rho, blk.epsilon, blk.weight)
            incr.append(e - e0)
        slope = np.polyfit(np.log(kps), np.log(incr), 1)[0]
        assert abs(slope - 2.0) <= 0.1

    def test_invalid_pe_rejected(self):
        with pytest.raises(ValueError):
            FiniteEnvSpec(0.1, 0.5, 1.5)


# ---------------------------------------------------------------------------
# steady states, energies, rates
# ---------------------------------------------------------------------------

class TestSteadyState:
    def test_identity_map_rejected(self, small_params, bath):
        scheme = CouplingScheme.local(1.0, 1.0, g=0.0)
        blk = block_hamiltonian(small_params, scheme, bath, k=2)
        with pytest.raises(NonUniqueFixedPoint) as exc:
            fock.steady_state(fock.exact_cycle_map(blk, 2.0))
        assert exc.value.eigenspace_dim > 1

    def test_decoupled_noisy_steady_is_maximally_mixed(self, small_params, bath):
        scheme = CouplingScheme.local(1.0, 1.0, g=0.0)
        blk = block_hamiltonian(small_params, scheme, bath, k=2)
        rho, _ = fock.steady_state(fock.noisy_cycle_map(blk, 2.0, kappa=0.05))
        assert np.allclose(rho.matrix, np.eye(4) / 4, atol=1e-9)
        e_val, _ = fock.block_energy(rho, blk.epsilon, blk.weight)
        assert abs(e_val) < 1e-9

    def test_weak_coupling_energy_matches_closed_form(self):
        from kelvin.analytic import general_ss_energy, overlap_coeffs
        p = ModelParams(40, 0.8)
        scheme = CouplingScheme.local(1.0, 1.0, 1e-4)
        bath = BathSpec(1.0, 20.0)
        for k in (3, 10, 17):
            blk = block_hamiltonian(p, scheme, bath, k=k)
            rho, _ = fock.steady_state(fock.exact_cycle_map(blk, 20.0))
            e_val, _ = fock.block_energy(rho, blk.epsilon, blk.weight)
            x, y = overlap_coeffs(blk.epsilon, 1.0, 20.0, 1e-4)
            pred = float(general_ss_energy(blk.epsilon, blk.a_coeff, blk.b_coeff, x, y))
            assert abs(e_val - pred) <= 0.01 * abs(pred)

    def test_fitted_decay_matches_alpha(self):
        # slow, well-separated decay: resonant randomized-time map
        p = ModelParams(40, math.pi / 3)
        scheme = CouplingScheme.local(1.0, 1.0, 3e-2)
        bath = BathSpec(1.0, 20.0)
        blk = block_hamiltonian(p, scheme, bath, k=10)
        s = fock.averaged_cycle_map(blk, 20.0, nodes=64)
        rho_ss, alpha = fock.steady_state(s)
        rho = fock.most_excited_density(False).matrix
        cycles, dist = [], []
        for n in range(40):
            rho = s.apply(rho)
            if n >= 5:
                cycles.append(n + 1)
                dist.append(trace_norm(rho - rho_ss.matrix))
        fit = -np.polyfit(cycles, np.log(dist), 1)[0]
        assert abs(fit - alpha) <= 0.01 * alpha

    @pytest.mark.parametrize("theta_raw", [-math.pi / 3, -1.1])
    def test_theta_symmetry_of_steady_spectra(self, bath, theta_raw):
        """Steady states computed before/after canonicalization agree under
        the mode relabeling k -> N/2 - k (spectra compared)."""
        from kelvin.model import _block_raw
        n = 12
        scheme = CouplingScheme(nn=1, lam={-1: 0.0, 0: 1.0, 1: 0.5},
                                mu={-1: 0.0, 0: 0.3, 1: 0.0}, g=0.2)
        res = canonicalize_theta(theta_raw, scheme)
        for k in range(0, n // 2 + 1):
            blk_raw = _block_raw(theta_raw, n, scheme, bath, k)
            blk_can = _block_raw(res.theta, n, res.scheme, bath, n // 2 - k)
            s_raw = fock.exact_cycle_map(blk_raw, bath.cycle_time_mean)
            s_can = fock.exact_cycle_map(blk_can, bath.cycle_time_mean)
            rho_raw, _ = fock.steady_state(s_raw)
            rho_can, _ = fock.steady_state(s_can)
            ev_raw = np.sort(np.linalg.eigvalsh(rho_raw.matrix))
            ev_can = np.sort(np.linalg.eigvalsh(rho_can.matrix))
            assert np.allclose(ev_raw, ev_can, atol=1e-10)
            assert blk_raw.epsilon == pytest.approx(blk_can.epsilon, abs=1e-12)


class TestBlockEnergy:
    def test_vacuum(self):
        rho = fock.vacuum_density(False)
        e_val, e_rel = fock.block_energy(rho, 1.3, 1.0)
        assert e_val == pytest.approx(-1.3) and e_rel == pytest.approx(0.0)

    def test_maximally_mixed(self):
        rho = fock.maximally_mixed_density(False)
        e_val, e_rel = fock.block_energy(rho, 1.3, 1.0)
        assert e_val == pytest.approx(0.0) and e_rel == pytest.approx(1.0)

    def test_most_excited(self):
        for edge in (False, True):
            rho = fock.most_excited_density(edge)
            _, e_rel = fock.block_energy(rho, 0.7, 0.5 if edge else 1.0)
            assert e_rel == pytest.approx(2.0)

    def test_edge_range(self):
        rho = fock.vacuum_density(True)
        e_val, e_rel = fock.block_energy(rho, 0.8, 0.5)
        assert e_val == pytest.approx(-0.4) and e_rel == pytest.approx(0.0)

    def test_zero_epsilon_sentinel(self):
        rho = fock.vacuum_density(True)
        e_val, e_rel = fock.block_energy(rho, 0.0, 0.5)
        assert e_val == 0.0 and e_rel is None


class TestDensityBlockValidation:
    def test_accepts_valid(self):
        fock.maximally_mixed_density(False).validate()

    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            fock.DensityBlock(np.eye(4, dtype=complex), 0).validate()

    def test_rejects_parity_coherence(self):
        m = np.eye(4, dtype=complex) / 4
        m[0, 1] = m[1, 0] = 0.1
        with pytest.raises(ValueError):
            fock.DensityBlock(m, 0).validate()

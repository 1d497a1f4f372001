import math

import numpy as np
import pytest

from kelvin.model import (
    BathSpec,
    CouplingScheme,
    ModelParams,
    band_edges,
    block_hamiltonian,
    bogoliubov_angle,
    canonicalize_theta,
    coupling_coefficients,
    coupling_keys,
    dispersion,
    energy_density_limit,
    ground_state_energy,
)

from conftest import theta_grid


def brute_force_gs_energy(theta: float, n: int) -> float:
    """Oracle: enumerate the mode energies over the full Brillouin zone."""
    return -0.5 * sum(
        math.sqrt(1 + math.sin(2 * theta) * math.cos(2 * math.pi * k / n))
        for k in range(-n // 2 + 1, n // 2 + 1))


class TestDispersion:
    def test_gap_closes_at_criticality(self):
        assert dispersion(math.pi / 4, 8, 4) == 0.0

    @pytest.mark.parametrize("theta", theta_grid())
    def test_quarter_zone_mode_is_unit(self, theta):
        assert dispersion(theta, 8, 2) == pytest.approx(1.0, abs=1e-15)

    def test_direct_value(self):
        assert dispersion(math.pi / 3, 200, 0) == pytest.approx(
            math.sqrt(1 + math.sin(2 * math.pi / 3)), abs=1e-14)

    @pytest.mark.parametrize("theta", theta_grid())
    def test_symmetric_in_k(self, theta):
        for k in range(1, 5):
            assert dispersion(theta, 10, k) == pytest.approx(
                dispersion(theta, 10, -k), abs=1e-15)

    @pytest.mark.parametrize("theta", theta_grid())
    def test_band_edges_at_zone_ends(self, theta):
        eps_m, eps_max = band_edges(theta)
        assert dispersion(theta, 40, 20) == pytest.approx(eps_m, abs=1e-12)
        assert dispersion(theta, 40, 0) == pytest.approx(eps_max, abs=1e-12)


class TestBogoliubovAngle:
    @pytest.mark.parametrize("theta", [0.2, 0.9, math.pi / 2])
    def test_zero_at_k0(self, theta):
        assert bogoliubov_angle(theta, 20, 0) == 0.0

    def test_zero_at_theta_half_pi(self):
        for k in range(0, 11):
            assert bogoliubov_angle(math.pi / 2, 20, k) == pytest.approx(0.0, abs=1e-15)

    def test_half_pi_at_zone_edge_below_critical(self):
        # oracle: the 2x2 block at k = N/2 is diag(w, -w) with w < 0, so the
        # +eps eigenvector is (0, 1), i.e. phi = pi/2
        theta = math.pi / 6
        w = math.sin(theta) + math.cos(theta) * math.cos(math.pi)
        assert w < 0
        assert bogoliubov_angle(theta, 12, 6) == pytest.approx(math.pi / 2, abs=1e-15)

    @pytest.mark.parametrize("theta", theta_grid())
    def test_rotation_diagonalizes_block(self, theta):
        n = 14
        for k in range(0, n // 2 + 1):
            w = math.sin(theta) + math.cos(theta) * math.cos(2 * math.pi * k / n)
            r = math.cos(theta) * math.sin(2 * math.pi * k / n)
            h = np.array([[w, r], [r, -w]])
            phi = bogoliubov_angle(theta, n, k)
            u = np.array([[math.cos(phi), -math.sin(phi)],
                          [math.sin(phi), math.cos(phi)]])
            d = u.T @ h @ u
            eps = dispersion(theta, n, k)
            assert np.allclose(d, np.diag([eps, -eps]), atol=1e-12)


class TestGroundStateEnergy:
    def test_flat_band(self):
        assert ground_state_energy(ModelParams(10, math.pi / 2)) == pytest.approx(-5.0)
        assert ground_state_energy(ModelParams(4, 0.0)) == pytest.approx(-2.0)

    def test_small_chain_enumeration(self):
        # modes at theta = pi/4, N = 4: eps in {1, sqrt(2), 1, 0}
        assert ground_state_energy(ModelParams(4, math.pi / 4)) == pytest.approx(
            -(2 + math.sqrt(2)) / 2, abs=1e-14)

    @pytest.mark.parametrize("theta,n", [(0.7, 6), (1.2, 8), (math.pi / 4, 10)])
    def test_matches_enumeration_oracle(self, theta, n):
        assert ground_state_energy(ModelParams(n, theta)) == pytest.approx(
            brute_force_gs_energy(theta, n), abs=1e-13)

    def test_large_n_density(self):
        p = ModelParams(200, math.pi / 3)
        f = energy_density_limit(p.theta)
        assert abs(ground_state_energy(p) / p.N + f) <= 0.01 * f

    @pytest.mark.parametrize("n", [100, 200, 1000])
    @pytest.mark.parametrize("theta", [0.3, math.pi / 4, 1.2])
    def test_density_convergence_bound(self, n, theta):
        e_gs = ground_state_energy(ModelParams(n, theta))
        assert abs(e_gs / n + energy_density_limit(theta)) <= 10.0 / n


class TestEnergyDensityLimit:
    def test_flat_cases(self):
        assert energy_density_limit(0.0) == pytest.approx(0.5, abs=1e-10)
        assert energy_density_limit(math.pi / 2) == pytest.approx(0.5, abs=1e-10)

    def test_critical_closed_form(self):
        # int_0^pi sqrt(1 + cos x) dx = 2 sqrt(2)
        assert energy_density_limit(math.pi / 4) == pytest.approx(
            math.sqrt(2) / math.pi, abs=1e-10)


class TestCouplingCoefficients:
    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_local_symmetric_coupling(self, k):
        scheme = CouplingScheme.local(1.0, 1.0, 1.0)
        theta, n = 0.8, 12
        phi = bogoliubov_angle(theta, n, k)
        a, b = coupling_coefficients(scheme, theta, n, k)
        assert a == pytest.approx(np.exp(1j * phi), abs=1e-14)
        assert b == pytest.approx(1j * np.exp(1j * phi), abs=1e-14)

    def test_local_lambda_only(self):
        scheme = CouplingScheme.local(1.0, 0.0, 1.0)
        theta, n, k = 0.8, 12, 3
        phi = bogoliubov_angle(theta, n, k)
        a, b = coupling_coefficients(scheme, theta, n, k)
        assert a == pytest.approx(math.cos(phi), abs=1e-14)
        assert b == pytest.approx(-math.sin(phi), abs=1e-14)

    def test_symmetric_neighbor_sum(self):
        # phi = 0 at k = 0, so A = lam_0 + 2 c cos(2 pi k / N) evaluated at k=0
        c = 0.4
        scheme = CouplingScheme(nn=1, lam={-1: c, 0: 0.9, 1: c},
                                mu={-1: 0.0, 0: 0.0, 1: 0.0}, g=1.0)
        a, b = coupling_coefficients(scheme, 0.8, 12, 0)
        assert a == pytest.approx(0.9 + 2 * c, abs=1e-14)
        assert b == pytest.approx(0.0, abs=1e-14)

    def test_matches_direct_sum(self, generic_scheme, rng):
        theta, n = 1.1, 10
        for k in range(0, 6):
            phi = bogoliubov_angle(theta, n, k)
            a_ref = sum((math.cos(phi) * generic_scheme.lam[j]
                         + 1j * math.sin(phi) * generic_scheme.mu[j])
                        * np.exp(-2j * math.pi * j * k / n)
                        for j in coupling_keys(generic_scheme.nn))
            a, _ = coupling_coefficients(generic_scheme, theta, n, k)
            assert a == pytest.approx(a_ref, abs=1e-13)


class TestBlockHamiltonian:
    def test_decoupled_is_diagonal(self, small_params, bath):
        scheme = CouplingScheme.local(1.0, 1.0, g=0.0)
        blk = block_hamiltonian(small_params, scheme, bath, k=3)
        eps = blk.epsilon
        assert np.allclose(blk.h_sb, np.diag([eps, -eps, bath.delta, -bath.delta]),
                           atol=1e-14)
        edge = block_hamiltonian(small_params, scheme, bath, k=0)
        assert np.allclose(edge.h_sb,
                           0.5 * np.diag([edge.epsilon, -edge.epsilon,
                                          bath.delta, -bath.delta]), atol=1e-14)

    def test_local_coupling_entries(self, small_params, bath):
        scheme = CouplingScheme.local(1.0, 1.0, g=0.3)
        blk = block_hamiltonian(small_params, scheme, bath, k=4)
        phi = blk.phi
        g = 0.3
        expected = np.array([
            [blk.epsilon, 0, g * np.exp(1j * phi), 1j * g * np.exp(1j * phi)],
            [0, -blk.epsilon, 1j * g * np.exp(1j * phi), -g * np.exp(1j * phi)],
            [g * np.exp(-1j * phi), -1j * g * np.exp(-1j * phi), bath.delta, 0],
            [-1j * g * np.exp(-1j * phi), -g * np.exp(-1j * phi), 0, -bath.delta],
        ])
        assert np.allclose(blk.h_sb, expected, atol=1e-14)

    def test_hermitian_for_random_inputs(self, rng, bath):
        for _ in range(20):
            nn = rng.choice([0, 0.5, 1, 1.5])
            keys = coupling_keys(nn)
            scheme = CouplingScheme(
                nn=float(nn),
                lam={j: float(rng.uniform(-1, 1)) for j in keys},
                mu={j: float(rng.uniform(-1, 1)) for j in keys},
                g=float(rng.uniform(0, 1)))
            p = ModelParams(16, float(rng.uniform(0, math.pi / 2)))
            k = int(rng.integers(0, 9))
            blk = block_hamiltonian(p, scheme, bath, k=k)
            assert np.max(np.abs(blk.h_sb - blk.h_sb.conj().T)) < 1e-14

    def test_weights_and_coeffs(self, small_params, local_scheme, bath):
        for k in range(0, 7):
            blk = block_hamiltonian(small_params, local_scheme, bath, k=k)
            assert blk.weight == (0.5 if k in (0, 6) else 1.0)
            assert blk.epsilon == pytest.approx(
                dispersion(small_params.theta, 12, k))

    def test_dsp_removes_system_splitting(self, small_params, local_scheme, bath):
        blk = block_hamiltonian(small_params, local_scheme, bath, k=3, dsp=True)
        assert blk.h_sb[0, 0] == 0 and blk.h_sb[1, 1] == 0
        assert blk.epsilon > 0  # bookkeeping keeps the true energy scale


class TestSchemeValidation:
    def test_half_integer_keys(self):
        assert coupling_keys(0.5) == [0, 1]
        assert coupling_keys(1.5) == [-1, 0, 1, 2]
        assert coupling_keys(2) == [-2, -1, 0, 1, 2]

    def test_rejects_bad_keys(self):
        with pytest.raises(ValueError):
            CouplingScheme(nn=0.5, lam={0: 1.0}, mu={0: 1.0, 1: 0.0}, g=1.0)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            CouplingScheme.local(1.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            CouplingScheme.local(1.0, 0.0, -1.0)

    def test_model_params_validation(self):
        with pytest.raises(ValueError):
            ModelParams(7, 0.5)
        with pytest.raises(ValueError):
            ModelParams(8, 2.0)
        with pytest.raises(ValueError):
            ModelParams(8, math.nan)

    def test_bath_validation(self):
        with pytest.raises(ValueError):
            BathSpec(-1.0, 1.0)
        with pytest.raises(ValueError):
            BathSpec(1.0, 0.0)


class TestCanonicalizeTheta:
    def test_in_range_is_identity(self, local_scheme):
        res = canonicalize_theta(math.pi / 3, local_scheme)
        assert res.theta == math.pi / 3
        assert res.scheme == local_scheme
        assert not res.mode_relabeled

    def test_local_couplings_unchanged_under_reflection(self):
        scheme = CouplingScheme.local(1.0, 1.0, 1.0)
        res = canonicalize_theta(-math.pi / 3, scheme)
        assert res.theta == pytest.approx(math.pi / 3)
        assert res.scheme.lam == {0: 1.0} and res.scheme.mu == {0: 1.0}
        assert res.mode_relabeled

    def test_negative_branch_reflects_swaps_and_relabels(self):
        # theta -> -theta composes the particle-hole swap with the sublattice
        # sign flip; the fock-level equivalence test pins this composition
        scheme = CouplingScheme(nn=1, lam={-1: 0.0, 0: 1.0, 1: 0.5},
                                mu={-1: 0.0, 0: 0.0, 1: 0.0}, g=1.0)
        res = canonicalize_theta(-math.pi / 3, scheme)
        assert res.theta == pytest.approx(math.pi / 3)
        assert res.scheme.mu[1] == pytest.approx(-0.5)
        assert res.scheme.mu[0] == pytest.approx(1.0)
        assert all(v == 0.0 for v in res.scheme.lam.values())
        assert res.mode_relabeled

    def test_shift_branch_swaps_couplings(self, generic_scheme):
        res = canonicalize_theta(math.pi + 0.4, generic_scheme)
        assert res.theta == pytest.approx(0.4)
        assert res.scheme == generic_scheme.swapped()
        assert not res.mode_relabeled

    def test_upper_branch_reflects(self, generic_scheme):
        res = canonicalize_theta(math.pi - 0.4, generic_scheme)
        assert res.theta == pytest.approx(0.4)
        assert res.scheme == generic_scheme.reflected()
        assert res.mode_relabeled

    def test_symmetry_maps_are_involutive(self, generic_scheme):
        assert generic_scheme.reflected().reflected() == generic_scheme
        assert generic_scheme.swapped().swapped() == generic_scheme
        assert generic_scheme.swapped().reflected().swapped().reflected() \
            == generic_scheme

    def test_out_of_range_raises(self, local_scheme):
        with pytest.raises(ValueError):
            canonicalize_theta(-2.0, local_scheme)
        with pytest.raises(ValueError):
            canonicalize_theta(5.0, local_scheme)

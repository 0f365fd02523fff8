import numpy as np
import pytest
from scipy.linalg import expm

from bohmlab import Grid1D, PotentialModel, WaveFunction, momentum_operator, \
    position_operator
from bohmlab.errors import (BasisCoverageError, ConfigurationError,
                            GridRangeError, InsufficientStatisticsError)
from bohmlab.measure import (AncillaModel, TwoTimeSystem,
                             ancilla_moment_checks, ideal_weak_correlation,
                             marginal_mean, one_time_mean,
                             operational_weak_value,
                             perturbation_decomposition, premeasure,
                             readout_marginal, readout_sample, two_time_joint,
                             two_time_correlation)
from bohmlab.qgrid import evolution_operator


def random_system(seed=0, dim=3):
    """Discrete system with random Hermitian S, G and a random unitary U."""
    rng = np.random.default_rng(seed)

    def herm():
        m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return 0.5 * (m + m.conj().T)

    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    u = expm(1j * herm())
    return TwoTimeSystem.from_matrices(psi, herm(), herm(), u)


def correlation_oracle(system, ancilla):
    """Closed-form two-time correlation from exact Gaussian overlap moments.

    integral y a(y - l s_i) a(y - l s_j) dy
        = l (s_i + s_j)/2 * exp(-l^2 (s_i - s_j)^2 / (4 sigma^2))
    """
    lam, sig = ancilla.coupling, ancilla.width
    s, g, c, t = (system.s_values, system.g_values, system.coeffs,
                  system.transform)
    moment = (lam * 0.5 * (s[:, None] + s[None, :])
              * np.exp(-lam ** 2 * (s[:, None] - s[None, :]) ** 2
                       / (4 * sig ** 2)))
    total = 0.0
    for j in range(len(g)):
        w = t[j] * c                    # amplitudes c_i C_ji
        total += lam * g[j] * np.real(w.conj() @ moment @ w)
    return float(total)


class TestAncilla:
    def test_normalized(self):
        anc = AncillaModel.gaussian(coupling=1.0, width=0.5, s_max=2.0)
        a = anc.profile(anc.y_grid)
        assert np.trapezoid(a * a, anc.y_grid) == pytest.approx(1.0, abs=1e-10)

    def test_moment_identities(self):
        anc = AncillaModel.gaussian(coupling=1.0, width=0.7, s_max=3.0)
        report = ancilla_moment_checks(anc, s_pair=(1.0, -2.0), tol=1e-8)
        assert max(report["deviations"].values()) < 1e-8
        so = report["shifted_overlap"]
        assert so["numeric"] == pytest.approx(so["exact"], abs=1e-8)

    def test_coarse_grid_rejected(self):
        anc = AncillaModel(1.0, 0.05, np.linspace(-3, 3, 32))
        with pytest.raises(GridRangeError):
            ancilla_moment_checks(anc)

    def test_invalid_parameters(self):
        with pytest.raises(ConfigurationError):
            AncillaModel.gaussian(coupling=-1.0, width=0.5, s_max=1.0)

    def test_tail_mass(self):
        anc = AncillaModel.gaussian(coupling=1.0, width=0.5, s_max=2.0)
        assert anc.tail_mass_outside([2.0, -2.0]) < 1e-12
        assert anc.tail_mass_outside([100.0]) > 0.9


class TestPremeasurement:
    S_VALUES = np.array([-1.0, 0.5, 2.0])
    COEFFS = np.sqrt(np.array([0.5, 0.3, 0.2])) * np.exp(1j * np.array([0.0, 1.0, -0.4]))

    def test_marginal_normalized(self):
        anc = AncillaModel.gaussian(1.0, 0.5, 2.0)
        ent = premeasure(self.COEFFS, self.S_VALUES, anc)
        p = readout_marginal(ent)
        assert np.trapezoid(p, anc.y_grid) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("width", [0.03, 0.3, 3.0])
    def test_mean_is_coupling_times_expectation(self, width):
        # apparatus independence of the one-time mean
        lam = 0.8
        anc = AncillaModel.gaussian(lam, width, 2.0)
        ent = premeasure(self.COEFFS, self.S_VALUES, anc)
        expected = lam * float(np.abs(self.COEFFS) ** 2 @ self.S_VALUES)
        assert marginal_mean(ent) == pytest.approx(expected, abs=1e-8)

    def test_unnormalized_coeffs_rejected(self):
        anc = AncillaModel.gaussian(1.0, 0.5, 2.0)
        with pytest.raises(ConfigurationError):
            premeasure(np.array([1.0, 1.0]), np.array([0.0, 1.0]), anc)

    def test_narrow_grid_rejected(self):
        anc = AncillaModel(1.0, 0.5, np.linspace(-0.5, 0.5, 2048))
        ent = premeasure(self.COEFFS, self.S_VALUES, anc)
        with pytest.raises(GridRangeError):
            readout_marginal(ent)

    def test_readout_sample_collapse(self):
        anc = AncillaModel.gaussian(1.0, 0.5, 2.0)
        ent = premeasure(self.COEFFS, self.S_VALUES, anc)
        rng = np.random.default_rng(12)
        sample = readout_sample(ent, rng)
        assert np.linalg.norm(sample.collapsed) == pytest.approx(1.0)
        assert sample.weight > 0
        rng2 = np.random.default_rng(12)
        again = readout_sample(ent, rng2)
        assert again.y == sample.y


class TestTwoTimeStatistics:
    def test_joint_normalized(self):
        system = random_system(seed=1)
        anc = AncillaModel.gaussian(0.5, 1.0, np.abs(system.s_values).max())
        joint = two_time_joint(system, anc)
        assert joint.normalization() == pytest.approx(1.0, abs=1e-9)
        assert np.all(joint.density >= 0)

    def test_second_outcome_probabilities_born_rule(self):
        # integrating out the readout restores Born probabilities distorted
        # only by the premeasurement; in the wide-ancilla limit they are
        # the undisturbed |<g_j|U|psi>|^2
        system = random_system(seed=2)
        anc = AncillaModel.gaussian(0.1, 20.0, np.abs(system.s_values).max())
        joint = two_time_joint(system, anc)
        undisturbed = np.abs(system.transform @ system.coeffs) ** 2
        assert np.allclose(joint.second_outcome_probabilities(), undisturbed,
                           atol=1e-4)

    def test_correlation_matches_gaussian_oracle(self):
        system = random_system(seed=3)
        for width in (0.3, 1.0, 5.0):
            anc = AncillaModel.gaussian(0.7, width,
                                        np.abs(system.s_values).max())
            assert two_time_correlation(two_time_joint(system, anc)) == \
                pytest.approx(correlation_oracle(system, anc), abs=1e-9)

    def test_wide_ancilla_reaches_ideal_weak_limit(self):
        system = random_system(seed=4)
        lam = 0.5
        anc = AncillaModel.gaussian(lam, 50.0, np.abs(system.s_values).max())
        corr = two_time_correlation(two_time_joint(system, anc))
        ideal = ideal_weak_correlation(system, lam)
        assert corr == pytest.approx(ideal, abs=2e-4 * max(1.0, abs(ideal)))

    def test_eigenstate_factorization(self):
        # pre-selecting an S eigenstate: correlation = l^2 s_k <G(t2)>
        # no matter how strong the premeasurement is
        base = random_system(seed=5)
        k = 1
        coeffs = np.zeros(3, dtype=complex)
        coeffs[k] = 1.0
        system = TwoTimeSystem(base.s_values, coeffs, base.g_values,
                               base.transform)
        lam = 0.7
        expected = lam ** 2 * system.s_values[k] * float(
            np.abs(system.transform[:, k]) ** 2 @ system.g_values)
        for width in (0.05, 0.5, 5.0):
            anc = AncillaModel.gaussian(lam, width,
                                        np.abs(system.s_values).max())
            corr = two_time_correlation(two_time_joint(system, anc))
            assert corr == pytest.approx(expected, abs=1e-8)

    def test_one_time_mean_apparatus_independent(self):
        system = random_system(seed=6)
        lam = 0.7
        expected = lam * float(np.abs(system.coeffs) ** 2 @ system.s_values)
        for width in (0.05, 0.5, 5.0):
            anc = AncillaModel.gaussian(lam, width,
                                        np.abs(system.s_values).max())
            assert one_time_mean(system, anc) == pytest.approx(expected,
                                                               abs=1e-8)


class TestPerturbationDecomposition:
    def test_crossover_ratio(self):
        system = random_system(seed=7)
        lam, width = 0.2, 1.0
        anc = AncillaModel.gaussian(lam, width, np.abs(system.s_values).max())
        y_star = width ** 2 / lam
        out = perturbation_decomposition(system, anc, y_star, y_star)
        assert out["crossover_outcome"] == pytest.approx(y_star)
        assert 0.25 < out["first_to_fourth_ratio"] < 4.0

    def test_small_outcome_ordering(self):
        # near y = 0 the unperturbed term dominates all corrections
        system = random_system(seed=8)
        anc = AncillaModel.gaussian(0.2, 1.0, np.abs(system.s_values).max())
        out = perturbation_decomposition(system, anc, 0.1, 0.1)
        m = out["magnitudes"]
        assert m["unperturbed"] > m["weak_s"]
        assert m["unperturbed"] > m["weak_g"]
        assert m["unperturbed"] > m["weak_sg"]


class TestOperationalEstimator:
    def test_monte_carlo_matches_exact(self):
        system = random_system(seed=9)
        anc = AncillaModel.gaussian(0.5, 2.0, np.abs(system.s_values).max())
        exact = operational_weak_value(system, anc, g_index=0, mode="exact")
        mc = operational_weak_value(system, anc, g_index=0,
                                    mode="monte_carlo",
                                    n_experiments=200_000, seed=31)
        assert abs(mc.value - exact.value) < 4 * mc.stderr
        assert mc.n_selected > 1000

    def test_monte_carlo_reproducible(self):
        system = random_system(seed=9)
        anc = AncillaModel.gaussian(0.5, 2.0, np.abs(system.s_values).max())
        a = operational_weak_value(system, anc, 1, "monte_carlo",
                                   n_experiments=20_000, seed=5)
        b = operational_weak_value(system, anc, 1, "monte_carlo",
                                   n_experiments=20_000, seed=5)
        assert a.value == b.value and a.n_selected == b.n_selected

    def test_impossible_postselection(self):
        # S eigenstate, U = identity: orthogonal G outcomes never occur
        s_vals = np.array([-1.0, 0.0, 1.0])
        system = TwoTimeSystem(s_vals, np.array([1.0, 0.0, 0.0], dtype=complex),
                               s_vals, np.eye(3, dtype=complex))
        anc = AncillaModel.gaussian(0.5, 0.01, 1.0)
        with pytest.raises(InsufficientStatisticsError):
            operational_weak_value(system, anc, g_index=2, mode="exact")
        with pytest.raises(InsufficientStatisticsError):
            operational_weak_value(system, anc, g_index=2, mode="monte_carlo",
                                   n_experiments=1000, seed=1)

    def test_unknown_mode(self):
        system = random_system(seed=9)
        anc = AncillaModel.gaussian(0.5, 2.0, np.abs(system.s_values).max())
        with pytest.raises(ConfigurationError):
            operational_weak_value(system, anc, 0, mode="bayesian")


class TestGridSystems:
    def test_from_wavefunction_joint_normalized(self):
        grid = Grid1D(-20.0, 20.0, 128)
        psi = WaveFunction.gaussian(grid, width=2.0, momentum=1.0)
        u = evolution_operator(grid, PotentialModel("free"), 0.5)
        system = TwoTimeSystem.from_wavefunction(
            psi, momentum_operator(grid), position_operator(grid), u)
        assert system.retained_weight == pytest.approx(1.0, abs=1e-8)
        anc = AncillaModel.gaussian(0.05, 5.0,
                                    np.abs(system.s_values).max(), n_min=512)
        joint = two_time_joint(system, anc)
        assert joint.normalization() == pytest.approx(1.0, abs=1e-8)

    def test_aggressive_truncation_rejected(self):
        grid = Grid1D(-20.0, 20.0, 128)
        psi = WaveFunction.gaussian(grid, width=2.0, momentum=1.0)
        u = evolution_operator(grid, PotentialModel("free"), 0.5)
        with pytest.raises(BasisCoverageError):
            TwoTimeSystem.from_wavefunction(
                psi, momentum_operator(grid), position_operator(grid), u,
                truncation=0.05)

"""Von Neumann system-ancilla-pointer measurement chain.

The chain is: a weak premeasurement of S at t1 entangles a Gaussian
ancilla with the system; reading out the ancilla position collapses the
system; the system then evolves unitarily to t2 where a second, projective
measurement of G is performed.  Because the ancilla-pointer coupling is
strong (unit coupling), the pointer only convolves the ancilla readout
with a delta function, so the pointer layer is not represented explicitly
and the readout acts on the ancilla directly.

Everything is expressed in the eigenbasis of the weakly measured operator:
a state is a coefficient vector c_i over eigenvalues s_i, and the combined
"evolve then re-express in the G basis" map is the matrix
C[j, i] = <g_j| U |s_i>.  Both small discrete systems (explicit matrices)
and grid wavefunctions reduce to this form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import erf

from .errors import (BasisCoverageError, ConfigurationError, GridRangeError,
                     InsufficientStatisticsError)
from .qgrid import SpectralOperator, WaveFunction


# ---------------------------------------------------------------------------
# Ancilla
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AncillaModel:
    """Real Gaussian ancilla profile a(y) with coupling lambda.

    a(y) = (1/(pi sigma^2))^{1/4} exp(-y^2 / (2 sigma^2)); the shifted
    profile a(y - coupling * s) encodes a premeasurement outcome s.
    """

    coupling: float
    width: float
    y_grid: np.ndarray

    def __post_init__(self):
        if self.coupling <= 0 or self.width <= 0:
            raise ConfigurationError("ancilla needs coupling > 0 and width > 0")
        y = np.ascontiguousarray(self.y_grid, dtype=float)
        y.flags.writeable = False
        object.__setattr__(self, "y_grid", y)

    @classmethod
    def gaussian(cls, coupling: float, width: float, s_max: float,
                 n_min: int = 1024, n_max: int = 1 << 17) -> "AncillaModel":
        """Outcome grid spanning +-(coupling*s_max + 8*width), >= n_min points.

        The spacing is kept below width/8 so that narrow-ancilla scenarios
        remain resolved.
        """
        half = coupling * abs(s_max) + 8.0 * width
        n = max(n_min, int(np.ceil(2.0 * half / (width / 8.0))) + 1)
        n = min(n, n_max)
        y = np.linspace(-half, half, n)
        return cls(coupling, width, y)

    @property
    def dy(self) -> float:
        return float(self.y_grid[1] - self.y_grid[0])

    def profile(self, y) -> np.ndarray:
        s2 = self.width ** 2
        return (1.0 / (np.pi * s2)) ** 0.25 * np.exp(-np.asarray(y) ** 2 / (2 * s2))

    def profile_derivative(self, y) -> np.ndarray:
        return -np.asarray(y) / self.width ** 2 * self.profile(y)

    def shifted(self, s_values) -> np.ndarray:
        """Matrix a(y - lambda s_i): shape (n_y, n_s)."""
        s = np.atleast_1d(np.asarray(s_values, dtype=float))
        return self.profile(self.y_grid[:, None] - self.coupling * s[None, :])

    def tail_mass_outside(self, s_values) -> float:
        """Largest |a|^2 mass beyond the grid edge over the shifted components."""
        s = np.atleast_1d(np.asarray(s_values, dtype=float))
        centers = self.coupling * s
        sd = self.width / np.sqrt(2.0)  # |a|^2 is N(center, sd^2)
        lo, hi = self.y_grid[0], self.y_grid[-1]
        upper = 0.5 * (1.0 - erf((hi - centers) / (np.sqrt(2) * sd)))
        lower = 0.5 * (1.0 - erf((centers - lo) / (np.sqrt(2) * sd)))
        return float(np.max(upper + lower))


def ancilla_moment_checks(ancilla: AncillaModel,
                          s_pair: tuple[float, float] | None = None,
                          tol: float = 1e-6) -> dict:
    """Quadrature check of the moment identities the weak limit relies on.

    integral y a a' dy = -1/2, integral y a' a' dy = 0, integral y a a dy = 0,
    plus normalization; optionally the first moment of a shifted overlap
    a(y - l s_i) a(y - l s_j), whose first-order value is l (s_i + s_j)/2 and
    whose exact Gaussian value carries the overlap factor
    exp(-l^2 (s_i - s_j)^2 / (4 sigma^2)).
    """
    y = ancilla.y_grid
    a = ancilla.profile(y)
    da = ancilla.profile_derivative(y)
    report = {
        "norm": float(np.trapezoid(a * a, y)),
        "y_a_da": float(np.trapezoid(y * a * da, y)),
        "y_da_da": float(np.trapezoid(y * da * da, y)),
        "y_a_a": float(np.trapezoid(y * a * a, y)),
    }
    report["deviations"] = {
        "norm": abs(report["norm"] - 1.0),
        "y_a_da": abs(report["y_a_da"] + 0.5),
        "y_da_da": abs(report["y_da_da"]),
        "y_a_a": abs(report["y_a_a"]),
    }
    if s_pair is not None:
        si, sj = s_pair
        lam, sig = ancilla.coupling, ancilla.width
        ai = ancilla.profile(y - lam * si)
        aj = ancilla.profile(y - lam * sj)
        numeric = float(np.trapezoid(y * ai * aj, y))
        first_order = lam * 0.5 * (si + sj)
        exact = first_order * np.exp(-lam ** 2 * (si - sj) ** 2 / (4 * sig ** 2))
        report["shifted_overlap"] = {
            "numeric": numeric, "first_order": first_order, "exact": float(exact)}
    worst = max(report["deviations"].values())
    if worst > tol:
        raise GridRangeError(
            f"ancilla moment deviation {worst:.2e} > {tol:.0e}: "
            "outcome grid too coarse or too narrow")
    return report


# ---------------------------------------------------------------------------
# System description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoTimeSystem:
    """Pre-selected state plus the S (t1, weak) and G (t2, projective) bases.

    coeffs are the components of psi(t1) in the S eigenbasis; transform is
    C[j, i] = <g_j| U |s_i> with U the evolution from t1 to t2.
    """

    s_values: np.ndarray
    coeffs: np.ndarray
    g_values: np.ndarray
    transform: np.ndarray
    retained_weight: float = 1.0

    def __post_init__(self):
        total = float(np.sum(np.abs(self.coeffs) ** 2))
        if abs(total - 1.0) > 1e-8:
            raise ConfigurationError(
                f"coefficient norm {total} is not 1 within 1e-8")

    @classmethod
    def from_matrices(cls, psi: np.ndarray, s_matrix: np.ndarray,
                      g_matrix: np.ndarray, u_matrix: np.ndarray) -> "TwoTimeSystem":
        """Small discrete system from explicit Hermitian S, G and unitary U."""
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        s_vals, s_vecs = np.linalg.eigh(s_matrix)
        g_vals, g_vecs = np.linalg.eigh(g_matrix)
        coeffs = s_vecs.conj().T @ psi
        transform = g_vecs.conj().T @ u_matrix @ s_vecs
        return cls(s_vals, coeffs, g_vals, transform)

    @classmethod
    def from_wavefunction(cls, psi: WaveFunction, s_op: SpectralOperator,
                          g_op: SpectralOperator, u_matrix: np.ndarray,
                          truncation: float = 1e-12) -> "TwoTimeSystem":
        """Grid system; the S basis is truncated to the dominant coefficients."""
        dx = psi.grid.dx
        c_full = s_op.coefficients(psi)
        weight = np.abs(c_full) ** 2
        order = np.argsort(weight)[::-1]
        cum = np.cumsum(weight[order])
        keep_n = int(np.searchsorted(cum, cum[-1] * (1.0 - truncation))) + 1
        kept = np.sort(order[:keep_n])
        retained = float(weight[kept].sum())
        if retained < 1.0 - 1e-8:
            raise BasisCoverageError(
                f"truncated S basis retains only {retained} of the state weight")
        s_vecs = s_op.eigenvectors()[:, kept]
        g_vecs = g_op.eigenvectors()
        coeffs = c_full[kept]
        coeffs = coeffs / np.linalg.norm(coeffs)
        transform = g_vecs.conj().T @ (u_matrix @ s_vecs) * dx
        return cls(s_op.eigenvalues()[kept], coeffs, g_op.eigenvalues(),
                   transform, retained)

    @property
    def s_spread(self) -> float:
        return float(np.ptp(self.s_values))


@dataclass(frozen=True)
class EntangledState:
    """System-ancilla state after premeasurement: sum_i c_i |s_i> a(y - l s_i)."""

    s_values: np.ndarray
    coeffs: np.ndarray
    ancilla: AncillaModel


def premeasure(coeffs: np.ndarray, s_values: np.ndarray,
               ancilla: AncillaModel) -> EntangledState:
    coeffs = np.asarray(coeffs, dtype=complex)
    total = float(np.sum(np.abs(coeffs) ** 2))
    if abs(total - 1.0) > 1e-8:
        raise ConfigurationError("premeasure needs a normalized coefficient vector")
    return EntangledState(np.asarray(s_values, dtype=float), coeffs, ancilla)


def readout_marginal(ent: EntangledState) -> np.ndarray:
    """P(y) = sum_i |c_i|^2 a(y - l s_i)^2 on the ancilla outcome grid."""
    if ent.ancilla.tail_mass_outside(ent.s_values) > 1e-6:
        raise GridRangeError("outcome grid too narrow: > 1e-6 mass outside")
    shifted = ent.ancilla.shifted(ent.s_values)
    return shifted ** 2 @ np.abs(ent.coeffs) ** 2


def marginal_mean(ent: EntangledState) -> float:
    p = readout_marginal(ent)
    return float(np.trapezoid(ent.ancilla.y_grid * p, ent.ancilla.y_grid))


@dataclass(frozen=True)
class ReadoutSample:
    y: float
    collapsed: np.ndarray  # normalized coefficients in the S basis
    weight: float          # norm of the unnormalized collapsed state


def readout_sample(ent: EntangledState, rng: np.random.Generator) -> ReadoutSample:
    """Draw one ancilla outcome and the collapsed (normalized) system state."""
    probs = np.abs(ent.coeffs) ** 2
    i = rng.choice(len(probs), p=probs / probs.sum())
    # |a|^2 for a Gaussian profile of width sigma is N(center, sigma^2/2)
    y = ent.ancilla.coupling * ent.s_values[i] + \
        rng.normal(0.0, ent.ancilla.width / np.sqrt(2.0))
    raw = ent.ancilla.profile(y - ent.ancilla.coupling * ent.s_values) * ent.coeffs
    weight = float(np.linalg.norm(raw))
    return ReadoutSample(float(y), raw / weight, weight)


# ---------------------------------------------------------------------------
# Two-time statistics (exact quadrature)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointOutcomeDistribution:
    """P(y_w, y_k) with a projective (delta-ancilla) second measurement.

    The second outcome is discrete, y_w = coupling * g_j, so the
    distribution is a density in y_k per second outcome j.
    """

    yk_grid: np.ndarray
    g_values: np.ndarray
    coupling: float
    density: np.ndarray  # (n_g, n_yk), >= 0

    @property
    def yw_values(self) -> np.ndarray:
        return self.coupling * self.g_values

    def normalization(self) -> float:
        return float(np.sum(np.trapezoid(self.density, self.yk_grid, axis=1)))

    def second_outcome_probabilities(self) -> np.ndarray:
        return np.trapezoid(self.density, self.yk_grid, axis=1)


def two_time_joint(system: TwoTimeSystem, ancilla: AncillaModel) -> JointOutcomeDistribution:
    """Exact quadrature joint distribution: no Monte Carlo on this path."""
    if ancilla.tail_mass_outside(system.s_values) > 1e-6:
        raise GridRangeError("outcome grid too narrow: > 1e-6 mass outside")
    shifted = ancilla.shifted(system.s_values)            # (n_y, n_s)
    weighted = system.transform * system.coeffs[None, :]  # (n_g, n_s)
    amp = shifted @ weighted.T                            # (n_y, n_g)
    return JointOutcomeDistribution(ancilla.y_grid.copy(), system.g_values.copy(),
                                    ancilla.coupling, (np.abs(amp) ** 2).T)


def two_time_correlation(joint: JointOutcomeDistribution) -> float:
    """<y(t2) y(t1)> = sum_j (l g_j) integral y_k P_j(y_k) dy_k."""
    first_moments = np.trapezoid(joint.yk_grid[None, :] * joint.density,
                             joint.yk_grid, axis=1)
    return float(np.sum(joint.yw_values * first_moments))


def one_time_mean(system: TwoTimeSystem, ancilla: AncillaModel) -> float:
    return marginal_mean(premeasure(system.coeffs, system.s_values, ancilla))


def ideal_weak_correlation(system: TwoTimeSystem, coupling: float) -> float:
    """Asymptotic (no ancilla) limit l^2 Re <psi| U^dag G U S |psi>."""
    c = system.coeffs
    g_of_s = system.transform.conj().T @ (system.g_values[:, None] * system.transform)
    val = np.vdot(c, g_of_s @ (system.s_values * c))
    return float(coupling ** 2 * np.real(val))


def perturbation_decomposition(system: TwoTimeSystem, ancilla: AncillaModel,
                               y_k: float, y_w: float) -> dict:
    """Magnitudes of the four weak-limit Taylor terms of the collapsed state.

    Term ordering: [U, U S (first order in l), G U (first order in l),
    G U S (second order)].  The crossover outcome where the zeroth- and
    second-order coefficients match for a Gaussian ancilla is y = sigma^2/l.
    """
    lam = ancilla.coupling
    a_k, a_w = float(ancilla.profile(y_k)), float(ancilla.profile(y_w))
    da_k = float(ancilla.profile_derivative(y_k))
    da_w = float(ancilla.profile_derivative(y_w))
    c = system.coeffs
    s, g = system.s_values, system.g_values
    t_mat = system.transform
    u_psi = t_mat @ c                       # in the g basis
    us_psi = t_mat @ (s * c)
    gu_psi = g * u_psi
    gus_psi = g * us_psi
    mags = {
        "unperturbed": abs(a_w * a_k) * float(np.linalg.norm(u_psi)),
        "weak_s": lam * abs(a_w * da_k) * float(np.linalg.norm(us_psi)),
        "weak_g": lam * abs(da_w * a_k) * float(np.linalg.norm(gu_psi)),
        "weak_sg": lam ** 2 * abs(da_w * da_k) * float(np.linalg.norm(gus_psi)),
    }
    ratio = mags["unperturbed"] / mags["weak_sg"] if mags["weak_sg"] else np.inf
    return {"magnitudes": mags, "first_to_fourth_ratio": ratio,
            "crossover_outcome": ancilla.width ** 2 / lam}


# ---------------------------------------------------------------------------
# Operational weak-value estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperationalEstimate:
    value: float
    stderr: float
    mode: str
    n_selected: int = 0
    post_selection_probability: float = 1.0


def operational_weak_value(system: TwoTimeSystem, ancilla: AncillaModel,
                           g_index: int, mode: str = "exact",
                           n_experiments: int = 0, seed: int = 0,
                           chunk: int = 200_000,
                           log_callback=None) -> OperationalEstimate:
    """Post-selected estimator (1/l) E[y_k | y_g = l g_a].

    exact mode integrates the quadrature joint distribution; monte_carlo
    runs n_experiments sampled measurement chains and post-selects the
    experiments whose projective G outcome is the target eigenvalue
    (discrete outcomes select the exact index; for a position-valued G the
    eigenvalues are grid cells, so the bin is one grid cell wide).
    """
    if mode == "exact":
        joint = two_time_joint(system, ancilla)
        p_row = joint.density[g_index]
        den = np.trapezoid(p_row, joint.yk_grid)
        if den <= 0:
            raise InsufficientStatisticsError(
                f"post-selection probability is zero for outcome index {g_index}")
        num = np.trapezoid(joint.yk_grid * p_row, joint.yk_grid)
        return OperationalEstimate(float(num / den / ancilla.coupling), 0.0,
                                   "exact", post_selection_probability=float(den))
    if mode != "monte_carlo":
        raise ConfigurationError(f"unknown estimator mode {mode!r}")
    if n_experiments < 1:
        raise ConfigurationError("monte_carlo mode needs n_experiments >= 1")

    rng = np.random.default_rng(seed)
    lam, sig = ancilla.coupling, ancilla.width
    s, c = system.s_values, system.coeffs
    probs = np.abs(c) ** 2
    probs = probs / probs.sum()
    selected_y = []
    done = 0
    while done < n_experiments:
        m = min(chunk, n_experiments - done)
        comp = rng.choice(len(s), size=m, p=probs)
        y_k = lam * s[comp] + rng.normal(0.0, sig / np.sqrt(2.0), size=m)
        collapsed = ancilla.profile(y_k[:, None] - lam * s[None, :]) * c[None, :]
        evolved = collapsed @ system.transform.T          # (m, n_g)
        pg = np.abs(evolved) ** 2
        pg /= pg.sum(axis=1, keepdims=True)
        u = rng.random(m)
        outcome = (np.cumsum(pg, axis=1) < u[:, None]).sum(axis=1)
        hit = outcome == g_index
        if log_callback is not None:
            log_callback(done, y_k, outcome, hit,
                         np.linalg.norm(collapsed, axis=1))
        selected_y.append(y_k[hit])
        done += m
    y_sel = np.concatenate(selected_y)
    n_sel = y_sel.size
    p_post = n_sel / n_experiments
    if n_sel < 10:
        raise InsufficientStatisticsError(
            f"only {n_sel} post-selected experiments "
            f"(probability ~ {p_post:.3e}); need at least 10")
    value = float(np.mean(y_sel) / lam)
    stderr = float(np.std(y_sel, ddof=1) / np.sqrt(n_sel) / lam)
    return OperationalEstimate(value, stderr, "monte_carlo", int(n_sel),
                               float(p_post))

"""Self-contained validation suite: each criterion builds its own scenario at
desk scale, measures one headline number, and reports it against a fixed
tolerance.  Failures are report entries, never exceptions.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.linalg import expm

from .qgrid import (Grid1D, PotentialModel, PropagatorConfig, WaveFunction,
                    build_hamiltonian, evolution_operator, evolve_store,
                    expectation, momentum_operator, position_operator)
from .bohm import (equivariance_l1, grid_velocity, integrate_trajectories,
                   quantum_potential, sample_initial_positions)
from .weakval import (aav_weak_value, dwell_operator_field, local_energy)
from .intrinsics import (autocorrelation, dwell_time_density,
                         dwell_time_ensemble, per_trajectory_dwell_times,
                         power_balance_residual, psd, work_distribution,
                         work_records)
from .measure import (AncillaModel, TwoTimeSystem, ancilla_moment_checks,
                      ideal_weak_correlation, one_time_mean,
                      operational_weak_value, perturbation_decomposition,
                      two_time_correlation, two_time_joint)


def _discrete_system(seed=0, dim=3, eigenstate=None):
    """Random Hermitian S, G and unitary U; optionally an S eigenstate."""
    rng = np.random.default_rng(seed)

    def herm():
        m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return 0.5 * (m + m.conj().T)

    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    system = TwoTimeSystem.from_matrices(psi, herm(), herm(), expm(1j * herm()))
    if eigenstate is not None:
        coeffs = np.zeros(dim, dtype=complex)
        coeffs[eigenstate] = 1.0
        system = TwoTimeSystem(system.s_values, coeffs, system.g_values,
                               system.transform)
    return system


def _ancilla(system, coupling, width):
    return AncillaModel.gaussian(coupling, width,
                                 float(np.abs(system.s_values).max()))


def check_one_time_apparatus_independence():
    """Mean readout equals coupling * <S> regardless of the ancilla width."""
    system = _discrete_system(seed=10)
    lam = 0.7
    expected = lam * float(np.abs(system.coeffs) ** 2 @ system.s_values)
    spread = system.s_spread
    devs = [abs(one_time_mean(system, _ancilla(system, lam, r * lam * spread))
                - expected)
            for r in (0.1, 1.0, 10.0)]
    return {"measured": float(max(devs)), "target": 0.0, "tolerance": 1e-6,
            "comparison": "<="}


def check_eigenstate_factorization():
    """S eigenstate: correlation = l^2 s_k <G(t2)> for any ancilla width."""
    k = 1
    system = _discrete_system(seed=11, eigenstate=k)
    lam = 0.6
    expected = lam ** 2 * system.s_values[k] * float(
        np.abs(system.transform[:, k]) ** 2 @ system.g_values)
    devs = [abs(two_time_correlation(
        two_time_joint(system, _ancilla(system, lam, w))) - expected)
        for w in (0.05, 0.5, 5.0)]
    return {"measured": float(max(devs)), "target": 0.0, "tolerance": 1e-6,
            "comparison": "<="}


def check_ideal_weak_convergence():
    """log-log slope of |correlation - ideal limit| vs sigma is -2."""
    system = _discrete_system(seed=12)
    lam = 0.4
    ideal = ideal_weak_correlation(system, lam)
    sigmas = lam * system.s_spread * np.geomspace(3.0, 30.0, 7)
    errs = [abs(two_time_correlation(
        two_time_joint(system, _ancilla(system, lam, s))) - ideal)
        for s in sigmas]
    slope = np.polyfit(np.log(sigmas), np.log(errs), 1)[0]
    return {"measured": float(slope), "target": -2.0, "tolerance": 0.2,
            "comparison": "abs"}


def check_contextuality_witness():
    """Two-time correlations depend on the apparatus; one-time means do not."""
    system = _discrete_system(seed=13)
    lam, tol = 0.7, 1e-6
    widths = (0.1 * lam * system.s_spread, lam * system.s_spread)
    corr = [two_time_correlation(two_time_joint(system, _ancilla(system, lam, w)))
            for w in widths]
    mean = [one_time_mean(system, _ancilla(system, lam, w)) for w in widths]
    gap = abs(corr[0] - corr[1])
    mean_dev = abs(mean[0] - mean[1])
    passed = gap > 10 * tol and mean_dev < tol
    return {"measured": float(gap), "target": 10 * tol, "tolerance": 0.0,
            "comparison": ">", "passed": bool(passed),
            "detail": {"one_time_mean_gap": float(mean_dev),
                       "correlations": [float(v) for v in corr]}}


def _commuting_grid_scenario():
    """Momentum weakly measured, free flight, position post-selection."""
    grid = Grid1D(-40.0, 40.0, 128)
    psi = WaveFunction.gaussian(grid, center=-5.0, width=2.5, momentum=1.0)
    duration = 2.0
    u = evolution_operator(grid, PotentialModel("free"), duration)
    system = TwoTimeSystem.from_wavefunction(
        psi, momentum_operator(grid), position_operator(grid), u)
    psi2 = WaveFunction(grid, u @ psi.amplitudes, time=duration)
    return grid, system, psi2


def check_operational_matches_aav():
    """Post-selected estimator reproduces the AAV momentum weak value."""
    grid, system, psi2 = _commuting_grid_scenario()
    lam = 0.05
    sigma = 10.0 * lam * float(np.abs(system.s_values).max())
    anc = AncillaModel.gaussian(lam, sigma,
                                float(np.abs(system.s_values).max()), n_min=2048)
    g_index = int(np.argmax(psi2.density()))
    x_post = grid.x[g_index]
    aav = float(np.real(aav_weak_value(momentum_operator(grid), psi2, x_post)))
    exact = operational_weak_value(system, anc, g_index, mode="exact")
    rel = abs(exact.value - aav) / abs(aav)
    mc = operational_weak_value(system, anc, g_index, mode="monte_carlo",
                                n_experiments=1_000_000, seed=202)
    z = abs(mc.value - exact.value) / mc.stderr
    passed = rel <= 0.02 and z <= 3.0
    return {"measured": float(rel), "target": 0.0, "tolerance": 0.02,
            "comparison": "<=", "passed": bool(passed),
            "detail": {"aav": aav, "exact": exact.value, "monte_carlo": mc.value,
                       "mc_stderr": mc.stderr, "mc_z": float(z),
                       "n_selected": mc.n_selected}}


def check_ancilla_moments():
    anc = AncillaModel.gaussian(coupling=1.0, width=1.0, s_max=3.0)
    report = ancilla_moment_checks(anc, s_pair=(1.5, -0.5), tol=1e-6)
    worst = max(report["deviations"].values())
    so = report["shifted_overlap"]
    overlap_dev = abs(so["numeric"] - so["exact"])
    return {"measured": float(max(worst, overlap_dev)), "target": 0.0,
            "tolerance": 1e-8, "comparison": "<=",
            "detail": {"identities": report["deviations"],
                       "shifted_overlap": so}}


def check_perturbation_crossover():
    """Zeroth- and second-order terms comparable at y = sigma^2/coupling."""
    system = _discrete_system(seed=14)
    lam, width = 0.2, 1.0
    anc = _ancilla(system, lam, width)
    y_star = width ** 2 / lam
    out = perturbation_decomposition(system, anc, y_star, y_star)
    ratio = out["first_to_fourth_ratio"]
    passed = 0.25 <= ratio <= 4.0
    return {"measured": float(ratio), "target": 1.0, "tolerance": 4.0,
            "comparison": "factor", "passed": bool(passed),
            "detail": out["magnitudes"]}


def _free_gaussian_evolution(n_traj, seed):
    grid = Grid1D(-30.0, 30.0, 512)
    psi = WaveFunction.gaussian(grid, width=1.0)
    ev = evolve_store(psi, PotentialModel("free"),
                      PropagatorConfig(0.005, steps_per_output=20), 2.0)
    starts = sample_initial_positions(psi, n_traj, seed=seed)
    return ev, integrate_trajectories(ev, starts, substeps=4)


def check_equilibrium_and_trajectories():
    """Equivariance every frame, exact free-Gaussian scaling, non-crossing."""
    ev, ens = _free_gaussian_evolution(10_000, seed=77)
    l1 = max(equivariance_l1(ev, ens, f) for f in range(len(ev.times)))

    # analytic scaling x(t) = x0 sigma(t)/sigma0 on well-separated starts
    starts = np.concatenate([np.linspace(-2.5, -0.25, 8),
                             np.linspace(0.25, 2.5, 8)])
    ref = integrate_trajectories(ev, starts, substeps=4)
    scale = np.sqrt(1.0 + (ref.times / 2.0) ** 2)
    expected = starts[None, :] * scale[:, None]
    rel = float(np.max(np.abs(ref.positions - expected) / np.abs(expected)))

    order = np.sort(ens.positions[0])
    sorted_paths = ens.positions[:, np.argsort(ens.positions[0])]
    crossing_free = bool(np.all(np.diff(sorted_paths, axis=1) > 0))
    passed = l1 < 0.05 and rel < 1e-3 and crossing_free
    return {"measured": float(l1), "target": 0.0, "tolerance": 0.05,
            "comparison": "<", "passed": bool(passed),
            "detail": {"max_l1": float(l1), "scaling_rel_error": rel,
                       "non_crossing": crossing_free,
                       "n_trajectories": ens.count, "start_span": float(np.ptp(order))}}


def check_energy_decomposition():
    """local energy = Q + m v^2/2 + V on grid points; residual is 2nd order."""
    grid = Grid1D(-30.0, 30.0, 512)
    pot = PotentialModel("harmonic", omega=1.0)
    psi0 = WaveFunction.gaussian(grid, center=2.0)

    def residual(spo):
        ev = evolve_store(psi0, pot, PropagatorConfig(0.002, steps_per_output=spo),
                          1.0)
        ens = integrate_trajectories(ev, np.array([1.0]), substeps=4)
        t_mid = float(ev.times[len(ev.times) // 2])
        return power_balance_residual(ev, pot, ens.trajectory(0), t_mid)

    ev = evolve_store(psi0, pot, PropagatorConfig(0.002, steps_per_output=25), 1.0)
    psi = ev.psi(len(ev.times) // 2)
    body = psi.density() > 1e-8  # non-node grid points
    le = local_energy(psi, pot, grid.x[body])
    q = quantum_potential(psi)[body]
    v = grid_velocity(psi)[body]
    decomp_dev = float(np.max(np.abs(
        le - (q + 0.5 * v ** 2 + pot.values(grid.x[body])))))

    ratio = abs(residual(50) / residual(25))
    passed = decomp_dev <= 1e-6 and abs(ratio - 4.0) <= 0.5
    return {"measured": decomp_dev, "target": 0.0, "tolerance": 1e-6,
            "comparison": "<=", "passed": bool(passed),
            "detail": {"residual_halving_ratio": float(ratio)}}


def check_work_properties():
    """Mean work = change of <H>; eigenstates give a zero-work point mass."""
    grid = Grid1D(-30.0, 30.0, 512)
    # time-dependent field so the mean work is genuinely nonzero
    pot = PotentialModel("drive", profile=lambda t: 0.4 * np.sin(0.8 * t))
    psi = WaveFunction.gaussian(grid, width=1.5)
    cfg = PropagatorConfig(0.002, steps_per_output=25)
    t2 = 1.5
    ev = evolve_store(psi, pot, cfg, t2)
    starts = sample_initial_positions(psi, 10_000, seed=55)
    ens = integrate_trajectories(ev, starts)
    dist = work_distribution(work_records(ev, pot, ens, 0.0, t2))
    delta = expectation(build_hamiltonian(grid, pot, t=t2),
                        ev.psi(len(ev.times) - 1)) \
        - expectation(build_hamiltonian(grid, pot, t=0.0), psi)
    stderr = dist.std / np.sqrt(dist.count)
    z = abs(dist.mean - delta) / stderr

    hpot = PotentialModel("harmonic", omega=1.0)
    h = build_hamiltonian(grid, hpot)
    eig = WaveFunction(grid, h.eigenvectors()[:, 0])
    ev2 = evolve_store(eig, hpot, PropagatorConfig(
        0.01, method="crank-nicolson", steps_per_output=10), 1.0)
    ens2 = integrate_trajectories(ev2, sample_initial_positions(eig, 500, seed=56))
    dist2 = work_distribution(work_records(ev2, hpot, ens2, 0.0, 1.0))
    point_mass = dist2.std < 1e-6 and abs(dist2.mean) < 1e-6
    nonneg = bool(np.all(dist.probabilities >= 0)
                  and np.all(dist2.probabilities >= 0))
    passed = z <= 3.0 and point_mass and nonneg
    return {"measured": float(z), "target": 0.0, "tolerance": 3.0,
            "comparison": "<=", "passed": bool(passed),
            "detail": {"mean_work": dist.mean, "delta_h": float(delta),
                       "stderr": float(stderr),
                       "eigenstate_work_std": dist2.std,
                       "probabilities_nonnegative": nonneg}}


def check_dwell_triple_agreement():
    """Trajectories, density quadrature and the dwell-operator weak value
    agree on the time spent in a window next to a low barrier; the
    per-trajectory discrepancy against the pointwise weak value is reported
    as a distribution, not asserted.
    """
    grid = Grid1D(-40.0, 40.0, 512)
    pot = PotentialModel("barrier", height=1.0, left=2.0, right=3.0)
    psi = WaveFunction.gaussian(grid, center=-10.0, width=1.0, momentum=5.0)
    region, horizon = (-2.0, 2.0), 5.0
    cfg = PropagatorConfig(0.0025, steps_per_output=8)
    ev = evolve_store(psi, pot, cfg, horizon)

    t_density = dwell_time_density(ev, region, horizon)
    starts = sample_initial_positions(psi, 2000, seed=91)
    ens = integrate_trajectories(ev, starts, substeps=2)
    t_traj, stderr = dwell_time_ensemble(ens, region)

    wv_cfg = PropagatorConfig(0.0025, method="crank-nicolson", steps_per_output=8)
    field = dwell_operator_field(psi, region, horizon, wv_cfg, potential=pot)
    ok = np.isfinite(field)
    t_wv = float(np.sum(psi.density()[ok] * field[ok]) * grid.dx)

    vals = np.array([t_traj, t_density, t_wv])
    pair_rel = max(abs(a - b) / max(abs(a), abs(b))
                   for i, a in enumerate(vals) for b in vals[i + 1:])

    taus = per_trajectory_dwell_times(ens, region)
    from .bohm import _periodic_spline
    wv_at_start = _periodic_spline(grid, np.nan_to_num(field))(ens.positions[0])
    disc = np.abs(taus - wv_at_start)
    passed = pair_rel <= 0.02
    return {"measured": float(pair_rel), "target": 0.0, "tolerance": 0.02,
            "comparison": "<=", "passed": bool(passed),
            "detail": {"trajectory": float(t_traj), "density": float(t_density),
                       "weak_value": t_wv, "trajectory_stderr": float(stderr),
                       "pointwise_discrepancy": {
                           "mean": float(disc.mean()), "std": float(disc.std()),
                           "max": float(disc.max()),
                           "quantiles": {q: float(np.quantile(disc, float(q)))
                                         for q in ("0.5", "0.9", "0.99")}}}}


def check_psd_sanity():
    """Evenness, the zero-frequency identity, and cosine peak recovery."""
    rng = np.random.default_rng(123)
    currents = rng.normal(size=(400, 8))
    dt, tau_max = 0.05, 5.0
    res = psd(currents, dt, tau_max)
    evenness = float(np.max(np.abs(res.values - res.values[::-1])))
    weights = np.full(len(res.lags), dt)
    weights[0] = weights[-1] = 0.5 * dt
    zero_dev = abs(res.values[len(res.omega) // 2]
                   - float(weights @ res.autocorrelation))

    omega0 = 4.0
    t = 0.02 * np.arange(2000)
    tone = psd(np.cos(omega0 * t)[:, None], 0.02, 10.0, window="hann")
    peak = abs(float(tone.omega[np.argmax(tone.values)]))
    bin_width = np.pi / 10.0
    passed = evenness <= 1e-8 and zero_dev <= 1e-6 \
        and abs(peak - omega0) <= bin_width
    return {"measured": evenness, "target": 0.0, "tolerance": 1e-8,
            "comparison": "<=", "passed": bool(passed),
            "detail": {"zero_frequency_deviation": float(zero_dev),
                       "cosine_peak": peak, "expected_peak": omega0,
                       "frequency_bin": bin_width}}


CRITERIA = [
    ("one-time-apparatus-independence",
     "readout mean equals coupling * <S> across two decades of ancilla width",
     check_one_time_apparatus_independence),
    ("eigenstate-factorization",
     "S-eigenstate two-time correlation factorizes, independent of the ancilla",
     check_eigenstate_factorization),
    ("ideal-weak-convergence",
     "correlation approaches the no-apparatus limit at order sigma^-2",
     check_ideal_weak_convergence),
    ("contextuality-witness",
     "two-time statistics are apparatus-dependent while one-time means are not",
     check_contextuality_witness),
    ("operational-matches-aav",
     "post-selected estimator reproduces the AAV (Bohmian-velocity) weak value",
     check_operational_matches_aav),
    ("ancilla-moment-identities",
     "Gaussian ancilla moment integrals match their analytic values",
     check_ancilla_moments),
    ("perturbation-crossover",
     "zeroth and second order terms are comparable at y = sigma^2/coupling",
     check_perturbation_crossover),
    ("equilibrium-and-trajectories",
     "equivariance, free-Gaussian scaling law, and non-crossing",
     check_equilibrium_and_trajectories),
    ("energy-decomposition",
     "local energy splits into Q + kinetic + V; power balance is 2nd order",
     check_energy_decomposition),
    ("work-properties",
     "mean work equals the Hamiltonian expectation change; TPM limit holds",
     check_work_properties),
    ("dwell-triple-agreement",
     "trajectory, density and weak-value dwell times agree pairwise",
     check_dwell_triple_agreement),
    ("psd-sanity",
     "PSD evenness, zero-frequency identity and cosine peak recovery",
     check_psd_sanity),
]


def run_criterion(cid: str) -> dict:
    for name, description, fn in CRITERIA:
        if name == cid:
            start = time.perf_counter()
            out = fn()
            out.setdefault("passed", _default_pass(out))
            out.update(id=name, description=description,
                       seconds=time.perf_counter() - start)
            return out
    raise KeyError(f"unknown criterion {cid!r}")


def _default_pass(out: dict) -> bool:
    measured, target, tol = out["measured"], out["target"], out["tolerance"]
    cmp = out.get("comparison", "abs")
    if cmp in ("<=", "<"):
        return measured <= target + tol
    if cmp == ">":
        return measured > target
    if cmp == "factor":
        return target / tol <= measured <= target * tol
    return abs(measured - target) <= tol


def validate_all() -> dict:
    """Run every criterion; failures become report entries."""
    results = [run_criterion(name) for name, _, _ in CRITERIA]
    return {"criteria": results,
            "passed": all(r["passed"] for r in results),
            "n_passed": sum(r["passed"] for r in results),
            "n_total": len(results)}

"""Intrinsic dynamical properties built from trajectories and weak values:
per-experiment work and its distribution, Ramo-Shockley current with its
power spectral density, and dwell times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigurationError, EmptyEnsembleError, HorizonError,
                     LagError, NodeError)
from .qgrid import Evolution, PotentialModel, WaveFunction, NODE_THRESHOLD_REL
from .bohm import (Trajectory, TrajectoryEnsemble, VelocityInterpolator,
                   _periodic_spline, quantum_potential)
from .weakval import local_energy


# ---------------------------------------------------------------------------
# Quantum work
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WorkRecord:
    experiment_id: int
    e_initial: float
    e_final: float
    work: float
    flagged: bool = False  # node at an endpoint; excluded from distributions


@dataclass(frozen=True)
class WorkDistribution:
    bin_edges: np.ndarray
    probabilities: np.ndarray
    count: int
    mean: float        # unbinned
    std: float         # unbinned
    flagged_count: int = 0


def _density_at(psi: WaveFunction, x):
    return _periodic_spline(psi.grid, psi.density())(x)


def _is_node(psi: WaveFunction, x) -> np.ndarray:
    return np.asarray(_density_at(psi, x)) < NODE_THRESHOLD_REL * psi.density().max()


def work_records(evolution: Evolution, potential: PotentialModel,
                 ensemble: TrajectoryEnsemble, t1: float, t2: float) -> list[WorkRecord]:
    """Per-experiment work from local-energy weak values at the two endpoints."""
    i1, i2 = evolution.index_of(t1), evolution.index_of(t2)
    psi1, psi2 = evolution.psi(i1), evolution.psi(i2)
    x1 = ensemble.positions[i1]
    x2 = ensemble.positions[i2]
    bad = _is_node(psi1, x1) | _is_node(psi2, x2)
    e1 = np.full(ensemble.count, np.nan)
    e2 = np.full(ensemble.count, np.nan)
    if (~bad).any():
        e1[~bad] = local_energy(psi1, potential, x1[~bad],
                                evolution.mass, evolution.hbar)
        e2[~bad] = local_energy(psi2, potential, x2[~bad],
                                evolution.mass, evolution.hbar)
    return [WorkRecord(i, float(e1[i]), float(e2[i]), float(e2[i] - e1[i]),
                       flagged=bool(bad[i]))
            for i in range(ensemble.count)]


def work_per_experiment(evolution: Evolution, potential: PotentialModel,
                        trajectory: Trajectory, t1: float, t2: float) -> WorkRecord:
    i1, i2 = evolution.index_of(t1), evolution.index_of(t2)
    psi1, psi2 = evolution.psi(i1), evolution.psi(i2)
    x1 = float(trajectory.positions[i1])
    x2 = float(trajectory.positions[i2])
    if _is_node(psi1, x1) or _is_node(psi2, x2):
        return WorkRecord(trajectory.experiment_id, np.nan, np.nan, np.nan, True)
    e1 = local_energy(psi1, potential, x1, evolution.mass, evolution.hbar)
    e2 = local_energy(psi2, potential, x2, evolution.mass, evolution.hbar)
    return WorkRecord(trajectory.experiment_id, e1, e2, e2 - e1)


def work_distribution(records: list[WorkRecord]) -> WorkDistribution:
    """Normalized histogram (Freedman-Diaconis bins) plus unbinned moments."""
    works = np.array([r.work for r in records if not r.flagged])
    n_flagged = sum(r.flagged for r in records)
    if works.size == 0:
        raise EmptyEnsembleError(
            f"no unflagged work records ({n_flagged} flagged)")
    if np.ptp(works) == 0.0:
        w = works[0]
        edges = np.array([w - 0.5, w + 0.5])
        probs = np.array([1.0])
    else:
        edges = np.histogram_bin_edges(works, bins="fd")
        hist, edges = np.histogram(works, bins=edges)
        probs = hist / works.size
    std = float(np.std(works, ddof=1)) if works.size > 1 else 0.0
    return WorkDistribution(edges, probs, int(works.size),
                            float(np.mean(works)), std, n_flagged)


def power_balance_residual(evolution: Evolution, potential: PotentialModel,
                           trajectory: Trajectory, t: float) -> float:
    """Residual of dE/dt = q v E_field + dQ/dt along the trajectory.

    E = m v^2/2 + Q is the unperturbed energy carried by the trajectory;
    all time derivatives are centered finite differences at the frame
    spacing, so the residual decays at 2nd order in the output step.
    """
    i = evolution.index_of(t)
    if i == 0 or i == len(evolution.times) - 1:
        raise ConfigurationError("residual needs one stored frame on each side")
    m, hbar = evolution.mass, evolution.hbar
    dt = evolution.frame_dt
    vel = VelocityInterpolator(evolution)

    def energy(j, x):
        psi = evolution.psi(j)
        if _is_node(psi, x):
            raise NodeError(f"trajectory at a node at frame {j}")
        v = vel(x, float(evolution.times[j]))
        q = quantum_potential(psi, x, m, hbar)
        return 0.5 * m * v ** 2 + q

    x_m, x_0, x_p = (float(trajectory.positions[j]) for j in (i - 1, i, i + 1))
    de_dt = (energy(i + 1, x_p) - energy(i - 1, x_m)) / (2.0 * dt)
    dq_dt = (quantum_potential(evolution.psi(i + 1), x_0, m, hbar)
             - quantum_potential(evolution.psi(i - 1), x_0, m, hbar)) / (2.0 * dt)
    v0 = vel(x_0, t)
    q_charge = potential.charge
    drive = q_charge * v0 * float(potential.field(x_0, t))
    return float(de_dt - drive - dq_dt)


# ---------------------------------------------------------------------------
# Ramo-Shockley current and its power spectral density
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurrentConfig:
    length: float  # device length L
    charge: float = 1.0

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError(f"device length must be > 0, got {self.length}")


def current_per_experiment(evolution: Evolution, trajectory: Trajectory,
                           cfg: CurrentConfig, t: float) -> float:
    """I = (q/L) v at the trajectory point, v from the momentum weak value."""
    i = evolution.index_of(t)
    psi = evolution.psi(i)
    x = float(trajectory.positions[i])
    if _is_node(psi, x):
        raise NodeError(f"current sample at a node (t={t})")
    v = VelocityInterpolator(evolution)(x, t)
    return float(cfg.charge / cfg.length * v)


def ensemble_currents(evolution: Evolution, ensemble: TrajectoryEnsemble,
                      cfg: CurrentConfig) -> np.ndarray:
    """Current record I^i(t) for every experiment; shape (nt, N)."""
    vel = VelocityInterpolator(evolution)
    out = np.empty_like(ensemble.positions)
    for j, t in enumerate(evolution.times):
        out[j] = vel(ensemble.positions[j], float(t))
    return cfg.charge / cfg.length * out


@dataclass(frozen=True)
class PSDResult:
    omega: np.ndarray
    values: np.ndarray
    tau_max: float
    lags: np.ndarray = field(default=None)
    autocorrelation: np.ndarray = field(default=None)


def autocorrelation(currents: np.ndarray, dt: float, tau_max: float) -> tuple:
    """Ensemble- and time-averaged biased autocorrelation on lags |tau| <= tau_max."""
    currents = np.atleast_2d(np.asarray(currents, dtype=float).T).T  # (nt, N)
    nt = currents.shape[0]
    m_max = int(round(tau_max / dt))
    if m_max > nt - 1:
        raise LagError(
            f"lag horizon {tau_max} exceeds record length {(nt - 1) * dt}")
    # biased estimator: divide by the full record length regardless of overlap
    c = np.empty(m_max + 1)
    for m in range(m_max + 1):
        c[m] = np.mean(np.sum(currents[:nt - m] * currents[m:], axis=0) / nt)
    lags = dt * np.arange(-m_max, m_max + 1)
    c_full = np.concatenate([c[:0:-1], c])
    return lags, c_full


def psd(currents: np.ndarray, dt: float, tau_max: float,
        window: str | None = None) -> PSDResult:
    """Wiener-Khinchin PSD: cosine transform of the symmetric autocorrelation.

    Trapezoid weights in the lag quadrature make PSD(0) equal the lag
    integral of C(tau) exactly; evenness in omega is automatic for the
    cosine transform of a real, even correlation.
    """
    lags, c = autocorrelation(currents, dt, tau_max)
    if window == "hann":
        c = c * np.hanning(len(c))
    elif window is not None:
        raise ConfigurationError(f"unknown window {window!r}")
    m_max = (len(lags) - 1) // 2
    weights = np.full_like(c, dt)
    weights[0] = weights[-1] = 0.5 * dt
    omega = np.pi / tau_max * np.arange(-m_max, m_max + 1) if m_max else np.zeros(1)
    values = np.cos(np.outer(omega, lags)) @ (weights * c)
    return PSDResult(omega, values, tau_max, lags, c)


# ---------------------------------------------------------------------------
# Dwell times
# ---------------------------------------------------------------------------

def dwell_time_trajectory(trajectory: Trajectory | np.ndarray,
                          region: tuple[float, float],
                          times: np.ndarray | None = None) -> float:
    """Time spent inside [a, b], with linear sub-step crossing refinement."""
    if isinstance(trajectory, Trajectory):
        pos, t = trajectory.positions, trajectory.times
    else:
        pos, t = np.asarray(trajectory, dtype=float), np.asarray(times, dtype=float)
    a, b = region
    if not b > a:
        raise ConfigurationError(f"region needs b > a, got [{a}, {b}]")
    if a < pos[-1] < b:
        raise HorizonError("trajectory still inside the region at the final time")
    x0, x1 = pos[:-1], pos[1:]
    dt = np.diff(t)
    lo, hi = np.minimum(x0, x1), np.maximum(x0, x1)
    overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
    span = hi - lo
    frac = np.where(span > 0, overlap / np.where(span > 0, span, 1.0),
                    ((x0 >= a) & (x0 <= b)).astype(float))
    return float(np.sum(frac * dt))


def dwell_time_ensemble(ensemble: TrajectoryEnsemble,
                        region: tuple[float, float]) -> tuple[float, float]:
    """Mean per-trajectory dwell time and its standard error."""
    a, b = region
    final = ensemble.positions[-1]
    stuck = np.count_nonzero((final > a) & (final < b))
    if stuck:
        raise HorizonError(
            f"{stuck} of {ensemble.count} trajectories still inside {region} "
            "at the final time")
    taus = np.array([dwell_time_trajectory(ensemble.positions[:, i], region,
                                           ensemble.times)
                     for i in range(ensemble.count)])
    stderr = float(np.std(taus, ddof=1) / np.sqrt(len(taus))) if len(taus) > 1 \
        else float("inf")
    return float(np.mean(taus)), stderr


def per_trajectory_dwell_times(ensemble: TrajectoryEnsemble,
                               region: tuple[float, float]) -> np.ndarray:
    return np.array([dwell_time_trajectory(ensemble.positions[:, i], region,
                                           ensemble.times)
                     for i in range(ensemble.count)])


def _region_mass(psi_frames: np.ndarray, grid, region) -> np.ndarray:
    """integral_a^b |psi|^2 dx per frame, cell-centred cumulative convention."""
    a, b = region
    dens = np.abs(psi_frames) ** 2
    x = np.concatenate([grid.x - 0.5 * grid.dx, [grid.x[-1] + 0.5 * grid.dx]])
    cum = np.concatenate([np.zeros((dens.shape[0], 1)),
                          np.cumsum(dens, axis=1) * grid.dx], axis=1)
    ca = np.array([np.interp(a, x, row) for row in cum])
    cb = np.array([np.interp(b, x, row) for row in cum])
    return cb - ca


def dwell_time_density(evolution: Evolution, region: tuple[float, float],
                       horizon: float) -> float:
    """Dwell time from the density: time integral of the in-region mass."""
    i_t = evolution.index_of(evolution.times[0] + horizon)
    mass = _region_mass(evolution.frames[:i_t + 1], evolution.grid, region)
    if mass[-1] > 1e-4:
        raise HorizonError(
            f"probability mass {mass[-1]:.2e} still inside {region} at T={horizon}")
    return float(np.trapezoid(mass, evolution.times[:i_t + 1]))

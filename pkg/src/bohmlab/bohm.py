"""Bohmian velocity field, quantum potential, equilibrium sampling and
trajectory integration.

Trajectories are integrated in a two-pass scheme: the wavefunction history
is stored first (qgrid.evolve_store), then the guidance equation
dx/dt = v(x, t) is integrated with RK4, interpolating the velocity with
cubic splines in x and linearly in t between frames.  Node points are
clamped to the nearest non-node value before splining so the integrator
never sees a singular field; equilibrium-sampled trajectories visit nodes
with probability ~0.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, NodeError
from .qgrid import Evolution, Grid1D, WaveFunction, NODE_THRESHOLD_REL


def _node_mask(amp: np.ndarray) -> np.ndarray:
    dens = np.abs(amp) ** 2
    return dens < NODE_THRESHOLD_REL * dens.max()


def _clamp_nodes(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace masked entries with the nearest unmasked value along the grid."""
    if not mask.any():
        return values
    if mask.all():
        raise NodeError("every grid point is a node")
    idx = np.arange(len(values))
    good = idx[~mask]
    nearest = good[np.argmin(np.abs(idx[:, None] - good[None, :]), axis=1)]
    out = values.copy()
    out[mask] = values[nearest[mask]]
    return out


def _spectral_derivative(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    return np.fft.ifft(1j * grid.k * np.fft.fft(values))


def _periodic_spline(grid: Grid1D, values: np.ndarray) -> CubicSpline:
    x = np.append(grid.x, grid.x_max)
    y = np.append(values, values[0])
    if np.iscomplexobj(values):
        re = CubicSpline(x, y.real, bc_type="periodic")
        im = CubicSpline(x, y.imag, bc_type="periodic")
        return lambda q: re(q) + 1j * im(q)
    return CubicSpline(x, y, bc_type="periodic")


def grid_velocity(psi: WaveFunction, mass: float = 1.0, hbar: float = 1.0,
                  clamp: bool = True) -> np.ndarray:
    """Bohmian velocity v = (hbar/m) Im[psi'/psi] at the grid points."""
    amp = psi.amplitudes
    mask = _node_mask(amp)
    dpsi = _spectral_derivative(psi.grid, amp)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = hbar / mass * np.imag(dpsi / amp)
    v[mask] = 0.0
    return _clamp_nodes(v, mask) if clamp else np.where(mask, np.nan, v)


def velocity_field(psi: WaveFunction, x, mass: float = 1.0, hbar: float = 1.0,
                   on_node: str = "raise"):
    """Velocity at arbitrary positions (cubic interpolation between grid points).

    on_node: 'raise' signals NodeError when |psi(x)|^2 is below the node
    threshold; 'clamp' returns the nearest non-node interpolant instead.
    """
    xq = np.asarray(x, dtype=float)
    if not np.all(psi.grid.contains(xq)):
        raise ConfigurationError("query position outside the grid domain")
    dens_spline = _periodic_spline(psi.grid, psi.density())
    at_node = dens_spline(xq) < NODE_THRESHOLD_REL * psi.density().max()
    if np.any(at_node) and on_node == "raise":
        raise NodeError("velocity requested at a wavefunction node")
    v = _periodic_spline(psi.grid, grid_velocity(psi, mass, hbar))(xq)
    return v if np.ndim(x) else float(v)


def quantum_potential(psi: WaveFunction, x=None, mass: float = 1.0,
                      hbar: float = 1.0, on_node: str = "raise"):
    """Q = -(hbar^2/2m) R''/R with spectral second derivative of R = |psi|."""
    r = np.abs(psi.amplitudes)
    mask = _node_mask(psi.amplitudes)
    d2r = np.fft.ifft(-psi.grid.k ** 2 * np.fft.fft(r)).real
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -hbar ** 2 / (2.0 * mass) * d2r / r
    q[mask] = 0.0
    q = _clamp_nodes(q, mask)
    if x is None:
        return q
    xq = np.asarray(x, dtype=float)
    dens_spline = _periodic_spline(psi.grid, psi.density())
    at_node = dens_spline(xq) < NODE_THRESHOLD_REL * psi.density().max()
    if np.any(at_node) and on_node == "raise":
        raise NodeError("quantum potential requested at a wavefunction node")
    qv = _periodic_spline(psi.grid, q)(xq)
    return qv if np.ndim(x) else float(qv)


def sample_initial_positions(psi: WaveFunction, n: int, seed: int) -> np.ndarray:
    """Draw n positions from |psi|^2 by inverse CDF, linear inside each cell."""
    if n < 1:
        raise ConfigurationError("need n >= 1 samples")
    dens = psi.density()
    p = dens / dens.sum()
    cdf = np.concatenate([[0.0], np.cumsum(p)])
    cdf[-1] = 1.0
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    cells = np.searchsorted(cdf, u, side="right") - 1
    cells = np.clip(cells, 0, psi.grid.n - 1)
    frac = (u - cdf[cells]) / np.maximum(p[cells], 1e-300)
    # cells are centred on the grid points; wrap keeps samples in-domain
    g = psi.grid
    xs = g.x[cells] + (np.clip(frac, 0.0, 1.0) - 0.5) * g.dx
    return g.x_min + (xs - g.x_min) % (g.x_max - g.x_min)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    experiment_id: int = 0
    truncated: bool = False

    def __post_init__(self):
        if not np.all(np.diff(self.times) > 0):
            raise ConfigurationError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.positions)):
            raise ConfigurationError("trajectory positions must be finite")


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """N trajectories on a shared time axis; positions has shape (nt, N)."""

    times: np.ndarray
    positions: np.ndarray
    seed: int
    truncated: np.ndarray  # (N,) bool

    @property
    def count(self) -> int:
        return self.positions.shape[1]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.times, self.positions[:, i], i,
                          bool(self.truncated[i]))


class VelocityInterpolator:
    """Cubic-in-x, linear-in-t velocity evaluator over a stored evolution."""

    def __init__(self, evolution: Evolution):
        self.evolution = evolution
        self._splines = [None] * len(evolution.times)

    def _spline(self, idx: int):
        if self._splines[idx] is None:
            psi = self.evolution.psi(idx)
            v = grid_velocity(psi, self.evolution.mass, self.evolution.hbar)
            self._splines[idx] = _periodic_spline(self.evolution.grid, v)
        return self._splines[idx]

    def __call__(self, x, t: float):
        times = self.evolution.times
        dt = self.evolution.frame_dt
        pos = (t - times[0]) / dt
        lo = int(np.clip(np.floor(pos), 0, len(times) - 2))
        w = np.clip(pos - lo, 0.0, 1.0)
        if w == 0.0:
            return self._spline(lo)(x)
        return (1.0 - w) * self._spline(lo)(x) + w * self._spline(lo + 1)(x)


def integrate_trajectories(evolution: Evolution, starts: np.ndarray,
                           seed: int = 0, substeps: int = 2,
                           threads: int = 1) -> TrajectoryEnsemble:
    """RK4 integration of the guidance equation for all starting points.

    The stored evolution is shared read-only; the integration is
    data-parallel over experiments (chunked threads when threads > 1, with
    results identical to the serial order).
    """
    starts = np.atleast_1d(np.asarray(starts, dtype=float))
    grid = evolution.grid
    if not np.all(grid.contains(starts)):
        raise ConfigurationError("some starting positions are outside the domain")
    vel = VelocityInterpolator(evolution)
    times = evolution.times
    nt, n_traj = len(times), len(starts)
    h = evolution.frame_dt / substeps

    def run_chunk(x0):
        pos = np.empty((nt, len(x0)))
        pos[0] = x0
        trunc = np.zeros(len(x0), dtype=bool)
        x = x0.copy()
        for j in range(nt - 1):
            t = times[j]
            for _ in range(substeps):
                k1 = vel(x, t)
                k2 = vel(x + 0.5 * h * k1, t + 0.5 * h)
                k3 = vel(x + 0.5 * h * k2, t + 0.5 * h)
                k4 = vel(x + h * k3, t + h)
                x_new = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                out = ~grid.contains(x_new)
                trunc |= out
                x = np.where(out, x, x_new)  # freeze trajectories that leave
                t += h
            pos[j + 1] = x
        return pos, trunc

    if threads > 1 and n_traj > 1:
        chunks = np.array_split(np.arange(n_traj), min(threads, n_traj))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ix: run_chunk(starts[ix]), chunks))
        positions = np.concatenate([r[0] for r in results], axis=1)
        truncated = np.concatenate([r[1] for r in results])
    else:
        positions, truncated = run_chunk(starts)
    return TrajectoryEnsemble(times, positions, seed, truncated)


def equivariance_l1(evolution: Evolution, ensemble: TrajectoryEnsemble,
                    frame: int, bins: int = 25) -> float:
    """L1 distance between the trajectory histogram and |psi|^2 at a frame."""
    psi = evolution.psi(frame)
    dens = psi.density()
    dx = evolution.grid.dx
    mass_cdf = np.cumsum(dens) * dx
    lo = evolution.grid.x[np.searchsorted(mass_cdf, 5e-4)]
    hi = evolution.grid.x[min(np.searchsorted(mass_cdf, 1 - 5e-4),
                              evolution.grid.n - 1)]
    edges = np.linspace(lo, hi, bins + 1)
    hist, _ = np.histogram(ensemble.positions[frame], bins=edges)
    emp = hist / ensemble.count
    # reference probability per bin from the grid density; cells are
    # centred on the grid points, matching the equilibrium sampler
    cum = np.concatenate([[0.0], np.cumsum(dens) * dx])
    xe = np.concatenate([evolution.grid.x - 0.5 * dx,
                         [evolution.grid.x[-1] + 0.5 * dx]])
    ref = np.diff(np.interp(edges, xe, cum))
    # include the mass falling outside the binned range on the empirical side
    out_mass = 1.0 - emp.sum() - (1.0 - ref.sum())
    return float(np.sum(np.abs(emp - ref)) + abs(out_mass))

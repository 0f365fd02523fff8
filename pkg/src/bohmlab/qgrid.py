"""1D spatial grid, wavefunctions, Hamiltonians and unitary propagation.

Conventions used throughout the package:

* natural units hbar = m = q = 1 by default, every constant is an argument;
* uniform periodic grid, x_j = x_min + j*dx, j = 0..n-1 (x_max excluded);
* the state is stored as plain amplitude samples psi(x_j), normalized so
  that sum |psi|^2 dx = 1;
* spectral (FFT) derivatives, so smooth states are resolved to machine
  precision as long as the packet stays away from the domain edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DimensionError, StepSizeError

NORM_TOL = 1e-10
NODE_THRESHOLD_REL = 1e-12  # |psi|^2 below this fraction of its max is a node
DENSE_EIG_LIMIT = 2048


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic spatial grid on [x_min, x_max)."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 16:
            raise ConfigurationError(f"grid needs n >= 16, got n={self.n}")
        if not self.x_max > self.x_min:
            raise ConfigurationError(
                f"grid needs x_max > x_min, got [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        k.flags.writeable = False
        return k

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def contains(self, x) -> np.ndarray:
        return (np.asarray(x) >= self.x_min) & (np.asarray(x) < self.x_max)


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes on a grid at one instant. Treated as immutable."""

    grid: Grid1D
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.n,):
            raise DimensionError(
                f"amplitudes shape {amp.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(amp)):
            raise ConfigurationError("wavefunction amplitudes must be finite")
        amp.flags.writeable = False
        object.__setattr__(self, "amplitudes", amp)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx))

    def normalize(self) -> "WaveFunction":
        return replace(self, amplitudes=self.amplitudes / self.norm())

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "WaveFunction") -> complex:
        self._check_same_grid(other)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx)

    def _check_same_grid(self, other: "WaveFunction"):
        if other.grid != self.grid:
            raise DimensionError("wavefunctions live on different grids")

    # -- common initial states -------------------------------------------

    @staticmethod
    def gaussian(grid: Grid1D, center: float = 0.0, width: float = 1.0,
                 momentum: float = 0.0, time: float = 0.0,
                 hbar: float = 1.0) -> "WaveFunction":
        """Normalized Gaussian packet with position spread `width` (= sigma_0)."""
        if width <= 0:
            raise ConfigurationError(f"gaussian width must be > 0, got {width}")
        x = grid.x
        amp = np.exp(-((x - center) ** 2) / (4.0 * width ** 2)
                     + 1j * momentum * x / hbar)
        psi = WaveFunction(grid, amp, time)
        return psi.normalize()

    @staticmethod
    def plane_wave(grid: Grid1D, k: float, time: float = 0.0) -> "WaveFunction":
        amp = np.exp(1j * k * grid.x)
        return WaveFunction(grid, amp, time).normalize()


def _drive_profile(amplitude, profile):
    if profile is not None:
        return profile
    return lambda t: amplitude


@dataclass(frozen=True)
class PotentialModel:
    """Scalar potential V(x, t).

    kinds:
      free                     V = 0
      barrier(height, left, right)
      harmonic(omega)          V = m omega^2 x^2 / 2
      drive(amplitude|profile) V = -q E(t) x, uniform time-dependent field
    """

    kind: str = "free"
    height: float = 0.0
    left: float = 0.0
    right: float = 0.0
    omega: float = 0.0
    amplitude: float = 0.0
    profile: Callable[[float], float] | None = None
    mass: float = 1.0
    charge: float = 1.0

    KINDS = ("free", "barrier", "harmonic", "drive")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        if self.kind == "barrier" and not self.right > self.left:
            raise ConfigurationError("barrier needs right > left")
        if self.kind == "harmonic" and self.omega <= 0:
            raise ConfigurationError("harmonic potential needs omega > 0")

    @property
    def time_dependent(self) -> bool:
        return self.kind == "drive"

    def values(self, x, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "barrier":
            return np.where((x >= self.left) & (x <= self.right), self.height, 0.0)
        if self.kind == "harmonic":
            return 0.5 * self.mass * self.omega ** 2 * x ** 2
        # drive
        e_t = _drive_profile(self.amplitude, self.profile)(t)
        return -self.charge * e_t * x

    def field(self, x, t: float = 0.0) -> np.ndarray:
        """Effective electric field E = -(1/q) dV/dx (zero inside a flat barrier)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "harmonic":
            return -self.mass * self.omega ** 2 * x / self.charge
        if self.kind == "drive":
            e_t = _drive_profile(self.amplitude, self.profile)(t)
            return np.full_like(x, e_t)
        return np.zeros_like(x)


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

def _fft_matrix_apply(grid: Grid1D, kernel: np.ndarray) -> np.ndarray:
    """Dense matrix of ifft(kernel * fft(.)) on the grid."""
    eye = np.eye(grid.n, dtype=complex)
    return np.fft.ifft(kernel[:, None] * np.fft.fft(eye, axis=0), axis=0)


class SpectralOperator:
    """An observable on the grid: direct application rule + eigen decomposition.

    Eigenvectors are columns, orthonormal under the dx-weighted inner
    product sum(conj(u) v) dx.  Position, momentum and window operators use
    implicit (analytic) eigenbases; the Hamiltonian is diagonalized densely
    on demand (n <= 2048).
    """

    def __init__(self, label: str, grid: Grid1D, apply_fn, eigenvalues=None,
                 eigenvectors=None, dense_builder=None):
        self.label = label
        self.grid = grid
        self._apply = apply_fn
        self._eigvals = eigenvalues
        self._eigvecs = eigenvectors
        self._dense_builder = dense_builder
        self._dense = None

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self._apply(np.asarray(values, dtype=complex))

    def _ensure_eigs(self):
        if self._eigvals is None:
            if self.grid.n > DENSE_EIG_LIMIT:
                raise ConfigurationError(
                    f"dense eigendecomposition limited to n <= {DENSE_EIG_LIMIT}")
            h = self.dense()
            vals, vecs = np.linalg.eigh(h)
            self._eigvals = vals
            self._eigvecs = vecs / np.sqrt(self.grid.dx)

    def eigenvalues(self) -> np.ndarray:
        self._ensure_eigs()
        return self._eigvals

    def eigenvectors(self) -> np.ndarray:
        self._ensure_eigs()
        return self._eigvecs

    def dense(self) -> np.ndarray:
        if self._dense is None:
            if self._dense_builder is not None:
                m = self._dense_builder()
            else:
                cols = [self.apply(col) for col in np.eye(self.grid.n, dtype=complex)]
                m = np.array(cols).T
            self._dense = 0.5 * (m + m.conj().T)  # kill roundoff asymmetry
        return self._dense

    def coefficients(self, psi: "WaveFunction | np.ndarray") -> np.ndarray:
        values = psi.amplitudes if isinstance(psi, WaveFunction) else np.asarray(psi)
        return self.eigenvectors().conj().T @ values * self.grid.dx

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.eigenvectors() @ np.asarray(coeffs, dtype=complex)

    def expectation_value(self, psi: WaveFunction) -> complex:
        if psi.grid != self.grid:
            raise DimensionError("operator and state live on different grids")
        return complex(np.vdot(psi.amplitudes, self.apply(psi.amplitudes))
                       * self.grid.dx)


def position_operator(grid: Grid1D) -> SpectralOperator:
    x = grid.x
    eye = np.eye(grid.n) / np.sqrt(grid.dx)
    return SpectralOperator("position", grid, lambda v: x * v,
                            eigenvalues=x.copy(), eigenvectors=eye)


def momentum_operator(grid: Grid1D, hbar: float = 1.0) -> SpectralOperator:
    hk = hbar * grid.k
    vecs = np.exp(1j * np.outer(grid.x, grid.k)) / np.sqrt(grid.length)

    def apply(v):
        return np.fft.ifft(hk * np.fft.fft(v))

    return SpectralOperator("momentum", grid, apply,
                            eigenvalues=hk.copy(), eigenvectors=vecs)


def window_operator(grid: Grid1D, a: float, b: float) -> SpectralOperator:
    """(Quasi-)projector onto the spatial window [a, b].

    Each grid point carries the cell [x - dx/2, x + dx/2]; cells cut by a
    window edge get the fractional overlap as their weight, so <window>
    reproduces the exact region mass instead of a cell-quantized one.
    """
    if not b > a:
        raise ConfigurationError(f"window needs b > a, got [{a}, {b}]")
    lo, hi = grid.x - 0.5 * grid.dx, grid.x + 0.5 * grid.dx
    ind = np.clip((np.minimum(hi, b) - np.maximum(lo, a)) / grid.dx, 0.0, 1.0)
    eye = np.eye(grid.n) / np.sqrt(grid.dx)
    return SpectralOperator("window", grid, lambda v: ind * v,
                            eigenvalues=ind.copy(), eigenvectors=eye)


def build_hamiltonian(grid: Grid1D, potential: PotentialModel, t: float = 0.0,
                      mass: float = 1.0, hbar: float = 1.0) -> SpectralOperator:
    """H = -(hbar^2/2m) d^2/dx^2 + V(x, t) with spectral kinetic term."""
    if potential.kind == "barrier":
        pts = np.count_nonzero((grid.x >= potential.left) & (grid.x <= potential.right))
        if pts < 4:
            raise ConfigurationError(
                f"grid too coarse: only {pts} points across the barrier "
                f"[{potential.left}, {potential.right}]")
    v = potential.values(grid.x, t)
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("potential is not finite on the grid")
    kin = hbar ** 2 * grid.k ** 2 / (2.0 * mass)

    def apply(vec):
        return np.fft.ifft(kin * np.fft.fft(vec)) + v * vec

    def dense_builder():
        return _fft_matrix_apply(grid, kin.astype(complex)) + np.diag(v)

    return SpectralOperator("hamiltonian", grid, apply, dense_builder=dense_builder)


def evolution_operator(grid: Grid1D, potential: PotentialModel, duration: float,
                       t: float = 0.0, mass: float = 1.0,
                       hbar: float = 1.0) -> np.ndarray:
    """Dense U = exp(-i H duration / hbar) acting on amplitude samples.

    Exact (to the dense eigendecomposition) for time-independent H; the
    drive kind is rejected since its Hamiltonian does not commute with
    itself across times.
    """
    if potential.time_dependent:
        raise ConfigurationError(
            "evolution_operator requires a time-independent potential")
    h = build_hamiltonian(grid, potential, t, mass, hbar)
    e = h.eigenvalues()
    v = h.eigenvectors()
    phases = np.exp(-1j * e * duration / hbar)
    return (v * phases) @ v.conj().T * grid.dx


def expectation(op: SpectralOperator, psi: WaveFunction) -> float:
    """Real expectation value <psi|op|psi>; raises if the residue is not tiny."""
    val = op.expectation_value(psi)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ConfigurationError(
            f"expectation value has imaginary residue {val.imag:.3e}")
    return val.real


# ---------------------------------------------------------------------------
# Polar decomposition
# ---------------------------------------------------------------------------

class PolarFields(NamedTuple):
    modulus: np.ndarray        # R >= 0
    phase_action: np.ndarray   # curly-S, with psi = R exp(i S / hbar)
    node_mask: np.ndarray      # True where the phase is undefined


def polar_decompose(psi: WaveFunction, hbar: float = 1.0,
                    node_threshold_rel: float = NODE_THRESHOLD_REL) -> PolarFields:
    """Split psi into modulus and (unwrapped) phase action.

    The phase is unwrapped cumulatively along increasing x and restarted
    after each node; at flagged nodes it is left at the raw angle value and
    must not be trusted.
    """
    amp = psi.amplitudes
    r = np.abs(amp)
    mask = r ** 2 < node_threshold_rel * np.max(r ** 2)
    theta = np.angle(amp)
    unwrapped = theta.copy()
    # unwrap each contiguous non-node segment independently
    idx = np.flatnonzero(~mask)
    if idx.size:
        splits = np.flatnonzero(np.diff(idx) > 1) + 1
        for seg in np.split(idx, splits):
            unwrapped[seg] = np.unwrap(theta[seg])
    return PolarFields(r, hbar * unwrapped, mask)


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    method: str = "split-operator"  # or "crank-nicolson"
    steps_per_output: int = 10

    METHODS = ("split-operator", "crank-nicolson")

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.method not in self.METHODS:
            raise ConfigurationError(f"unknown propagation method {self.method!r}")
        if self.steps_per_output < 1:
            raise ConfigurationError("steps_per_output must be >= 1")


class _SplitOperatorStepper:
    def __init__(self, grid, potential, dt, mass, hbar):
        self.grid = grid
        self.potential = potential
        self.dt = dt
        self.hbar = hbar
        self._kin_phase = np.exp(-1j * hbar * grid.k ** 2 * dt / (2.0 * mass))
        self._v_cache = {}

    def _half_v(self, t):
        # cache the static-potential phase; time-dependent drives are rebuilt
        if self.potential.time_dependent:
            v = self.potential.values(self.grid.x, t)
            return np.exp(-0.5j * v * self.dt / self.hbar)
        if "static" not in self._v_cache:
            v = self.potential.values(self.grid.x, t)
            self._v_cache["static"] = np.exp(-0.5j * v * self.dt / self.hbar)
        return self._v_cache["static"]

    def step(self, amp, t):
        amp = self._half_v(t) * amp
        amp = np.fft.ifft(self._kin_phase * np.fft.fft(amp))
        amp = self._half_v(t + self.dt) * amp
        return amp


class _CrankNicolsonStepper:
    """Cayley form (1 + i dt H / 2 hbar) psi' = (1 - i dt H / 2 hbar) psi.

    Exactly unitary and exactly time-reversible; the LU factorization is
    cached for time-independent potentials.
    """

    def __init__(self, grid, potential, dt, mass, hbar):
        self.grid = grid
        self.potential = potential
        self.dt = dt
        self.mass = mass
        self.hbar = hbar
        self._cache = None
        if not potential.time_dependent:
            self._cache = self._factor(0.0)

    def _factor(self, t):
        h = build_hamiltonian(self.grid, self.potential, t, self.mass,
                              self.hbar).dense()
        z = 0.5j * self.dt / self.hbar
        a = np.eye(self.grid.n) + z * h
        b = np.eye(self.grid.n) - z * h
        return scipy.linalg.lu_factor(a), b

    def step(self, amp, t):
        if self._cache is not None:
            lu, b = self._cache
        else:
            lu, b = self._factor(t + 0.5 * self.dt)
        return scipy.linalg.lu_solve(lu, b @ amp)


def _make_stepper(grid, potential, dt, method, mass, hbar):
    cls = _SplitOperatorStepper if method == "split-operator" else _CrankNicolsonStepper
    return cls(grid, potential, dt, mass, hbar)


def _step_count(duration, dt):
    steps = max(1, int(round(abs(duration) / dt)))
    return steps, np.sign(duration) * abs(duration) / steps


def propagate(psi: WaveFunction, potential: PotentialModel, cfg: PropagatorConfig,
              duration: float, mass: float = 1.0, hbar: float = 1.0) -> WaveFunction:
    """Advance psi by `duration` (may be negative: reverse evolution)."""
    if duration == 0.0:
        return psi
    steps, dt = _step_count(duration, cfg.dt)
    stepper = _make_stepper(psi.grid, potential, dt, cfg.method, mass, hbar)
    amp = psi.amplitudes
    t = psi.time
    for _ in range(steps):
        amp = stepper.step(amp, t)
        t += dt
    out = WaveFunction(psi.grid, amp, psi.time + duration)
    drift = abs(out.norm() - 1.0)
    if drift > 1e-6:
        raise StepSizeError(
            f"norm drift {drift:.3e} exceeds 1e-6; dt={cfg.dt} is too large")
    return out


@dataclass
class Evolution:
    """A stored wavefunction history on uniformly spaced output frames."""

    grid: Grid1D
    times: np.ndarray          # (nt,)
    frames: np.ndarray         # (nt, n) complex
    potential: PotentialModel
    mass: float = 1.0
    hbar: float = 1.0

    @property
    def frame_dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def psi(self, index: int) -> WaveFunction:
        return WaveFunction(self.grid, self.frames[index], float(self.times[index]))

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        idx = int(round((t - self.times[0]) / self.frame_dt))
        if idx < 0 or idx >= len(self.times) or abs(self.times[idx] - t) > tol:
            raise ConfigurationError(f"time {t} is not a stored frame")
        return idx


def evolve_store(psi: WaveFunction, potential: PotentialModel,
                 cfg: PropagatorConfig, duration: float,
                 mass: float = 1.0, hbar: float = 1.0) -> Evolution:
    """Propagate and record a frame every cfg.steps_per_output steps."""
    if duration <= 0:
        raise ConfigurationError("evolve_store needs duration > 0")
    total_steps, _ = _step_count(duration, cfg.dt)
    spo = cfg.steps_per_output
    n_frames = int(np.ceil(total_steps / spo))
    dt = duration / (n_frames * spo)  # exact multiple of steps_per_output
    stepper = _make_stepper(psi.grid, potential, dt, cfg.method, mass, hbar)
    frames = np.empty((n_frames + 1, psi.grid.n), dtype=complex)
    times = psi.time + dt * spo * np.arange(n_frames + 1)
    frames[0] = psi.amplitudes
    amp = psi.amplitudes
    t = psi.time
    for frame in range(1, n_frames + 1):
        for _ in range(spo):
            amp = stepper.step(amp, t)
            t += dt
        drift = abs(np.sqrt(np.sum(np.abs(amp) ** 2) * psi.grid.dx) - 1.0)
        if drift > 1e-6:
            raise StepSizeError(
                f"norm drift {drift:.3e} exceeds 1e-6; dt={cfg.dt} is too large")
        frames[frame] = amp
    return Evolution(psi.grid, times, frames, potential, mass, hbar)

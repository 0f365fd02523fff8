"""Scenario configuration, deterministic task pipelines and persistence.

A scenario is a JSON document with the sections units / grid / potential /
state / propagator / ensemble / task; missing keys are filled from defaults
and unknown keys are rejected with a nearest-key suggestion.  run() executes
the configured task and writes plot-ready CSV/JSON artifacts atomically: all
files are produced in a temporary directory and moved into place only on
success, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigurationError
from .qgrid import (Grid1D, PotentialModel, PropagatorConfig, WaveFunction,
                    build_hamiltonian, evolution_operator, evolve_store,
                    expectation, momentum_operator, position_operator)
from .bohm import equivariance_l1, integrate_trajectories, sample_initial_positions
from .weakval import dwell_operator_field, weak_average_quadrature
from .intrinsics import (CurrentConfig, dwell_time_density, dwell_time_ensemble,
                         ensemble_currents, per_trajectory_dwell_times, psd,
                         work_distribution, work_records)
from .measure import (AncillaModel, TwoTimeSystem, operational_weak_value,
                      two_time_joint)

OUT_DIR_ENV = "BOHMLAB_OUT"

DEFAULTS = {
    "units": {"hbar": 1.0, "mass": 1.0, "charge": 1.0},
    "grid": {"x_min": -30.0, "x_max": 30.0, "n": 512},
    "potential": {"kind": "free"},
    "state": {"kind": "gaussian", "center": 0.0, "width": 1.0, "momentum": 0.0},
    "propagator": {"dt": 0.005, "method": "split-operator",
                   "steps_per_output": 10},
    "ensemble": {"n": 1000, "seed": 42},
    "task": {"name": "propagate"},
}

_POTENTIAL_KEYS = {
    "free": set(),
    "barrier": {"height", "left", "right"},
    "harmonic": {"omega"},
    "drive": {"amplitude"},
}
_STATE_KEYS = {
    "gaussian": {"center", "width", "momentum"},
    "eigenstate": {"index"},
    "superposition": {"components"},
}
_TASK_DEFAULTS = {
    "propagate": {"duration": 1.0},
    "trajectories": {"duration": 1.0, "substeps": 2},
    "weakvalue": {"operator": "momentum", "duration": 0.0},
    "work": {"duration": 1.0},
    "dwell": {"region": [-2.0, 2.0], "horizon": 4.0, "substeps": 2},
    "psd": {"duration": 1.0, "tau_max": 0.5, "window": None,
            "device_length": None},
    "measure": {"s_operator": "momentum", "g_operator": "position",
                "coupling": 0.05, "width": 1.0, "duration": 1.0,
                "g_index": "auto", "mode": "exact", "n_experiments": 10_000},
    "validate": {},
}


def _suggest(key, known):
    close = difflib.get_close_matches(key, sorted(known), n=1)
    hint = f" (did you mean {close[0]!r}?)" if close else ""
    return f"unknown key {key!r}{hint}"


def _check_keys(section, given, known, errors):
    for key in given:
        if key not in known:
            errors.append(f"{section}: " + _suggest(key, known))


@dataclass(frozen=True)
class ScenarioConfig:
    units: dict
    grid: dict
    potential: dict
    state: dict
    propagator: dict
    ensemble: dict
    task: dict

    def normalized(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in
                ("units", "grid", "potential", "state", "propagator",
                 "ensemble", "task")}

    def to_json(self) -> str:
        return json.dumps(self.normalized(), sort_keys=True, indent=2)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.normalized(), sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def seed(self) -> int:
        return int(self.ensemble["seed"])

    def subsystem_seeds(self) -> dict:
        """Deterministic per-subsystem streams from the one master seed.

        Fixed spawn order: 0 = equilibrium sampling, 1 = Monte Carlo
        measurement chains, 2 = reserved.
        """
        state = np.random.SeedSequence(self.seed).generate_state(3)
        return {"sampling": int(state[0]), "monte_carlo": int(state[1]),
                "reserved": int(state[2])}

    # -- builders ----------------------------------------------------------
    def build_grid(self) -> Grid1D:
        g = self.grid
        return Grid1D(float(g["x_min"]), float(g["x_max"]), int(g["n"]))

    def build_potential(self) -> PotentialModel:
        p = dict(self.potential)
        kind = p.pop("kind")
        return PotentialModel(kind, charge=float(self.units["charge"]), **p)

    def build_state(self, grid: Grid1D) -> WaveFunction:
        s, hbar = self.state, float(self.units["hbar"])
        if s["kind"] == "gaussian":
            return WaveFunction.gaussian(grid, center=float(s["center"]),
                                         width=float(s["width"]),
                                         momentum=float(s["momentum"]),
                                         hbar=hbar)
        if s["kind"] == "eigenstate":
            h = build_hamiltonian(grid, self.build_potential(),
                                  mass=float(self.units["mass"]), hbar=hbar)
            return WaveFunction(grid, h.eigenvectors()[:, int(s["index"])])
        amp = np.zeros(grid.n, dtype=complex)
        for comp in s["components"]:
            part = WaveFunction.gaussian(grid, center=float(comp["center"]),
                                         width=float(comp["width"]),
                                         momentum=float(comp.get("momentum", 0.0)),
                                         hbar=hbar)
            amp += np.sqrt(float(comp["weight"])) * part.amplitudes
        return WaveFunction(grid, amp).normalize()

    def build_propagator(self) -> PropagatorConfig:
        p = self.propagator
        return PropagatorConfig(float(p["dt"]), method=p["method"],
                                steps_per_output=int(p["steps_per_output"]))


def _validate(cfg: dict) -> list[str]:
    errors = []
    _check_keys("top level", cfg, DEFAULTS, errors)

    def num(section, key, cond, desc):
        try:
            v = float(cfg[section][key])
        except (KeyError, TypeError, ValueError):
            errors.append(f"{section}.{key}: not a number")
            return
        if not cond(v):
            errors.append(f"{section}.{key}: {desc}, got {v}")

    for section in ("units", "grid", "propagator", "ensemble"):
        _check_keys(section, cfg.get(section, {}), DEFAULTS[section], errors)
    num("units", "hbar", lambda v: v > 0, "must be > 0")
    num("units", "mass", lambda v: v > 0, "must be > 0")
    num("grid", "n", lambda v: v >= 16 and v == int(v), "must be an integer >= 16")
    if float(cfg["grid"]["x_max"]) <= float(cfg["grid"]["x_min"]):
        errors.append("grid: x_max must exceed x_min")
    num("propagator", "dt", lambda v: v > 0, "must be > 0")
    num("propagator", "steps_per_output", lambda v: v >= 1 and v == int(v),
        "must be an integer >= 1")
    if cfg["propagator"]["method"] not in ("split-operator", "crank-nicolson"):
        errors.append(f"propagator.method: unknown method "
                      f"{cfg['propagator']['method']!r}")
    num("ensemble", "n", lambda v: v >= 1 and v == int(v),
        "must be an integer >= 1")
    num("ensemble", "seed", lambda v: v >= 0 and v == int(v),
        "must be a non-negative integer")

    pot = cfg.get("potential", {})
    kind = pot.get("kind")
    if kind not in _POTENTIAL_KEYS:
        errors.append("potential.kind: " + _suggest(str(kind), _POTENTIAL_KEYS))
    else:
        _check_keys("potential", set(pot) - {"kind"}, _POTENTIAL_KEYS[kind],
                    errors)
        if kind == "barrier" and float(pot.get("right", 1)) <= float(pot.get("left", 0)):
            errors.append("potential: barrier needs right > left")

    state = cfg.get("state", {})
    skind = state.get("kind")
    if skind not in _STATE_KEYS:
        errors.append("state.kind: " + _suggest(str(skind), _STATE_KEYS))
    else:
        _check_keys("state", set(state) - {"kind"}, _STATE_KEYS[skind], errors)
        if skind == "gaussian" and float(state.get("width", 1.0)) <= 0:
            errors.append(f"state.width: must be > 0, got {state['width']}")
        if skind == "superposition":
            for i, comp in enumerate(state.get("components", [])):
                if float(comp.get("weight", 1.0)) <= 0:
                    errors.append(f"state.components[{i}].weight: must be > 0")
                if float(comp.get("width", 1.0)) <= 0:
                    errors.append(f"state.components[{i}].width: must be > 0")

    task = cfg.get("task", {})
    name = task.get("name")
    if name not in _TASK_DEFAULTS:
        errors.append("task.name: " + _suggest(str(name), _TASK_DEFAULTS))
        return errors
    _check_keys(f"task({name})", set(task) - {"name"}, _TASK_DEFAULTS[name],
                errors)
    if "duration" in task and float(task["duration"]) < 0:
        errors.append(f"task.duration: must be >= 0, got {task['duration']}")
    if name == "dwell":
        a, b = task["region"]
        if not float(b) > float(a):
            errors.append(f"task.region: needs b > a, got {task['region']}")
        if float(task["horizon"]) <= 0:
            errors.append("task.horizon: must be > 0")
    if name == "psd" and float(task["tau_max"]) <= 0:
        errors.append("task.tau_max: must be > 0")
    if name == "measure":
        for key in ("coupling", "width"):
            if float(task[key]) <= 0:
                errors.append(f"task.{key}: must be > 0, got {task[key]}")
        if task["mode"] not in ("exact", "monte_carlo"):
            errors.append(f"task.mode: unknown mode {task['mode']!r}")
        if int(task["n_experiments"]) < 1:
            errors.append("task.n_experiments: must be >= 1")
    return errors


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_config(text: str) -> ScenarioConfig:
    """Parse + validate; the error message lists every violation at once."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    merged = _merge(DEFAULTS, raw)
    task_name = merged["task"].get("name")
    if task_name in _TASK_DEFAULTS:
        merged["task"] = _merge({"name": task_name,
                                 **_TASK_DEFAULTS[task_name]}, merged["task"])
    violations = _validate(merged)
    if violations:
        err = ConfigurationError("invalid config:\n  " + "\n  ".join(violations))
        err.violations = violations
        raise err
    return ScenarioConfig(**merged)


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    version: str
    outputs: list
    wall_clock: float
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed,
                "version": self.version, "outputs": list(self.outputs),
                "wall_clock": self.wall_clock, "summary": self.summary}


# ---------------------------------------------------------------------------
# Output writers (17 significant digits so downstream diffs are exact)
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Task pipelines: each returns (output file names, summary dict)
# ---------------------------------------------------------------------------

def _mass_hbar(config):
    return float(config.units["mass"]), float(config.units["hbar"])


def _evolve(config, duration):
    grid = config.build_grid()
    pot = config.build_potential()
    psi = config.build_state(grid)
    mass, hbar = _mass_hbar(config)
    ev = evolve_store(psi, pot, config.build_propagator(), duration,
                      mass=mass, hbar=hbar)
    return grid, pot, psi, ev


def _task_propagate(config, tmp, threads):
    grid, _, _, ev = _evolve(config, float(config.task["duration"]))
    header = ["x"] + [f"t={t:.6g}" for t in ev.times]
    dens = np.array([ev.psi(i).density() for i in range(len(ev.times))])
    _write_csv(os.path.join(tmp, "density.csv"), header,
               np.column_stack([grid.x, dens.T]))
    norms = [(t, ev.psi(i).norm()) for i, t in enumerate(ev.times)]
    _write_csv(os.path.join(tmp, "norms.csv"), ["t", "norm"], norms)
    return ["density.csv", "norms.csv"], {
        "n_frames": len(ev.times), "final_norm": float(ev.psi(len(ev.times) - 1).norm())}


def _trajectory_ensemble(config, ev, psi, threads, substeps=2):
    starts = sample_initial_positions(psi, int(config.ensemble["n"]),
                                      seed=config.subsystem_seeds()["sampling"])
    return integrate_trajectories(ev, starts, substeps=substeps,
                                  threads=threads)


def _task_trajectories(config, tmp, threads):
    _, _, psi, ev = _evolve(config, float(config.task["duration"]))
    ens = _trajectory_ensemble(config, ev, psi, threads,
                               substeps=int(config.task["substeps"]))
    header = ["t"] + [f"x_{i}" for i in range(ens.count)]
    _write_csv(os.path.join(tmp, "trajectories.csv"), header,
               np.column_stack([ens.times, ens.positions]))
    last = len(ev.times) - 1
    return ["trajectories.csv"], {
        "n_trajectories": ens.count,
        "equivariance_l1_final": equivariance_l1(ev, ens, last),
        "truncated": int(ens.truncated.sum())}


def _operator(name, grid, mass, hbar, potential):
    if name == "momentum":
        return momentum_operator(grid, hbar)
    if name == "position":
        return position_operator(grid)
    if name == "hamiltonian":
        return build_hamiltonian(grid, potential, mass=mass, hbar=hbar)
    raise ConfigurationError(f"unknown operator {name!r}")


def _task_weakvalue(config, tmp, threads):
    duration = float(config.task["duration"])
    if duration > 0:
        grid, pot, _, ev = _evolve(config, duration)
        psi = ev.psi(len(ev.times) - 1)
    else:
        grid = config.build_grid()
        pot = config.build_potential()
        psi = config.build_state(grid)
    mass, hbar = _mass_hbar(config)
    op = _operator(config.task["operator"], grid, mass, hbar, pot)
    dens = psi.density()
    with np.errstate(divide="ignore", invalid="ignore"):
        wv = op.apply(psi.amplitudes) / psi.amplitudes
    wv[dens < 1e-12 * dens.max()] = np.nan
    _write_csv(os.path.join(tmp, "weakvalue.csv"),
               ["x", "real", "imag", "density"],
               np.column_stack([grid.x, wv.real, wv.imag, dens]))
    return ["weakvalue.csv"], {
        "operator": config.task["operator"],
        "quadrature_average": weak_average_quadrature(op, psi)}


def _task_work(config, tmp, threads):
    grid, pot, psi, ev = _evolve(config, float(config.task["duration"]))
    ens = _trajectory_ensemble(config, ev, psi, threads)
    t2 = float(ev.times[-1])
    records = work_records(ev, pot, ens, 0.0, t2)
    _write_csv(os.path.join(tmp, "work_records.csv"),
               ["experiment_id", "e_initial", "e_final", "work", "flagged"],
               [(r.experiment_id, r.e_initial, r.e_final, r.work, r.flagged)
                for r in records])
    dist = work_distribution(records)
    mass, hbar = _mass_hbar(config)
    delta_h = expectation(build_hamiltonian(grid, pot, t=t2, mass=mass, hbar=hbar),
                          ev.psi(len(ev.times) - 1)) \
        - expectation(build_hamiltonian(grid, pot, t=0.0, mass=mass, hbar=hbar),
                      psi)
    _write_json(os.path.join(tmp, "work_distribution.json"), {
        "bin_edges": list(dist.bin_edges), "probabilities": list(dist.probabilities),
        "count": dist.count, "mean": dist.mean, "std": dist.std,
        "flagged_count": dist.flagged_count})
    return ["work_records.csv", "work_distribution.json"], {
        "mean_work": dist.mean, "std_work": dist.std,
        "delta_h": float(delta_h), "flagged": dist.flagged_count}


def _task_dwell(config, tmp, threads):
    region = tuple(float(v) for v in config.task["region"])
    horizon = float(config.task["horizon"])
    grid, pot, psi, ev = _evolve(config, horizon)
    ens = _trajectory_ensemble(config, ev, psi, threads,
                               substeps=int(config.task["substeps"]))
    taus = per_trajectory_dwell_times(ens, region)
    t_traj, stderr = dwell_time_ensemble(ens, region)
    t_density = dwell_time_density(ev, region, horizon)
    _write_csv(os.path.join(tmp, "dwell_times.csv"),
               ["experiment_id", "x_start", "tau"],
               np.column_stack([np.arange(ens.count), ens.positions[0], taus]))
    summary = {"trajectory_mean": float(t_traj),
               "trajectory_stderr": float(stderr),
               "density": float(t_density)}
    if not pot.time_dependent:
        mass, hbar = _mass_hbar(config)
        prop = config.build_propagator()
        cn = PropagatorConfig(prop.dt, method="crank-nicolson",
                              steps_per_output=prop.steps_per_output)
        field_vals = dwell_operator_field(psi, region, horizon, cn,
                                          potential=pot, mass=mass, hbar=hbar)
        ok = np.isfinite(field_vals)
        summary["weak_value"] = float(
            np.sum(psi.density()[ok] * field_vals[ok]) * grid.dx)
    _write_json(os.path.join(tmp, "dwell.json"), summary)
    return ["dwell_times.csv", "dwell.json"], summary


def _task_psd(config, tmp, threads):
    grid, _, psi, ev = _evolve(config, float(config.task["duration"]))
    ens = _trajectory_ensemble(config, ev, psi, threads)
    length = config.task["device_length"]
    length = float(length) if length is not None else grid.x_max - grid.x_min
    currents = ensemble_currents(ev, ens, CurrentConfig(
        length=length, charge=float(config.units["charge"])))
    result = psd(currents, float(ev.frame_dt), float(config.task["tau_max"]),
                 window=config.task["window"])
    _write_csv(os.path.join(tmp, "autocorrelation.csv"), ["tau", "c"],
               np.column_stack([result.lags, result.autocorrelation]))
    _write_csv(os.path.join(tmp, "psd.csv"), ["omega", "psd"],
               np.column_stack([result.omega, result.values]))
    mid = len(result.omega) // 2
    return ["autocorrelation.csv", "psd.csv"], {
        "psd_zero": float(result.values[mid]),
        "n_lags": len(result.lags), "device_length": length}


def _task_measure(config, tmp, threads):
    grid = config.build_grid()
    pot = config.build_potential()
    psi = config.build_state(grid)
    mass, hbar = _mass_hbar(config)
    task = config.task
    u = evolution_operator(grid, pot, float(task["duration"]),
                           mass=mass, hbar=hbar)
    s_op = _operator(task["s_operator"], grid, mass, hbar, pot)
    g_op = _operator(task["g_operator"], grid, mass, hbar, pot)
    system = TwoTimeSystem.from_wavefunction(psi, s_op, g_op, u)
    s_max = float(np.abs(system.s_values).max())
    ancilla = AncillaModel.gaussian(float(task["coupling"]),
                                    float(task["width"]), s_max)
    joint = two_time_joint(system, ancilla)
    if task["g_index"] == "auto":
        g_index = int(np.argmax(joint.second_outcome_probabilities()))
    else:
        g_index = int(task["g_index"])

    header = ["y_k"] + [f"g={g:.10g}" for g in joint.g_values]
    _write_csv(os.path.join(tmp, "joint_distribution.csv"), header,
               np.column_stack([joint.yk_grid, joint.density.T]))

    exact = operational_weak_value(system, ancilla, g_index, mode="exact")
    summary = {"g_index": g_index,
               "g_value": float(joint.g_values[g_index]),
               "exact_value": exact.value,
               "post_selection_probability": exact.post_selection_probability,
               "retained_weight": system.retained_weight}
    files = ["joint_distribution.csv", "measure_summary.json"]
    if task["mode"] == "monte_carlo":
        log_path = os.path.join(tmp, "experiments.jsonl")
        lam = ancilla.coupling
        with open(log_path, "w") as fh:
            def log(done, y_k, outcome, hit, weights):
                for j in range(len(y_k)):
                    fh.write(json.dumps({
                        "i": int(done + j), "y_k": float(y_k[j]),
                        "y_g": float(lam * joint.g_values[outcome[j]]),
                        "post_selected": bool(hit[j]),
                        "weight": float(weights[j])}) + "\n")

            mc = operational_weak_value(
                system, ancilla, g_index, mode="monte_carlo",
                n_experiments=int(task["n_experiments"]),
                seed=config.subsystem_seeds()["monte_carlo"], log_callback=log)
        summary.update(monte_carlo_value=mc.value, monte_carlo_stderr=mc.stderr,
                       n_selected=mc.n_selected)
        files.append("experiments.jsonl")
    _write_json(os.path.join(tmp, "measure_summary.json"), summary)
    return files, summary


def _task_validate(config, tmp, threads):
    from .validation import validate_all
    report = validate_all()
    _write_json(os.path.join(tmp, "validation_report.json"), report)
    return ["validation_report.json"], {
        "passed": report["passed"], "n_passed": report["n_passed"],
        "n_total": report["n_total"]}


_TASKS = {
    "propagate": _task_propagate,
    "trajectories": _task_trajectories,
    "weakvalue": _task_weakvalue,
    "work": _task_work,
    "dwell": _task_dwell,
    "psd": _task_psd,
    "measure": _task_measure,
    "validate": _task_validate,
}


def resolve_out_dir(explicit: str | None = None) -> str:
    return explicit or os.environ.get(OUT_DIR_ENV) or "runs"


def run(config: ScenarioConfig, out_dir: str | None = None,
        threads: int = 1) -> RunManifest:
    """Execute the configured task; outputs appear atomically in out_dir."""
    out_dir = resolve_out_dir(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    tmp = tempfile.mkdtemp(dir=out_dir, prefix=".partial-")
    start = time.perf_counter()
    try:
        files, summary = _TASKS[config.task["name"]](config, tmp, threads)
        manifest = RunManifest(config.config_hash, config.seed, __version__,
                               files + ["manifest.json"],
                               time.perf_counter() - start, summary)
        _write_json(os.path.join(tmp, "manifest.json"), manifest.to_dict())
        for name in manifest.outputs:
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return manifest

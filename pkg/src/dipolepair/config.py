"""Run configuration, orchestration and deterministic persistence.

Configurations are JSON documents; the schema is documented in the README.
Every run writes its artifacts (trajectory or sweep CSV, ensemble table)
plus a manifest JSON naming them, recording the full effective config, the
tool version, the ensemble hash, integrator statistics and the validity
monitor summary. Identical configs produce byte-identical CSVs.

Floats are formatted with 17 significant digits everywhere, which
round-trips IEEE doubles losslessly.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .model import PhysParams, Geometry, validate_params
from .dynamics import Trajectory, integrate_fixed_rk4, output_grid, build_superoperators
from .couplings import all_couplings
from .observables import intensity_series, detector_phase, long_time_metrics
from .ensembles import WeightedEnsemble, from_descriptor
from .averaging import (METHODS, SWEEP_METRICS, SweepResult, ac_average,
                        ap_run, single_run, sweep)

# Validity thresholds for the monitor summary (exit status 2 beyond these).
MONITOR_TRACE_TOL = 1e-8
MONITOR_HERM_TOL = 1e-8
MONITOR_EIG_TOL = -1e-6

VERIFY_RK4_DT = 5e-4
VERIFY_RK4_TOL = 1e-5


class ConfigError(ValueError):
    """Schema violation in a run configuration."""


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float = 50.0
    dt_out: float = 0.01
    rtol: float = 1e-8
    atol: float = 1e-10


@dataclass(frozen=True)
class SweepConfig:
    vary: str
    values: tuple[float, ...]
    metric: str = "delta_i"
    window_fraction: float = 0.2


@dataclass(frozen=True)
class RunConfig:
    params: PhysParams
    scenario: Mapping
    method: str = "single"
    initial_state: str = "33"
    integrator: IntegratorConfig = IntegratorConfig()
    sweep: SweepConfig | None = None
    threads: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenario", dict(self.scenario))


_TOP_KEYS = {"params", "initial_state", "method", "scenario", "integrator",
             "sweep", "threads"}
_PARAM_KEYS = {"rabi1", "rabi2", "det1", "det2", "delta_lower",
               "gamma1", "gamma2", "k0"}
_INTEGRATOR_KEYS = {"t_end", "dt_out", "rtol", "atol"}
_SWEEP_KEYS = {"vary", "values", "metric", "window_fraction"}
_ALL_METHODS = ("single",) + METHODS


def _need_number(obj, path):
    if not isinstance(obj, (int, float)) or isinstance(obj, bool) \
            or not math.isfinite(obj):
        raise ConfigError(f"{path}: expected a finite number, got {obj!r}")
    return float(obj)


def _need_mapping(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    return obj


def _check_keys(obj, allowed, path):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON: {exc}") from None
    raw = _need_mapping(raw, "config")
    _check_keys(raw, _TOP_KEYS, "config")

    pblock = _need_mapping(raw.get("params", {}), "params")
    _check_keys(pblock, _PARAM_KEYS, "params")
    params = PhysParams(**{k: _need_number(v, f"params.{k}")
                           for k, v in pblock.items()})
    validate_params(params)

    method = raw.get("method", "single")
    if method not in _ALL_METHODS:
        raise ConfigError(f"method: must be one of {_ALL_METHODS}, got {method!r}")

    scenario = raw.get("scenario")
    if not isinstance(scenario, dict) or not scenario:
        raise ConfigError("scenario: exactly one scenario required")
    if method == "single" and scenario.get("kind") != "fixed":
        raise ConfigError("scenario.kind: method 'single' requires kind 'fixed'")

    initial = raw.get("initial_state", "33")
    if (not isinstance(initial, str) or len(initial) != 2
            or any(ch not in "123" for ch in initial)):
        raise ConfigError(
            f"initial_state: expected two digits from {{1,2,3}} "
            f"(atom A then atom B), got {initial!r}")

    iblock = _need_mapping(raw.get("integrator", {}), "integrator")
    _check_keys(iblock, _INTEGRATOR_KEYS, "integrator")
    integ = IntegratorConfig(**{k: _need_number(v, f"integrator.{k}")
                                for k, v in iblock.items()})
    for name in _INTEGRATOR_KEYS:
        if getattr(integ, name) <= 0:
            raise ConfigError(f"integrator.{name}: must be positive")
    try:
        output_grid(integ.t_end, integ.dt_out)
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None

    swp = None
    if "sweep" in raw and raw["sweep"] is not None:
        if method == "single":
            raise ConfigError("sweep: not allowed with method 'single'")
        sblock = _need_mapping(raw["sweep"], "sweep")
        _check_keys(sblock, _SWEEP_KEYS, "sweep")
        for key in ("vary", "values"):
            if key not in sblock:
                raise ConfigError(f"sweep.{key}: required")
        vary = sblock["vary"]
        if not isinstance(vary, str):
            raise ConfigError(f"sweep.vary: expected a string, got {vary!r}")
        values = sblock["values"]
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.values: expected a non-empty list")
        values = tuple(_need_number(v, f"sweep.values[{i}]")
                       for i, v in enumerate(values))
        metric = sblock.get("metric", "delta_i")
        if metric not in SWEEP_METRICS:
            raise ConfigError(f"sweep.metric: must be one of {SWEEP_METRICS}")
        wf = _need_number(sblock.get("window_fraction", 0.2), "sweep.window_fraction")
        if not 0.0 < wf <= 1.0:
            raise ConfigError("sweep.window_fraction: must lie in (0, 1]")
        swp = SweepConfig(vary=vary, values=values, metric=metric,
                          window_fraction=wf)

    threads = raw.get("threads")
    if threads is not None:
        if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
            raise ConfigError(f"threads: expected a positive integer, got {threads!r}")

    # validate the scenario by building it (first sweep row when sweeping)
    probe = dict(scenario)
    if swp is not None:
        probe[swp.vary] = swp.values[0]
    try:
        from_descriptor(probe)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    return RunConfig(params=params, scenario=scenario, method=method,
                     initial_state=initial, integrator=integ, sweep=swp,
                     threads=threads)


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    out: dict[str, Any] = {
        "params": asdict(cfg.params),
        "initial_state": cfg.initial_state,
        "method": cfg.method,
        "scenario": dict(cfg.scenario),
        "integrator": asdict(cfg.integrator),
    }
    if cfg.sweep is not None:
        out["sweep"] = {"vary": cfg.sweep.vary,
                        "values": list(cfg.sweep.values),
                        "metric": cfg.sweep.metric,
                        "window_fraction": cfg.sweep.window_fraction}
    if cfg.threads is not None:
        out["threads"] = cfg.threads
    return out


def serialize_config(cfg: RunConfig) -> str:
    """Canonical JSON form; parse_config(serialize_config(cfg)) == cfg."""
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_trajectory_csv(traj: Trajectory) -> str:
    lines = ["t,I_y"]
    lines.extend(f"{_fmt(t)},{_fmt(i)}"
                 for t, i in zip(traj.t, traj.intensity))
    return "\n".join(lines) + "\n"


def format_sweep_csv(result: SweepResult) -> str:
    lines = ["value,delta_i,i_mean,stationary"]
    for row in result.rows:
        if row.error is not None:
            lines.append(f"{_fmt(row.value)},nan,nan,error")
        else:
            flag = "true" if row.stationary else "false"
            lines.append(f"{_fmt(row.value)},{_fmt(row.delta_i)},"
                         f"{_fmt(row.i_mean)},{flag}")
    return "\n".join(lines) + "\n"


def format_ensemble_csv(ensemble: WeightedEnsemble) -> str:
    lines = ["r,theta,phi,weight"]
    q = ensemble.q
    for g, w in ensemble:
        lines.append(f"{_fmt(g.r12)},{_fmt(g.theta)},{_fmt(g.phi)},{_fmt(w / q)}")
    return "\n".join(lines) + "\n"


def ensemble_hash(ensemble: WeightedEnsemble) -> str:
    return hashlib.sha256(format_ensemble_csv(ensemble).encode()).hexdigest()


def _initial_density(selector: str) -> np.ndarray:
    from .model import product_state_density
    return product_state_density(int(selector[0]), int(selector[1]))


def _scenario_ensemble(cfg: RunConfig) -> WeightedEnsemble:
    return from_descriptor(cfg.scenario)


def _monitor_ok(monitor: Mapping) -> bool:
    return (monitor.get("max_trace_drift", 0.0) <= MONITOR_TRACE_TOL
            and monitor.get("max_herm_defect", 0.0) <= MONITOR_HERM_TOL
            and monitor.get("min_eigenvalue", 0.0) >= MONITOR_EIG_TOL)


def _verify_against_rk4(cfg: RunConfig, traj: Trajectory,
                        g: Geometry) -> dict[str, Any]:
    """Fixed-step RK4 spot check of the adaptive result (verify mode)."""
    rho0 = _initial_density(cfg.initial_state)
    c = all_couplings(g, cfg.params, verify=True)
    sup = build_superoperators(cfg.params, c, g)
    ref = integrate_fixed_rk4(rho0, sup, cfg.params.big_delta, traj.t,
                              dt=VERIFY_RK4_DT)
    ref_i = intensity_series(ref.states, detector_phase(g, cfg.params.k0))
    dev = float(np.abs(ref_i - traj.intensity).max())
    return {"rk4_dt": VERIFY_RK4_DT, "max_intensity_deviation": dev,
            "ok": dev <= VERIFY_RK4_TOL}


@dataclass
class RunOutcome:
    exit_code: int
    outputs: dict[str, Path]
    manifest: dict[str, Any]


def run(cfg: RunConfig, out_dir, threads: int | None = None,
        verify: bool = False) -> RunOutcome:
    """Execute a configuration and persist its artifacts under out_dir."""
    t_start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    grid = output_grid(cfg.integrator.t_end, cfg.integrator.dt_out)
    rho0 = _initial_density(cfg.initial_state)
    workers = threads if threads is not None else cfg.threads
    rtol, atol = cfg.integrator.rtol, cfg.integrator.atol

    outputs: dict[str, Path] = {}
    manifest: dict[str, Any] = {
        "tool": {"name": "dipolepair", "version": __version__},
        "config": config_to_dict(cfg),
        "effective": {"threads": workers, "verify": bool(verify),
                      "out_dir": str(out)},
    }

    ensemble = _scenario_ensemble(cfg) if cfg.sweep is None else None
    if ensemble is not None:
        manifest["ensemble"] = {"members": len(ensemble),
                                "q": ensemble.q,
                                "hash": ensemble_hash(ensemble)}
        ens_path = out / "ensemble.csv"
        ens_path.write_text(format_ensemble_csv(ensemble), encoding="utf-8")
        outputs["ensemble"] = ens_path

    exit_code = 0
    if cfg.sweep is not None:
        result = sweep(cfg.method, cfg.scenario, cfg.sweep.vary,
                       cfg.sweep.values, metric=cfg.sweep.metric,
                       p=cfg.params, rho0=rho0, grid=grid, rtol=rtol,
                       atol=atol, workers=workers,
                       window_fraction=cfg.sweep.window_fraction)
        path = out / "sweep.csv"
        path.write_text(format_sweep_csv(result), encoding="utf-8")
        outputs["sweep"] = path
        failures = [r.value for r in result.rows if r.error is not None]
        manifest["sweep"] = {
            "rows": len(result.rows),
            "failed_values": failures,
            "row_meta": [r.meta | ({"error": r.error} if r.error else {})
                         for r in result.rows],
        }
        if failures:
            exit_code = 2
    else:
        if cfg.method == "single":
            g = ensemble.members[0]
            traj = single_run(cfg.params, g, rho0=rho0, grid=grid,
                              rtol=rtol, atol=atol, verify=verify)
            if verify:
                manifest["verify"] = _verify_against_rk4(cfg, traj, g)
                if not manifest["verify"]["ok"]:
                    exit_code = 2
        elif cfg.method == "ac":
            traj = ac_average(ensemble, cfg.params, rho0=rho0, grid=grid,
                              rtol=rtol, atol=atol, workers=workers,
                              verify=verify)
        else:
            traj = ap_run(ensemble, cfg.params, rho0=rho0, grid=grid,
                          rtol=rtol, atol=atol, verify=verify)
        path = out / "trajectory.csv"
        path.write_text(format_trajectory_csv(traj), encoding="utf-8")
        outputs["trajectory"] = path

        monitor = traj.meta.get("monitor", {})
        manifest["validity"] = dict(monitor) | {"ok": _monitor_ok(monitor)}
        manifest["integrator_stats"] = traj.meta.get("stats", {})
        if "member_stats" in traj.meta:
            manifest["member_stats"] = traj.meta["member_stats"]
        if "averaged_couplings" in traj.meta:
            manifest["averaged_couplings"] = traj.meta["averaged_couplings"]
        try:
            m = long_time_metrics(traj)
            manifest["metrics"] = {
                "i_max": m.i_max, "i_min": m.i_min, "delta_i": m.delta_i,
                "i_mean": m.i_mean, "stationary": m.stationary,
                "settled": m.settled, "window": list(m.window),
            }
        except ValueError as exc:
            manifest["metrics"] = {"error": str(exc)}
        if not manifest["validity"]["ok"]:
            exit_code = 2

    manifest["outputs"] = {k: p.name for k, p in outputs.items()}
    manifest["wall_time_s"] = time.perf_counter() - t_start
    man_path = out / "manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    outputs["manifest"] = man_path
    return RunOutcome(exit_code=exit_code, outputs=outputs, manifest=manifest)


def dump_ensemble(cfg: RunConfig) -> str:
    """CSV table of the configured scenario's (r, theta, phi, weight) rows."""
    return format_ensemble_csv(_scenario_ensemble(cfg))

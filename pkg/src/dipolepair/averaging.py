"""The two geometry-averaging methods and the parameter-sweep harness.

Adiabatic-case (AC) averaging: the geometry changes slowly against the
internal dynamics, so every member geometry evolves independently and the
detector signal is the volume-element-weighted mean of the per-member
intensity trajectories, all integrated on one shared output grid.

Averaged-potential (AP) averaging: the geometry changes fast, so the atoms
see ensemble-mean coupling constants. All six constants, the atom-B drive
phase factor and the detector phase factor are averaged with the same
weights; one integration with these means produces the signal. The two
routes coincide exactly for a singleton ensemble.

AC member integrations (and nothing else) run in worker processes when
workers > 1; the weighted reduction always runs in member order, so the
result is independent of the parallelism degree.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Any, Sequence

import numpy as np

from .model import PhysParams, Geometry, product_state_density, validate_params
from .couplings import all_couplings
from .dynamics import (IntegrationError, Trajectory, build_superoperators,
                       build_superoperators_with_drive_phase, drive_phase_b,
                       integrate, output_grid)
from .observables import detector_phase, intensity_series, long_time_metrics
from .ensembles import WeightedEnsemble, from_descriptor


@dataclass(frozen=True)
class AveragedCouplingSet:
    """Ensemble means of the coupling constants and the geometric phase
    factors entering the generator and the detector signal.

    population_weight is the mean of the trivial unit weight attached to
    the population terms; it is 1 by construction and kept as a
    normalization check.
    """

    gamma1_dd: float
    omega1_dd: float
    gamma2_dd: float
    omega2_dd: float
    gamma_vc: float
    omega_vc: float
    detector_phase: complex
    laser_phase_b: complex
    population_weight: float = 1.0


def _default_state():
    return product_state_density(3, 3)


def _resolve(rho0, grid):
    rho0 = _default_state() if rho0 is None else np.asarray(rho0, dtype=complex)
    grid = output_grid() if grid is None else np.asarray(grid, dtype=float)
    return rho0, grid


def single_run(p: PhysParams, g: Geometry, rho0=None, grid=None,
               rtol: float = 1e-8, atol: float = 1e-10,
               keep_states: bool = False, verify: bool = False) -> Trajectory:
    """Fixed-geometry pipeline: couplings, generator, integration, intensity."""
    warnings = validate_params(p, [g])
    rho0, grid = _resolve(rho0, grid)
    c = all_couplings(g, p, verify=verify)
    traj = integrate(rho0, build_superoperators(p, c, g), p.big_delta, grid,
                     rtol=rtol, atol=atol)
    intensity = intensity_series(traj.states, detector_phase(g, p.k0))
    meta = dict(traj.meta)
    meta.update({
        "method": "single",
        "params": asdict(p),
        "geometry": {"r12": g.r12, "theta": g.theta, "phi": g.phi},
        "warnings": warnings,
    })
    return Trajectory(t=grid, intensity=intensity,
                      states=traj.states if keep_states else None, meta=meta)


def _ac_member(args) -> tuple[np.ndarray, dict]:
    idx, g, p, rho0, grid, rtol, atol, verify = args
    try:
        c = all_couplings(g, p, verify=verify)
        traj = integrate(rho0, build_superoperators(p, c, g), p.big_delta, grid,
                         rtol=rtol, atol=atol)
    except Exception as exc:
        raise IntegrationError(
            f"ensemble member {idx} (r12={g.r12:g}, theta={g.theta:g}, "
            f"phi={g.phi:g}) failed: {exc}") from exc
    intensity = intensity_series(traj.states, detector_phase(g, p.k0))
    stats = {"nfev": traj.meta["stats"]["nfev"], **traj.meta["monitor"]}
    return intensity, stats


def _run_members(args_list, workers):
    if workers is None:
        workers = multiprocessing.cpu_count()
    workers = max(1, min(int(workers), len(args_list)))
    if workers == 1:
        return [_ac_member(a) for a in args_list]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, len(args_list) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_ac_member, args_list, chunksize=chunk))


def _aggregate_monitor(stats_list) -> dict:
    return {
        "max_trace_drift": max(s["max_trace_drift"] for s in stats_list),
        "max_herm_defect": max(s["max_herm_defect"] for s in stats_list),
        "min_eigenvalue": min(s["min_eigenvalue"] for s in stats_list),
    }


def ac_average(ensemble: WeightedEnsemble, p: PhysParams, rho0=None, grid=None,
               rtol: float = 1e-8, atol: float = 1e-10,
               workers: int | None = 1, verify: bool = False) -> Trajectory:
    """Adiabatic-case average: integrate every member geometry and return
    the weight-normalized mean of the per-member intensity trajectories."""
    warnings = validate_params(p, ensemble.members)
    rho0, grid = _resolve(rho0, grid)
    args = [(i, g, p, rho0, grid, rtol, atol, verify)
            for i, g in enumerate(ensemble.members)]
    results = _run_members(args, workers)

    acc = np.zeros(len(grid))
    for w, (intensity, _) in zip(ensemble.weights, results):
        acc += w * intensity
    acc /= ensemble.q

    member_stats = [stats for _, stats in results]
    meta = {
        "method": "ac",
        "delta": p.big_delta,
        "params": asdict(p),
        "ensemble": dict(ensemble.descriptor),
        "members": len(ensemble),
        "member_stats": member_stats,
        "monitor": _aggregate_monitor(member_stats),
        "stats": {"nfev": int(sum(s["nfev"] for s in member_stats))},
        "warnings": warnings,
    }
    return Trajectory(t=grid, intensity=acc, meta=meta)


def ap_average_couplings(ensemble: WeightedEnsemble,
                         p: PhysParams) -> AveragedCouplingSet:
    """Weighted means of the six coupling constants and of the geometric
    phase factors over the ensemble (discrete quadrature with the stored
    volume-element weights)."""
    w = ensemble.weights
    q = ensemble.q
    sets = [all_couplings(g, p) for g in ensemble.members]

    def mean(vals) -> float:
        return float(np.dot(w, np.asarray(vals)) / q)

    det_ph = np.array([detector_phase(g, p.k0) for g in ensemble.members])
    drv_ph = np.array([drive_phase_b(g, p.k0) for g in ensemble.members])
    return AveragedCouplingSet(
        gamma1_dd=mean([s.gamma1_dd for s in sets]),
        omega1_dd=mean([s.omega1_dd for s in sets]),
        gamma2_dd=mean([s.gamma2_dd for s in sets]),
        omega2_dd=mean([s.omega2_dd for s in sets]),
        gamma_vc=mean([s.gamma_vc for s in sets]),
        omega_vc=mean([s.omega_vc for s in sets]),
        detector_phase=complex(np.dot(w, det_ph) / q),
        laser_phase_b=complex(np.dot(w, drv_ph) / q),
        population_weight=float(w.sum() / q),
    )


def ap_run(ensemble: WeightedEnsemble, p: PhysParams, rho0=None, grid=None,
           rtol: float = 1e-8, atol: float = 1e-10,
           verify: bool = False) -> Trajectory:
    """Averaged-potential run: one integration with the ensemble-mean
    coupling constants and phase factors."""
    warnings = validate_params(p, ensemble.members)
    rho0, grid = _resolve(rho0, grid)
    if verify:
        for g in ensemble.members:
            all_couplings(g, p, verify=True)
    avg = ap_average_couplings(ensemble, p)
    sup = build_superoperators_with_drive_phase(p, avg, avg.laser_phase_b)
    traj = integrate(rho0, sup, p.big_delta, grid, rtol=rtol, atol=atol)
    intensity = intensity_series(traj.states, avg.detector_phase)
    meta = dict(traj.meta)
    meta.update({
        "method": "ap",
        "params": asdict(p),
        "ensemble": dict(ensemble.descriptor),
        "members": len(ensemble),
        "averaged_couplings": {
            "gamma1_dd": avg.gamma1_dd, "omega1_dd": avg.omega1_dd,
            "gamma2_dd": avg.gamma2_dd, "omega2_dd": avg.omega2_dd,
            "gamma_vc": avg.gamma_vc, "omega_vc": avg.omega_vc,
            "detector_phase": [avg.detector_phase.real, avg.detector_phase.imag],
            "laser_phase_b": [avg.laser_phase_b.real, avg.laser_phase_b.imag],
        },
        "warnings": warnings,
    })
    return Trajectory(t=grid, intensity=intensity, meta=meta)


METHODS = ("ac", "ap")
SWEEP_METRICS = ("delta_i", "i_mean", "stationary")


@dataclass
class SweepRow:
    value: float
    delta_i: float
    i_mean: float
    stationary: bool | None
    meta: dict[str, Any] = field(default_factory=dict)
    error: str | None = None


@dataclass
class SweepResult:
    method: str
    vary: str
    metric: str
    scenario: dict[str, Any]
    rows: list[SweepRow]

    def values(self, metric: str | None = None) -> np.ndarray:
        name = metric or self.metric
        if name not in SWEEP_METRICS:
            raise ValueError(f"unknown sweep metric {name!r}")
        return np.array([getattr(r, name) if r.error is None else math.nan
                         for r in self.rows], dtype=float)


def sweep(method: str, scenario, vary: str, values: Sequence[float],
          metric: str = "delta_i", p: PhysParams | None = None,
          rho0=None, grid=None, rtol: float = 1e-8, atol: float = 1e-10,
          workers: int | None = 1, window_fraction: float = 0.2) -> SweepResult:
    """Run one averaged scenario per axis value and tabulate the long-time
    metrics. Ensembles are rebuilt from the descriptor for every row; a
    failing row is recorded with its error message, not fatal."""
    if method not in METHODS:
        raise ValueError(f"sweep method must be one of {METHODS}, got {method!r}")
    if metric not in SWEEP_METRICS:
        raise ValueError(f"sweep metric must be one of {SWEEP_METRICS}, got {metric!r}")
    p = PhysParams() if p is None else p
    base = dict(scenario)
    rows: list[SweepRow] = []
    for value in values:
        desc = dict(base)
        desc[vary] = value
        try:
            ens = from_descriptor(desc)
            if method == "ac":
                traj = ac_average(ens, p, rho0=rho0, grid=grid, rtol=rtol,
                                  atol=atol, workers=workers)
            else:
                traj = ap_run(ens, p, rho0=rho0, grid=grid, rtol=rtol, atol=atol)
            m = long_time_metrics(traj, window_fraction=window_fraction)
            rows.append(SweepRow(
                value=float(value), delta_i=m.delta_i, i_mean=m.i_mean,
                stationary=m.stationary,
                meta={"members": len(ens), "settled": m.settled,
                      "monitor": traj.meta.get("monitor", {})}))
        except Exception as exc:
            rows.append(SweepRow(value=float(value), delta_i=math.nan,
                                 i_mean=math.nan, stationary=None,
                                 error=f"{type(exc).__name__}: {exc}"))
    return SweepResult(method=method, vary=vary, metric=metric,
                       scenario=base, rows=rows)

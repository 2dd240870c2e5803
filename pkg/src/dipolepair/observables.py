"""Detector intensity and long-time trajectory metrics.

The measured quantity is the fluorescence intensity at a far-field
detector on the y axis,

    I_y = <S33_A> + <S33_B> + 2 Re[ <S31_A S13_B> * exp(-i*k0*r12*sin(theta)*sin(phi)) ],

with the overall far-field prefactor dropped. The phase factor is the
optical path difference of the two atoms towards the detector; for
ensemble-averaged coupling runs it is replaced by its ensemble mean.

Long-time analysis works on a trailing window of the trajectory: the
oscillation amplitude delta_i = i_max - i_min decides between a stationary
long-time limit and a persistent oscillation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .model import K0_DEFAULT, Geometry, flat_index
from .dynamics import Trajectory

# Stationarity: delta_i below this fraction of the mean intensity (with an
# absolute floor for dark trajectories) counts as a steady state. Observed
# oscillatory cases exceed the threshold by orders of magnitude.
STATIONARITY_REL = 1e-3
STATIONARITY_FLOOR = 1e-6

# The trailing analysis window must hold at least this many periods of the
# drive-beat frequency to measure extrema of the asymptotic cycle.
MIN_WINDOW_PERIODS = 2.0

# Periodicity self-check: the two halves of the window must agree in
# delta_i to this relative tolerance, otherwise the transient has not
# settled.
SETTLED_REL = 0.05

# Intensity values in (-CLIP_NEGATIVE, 0) are positivity-drift artifacts
# and are reported as 0.
CLIP_NEGATIVE = 1e-8

_POP_A3 = tuple(flat_index(3, b) for b in (1, 2, 3))
_POP_B3 = tuple(flat_index(a, 3) for a in (1, 2, 3))
_COH_ROW = flat_index(1, 3)
_COH_COL = flat_index(3, 1)


def detector_phase(g: Geometry, k0: float = K0_DEFAULT) -> complex:
    """Optical path phase factor exp(-i*k0*r12*sin(theta)*sin(phi))."""
    return cmath.exp(-1j * k0 * g.r12 * math.sin(g.theta) * math.sin(g.phi))


def intensity_series(states: np.ndarray, phase: complex) -> np.ndarray:
    """Intensity along a stack of states, with an explicit detector phase
    factor (a unit-modulus number for a fixed geometry, an ensemble mean
    for averaged-coupling runs)."""
    states = np.asarray(states)
    pops = sum(states[..., k, k] for k in _POP_A3) \
        + sum(states[..., k, k] for k in _POP_B3)
    coh = states[..., _COH_ROW, _COH_COL]
    vals = pops.real + 2.0 * (coh * phase).real
    return np.where((vals < 0.0) & (vals > -CLIP_NEGATIVE), 0.0, vals)


def intensity_y(rho: np.ndarray, g: Geometry, k0: float = K0_DEFAULT) -> float:
    """Detector intensity of a single state at a fixed geometry."""
    return float(intensity_series(np.asarray(rho)[None, :, :], detector_phase(g, k0))[0])


@dataclass(frozen=True)
class LongTimeMetrics:
    """Extrema and classification of the trailing-window intensity."""

    i_max: float
    i_min: float
    delta_i: float
    i_mean: float
    stationary: bool
    settled: bool
    window: tuple[float, float]


def _refined_extremum(y: np.ndarray, idx: int, sign: float) -> float:
    """Quadratic refinement of a grid extremum; sub-grid correction only."""
    if idx == 0 or idx == len(y) - 1:
        return float(y[idx])
    y0, y1, y2 = y[idx - 1], y[idx], y[idx + 1]
    denom = y0 - 2.0 * y1 + y2
    if sign * denom >= 0.0 or denom == 0.0:
        return float(y1)
    return float(y1 - (y0 - y2) ** 2 / (8.0 * denom))


def _window_slice(t: np.ndarray, window_fraction: float) -> np.ndarray:
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError(f"window fraction must lie in (0, 1], got {window_fraction}")
    t_lo = t[-1] - window_fraction * (t[-1] - t[0])
    return t >= t_lo - 1e-12 * max(1.0, abs(t[-1]))


def long_time_metrics(traj: Trajectory,
                      window_fraction: float = 0.2) -> LongTimeMetrics:
    """Extract i_max, i_min, delta_i and the stationarity flag from the
    trailing window of a trajectory.

    Raises ValueError if the window is too short to hold the minimum number
    of drive-beat periods (when the trajectory metadata carries a nonzero
    residual frequency), or if the trajectory has no intensity series.
    """
    if traj.intensity is None:
        raise ValueError("trajectory carries no intensity series")
    mask = _window_slice(traj.t, window_fraction)
    tw = traj.t[mask]
    yw = np.asarray(traj.intensity)[mask]
    span = tw[-1] - tw[0]

    delta = traj.meta.get("delta")
    if delta is not None and delta != 0.0:
        needed = MIN_WINDOW_PERIODS * 2.0 * math.pi / abs(delta)
        if span < needed:
            raise ValueError(
                f"window too short: {span:g}/gamma holds fewer than "
                f"{MIN_WINDOW_PERIODS:g} periods of 2*pi/|Delta| = "
                f"{2.0 * math.pi / abs(delta):g}")

    i_max = _refined_extremum(yw, int(np.argmax(yw)), +1.0)
    i_min = _refined_extremum(yw, int(np.argmin(yw)), -1.0)
    i_mean = float(yw.mean())
    delta_i = i_max - i_min
    threshold = STATIONARITY_REL * max(i_mean, STATIONARITY_FLOOR)
    stationary = delta_i < threshold

    half = len(yw) // 2
    d1 = float(yw[:half].max() - yw[:half].min())
    d2 = float(yw[half:].max() - yw[half:].min())
    if max(d1, d2) < threshold:
        settled = True
    else:
        settled = abs(d1 - d2) <= SETTLED_REL * max(d1, d2)

    return LongTimeMetrics(i_max=i_max, i_min=i_min, delta_i=delta_i,
                           i_mean=i_mean, stationary=stationary,
                           settled=settled, window=(float(tw[0]), float(tw[-1])))


def relative_phase(traj_a: Trajectory, traj_b: Trajectory,
                   window_fraction: float = 0.2) -> float:
    """Phase of trajectory A relative to B at their dominant common
    frequency, in (-pi, pi].

    Both trajectories must share the output grid and be oscillatory inside
    the window. The estimate is the cross-spectrum phase at the strongest
    common Fourier bin of the Hann-windowed, mean-removed series; shared
    leakage cancels in the difference.
    """
    if traj_a.intensity is None or traj_b.intensity is None:
        raise ValueError("both trajectories need an intensity series")
    if len(traj_a.t) != len(traj_b.t) or not np.allclose(traj_a.t, traj_b.t,
                                                         rtol=0, atol=1e-12):
        raise ValueError("trajectories do not share the output grid")
    mask = _window_slice(traj_a.t, window_fraction)
    ya = np.asarray(traj_a.intensity)[mask]
    yb = np.asarray(traj_b.intensity)[mask]

    for name, y in (("A", ya), ("B", yb)):
        swing = float(y.max() - y.min())
        if swing < 1e-9 * max(abs(float(y.mean())), 1e-6):
            raise ValueError(f"trajectory {name} is not oscillatory in the window")

    w = np.hanning(len(ya))
    fa = np.fft.rfft(w * (ya - ya.mean()))
    fb = np.fft.rfft(w * (yb - yb.mean()))
    k = 1 + int(np.argmax(np.abs(fa[1:]) * np.abs(fb[1:])))
    phase = float(np.angle(fa[k] * np.conj(fb[k])))
    if phase <= -math.pi + 1e-12:
        phase = math.pi
    return phase

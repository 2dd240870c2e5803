"""Weighted geometry ensembles for the averaging scenarios.

Every generator returns a deterministic, ordered list of (Geometry, weight)
pairs with spherical volume-element weights: d(alpha) for a sinusoidal
distance oscillation, r12*d(theta) along a meridian, r12*sin(theta)*d(phi)
along a parallel, and their products for composite motions.

Sampling uses midpoints on every interval, never endpoints, so coordinate
poles carry no zero-weight members and exact symmetry cancellations (for
instance the phi average of sin(2*phi) over a full circle) hold to machine
precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterator, Mapping

import numpy as np

from .model import HARD_FLOOR, Geometry

FLYBY_MEASURES = ("uniform_z", "spherical_volume")


@dataclass(frozen=True)
class WeightedEnsemble:
    """Ordered geometries with strictly positive quadrature weights."""

    members: tuple[Geometry, ...]
    weights: np.ndarray
    descriptor: Mapping

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.members):
            raise ValueError("weight count does not match member count")
        if len(w) == 0:
            raise ValueError("ensemble must have at least one member")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError("weights must be strictly positive and finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "descriptor",
                           MappingProxyType(dict(self.descriptor)))

    @property
    def q(self) -> float:
        """Normalization constant: the plain sum of the stored weights."""
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[tuple[Geometry, float]]:
        return iter(zip(self.members, self.weights))


def midpoints(lo: float, hi: float, n: int) -> np.ndarray:
    """n interval midpoints on [lo, hi]."""
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    step = (hi - lo) / n
    return lo + step * (np.arange(n) + 0.5)


def singleton(g: Geometry) -> WeightedEnsemble:
    """One fixed geometry with unit weight."""
    desc = {"kind": "fixed", "r12": g.r12, "theta": g.theta, "phi": g.phi}
    return WeightedEnsemble((g,), np.array([1.0]), desc)


def distance_oscillation(r_m: float, r_a: float, theta: float, phi: float,
                         n: int) -> WeightedEnsemble:
    """Sinusoidal distance oscillation r12 = r_m + r_a*sin(alpha) at fixed
    orientation; alpha sampled at n uniform midpoints of [0, 2*pi) with the
    flat measure d(alpha)."""
    if not 0.0 <= r_a < r_m:
        raise ValueError(f"need 0 <= r_a < r_m, got r_a={r_a}, r_m={r_m}")
    if r_m - r_a < HARD_FLOOR:
        raise ValueError(
            f"minimum separation r_m - r_a = {r_m - r_a:g} below the hard "
            f"floor {HARD_FLOOR:g}")
    alphas = midpoints(0.0, 2.0 * math.pi, n)
    members = tuple(Geometry(r_m + r_a * math.sin(a), theta, phi) for a in alphas)
    dalpha = 2.0 * math.pi / n
    desc = {"kind": "distance_oscillation", "r_m": r_m, "r_a": r_a,
            "theta": theta, "phi": phi, "n": n}
    return WeightedEnsemble(members, np.full(n, dalpha), desc)


def theta_circle(phi: float, r12: float, n: int) -> WeightedEnsemble:
    """Full circle through the poles at fixed r12: theta runs over [0, pi]
    on the branch at phi and again on the branch at phi + pi, n/2 midpoint
    samples each, measure r12*d(theta)."""
    if n < 2 or n % 2 != 0:
        raise ValueError(f"theta circle needs an even n >= 2, got {n}")
    half = n // 2
    thetas = midpoints(0.0, math.pi, half)
    members = tuple(Geometry(r12, t, phi) for t in thetas) \
        + tuple(Geometry(r12, t, phi + math.pi) for t in thetas)
    w = r12 * (math.pi / half)
    desc = {"kind": "theta_circle", "phi": phi, "r12": r12, "n": n}
    return WeightedEnsemble(members, np.full(n, w), desc)


def phi_circle(theta: float, r12: float, n: int) -> WeightedEnsemble:
    """Circle in a cone at fixed theta and r12: phi at n uniform midpoints
    of [0, 2*pi), measure r12*sin(theta)*d(phi)."""
    st = math.sin(theta)
    if st <= 0.0:
        raise ValueError(f"degenerate circle: sin(theta) = 0 at theta = {theta}")
    phis = midpoints(0.0, 2.0 * math.pi, n)
    members = tuple(Geometry(r12, theta, ph) for ph in phis)
    w = r12 * st * (2.0 * math.pi / n)
    desc = {"kind": "phi_circle", "theta": theta, "r12": r12, "n": n}
    return WeightedEnsemble(members, np.full(n, w), desc)


def sphere(r12: float, n_theta: int, n_phi: int) -> WeightedEnsemble:
    """Full sphere at fixed r12: midpoint product grid in (theta, phi) with
    the area measure r12^2 * sin(theta) * d(theta) * d(phi)."""
    if n_theta < 2 or n_phi < 2:
        raise ValueError(f"sphere needs n_theta, n_phi >= 2, got {n_theta}x{n_phi}")
    thetas = midpoints(0.0, math.pi, n_theta)
    phis = midpoints(0.0, 2.0 * math.pi, n_phi)
    dth = math.pi / n_theta
    dph = 2.0 * math.pi / n_phi
    members = []
    weights = []
    for th in thetas:
        w = (r12 * dth) * (r12 * math.sin(th) * dph)
        for ph in phis:
            members.append(Geometry(r12, th, ph))
            weights.append(w)
    desc = {"kind": "sphere", "r12": r12, "n_theta": n_theta, "n_phi": n_phi}
    return WeightedEnsemble(tuple(members), np.array(weights), desc)


def sphere_with_breathing(r_m: float, r_a: float, n_r: int, n_theta: int,
                          n_phi: int) -> WeightedEnsemble:
    """Sphere sampling combined with a sinusoidal breathing of the radius:
    tensor product of the distance-oscillation alpha grid with the sphere
    grid, composite measure d(alpha) * r*d(theta) * r*sin(theta)*d(phi)."""
    if not 0.0 <= r_a < r_m:
        raise ValueError(f"need 0 <= r_a < r_m, got r_a={r_a}, r_m={r_m}")
    if r_m - r_a < HARD_FLOOR:
        raise ValueError(
            f"minimum separation r_m - r_a = {r_m - r_a:g} below the hard "
            f"floor {HARD_FLOOR:g}")
    if n_theta < 2 or n_phi < 2:
        raise ValueError(f"sphere needs n_theta, n_phi >= 2, got {n_theta}x{n_phi}")
    alphas = midpoints(0.0, 2.0 * math.pi, n_r)
    thetas = midpoints(0.0, math.pi, n_theta)
    phis = midpoints(0.0, 2.0 * math.pi, n_phi)
    dal = 2.0 * math.pi / n_r
    dth = math.pi / n_theta
    dph = 2.0 * math.pi / n_phi
    members = []
    weights = []
    for a in alphas:
        r = r_m + r_a * math.sin(a)
        for th in thetas:
            w = dal * (r * dth) * (r * math.sin(th) * dph)
            for ph in phis:
                members.append(Geometry(r, th, ph))
                weights.append(w)
    desc = {"kind": "sphere_with_breathing", "r_m": r_m, "r_a": r_a,
            "n_r": n_r, "n_theta": n_theta, "n_phi": n_phi}
    return WeightedEnsemble(tuple(members), np.array(weights), desc)


def flyby(r_min: float, phi: float, z_max: float, n: int,
          measure: str = "uniform_z") -> WeightedEnsemble:
    """Straight-line pass of atom B along z at impact parameter r_min in
    the plane fixed by phi, from -z_max to z_max.

    Constant velocity means uniform dwell time per dz, so the default
    measure is flat in z. The alternative 'spherical_volume' measure
    weights each sample with |dr| * r*|d(theta)| along the trajectory
    instead; zero-measure samples (the closest-approach point) are dropped.
    """
    if r_min < HARD_FLOOR:
        raise ValueError(f"impact parameter {r_min:g} below hard floor {HARD_FLOOR:g}")
    if z_max < 0.0:
        raise ValueError(f"z_max must be nonnegative, got {z_max}")
    if measure not in FLYBY_MEASURES:
        raise ValueError(f"flyby measure must be one of {FLYBY_MEASURES}, got {measure!r}")
    desc = {"kind": "flyby", "r_min": r_min, "phi": phi, "z_max": z_max,
            "n": n, "measure": measure}
    if z_max == 0.0:
        return WeightedEnsemble((Geometry(r_min, math.pi / 2.0, phi),),
                                np.array([1.0]), desc)
    zs = midpoints(-z_max, z_max, n)
    dz = 2.0 * z_max / n
    members = []
    weights = []
    for z in zs:
        r = math.hypot(r_min, z)
        th = math.acos(max(-1.0, min(1.0, z / r)))
        if measure == "uniform_z":
            w = dz
        else:
            # |dr| = |z|/r dz and r*|d(theta)| = (r_min/r) dz along the line
            w = (abs(z) / r) * (r_min / r) * dz
            if w == 0.0:
                continue
        members.append(Geometry(r, th, phi))
        weights.append(w)
    return WeightedEnsemble(tuple(members), np.array(weights), desc)


_REQUIRED_KEYS = {
    "fixed": {"r12", "theta", "phi"},
    "distance_oscillation": {"r_m", "r_a", "theta", "phi", "n"},
    "theta_circle": {"phi", "r12", "n"},
    "phi_circle": {"theta", "r12", "n"},
    "sphere": {"r12", "n_theta", "n_phi"},
    "sphere_with_breathing": {"r_m", "r_a", "n_r", "n_theta", "n_phi"},
    "flyby": {"r_min", "phi", "z_max", "n"},
}
_OPTIONAL_KEYS = {"flyby": {"measure"}}


def from_descriptor(desc: Mapping) -> WeightedEnsemble:
    """Build an ensemble from its descriptor mapping (the scenario block of
    a run configuration)."""
    if not isinstance(desc, Mapping) or not desc:
        raise ValueError("scenario: exactly one scenario required (empty descriptor)")
    kind = desc.get("kind")
    if kind not in _REQUIRED_KEYS:
        raise ValueError(
            f"scenario.kind: unknown kind {kind!r}; expected one of "
            f"{sorted(_REQUIRED_KEYS)}")
    required = _REQUIRED_KEYS[kind]
    allowed = required | _OPTIONAL_KEYS.get(kind, set()) | {"kind"}
    for key in desc:
        if key not in allowed:
            raise ValueError(f"scenario.{key}: unknown key for kind {kind!r}")
    for key in required:
        if key not in desc:
            raise ValueError(f"scenario.{key}: required for kind {kind!r}")

    d = dict(desc)
    if kind == "fixed":
        return singleton(Geometry(d["r12"], d["theta"], d["phi"]))
    if kind == "distance_oscillation":
        return distance_oscillation(d["r_m"], d["r_a"], d["theta"], d["phi"],
                                    int(d["n"]))
    if kind == "theta_circle":
        return theta_circle(d["phi"], d["r12"], int(d["n"]))
    if kind == "phi_circle":
        return phi_circle(d["theta"], d["r12"], int(d["n"]))
    if kind == "sphere":
        return sphere(d["r12"], int(d["n_theta"]), int(d["n_phi"]))
    if kind == "sphere_with_breathing":
        return sphere_with_breathing(d["r_m"], d["r_a"], int(d["n_r"]),
                                     int(d["n_theta"]), int(d["n_phi"]))
    return flyby(d["r_min"], d["phi"], d["z_max"], int(d["n"]),
                 d.get("measure", "uniform_z"))

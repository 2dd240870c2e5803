"""Unit conventions, physical parameters, and two-atom operator algebra.

Natural units are used throughout the package: rates and frequencies in
units of gamma (the scale of the spontaneous-decay half rates), lengths in
units of the transition wavelength lambda, time in 1/gamma. The wavenumber
is fixed at k0 = 2*pi in these units. The decay half rates gamma1, gamma2
are plain inputs; deriving them from dipole matrix elements and transition
frequencies is out of scope, the natural-unit convention absorbs all of it.

Each atom is a three-level Lambda system with lower states |1>, |2> and
upper state |3>; laser i drives the i <-> 3 transition. The two-atom
product space is 9-dimensional with the frozen A-major basis ordering

    flat = 3*(a - 1) + (b - 1),    a, b in {1, 2, 3},

for atom A in |a> and atom B in |b>. All persisted state dumps use this
ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

K0_DEFAULT = 2.0 * math.pi  # wavenumber in lambda-units
DIM = 9                     # two-atom Hilbert-space dimension

# Separation floors, in units of lambda. Below SOFT_FLOOR the 1/eta^3
# near-field terms exceed ~1e5*gamma and the Markovian description is not
# trustworthy; that is reported as a warning so exploratory runs remain
# possible. Below HARD_FLOOR the coupling formulas are numerically
# meaningless and evaluation refuses to proceed.
SOFT_FLOOR = 0.01
HARD_FLOOR = 1e-6


@dataclass(frozen=True)
class PhysParams:
    """Laser and atom parameters in gamma / lambda natural units.

    The defaults are the driven-pair working point used for most scenarios:
    Rabi frequencies 3 and 5, detunings 0 and 2, degenerate lower states,
    equal unit decay half rates. The full spontaneous rate on transition
    3 <-> j is 2*gamma_j.
    """

    rabi1: float = 3.0
    rabi2: float = 5.0
    det1: float = 0.0
    det2: float = 2.0
    delta_lower: float = 0.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    k0: float = K0_DEFAULT

    @property
    def big_delta(self) -> float:
        """Residual drive frequency delta + Delta_2 - Delta_1 (= nu_2 - nu_1)."""
        return self.delta_lower + self.det2 - self.det1


def big_delta(p: PhysParams) -> float:
    """Residual drive-beat frequency entering the explicit time dependence."""
    return p.big_delta


@dataclass(frozen=True)
class Geometry:
    """Interatomic separation vector in spherical form.

    r12 in lambda, theta in [0, pi], phi normalized into [0, 2*pi).
    Atom A sits at the origin, atom B at
    r12 * (sin(theta)cos(phi), sin(theta)sin(phi), cos(theta)).
    """

    r12: float
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not all(map(math.isfinite, (self.r12, self.theta, self.phi))):
            raise ValueError(f"geometry has non-finite entries: "
                             f"({self.r12}, {self.theta}, {self.phi})")
        if self.r12 <= 0.0:
            raise ValueError(f"separation must be positive, got r12={self.r12}")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        phi = math.fmod(self.phi, 2.0 * math.pi)
        if phi < 0.0:
            phi += 2.0 * math.pi
        object.__setattr__(self, "phi", phi)

    def unit_vector(self) -> np.ndarray:
        """Cartesian unit vector along the A -> B direction."""
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi),
                         st * math.sin(self.phi),
                         math.cos(self.theta)])


def _check_state(i: int) -> None:
    if i not in (1, 2, 3):
        raise ValueError(f"atomic state index must be 1, 2 or 3, got {i}")


def flat_index(atom_a_state: int, atom_b_state: int) -> int:
    """Flat basis index of the product state |a>_A |b>_B (A-major order)."""
    _check_state(atom_a_state)
    _check_state(atom_b_state)
    return 3 * (atom_a_state - 1) + (atom_b_state - 1)


def state_pair(index: int) -> tuple[int, int]:
    """Inverse of flat_index."""
    if not 0 <= index < DIM:
        raise ValueError(f"flat index must lie in [0, {DIM - 1}], got {index}")
    return index // 3 + 1, index % 3 + 1


def atomic_operator(which_atom: int, i: int, j: int) -> np.ndarray:
    """Transition operator |i><j| of one atom on the 9-dim product space.

    Atom 1 (A) acts on the left tensor factor, atom 2 (B) on the right.
    The result has exactly three unit entries.
    """
    if which_atom not in (1, 2):
        raise ValueError(f"atom label must be 1 or 2, got {which_atom}")
    _check_state(i)
    _check_state(j)
    e = np.zeros((3, 3))
    e[i - 1, j - 1] = 1.0
    eye = np.eye(3)
    full = np.kron(e, eye) if which_atom == 1 else np.kron(eye, e)
    return full.astype(complex)


def product_state_density(atom_a_state: int, atom_b_state: int) -> np.ndarray:
    """Density matrix of the pure product state |a>_A |b>_B."""
    k = flat_index(atom_a_state, atom_b_state)
    rho = np.zeros((DIM, DIM), dtype=complex)
    rho[k, k] = 1.0
    return rho


def validate_density_matrix(rho: np.ndarray,
                            herm_tol: float = 1e-10,
                            trace_tol: float = 1e-8) -> None:
    """Raise if rho is not a 9x9 Hermitian unit-trace matrix within tolerance."""
    rho = np.asarray(rho)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"density matrix must be {DIM}x{DIM}, got {rho.shape}")
    if not np.all(np.isfinite(rho.real)) or not np.all(np.isfinite(rho.imag)):
        raise ValueError("density matrix has non-finite entries")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        raise ValueError(f"density matrix not Hermitian: defect {herm:.3e} > {herm_tol:.1e}")
    drift = abs(np.trace(rho) - 1.0)
    if drift > trace_tol:
        raise ValueError(f"density matrix trace off unity by {drift:.3e} > {trace_tol:.1e}")


def validate_params(p: PhysParams,
                    geometries: Iterable[Geometry] | None = None) -> list[str]:
    """Sanity-check a parameter set, optionally against the geometries it
    will be used with.

    Returns a list of warning strings; raises ValueError for fatal problems
    (non-finite values, non-positive decay rates or wavenumber).
    """
    values = {
        "rabi1": p.rabi1, "rabi2": p.rabi2,
        "det1": p.det1, "det2": p.det2,
        "delta_lower": p.delta_lower,
        "gamma1": p.gamma1, "gamma2": p.gamma2,
        "k0": p.k0,
    }
    for name, val in values.items():
        if not math.isfinite(val):
            raise ValueError(f"parameter {name} is not finite: {val}")
    for name in ("gamma1", "gamma2", "k0"):
        if values[name] <= 0.0:
            raise ValueError(f"parameter {name} must be positive, got {values[name]}")

    warnings = []
    if p.rabi1 < 0.0 or p.rabi2 < 0.0:
        warnings.append("negative Rabi frequency (acts as a pi phase flip of the drive)")
    if geometries is not None:
        r_min = min((g.r12 for g in geometries), default=None)
        if r_min is not None and r_min < SOFT_FLOOR:
            warnings.append(
                f"near-field singular regime: min r12 = {r_min:g} lambda "
                f"< {SOFT_FLOOR:g} lambda; Markovian model unreliable there")
    return warnings

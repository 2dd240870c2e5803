"""Dipole-dipole coupling constants from the field-susceptibility tensor.

The retarded dipole field of one atom at the position of the other is
described by a symmetric 3x3 tensor. It is stored here in gamma-normalized
form: contracting with unit dipole direction vectors gives

    e_b . chi . e_a = (Omega_ab + i * Gamma_ab) / sqrt(gamma_a * gamma_b),

i.e. the coherent interaction shift (real part) and the collective decay
rate (imaginary part) in units of the geometric mean of the half decay
rates involved. The free-space prefactors are folded into this
normalization, fixed so that the closed-form cross-coupling expressions
come out with their -(3/4)*sqrt(gamma1*gamma2) prefactor.

Dipole 1 (transition 1 <-> 3) points along x, dipole 2 (transition 2 <-> 3)
along y; a single wavenumber k0 is used for all couplings (the two
transition frequencies are treated as equal). The cross constants carry
the angular factor sin(2*phi)*sin^2(theta). In production they are
evaluated from their closed form; the general tensor contraction is kept
as an independent route and cross-checked in verify mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import HARD_FLOOR, K0_DEFAULT, Geometry, PhysParams

_EPS = np.finfo(float).eps

# Even-power series of the imaginary parts of the two radial brackets,
# used below _SERIES_ETA where the direct sin/cos combinations cancel
# catastrophically. Coefficients of eta^0, eta^2, eta^4, ...
_IM_A_SERIES = (2.0 / 3.0, -2.0 / 15.0, 1.0 / 140.0, -1.0 / 5670.0, 1.0 / 399168.0)
_IM_B_SERIES = (0.0, -1.0 / 15.0, 1.0 / 210.0, -1.0 / 7560.0, 1.0 / 498960.0)
_SERIES_ETA = 1e-3


@dataclass(frozen=True)
class ChiTensor:
    """Gamma-normalized field-susceptibility tensor for one geometry."""

    matrix: np.ndarray  # 3x3 complex, symmetric

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (3, 3):
            raise ValueError(f"chi tensor must be 3x3, got {m.shape}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class CouplingSet:
    """The six dipole-dipole constants of a fixed geometry, in gamma.

    gamma*_dd / omega*_dd couple parallel dipoles of the two atoms,
    gamma_vc / omega_vc the orthogonal (x of one atom, y of the other) pair.
    """

    gamma1_dd: float
    omega1_dd: float
    gamma2_dd: float
    omega2_dd: float
    gamma_vc: float
    omega_vc: float


class ConsistencyError(RuntimeError):
    """Closed-form and tensor-contraction routes disagree: implementation bug."""


def _poly_even(eta: float, coeffs) -> float:
    x = eta * eta
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _bracket_a(eta: float) -> complex:
    """(eta^2 + i*eta - 1) * exp(i*eta) / eta^3 with a cancellation-safe
    imaginary part."""
    s, c = math.sin(eta), math.cos(eta)
    e3 = eta * eta * eta
    re = ((eta * eta - 1.0) * c - eta * s) / e3
    if eta < _SERIES_ETA:
        im = _poly_even(eta, _IM_A_SERIES)
    else:
        im = ((eta * eta - 1.0) * s + eta * c) / e3
    return complex(re, im)


def _bracket_b(eta: float) -> complex:
    """(eta^2 + 3i*eta - 3) * exp(i*eta) / eta^3 with a cancellation-safe
    imaginary part."""
    s, c = math.sin(eta), math.cos(eta)
    e3 = eta * eta * eta
    re = ((eta * eta - 3.0) * c - 3.0 * eta * s) / e3
    if eta < _SERIES_ETA:
        im = _poly_even(eta, _IM_B_SERIES)
    else:
        im = ((eta * eta - 3.0) * s + 3.0 * eta * c) / e3
    return complex(re, im)


def _check_floor(r12: float) -> None:
    if r12 < HARD_FLOOR:
        raise ValueError(
            f"separation r12 = {r12:g} lambda below hard floor {HARD_FLOOR:g}; "
            f"coupling formulas are numerically meaningless there")


def chi_tensor(g: Geometry, k0: float = K0_DEFAULT) -> ChiTensor:
    """Evaluate the normalized susceptibility tensor for one geometry."""
    _check_floor(g.r12)
    eta = k0 * g.r12
    a = _bracket_a(eta)
    b = _bracket_b(eta)
    rhat = g.unit_vector()
    m = 1.5 * (np.eye(3) * a - np.outer(rhat, rhat) * b)
    return ChiTensor(m)


_AXES = {"x": 0, "y": 1}


def coupling_pair(dipole_a: str, dipole_b: str, chi: ChiTensor,
                  gamma_a: float = 1.0, gamma_b: float = 1.0) -> tuple[float, float]:
    """Contract the tensor with unit dipole directions.

    Returns (Gamma, Omega): the collective decay rate is the imaginary
    part of the contraction, the coherent shift the real part, both scaled
    by sqrt(gamma_a * gamma_b).
    """
    try:
        ia, ib = _AXES[dipole_a], _AXES[dipole_b]
    except KeyError as exc:
        raise ValueError(f"dipole axis must be 'x' or 'y', got {exc.args[0]!r}") from None
    val = chi.matrix[ib, ia]
    scale = math.sqrt(gamma_a * gamma_b)
    return scale * val.imag, scale * val.real


def _angular_prefactor(theta: float, phi: float) -> float:
    """sin(2*phi) * sin^2(theta), snapped to exact zero at the symmetry nodes.

    sin() of a floating-point multiple of pi leaves crumbs of order
    eps*|argument| which the 1/eta^3 near-field terms would amplify to
    spuriously nonzero couplings; anything below that noise level is the
    node.
    """
    s2p = math.sin(2.0 * phi)
    if abs(s2p) < 64.0 * _EPS * max(1.0, 2.0 * phi):
        s2p = 0.0
    st = math.sin(theta)
    if abs(st) < 64.0 * _EPS * max(1.0, theta):
        st = 0.0
    return s2p * st * st


def cross_couplings_closed(g: Geometry, gamma1: float = 1.0, gamma2: float = 1.0,
                           k0: float = K0_DEFAULT) -> tuple[float, float]:
    """Closed-form cross-coupling constants (Gamma_vc, Omega_vc) in gamma.

    Both vanish identically when sin(2*phi)*sin^2(theta) = 0.
    """
    _check_floor(g.r12)
    ang = _angular_prefactor(g.theta, g.phi)
    if ang == 0.0:
        return 0.0, 0.0
    eta = k0 * g.r12
    s, c = math.sin(eta), math.cos(eta)
    pref = -0.75 * math.sqrt(gamma1 * gamma2) * ang
    gamma_vc = pref * (s / eta + 3.0 * (c / eta**2 - s / eta**3))
    omega_vc = pref * (c / eta - 3.0 * (s / eta**2 + c / eta**3))
    return gamma_vc, omega_vc


def _check_consistency(name: str, closed: float, contracted: float, eta: float) -> None:
    # The comparison tolerance carries an absolute cushion scaled with the
    # bracket magnitude: that is the rounding noise floor of either route,
    # and it covers the snapped-to-zero closed form at the symmetry nodes.
    noise = 64.0 * _EPS * 0.75 * (1.0 / eta + 3.0 / eta**2 + 3.0 / eta**3)
    tol = 1e-9 * max(abs(closed), abs(contracted)) + noise
    if abs(closed - contracted) > tol:
        raise ConsistencyError(
            f"{name}: closed form {closed!r} vs contraction {contracted!r} "
            f"differ beyond tolerance {tol:.3e}")


def all_couplings(g: Geometry, p: PhysParams, verify: bool = False) -> CouplingSet:
    """Assemble the full coupling set for one geometry.

    Parallel constants come from the tensor contraction, cross constants
    from the closed form. With verify=True the cross constants are also
    computed by contraction and any disagreement beyond rounding noise
    raises ConsistencyError.
    """
    chi = chi_tensor(g, p.k0)
    g1dd, o1dd = coupling_pair("x", "x", chi, p.gamma1, p.gamma1)
    g2dd, o2dd = coupling_pair("y", "y", chi, p.gamma2, p.gamma2)
    gvc, ovc = cross_couplings_closed(g, p.gamma1, p.gamma2, p.k0)
    if verify:
        gvc2, ovc2 = coupling_pair("x", "y", chi, p.gamma1, p.gamma2)
        eta = p.k0 * g.r12
        _check_consistency("gamma_vc", gvc, gvc2, eta)
        _check_consistency("omega_vc", ovc, ovc2, eta)
    return CouplingSet(gamma1_dd=g1dd, omega1_dd=o1dd,
                       gamma2_dd=g2dd, omega2_dd=o2dd,
                       gamma_vc=gvc, omega_vc=ovc)

"""Closed-form reference fields for verification.

For a rigid *flat* surface the scattered field consists of exactly one
compressional and one shear plane wave whose amplitudes follow from a
4x4 linear system (boundary condition plus the divergence-free gauge of
the shear potential).  This module provides that exact solution, the
incident wave, and an energy-flux oracle computed directly from the
stress tensor, which is used to validate the grating-efficiency
formulas.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .spectral import (HelmholtzCoeffs, Incidence, Lattice, Medium,
                       ModeData, mode)

__all__ = [
    "FlatSolution",
    "incident",
    "incident_gradient",
    "flat_exact",
    "flat_field",
    "flat_gradient",
    "flat_modes",
    "modal_energy_flux",
    "incident_flux",
]


def incident(incidence: Incidence, x: np.ndarray) -> np.ndarray:
    """Incident displacement ``q exp(i(alpha.r - beta x3))`` at points.

    Parameters
    ----------
    x : ndarray, shape (..., 3)

    Returns
    -------
    ndarray, shape (..., 3), complex
    """
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * (x[..., 0] * incidence.alpha[0]
                         + x[..., 1] * incidence.alpha[1]
                         - x[..., 2] * incidence.beta))
    return phase[..., None] * incidence.q


def incident_gradient(incidence: Incidence, x: np.ndarray) -> np.ndarray:
    """Gradient ``d u_i / d x_l`` of the incident wave, shape (..., 3, 3)."""
    u = incident(incidence, x)
    k = np.array([incidence.alpha[0], incidence.alpha[1], -incidence.beta])
    return 1j * u[..., :, None] * k[None, :]


@dataclass(frozen=True)
class FlatSolution:
    """Exact scattered field above a rigid plane ``x3 = z0``.

    ``a`` is the compressional potential amplitude, ``b`` the shear
    vector potential amplitude, both anchored at ``x3 = z0``:

    ``u = i (alpha1, alpha2, beta) a e^{i(alpha.r + beta (x3-z0))}
        + i curl-part(b) e^{i(alpha.r + beta20 (x3-z0))}``.
    """

    medium: Medium
    incidence: Incidence
    z0: float
    a: complex
    b: np.ndarray          # shape (3,)
    beta20: complex        # shear vertical wavenumber of the 0th mode
    chi: complex

    @property
    def shear_amp(self) -> np.ndarray:
        """Displacement amplitude of the shear part."""
        a1, a2 = self.incidence.alpha
        b1, b2, b3 = self.b
        bz = self.beta20
        return np.array([a2 * b3 - bz * b2,
                         bz * b1 - a1 * b3,
                         a1 * b2 - a2 * b1], dtype=complex)


def flat_exact(medium: Medium, incidence: Incidence,
               z0: float = 0.0) -> FlatSolution:
    """Solve the rigid-plane scattering problem in closed form.

    The boundary condition ``u = -u_inc`` on ``x3 = z0`` together with
    the gauge ``alpha . (b1, b2) + beta20 b3 = 0`` determines the four
    amplitudes; the closed-form solution of that system is used here.
    """
    a1, a2 = incidence.alpha
    beta = incidence.beta
    asq = a1 * a1 + a2 * a2
    d2 = medium.kappa2 ** 2 - asq
    beta20 = complex(np.sqrt(d2)) if d2 > 0 else 1j * complex(np.sqrt(-d2))
    chi = asq + beta * beta20
    k2sq = medium.kappa2 ** 2
    # incident amplitude at the surface (phase anchored at r=0, x3=z0)
    q1, q2, q3 = incidence.q * cmath.exp(-1j * incidence.beta * z0)
    a = (1j / chi) * (a1 * q1 + a2 * q2 + beta20 * q3)
    b1 = (1j / chi) * (a1 * a2 * (beta - beta20) * q1 / k2sq
                       + (a1 * a1 * beta20 + a2 * a2 * beta
                          + beta * beta20 * beta20) * q2 / k2sq
                       - a2 * q3)
    b2 = (1j / chi) * (-(a1 * a1 * beta + a2 * a2 * beta20
                         + beta * beta20 * beta20) * q1 / k2sq
                       - a1 * a2 * (beta - beta20) * q2 / k2sq
                       + a1 * q3)
    b3 = (1j / k2sq) * (a2 * q1 - a1 * q2)
    return FlatSolution(medium=medium, incidence=incidence, z0=z0, a=a,
                        b=np.array([b1, b2, b3]), beta20=beta20, chi=chi)


def _flat_phases(sol: FlatSolution, x: np.ndarray):
    x = np.asarray(x, dtype=float)
    a1, a2 = sol.incidence.alpha
    horiz = x[..., 0] * a1 + x[..., 1] * a2
    dz = x[..., 2] - sol.z0
    pp = np.exp(1j * (horiz + sol.incidence.beta * dz))
    ps = np.exp(1j * (horiz + sol.beta20 * dz))
    return pp, ps


def flat_field(sol: FlatSolution, x: np.ndarray) -> np.ndarray:
    """Scattered displacement of the flat-surface solution, shape (..., 3)."""
    a1, a2 = sol.incidence.alpha
    kp = np.array([a1, a2, sol.incidence.beta], dtype=complex)
    pp, ps = _flat_phases(sol, x)
    return 1j * (pp[..., None] * (kp * sol.a)
                 + ps[..., None] * sol.shear_amp)


def flat_gradient(sol: FlatSolution, x: np.ndarray) -> np.ndarray:
    """Gradient ``d u_i / d x_l`` of the scattered field, shape (..., 3, 3)."""
    a1, a2 = sol.incidence.alpha
    kp = np.array([a1, a2, sol.incidence.beta], dtype=complex)
    ks = np.array([a1, a2, sol.beta20], dtype=complex)
    pp, ps = _flat_phases(sol, x)
    up = 1j * sol.a * kp
    us = 1j * sol.shear_amp
    gp = pp[..., None, None] * (1j * up[:, None] * kp[None, :])
    gs = ps[..., None, None] * (1j * us[:, None] * ks[None, :])
    return gp + gs


def flat_modes(sol: FlatSolution, lattice: Lattice
               ) -> list[tuple[ModeData, HelmholtzCoeffs]]:
    """The modal expansion of the flat solution, re-anchored at the top
    plane ``x3 = lattice.height`` (a single outgoing mode)."""
    md = mode(sol.medium, sol.incidence, lattice, (0, 0))
    d = lattice.height - sol.z0
    phi = sol.a * cmath.exp(1j * md.beta1 * d)
    psi = sol.b * cmath.exp(1j * md.beta2 * d)
    return [(md, HelmholtzCoeffs(phi=phi, psi=psi))]


def modal_energy_flux(medium: Medium, lattice: Lattice,
                      modal_field: list[tuple[ModeData, HelmholtzCoeffs]]
                      ) -> float:
    """Upward energy flux of an outgoing modal expansion through the top
    plane, from first principles.

    For each mode the displacement and the full stress tensor are formed
    at ``x3 = lattice.height`` and the time-averaged normal power flow
    ``(omega/2) Im(traction . conj(u))`` is integrated over the cell.
    Cross terms between distinct modes vanish by orthogonality; the
    compressional/shear cross terms within one mode are kept (they
    cancel analytically, which this oracle does not assume).
    """
    lam, mu, omega = medium.lam, medium.mu, medium.omega
    total = 0.0
    for md, coeff in modal_field:
        a1, a2 = md.alpha_n
        kp = np.array([a1, a2, md.beta1], dtype=complex)
        ks = np.array([a1, a2, md.beta2], dtype=complex)
        up = 1j * coeff.phi * kp
        us = 1j * coeff.shear_displacement(md)
        u = up + us
        grad = 1j * (up[:, None] * kp[None, :] + us[:, None] * ks[None, :])
        sigma = lam * np.trace(grad) * np.eye(3) + mu * (grad + grad.T)
        traction = sigma[:, 2]
        total += 0.5 * omega * float(np.imag(traction @ u.conj()))
    return total * lattice.area


def incident_flux(medium: Medium, incidence: Incidence,
                  lattice: Lattice) -> float:
    """Downward energy flux carried by the incident wave through one cell."""
    return (0.5 * medium.omega * (medium.lam + 2.0 * medium.mu)
            * incidence.beta * lattice.area)

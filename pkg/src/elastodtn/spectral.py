"""Plane-wave spectra for elastic scattering by biperiodic surfaces.

Everything in this module is closed-form linear algebra on the Rayleigh
(Fourier) modes of a time-harmonic elastic field above a biperiodic
surface.  A field that is quasi-periodic with phase shift ``alpha`` in the
two horizontal directions expands into modes ``exp(i alpha_n . r)`` with
``alpha_n = alpha + 2*pi*(n1/period1, n2/period2)``.  Each mode carries a
compressional and a shear vertical wavenumber, a 3x3 Dirichlet-to-Neumann
matrix, and a 3x3 transfer matrix that propagates the modal trace between
horizontal planes.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "WoodAnomalyError",
    "Medium",
    "Incidence",
    "Lattice",
    "ModeData",
    "HelmholtzCoeffs",
    "EfficiencyTable",
    "make_medium",
    "make_incidence",
    "mode",
    "coeffs_from_field",
    "field_from_coeffs",
    "apply_dtn",
    "neg_hermitian_part",
    "mode_transfer",
    "efficiencies",
    "incident_h1_norm",
    "truncation_bound",
]

#: relative tolerance used to detect Wood anomalies (|alpha_n| == kappa_j)
WOOD_RTOL = 1.0e-10


class WoodAnomalyError(ValueError):
    """Raised when a mode sits numerically on a Wood anomaly.

    At a Wood anomaly one of the vertical wavenumbers vanishes and the
    Rayleigh expansion degenerates; the solver refuses the configuration
    instead of regularising it.
    """


@dataclass(frozen=True)
class Medium:
    """Homogeneous isotropic elastic medium at a fixed angular frequency.

    Attributes
    ----------
    lam, mu : float
        Lame parameters.  ``mu > 0`` and ``lam + mu > 0`` are required,
        which makes the compressional wavenumber strictly smaller than
        the shear one.
    omega : float
        Angular frequency (> 0).
    kappa1, kappa2 : float
        Compressional and shear wavenumbers
        ``omega / sqrt(lam + 2 mu)`` and ``omega / sqrt(mu)``.
    """

    lam: float
    mu: float
    omega: float
    kappa1: float
    kappa2: float


def make_medium(lam: float, mu: float, omega: float) -> Medium:
    """Validate Lame parameters and precompute the two wavenumbers."""
    if mu <= 0.0:
        raise ValueError(f"shear modulus must be positive, got mu={mu}")
    if lam + mu <= 0.0:
        raise ValueError(f"need lam + mu > 0, got lam={lam}, mu={mu}")
    if omega <= 0.0:
        raise ValueError(f"angular frequency must be positive, got {omega}")
    kappa1 = omega / math.sqrt(lam + 2.0 * mu)
    kappa2 = omega / math.sqrt(mu)
    return Medium(lam=lam, mu=mu, omega=omega, kappa1=kappa1, kappa2=kappa2)


@dataclass(frozen=True)
class Incidence:
    """Incident compressional plane wave travelling downwards.

    The displacement is ``q * exp(i kappa1 q . x)`` with unit propagation
    vector ``q = (sin t1 cos t2, sin t1 sin t2, -cos t1)``, so that
    ``kappa1 * q = (alpha1, alpha2, -beta)``.

    Attributes
    ----------
    theta1, theta2 : float
        Polar and azimuthal incidence angles; ``|theta1| < pi/2``.
    q : ndarray, shape (3,)
        Unit propagation direction.
    alpha : ndarray, shape (2,)
        Horizontal quasi-momentum ``kappa1 sin(t1) (cos t2, sin t2)``.
    beta : float
        Vertical wavenumber ``kappa1 cos(t1) > 0``.
    """

    theta1: float
    theta2: float
    q: np.ndarray
    alpha: np.ndarray
    beta: float


def make_incidence(medium: Medium, theta1: float, theta2: float) -> Incidence:
    if not abs(theta1) < 0.5 * math.pi:
        raise ValueError(f"need |theta1| < pi/2, got {theta1}")
    st1, ct1 = math.sin(theta1), math.cos(theta1)
    q = np.array([st1 * math.cos(theta2), st1 * math.sin(theta2), -ct1])
    alpha = medium.kappa1 * q[:2]
    beta = medium.kappa1 * ct1
    return Incidence(theta1=theta1, theta2=theta2, q=q, alpha=alpha, beta=beta)


@dataclass(frozen=True)
class Lattice:
    """Periodic cell geometry.

    Attributes
    ----------
    period1, period2 : float
        Periods in the two horizontal directions.
    height : float
        Elevation of the artificial plane where the transparent boundary
        condition is imposed.
    surface_height : float
        Maximum elevation of the scattering surface; must stay strictly
        below ``height``.
    """

    period1: float
    period2: float
    height: float
    surface_height: float = 0.0

    def __post_init__(self):
        if self.period1 <= 0.0 or self.period2 <= 0.0:
            raise ValueError("periods must be positive")
        if not self.surface_height < self.height:
            raise ValueError(
                f"surface top {self.surface_height} must lie below the "
                f"truncation plane {self.height}"
            )

    @property
    def area(self) -> float:
        return self.period1 * self.period2


def _vertical_wavenumber(kappa: float, alpha_n_sq: float) -> complex:
    """Vertical wavenumber: positive real if propagating, else positive
    imaginary."""
    d = kappa * kappa - alpha_n_sq
    if d > 0.0:
        return complex(math.sqrt(d))
    return complex(0.0, math.sqrt(-d))


@dataclass(frozen=True)
class ModeData:
    """Per-mode quantities for index ``n = (n1, n2)``.

    Attributes
    ----------
    n : tuple of int
    alpha_n : ndarray, shape (2,)
        Horizontal wavevector of the mode.
    beta1, beta2 : complex
        Compressional / shear vertical wavenumbers (positive real for
        propagating modes, positive imaginary for evanescent ones).
    chi : complex
        ``|alpha_n|^2 + beta1*beta2`` (never zero away from Wood
        anomalies).
    kappa1_sq, kappa2_sq : float
        Squared compressional / shear wavenumbers of the medium (carried
        along so modal formulas never need to recover them from
        ``|alpha_n|^2 + beta_j^2``, which cancels badly for large n).
    dtn : ndarray, shape (3, 3)
        Matrix mapping the modal displacement trace on the artificial
        plane to the modal trace of the traction-like boundary operator
        ``mu * d/dx3 + (lam + mu) * div * e3``.
    propagating_p, propagating_s : bool
        Whether the compressional / shear part of the mode radiates.
    """

    n: tuple[int, int]
    alpha_n: np.ndarray
    beta1: complex
    beta2: complex
    chi: complex
    kappa1_sq: float
    kappa2_sq: float
    dtn: np.ndarray
    propagating_p: bool
    propagating_s: bool


def mode(medium: Medium, incidence: Incidence, lattice: Lattice,
         n: tuple[int, int]) -> ModeData:
    """Build the spectral data of mode ``n``.

    Raises
    ------
    WoodAnomalyError
        If ``|alpha_n|`` coincides with one of the wavenumbers to within
        ``WOOD_RTOL`` (relative to that wavenumber).
    """
    n1, n2 = int(n[0]), int(n[1])
    a = np.array([
        incidence.alpha[0] + 2.0 * math.pi * n1 / lattice.period1,
        incidence.alpha[1] + 2.0 * math.pi * n2 / lattice.period2,
    ])
    a_sq = float(a @ a)
    a_abs = math.sqrt(a_sq)
    for kappa in (medium.kappa1, medium.kappa2):
        if abs(a_abs - kappa) < WOOD_RTOL * kappa:
            raise WoodAnomalyError(
                f"mode {(n1, n2)} sits on a Wood anomaly: "
                f"|alpha_n|={a_abs!r} vs wavenumber {kappa!r}"
            )
    beta1 = _vertical_wavenumber(medium.kappa1, a_sq)
    beta2 = _vertical_wavenumber(medium.kappa2, a_sq)
    if beta2.imag > 0.0:
        # evanescent mode: a_sq and beta1*beta2 = -|beta1||beta2| nearly
        # cancel for large n; this equivalent form is cancellation-free
        k1s, k2s = medium.kappa1 ** 2, medium.kappa2 ** 2
        chi = (a_sq * (k1s + k2s) - k1s * k2s) / (a_sq - beta1 * beta2)
    else:
        chi = a_sq + beta1 * beta2
    dtn = _dtn_matrix(medium, a, beta1, beta2, chi)
    return ModeData(
        n=(n1, n2), alpha_n=a, beta1=beta1, beta2=beta2, chi=chi,
        kappa1_sq=medium.kappa1 ** 2, kappa2_sq=medium.kappa2 ** 2, dtn=dtn,
        propagating_p=a_abs < medium.kappa1,
        propagating_s=a_abs < medium.kappa2,
    )


def _dtn_matrix(medium: Medium, a: np.ndarray, beta1: complex,
                beta2: complex, chi: complex) -> np.ndarray:
    a1, a2 = a
    # beta1 - beta2 without the large-|n| cancellation of the difference
    b12 = (medium.kappa1 ** 2 - medium.kappa2 ** 2) / (beta1 + beta2)
    k2sq = medium.kappa2 ** 2
    m = np.array([
        [a1 * a1 * b12 + beta2 * chi, a1 * a2 * b12, a1 * beta2 * b12],
        [a1 * a2 * b12, a2 * a2 * b12 + beta2 * chi, a2 * beta2 * b12],
        [-a1 * beta2 * b12, -a2 * beta2 * b12, k2sq * beta2],
    ], dtype=complex)
    return (1j * medium.mu / chi) * m


def apply_dtn(mode_data: ModeData, u_n: np.ndarray) -> np.ndarray:
    """Apply the modal DtN matrix to a modal displacement trace."""
    return mode_data.dtn @ np.asarray(u_n, dtype=complex)


def neg_hermitian_part(mode_data: ModeData) -> np.ndarray:
    """Negated Hermitian part ``-(M + M^*) / 2`` of the DtN matrix.

    For modes whose shear part is evanescent the DtN matrix is purely
    anti-dissipative: the result equals ``-dtn`` itself and is Hermitian
    positive definite.
    """
    m = mode_data.dtn
    return -0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class HelmholtzCoeffs:
    """Scalar/vector potential amplitudes of one outgoing mode.

    ``phi`` multiplies the compressional (curl-free) part, ``psi`` is the
    divergence-free vector amplitude of the shear part with the gauge
    ``alpha_n . (psi1, psi2) + beta2 * psi3 = 0``.
    """

    phi: complex
    psi: np.ndarray  # shape (3,)

    def shear_displacement(self, mode_data: ModeData) -> np.ndarray:
        """Displacement amplitude of the shear part (the curl term)."""
        a1, a2 = mode_data.alpha_n
        b2 = mode_data.beta2
        p1, p2, p3 = self.psi
        return np.array([
            a2 * p3 - b2 * p2,
            b2 * p1 - a1 * p3,
            a1 * p2 - a2 * p1,
        ], dtype=complex)


def field_from_coeffs(mode_data: ModeData, coeffs: HelmholtzCoeffs) -> np.ndarray:
    """Modal displacement trace from Helmholtz amplitudes.

    ``u_n = i * ((alpha_n, beta1) phi + curl-part(psi))``; inverse of
    :func:`coeffs_from_field`.
    """
    a1, a2 = mode_data.alpha_n
    kp = np.array([a1, a2, mode_data.beta1], dtype=complex)
    return 1j * (kp * coeffs.phi + coeffs.shear_displacement(mode_data))


def coeffs_from_field(mode_data: ModeData, u_n: np.ndarray) -> HelmholtzCoeffs:
    """Helmholtz amplitudes of a modal displacement trace."""
    u1, u2, u3 = np.asarray(u_n, dtype=complex)
    a1, a2 = mode_data.alpha_n
    b1, b2 = mode_data.beta1, mode_data.beta2
    chi = mode_data.chi
    k1sq, k2sq = mode_data.kappa1_sq, mode_data.kappa2_sq
    # beta2 - beta1 without the large-|n| cancellation of the difference;
    # the cubic sums in the closed-form inverse reduce to b1 +/- a_j^2 db
    db = (k2sq - k1sq) / (b1 + b2)
    phi = -(1j / chi) * (a1 * u1 + a2 * u2 + b2 * u3)
    psi1 = -(1j / chi) * (
        -(a1 * a2 * db / k2sq) * u1
        + (b1 + a1 * a1 * db / k2sq) * u2
        - a2 * u3
    )
    psi2 = -(1j / chi) * (
        -(b1 + a2 * a2 * db / k2sq) * u1
        + (a1 * a2 * db / k2sq) * u2
        + a1 * u3
    )
    psi3 = -(1j / k2sq) * (a2 * u1 - a1 * u2)
    return HelmholtzCoeffs(phi=phi, psi=np.array([psi1, psi2, psi3]))


def mode_transfer(mode_data: ModeData, height: float,
                  surface_height: float) -> np.ndarray:
    """Matrix propagating the modal trace from ``surface_height`` up to
    ``height``.

    Both Helmholtz components are advanced by their own vertical phase
    ``exp(i beta_j (height - surface_height))``; the returned matrix acts
    directly on displacement traces.  Its entries decay like
    ``max(|n1|,|n2|) * exp(-|beta2| (height - surface_height))`` for
    evanescent modes.
    """
    d = height - surface_height
    a1, a2 = mode_data.alpha_n
    b1, b2 = mode_data.beta1, mode_data.beta2
    k1sq, k2sq = mode_data.kappa1_sq, mode_data.kappa2_sq
    e2 = cmath.exp(1j * b2 * d)
    # e1 - e2 = e2 * (exp(z) - 1) with z = i (b1 - b2) d, both factors
    # computed without cancellation (b1 - b2 via the wavenumber identity,
    # exp(z) - 1 by series when z is small)
    z = 1j * d * (k1sq - k2sq) / (b1 + b2)
    if abs(z) < 1e-4:
        em1 = z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)))
    else:
        em1 = cmath.exp(z) - 1.0
    row = np.array([a1, a2, b1], dtype=complex)
    col = np.array([a1, a2, b2], dtype=complex)
    return e2 * (np.eye(3) + np.outer(row, col) * (em1 / mode_data.chi))


@dataclass(frozen=True)
class EfficiencyTable:
    """Grating efficiencies of the propagating modes.

    ``rows`` holds tuples ``(n1, n2, kind, value)`` where ``kind`` is
    ``'c'`` (compressional) or ``'s'`` (shear).  For a lossless rigid
    surface the total converges to 1 as the field is resolved.
    """

    rows: list[tuple[int, int, str, float]]
    total: float


def efficiencies(medium: Medium, incidence: Incidence, lattice: Lattice,
                 spectrum) -> EfficiencyTable:
    """Grating efficiencies from a boundary spectrum on the top plane.

    ``spectrum`` is any object with an ``N`` attribute and a
    ``coefficient(n1, n2)`` method returning the modal displacement trace
    (a length-3 complex array) on the plane ``x3 = lattice.height``, e.g.
    :class:`elastodtn.dtn.BoundarySpectrum`.

    The efficiency of a propagating mode is its time-averaged upward
    energy flux through the top plane divided by the downward flux of the
    incident wave:

    * compressional: ``kappa1^2 * beta1n * |phi_n|^2 / beta``,
    * shear: ``(mu/(lam+2mu)) * beta2n * |U_n|^2 / beta`` where ``U_n``
      is the shear displacement amplitude.
    """
    rows: list[tuple[int, int, str, float]] = []
    total = 0.0
    ratio = medium.mu / (medium.lam + 2.0 * medium.mu)
    nmax = spectrum.N
    for n1 in range(-nmax, nmax + 1):
        for n2 in range(-nmax, nmax + 1):
            md = mode(medium, incidence, lattice, (n1, n2))
            if not md.propagating_s:
                continue
            u_n = spectrum.coefficient(n1, n2)
            c = coeffs_from_field(md, u_n)
            if md.propagating_p:
                e_c = (medium.kappa1 ** 2 * md.beta1.real
                       * abs(c.phi) ** 2 / incidence.beta)
                rows.append((n1, n2, "c", float(e_c)))
                total += float(e_c)
            u_s = c.shear_displacement(md)
            e_s = (ratio * md.beta2.real
                   * float(np.vdot(u_s, u_s).real) / incidence.beta)
            rows.append((n1, n2, "s", float(e_s)))
            total += float(e_s)
    return EfficiencyTable(rows=rows, total=total)


def incident_h1_norm(medium: Medium, domain_volume: float) -> float:
    """H1 norm of the incident wave over a domain of the given volume.

    The incident wave has unit amplitude and constant-modulus gradient of
    Frobenius norm ``kappa1``, so the squared norm is
    ``volume * (1 + kappa1^2)`` exactly.
    """
    return math.sqrt(domain_volume * (1.0 + medium.kappa1 ** 2))


def truncation_bound(medium: Medium, incidence: Incidence, lattice: Lattice,
                     n_trunc: int, uinc_h1norm: float) -> float:
    """A posteriori bound on the DtN truncation error.

    Bounds the effect of discarding all modes with
    ``min(|n1|, |n2|) > n_trunc`` by
    ``max_n max(|n1|,|n2|) * exp(-|beta2n| (height - surface_height))``
    times the H1 norm of the incident field.  The maximum over the
    infinite index set is evaluated on the frontier
    ``min(|n1|,|n2|) = n_trunc + 1`` and on a few outer rings, expanding
    the scan until the envelope has decayed well below the running
    maximum.
    """
    if n_trunc < 1:
        raise ValueError("truncation order must be at least 1")
    d = lattice.height - lattice.surface_height

    def envelope(n1: int, n2: int) -> float:
        md = mode(medium, incidence, lattice, (n1, n2))
        decay = math.exp(-abs(md.beta2) * d) if md.beta2.imag > 0.0 \
            else 1.0
        return max(abs(n1), abs(n2)) * decay

    best = 0.0
    m = n_trunc + 1
    extra = 0
    while True:
        # ring of the frontier set: indices with min(|n1|,|n2|) == m
        ring = 0.0
        k = m
        while True:
            val = 0.0
            for s1 in (-1, 1):
                for s2 in (-1, 1):
                    val = max(val, envelope(s1 * m, s2 * k),
                              envelope(s1 * k, s2 * m))
            ring = max(ring, val)
            k += 1
            if k - m >= 10 and val < 1.0e-6 * max(ring, best):
                break
            if k - m > 2000:  # pragma: no cover - safety stop
                break
        best = max(best, ring)
        m += 1
        extra += 1
        if extra >= 5 and ring < 1.0e-3 * best:
            break
        if extra > 200:  # pragma: no cover - safety stop
            break
    return best * uinc_h1norm

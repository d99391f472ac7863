"""Tests for the flat-surface exact solution and the energy oracles."""

import math

import numpy as np
import pytest

from elastodtn.analytic import (flat_exact, flat_field, flat_gradient,
                                flat_modes, incident, incident_flux,
                                incident_gradient, modal_energy_flux)
from elastodtn.spectral import (Lattice, efficiencies, make_incidence,
                                make_medium, mode)


def setup(theta1=math.pi / 6.0, theta2=math.pi / 6.0, lam=1.0, mu=1.0,
          omega=2.0 * math.pi, h=0.3):
    med = make_medium(lam, mu, omega)
    inc = make_incidence(med, theta1, theta2)
    lat = Lattice(1.0, 1.0, h, 0.0)
    return med, inc, lat


class TestIncident:
    def test_unit_amplitude_and_direction(self):
        _, inc, _ = setup()
        x = np.array([[0.2, 0.7, 0.1], [0.0, 0.0, 0.0]])
        u = incident(inc, x)
        np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0)
        np.testing.assert_allclose(u[1], inc.q)

    def test_quasi_periodicity(self):
        _, inc, _ = setup()
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, size=(10, 3))
        shift = x + np.array([1.0, 0.0, 0.0])
        phase = np.exp(1j * inc.alpha[0])
        np.testing.assert_allclose(incident(inc, shift),
                                   phase * incident(inc, x), atol=1.0e-13)

    def test_gradient_finite_difference(self):
        _, inc, _ = setup()
        x = np.array([0.3, 0.4, 0.2])
        g = incident_gradient(inc, x)
        eps = 1.0e-6
        for l in range(3):
            dx = np.zeros(3)
            dx[l] = eps
            fd = (incident(inc, x + dx) - incident(inc, x - dx)) / (2 * eps)
            np.testing.assert_allclose(g[:, l], fd, atol=1.0e-7)


class TestFlatExact:
    def test_linear_system_residual(self):
        """The amplitudes satisfy the defining 4x4 system (independent
        dense solve)."""
        rng = np.random.default_rng(1)
        for _ in range(8):
            mu = rng.uniform(0.3, 2.0)
            lam = rng.uniform(-0.4 * mu, 2.0)
            med = make_medium(lam, mu, rng.uniform(2.0, 10.0))
            inc = make_incidence(med, rng.uniform(-1.3, 1.3),
                                 rng.uniform(0, 2 * math.pi))
            sol = flat_exact(med, inc)
            a1, a2 = inc.alpha
            b, bz = inc.beta, sol.beta20
            sys = 1j * np.array([
                [a1, 0.0, -bz, a2],
                [a2, bz, 0.0, -a1],
                [b, -a2, a1, 0.0],
                [0.0, a1, a2, bz],
            ], dtype=complex)
            rhs = -np.array([*inc.q, 0.0], dtype=complex)
            amps = np.linalg.solve(sys, rhs)
            got = np.array([sol.a, *sol.b])
            np.testing.assert_allclose(got, amps, atol=1.0e-12 * max(1.0, np.abs(amps).max()))

    def test_boundary_condition(self):
        med, inc, _ = setup()
        sol = flat_exact(med, inc)
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, size=(20, 3))
        x[:, 2] = 0.0
        np.testing.assert_allclose(flat_field(sol, x), -incident(inc, x),
                                   atol=1.0e-12)

    def test_boundary_condition_elevated_plane(self):
        med, inc, _ = setup()
        sol = flat_exact(med, inc, z0=0.15)
        x = np.array([[0.3, 0.8, 0.15]])
        np.testing.assert_allclose(flat_field(sol, x), -incident(inc, x),
                                   atol=1.0e-12)

    def test_navier_equation(self):
        """Both plane-wave parts satisfy the frequency-domain Navier
        equation."""
        med, inc, _ = setup(theta1=0.4, theta2=1.1, lam=0.7, mu=1.3, omega=5.0)
        sol = flat_exact(med, inc)
        a1, a2 = inc.alpha
        kp = np.array([a1, a2, inc.beta], dtype=complex)
        ks = np.array([a1, a2, sol.beta20], dtype=complex)
        for k, amp in ((kp, 1j * sol.a * kp), (ks, 1j * sol.shear_amp)):
            ksq = k @ k
            res = (-med.mu * ksq * amp
                   - (med.lam + med.mu) * k * (k @ amp)
                   + med.omega ** 2 * amp)
            assert np.abs(res).max() < 1.0e-9 * max(1.0, np.abs(amp).max())

    def test_quasi_periodicity(self):
        med, inc, _ = setup()
        sol = flat_exact(med, inc)
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 1, size=(10, 3))
        for axis, alpha in ((0, inc.alpha[0]), (1, inc.alpha[1])):
            shift = x.copy()
            shift[:, axis] += 1.0
            np.testing.assert_allclose(flat_field(sol, shift),
                                       np.exp(1j * alpha) * flat_field(sol, x),
                                       atol=1.0e-12)

    def test_gradient_finite_difference(self):
        med, inc, _ = setup()
        sol = flat_exact(med, inc)
        x = np.array([0.3, 0.4, 0.2])
        g = flat_gradient(sol, x)
        eps = 1.0e-6
        for l in range(3):
            dx = np.zeros(3)
            dx[l] = eps
            fd = (flat_field(sol, x + dx) - flat_field(sol, x - dx)) / (2 * eps)
            np.testing.assert_allclose(g[:, l], fd, atol=1.0e-6)


class _SingleModeSpectrum:
    """Boundary spectrum of the flat exact solution (only n = 0)."""

    def __init__(self, sol, lattice, N=2):
        from elastodtn.spectral import field_from_coeffs
        self.N = N
        (md, coeff), = flat_modes(sol, lattice)
        self._u0 = field_from_coeffs(md, coeff)

    def coefficient(self, n1, n2):
        if n1 == 0 and n2 == 0:
            return self._u0
        return np.zeros(3, dtype=complex)


class TestEnergy:
    def test_flux_conservation_flat(self):
        """Outgoing flux equals incident flux for the exact solution."""
        for theta1, theta2 in ((math.pi / 6, math.pi / 6), (0.0, 0.0),
                               (-0.7, 2.0), (1.1, 4.0)):
            med, inc, lat = setup(theta1=theta1, theta2=theta2)
            sol = flat_exact(med, inc)
            out = modal_energy_flux(med, lat, flat_modes(sol, lat))
            inc_flux = incident_flux(med, inc, lat)
            assert out == pytest.approx(inc_flux, rel=1.0e-10)

    def test_efficiencies_sum_to_one(self):
        med, inc, lat = setup()
        sol = flat_exact(med, inc)
        table = efficiencies(med, inc, lat, _SingleModeSpectrum(sol, lat))
        assert table.total == pytest.approx(1.0, abs=1.0e-10)
        kinds = {(r[0], r[1], r[2]) for r in table.rows}
        assert (0, 0, "c") in kinds and (0, 0, "s") in kinds
        assert all(r[3] >= 0.0 for r in table.rows)

    def test_efficiencies_match_flux_oracle_per_mode(self):
        """The efficiency formulas reproduce the first-principles flux of
        each single outgoing mode."""
        rng = np.random.default_rng(4)
        med, inc, lat = setup()
        from elastodtn.spectral import HelmholtzCoeffs, coeffs_from_field
        for n in [(0, 0), (-1, 0), (0, -1)]:
            md = mode(med, inc, lat, n)
            if not md.propagating_s:
                continue
            u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            c = coeffs_from_field(md, u)
            flux = modal_energy_flux(med, lat, [(md, c)])
            e_c = (med.kappa1 ** 2 * md.beta1.real * abs(c.phi) ** 2
                   / inc.beta) if md.propagating_p else 0.0
            us = c.shear_displacement(md)
            e_s = (med.mu / (med.lam + 2 * med.mu) * md.beta2.real
                   * float(np.vdot(us, us).real) / inc.beta)
            expect = (e_c + e_s) * incident_flux(med, inc, lat)
            assert flux == pytest.approx(expect, rel=1.0e-10)

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import derivative_errors, slaving_identity_residual
from twophase.constitutive import (
    FluidParams,
    FreeEnergy,
    GibbsPoint,
    HelmholtzPoint,
    SampleW,
    chi_bar,
    general_pressure,
    gibbs_eval,
    helmholtz_reduced_eval,
    recover_state,
    total_energy,
)
from twophase.errors import DomainError, ParameterError, SimulationBlowup


@dataclass(frozen=True)
class MixingEntropyW(FreeEnergy):
    """A second admissible W: the well depth depends on temperature, so s depends on chi."""

    cv: float = 1.5
    a: float = 0.8
    b: float = 0.3
    lam: float = 2e-2

    def value(self, theta, chi, q):
        return (self.cv * theta * (1 - np.log(theta)) + self.a * chi**2 * (1 - chi) ** 2
                + self.b * theta * chi * (1 - chi) + 0.5 * self.lam * q)

    def d_theta(self, theta, chi, q):
        return -self.cv * np.log(theta) + self.b * chi * (1 - chi)

    def d_chi(self, theta, chi, q):
        return 2 * self.a * chi * (1 - chi) * (1 - 2 * chi) + self.b * theta * (1 - 2 * chi)

    def d_q(self, theta, chi, q):
        return 0.5 * self.lam + 0.0 * (theta + chi + q)

    def d_chi_chi(self, theta, chi, q):
        return 2 * self.a * (1 - 6 * chi + 6 * chi**2) - 2 * self.b * theta

    def energy_partials(self, theta, chi, q):
        return (self.cv + 0.0 * theta, 2 * self.a * chi * (1 - chi) * (1 - 2 * chi) + 0.0 * theta,
                self.d_q(theta, chi, q))

    def entropy_partials(self, theta, chi, q):
        return (self.cv / theta, -self.b * (1 - 2 * chi) + 0.0 * theta, 0.0 * (theta + q))

    def temperature(self, e, chi, q):
        return (e - self.a * chi**2 * (1 - chi) ** 2 - 0.5 * self.lam * q) / self.cv


ALT = FluidParams(free_energy=MixingEntropyW())


# --- parameters ----------------------------------------------------------------------


def test_default_parameters():
    p = FluidParams()
    assert (p.tau1, p.tau2, p.a, p.lam, p.cv) == (1.0, 0.5, 1.0, 1e-2, 1.0)
    assert p.tau_star == 0.5
    assert isinstance(p.W, SampleW)


def test_equal_specific_volumes_rejected():
    with pytest.raises(ParameterError, match=r"tau\* must be nonzero"):
        FluidParams(tau1=1.0, tau2=1.0)


@pytest.mark.parametrize("key,value", [("tau1", 0.0), ("cv", -1.0), ("beta", 0.0), ("eps", 0.0),
                                       ("gamma", -2.0), ("eta", -1e-3), ("lam", -1.0), ("delta", -1.0),
                                       ("a", float("nan"))])
def test_sign_constraints_name_the_key(key, value):
    with pytest.raises(ParameterError) as exc:
        FluidParams(**{key: value})
    assert exc.value.key == key


def test_negative_tau_star_allowed():
    assert FluidParams(tau1=0.5, tau2=1.0).tau_star == -0.5


# --- Gibbs energy --------------------------------------------------------------------


def test_gibbs_pure_phase_point():
    p = FluidParams(delta=0.0)
    t = gibbs_eval(p, GibbsPoint(0.0, 1.0, 0.0, np.zeros(2)))
    assert t.G == pytest.approx(p.cv)
    assert t.s == 0.0
    assert t.tau == p.tau2


def test_gibbs_chi_derivative_vanishes_at_symmetric_point():
    t = gibbs_eval(FluidParams(), GibbsPoint(0.0, 1.3, 0.5, np.zeros(1)))
    assert t.G_chi == 0.0


def test_gibbs_gradient_derivative_parallel_to_gradient():
    g = np.array([[0.3, -1.0], [0.4, 2.0]])
    t = gibbs_eval(FluidParams(), GibbsPoint(np.zeros(2), np.ones(2), np.full(2, 0.2), g))
    cross = t.G_g[0] * g[1] - t.G_g[1] * g[0]
    assert np.all(np.abs(cross) < 1e-16)


def test_gibbs_rejects_nonpositive_temperature():
    with pytest.raises(DomainError):
        gibbs_eval(FluidParams(), GibbsPoint(0.0, 0.0, 0.5, np.zeros(1)))


@pytest.mark.parametrize("params", [FluidParams(), FluidParams(delta=0.0, lam=0.1, a=3.0), ALT],
                         ids=["default", "incompressible", "alt_W"])
def test_every_derivative_matches_centered_differences(params):
    errs = derivative_errors(params, np.random.default_rng(7), size=1000)
    worst = max(errs, key=errs.get)
    assert errs[worst] <= 1e-6, (worst, errs[worst])


# --- reduced Helmholtz energy --------------------------------------------------------


def test_chi_bar_values():
    p = FluidParams()
    assert chi_bar(p, 2.0)[0] == 0.0
    assert chi_bar(p, 1.0)[0] == 1.0
    c, c1, c2 = chi_bar(p, 1.0)
    assert (c1, c2) == (-2.0, 4.0)
    with pytest.raises(DomainError):
        chi_bar(p, 0.0)


def test_helmholtz_pure_phase_no_gradient():
    p = FluidParams()
    theta = 1.7
    t = helmholtz_reduced_eval(p, HelmholtzPoint(2.0, theta, np.zeros(1)))
    assert t.F == pytest.approx(p.cv * theta * (1 - np.log(theta)), rel=1e-15)


def test_kappa_hand_value():
    t = helmholtz_reduced_eval(FluidParams(), HelmholtzPoint(1.0, 1.0, np.array([0.5])))
    assert t.kappa == pytest.approx(0.04, rel=1e-15)


def test_energy_equals_free_energy_at_unit_temperature():
    t = helmholtz_reduced_eval(FluidParams(), HelmholtzPoint(1.4, 1.0, np.array([0.3, -0.2])))
    assert t.E == t.F


def test_helmholtz_domain_errors():
    with pytest.raises(DomainError):
        helmholtz_reduced_eval(FluidParams(), HelmholtzPoint(1.0, -1.0, np.zeros(1)))
    with pytest.raises(DomainError):
        helmholtz_reduced_eval(FluidParams(), HelmholtzPoint(-1.0, 1.0, np.zeros(1)))


# Keep products clear of the subnormal range, where relative precision is lost.
grad_component = st.floats(-5, 5).filter(lambda v: v == 0 or abs(v) > 1e-100)


@settings(max_examples=200, deadline=None)
@given(rho=st.floats(0.6, 3.0), theta=st.floats(0.1, 10.0), r0=grad_component, r1=grad_component)
def test_helmholtz_structural_identities(rho, theta, r0, r1):
    p = FluidParams()
    r = np.array([r0, r1])
    t = helmholtz_reduced_eval(p, HelmholtzPoint(rho, theta, r))
    np.testing.assert_allclose(rho * t.F_r, t.kappa * r, rtol=1e-15, atol=0)
    assert abs(t.E - t.F - theta * t.s) <= 4e-16 * max(abs(t.E), abs(t.F), abs(theta * t.s), 1e-300)
    assert t.p == pytest.approx(rho**2 * t.F_rho, rel=1e-15)
    c, c1, _ = chi_bar(p, rho)
    tg = gibbs_eval(p, GibbsPoint(0.0, theta, c, c1 * r))
    np.testing.assert_allclose(tg.G_g, t.F_r / c1, rtol=1e-14)


@pytest.mark.parametrize("params", [FluidParams(), FluidParams(tau1=0.4, tau2=0.9, lam=0.3), ALT],
                         ids=["default", "negative_tau_star", "alt_W"])
def test_chemical_identity_of_reduced_energy(params):
    assert slaving_identity_residual(params, np.random.default_rng(11)) <= 1e-12


# --- conserved <-> primitive ---------------------------------------------------------


def test_recover_unit_temperature_at_rest():
    p = FluidParams()
    rho = np.array([1.2, 1.5, 1.9])
    r = np.array([[0.1, -0.3, 0.2]])
    E = total_energy(p, rho, np.zeros((1, 3)), np.ones(3), grad_rho=r)
    u, theta = recover_state(p, rho, np.zeros((1, 3)), E, grad_rho=r)
    assert np.all(u == 0)
    np.testing.assert_allclose(theta, 1.0, rtol=0, atol=2e-16)


@pytest.mark.parametrize("general", [False, True])
@pytest.mark.parametrize("params", [FluidParams(), ALT], ids=["default", "alt_W"])
def test_state_round_trip(params, general):
    rng = np.random.default_rng(5)
    n = 500
    rho = rng.uniform(0.9, 2.1, n)
    u = rng.normal(size=(2, n))
    theta = rng.uniform(0.2, 4.0, n)
    r = rng.normal(size=(2, n))
    chi = rng.uniform(0, 1, n) if general else None
    gchi = rng.normal(size=(2, n)) if general else None
    E = total_energy(params, rho, u, theta, r, chi, gchi)
    u2, theta2 = recover_state(params, rho, rho * u, E, r, chi, gchi)
    np.testing.assert_allclose(u2, u, rtol=1e-12)
    np.testing.assert_allclose(theta2, theta, rtol=1e-12)


def test_recover_state_flags_lost_positivity():
    p = FluidParams()
    with pytest.raises(SimulationBlowup):
        recover_state(p, np.array([1.5]), np.zeros((1, 1)), np.array([-10.0]), np.zeros((1, 1)))
    with pytest.raises(SimulationBlowup):
        recover_state(p, np.array([-1.0]), np.zeros((1, 1)), np.array([1.0]), np.zeros((1, 1)))


def test_general_pressure_inverts_specific_volume():
    p = FluidParams(delta=0.05)
    chi = np.array([0.2, 0.7])
    pr = np.array([-3.0, 4.0])
    tau = gibbs_eval(p, GibbsPoint(pr, np.ones(2), chi, np.zeros((1, 2)))).tau
    np.testing.assert_allclose(general_pressure(p, 1 / tau, chi), pr, rtol=1e-12)
    with pytest.raises(DomainError):
        general_pressure(FluidParams(delta=0.0), 1.5, 0.5)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermovisc import constitutive as cm
from thermovisc import tensor_kernel as tk

DIAG = np.array([0.1, 0, 0, 0, 0, 0])


@pytest.fixture
def unit():
    """K = G = c_v = 1, alpha = 1, no thermal expansion."""
    return cm.thermo_creep_material(1.0, 1.0, 0.0, 1.0, 1.0)


@pytest.fixture
def expanding():
    return cm.thermo_creep_material(1.0, 1.0, 1.0, 1.0, 1.0)


def generic_copy(m):
    """Same laws without the closed-form inverse and entropy."""
    return cm.MaterialModel(m.phi, m.dphi, m.d2phi, m.coupling, m.dcoupling, m.d2coupling,
                            m.gamma, m.dgamma, m.d2gamma, m.alpha)


def test_free_energy_examples(unit, expanding):
    assert cm.free_energy(unit, np.zeros(6), 0.0) == 0.0
    assert math.isclose(cm.free_energy(unit, DIAG, 0.0), 0.005 + 0.02 / 3, rel_tol=1e-12)
    assert math.isclose(cm.free_energy(expanding, np.zeros(6), 0.2), -0.02, rel_tol=1e-12)


def test_negative_temperature_is_rejected(unit):
    for f in (cm.free_energy, cm.cauchy_stress, cm.entropy, cm.internal_energy):
        with pytest.raises(cm.DomainError):
            f(unit, np.zeros(6), -1.0)
    with pytest.raises(cm.DomainError):
        cm.thermal_energy_inverse(unit, -0.1)


def test_cauchy_stress_examples(unit, expanding):
    assert not cm.cauchy_stress(unit, np.zeros(6), 0.0).any()
    T = cm.cauchy_stress(unit, DIAG, 0.0)
    assert np.allclose(T, [0.1 + 0.035 / 3 + 0.4 / 3, 0.1 + 0.035 / 3 - 0.2 / 3,
                           0.1 + 0.035 / 3 - 0.2 / 3, 0, 0, 0], rtol=1e-12)
    assert np.allclose(T[:3], [0.2450, 0.0450, 0.0450], atol=1e-4)
    assert np.allclose(cm.cauchy_stress(expanding, np.zeros(6), 0.2), -0.22 * tk.IDENTITY6)


def test_energy_examples(unit):
    assert cm.internal_energy(unit, np.zeros(6), 0.0) == 0.0
    assert math.isclose(cm.thermal_energy(unit, 1.0), 0.5)
    assert math.isclose(cm.internal_energy(unit, DIAG, 0.0), cm.free_energy(unit, DIAG, 0.0))
    assert cm.thermal_energy_inverse(unit, 0.0) == 0.0
    assert math.isclose(cm.thermal_energy_inverse(unit, 0.5), 1.0, rel_tol=1e-14)


def test_entropy_heat_capacity_examples(unit):
    assert cm.entropy(unit, np.zeros(6), 0.0) == 0.0
    assert math.isclose(cm.entropy(unit, np.zeros(6), 1.0), 1.0)
    assert cm.heat_capacity(unit, 0.0) == 0.0
    assert math.isclose(cm.heat_capacity(unit, 1.0), 1.0)


@pytest.mark.parametrize("closed_form", [True, False])
def test_thermal_inverse_roundtrip(closed_form):
    m = cm.thermo_creep_material(2.0, 1.0, 0.3, 1.7, 0.4)
    m = m if closed_form else generic_copy(m)
    th = np.random.default_rng(0).uniform(1e-3, 10.0, 50)
    assert np.allclose(cm.thermal_energy_inverse(m, cm.thermal_energy(m, th)), th, rtol=1e-12)


def _samples(n=100, seed=0):
    rng = np.random.default_rng(seed)
    return 0.2 * rng.normal(size=(n, 6)), rng.uniform(0.2, 3.0, n)


def test_gibbs_relations_by_finite_differences():
    m = cm.thermo_creep_material(1.3, 0.7, 0.4, 1.1, 0.6)
    E, th = _samples()
    d = 1e-5
    eta_fd = -(cm.free_energy(m, E, th + d) - cm.free_energy(m, E, th - d)) / (2 * d)
    assert np.allclose(cm.entropy(m, E, th), eta_fd, rtol=1e-6)
    c_fd = (cm.thermal_energy(m, th + d) - cm.thermal_energy(m, th - d)) / (2 * d)
    assert np.allclose(cm.heat_capacity(m, th), c_fd, rtol=1e-6)
    assert np.allclose(cm.heat_capacity(m, th), -th * m.d2gamma(th), rtol=1e-12)


def test_algebraic_identities():
    m = cm.thermo_creep_material(1.3, 0.7, 0.4, 1.1, 0.6)
    d = cm.DissipationModel(creep=cm.QuadraticCreep(2.5, activation=0.3))
    E, th = _samples(seed=1)
    # internal energy = psi + theta eta
    lhs = cm.internal_energy(m, E, th)
    rhs = cm.free_energy(m, E, th) + th * cm.entropy(m, E, th)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)
    # temperature only enters the volumetric stress
    assert np.allclose(tk.dev(cm.cauchy_stress(m, E, th)), tk.dev(cm.cauchy_stress(m, E, 0 * th)),
                       atol=1e-12)
    # flow rule: zeta_p'(R) = dev T
    R = cm.creep_rate(m, d, E, th)
    assert np.all(tk.trace(R) == 0.0)
    S = tk.dev(cm.cauchy_stress(m, E, th))
    assert np.allclose(d.creep.potential_derivative(th, R), S, rtol=1e-10, atol=1e-14)
    # adiabatic power from the stress difference
    dv = np.random.default_rng(2).normal(size=len(th))
    assert np.allclose(cm.adiabatic_power(m, E, th, dv),
                       cm.adiabatic_power_from_stress(m, E, th, dv), rtol=1e-10, atol=1e-14)


def test_stress_is_energy_gradient():
    m = cm.thermo_creep_material(1.3, 0.7, 0.4, 1.1, 0.6)
    E, th = _samples(20, seed=4)
    h = 1e-6
    for c in range(6):
        e = np.zeros(6)
        e[c] = h
        fd = (cm.free_energy(m, E + e, th) - cm.free_energy(m, E - e, th)) / (2 * h)
        T = cm.cauchy_stress(m, E, th) - cm.free_energy(m, E, th)[:, None] * tk.IDENTITY6
        assert np.allclose(fd, tk.VOIGT_WEIGHTS[c] * T[:, c], rtol=1e-6, atol=1e-9)


def test_stress_jacobians_by_finite_differences():
    m = cm.thermo_creep_material(1.3, 0.7, 0.4, 1.1, 0.6)
    E, th = _samples(10, seed=5)
    dE, dth = cm.stress_jacobians(m, E, th)
    h = 1e-6
    for c in range(6):
        e = np.zeros(6)
        e[c] = h
        fd = (cm.cauchy_stress(m, E + e, th) - cm.cauchy_stress(m, E - e, th)) / (2 * h)
        assert np.allclose(dE[:, :, c], fd, rtol=1e-6, atol=1e-8)
    fd = (cm.cauchy_stress(m, E, th + h) - cm.cauchy_stress(m, E, th - h)) / (2 * h)
    assert np.allclose(dth, fd, rtol=1e-6, atol=1e-8)


def test_creep_rate_examples(unit):
    d = cm.DissipationModel(creep=cm.QuadraticCreep(2.0))
    assert np.allclose(cm.creep_rate(unit, d, 0.3 * tk.IDENTITY6, 1.0), 0)
    R = cm.creep_rate(unit, d, DIAG, 1.0)
    assert np.allclose(R, [0.2 / 3, -0.1 / 3, -0.1 / 3, 0, 0, 0], rtol=1e-12)


def test_arrhenius_modulus():
    c = cm.QuadraticCreep(2.0, activation=0.5)
    assert math.isclose(float(c.modulus(np.array(1.0))), 2.0 * math.exp(0.5))
    th, h = np.array([0.7, 1.3]), 1e-6
    fd = (c.modulus(th + h) - c.modulus(th - h)) / (2 * h)
    assert np.allclose(c.dmodulus(th), fd, rtol=1e-6)
    with pytest.raises(cm.DomainError):
        cm.QuadraticCreep(0.0)


def test_dissipation_rate_examples():
    ident = cm.DissipationModel(eta_shear=0.5, eta_bulk=1.0 / 3.0)
    assert np.allclose(ident.viscosity_matrix, np.eye(6))
    z3 = np.zeros((3, 3, 3))
    assert cm.dissipation_rate(ident, 1.0, np.zeros(6), np.zeros(6), z3) == 0.0
    assert math.isclose(cm.dissipation_rate(ident, 1.0, DIAG, np.zeros(6), z3), 0.01)
    H = z3.copy()
    H[0, 1, 2] = 2.0
    hyper = cm.DissipationModel(eta_shear=0.5, eta_bulk=1 / 3, mu=1.0, p=4.0)
    assert math.isclose(cm.dissipation_rate(hyper, 1.0, DIAG, np.zeros(6), H), 16.01)


@settings(max_examples=50)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 2), st.floats(3.01, 8), st.integers(0, 2**31))
def test_dissipation_is_nonnegative(es, eb, mu, p, seed):
    rng = np.random.default_rng(seed)
    d = cm.DissipationModel(eta_shear=es, eta_bulk=eb, mu=mu, p=p, creep=cm.QuadraticCreep(1.5))
    xi = cm.dissipation_rate(d, rng.uniform(0.1, 2, 10), rng.normal(size=(10, 6)),
                             tk.dev(rng.normal(size=(10, 6))), rng.normal(size=(10, 3, 3, 3)))
    assert np.all(xi >= 0)
    v = rng.normal(size=6) * tk.VOIGT_WEIGHTS
    assert v @ d.viscosity_matrix @ (v / tk.VOIGT_WEIGHTS) >= -1e-12


def test_dissipation_model_validation():
    with pytest.raises(cm.DomainError, match="p > 3"):
        cm.DissipationModel(p=3.0)
    with pytest.raises(cm.DomainError):
        cm.DissipationModel(mu=-1.0)


def test_adiabatic_power_examples(expanding):
    E = np.array([0.1, 0, 0, 0, 0, 0])
    assert cm.adiabatic_power(expanding, E, 0.0, 1.0) == 0.0
    assert cm.adiabatic_power(expanding, E, 0.2, 0.0) == 0.0
    assert math.isclose(cm.adiabatic_power(expanding, E, 0.2, 1.0), -0.24, rel_tol=1e-12)


@pytest.mark.parametrize("closed_form", [True, False])
def test_generalized_entropy(unit, closed_form):
    m = unit if closed_form else generic_copy(unit)
    assert cm.generalized_entropy(m, 0.0, 0.5) == 0.0
    th = np.array([0.3, 1.0, 2.5])
    assert np.allclose(cm.generalized_entropy(m, th, 1.0), th, rtol=1e-10)
    assert np.allclose(cm.generalized_entropy(m, th, 1e-12), cm.thermal_energy(m, th), rtol=1e-9)
    assert np.allclose(cm.generalized_entropy_of_energy(m, cm.thermal_energy(m, th), 0.7),
                       cm.generalized_entropy(m, th, 0.7), rtol=1e-10)
    with pytest.raises(cm.DomainError):
        cm.generalized_entropy(m, th, 2.0)


def test_admissible_exponents_examples():
    assert cm.admissible_exponents(0.4, 0.0, 0.01)[0]
    assert cm.admissible_exponents(1, 1, 1) == (False, None)
    ok, mu = cm.admissible_exponents(1, 1.5, 1)
    assert ok and math.isclose(mu, 1.7)
    assert not cm.admissible_exponents(0.3, 0.0, 2.0)[0]
    assert "lambda" in cm.exponent_violations(0.3, 0.0, 0.0)[0]


def test_conductivity_and_outflux():
    assert float(cm.conductivity(cm.HeatModel(kappa0=1.5, beta=1.0), 0.0)) == 1.5
    assert float(cm.conductivity(cm.HeatModel(kappa0=1.0, beta=0.0), 1.0)) == 2.0
    assert math.isclose(float(cm.conductivity(cm.HeatModel(kappa0=1.0, beta=1.5), 4.0)), 9.0)
    hm = cm.HeatModel(a1=0.5, a2=0.25)
    th = np.linspace(0, 3, 20)
    h = cm.boundary_outflux(hm, th)
    assert h[0] == 0 and np.all(np.diff(h) > 0)
    assert not cm.HeatModel(a1=0.1).insulated and cm.HeatModel().insulated
    with pytest.raises(cm.DomainError):
        cm.HeatModel(h_ext={"top": 1.0})


def test_material_validation_and_bounds():
    m = cm.thermo_creep_material(1.0, 1.0, 0.2, 1.0, 0.5)
    m.validate()
    assert cm.stress_energy_bound_ratio(m) < 100
    with pytest.raises(cm.DomainError):
        cm.thermo_creep_material(-1.0, 1.0, 0.0, 1.0, 1.0)
    bad = cm.MaterialModel(lambda E: -tk.ddot(E, E), m.dphi, m.d2phi, m.coupling, m.dcoupling,
                           m.d2coupling, m.gamma, m.dgamma, m.d2gamma, m.alpha)
    with pytest.raises(cm.DomainError, match="convex"):
        bad.validate()

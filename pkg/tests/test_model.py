import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import COMPETITION_SETS, COOPERATIVE_SETS, coeffs
from lvqsd.errors import (
    BalanceViolation,
    DomainError,
    NegativeInput,
    PositivityViolation,
    SignMismatch,
    StrongCooperation,
    ValidationError,
)
from lvqsd.model import (
    AxisModel,
    KolmogorovModel,
    Regime,
    drift_H,
    drift_slvkp,
    drift_slvp,
    drift_U,
    grad_V,
    laplacian_V,
    mu_density,
    potential_Q,
    potential_V,
    quartic_q,
    schrodinger_G,
    validate_params,
    x_to_z,
    z_to_x,
)
from oracles import fd_gradient, mp_G, mp_potential, quartic_form

ALL_SETS = {"ones": coeffs(), **{f"comp_{k}": v for k, v in COMPETITION_SETS.items()},
            **{f"coop_{k}": v for k, v in COOPERATIVE_SETS.items()}}

pos = st.floats(0.05, 8.0)


# -- validation ------------------------------------------------------------------

def test_independent_regime():
    p = validate_params(coeffs())
    assert p.regime is Regime.INDEPENDENT and p.alpha == 0.0


def test_balanced_competition():
    p = validate_params(coeffs(gamma2=2.0, c12=1.0, c21=2.0))
    assert p.regime is Regime.COMPETITION
    assert p.alpha == pytest.approx(2.0 / 16)


def test_positivity_violation():
    with pytest.raises(PositivityViolation):
        validate_params(coeffs(c11=-1.0))


def test_strong_cooperation():
    with pytest.raises(StrongCooperation, match="weak cooperation"):
        validate_params(coeffs(c12=-2.0, c21=-2.0))


def test_balance_violation_names_condition():
    with pytest.raises(BalanceViolation, match="balance"):
        validate_params(coeffs(c12=1.0, c21=2.0))


def test_sign_mismatch():
    with pytest.raises(SignMismatch):
        validate_params(coeffs(c12=1.0, c21=-1.0))


def test_missing_and_unknown_keys():
    d = coeffs()
    del d["r2"]
    with pytest.raises(ValidationError, match="missing"):
        validate_params(d)
    with pytest.raises(ValidationError, match="unknown"):
        validate_params(coeffs(), c33=1.0)


def test_non_finite_rejected():
    with pytest.raises(ValidationError):
        validate_params(coeffs(r1=math.nan))


def test_balance_tolerance_normalizes():
    p = validate_params(coeffs(c12=1.0, c21=1.0 + 5e-13))
    assert p.c12 * p.gamma2 == p.c21 * p.gamma1 == 16 * p.alpha
    with pytest.raises(BalanceViolation):
        validate_params(coeffs(c12=1.0, c21=1.0 + 1e-10))


@given(g1=st.floats(0.1, 5), g2=st.floats(0.1, 5), a=st.floats(-0.5, 0.5))
def test_stored_balance_is_exact(g1, g2, a):
    c12 = 16 * a / g2
    c21 = 16 * a / g1
    try:
        p = validate_params(coeffs(gamma1=g1, gamma2=g2, c12=c12, c21=c21))
    except (StrongCooperation, BalanceViolation):
        return
    assert p.c12 * p.gamma2 == pytest.approx(p.c21 * p.gamma1, rel=1e-15, abs=1e-300)
    assert p.alpha == pytest.approx(a, rel=1e-12, abs=1e-15)
    if p.alpha < 0:
        assert p.determinant > 0


# -- change of variables ------------------------------------------------------------

def test_z_to_x_examples():
    p = validate_params(coeffs())
    assert np.allclose(z_to_x([1.0, 4.0], p), [2.0, 4.0])
    assert np.allclose(z_to_x([0.25, 0.25], p), [1.0, 1.0])
    assert np.array_equal(z_to_x([0.0, 0.0], p), [0.0, 0.0])
    p4 = validate_params(coeffs(gamma1=4.0, gamma2=4.0))
    assert np.allclose(x_to_z([1.0, 1.0], p4), [1.0, 1.0])
    assert np.allclose(x_to_z([0.0, 5.0], p), [0.0, 6.25])


def test_negative_input():
    p = validate_params(coeffs())
    with pytest.raises(NegativeInput):
        z_to_x([-1.0, 1.0], p)
    with pytest.raises(NegativeInput):
        x_to_z([1.0, -1e-9], p)


@given(z1=st.floats(0, 1e3), z2=st.floats(0, 1e3), g1=st.floats(0.1, 10), g2=st.floats(0.1, 10))
def test_round_trip(z1, z2, g1, g2):
    p = validate_params(coeffs(gamma1=g1, gamma2=g2))
    z = np.array([z1, z2])
    back = x_to_z(z_to_x(z, p), p)
    assert np.allclose(back, z, rtol=1e-12, atol=0)


# -- fields ------------------------------------------------------------------------

def test_potential_value_at_one():
    # oracle: arbitrary precision evaluation gives exactly -7/16
    assert float(mp_potential(1, 1, coeffs())) == -7 / 16
    assert potential_V(np.array([1.0, 1.0]), validate_params(coeffs())) == pytest.approx(-7 / 16,
                                                                                          rel=1e-15)


def test_gradient_value_at_one():
    p = validate_params(coeffs())
    f = lambda a, b: mp_potential(a, b, coeffs())  # noqa: E731
    fd = float(fd_gradient(f, 1, 1)[0])
    assert fd == pytest.approx(1 / 8, rel=1e-6)
    assert grad_V(np.array([1.0, 1.0]), p)[0] == pytest.approx(1 / 8, rel=1e-14)


def test_G_value_at_one():
    p = validate_params(coeffs())
    assert float(mp_G(1, 1, coeffs())) == pytest.approx(41 / 32, rel=1e-8)
    assert schrodinger_G(np.array([1.0, 1.0]), p) == pytest.approx(41 / 32, rel=1e-14)


@pytest.mark.parametrize("name", sorted(ALL_SETS))
def test_gradient_matches_finite_differences(name):
    p = validate_params(ALL_SETS[name])
    rng = np.random.default_rng(0)
    x = rng.uniform(0.2, 5.0, size=(1000, 2))
    h = 1e-6
    fd = np.stack([(potential_V(x + h * e, p) - potential_V(x - h * e, p)) / (2 * h)
                   for e in np.eye(2)], axis=-1)
    g = grad_V(x, p)
    assert np.all(np.abs(g - fd) <= 1e-6 * np.maximum(np.abs(g), 1.0))


@pytest.mark.parametrize("name", sorted(ALL_SETS))
def test_G_against_arbitrary_precision(name):
    c = ALL_SETS[name]
    p = validate_params(c)
    for x in [(0.5, 2.0), (1.3, 0.7), (3.0, 3.0)]:
        assert schrodinger_G(np.array(x), p) == pytest.approx(float(mp_G(*x, c)), rel=1e-7)


@pytest.mark.parametrize("name", sorted(ALL_SETS))
def test_gradient_form_identity(name):
    p = validate_params(ALL_SETS[name])
    x = np.random.default_rng(1).uniform(0.05, 6.0, size=(1000, 2))
    assert np.max(np.abs(drift_slvkp(x, p) + grad_V(x, p))) <= 1e-12 * np.max(
        np.abs(grad_V(x, p)))


@pytest.mark.parametrize("name", sorted(ALL_SETS))
def test_mu_density_identity(name):
    p = validate_params(ALL_SETS[name])
    x = np.random.default_rng(2).uniform(0.1, 3.0, size=(500, 2))
    val = mu_density(x, p) * x[:, 0] * x[:, 1] * np.exp(potential_Q(x, p))
    assert np.allclose(val, 1.0, rtol=1e-12, atol=0)


def test_G_equals_gradient_square_minus_laplacian():
    p = validate_params(COOPERATIVE_SETS["gamma2"])
    x = np.random.default_rng(3).uniform(0.1, 4.0, size=(200, 2))
    g = grad_V(x, p)
    assert np.allclose(schrodinger_G(x, p), (g * g).sum(-1) - laplacian_V(x, p), rtol=1e-14)


def test_domain_errors():
    p = validate_params(coeffs())
    for bad in ([0.0, 1.0], [1.0, -1.0], [np.inf, 1.0]):
        with pytest.raises(DomainError):
            potential_V(np.array(bad), p)
    with pytest.raises(DomainError):
        grad_V(np.array([1.0, 2.0, 3.0]), p)


@given(u=pos, v=pos)
def test_swap_symmetry(u, v):
    p = validate_params(COOPERATIVE_SETS["c06"])
    assert potential_V(np.array([u, v]), p) == pytest.approx(potential_V(np.array([v, u]), p),
                                                             rel=1e-13, abs=1e-13)


def test_potential_diverges_along_diagonal():
    for c in [*COOPERATIVE_SETS.values(), *COMPETITION_SETS.values()]:
        p = validate_params(c)
        ray = np.geomspace(3.0, 300.0, 30)
        vals = potential_V(np.stack([ray, ray], -1), p)
        assert np.all(np.diff(vals) > 0) and vals[-1] > 1e6


# -- quartic form --------------------------------------------------------------------

def test_quartic_examples():
    c = coeffs(c12=-0.5, c21=-0.5)
    p = validate_params(c)
    assert quartic_q(1.0, 1.0, p) == pytest.approx(1.0) == quartic_form(1.0, 1.0, c)
    assert quartic_q(0.0, 0.0, p) == 0.0
    # outside weak cooperation the form goes negative
    assert quartic_form(1.0, 1.0, coeffs(c12=-2.0, c21=-2.0)) < 0


@pytest.mark.parametrize("name", sorted(COOPERATIVE_SETS))
def test_quartic_positive_under_weak_cooperation(name):
    p = validate_params(COOPERATIVE_SETS[name])
    u, v = np.meshgrid(np.linspace(1e-3, 10, 300), np.linspace(1e-3, 10, 300))
    assert np.all(quartic_q(u, v, p) > 0)


@given(a=st.floats(-0.999, 0.0, exclude_max=True), u=pos, v=pos)
def test_quartic_positive_property(a, u, v):
    p = validate_params(coeffs(c12=a, c21=a))
    assert quartic_q(u, v, p) > 0


# -- drifts --------------------------------------------------------------------------

def test_h_drift_value():
    p = validate_params(coeffs())
    assert drift_H(1.0, p, 1) == pytest.approx(0.5 - 0.125 - 0.5)


def test_h_drift_bad_axis():
    with pytest.raises(ValueError):
        drift_H(1.0, validate_params(coeffs()), 3)


def test_u_drift_drops_singular_term():
    p = validate_params(COMPETITION_SETS["gamma2"])
    x = np.array([[0.7, 1.9], [2.0, 0.3]])
    assert np.allclose(drift_U(x, p) - drift_slvkp(x, p), 0.5 / x)


def test_z_drift_matches_lotka_volterra():
    p = validate_params(COMPETITION_SETS["gamma2"])
    z = np.array([0.3, 0.8])
    expect = [0.3 * (1 - 0.3 - 1 * 0.8), 0.8 * (1 - 2 * 0.3 - 0.8)]
    assert np.allclose(drift_slvp(z, p), expect)


def test_axis_model_consistency():
    p = validate_params(coeffs(r1=2.0, gamma1=1.5))
    m = AxisModel(p, 1)
    u = np.linspace(0.2, 4, 50)[:, None]
    h = 1e-6
    dV = (m.V(u + h) - m.V(u - h)) / (2 * h)
    assert np.allclose(-dV, m.drift(u)[:, 0], rtol=1e-6)


def test_model_bundle():
    km = KolmogorovModel(validate_params(COMPETITION_SETS["ones"]))
    x = np.array([1.2, 0.4])
    assert np.allclose(km.drift_slvkp(x), -km.grad_V(x))
    assert km.describe()["regime"] == "COMPETITION"
    g, r, C = km.lv_coefficients()
    assert C.shape == (2, 2)


def test_swapped_params():
    p = validate_params(COMPETITION_SETS["gamma2"])
    q = p.swapped()
    x = np.array([0.8, 1.7])
    assert potential_V(x, p) == pytest.approx(potential_V(x[::-1], q))

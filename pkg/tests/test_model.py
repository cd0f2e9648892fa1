import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfplab.grid import PhaseGrid, gaussian_density
from vfplab.model import (ASSUMPTION_IDS, ConfiningPotential, InteractionPotential, check_assumptions,
                          convolve_interaction, double_well, eval_potential, grad_potential,
                          quadratic_interaction)

from oracles import GAUSS_QUARTIC_CONV


@pytest.mark.parametrize("q, want", [(1.0, -0.25), (0.0, 0.0)])
def test_double_well_values(q, want):
    assert eval_potential(double_well(), q) == pytest.approx(want, abs=1e-15)


def test_quadratic_value():
    assert eval_potential(ConfiningPotential((0, 0, 0.5)), 3.0) == 4.5


@pytest.mark.parametrize("q, want", [(1.0, 0.0), (0.0, 0.0), (2.0, 6.0)])
def test_double_well_gradient(q, want):
    assert grad_potential(double_well(), q) == pytest.approx(want, abs=1e-14)


def test_vectorised_evaluation():
    q = np.linspace(-2, 2, 5)
    np.testing.assert_allclose(eval_potential(double_well(), q), q ** 4 / 4 - q ** 2 / 2)


@pytest.mark.parametrize("coeffs", [(1.0,), (0, 0, -1.0), (0, 1, 0, 1.0), (0, 0, 0, 0, 0)])
def test_confining_potential_rejects_bad_polynomials(coeffs):
    with pytest.raises(ValueError):
        ConfiningPotential(coeffs)


even_poly = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=4).map(
    lambda cs: tuple(c for k in cs for c in (k, 0.0)) + (abs(cs[0]) + 0.1,))


@settings(max_examples=50, deadline=None)
@given(even_poly)
def test_gradient_matches_central_difference(coeffs):
    V = ConfiningPotential(coeffs)
    h = 1e-6
    q = np.linspace(-5, 5, 100)
    g = grad_potential(V, q)
    fd = (eval_potential(V, q + h) - eval_potential(V, q - h)) / (2 * h)
    # the difference quotient itself carries roundoff of order |V| eps / h
    scale = 1 + np.abs(g) + np.abs(eval_potential(V, q)) * 1e-10 / h
    assert np.all(np.abs(g - fd) <= 1e-6 * scale)


def test_convolution_quadratic():
    M1, M2 = 0.3, 1.7
    out = convolve_interaction(quadratic_interaction(1.0), [1.0, M1, M2])
    np.testing.assert_allclose(out, [M2 / 2, -M1, 0.5], atol=1e-15)


def test_convolution_gaussian_quartic_oracle():
    F = InteractionPotential((0, 0, 0, 0, 1.0))
    out = convolve_interaction(F, [1.0, 0.0, 1.0, 0.0, 3.0])
    np.testing.assert_allclose(out, GAUSS_QUARTIC_CONV, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=1, max_size=5))
def test_point_mass_reproduces_G(half):
    g = tuple(c for h in half for c in (h, 0.0))[:-1]
    F = InteractionPotential(g)
    M = np.zeros(F.degree + 1)
    M[0] = 1.0
    out = convolve_interaction(F, M)
    np.testing.assert_array_equal(out, np.asarray(F.g_coeffs)[: out.size])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_convolution_is_linear(seed):
    rng = np.random.default_rng(seed)
    F = InteractionPotential((0.1, 0, 0.5, 0, 0.25, 0, 0.01))
    a, b = rng.normal(size=7), rng.normal(size=7)
    s, t = rng.normal(size=2)
    lhs = convolve_interaction(F, s * a + t * b)
    rhs = s * convolve_interaction(F, a) + t * convolve_interaction(F, b)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_convolution_needs_enough_moments():
    with pytest.raises(ValueError, match="needs 5 moments"):
        convolve_interaction(InteractionPotential((0, 0, 0, 0, 1.0)), [1, 0, 1])


def test_benchmark_assumptions_hold():
    rep = check_assumptions(double_well(), quadratic_interaction(1.0))
    assert set(rep.verdicts) == set(ASSUMPTION_IDS)
    for k in ASSUMPTION_IDS[:5]:
        assert rep.verdicts[k].status == "holds", k
    assert rep.verdicts["M-6"].status == "not-checkable"
    assert rep.holds()


def test_quadratic_confinement_fails_quartic_growth_only():
    rep = check_assumptions(ConfiningPotential((0, 0, 0.5)), quadratic_interaction(1.0))
    assert rep.failing() == ["M-3"]


def test_odd_interaction_witness():
    rep = check_assumptions(double_well(), InteractionPotential((0, 0, 0, 1.0)))
    assert rep.verdicts["M-4"].status == "fails"
    assert "3" in rep.verdicts["M-4"].witness


def test_empty_interaction_is_usable_but_flagged():
    F = InteractionPotential(())
    assert F.is_zero
    assert check_assumptions(double_well(), F).verdicts["M-4"].status == "fails"
    np.testing.assert_array_equal(convolve_interaction(F, [1.0]), [0.0])


def test_concave_interaction_has_convexity_witness():
    rep = check_assumptions(double_well(), InteractionPotential((1.0, 0, -1.0, 0, 0.01)))
    assert rep.verdicts["M-5"].status == "fails"


def test_initial_density_conditions():
    rho = gaussian_density(PhaseGrid(n_q=32, n_p=32))
    rep = check_assumptions(double_well(), quadratic_interaction(1.0), rho)
    assert rep.verdicts["M-6"].status == "holds"
    assert rep.verdicts["M-7"].status == "holds"
    assert rep.r == pytest.approx(1.5)


def test_report_roundtrips_to_dict():
    d = check_assumptions(double_well(), quadratic_interaction(1.0)).to_dict()
    assert d["verdicts"]["M-2"]["status"] == "holds"

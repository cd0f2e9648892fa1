import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from vfplab.diagnostics import (dimensional_constant, dissipation, entropy_split, free_energy, interaction_energy,
                                lower_bound, moment_report, write_report)
from vfplab.grid import PhaseDensity, PhaseGrid, density_from_function, entropy_integral, gaussian_density, point_mass
from vfplab.model import ConfiningPotential, InteractionPotential, double_well, quadratic_interaction
from vfplab.stationary import fixed_point

from oracles import DOUBLE_WELL_VMIN, DOUBLE_WELL_VMIN_AT, FULL_PLANE_CD, GAUSSIAN_GIBBS_FREE_ENERGY

HARMONIC = ConfiningPotential((0, 0, 0.5))
NO_F = InteractionPotential(())
V = double_well()


def gibbs(grid, lam=1.0):
    return density_from_function(grid, lambda q, p: np.exp(-(p ** 2 + q ** 2) / (2 * lam)))


def mixture(grid, rng, k_max=4):
    k = rng.integers(1, k_max + 1)
    w = rng.dirichlet(np.ones(k))
    mq, mp = rng.uniform(-3, 3, k), rng.uniform(-3, 3, k)
    vq, vp = rng.uniform(0.05, 2, k), rng.uniform(0.05, 2, k)

    def f(q, p):
        return sum(w[i] * np.exp(-(q - mq[i]) ** 2 / (2 * vq[i]) - (p - mp[i]) ** 2 / (2 * vp[i]))
                   / np.sqrt(vq[i] * vp[i]) for i in range(k))
    return density_from_function(grid, f)


def test_gaussian_gibbs_free_energy():
    rep = free_energy(gibbs(PhaseGrid(n_q=256, n_p=256)), HARMONIC, NO_F, 1.0)
    assert abs(rep.total - GAUSSIAN_GIBBS_FREE_ENERGY) <= 1e-3
    assert rep.interaction == 0.0
    parts = rep.kinetic + rep.confinement + rep.interaction + rep.entropy_term
    assert abs(rep.total - parts) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 3.0))
def test_quadratic_interaction_is_half_variance(seed, alpha):
    rho = mixture(PhaseGrid(n_q=48, n_p=32), np.random.default_rng(seed))
    m = moment_report(rho)
    e = interaction_energy(rho, quadratic_interaction(alpha))
    assert e == pytest.approx(0.5 * alpha * (m["M2_q"] - m["M1_q"] ** 2), rel=1e-10, abs=1e-14)
    assert e >= 0


def test_dissipation_vanishes_on_maxwellian_columns():
    g = PhaseGrid(n_q=64, n_p=128)
    lam = 0.3
    rho = density_from_function(g, lambda q, p: np.exp(-p ** 2 / (2 * lam) - (q - 1) ** 4))
    assert dissipation(rho, lam) <= 1e-14
    shifted = density_from_function(g, lambda q, p: np.exp(-(p - 1) ** 2 / (2 * lam) - q ** 2))
    assert dissipation(shifted, lam) > 0.1
    assert dissipation(shifted, lam, "central") > 0.1


def test_dissipation_of_shifted_gaussian_converges():
    # p rho + lam d_p rho = rho for a unit shift: D = int rho = 1
    lam = 0.5
    errs = []
    for n in (64, 128, 256):
        g = PhaseGrid(n_q=16, n_p=n)
        rho = density_from_function(g, lambda q, p: np.exp(-(p - 1) ** 2 / (2 * lam) - q ** 2))
        errs.append(abs(dissipation(rho, lam) - 1.0))
    assert errs[2] < 1e-2
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


def test_central_stencil_floor_shrinks_at_the_fixed_point():
    lam = 1.0
    vals = []
    for n in (64, 128):
        g = PhaseGrid(n_q=n, n_p=n)
        br = fixed_point(gaussian_density(g), V, quadratic_interaction(1.0), lam, tol=1e-12)
        vals.append(dissipation(br.density, lam, "central"))
        assert dissipation(br.density, lam) <= 1e-12
    assert np.log2(vals[0] / vals[1]) >= 1


def test_dissipation_rejects_unknown_stencil():
    with pytest.raises(ValueError):
        dissipation(gibbs(PhaseGrid(n_q=16, n_p=16)), 1.0, "spectral")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_entropy_split_reassembles(seed):
    rho = mixture(PhaseGrid(n_q=40, n_p=40), np.random.default_rng(seed))
    s = entropy_split(rho)
    assert abs(s.total - entropy_integral(rho)) <= 1e-12
    assert s.I_minus >= s.gamma_bound - 1e-15


def test_entropy_split_empty_regions():
    g = PhaseGrid(n_q=16, n_p=16)
    tiny = PhaseDensity(g, np.full(g.shape, 1e-8))     # below exp(-|x|) on the whole box
    assert entropy_split(tiny).I_plus == 0.0
    tall = point_mass(g, 8, 8)
    s = entropy_split(tall)
    assert s.I_plus == 0.0 and s.I_minus == 0.0 and s.I_ge1 > 0


def test_dimensional_constant_converges_to_full_plane():
    cd = dimensional_constant(PhaseGrid(-60, 60, -60, 60, 600, 600))
    assert cd == pytest.approx(FULL_PLANE_CD, rel=1e-3)
    val, _ = integrate.dblquad(lambda p, q: np.exp(-np.hypot(q, p) / 2), -80, 80, -80, 80, epsabs=1e-10)
    assert -(2 / np.e) * val == pytest.approx(FULL_PLANE_CD, rel=1e-6)


def test_double_well_v_min():
    rep = lower_bound(V, 0.3, PhaseGrid(n_q=128, n_p=128))
    assert rep.v_min == pytest.approx(DOUBLE_WELL_VMIN, abs=1e-12)
    assert abs(rep.v_min_at) == pytest.approx(DOUBLE_WELL_VMIN_AT, abs=1e-9)
    assert rep.Xi <= rep.C_prime + rep.v_min
    assert rep.C_d_full_plane == pytest.approx(FULL_PLANE_CD)


def test_convex_v_min_is_at_the_box_edge():
    rep = lower_bound(ConfiningPotential((0, 0, 0.1)), 1.0, PhaseGrid(n_q=32, n_p=32))
    assert abs(rep.v_min_at) == pytest.approx(6.0)
    assert rep.v_min == pytest.approx(-0.4 * 36)


@pytest.mark.parametrize("lam", [0.05, 0.3, 1.0])
def test_free_energy_is_above_xi_for_random_mixtures(lam):
    g = PhaseGrid(n_q=96, n_p=96)
    xi = lower_bound(V, lam, g).Xi
    F = quadratic_interaction(1.0)
    rng = np.random.default_rng(int(lam * 1000))
    for _ in range(100):
        assert free_energy(mixture(g, rng), V, F, lam).total >= xi


def test_moment_report_examples():
    g = PhaseGrid(n_q=33, n_p=33)
    m = moment_report(point_mass(g, 16, 16))
    assert m["M2_q"] == 0.0 and m["M2_p"] == 0.0 and m["boundary_mass"] == 0.0
    sym = moment_report(gaussian_density(PhaseGrid(n_q=64, n_p=64), 0, 1.3, 0, 0.4))
    assert abs(sym["M1_q"]) <= 1e-10 and abs(sym["M1_p"]) <= 1e-10
    assert set(sym) == {"M1_q", "M2_q", "M4_q", "M1_p", "M2_p", "boundary_mass"}


def test_write_report(tmp_path):
    g = PhaseGrid(n_q=32, n_p=32)
    rep = free_energy(gibbs(g), HARMONIC, NO_F, 1.0)
    write_report(tmp_path / "r.txt", free_energy=rep, bound=lower_bound(HARMONIC, 1.0, g),
                 moments=moment_report(gibbs(g)))
    lines = (tmp_path / "r.txt").read_text().splitlines()
    keys = dict(line.split(" = ", 1) for line in lines)
    assert float(keys["free_energy.total"]) == rep.total
    assert "bound.Xi" in keys and "moments.M2_q" in keys

import warnings

import numpy as np
import pytest

from twosex_ebt.config import Profile, product_density
from twosex_ebt.errors import ConfigurationError, InputError
from twosex_ebt.model import constant, marriage_rate, preset
from twosex_ebt.reference import (DensityGrid1D, DensityGrid2D, ReferenceWarning,
                                  read_density_csv, solve_scalar, solve_two_sex,
                                  write_density_csv)
from twosex_ebt.scalar_ebt import ScalarCoefficients, scalar_preset

from conftest import unit_coefficients

BUMP = Profile.parse("polynomial_bump lo=0.0 hi=0.5 height=2.0")
GAUSS = Profile.parse("truncated_gaussian mean=0.5 sigma=0.1 lo=0.0 hi=1.0 height=1.0")
COUPLES = product_density(BUMP, BUMP, 0.1)
H = 1.0 / 128


def two_sex(coeffs, t_end=1.0, h=H, x_max=1.6, **kw):
    return solve_two_sex(BUMP, BUMP, COUPLES, coeffs, t_end, h, h, x_max, **kw)


def test_pure_transport_is_exact_on_the_lattice():
    g = two_sex(unit_coefficients(theta=0.0), t_end=0.5)
    x = np.arange(0, 1.6 + H / 2, H)
    np.testing.assert_allclose(g.male(x), BUMP(x - 0.5), rtol=0, atol=1e-14)
    np.testing.assert_allclose(g.couples.values, COUPLES(x[:, None] - 0.5, x[None, :] - 0.5),
                               rtol=0, atol=1e-14)


def test_constant_death_rate_matches_exact_decay():
    c = 0.7
    g = two_sex(unit_coefficients(c=c, cc=c, theta=0.0))
    x = np.arange(0, 1.6 + H / 2, H)
    exact = BUMP(x - 1.0) * np.exp(-c)
    err = np.max(np.abs(g.male(x) - exact))
    # Heun on u' = -c u: local error c^3 dt^3 / 6 per step
    assert err <= 2 * np.max(BUMP(x)) * c**3 * H**2 / 6
    assert err > 0


def test_couple_mass_decays_exponentially_without_marriage():
    c = 0.4
    g0 = two_sex(unit_coefficients(cc=c, theta=0.0), t_end=0.0)
    g1 = two_sex(unit_coefficients(cc=c, theta=0.0), t_end=1.0)
    assert g1.couples.total_mass() == pytest.approx(g0.couples.total_mass() * np.exp(-c),
                                                    rel=1e-6)


def test_births_enter_at_age_zero():
    beta = 0.5
    g = two_sex(unit_coefficients(beta=beta, theta=0.0), t_end=0.25)
    couples = g.couples.total_mass()
    assert g.male(np.array([0.0]))[0] == pytest.approx(beta * couples, rel=1e-12)
    # the newborn piece spans ages [0, t]
    born_x, _ = g.male.segments[0]
    assert born_x[0] == 0.0 and born_x[-1] == pytest.approx(0.25, abs=1e-14)


def test_marriage_source_matches_pointwise_rate():
    """One reference step against the marriage rate evaluated by quadrature."""
    coeffs = unit_coefficients(cc=0.2)
    g0 = two_sex(coeffs, t_end=0.0)
    g1 = two_sex(coeffs, t_end=H)
    # a node that stays inside the bump support after one step
    i = j = int(round(0.25 / H))
    x = y = i * H

    def uc(p, q):
        return np.asarray(COUPLES(p, q))

    rate = marriage_rate(0.0, x - H, y - H, BUMP, BUMP, uc, coeffs, 1.6, nodes=int(1.6 / H) + 1)
    d = g1.couples.values[i, j] - g0.couples.values[i - 1, j - 1] * np.exp(-0.2 * H)
    assert d / H == pytest.approx(rate, rel=0.05)


def test_snapshot_list():
    grids = two_sex(preset("constant"), t_end=0.5, snapshot_times=[0.0, 0.25, 0.5])
    assert [g.t for g in grids] == [0.0, 0.25, 0.5]
    assert all("min_denominator" in g.meta for g in grids)


def test_unmarried_counts_stay_nonnegative_on_test_problem():
    g = two_sex(preset("late-marriage"))
    assert g.meta["min_unmarried"] >= -1e-12
    assert g.meta["min_denominator"] >= 1.0


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        solve_two_sex(BUMP, BUMP, COUPLES, preset("constant"), 1.0, 0.01, 0.02, 1.6)
    with pytest.raises(ConfigurationError):
        solve_two_sex(BUMP, BUMP, COUPLES, preset("constant"), 1.0, 0.3, 0.3, 1.6)
    with pytest.raises(ConfigurationError):
        solve_scalar(GAUSS, scalar_preset("renewal"), 1.0, 0.01, 0.02, 2.0)

    def neg(x):
        return -np.ones_like(np.asarray(x, float))

    with pytest.raises(InputError):
        solve_two_sex(neg, BUMP, COUPLES, preset("constant"), 1.0, H, H, 1.6)


def test_mass_leaving_domain_warns():
    with pytest.warns(ReferenceWarning):
        solve_two_sex(BUMP, BUMP, COUPLES, preset("zero-vital").without_marriage(), 1.0, H, H,
                      1.0)


# -- scalar -------------------------------------------------------------------------

def test_scalar_transport_translation():
    g = solve_scalar(GAUSS, scalar_preset("transport"), 0.5, 1 / 256, 1 / 256, 1.5)
    x = 0.5 + np.arange(0, 257, 16) / 256
    np.testing.assert_allclose(g(x), GAUSS(x - 0.5), rtol=0, atol=1e-13)


def test_scalar_renewal_mass_growth():
    B = 0.6
    co = ScalarCoefficients(b=constant(1.0), db=constant(0.0), c=constant(0.0),
                            dc=constant(0.0), beta=constant(B))
    m0 = solve_scalar(GAUSS, co, 0.0, 1 / 512, 1 / 512, 2.5).total_mass()
    m1 = solve_scalar(GAUSS, co, 1.0, 1 / 512, 1 / 512, 2.5).total_mass()
    assert m1 == pytest.approx(m0 * np.exp(B), rel=1e-5)


def test_scalar_renewal_reference_is_second_order():
    co = scalar_preset("renewal")
    exact = solve_scalar(GAUSS, co, 1.0, 1 / 2048, 1 / 2048, 2.5).total_mass()
    e1 = abs(solve_scalar(GAUSS, co, 1.0, 1 / 128, 1 / 128, 2.5).total_mass() - exact)
    e2 = abs(solve_scalar(GAUSS, co, 1.0, 1 / 256, 1 / 256, 2.5).total_mass() - exact)
    assert e1 / e2 > 3.0


def test_scalar_stretching_growth_conserves_mass():
    def b(t, x):
        return 1.0 + np.asarray(x, float) + 0 * t

    co = ScalarCoefficients(b=b, db=constant(1.0), c=constant(0.0), dc=constant(0.0),
                            beta=constant(0.0))
    g0 = solve_scalar(GAUSS, co, 0.0, 1 / 1024, 1 / 1024, 1.0)
    with pytest.warns(ReferenceWarning):
        # particles are traced past the seeding bound, never dropped
        g1 = solve_scalar(GAUSS, co, 1.0, 1 / 1024, 1 / 1024, 1.0)
    assert g1.total_mass() == pytest.approx(g0.total_mass(), abs=1e-8)
    # support [0, 1] stretched along x(t) = (x0 + 1) e^t - 1
    assert g1(np.array([(0.5 + 1) * np.e - 1]))[0] == pytest.approx(1.0 / np.e, rel=1e-6)


# -- grids and serialisation --------------------------------------------------------

def test_density_grid_moments():
    g = DensityGrid1D([(np.array([0.0, 1.0]), np.array([0.0, 2.0]))])
    assert g.total_mass() == pytest.approx(1.0)
    assert g.first_moment() == pytest.approx(2.0 / 3.0)
    assert g(np.array([0.5, 1.5]))[0] == 1.0
    with pytest.raises(InputError):
        DensityGrid1D([(np.array([1.0, 0.0]), np.array([0.0, 2.0]))])
    with pytest.raises(InputError):
        DensityGrid2D(np.arange(3.0), np.arange(2.0), np.zeros((2, 2)))


def test_csv_round_trip(tmp_path):
    g = two_sex(preset("constant"), t_end=0.25, h=1 / 32)
    write_density_csv(g.male, tmp_path / "m.csv")
    write_density_csv(g.couples, tmp_path / "c.csv")
    m = read_density_csv(tmp_path / "m.csv")
    c = read_density_csv(tmp_path / "c.csv")
    assert len(m.segments) == len(g.male.segments)
    for (x, u), (x2, u2) in zip(m.segments, g.male.segments):
        np.testing.assert_array_equal(x, x2)
        np.testing.assert_array_equal(u, u2)
    np.testing.assert_array_equal(c.values, g.couples.values)
    assert m.t == 0.25


def test_no_warning_on_well_posed_problem():
    with warnings.catch_warnings():
        warnings.simplefilter("error", ReferenceWarning)
        two_sex(preset("late-marriage"))

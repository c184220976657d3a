import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twosex_ebt.config import ExperimentConfig, Profile, load, parse, serialize
from twosex_ebt.errors import ConfigurationError
from twosex_ebt.flat_metric import MetricConfig

BUMP = Profile.parse("polynomial_bump lo=0.0 hi=0.5 height=2.0")


def two_sex(**kw):
    base = dict(name="t", model="two-sex", preset="late-marriage", t_end=1.0,
                widths=(0.1, 0.05, 0.025), support=0.5, x_max=1.6, male=BUMP, female=BUMP,
                couple_x=BUMP, couple_y=BUMP, couple_scale=0.3)
    base.update(kw)
    return ExperimentConfig(**base)


finite = st.floats(min_value=1e-6, max_value=1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(scale=finite, frac=st.floats(0.0, 1.0), h_ref=st.floats(1e-5, 1e-2),
       substeps=st.integers(1, 50), height=finite, cone=st.booleans(),
       nb=st.integers(1, 40), fine=st.integers(0, 5),
       tol=st.floats(1e-15, 1e-7, exclude_min=False),
       bound=st.one_of(st.none(), finite))
def test_round_trip_is_bit_exact(scale, frac, h_ref, substeps, height, cone, nb, fine, tol,
                                 bound):
    prof = Profile("smooth_bump", (("center", 0.25), ("radius", 0.2), ("height", height)))
    cfg = two_sex(couple_scale=scale, budget_fraction=frac, h_ref=h_ref, dt_ref=h_ref / 3,
                  substeps=substeps, female=prof, cone_check=cone,
                  metric=MetricConfig(neighbours=nb, fine_neighbours=fine, lp_tolerance=tol,
                                      domain_bound=bound))
    back = parse(serialize(cfg))
    assert back == cfg
    assert serialize(back) == serialize(cfg)


def test_shipped_configs_load_and_round_trip():
    for path in ("configs/scalar_renewal.ini", "configs/two_sex_late_marriage.ini"):
        cfg = load(path)
        assert parse(serialize(cfg)) == cfg


def test_scalar_config_without_other_profiles():
    cfg = ExperimentConfig(name="s", model="scalar", preset="renewal", t_end=1.0,
                           widths=(0.1, 0.05, 0.025), support=1.0, x_max=2.0, male=BUMP)
    assert parse(serialize(cfg)) == cfg


@pytest.mark.parametrize("kw", [
    dict(model="three-sex"),
    dict(preset="renewal"),
    dict(widths=(0.1, 0.05)),
    dict(widths=(0.05, 0.1, 0.025)),
    dict(widths=(0.1, 0.03, 0.025)),
    dict(t_end=0.33),
    dict(x_max=1.0),
    dict(female=None),
    dict(snapshots="some"),
    dict(dt_ref=0.1, h_ref=0.01),
])
def test_validation_errors(kw):
    with pytest.raises(ConfigurationError):
        two_sex(**kw)


def test_missing_and_malformed_fields():
    text = serialize(two_sex())
    with pytest.raises(ConfigurationError, match="missing"):
        parse(text.replace("preset = late-marriage\n", ""))
    with pytest.raises(ConfigurationError, match="substeps"):
        parse(text.replace("substeps = 4", "substeps = four"))
    with pytest.raises(ConfigurationError, match="cone_check"):
        parse(text.replace("cone_check = true", "cone_check = maybe"))
    with pytest.raises(ConfigurationError):
        parse("not an ini file")


@pytest.mark.parametrize("text", ["", "nosuch lo=0", "uniform lo", "uniform lo=abc"])
def test_profile_parse_errors(text):
    with pytest.raises(ConfigurationError):
        Profile.parse(text)


def test_profile_bad_parameter_name():
    with pytest.raises(ConfigurationError):
        Profile.parse("uniform centre=0.3")(np.array([0.1]))


def test_profiles_evaluate():
    x = np.array([-0.1, 0.0, 0.25, 0.5, 0.6])
    np.testing.assert_allclose(BUMP(x), [0.0, 0.0, 2.0, 0.0, 0.0])
    u = Profile.parse("uniform lo=0.0 hi=0.5 height=3.0")
    np.testing.assert_array_equal(u(x), [0.0, 3.0, 3.0, 0.0, 0.0])
    g = Profile.parse("truncated_gaussian mean=0.25 sigma=0.1 lo=0.0 hi=0.5")
    assert g(np.array([0.25]))[0] == 1.0 and g(np.array([0.6]))[0] == 0.0
    assert Profile.parse("zero")(x).sum() == 0.0
    assert two_sex().couple_density()(0.25, 0.25) == pytest.approx(0.3 * 4.0)

import numpy as np
import pytest
from scipy.integrate import simpson

from twosex_ebt.cohorts import (AtomicMeasure1D, AtomicMeasure2D, cull, extract_measures,
                                init_state, internalize, project, read_snapshot_1d,
                                state_tuples, write_snapshot)
from twosex_ebt.errors import DimensionError, InputError, SupportViolationError

from conftest import make_state, random_state


def unit(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), 1.0, 0.0)


def ramp(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), x, 0.0)


def zero1(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def zero2(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def test_init_uniform_single_cell():
    s = init_state(unit, unit, zero2, [0.0, 1.0])
    assert s.K == 2
    assert s.male_mass[1] == pytest.approx(1.0, abs=1e-14)
    assert s.male_loc[1] == pytest.approx(0.5, abs=1e-14)
    assert s.male_mass[0] == 0 and s.male_pi == 0


def test_init_zero_density_uses_midpoints():
    mesh = [0.0, 0.25, 1.0, 2.0]
    s = init_state(zero1, zero1, zero2, mesh)
    assert np.all(s.male_mass == 0) and np.all(s.couple_mass == 0)
    np.testing.assert_allclose(s.male_loc[1:], [0.125, 0.625, 1.5])
    np.testing.assert_allclose(s.female_loc[1:], [0.125, 0.625, 1.5])


def test_init_ramp_against_simpson_oracle():
    s = init_state(ramp, ramp, zero2, [0.0, 1.0])
    z = np.linspace(0.0, 1.0, 2049)
    mass = simpson(z, x=z)
    moment = simpson(z * z, x=z)
    assert s.male_mass[1] == pytest.approx(mass, abs=1e-10)
    assert s.male_loc[1] == pytest.approx(moment / mass, abs=1e-10)
    assert s.male_loc[1] == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_init_couple_moments():
    def uc(x, y):
        return unit(x) * ramp(y)

    s = init_state(unit, unit, uc, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(s.couple_mass[1:, 1:].sum(), 0.5, atol=1e-14)
    x, y = s.couple_locations()
    # cell [0.5, 1] x [0.5, 1]: x-centre 0.75, y = (int y^2) / (int y) over [0.5, 1]
    assert x[2, 2] == pytest.approx(0.75, abs=1e-13)
    assert y[2, 2] == pytest.approx((7 / 24) / (3 / 8), abs=1e-13)
    assert np.all(s.couple_mass[0, :] == 0) and np.all(s.couple_mass[:, 0] == 0)


def test_init_rejects_mass_beyond_mesh():
    def wide(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 2.0, 1.0, 0.0)

    with pytest.raises(SupportViolationError):
        init_state(wide, unit, zero2, [0.0, 1.0])

    def wide2(x, y):
        return unit(x) * wide(y)

    with pytest.raises(SupportViolationError):
        init_state(unit, unit, wide2, [0.0, 1.0])


def test_init_rejects_negative_and_bad_mesh():
    def neg(x):
        return -unit(x)

    with pytest.raises(InputError):
        init_state(neg, unit, zero2, [0.0, 1.0])
    with pytest.raises(InputError):
        init_state(unit, unit, zero2, [0.1, 1.0])
    with pytest.raises(InputError):
        init_state(unit, unit, zero2, [0.0, 1.0, 1.0])


def test_internalize_counts_and_boundary_promotion():
    s = make_state([(1.0, 0.5), (1.0, 1.5)], [(1.0, 0.4), (2.0, 1.4)],
                   male_boundary=(2.0, 1.0), female_boundary=(0.0, 0.0), t=0.1)
    s2 = internalize(s, 0.1)
    assert s2.K == s.K + 1
    assert s2.couple_mass.shape == (s.K + 1, s.K + 1)
    assert s2.n == s.n + 1 and s2.B == s.B - 1
    # promoted boundary cohorts: m = 2, Pi = 1 -> 0.5; m = 0 -> location 0
    assert s2.male_mass[1] == 2.0 and s2.male_loc[1] == 0.5
    assert s2.female_mass[1] == 0.0 and s2.female_loc[1] == 0.0
    assert s2.male_mass[0] == 0 and s2.male_pi == 0
    assert np.all(s2.couple_mass[0, :] == 0) and np.all(s2.couple_mass[:, 0] == 0)


def test_internalize_preserves_masses_bitwise(rng):
    s = random_state(rng, 6)
    s2 = internalize(s, 0.0)
    # entries are carried over untouched, so totals agree up to summation order
    np.testing.assert_array_equal(s2.male_mass[1:], s.male_mass)
    np.testing.assert_array_equal(s2.female_mass[1:], s.female_mass)
    np.testing.assert_array_equal(s2.couple_mass[1:, 1:], s.couple_mass)
    assert s2.male_mass[0] == 0 and s2.female_mass[0] == 0
    np.testing.assert_array_equal(s2.couple_xbar[1:, 1:], s.couple_xbar)


def test_internalize_keeps_ordering(rng):
    s = random_state(rng, 5)
    s2 = internalize(s, 0.0)
    assert np.all(np.diff(s2.male_loc[1:]) > 0)
    assert np.all(np.diff(s2.female_loc[1:]) > 0)


def test_extract_measures_direct_mapping():
    s = make_state([(1.0, 0.3), (2.0, 1.3)], [(0.0, 0.5), (0.0, 1.5)])
    male, female, couples = extract_measures(s)
    np.testing.assert_array_equal(male.locations, [0.3, 1.3])
    np.testing.assert_array_equal(male.weights, [1.0, 2.0])
    assert len(female) == 0 and len(couples) == 0


def test_extract_measures_places_boundary_at_recovered_location():
    s = make_state([(1.0, 0.3)], [(1.0, 0.3)], male_boundary=(0.5, 0.01))
    male, _, _ = extract_measures(s)
    assert male.locations[0] == pytest.approx(0.02)


def test_all_zero_masses_give_empty_measures():
    s = make_state([(0.0, 0.3)], [(0.0, 0.3)])
    assert all(len(m) == 0 for m in extract_measures(s))


def test_projection_inverts_extraction(rng):
    for _ in range(10):
        s = random_state(rng, int(rng.integers(2, 7)), empty_boundary=bool(rng.integers(2)))
        t = project(extract_measures(s), s.K)
        ref = state_tuples(s)
        for a, b in zip(t, ref):
            np.testing.assert_array_equal(a, b)


def test_project_unlabelled_and_errors():
    empty1 = AtomicMeasure1D([], [])
    empty2 = AtomicMeasure2D(np.empty((0, 2)), [])
    t = project((empty1, empty1, empty2), 0)
    assert t.male.shape == (0, 2) and t.couples.shape == (0, 0, 3)
    with pytest.raises(DimensionError):
        project((AtomicMeasure1D([1.0], [1.0]), empty1, empty2), 2)
    m = AtomicMeasure1D([0.0, 1.0], [0.0, 2.0])
    c = AtomicMeasure2D(np.zeros((4, 2)), np.ones(4))
    t = project((m, m, c), 2)
    np.testing.assert_array_equal(t.male, [[0.0, 0.0], [1.0, 2.0]])
    bad = AtomicMeasure1D([1.0], [1.0], index=np.array([5]))
    with pytest.raises(DimensionError):
        project((bad, m, c), 2)


def test_pack_unpack_round_trip(rng):
    s = random_state(rng, 4)
    s2 = s.unpack(s.pack(), s.t)
    np.testing.assert_array_equal(s2.pack(), s.pack())
    np.testing.assert_array_equal(s2.male_locations(), s.male_locations())
    with pytest.raises(DimensionError):
        s.unpack(np.zeros(3), 0.0)


def test_snapshot_round_trip(tmp_path, rng):
    s = random_state(rng, 4)
    paths = write_snapshot(s, tmp_path, "snap")
    assert [p.name for p in paths] == ["snap_male.csv", "snap_female.csv", "snap_couples.csv"]
    back = read_snapshot_1d(paths[0])
    np.testing.assert_array_equal(back["mass"], s.male_mass)
    np.testing.assert_array_equal(back["location"], s.male_locations())
    assert back["moment"][0] == s.male_pi


def test_cull_drops_only_old_empty_cohorts():
    s = make_state([(0.0, 5.0), (1.0, 6.0)], [(0.0, 5.0), (1.0, 6.0)])
    out = cull(s, 4.0)
    assert out.K == s.K - 1
    assert out.meta["culled"] == 1
    assert cull(s, 10.0) is s

import numpy as np
import pytest

from twosex_ebt.cohorts import PopulationState
from twosex_ebt.model import Coefficients, constant


def make_state(male=(), female=(), couples=None, male_boundary=(0.0, 0.0),
               female_boundary=(0.0, 0.0), t=0.0, x_max=4.0):
    """Build a state by hand.

    ``male``/``female`` list internal cohorts as (mass, location); the
    boundary cohorts are (mass, pi).  ``couples`` maps (i, j) in packed index
    space (0 = boundary) to (mass, x, y) with locations, not moments.
    """
    K = max(len(male), len(female)) + 1
    if len(male) != len(female):
        raise ValueError("pad male and female to the same length")
    mm = np.zeros(K)
    ml = np.zeros(K)
    fm = np.zeros(K)
    fl = np.zeros(K)
    mm[0], mpi = male_boundary
    fm[0], fpi = female_boundary
    for k, (m, x) in enumerate(male, start=1):
        mm[k], ml[k] = m, x
    for k, (m, y) in enumerate(female, start=1):
        fm[k], fl[k] = m, y
    cm = np.zeros((K, K))
    cx = np.zeros((K, K))
    cy = np.zeros((K, K))
    for (i, j), (m, x, y) in (couples or {}).items():
        cm[i, j], cx[i, j], cy[i, j] = m, m * x, m * y
    s = PopulationState(t=t, n=0, B=0, J=K - 1, male_mass=mm, male_loc=ml, male_pi=mpi,
                        female_mass=fm, female_loc=fl, female_pi=fpi,
                        couple_mass=cm, couple_xbar=cx, couple_ybar=cy,
                        male_edge=np.arange(K, dtype=float), female_edge=np.arange(K, dtype=float),
                        x_max=x_max)
    s.male_loc[0] = s.male_locations()[0]
    s.female_loc[0] = s.female_locations()[0]
    return s


def random_state(rng, K, couple_fraction=0.1, empty_boundary=False):
    """State with K - 1 internal cohorts per sex, singles dominating couples."""
    n = K - 1
    xm = np.sort(rng.uniform(0.1, 3.0, n))
    yf = np.sort(rng.uniform(0.1, 3.0, n))
    mm = rng.uniform(0.5, 2.0, n)
    mf = rng.uniform(0.5, 2.0, n)
    couples = {}
    for i in range(1, K):
        for j in range(1, K):
            m = couple_fraction * min(mm[i - 1], mf[j - 1]) * rng.uniform(0.1, 1.0) / K
            couples[(i, j)] = (m, xm[i - 1] + rng.uniform(-0.05, 0.05),
                               yf[j - 1] + rng.uniform(-0.05, 0.05))
    mb = (0.0, 0.0) if empty_boundary else (0.3, 0.3 * 0.02)
    fb = (0.0, 0.0) if empty_boundary else (0.2, 0.2 * 0.03)
    return make_state(list(zip(mm, xm)), list(zip(mf, yf)), couples, mb, fb)


def unit_coefficients(theta=1.0, c=0.0, beta=0.0, cc=0.0, gamma=1.0):
    """Theta = h = g = 1 style coefficients built from constants."""
    zero, one = constant(0.0), constant(1.0)
    th = constant(theta)
    return Coefficients(c_m=constant(c), c_f=constant(c), c_c=constant(cc),
                        beta_m=constant(beta), beta_f=constant(beta), theta=th, h=one, g=one,
                        gamma=gamma, dx_c_m=zero, dy_c_f=zero, theta_factors=(th, one))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

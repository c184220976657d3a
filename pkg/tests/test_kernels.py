import os
import subprocess
import sys

import numpy as np
import pytest

from twosex_ebt import _kernels


def brute_row4(theta, hc, xc, gc, yc):
    nw, nv, nj = theta.shape
    out = np.zeros((3, nj))
    for j in range(nj):
        for w in range(nw):
            for v in range(nv):
                t = theta[w, v, j] * hc[w] * gc[v, j]
                out[:, j] += t * np.array([1.0, xc[w], yc[v, j]])
    return out


def test_row_contract4_backends_agree(rng):
    theta = rng.uniform(size=(5, 6, 7))
    hc, xc = rng.uniform(size=5), rng.uniform(size=5)
    hc[2] = 0.0
    gc, yc = rng.uniform(size=(6, 7)), rng.uniform(size=(6, 7))
    expect = brute_row4(theta, hc, xc, gc, yc)
    for fn in (_kernels.row_contract4_numpy, _kernels.row_contract4_numba):
        np.testing.assert_allclose(np.array(fn(theta, hc, xc, gc, yc)), expect, rtol=1e-13)


def test_couple_rhs_backends_agree(rng):
    nx, ny = 9, 7
    args = (rng.uniform(size=(nx, ny)), rng.uniform(size=(nx, ny)), rng.uniform(size=(nx, ny)),
            rng.uniform(size=nx), rng.uniform(size=ny), 5 + rng.uniform(size=nx),
            5 + rng.uniform(size=ny), np.full(nx, 0.1), np.full(ny, 0.1), 1.0)
    a, da = _kernels.couple_rhs_numpy(*args)
    b, db = _kernels.couple_rhs_numba(*args)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
    assert da == pytest.approx(db, rel=1e-14)
    # denominator by hand
    uc, _, _, hx, gy, um, uf, wx, wy, gamma = args
    manual = gamma + sum(wx[i] * hx[i] * (um[i] - uc[i] @ wy) for i in range(nx)) \
        + sum(wy[j] * gy[j] * (uf[j] - wx @ uc[:, j]) for j in range(ny))
    assert da == pytest.approx(manual, rel=1e-13)


def test_l1_envelope_backends_agree(rng):
    pts = rng.uniform(0, 3, size=(40, 2))
    ctr = rng.uniform(0, 3, size=(15, 2))
    vals = rng.uniform(-1, 1, size=15)
    d = np.abs(pts[:, None, :] - ctr[None, :, :]).sum(-1)
    raw = vals[None, :] - d
    expect = np.maximum(raw.max(1), -1.0)
    for fn in (_kernels.l1_envelope_numpy, _kernels.l1_envelope_numba):
        f, arg = fn(pts, ctr, vals, -1.0)
        np.testing.assert_allclose(f, expect, rtol=0, atol=1e-15)
        hit = arg >= 0
        np.testing.assert_array_equal(arg[hit], raw.argmax(1)[hit])
        assert np.all(f[~hit] == -1.0)


def test_env_flag_selects_numpy():
    code = "from twosex_ebt import _kernels; print(_kernels.backend())"
    for flag, name in (("0", "numpy"), ("1", "numba")):
        env = dict(os.environ, TWOSEX_EBT_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        assert out.stdout.strip() == name


def test_end_to_end_runs_match_across_backends():
    code = """
import numpy as np
from twosex_ebt.cohorts import init_state
from twosex_ebt.config import Profile, product_density
from twosex_ebt.integrator import IntegratorConfig, run
from twosex_ebt.model import preset
b = Profile.parse("polynomial_bump lo=0.0 hi=0.5 height=2.0")
s = init_state(b, b, product_density(b, b, 0.3), np.linspace(0, 0.5, 5))
s.x_max = 1.0
f = run(s, preset("late-marriage"), IntegratorConfig(dt_internalization=0.125, t_end=0.5,
        general_theta=True))[-1]
print(repr(f.pack().tolist()))
"""
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, TWOSEX_EBT_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        outs.append(np.array(eval(res.stdout)))
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-15)

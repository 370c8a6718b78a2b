import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qkernel import _pykernels as py

ck = pytest.importorskip("qkernel._ckernels", reason="compiled kernels not built")


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(4, 200), st.integers(0, 2 ** 32 - 1))
def test_linear_bin_matches(n_pts, n_bins, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, n_bins + 0.5, n_pts) * 0.1
    a = ck.linear_bin(x, 0.0, 0.1, n_bins)
    b = py.linear_bin(x, 0.0, 0.1, n_bins)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_linear_bin_conserves_inside_mass():
    x = np.linspace(0.0, 9.0, 1001)
    for mod in (ck, py):
        assert mod.linear_bin(x, 0.0, 1.0, 10).sum() == pytest.approx(1001)


def test_interp_matches():
    rng = np.random.default_rng(1)
    vals = rng.random(50)
    x = rng.uniform(-1, 6, 1000)
    assert np.allclose(ck.interp_uniform(vals, 0.0, 0.1, x), py.interp_uniform(vals, 0.0, 0.1, x),
                       rtol=1e-13, atol=1e-15)


def test_mckean_step_matches():
    rng = np.random.default_rng(2)
    ratio = 0.5 + rng.random(64)
    x0 = rng.uniform(-0.2, 6.6, 2000)
    z = rng.standard_normal(2000)
    xa, xb = x0.copy(), x0.copy()
    oa = ck.mckean_step(xa, ratio, 0.0, 0.1, z, 0.05)
    ob = py.mckean_step(xb, ratio, 0.0, 0.1, z, 0.05)
    assert oa == ob > 0
    assert np.allclose(xa, xb, rtol=1e-13, atol=1e-15)


def test_particle_method_backends_agree():
    code = ("from qkernel.geometry import triangular_blur;"
            "from qkernel.simulate import ParticleConfig, run_particle_method;"
            "e = run_particle_method(triangular_blur(0.01), 0.2, 1/252, ParticleConfig(2000, 10), seed=3);"
            "print(e.meta['backend']); print(repr(float(e.samples.sum()))); print(repr(float(e.samples.var())))")
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, QKERNEL_PURE_PYTHON=flag)
        proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
        outs[flag] = proc.stdout.split()
    assert outs["0"][0] == "cython" and outs["1"][0] == "python"
    assert float(outs["0"][1]) == pytest.approx(float(outs["1"][1]), abs=1e-10)
    assert float(outs["0"][2]) == pytest.approx(float(outs["1"][2]), rel=1e-10)

import os
import subprocess
import sys

import numpy as np
import pytest

from sweepkit import _kernels as k

needs_numba = pytest.mark.skipif(not k.HAVE_NUMBA, reason="numba not installed")


def random_image(seed, h, w, c=3):
    return np.random.default_rng(seed).integers(0, 256, (h, w, c), dtype=np.uint8)


@needs_numba
@pytest.mark.parametrize("kernel", [3, 5, 7])
@pytest.mark.parametrize("shape", [(16, 16, 1), (9, 23, 3), (2, 2, 3), (1, 5, 1)])
def test_median_parity(kernel, shape):
    img = random_image(kernel, *shape)
    assert np.array_equal(k.median_numba(img, kernel), k.median_numpy(img, kernel))


@needs_numba
def test_bilinear_parity():
    from sweepkit.imgcore import _bilinear_axis

    img = random_image(1, 13, 17)
    for nh, nw in [(5, 9), (26, 40), (13, 3)]:
        y0, y1, wy = _bilinear_axis(13, nh)
        x0, x1, wx = _bilinear_axis(17, nw)
        assert np.array_equal(k.bilinear_numba(img, y0, y1, wy, x0, x1, wx),
                              k.bilinear_numpy(img, y0, y1, wy, x0, x1, wx))


@needs_numba
def test_gather_parity():
    img = random_image(2, 8, 8)
    rng = np.random.default_rng(0)
    r = rng.integers(-3, 11, (8, 8))
    c = rng.integers(-3, 11, (8, 8))
    assert np.array_equal(k.gather_numba(img, r, c), k.gather_numpy(img, r, c))


@needs_numba
def test_adadelta_parity():
    rng = np.random.default_rng(3)
    state_a = [rng.normal(size=(40, 7)) for _ in range(3)]
    state_a[1] = np.abs(state_a[1])
    state_a[2] = np.abs(state_a[2])
    state_b = [s.copy() for s in state_a]
    for step in range(5):
        g = np.random.default_rng(step).normal(size=(40, 7))
        k.adadelta_numba(state_a[0], g, state_a[1], state_a[2], 0.95, 1e-6, 0.05)
        k.adadelta_numpy(state_b[0], g, state_b[1], state_b[2], 0.95, 1e-6, 0.05)
    for a, b in zip(state_a, state_b):
        assert np.array_equal(a, b)


_PROBE = """
import hashlib, numpy as np
from sweepkit import _kernels
from sweepkit.policy import Policy, apply_policy
from sweepkit.rng import Rng
img = np.random.default_rng(0).integers(0, 256, (32, 32, 3), dtype=np.uint8)
out = apply_policy(Policy.of("OD", "RSPA", "SAT", "GCSM", "GESM", "DSSM"), img, Rng(4))
print(_kernels.BACKEND, hashlib.sha256(out.tobytes()).hexdigest())
"""


def _probe(disable):
    env = dict(os.environ)
    env.pop("SWEEPKIT_DISABLE_NUMBA", None)
    if disable:
        env["SWEEPKIT_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True, check=True)
    return res.stdout.split()


def test_env_flag_selects_numpy_and_matches():
    backend_off, digest_off = _probe(True)
    assert backend_off == "numpy"
    backend_on, digest_on = _probe(False)
    assert backend_on == ("numba" if k.HAVE_NUMBA else "numpy")
    assert digest_on == digest_off

"""The compiled and pure-numpy kernels must agree."""
import subprocess
import sys

import numpy as np
import pytest

from geowiener import Sphere, _accel, kernels

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def batch(rng):
    return rng.standard_normal((64, 12, 2)) * 0.3


@needs_numba
def test_develop_sphere_backends_agree(batch):
    fr = Sphere(2).base_frame
    v_nb, f_nb = kernels._develop_sphere_nb(fr.x, fr.u, batch)
    v_np, f_np = kernels._develop_sphere_np(fr.x, fr.u, batch)
    np.testing.assert_allclose(v_nb, v_np, atol=1e-13)
    np.testing.assert_allclose(f_nb, f_np, atol=1e-13)


@needs_numba
def test_kp_sphere_backends_agree(batch):
    ds = np.full(12, 1.0 / 12)
    kprime = np.tile([1.0, 0.5], (12, 1))
    np.testing.assert_allclose(
        kernels._kp_sphere_nb(batch, ds, kprime), kernels._kp_sphere_np(batch, ds, kprime), atol=1e-13
    )


def test_batched_develop_matches_pointwise(batch):
    m = Sphere(2)
    fr = m.base_frame
    verts, _ = kernels.develop_sphere(fr.x, fr.u, batch[:3])
    for k in range(3):
        f = fr
        for a in batch[k]:
            f = m.step(f, a)
        np.testing.assert_allclose(verts[k, -1], f.x, atol=1e-13)


def test_sinc_at_zero():
    assert kernels.sinc(np.array([0.0]))[0] == 1.0


def test_disable_flag_selects_numpy():
    code = "from geowiener import _accel; print(_accel.USE_NUMBA)"
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env={"GEOWIENER_DISABLE_NUMBA": "1", "PATH": ""}
    )
    assert out.stdout.strip() == "False"

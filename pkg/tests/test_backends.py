"""Pin the numba kernels against the numpy/scipy reference backend."""

import numpy as np
import pytest
from scipy.special import gammaincc

from fraclap import _accel_np as ref

nb = pytest.importorskip("fraclap._accel_nb")


def test_gammaincc_scalar_against_scipy():
    rng = np.random.default_rng(42)
    for a in (0.05, 0.3, 0.8, 1.55, 3.2, 7.0):
        xs = np.concatenate([rng.uniform(0, 2 * a, 50),
                             rng.uniform(2 * a, 50 * a + 100, 50),
                             [0.0, 1e-12, 700.0, 1200.0]])
        for x in xs:
            got = nb._q_scalar(a, float(x))
            want = gammaincc(a, x)
            assert got == pytest.approx(want, rel=5e-13, abs=1e-300)


def test_power_window_match():
    rng = np.random.default_rng(1)
    rho2 = rng.uniform(1e-6, 30.0, 200)
    for a in (0.65, 1.3, 1.9):
        for t_lo, t_hi in ((0.0, 0.02), (0.0, np.inf), (1e-4, 0.5)):
            got = nb.power_window(rho2, a, t_lo, t_hi)
            want = ref.power_window(rho2, a, t_lo, t_hi)
            assert np.allclose(got, want, rtol=1e-11)


def test_torus_smallt_pairs_match():
    rng = np.random.default_rng(2)
    dx = rng.uniform(-0.5, 0.5, size=(60, 2))
    lengths = np.array([1.0, 2.0])
    mmax = np.array([2, 1], dtype=np.int64)
    for eps2 in (0.0, 0.01):
        got = nb.torus_smallt_pairs(dx, lengths, 1.25, 0.0, 0.03, eps2,
                                    mmax)
        want = ref.torus_smallt_pairs(dx, lengths, 1.25, 0.0, 0.03, eps2,
                                      mmax)
        assert np.allclose(got, want, rtol=1e-11)


def test_torus_smallt_matrix_match():
    rng = np.random.default_rng(3)
    pos = rng.uniform(0, 1.0, size=(25, 1))
    lengths = np.array([1.0])
    mmax = np.array([2], dtype=np.int64)
    got = nb.torus_smallt_matrix(pos, lengths, 0.8, 0.0, 0.01, 1e-4, mmax)
    want = ref.torus_smallt_matrix(pos, lengths, 0.8, 0.0, 0.01, 1e-4, mmax)
    assert np.allclose(got, want, rtol=1e-11)
    assert np.allclose(got, got.T)


def test_heat_images_match():
    rng = np.random.default_rng(4)
    dx = rng.uniform(-1.0, 1.0, size=(40, 1))
    ts = np.geomspace(1e-3, 5.0, 9)
    got = nb.heat_images(dx, np.array([2 * np.pi]), ts,
                         np.array([4], dtype=np.int64))
    want = ref.heat_images(dx, np.array([2 * np.pi]), ts,
                           np.array([4], dtype=np.int64))
    assert np.allclose(got, want, rtol=1e-12)


def test_dist_smallt_match():
    rng = np.random.default_rng(5)
    d2 = rng.uniform(1e-8, 10.0, 120)
    got = nb.dist_smallt_pairs(d2, 1.25, 0.0, 0.008, 0.0)
    want = ref.dist_smallt_pairs(d2, 1.25, 0.0, 0.008, 0.0)
    assert np.allclose(got, want, rtol=1e-11)


def test_backend_selection_env(monkeypatch):
    import importlib

    import fraclap.backend as bk
    assert bk.backend_name() in ("numba", "numpy")
    monkeypatch.setenv("FRACLAP_BACKEND", "numpy")
    spec = importlib.util.spec_from_file_location(
        "fraclap._backend_probe", bk.__file__)
    probe = importlib.util.module_from_spec(spec)
    probe.__package__ = "fraclap"
    spec.loader.exec_module(probe)
    assert probe.backend_name() == "numpy"

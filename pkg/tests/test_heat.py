import numpy as np
import pytest

from fraclap.errors import AccuracyError, DomainError
from fraclap.heat import (HeatEvaluator, heat_apply, heat_kernel,
                          heat_kernel_torus_images, heat_mass,
                          heat_trace_rows)
from fraclap.manifold import Field


@pytest.fixture(scope="module")
def H(torus1d):
    return HeatEvaluator(torus1d)


def test_long_time_limit(H, torus1d):
    # only the constant mode survives: 1/(2 pi)
    val = heat_kernel(H, 0, 30, 50.0)
    assert val == pytest.approx(1.0 / (2 * np.pi), rel=1e-12)


def test_symmetry_exact(H):
    for (p, q) in ((0, 17), (5, 200), (100, 101)):
        assert heat_kernel(H, p, q, 0.3) == heat_kernel(H, q, p, 0.3)


def test_mass_preservation(H):
    for p in (0, 11, 99):
        for t in (H.t_gauss, 0.1, 1.0, 10.0):
            assert abs(heat_mass(H, p, t) - 1.0) <= 1e-10


def test_domain_error_on_nonpositive_time(H):
    with pytest.raises(DomainError):
        heat_kernel(H, 0, 1, 0.0)


def test_eigenfunction_decay(H, torus1d):
    u = Field(torus1d, torus1d.eigenvectors[:, 3])
    lam = torus1d.eigenvalues[3]
    t = 0.37
    out = heat_apply(H, u, t)
    assert np.allclose(out.values, np.exp(-lam * t) * u.values, atol=1e-14)


def test_semigroup_composition(H, torus1d):
    x = torus1d.nodes[:, 0]
    u = Field(torus1d, np.cos(x) + 0.2 * np.sin(3 * x) + 0.1 * np.cos(7 * x))
    one = heat_apply(H, heat_apply(H, u, 0.2), 0.35)
    two = heat_apply(H, u, 0.55)
    assert np.max(np.abs(one.values - two.values)) <= 1e-12


def test_constant_field_invariant(H, torus1d):
    u = Field(torus1d, np.full(torus1d.n_nodes, 2.5))
    out = heat_apply(H, u, 3.0)
    assert np.allclose(out.values, 2.5, atol=1e-12)


def test_projection_at_time_zero(H, torus1d):
    rng = np.random.default_rng(0)
    u = Field(torus1d, rng.standard_normal(torus1d.n_nodes))
    out = heat_apply(H, u, 0.0)
    coeffs = u.coeffs()
    assert np.allclose(out.values, torus1d.synthesize(coeffs), atol=1e-12)


def test_images_match_eigensum(H, torus1d):
    lengths = torus1d.meta["lengths"]
    for t in (0.05, 0.5, 2.0):
        for q in (12, 100):
            hs = heat_kernel(H, 0, q, t)
            hi = heat_kernel_torus_images(lengths, torus1d.nodes[0],
                                          torus1d.nodes[q], t)
            bound = max(1e-8, H.truncation_bound(t))
            assert abs(hs - hi) <= bound


def test_images_mass():
    # integral of the image sum over the torus is exactly 1
    L = 2 * np.pi
    xs = (np.arange(512) + 0.5) * L / 512
    for t in (0.01, 0.3, 5.0):
        vals = [heat_kernel_torus_images([L], np.array([x]),
                                         np.array([0.0]), t) for x in xs]
        assert np.dot(vals, np.full(512, L / 512)) == pytest.approx(
            1.0, abs=1e-12)


def test_single_image_dominates():
    # T^1, L=2pi, t=0.01: images beyond the nearest are < 1e-100 relative
    L = 2 * np.pi
    t = 0.01
    d = 0.3
    full = heat_kernel_torus_images([L], np.array([d]), np.array([0.0]), t)
    gauss = np.exp(-d * d / (4 * t)) / np.sqrt(4 * np.pi * t)
    assert abs(full - gauss) / gauss < 1e-100


def test_image_radius_error():
    with pytest.raises(AccuracyError) as exc:
        heat_kernel_torus_images([1.0], np.array([0.2]), np.array([0.0]),
                                 10.0, image_radius=1)
    assert exc.value.suggestion > 1


def test_reliability_flag(H):
    t_bad = 0.5 * H.t_gauss
    assert not H.reliable(t_bad)
    assert H.reliable(2 * H.t_gauss)
    rows = heat_trace_rows(H, 0, 5, [t_bad, 1.0])
    assert rows[0]["reliability_flag"] == 0
    assert rows[1]["reliability_flag"] == 1


def test_mode_count_guard(torus1d):
    with pytest.raises(DomainError):
        HeatEvaluator(torus1d, n_modes=torus1d.n_modes + 1)


def test_gaussian_envelope_report(H):
    from fraclap.heat import gaussian_envelope_report
    pairs = [(0, 5), (0, 20), (0, 60), (3, 90)]
    out = gaussian_envelope_report(H, pairs, np.geomspace(0.01, 0.3, 8))
    # diagnostic: the fitted envelope brackets the kernel within a
    # moderate two-sided constant on this grid
    assert out["n_samples"] > 0
    assert 2.0 <= out["c_fit"] <= 8.0    # near the flat value 4
    assert 0.05 <= out["ratio_min"] <= out["ratio_max"] <= 20.0

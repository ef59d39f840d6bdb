import numpy as np
import pytest

from fraclap.errors import DomainError
from fraclap.extension import default_z_grid, extend
from fraclap.fracops import EnergySpec
from fraclap.kernel import constants
from fraclap.manifold import Field, build_torus
from fraclap.monotonicity import (HalfBallQuadrature, monotonicity_sweep,
                                  phi)


@pytest.fixture(scope="module")
def flat2d():
    return build_torus(2, [1.0, 1.0], [48, 48], 450)


def _strip_setup(M):
    x = M.nodes[:, 0]
    u = Field(M, np.where((x >= 0.25) & (x < 0.75), 1.0, -1.0))
    i0 = int(np.argmin((M.nodes[:, 0] - 0.25) ** 2
                       + (M.nodes[:, 1] - 0.5) ** 2))
    return u, i0


def test_radii_validation(flat2d):
    zg = default_z_grid(0.5)
    with pytest.raises(DomainError):
        HalfBallQuadrature(0, radii=[0.2, 0.1], z_grid=zg)
    hb = HalfBallQuadrature(0, radii=[0.05, 0.4], z_grid=zg)
    with pytest.raises(DomainError):
        hb.validate_against(flat2d)    # 0.4 > inj/4 = 0.125


def test_constant_field_zero_energy(flat2d):
    M = flat2d
    par = constants(2, 0.5)
    spec = EnergySpec("zero", par)
    u = Field(M, np.full(M.n_nodes, 0.7))
    radii = np.linspace(0.06, 0.12, 8)
    hb = HalfBallQuadrature(0, radii=radii, z_grid=default_z_grid(0.5))
    rep = monotonicity_sweep(M, u, spec, hb)
    assert np.allclose(rep.phi, 0.0, atol=1e-12)
    assert rep.monotone


def test_constant_field_potential_ball_volume(flat2d):
    # Phi(R) = R^(s-n) F(c) vol(B_R); staircase-level agreement
    M = flat2d
    s = 0.5
    par = constants(2, s)
    spec = EnergySpec("double_well", par)
    c = 0.5
    u = Field(M, np.full(M.n_nodes, c))
    radii = np.linspace(0.08, 0.125, 8)
    hb = HalfBallQuadrature(0, radii=radii, z_grid=default_z_grid(0.5))
    rep = monotonicity_sweep(M, u, spec, hb)
    Fc = (1 - c * c) ** 2
    exact = radii ** (s - 2) * Fc * np.pi * radii ** 2
    assert np.max(np.abs(rep.phi - exact) / exact) <= 0.08
    assert np.allclose(rep.sobolev, 0.0, atol=1e-12)


def test_phi_single_radius_matches_sweep(flat2d):
    M = flat2d
    par = constants(2, 0.5)
    spec = EnergySpec("zero", par)
    u, i0 = _strip_setup(M)
    radii = np.linspace(0.08, 0.125, 8)
    zg = default_z_grid(0.5)
    hb = HalfBallQuadrature(i0, radii=radii, z_grid=zg)
    rep = monotonicity_sweep(M, u, spec, hb)
    E = extend(M, u, par, zg)
    val, sob, pot = phi(M, u, E, spec, hb, radii[3], return_terms=True)
    assert val == pytest.approx(rep.phi[3], rel=1e-12)
    assert pot == 0.0
    with pytest.raises(DomainError):
        phi(M, u, E, spec, hb, 0.5 * (radii[0] + radii[1]))


def test_strip_cone_monotone_and_flat(flat2d):
    M = flat2d
    par = constants(2, 0.5)
    spec = EnergySpec("zero", par)
    u, i0 = _strip_setup(M)
    radii = np.linspace(0.08, 0.125, 8)
    hb = HalfBallQuadrature(i0, radii=radii, z_grid=default_z_grid(0.5))
    rep = monotonicity_sweep(M, u, spec, hb)
    assert rep.drift_constant == 0.0      # flat manifold
    assert np.all(rep.phi >= 0.0)
    assert np.all(rep.sobolev >= 0.0) and np.all(rep.potential >= 0.0)
    mean = np.mean(rep.phi)
    assert rep.min_drift_step >= -1e-3 * mean
    assert rep.constancy_spread <= 0.06   # coarser basis than acceptance
    assert rep.gibbs_overshoot > 0.0


def test_report_rows_schema(flat2d):
    M = flat2d
    par = constants(2, 0.5)
    spec = EnergySpec("zero", par)
    u, i0 = _strip_setup(M)
    radii = np.linspace(0.08, 0.125, 8)
    hb = HalfBallQuadrature(i0, radii=radii, z_grid=default_z_grid(0.5))
    rep = monotonicity_sweep(M, u, spec, hb)
    rows = rep.rows()
    assert len(rows) == 8
    assert set(rows[0]) == {"R", "sobolev_term", "potential_term", "phi",
                            "phi_drift", "dphi"}


def test_sweep_needs_eight_radii(flat2d):
    M = flat2d
    par = constants(2, 0.5)
    spec = EnergySpec("zero", par)
    u, i0 = _strip_setup(M)
    hb = HalfBallQuadrature(i0, radii=np.linspace(0.08, 0.12, 4),
                            z_grid=default_z_grid(0.5))
    with pytest.raises(DomainError):
        monotonicity_sweep(M, u, spec, hb)


def test_sphere_drift_calibration(sphere):
    # curved case: the recorded drift constant comes from the menu and
    # makes the corrected curve nondecreasing
    par = constants(2, 0.5)
    spec = EnergySpec("zero", par)
    th = sphere.nodes[:, 0]
    u = Field(sphere, np.cos(th))
    cap = sphere.injectivity_radius / 4.0
    radii = np.linspace(0.4 * cap, cap, 8)
    hb = HalfBallQuadrature(0, radii=radii,
                            z_grid=default_z_grid(2.0))
    rep = monotonicity_sweep(sphere, u, spec, hb)
    assert rep.drift_constant in [c * 2 for c in (1, 2, 4, 8, 16)]
    assert rep.monotone

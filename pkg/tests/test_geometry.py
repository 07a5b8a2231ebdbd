import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavebc.geometry import (CutLocusError, DimensionError, DomainSpec, OutOfDomainError,
                             SgcPoint, beta_profile, eikonal, image_adjoint, image_apply,
                             image_matrix, interior_grid, jacobian_beta, pattern_mask,
                             sgc_forward, sgc_inverse)
from wavebc.trace_spaces import InteriorField

DISC = DomainSpec("disc", n_radial=16, n_angular=32, n_gamma=8)
LINE = DomainSpec("interval", h=0.01)


def test_domain_validation():
    with pytest.raises(ValueError):
        DomainSpec("sphere")
    with pytest.raises(ValueError):
        DomainSpec("disc", n_angular=30, n_gamma=8)
    with pytest.raises(ValueError):
        DomainSpec("disc", inner_wall_depth=1.5)
    assert DomainSpec("interval", n_gamma=5).n_gamma == 1


def test_horizon_checks():
    with pytest.raises(ValueError):
        LINE.check_horizon(1.1)  # beyond 0.9 * T_cut
    with pytest.raises(ValueError):
        DISC.check_horizon(0.6)  # inner wall at depth 0.5
    with pytest.raises(ValueError):
        LINE.n_tau(0.1234)
    assert LINE.n_tau(0.5) == 50


def test_eikonal_values():
    assert eikonal(LINE, 0.3) == pytest.approx(0.3)
    assert eikonal(DISC, (0.6, 0.0)) == pytest.approx(0.4)
    with pytest.raises(OutOfDomainError):
        eikonal(DISC, (1.0, 1.0))
    with pytest.raises(DimensionError):
        eikonal(DISC, 0.3)


def test_centre_is_cut_locus():
    with pytest.raises(CutLocusError):
        sgc_inverse(DISC, (0.0, 0.0))
    with pytest.raises(CutLocusError):
        jacobian_beta(DISC, SgcPoint(0.0, 1.0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 2 * np.pi - 1e-9), st.floats(0.0, 0.99))
def test_sgc_round_trip_disc(gamma, tau):
    x = sgc_forward(DISC, SgcPoint(gamma, tau))
    p = sgc_inverse(DISC, x)
    assert p.tau == pytest.approx(tau, abs=1e-12)
    dg = (p.gamma - gamma + np.pi) % (2 * np.pi) - np.pi
    assert abs(dg) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.99))
def test_beta_is_radius_ratio(tau):
    assert jacobian_beta(DISC, SgcPoint(0.3, tau)) == pytest.approx(1 - tau)
    assert beta_profile(LINE, np.array([tau]))[0] == 1.0


def test_interior_grid_volume_matches_annulus():
    T = 0.4
    g = interior_grid(DISC, T)
    exact = np.pi * (1.0 - (1.0 - T) ** 2)
    assert g.cell_volume.sum() == pytest.approx(exact, rel=1e-12)
    assert g.shape == (16, 8)
    assert g.nodes().shape == (16, 8, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_image_is_isometric(seed):
    g = interior_grid(DISC, 0.4)
    y = InteriorField(np.random.default_rng(seed).standard_normal(g.shape), g.cell_volume)
    img = image_apply(g, y)
    assert img.norm() == pytest.approx(y.norm(), rel=1e-12)
    back = image_adjoint(g, img)
    np.testing.assert_allclose(back.values, y.values, rtol=1e-12)
    np.testing.assert_allclose(image_matrix(g), np.sqrt(g.beta).ravel())


def test_pattern_mask_full_below_cut_locus():
    assert pattern_mask(DISC, 0.4).all()

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thzbeam.geometry import (Beamformer, Direction, SquintConfig, UpaConfig, array_response, beam_gain, beam_gains,
                              boresight, dirichlet, element_gain, element_gain_quadrature, grid_transform,
                              radiation_pattern, sector_of, separable_gain, squint_reduction, steering, vh_inverse,
                              vh_transform, wideband_gain)

upas = st.integers(1, 4)
unit = st.floats(0.0, 1.0)


def in_sector_dir(k, u, v):
    return Direction(boresight(k) - np.pi / 4 + u * np.pi / 2, np.pi / 4 + v * np.pi / 2)


def cartesian_response(cfg: UpaConfig, d: Direction) -> np.ndarray:
    """Independent oracle: half-wavelength elements in the y/z plane of a face rotated by the boresight."""
    c, s = math.cos(boresight(cfg.index)), math.sin(boresight(cfg.index))
    k = d.unit_vector()
    y_axis = np.array([-s, c, 0.0])
    z_axis = np.array([0.0, 0.0, 1.0])
    out = np.empty(cfg.n_a, dtype=complex)
    for iz in range(cfg.nz):
        for iy in range(cfg.ny):
            pos = (iy - (cfg.ny - 1) / 2) * y_axis + (iz - (cfg.nz - 1) / 2) * z_axis
            out[iz * cfg.ny + iy] = np.exp(1j * np.pi * pos @ k)
    return out / math.sqrt(cfg.n_a)


@given(upas, unit, unit)
def test_steering_matches_cartesian_oracle(k, u, v):
    cfg = UpaConfig(4, 4, k)
    d = in_sector_dir(k, u, v)
    a = steering(cfg, d.azimuth, d.elevation)
    b = cartesian_response(cfg, d)
    # responses may differ only by a global phase
    assert abs(abs(np.vdot(a, b)) - 1) < 1e-12


def test_boresight_response_is_flat():
    a = array_response(UpaConfig(), Direction(0.0, np.pi / 2)).weights
    np.testing.assert_allclose(a, np.full(256, 1 / 16), atol=1e-15)
    assert abs(np.vdot(a, a) - 1) < 1e-12


@given(upas, st.floats(-np.pi, np.pi), st.floats(0, np.pi))
def test_response_unit_norm(k, az, el):
    a = steering(UpaConfig(16, 16, k), az, el)
    assert abs(np.linalg.norm(a) - 1) < 1e-12


@given(upas, unit, unit)
def test_self_gain_is_one(k, u, v):
    cfg = UpaConfig(16, 16, k)
    d = in_sector_dir(k, u, v)
    assert beam_gain(array_response(cfg, d), d) == pytest.approx(1.0, abs=1e-12)


def test_self_gain_example():
    d = Direction(0.3, 1.2)
    assert beam_gain(array_response(UpaConfig(), d), d) == pytest.approx(1.0, abs=1e-12)


def test_radiation_pattern_examples():
    assert radiation_pattern(1, Direction(0, np.pi / 2)) == 1
    assert radiation_pattern(1, Direction(np.pi / 2, np.pi / 2)) == 0
    assert radiation_pattern(1, Direction(np.pi / 4, np.pi / 2)) == 1
    # shared boundary is served by the lower index
    assert sector_of(Direction(np.pi / 4, np.pi / 2)) == 1


@given(st.floats(-np.pi, np.pi), st.floats(np.pi / 4 + 1e-9, 3 * np.pi / 4 - 1e-9))
def test_sectors_cover_the_elevation_band(az, el):
    d = Direction(az, el)
    hits = [k for k in range(1, 5) if radiation_pattern(k, d)]
    assert 1 <= len(hits) <= 2
    assert sector_of(d) == hits[0]


@pytest.mark.parametrize("ny,expected", [(1, 4 * math.sqrt(2)), (16, 1448.15), (32, 5792.6)])
def test_element_gain_values(ny, expected):
    assert element_gain(UpaConfig(ny, ny)) == pytest.approx(expected, rel=1e-5)


def test_element_gain_db_and_quadrature():
    cfg = UpaConfig()
    assert 10 * math.log10(element_gain(cfg)) == pytest.approx(31.6, abs=0.05)
    assert element_gain_quadrature(cfg) == pytest.approx(element_gain(cfg), rel=1e-3)


@given(upas, unit, unit, unit, unit)
def test_separable_gain_matches_beam_gain(k, u1, v1, u2, v2):
    cfg = UpaConfig(16, 16, k)
    d, t = in_sector_dir(k, u1, v1), in_sector_dir(k, u2, v2)
    (v, h), (vt, ht) = vh_transform(d, k), vh_transform(t, k)
    g = beam_gain(array_response(cfg, t), d)
    assert abs(separable_gain(cfg, v, h, vt, ht) - g) < 1e-10


def test_separable_gain_limits():
    cfg = UpaConfig()
    assert separable_gain(cfg, 0.2, 0.1, 0.2, 0.1) == pytest.approx(1.0)
    assert separable_gain(cfg, 2 / 16, 0.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    # N_y (H - H_t) / 2 = 1 is a kernel zero
    assert separable_gain(cfg, 0.0, 2 / 16, 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_dirichlet_removable_singularity():
    assert dirichlet(16, 0.0) == pytest.approx(16)
    assert dirichlet(16, 2.0) == pytest.approx(16)


@pytest.mark.parametrize("ratio,expected", [(0.05, 0.495), (0.20, 0.414)])
def test_squint_reduction_quoted(ratio, expected):
    s = SquintConfig(1.0, ratio)
    assert squint_reduction(s, 256) == pytest.approx(expected, abs=0.005)


def test_squint_reduction_decreasing_and_flat_at_zero():
    ratios = np.linspace(0.01, 0.3, 30)
    vals = [squint_reduction(SquintConfig(1.0, r), 256) for r in ratios]
    assert np.all(np.diff(vals) < 0)
    assert wideband_gain(SquintConfig(1.0, 0.1), 256, 0.0) == pytest.approx(1.0)


def test_grid_transform_examples():
    assert grid_transform(1, Direction(0, np.pi / 2)) == pytest.approx((0.0, 0.0), abs=1e-15)
    phi, _ = grid_transform(2, Direction(np.pi / 2, np.pi / 2))
    assert phi == pytest.approx(math.sqrt(2))


@given(upas, unit, unit)
def test_vh_round_trip(k, u, v):
    d = in_sector_dir(k, u, v)
    back = vh_inverse(*vh_transform(d, k), k)
    assert back.elevation == pytest.approx(d.elevation, abs=1e-9)
    assert math.cos(back.azimuth - d.azimuth) == pytest.approx(1.0, abs=1e-12)


def test_beam_gains_vectorized_agrees():
    cfg = UpaConfig(8, 8, 3)
    w = array_response(cfg, Direction(np.pi + 0.1, 1.4))
    az = np.linspace(np.pi - 0.7, np.pi + 0.7, 7)
    el = np.linspace(0.9, 2.2, 7)
    vec = beam_gains(w, az, el)
    loop = [beam_gain(w, Direction(a, e)) for a, e in zip(az, el)]
    np.testing.assert_allclose(vec, loop, atol=1e-14)


def test_beamformer_rejects_wrong_length():
    with pytest.raises(ValueError):
        Beamformer(np.ones(3), UpaConfig(2, 2))

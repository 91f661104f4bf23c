import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscogrid import analytic, fem
from viscogrid.analytic import (RadialProfile, err_pf, err_s, plug_flow_numeric,
                                plug_value, profile_for, profile_value)


def test_bingham_plug_value():
    # closed form: (1 - 2g)^2 / 4
    prof = RadialProfile("bingham", 0.4)
    assert plug_value(prof) == pytest.approx(0.01, rel=1e-14)


def test_power_law_center_value():
    # g = 0, p = 1.75: 1 / (2^beta (1+beta)) with beta = 4/3
    prof = RadialProfile("hb", 0.0, p=1.75)
    assert plug_value(prof) == pytest.approx(0.17007868413945, rel=1e-12)


def test_casson_plug_value():
    prof = RadialProfile("casson", 0.2)
    assert plug_value(prof) == pytest.approx(1.5029645310883e-2, rel=1e-12)


def test_profile_validation():
    with pytest.raises(ValueError):
        RadialProfile("bingham", 0.5)  # plug radius 1: no flow
    with pytest.raises(ValueError):
        RadialProfile("hb", 0.1)       # missing p
    with pytest.raises(ValueError):
        RadialProfile("nope", 0.1)
    with pytest.raises(ValueError):
        profile_value(RadialProfile("bingham", 0.1), 1.5)
    with pytest.raises(ValueError):
        profile_value(RadialProfile("bingham", 0.1), -0.1)


def test_profile_for_model():
    prof = profile_for(fem.ModelSpec.herschel_bulkley(5.0, 0.1))
    assert prof.kind == "hb" and prof.p == 5.0 and prof.r0 == pytest.approx(0.2)
    assert profile_for(fem.ModelSpec.bingham(0.4)).kind == "bingham"
    assert profile_for(fem.ModelSpec.casson(0.2)).kind == "casson"


@settings(max_examples=100, deadline=None)
@given(g=st.floats(0.0, 0.49), p=st.floats(1.05, 6.0))
def test_profile_continuity_and_shape(g, p):
    for prof in (RadialProfile("hb", g, p=p), RadialProfile("bingham", g),
                 RadialProfile("casson", g)):
        r0 = prof.r0
        # continuity at the plug boundary
        below = profile_value(prof, r0)
        above = profile_value(prof, min(r0 + 1e-14, 1.0))
        assert abs(below - above) <= 1e-13 * max(1.0, abs(below)) + 1e-14
        # vanishes at the wall, non-increasing outward
        assert profile_value(prof, 1.0) == pytest.approx(0.0, abs=1e-14)
        rr = np.linspace(r0, 1.0, 64)
        vals = profile_value(prof, rr)
        assert np.all(np.diff(vals) <= 1e-14)


def test_g0_reduces_to_power_law():
    prof = RadialProfile("hb", 0.0, p=3.0)
    r = np.linspace(0, 1, 32)
    beta = 0.5
    expected = (1.0 - r ** (1 + beta)) / (2**beta * (1 + beta))
    assert np.allclose(profile_value(prof, r), expected, rtol=1e-14)


def test_plug_flow_numeric_sampling(disk41):
    prof = RadialProfile("bingham", 0.3)
    radii = np.linalg.norm(disk41.nodes, axis=1)
    u = profile_value(prof, np.clip(radii, 0.0, 1.0))
    assert plug_flow_numeric(u, disk41) == pytest.approx(plug_value(prof), rel=1e-14)
    assert plug_flow_numeric(np.zeros(disk41.n_nodes), disk41) == 0.0
    assert err_pf(u, prof, disk41) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        plug_flow_numeric(u[:-1], disk41)


def test_err_s_properties(disk41):
    rng = np.random.default_rng(2)
    u = rng.standard_normal(disk41.n_nodes)
    v = rng.standard_normal(disk41.n_nodes)
    assert err_s(u, u, disk41) == 0.0
    assert err_s(u, v, disk41) == err_s(v, u, disk41)
    with pytest.raises(ValueError):
        err_s(u, v[:-1], disk41)
    # agrees with the dense mass-matrix quadratic form
    M = fem.assemble_mass(disk41).toarray()
    e = u - v
    assert err_s(u, v, disk41) == pytest.approx(np.sqrt(e @ M @ e), rel=1e-12)

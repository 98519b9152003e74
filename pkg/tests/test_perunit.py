import math

import pytest
from hypothesis import given, strategies as st

from microgrid_mor.perunit import DroopGains, PerUnitBase, impedance_to_pu, make_base, normalize_droops

from conftest import BASE, W0


def test_base_impedance_uses_peak_phase_voltage():
    assert BASE.z_base == pytest.approx(1.5 * 381.58**2 / 10e3)
    assert BASE.i_base * BASE.z_base == pytest.approx(381.58)
    assert BASE.f0 == pytest.approx(50.0)


def test_power_balance_holds_in_per_unit():
    # 1 pu voltage across 1 pu impedance draws 1 pu power
    v = BASE.u_base
    z = BASE.z_base
    i_peak = v / z
    p_three_phase = 1.5 * v * i_peak
    assert p_three_phase == pytest.approx(BASE.s_base)


def test_coupling_branch_values():
    r, x = impedance_to_pu(0.03, 0.35e-3, BASE)
    assert r == pytest.approx(0.03 / 21.8405, rel=1e-4)
    assert x == pytest.approx(W0 * 0.35e-3 / 21.8405, rel=1e-4)


def test_degenerate_impedance_rejected():
    with pytest.raises(ValueError):
        impedance_to_pu(0.0, 0.0, BASE)
    with pytest.raises(ValueError):
        impedance_to_pu(-1.0, 1e-3, BASE)


def test_default_droops_normalize_to_known_percentages():
    g = normalize_droops(9.3e-5, 1.3e-3, 10e3, BASE)
    assert g.kp == pytest.approx(0.00296, rel=1e-3)  # "kp = 0.3 %" starting point
    assert g.kq == pytest.approx(0.03407, rel=1e-3)
    assert g.mp == pytest.approx(0.93)
    assert g.nq == pytest.approx(1.3e-3 * 10e3 / 381.58)


def test_invalid_base_rejected():
    with pytest.raises(ValueError):
        PerUnitBase(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        make_base(1.0, 1.0, -50.0)
    with pytest.raises(ValueError):
        BASE.to_pu(1.0, "energy")


@given(
    value=st.floats(1e-6, 1e6),
    quantity=st.sampled_from(["impedance", "admittance", "power", "voltage", "current"]),
)
def test_pu_round_trip(value, quantity):
    assert BASE.from_pu(BASE.to_pu(value, quantity), quantity) == pytest.approx(value, rel=1e-12)


@given(kp=st.floats(1e-4, 0.5), kq=st.floats(1e-4, 2.0), sn=st.floats(0.1, 10.0))
def test_gain_slopes_round_trip(kp, kq, sn):
    g = DroopGains(kp, kq, sn=sn, w0=W0)
    back = DroopGains.from_slopes(g.mp, g.nq, sn, W0)
    assert back.kp == pytest.approx(kp, rel=1e-12)
    assert back.kq == pytest.approx(kq, rel=1e-12)


def test_scaled_gains():
    g = DroopGains(0.01, 0.05).scaled(2.0, 0.5)
    assert (g.kp, g.kq) == pytest.approx((0.02, 0.025))
    with pytest.raises(ValueError):
        DroopGains(0.0, 0.1)
    assert math.isclose(DroopGains(0.01, 0.05, sn=2.0).mp, 0.01 * W0 / 2.0)

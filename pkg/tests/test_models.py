import numpy as np
import pytest
from hypothesis import given, strategies as st

from microgrid_mor.analysis import eigen_report, spectral_abscissa
from microgrid_mor.errors import AssemblyError
from microgrid_mor.models import (
    build_network_full,
    build_network_model,
    build_network_reduced,
    build_reduced_nonlinear,
    build_twobus,
    corrections_gb,
    descriptor_matrices,
    finite_difference_jacobian,
    twobus_network,
)
from microgrid_mor.models.twobus import twobus_structure
from microgrid_mor.network import StructureMatrices
from microgrid_mor.reduction import partition_by_labels, reduce_first_order, reduce_zero_order

from conftest import TAU, W0, default_inverter, twobus_rx


def test_corrections_special_cases():
    g_p, b_p = corrections_gb(0.02, 0.02, W0)
    assert g_p == pytest.approx(0.0, abs=1e-15)
    g_p, b_p = corrections_gb(0.0, 0.05, W0)
    assert b_p == 0.0
    assert g_p == pytest.approx(-(0.05 / W0) / 0.05**2)
    with pytest.raises(ValueError):
        corrections_gb(0.0, 0.0, W0)


def test_corrections_one_km_value():
    r, x = twobus_rx(1.0)
    # oracle: derivative of 1/(r + jx + s x/w0) at s = 0 by central differences
    h = 1e-3
    y = lambda s: 1 / (r + 1j * x + s * x / W0)  # noqa: E731
    dy = (y(h) - y(-h)) / (2 * h)
    g_p, b_p = corrections_gb(r, x, W0)
    assert b_p == pytest.approx(dy.imag, rel=1e-6)
    assert g_p == pytest.approx(-dy.real, rel=1e-6)
    assert b_p == pytest.approx(0.1782, rel=1e-3)


def test_twobus_full_linearization_matches_nonlinear():
    r, x = twobus_rx(2.0)
    lin, nl = build_twobus(default_inverter(), r, x, "full")
    assert lin.dimension == 5
    assert np.abs(nl.residual()).max() < 1e-12
    jac = finite_difference_jacobian(nl.rhs, nl.equilibrium)
    np.testing.assert_allclose(lin.a, jac, rtol=1e-6, atol=1e-6 * np.abs(lin.a).max())


@pytest.mark.parametrize("kind", ["simple3", "hifi3"])
def test_twobus_reduced_linearization_matches_nonlinear(kind):
    r, x = twobus_rx(1.0)
    lin, nl = build_twobus(default_inverter(), r, x, kind)
    assert np.abs(nl.residual()).max() < 1e-12
    jac = finite_difference_jacobian(nl.rhs, nl.equilibrium)
    np.testing.assert_allclose(lin.a, jac, rtol=1e-6, atol=1e-7 * np.abs(lin.a).max())


def test_lossless_connection_decouples_angle_and_voltage():
    lin, _ = build_twobus(default_inverter(), 0.0, 0.02, "simple3")
    a = lin.a
    assert a[1, 2] == 0.0 and a[2, 0] == 0.0 and a[2, 1] == 0.0
    assert spectral_abscissa(lin) < 0


def test_hifi3_without_corrections_equals_simple3():
    r, x = twobus_rx(3.0)
    inv = default_inverter()
    sm = twobus_structure(r, x, W0, "simple3")
    zeroed = StructureMatrices(sm.b, sm.g, sm.b_t, sm.g_t, 0 * sm.b_p, 0 * sm.g_p)
    m1, k1 = descriptor_matrices(zeroed, [inv], "hifi3")
    m2, k2 = descriptor_matrices(sm, [inv], "simple3")
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_array_equal(k1, k2)


def test_twobus_boundary_between_half_and_three_percent():
    r, x = twobus_rx(1.0)
    stable = build_twobus(default_inverter(kp=0.005), r, x, "full")[0]
    unstable = build_twobus(default_inverter(kp=0.03), r, x, "full")[0]
    assert spectral_abscissa(stable) < 0 < spectral_abscissa(unstable)
    # with a softer voltage droop 1 % is still stable
    soft = default_inverter(kp=0.01)
    soft = soft.scaled(1.0, 0.1)
    assert spectral_abscissa(build_twobus(soft, r, x, "full")[0]) < 0


def test_singular_voltage_mass_names_the_bus():
    r, x = twobus_rx(1.0)
    _, b_p = corrections_gb(r, x, W0)
    inv = default_inverter(node="pcc-inverter", kq=TAU / b_p)
    with pytest.raises(AssemblyError, match="pcc-inverter"):
        build_twobus(inv, r, x, "hifi3")


@pytest.mark.parametrize("length", [0.5, 1.0, 4.0])
def test_network_full_on_infinite_bus_matches_closed_form(length):
    r, x = twobus_rx(length)
    inv = default_inverter()
    closed, _ = build_twobus(inv, r, x, "full")
    general, _ = build_network_full(twobus_network("inv", r, x, W0), [inv])
    e1 = np.sort_complex(np.linalg.eigvals(closed.a))
    e2 = np.sort_complex(np.linalg.eigvals(general.a))
    np.testing.assert_allclose(e1, e2, rtol=1e-8)


@pytest.mark.parametrize("kind", ["simple3", "hifi3"])
def test_network_reduced_on_infinite_bus_matches_closed_form(kind):
    r, x = twobus_rx(2.0)
    inv = default_inverter()
    closed, _ = build_twobus(inv, r, x, kind)
    general = build_network_reduced(twobus_network("inv", r, x, W0), [inv], kind)
    np.testing.assert_allclose(general.a, closed.a, rtol=1e-10, atol=1e-12 * np.abs(closed.a).max())


def test_cascade_state_counts(cascade):
    full, nl = build_network_full(cascade.network, cascade.inverters)
    assert full.dimension == 39
    kinds = [lab.kind for lab in full.labels]
    assert kinds.count("current_d") == kinds.count("current_q") == 12
    assert build_network_reduced(cascade.network, cascade.inverters, "hifi3").dimension == 15
    currents = [lab for lab in full.labels if lab.is_current]
    assert all(lab.time_constant > 0 for lab in currents)


def test_cascade_full_jacobian_and_residual(cascade):
    lin, nl = build_network_full(cascade.network, cascade.inverters)
    assert np.abs(nl.residual()).max() < 1e-10
    x = nl.equilibrium + 1e-3 * np.sin(np.arange(nl.dimension))
    jac = nl.jac(x)
    fd = finite_difference_jacobian(nl.rhs, x)
    assert np.abs(jac - fd).max() / np.abs(jac).max() < 1e-6


@pytest.mark.parametrize("kind", ["full", "simple3", "hifi3"])
def test_single_reference_mode_when_islanded(cascade, kind):
    ss = build_network_model(cascade.network, cascade.inverters, kind)
    rep = eigen_report(ss)
    assert rep.n_zero_modes == 1
    if kind != "full":
        assert np.abs(rep.eigenvalues).min() < 1e-8


@pytest.mark.parametrize("kind", ["simple3", "hifi3"])
def test_reduced_nonlinear_linearizes_to_descriptor_model(cascade, kind):
    nl = build_reduced_nonlinear(cascade.network, cascade.inverters, kind)
    lin = build_network_reduced(cascade.network, cascade.inverters, kind)
    assert np.abs(nl.residual()).max() < 1e-12
    jac = finite_difference_jacobian(nl.rhs, nl.equilibrium)
    assert np.abs(jac - lin.a).max() / np.abs(lin.a).max() < 1e-6


def test_simple3_equals_zero_order_elimination_of_currents():
    r, x = twobus_rx(1.0)
    inv = default_inverter()
    full, _ = build_twobus(inv, r, x, "full")
    simple, _ = build_twobus(inv, r, x, "simple3")
    part = partition_by_labels(full, lambda lab: lab.is_current)
    np.testing.assert_allclose(reduce_zero_order(part), simple.a, rtol=1e-10, atol=1e-10)


@given(
    length=st.floats(0.0, 8.0),
    kp=st.floats(1e-3, 0.03),
    kq=st.floats(5e-3, 0.2),
)
def test_first_order_elimination_reproduces_hifi3(length, kp, kq):
    r, x = twobus_rx(length)
    inv = default_inverter(kp=kp, kq=kq)
    try:
        hifi, _ = build_twobus(inv, r, x, "hifi3")
    except AssemblyError:
        return
    full, _ = build_twobus(inv, r, x, "full")
    reduced = reduce_first_order(partition_by_labels(full, lambda lab: lab.is_current))
    assert np.linalg.norm(reduced - hifi.a) <= 1e-8 * np.linalg.norm(hifi.a)

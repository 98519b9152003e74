"""Single inverter behind an aggregate R-L connection to an infinite bus.

The linear matrices here are written out in closed form and serve as an
independent reference for the generic network builders.
"""

from __future__ import annotations

import numpy as np

from ..errors import AssemblyError
from ..inverter import DroopInverter, resolve_setpoints
from ..network import Branch, NetworkSpec, StructureMatrices
from ..perunit import PerUnitBase
from .reduced import build_reduced_nonlinear, descriptor_matrices
from .statespace import LinearStateSpace, NonlinearModel, StateLabel, inverter_labels

INFINITE_BUS = "grid"


def corrections_gb(r: float, x: float, w0: float) -> tuple[float, float]:
    """First-order network corrections ``(G', B')`` of a series R-L connection.

    With ``L = x/w0``::

        G' = L (r^2 - x^2) / (r^2 + x^2)^2
        B' = 2 r x L / (r^2 + x^2)^2

    Both carry units of seconds (pu admittance times time).
    """
    if not r + x > 0:
        raise ValueError("r + x must be positive")
    z2 = r * r + x * x
    ell = x / w0
    return ell * (r * r - x * x) / z2**2, 2.0 * r * x * ell / z2**2


def twobus_structure(r: float, x: float, w0: float, kind: str) -> StructureMatrices:
    z2 = r * r + x * x
    g_p, b_p = corrections_gb(r, x, w0) if kind == "hifi3" else (0.0, 0.0)
    one = lambda v: np.array([[v]])  # noqa: E731
    return StructureMatrices(
        b=one(x / z2), g=one(r / z2), b_t=one(0.0), g_t=one(0.0), b_p=one(b_p), g_p=one(g_p)
    )


def twobus_network(node: str, r: float, x: float, w0: float) -> NetworkSpec:
    base = PerUnitBase(u_base=1.0, s_base=1.0, w0=w0)
    return NetworkSpec(
        base=base,
        inverter_nodes=(node,),
        buses=(),
        branches=(Branch(node, INFINITE_BUS, r, x, name="line"),),
        infinite_bus=INFINITE_BUS,
    )


def _full_linear(inv: DroopInverter, r: float, x: float) -> np.ndarray:
    g, tau = inv.gains, inv.tau
    ell = x / g.w0
    # flat start carries no current: dP = Id, dQ = -Iq
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0 / tau, 0.0, -g.mp / tau, 0.0],
            [0.0, 0.0, -1.0 / tau, 0.0, g.nq / tau],
            [0.0, 0.0, 1.0 / ell, -r / ell, x / ell],
            [1.0 / ell, 0.0, 0.0, -x / ell, -r / ell],
        ]
    )


def _full_nonlinear(inv: DroopInverter, r: float, x: float, labels) -> NonlinearModel:
    inv = resolve_setpoints(inv, 0.0, 0.0)
    g, tau = inv.gains, inv.tau
    w0 = g.w0
    ell = x / w0

    def rhs(s):
        th, om, u, i_d, i_q = s
        p = u * (np.cos(th) * i_d + np.sin(th) * i_q)
        q = u * (np.sin(th) * i_d - np.cos(th) * i_q)
        return np.array(
            [
                om - w0,
                (inv.w_set - om - g.mp * p) / tau,
                (inv.u_set - u - g.nq * q) / tau,
                (u * np.cos(th) - 1.0 - r * i_d + x * i_q) / ell,
                (u * np.sin(th) - r * i_q - x * i_d) / ell,
            ]
        )

    def outputs(s):
        th, om, u, i_d, i_q = s
        p = u * (np.cos(th) * i_d + np.sin(th) * i_q)
        q = u * (np.sin(th) * i_d - np.cos(th) * i_q)
        return np.atleast_1d(p), np.atleast_1d(q), np.atleast_1d(om), np.atleast_1d(u)

    return NonlinearModel(
        rhs=rhs,
        equilibrium=np.array([0.0, w0, 1.0, 0.0, 0.0]),
        labels=tuple(labels),
        kind="full",
        outputs=outputs,
        residual_scale=np.array([1.0, tau, tau, ell, ell]),
        inverters=(inv,),
    )


def build_twobus(inv: DroopInverter, r: float, x: float, kind: str = "full") -> tuple[LinearStateSpace, NonlinearModel]:
    """Two-bus model of the requested kind at the flat-start equilibrium.

    ``r`` and ``x`` are the aggregate (coupling plus line) per-unit values.
    """
    if not (r >= 0 and x > 0):
        raise ValueError("two-bus connection needs r >= 0 and x > 0")
    w0 = inv.w0
    if kind == "full":
        labels = inverter_labels([inv.node]) + [
            StateLabel("current_d", "line", x / w0),
            StateLabel("current_q", "line", x / w0),
        ]
        return LinearStateSpace(_full_linear(inv, r, x), labels, "full"), _full_nonlinear(inv, r, x, labels)
    if kind not in ("simple3", "hifi3"):
        raise ValueError(f"unknown model kind {kind!r}")
    sm = twobus_structure(r, x, w0, kind)
    try:
        mass, stiff = descriptor_matrices(sm, [inv], kind)
    except AssemblyError as exc:
        raise AssemblyError(f"two-bus {kind}: {exc}") from exc
    lin = LinearStateSpace(np.linalg.solve(mass, stiff), inverter_labels([inv.node]), kind)
    nonlin = build_reduced_nonlinear(twobus_network(inv.node, r, x, w0), [inv], kind)
    return lin, nonlin

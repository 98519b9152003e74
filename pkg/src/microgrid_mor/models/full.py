"""Full electromagnetic network model.

States: ``(theta, omega, U)`` per inverter followed by the real and imaginary
parts of every inductive element current (branches, then loads), all in the
frame rotating at ``w0``::

    (x_e/w0) dI_e/dt = (E V)_e - z_e I_e

Non-source buses carry no state.  A large virtual shunt resistance at each of
them turns KCL into an explicit expression for the bus voltage, so the
network DAE becomes an ODE.  Resistive elements (``x == 0``) enter the same
algebraic conductance matrix.
"""

from __future__ import annotations

import numpy as np

from ..errors import AssemblyError
from ..network import NetworkSpec, merge_series_buses
from .reduced import order_inverters
from ..inverter import resolve_setpoints
from .statespace import LinearStateSpace, NonlinearModel, StateLabel, inverter_labels

VIRTUAL_RESISTANCE = 1e4
CONDITION_LIMIT = 1e12


class _Elements:
    """Incidence data of the inductive elements and the algebraic network."""

    def __init__(self, net: NetworkSpec, virtual_resistance: float):
        if not virtual_resistance > 0:
            raise ValueError("virtual_resistance must be positive")
        idx = net.index()
        n_nodes = len(idx)
        self.n = len(net.inverter_nodes)
        self.n_src = len(net.source_nodes)
        n, ns = self.n, self.n_src

        elements = [b for b in net.branches if b.x > 0] + [ld for ld in net.loads if ld.x > 0]
        m = len(elements)
        inc = np.zeros((m, n_nodes))
        for e, el in enumerate(elements):
            if hasattr(el, "from_bus"):
                inc[e, idx[el.from_bus]] = 1.0
                inc[e, idx[el.to_bus]] = -1.0
            else:
                inc[e, idx[el.bus]] = 1.0
        galg = np.zeros((n_nodes, n_nodes))
        for br in net.branches:
            if br.x == 0:
                i, j = idx[br.from_bus], idx[br.to_bus]
                g = 1.0 / br.r
                galg[i, i] += g
                galg[j, j] += g
                galg[i, j] -= g
                galg[j, i] -= g
        for ld in net.loads:
            if ld.x == 0:
                galg[idx[ld.bus], idx[ld.bus]] += 1.0 / ld.r
        for k in range(ns, n_nodes):
            galg[k, k] += 1.0 / virtual_resistance

        src, slk, itr = slice(0, n), slice(n, ns), slice(ns, n_nodes)
        if n_nodes > ns:
            gii = galg[itr, itr]
            cond = np.linalg.cond(gii)
            if not np.isfinite(cond) or cond > CONDITION_LIMIT:
                raise AssemblyError(
                    f"virtual-resistor network is ill-conditioned (cond = {cond:.3g}); "
                    f"virtual_resistance={virtual_resistance:g} is too large for this network"
                )
            h = -np.linalg.solve(gii, inc[:, itr].T)
            hs = -np.linalg.solve(gii, galg[itr, src])
            hinf = -np.linalg.solve(gii, galg[itr, slk])
        else:
            h = np.zeros((0, m))
            hs = np.zeros((0, n))
            hinf = np.zeros((0, ns - n))

        w0 = net.base.w0
        self.elements = elements
        self.m = m
        self.x = np.array([el.x for el in elements])
        self.z = np.array([el.z for el in elements])
        self.inv_l = w0 / self.x
        e_src, e_slk, e_int = inc[:, src], inc[:, slk], inc[:, itr]
        slack_v = np.ones(ns - n)
        self.k_src = self.inv_l[:, None] * (e_src + e_int @ hs)
        self.k_cur = self.inv_l[:, None] * (e_int @ h - np.diag(self.z))
        self.k_inf = self.inv_l * ((e_slk + e_int @ hinf) @ slack_v)
        self.a_cur = e_src.T + galg[src, itr] @ h
        self.a_src = galg[src, src] + galg[src, itr] @ hs
        self.a_inf = (galg[src, slk] + galg[src, itr] @ hinf) @ slack_v

    def steady_currents(self, v_src: np.ndarray) -> np.ndarray:
        b = self.k_src @ v_src + self.k_inf
        cur = -np.linalg.solve(self.k_cur, b)
        # one step of iterative refinement; k_cur is stiff through the virtual resistors
        cur -= np.linalg.solve(self.k_cur, self.k_cur @ cur + b)
        return cur


def build_network_full(
    net: NetworkSpec,
    inverters,
    virtual_resistance: float = VIRTUAL_RESISTANCE,
    merge_series: bool = True,
) -> tuple[LinearStateSpace, NonlinearModel]:
    """Full model, linearized at the flat-start equilibrium.

    Inverter terminals sit at ``1 /_ 0`` pu; setpoints not given explicitly are
    back-solved so that this point is an exact equilibrium.
    """
    if merge_series:
        net = merge_series_buses(net)
    inverters = order_inverters(net, inverters)
    el = _Elements(net, virtual_resistance)
    n, m = el.n, el.m
    w0 = inverters[0].w0

    ones = np.ones(n, dtype=complex)
    cur_eq = el.steady_currents(ones)
    s_eq = np.conj(el.a_cur @ cur_eq + el.a_src @ ones + el.a_inf)
    inverters = [resolve_setpoints(inv, s.real, s.imag) for inv, s in zip(inverters, s_eq)]
    mp = np.array([inv.gains.mp for inv in inverters])
    nq = np.array([inv.gains.nq for inv in inverters])
    tau = np.array([inv.tau for inv in inverters])
    w_set = np.array([inv.w_set for inv in inverters])
    u_set = np.array([inv.u_set for inv in inverters])

    def unpack(x):
        th, om, u = x[:n], x[n : 2 * n], x[2 * n : 3 * n]
        cur = x[3 * n : 3 * n + m] + 1j * x[3 * n + m :]
        e = np.exp(1j * th)
        v = u * e
        j = el.a_cur @ cur + el.a_src @ v + el.a_inf
        return th, om, u, cur, e, v, j

    def rhs(x):
        th, om, u, cur, e, v, j = unpack(x)
        s = v * np.conj(j)
        dcur = el.k_src @ v + el.k_cur @ cur + el.k_inf
        return np.concatenate(
            [om - w0, (w_set - om - mp * s.real) / tau, (u_set - u - nq * s.imag) / tau, dcur.real, dcur.imag]
        )

    def jacobian(x):
        th, om, u, cur, e, v, j = unpack(x)
        # complex derivatives of S and dI/dt w.r.t. theta, U, Re I, Im I
        ds_dth = np.diag(1j * v * np.conj(j)) + v[:, None] * el.a_src * np.conj(1j * v)[None, :]
        ds_du = np.diag(e * np.conj(j)) + v[:, None] * el.a_src * np.conj(e)[None, :]
        ds_dre = v[:, None] * el.a_cur
        ds_dim = -1j * ds_dre
        di_dth = el.k_src * (1j * v)[None, :]
        di_du = el.k_src * e[None, :]
        di_dre = el.k_cur
        di_dim = 1j * el.k_cur

        dim = 3 * n + 2 * m
        jac = np.zeros((dim, dim))
        th_, om_, u_ = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
        re_, im_ = slice(3 * n, 3 * n + m), slice(3 * n + m, dim)
        jac[th_, om_] = np.eye(n)
        jac[om_, om_] = -np.diag(1.0 / tau)
        jac[u_, u_] = -np.diag(1.0 / tau)
        kp = (mp / tau)[:, None]
        kq = (nq / tau)[:, None]
        for cols, ds in ((th_, ds_dth), (u_, ds_du), (re_, ds_dre), (im_, ds_dim)):
            jac[om_, cols] -= kp * ds.real
            jac[u_, cols] -= kq * ds.imag
        for cols, di in ((th_, di_dth), (u_, di_du), (re_, di_dre), (im_, di_dim)):
            jac[re_, cols] += di.real
            jac[im_, cols] += di.imag
        return jac

    def outputs(x):
        th, om, u, cur, e, v, j = unpack(x)
        s = v * np.conj(j)
        return s.real, s.imag, om, u

    x_eq = np.concatenate([np.zeros(n), np.full(n, w0), np.ones(n), cur_eq.real, cur_eq.imag])
    labels = inverter_labels(net.inverter_nodes)
    tcs = el.x / w0
    labels += [StateLabel("current_d", e.label, tc) for e, tc in zip(el.elements, tcs)]
    labels += [StateLabel("current_q", e.label, tc) for e, tc in zip(el.elements, tcs)]
    scale = np.concatenate([np.ones(n), tau, tau, tcs, tcs])
    model = NonlinearModel(
        rhs=rhs,
        equilibrium=x_eq,
        labels=tuple(labels),
        kind="full",
        jacobian=jacobian,
        outputs=outputs,
        residual_scale=scale,
        inverters=tuple(inverters),
    )
    return LinearStateSpace(jacobian(x_eq), labels, "full"), model

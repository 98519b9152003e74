"""Third-order droop models: quasi-stationary (``simple3``) and first-order
corrected (``hifi3``).

Linear form, per inverter vectors of angle ``th``, frequency deviation ``w``
and relative voltage ``rho``::

    dth/dt = w
    tau*Lp dw/dt - G' drho/dt   = -(Lp - B') w - B th - (G + G~) rho
    (tau*Lq - B') drho/dt       = -(Lq + B + B~) rho + G th - G' w

with ``Lp = diag(1/mp)``, ``Lq = diag(1/nq)``.  ``simple3`` zeroes ``B'`` and
``G'``.  The mass matrix is inverted once at build time.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.lapack import dgesv

from ..errors import AssemblyError
from ..inverter import DroopInverter, resolve_setpoints
from ..network import NetworkSpec, StructureMatrices, assemble_taylor, structure_matrices
from .statespace import LinearStateSpace, NonlinearModel, inverter_labels

MASS_COND_LIMIT = 1e12


def order_inverters(net: NetworkSpec, inverters) -> list[DroopInverter]:
    """Match inverters to ``net.inverter_nodes`` order."""
    by_node = {inv.node: inv for inv in inverters}
    if len(by_node) != len(inverters):
        raise AssemblyError("two inverters share a node")
    missing = [n for n in net.inverter_nodes if n not in by_node]
    extra = [n for n in by_node if n not in net.inverter_nodes]
    if missing or extra:
        raise AssemblyError(f"inverter/network mismatch: missing {missing}, unknown {extra}")
    return [by_node[n] for n in net.inverter_nodes]


def _gain_vectors(inverters):
    mp = np.array([inv.gains.mp for inv in inverters])
    nq = np.array([inv.gains.nq for inv in inverters])
    tau = np.array([inv.tau for inv in inverters])
    return mp, nq, tau


def descriptor_matrices(sm: StructureMatrices, inverters, kind: str, nodes=None):
    """Mass and stiffness matrices ``(M, K)`` of ``M dx/dt = K x``."""
    if kind not in ("simple3", "hifi3"):
        raise ValueError(f"reduced kind must be 'simple3' or 'hifi3', got {kind!r}")
    mp, nq, tau = _gain_vectors(inverters)
    n = len(inverters)
    b_p, g_p = (sm.b_p, sm.g_p) if kind == "hifi3" else (np.zeros((n, n)), np.zeros((n, n)))
    lam_p = np.diag(1.0 / mp)
    lam_q = np.diag(1.0 / nq)
    eye = np.eye(n)
    zero = np.zeros((n, n))
    mass = np.block(
        [
            [eye, zero, zero],
            [zero, np.diag(tau / mp), -g_p],
            [zero, zero, np.diag(tau / nq) - b_p],
        ]
    )
    stiff = np.block(
        [
            [zero, eye, zero],
            [-sm.b, -(lam_p - b_p), -(sm.g + sm.g_t)],
            [sm.g, -g_p, -(lam_q + sm.b + sm.b_t)],
        ]
    )
    _check_voltage_mass(np.diag(tau / nq) - b_p, nodes or [inv.node for inv in inverters])
    return mass, stiff


def _check_voltage_mass(block: np.ndarray, nodes) -> None:
    cond = np.linalg.cond(block)
    if np.isfinite(cond) and cond < MASS_COND_LIMIT:
        return
    diag = np.diag(block)
    worst = int(np.argmin(np.abs(diag)))
    raise AssemblyError(
        f"singular mass matrix (cond = {cond:.3g}): tau/nq - B' = {diag[worst]:.6g} "
        f"at bus {nodes[worst]!r}; the voltage droop is far beyond its stability bound"
    )


def build_network_reduced(net: NetworkSpec, inverters, kind: str = "hifi3", u0: float = 1.0) -> LinearStateSpace:
    inverters = order_inverters(net, inverters)
    n = len(inverters)
    sm = structure_matrices(assemble_taylor(net), u0).subset(n)
    mass, stiff = descriptor_matrices(sm, inverters, kind, list(net.inverter_nodes))
    return LinearStateSpace(np.linalg.solve(mass, stiff), inverter_labels(net.inverter_nodes), kind)


def build_reduced_nonlinear(net: NetworkSpec, inverters, kind: str = "hifi3") -> NonlinearModel:
    """Nonlinear reduced model with currents ``I = Y0 V + Y1 dV/dt``.

    ``dV/dt`` contains ``dU/dt``, so the voltage equations are solved as an
    ``n x n`` linear system at every evaluation (``simple3`` skips it).
    """
    if kind not in ("simple3", "hifi3"):
        raise ValueError(f"reduced kind must be 'simple3' or 'hifi3', got {kind!r}")
    inverters = order_inverters(net, inverters)
    n = len(inverters)
    adm = assemble_taylor(net)
    y0 = adm.y0
    y1 = adm.y1[:n, :n]
    slack = np.ones(len(net.source_nodes) - n, dtype=complex)
    w0 = inverters[0].w0

    flat = np.concatenate([np.ones(n, dtype=complex), slack])
    s_flat = np.conj((y0 @ flat)[:n])
    inverters = [resolve_setpoints(inv, s.real, s.imag) for inv, s in zip(inverters, s_flat)]
    mp, nq, tau = _gain_vectors(inverters)
    w_set = np.array([inv.w_set for inv in inverters])
    u_set = np.array([inv.u_set for inv in inverters])
    hifi = kind == "hifi3"
    y0_src = y0[:n, :n]
    y0_slack = y0[:n, n:] @ slack
    y1_conj = np.conj(y1)
    tau_diag = np.diag(tau)

    def evaluate(x):
        th, om, u = x[:n], x[n : 2 * n], x[2 * n :]
        e = np.exp(1j * th)
        v = u * e
        s0 = v * np.conj(y0_src @ v + y0_slack)
        if not hifi:
            du = (u_set - u - nq * s0.imag) / tau
            return th, om, u, s0.real, s0.imag, du
        w = (v[:, None] * y1_conj) * np.conj(e)
        uo = u * (om - w0)
        lhs = tau_diag + nq[:, None] * w.imag
        # direct LAPACK call: numpy's solve wrapper dominates at this size
        _, _, du, info = dgesv(lhs, u_set - u - nq * (s0.imag - w.real @ uo))
        if info:
            raise AssemblyError("voltage mass matrix became singular during evaluation")
        p = s0.real + w.real @ du + w.imag @ uo
        q = s0.imag + w.imag @ du - w.real @ uo
        return th, om, u, p, q, du

    def rhs(x):
        th, om, u, p, q, du = evaluate(x)
        return np.concatenate([om - w0, (w_set - om - mp * p) / tau, du])

    def outputs(x):
        _, om, u, p, q, _ = evaluate(x)
        return p, q, om, u

    eq = np.concatenate([np.zeros(n), np.full(n, w0), np.ones(n)])
    scale = np.concatenate([np.ones(n), tau, tau])
    return NonlinearModel(
        rhs=rhs,
        equilibrium=eq,
        labels=tuple(inverter_labels(net.inverter_nodes)),
        kind=kind,
        outputs=outputs,
        residual_scale=scale,
        inverters=tuple(inverters),
    )

"""Droop-controlled inverter seen from its terminals.

States are the terminal angle ``theta`` (relative to the frame rotating at
``w0``), the frequency ``omega`` and the voltage magnitude ``U``::

    dtheta/dt = omega - w0
    tau * domega/dt = w_set - omega - mp * P
    tau * dU/dt = u_set - U - nq * Q
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import Branch
from .perunit import DroopGains


@dataclass(frozen=True)
class DroopInverter:
    node: str
    gains: DroopGains
    tau: float
    w_set: float | None = None
    u_set: float | None = None
    coupling: Branch | None = None

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"inverter {self.node!r}: tau must be positive")
        if self.coupling is not None and not self.coupling.x > 0:
            raise ValueError(f"inverter {self.node!r}: coupling reactance must be positive")

    @property
    def w0(self) -> float:
        return self.gains.w0

    @property
    def has_setpoints(self) -> bool:
        return self.w_set is not None and self.u_set is not None

    def with_gains(self, gains: DroopGains) -> DroopInverter:
        return replace(self, gains=gains)

    def scaled(self, kp_scale: float = 1.0, kq_scale: float = 1.0) -> DroopInverter:
        return replace(self, gains=self.gains.scaled(kp_scale, kq_scale))

    def with_setpoints(self, w_set: float, u_set: float) -> DroopInverter:
        return replace(self, w_set=float(w_set), u_set=float(u_set))


def backsolve_setpoints(inv: DroopInverter, p0: float, q0: float) -> tuple[float, float]:
    """Setpoints making ``(omega = w0, U = u0)`` an equilibrium at powers ``(p0, q0)``."""
    g = inv.gains
    return g.w0 + g.mp * p0, g.u0 + g.nq * q0


def resolve_setpoints(inv: DroopInverter, p0: float, q0: float) -> DroopInverter:
    """Keep explicit setpoints, otherwise back-solve them from the operating powers."""
    if inv.has_setpoints:
        return inv
    return inv.with_setpoints(*backsolve_setpoints(inv, p0, q0))


def inverter_rhs(inv: DroopInverter, state, p, q) -> np.ndarray:
    """Time derivative of ``(theta, omega, U)`` given terminal powers."""
    theta, omega, u = state
    g = inv.gains
    return np.array(
        [
            omega - g.w0,
            (inv.w_set - omega - g.mp * p) / inv.tau,
            (inv.u_set - u - g.nq * q) / inv.tau,
        ]
    )


def inverter_block(inv: DroopInverter) -> tuple[np.ndarray, np.ndarray]:
    """Local linear block of one inverter.

    Returns ``(a, b)`` with ``d(dtheta, domega, dU)/dt = a @ state + b @ (dP, dQ)``.
    """
    g, tau = inv.gains, inv.tau
    a = np.array(
        [
            [0.0, 1.0, 0.0],
            [0.0, -1.0 / tau, 0.0],
            [0.0, 0.0, -1.0 / tau],
        ]
    )
    b = np.array(
        [
            [0.0, 0.0],
            [-g.mp / tau, 0.0],
            [0.0, -g.nq / tau],
        ]
    )
    return a, b

"""Per-unit bases and droop-gain normalization.

Voltages are referred to a *peak phase-to-ground* base and powers to a
three-phase apparent-power base, so the base impedance carries a factor 3/2::

    z_base = 1.5 * u_base**2 / s_base
    i_base = s_base / (1.5 * u_base)

With this choice ``P + jQ = V * conj(I)`` holds directly in per-unit.
Time stays in seconds everywhere; an inductance in per-unit time is ``x / w0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

_QUANTITIES = ("impedance", "admittance", "power", "voltage", "current")


@dataclass(frozen=True)
class PerUnitBase:
    u_base: float  # V, peak phase-to-ground
    s_base: float  # VA, three-phase
    w0: float  # rad/s

    def __post_init__(self) -> None:
        for name in ("u_base", "s_base", "w0"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def z_base(self) -> float:
        return 1.5 * self.u_base**2 / self.s_base

    @property
    def i_base(self) -> float:
        return self.s_base / (1.5 * self.u_base)

    @property
    def f0(self) -> float:
        return self.w0 / (2.0 * math.pi)

    def _scale(self, quantity: str) -> float:
        if quantity == "impedance":
            return self.z_base
        if quantity == "admittance":
            return 1.0 / self.z_base
        if quantity == "power":
            return self.s_base
        if quantity == "voltage":
            return self.u_base
        if quantity == "current":
            return self.i_base
        raise ValueError(f"unknown quantity {quantity!r}; expected one of {_QUANTITIES}")

    def to_pu(self, value, quantity: str):
        return value / self._scale(quantity)

    def from_pu(self, value, quantity: str):
        return value * self._scale(quantity)


def make_base(u_base: float, s_base: float, f0: float) -> PerUnitBase:
    """Build a base from peak phase voltage [V], apparent power [VA] and frequency [Hz]."""
    if not f0 > 0:
        raise ValueError(f"f0 must be positive, got {f0!r}")
    return PerUnitBase(u_base=float(u_base), s_base=float(s_base), w0=2.0 * math.pi * f0)


def impedance_to_pu(R: float, L: float, base: PerUnitBase) -> tuple[float, float]:
    """Series R [ohm] and L [H] to per-unit ``(r, x)`` with ``x`` evaluated at ``w0``."""
    if R < 0 or L < 0:
        raise ValueError(f"R and L must be non-negative, got R={R!r}, L={L!r}")
    if R == 0 and L == 0:
        raise ValueError("degenerate branch: R and L are both zero")
    return R / base.z_base, base.w0 * L / base.z_base


@dataclass(frozen=True)
class DroopGains:
    """Normalized droop gains of one inverter.

    ``kp`` and ``kq`` are dimensionless and referred to the inverter's own
    rating ``sn`` (pu of the system base), not to the system base.  The
    per-unit slopes follow from the definitions ``kp = mp*sn/w0`` and
    ``kq = nq*sn/u0``.
    """

    kp: float
    kq: float
    sn: float = 1.0
    w0: float = 2.0 * math.pi * 50.0
    u0: float = 1.0

    def __post_init__(self) -> None:
        for name in ("kp", "kq", "sn", "w0", "u0"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"droop gain field {name} must be positive, got {value!r}")

    @property
    def mp(self) -> float:
        """Frequency droop slope, rad/s per pu active power."""
        return self.kp * self.w0 / self.sn

    @property
    def nq(self) -> float:
        """Voltage droop slope, pu voltage per pu reactive power."""
        return self.kq * self.u0 / self.sn

    @classmethod
    def from_slopes(cls, mp: float, nq: float, sn: float, w0: float, u0: float = 1.0) -> DroopGains:
        return cls(kp=mp * sn / w0, kq=nq * sn / u0, sn=sn, w0=w0, u0=u0)

    def scaled(self, kp_scale: float = 1.0, kq_scale: float = 1.0) -> DroopGains:
        return replace(self, kp=self.kp * kp_scale, kq=self.kq * kq_scale)


def normalize_droops(mp: float, nq: float, sn_physical: float, base: PerUnitBase) -> DroopGains:
    """Physical droop slopes to normalized gains.

    Parameters
    ----------
    mp : float
        Frequency droop in rad/s per W.
    nq : float
        Voltage droop in V per var.
    sn_physical : float
        Inverter rating in VA.
    base : PerUnitBase
    """
    if not (mp > 0 and nq > 0 and sn_physical > 0):
        raise ValueError("droop slopes and rating must be positive")
    mp_pu = mp * base.s_base
    nq_pu = nq * base.s_base / base.u_base
    return DroopGains.from_slopes(mp_pu, nq_pu, sn_physical / base.s_base, base.w0)

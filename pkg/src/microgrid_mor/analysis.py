"""Eigenvalue verdicts, critical droop gains, stability regions and closed-form bounds."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import AnalysisError, AssemblyError, BracketError, ReductionError
from .models import build_network_model
from .models.statespace import LinearStateSpace
from .perunit import DroopGains

DEFAULT_ZERO_TOL = 1e-6


@dataclass(frozen=True)
class EigenReport:
    eigenvalues: np.ndarray
    abscissa: float
    n_zero_modes: int
    stable: bool


def eigen_report(ss: LinearStateSpace | np.ndarray, zero_tol: float = DEFAULT_ZERO_TOL) -> EigenReport:
    """Dense non-symmetric eigen-decomposition and stability verdict.

    Modes with ``|lambda| < zero_tol`` are the uniform-angle reference mode and
    are left out of the abscissa.  A tie at exactly zero counts as unstable.
    """
    a = ss.a if isinstance(ss, LinearStateSpace) else np.asarray(ss, dtype=float)
    if not np.all(np.isfinite(a)):
        raise AnalysisError("state matrix has non-finite entries")
    try:
        eig = scipy.linalg.eigvals(a, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise AnalysisError(f"eigenvalue solver failed: {exc}") from exc
    zero = np.abs(eig) < zero_tol
    rest = eig[~zero]
    abscissa = float(rest.real.max()) if rest.size else -math.inf
    return EigenReport(eigenvalues=eig, abscissa=abscissa, n_zero_modes=int(zero.sum()), stable=abscissa < 0)


def spectral_abscissa(ss, zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    return eigen_report(ss, zero_tol).abscissa


def _abscissa_or_unstable(make, zero_tol) -> float:
    # a model that cannot be assembled (singular mass matrix) is past the bound
    try:
        return spectral_abscissa(make(), zero_tol)
    except (AssemblyError, ReductionError):
        return math.inf


@dataclass(frozen=True)
class CriticalGain:
    gain: float
    bracket: tuple[float, float]
    abscissas: tuple[float, float]
    iterations: int


def critical_gain(
    builder: Callable[[float], LinearStateSpace],
    bracket: tuple[float, float],
    rel_tol: float = 1e-3,
    zero_tol: float = DEFAULT_ZERO_TOL,
    full_output: bool = False,
):
    """Bisect the sign change of the spectral abscissa along one gain axis.

    ``builder(g)`` returns the linear model at gain ``g``.  The bracket must
    hold one stable and one unstable endpoint; the stable side may be either.
    The returned gain sits on the stable side of the final interval.
    """
    lo, hi = map(float, bracket)
    if not (0 < lo < hi):
        raise ValueError("bracket must satisfy 0 < lo < hi")
    f_lo = _abscissa_or_unstable(lambda: builder(lo), zero_tol)
    f_hi = _abscissa_or_unstable(lambda: builder(hi), zero_tol)
    s_lo, s_hi = f_lo < 0, f_hi < 0
    if s_lo == s_hi:
        state = "stable" if s_lo else "unstable"
        raise BracketError(
            f"no stability change in [{lo:g}, {hi:g}]: both ends {state} "
            f"(abscissas {f_lo:.4g}, {f_hi:.4g})",
            bracket=(lo, hi),
            abscissas=(f_lo, f_hi),
        )
    it = 0
    while (hi - lo) > rel_tol * lo:
        mid = math.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        f_mid = _abscissa_or_unstable(lambda: builder(mid), zero_tol)
        if (f_mid < 0) == s_lo:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        it += 1
    gain = lo if s_lo else hi
    if full_output:
        return CriticalGain(gain, (lo, hi), (f_lo, f_hi), it)
    return gain


def critical_gain_or_inf(builder, bracket, rel_tol=1e-3, zero_tol=DEFAULT_ZERO_TOL) -> float:
    """As :func:`critical_gain`, but ``inf`` when the whole bracket is stable."""
    try:
        return critical_gain(builder, bracket, rel_tol, zero_tol)
    except BracketError as exc:
        if all(f < 0 for f in exc.abscissas):
            return math.inf
        raise


@dataclass(frozen=True)
class StabilityBoundary:
    kp: np.ndarray
    kq: np.ndarray
    abscissa: np.ndarray  # shape (len(kq), len(kp))
    verdicts: np.ndarray
    boundary: tuple[tuple[float, float], ...]
    kind: str

    @property
    def axes(self):
        return self.kp, self.kq


def stability_region(
    builder: Callable[[float, float], LinearStateSpace],
    kp_values,
    kq_values,
    kind: str = "",
    zero_tol: float = DEFAULT_ZERO_TOL,
    refine_tol: float = 1e-3,
    workers: int | None = None,
) -> StabilityBoundary:
    """Evaluate stability on a (kp, kq) grid and trace the boundary.

    ``builder(kp, kq)`` gives the linear model.  For each kq row the first
    stable-to-unstable transition along kp is refined by bisection.
    """
    kp_values = np.asarray(kp_values, dtype=float)
    kq_values = np.asarray(kq_values, dtype=float)
    if np.any(kp_values <= 0) or np.any(kq_values <= 0):
        raise ValueError("gain ranges must be positive")
    cells = [(i, j) for i in range(len(kq_values)) for j in range(len(kp_values))]

    def one(cell):
        i, j = cell
        return _abscissa_or_unstable(lambda: builder(kp_values[j], kq_values[i]), zero_tol)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        values = list(pool.map(one, cells))
    absc = np.array(values).reshape(len(kq_values), len(kp_values))
    verdicts = absc < 0

    def refine(i):
        row = verdicts[i]
        for j in range(len(kp_values) - 1):
            if row[j] and not row[j + 1]:
                kq = kq_values[i]
                kp = critical_gain(
                    lambda g: builder(g, kq), (kp_values[j], kp_values[j + 1]), refine_tol, zero_tol
                )
                return (float(kp), float(kq))
        return None

    with ThreadPoolExecutor(max_workers=workers) as pool:
        points = [p for p in pool.map(refine, range(len(kq_values))) if p is not None]
    return StabilityBoundary(kp_values, kq_values, absc, verdicts, tuple(points), kind)


def twobus_coefficients(r: float, x: float) -> tuple[float, float]:
    """Susceptance and conductance ``(B, G)`` of a series connection."""
    z2 = r * r + x * x
    return x / z2, r / z2


def bound_conventional(r: float, x: float, gains: DroopGains, tau: float) -> float:
    """Largest stable ``mp`` (rad/s per pu) of the quasi-stationary two-bus model.

    Returns ``(1 + nq*B)**2 / (nq * tau * G**2)`` and ``inf`` when ``G = 0``.
    """
    nq = gains.nq
    if r < 0 or x < 0 or not tau > 0:
        raise ValueError("bound_conventional needs r, x >= 0 and tau > 0")
    if r == 0:
        return math.inf
    b, g = twobus_coefficients(r, x)
    return (1.0 + nq * b) ** 2 / (nq * tau * g * g)


def bound_hifi(r: float, x: float, sn: float = 1.0, tau: float = 1.0 / 31.4, w0: float = 100 * math.pi, u0: float = 1.0):
    """Normalized gains ``(kp_max, kq_max)`` beyond which ``tau/mp - B'`` or ``tau/nq - B'`` loses sign."""
    if r < 0 or x < 0:
        raise ValueError("r and x must be non-negative")
    if r == 0 or x == 0:
        return math.inf, math.inf
    core = (r * r + x * x) ** 2 / (2.0 * r * x * x)
    return sn * core, tau * w0 * (sn / u0) * core


def gain_builder(net, inverters, kind: str, axis: str = "kp", other_scale: float = 1.0, virtual_resistance=None):
    """Builder ``g -> LinearStateSpace`` sweeping one normalized gain uniformly.

    ``g`` is the absolute gain of the first inverter; every inverter is scaled
    by the same multiplier, so relative differences between units persist.
    The other axis is scaled by ``other_scale``.
    """
    if axis not in ("kp", "kq"):
        raise ValueError("axis must be 'kp' or 'kq'")
    ref = getattr(inverters[0].gains, axis)
    extra = {} if virtual_resistance is None else {"virtual_resistance": virtual_resistance}

    def build(g: float) -> LinearStateSpace:
        m = g / ref
        scales = (m, other_scale) if axis == "kp" else (other_scale, m)
        return build_network_model(net, [inv.scaled(*scales) for inv in inverters], kind, **extra)

    return build


def region_builder(net, inverters, kind: str, virtual_resistance=None):
    """Builder ``(kp, kq) -> LinearStateSpace`` with absolute gains of the first inverter."""
    kp0, kq0 = inverters[0].gains.kp, inverters[0].gains.kq
    extra = {} if virtual_resistance is None else {"virtual_resistance": virtual_resistance}

    def build(kp: float, kq: float) -> LinearStateSpace:
        return build_network_model(net, [inv.scaled(kp / kp0, kq / kq0) for inv in inverters], kind, **extra)

    return build

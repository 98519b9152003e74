"""Time-domain integration, disturbances and the runtime benchmark.

Two solver families:

* ``trapezoidal``: TR-BDF2, a trapezoidal stage followed by a BDF2 stage
  sharing one iteration matrix.  L-stable, so the very fast virtual-resistor
  modes of the full model are damped instead of resolved.
* ``explicit``: the Dormand-Prince 5(4) pair from scipy.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.integrate import RK45

from .errors import IntegrationError, MicrogridError
from .models import build_network_nonlinear
from .models.statespace import LinearStateSpace, NonlinearModel

SOLVERS = ("trapezoidal", "explicit")
DIVERGENCE_LIMIT = 1e6
OUTPUT_NAMES = ("P", "Q", "omega", "U")


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (steps, dimension)
    labels: tuple
    solver: str
    accepted: int
    rejected: int
    outputs: dict = field(default_factory=dict)  # name -> (steps, n_inverters)
    diverged_at: int | None = None  # index of the first step beyond the divergence limit

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def sample(self, t_grid, name: str | None = None) -> np.ndarray:
        """Linear interpolation of the states (or one output) onto ``t_grid``."""
        data = self.states if name is None else self.outputs[name]
        t_grid = np.asarray(t_grid, dtype=float)
        return np.column_stack([np.interp(t_grid, self.t, col) for col in data.T])

    def to_csv(self, target=None) -> str:
        """CSV with header ``t,<label>...`` and 15 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [str(lab) for lab in self.labels])
        for tk, row in zip(self.t, self.states):
            writer.writerow([f"{tk:.15g}"] + [f"{v:.15g}" for v in row])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _system(model):
    if isinstance(model, LinearStateSpace):
        a = model.a
        return (lambda x: a @ x), (lambda x: a), np.zeros(model.dimension), None
    if isinstance(model, NonlinearModel):
        return model.rhs, model.jac, model.equilibrium, model.outputs
    raise TypeError(f"cannot integrate {type(model).__name__}")


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


_GAMMA = 2.0 - math.sqrt(2.0)
_D = _GAMMA / 2.0
_ERR_K = (-3.0 * _GAMMA**2 + 4.0 * _GAMMA - 2.0) / (12.0 * (2.0 - _GAMMA))


class _TRBDF2:
    def __init__(self, f, jac, rtol, atol, max_step, fixed_step=None):
        self.f, self.jac = f, jac
        self.rtol, self.atol = rtol, atol
        self.max_step = max_step
        self.fixed = fixed_step
        self.j = None
        self.lu = None
        self.lu_h = None
        self.accepted = 0
        self.rejected = 0

    def _factor(self, h):
        if self.lu is None or self.lu_h != h:
            m = np.eye(self.j.shape[0]) - _D * h * self.j
            self.lu = scipy.linalg.lu_factor(m, check_finite=False)
            self.lu_h = h

    def _newton(self, z, base, h, scale):
        """Solve ``z - d h f(z) = base`` with the frozen iteration matrix."""
        prev = None
        for it in range(8):
            fz = self.f(z)
            dz = scipy.linalg.lu_solve(self.lu, base + _D * h * fz - z, check_finite=False)
            z = z + dz
            norm = _rms(dz / scale)
            if not np.isfinite(norm):
                return None, it + 1
            if norm < 1e-3:
                return z, it + 1
            if prev is not None:
                rate = norm / prev
                if rate >= 1.0:
                    return None, it + 1
                if rate / (1.0 - rate) * norm < 0.03:
                    return z, it + 1
            prev = norm
        return None, 8

    def step(self, t, y, fy, h):
        """One attempt. Returns ``(y_new, f_new, err_norm)`` or ``None`` if Newton failed."""
        self._factor(h)
        scale = self.atol + self.rtol * np.abs(y)
        z, its1 = self._newton(y + _GAMMA * h * fy, y + _D * h * fy, h, scale)
        if z is None:
            return None
        fz = self.f(z)
        base = (z - (1.0 - _GAMMA) ** 2 * y) / (_GAMMA * (2.0 - _GAMMA))
        guess = y + h * fz
        y1, its2 = self._newton(guess, base, h, scale)
        if y1 is None:
            return None
        f1 = self.f(y1)
        est = 2.0 * _ERR_K * h * (fy / _GAMMA - fz / (_GAMMA * (1.0 - _GAMMA)) + f1 / (1.0 - _GAMMA))
        est = scipy.linalg.lu_solve(self.lu, est, check_finite=False)
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y1))
        return y1, f1, _rms(est / scale), max(its1, its2)


def integrate(
    model: NonlinearModel | LinearStateSpace,
    x0=None,
    t_end: float = 1.0,
    solver: str = "trapezoidal",
    rtol: float = 1e-6,
    atol: float = 1e-9,
    max_step: float = math.inf,
    max_steps: int = 200_000,
    fixed_step: float | None = None,
    first_step: float | None = None,
) -> Trajectory:
    """Integrate ``model`` from ``x0`` (default: its equilibrium) over ``[0, t_end]``.

    Linear models are integrated in deviation coordinates (equilibrium 0).
    ``fixed_step`` forces constant steps on the trapezoidal path.  A run whose
    state leaves ``|x| <= 1e6`` stops early with ``diverged_at`` set.
    """
    if solver not in SOLVERS:
        raise ValueError(f"solver must be one of {SOLVERS}")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    f, jac, eq, outputs = _system(model)
    y = np.array(eq if x0 is None else x0, dtype=float)
    if y.shape != eq.shape:
        raise ValueError(f"x0 has shape {y.shape}, model dimension is {eq.shape[0]}")
    if solver == "explicit":
        ts, ys, acc, rej = _run_explicit(f, y, t_end, rtol, atol, max_step, max_steps)
    else:
        ts, ys, acc, rej = _run_trbdf2(f, jac, y, t_end, rtol, atol, max_step, max_steps, fixed_step, first_step)
    t = np.array(ts)
    states = np.array(ys)
    bad = ~np.all(np.isfinite(states), axis=1) | (np.abs(states).max(axis=1) > DIVERGENCE_LIMIT)
    diverged_at = int(np.argmax(bad)) if bad.any() else None
    outs = {}
    if outputs is not None:
        cols = [outputs(x) for x in states]
        for k, name in enumerate(OUTPUT_NAMES):
            outs[name] = np.array([c[k] for c in cols])
    return Trajectory(t, states, tuple(model.labels), solver, acc, rej, outs, diverged_at)


def _diverging(y) -> bool:
    return not np.all(np.isfinite(y)) or np.abs(y).max() > DIVERGENCE_LIMIT


def _run_explicit(f, y, t_end, rtol, atol, max_step, max_steps):
    rk = RK45(lambda t, x: f(x), 0.0, y, t_end, rtol=rtol, atol=atol, max_step=max_step)
    ts, ys = [0.0], [y.copy()]
    while rk.status == "running":
        if len(ts) > max_steps:
            raise IntegrationError(f"explicit solver exceeded {max_steps} steps at t = {rk.t:.6g} s", rk.t)
        msg = rk.step()
        if rk.status == "failed":
            raise IntegrationError(f"explicit solver failed at t = {rk.t:.6g} s: {msg}", rk.t)
        ts.append(rk.t)
        ys.append(rk.y.copy())
        if _diverging(rk.y):
            break
    accepted = len(ts) - 1
    attempts = max(accepted, (rk.nfev - 2) // 6)
    return ts, ys, accepted, attempts - accepted


def _run_trbdf2(f, jac, y, t_end, rtol, atol, max_step, max_steps, fixed_step, first_step):
    stepper = _TRBDF2(f, jac, rtol, atol, max_step)
    t = 0.0
    fy = f(y)
    stepper.j = jac(y)
    if fixed_step is not None:
        h = float(fixed_step)
    elif first_step is not None:
        h = float(first_step)
    else:
        scale = atol + rtol * np.abs(y)
        d0, d1 = _rms(y / scale), _rms(fy / scale)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, 1e-3)
    h = min(h, max_step, t_end)
    ts, ys = [0.0], [y.copy()]
    fresh_jac = True
    while t < t_end:
        if stepper.accepted + stepper.rejected > max_steps:
            raise IntegrationError(f"implicit solver exceeded {max_steps} steps at t = {t:.6g} s", t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t = {t:.6g} s", t)
        h_try = min(h, t_end - t)
        if t + h_try >= t_end * (1 - 1e-12):
            h_try = t_end - t
        out = stepper.step(t, y, fy, h_try)
        if out is None:
            stepper.rejected += 1
            if not fresh_jac:
                stepper.j = jac(y)
                stepper.lu = None
                fresh_jac = True
            else:
                h = h_try * 0.25
            continue
        y1, f1, err, its = out
        if fixed_step is None and err > 1.0:
            stepper.rejected += 1
            h = h_try * max(0.2, 0.9 * err ** (-1.0 / 3.0))
            continue
        t = t + h_try if h_try != t_end - t else t_end
        y, fy = y1, f1
        stepper.accepted += 1
        ts.append(t)
        ys.append(y.copy())
        if _diverging(y):
            break
        if its > 3:
            stepper.j = jac(y)
            stepper.lu = None
            fresh_jac = True
        else:
            fresh_jac = False
        if fixed_step is None:
            factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
            # keep the factorization when the change is small
            h_new = h_try * factor
            h = h_try if 1.0 <= factor < 1.2 else min(h_new, max_step)
        else:
            h = fixed_step
    return ts, ys, stepper.accepted, stepper.rejected


def angle_kick(model, node_index: int = 0, delta: float = 1e-3) -> np.ndarray:
    """Equilibrium with the angle of one inverter shifted by ``delta`` rad."""
    x0 = np.array(model.equilibrium if isinstance(model, NonlinearModel) else np.zeros(model.dimension), dtype=float)
    idx = [k for k, lab in enumerate(model.labels) if lab.kind == "angle"]
    x0[idx[node_index]] += delta
    return x0


def droop_step(net, inverters, kind: str, kp_scale: float = 1.0, kq_scale: float = 1.0, **kw):
    """Model after a droop-gain step, and the pre-step equilibrium as initial state.

    Setpoints are frozen at their pre-step values, so the operating point
    moves to a new equilibrium.
    """
    before = build_network_nonlinear(net, inverters, kind, **kw)
    after_invs = [inv.scaled(kp_scale, kq_scale) for inv in before.inverters]
    after = build_network_nonlinear(net, after_invs, kind, **kw)
    return after, before.equilibrium.copy()


def load_step(net, inverters, kind: str, load_index: int, conductance_scale: float, **kw):
    """Model after scaling one load's admittance, and the pre-step initial state."""
    if not conductance_scale > 0:
        raise ValueError("conductance_scale must be positive")
    before = build_network_nonlinear(net, inverters, kind, **kw)
    loads = list(net.loads)
    ld = loads[load_index]
    loads[load_index] = replace(ld, r=ld.r / conductance_scale, x=ld.x / conductance_scale)
    after = build_network_nonlinear(replace(net, loads=tuple(loads)), list(before.inverters), kind, **kw)
    return after, before.equilibrium.copy()


@dataclass(frozen=True)
class BenchRecord:
    kind: str
    n_inverters: int
    n_states: int
    solver: str
    wall_time: float
    accepted: int
    rejected: int
    error: str | None = None


def bench(
    scenarios,
    kinds=("full", "hifi3"),
    solvers=("trapezoidal",),
    t_end: float = 1.0,
    repeats: int = 5,
    kick: float = 1e-3,
    max_steps: int = 200_000,
    timer: Callable[[], float] = time.perf_counter,
) -> list[BenchRecord]:
    """Time a 1-s run after a small angle kick for every scenario, kind and solver.

    Wall time is the median of ``repeats`` runs after one warm-up.  Runs are
    sequential so that timings do not compete for cores.
    """
    records = []
    for sc in scenarios:
        n = len(sc.inverters)
        for kind in kinds:
            try:
                model = build_network_nonlinear(sc.network, sc.inverters, kind, sc.virtual_resistance)
            except MicrogridError as exc:
                for solver in solvers:
                    records.append(BenchRecord(kind, n, 0, solver, math.nan, 0, 0, str(exc)))
                continue
            x0 = angle_kick(model, 0, kick)
            for solver in solvers:
                try:
                    traj = integrate(model, x0, t_end, solver, max_steps=max_steps)
                    times = []
                    for _ in range(repeats):
                        start = timer()
                        integrate(model, x0, t_end, solver, max_steps=max_steps)
                        times.append(timer() - start)
                    records.append(
                        BenchRecord(kind, n, model.dimension, solver, statistics.median(times), traj.accepted, traj.rejected)
                    )
                except MicrogridError as exc:
                    records.append(BenchRecord(kind, n, model.dimension, solver, math.nan, 0, 0, str(exc)))
    return records

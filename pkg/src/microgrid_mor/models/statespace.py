from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MODEL_KINDS = ("full", "simple3", "hifi3")
STATE_KINDS = ("angle", "frequency", "voltage", "current_d", "current_q")


@dataclass(frozen=True)
class StateLabel:
    """Tag of one state.

    ``time_constant`` is the physical coefficient of the state's derivative
    (``x/w0`` for a branch current, zero otherwise); the reduction module uses
    it as the fast time-scale parameter.
    """

    kind: str
    owner: str
    time_constant: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in STATE_KINDS:
            raise ValueError(f"unknown state kind {self.kind!r}")

    @property
    def is_current(self) -> bool:
        return self.kind in ("current_d", "current_q")

    def __str__(self) -> str:
        return f"{self.kind}[{self.owner}]"


def inverter_labels(nodes) -> list[StateLabel]:
    nodes = list(nodes)
    return (
        [StateLabel("angle", n) for n in nodes]
        + [StateLabel("frequency", n) for n in nodes]
        + [StateLabel("voltage", n) for n in nodes]
    )


@dataclass(frozen=True)
class LinearStateSpace:
    a: np.ndarray
    labels: tuple[StateLabel, ...]
    kind: str

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "labels", tuple(self.labels))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"system matrix must be square, got shape {a.shape}")
        if len(self.labels) != a.shape[0]:
            raise ValueError(f"{len(self.labels)} labels for a {a.shape[0]}-state system")
        if not np.all(np.isfinite(a)):
            raise ValueError("system matrix has non-finite entries")

    @property
    def dimension(self) -> int:
        return self.a.shape[0]

    @property
    def inverter_nodes(self) -> list[str]:
        return [lab.owner for lab in self.labels if lab.kind == "angle"]

    def indices(self, kind: str) -> np.ndarray:
        return np.array([k for k, lab in enumerate(self.labels) if lab.kind == kind], dtype=int)


@dataclass(frozen=True)
class NonlinearModel:
    """Autonomous ODE ``dx/dt = rhs(x)`` with a known equilibrium.

    ``residual_scale`` multiplies ``rhs`` row-wise to give the residual of the
    equations in their physical (descriptor) form, e.g. ``L dI/dt = ...`` for
    currents.  ``outputs(x)`` returns ``(P, Q, omega, U)`` per inverter.
    ``equilibrium`` is the flat start, which is an exact equilibrium when
    setpoints were back-solved by the builder.
    """

    rhs: Callable[[np.ndarray], np.ndarray]
    equilibrium: np.ndarray
    labels: tuple[StateLabel, ...]
    kind: str
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    outputs: Callable[[np.ndarray], tuple] | None = None
    residual_scale: np.ndarray | None = field(default=None, repr=False)
    inverters: tuple = field(default=(), repr=False)  # with resolved setpoints

    @property
    def dimension(self) -> int:
        return len(self.equilibrium)

    @property
    def inverter_nodes(self) -> list[str]:
        return [lab.owner for lab in self.labels if lab.kind == "angle"]

    def residual(self, x: np.ndarray | None = None) -> np.ndarray:
        x = self.equilibrium if x is None else x
        r = self.rhs(x)
        if self.residual_scale is not None:
            r = r * self.residual_scale
        return r

    def jac(self, x: np.ndarray) -> np.ndarray:
        if self.jacobian is not None:
            return self.jacobian(x)
        return finite_difference_jacobian(self.rhs, x)


def finite_difference_jacobian(f, x, step: float = 1e-6) -> np.ndarray:
    """Central differences with a per-component step ``step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = np.asarray(f(x))
    jac = np.empty((f0.size, n))
    for i in range(n):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (f(xp) - f(xm)) / (2.0 * h)
    return jac

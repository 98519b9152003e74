"""Singular-perturbation elimination of fast states from a linear system.

The system is partitioned as::

    dxs/dt        = A_ss xs + A_sf xf
    Gamma dxf/dt  = A_fs xs + A_ff xf

Zero order drops ``Gamma dxf/dt``; first order lets ``xf`` follow ``xs`` and
``dxs/dt``, which turns into a mass matrix on the slow derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ReductionError
from .models.statespace import LinearStateSpace, StateLabel

COND_LIMIT = 1e12


@dataclass(frozen=True)
class PartitionedLinear:
    a_ss: np.ndarray
    a_sf: np.ndarray
    a_fs: np.ndarray
    a_ff: np.ndarray
    gamma: np.ndarray  # diagonal entries, seconds; zero marks an algebraic row
    slow_labels: tuple[StateLabel, ...] | None = None

    def __post_init__(self) -> None:
        a_ss, a_sf, a_fs, a_ff = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.a_ss, self.a_sf, self.a_fs, self.a_ff))
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim == 2:
            if np.any(gamma - np.diag(np.diag(gamma))):
                raise ValueError("gamma must be diagonal")
            gamma = np.diag(gamma).copy()
        gamma = np.atleast_1d(gamma)
        ns, nf = a_ss.shape[0], a_ff.shape[0]
        shapes = {
            "a_ss": (a_ss.shape, (ns, ns)),
            "a_sf": (a_sf.shape, (ns, nf)),
            "a_fs": (a_fs.shape, (nf, ns)),
            "a_ff": (a_ff.shape, (nf, nf)),
            "gamma": (gamma.shape, (nf,)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise ValueError(f"{name} has shape {got}, expected {want}")
        if np.any(gamma < 0):
            raise ValueError("gamma entries must be non-negative")
        for name, value in zip(("a_ss", "a_sf", "a_fs", "a_ff", "gamma"), (a_ss, a_sf, a_fs, a_ff, gamma)):
            object.__setattr__(self, name, value)

    @property
    def n_slow(self) -> int:
        return self.a_ss.shape[0]

    @property
    def n_fast(self) -> int:
        return self.a_ff.shape[0]

    def full_matrix(self) -> np.ndarray:
        """Unpartitioned ``A`` (requires all ``gamma > 0``)."""
        if np.any(self.gamma == 0):
            raise ValueError("algebraic fast rows have no explicit state-space form")
        return np.block([[self.a_ss, self.a_sf], [self.a_fs / self.gamma[:, None], self.a_ff / self.gamma[:, None]]])


def _solve_fast(p: PartitionedLinear, rhs: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(p.a_ff)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ReductionError(f"fast block A_ff is singular (cond = {cond:.3g})")
    return np.linalg.solve(p.a_ff, rhs)


def reduce_zero_order(p: PartitionedLinear) -> np.ndarray:
    """Quasi-stationary elimination ``A_ss - A_sf A_ff^-1 A_fs``."""
    return p.a_ss - p.a_sf @ _solve_fast(p, p.a_fs)


def reduce_first_order(p: PartitionedLinear) -> np.ndarray:
    """First-order elimination.

    ``(I + A_sf A_ff^-1 Gamma A_ff^-1 A_fs) dxs/dt = (A_ss - A_sf A_ff^-1 A_fs) xs``,
    returned as an explicit matrix.
    """
    ff_fs = _solve_fast(p, p.a_fs)
    a0 = p.a_ss - p.a_sf @ ff_fs
    mass = np.eye(p.n_slow) + p.a_sf @ _solve_fast(p, p.gamma[:, None] * ff_fs)
    sv = np.linalg.svd(mass, compute_uv=False)
    if sv[-1] == 0 or sv[0] / sv[-1] > COND_LIMIT:
        raise ReductionError(f"first-order mass matrix is singular (smallest singular value {sv[-1]:.3g})")
    return np.linalg.solve(mass, a0)


def partition_by_labels(ss: LinearStateSpace, fast: Callable[[StateLabel], bool]) -> PartitionedLinear:
    """Split ``ss`` into slow/fast blocks using a label predicate.

    Fast rows are rescaled to ``Gamma dxf/dt = ...`` with ``Gamma`` taken from
    the labels' time constants.  A zero time constant would make the row
    vanish, so such states must not be selected as fast here.
    """
    mask = np.array([bool(fast(lab)) for lab in ss.labels])
    if not mask.any() or mask.all():
        raise ValueError("fast-state selection must be a non-empty strict subset")
    f = np.flatnonzero(mask)
    s = np.flatnonzero(~mask)
    gamma = np.array([ss.labels[k].time_constant for k in f])
    if np.any(gamma <= 0):
        bad = [str(ss.labels[k]) for k in f[gamma <= 0]]
        raise ValueError(f"fast states without a physical time constant: {bad}")
    a = ss.a
    return PartitionedLinear(
        a_ss=a[np.ix_(s, s)],
        a_sf=a[np.ix_(s, f)],
        a_fs=gamma[:, None] * a[np.ix_(f, s)],
        a_ff=gamma[:, None] * a[np.ix_(f, f)],
        gamma=gamma,
        slow_labels=tuple(ss.labels[k] for k in s),
    )


def reduce_model(ss: LinearStateSpace, fast: Callable[[StateLabel], bool], order: int = 1) -> LinearStateSpace:
    p = partition_by_labels(ss, fast)
    if order == 0:
        a = reduce_zero_order(p)
    elif order == 1:
        a = reduce_first_order(p)
    else:
        raise ValueError("order must be 0 or 1")
    return LinearStateSpace(a, p.slow_labels, ss.kind if order == 0 else f"{ss.kind}-reduced")

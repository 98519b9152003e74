"""Network topology and Laplace-domain admittance matrices.

Every series element has impedance ``z(s) = r + j*x + s*x/w0`` in the frame
rotating at ``w0``.  The nodal matrix is expanded to first order,
``Y(s) ~ Y0 + s*Y1``, Kron-reduced onto the source nodes (inverter terminals
plus an optional infinite bus) and finally split into a zero-row-sum network
part and a diagonal shunt part.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import AssemblyError, ReductionError
from .perunit import PerUnitBase

ROW_SUM_RTOL = 1e-10


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    r: float
    x: float
    name: str = ""
    kind: str = "line"  # "line" | "coupling"

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise ValueError(f"branch {self.name or '?'} connects bus {self.from_bus!r} to itself")
        if self.r < 0 or self.x < 0:
            raise ValueError(f"branch {self.name or '?'} has negative r or x")
        if not self.r + self.x > 0:
            raise ValueError(f"branch {self.name or '?'} has zero impedance; merge the buses instead")

    @property
    def label(self) -> str:
        return self.name or f"{self.from_bus}-{self.to_bus}"

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class Load:
    """Series R-L shunt to ground; ``x == 0`` is a static resistive load."""

    bus: str
    r: float
    x: float = 0.0
    name: str = ""

    def __post_init__(self) -> None:
        if not self.r > 0:
            raise ValueError(f"load at {self.bus!r} must have r > 0")
        if self.x < 0:
            raise ValueError(f"load at {self.bus!r} has negative x")

    @property
    def label(self) -> str:
        return self.name or f"load@{self.bus}"

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class NetworkSpec:
    base: PerUnitBase
    inverter_nodes: tuple[str, ...]
    buses: tuple[str, ...]  # interior (non-source) buses
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...] = ()
    infinite_bus: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "inverter_nodes", tuple(self.inverter_nodes))
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "loads", tuple(self.loads))
        self._validate()

    @property
    def source_nodes(self) -> tuple[str, ...]:
        """Nodes with an imposed voltage: inverter terminals, then the infinite bus."""
        if self.infinite_bus is None:
            return self.inverter_nodes
        return self.inverter_nodes + (self.infinite_bus,)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.source_nodes + self.buses

    def index(self) -> dict[str, int]:
        return {name: k for k, name in enumerate(self.nodes)}

    def _validate(self) -> None:
        if not self.inverter_nodes:
            raise AssemblyError("network has no inverter nodes")
        counts = Counter(self.nodes)
        dup = [name for name, c in counts.items() if c > 1]
        if dup:
            raise AssemblyError(f"duplicate node identifiers: {dup}")
        idx = self.index()
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in idx:
                    raise AssemblyError(f"branch {br.label} references unknown bus {end!r}")
        for ld in self.loads:
            if ld.bus not in idx:
                raise AssemblyError(f"load {ld.label} references unknown bus {ld.bus!r}")
            if ld.bus == self.infinite_bus:
                raise AssemblyError("loads on the infinite bus have no effect; remove them")
        labels = Counter(b.label for b in self.branches)
        dup = [name for name, c in labels.items() if c > 1]
        if dup:
            raise AssemblyError(f"duplicate branch names: {dup}")
        n = len(self.nodes)
        if self.branches:
            rows = [idx[b.from_bus] for b in self.branches]
            cols = [idx[b.to_bus] for b in self.branches]
            graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            ncomp, _ = connected_components(graph, directed=False)
        else:
            ncomp = n
        if ncomp != 1:
            raise AssemblyError(f"network graph is disconnected ({ncomp} components)")


def branch_admittance(branch: Branch | Load, s: complex, w0: float) -> complex:
    """Series admittance ``1/(r + jx + s*x/w0)`` at complex frequency ``s``."""
    return 1.0 / (branch.r + 1j * branch.x + s * branch.x / w0)


def branch_admittance_derivative(branch: Branch | Load, w0: float) -> complex:
    """``d/ds`` of :func:`branch_admittance` at ``s = 0``."""
    z = complex(branch.r, branch.x)
    return -(branch.x / w0) / z**2


def nodal_matrices(net: NetworkSpec, s: complex | None = None):
    """Full nodal matrices over ``net.nodes``.

    Returns ``(Y0, Y1)`` when ``s`` is None, otherwise ``Y(s)``.
    """
    idx = net.index()
    n = len(idx)
    w0 = net.base.w0
    mats = [np.zeros((n, n), dtype=complex) for _ in range(1 if s is not None else 2)]

    def stamp(i, j, values):
        for m, v in zip(mats, values):
            m[i, i] += v
            if j is not None:
                m[j, j] += v
                m[i, j] -= v
                m[j, i] -= v

    for br in net.branches:
        if s is not None:
            vals = (branch_admittance(br, s, w0),)
        else:
            vals = (branch_admittance(br, 0.0, w0), branch_admittance_derivative(br, w0))
        stamp(idx[br.from_bus], idx[br.to_bus], vals)
    for ld in net.loads:
        if s is not None:
            vals = (branch_admittance(ld, s, w0),)
        else:
            vals = (branch_admittance(ld, 0.0, w0), branch_admittance_derivative(ld, w0))
        stamp(idx[ld.bus], None, vals)
    return mats[0] if s is not None else tuple(mats)


def kron_reduce(y: np.ndarray, n_keep: int) -> np.ndarray:
    """Schur complement onto the leading ``n_keep`` nodes."""
    a, b = y[:n_keep, :n_keep], y[:n_keep, n_keep:]
    c, d = y[n_keep:, :n_keep], y[n_keep:, n_keep:]
    if d.size == 0:
        return a.copy()
    _check_interior(d)
    return a - b @ np.linalg.solve(d, c)


def kron_reduce_taylor(y0: np.ndarray, y1: np.ndarray, n_keep: int) -> tuple[np.ndarray, np.ndarray]:
    """Kron-reduce a first-order Taylor pair, keeping the exact first derivative.

    For ``Y(s) = [[A, B], [C, D]]`` the Schur complement ``A - B D^-1 C`` is
    differentiated term by term at ``s = 0``::

        S0 = A0 - B0 D0^-1 C0
        S1 = A1 - B1 D0^-1 C0 + B0 D0^-1 D1 D0^-1 C0 - B0 D0^-1 C1
    """
    k = n_keep
    a0, b0, c0, d0 = y0[:k, :k], y0[:k, k:], y0[k:, :k], y0[k:, k:]
    a1, b1, c1, d1 = y1[:k, :k], y1[:k, k:], y1[k:, :k], y1[k:, k:]
    if d0.size == 0:
        return a0.copy(), a1.copy()
    _check_interior(d0)
    d0_inv_c0 = np.linalg.solve(d0, c0)
    b0_d0_inv = np.linalg.solve(d0.T, b0.T).T
    s0 = a0 - b0 @ d0_inv_c0
    s1 = a1 - b1 @ d0_inv_c0 + b0_d0_inv @ d1 @ d0_inv_c0 - b0_d0_inv @ c1
    return s0, s1


def _check_interior(d: np.ndarray) -> None:
    cond = np.linalg.cond(d)
    if not np.isfinite(cond) or cond > 1e14:
        raise ReductionError(
            f"interior admittance block is singular (cond = {cond:.3g}); "
            "an interior bus is isolated from the sources"
        )


def split_row_sums(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``y`` into a zero-row-sum part and the diagonal surplus."""
    shunt = np.diag(y.sum(axis=1))
    return y - shunt, shunt


@dataclass(frozen=True)
class LaplaceAdmittance:
    """Reduced first-order admittance pair over the source nodes."""

    nodes: tuple[str, ...]
    y0: np.ndarray
    y1: np.ndarray
    y0_net: np.ndarray = field(repr=False)
    y0_shunt: np.ndarray = field(repr=False)
    y1_net: np.ndarray = field(repr=False)
    y1_shunt: np.ndarray = field(repr=False)

    @classmethod
    def from_pair(cls, nodes, y0, y1) -> LaplaceAdmittance:
        y0_net, y0_shunt = split_row_sums(y0)
        y1_net, y1_shunt = split_row_sums(y1)
        return cls(tuple(nodes), y0, y1, y0_net, y0_shunt, y1_net, y1_shunt)

    def evaluate(self, s: complex) -> np.ndarray:
        return self.y0 + s * self.y1


def assemble_taylor(net: NetworkSpec) -> LaplaceAdmittance:
    y0, y1 = nodal_matrices(net)
    s0, s1 = kron_reduce_taylor(y0, y1, len(net.source_nodes))
    return LaplaceAdmittance.from_pair(net.source_nodes, s0, s1)


class StructureMatrices(NamedTuple):
    """Real coupling matrices of the reduced droop model.

    ``b, g`` come from the network part of ``Y0``; ``b_t, g_t`` from its shunt
    part (factor 2 from the ``U**2`` dependence of impedance loads);
    ``b_p, g_p`` from ``Y1`` and carry units of seconds.
    """

    b: np.ndarray
    g: np.ndarray
    b_t: np.ndarray
    g_t: np.ndarray
    b_p: np.ndarray
    g_p: np.ndarray

    def subset(self, k: int) -> StructureMatrices:
        """Restrict to the leading ``k`` nodes (drops the infinite bus)."""
        return StructureMatrices(*(m[:k, :k] for m in self))


def structure_matrices(adm: LaplaceAdmittance, u0: float = 1.0) -> StructureMatrices:
    if not u0 > 0:
        raise ValueError("u0 must be positive")
    u2 = u0 * u0
    y1 = adm.y1_net + adm.y1_shunt
    return StructureMatrices(
        b=-u2 * adm.y0_net.imag,
        g=u2 * adm.y0_net.real,
        b_t=-2.0 * u2 * adm.y0_shunt.imag,
        g_t=2.0 * u2 * adm.y0_shunt.real,
        b_p=u2 * y1.imag,
        g_p=-u2 * y1.real,
    )


def merge_series_buses(net: NetworkSpec) -> NetworkSpec:
    """Eliminate load-free interior buses that join exactly two branches.

    Series impedances add exactly at every ``s`` because the ``s`` coefficient
    of each element is its own inductance, so the merge is lossless.
    """
    branches = list(net.branches)
    buses = list(net.buses)
    loaded = {ld.bus for ld in net.loads}
    changed = True
    while changed:
        changed = False
        for bus in buses:
            if bus in loaded:
                continue
            incident = [b for b in branches if bus in (b.from_bus, b.to_bus)]
            if len(incident) != 2:
                continue
            b1, b2 = incident
            end1 = b1.from_bus if b1.to_bus == bus else b1.to_bus
            end2 = b2.from_bus if b2.to_bus == bus else b2.to_bus
            if end1 == end2:
                continue
            kind = "coupling" if "coupling" in (b1.kind, b2.kind) else "line"
            merged = Branch(end1, end2, b1.r + b2.r, b1.x + b2.x, name=f"{b1.label}+{b2.label}", kind=kind)
            branches = [b for b in branches if b is not b1 and b is not b2] + [merged]
            buses.remove(bus)
            changed = True
            break
    if len(buses) == len(net.buses):
        return net
    return replace(net, buses=tuple(buses), branches=tuple(branches))

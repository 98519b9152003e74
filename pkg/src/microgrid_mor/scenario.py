"""Scenario files: physical-unit JSON in, per-unit network and inverters out.

Each inverter gets its own terminal node joined to its bus by the coupling
branch.  Zero-length lines short their end buses together.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import AssemblyError, ScenarioError
from .inverter import DroopInverter
from .network import Branch, Load, NetworkSpec
from .perunit import DroopGains, impedance_to_pu, make_base, normalize_droops
from .models.full import VIRTUAL_RESISTANCE

DEFAULT_ZERO_TOL = 1e-6

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["base", "inverters", "branches"],
    "properties": {
        "name": {"type": "string"},
        "base": {
            "type": "object",
            "additionalProperties": False,
            "required": ["u_base", "s_base", "f0"],
            "properties": {"u_base": _POSITIVE, "s_base": _POSITIVE, "f0": _POSITIVE},
        },
        "inverters": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["bus", "sn_kva", "mp", "nq", "wc", "rc_ohm", "lc_mh"],
                "properties": {
                    "name": {"type": "string"},
                    "bus": {"type": "string"},
                    "sn_kva": _POSITIVE,
                    "mp": _POSITIVE,
                    "nq": _POSITIVE,
                    "wc": _POSITIVE,
                    "rc_ohm": _NONNEG,
                    "lc_mh": _POSITIVE,
                },
            },
        },
        "branches": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["from", "to", "r_ohm_per_km", "l_mh_per_km", "length_km"],
                "properties": {
                    "name": {"type": "string"},
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "r_ohm_per_km": _NONNEG,
                    "l_mh_per_km": _NONNEG,
                    "length_km": _NONNEG,
                },
            },
        },
        "loads": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["bus", "z_real_ohm", "z_imag_ohm"],
                "properties": {
                    "name": {"type": "string"},
                    "bus": {"type": "string"},
                    "z_real_ohm": _POSITIVE,
                    "z_imag_ohm": _NONNEG,
                },
            },
        },
        "infinite_bus": {"type": "string"},
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"virtual_resistance_pu": _POSITIVE, "zero_tol": _POSITIVE},
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkSpec
    inverters: tuple[DroopInverter, ...]
    virtual_resistance: float = VIRTUAL_RESISTANCE
    zero_tol: float = DEFAULT_ZERO_TOL

    @property
    def base(self):
        return self.network.base

    def with_inverters(self, inverters) -> Scenario:
        return replace(self, inverters=tuple(inverters))

    def scaled(self, kp_scale: float = 1.0, kq_scale: float = 1.0) -> Scenario:
        return self.with_inverters(inv.scaled(kp_scale, kq_scale) for inv in self.inverters)


def _location(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return f"/{path}" if path else "(document root)"


def validate_document(doc) -> None:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ScenarioError(f"scenario invalid at {_location(first)}: {first.message}")


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, a: str) -> str:
        self.parent.setdefault(a, a)
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, keep: str, drop: str) -> None:
        self.parent[self.find(drop)] = self.find(keep)


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a :class:`Scenario` from a parsed JSON document."""
    validate_document(doc)
    b = doc["base"]
    base = make_base(b["u_base"], b["s_base"], b["f0"])
    infinite = doc.get("infinite_bus")
    invs = doc["inverters"]
    inv_nodes = [item.get("name", f"inv_{item['bus']}") for item in invs]

    declared = []
    for item in invs:
        declared.append(item["bus"])
    for item in doc["branches"]:
        declared += [item["from"], item["to"]]
    for item in doc.get("loads", []):
        declared.append(item["bus"])
    if infinite is not None:
        declared.append(infinite)
    clash = sorted(set(inv_nodes) & set(declared))
    if clash:
        raise ScenarioError(f"inverter node names collide with bus names: {clash}")

    # shorted buses collapse onto one representative (the infinite bus wins)
    uf = _UnionFind()
    for name in declared:
        uf.find(name)
    for k, item in enumerate(doc["branches"]):
        if item["length_km"] * (item["r_ohm_per_km"] + item["l_mh_per_km"]) == 0:
            a, c = item["from"], item["to"]
            if uf.find(c) == infinite:
                a, c = c, a
            uf.union(a, c)

    branches = []
    for node, item in zip(inv_nodes, invs):
        r, x = impedance_to_pu(item["rc_ohm"], item["lc_mh"] * 1e-3, base)
        branches.append(Branch(node, uf.find(item["bus"]), r, x, name=f"coupling:{node}", kind="coupling"))
    for k, item in enumerate(doc["branches"]):
        length = item["length_km"]
        ohm, mh = item["r_ohm_per_km"] * length, item["l_mh_per_km"] * length
        if ohm + mh == 0:
            continue
        a, c = uf.find(item["from"]), uf.find(item["to"])
        if a == c:
            raise ScenarioError(f"/branches/{k}: both ends are shorted to the same bus {a!r}")
        r, x = impedance_to_pu(ohm, mh * 1e-3, base)
        branches.append(Branch(a, c, r, x, name=item.get("name", f"line{k + 1}")))

    loads = []
    for k, item in enumerate(doc.get("loads", [])):
        bus = uf.find(item["bus"])
        if bus == infinite:
            raise ScenarioError(f"/loads/{k}: load sits on the infinite bus")
        loads.append(
            Load(bus, item["z_real_ohm"] / base.z_base, item["z_imag_ohm"] / base.z_base, name=item.get("name", ""))
        )

    interior = []
    for name in declared:
        rep = uf.find(name)
        if rep != infinite and rep not in interior:
            interior.append(rep)
    try:
        net = NetworkSpec(
            base=base,
            inverter_nodes=tuple(inv_nodes),
            buses=tuple(interior),
            branches=tuple(branches),
            loads=tuple(loads),
            infinite_bus=infinite,
        )
    except (ValueError, AssemblyError) as exc:
        raise ScenarioError(f"scenario does not form a valid network: {exc}") from exc

    inverters = []
    for node, item in zip(inv_nodes, invs):
        gains = normalize_droops(item["mp"], item["nq"], item["sn_kva"] * 1e3, base)
        inverters.append(DroopInverter(node, gains, tau=1.0 / item["wc"]))
    opts = doc.get("options", {})
    return Scenario(
        name=doc.get("name", ""),
        network=net,
        inverters=tuple(inverters),
        virtual_resistance=opts.get("virtual_resistance_pu", VIRTUAL_RESISTANCE),
        zero_tol=opts.get("zero_tol", DEFAULT_ZERO_TOL),
    )


def load_scenario(source) -> Scenario:
    """Load a scenario from a path, or a bundled fixture name such as ``table1_cascade``."""
    return scenario_from_dict(read_document(source))


def scenario_to_dict(sc: Scenario) -> dict:
    """Emit a document that reloads to an equivalent scenario.

    Branch impedances are written as one-kilometre lines in ohms and
    millihenries; inverter terminals keep their node names.
    """
    base = sc.base
    zb, w0 = base.z_base, base.w0
    coupling = {b.from_bus: b for b in sc.network.branches if b.kind == "coupling"}
    invs = []
    for inv in sc.inverters:
        cb = coupling.get(inv.node)
        if cb is None:
            raise ScenarioError(f"inverter {inv.node!r} has no coupling branch to emit")
        g = inv.gains
        invs.append(
            {
                "name": inv.node,
                "bus": cb.to_bus,
                "sn_kva": g.sn * base.s_base / 1e3,
                "mp": g.mp / base.s_base,
                "nq": g.nq * base.u_base / base.s_base,
                "wc": 1.0 / inv.tau,
                "rc_ohm": cb.r * zb,
                "lc_mh": cb.x * zb / w0 * 1e3,
            }
        )
    branches = [
        {
            "name": b.label,
            "from": b.from_bus,
            "to": b.to_bus,
            "r_ohm_per_km": b.r * zb,
            "l_mh_per_km": b.x * zb / w0 * 1e3,
            "length_km": 1.0,
        }
        for b in sc.network.branches
        if b.kind != "coupling"
    ]
    loads = [
        {"name": ld.name, "bus": ld.bus, "z_real_ohm": ld.r * zb, "z_imag_ohm": ld.x * zb} if ld.name
        else {"bus": ld.bus, "z_real_ohm": ld.r * zb, "z_imag_ohm": ld.x * zb}
        for ld in sc.network.loads
    ]
    doc = {
        "name": sc.name,
        "base": {"u_base": base.u_base, "s_base": base.s_base, "f0": base.f0},
        "inverters": invs,
        "branches": branches,
        "loads": loads,
        "options": {"virtual_resistance_pu": sc.virtual_resistance, "zero_tol": sc.zero_tol},
    }
    if sc.network.infinite_bus is not None:
        doc["infinite_bus"] = sc.network.infinite_bus
    return doc


def _round(v: float, digits: int = 12):
    return float(f"{v:.{digits}g}")


def canonical_form(sc: Scenario) -> dict:
    """Per-unit, order-independent description used for equality checks."""
    net = sc.network
    return {
        "base": [_round(net.base.u_base), _round(net.base.s_base), _round(net.base.w0)],
        "infinite_bus": net.infinite_bus,
        "inverters": sorted(
            (inv.node, _round(inv.gains.kp), _round(inv.gains.kq), _round(inv.gains.sn), _round(inv.tau))
            for inv in sc.inverters
        ),
        "buses": sorted(net.buses),
        "branches": sorted(
            (min(b.from_bus, b.to_bus), max(b.from_bus, b.to_bus), b.kind, _round(b.r), _round(b.x))
            for b in net.branches
        ),
        "loads": sorted((ld.bus, _round(ld.r), _round(ld.x)) for ld in net.loads),
        "options": [_round(sc.virtual_resistance), _round(sc.zero_tol)],
    }


def with_line_length(doc: dict, length_km: float) -> dict:
    """Copy of a scenario document with every line set to ``length_km``."""
    if length_km < 0 or not math.isfinite(length_km):
        raise ScenarioError("line length must be finite and non-negative")
    out = json.loads(json.dumps(doc))
    for item in out["branches"]:
        item["length_km"] = float(length_km)
    return out


def with_rating_scale(doc: dict, scale: float) -> dict:
    """Copy with every inverter rating multiplied by ``scale``.

    Normalized gains are kept, so the physical droop slopes shrink as the
    rating grows; coupling impedances are left unchanged.
    """
    if not scale > 0:
        raise ScenarioError("rating scale must be positive")
    out = json.loads(json.dumps(doc))
    for item in out["inverters"]:
        item["sn_kva"] *= scale
        item["mp"] /= scale
        item["nq"] /= scale
    return out


def with_line_impedance_scale(doc: dict, x_scale: float) -> dict:
    """Copy with every line inductance multiplied by ``x_scale`` (couplings untouched)."""
    if not x_scale > 0:
        raise ScenarioError("impedance scale must be positive")
    out = json.loads(json.dumps(doc))
    for item in out["branches"]:
        item["l_mh_per_km"] *= x_scale
    return out


def read_document(source) -> dict:
    path = Path(source)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        bundled = resources.files("microgrid_mor") / "data" / f"{source}.json"
        if not bundled.is_file():
            raise ScenarioError(f"no scenario file or bundled fixture named {str(source)!r}")
        text = bundled.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


CASCADE_MEAN_LINE_KM = (5 + 4.1 + 3 + 6) / 4


def identical_cascade_dict(n: int, line_km: float = CASCADE_MEAN_LINE_KM) -> dict:
    """``n`` default inverters on a radial chain of identical lines and loads."""
    if n < 1:
        raise ScenarioError("cascade needs at least one inverter")
    inv = {"sn_kva": 10.0, "mp": 9.3e-5, "nq": 1.3e-3, "wc": 31.4, "rc_ohm": 0.03, "lc_mh": 0.35}
    return {
        "name": f"identical_cascade_{n}",
        "base": {"u_base": 381.58, "s_base": 10000.0, "f0": 50.0},
        "inverters": [dict(inv, bus=f"b{k + 1}") for k in range(n)],
        "branches": [
            {"from": f"b{k + 1}", "to": f"b{k + 2}", "r_ohm_per_km": 0.165, "l_mh_per_km": 0.26, "length_km": line_km}
            for k in range(n - 1)
        ],
        "loads": [{"bus": f"b{k + 1}", "z_real_ohm": 20.0, "z_imag_ohm": 4.72} for k in range(n)],
    }


def identical_cascade(n: int, line_km: float = CASCADE_MEAN_LINE_KM) -> Scenario:
    return scenario_from_dict(identical_cascade_dict(n, line_km))


def with_gains(sc: Scenario, kp: float | None = None, kq: float | None = None) -> Scenario:
    """Set absolute normalized gains on every inverter."""
    out = []
    for inv in sc.inverters:
        g = inv.gains
        out.append(inv.with_gains(DroopGains(kp if kp is not None else g.kp, kq if kq is not None else g.kq, g.sn, g.w0, g.u0)))
    return sc.with_inverters(out)

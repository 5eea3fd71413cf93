"""Grid data model, JSON ingestion, validation, and scenario transforms.

External files use SI units (MW, Mvar, kV, km, A); power-flow internals
per-unitize on ``base_mva``. A loaded ``GridModel`` is immutable and safe
to share read-only across parallel workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .geometry import PqPolygon
from .market import CostFactors

DEFAULT_V_MIN = 0.9
DEFAULT_V_MAX = 1.1
DEFAULT_BASE_MVA = 25.0
DEFAULT_FREQUENCY = 50.0

FPU_KINDS = ("load", "pv", "wind", "dfig", "storage", "compensation", "other")


class GridError(ValueError):
    """Grid file violates an invariant; message names the offending entity."""


class GridParseError(GridError):
    """Grid file cannot be parsed; message carries the field location."""


class ConnectivityError(GridError):
    """A bus is unreachable from the slack."""

    def __init__(self, orphans):
        self.orphans = list(orphans)
        super().__init__(f"buses unreachable from slack: {self.orphans}")


@dataclass(frozen=True)
class Bus:
    id: int
    nominal_voltage: float          # kV
    v_min: float = DEFAULT_V_MIN    # pu
    v_max: float = DEFAULT_V_MAX    # pu


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    length: float        # km
    r_per_km: float      # Ohm/km
    l_per_km: float      # mH/km
    c_per_km: float      # uF/km
    i_th_max: float      # A


@dataclass(frozen=True)
class TapSpec:
    step_pct: float      # in-phase voltage change per tap, % of rated
    tap_min: int
    tap_max: int
    tap0: int = 0


@dataclass(frozen=True)
class Transformer:
    hv_bus: int
    lv_bus: int
    v_hv: float          # kV
    v_lv: float          # kV
    s_rated: float       # MVA
    v_sc: float          # %
    p_cu: float = 0.0    # kW
    i_oc: float = 0.0    # %
    p_fe: float = 0.0    # kW
    tap: TapSpec | None = None


@dataclass(frozen=True)
class Fpu:
    id: str
    bus: int
    kind: str
    polygon: PqPolygon   # absolute (P, Q) capability, MW/Mvar
    p_op: float
    q_op: float
    cost: CostFactors


@dataclass(frozen=True)
class GridModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    transformers: tuple[Transformer, ...]
    fpus: tuple[Fpu, ...]
    slack_bus: int
    slack_voltage: complex            # kV, complex phasor
    base_mva: float = DEFAULT_BASE_MVA
    frequency: float = DEFAULT_FREQUENCY
    base_injections: dict = field(default_factory=dict)  # bus id -> (P, Q) MW/Mvar

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def bus_index(self, bus_id: int) -> int:
        # ids are validated contiguous 1..k
        return bus_id - 1

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index(bus_id)]

    def fpus_at(self, bus_id: int) -> list[Fpu]:
        return [f for f in self.fpus if f.bus == bus_id]

    def flex_buses(self) -> list[int]:
        """Bus ids carrying at least one FPU, ascending."""
        return sorted({f.bus for f in self.fpus})

    def oltc_transformers(self) -> list[int]:
        """Indices into ``transformers`` that have a tap changer."""
        return [i for i, t in enumerate(self.transformers) if t.tap is not None]

    def injection_arrays(self):
        """Base net injections as (P, Q) arrays over all buses, MW/Mvar."""
        p = np.zeros(self.n_buses)
        q = np.zeros(self.n_buses)
        for bus_id, (pi, qi) in self.base_injections.items():
            idx = self.bus_index(int(bus_id))
            p[idx] = pi
            q[idx] = qi
        return p, q


def _req(obj, key, where):
    if key not in obj:
        raise GridParseError(f"{where}: missing field '{key}'")
    return obj[key]


def _num(obj, key, where, default=None):
    if key not in obj:
        if default is not None:
            return default
        raise GridParseError(f"{where}: missing field '{key}'")
    val = obj[key]
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise GridParseError(f"{where}.{key}: expected a number, got {val!r}")
    return float(val)


def _parse_cost(obj, where) -> CostFactors:
    signed_keys = ("c_s_p_plus", "c_s_p_minus", "c_s_q_plus", "c_s_q_minus")
    try:
        if any(k in obj for k in signed_keys):
            quad = {k: _num(obj, k, where) for k in signed_keys}
            return CostFactors(c_s_p=_num(obj, "c_s_p", where, default=quad["c_s_p_plus"]),
                               c_s_q=_num(obj, "c_s_q", where, default=quad["c_s_q_plus"]),
                               **quad)
        return CostFactors(c_s_p=_num(obj, "c_s_p", where),
                           c_s_q=_num(obj, "c_s_q", where))
    except ValueError as exc:
        raise GridParseError(f"{where}: {exc}") from None


def parse_grid(doc: dict, source: str = "<grid>") -> GridModel:
    """Build and validate a GridModel from a parsed JSON document."""
    buses = []
    for i, b in enumerate(_req(doc, "buses", source)):
        where = f"buses[{i}]"
        buses.append(Bus(
            id=int(_num(b, "id", where)),
            nominal_voltage=_num(b, "nominal_voltage", where),
            v_min=_num(b, "v_min", where, default=DEFAULT_V_MIN),
            v_max=_num(b, "v_max", where, default=DEFAULT_V_MAX),
        ))

    lines = []
    for i, ln in enumerate(doc.get("lines", [])):
        where = f"lines[{i}]"
        lines.append(Line(
            from_bus=int(_num(ln, "from_bus", where)),
            to_bus=int(_num(ln, "to_bus", where)),
            length=_num(ln, "length", where),
            r_per_km=_num(ln, "r_per_km", where),
            l_per_km=_num(ln, "l_per_km", where),
            c_per_km=_num(ln, "c_per_km", where),
            i_th_max=_num(ln, "i_th_max", where),
        ))

    transformers = []
    for i, t in enumerate(doc.get("transformers", [])):
        where = f"transformers[{i}]"
        tap = None
        if t.get("tap") is not None:
            tw = f"{where}.tap"
            tap = TapSpec(
                step_pct=_num(t["tap"], "step_pct", tw),
                tap_min=int(_num(t["tap"], "tap_min", tw)),
                tap_max=int(_num(t["tap"], "tap_max", tw)),
                tap0=int(_num(t["tap"], "tap0", tw, default=0.0)),
            )
        transformers.append(Transformer(
            hv_bus=int(_num(t, "hv_bus", where)),
            lv_bus=int(_num(t, "lv_bus", where)),
            v_hv=_num(t, "v_hv", where),
            v_lv=_num(t, "v_lv", where),
            s_rated=_num(t, "s_rated", where),
            v_sc=_num(t, "v_sc", where),
            p_cu=_num(t, "p_cu", where, default=0.0),
            i_oc=_num(t, "i_oc", where, default=0.0),
            p_fe=_num(t, "p_fe", where, default=0.0),
            tap=tap,
        ))

    fpus = []
    for i, f in enumerate(doc.get("fpus", [])):
        where = f"fpus[{i}]"
        verts = _req(f, "polygon", where)
        try:
            poly = PqPolygon(np.asarray(verts, dtype=float))
        except (ValueError, TypeError) as exc:
            raise GridParseError(f"{where}.polygon: {exc}") from None
        kind = f.get("kind", "other")
        if kind not in FPU_KINDS:
            raise GridParseError(f"{where}.kind: unknown FPU kind {kind!r}")
        fpus.append(Fpu(
            id=str(_req(f, "id", where)),
            bus=int(_num(f, "bus", where)),
            kind=kind,
            polygon=poly,
            p_op=_num(f, "p_op", where),
            q_op=_num(f, "q_op", where),
            cost=_parse_cost(_req(f, "cost", where), f"{where}.cost"),
        ))

    slack = _req(doc, "slack", source)
    slack_bus = int(_num(slack, "bus", "slack"))
    v_kv = _num(slack, "voltage_kv", "slack")
    angle = math.radians(_num(slack, "angle_deg", "slack", default=0.0))
    slack_voltage = v_kv * complex(math.cos(angle), math.sin(angle))

    base_injections = {}
    for key, pq in doc.get("base_injections", {}).items():
        try:
            bus_id = int(key)
            p, q = float(pq[0]), float(pq[1])
        except (ValueError, TypeError, IndexError):
            raise GridParseError(
                f"base_injections[{key!r}]: expected [P_mw, Q_mvar]") from None
        base_injections[bus_id] = (p, q)

    grid = GridModel(
        buses=tuple(buses),
        lines=tuple(lines),
        transformers=tuple(transformers),
        fpus=tuple(fpus),
        slack_bus=slack_bus,
        slack_voltage=slack_voltage,
        base_mva=_num(doc, "base_mva", source, default=DEFAULT_BASE_MVA),
        frequency=_num(doc, "frequency", source, default=DEFAULT_FREQUENCY),
        base_injections=base_injections,
    )
    validate(grid)
    return grid


def load_grid(path) -> GridModel:
    """Load and validate a grid JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GridParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_grid(doc, source=str(path))


def validate(grid: GridModel) -> None:
    """Check all model invariants; raises GridError naming the entity."""
    ids = [b.id for b in grid.buses]
    if len(set(ids)) != len(ids):
        raise GridError("bus ids are not unique")
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise GridError(f"bus ids must be contiguous 1..{len(ids)}, got {sorted(ids)}")
    id_set = set(ids)

    for b in grid.buses:
        if not (0.0 < b.v_min < b.v_max):
            raise GridError(f"bus {b.id}: need 0 < v_min < v_max, "
                            f"got ({b.v_min}, {b.v_max})")
        if b.nominal_voltage <= 0:
            raise GridError(f"bus {b.id}: nominal_voltage must be > 0")

    for i, ln in enumerate(grid.lines):
        if ln.from_bus == ln.to_bus:
            raise GridError(f"line {i}: from_bus == to_bus ({ln.from_bus})")
        for end in (ln.from_bus, ln.to_bus):
            if end not in id_set:
                raise GridError(f"line {i}: unknown bus {end}")
        if ln.length <= 0:
            raise GridError(f"line {i}: length must be > 0, got {ln.length}")
        if ln.i_th_max <= 0:
            raise GridError(f"line {i}: i_th_max must be > 0")
        v_f = grid.bus(ln.from_bus).nominal_voltage
        v_t = grid.bus(ln.to_bus).nominal_voltage
        if abs(v_f - v_t) > 1e-9 * max(v_f, v_t):
            raise GridError(f"line {i}: endpoints at different voltage levels "
                            f"({v_f} kV vs {v_t} kV); use a transformer")

    for i, t in enumerate(grid.transformers):
        for end in (t.hv_bus, t.lv_bus):
            if end not in id_set:
                raise GridError(f"transformer {i}: unknown bus {end}")
        if t.s_rated <= 0:
            raise GridError(f"transformer {i}: s_rated must be > 0")
        if not (0.0 < t.v_sc < 100.0):
            raise GridError(f"transformer {i}: need 0 < v_sc < 100, got {t.v_sc}")
        if t.tap is not None:
            tp = t.tap
            if not (tp.tap_min <= tp.tap0 <= tp.tap_max):
                raise GridError(f"transformer {i}: tap0 {tp.tap0} outside "
                                f"[{tp.tap_min}, {tp.tap_max}]")

    for f in grid.fpus:
        if f.bus not in id_set:
            raise GridError(f"FPU {f.id}: unknown bus {f.bus}")
        if not geometry.contains(f.polygon, (f.p_op, f.q_op)):
            raise GridError(f"FPU {f.id}: operating point ({f.p_op}, {f.q_op}) "
                            f"outside its polygon")

    if grid.slack_bus not in id_set:
        raise GridError(f"slack bus {grid.slack_bus} does not exist")
    for bus_id in grid.base_injections:
        if bus_id not in id_set:
            raise GridError(f"base_injections: unknown bus {bus_id}")
        if bus_id == grid.slack_bus:
            raise GridError("base_injections: slack bus carries no фspecified injection"
                            .replace("ф", ""))

    _check_connected(grid)


def _check_connected(grid: GridModel) -> None:
    adj = {b.id: set() for b in grid.buses}
    for ln in grid.lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    for t in grid.transformers:
        adj[t.hv_bus].add(t.lv_bus)
        adj[t.lv_bus].add(t.hv_bus)
    seen = {grid.slack_bus}
    stack = [grid.slack_bus]
    while stack:
        for nb in sorted(adj[stack.pop()]):
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    orphans = sorted(set(b.id for b in grid.buses) - seen)
    if orphans:
        raise ConnectivityError(orphans)


def scale_installed_power(grid: GridModel, factor: float) -> GridModel:
    """Scale every FPU polygon and operating point by ``factor`` about (0, 0).

    Models the halved-installed-power scenario; the network itself is
    untouched.
    """
    if factor <= 0:
        raise GridError(f"scale factor must be > 0, got {factor}")
    fpus = tuple(
        replace(f,
                polygon=PqPolygon(f.polygon.vertices * factor),
                p_op=f.p_op * factor,
                q_op=f.q_op * factor)
        for f in grid.fpus
    )
    return replace(grid, fpus=fpus)


def _fmt(x: float) -> float:
    return float(f"{x:.17g}")


def grid_to_dict(grid: GridModel) -> dict:
    """Serialize back to the grid file schema (inverse of parse_grid)."""
    doc = {
        "base_mva": _fmt(grid.base_mva),
        "frequency": _fmt(grid.frequency),
        "slack": {
            "bus": grid.slack_bus,
            "voltage_kv": _fmt(abs(grid.slack_voltage)),
            "angle_deg": _fmt(math.degrees(
                math.atan2(grid.slack_voltage.imag, grid.slack_voltage.real))),
        },
        "buses": [
            {"id": b.id, "nominal_voltage": _fmt(b.nominal_voltage),
             "v_min": _fmt(b.v_min), "v_max": _fmt(b.v_max)}
            for b in grid.buses
        ],
        "lines": [
            {"from_bus": ln.from_bus, "to_bus": ln.to_bus,
             "length": _fmt(ln.length), "r_per_km": _fmt(ln.r_per_km),
             "l_per_km": _fmt(ln.l_per_km), "c_per_km": _fmt(ln.c_per_km),
             "i_th_max": _fmt(ln.i_th_max)}
            for ln in grid.lines
        ],
        "transformers": [
            {"hv_bus": t.hv_bus, "lv_bus": t.lv_bus, "v_hv": _fmt(t.v_hv),
             "v_lv": _fmt(t.v_lv), "s_rated": _fmt(t.s_rated),
             "v_sc": _fmt(t.v_sc), "p_cu": _fmt(t.p_cu),
             "i_oc": _fmt(t.i_oc), "p_fe": _fmt(t.p_fe),
             "tap": None if t.tap is None else {
                 "step_pct": _fmt(t.tap.step_pct), "tap_min": t.tap.tap_min,
                 "tap_max": t.tap.tap_max, "tap0": t.tap.tap0}}
            for t in grid.transformers
        ],
        "fpus": [
            {"id": f.id, "bus": f.bus, "kind": f.kind,
             "polygon": [[_fmt(p), _fmt(q)] for p, q in f.polygon.vertices],
             "p_op": _fmt(f.p_op), "q_op": _fmt(f.q_op),
             "cost": _cost_to_dict(f.cost)}
            for f in grid.fpus
        ],
        "base_injections": {
            str(bus): [_fmt(p), _fmt(q)]
            for bus, (p, q) in sorted(grid.base_injections.items())
        },
    }
    return doc


def _cost_to_dict(c: CostFactors) -> dict:
    out = {"c_s_p": _fmt(c.c_s_p), "c_s_q": _fmt(c.c_s_q)}
    if c.has_signed:
        out.update(c_s_p_plus=_fmt(c.c_s_p_plus), c_s_p_minus=_fmt(c.c_s_p_minus),
                   c_s_q_plus=_fmt(c.c_s_q_plus), c_s_q_minus=_fmt(c.c_s_q_minus))
    return out


def save_grid(grid: GridModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(grid_to_dict(grid), fh, indent=2)
        fh.write("\n")

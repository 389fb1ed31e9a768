"""Grid data model, case file parsing, and structural validation.

The case format is a single sectioned text file. Each section opens with
[name]; table sections (buses, generators, lines, storage, wind) carry a
header row naming the fields, followed by whitespace-separated rows. The
[options] section holds key = value pairs, including the name of the load
CSV (header bus_id,t1,...,tT) resolved relative to the case file.
"""

import csv
import math
import os
from dataclasses import dataclass, field

from .errors import ParseError, SchemaError


@dataclass(frozen=True)
class Bus:
    id: int
    is_slack: bool
    load_profile: tuple  # MW per period, length T


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    cost: tuple  # ("quad", a, b, c) or ("pts", ((p, cost), ...))

    def cost_at(self, p):
        kind = self.cost[0]
        if kind == "quad":
            _, a, b, c = self.cost
            return a * p * p + b * p + c
        pts = self.cost[1]
        if p <= pts[0][0]:
            return pts[0][1]
        for (p0, c0), (p1, c1) in zip(pts, pts[1:]):
            if p <= p1:
                t = (p - p0) / (p1 - p0)
                return (1 - t) * c0 + t * c1
        return pts[-1][1]

    def marginal_at_max(self):
        kind = self.cost[0]
        if kind == "quad":
            _, a, b, _ = self.cost
            return 2 * a * self.p_max + b
        pts = self.cost[1]
        if len(pts) < 2:
            return 0.0
        (p0, c0), (p1, c1) = pts[-2], pts[-1]
        return (c1 - c0) / (p1 - p0) if p1 > p0 else 0.0


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    flow_limit: float


@dataclass(frozen=True)
class StorageDevice:
    id: int
    bus: int
    s_min: float
    s_max: float
    delta_max: float
    eff_charge: float
    eff_discharge: float
    eff_storage: float
    variation_cost: float


@dataclass(frozen=True)
class WindFarm:
    id: int
    bus: int
    capacity: float


@dataclass(frozen=True)
class Network:
    buses: tuple
    generators: tuple
    lines: tuple
    storage_devices: tuple
    wind_farms: tuple
    penalty_m: float
    initial_storage: tuple = ()   # s0 per device; defaults to s_min
    initial_generation: tuple = ()  # p0 per generator; defaults to p_min
    initial_wind: tuple = ()      # w0 per farm; empty means "use model mean"

    @property
    def horizon(self):
        return len(self.buses[0].load_profile) if self.buses else 0

    def bus_ids(self):
        return [b.id for b in self.buses]

    def bus(self, bus_id):
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def slack_bus(self):
        for b in self.buses:
            if b.is_slack:
                return b
        raise SchemaError("network has no slack bus")

    def s0(self):
        if self.initial_storage:
            return list(self.initial_storage)
        return [d.s_min for d in self.storage_devices]

    def p0(self):
        if self.initial_generation:
            return list(self.initial_generation)
        return [g.p_min for g in self.generators]


def default_penalty(generators):
    """10x the steepest marginal cost at p_max, at least 1000 $/MWh."""
    worst = max((g.marginal_at_max() for g in generators), default=0.0)
    return max(10.0 * worst, 1000.0)


# -- validation -------------------------------------------------------------


def validate(net):
    """Return a list of human-readable invariant violations; [] means valid."""
    out = []
    T = net.horizon
    ids = set()
    slack_count = 0
    for b in net.buses:
        if b.id in ids:
            out.append(f"duplicate bus id {b.id}")
        ids.add(b.id)
        if b.is_slack:
            slack_count += 1
        if len(b.load_profile) != T:
            out.append(f"bus {b.id}: load profile length {len(b.load_profile)} != horizon {T}")
        if any(v < 0 for v in b.load_profile):
            out.append(f"bus {b.id}: negative load value")
    if slack_count == 0:
        out.append("no slack bus")
    elif slack_count > 1:
        out.append("multiple slack buses")

    for g in net.generators:
        if not 0 <= g.p_min <= g.p_max:
            out.append(f"generator {g.id}: requires 0 <= p_min <= p_max")
        if g.ramp_up <= 0 or g.ramp_down <= 0:
            out.append(f"generator {g.id}: ramp limits must be positive")
        if g.bus not in ids:
            out.append(f"generator {g.id}: unknown bus {g.bus}")
        if g.cost[0] == "quad" and g.cost[1] < 0:
            out.append(f"generator {g.id}: quadratic cost not convex (a < 0)")
        if g.cost[0] == "pts":
            pts = g.cost[1]
            if len(pts) < 2:
                out.append(f"generator {g.id}: breakpoint cost needs at least 2 points")
            else:
                xs = [p for p, _ in pts]
                if any(b <= a for a, b in zip(xs, xs[1:])):
                    out.append(f"generator {g.id}: breakpoints not strictly increasing")
                if not (math.isclose(xs[0], g.p_min) and math.isclose(xs[-1], g.p_max)):
                    out.append(f"generator {g.id}: breakpoints must span [p_min, p_max]")

    for l in net.lines:
        if l.from_bus == l.to_bus:
            out.append(f"line {l.id}: from_bus equals to_bus")
        if l.from_bus not in ids or l.to_bus not in ids:
            out.append(f"line {l.id}: unknown endpoint bus")
        if l.susceptance <= 0:
            out.append(f"line {l.id}: susceptance must be positive")
        if l.flow_limit <= 0:
            out.append(f"line {l.id}: flow limit must be positive")

    seen_storage_bus = set()
    for d in net.storage_devices:
        if d.bus not in ids:
            out.append(f"storage {d.id}: unknown bus {d.bus}")
        if d.bus in seen_storage_bus:
            out.append(f"storage {d.id}: more than one storage device at bus {d.bus}")
        seen_storage_bus.add(d.bus)
        if not 0 <= d.s_min < d.s_max:
            out.append(f"storage {d.id}: requires 0 <= s_min < s_max")
        if d.delta_max <= 0:
            out.append(f"storage {d.id}: delta_max must be positive")
        for label, eff in (("charge", d.eff_charge), ("discharge", d.eff_discharge),
                           ("storage", d.eff_storage)):
            if not 0 < eff <= 1:
                out.append(f"storage {d.id}: {label} efficiency outside (0, 1]")

    seen_wind_bus = set()
    for wfarm in net.wind_farms:
        if wfarm.bus not in ids:
            out.append(f"wind {wfarm.id}: unknown bus {wfarm.bus}")
        if wfarm.bus in seen_wind_bus:
            out.append(f"wind {wfarm.id}: more than one wind farm at bus {wfarm.bus}")
        seen_wind_bus.add(wfarm.bus)
        if wfarm.capacity <= 0:
            out.append(f"wind {wfarm.id}: capacity must be positive")

    if net.buses and not _connected(net):
        out.append("network not connected")

    worst = max((g.marginal_at_max() for g in net.generators), default=0.0)
    if net.generators and net.penalty_m <= worst:
        out.append(f"penalty_m {net.penalty_m} does not exceed max marginal cost {worst}")

    if net.initial_storage and len(net.initial_storage) != len(net.storage_devices):
        out.append("s0 length does not match number of storage devices")
    if net.initial_generation and len(net.initial_generation) != len(net.generators):
        out.append("p0 length does not match number of generators")
    if net.initial_wind and len(net.initial_wind) != len(net.wind_farms):
        out.append("w0 length does not match number of wind farms")
    return out


def _connected(net):
    """Breadth-first search over the undirected line graph."""
    if len(net.buses) == 1:
        return True
    adj = {b.id: [] for b in net.buses}
    for l in net.lines:
        if l.from_bus in adj and l.to_bus in adj:
            adj[l.from_bus].append(l.to_bus)
            adj[l.to_bus].append(l.from_bus)
    start = net.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(net.buses)


def bus_incidence(net):
    """Per-bus line sets: (incoming, outgoing) dicts of line-id lists,
    oriented by the case file's from/to declaration."""
    incoming = {b.id: [] for b in net.buses}
    outgoing = {b.id: [] for b in net.buses}
    for l in net.lines:
        outgoing[l.from_bus].append(l.id)
        incoming[l.to_bus].append(l.id)
    return incoming, outgoing


# -- case file parsing -------------------------------------------------------

_SECTIONS = ("options", "buses", "generators", "lines", "storage", "wind")

_FIELDS = {
    "buses": ("id", "is_slack"),
    "generators": ("id", "bus", "p_min", "p_max", "ramp_up", "ramp_down", "cost"),
    "lines": ("id", "from_bus", "to_bus", "susceptance", "flow_limit"),
    "storage": ("id", "bus", "s_min", "s_max", "delta_max", "eff_charge",
                "eff_discharge", "eff_storage", "variation_cost"),
    "wind": ("id", "bus", "capacity"),
}


def parse_case(path):
    """Parse a case file plus its referenced load CSV into a Network."""
    sections = _read_sections(path)
    for required in ("buses", "generators"):
        if required not in sections:
            raise SchemaError(f"{path}: missing [{required}] section")

    options = _parse_options(sections.get("options", []), path)
    rows = {name: _parse_table(name, sections.get(name, []), path) for name in _FIELDS}

    loads = {}
    horizon = 0
    load_csv = options.get("load_csv")
    if load_csv is not None:
        csv_path = os.path.join(os.path.dirname(os.path.abspath(path)), load_csv)
        loads, horizon = _read_loads(csv_path)

    buses = []
    for r in rows["buses"]:
        bid = _as_int(r, "id", path)
        profile = loads.get(bid, (0.0,) * horizon)
        buses.append(Bus(id=bid, is_slack=_as_bool(r, "is_slack", path),
                         load_profile=tuple(profile)))
    bus_ids = {b.id for b in buses}
    for bid in loads:
        if bid not in bus_ids:
            raise SchemaError(f"{load_csv}: load row references nonexistent bus {bid}")

    generators = []
    for r in rows["generators"]:
        g = Generator(
            id=_as_int(r, "id", path), bus=_as_int(r, "bus", path),
            p_min=_as_float(r, "p_min", path), p_max=_as_float(r, "p_max", path),
            ramp_up=_as_float(r, "ramp_up", path), ramp_down=_as_float(r, "ramp_down", path),
            cost=_parse_cost(r["cost"], path, r["__line__"]),
        )
        if g.bus not in bus_ids:
            raise SchemaError(f"{path}: generator {g.id} references nonexistent bus {g.bus}")
        generators.append(g)

    lines = []
    for r in rows["lines"]:
        l = Line(id=_as_int(r, "id", path), from_bus=_as_int(r, "from_bus", path),
                 to_bus=_as_int(r, "to_bus", path),
                 susceptance=_as_float(r, "susceptance", path),
                 flow_limit=_as_float(r, "flow_limit", path))
        if l.from_bus not in bus_ids or l.to_bus not in bus_ids:
            raise SchemaError(f"{path}: line {l.id} references nonexistent bus")
        lines.append(l)

    storage = []
    for r in rows["storage"]:
        d = StorageDevice(
            id=_as_int(r, "id", path), bus=_as_int(r, "bus", path),
            s_min=_as_float(r, "s_min", path), s_max=_as_float(r, "s_max", path),
            delta_max=_as_float(r, "delta_max", path),
            eff_charge=_as_float(r, "eff_charge", path),
            eff_discharge=_as_float(r, "eff_discharge", path),
            eff_storage=_as_float(r, "eff_storage", path),
            variation_cost=_as_float(r, "variation_cost", path),
        )
        if d.bus not in bus_ids:
            raise SchemaError(f"{path}: storage {d.id} references nonexistent bus {d.bus}")
        storage.append(d)

    wind = []
    for r in rows["wind"]:
        wf = WindFarm(id=_as_int(r, "id", path), bus=_as_int(r, "bus", path),
                      capacity=_as_float(r, "capacity", path))
        if wf.bus not in bus_ids:
            raise SchemaError(f"{path}: wind farm {wf.id} references nonexistent bus {wf.bus}")
        wind.append(wf)

    penalty = options.get("penalty_m")
    if penalty is None:
        penalty = default_penalty(generators)

    return Network(
        buses=tuple(buses), generators=tuple(generators), lines=tuple(lines),
        storage_devices=tuple(storage), wind_farms=tuple(wind),
        penalty_m=float(penalty),
        initial_storage=tuple(options.get("s0", ())),
        initial_generation=tuple(options.get("p0", ())),
        initial_wind=tuple(options.get("w0", ())),
    )


def _read_sections(path):
    if not os.path.exists(path):
        raise ParseError("case file not found", path=path)
    sections = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    raise ParseError("unterminated section header", path=path, line=lineno)
                name = line[1:-1].strip().lower()
                if name not in _SECTIONS:
                    raise ParseError(f"unknown section [{name}]", path=path, line=lineno)
                current = sections.setdefault(name, [])
            else:
                if current is None:
                    raise ParseError("data before first section header", path=path, line=lineno)
                current.append((lineno, line))
    return sections


def _parse_options(body, path):
    out = {}
    for lineno, line in body:
        if "=" not in line:
            raise ParseError("options entries use key = value", path=path, line=lineno)
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key == "load_csv":
            out[key] = value
        elif key == "penalty_m":
            out[key] = _to_float(value, path, lineno)
        elif key in ("s0", "p0", "w0"):
            out[key] = tuple(_to_float(v, path, lineno) for v in value.split())
        else:
            raise ParseError(f"unknown option {key!r}", path=path, line=lineno)
    return out


def _parse_table(name, body, path):
    if not body:
        return []
    fields = _FIELDS[name]
    head_line, head = body[0]
    names = tuple(head.split())
    if names != fields:
        raise SchemaError(
            f"{path}:{head_line}: [{name}] header must be '{' '.join(fields)}', got '{head}'")
    rows = []
    for lineno, line in body[1:]:
        vals = line.split()
        if len(vals) != len(fields):
            raise ParseError(f"[{name}] row has {len(vals)} fields, expected {len(fields)}",
                             path=path, line=lineno)
        row = dict(zip(fields, vals))
        row["__line__"] = lineno
        rows.append(row)
    return rows


def _parse_cost(text, path, lineno):
    kind, _, body = text.partition(":")
    if kind == "quad":
        parts = body.split(",")
        if len(parts) != 3:
            raise ParseError("quad cost needs three coefficients a,b,c", path=path, line=lineno)
        a, b, c = (_to_float(v, path, lineno) for v in parts)
        return ("quad", a, b, c)
    if kind == "pts":
        pts = []
        for chunk in body.split(";"):
            pair = chunk.split(",")
            if len(pair) != 2:
                raise ParseError("pts cost entries are p,cost pairs separated by ';'",
                                 path=path, line=lineno)
            pts.append((_to_float(pair[0], path, lineno), _to_float(pair[1], path, lineno)))
        return ("pts", tuple(pts))
    raise ParseError(f"unknown cost kind {kind!r} (use quad: or pts:)", path=path, line=lineno)


def _read_loads(csv_path):
    if not os.path.exists(csv_path):
        raise ParseError("load CSV not found", path=csv_path)
    loads = {}
    horizon = None
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "bus_id":
            raise SchemaError(f"{csv_path}: load CSV header must start with bus_id")
        expected = ["t%d" % (i + 1) for i in range(len(header) - 1)]
        if header[1:] != expected:
            raise SchemaError(f"{csv_path}: load CSV columns must be t1..tT")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                bid = int(row[0])
                vals = tuple(float(v) for v in row[1:])
            except ValueError as exc:
                raise ParseError(f"bad load value ({exc})", path=csv_path, line=rowno)
            if horizon is None:
                horizon = len(vals)
            elif len(vals) != horizon:
                raise ParseError("ragged load row", path=csv_path, line=rowno)
            loads[bid] = vals
    return loads, (horizon or 0)


def _to_float(text, path, lineno):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"expected a number, got {text!r}", path=path, line=lineno)


def _as_int(row, key, path):
    try:
        return int(row[key])
    except ValueError:
        raise ParseError(f"field {key} expects an integer, got {row[key]!r}",
                         path=path, line=row["__line__"])


def _as_float(row, key, path):
    return _to_float(row[key], path, row["__line__"])


def _as_bool(row, key, path):
    text = row[key].lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ParseError(f"field {key} expects true/false, got {row[key]!r}",
                     path=path, line=row["__line__"])


# -- serialization ------------------------------------------------------------


def serialize_case(net, case_path, load_csv_name=None):
    """Write a Network back to the case format; round-trips exactly."""
    if load_csv_name is None:
        base = os.path.splitext(os.path.basename(case_path))[0]
        load_csv_name = base + "_loads.csv"
    lines = ["[options]"]
    lines.append(f"penalty_m = {float(net.penalty_m)!r}")
    if net.horizon > 0:
        lines.append(f"load_csv = {load_csv_name}")
    if net.initial_storage:
        lines.append("s0 = " + " ".join(repr(float(v)) for v in net.initial_storage))
    if net.initial_generation:
        lines.append("p0 = " + " ".join(repr(float(v)) for v in net.initial_generation))
    if net.initial_wind:
        lines.append("w0 = " + " ".join(repr(float(v)) for v in net.initial_wind))

    lines += ["", "[buses]", "id is_slack"]
    for b in net.buses:
        lines.append(f"{b.id} {'true' if b.is_slack else 'false'}")

    lines += ["", "[generators]", "id bus p_min p_max ramp_up ramp_down cost"]
    for g in net.generators:
        if g.cost[0] == "quad":
            cost = "quad:" + ",".join(repr(float(v)) for v in g.cost[1:])
        else:
            cost = "pts:" + ";".join(f"{float(p)!r},{float(c)!r}" for p, c in g.cost[1])
        lines.append(f"{g.id} {g.bus} {float(g.p_min)!r} {float(g.p_max)!r} {float(g.ramp_up)!r} {float(g.ramp_down)!r} {cost}")

    if net.lines:
        lines += ["", "[lines]", "id from_bus to_bus susceptance flow_limit"]
        for l in net.lines:
            lines.append(f"{l.id} {l.from_bus} {l.to_bus} {float(l.susceptance)!r} {float(l.flow_limit)!r}")

    if net.storage_devices:
        lines += ["", "[storage]",
                  "id bus s_min s_max delta_max eff_charge eff_discharge eff_storage variation_cost"]
        for d in net.storage_devices:
            lines.append(f"{d.id} {d.bus} {float(d.s_min)!r} {float(d.s_max)!r} "
                         f"{float(d.delta_max)!r} {float(d.eff_charge)!r} "
                         f"{float(d.eff_discharge)!r} {float(d.eff_storage)!r} "
                         f"{float(d.variation_cost)!r}")

    if net.wind_farms:
        lines += ["", "[wind]", "id bus capacity"]
        for wf in net.wind_farms:
            lines.append(f"{wf.id} {wf.bus} {float(wf.capacity)!r}")

    with open(case_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    if net.horizon > 0:
        csv_path = os.path.join(os.path.dirname(os.path.abspath(case_path)), load_csv_name)
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bus_id"] + ["t%d" % (i + 1) for i in range(net.horizon)])
            for b in net.buses:
                writer.writerow([b.id] + [repr(float(v)) for v in b.load_profile])

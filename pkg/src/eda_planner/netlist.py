"""Gate-level netlist model: JSON exchange format, a structural Verilog
subset front-end, and the star-model expansion into a DesignGraph.

A net has exactly one driver (cell or input port) and zero or more sinks
(cells or output ports).  The star model turns each net into one directed
edge from the driver to every sink.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import UnsupportedConstructError, ValidationError
from .graphs import DesignGraph, NodeKind, SourceKind, make_graph

DEFAULT_DRIVER_PINS = ("Y", "Z", "Q", "out")


class PortDir(Enum):
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class Port:
    id: str
    direction: PortDir


@dataclass(frozen=True)
class CellInst:
    id: str
    cell_type: str


@dataclass(frozen=True)
class Net:
    driver: str
    sinks: Tuple[str, ...]


@dataclass(frozen=True)
class Netlist:
    name: str
    cells: Tuple[CellInst, ...]
    ports: Tuple[Port, ...]
    nets: Tuple[Net, ...]


def validate_netlist(netlist: Netlist) -> None:
    """Check id uniqueness, reference integrity and driver/sink directions."""
    ids: Dict[str, str] = {}
    for port in netlist.ports:
        if port.id in ids:
            raise ValidationError(f"duplicate id {port.id!r}")
        ids[port.id] = "in-port" if port.direction is PortDir.IN else "out-port"
    for cell in netlist.cells:
        if cell.id in ids:
            raise ValidationError(f"duplicate id {cell.id!r}")
        ids[cell.id] = "cell"

    for i, net in enumerate(netlist.nets):
        role = ids.get(net.driver)
        if role is None:
            raise ValidationError(f"net #{i}: driver {net.driver!r} is not declared")
        if role == "out-port":
            raise ValidationError(f"net #{i}: output port {net.driver!r} cannot drive a net")
        for sink in net.sinks:
            role = ids.get(sink)
            if role is None:
                raise ValidationError(f"net #{i}: sink {sink!r} is not declared")
            if role == "in-port":
                raise ValidationError(f"net #{i}: input port {sink!r} cannot sink a net")


# ---------------------------------------------------------------------------
# JSON exchange format.

_TOP_KEYS = {"name", "cells", "ports", "nets"}


def parse_netlist_json(data) -> Netlist:
    """Parse and validate the canonical netlist JSON document.

    Schema: {"name": str, "cells": [{"id", "type"}], "ports": [{"id", "dir"}],
    "nets": [{"driver", "sinks": []}]}.  Raises ValidationError naming the
    offending element on any schema or reference problem.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from None

    if not isinstance(doc, dict):
        raise ValidationError("top level must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown top-level keys: {sorted(unknown)}")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise ValidationError(f"missing top-level keys: {sorted(missing)}")
    if not isinstance(doc["name"], str) or not doc["name"]:
        raise ValidationError("'name' must be a non-empty string")

    def field(obj, key, where, types=str):
        if not isinstance(obj, dict):
            raise ValidationError(f"{where} must be an object, got {obj!r}")
        if key not in obj:
            raise ValidationError(f"{where} is missing key {key!r}")
        value = obj[key]
        if not isinstance(value, types):
            raise ValidationError(f"{where}.{key} has wrong type: {value!r}")
        return value

    cells = []
    for i, raw in enumerate(_expect_list(doc, "cells")):
        where = f"cells[{i}]"
        extra = set(raw) - {"id", "type"} if isinstance(raw, dict) else set()
        if extra:
            raise ValidationError(f"{where} has unknown keys {sorted(extra)}")
        cells.append(CellInst(field(raw, "id", where), field(raw, "type", where)))

    ports = []
    for i, raw in enumerate(_expect_list(doc, "ports")):
        where = f"ports[{i}]"
        extra = set(raw) - {"id", "dir"} if isinstance(raw, dict) else set()
        if extra:
            raise ValidationError(f"{where} has unknown keys {sorted(extra)}")
        dir_token = field(raw, "dir", where)
        try:
            direction = PortDir(dir_token)
        except ValueError:
            raise ValidationError(f"{where}.dir must be 'in' or 'out', got {dir_token!r}") from None
        ports.append(Port(field(raw, "id", where), direction))

    nets = []
    for i, raw in enumerate(_expect_list(doc, "nets")):
        where = f"nets[{i}]"
        extra = set(raw) - {"driver", "sinks"} if isinstance(raw, dict) else set()
        if extra:
            raise ValidationError(f"{where} has unknown keys {sorted(extra)}")
        driver = field(raw, "driver", where)
        sinks = field(raw, "sinks", where, types=list)
        for j, sink in enumerate(sinks):
            if not isinstance(sink, str):
                raise ValidationError(f"{where}.sinks[{j}] must be a string, got {sink!r}")
        nets.append(Net(driver, tuple(sinks)))

    netlist = Netlist(doc["name"], tuple(cells), tuple(ports), tuple(nets))
    validate_netlist(netlist)
    return netlist


def _expect_list(doc, key):
    if not isinstance(doc[key], list):
        raise ValidationError(f"'{key}' must be an array")
    return doc[key]


def serialize_netlist(netlist: Netlist) -> str:
    doc = {
        "name": netlist.name,
        "cells": [{"id": c.id, "type": c.cell_type} for c in netlist.cells],
        "ports": [{"id": p.id, "dir": p.direction.value} for p in netlist.ports],
        "nets": [{"driver": n.driver, "sinks": list(n.sinks)} for n in netlist.nets],
    }
    return json.dumps(doc, indent=1)


def parse_netlist_json_file(path) -> Netlist:
    with open(path, "rb") as fh:
        return parse_netlist_json(fh.read())


# ---------------------------------------------------------------------------
# Structural Verilog subset.

_BEHAVIORAL_KEYWORDS = {
    "always", "initial", "assign", "reg", "integer", "real", "parameter",
    "if", "else", "case", "for", "while", "repeat", "function", "task",
    "generate", "genvar", "specify", "defparam",
}

_IDENT = r"[A-Za-z_][A-Za-z0-9_$]*"
_INST_RE = re.compile(rf"^({_IDENT})\s+({_IDENT})\s*\((.*)\)\s*$", re.DOTALL)
_NAMED_CONN_RE = re.compile(rf"^\.({_IDENT})\s*\(\s*({_IDENT})\s*\)$", re.DOTALL)


def parse_verilog_subset(
    text: str,
    driver_pins: Sequence[str] = DEFAULT_DRIVER_PINS,
    name_hint: Optional[str] = None,
) -> Netlist:
    """Parse a single-module, gate-level Verilog subset into a Netlist.

    Supported statements: module header, input/output/wire declarations
    (single-bit, comma-separated), and cell instantiations with named
    port connections.  A connection whose pin name is in `driver_pins`
    marks the instance as the net's driver; everything else is a sink.
    Raises UnsupportedConstructError (with a line number) on behavioral
    constructs, buses, positional connections, or multiple modules.
    """
    statements = _split_statements(_strip_comments(text))

    module_name: Optional[str] = None
    saw_endmodule = False
    # net name -> (driver id or None, [sink ids], declaration order)
    net_driver: Dict[str, Optional[str]] = {}
    net_sinks: Dict[str, List[str]] = {}
    net_order: List[str] = []
    ports: List[Port] = []
    cells: List[CellInst] = []
    declared: Dict[str, str] = {}

    def declare_net(net_name: str, lineno: int) -> None:
        if net_name in net_driver:
            raise ValidationError(f"line {lineno}: {net_name!r} declared twice")
        net_driver[net_name] = None
        net_sinks[net_name] = []
        net_order.append(net_name)

    for stmt, lineno in statements:
        head = stmt.split(None, 1)[0]

        if head in _BEHAVIORAL_KEYWORDS:
            raise UnsupportedConstructError(f"unsupported construct {head!r}", lineno)

        if head == "module":
            if module_name is not None or saw_endmodule:
                raise UnsupportedConstructError("multiple modules are not supported", lineno)
            m = re.match(rf"^module\s+({_IDENT})\s*(\(.*\))?\s*$", stmt, re.DOTALL)
            if not m:
                raise UnsupportedConstructError(f"cannot parse module header {stmt!r}", lineno)
            module_name = m.group(1)
            continue

        if head == "endmodule":
            if module_name is None:
                raise UnsupportedConstructError("endmodule before module", lineno)
            saw_endmodule = True
            if stmt != "endmodule":
                raise UnsupportedConstructError(f"unexpected text in {stmt!r}", lineno)
            continue

        if module_name is None:
            raise UnsupportedConstructError(f"statement before module header: {stmt!r}", lineno)
        if saw_endmodule:
            raise UnsupportedConstructError(f"statement after endmodule: {stmt!r}", lineno)

        if head in ("input", "output", "wire"):
            rest = stmt[len(head):].strip()
            if "[" in rest or "]" in rest:
                raise UnsupportedConstructError("bus declarations are not supported", lineno)
            names = [tok.strip() for tok in rest.split(",")]
            for net_name in names:
                if not re.fullmatch(_IDENT, net_name or ""):
                    raise UnsupportedConstructError(
                        f"cannot parse {head} declaration {stmt!r}", lineno
                    )
                declare_net(net_name, lineno)
                if head == "input":
                    ports.append(Port(net_name, PortDir.IN))
                    declared[net_name] = "port"
                    net_driver[net_name] = net_name
                elif head == "output":
                    ports.append(Port(net_name, PortDir.OUT))
                    declared[net_name] = "port"
                    net_sinks[net_name].append(net_name)
            continue

        m = _INST_RE.match(stmt)
        if not m:
            raise UnsupportedConstructError(f"cannot parse statement {stmt!r}", lineno)
        cell_type, inst_name, conn_blob = m.groups()
        if inst_name in declared:
            raise ValidationError(f"line {lineno}: duplicate id {inst_name!r}")
        declared[inst_name] = "cell"
        cells.append(CellInst(inst_name, cell_type))

        for conn in _split_connections(conn_blob):
            if not conn:
                continue
            cm = _NAMED_CONN_RE.match(conn)
            if not cm:
                raise UnsupportedConstructError(
                    f"only named single-bit connections are supported, got {conn!r}", lineno
                )
            pin, net_name = cm.groups()
            if net_name not in net_driver:
                raise ValidationError(f"line {lineno}: {net_name!r} is not declared")
            if pin in driver_pins:
                if net_driver[net_name] is not None:
                    raise ValidationError(
                        f"line {lineno}: net {net_name!r} has multiple drivers"
                    )
                net_driver[net_name] = inst_name
            else:
                net_sinks[net_name].append(inst_name)

    if module_name is None:
        raise UnsupportedConstructError("no module found", 1)
    if not saw_endmodule:
        raise UnsupportedConstructError("missing endmodule", len(text.splitlines()) or 1)

    nets: List[Net] = []
    for net_name in net_order:
        driver, sinks = net_driver[net_name], net_sinks[net_name]
        if driver is None:
            if sinks:
                raise ValidationError(f"net {net_name!r} has sinks but no driver")
            continue  # declared but unused wire
        nets.append(Net(driver, tuple(sinks)))

    netlist = Netlist(name_hint or module_name, tuple(cells), tuple(ports), tuple(nets))
    validate_netlist(netlist)
    return netlist


def _strip_comments(text: str) -> str:
    # Replacements preserve newlines so line numbers stay valid.
    def blank(match: re.Match) -> str:
        return re.sub(r"[^\n]", " ", match.group(0))

    text = re.sub(r"/\*.*?\*/", blank, text, flags=re.DOTALL)
    return re.sub(r"//[^\n]*", "", text)


def _split_statements(code: str) -> List[Tuple[str, int]]:
    """Split on top-level ';', keeping the starting line of each statement.

    `endmodule` carries no semicolon, so it is detached from whatever
    chunk it lands in.
    """
    statements: List[Tuple[str, int]] = []
    line = 1
    start_line = 1
    buf: List[str] = []
    has_content = False
    for ch in code:
        if ch == ";":
            stmt = "".join(buf).strip()
            if stmt:
                statements.append((stmt, start_line))
            buf = []
            has_content = False
            continue
        if ch == "\n":
            line += 1
        if not has_content and not ch.isspace():
            has_content = True
            start_line = line
        buf.append(ch)
    tail = "".join(buf).strip()
    if tail:
        statements.append((tail, start_line))

    # Detach endmodule tokens glued to neighbouring statements.
    split: List[Tuple[str, int]] = []
    for stmt, lineno in statements:
        parts = re.split(r"(\bendmodule\b)", stmt)
        for part in parts:
            part = part.strip()
            if part:
                split.append((part, lineno))
    return split


def _split_connections(blob: str) -> List[str]:
    out: List[str] = []
    depth = 0
    buf: List[str] = []
    for ch in blob:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    last = "".join(buf).strip()
    if last:
        out.append(last)
    return out


# ---------------------------------------------------------------------------
# Star-model expansion.

def star_expand(netlist: Netlist) -> DesignGraph:
    """Expand nets with the star model: one edge driver -> each sink.

    Ports and cells become nodes (ports first, then cells, in declaration
    order); total edge count equals the sum of sink counts over all nets.
    """
    validate_netlist(netlist)
    nodes: List[Tuple[str, NodeKind]] = []
    index: Dict[str, int] = {}
    for port in netlist.ports:
        index[port.id] = len(nodes)
        kind = NodeKind.PRIMARY_INPUT if port.direction is PortDir.IN else NodeKind.PRIMARY_OUTPUT
        nodes.append((port.id, kind))
    for cell in netlist.cells:
        index[cell.id] = len(nodes)
        nodes.append((cell.id, NodeKind.CELL))

    edges: List[Tuple[int, int]] = []
    for net in netlist.nets:
        src = index[net.driver]
        for sink in net.sinks:
            edges.append((src, index[sink]))
    return make_graph(netlist.name, nodes, edges, SourceKind.NETLIST)

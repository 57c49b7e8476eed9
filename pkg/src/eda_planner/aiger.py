"""ASCII AIGER ("aag") front-end for combinational and-inverter graphs.

Scope: header `aag M I L O A` with L = 0.  Latches and the binary "aig"
encoding are out of scope (documented extension point).  Complemented
literal references become explicit Inverter nodes, shared per distinct
odd literal, so the GCN sees inversion as graph structure rather than an
edge attribute.  Literal 0/1 references materialize a single Constant
node (literal 1 routes through an inverter on it).
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from .errors import ParseError
from .graphs import DesignGraph, NodeKind, SourceKind, make_graph


def parse_aiger(data, name: str = "aig") -> DesignGraph:
    """Parse ASCII AIGER bytes (or text) into a DesignGraph.

    Inputs become PrimaryInput nodes, AND lines AndGate nodes, outputs
    PrimaryOutput nodes; edges run fan-in -> gate.  Raises ParseError with
    a 1-based line number for malformed headers, out-of-range or undefined
    literals, nonzero latch counts, and cyclic definitions.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not ASCII: {exc}") from None
    else:
        text = data

    lines = text.splitlines()
    if not lines:
        raise ParseError("empty input, expected 'aag M I L O A' header", 1)

    header = lines[0].split()
    if len(header) != 6 or header[0] != "aag":
        raise ParseError(f"malformed header {lines[0]!r}, expected 'aag M I L O A'", 1)
    try:
        max_var, n_in, n_latch, n_out, n_and = (int(tok) for tok in header[1:])
    except ValueError:
        raise ParseError(f"non-numeric header field in {lines[0]!r}", 1) from None
    if min(max_var, n_in, n_latch, n_out, n_and) < 0:
        raise ParseError("negative header field", 1)
    if n_latch != 0:
        raise ParseError(f"latch count {n_latch} unsupported (combinational aag only)", 1)

    max_literal = 2 * max_var + 1
    body_len = n_in + n_out + n_and
    if len(lines) - 1 < body_len:
        raise ParseError(
            f"file has {len(lines) - 1} body lines, header promises {body_len}", len(lines)
        )

    def literal(token: str, lineno: int) -> int:
        try:
            lit = int(token)
        except ValueError:
            raise ParseError(f"literal {token!r} is not an integer", lineno) from None
        if not 0 <= lit <= max_literal:
            raise ParseError(f"literal {lit} out of range [0, {max_literal}]", lineno)
        return lit

    nodes: List[Tuple[str, NodeKind]] = []
    var_node: Dict[int, int] = {}  # variable -> node index (uncomplemented)

    # Inputs.
    input_lits: List[int] = []
    lineno = 1
    for k in range(n_in):
        lineno = 2 + k
        toks = lines[lineno - 1].split()
        if len(toks) != 1:
            raise ParseError(f"expected one input literal, got {lines[lineno - 1]!r}", lineno)
        lit = literal(toks[0], lineno)
        if lit < 2 or lit % 2:
            raise ParseError(f"input literal {lit} must be even and >= 2", lineno)
        var = lit // 2
        if var in var_node:
            raise ParseError(f"variable {var} defined twice", lineno)
        var_node[var] = len(nodes)
        nodes.append((f"i{k}", NodeKind.PRIMARY_INPUT))
        input_lits.append(lit)

    # Outputs (referenced literals are wired after the AND section).
    output_lits: List[Tuple[int, int]] = []
    for k in range(n_out):
        lineno = 2 + n_in + k
        toks = lines[lineno - 1].split()
        if len(toks) != 1:
            raise ParseError(f"expected one output literal, got {lines[lineno - 1]!r}", lineno)
        output_lits.append((literal(toks[0], lineno), lineno))

    # AND definitions: first pass creates the gate nodes so that forward
    # references resolve; wiring happens afterwards.
    and_defs: List[Tuple[int, int, int, int]] = []
    for k in range(n_and):
        lineno = 2 + n_in + n_out + k
        toks = lines[lineno - 1].split()
        if len(toks) != 3:
            raise ParseError(f"expected 'lhs rhs0 rhs1', got {lines[lineno - 1]!r}", lineno)
        lhs = literal(toks[0], lineno)
        rhs0 = literal(toks[1], lineno)
        rhs1 = literal(toks[2], lineno)
        if lhs < 2 or lhs % 2:
            raise ParseError(f"AND output literal {lhs} must be even and >= 2", lineno)
        var = lhs // 2
        if var in var_node:
            raise ParseError(f"variable {var} defined twice", lineno)
        var_node[var] = len(nodes)
        nodes.append((f"a{var}", NodeKind.AND_GATE))
        and_defs.append((var, rhs0, rhs1, lineno))

    # Anything after the body must be symbol table or comments.
    for extra in range(2 + body_len, len(lines) + 1):
        line = lines[extra - 1]
        if line.strip() == "c":
            break
        if line == "" or (line[0] in "ilo" and len(line.split()) >= 1 and line[1:2].isdigit()):
            continue
        raise ParseError(f"unexpected trailing line {line!r}", extra)

    edges: List[Tuple[int, int]] = []
    const_node: Optional[int] = None
    inverter_node: Dict[int, int] = {}  # odd literal -> inverter node index

    def node_of(lit: int, lineno: int) -> int:
        nonlocal const_node
        var, neg = lit // 2, lit & 1
        if var == 0:
            if const_node is None:
                const_node = len(nodes)
                nodes.append(("const", NodeKind.CONSTANT))
            base = const_node
        else:
            if var not in var_node:
                raise ParseError(f"literal {lit} references undefined variable {var}", lineno)
            base = var_node[var]
        if not neg:
            return base
        inv = inverter_node.get(lit)
        if inv is None:
            inv = len(nodes)
            inverter_node[lit] = inv
            nodes.append((f"n{lit}", NodeKind.INVERTER))
            edges.append((base, inv))
        return inv

    for var, rhs0, rhs1, lineno in and_defs:
        for rhs in (rhs0, rhs1):
            if rhs // 2 == var:
                raise ParseError(f"cyclic definition: AND {2 * var} references itself", lineno)
            edges.append((node_of(rhs, lineno), var_node[var]))

    for k, (lit, lineno) in enumerate(output_lits):
        po = len(nodes)
        nodes.append((f"o{k}", NodeKind.PRIMARY_OUTPUT))
        edges.append((node_of(lit, lineno), po))

    _reject_cycles(nodes, edges, and_defs, var_node)
    return make_graph(name, nodes, edges, SourceKind.AIG)


def _reject_cycles(nodes, edges, and_defs, var_node) -> None:
    """Kahn pass naming the first AND line stuck on a cycle."""
    n = len(nodes)
    indeg = [0] * n
    succ: List[List[int]] = [[] for _ in range(n)]
    for src, dst in edges:
        succ[src].append(dst)
        indeg[dst] += 1
    queue = [i for i in range(n) if indeg[i] == 0]
    visited = 0
    while queue:
        v = queue.pop()
        visited += 1
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if visited == n:
        return
    stuck = {i for i in range(n) if indeg[i] > 0}
    for var, _rhs0, _rhs1, lineno in and_defs:
        if var_node[var] in stuck:
            raise ParseError(f"cyclic definition involving AND literal {2 * var}", lineno)
    raise ParseError("cyclic definitions detected")


def parse_aiger_file(path) -> DesignGraph:
    from pathlib import Path

    p = Path(path)
    return parse_aiger(p.read_bytes(), name=p.stem)

"""Core data model for rule-based model transformations.

A transformation is a named, ordered set of rewrite rules linked by a control
scheme.  Each rule has a left-hand side (precondition pattern), a right-hand
side (effect pattern) and optional negative application conditions.  The
module also provides the reader/writer for the neutral JSON interchange
format (``.mtj``), structural validation, and the projection of a control
scheme onto per-rule control flags.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DuplicateIdError, FormatError, UnknownIdError

ATTR_OPS = ("eq", "neq", "lt", "gt", "bind", "other")
COMPARE_OPS = ("eq", "neq", "lt", "gt", "other")
CONTROL_KINDS = ("sequence", "priority", "layered", "graph")
CTRL_EDGE_KINDS = ("seq", "loop-back", "branch")

# Machine-readable violation codes reported by validate().
DUP_RULE_NAME = "DUP_RULE_NAME"
DUP_NODE_ID = "DUP_NODE_ID"
UNKNOWN_NODE = "UNKNOWN_NODE"
UNKNOWN_RULE = "UNKNOWN_RULE"
BIND_IN_LHS = "BIND_IN_LHS"
BIND_IN_NAC = "BIND_IN_NAC"
COMPARE_IN_RHS = "COMPARE_IN_RHS"
INVALID_OP = "INVALID_OP"
INVALID_KIND = "INVALID_KIND"
INVALID_EDGE_KIND = "INVALID_EDGE_KIND"
BAD_ORDER = "BAD_ORDER"


@dataclass(frozen=True)
class Node:
    id: str
    type: str


@dataclass(frozen=True)
class Edge:
    type: str
    src: str
    tgt: str


@dataclass(frozen=True)
class AttrCond:
    """Attribute condition. The value is opaque text and never interpreted."""

    owner: str
    name: str
    op: str
    value: str


@dataclass(frozen=True)
class GraphPattern:
    nodes: tuple[Node, ...] = ()
    edges: tuple[Edge, ...] = ()
    attrs: tuple[AttrCond, ...] = ()


@dataclass(frozen=True)
class Rule:
    name: str
    lhs: GraphPattern
    rhs: GraphPattern
    nacs: tuple[GraphPattern, ...] = ()


@dataclass(frozen=True)
class Step:
    rule: str
    order: int
    loop: bool = False
    branch: bool = False


@dataclass(frozen=True)
class CtrlEdge:
    """Control-graph edge; serialized with keys ``from``/``to``/``kind``."""

    src: str
    dst: str
    kind: str


@dataclass(frozen=True)
class ControlScheme:
    kind: str
    steps: tuple[Step, ...] = ()
    edges: tuple[CtrlEdge, ...] = ()


@dataclass(frozen=True)
class Transformation:
    name: str
    rules: tuple[Rule, ...]
    control: ControlScheme

    def rule(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise UnknownIdError(f"no rule named '{name}'")


@dataclass(frozen=True)
class ControlFlags:
    """Per-rule projection of the control scheme, used by the encoder."""

    seq_pos: int | None = None
    in_loop: bool = False
    self_loop: bool = False
    in_branch: bool = False


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    location: str


# ---------------------------------------------------------------------------
# Interchange format parsing


def _expect(cond: bool, message: str, loc: str) -> None:
    if not cond:
        raise FormatError(f"{message} at {loc}")


def _obj(value, loc: str, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> dict:
    _expect(isinstance(value, dict), "expected an object", loc)
    for key in value:
        if key not in required and key not in optional:
            raise FormatError(f"unknown field '{key}' at {loc}")
    for key in required:
        if key not in value:
            raise FormatError(f"missing field '{key}' at {loc}")
    return value


def _str(value, loc: str) -> str:
    _expect(isinstance(value, str), "expected a string", loc)
    return value


def _int(value, loc: str) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool), "expected an integer", loc)
    return value


def _bool(value, loc: str) -> bool:
    _expect(isinstance(value, bool), "expected a boolean", loc)
    return value


def _list(value, loc: str) -> list:
    _expect(isinstance(value, list), "expected a list", loc)
    return value


def parse_graph_pattern(data, loc: str) -> GraphPattern:
    obj = _obj(data, loc, required=(), optional=("nodes", "edges", "attrs"))
    nodes = []
    seen = set()
    for i, nd in enumerate(_list(obj.get("nodes", []), f"{loc}.nodes")):
        nloc = f"{loc}.nodes[{i}]"
        no = _obj(nd, nloc, required=("id", "type"))
        node = Node(_str(no["id"], nloc), _str(no["type"], nloc))
        if node.id in seen:
            raise DuplicateIdError(f"duplicate node id '{node.id}' at {loc}")
        seen.add(node.id)
        nodes.append(node)
    edges = []
    for i, ed in enumerate(_list(obj.get("edges", []), f"{loc}.edges")):
        eloc = f"{loc}.edges[{i}]"
        eo = _obj(ed, eloc, required=("type", "src", "tgt"))
        edge = Edge(_str(eo["type"], eloc), _str(eo["src"], eloc), _str(eo["tgt"], eloc))
        for end in (edge.src, edge.tgt):
            if end not in seen:
                raise UnknownIdError(f"edge endpoint references unknown node '{end}' at {eloc}")
        edges.append(edge)
    attrs = []
    for i, ad in enumerate(_list(obj.get("attrs", []), f"{loc}.attrs")):
        aloc = f"{loc}.attrs[{i}]"
        ao = _obj(ad, aloc, required=("owner", "name", "op", "value"))
        attr = AttrCond(_str(ao["owner"], aloc), _str(ao["name"], aloc),
                        _str(ao["op"], aloc), _str(ao["value"], aloc))
        if attr.op not in ATTR_OPS:
            raise FormatError(f"invalid attribute op '{attr.op}' at {aloc}")
        if attr.owner not in seen:
            raise UnknownIdError(f"attribute references unknown node '{attr.owner}' at {aloc}")
        attrs.append(attr)
    return GraphPattern(tuple(nodes), tuple(edges), tuple(attrs))


def _parse_rule(data, loc: str) -> Rule:
    obj = _obj(data, loc, required=("name", "lhs", "rhs"), optional=("nacs",))
    name = _str(obj["name"], loc)
    lhs = parse_graph_pattern(obj["lhs"], f"{loc}.lhs")
    rhs = parse_graph_pattern(obj["rhs"], f"{loc}.rhs")
    nacs = tuple(parse_graph_pattern(n, f"{loc}.nacs[{i}]")
                 for i, n in enumerate(_list(obj.get("nacs", []), f"{loc}.nacs")))
    return Rule(name, lhs, rhs, nacs)


def _parse_control(data, loc: str, rule_names: set[str]) -> ControlScheme:
    obj = _obj(data, loc, required=("kind",), optional=("steps", "edges"))
    kind = _str(obj["kind"], loc)
    if kind not in CONTROL_KINDS:
        raise FormatError(f"invalid control kind '{kind}' at {loc}")
    steps = []
    for i, sd in enumerate(_list(obj.get("steps", []), f"{loc}.steps")):
        sloc = f"{loc}.steps[{i}]"
        so = _obj(sd, sloc, required=("rule", "order"), optional=("loop", "branch"))
        step = Step(_str(so["rule"], sloc), _int(so["order"], sloc),
                    _bool(so.get("loop", False), sloc), _bool(so.get("branch", False), sloc))
        if step.order < 0:
            raise FormatError(f"step order must be >= 0 at {sloc}")
        if step.rule not in rule_names:
            raise UnknownIdError(f"control step references unknown rule '{step.rule}' at {sloc}")
        steps.append(step)
    edges = []
    for i, ed in enumerate(_list(obj.get("edges", []), f"{loc}.edges")):
        eloc = f"{loc}.edges[{i}]"
        eo = _obj(ed, eloc, required=("from", "to", "kind"))
        edge = CtrlEdge(_str(eo["from"], eloc), _str(eo["to"], eloc), _str(eo["kind"], eloc))
        if edge.kind not in CTRL_EDGE_KINDS:
            raise FormatError(f"invalid control edge kind '{edge.kind}' at {eloc}")
        for end in (edge.src, edge.dst):
            if end not in rule_names:
                raise UnknownIdError(f"control edge references unknown rule '{end}' at {eloc}")
        edges.append(edge)
    return ControlScheme(kind, tuple(steps), tuple(edges))


def parse_transformation(doc: str, *, path: str | None = None) -> Transformation:
    """Parse one interchange-format document into a Transformation.

    Raises FormatError on syntax/shape problems (position-annotated where
    possible), DuplicateIdError on repeated rule or node ids, and
    UnknownIdError on dangling references.  Element order is preserved
    exactly as written.
    """
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, line=exc.lineno, column=exc.colno, path=path) from None
    obj = _obj(data, "$", required=("name", "rules", "control"))
    name = _str(obj["name"], "$")
    rules = []
    names: set[str] = set()
    for i, rd in enumerate(_list(obj["rules"], "$.rules")):
        rule = _parse_rule(rd, f"$.rules[{i}]")
        if rule.name in names:
            raise DuplicateIdError(f"duplicate rule name '{rule.name}'")
        names.add(rule.name)
        rules.append(rule)
    control = _parse_control(obj["control"], "$.control", names)
    return Transformation(name, tuple(rules), control)


# ---------------------------------------------------------------------------
# Serialization (canonical field order, declaration order preserved)


def _pattern_dict(p: GraphPattern) -> dict:
    return {
        "nodes": [{"id": n.id, "type": n.type} for n in p.nodes],
        "edges": [{"type": e.type, "src": e.src, "tgt": e.tgt} for e in p.edges],
        "attrs": [{"owner": a.owner, "name": a.name, "op": a.op, "value": a.value}
                  for a in p.attrs],
    }


def transformation_dict(t: Transformation) -> dict:
    return {
        "name": t.name,
        "rules": [{
            "name": r.name,
            "lhs": _pattern_dict(r.lhs),
            "rhs": _pattern_dict(r.rhs),
            "nacs": [_pattern_dict(n) for n in r.nacs],
        } for r in t.rules],
        "control": {
            "kind": t.control.kind,
            "steps": [{"rule": s.rule, "order": s.order, "loop": s.loop, "branch": s.branch}
                      for s in t.control.steps],
            "edges": [{"from": e.src, "to": e.dst, "kind": e.kind} for e in t.control.edges],
        },
    }


def serialize_transformation(t: Transformation, *, indent: int | None = None) -> str:
    return json.dumps(transformation_dict(t), indent=indent)


# ---------------------------------------------------------------------------
# Validation


def _validate_pattern(p: GraphPattern, loc: str, kind: str, out: list[Violation]) -> None:
    ids = set()
    for n in p.nodes:
        if n.id in ids:
            out.append(Violation(DUP_NODE_ID, f"duplicate node id '{n.id}'", loc))
        ids.add(n.id)
    for i, e in enumerate(p.edges):
        for end in (e.src, e.tgt):
            if end not in ids:
                out.append(Violation(UNKNOWN_NODE, f"edge endpoint '{end}' not declared",
                                     f"{loc}.edges[{i}]"))
    for i, a in enumerate(p.attrs):
        aloc = f"{loc}.attrs[{i}]"
        if a.owner not in ids:
            out.append(Violation(UNKNOWN_NODE, f"attribute owner '{a.owner}' not declared", aloc))
        if a.op not in ATTR_OPS:
            out.append(Violation(INVALID_OP, f"invalid attribute op '{a.op}'", aloc))
        elif a.op == "bind":
            if kind == "lhs":
                out.append(Violation(BIND_IN_LHS, "bind assignment not allowed in LHS", aloc))
            elif kind == "nac":
                out.append(Violation(BIND_IN_NAC, "bind assignment not allowed in NAC", aloc))
        elif kind == "rhs":
            out.append(Violation(COMPARE_IN_RHS, f"comparison op '{a.op}' not allowed in RHS", aloc))


def validate(t: Transformation) -> list[Violation]:
    """Check every structural invariant; an empty list means the value is valid.

    Violations are data, not failures: callers decide whether to abort.
    """
    out: list[Violation] = []
    names = set()
    for i, r in enumerate(t.rules):
        loc = f"rules[{i}]"
        if r.name in names:
            out.append(Violation(DUP_RULE_NAME, f"duplicate rule name '{r.name}'", loc))
        names.add(r.name)
        _validate_pattern(r.lhs, f"{loc}.lhs", "lhs", out)
        _validate_pattern(r.rhs, f"{loc}.rhs", "rhs", out)
        for j, nac in enumerate(r.nacs):
            _validate_pattern(nac, f"{loc}.nacs[{j}]", "nac", out)
    if t.control.kind not in CONTROL_KINDS:
        out.append(Violation(INVALID_KIND, f"invalid control kind '{t.control.kind}'", "control"))
    for i, s in enumerate(t.control.steps):
        loc = f"control.steps[{i}]"
        if s.rule not in names:
            out.append(Violation(UNKNOWN_RULE, f"step references unknown rule '{s.rule}'", loc))
        if s.order < 0:
            out.append(Violation(BAD_ORDER, f"negative order {s.order}", loc))
    for i, e in enumerate(t.control.edges):
        loc = f"control.edges[{i}]"
        if e.kind not in CTRL_EDGE_KINDS:
            out.append(Violation(INVALID_EDGE_KIND, f"invalid edge kind '{e.kind}'", loc))
        for end in (e.src, e.dst):
            if end not in names:
                out.append(Violation(UNKNOWN_RULE, f"edge references unknown rule '{end}'", loc))
    return out


# ---------------------------------------------------------------------------
# Control normalization


def normalize_control(t: Transformation) -> dict[str, ControlFlags]:
    """Project the control scheme onto per-rule flags.

    For sequence/priority/layered kinds the flags come straight from the
    rule's first step.  For graph kinds a rule is in a loop iff it lies on a
    cycle of seq/loop-back edges, has a self loop iff a loop-back edge points
    from the rule to itself, and is in a branch iff it is the target of a
    branch edge; graph kinds define no sequential position.
    """
    flags: dict[str, ControlFlags] = {}
    if t.control.kind in ("sequence", "priority", "layered"):
        by_rule: dict[str, list[Step]] = {}
        for s in t.control.steps:
            by_rule.setdefault(s.rule, []).append(s)
        for r in t.rules:
            steps = by_rule.get(r.name)
            if steps:
                flags[r.name] = ControlFlags(
                    seq_pos=steps[0].order,
                    in_loop=any(s.loop for s in steps),
                    self_loop=False,
                    in_branch=any(s.branch for s in steps),
                )
            else:
                flags[r.name] = ControlFlags()
        return flags

    # graph kind: cycle detection over seq and loop-back edges
    succ: dict[str, set[str]] = {r.name: set() for r in t.rules}
    self_loops = set()
    branch_targets = set()
    for e in t.control.edges:
        if e.kind == "branch":
            branch_targets.add(e.dst)
            continue
        succ.setdefault(e.src, set()).add(e.dst)
        if e.kind == "loop-back" and e.src == e.dst:
            self_loops.add(e.src)

    def reachable_from(start: str) -> set[str]:
        seen: set[str] = set()
        stack = list(succ.get(start, ()))
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(succ.get(n, ()))
        return seen

    for r in t.rules:
        on_cycle = r.name in reachable_from(r.name)
        flags[r.name] = ControlFlags(
            seq_pos=None,
            in_loop=on_cycle,
            self_loop=r.name in self_loops,
            in_branch=r.name in branch_targets,
        )
    return flags

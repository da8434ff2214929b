"""Data-driven pattern definitions.

A pattern is described entirely as data (``.mtp`` files): a set of
participants, each a rule template whose type names are role variables
(``?T1``, ``?T2``, ... or the wildcard ``?_``), plus relations constraining
how matched participants may combine into an occurrence.  New patterns and
variants are added by writing catalog files, never detection code.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, UnknownIdError
from .model import GraphPattern, parse_graph_pattern, _pattern_dict  # noqa: F401
from .model import _obj, _str, _int, _bool, _list

RELATION_KINDS = ("same_type", "control_before", "distinct_rules")
WILDCARD = "?_"

CATALOG_ENV = "MTPD_CATALOG_DIR"
BUILTIN_NAMES = (
    "fixed_point_iteration",
    "entities_before_relations",
    "visitor",
    "transitive_closure",
)


@dataclass(frozen=True)
class Template:
    """Rule-shaped participant body; type names are role variables."""

    lhs: GraphPattern
    rhs: GraphPattern
    nacs: tuple[GraphPattern, ...] = ()


@dataclass(frozen=True)
class ControlRequirement:
    """Required control flags; None leaves a flag unconstrained."""

    in_loop: bool | None = None
    self_loop: bool | None = None
    in_branch: bool | None = None


@dataclass(frozen=True)
class Participant:
    role: str
    template: Template
    control: ControlRequirement = ControlRequirement()
    optional: bool = False


@dataclass(frozen=True)
class Relation:
    """Combination constraint between two roles.

    same_type carries one role variable per side; the other kinds relate
    roles directly and leave ``variables`` as (None, None).
    """

    kind: str
    roles: tuple[str, str]
    variables: tuple[str | None, str | None] = (None, None)

    def operand_strings(self) -> list[str]:
        if self.kind == "same_type":
            return [f"{r}.{v}" for r, v in zip(self.roles, self.variables)]
        return list(self.roles)

    def describe(self) -> str:
        return f"{self.kind}({', '.join(self.operand_strings())})"


@dataclass(frozen=True)
class Thresholds:
    k_exact: int = 0
    k_approx: int = 1


@dataclass(frozen=True)
class PatternSpec:
    name: str
    participants: tuple[Participant, ...]
    relations: tuple[Relation, ...]
    thresholds: Thresholds
    description: str = ""

    def participant(self, role: str) -> Participant:
        for p in self.participants:
            if p.role == role:
                return p
        raise UnknownIdError(f"no participant with role '{role}'")

    @property
    def mandatory_roles(self) -> tuple[str, ...]:
        return tuple(p.role for p in self.participants if not p.optional)


def _template_variables(t: Template) -> set[str]:
    names: set[str] = set()
    for pat in (t.lhs, t.rhs, *t.nacs):
        for n in pat.nodes:
            names.add(n.type)
        for e in pat.edges:
            names.add(e.type)
    return {n for n in names if n.startswith("?") and n != WILDCARD}


def _check_variable_syntax(t: Template, loc: str) -> None:
    for pat in (t.lhs, t.rhs, *t.nacs):
        for name in [n.type for n in pat.nodes] + [e.type for e in pat.edges]:
            if name.startswith("?") and name != WILDCARD and len(name) < 2:
                raise FormatError(f"malformed role variable '{name}' at {loc}")


def parse_pattern(doc: str, *, path: str | None = None) -> PatternSpec:
    """Parse one catalog document into a PatternSpec.

    Raises FormatError for syntax/shape problems, UnknownIdError when a
    relation names an undeclared role or role variable, and FormatError when
    every participant is optional (a pattern needs at least one mandatory
    participant to anchor an occurrence).
    """
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, line=exc.lineno, column=exc.colno, path=path) from None
    obj = _obj(data, "$", required=("name", "participants", "relations", "thresholds"),
               optional=("description",))
    name = _str(obj["name"], "$")
    description = _str(obj.get("description", ""), "$")

    participants: list[Participant] = []
    roles: set[str] = set()
    for i, pd in enumerate(_list(obj["participants"], "$.participants")):
        loc = f"$.participants[{i}]"
        po = _obj(pd, loc, required=("role", "template"), optional=("control", "optional"))
        role = _str(po["role"], loc)
        if role in roles:
            raise FormatError(f"duplicate participant role '{role}'")
        roles.add(role)
        to = _obj(po["template"], f"{loc}.template", required=("lhs", "rhs"), optional=("nacs",))
        template = Template(
            lhs=parse_graph_pattern(to["lhs"], f"{loc}.template.lhs"),
            rhs=parse_graph_pattern(to["rhs"], f"{loc}.template.rhs"),
            nacs=tuple(parse_graph_pattern(n, f"{loc}.template.nacs[{j}]")
                       for j, n in enumerate(_list(to.get("nacs", []), f"{loc}.template.nacs"))),
        )
        _check_variable_syntax(template, loc)
        co = _obj(po.get("control", {}), f"{loc}.control", required=(),
                  optional=("in_loop", "self_loop", "in_branch"))
        control = ControlRequirement(
            in_loop=_bool(co["in_loop"], loc) if "in_loop" in co else None,
            self_loop=_bool(co["self_loop"], loc) if "self_loop" in co else None,
            in_branch=_bool(co["in_branch"], loc) if "in_branch" in co else None,
        )
        participants.append(Participant(role, template, control,
                                        _bool(po.get("optional", False), loc)))
    if not participants:
        raise FormatError("pattern declares no participants")
    if all(p.optional for p in participants):
        raise FormatError(f"pattern '{name}' has no mandatory participant")

    var_by_role = {p.role: _template_variables(p.template) for p in participants}

    relations: list[Relation] = []
    for i, rd in enumerate(_list(obj["relations"], "$.relations")):
        loc = f"$.relations[{i}]"
        ro = _obj(rd, loc, required=("kind", "operands"))
        kind = _str(ro["kind"], loc)
        if kind not in RELATION_KINDS:
            raise FormatError(f"unknown relation kind '{kind}' at {loc}")
        ops = [_str(o, loc) for o in _list(ro["operands"], loc)]
        if len(ops) != 2:
            raise FormatError(f"relation takes exactly two operands at {loc}")
        if kind == "same_type":
            sides: list[tuple[str, str]] = []
            for op in ops:
                if "." not in op:
                    raise FormatError(f"same_type operand '{op}' must be role.variable at {loc}")
                role, var = op.split(".", 1)
                if role not in roles:
                    raise UnknownIdError(f"relation references unknown role '{role}' at {loc}")
                if var == WILDCARD:
                    raise UnknownIdError(
                        f"wildcard '{WILDCARD}' cannot constrain a relation at {loc}")
                if var not in var_by_role[role]:
                    raise UnknownIdError(
                        f"role '{role}' declares no variable '{var}' at {loc}")
                sides.append((role, var))
            relations.append(Relation(kind, (sides[0][0], sides[1][0]),
                                      (sides[0][1], sides[1][1])))
        else:
            for op in ops:
                if op not in roles:
                    raise UnknownIdError(f"relation references unknown role '{op}' at {loc}")
            relations.append(Relation(kind, (ops[0], ops[1])))

    to = _obj(obj["thresholds"], "$.thresholds", required=("k_approx",), optional=("k_exact",))
    thresholds = Thresholds(k_exact=_int(to.get("k_exact", 0), "$.thresholds"),
                            k_approx=_int(to["k_approx"], "$.thresholds"))
    if thresholds.k_exact != 0:
        raise FormatError("k_exact is fixed at 0")
    if thresholds.k_approx < 1:
        raise FormatError("k_approx must be >= 1")
    return PatternSpec(name, tuple(participants), tuple(relations), thresholds, description)


def pattern_dict(p: PatternSpec) -> dict:
    out: dict = {"name": p.name}
    if p.description:
        out["description"] = p.description
    out["participants"] = []
    for part in p.participants:
        pd: dict = {
            "role": part.role,
            "template": {
                "lhs": _pattern_dict(part.template.lhs),
                "rhs": _pattern_dict(part.template.rhs),
                "nacs": [_pattern_dict(n) for n in part.template.nacs],
            },
        }
        control = {}
        for field in ("in_loop", "self_loop", "in_branch"):
            v = getattr(part.control, field)
            if v is not None:
                control[field] = v
        if control:
            pd["control"] = control
        if part.optional:
            pd["optional"] = True
        out["participants"].append(pd)
    out["relations"] = [
        {"kind": r.kind, "operands": r.operand_strings()} for r in p.relations
    ]
    out["thresholds"] = {"k_exact": p.thresholds.k_exact, "k_approx": p.thresholds.k_approx}
    return out


def serialize_pattern(p: PatternSpec, *, indent: int | None = None) -> str:
    return json.dumps(pattern_dict(p), indent=indent)


# ---------------------------------------------------------------------------
# Bundled catalog


def catalog_dir() -> Path:
    """Directory holding the bundled patterns, overridable via MTPD_CATALOG_DIR."""
    override = os.environ.get(CATALOG_ENV)
    if override:
        return Path(override)
    return Path(__file__).parent / "catalog"


def load_pattern(name_or_path: str) -> PatternSpec:
    """Load a pattern by bundled name or by file path."""
    p = Path(name_or_path)
    if not p.suffix and not p.exists():
        p = catalog_dir() / f"{name_or_path}.mtp"
    if not p.exists():
        raise FormatError(f"no pattern named or located at '{name_or_path}'")
    return parse_pattern(p.read_text(encoding="utf-8"), path=str(p))


def builtin_catalog() -> list[PatternSpec]:
    """All bundled patterns, in canonical order."""
    return [load_pattern(name) for name in BUILTIN_NAMES]

"""Synthetic corpus generation with ground truth.

Plants pattern instances into generated transformations so detection
quality can be measured against known truth: exact plantings instantiate
participant templates with fresh type names, mutated plantings apply random
structural edits whose encoded cost stays within the pattern's distance
budget, and degenerate plantings either drop a mandatory participant or
break one relation.  Noise rules share the type vocabulary.  Generation is
a pure function of the plan (seed included), and every planting is verified
at build time to carry the form its ground truth claims.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from .assembler import Form, detect_pattern
from .encoder import WILDCARD, encode_participant, encode_transformation
from .errors import PlanError
from .matcher import best_alignment
from .model import (AttrCond, ControlScheme, CtrlEdge, Edge, GraphPattern, Node,
                    Rule, Step, Transformation, validate)
from .patterns import Participant, PatternSpec, Relation, builtin_catalog

_FORM_ORDER = ("complete", "approximate", "degenerate_missing", "degenerate_relation")
_INTENDED_FORM = {
    "complete": Form.COMPLETE.value,
    "approximate": Form.APPROXIMATE.value,
    "degenerate_missing": Form.DEGENERATE_MISSING.value,
    "degenerate_relation": Form.DEGENERATE_CONSTRAINT.value,
}
_MAX_ATTEMPTS = 60


@dataclass(frozen=True)
class PatternPlanting:
    """How many instances of one pattern to plant, per intended form."""

    pattern: str
    complete: int = 0
    approximate: int = 0
    degenerate_missing: int = 0
    degenerate_relation: int = 0

    def count(self, form: str) -> int:
        return getattr(self, form)


@dataclass(frozen=True)
class PlantingPlan:
    seed: int
    patterns: tuple[PatternPlanting, ...]
    noise_rules: int = 0
    mutation_edits: int = 1
    name: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "PlantingPlan":
        plantings = tuple(
            PatternPlanting(
                pattern=p["pattern"],
                complete=int(p.get("complete", 0)),
                approximate=int(p.get("approximate", 0)),
                degenerate_missing=int(p.get("degenerate_missing", 0)),
                degenerate_relation=int(p.get("degenerate_relation", 0)),
            )
            for p in data.get("patterns", [])
        )
        return cls(seed=int(data["seed"]), patterns=plantings,
                   noise_rules=int(data.get("noise_rules", 0)),
                   mutation_edits=int(data.get("mutation_edits", 1)),
                   name=str(data.get("name", "")))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "name": self.name,
            "patterns": [{
                "pattern": p.pattern,
                "complete": p.complete,
                "approximate": p.approximate,
                "degenerate_missing": p.degenerate_missing,
                "degenerate_relation": p.degenerate_relation,
            } for p in self.patterns],
            "noise_rules": self.noise_rules,
            "mutation_edits": self.mutation_edits,
        }


@dataclass(frozen=True)
class PlantedInstance:
    """Ground truth for one planted instance (rules that survived planting)."""

    pattern: str
    form: str  # intended occurrence form (Form value)
    rules: tuple[tuple[str, str], ...]  # (role, rule name)
    dropped_role: str | None = None
    broken_relation: str | None = None
    encoded_cost: int = 0

    def to_dict(self) -> dict:
        return {"pattern": self.pattern, "form": self.form,
                "rules": {role: rule for role, rule in self.rules},
                "dropped_role": self.dropped_role,
                "broken_relation": self.broken_relation,
                "encoded_cost": self.encoded_cost}


@dataclass(frozen=True)
class GroundTruth:
    transformation: str
    instances: tuple[PlantedInstance, ...]

    def to_dict(self) -> dict:
        return {"transformation": self.transformation,
                "instances": [i.to_dict() for i in self.instances]}

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(
            transformation=data["transformation"],
            instances=tuple(
                PlantedInstance(
                    pattern=i["pattern"], form=i["form"],
                    rules=tuple(sorted(i["rules"].items())),
                    dropped_role=i.get("dropped_role"),
                    broken_relation=i.get("broken_relation"),
                    encoded_cost=int(i.get("encoded_cost", 0)),
                ) for i in data["instances"]),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Score:
    precision: float
    recall: float
    true_positives: int
    false_positives: int
    detected_count: int
    instance_count: int
    confusion: dict[tuple[str, str], int] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Planting


def _needs_loop_control(spec: PatternSpec) -> bool:
    return any(p.control.in_loop or p.control.self_loop or p.control.in_branch
               for p in spec.participants)


def _needs_order_control(spec: PatternSpec) -> bool:
    return any(r.kind == "control_before" for r in spec.relations)


@dataclass
class _Instance:
    spec: PatternSpec
    intended: str
    rules: dict[str, Rule]
    loop_roles: set[str]
    role_order: list[str]
    dropped_role: str | None = None
    broken: Relation | None = None
    cost: int = 0


class _Planter:
    def __init__(self, plan: PlantingPlan, specs: dict[str, PatternSpec]):
        self.plan = plan
        self.specs = specs
        self.rng = random.Random(plan.seed)
        self.types: list[str] = []
        self._type_n = 0
        self._rule_n = 0
        self._drop_role: dict[str, str] = {}

    # -- names ---------------------------------------------------------

    def _fresh_type(self, prefix: str = "T") -> str:
        self._type_n += 1
        name = f"{prefix}{self._type_n}"
        self.types.append(name)
        return name

    def _rule_name(self, spec: PatternSpec, role: str) -> str:
        self._rule_n += 1
        short = "".join(w[0] for w in spec.name.split("_"))
        return f"{short}{self._rule_n}_{role}"

    # -- control -------------------------------------------------------

    def _control(self, kind: str, rules: list[Rule], loop_rules: set[str]) -> ControlScheme:
        if kind != "graph":
            steps = tuple(Step(r.name, i, False, False) for i, r in enumerate(rules))
            return ControlScheme(kind, steps, ())
        names = [r.name for r in rules]
        edges = [CtrlEdge(a, b, "seq") for a, b in zip(names, names[1:])]
        edges += [CtrlEdge(n, n, "loop-back") for n in names if n in loop_rules]
        return ControlScheme("graph", (), tuple(edges))

    def control_kind(self) -> str:
        loops = [p.pattern for p in self.plan.patterns
                 if _needs_loop_control(self.specs[p.pattern])]
        orders = [p.pattern for p in self.plan.patterns
                  if _needs_order_control(self.specs[p.pattern])]
        if loops and orders:
            raise PlanError(
                "plan mixes loop-constrained patterns with order-constrained ones "
                f"({loops[0]} vs {orders[0]}); they need different control schemes")
        return "graph" if loops else "sequence"

    # -- instantiation -------------------------------------------------

    def _type_classes(self, spec: PatternSpec, skip: Relation | None) -> dict[tuple[str, str], str]:
        """Union-find over (role, variable) pairs merged by same_type relations."""
        parent: dict[tuple[str, str], tuple[str, str]] = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

        for rel in spec.relations:
            if rel.kind != "same_type" or rel is skip:
                continue
            union((rel.roles[0], rel.variables[0]), (rel.roles[1], rel.variables[1]))
        if skip is not None:
            a = (skip.roles[0], skip.variables[0])
            b = (skip.roles[1], skip.variables[1])
            if find(a) == find(b):
                raise PlanError(
                    f"relation {skip.describe()} cannot be broken: other relations "
                    "force its operands to the same type")
        concrete: dict[tuple[str, str], str] = {}
        roots: dict[tuple[str, str], str] = {}
        for part in spec.participants:
            for pat in (part.template.lhs, part.template.rhs, *part.template.nacs):
                for name in [n.type for n in pat.nodes] + [e.type for e in pat.edges]:
                    if name.startswith("?") and name != WILDCARD:
                        key = (part.role, name)
                        root = find(key)
                        if root not in roots:
                            roots[root] = self._fresh_type()
                        concrete[key] = roots[root]
        return concrete

    def _instantiate_pattern(self, pat: GraphPattern, role: str,
                             concrete: dict[tuple[str, str], str]) -> GraphPattern:
        def conc(name: str) -> str:
            if name == WILDCARD:
                return self._fresh_type("W")
            if name.startswith("?"):
                return concrete[(role, name)]
            return name

        return GraphPattern(
            tuple(Node(n.id, conc(n.type)) for n in pat.nodes),
            tuple(Edge(conc(e.type), e.src, e.tgt) for e in pat.edges),
            tuple(AttrCond(a.owner, a.name, a.op, a.value) for a in pat.attrs),
        )

    def _instantiate(self, spec: PatternSpec, skip: Relation | None = None) -> _Instance:
        concrete = self._type_classes(spec, skip)
        rules: dict[str, Rule] = {}
        loop_roles: set[str] = set()
        for part in spec.participants:
            t = part.template
            rule = Rule(
                self._rule_name(spec, part.role),
                self._instantiate_pattern(t.lhs, part.role, concrete),
                self._instantiate_pattern(t.rhs, part.role, concrete),
                tuple(self._instantiate_pattern(n, part.role, concrete) for n in t.nacs),
            )
            rules[part.role] = rule
            if part.control.in_loop or part.control.self_loop:
                loop_roles.add(part.role)
        role_order = self._role_order(spec, swap=None)
        return _Instance(spec, "", rules, loop_roles, role_order)

    def _role_order(self, spec: PatternSpec, swap: Relation | None) -> list[str]:
        """Participant order honoring control_before constraints (topological,
        declaration-order tie-break); ``swap`` reverses that one constraint."""
        roles = [p.role for p in spec.participants]
        after: dict[str, set[str]] = {r: set() for r in roles}
        for rel in spec.relations:
            if rel.kind != "control_before":
                continue
            a, b = rel.roles
            if rel is swap:
                a, b = b, a
            after[b].add(a)
        out: list[str] = []
        pending = list(roles)
        while pending:
            for r in pending:
                if after[r] <= set(out):
                    out.append(r)
                    pending.remove(r)
                    break
            else:
                raise PlanError(f"control_before relations of '{spec.name}' form a cycle")
        return out

    # -- verification ----------------------------------------------------

    def _probe(self, inst: _Instance, kind: str) -> Transformation:
        rules = [inst.rules[r] for r in inst.role_order if r in inst.rules]
        loop_rules = {inst.rules[r].name for r in inst.loop_roles if r in inst.rules}
        return Transformation("probe", tuple(rules), self._control(kind, rules, loop_rules))

    def _verify(self, inst: _Instance, kind: str, intended: str) -> tuple[bool, int]:
        """Detect against just this instance and check the intended outcome."""
        t = self._probe(inst, kind)
        res = detect_pattern(t, inst.spec)
        mandatory = set(inst.spec.mandatory_roles)
        target = {role: rule.name for role, rule in inst.rules.items() if role in mandatory}
        for occ in res.occurrences:
            assigned = {r: n for r, n in occ.assignment.items() if r in mandatory}
            if assigned != target:
                continue
            if occ.form.value != _INTENDED_FORM[intended]:
                return False, occ.total_distance
            if intended == "degenerate_relation":
                if {v.describe() for v in occ.violations} != {inst.broken.describe()}:
                    return False, occ.total_distance
            return True, occ.total_distance
        return False, 0

    # -- mutation --------------------------------------------------------

    def _mutate_rule(self, rule: Rule, block_kinds: list[str]) -> Rule | None:
        """Apply one random structural edit; None when the drawn op fits nowhere."""
        rng = self.rng
        ops = ["node_add", "node_del", "edge_add", "edge_del", "attr_add", "attr_del"]
        rng.shuffle(ops)
        blocks = [rule.lhs, rule.rhs, *rule.nacs]
        for op in ops:
            order = list(range(len(blocks)))
            rng.shuffle(order)
            for bi in order:
                pat = blocks[bi]
                kind = block_kinds[bi]
                new = self._apply_edit(op, pat, kind)
                if new is None:
                    continue
                blocks[bi] = new
                return Rule(rule.name, blocks[0], blocks[1], tuple(blocks[2:]))
        return None

    def _apply_edit(self, op: str, pat: GraphPattern, kind: str) -> GraphPattern | None:
        rng = self.rng
        if op == "node_add":
            nid = f"m{rng.randrange(10_000)}"
            if any(n.id == nid for n in pat.nodes):
                return None
            return replace(pat, nodes=pat.nodes + (Node(nid, rng.choice(self.types)),))
        if op == "node_del":
            used = {e.src for e in pat.edges} | {e.tgt for e in pat.edges} \
                | {a.owner for a in pat.attrs}
            isolated = [n for n in pat.nodes if n.id not in used]
            if not isolated:
                return None
            victim = rng.choice(isolated)
            return replace(pat, nodes=tuple(n for n in pat.nodes if n.id != victim.id))
        if op == "edge_add":
            if not pat.nodes:
                return None
            src = rng.choice(pat.nodes).id
            tgt = rng.choice(pat.nodes).id
            return replace(pat, edges=pat.edges + (Edge(rng.choice(self.types), src, tgt),))
        if op == "edge_del":
            if not pat.edges:
                return None
            i = rng.randrange(len(pat.edges))
            return replace(pat, edges=pat.edges[:i] + pat.edges[i + 1:])
        if op == "attr_add":
            if not pat.nodes:
                return None
            owner = rng.choice(pat.nodes).id
            if kind == "rhs":
                attr = AttrCond(owner, f"p{rng.randrange(1000)}", "bind", "v")
            else:
                attr = AttrCond(owner, f"p{rng.randrange(1000)}",
                                rng.choice(("eq", "neq", "lt", "gt", "other")), "v")
            return replace(pat, attrs=pat.attrs + (attr,))
        if op == "attr_del":
            if not pat.attrs:
                return None
            i = rng.randrange(len(pat.attrs))
            return replace(pat, attrs=pat.attrs[:i] + pat.attrs[i + 1:])
        return None

    def _mutate_instance(self, inst: _Instance, kind: str) -> _Instance | None:
        edits = self.plan.mutation_edits
        mutated = dict(inst.rules)
        loop_roles = set(inst.loop_roles)
        mandatory = list(inst.spec.mandatory_roles)
        for _ in range(edits):
            role = self.rng.choice(mandatory)
            rule = mutated[role]
            if kind == "graph" and self.rng.random() < 0.15:
                # flip the rule's loop membership instead of a structural edit
                if role in loop_roles:
                    loop_roles.discard(role)
                else:
                    loop_roles.add(role)
                continue
            block_kinds = ["lhs", "rhs"] + ["nac"] * len(rule.nacs)
            new = self._mutate_rule(rule, block_kinds)
            if new is None:
                return None
            mutated[role] = new
        out = _Instance(inst.spec, inst.intended, mutated, loop_roles,
                        list(inst.role_order))
        return out

    # -- per-form planting -------------------------------------------------

    def plant(self, spec: PatternSpec, form: str, kind: str) -> _Instance:
        for _ in range(_MAX_ATTEMPTS):
            if form == "complete":
                inst = self._instantiate(spec)
            elif form == "approximate":
                if self.plan.mutation_edits > spec.thresholds.k_approx:
                    raise PlanError(
                        f"mutation_edits={self.plan.mutation_edits} exceeds k_approx="
                        f"{spec.thresholds.k_approx} of '{spec.name}'; such plantings "
                        "are not recall-testable")
                base = self._instantiate(spec)
                maybe = self._mutate_instance(base, kind)
                if maybe is None:
                    continue
                inst = maybe
            elif form == "degenerate_missing":
                mandatory = list(spec.mandatory_roles)
                if len(mandatory) < 2:
                    raise PlanError(
                        f"'{spec.name}' has a single mandatory participant; dropping "
                        "it would leave nothing to detect")
                inst = self._instantiate(spec)
                drop = self._drop_role.setdefault(spec.name, self.rng.choice(mandatory))
                del inst.rules[drop]
                inst.dropped_role = drop
            elif form == "degenerate_relation":
                breakable = [r for r in spec.relations if r.kind == "same_type"]
                if kind != "graph":
                    breakable += [r for r in spec.relations if r.kind == "control_before"]
                if not breakable:
                    raise PlanError(f"'{spec.name}' has no breakable relation")
                broken = self.rng.choice(breakable)
                if broken.kind == "same_type":
                    inst = self._instantiate(spec, skip=broken)
                else:
                    inst = self._instantiate(spec)
                    inst.role_order = self._role_order(spec, swap=broken)
                inst.broken = broken
            else:
                raise PlanError(f"unknown planting form '{form}'")
            inst.intended = form
            ok, cost = self._verify(inst, kind, form)
            if not ok:
                continue
            if form == "approximate" and not 1 <= cost <= spec.thresholds.k_approx * len(inst.rules):
                continue
            inst.cost = cost
            return inst
        raise PlanError(f"could not plant a '{form}' instance of '{spec.name}' "
                        f"after {_MAX_ATTEMPTS} attempts")

    # -- noise -------------------------------------------------------------

    def _noise_type(self) -> str:
        if self.types and self.rng.random() < 0.5:
            return self.rng.choice(self.types)
        return self._fresh_type("N")

    def noise_rule(self, index: int) -> Rule:
        rng = self.rng

        def pattern(max_nodes: int, binds: bool) -> GraphPattern:
            nodes = tuple(Node(f"n{i}", self._noise_type())
                          for i in range(rng.randint(1, max_nodes)))
            edges = []
            for _ in range(rng.randint(0, min(2, len(nodes)))):
                edges.append(Edge(self._noise_type(),
                                  rng.choice(nodes).id, rng.choice(nodes).id))
            attrs = []
            for _ in range(rng.randint(0, 2)):
                owner = rng.choice(nodes).id
                if binds:
                    attrs.append(AttrCond(owner, f"a{rng.randrange(100)}", "bind", "v"))
                else:
                    attrs.append(AttrCond(owner, f"a{rng.randrange(100)}",
                                          rng.choice(("eq", "neq", "lt", "gt", "other")), "v"))
            return GraphPattern(nodes, tuple(edges), tuple(attrs))

        nacs = (pattern(2, False),) if rng.random() < 0.2 else ()
        return Rule(f"noise_{index}", pattern(4, False), pattern(3, True), nacs)

    # -- top level -----------------------------------------------------------

    def generate(self) -> tuple[Transformation, GroundTruth]:
        for planting in self.plan.patterns:
            if planting.pattern not in self.specs:
                raise PlanError(f"unknown pattern '{planting.pattern}' in plan")
            if planting.degenerate_missing > 0 and (
                    planting.complete or planting.approximate or planting.degenerate_relation):
                raise PlanError(
                    f"'{planting.pattern}': degenerate-missing plantings cannot share a "
                    "transformation with other instances of the same pattern (the dropped "
                    "participant would match the other instance's rules)")
        kind = self.control_kind()

        instances: list[_Instance] = []
        for planting in self.plan.patterns:
            spec = self.specs[planting.pattern]
            for form in _FORM_ORDER:
                for _ in range(planting.count(form)):
                    instances.append(self.plant(spec, form, kind))
        if not self.types:
            for _ in range(3):
                self._fresh_type("N")

        planted_rules: list[Rule] = []
        loop_rules: set[str] = set()
        for inst in instances:
            for role in inst.role_order:
                if role in inst.rules:
                    planted_rules.append(inst.rules[role])
                    if role in inst.loop_roles:
                        loop_rules.add(inst.rules[role].name)

        # screening targets: templates of dropped roles must match nothing
        screened = [(inst.spec.thresholds.k_approx,
                     encode_participant(inst.spec.participant(inst.dropped_role)))
                    for inst in instances if inst.dropped_role]

        name = self.plan.name or f"synthetic_{self.plan.seed}"
        for _ in range(_MAX_ATTEMPTS):
            noise = [self.noise_rule(i) for i in range(self.plan.noise_rules)]
            rules = list(planted_rules)
            for nr in noise:
                rules.insert(self.rng.randint(0, len(rules)), nr)
            t = Transformation(name, tuple(rules), self._control(kind, rules, loop_rules))
            problems = validate(t)
            if problems:  # pragma: no cover - generator bug guard
                raise PlanError(f"generated transformation is invalid: {problems[0]}")
            if not screened:
                break
            encodings = encode_transformation(t)
            planted_names = {r.name for r in planted_rules}
            collision = None
            for k, enc in screened:
                for rule_name, enc_r in encodings.items():
                    if best_alignment(enc, enc_r).distance <= k:
                        collision = rule_name
                        break
                if collision:
                    break
            if collision is None:
                break
            if collision in planted_names:
                raise PlanError(
                    f"dropped participant template matches planted rule '{collision}'; "
                    "plant these patterns in separate transformations")
            # resample noise on collision
        else:
            raise PlanError("could not generate non-colliding noise rules")

        truth = GroundTruth(name, tuple(
            PlantedInstance(
                pattern=inst.spec.name,
                form=_INTENDED_FORM[inst.intended],
                rules=tuple(sorted((role, rule.name) for role, rule in inst.rules.items())),
                dropped_role=inst.dropped_role,
                broken_relation=inst.broken.describe() if inst.broken else None,
                encoded_cost=inst.cost,
            ) for inst in instances))
        return t, truth


def generate(plan: PlantingPlan, catalog: list[PatternSpec] | None = None
             ) -> tuple[Transformation, GroundTruth]:
    """Generate one transformation with planted instances plus its ground truth.

    Deterministic in the plan's seed.  Raises PlanError when the plan is
    infeasible (mixed control requirements, unbreakable relations, a dropped
    participant that cannot be isolated, or a mutation budget above the
    pattern's threshold).
    """
    specs = {s.name: s for s in (catalog if catalog is not None else builtin_catalog())}
    return _Planter(plan, specs).generate()


# ---------------------------------------------------------------------------
# Scoring


def score(detected, truth: GroundTruth,
          specs: dict[str, PatternSpec] | None = None) -> Score:
    """Precision/recall of detected occurrences against planted ground truth.

    An occurrence is a true positive iff its mandatory-role rule set equals
    the planted rule set of some instance of the same pattern.  With zero
    detections the precision is 1.0 by convention (nothing was claimed), and
    the recall 0.0.
    """
    if specs is None:
        specs = {s.name: s for s in builtin_catalog()}
    detected = list(detected)
    matched: dict[int, str] = {}
    tp = [False] * len(detected)
    for i, inst in enumerate(truth.instances):
        mandatory = set(specs[inst.pattern].mandatory_roles)
        target = frozenset(rule for role, rule in inst.rules if role in mandatory)
        for j, occ in enumerate(detected):
            if occ.pattern != inst.pattern:
                continue
            got = frozenset(rule for role, rule in occ.assignment.items()
                            if role in mandatory)
            if got == target:
                tp[j] = True
                matched.setdefault(i, occ.form.value)
    confusion: dict[tuple[str, str], int] = {}
    for i, inst in enumerate(truth.instances):
        key = (inst.form, matched.get(i, "missed"))
        confusion[key] = confusion.get(key, 0) + 1
    n_inst = len(truth.instances)
    n_det = len(detected)
    tp_count = sum(tp)
    return Score(
        precision=tp_count / n_det if n_det else 1.0,
        recall=len(matched) / n_inst if n_inst else 1.0,
        true_positives=tp_count,
        false_positives=n_det - tp_count,
        detected_count=n_det,
        instance_count=n_inst,
        confusion=confusion,
    )

"""Combine per-participant match candidates into pattern occurrences.

The matcher proposes, per participant, the rules it could play against; this
module searches the injective role-to-rule assignments, checks the pattern's
relations, classifies each occurrence (complete, approximate, or one of two
degenerate forms) and keeps the human in the loop through a persistent
review workflow.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .encoder import (EncodedString, encode_participant, encode_transformation,
                      nth_token_permutation, structural_skeleton)
from .errors import FormatError
from .matcher import (best_alignment, bv_edit_distance, semi_global_distance)
from .model import ControlFlags, Transformation, normalize_control
from .patterns import PatternSpec, Relation

DEFAULT_BUDGET = 10 ** 6


class Form(str, enum.Enum):
    """Occurrence classification, ordered from strongest to weakest evidence."""

    COMPLETE = "complete"
    APPROXIMATE = "approximate"
    DEGENERATE_MISSING = "degenerate_missing_participant"
    DEGENERATE_CONSTRAINT = "degenerate_constraint_violated"

    @property
    def rank(self) -> int:
        return {Form.COMPLETE: 0, Form.APPROXIMATE: 1,
                Form.DEGENERATE_MISSING: 2, Form.DEGENERATE_CONSTRAINT: 2}[self]


@dataclass(frozen=True)
class MatchResult:
    """One candidate rule for one participant role."""

    rule: str
    distance: int
    remapping_index: int
    bindings: tuple[tuple[str, str], ...]  # role variable -> concrete type


@dataclass
class CandidateSet:
    pattern: str
    candidates: dict[str, list[MatchResult]]
    truncated: bool = False


@dataclass(frozen=True)
class Occurrence:
    pattern: str
    members: tuple[tuple[str, MatchResult], ...]  # (role, match), roles unique
    missing: tuple[str, ...]
    violations: tuple[Relation, ...]
    total_distance: int
    form: Form

    @property
    def assignment(self) -> dict[str, str]:
        return {role: m.rule for role, m in self.members}

    @property
    def occurrence_id(self) -> str:
        key = self.pattern + "|" + ",".join(
            f"{role}={rule}" for role, rule in sorted(self.assignment.items()))
        return hashlib.sha1(key.encode()).hexdigest()[:12]


@dataclass
class AssemblyResult:
    occurrences: list[Occurrence]
    truncated: bool = False
    nodes_explored: int = 0


# ---------------------------------------------------------------------------
# Candidate generation


def _compose_bindings(part_enc: EncodedString, remapping_index: int,
                      rule_enc: EncodedString) -> tuple[tuple[str, str], ...]:
    """Recover role-variable bindings: participant token -> permuted token ->
    concrete type of the rule that owns that token (if any)."""
    perm = nth_token_permutation(part_enc, remapping_index)
    by_token = {tok: name for name, tok in rule_enc.token_map}
    out = []
    for var, tok in part_enc.token_map:
        if not var.startswith("?") or var == "?_":
            continue
        concrete = by_token.get(perm[tok])
        if concrete is not None:
            out.append((var, concrete))
    return tuple(out)


def candidates(pattern: PatternSpec, t: Transformation,
               encodings: Mapping[str, EncodedString], *,
               k: int | None = None, mode: str = "semi_global",
               perm_cap: int = 720) -> CandidateSet:
    """All rules each participant matches within the distance threshold.

    Candidate lists are sorted by (distance, rule declaration order).  A
    cheap skeleton lower bound skips rule/participant pairs that no token
    remapping could bring within k; kept candidates carry exact distances.
    """
    if k is None:
        k = pattern.thresholds.k_approx
    semi = mode == "semi_global"
    dist = semi_global_distance if semi else bv_edit_distance
    rule_skeletons = {name: structural_skeleton(e.data) for name, e in encodings.items()}

    out: dict[str, list[MatchResult]] = {}
    truncated = False
    for part in pattern.participants:
        enc_p = encode_participant(part)
        skel_p = structural_skeleton(enc_p.data)
        matches: list[tuple[int, int, MatchResult]] = []
        for idx, rule in enumerate(t.rules):
            enc_r = encodings[rule.name]
            gap = len(enc_p.data) - len(enc_r.data)
            if (gap if semi else abs(gap)) > k:
                continue
            if dist(skel_p, rule_skeletons[rule.name]) > k:
                continue
            res = best_alignment(enc_p, enc_r, mode, perm_cap)
            truncated = truncated or res.truncated
            if res.distance > k:
                continue
            bindings = _compose_bindings(enc_p, res.remapping_index, enc_r)
            matches.append((res.distance, idx,
                            MatchResult(rule.name, res.distance, res.remapping_index, bindings)))
        matches.sort(key=lambda m: (m[0], m[1]))
        out[part.role] = [m for _, _, m in matches]
    return CandidateSet(pattern.name, out, truncated)


# ---------------------------------------------------------------------------
# Relations and classification


def check_relations(members: Mapping[str, MatchResult], pattern: PatternSpec,
                    flags: Mapping[str, ControlFlags]) -> list[Relation]:
    """The pattern relations violated by a (possibly partial) assignment.

    Unassigned roles and unbound variables satisfy their relations vacuously;
    an undefined sequential position violates control_before, since the
    transformation then never establishes the required ordering.
    """
    violated = []
    for rel in pattern.relations:
        ra, rb = rel.roles
        ma, mb = members.get(ra), members.get(rb)
        if ma is None or mb is None:
            continue
        if rel.kind == "same_type":
            va = dict(ma.bindings).get(rel.variables[0])
            vb = dict(mb.bindings).get(rel.variables[1])
            if va is not None and vb is not None and va != vb:
                violated.append(rel)
        elif rel.kind == "control_before":
            pa = flags[ma.rule].seq_pos
            pb = flags[mb.rule].seq_pos
            if pa is None or pb is None or not pa < pb:
                violated.append(rel)
        elif rel.kind == "distinct_rules":
            if ma.rule == mb.rule:
                violated.append(rel)
    return violated


def classify(o: Occurrence, pattern: PatternSpec) -> Form | None:
    """Form of an assembled occurrence, or None when it should be discarded.

    Complete: every mandatory role assigned, zero total distance, no
    violations.  Approximate: every mandatory role assigned, no violations,
    total distance positive but within the per-member budget.  Degenerate:
    either a mandatory role is missing while some member matched exactly, or
    all mandatory roles are assigned but a relation is violated.
    """
    assigned = dict(o.members)
    missing_mandatory = [r for r in pattern.mandatory_roles if r not in assigned]
    if not missing_mandatory:
        if o.violations:
            return Form.DEGENERATE_CONSTRAINT
        if o.total_distance == 0:
            return Form.COMPLETE
        if o.total_distance <= len(o.members) * pattern.thresholds.k_approx:
            return Form.APPROXIMATE
        return None
    if assigned and any(m.distance == 0 for m in assigned.values()):
        return Form.DEGENERATE_MISSING
    return None


# ---------------------------------------------------------------------------
# Assembly


class _BudgetExceeded(Exception):
    pass


def assemble(cs: CandidateSet, pattern: PatternSpec, t: Transformation,
             budget: int = DEFAULT_BUDGET) -> AssemblyResult:
    """Search injective role-to-rule assignments and emit classified occurrences.

    Mandatory roles are branched first, in ascending candidate-count order;
    every maximal injective assignment (one that no unassigned mandatory role
    could extend) is completed with the lexicographically best optional-role
    choice by (total distance, violation count, missing count).  Exploration
    stops after ``budget`` search nodes and reports truncation.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    flags = normalize_control(t)
    decl = {p.role: i for i, p in enumerate(pattern.participants)}
    mandatory = sorted((p.role for p in pattern.participants if not p.optional),
                       key=lambda r: (len(cs.candidates.get(r, [])), decl[r]))
    optional = [p.role for p in pattern.participants if p.optional]

    result = AssemblyResult(occurrences=[])
    state: dict[str, MatchResult] = {}

    def spend() -> None:
        result.nodes_explored += 1
        if result.nodes_explored > budget:
            raise _BudgetExceeded

    def optional_choices(role: str) -> list[MatchResult | None]:
        return list(cs.candidates.get(role, [])) + [None]

    def complete_leaf() -> None:
        used = {m.rule for m in state.values()}
        for role in mandatory:
            if role not in state and any(c.rule not in used for c in cs.candidates.get(role, [])):
                return  # extendable, not maximal
        best_key = None
        best_members: dict[str, MatchResult] | None = None
        best_violations: list[Relation] = []
        for combo in itertools.product(*(optional_choices(r) for r in optional)):
            spend()
            members = dict(state)
            for role, match in zip(optional, combo):
                if match is not None:
                    members[role] = match
            violations = check_relations(members, pattern, flags)
            total = sum(m.distance for m in members.values())
            missing = len(pattern.participants) - len(members)
            key = (total, len(violations), missing)
            if best_key is None or key < best_key:
                best_key = key
                best_members = members
                best_violations = violations
        assert best_members is not None
        missing_roles = tuple(p.role for p in pattern.participants
                              if p.role not in best_members)
        members_tuple = tuple(sorted(best_members.items(), key=lambda kv: decl[kv[0]]))
        occ = Occurrence(
            pattern=pattern.name,
            members=members_tuple,
            missing=missing_roles,
            violations=tuple(best_violations),
            total_distance=best_key[0] if best_key else 0,
            form=Form.COMPLETE,  # placeholder, replaced below
        )
        form = classify(occ, pattern)
        if form is None:
            return
        result.occurrences.append(
            Occurrence(occ.pattern, occ.members, occ.missing, occ.violations,
                       occ.total_distance, form))

    def dfs(i: int) -> None:
        if i == len(mandatory):
            complete_leaf()
            return
        role = mandatory[i]
        used = {m.rule for m in state.values()}
        for cand in cs.candidates.get(role, []):
            if cand.rule in used:
                continue
            spend()
            state[role] = cand
            dfs(i + 1)
            del state[role]
        spend()
        dfs(i + 1)  # leave unassigned; non-maximal leaves are filtered

    try:
        dfs(0)
    except _BudgetExceeded:
        result.truncated = True

    result.occurrences.sort(key=lambda o: (o.form.rank, o.total_distance,
                                           tuple(sorted(o.assignment.items()))))
    return result


def detect_pattern(t: Transformation, pattern: PatternSpec, *,
                   k_override: int | None = None, mode: str = "semi_global",
                   perm_cap: int = 720, budget: int = DEFAULT_BUDGET,
                   encodings: Mapping[str, EncodedString] | None = None) -> AssemblyResult:
    """Full pipeline for one (transformation, pattern) pair."""
    if encodings is None:
        encodings = encode_transformation(t)
    cs = candidates(pattern, t, encodings, k=k_override, mode=mode, perm_cap=perm_cap)
    result = assemble(cs, pattern, t, budget=budget)
    result.truncated = result.truncated or cs.truncated
    return result


# ---------------------------------------------------------------------------
# Review workflow

VERDICTS = ("accepted", "rejected", "undecided")


@dataclass
class ReviewEntry:
    occurrence_id: str
    verdict: str
    annotation: str = ""

    def to_dict(self) -> dict:
        return {"occurrence_id": self.occurrence_id, "verdict": self.verdict,
                "annotation": self.annotation}


def load_review(path: Path | str) -> dict[str, ReviewEntry]:
    """Prior review decisions keyed by occurrence id; missing file means none."""
    p = Path(path)
    if not p.exists():
        return {}
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, line=exc.lineno, column=exc.colno, path=str(p)) from None
    if not isinstance(data, list):
        raise FormatError(f"review file {p} must hold a JSON list")
    out = {}
    for item in data:
        if not isinstance(item, dict) or "occurrence_id" not in item or "verdict" not in item:
            raise FormatError(f"malformed review entry in {p}")
        verdict = item["verdict"]
        if verdict not in VERDICTS:
            raise FormatError(f"unknown verdict '{verdict}' in {p}")
        out[item["occurrence_id"]] = ReviewEntry(item["occurrence_id"], verdict,
                                                 item.get("annotation", ""))
    return out


def save_review(path: Path | str, entries: Iterable[ReviewEntry]) -> None:
    Path(path).write_text(
        json.dumps([e.to_dict() for e in entries], indent=2) + "\n", encoding="utf-8")


def review(occurrence_ids: list[str], prior: Mapping[str, ReviewEntry],
           decide: Callable[[str], tuple[str, str]]) -> list[ReviewEntry]:
    """Merge prior verdicts with fresh decisions for new occurrences.

    Prior verdicts are kept (without re-deciding) for ids still present;
    ids no longer present are dropped.  ``decide`` is called once per new
    id, in presentation order, and returns (verdict, annotation).
    """
    out = []
    for oid in occurrence_ids:
        if oid in prior:
            out.append(prior[oid])
        else:
            verdict, annotation = decide(oid)
            if verdict not in VERDICTS:
                raise ValueError(f"unknown verdict '{verdict}'")
            out.append(ReviewEntry(oid, verdict, annotation))
    return out

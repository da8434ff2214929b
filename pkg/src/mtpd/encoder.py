"""Canonical byte-string encoding of rules and pattern participants.

Every rule (together with its control flags) and every pattern participant
is rendered as a short byte string over a fixed printable alphabet:

    R  L <lhs body>  G <rhs body>  [N <nac body>]...  C <flag bytes>

where a body emits, in canonical element order, ``n<tok>`` per node,
``e<typeTok><srcTok><tgtTok>`` per edge, ``a<ownerTok><opSym>`` per
comparison and ``b<ownerTok>`` per bind.  Type names (or role variables)
are replaced by single-byte tokens A..Z assigned densely by first
occurrence, which makes the encoding independent of the metamodel
vocabulary: two structurally identical units encode to identical bytes.

Canonical element order uses only structural keys (degrees, attribute
counts, declaration index), never names, so participant templates and
concrete rules line up positionally for string matching.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import MtpdError, TokenOverflowError
from .model import ControlFlags, GraphPattern, Rule, Transformation, normalize_control

if TYPE_CHECKING:  # pragma: no cover
    from .patterns import Participant

BLOCK_MARKERS = b"RLGNC"
ELEMENT_MARKERS = b"neab"
OP_SYMBOLS = {"eq": ord("="), "neq": ord("!"), "lt": ord("<"), "gt": ord(">"), "other": ord("~")}
FLAG_SEQ, FLAG_LOOP, FLAG_SELF, FLAG_BRANCH = ord("s"), ord("l"), ord("r"), ord("x")
TOKENS = string.ascii_uppercase
WILDCARD = "?_"

# All byte values that can occur in an encoding.  Uppercase letters serve
# both as type tokens and as block markers; decoding stays unambiguous
# because tokens appear only at operand positions of fixed-width element
# codes.
ALPHABET = frozenset(
    bytes(OP_SYMBOLS.values())
    + b"slrx"
    + ELEMENT_MARKERS
    + string.ascii_uppercase.encode()
)

MAX_TOKENS = len(TOKENS)
DEFAULT_PERM_CAP = 720  # 6! permutations


@dataclass(frozen=True)
class EncodedString:
    """Canonical bytes for one rule or participant plus its token table.

    token_map pairs are ordered by token assignment; wildcard occurrences
    repeat the ``?_`` key, each with its own fresh token.  token_positions
    lists the byte offsets holding token bytes, which is what makes token
    remapping a straight byte substitution.
    """

    data: bytes
    token_map: tuple[tuple[str, str], ...]
    source: str
    token_positions: tuple[int, ...]

    @property
    def used_tokens(self) -> tuple[str, ...]:
        return tuple(tok for _, tok in self.token_map)


def canonical_order(p: GraphPattern) -> list:
    """Order a pattern's elements deterministically: nodes, then edges, then attrs.

    Nodes sort by (total degree desc, attribute count desc, in-degree desc,
    declaration index asc); edges by the canonical positions of their
    endpoints; attrs by owner position then op symbol.  Keys never consult
    type names, so renaming cannot change the order.
    """
    nodes, edges, attrs, _ = _ordered_elements(p)
    return [n for n, _ in nodes] + [e for e, _ in edges] + [a for a, _ in attrs]


def _ordered_elements(p: GraphPattern):
    indeg: dict[str, int] = {n.id: 0 for n in p.nodes}
    outdeg: dict[str, int] = {n.id: 0 for n in p.nodes}
    attr_count: dict[str, int] = {n.id: 0 for n in p.nodes}
    for e in p.edges:
        if e.src not in indeg or e.tgt not in indeg:
            raise MtpdError(f"edge endpoint '{e.src if e.src not in indeg else e.tgt}' not declared")
        outdeg[e.src] += 1
        indeg[e.tgt] += 1
    for a in p.attrs:
        if a.owner not in attr_count:
            raise MtpdError(f"attribute owner '{a.owner}' not declared")
        attr_count[a.owner] += 1

    nodes = sorted(
        ((n, i) for i, n in enumerate(p.nodes)),
        key=lambda ni: (-(indeg[ni[0].id] + outdeg[ni[0].id]),
                        -attr_count[ni[0].id], -indeg[ni[0].id], ni[1]),
    )
    pos = {n.id: rank for rank, (n, _) in enumerate(nodes)}
    edges = sorted(((e, i) for i, e in enumerate(p.edges)),
                   key=lambda ei: (pos[ei[0].src], pos[ei[0].tgt], ei[1]))

    def op_byte(a) -> int:
        return ord("b") if a.op == "bind" else OP_SYMBOLS[a.op]

    attrs = sorted(((a, i) for i, a in enumerate(p.attrs)),
                   key=lambda ai: (pos[ai[0].owner], op_byte(ai[0]), ai[1]))
    return nodes, edges, attrs, pos


class _TokenTable:
    """Dense token assignment in walk order; wildcards get fresh tokens."""

    def __init__(self, wildcard_fresh: bool):
        self._wildcard_fresh = wildcard_fresh
        self._by_key: dict = {}
        self.pairs: list[tuple[str, str]] = []

    def token(self, name: str, slot) -> str:
        if self._wildcard_fresh and name == WILDCARD:
            key = ("wild", slot)
        else:
            key = ("name", name)
        tok = self._by_key.get(key)
        if tok is None:
            if len(self.pairs) >= MAX_TOKENS:
                raise TokenOverflowError(
                    f"more than {MAX_TOKENS} distinct types in one encoding unit")
            tok = TOKENS[len(self.pairs)]
            self._by_key[key] = tok
            self.pairs.append((name, tok))
        return tok


def _encode_unit(lhs: GraphPattern, rhs: GraphPattern, nacs: tuple[GraphPattern, ...],
                 flag_bytes: bytes, source: str, wildcard_fresh: bool) -> EncodedString:
    table = _TokenTable(wildcard_fresh)
    out = bytearray(b"R")
    positions: list[int] = []

    def put_token(tok: str) -> None:
        positions.append(len(out))
        out.append(ord(tok))

    blocks = [(b"L", lhs), (b"G", rhs)] + [(b"N", nac) for nac in nacs]
    for bi, (marker, pat) in enumerate(blocks):
        out += marker
        nodes, edges, attrs, _ = _ordered_elements(pat)
        node_tok: dict[str, str] = {}
        for node, decl in nodes:
            tok = table.token(node.type, slot=(bi, "n", decl))
            node_tok[node.id] = tok
            out += b"n"
            put_token(tok)
        for edge, decl in edges:
            tok = table.token(edge.type, slot=(bi, "e", decl))
            out += b"e"
            put_token(tok)
            put_token(node_tok[edge.src])
            put_token(node_tok[edge.tgt])
        for attr, _decl in attrs:
            if attr.op == "bind":
                out += b"b"
                put_token(node_tok[attr.owner])
            else:
                out += b"a"
                put_token(node_tok[attr.owner])
                out.append(OP_SYMBOLS[attr.op])
    out += b"C"
    out += flag_bytes
    return EncodedString(bytes(out), tuple(table.pairs), source, tuple(positions))


def assign_tokens(lhs: GraphPattern, rhs: GraphPattern, nacs: tuple[GraphPattern, ...] = (),
                  *, wildcard_fresh: bool = False) -> tuple[tuple[str, str], ...]:
    """Token table for a rule-shaped unit without keeping the bytes."""
    return _encode_unit(lhs, rhs, nacs, b"", "tokens", wildcard_fresh).token_map


def _rule_flag_bytes(flags: ControlFlags) -> bytes:
    out = bytearray()
    if flags.seq_pos is not None:
        out.append(FLAG_SEQ)
    if flags.in_loop:
        out.append(FLAG_LOOP)
    if flags.self_loop:
        out.append(FLAG_SELF)
    if flags.in_branch:
        out.append(FLAG_BRANCH)
    return bytes(out)


def encode_rule(rule: Rule, flags: ControlFlags = ControlFlags()) -> EncodedString:
    """Encode one rule, including its control-flag suffix."""
    return _encode_unit(rule.lhs, rule.rhs, rule.nacs, _rule_flag_bytes(flags),
                        f"rule:{rule.name}", wildcard_fresh=False)


def encode_participant(part: "Participant") -> EncodedString:
    """Encode a participant template over its role variables.

    Only control flags the participant requires to be true are emitted;
    unconstrained flags must not penalize matches against rules that happen
    to set them (the matcher leaves trailing rule bytes free).
    """
    req = part.control
    out = bytearray()
    if req.in_loop:
        out.append(FLAG_LOOP)
    if req.self_loop:
        out.append(FLAG_SELF)
    if req.in_branch:
        out.append(FLAG_BRANCH)
    t = part.template
    return _encode_unit(t.lhs, t.rhs, t.nacs, bytes(out),
                        f"participant:{part.role}", wildcard_fresh=True)


def encode_transformation(t: Transformation) -> dict[str, EncodedString]:
    """Encode every rule of a transformation under its normalized control flags."""
    flags = normalize_control(t)
    return {r.name: encode_rule(r, flags[r.name]) for r in t.rules}


def token_remappings(s: EncodedString, cap: int = DEFAULT_PERM_CAP) -> tuple[list[bytes], bool]:
    """All byte strings reachable by bijectively permuting s's used tokens.

    The identity permutation comes first and enumeration is lexicographic
    over permutations; at most ``cap`` strings are produced and the second
    return value reports whether the enumeration was truncated.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    used = list(s.used_tokens)
    out: list[bytes] = []
    truncated = False
    for i, perm in enumerate(itertools.permutations(used)):
        if i >= cap:
            truncated = True
            break
        if perm == tuple(used):
            out.append(s.data)
            continue
        mapping = dict(zip(used, perm))
        buf = bytearray(s.data)
        for pos in s.token_positions:
            buf[pos] = ord(mapping[chr(buf[pos])])
        out.append(bytes(buf))
    return out, truncated


def nth_token_permutation(s: EncodedString, index: int) -> dict[str, str]:
    """The token mapping of the index-th remapping (same enumeration order)."""
    used = list(s.used_tokens)
    perm = next(itertools.islice(itertools.permutations(used), index, None))
    return dict(zip(used, perm))


def element_kinds(data: bytes) -> list[str]:
    """Parse an encoding back into its element-kind sequence.

    Returns one entry per marker/flag byte, e.g. ``["R", "L", "n", "G",
    "n", "b", "C", "s"]``.  Raises MtpdError on malformed input; used to
    check that encodings are structurally self-describing.
    """
    kinds: list[str] = []
    i = 0
    n = len(data)

    def take(count: int) -> None:
        nonlocal i
        if i + count > n:
            raise MtpdError("truncated encoding")
        i += count

    if not data[:1] == b"R":
        raise MtpdError("encoding must start with R")
    kinds.append("R")
    i = 1
    if i >= n or data[i : i + 1] != b"L":
        raise MtpdError("missing L block")
    in_flags = False
    while i < n:
        c = data[i : i + 1]
        if in_flags:
            if c not in (b"s", b"l", b"r", b"x"):
                raise MtpdError(f"invalid flag byte {c!r}")
            kinds.append(c.decode())
            i += 1
            continue
        if c in (b"L", b"G", b"N"):
            kinds.append(c.decode())
            i += 1
        elif c == b"C":
            kinds.append("C")
            i += 1
            in_flags = True
        elif c == b"n":
            kinds.append("n")
            take(2)
        elif c == b"e":
            kinds.append("e")
            take(4)
        elif c == b"a":
            kinds.append("a")
            take(3)
        elif c == b"b":
            kinds.append("b")
            take(2)
        else:
            raise MtpdError(f"unexpected byte {c!r} at offset {i}")
    if not in_flags:
        raise MtpdError("missing C block")
    return kinds


def structural_skeleton(data: bytes) -> bytes:
    """Bytes with every token candidate collapsed to one symbol.

    Uppercase bytes (tokens and block markers alike) become ``*``.  The
    edit distance between two skeletons is a lower bound on the distance
    between the originals under any token permutation, since the collapse
    is a pure function of the byte value.
    """
    return bytes(ord("*") if 65 <= b <= 90 else b for b in data)

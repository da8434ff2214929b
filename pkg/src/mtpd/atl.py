"""Frontend for a small ATL-like textual subset.

Supports ``module M;`` followed by matched rules of the form

    rule R {
        from v : MM!Type ( <guard> )
        to   w : MM!Type ( prop <- expr, ... ),
             x : MM!Type ( ... )
    }

Guards are conjunctions of ``<navigation> (=|<>|<|>) <literal>`` joined by
``and``.  A rule lowers to one LHS node (plus one attribute condition per
guard conjunct) and one RHS node per target element (plus one bind per
property assignment); binding expressions stay opaque text.  Rules appear in
a sequence control scheme in declaration order; ``lazy`` rules are kept but
excluded from the schedule.  Anything outside the subset raises a clean
unsupported-construct error naming the construct.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, UnsupportedConstructError
from .model import (AttrCond, ControlScheme, Edge, GraphPattern, Node, Rule, Step,
                    Transformation)

_UNSUPPORTED_KEYWORDS = {
    "helper", "using", "do", "query", "library", "refining", "unique",
    "entrypoint", "endpoint", "called", "nodefault", "abstract",
}

_OP_MAP = {"=": "eq", "<>": "neq", "<": "lt", ">": "gt"}


@dataclass(frozen=True)
class SourceUnit:
    """One source file: path for diagnostics plus its UTF-8 text."""

    path: str
    text: str

    @classmethod
    def from_file(cls, path: str | Path) -> "SourceUnit":
        return cls(str(path), Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class _Tok:
    kind: str  # ident, number, string, sym, eof
    text: str
    line: int
    col: int


def _tokenize(src: SourceUnit) -> list[_Tok]:
    text = src.text
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("ident", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            toks.append(_Tok("number", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c == "'":
            j = i + 1
            while j < n and text[j] != "'":
                if text[j] == "\n":
                    raise FormatError("unterminated string literal", line=start_line,
                                      column=start_col, path=src.path)
                j += 1
            if j >= n:
                raise FormatError("unterminated string literal", line=start_line,
                                  column=start_col, path=src.path)
            toks.append(_Tok("string", text[i:j + 1], start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        for sym in ("<-", "<>", "->"):
            if text.startswith(sym, i):
                toks.append(_Tok("sym", sym, start_line, start_col))
                i += len(sym)
                col += len(sym)
                break
        else:
            if c in "{}():;,.<>=!":
                toks.append(_Tok("sym", c, start_line, start_col))
                i += 1
                col += 1
            else:
                raise FormatError(f"unexpected character {c!r}", line=start_line,
                                  column=start_col, path=src.path)
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, src: SourceUnit):
        self.src = src
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str, tok: _Tok | None = None) -> None:
        tok = tok or self.peek()
        raise FormatError(message, line=tok.line, column=tok.col, path=self.src.path)

    def expect_sym(self, sym: str) -> _Tok:
        tok = self.next()
        if tok.kind != "sym" or tok.text != sym:
            self.fail(f"expected '{sym}', found '{tok.text or 'end of input'}'", tok)
        return tok

    def expect_ident(self, what: str = "identifier") -> _Tok:
        tok = self.next()
        if tok.kind != "ident":
            self.fail(f"expected {what}, found '{tok.text or 'end of input'}'", tok)
        return tok

    def expect_keyword(self, kw: str) -> _Tok:
        tok = self.next()
        if tok.kind != "ident" or tok.text != kw:
            self.fail(f"expected '{kw}', found '{tok.text or 'end of input'}'", tok)
        return tok

    # -- grammar ------------------------------------------------------

    def parse_module(self) -> Transformation:
        self.expect_keyword("module")
        name = self.expect_ident("module name").text
        self.expect_sym(";")
        rules: list[Rule] = []
        lazy: set[str] = set()
        seen: set[str] = set()
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind != "ident":
                self.fail(f"expected a rule declaration, found '{tok.text}'")
            if tok.text in _UNSUPPORTED_KEYWORDS:
                raise UnsupportedConstructError(tok.text, line=tok.line, column=tok.col)
            is_lazy = False
            if tok.text == "lazy":
                is_lazy = True
                self.next()
                tok = self.peek()
            if tok.kind != "ident" or tok.text != "rule":
                if tok.text in _UNSUPPORTED_KEYWORDS:
                    raise UnsupportedConstructError(tok.text, line=tok.line, column=tok.col)
                self.fail(f"expected 'rule', found '{tok.text}'")
            rule = self.parse_rule()
            if rule.name in seen:
                self.fail(f"duplicate rule name '{rule.name}'")
            seen.add(rule.name)
            rules.append(rule)
            if is_lazy:
                lazy.add(rule.name)
        steps = tuple(Step(r.name, i, False, False)
                      for i, r in enumerate(r for r in rules if r.name not in lazy))
        return Transformation(name, tuple(rules), ControlScheme("sequence", steps, ()))

    def parse_rule(self) -> Rule:
        self.expect_keyword("rule")
        name = self.expect_ident("rule name").text
        self.expect_sym("{")
        self.expect_keyword("from")
        var, typ = self.parse_element_decl()
        guards: tuple[AttrCond, ...] = ()
        if self._at_sym("("):
            guards = self.parse_guard(var)
        if self._at_sym(","):
            tok = self.peek()
            raise UnsupportedConstructError("multiple source elements",
                                            line=tok.line, column=tok.col)
        self.expect_keyword("to")
        rhs_nodes: list[Node] = []
        rhs_binds: list[AttrCond] = []
        while True:
            tvar, ttyp = self.parse_element_decl()
            if any(n.id == tvar for n in rhs_nodes) or tvar == var:
                self.fail(f"duplicate element name '{tvar}'")
            rhs_nodes.append(Node(tvar, ttyp))
            if self._at_sym("("):
                rhs_binds.extend(self.parse_bindings(tvar))
            if self._at_sym(","):
                self.next()
                continue
            break
        self.expect_sym("}")
        lhs = GraphPattern(nodes=(Node(var, typ),), edges=(), attrs=guards)
        rhs = GraphPattern(nodes=tuple(rhs_nodes), edges=(), attrs=tuple(rhs_binds))
        return Rule(name, lhs, rhs, ())

    def parse_element_decl(self) -> tuple[str, str]:
        var = self.expect_ident("element name").text
        self.expect_sym(":")
        type_name = self.expect_ident("type name").text
        if self._at_sym("!"):
            self.next()
            type_name += "!" + self.expect_ident("type name").text
        return var, type_name

    def _at_sym(self, sym: str) -> bool:
        tok = self.peek()
        return tok.kind == "sym" and tok.text == sym

    def parse_guard(self, var: str) -> tuple[AttrCond, ...]:
        self.expect_sym("(")
        conds = [self.parse_comparison(var)]
        while True:
            tok = self.peek()
            if tok.kind == "ident" and tok.text == "and":
                self.next()
                conds.append(self.parse_comparison(var))
                continue
            break
        self.expect_sym(")")
        return tuple(conds)

    def parse_comparison(self, var: str) -> AttrCond:
        head = self.expect_ident("navigation")
        if head.text != var:
            self.fail(f"guard references undeclared variable '{head.text}'", head)
        segments: list[str] = []
        while self._at_sym("."):
            self.next()
            segments.append(self.expect_ident("attribute name").text)
        if not segments:
            self.fail("guard navigation needs at least one attribute step", head)
        tok = self.next()
        if tok.kind == "sym" and tok.text == "->":
            raise UnsupportedConstructError("collection operation '->'",
                                            line=tok.line, column=tok.col)
        if tok.kind != "sym" or tok.text not in _OP_MAP:
            self.fail(f"expected a comparison operator, found '{tok.text}'", tok)
        op = _OP_MAP[tok.text] if len(segments) == 1 else "other"
        value = self.parse_literal()
        return AttrCond(var, ".".join(segments), op, value)

    def parse_literal(self) -> str:
        tok = self.next()
        if tok.kind in ("number", "string"):
            return tok.text
        if tok.kind == "ident" and tok.text in ("true", "false"):
            return tok.text
        if tok.kind == "ident":
            raise UnsupportedConstructError(f"non-literal comparand '{tok.text}'",
                                            line=tok.line, column=tok.col)
        self.fail(f"expected a literal, found '{tok.text}'", tok)
        raise AssertionError  # unreachable

    def parse_bindings(self, owner: str) -> list[AttrCond]:
        self.expect_sym("(")
        binds: list[AttrCond] = []
        while True:
            prop = self.expect_ident("property name").text
            self.expect_sym("<-")
            value, depth = [], 0
            while True:
                tok = self.peek()
                if tok.kind == "eof":
                    self.fail("unterminated binding")
                if tok.kind == "sym" and tok.text == "(":
                    depth += 1
                elif tok.kind == "sym" and tok.text == ")":
                    if depth == 0:
                        break
                    depth -= 1
                elif tok.kind == "sym" and tok.text == "," and depth == 0:
                    break
                value.append(self.next().text)
            binds.append(AttrCond(owner, prop, "bind", _join_expr(value)))
            if self._at_sym(","):
                self.next()
                continue
            self.expect_sym(")")
            break
        return binds


def _join_expr(parts: list[str]) -> str:
    """Re-join captured binding tokens into readable opaque text."""
    out = ""
    for p in parts:
        if p in (".", ",", ")", "(", "!"):
            out = out.rstrip() + p
        elif out.endswith((".", "!", "(")) or not out:
            out += p
        else:
            out += " " + p
    return out


def parse_atl_subset(src: SourceUnit) -> Transformation:
    """Lower one source unit to the interchange transformation model.

    Deterministic: identical source text yields an identical Transformation,
    and every accepted source validates cleanly.
    """
    if not src.text:
        raise FormatError("empty source file", path=src.path)
    return _Parser(src).parse_module()

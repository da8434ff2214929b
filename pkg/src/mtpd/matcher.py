"""Bit-parallel approximate string matching.

The bit-vector functions implement the Myers dynamic-programming
recurrence: one column of the edit-distance table is represented by
positive/negative delta bit vectors and advanced with a constant number of
word operations per text symbol.  Patterns longer than one machine word are
handled by the blocked variant, where vertically stacked 64-bit blocks
communicate through the horizontal delta crossing their boundary row.

Two scoring modes are provided: semi-global search (free leading text, the
pattern may match anywhere inside the text) and global alignment (plain
Levenshtein distance, obtained by seeding the top boundary with +1 deltas).
A plain dynamic-programming implementation of both modes serves as the
reference oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .encoder import EncodedString, token_remappings

WORD = 64
_WMASK = (1 << WORD) - 1
_WHIGH = 1 << (WORD - 1)

MODES = ("global", "semi_global")


@dataclass(frozen=True)
class SearchHit:
    """A match ending at 1-based text position end_pos with edit distance dist."""

    end_pos: int
    dist: int


@dataclass(frozen=True)
class AlignmentResult:
    distance: int
    mode: str
    remapping_index: int
    truncated: bool


@dataclass
class MatchState:
    """Preprocessed pattern state for the bit-vector scan.

    peq[b][c] has bit i set iff pattern position b*w + i holds byte c.
    The vertical delta vectors satisfy pv & mv == 0 throughout a scan.
    """

    m: int
    word: int
    blocks: int
    peq: list[list[int]]

    @classmethod
    def prepare(cls, pattern: bytes) -> "MatchState":
        m = len(pattern)
        blocks = max(1, (m + WORD - 1) // WORD)
        peq = [[0] * 256 for _ in range(blocks)]
        for i, c in enumerate(pattern):
            peq[i >> 6][c] |= 1 << (i & 63)
        return cls(m=m, word=WORD, blocks=blocks, peq=peq)


# ---------------------------------------------------------------------------
# Plain dynamic-programming oracle


def dp_edit_distance(a: bytes | str, b: bytes | str) -> int:
    """Levenshtein distance by the classic two-row table."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    if lb > la:
        a, b, la, lb = b, a, lb, la
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        ca = a[i - 1]
        cur = [i] + [0] * lb
        prev_diag = prev[0]
        for j in range(1, lb + 1):
            up = prev[j]
            cost = prev_diag if ca == b[j - 1] else prev_diag + 1
            left = cur[j - 1]
            best = up + 1 if up < left else left + 1
            cur[j] = cost if cost < best else best
            prev_diag = up
        prev = cur
    return prev[lb]


def dp_search(pattern: bytes | str, text: bytes | str) -> list[int]:
    """Semi-global DP scan: minimal distance of the pattern against any
    suffix of text[:j], for every j in 1..len(text)."""
    m = len(pattern)
    prev = list(range(m + 1))
    out: list[int] = []
    for c in text:
        cur = [0] * (m + 1)
        prev_diag = prev[0]
        for i in range(1, m + 1):
            up = cur[i - 1]
            cost = prev_diag if pattern[i - 1] == c else prev_diag + 1
            left = prev[i]
            best = up + 1 if up < left else left + 1
            cur[i] = cost if cost < best else best
            prev_diag = left
        out.append(cur[m])
        prev = cur
    return out


# ---------------------------------------------------------------------------
# Bit-vector scans


def _scores_1block(peq0: list[int], m: int, text: bytes, seed: int) -> list[int]:
    # seed is the horizontal delta entering each column at row 0:
    # 0 for semi-global search, +1 for global alignment.
    mask = (1 << m) - 1
    high = 1 << (m - 1)
    pv = mask
    mv = 0
    score = m
    out: list[int] = []
    append = out.append
    for c in text:
        eq = peq0[c]
        xv = eq | mv
        xh = ((((eq & pv) + pv) & mask) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & high:
            score += 1
        elif mh & high:
            score -= 1
        ph = ((ph << 1) | seed) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
        append(score)
    return out


def _scores_blocked(state: MatchState, text: bytes, seed: int) -> list[int]:
    nb = state.blocks
    peq = state.peq
    last_w = state.m - WORD * (nb - 1)
    masks = [_WMASK] * (nb - 1) + [(1 << last_w) - 1]
    highs = [_WHIGH] * (nb - 1) + [1 << (last_w - 1)]
    pv = list(masks)
    mv = [0] * nb
    score = state.m
    out: list[int] = []
    append = out.append
    rng = range(nb)
    for c in text:
        hin = seed
        for b in rng:
            mask = masks[b]
            high = highs[b]
            eq = peq[b][c]
            p = pv[b]
            m_ = mv[b]
            xv = eq | m_
            if hin < 0:
                eq |= 1
            xh = ((((eq & p) + p) & mask) ^ p) | eq
            ph = m_ | (~(xh | p) & mask)
            mh = p & xh
            if ph & high:
                hout = 1
            elif mh & high:
                hout = -1
            else:
                hout = 0
            ph = (ph << 1) & mask
            mh = (mh << 1) & mask
            if hin > 0:
                ph |= 1
            elif hin < 0:
                mh |= 1
            pv[b] = mh | (~(xv | ph) & mask)
            mv[b] = ph & xv
            hin = hout
        score += hin
        append(score)
    return out


def _column_scores(pattern: bytes, text: bytes, *, global_mode: bool) -> list[int]:
    seed = 1 if global_mode else 0
    state = MatchState.prepare(pattern)
    if state.blocks == 1:
        return _scores_1block(state.peq[0], state.m, text, seed)
    return _scores_blocked(state, text, seed)


def bv_edit_distance(a: bytes, b: bytes) -> int:
    """Levenshtein distance computed with the bit-vector recurrence.

    Equals dp_edit_distance on every input; the global-alignment boundary is
    obtained by shifting a +1 horizontal delta into each column at row 0.
    """
    if len(a) == 0:
        return len(b)
    if len(b) == 0:
        return len(a)
    scores = _column_scores(a, b, global_mode=True)
    return scores[-1]


def bv_search(pattern: bytes, text: bytes, k: int) -> list[SearchHit]:
    """All 1-based end positions where the pattern matches a suffix of
    text[:j] within edit distance k, each with that minimal distance."""
    if len(pattern) == 0:
        raise ValueError("pattern must be non-empty")
    if k < 0 or k > len(pattern):
        raise ValueError("k must satisfy 0 <= k <= len(pattern)")
    scores = _column_scores(pattern, text, global_mode=False)
    return [SearchHit(j + 1, s) for j, s in enumerate(scores) if s <= k]


def semi_global_distance(pattern: bytes, text: bytes) -> int:
    """Minimal semi-global distance of pattern anywhere inside text.

    Never exceeds len(pattern); equals min over end positions of the
    search scores (or len(pattern) for empty text).
    """
    if len(pattern) == 0 or len(text) == 0:
        return len(pattern)
    return min(_column_scores(pattern, text, global_mode=False))


# ---------------------------------------------------------------------------
# Alignment over token remappings


def best_alignment(part: EncodedString, rule: EncodedString, mode: str = "semi_global",
                   perm_cap: int = 720) -> AlignmentResult:
    """Best distance between a participant and a rule encoding over all
    token remappings of the participant.

    Ties break toward the lowest permutation index, so identical encodings
    always report the identity remapping.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    variants, truncated = token_remappings(part, perm_cap)
    text = rule.data
    semi = mode == "semi_global"
    best = None
    best_idx = 0
    for idx, variant in enumerate(variants):
        d = semi_global_distance(variant, text) if semi else bv_edit_distance(variant, text)
        if best is None or d < best:
            best, best_idx = d, idx
            if best == 0:
                break
    assert best is not None
    return AlignmentResult(best, mode, best_idx, truncated)

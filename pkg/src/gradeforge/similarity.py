"""Winnowing fingerprints and pairwise similarity over submissions.

Documents are normalized (lowercase, whitespace removed, comments stripped
per language), hashed as k-grams with a polynomial rolling hash (base 257,
modulus 2^61 - 1), and winnowed: each window of w consecutive k-gram hashes
contributes its minimum, ties broken by the rightmost position.  Two
fingerprint sets score |A intersect B| / min(|A|, |B|) over hashes alone, so
a small file copied wholesale into a larger one still scores high.
"""

from __future__ import annotations

import json
import posixpath
from collections import deque
from dataclasses import dataclass

HASH_BASE = 257
HASH_MODULUS = (1 << 61) - 1

DEFAULT_K = 12
DEFAULT_W = 8
DEFAULT_THRESHOLD = 0.5

FILE_BOUNDARY = "\x00"


@dataclass(frozen=True)
class CommentSyntax:
    line_markers: tuple[str, ...] = ()
    block_markers: tuple[tuple[str, str], ...] = ()
    string_quotes: str = "'\""


COMMENT_SYNTAX: dict[str, CommentSyntax] = {
    "python3": CommentSyntax(line_markers=("#",)),
    "c": CommentSyntax(line_markers=("//",), block_markers=(("/*", "*/"),)),
    "cpp": CommentSyntax(line_markers=("//",), block_markers=(("/*", "*/"),)),
    "java": CommentSyntax(line_markers=("//",), block_markers=(("/*", "*/"),)),
    "php": CommentSyntax(line_markers=("//", "#"), block_markers=(("/*", "*/"),)),
    "octave": CommentSyntax(line_markers=("%", "#"), block_markers=(("%{", "%}"),)),
}


@dataclass(frozen=True)
class FingerprintSet:
    doc_id: str
    k: int
    w: int
    prints: frozenset[tuple[int, int]]  # (hash, k-gram position)

    def hashes(self) -> frozenset[int]:
        return frozenset(h for h, _ in self.prints)


@dataclass(frozen=True)
class SimilarityPair:
    doc_a: str
    doc_b: str
    score: float
    shared_print_count: int


def strip_comments(text: str, syntax: CommentSyntax) -> str:
    """Remove line and block comments, respecting string literals."""
    out: list[str] = []
    i = 0
    n = len(text)
    quote: str | None = None
    while i < n:
        ch = text[i]
        if quote is not None:
            out.append(ch)
            if ch == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
            i += 1
            continue
        matched = False
        for start, end in syntax.block_markers:
            if text.startswith(start, i):
                close = text.find(end, i + len(start))
                i = n if close == -1 else close + len(end)
                matched = True
                break
        if matched:
            continue
        for marker in syntax.line_markers:
            if text.startswith(marker, i):
                newline = text.find("\n", i)
                i = n if newline == -1 else newline
                matched = True
                break
        if matched:
            continue
        if ch in syntax.string_quotes:
            quote = ch
        out.append(ch)
        i += 1
    return "".join(out)


def normalize_source(text: str, language_id: str | None = None) -> str:
    """Lowercase, drop all whitespace, strip comments for known languages."""
    syntax = COMMENT_SYNTAX.get(language_id or "")
    if syntax is not None:
        text = strip_comments(text, syntax)
    return "".join(text.lower().split())


def kgram_hashes(data: bytes, k: int) -> list[int]:
    """Polynomial rolling hash of every k-gram of ``data``."""
    n = len(data)
    if n < k:
        return []
    lead_power = pow(HASH_BASE, k - 1, HASH_MODULUS)
    h = 0
    for byte in data[:k]:
        h = (h * HASH_BASE + byte) % HASH_MODULUS
    hashes = [h]
    for i in range(k, n):
        h = ((h - data[i - k] * lead_power) * HASH_BASE + data[i]) % HASH_MODULUS
        hashes.append(h)
    return hashes


def _select_prints(hashes: list[int], w: int) -> set[tuple[int, int]]:
    n = len(hashes)
    if n == 0:
        return set()
    if n <= w:
        # Fewer k-grams than a full window: treat the whole run as one window.
        best = 0
        for i in range(1, n):
            if hashes[i] <= hashes[best]:
                best = i
        return {(hashes[best], best)}
    selected: set[tuple[int, int]] = set()
    window: deque[int] = deque()  # candidate indices, hashes strictly increasing
    for j in range(n):
        while window and hashes[window[-1]] >= hashes[j]:
            window.pop()  # >= keeps the rightmost of equal minima
        window.append(j)
        start = j - w + 1
        if start >= 0:
            while window[0] < start:
                window.popleft()
            selected.add((hashes[window[0]], window[0]))
    return selected


def fingerprints(text: str, k: int = DEFAULT_K, w: int = DEFAULT_W, doc_id: str = "") -> FingerprintSet:
    """Winnowed fingerprints of ``text`` (already normalized by the caller).

    Text shorter than k yields an empty set; that is a value, not an error.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if w < 1:
        raise ValueError("w must be >= 1")
    hashes = kgram_hashes(text.encode("utf-8"), k)
    return FingerprintSet(doc_id=doc_id, k=k, w=w, prints=frozenset(_select_prints(hashes, w)))


def similarity_score(a: FingerprintSet, b: FingerprintSet) -> tuple[float, int]:
    """Containment-style score over hash sets: |A & B| / min(|A|, |B|)."""
    hashes_a = a.hashes()
    hashes_b = b.hashes()
    shared = len(hashes_a & hashes_b)
    smaller = min(len(hashes_a), len(hashes_b))
    return (shared / smaller, shared) if smaller else (0.0, 0)


def pairwise_report(
    docs: dict[str, FingerprintSet], threshold: float = DEFAULT_THRESHOLD
) -> list[SimilarityPair]:
    """All document pairs scoring at or above ``threshold``, best first."""
    pairs: list[SimilarityPair] = []
    ids = sorted(docs)
    for i, doc_a in enumerate(ids):
        for doc_b in ids[i + 1:]:
            score, shared = similarity_score(docs[doc_a], docs[doc_b])
            if score >= threshold:
                pairs.append(
                    SimilarityPair(doc_a=doc_a, doc_b=doc_b, score=score, shared_print_count=shared)
                )
    pairs.sort(key=lambda p: (-p.score, p.doc_a, p.doc_b))
    return pairs


def snapshot_document(files: dict[str, bytes], ext_to_lang: dict[str, str]) -> str:
    """One normalized document for a snapshot: files in path order, separated
    by a sentinel byte that never appears in normalized source."""
    parts = []
    for path in sorted(files):
        ext = posixpath.splitext(path)[1]
        text = files[path].decode("utf-8", "replace").replace(FILE_BOUNDARY, "")
        parts.append(normalize_source(text, ext_to_lang.get(ext)))
    return FILE_BOUNDARY.join(parts)


def report_rows(pairs: list[SimilarityPair]) -> list[dict]:
    """JSON-safe rows with the score fixed to four decimal places."""
    return [
        {
            "doc_a": p.doc_a,
            "doc_b": p.doc_b,
            "score": f"{p.score:.4f}",
            "shared_print_count": p.shared_print_count,
        }
        for p in pairs
    ]


def report_json(pairs: list[SimilarityPair]) -> str:
    return json.dumps(report_rows(pairs), indent=2) + "\n"

"""Extract structured answers from free-form LLM text.

Covers the three reply shapes the selectors produce: a JSON object with a
score (and optional reasoning), a numbered ranking of feature names, and a
bare feature name. Mentioned names are mapped back onto dataset concepts
with exact, normalized, then fuzzy matching.
"""

from __future__ import annotations

import logging
import json
import re
from dataclasses import dataclass

logger = logging.getLogger(__name__)

FUZZY_THRESHOLD = 0.85

_ITEM_RE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")
_INLINE_SPLIT_RE = re.compile(r"\s+\d+[.)]\s+")
_QUOTE_PAIRS = {'"': '"', "'": "'", "`": "`", "“": "”", "‘": "’"}


class ParseError(ValueError):
    pass


class UnmatchedConceptError(ParseError):
    def __init__(self, text):
        super().__init__(f"no concept matches {text!r}")
        self.text = text


@dataclass
class ParsedScore:
    score: float
    reasoning: str | None = None


@dataclass
class ConceptMatch:
    concept_index: int
    matched_text: str
    match_kind: str  # "exact" | "normalized" | "fuzzy"


def extract_json_block(text: str) -> str:
    """Return the first balanced JSON object in ``text``.

    Strips markdown code fences first, then scans from the first "{" and
    matches braces while respecting string literals and escapes.
    """
    cleaned = re.sub(r"```(?:json)?", "", text)
    start = cleaned.find("{")
    if start < 0:
        raise ParseError("no JSON object found in reply")
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(cleaned)):
        ch = cleaned[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return cleaned[start : i + 1]
    raise ParseError("unbalanced JSON object in reply")


def parse_score(text: str, score_range=(0.0, 1.0)) -> ParsedScore:
    """Parse a score (and optional reasoning) from an LLM reply.

    Values within 1e-9 outside the range are clamped; anything further out
    is rejected.
    """
    block = extract_json_block(text)
    try:
        doc = json.loads(block)
    except json.JSONDecodeError as exc:
        raise ParseError(f"reply is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "score" not in doc:
        raise ParseError('reply has no "score" key')
    score = doc["score"]
    if isinstance(score, str):
        try:
            score = float(score)
        except ValueError:
            raise ParseError(f"non-numeric score: {score!r}") from None
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise ParseError(f"non-numeric score: {score!r}")
    score = float(score)
    lo, hi = float(score_range[0]), float(score_range[1])
    if score < lo - 1e-9 or score > hi + 1e-9:
        raise ParseError(f"score {score} outside range [{lo}, {hi}]")
    score = min(max(score, lo), hi)
    reasoning = doc.get("reasoning")
    if reasoning is not None and not isinstance(reasoning, str):
        reasoning = str(reasoning)
    return ParsedScore(score=score, reasoning=reasoning)


def _normalize(text: str) -> str:
    out = text.strip()
    while len(out) >= 2 and out[0] in _QUOTE_PAIRS and out[-1] == _QUOTE_PAIRS[out[0]]:
        out = out[1:-1].strip()
    out = re.sub(r"\s*\([^()]*\)\s*$", "", out)  # trailing parenthetical
    out = re.sub(r"\s+", " ", out)
    return out.casefold().strip()


def _levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _similarity(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    return 1.0 - _levenshtein(a, b) / max(len(a), len(b))


def match_concept(name_text: str, concepts) -> ConceptMatch:
    """Map a mentioned feature name to a dataset concept.

    Tries exact, then normalized (case/whitespace/quotes/trailing
    parenthetical), then fuzzy matching by normalized Levenshtein
    similarity with threshold 0.85. Ties go to the lowest concept index.
    """
    concepts = list(concepts)
    if not concepts:
        raise ValueError("concepts must be non-empty")
    for i, c in enumerate(concepts):
        if name_text == c:
            return ConceptMatch(i, name_text, "exact")
    norm = _normalize(name_text)
    norms = [_normalize(c) for c in concepts]
    for i, cn in enumerate(norms):
        if norm == cn:
            return ConceptMatch(i, name_text, "normalized")
    best_i, best_sim = -1, 0.0
    for i, cn in enumerate(norms):
        sim = _similarity(norm, cn)
        if sim > best_sim:
            best_i, best_sim = i, sim
    if best_sim >= FUZZY_THRESHOLD:
        return ConceptMatch(best_i, name_text, "fuzzy")
    raise UnmatchedConceptError(name_text)


def _numbered_items(text: str) -> list:
    items = []
    for line in text.splitlines():
        m = _ITEM_RE.match(line)
        if not m:
            continue
        # a reply may pack the whole list onto one line: "1. foo  2. bar  3. baz"
        items.extend(part.strip() for part in _INLINE_SPLIT_RE.split(m.group(1)) if part.strip())
    return items


def parse_ranking(text: str, concepts) -> list:
    """Parse a numbered ranking into concept indices (most important first).

    Duplicates keep their first occurrence; items that match no concept are
    skipped; concepts never mentioned are appended at the end in original
    dataset order. The result is always a permutation of all concepts.
    """
    concepts = list(concepts)
    if len(concepts) < 2:
        raise ValueError("ranking requires at least 2 concepts")
    items = _numbered_items(text)
    if len(items) < 2:
        raise ParseError(f"found only {len(items)} ranked item(s) in reply")
    order = []
    seen = set()
    unmatched = 0
    for item in items:
        try:
            match = match_concept(item, concepts)
        except UnmatchedConceptError:
            unmatched += 1
            continue
        if match.concept_index in seen:
            logger.warning("ranking mentions %r twice; keeping first occurrence", item)
            continue
        seen.add(match.concept_index)
        order.append(match.concept_index)
    if unmatched:
        logger.warning("ranking contained %d unrecognized item(s)", unmatched)
    if len(order) < 2:
        raise ParseError("fewer than 2 ranked items could be matched to concepts")
    missing = [i for i in range(len(concepts)) if i not in seen]
    if missing:
        logger.warning("ranking omitted %d concept(s); appending in dataset order", len(missing))
    return order + missing


def parse_feature_name(text: str, concepts) -> ConceptMatch:
    """Match a bare-feature-name reply (sequential selection) to a concept."""
    line = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    line = re.sub(r"^\s*(?:\d+[.)]|[-*])\s*", "", line).rstrip(".")
    if not line:
        raise ParseError("empty feature-name reply")
    return match_concept(line, concepts)

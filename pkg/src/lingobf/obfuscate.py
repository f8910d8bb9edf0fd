"""Grapheme segmentation and permutation application.

The matcher scans left to right and at each position consumes the longest
string among the ruleset's fixed strings and inventory graphemes that
matches there; a fixed string wins an exact-length tie, since protection
(names, loanwords) is the stronger contract.  A grapheme may be a
substring of another ("h" inside "sh"): greedy longest-match resolves
this the way the data was designed to be read.  Positions where nothing
matches consume one character as passthrough; whitespace, ASCII
punctuation and digits are legitimate passthrough, anything else is a
coverage violation surfaced by annotations.coverage_report before any
dataset is generated.

Matching is case-folded by default and the replacement re-applies the
original unit's casing pattern (initial capital -> capitalize the
replacement's first codepoint; all-caps -> upper-case the replacement).
Pass ``fold_case=False`` for codepoint-exact matching.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

from . import annotations
from .rulesets import MapMismatchError, PermutationMap, Ruleset

_ASCII_PUNCT = frozenset(string.punctuation)


def is_passthrough_char(ch: str) -> bool:
    return ch.isspace() or ch.isdigit() or ch in _ASCII_PUNCT


@dataclass(frozen=True)
class Unit:
    """One consumed chunk of text.

    ``kind`` is "grapheme", "fixed" or "passthrough".  ``text`` is the
    surface form; ``matched`` is the canonical inventory entry it matched
    (equal to ``text`` up to case), None for passthrough.
    """

    kind: str
    text: str
    matched: str | None = None


@lru_cache(maxsize=64)
def _matcher(ruleset: Ruleset, fold_case: bool) -> tuple[tuple[int, ...], dict, dict]:
    """Per-ruleset lookup tables: candidate lengths (desc) and fold->canonical maps."""
    fixed = {}
    graphemes = {}
    for g in ruleset.fixed:
        fixed[g.lower() if fold_case else g] = g
    for g in ruleset.inventory:
        graphemes.setdefault(g.lower() if fold_case else g, g)
    lengths = sorted({len(k) for k in (*fixed, *graphemes)}, reverse=True)
    return tuple(lengths), fixed, graphemes


def segment(text: str, ruleset: Ruleset, *, fold_case: bool = True) -> list[Unit]:
    """Total greedy segmentation: unit texts concatenate back to ``text``."""
    lengths, fixed, graphemes = _matcher(ruleset, fold_case)
    units: list[Unit] = []
    i = 0
    n = len(text)
    while i < n:
        for length in lengths:
            if length > n - i:
                continue
            chunk = text[i : i + length]
            key = chunk.lower() if fold_case else chunk
            if key in fixed:
                units.append(Unit("fixed", chunk, fixed[key]))
                break
            if key in graphemes:
                units.append(Unit("grapheme", chunk, graphemes[key]))
                break
        else:
            units.append(Unit("passthrough", text[i]))
            i += 1
            continue
        i += len(units[-1].text)
    return units


def _recase(replacement: str, original: str) -> str:
    if not replacement or original == original.lower():
        return replacement
    if len(original) > 1 and original.isupper():
        return replacement.upper()
    if original[0].isupper():
        return replacement[0].upper() + replacement[1:]
    return replacement


def apply(
    pmap: PermutationMap, text: str, ruleset: Ruleset, *, fold_case: bool = True
) -> str:
    """Replace every matched grapheme by its image; fixed and passthrough stay."""
    if pmap.ruleset_id != ruleset.ident:
        raise MapMismatchError(
            f"map was generated for ruleset {pmap.ruleset_id}, not {ruleset.ident}"
        )
    out = []
    for unit in segment(text, ruleset, fold_case=fold_case):
        if unit.kind == "grapheme":
            image = pmap.pairs[unit.matched]
            out.append(_recase(image, unit.text) if fold_case else image)
        else:
            out.append(unit.text)
    return "".join(out)


class CoverageError(ValueError):
    """A document or answer contains Problemese the ruleset cannot segment."""

    def __init__(self, gaps: Mapping[str, list["annotations.CoverageGap"]]):
        self.gaps = dict(gaps)
        detail = "; ".join(
            f"{name}: {', '.join(str(g) for g in gap_list)}" for name, gap_list in self.gaps.items()
        )
        super().__init__(f"uncovered Problemese text: {detail}")


def obfuscate_variant(
    documents: Mapping[str, annotations.AnnotatedDocument],
    answers: Mapping[str, str],
    pmap: PermutationMap,
    ruleset: Ruleset,
    *,
    fold_case: bool = True,
) -> tuple[dict[str, str], dict[str, str]]:
    """Render all documents and answer strings with the same map.

    Answers are annotated strings themselves (a free-response key is
    usually one ``@@@...@@@`` span; numeric or yes/no keys have none and
    pass through unchanged).  Refuses to proceed on any coverage gap, so
    a variant is either fully obfuscated or not produced.
    """
    parsed_answers = {key: annotations.parse(raw) for key, raw in answers.items()}
    gaps: dict[str, list[annotations.CoverageGap]] = {}
    for name, doc in documents.items():
        found = annotations.coverage_report(doc, ruleset, fold_case=fold_case)
        if found:
            gaps[name] = found
    for key, doc in parsed_answers.items():
        found = annotations.coverage_report(doc, ruleset, fold_case=fold_case)
        if found:
            gaps[f"answer:{key}"] = found
    if gaps:
        raise CoverageError(gaps)

    rendered_docs = {
        name: annotations.render(doc, pmap, ruleset, fold_case=fold_case)
        for name, doc in documents.items()
    }
    rendered_answers = {
        key: annotations.render(doc, pmap, ruleset, fold_case=fold_case)
        for key, doc in parsed_answers.items()
    }
    return rendered_docs, rendered_answers

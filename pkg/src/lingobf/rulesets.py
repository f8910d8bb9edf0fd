"""Permutation rulesets: the per-problem grammar of valid grapheme bijections.

A ruleset partitions a problem's grapheme inventory into four collection
kinds, each constraining how its members may be permuted:

* ``sets``        -- any bijection of the members onto themselves;
* ``tables``      -- equal-length columns of graphemes; columns permute
                     wholesale, row indices are preserved;
* ``free_tables`` -- columns whose rows are *cells* (sets of graphemes,
                     same cardinality across a row); columns permute
                     wholesale and each source cell is then mapped by an
                     arbitrary bijection onto the same-row cell of its
                     image column;
* ``fixed``       -- graphemes and whole protected strings (names,
                     loanwords) every valid permutation leaves unchanged.

Counting and sampling deliberately differ.  :func:`count_permutations`
counts *all* structure-preserving bijections, identity included, which is
the arithmetic behind the documented worked examples (a 3-column table
admits 3! = 6, a pair of 3-sets 36, the 2-column free-table with cell
size 3 admits 2!*(3!)^2 = 72).  :func:`sample_permutation` generates only
full-cycle arrangements, which guarantees no fixed points outside the
fixed set; its support is the smaller :func:`count_cycle_permutations`.
"""

from __future__ import annotations

import hashlib
import json
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from .rng import SplitMix64, derive_seed, stream

SCHEMA_VERSION = 1

# Characters reserved by the annotation grammar; graphemes must not use them.
MARKER_CHARS = frozenset("$&@")


class RulesetError(ValueError):
    """Raised when an operation is asked to use an invalid ruleset."""

    def __init__(self, issues: Sequence["ValidationIssue"]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues) or "invalid ruleset")


class MapMismatchError(ValueError):
    """Raised when a PermutationMap is applied against the wrong ruleset."""


def _norm(text: str) -> str:
    """Canonical composed form; all comparisons are codepoint-exact after this."""
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class Table:
    """Equal-length grapheme columns; permutations rearrange whole columns."""

    columns: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class FreeTable:
    """Columns of cells; a cell is an ordered group of graphemes treated as a set."""

    columns: tuple[tuple[tuple[str, ...], ...], ...]


@dataclass(frozen=True)
class Ruleset:
    fixed: tuple[str, ...] = ()
    sets: tuple[tuple[str, ...], ...] = ()
    tables: tuple[Table, ...] = ()
    free_tables: tuple[FreeTable, ...] = ()
    name: str | None = field(default=None, compare=False)

    @property
    def inventory(self) -> tuple[str, ...]:
        """All permutable graphemes, in declaration order."""
        out: list[str] = []
        for s in self.sets:
            out.extend(s)
        for t in self.tables:
            for col in t.columns:
                out.extend(col)
        for ft in self.free_tables:
            for col in ft.columns:
                for cell in col:
                    out.extend(cell)
        return tuple(out)

    @property
    def ident(self) -> str:
        """Content digest identifying this ruleset in PermutationMaps."""
        payload = json.dumps(ruleset_to_dict(self), ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class PermutationMap:
    """A structure-preserving grapheme bijection, identity on the fixed set.

    ``pairs`` covers exactly the ruleset's non-fixed inventory; fixed
    strings are never listed (they map to themselves by construction).
    ``seed`` records the generating draw; None for identity and inverses.
    """

    pairs: dict[str, str]
    ruleset_id: str
    seed: int | None = field(default=None, compare=False)

    def __call__(self, grapheme: str) -> str:
        return self.pairs.get(grapheme, grapheme)

    @property
    def is_identity(self) -> bool:
        return all(src == img for src, img in self.pairs.items())

    def key(self) -> tuple[tuple[str, str], ...]:
        """Canonical content key, independent of generation seed."""
        return tuple(sorted(self.pairs.items()))

    @classmethod
    def identity(cls, ruleset: Ruleset) -> "PermutationMap":
        return cls(pairs={g: g for g in ruleset.inventory}, ruleset_id=ruleset.ident)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    collection: str  # "fixed" | "set" | "table" | "free_table"
    index: int | None
    grapheme: str | None
    message: str

    def __str__(self) -> str:
        where = self.collection if self.index is None else f"{self.collection}[{self.index}]"
        return f"{where}: {self.message}"


# ---------------------------------------------------------------------------
# Validation


def _check_grapheme(text: str, collection: str, index: int | None) -> list[ValidationIssue]:
    issues = []
    if not text:
        issues.append(ValidationIssue("empty_grapheme", collection, index, text, "empty grapheme"))
    elif any(c in MARKER_CHARS for c in text):
        issues.append(
            ValidationIssue(
                "marker_char",
                collection,
                index,
                text,
                f"grapheme {text!r} contains an annotation marker character",
            )
        )
    return issues


def validate_ruleset(ruleset: Ruleset) -> list[ValidationIssue]:
    """Every violated invariant, with collection index and offending grapheme.

    An empty report means the ruleset is valid.  Violations are data, not
    exceptions: loaders collect them per problem.
    """
    issues: list[ValidationIssue] = []
    seen: dict[str, str] = {}

    def claim(text: str, collection: str, index: int | None) -> None:
        issues.extend(_check_grapheme(text, collection, index))
        if text in seen:
            issues.append(
                ValidationIssue(
                    "duplicate",
                    collection,
                    index,
                    text,
                    f"duplicate grapheme {text} (also in {seen[text]})",
                )
            )
        else:
            where = collection if index is None else f"{collection}[{index}]"
            seen[text] = where

    for g in ruleset.fixed:
        claim(g, "fixed", None)

    for i, s in enumerate(ruleset.sets):
        if len(s) < 2:
            issues.append(
                ValidationIssue(
                    "set_too_small", "set", i, None, f"set of size {len(s)} cannot be deranged"
                )
            )
        for g in s:
            claim(g, "set", i)

    for i, t in enumerate(ruleset.tables):
        if len(t.columns) < 2:
            issues.append(
                ValidationIssue(
                    "table_too_narrow",
                    "table",
                    i,
                    None,
                    f"table with {len(t.columns)} column(s) cannot be deranged",
                )
            )
        lengths = {len(col) for col in t.columns}
        if len(lengths) > 1:
            issues.append(
                ValidationIssue(
                    "ragged_table", "table", i, None, f"column lengths differ: {sorted(lengths)}"
                )
            )
        if 0 in lengths:
            issues.append(ValidationIssue("empty_column", "table", i, None, "empty column"))
        for col in t.columns:
            for g in col:
                claim(g, "table", i)

    for i, ft in enumerate(ruleset.free_tables):
        if len(ft.columns) < 2:
            issues.append(
                ValidationIssue(
                    "table_too_narrow",
                    "free_table",
                    i,
                    None,
                    f"free-table with {len(ft.columns)} column(s) cannot be deranged",
                )
            )
        row_counts = {len(col) for col in ft.columns}
        if len(row_counts) > 1:
            issues.append(
                ValidationIssue(
                    "ragged_table",
                    "free_table",
                    i,
                    None,
                    f"row counts differ across columns: {sorted(row_counts)}",
                )
            )
        elif ft.columns:
            for row in range(len(ft.columns[0])):
                sizes = {len(col[row]) for col in ft.columns}
                if len(sizes) > 1:
                    issues.append(
                        ValidationIssue(
                            "ragged_cells",
                            "free_table",
                            i,
                            None,
                            f"row {row} cell sizes differ: {sorted(sizes)}",
                        )
                    )
                if 0 in sizes:
                    issues.append(
                        ValidationIssue("empty_cell", "free_table", i, None, f"row {row} has an empty cell")
                    )
        for col in ft.columns:
            for cell in col:
                for g in cell:
                    claim(g, "free_table", i)

    return issues


def _require_valid(ruleset: Ruleset) -> None:
    issues = validate_ruleset(ruleset)
    if issues:
        raise RulesetError(issues)


# ---------------------------------------------------------------------------
# Counting


def count_permutations(ruleset: Ruleset) -> int:
    """Number of structure-preserving bijections, identity included.

    sets contribute |S|!, tables (#columns)!, free-tables
    (#columns)! * prod over source cells |cell|!.
    """
    _require_valid(ruleset)
    total = 1
    for s in ruleset.sets:
        total *= math.factorial(len(s))
    for t in ruleset.tables:
        total *= math.factorial(len(t.columns))
    for ft in ruleset.free_tables:
        total *= math.factorial(len(ft.columns))
        for col in ft.columns:
            for cell in col:
                total *= math.factorial(len(cell))
    return total


def count_cycle_permutations(ruleset: Ruleset) -> int:
    """Size of the sampler's support: full-cycle arrangements only.

    Sets and column groups contribute (n-1)! instead of n!; within-cell
    bijections of free-tables are unconstrained so still contribute |cell|!.
    """
    _require_valid(ruleset)
    total = 1
    for s in ruleset.sets:
        total *= math.factorial(len(s) - 1)
    for t in ruleset.tables:
        total *= math.factorial(len(t.columns) - 1)
    for ft in ruleset.free_tables:
        total *= math.factorial(len(ft.columns) - 1)
        for col in ft.columns:
            for cell in col:
                total *= math.factorial(len(cell))
    return total


# ---------------------------------------------------------------------------
# Sampling


def sample_permutation(ruleset: Ruleset, seed: int) -> PermutationMap:
    """Deterministic structure-preserving derangement of the inventory.

    Each collection draws from its own named substream of ``seed``
    ("set"/"table"/"free_table" plus collection index), so adding a
    collection never perturbs the draws of the others.  Sets and column
    groups are arranged in one uniformly chosen full cycle; free-table
    cells then receive independent uniform bijections onto the same-row
    cell of the image column.  Full cycles guarantee no fixed points
    outside the fixed set.
    """
    _require_valid(ruleset)
    pairs: dict[str, str] = {}

    for idx, s in enumerate(ruleset.sets):
        rng = stream(seed, "set", idx)
        pairs.update(rng.cycle(s))

    for idx, t in enumerate(ruleset.tables):
        rng = stream(seed, "table", idx)
        for src_col, img_col in _column_cycle(rng, t.columns):
            for row, g in enumerate(src_col):
                pairs[g] = img_col[row]

    for idx, ft in enumerate(ruleset.free_tables):
        rng = stream(seed, "free_table", idx)
        for src_col, img_col in _column_cycle(rng, ft.columns):
            for row, cell in enumerate(src_col):
                images = list(img_col[row])
                rng.shuffle(images)
                for g, img in zip(cell, images):
                    pairs[g] = img

    return PermutationMap(pairs=pairs, ruleset_id=ruleset.ident, seed=seed)


def _column_cycle(rng: SplitMix64, columns: Sequence) -> Iterator[tuple]:
    """(source column, image column) pairs under a uniform full cycle of indices."""
    indices = list(range(len(columns)))
    mapping = rng.cycle(indices)
    for src in indices:
        yield columns[src], columns[mapping[src]]


def sample_distinct(ruleset: Ruleset, n: int, seed: int) -> list[PermutationMap]:
    """Up to ``n`` pairwise-distinct sampled maps, deterministic in inputs.

    Draws sample_permutation under derived sub-seeds and drops duplicates
    by content.  Returns min(n, support size) maps; a short list signals
    that the ruleset admits fewer distinct permutations than requested.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    _require_valid(ruleset)
    target = min(n, count_cycle_permutations(ruleset))
    out: list[PermutationMap] = []
    seen: set[tuple[tuple[str, str], ...]] = set()
    attempt = 0
    while len(out) < target:
        pm = sample_permutation(ruleset, derive_seed(seed, "variant", attempt))
        attempt += 1
        if pm.key() in seen:
            continue
        seen.add(pm.key())
        out.append(pm)
    return out


def invert(pmap: PermutationMap) -> PermutationMap:
    """Inverse bijection; invert(m) composed with m is the identity."""
    if set(pmap.pairs.values()) != set(pmap.pairs.keys()):
        raise ValueError("map is not a bijection: image set differs from domain set")
    return PermutationMap(
        pairs={img: src for src, img in pmap.pairs.items()},
        ruleset_id=pmap.ruleset_id,
    )


def map_issues(ruleset: Ruleset, pmap: PermutationMap, *, sampled: bool = True) -> list[str]:
    """Violations of the PermutationMap invariants against ``ruleset``.

    Checks bijectivity over the inventory, structure preservation for
    every collection, identity on the fixed set, and (for sampled maps)
    the absence of fixed points outside the fixed set.
    """
    problems: list[str] = []
    inventory = set(ruleset.inventory)
    domain = set(pmap.pairs.keys())
    if domain != inventory:
        problems.append("domain does not equal the non-fixed inventory")
    if set(pmap.pairs.values()) != domain:
        problems.append("not a bijection: image set differs from domain set")

    for g in ruleset.fixed:
        if g in pmap.pairs and pmap.pairs[g] != g:
            problems.append(f"fixed string {g!r} is not mapped to itself")

    for i, s in enumerate(ruleset.sets):
        if {pmap(g) for g in s} != set(s):
            problems.append(f"set[{i}] is not closed under the map")

    for i, t in enumerate(ruleset.tables):
        cols = [tuple(col) for col in t.columns]
        for c, col in enumerate(cols):
            image = tuple(pmap(g) for g in col)
            if image not in cols:
                problems.append(f"table[{i}] column {c} does not map wholesale to a column")

    for i, ft in enumerate(ruleset.free_tables):
        # Image of each cell must be exactly the same-row cell of a single
        # column, identical across all rows of the source column.
        for c, col in enumerate(ft.columns):
            targets = set()
            for row, cell in enumerate(col):
                image = {pmap(g) for g in cell}
                matches = [
                    tc
                    for tc, other in enumerate(ft.columns)
                    if set(other[row]) == image
                ]
                if not matches:
                    problems.append(f"free_table[{i}] column {c} row {row} cell image is not a cell")
                else:
                    targets.add(matches[0])
            if len(targets) > 1:
                problems.append(f"free_table[{i}] column {c} rows map to different columns")

    if sampled:
        for g, img in pmap.pairs.items():
            if g == img:
                problems.append(f"fixed point outside the fixed set: {g!r}")

    return problems


# ---------------------------------------------------------------------------
# Serialization


def ruleset_from_dict(data: dict, *, name: str | None = None) -> Ruleset:
    """Build a (normalized) Ruleset from the documented JSON shape.

    Free-table column entries may be a bare string (singleton cell) or an
    array of strings.  All grapheme text is NFC-normalized on ingest.
    """
    fixed = tuple(_norm(g) for g in data.get("fixed", ()))
    sets = tuple(tuple(_norm(g) for g in s) for s in data.get("sets", ()))
    tables = tuple(
        Table(columns=tuple(tuple(_norm(g) for g in col) for col in t["columns"]))
        for t in data.get("tables", ())
    )
    free_tables = []
    for ft in data.get("free_tables", ()):
        columns = []
        for col in ft["columns"]:
            cells = tuple(
                (_norm(entry),) if isinstance(entry, str) else tuple(_norm(g) for g in entry)
                for entry in col
            )
            columns.append(cells)
        free_tables.append(FreeTable(columns=tuple(columns)))
    return Ruleset(
        fixed=fixed, sets=sets, tables=tables, free_tables=tuple(free_tables), name=name
    )


def ruleset_to_dict(ruleset: Ruleset) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "fixed": list(ruleset.fixed),
        "sets": [list(s) for s in ruleset.sets],
        "tables": [{"columns": [list(col) for col in t.columns]} for t in ruleset.tables],
        "free_tables": [
            {
                "columns": [
                    [cell[0] if len(cell) == 1 else list(cell) for cell in col]
                    for col in ft.columns
                ]
            }
            for ft in ruleset.free_tables
        ],
    }


def load_ruleset(path: str | Path) -> Ruleset:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    return ruleset_from_dict(data, name=path.stem)


def save_ruleset(ruleset: Ruleset, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(ruleset_to_dict(ruleset), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )

"""Exact-match scoring and every aggregate the benchmark reports.

The scoring unit is a binary tensor L(i, j, k, p): problem i, question j,
sub-question k, permutation p, where p = 0 is the original (identity)
variant.  From it:

* per question, ``m_og`` averages sub-question scores of p = 0 and
  ``m_obf`` averages over all sampled permutations p >= 1;
* overall scores average per-question values within each problem, then
  across problems, so problems weigh equally regardless of size;
* ``delta(i, p)`` = problem i's mean question score under permutation p
  minus its original-variant mean; negative when obfuscation hurts;
  ``delta(i)`` averages delta(i, p) over the sampled permutations;
* the robust score replaces the per-question mean over permutations with
  the per-question *minimum* across variants (p = 0 included by default;
  a flag restricts the minimum to sampled permutations only).

Exact match is strict: unicode-composed, whitespace-trimmed, internal
whitespace collapsed, case-sensitive unless toggled, no partial credit.
Missing predictions, empty responses and parse failures all score zero;
nothing is dropped.
"""

from __future__ import annotations

import csv
import io
import json
import re
import unicodedata
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import DatasetRecord
from .runner import STATUS_OK, ResponseRecord

ANSWER_TYPES = ("Digit", "SingleChar", "YN", "Other")

_WS_RUN = re.compile(r"\s+")


def normalize_answer(text: str, *, case_sensitive: bool = True) -> str:
    text = _WS_RUN.sub(" ", unicodedata.normalize("NFC", text).strip())
    return text if case_sensitive else text.casefold()


def exact_match(
    pred: str | None,
    gold: str,
    alternates: Sequence[str] = (),
    *,
    case_sensitive: bool = True,
) -> int:
    """1 iff the normalized prediction equals the gold or any alternate."""
    if pred is None:
        return 0
    p = normalize_answer(pred, case_sensitive=case_sensitive)
    candidates = (gold, *alternates)
    return int(
        any(p == normalize_answer(c, case_sensitive=case_sensitive) for c in candidates)
    )


def answer_type(gold: str) -> str:
    """Digit / SingleChar / YN / Other classification of a gold answer.

    Yes/no forms (including bare y/n) are classified before single
    characters, so the YN class is reachable for its one-letter members.
    """
    text = normalize_answer(gold)
    if text and all(c.isdigit() for c in text):
        return "Digit"
    if text.casefold() in {"yes", "no", "y", "n"}:
        return "YN"
    if len(text) == 1:
        return "SingleChar"
    return "Other"


# ---------------------------------------------------------------------------
# Score tensor


@dataclass(frozen=True)
class ProblemScores:
    """All binary outcomes for one problem: scores[p][j][k]."""

    problem_id: str
    difficulty: str
    speakers: int
    scores: tuple[tuple[tuple[int, ...], ...], ...]
    answer_types: tuple[tuple[str, ...], ...]  # [j][k]

    @property
    def permutations(self) -> int:
        """P_i: number of sampled (non-identity) permutations."""
        return len(self.scores) - 1

    @property
    def question_count(self) -> int:
        return len(self.scores[0])


@dataclass(frozen=True)
class ScoreTensor:
    problems: tuple[ProblemScores, ...]
    case_sensitive: bool = True

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "case_sensitive": self.case_sensitive,
            "problems": [
                {
                    "problem_id": p.problem_id,
                    "difficulty": p.difficulty,
                    "speakers": p.speakers,
                    "scores": [[list(q) for q in perm] for perm in p.scores],
                    "answer_types": [list(q) for q in p.answer_types],
                }
                for p in self.problems
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreTensor":
        return cls(
            problems=tuple(
                ProblemScores(
                    problem_id=p["problem_id"],
                    difficulty=p["difficulty"],
                    speakers=p["speakers"],
                    scores=tuple(
                        tuple(tuple(int(v) for v in q) for q in perm) for perm in p["scores"]
                    ),
                    answer_types=tuple(tuple(q) for q in p["answer_types"]),
                )
                for p in data["problems"]
            ),
            case_sensitive=data.get("case_sensitive", True),
        )


class UnknownPromptError(ValueError):
    """A run contains prompt_ids the dataset does not define."""

    def __init__(self, prompt_ids: Sequence[str]):
        self.prompt_ids = list(prompt_ids)
        shown = ", ".join(self.prompt_ids[:5])
        more = "" if len(self.prompt_ids) <= 5 else f" (+{len(self.prompt_ids) - 5} more)"
        super().__init__(f"prompt_ids not in dataset: {shown}{more}")


@dataclass
class ScoreReport:
    missing_prompts: list[str]
    scored: int


def score_run(
    responses: Mapping[str, ResponseRecord],
    records: Sequence[DatasetRecord],
    *,
    case_sensitive: bool = True,
) -> tuple[ScoreTensor, ScoreReport]:
    """Binary outcome for every (i, j, k, p) cell the dataset defines.

    Missing records, empty responses, parse failures, transport errors
    and missing keys all score 0; extra keys in a parsed response are
    ignored.  Responses whose prompt_id is not in the dataset raise
    UnknownPromptError.
    """
    by_problem: dict[str, dict[int, dict[int, DatasetRecord]]] = {}
    prompt_ids = set()
    for record in records:
        by_problem.setdefault(record.problem_id, {}).setdefault(record.p, {})[
            record.question_index
        ] = record
        prompt_ids.add(f"{record.variant_id}:q{record.question_index}")

    unknown = sorted(set(responses) - prompt_ids)
    if unknown:
        raise UnknownPromptError(unknown)

    missing: list[str] = []
    problems: list[ProblemScores] = []
    for problem_id in sorted(by_problem):
        variants = by_problem[problem_id]
        p_values = sorted(variants)
        if p_values != list(range(len(p_values))) or 0 not in variants:
            raise ValueError(f"dataset for {problem_id} lacks a contiguous p range with p=0")
        sample = variants[0]
        question_indices = sorted(sample)
        per_p: list[tuple[tuple[int, ...], ...]] = []
        for p in p_values:
            rows = []
            for j in question_indices:
                record = variants[p][j]
                prompt_id = f"{record.variant_id}:q{j}"
                response = responses.get(prompt_id)
                if response is None:
                    missing.append(prompt_id)
                row = []
                for key, _text in record.subquestions:
                    pred = None
                    if response is not None and response.status == STATUS_OK and response.parsed:
                        pred = response.parsed.get(key)
                    row.append(
                        exact_match(
                            pred,
                            record.answers[key],
                            record.alternates.get(key, ()),
                            case_sensitive=case_sensitive,
                        )
                    )
                rows.append(tuple(row))
            per_p.append(tuple(rows))
        answer_types = tuple(
            tuple(answer_type(sample[j].answers[key]) for key, _ in sample[j].subquestions)
            for j in question_indices
        )
        first = sample[question_indices[0]]
        problems.append(
            ProblemScores(
                problem_id=problem_id,
                difficulty=first.difficulty,
                speakers=first.speakers,
                scores=tuple(per_p),
                answer_types=answer_types,
            )
        )
    tensor = ScoreTensor(problems=tuple(problems), case_sensitive=case_sensitive)
    return tensor, ScoreReport(missing_prompts=missing, scored=len(responses))


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class ProblemMetrics:
    problem_id: str
    difficulty: str
    speakers: int
    m_og: float
    m_obf: float | None  # None when the problem has no sampled permutations
    m_rob: float
    delta_by_p: tuple[float, ...]  # indexed p = 1..P
    delta: float | None


@dataclass(frozen=True)
class MetricsReport:
    m_og: float
    m_obf: float | None
    m_rob: float
    per_problem: tuple[ProblemMetrics, ...]
    by_difficulty: dict[str, dict]
    by_answer_type: dict[str, dict]
    include_original_in_min: bool
    case_sensitive: bool


def _problem_metrics(p: ProblemScores, *, include_original_in_min: bool) -> ProblemMetrics:
    questions = range(p.question_count)
    P = p.permutations

    og_by_j = [sum(p.scores[0][j]) / len(p.scores[0][j]) for j in questions]
    m_og_i = sum(og_by_j) / len(og_by_j)

    if P > 0:
        obf_by_j = [
            sum(p.scores[perm][j][k] for perm in range(1, P + 1) for k in range(len(p.scores[0][j])))
            / (P * len(p.scores[0][j]))
            for j in questions
        ]
        m_obf_i = sum(obf_by_j) / len(obf_by_j)
        delta_by_p = tuple(
            sum(sum(p.scores[perm][j]) / len(p.scores[perm][j]) for j in questions)
            / len(og_by_j)
            - m_og_i
            for perm in range(1, P + 1)
        )
        delta_i = sum(delta_by_p) / P
    else:
        m_obf_i = None
        delta_by_p = ()
        delta_i = None

    start = 0 if include_original_in_min or P == 0 else 1
    rob_by_j = []
    for j in questions:
        m = len(p.scores[0][j])
        worst = min(sum(p.scores[perm][j]) for perm in range(start, P + 1))
        rob_by_j.append(worst / m)
    m_rob_i = sum(rob_by_j) / len(rob_by_j)

    return ProblemMetrics(
        problem_id=p.problem_id,
        difficulty=p.difficulty,
        speakers=p.speakers,
        m_og=m_og_i,
        m_obf=m_obf_i,
        m_rob=m_rob_i,
        delta_by_p=delta_by_p,
        delta=delta_i,
    )


def _overall(per_problem: Sequence[ProblemMetrics]) -> dict:
    og = [pm.m_og for pm in per_problem]
    obf = [pm.m_obf for pm in per_problem if pm.m_obf is not None]
    rob = [pm.m_rob for pm in per_problem]
    return {
        "m_og": sum(og) / len(og),
        "m_obf": sum(obf) / len(obf) if obf else None,
        "m_rob": sum(rob) / len(rob),
        "problems": len(per_problem),
    }


def aggregate(tensor: ScoreTensor, *, include_original_in_min: bool = True) -> MetricsReport:
    """Every aggregate: overall, per problem, per difficulty, per answer type.

    ``include_original_in_min`` controls whether the robust metric's
    per-question minimum ranges over p = 0 as well as the sampled
    permutations (default) or the sampled permutations only.
    """
    if not tensor.problems:
        raise ValueError("empty score tensor")
    per_problem = tuple(
        _problem_metrics(p, include_original_in_min=include_original_in_min)
        for p in tensor.problems
    )

    by_difficulty = {}
    for level in sorted({pm.difficulty for pm in per_problem}):
        group = [pm for pm in per_problem if pm.difficulty == level]
        by_difficulty[level] = _overall(group)

    type_counts: dict[str, dict[str, int]] = {}
    for p in tensor.problems:
        for j, row in enumerate(p.answer_types):
            for k, a_type in enumerate(row):
                slot = type_counts.setdefault(
                    a_type, {"og_hits": 0, "og_n": 0, "obf_hits": 0, "obf_n": 0}
                )
                slot["og_hits"] += p.scores[0][j][k]
                slot["og_n"] += 1
                for perm in range(1, p.permutations + 1):
                    slot["obf_hits"] += p.scores[perm][j][k]
                    slot["obf_n"] += 1
    by_answer_type = {
        a_type: {
            "og": c["og_hits"] / c["og_n"] if c["og_n"] else None,
            "obf": c["obf_hits"] / c["obf_n"] if c["obf_n"] else None,
            "og_pairs": c["og_n"],
            "obf_pairs": c["obf_n"],
        }
        for a_type, c in sorted(type_counts.items())
    }

    overall = _overall(per_problem)
    return MetricsReport(
        m_og=overall["m_og"],
        m_obf=overall["m_obf"],
        m_rob=overall["m_rob"],
        per_problem=per_problem,
        by_difficulty=by_difficulty,
        by_answer_type=by_answer_type,
        include_original_in_min=include_original_in_min,
        case_sensitive=tensor.case_sensitive,
    )


# ---------------------------------------------------------------------------
# Exports


def report_summary(report: MetricsReport) -> dict:
    return {
        "m_og": report.m_og,
        "m_obf": report.m_obf,
        "m_rob": report.m_rob,
        "problems": len(report.per_problem),
        "by_difficulty": report.by_difficulty,
        "by_answer_type": report.by_answer_type,
        "toggles": {
            "include_original_in_min": report.include_original_in_min,
            "case_sensitive": report.case_sensitive,
        },
    }


def per_problem_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["problem_id", "difficulty", "speakers", "m_og", "m_obf", "m_rob", "delta", "delta_by_p"]
    )
    for pm in report.per_problem:
        writer.writerow(
            [
                pm.problem_id,
                pm.difficulty,
                pm.speakers,
                repr(pm.m_og),
                "" if pm.m_obf is None else repr(pm.m_obf),
                repr(pm.m_rob),
                "" if pm.delta is None else repr(pm.delta),
                json.dumps(list(pm.delta_by_p)),
            ]
        )
    return buf.getvalue()


def heatmap_csv(reports: Mapping[str, MetricsReport]) -> str:
    """problems x models matrix of per-problem obfuscation deltas."""
    models = sorted(reports)
    problem_ids: list[str] = []
    for report in reports.values():
        for pm in report.per_problem:
            if pm.problem_id not in problem_ids:
                problem_ids.append(pm.problem_id)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["problem_id", *models])
    for pid in sorted(problem_ids):
        row: list[str] = [pid]
        for model in models:
            pm = next(
                (x for x in reports[model].per_problem if x.problem_id == pid), None
            )
            row.append("" if pm is None or pm.delta is None else repr(pm.delta))
        writer.writerow(row)
    return buf.getvalue()

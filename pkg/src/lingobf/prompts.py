"""Prompt assembly from dataset records.

Every prompt shows the entire rendered problem sheet first, then asks the
model to answer one question's sub-questions, and closes with formatting
instructions plus an empty JSON skeleton whose keys are the expected
answer keys.  The ``no_context`` mode removes the context block and
nothing else, which turns the prompt into a probe for knowledge
shortcuts: with the key information gone, scoring above chance requires
prior exposure rather than reasoning.  An optional guidance block (expert
reasoning steps) is inserted immediately before the instructions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import DatasetRecord

SYSTEM_MESSAGE = "You are a helpful assistant."

HEADER = (
    "Below is a problem sheet from a linguistics exam. You will first see the entire "
    "sheet, then be asked to respond to specific questions from the sheet. Your answers "
    "to the questions should rely only on reasoning about the information provided in "
    "the sheet."
)

INSTRUCTIONS = (
    "Only respond with json output. Do not include anything other than the json in "
    "your response. Format your response as a json file with the keys as provided below:"
)


@dataclass(frozen=True)
class Variant:
    """All questions of one rendered problem variant, in order."""

    problem_id: str
    p: int
    preamble: str
    context: str
    questions: tuple[DatasetRecord, ...]

    @property
    def variant_id(self) -> str:
        return f"{self.problem_id}:p{self.p}"


def group_variants(records: Iterable[DatasetRecord]) -> list[Variant]:
    by_variant: dict[tuple[str, int], list[DatasetRecord]] = {}
    for record in records:
        by_variant.setdefault((record.problem_id, record.p), []).append(record)
    variants = []
    for (problem_id, p), recs in sorted(by_variant.items()):
        recs = sorted(recs, key=lambda r: r.question_index)
        variants.append(
            Variant(
                problem_id=problem_id,
                p=p,
                preamble=recs[0].preamble,
                context=recs[0].context,
                questions=tuple(recs),
            )
        )
    return variants


@dataclass(frozen=True)
class PromptInstance:
    prompt_id: str
    variant_id: str
    problem_id: str
    p: int
    question_index: int
    system_message: str
    user_message: str
    expected_keys: tuple[str, ...]
    no_context: bool = False
    guidance: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "prompt_id": self.prompt_id,
                "variant_id": self.variant_id,
                "problem_id": self.problem_id,
                "p": self.p,
                "question_index": self.question_index,
                "system": self.system_message,
                "user": self.user_message,
                "expected_keys": list(self.expected_keys),
                "no_context": self.no_context,
                "guidance": self.guidance,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "PromptInstance":
        d = json.loads(line)
        return cls(
            prompt_id=d["prompt_id"],
            variant_id=d["variant_id"],
            problem_id=d["problem_id"],
            p=d["p"],
            question_index=d["question_index"],
            system_message=d["system"],
            user_message=d["user"],
            expected_keys=tuple(d["expected_keys"]),
            no_context=d.get("no_context", False),
            guidance=d.get("guidance"),
        )


def _question_text(record: DatasetRecord) -> str:
    parts = [record.body] if record.body else []
    parts.extend(f"{key}. {text}" for key, text in record.subquestions)
    return "\n".join(parts)


def _sheet_text(variant: Variant) -> str:
    return "\n\n".join(_question_text(q) for q in variant.questions)


def answer_skeleton(keys: Sequence[str]) -> str:
    """Empty JSON object with the expected keys, values as empty strings."""
    return json.dumps({key: "" for key in keys}, ensure_ascii=False)


def build_prompt(
    variant: Variant,
    question_index: int,
    *,
    no_context: bool = False,
    guidance: str | None = None,
) -> PromptInstance:
    """Fill the template for one (variant, question) pair.

    Template order: sheet, "Now respond" header, preamble, context (unless
    ``no_context``), the chosen question's sub-questions, optional
    guidance, instructions, JSON skeleton.
    """
    if not 0 <= question_index < len(variant.questions):
        raise IndexError(
            f"question index {question_index} out of range for {variant.variant_id}"
        )
    record = variant.questions[question_index]
    keys = record.expected_keys

    parts = [HEADER, _sheet_text(variant), "", "Now respond to the following questions:", variant.preamble]
    if not no_context:
        parts.append(variant.context)
    parts.append(_question_text(record))
    parts.append("")
    if guidance is not None:
        parts.extend([guidance, ""])
    parts.append(INSTRUCTIONS)
    parts.append(answer_skeleton(keys))

    return PromptInstance(
        prompt_id=f"{variant.variant_id}:q{question_index}",
        variant_id=variant.variant_id,
        problem_id=variant.problem_id,
        p=variant.p,
        question_index=question_index,
        system_message=SYSTEM_MESSAGE,
        user_message="\n".join(parts),
        expected_keys=keys,
        no_context=no_context,
        guidance=guidance,
    )


def build_prompts(
    records: Iterable[DatasetRecord],
    *,
    question_index: int | None = None,
    no_context: bool = False,
    guidance: str | None = None,
) -> list[PromptInstance]:
    """Prompts for every (variant, question) pair in the dataset.

    ``question_index`` restricts output to one question index per variant
    (variants lacking that index are skipped).
    """
    prompts = []
    for variant in group_variants(records):
        indices = (
            range(len(variant.questions))
            if question_index is None
            else [question_index] if question_index < len(variant.questions) else []
        )
        for j in indices:
            prompts.append(
                build_prompt(variant, j, no_context=no_context, guidance=guidance)
            )
    return prompts


def write_prompts(prompts: Sequence[PromptInstance], path: str | Path) -> None:
    Path(path).write_text(
        "".join(p.to_json() + "\n" for p in prompts), encoding="utf-8"
    )


def load_prompts(path: str | Path) -> list[PromptInstance]:
    return [
        PromptInstance.from_json(line)
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]

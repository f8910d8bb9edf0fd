"""Problem corpus model, on-disk layout, and dataset generation.

A corpus directory holds one subdirectory per problem:

    <corpus>/<problem_id>/
        problem.txt    annotated text, sectioned by line directives
        answers.json   one object per question: key -> answer
        ruleset.json   the permutation ruleset (rulesets.py schema)
        meta.json      difficulty + language metadata

``problem.txt`` sections are introduced by a directive alone on a line:
``[preamble]``, ``[context]``, ``[question]`` (repeatable), and
``[sub KEY]`` inside a question.  Section content is everything up to the
next directive, with surrounding blank lines trimmed.  ``answers.json``
values are either a plain string or ``{"answer": ..., "alternates":
[...]}``; answers may themselves contain ``@@@...@@@`` spans.

The language *name* in meta.json is never emitted into dataset records or
prompts; only the speaker count travels (it feeds the resourcedness
regression).  Datasets are line-delimited records, one question of one
variant per line, plus a manifest carrying the generation parameters and
per-variant content digests, so identical inputs reproduce identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import annotations
from .obfuscate import obfuscate_variant
from .rng import derive_seed
from .rulesets import (
    PermutationMap,
    Ruleset,
    load_ruleset,
    sample_distinct,
    validate_ruleset,
)

SCHEMA_VERSION = 1

DIFFICULTIES = ("Breakthrough", "Foundation", "Intermediate", "Advanced", "Round2")

PROBLEM_FILE = "problem.txt"
ANSWERS_FILE = "answers.json"
RULESET_FILE = "ruleset.json"
META_FILE = "meta.json"


def _norm(text: str) -> str:
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class Subquestion:
    key: str
    text: annotations.AnnotatedDocument
    answer: str  # raw annotated string
    alternates: tuple[str, ...] = ()


@dataclass(frozen=True)
class Question:
    body: annotations.AnnotatedDocument
    subquestions: tuple[Subquestion, ...]


@dataclass(frozen=True)
class LanguageMeta:
    name: str
    speakers: int


@dataclass(frozen=True)
class Problem:
    id: str
    difficulty: str
    language: LanguageMeta
    preamble: annotations.AnnotatedDocument
    context: annotations.AnnotatedDocument
    questions: tuple[Question, ...]
    ruleset: Ruleset

    @property
    def pair_count(self) -> int:
        return sum(len(q.subquestions) for q in self.questions)


@dataclass(frozen=True)
class Corpus:
    problems: tuple[Problem, ...]

    def __iter__(self):
        return iter(self.problems)

    def __len__(self):
        return len(self.problems)


@dataclass
class LoadFailure:
    problem_id: str
    errors: list[str]


@dataclass
class LoadReport:
    failures: list[LoadFailure] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


# ---------------------------------------------------------------------------
# problem.txt parsing

_DIRECTIVE = re.compile(r"^\[(preamble|context|question|sub ([^\]]+))\]\s*$")


def _split_sections(text: str) -> list[tuple[str, str | None, str]]:
    """(kind, sub_key, content) triples in file order."""
    sections: list[tuple[str, str | None, list[str]]] = []
    for line in text.splitlines():
        m = _DIRECTIVE.match(line)
        if m:
            kind = "sub" if m.group(2) is not None else m.group(1)
            sections.append((kind, m.group(2), []))
        elif sections:
            sections[-1][2].append(line)
        elif line.strip():
            raise ValueError(f"content before first section directive: {line!r}")
    return [(kind, key, "\n".join(lines).strip("\n")) for kind, key, lines in sections]


def _parse_problem_text(text: str) -> tuple[str, str, list[tuple[str, list[tuple[str, str]]]]]:
    """Returns (preamble, context, [(question_body, [(key, sub_text)])])."""
    preamble = ""
    context = ""
    questions: list[tuple[str, list[tuple[str, str]]]] = []
    for kind, key, content in _split_sections(text):
        if kind == "preamble":
            preamble = content
        elif kind == "context":
            context = content
        elif kind == "question":
            questions.append((content, []))
        else:  # sub
            if not questions:
                raise ValueError(f"[sub {key}] before any [question] section")
            questions[-1][1].append((key.strip(), content))
    return preamble, context, questions


# ---------------------------------------------------------------------------
# Loading


def _load_problem(path: Path) -> Problem:
    for name in (PROBLEM_FILE, ANSWERS_FILE, RULESET_FILE, META_FILE):
        if not (path / name).is_file():
            raise ValueError(f"missing {name}")

    meta = json.loads((path / META_FILE).read_text(encoding="utf-8"))
    difficulty = meta.get("difficulty")
    if difficulty not in DIFFICULTIES:
        raise ValueError(f"unknown difficulty {difficulty!r}; expected one of {DIFFICULTIES}")
    lang = meta.get("language", {})
    speakers = lang.get("speakers")
    if not isinstance(speakers, int) or speakers <= 0:
        raise ValueError("language.speakers must be a positive integer")
    language = LanguageMeta(name=str(lang.get("name", "")), speakers=speakers)

    ruleset = load_ruleset(path / RULESET_FILE)
    issues = validate_ruleset(ruleset)
    if issues:
        raise ValueError("invalid ruleset: " + "; ".join(str(i) for i in issues))

    raw_answers = json.loads((path / ANSWERS_FILE).read_text(encoding="utf-8"))
    if not isinstance(raw_answers, list):
        raise ValueError("answers.json must be a list with one object per question")

    text = _norm((path / PROBLEM_FILE).read_text(encoding="utf-8"))
    preamble_text, context_text, question_specs = _parse_problem_text(text)

    if not question_specs:
        raise ValueError("problem has no [question] section")
    if len(raw_answers) != len(question_specs):
        raise ValueError(
            f"answers.json has {len(raw_answers)} question entries, "
            f"problem.txt has {len(question_specs)}"
        )

    questions = []
    for j, (body_text, subs) in enumerate(question_specs):
        if not subs:
            raise ValueError(f"question {j} has no [sub ...] sections")
        keys = [key for key, _ in subs]
        if len(set(keys)) != len(keys):
            raise ValueError(f"question {j} has duplicate subquestion keys")
        answer_map = raw_answers[j]
        missing = [k for k in keys if k not in answer_map]
        if missing:
            raise ValueError(f"question {j} missing answers for keys {missing}")
        subquestions = []
        for key, sub_text in subs:
            entry = answer_map[key]
            if isinstance(entry, str):
                answer, alternates = entry, ()
            else:
                answer = entry["answer"]
                alternates = tuple(_norm(a) for a in entry.get("alternates", ()))
            subquestions.append(
                Subquestion(
                    key=key,
                    text=annotations.parse(sub_text),
                    answer=_norm(answer),
                    alternates=alternates,
                )
            )
        questions.append(
            Question(body=annotations.parse(body_text), subquestions=tuple(subquestions))
        )

    problem = Problem(
        id=path.name,
        difficulty=difficulty,
        language=language,
        preamble=annotations.parse(preamble_text),
        context=annotations.parse(context_text),
        questions=tuple(questions),
        ruleset=ruleset,
    )

    gaps = []
    for name, doc in _problem_documents(problem).items():
        for gap in annotations.coverage_report(doc, ruleset):
            gaps.append(f"{name}: {gap}")
    for j, q in enumerate(problem.questions):
        for sub in q.subquestions:
            for raw in (sub.answer, *sub.alternates):
                for gap in annotations.coverage_report(annotations.parse(raw), ruleset):
                    gaps.append(f"q{j}.answer.{sub.key}: {gap}")
    if gaps:
        raise ValueError("coverage gaps: " + "; ".join(gaps))

    return problem


def _problem_documents(problem: Problem) -> dict[str, annotations.AnnotatedDocument]:
    docs = {"preamble": problem.preamble, "context": problem.context}
    for j, q in enumerate(problem.questions):
        docs[f"q{j}.body"] = q.body
        for sub in q.subquestions:
            docs[f"q{j}.sub.{sub.key}"] = sub.text
    return docs


def load_corpus(directory: str | Path) -> tuple[Corpus, LoadReport]:
    """Parse and validate every problem directory; failures are per-problem.

    A problem that fails parsing, ruleset validation, or the coverage
    check is excluded from the corpus and listed in the report; the rest
    of the corpus still loads.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    report = LoadReport()
    problems = []
    candidates = sorted(p for p in directory.iterdir() if p.is_dir())
    if not candidates:
        report.warnings.append(f"no problem directories found in {directory}")
    for path in candidates:
        try:
            problems.append(_load_problem(path))
        except (ValueError, KeyError, annotations.MarkerError, json.JSONDecodeError) as exc:
            report.failures.append(LoadFailure(problem_id=path.name, errors=[str(exc)]))
    return Corpus(problems=tuple(problems)), report


# ---------------------------------------------------------------------------
# Dataset generation


@dataclass(frozen=True)
class DatasetRecord:
    """One question of one problem variant, fully rendered."""

    problem_id: str
    p: int  # 0 = original (identity map)
    question_index: int
    difficulty: str
    speakers: int
    preamble: str
    context: str
    body: str
    subquestions: tuple[tuple[str, str], ...]  # (key, rendered text)
    answers: dict[str, str]  # key -> rendered gold
    alternates: dict[str, tuple[str, ...]]

    @property
    def variant_id(self) -> str:
        return f"{self.problem_id}:p{self.p}"

    @property
    def expected_keys(self) -> tuple[str, ...]:
        return tuple(key for key, _ in self.subquestions)

    def to_json(self) -> str:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "problem_id": self.problem_id,
            "p": self.p,
            "question_index": self.question_index,
            "difficulty": self.difficulty,
            "speakers": self.speakers,
            "preamble": self.preamble,
            "context": self.context,
            "body": self.body,
            "subquestions": [{"key": k, "text": t} for k, t in self.subquestions],
            "answers": self.answers,
            "alternates": {k: list(v) for k, v in self.alternates.items() if v},
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        d = json.loads(line)
        return cls(
            problem_id=d["problem_id"],
            p=d["p"],
            question_index=d["question_index"],
            difficulty=d["difficulty"],
            speakers=d["speakers"],
            preamble=d["preamble"],
            context=d["context"],
            body=d["body"],
            subquestions=tuple((s["key"], s["text"]) for s in d["subquestions"]),
            answers=dict(d["answers"]),
            alternates={k: tuple(v) for k, v in d.get("alternates", {}).items()},
        )


def variant_maps(problem: Problem, per_problem: int, seed: int) -> list[PermutationMap]:
    """Identity plus up to ``per_problem`` distinct sampled maps for a problem.

    The problem id is folded into the seed so corpora are insensitive to
    problem ordering and every problem draws from its own stream.
    """
    identity = PermutationMap.identity(problem.ruleset)
    sampled = sample_distinct(
        problem.ruleset, per_problem, derive_seed(seed, "problem", problem.id)
    )
    return [identity, *sampled]


def build_dataset(
    corpus: Corpus, per_problem: int = 6, seed: int = 0, *, fold_case: bool = True
) -> list[DatasetRecord]:
    """Render variant p=0 plus sampled variants for every problem.

    Deterministic in (corpus, per_problem, seed).  A problem whose ruleset
    admits fewer than ``per_problem`` distinct permutations simply yields
    fewer variants.
    """
    records: list[DatasetRecord] = []
    for problem in corpus.problems:
        documents = _problem_documents(problem)
        raw_answers = {}
        raw_alternates: dict[str, tuple[str, ...]] = {}
        for j, q in enumerate(problem.questions):
            for sub in q.subquestions:
                raw_answers[f"q{j}.{sub.key}"] = sub.answer
                for a_idx, alt in enumerate(sub.alternates):
                    raw_answers[f"alt{a_idx}.q{j}.{sub.key}"] = alt
                raw_alternates[f"q{j}.{sub.key}"] = sub.alternates

        for p, pmap in enumerate(variant_maps(problem, per_problem, seed)):
            rendered_docs, rendered_answers = obfuscate_variant(
                documents, raw_answers, pmap, problem.ruleset, fold_case=fold_case
            )
            for j, q in enumerate(problem.questions):
                keys = [sub.key for sub in q.subquestions]
                records.append(
                    DatasetRecord(
                        problem_id=problem.id,
                        p=p,
                        question_index=j,
                        difficulty=problem.difficulty,
                        speakers=problem.language.speakers,
                        preamble=rendered_docs["preamble"],
                        context=rendered_docs["context"],
                        body=rendered_docs[f"q{j}.body"],
                        subquestions=tuple(
                            (key, rendered_docs[f"q{j}.sub.{key}"]) for key in keys
                        ),
                        answers={key: rendered_answers[f"q{j}.{key}"] for key in keys},
                        alternates={
                            key: tuple(
                                rendered_answers[f"alt{a_idx}.q{j}.{key}"]
                                for a_idx in range(len(raw_alternates[f"q{j}.{key}"]))
                            )
                            for key in keys
                        },
                    )
                )
    return records


def write_dataset(
    records: Sequence[DatasetRecord],
    out_dir: str | Path,
    *,
    seed: int,
    per_problem: int,
    fold_case: bool = True,
    corpus: Corpus | None = None,
) -> dict:
    """Persist records.jsonl + manifest.json; returns the manifest.

    The manifest carries toolkit version, generation parameters, the
    sampled map of every variant, and a content digest per variant.
    """
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = [r.to_json() for r in records]
    (out_dir / "records.jsonl").write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )

    per_variant: dict[str, "hashlib._Hash"] = {}
    for record, line in zip(records, lines):
        per_variant.setdefault(record.variant_id, hashlib.sha256()).update(
            line.encode("utf-8") + b"\n"
        )
    digests = {vid: h.hexdigest() for vid, h in per_variant.items()}

    maps = {}
    if corpus is not None:
        for problem in corpus.problems:
            for p, pmap in enumerate(variant_maps(problem, per_problem, seed)):
                if p == 0:
                    continue
                maps[f"{problem.id}:p{p}"] = {"seed": pmap.seed, "pairs": pmap.pairs}

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "lingobf", "version": __version__},
        "seed": seed,
        "per_problem": per_problem,
        "fold_case": fold_case,
        "problems": len({r.problem_id for r in records}),
        "variants": len(digests),
        "records": len(records),
        "pairs": sum(len(r.subquestions) for r in records),
        "digests": digests,
        "maps": maps,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return manifest


def load_dataset(path: str | Path) -> tuple[list[DatasetRecord], dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    records = [
        DatasetRecord.from_json(line)
        for line in (path / "records.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    return records, manifest


# ---------------------------------------------------------------------------
# Stats


def corpus_stats(source: Corpus | Iterable[DatasetRecord]) -> dict:
    """(sub-question, answer) pair counts by difficulty and answer type.

    For a Corpus the obfuscated column is zero (nothing generated yet);
    for dataset records pairs split into p=0 and p>=1 columns.
    Percentages are shares of the column total.
    """
    from .metrics import answer_type

    by_level = {level: [0, 0] for level in DIFFICULTIES}
    by_type: dict[str, list[int]] = {}

    def add(level: str, a_type: str, obfuscated: bool, count: int = 1) -> None:
        col = 1 if obfuscated else 0
        by_level[level][col] += count
        by_type.setdefault(a_type, [0, 0])[col] += count

    if isinstance(source, Corpus):
        for problem in source.problems:
            for q in problem.questions:
                for sub in q.subquestions:
                    gold = annotations.render(annotations.parse(sub.answer))
                    add(problem.difficulty, answer_type(gold), obfuscated=False)
    else:
        for record in source:
            for key, gold in record.answers.items():
                add(record.difficulty, answer_type(gold), obfuscated=record.p > 0)

    def table(counts: Mapping[str, list[int]]) -> dict:
        totals = [
            sum(v[0] for v in counts.values()),
            sum(v[1] for v in counts.values()),
        ]
        rows = {}
        for name, (unobf, obf) in counts.items():
            rows[name] = {
                "unobfuscated": unobf,
                "unobfuscated_pct": round(100 * unobf / totals[0], 1) if totals[0] else 0.0,
                "obfuscated": obf,
                "obfuscated_pct": round(100 * obf / totals[1], 1) if totals[1] else 0.0,
            }
        rows["Total"] = {
            "unobfuscated": totals[0],
            "unobfuscated_pct": 100.0 if totals[0] else 0.0,
            "obfuscated": totals[1],
            "obfuscated_pct": 100.0 if totals[1] else 0.0,
        }
        return rows

    return {"by_difficulty": table(by_level), "by_answer_type": table(by_type)}


def stats_table(stats: dict, section: str = "by_difficulty") -> str:
    """Markdown rendering of a corpus_stats section."""
    rows = stats[section]
    lines = [
        "| Level | Unobfuscated | Obfuscated |",
        "| --- | --- | --- |",
    ]
    for name, row in rows.items():
        lines.append(
            f"| {name} | {row['unobfuscated']} ({row['unobfuscated_pct']}%) "
            f"| {row['obfuscated']} ({row['obfuscated_pct']}%) |"
        )
    return "\n".join(lines)

"""Execute prompts against chat-completion endpoints and recover answers.

Endpoints are described declaratively: a URL, header and body templates
with ``{system}`` / ``{user}`` / ``{model}`` / ``{api_key}`` slots, and a
dot-path to the text field of the response envelope.  Nothing here is
provider-specific; pointing the harness at a new API is a config edit.

Raw response text is always persisted verbatim before parsing, so
improved recovery can re-score a run without re-querying.  Runs are
resumable: records.jsonl is append-only, one final record per prompt_id,
and a rerun skips prompts that already have a final record.

Response recovery ladder (applied in order until one succeeds):

1. direct JSON-object parse;
2. strip surrounding code fences and re-parse;
3. extract the first balanced ``{...}`` substring and parse;
4. per-key regex for ``"<key>": "..."`` pairs.

Missing keys are scored as wrong downstream, not treated as parse
failures; only total failure is ``bad_parsing``.  Blank responses are
``empty``.  Unparsed responses are never dropped: scoring counts them as
incorrect.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .prompts import PromptInstance

STATUS_OK = "ok"
STATUS_EMPTY = "empty"
STATUS_BAD_PARSING = "bad_parsing"
STATUS_TRANSPORT_ERROR = "transport_error"

# transport(url, headers, body, timeout_s) -> (status_code, response_text)
Transport = Callable[[str, dict, dict, float], tuple[int, str]]


@dataclass(frozen=True)
class EndpointConfig:
    """Declarative description of one model endpoint.

    ``headers`` values may contain ``{api_key}``; ``body`` is a JSON
    template whose string leaves may contain ``{system}``, ``{user}`` and
    ``{model}``.  Temperature defaults to 0 (and is simply absent for
    endpoints that do not support it -- omit it from the body template).
    """

    name: str
    url: str
    model: str = ""
    api_key_env: str | None = None
    headers: dict = field(default_factory=lambda: {"Content-Type": "application/json"})
    body: dict | None = None
    response_path: str = "choices.0.message.content"
    temperature: float | None = 0.0
    max_output_tokens: int | None = None
    timeout_s: float = 120.0
    max_retries: int = 3
    retry_base_s: float = 1.0

    @classmethod
    def from_file(cls, path: str | Path) -> "EndpointConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)

    def default_body(self) -> dict:
        body: dict = {
            "model": "{model}",
            "messages": [
                {"role": "system", "content": "{system}"},
                {"role": "user", "content": "{user}"},
            ],
        }
        if self.temperature is not None:
            body["temperature"] = self.temperature
        if self.max_output_tokens is not None:
            body["max_tokens"] = self.max_output_tokens
        return body


_SLOT = re.compile(r"\{(system|user|model|api_key)\}")


def _fill(template, values: Mapping[str, str]):
    """Single-pass slot substitution on every string leaf of a JSON template."""
    if isinstance(template, str):
        return _SLOT.sub(lambda m: values.get(m.group(1), m.group(0)), template)
    if isinstance(template, list):
        return [_fill(item, values) for item in template]
    if isinstance(template, dict):
        return {key: _fill(value, values) for key, value in template.items()}
    return template


def build_request(endpoint: EndpointConfig, prompt: PromptInstance) -> tuple[dict, dict]:
    api_key = ""
    if endpoint.api_key_env:
        api_key = os.environ.get(endpoint.api_key_env, "")
        if not api_key:
            raise RuntimeError(
                f"credential environment variable {endpoint.api_key_env} is not set"
            )
    values = {
        "system": prompt.system_message,
        "user": prompt.user_message,
        "model": endpoint.model,
        "api_key": api_key,
    }
    headers = _fill(endpoint.headers, values)
    body = _fill(endpoint.body or endpoint.default_body(), values)
    return headers, body


def _requests_transport(url: str, headers: dict, body: dict, timeout_s: float) -> tuple[int, str]:
    import requests

    resp = requests.post(url, headers=headers, json=body, timeout=timeout_s)
    return resp.status_code, resp.text


def extract_text(envelope_text: str, response_path: str) -> str:
    """Walk the dot-path into the response envelope; raises on any mismatch."""
    node = json.loads(envelope_text)
    for part in response_path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(part)
    if not isinstance(node, str):
        raise TypeError(f"response path {response_path} did not reach a string")
    return node


# ---------------------------------------------------------------------------
# Response parsing


_FENCE = re.compile(r"^```[^\n]*\n(.*?)\n?```\s*$", re.DOTALL)


def _coerce(value) -> str:
    return value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)


def _try_object(text: str) -> dict | None:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _strip_fences(text: str) -> str | None:
    m = _FENCE.match(text.strip())
    return m.group(1) if m else None


def _first_balanced_object(text: str) -> str | None:
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
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
                return text[start : i + 1]
    return None


def parse_response(
    raw: str,
    expected_keys: Sequence[str],
    *,
    steps: Sequence[int] = (1, 2, 3, 4),
) -> tuple[dict[str, str] | None, str]:
    """(parsed key->answer map, status) for a raw model response.

    ``steps`` exists so tests can disable lower rungs and check that each
    rung parses the same inputs identically on its own.
    """
    if not raw or not raw.strip():
        return None, STATUS_EMPTY

    if 1 in steps:
        obj = _try_object(raw)
        if obj is not None:
            return {str(k): _coerce(v) for k, v in obj.items()}, STATUS_OK

    if 2 in steps:
        inner = _strip_fences(raw)
        if inner is not None:
            obj = _try_object(inner)
            if obj is not None:
                return {str(k): _coerce(v) for k, v in obj.items()}, STATUS_OK

    if 3 in steps:
        candidate = _first_balanced_object(raw)
        if candidate is not None:
            obj = _try_object(candidate)
            if obj is not None:
                return {str(k): _coerce(v) for k, v in obj.items()}, STATUS_OK

    if 4 in steps:
        found: dict[str, str] = {}
        for key in expected_keys:
            m = re.search(
                r'"%s"\s*:\s*"((?:[^"\\]|\\.)*)"' % re.escape(key), raw
            )
            if m:
                found[key] = json.loads(f'"{m.group(1)}"')
        if found:
            return found, STATUS_OK

    return None, STATUS_BAD_PARSING


# ---------------------------------------------------------------------------
# Run loop


@dataclass(frozen=True)
class ResponseRecord:
    prompt_id: str
    status: str
    raw_text: str
    parsed: dict[str, str] | None
    attempts: int
    latency_ms: float
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "prompt_id": self.prompt_id,
                "status": self.status,
                "raw_text": self.raw_text,
                "parsed": self.parsed,
                "attempts": self.attempts,
                "latency_ms": self.latency_ms,
                "timestamp": self.timestamp,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "ResponseRecord":
        d = json.loads(line)
        return cls(
            prompt_id=d["prompt_id"],
            status=d["status"],
            raw_text=d["raw_text"],
            parsed=d["parsed"],
            attempts=d["attempts"],
            latency_ms=d["latency_ms"],
            timestamp=d["timestamp"],
        )


def read_records(run_dir: str | Path) -> dict[str, ResponseRecord]:
    """Final records by prompt_id; tolerates a truncated trailing line."""
    path = Path(run_dir) / "records.jsonl"
    records: dict[str, ResponseRecord] = {}
    if not path.is_file():
        return records
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            record = ResponseRecord.from_json(line)
        except (json.JSONDecodeError, KeyError):
            continue  # interrupted write; the prompt will be re-run
        records.setdefault(record.prompt_id, record)
    return records


def _query_one(
    prompt: PromptInstance,
    endpoint: EndpointConfig,
    transport: Transport,
) -> ResponseRecord:
    headers, body = build_request(endpoint, prompt)
    started = time.perf_counter()
    attempts = 0
    raw: str | None = None
    failure = ""
    while attempts <= endpoint.max_retries:
        attempts += 1
        try:
            code, text = transport(endpoint.url, headers, body, endpoint.timeout_s)
            if code != 200:
                raise RuntimeError(f"HTTP {code}: {text[:200]}")
            raw = extract_text(text, endpoint.response_path)
            break
        except Exception as exc:  # noqa: BLE001 - transport failures are data
            failure = str(exc)
            if attempts <= endpoint.max_retries:
                time.sleep(endpoint.retry_base_s * (2 ** (attempts - 1)))
    latency_ms = (time.perf_counter() - started) * 1000.0

    if raw is None:
        parsed, status = None, STATUS_TRANSPORT_ERROR
        raw_text = failure
    else:
        parsed, status = parse_response(raw, prompt.expected_keys)
        raw_text = raw

    return ResponseRecord(
        prompt_id=prompt.prompt_id,
        status=status,
        raw_text=raw_text,
        parsed=parsed,
        attempts=attempts,
        latency_ms=round(latency_ms, 3),
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def run(
    prompts: Sequence[PromptInstance],
    endpoint: EndpointConfig,
    run_dir: str | Path,
    *,
    parallelism: int = 4,
    transport: Transport | None = None,
) -> dict:
    """Query every prompt once, with retries, resumption and bounded parallelism.

    Exactly one final record per prompt_id lands in records.jsonl; reruns
    skip prompt_ids that already have one.  Transport failures after the
    retry budget become ``transport_error`` records, never exceptions.
    """
    if not prompts:
        raise ValueError("no prompts to run")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "manifest.json").write_text(
        json.dumps(
            {"schema_version": 1, "endpoint": endpoint.name, "prompts": len(prompts)},
            ensure_ascii=False,
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    transport = transport or _requests_transport
    done = read_records(run_dir)
    pending = [p for p in prompts if p.prompt_id not in done]

    lock = threading.Lock()
    records_path = run_dir / "records.jsonl"
    # A crash can leave a torn final line; terminate it so appended records
    # start on a fresh line (the torn prompt is simply re-run).
    if records_path.is_file():
        tail = records_path.read_bytes()[-1:]
        if tail and tail != b"\n":
            with records_path.open("a", encoding="utf-8") as fh:
                fh.write("\n")

    def worker(prompt: PromptInstance) -> str:
        record = _query_one(prompt, endpoint, transport)
        with lock:
            with records_path.open("a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
        return record.status

    statuses: list[str] = []
    if pending:
        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            statuses = list(pool.map(worker, pending))

    summary = {
        "endpoint": endpoint.name,
        "total": len(prompts),
        "skipped": len(prompts) - len(pending),
        "ran": len(pending),
    }
    for status in (STATUS_OK, STATUS_EMPTY, STATUS_BAD_PARSING, STATUS_TRANSPORT_ERROR):
        summary[status] = statuses.count(status)
    return summary


# ---------------------------------------------------------------------------
# Error accounting


def summarize_errors(run_dir: str | Path) -> dict:
    """Per-run response error counts: total / empty / bad parsing."""
    run_dir = Path(run_dir)
    manifest = {}
    manifest_path = run_dir / "manifest.json"
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    records = read_records(run_dir)
    return {
        "endpoint": manifest.get("endpoint", run_dir.name),
        "total": len(records),
        "empty": sum(1 for r in records.values() if r.status == STATUS_EMPTY),
        "bad_parsing": sum(1 for r in records.values() if r.status == STATUS_BAD_PARSING),
        "transport_error": sum(
            1 for r in records.values() if r.status == STATUS_TRANSPORT_ERROR
        ),
    }


def error_summary_table(summaries: Iterable[Mapping]) -> str:
    lines = [
        "| Model | Total | Empty Response | Bad Parsing |",
        "| --- | --- | --- | --- |",
    ]
    for s in summaries:
        lines.append(f"| {s['endpoint']} | {s['total']} | {s['empty']} | {s['bad_parsing']} |")
    return "\n".join(lines)

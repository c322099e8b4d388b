"""Prompting, answer extraction, exact-match scoring and reports.

Model calls go through an ``Endpoint``: a live OpenAI-style chat endpoint over
httpx, or a replay cassette (JSON lines keyed by a hash of model and prompt)
that makes evaluation runs reproducible offline.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from .errors import CassetteMiss, ConfigurationError, EndpointError, UnknownQuestion
from .renderer import TemplateTable, default_templates, render_prompt

OPTION_KEYS = "ABCD"
DIMENSIONS = ("model", "domain", "locale", "level", "scenario", "qtype", "hops")

# -- extraction ----------------------------------------------------------------

_SPAN = re.compile(r"【([^【】]{0,500})】|\[([^\[\]]{0,500})\]")
_SEPARATORS = re.compile(r"\s*(?:[,，、;；/&]|\band\b|\bor\b|和|与|及)\s*")
_LETTER_ECHO = re.compile(r"^([A-Z])(?:\s*[.:：．)）]\s*\S.*)?$")
_LETTER_RUN = re.compile(r"^[A-Z](?:\s+[A-Z])*$")


def _interior_keys(interior: str, keys: str) -> Optional[frozenset]:
    text = interior.strip().strip("*").strip()
    if not text:
        return None
    found: set[str] = set()
    for part in _SEPARATORS.split(text):
        part = part.strip()
        if not part:
            continue
        if _LETTER_RUN.match(part):
            letters = part.split()
        elif re.fullmatch(r"[A-Z]{2,4}", part) and list(part) == sorted(set(part)):
            letters = list(part)  # 【AC】
        else:
            m = _LETTER_ECHO.match(part)
            if not m:
                return None
            letters = [m.group(1)]
        if any(ch not in keys for ch in letters):
            return None
        found.update(letters)
    return frozenset(found) if found else None


def extract_answer(response: Any, keys: str = OPTION_KEYS) -> Optional[frozenset]:
    """Option keys in the last well-formed 【...】 or [...] span; None if there is none.

    A span qualifies when its interior is only option letters, separators and
    optional echoes of the option text ("A. Mary").  Never raises.
    """
    if not isinstance(response, str) or not response:
        return None
    spans = list(_SPAN.finditer(response))
    for m in reversed(spans):
        interior = m.group(1) if m.group(1) is not None else m.group(2)
        got = _interior_keys(interior, keys)
        if got is not None:
            return got
    return None


# -- records -------------------------------------------------------------------

@dataclass
class EvalRecord:
    question_id: str
    model: str
    raw_response: Optional[str]
    extracted: Optional[list[str]]  # None means extraction failed
    correct: Optional[bool]  # None when nothing was extracted
    latency_ms: Optional[float] = None
    tokens: Optional[dict] = None
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return asdict(self)


def make_record(question: Mapping, model: str, response: Optional[str], latency_ms: Optional[float] = None,
                tokens: Optional[dict] = None, error: Optional[str] = None) -> EvalRecord:
    keys = "".join(o["key"] for o in question["options"])
    got = extract_answer(response, keys) if response is not None else None
    extracted = sorted(got) if got is not None else None
    correct = extracted == sorted(question["answer"]) if extracted is not None else None
    return EvalRecord(question["id"], model, response, extracted, correct, latency_ms, tokens, error)


def write_eval_records(path: Union[str, Path], records: Iterable[EvalRecord]) -> int:
    from .generator import write_atomic

    lines = [json.dumps(r.as_dict(), ensure_ascii=False, sort_keys=True) + "\n" for r in records]
    write_atomic(path, "".join(lines))
    return len(lines)


def read_eval_records(path: Union[str, Path]) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as fh:
        return [EvalRecord(**json.loads(line)) for line in fh if line.strip()]


# -- scoring -------------------------------------------------------------------

@dataclass
class Cell:
    n: int = 0
    correct: int = 0
    unextracted: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0

    def as_dict(self) -> dict:
        return {"n": self.n, "correct": self.correct, "unextracted": self.unextracted,
                "accuracy": round(self.accuracy, 6)}


@dataclass
class Report:
    overall: Cell = field(default_factory=Cell)
    tables: dict[str, dict[str, Cell]] = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return self.overall.accuracy

    @property
    def unextracted_rate(self) -> float:
        return self.overall.unextracted / self.overall.n if self.overall.n else 0.0

    def as_dict(self) -> dict:
        return {
            "overall": dict(self.overall.as_dict(), unextracted_rate=round(self.unextracted_rate, 6)),
            "tables": {dim: {k: c.as_dict() for k, c in sorted(rows.items())}
                       for dim, rows in sorted(self.tables.items())},
        }


def _dimension_values(record: EvalRecord, question: Mapping) -> dict[str, str]:
    labels = question.get("labels", {})
    return {
        "model": record.model,
        "domain": question.get("domain", ""),
        "locale": question.get("locale", ""),
        "level": (question.get("difficulty") or {}).get("bucket", ""),
        "scenario": question.get("scenario", ""),
        "qtype": labels.get("question_type", ""),
        "hops": str(labels.get("chain_length", "")),
    }


def score(records: Iterable[EvalRecord], questions: Union[Mapping[str, Mapping], Iterable[Mapping]]) -> Report:
    """Exact-set scoring; unextracted answers count as wrong and are tallied separately."""
    if not isinstance(questions, Mapping):
        questions = {q["id"]: q for q in questions}
    report = Report(tables={d: {} for d in DIMENSIONS})
    for r in records:
        q = questions.get(r.question_id)
        if q is None:
            raise UnknownQuestion(f"no question {r.question_id!r} in the dataset")
        unextracted = r.extracted is None
        ok = not unextracted and sorted(r.extracted) == sorted(q["answer"])
        cells = [report.overall] + [report.tables[d].setdefault(v, Cell())
                                    for d, v in _dimension_values(r, q).items()]
        for c in cells:
            c.n += 1
            c.correct += int(ok)
            c.unextracted += int(unextracted)
    return report


def report_json(report: Report) -> str:
    return json.dumps(report.as_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def report_csv(report: Report, by: Sequence[str] = DIMENSIONS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dimension", "value", "n", "correct", "accuracy", "unextracted"])
    o = report.overall.as_dict()
    w.writerow(["overall", "all", o["n"], o["correct"], f"{o['accuracy']:.6f}", o["unextracted"]])
    for dim in by:
        if dim not in report.tables:
            raise ValueError(f"unknown report dimension {dim!r}; choose from {', '.join(DIMENSIONS)}")
        for value, cell in sorted(report.tables[dim].items()):
            d = cell.as_dict()
            w.writerow([dim, value, d["n"], d["correct"], f"{d['accuracy']:.6f}", d["unextracted"]])
    return buf.getvalue()


# -- endpoints -----------------------------------------------------------------

@dataclass
class Completion:
    text: str
    latency_ms: Optional[float] = None
    tokens: Optional[dict] = None


class HttpEndpoint:
    """OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, base_url: str, api_key: str, temperature: float = 0.7, timeout: float = 120,
                 max_tokens: Optional[int] = None, headers: Optional[Mapping[str, str]] = None,
                 transport: Any = None):
        import httpx

        self.url = base_url.rstrip("/") + "/chat/completions"
        self.temperature = temperature
        self.max_tokens = max_tokens
        h = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        h.update(headers or {})
        self._client = httpx.Client(timeout=timeout, headers=h, transport=transport)
        self._httpx = httpx

    @classmethod
    def from_env(cls, base_url: Optional[str], eval_cfg: Mapping, **kw) -> "HttpEndpoint":
        key_var = eval_cfg.get("api_key_env", "SCORE_FORGE_API_KEY")
        key = os.environ.get(key_var)
        if not key:
            raise ConfigurationError(f"live mode needs an API key in ${key_var}")
        url = base_url or os.environ.get(eval_cfg.get("base_url_env", ""), "") or eval_cfg.get("base_url")
        if not url:
            raise ConfigurationError("live mode needs an endpoint url")
        return cls(url, key, temperature=eval_cfg.get("temperature", 0.7), timeout=eval_cfg.get("timeout", 120),
                   max_tokens=eval_cfg.get("max_tokens"), **kw)

    def complete(self, prompt: str, model: str) -> Completion:
        body: dict[str, Any] = {"model": model, "temperature": self.temperature,
                                "messages": [{"role": "user", "content": prompt}]}
        if self.max_tokens:
            body["max_tokens"] = self.max_tokens
        start = time.perf_counter()
        try:
            resp = self._client.post(self.url, json=body)
            resp.raise_for_status()
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (self._httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise EndpointError(f"{type(exc).__name__}: {exc}") from exc
        latency = round((time.perf_counter() - start) * 1000, 3)
        return Completion(text or "", latency, data.get("usage"))


def cassette_key(model: str, prompt: str) -> str:
    return hashlib.sha256(f"{model}\n{prompt}".encode("utf-8")).hexdigest()


class Cassette:
    """Append-only JSON-lines store of responses keyed by (model, prompt)."""

    def __init__(self, path: Optional[Union[str, Path]]):
        self.path = Path(path) if path is not None else None
        self.entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        e = json.loads(line)
                        self.entries[e["key"]] = e

    def lookup(self, model: str, prompt: str) -> Completion:
        e = self.entries.get(cassette_key(model, prompt))
        if e is None:
            raise CassetteMiss(f"no recorded response for model {model!r} and this prompt")
        return Completion(e["response"], e.get("latency_ms"), e.get("tokens"))

    def record(self, model: str, prompt: str, c: Completion, question_id: str = "") -> None:
        e = {"key": cassette_key(model, prompt), "model": model, "question_id": question_id,
             "response": c.text, "latency_ms": c.latency_ms, "tokens": c.tokens}
        with self._lock:
            self.entries[e["key"]] = e
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n")


class ReplayEndpoint:
    def __init__(self, cassette: Cassette):
        self.cassette = cassette

    def complete(self, prompt: str, model: str) -> Completion:
        return self.cassette.lookup(model, prompt)


# -- runs ----------------------------------------------------------------------

def _ask(endpoint: Any, prompt: str, model: str, retries: int, backoff: float) -> Completion:
    for attempt in range(retries):
        try:
            return endpoint.complete(prompt, model)
        except EndpointError:
            if attempt == retries - 1:
                raise
            time.sleep(backoff * (2 ** attempt))
    raise EndpointError("no attempts made")


def run_eval(questions: Sequence[Mapping], endpoint: Any = None, mode: str = "replay",
             cassette: Optional[Union[str, Path, Cassette]] = None, model: str = "model",
             tables: Optional[Mapping[str, TemplateTable]] = None, workers: int = 1,
             retries: int = 3, backoff: float = 2.0) -> list[EvalRecord]:
    """One EvalRecord per question, in input order.

    Replay mode answers from the cassette and raises CassetteMiss on a gap.
    Live mode calls ``endpoint`` and appends each response to the cassette;
    after ``retries`` failed attempts the question gets a failure record.
    """
    if mode not in ("live", "replay"):
        raise ConfigurationError(f"unknown eval mode {mode!r}")
    tape = cassette if isinstance(cassette, Cassette) else Cassette(cassette)
    if mode == "replay":
        if cassette is None or (tape.path is not None and not tape.path.exists()):
            raise ConfigurationError("replay mode needs an existing cassette file")
        endpoint = ReplayEndpoint(tape)
    elif endpoint is None:
        raise ConfigurationError("live mode needs an endpoint")
    tables = tables or default_templates()

    def one(q: Mapping) -> EvalRecord:
        prompt = render_prompt(q, q["locale"], tables[q["locale"]])
        if mode == "replay":
            c = endpoint.complete(prompt, model)
            return make_record(q, model, c.text, c.latency_ms, c.tokens)
        try:
            c = _ask(endpoint, prompt, model, retries, backoff)
        except EndpointError as exc:
            return make_record(q, model, None, error=str(exc))
        tape.record(model, prompt, c, q["id"])
        return make_record(q, model, c.text, c.latency_ms, c.tokens)

    if workers <= 1 or mode == "replay":
        return [one(q) for q in questions]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, questions))

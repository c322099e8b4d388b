"""Command line entry point: ``score-forge <subcommand> ...``.

Errors are reported as one line, ``error: <ExceptionName>: <message>``, with
exit status 2 for usage errors and 1 for everything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import __version__
from .config import default_thresholds, load_config, read_config
from .errors import ScoreForgeError, UsageError
from .generator import (DEFAULT_HOPS, QTYPES, GenerationConfig, calibrate, emit_dataset, generate_records,
                        read_records, replay_answer, replay_space, verify_record, write_atomic)
from .kb import SCHEMA_VERSION, load_kb_path, seed_kb_path, validate
from .reasoner import chain_to_fixpoint, from_axioms, trace_records
from .logic import parse_form
from .renderer import check_templates, default_templates, load_templates

LOCALE_CHOICES = {"en": ("en",), "zh": ("zh",), "both": ("en", "zh")}


class Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def parse_hops(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition("..")
        lo_i, hi_i = int(lo), int(hi or lo)
    except ValueError:
        raise UsageError(f"hop range must look like 2..11, got {text!r}") from None
    if lo_i > hi_i:
        raise UsageError(f"empty hop range {text!r}")
    return lo_i, hi_i


def _split(values: Optional[Sequence[str]]) -> list[str]:
    out: list[str] = []
    for v in values or ():
        out.extend(x for x in v.split(",") if x)
    return out


def _write_or_print(text: str, out: Optional[str]) -> None:
    if out and out != "-":
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _load_kb(args):
    return load_kb_path(args.kb or seed_kb_path())


def _tables(args):
    return load_templates(args.templates) if getattr(args, "templates", None) else default_templates()


def _apply_config(args, cfg: dict, section: str, names: Sequence[str]) -> None:
    """Values from the config file override command-line flags."""
    values = cfg.get(section) or {}
    for name in names:
        if name in values and hasattr(args, name):
            setattr(args, name, values[name])


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args, cfg) -> int:
    kb = load_kb_path(args.path or seed_kb_path())
    findings = validate(kb).findings
    problems = check_templates(kb, _tables(args))
    for f in findings:
        print(f"{f.code}\t{f.subject}\t{f.message}")
    for p in problems:
        print(f"template\t{p}")
    n = len(findings) + len(problems)
    print(f"{len(kb.scenarios)} scenarios, {len(kb.entities)} entities, {len(kb.rules)} rules: "
          f"{'ok' if n == 0 else f'{n} problems'}", file=sys.stderr)
    return 0 if n == 0 else 1


def _generation_config(args, cfg) -> GenerationConfig:
    gen = cfg.get("generation") or {}
    hops = parse_hops(args.hops) if isinstance(args.hops, str) else tuple(args.hops)
    if not args.any_hops and not (DEFAULT_HOPS[0] <= hops[0] and hops[1] <= DEFAULT_HOPS[1]):
        raise UsageError(f"hop range {hops[0]}..{hops[1]} leaves 2..11; pass --any-hops to allow it")
    raw = args.qtype if isinstance(args.qtype, (list, tuple)) else [args.qtype or "mixed"]
    qtypes = QTYPES if raw == ["mixed"] else tuple(_split(raw))
    for q in qtypes:
        if q not in QTYPES:
            raise UsageError(f"unknown question type {q!r}")
    return GenerationConfig(
        seed=int(args.seed),
        scenarios=_split([args.scenario] if isinstance(args.scenario, str) else args.scenario) or None,
        qtypes=qtypes,
        hops=hops,
        target_hops=args.target_hops,
        retries=int(gen.get("retries", args.retries)),
        designs=int(gen.get("designs", 8)),
        thresholds=dict(default_thresholds(), **{k: list(v) for k, v in (cfg.get("thresholds") or {}).items()}),
    )


def cmd_generate(args, cfg) -> int:
    _apply_config(args, cfg, "generation", ("seed", "count", "hops", "qtype", "scenario", "locale", "workers"))
    kb = _load_kb(args)
    config = _generation_config(args, cfg)
    locales = LOCALE_CHOICES.get(args.locale) or tuple(_split([args.locale]))
    records = generate_records(kb, config, int(args.count), locales, workers=int(args.workers),
                               tables=_tables(args))
    if args.out and args.out != "-":
        n = emit_dataset(records, args.out)
    else:
        n = emit_dataset(records, sys.stdout)
    print(f"wrote {n} records (seed {config.seed})", file=sys.stderr)
    return 0


def cmd_solve(args, cfg) -> int:
    kb = _load_kb(args)
    lines, bad = [], 0
    for rec in read_records(args.dataset):
        out = {"id": rec["id"], "recorded": sorted(rec["answer"])}
        try:
            verify_record(kb, rec)
            out.update(verdict="unique", answer=replay_answer(kb, rec), agree=True)
        except ScoreForgeError as exc:
            bad += 1
            out.update(verdict="error", error=f"{type(exc).__name__}: {exc}", agree=False)
        if args.trace:
            space = replay_space(kb, rec)
            fb = from_axioms(kb, space.scenario, rec["puzzle"]["assignment"],
                             [parse_form(s) for s in rec["puzzle"]["statements"]])
            chain_to_fixpoint(fb, kb.rules_for(space.scenario.id))
            out["trace"] = list(trace_records(fb))
        lines.append(json.dumps(out, ensure_ascii=False, sort_keys=True) + "\n")
    _write_or_print("".join(lines), args.out)
    print(f"solved {len(lines)} records, {bad} failed", file=sys.stderr)
    return 0 if bad == 0 else 1


def cmd_eval(args, cfg) -> int:
    from .evalharness import HttpEndpoint, run_eval, write_eval_records

    _apply_config(args, cfg, "eval", ("model", "mode", "workers", "endpoint", "cassette"))
    ev = dict(load_config().get("eval") or {}, **(cfg.get("eval") or {}))
    questions = read_records(args.dataset)
    endpoint = None
    if args.mode == "live":
        endpoint = HttpEndpoint.from_env(args.endpoint, ev)
    records = run_eval(questions, endpoint, mode=args.mode, cassette=args.cassette, model=args.model,
                       tables=_tables(args), workers=int(args.workers), retries=int(ev.get("retries", 3)),
                       backoff=float(ev.get("backoff", 2.0)))
    if args.out and args.out != "-":
        write_eval_records(args.out, records)
    else:
        for r in records:
            sys.stdout.write(json.dumps(r.as_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    failed = sum(1 for r in records if r.extracted is None)
    print(f"evaluated {len(records)} questions, {failed} unextracted", file=sys.stderr)
    return 0


def cmd_report(args, cfg) -> int:
    from .evalharness import DIMENSIONS, read_eval_records, report_csv, report_json, score

    records = read_eval_records(args.records)
    report = score(records, read_records(args.dataset))
    by = _split([args.by]) if args.by else list(DIMENSIONS)
    text = report_csv(report, by) if args.format == "csv" else report_json(report)
    _write_or_print(text, args.out)
    return 0


def cmd_calibrate(args, cfg) -> int:
    _apply_config(args, cfg, "generation", ("seed", "count", "scenario"))
    kb = _load_kb(args)
    config = GenerationConfig(seed=int(args.seed), scenarios=_split(args.scenario) or None)
    thresholds = calibrate(kb, config, int(args.count))
    text = yaml.safe_dump({"thresholds": thresholds}, sort_keys=True)
    _write_or_print(text, args.out)
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> Parser:
    p = Parser(prog="score-forge", description="Compile a commonsense KB into verified reasoning questions.")
    p.add_argument("--version", action="version",
                   version=f"score-forge {__version__} (kb schema {SCHEMA_VERSION})")
    p.add_argument("--config", help="YAML config; its values override flags")
    sub = p.add_subparsers(dest="command", parser_class=Parser)

    v = sub.add_parser("validate-kb", help="check a KB directory or file and its templates")
    v.add_argument("path", nargs="?", help="KB directory or YAML file (default: shipped seed KB)")
    v.add_argument("--templates", help="template directory")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("generate", help="generate questions as JSON lines")
    g.add_argument("--kb", help="KB directory or YAML file")
    g.add_argument("--templates", help="template directory")
    g.add_argument("--scenario", action="append", help="scenario id (repeatable or comma separated)")
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--qtype", default="mixed", help="question type, comma list, or 'mixed'")
    g.add_argument("--hops", default="2..11", help="accepted chain lengths, min..max")
    g.add_argument("--any-hops", action="store_true", help="allow hop ranges outside 2..11")
    g.add_argument("--target-hops", type=int, help="require exactly this chain length")
    g.add_argument("--retries", type=int, default=50)
    g.add_argument("--locale", default="en", help="en, zh or both")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", help="output file (default: stdout)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="replay dataset records through the solver")
    s.add_argument("--dataset", required=True)
    s.add_argument("--kb")
    s.add_argument("--trace", action="store_true", help="include the derivation trace of each record")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="query a model (live) or a cassette (replay)")
    e.add_argument("--dataset", required=True)
    e.add_argument("--endpoint", help="base url of an OpenAI-compatible API")
    e.add_argument("--model", default="model")
    e.add_argument("--mode", choices=("live", "replay"), default="replay")
    e.add_argument("--cassette")
    e.add_argument("--templates")
    e.add_argument("--workers", type=int, default=4)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="score evaluation records")
    r.add_argument("--records", required=True)
    r.add_argument("--dataset", required=True)
    r.add_argument("--by", help="comma list of model,domain,locale,level,scenario,qtype,hops")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("calibrate", help="fit difficulty thresholds on a pilot run")
    c.add_argument("--kb")
    c.add_argument("--scenario", action="append")
    c.add_argument("--count", type=int, default=2000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required")
        cfg = read_config(args.config) if args.config else {}
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return 2
    except ScoreForgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, yaml.YAMLError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime/backend failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .agreement import agreement_report, format_agreement
from .dataset import (
    DEFAULT_RATIOS,
    Record,
    Split,
    load_dataset,
    load_labels,
    split_dataset,
    write_dataset,
)
from .errors import ClaimError, ConfigError, IdMismatch, RuntimeFailure, ValidationError
from .metrics import Task, score_all
from .report import render_text, write_reports
from .runner import ExperimentConfig, run_experiment
from .stats import dialogue_stats
from .transcript import Role, normalize_roles, parse_transcript

log = logging.getLogger("claimkit")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _read_role_map(path: str) -> dict[str, Role]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: role map must be a JSON object of name -> role")
    try:
        return {str(k): Role.parse(str(v)) for k, v in data.items()}
    except ClaimError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_ingest(args: argparse.Namespace) -> int:
    src = Path(args.input)
    files = sorted(p for p in src.iterdir() if p.suffix == ".txt") if src.is_dir() else [src]
    if not files:
        raise ConfigError(f"no .txt transcripts under {src}")
    role_map = _read_role_map(args.role_map) if args.role_map else None

    records = []
    for path in files:
        raw = path.read_text(encoding="utf-8")
        try:
            if role_map is not None:
                d = normalize_roles(raw, role_map, dialogue_id=path.stem, source=args.source)
            else:
                d = parse_transcript(raw, dialogue_id=path.stem, source=args.source)
        except ValidationError as exc:
            exc.args = (f"{path}: {exc}",)
            raise
        records.append(Record(d))
    records.sort(key=lambda r: r.id)
    write_dataset(args.output, records)
    print(f"wrote {len(records)} dialogues to {args.output}")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    split = split_dataset(ds, tuple(args.ratios), args.seed)
    split.save(args.output)
    train, val, test = split.sizes
    print(f"train={train} val={val} test={test} (seed {args.seed}) -> {args.output}")
    return EXIT_OK


_RUN_FLAGS = (
    "setting", "dataset", "output_dir", "backend", "model", "base_url", "api_path", "mock_script",
    "temperature", "max_tokens", "split", "partition", "cache", "concurrency", "budget",
)


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {k: getattr(args, k) for k in _RUN_FLAGS}
    if args.exemplars:
        overrides["exemplar_ids"] = [x.strip() for x in args.exemplars.split(",") if x.strip()]
    if args.config:
        cfg = ExperimentConfig.load(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    result = run_experiment(cfg)
    summary = result.summary()
    print(
        f"predicted={summary['predicted']} failed={summary['failed']} skipped={summary['skipped']} "
        f"backend_calls={summary['backend_calls']} cache_hits={summary['cache_hits']} -> {cfg.output_dir}"
    )
    if result.aborted:
        print("run aborted: request budget exhausted; rerun with the same cache to resume", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _parse_pred_arg(value: str) -> tuple[str, str]:
    name, sep, path = value.partition("=")
    if not sep:
        return Path(value).parent.name or Path(value).stem, value
    return name, path


def cmd_score(args: argparse.Namespace) -> int:
    ds = load_dataset(args.gold)
    if args.split:
        wanted = set(Split.load(args.split).partition(args.partition))
        golds = ds.golds(i for i in ds.ids if i in wanted)
    else:
        golds = ds.golds()

    tables: dict[Task, list] = {t: [] for t in Task}
    for name, path in map(_parse_pred_arg, args.pred):
        preds = load_labels(path)
        extra = set(preds) - set(ds.ids)
        if extra:
            raise IdMismatch(extra=extra)
        preds = {i: p for i, p in preds.items() if i in golds}
        missing = sorted(set(golds) - set(preds))
        if missing:
            log.warning("%s: %d of %d dialogues have no prediction and are not scored: %s",
                        name, len(missing), len(golds), ", ".join(missing[:10]))
        covered = {i: golds[i] for i in preds}
        for task, report in score_all(preds, covered).items():
            tables[task].append((name, report))

    if args.output:
        write_reports(args.output, tables)
    for task in Task:
        print(render_text(task, tables[task]))
    return EXIT_OK


def cmd_agree(args: argparse.Namespace) -> int:
    annotations = {}
    for i, path in enumerate(args.files):
        name = Path(path).stem
        if name in annotations:
            name = f"{name}#{i}"
        annotations[name] = load_labels(path, gold=True)
    report = agreement_report(annotations)
    if args.output:
        Path(args.output).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(format_agreement(report), end="")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    labelled = [r for r in ds if r.label is not None]
    if len(labelled) != len(ds):
        log.warning("%d dialogues without gold labels are left out", len(ds) - len(labelled))
    report = dialogue_stats([r.dialogue for r in labelled], {r.id: r.label for r in labelled})
    text = report.to_csv()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"manipulative={report.manipulative} non_manipulative={report.non_manipulative} -> {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="claimkit", description="Courtroom manipulation analysis toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="convert raw turn-lines transcripts to a JSONL dataset")
    s.add_argument("input", help="a .txt transcript or a directory of them")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--role-map", help="JSON object mapping speaker names to roles")
    s.add_argument("--source", help="provenance tag stored on every record")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("split", help="seeded train/val/test split manifest")
    s.add_argument("dataset")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ratios", type=float, nargs=3, default=list(DEFAULT_RATIOS), metavar=("TRAIN", "VAL", "TEST"))
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("run", help="run one experiment setting")
    s.add_argument("--config", help="JSON config; flags override its fields")
    s.add_argument("--setting", choices=["zero-shot", "few-shot", "stage1-only", "claim"])
    s.add_argument("--dataset")
    s.add_argument("-o", "--output-dir", dest="output_dir")
    s.add_argument("--backend", choices=["openai", "mock"])
    s.add_argument("--model")
    s.add_argument("--base-url", dest="base_url")
    s.add_argument("--api-path", dest="api_path")
    s.add_argument("--mock-script", dest="mock_script")
    s.add_argument("--temperature", type=float)
    s.add_argument("--max-tokens", dest="max_tokens", type=int)
    s.add_argument("--split")
    s.add_argument("--partition", choices=["train", "val", "test"])
    s.add_argument("--exemplars", help="comma-separated ids of the 5 few-shot exemplars")
    s.add_argument("--cache")
    s.add_argument("--concurrency", type=int)
    s.add_argument("--budget", type=int, help="maximum number of backend calls")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="score prediction files against gold labels")
    s.add_argument("--gold", required=True)
    s.add_argument("--pred", required=True, action="append", help="[NAME=]predictions.jsonl, repeatable")
    s.add_argument("--split")
    s.add_argument("--partition", default="test", choices=["train", "val", "test"])
    s.add_argument("-o", "--output", help="directory for CSV/text tables")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("agree", help="inter-annotator agreement over label files")
    s.add_argument("files", nargs="+")
    s.add_argument("-o", "--output", help="write the report as JSON")
    s.set_defaults(func=cmd_agree)

    s = sub.add_parser("stats", help="class, technique, manipulator and length distributions as CSV")
    s.add_argument("dataset")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "agree" and len(args.files) < 2:
        parser.error("agree needs at least 2 annotator files")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: one binary, subcommand per pipeline step.

Every command loads the YAML run config (flag overrides on top), drives
the requested stage(s), and reports progress as line-delimited key=value
pairs. Exit status is 0 only when no record is parked with an error, so
shell pipelines can gate on a fully clean run. Credentials are read from
the environment by the backends, never from flags or config files.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from fractions import Fraction
from typing import Optional, Sequence

import yaml

from .backends import BackendError
from .config import ConfigError, build_backends, parse_config
from .curriculum import (
    CurriculumError,
    CurriculumSpec,
    build_set,
    default_spec,
    emit_training_config,
    ratio_sweep_report,
    write_subset,
)
from .evalbench import EvalError, aggregate_report, evaluate_clip, render_table
from .httpwire import MockServer
from .manifest import Manifest, ManifestError, manifest_stats, overall_row
from .pipeline import MANIFEST_NAME, PipelineError, Runner
from .records import Stage
from .runlog import get_logger, kv_line
from .vlm import DispatchFailed

_ERRORS = (ConfigError, PipelineError, ManifestError, CurriculumError,
           EvalError, BackendError, DispatchFailed, OSError, ValueError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    get_logger()  # install the redacting handler before any backend runs
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(kv_line("error", command=args.command, detail=str(exc)),
              file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print(kv_line("error", command=args.command, detail="interrupted"),
              file=sys.stderr)
        return 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripletforge",
        description="Build and score instruction-edit video triplets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_flags = argparse.ArgumentParser(add_help=False)
    run_flags.add_argument("--config", required=True, help="YAML run config")
    run_flags.add_argument("--workdir", help="override the config workdir")
    run_flags.add_argument("--seed", type=int, help="override the config seed")
    run_flags.add_argument("--workers", type=int, help="override worker count")

    ingest = sub.add_parser("ingest", parents=[run_flags],
                            help="register corpus sources in the manifest")
    ingest.add_argument("--corpus", required=True, help="corpus directory")
    ingest.set_defaults(func=cmd_ingest)

    for name, help_text in (
        ("recaption", "caption keyframes and derive edit instructions"),
        ("edit-first-frame", "run the guidance sweep on first frames"),
        ("screen", "pick the best first-frame candidate per record"),
        ("propagate", "extend chosen edits across real and pair clips"),
        ("synth-static", "render camera-motion clips for static images"),
        ("filter", "judge-score and motion-filter propagated records"),
    ):
        wave = sub.add_parser(name, parents=[run_flags], help=help_text)
        wave.set_defaults(func=cmd_wave, wave=name)

    run_all = sub.add_parser("run-all", parents=[run_flags],
                             help="ingest (optionally) and run every stage")
    run_all.add_argument("--corpus", help="corpus directory to ingest first")
    run_all.set_defaults(func=cmd_run_all)

    resume = sub.add_parser("resume", parents=[run_flags],
                            help="re-drive non-terminal records to completion")
    resume.set_defaults(func=cmd_resume)

    serve = sub.add_parser("mock-serve",
                           help="serve deterministic mock backends over HTTP")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8008)
    serve.set_defaults(func=cmd_mock_serve)

    sets = sub.add_parser("build-sets",
                          help="select curriculum training subsets")
    sets.add_argument("--manifest", required=True, help="scored manifest path")
    sets.add_argument("--out-dir", required=True, help="subset output directory")
    sets.add_argument("--spec", help="YAML list of subset selection rules")
    sets.add_argument("--seed", type=int, default=0)
    sets.set_defaults(func=cmd_build_sets)

    train = sub.add_parser("emit-train-config",
                           help="print hyperparameters for a training stage")
    train.add_argument("--stage", required=True, choices=("S1", "S2", "S3"))
    train.add_argument("--out", help="write to this file instead of stdout")
    train.set_defaults(func=cmd_emit_train_config)

    ratio = sub.add_parser("ratio-report",
                           help="subset statistics per static:real mix")
    ratio.add_argument("--manifest", required=True)
    ratio.add_argument("--ratios", default="0:1,1:2,1:1,2:1,5:1",
                       help="comma-separated static:real ratios")
    ratio.add_argument("--min-gpt", type=int, default=4)
    ratio.add_argument("--max-epe", type=float, default=1.0)
    ratio.add_argument("--seed", type=int, default=0)
    ratio.set_defaults(func=cmd_ratio_report)

    ev = sub.add_parser("eval", parents=[run_flags],
                        help="score accepted records with benchmark metrics")
    ev.add_argument("--manifest", help="defaults to the workdir manifest")
    ev.add_argument("--method", default="ours", help="row label in the report")
    ev.add_argument("--report", required=True, help="JSON report output path")
    ev.set_defaults(func=cmd_eval)

    stats = sub.add_parser("stats", help="per-group score statistics")
    stats.add_argument("--manifest", help="manifest path")
    stats.add_argument("--config", help="run config (uses its workdir manifest)")
    stats.add_argument("--by", default="kind", choices=("kind", "origin"))
    stats.set_defaults(func=cmd_stats)

    return parser


# -- shared plumbing -------------------------------------------------------


def _load_runner(args: argparse.Namespace) -> Runner:
    config = parse_config(args.config)
    overrides = {}
    if args.workdir is not None:
        overrides["workdir"] = args.workdir
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = replace(config, **overrides)
    return Runner(config, build_backends(config))


def _finish(runner: Runner) -> int:
    progress = runner.progress()
    print(kv_line("progress", **progress))
    return 0 if progress["errors"] == 0 else 1


# -- pipeline commands -----------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    runner = _load_runner(args)
    runner.ingest_corpus(args.corpus)
    return _finish(runner)


def cmd_wave(args: argparse.Namespace) -> int:
    runner = _load_runner(args)
    report = {
        "recaption": runner.wave_caption,
        "edit-first-frame": runner.wave_edit,
        "screen": runner.wave_screen,
        "propagate": runner.wave_propagate,
        "synth-static": runner.wave_synth_static,
        "filter": runner.wave_filter,
    }[args.wave]()
    print(kv_line("wave", name=args.wave, processed=report.processed,
                  parked=report.parked))
    return _finish(runner)


def cmd_run_all(args: argparse.Namespace) -> int:
    runner = _load_runner(args)
    runner.run_all(corpus_dir=args.corpus)
    return _finish(runner)


def cmd_resume(args: argparse.Namespace) -> int:
    runner = _load_runner(args)
    runner.resume()
    return _finish(runner)


def cmd_mock_serve(args: argparse.Namespace) -> int:
    server = MockServer(host=args.host, port=args.port)
    print(kv_line("serving", address=server.address))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


# -- dataset commands ------------------------------------------------------


def _parse_ratio(text: str) -> Fraction:
    static_part, sep, real_part = text.partition(":")
    if not sep:
        raise ValueError(f"ratio must look like 'static:real', got {text!r}")
    static, real = int(static_part), int(real_part)
    if real <= 0:
        raise ValueError(f"real side of ratio must be positive, got {text!r}")
    return Fraction(static, real)


def _accepted_records(manifest_path: str):
    records = Manifest.open(manifest_path).scan()
    return [rec for rec in records if rec.stage is Stage.FILTERED_ACCEPT]


def _load_subset_specs(path: Optional[str]) -> list[CurriculumSpec]:
    if path is None:
        return [default_spec(name) for name in ("S1", "S2", "S3")]
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, list) or not raw:
        raise CurriculumError("subset spec file must hold a non-empty list")
    specs = []
    for entry in raw:
        if not isinstance(entry, dict) or "name" not in entry:
            raise CurriculumError(f"bad subset entry: {entry!r}")
        known = {"name", "min_gpt", "max_epe", "ratio", "target_size"}
        unknown = set(entry) - known
        if unknown:
            raise CurriculumError(f"unknown subset keys: {sorted(unknown)}")
        ratio = entry.get("ratio")
        specs.append(CurriculumSpec(
            name=str(entry["name"]),
            min_gpt=int(entry.get("min_gpt", 1)),
            max_epe=float(entry.get("max_epe", float("inf"))),
            static_real_ratio=_parse_ratio(str(ratio)) if ratio is not None else None,
            target_size=int(entry["target_size"]) if entry.get("target_size") is not None else None,
        ))
    return specs


def cmd_build_sets(args: argparse.Namespace) -> int:
    records = _accepted_records(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)
    for spec in _load_subset_specs(args.spec):
        subset, header = build_set(records, spec, seed=args.seed)
        out_path = os.path.join(args.out_dir, f"{spec.name}.jsonl")
        if os.path.exists(out_path):
            raise CurriculumError(f"subset already exists: {out_path}")
        write_subset(out_path, subset, header)
        achieved = header["achieved"]
        print(kv_line("subset", name=spec.name, path=out_path,
                      count=achieved["count"], ratio=achieved["ratio"],
                      mean_gpt=_fmt(achieved["mean_gpt"]),
                      mean_epe=_fmt(achieved["mean_epe"])))
    return 0


def cmd_emit_train_config(args: argparse.Namespace) -> int:
    text = emit_training_config(args.stage).to_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(kv_line("written", path=args.out))
    else:
        print(text, end="")
    return 0


def cmd_ratio_report(args: argparse.Namespace) -> int:
    records = _accepted_records(args.manifest)
    ratios = [_parse_ratio(part) for part in args.ratios.split(",") if part]
    rows = ratio_sweep_report(records, ratios, min_gpt=args.min_gpt,
                              max_epe=args.max_epe, seed=args.seed)
    for row in rows:
        print(kv_line("ratio", **{key: _fmt(value) for key, value in row.items()}))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    runner = _load_runner(args)
    manifest_path = args.manifest or runner.manifest_path()
    accepted = _accepted_records(manifest_path)
    if not accepted:
        raise EvalError(f"no accepted records in {manifest_path}")
    workdir = runner.config.workdir
    rows = []
    for rec in accepted:
        rows.append(evaluate_clip(
            os.path.join(workdir, rec.source_clip.path),
            os.path.join(workdir, rec.edited_clip.path),
            rec.instruction,
            runner.backends,
            method=args.method,
            clip_id=rec.id,
        ))
    report = aggregate_report(rows)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    print(render_table(report))
    print(kv_line("report", path=args.report, methods=len(report.methods),
                  clips=len(rows)))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    if bool(args.manifest) == bool(args.config):
        raise ConfigError("pass exactly one of --manifest or --config")
    path = args.manifest
    if path is None:
        config = parse_config(args.config)
        path = os.path.join(config.workdir, MANIFEST_NAME)
    records = Manifest.open(path).scan()
    rows = manifest_stats(records, by=args.by)
    for row in rows + [overall_row(rows)]:
        print(kv_line("stats", group=row.label, count=row.count,
                      mean_gpt=_fmt(row.mean_gpt), mean_epe=_fmt(row.mean_epe)))
    return 0


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.2f}"
    return value


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point.

Exit codes: 0 success, 1 data or runtime error, 2 usage or config
error.  Every subcommand prints one JSON summary line on success so
wrapping scripts can parse results without scraping logs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from refground.audit import (
    AuditSession,
    audit_report,
    export_verified,
    load_triplets,
    render_audit_csv,
)
from refground.backend import BackendError
from refground.config import ConfigError, validate_config
from refground.pipeline import (
    run_analyze,
    run_evaluate,
    run_extract,
    run_synthesize,
    run_verify,
)


def _add_config_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", required=True, type=Path, help="pipeline config (TOML)"
    )


def _parse_annotators(value: str) -> tuple[str, ...]:
    names = tuple(name.strip() for name in value.split(",") if name.strip())
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refground",
        description="Referring grounding data pipeline: extract, synthesize, "
        "verify, analyze, evaluate, audit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="derive candidate pools from the manifest")
    _add_config_argument(p)

    p = sub.add_parser("synthesize", help="draft queries for each pool")
    _add_config_argument(p)

    p = sub.add_parser("verify", help="run the verification stages over drafts")
    _add_config_argument(p)

    p = sub.add_parser("analyze", help="semantic metrics over accepted triplets")
    _add_config_argument(p)
    p.add_argument(
        "--split",
        default=None,
        help="split label for triplets missing one (default: train)",
    )

    p = sub.add_parser("evaluate", help="score predictions against triplets")
    _add_config_argument(p)
    p.add_argument(
        "--predictions",
        required=True,
        type=Path,
        help="JSONL with keys id and output per line",
    )

    p = sub.add_parser("audit-serve", help="serve the human audit API")
    p.add_argument("--triplets", required=True, type=Path)
    p.add_argument("--images", required=True, type=Path, help="image corpus root")
    p.add_argument("--log", required=True, type=Path, help="append-only vote log")
    p.add_argument(
        "--annotators", required=True, help="comma separated, exactly three names"
    )
    p.add_argument("--static", default=None, type=Path, help="built UI directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", default=8321, type=int)

    p = sub.add_parser("export", help="export audit-accepted triplets")
    p.add_argument("--triplets", required=True, type=Path)
    p.add_argument("--log", required=True, type=Path)
    p.add_argument(
        "--annotators", required=True, help="comma separated, exactly three names"
    )
    p.add_argument("--out", required=True, type=Path, help="output JSONL path")
    p.add_argument(
        "--report", default=None, type=Path, help="also write the audit CSV here"
    )

    return parser


def _audit_session(args: argparse.Namespace) -> AuditSession:
    if not args.triplets.is_file():
        raise ValueError(f"triplets file not found: {args.triplets}")
    triplets = load_triplets(
        args.triplets.read_text(encoding="utf-8").splitlines()
    )
    return AuditSession(
        triplets,
        annotators=_parse_annotators(args.annotators),
        log_path=args.log,
    )


def _cmd_audit_serve(args: argparse.Namespace) -> dict[str, object]:
    import uvicorn

    from refground.audit_server import create_app

    session = _audit_session(args)
    app = create_app(session, image_root=args.images, static_dir=args.static)
    print(
        json.dumps(
            {
                "command": "audit-serve",
                "triplets": len(session.triplets),
                "url": f"http://{args.host}:{args.port}/",
            }
        ),
        flush=True,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"command": "audit-serve", "stopped": True}


def _cmd_export(args: argparse.Namespace) -> dict[str, object]:
    session = _audit_session(args)
    payload = export_verified(session)
    args.out.write_text(payload, encoding="utf-8")
    if args.report is not None:
        args.report.write_text(
            render_audit_csv(audit_report(session)), encoding="utf-8"
        )
    exported = sum(1 for line in payload.splitlines() if line.strip())
    return {
        "command": "export",
        "reviewed": len(session.triplets),
        "exported": exported,
        "out": str(args.out),
    }


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "extract":
            summary = run_extract(validate_config(args.config))
            if summary["errors"]:
                # Per-record failures are a data error even though the
                # good records were extracted; the log names each one.
                print(json.dumps(summary), flush=True)
                print(
                    f"error: {summary['errors']} manifest record(s) failed; "
                    "see errors_extract.jsonl in the output directory",
                    file=sys.stderr,
                )
                return 1
        elif args.command == "synthesize":
            summary = run_synthesize(validate_config(args.config))
        elif args.command == "verify":
            summary = run_verify(validate_config(args.config))
        elif args.command == "analyze":
            summary = run_analyze(validate_config(args.config), split=args.split)
        elif args.command == "evaluate":
            summary = run_evaluate(validate_config(args.config), args.predictions)
        elif args.command == "audit-serve":
            summary = _cmd_audit_serve(args)
        else:
            summary = _cmd_export(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())

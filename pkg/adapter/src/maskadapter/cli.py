"""Command-line entry points.

    adapter convert --results r.json --frames dir --out manifest.json
    adapter check --manifest m.json

Exit codes: 0 success, 1 itemized conversion or check failures, 2 bad usage.
"""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, convert, roundtrip_check


def _cmd_convert(args) -> int:
    manifest, errors = convert(args.results, args.frames, args.out)
    if errors:
        for line in errors:
            print(f"error: {line}", file=sys.stderr)
        print(f"{len(errors)} errors, manifest not written", file=sys.stderr)
        return 1
    print(f"wrote {args.out}: {len(manifest['detections'])} detections "
          f"over {len(manifest['frames'])} frames")
    return 0


def _cmd_check(args) -> int:
    report = roundtrip_check(args.manifest)
    for line in report["mismatches"]:
        print(f"mismatch: {line}", file=sys.stderr)
    print(f"checked {report['checked']} masks, "
          f"{len(report['mismatches'])} mismatches, {report['skipped']} skipped")
    return 1 if report["mismatches"] else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapter",
        description="Convert detector segmentation results into pipeline manifests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convert", help="results JSON + frames directory -> manifest")
    conv.add_argument("--results", required=True, help="COCO-style results JSON")
    conv.add_argument("--frames", required=True, help="directory of frame images")
    conv.add_argument("--out", required=True, help="manifest path to write")
    conv.set_defaults(func=_cmd_convert)

    check = sub.add_parser("check", help="re-decode every manifest mask two ways")
    check.add_argument("--manifest", required=True, help="manifest to verify")
    check.set_defaults(func=_cmd_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Verbs: label, agree, feature-effects, paraphrase-spread, consistency,
split-select, report. All read the experiment manifest; failures exit
nonzero with a machine-readable JSON error on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import pipeline
from .manifest import load_manifest


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmjudge",
        description="Label search results with an LLM endpoint and measure the labels.",
    )
    parser.add_argument("--manifest", required=True, help="experiment manifest (JSON)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override every seed in the manifest")
    parser.add_argument("--mock", action="store_true",
                        help="use the deterministic mock endpoint instead of HTTP")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument(
        "command",
        choices=["label", "agree", "feature-effects", "paraphrase-spread",
                 "consistency", "split-select", "report"],
    )
    return parser


def _apply_overrides(manifest, args) -> None:
    if args.out is not None:
        manifest.out_dir = args.out
    if args.seed is not None:
        manifest.sample.seed = args.seed
        manifest.mock.seed = args.seed
        manifest.bootstrap = dataclasses.replace(manifest.bootstrap, seed=args.seed)
        manifest.split_seed = args.seed


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        manifest = load_manifest(args.manifest)
        _apply_overrides(manifest, args)
        if args.command == "label":
            summary = pipeline.cmd_label(manifest, mock=args.mock)
            print(f"labelled {summary.scored}/{summary.requested} items "
                  f"({summary.dropped} dropped) into {len(summary.files)} file(s)")
        elif args.command == "agree":
            result = pipeline.cmd_agree(manifest)
            print(f"agreement table: {len(result['rows'])} row(s)")
        elif args.command == "feature-effects":
            result = pipeline.cmd_feature_effects(manifest)
            deltas = ", ".join(f"{r['feature']}{r['delta_kappa']:+.3f}"
                               for r in result["rows"])
            print(f"feature effects: {deltas}")
        elif args.command == "paraphrase-spread":
            result = pipeline.cmd_paraphrase_spread(manifest)
            band = result["band"]
            print(f"{len(result['rows'])} variant(s); pooled band "
                  f"{band['lo']:.3f}-{band['hi']:.3f}")
        elif args.command == "consistency":
            result = pipeline.cmd_consistency(manifest)
            print(f"consistency table: {len(result['rows'])} row(s)")
        elif args.command == "split-select":
            result = pipeline.cmd_split_select(manifest)
            print(f"split selection: best beat {result['baseline']} in "
                  f"{result['wins_vs_baseline']}/{result['n_iter']} iterations")
        elif args.command == "report":
            path = pipeline.cmd_report(manifest)
            print(f"report written to {path}")
    except Exception as e:  # surface everything as machine-readable JSON
        error = {"error": type(e).__name__, "message": str(e), "command": args.command}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

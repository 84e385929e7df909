"""Command line for the embedding exporter."""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .exporter import ExportError, ExportJob, export_embeddings
from .store_format import StoreFormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed a name list with a pre-trained text-embedding model "
        "and write a .ebed store file.",
    )
    parser.add_argument("--input", required=True, help="name list, one normalized name per line")
    parser.add_argument("--model", required=True, help="sentence-transformers model id or local path")
    parser.add_argument("--out", required=True, help="output .ebed path")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--no-normalize", action="store_true", help="keep raw vector norms")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        input_path=args.input,
        model_id=args.model,
        output_path=args.out,
        batch_size=args.batch_size,
        normalize=not args.no_normalize,
    )
    try:
        summary = export_embeddings(job)
    except (ExportError, StoreFormatError) as exc:
        print(f"embed-export: error: {exc}", file=sys.stderr)
        return 1
    print(
        f"embedded {summary.names_embedded} names at dim {summary.dim} "
        f"in {summary.duration_s:.1f}s -> {args.out}"
    )
    print(f"provenance: {summary.provenance}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

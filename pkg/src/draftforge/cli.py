"""Command line entry points: serve, corpus gen, eval summarize."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import corpus, stats


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.load(args.config)
    app = create_app(config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port)
    return 0


def _cmd_corpus_gen(args: argparse.Namespace) -> int:
    generated = corpus.generate_corpus(
        fixtures=args.fixtures,
        n_pairs=args.pairs,
        n_events=args.events,
        seed=args.seed,
    )
    extraction = [
        (dialogue, event)
        for dialogue, event in zip(generated.dialogues, generated.events)
    ][: args.events]
    manifest = corpus.export_datasets(
        generated.pairs, extraction, args.out, manifest=generated.manifest
    )
    print(f"wrote {manifest.pairs} denoise pairs and {len(extraction)} extraction records")
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    return 0


def _cmd_eval_summarize(args: argparse.Namespace) -> int:
    raw = Path(args.scores).read_text(encoding="utf-8")
    results = stats.summarize(stats.read_scores(raw))
    print(stats.render_table(results), end="")
    if args.usability:
        ratings, minutes = [], []
        for line in Path(args.usability).read_text(encoding="utf-8").splitlines()[1:]:
            rating, saved = line.split(",")
            ratings.append(float(rating))
            minutes.append(float(saved))
        summary = stats.usability(ratings, minutes, baseline_minutes=args.baseline_minutes)
        print(f"\nmean rating: {summary.mean_rating:.2f} / 5")
        print(f"mean minutes saved per report: {summary.mean_minutes_saved:.2f}")
        if summary.percent_of_baseline_time is not None:
            print(f"share of baseline writing time saved: {summary.percent_of_baseline_time:.2f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="draftforge")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", required=True, help="YAML service config")
    serve.set_defaults(func=_cmd_serve)

    corpus_parser = sub.add_parser("corpus", help="corpus pipeline commands")
    corpus_sub = corpus_parser.add_subparsers(dest="corpus_command", required=True)
    gen = corpus_sub.add_parser("gen", help="generate and export the training corpus")
    gen.add_argument("--fixtures", default=None, help="case fixture dir/file (default: bundled)")
    gen.add_argument("--pairs", type=int, default=500)
    gen.add_argument("--events", type=int, default=200)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_corpus_gen)

    eval_parser = sub.add_parser("eval", help="evaluation harness commands")
    eval_sub = eval_parser.add_subparsers(dest="eval_command", required=True)
    summarize = eval_sub.add_parser("summarize", help="summarize rubric scores")
    summarize.add_argument("--scores", required=True, help="CSV of rubric scores")
    summarize.add_argument("--usability", default=None, help="CSV of rating,minutes_saved rows")
    summarize.add_argument("--baseline-minutes", type=float, default=None)
    summarize.set_defaults(func=_cmd_eval_summarize)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

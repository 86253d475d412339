"""Command-line surface: anonymize, mask, evaluate.

The adapter endpoint can come from --backend host:port or from the
FACEVEIL_ADAPTER_ENDPOINT environment variable (--backend adapter).
Exit code is 0 only when every image in the batch succeeded.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .backends.wire import ENDPOINT_ENV_VAR
from .metrics import DEFAULT_REID_THRESHOLD
from .pipeline import RunConfig, run_anonymize, run_evaluate, run_mask
from .sampler import DEFAULT_GUIDANCE_STRENGTH
from .schedule import DEFAULT_ETA, DEFAULT_REVERSE_STEPS, DEFAULT_TRAIN_STEPS


def _regions(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _add_backend_flag(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--backend",
        default="toy",
        help="'toy', 'adapter' (endpoint from %s), or host:port"
        % ENDPOINT_ENV_VAR,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faceveil",
        description="Face anonymization by guided latent resampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    anon = sub.add_parser(
        "anonymize", help="anonymize a batch of face images"
    )
    anon.add_argument("--input", nargs="+", required=True,
                      help="input PNG path(s)")
    anon.add_argument("--target", default=None,
                      help="attribute-target image; omit for unguided runs")
    anon.add_argument("--pairs", default=None,
                      help="per-image target mapping file")
    _add_backend_flag(anon)
    anon.add_argument("--lambda", dest="guidance_strength", type=float,
                      default=DEFAULT_GUIDANCE_STRENGTH,
                      help="guidance strength")
    anon.add_argument("--steps", type=int, default=DEFAULT_REVERSE_STEPS,
                      help="reverse steps")
    anon.add_argument("--train-steps", type=int, default=DEFAULT_TRAIN_STEPS,
                      help="schedule length")
    anon.add_argument("--eta", type=float, default=DEFAULT_ETA,
                      help="stochasticity of the reverse process")
    anon.add_argument("--seed", type=int, default=0, help="batch base seed")
    anon.add_argument("--keep-regions", type=_regions, default=(),
                      metavar="eyes,lips,...",
                      help="regions excluded from editing")
    anon.add_argument("--composite-background",
                      action=argparse.BooleanOptionalAction, default=True,
                      help="paste generated pixels only inside the mask")
    anon.add_argument("--dilate", type=int, default=0,
                      help="mask dilation radius in pixels")
    anon.add_argument("--label-map", default=None,
                      help="JSON label-map file (defaults built in)")
    anon.add_argument("--workers", type=int, default=1,
                      help="parallel images (backend permitting)")
    anon.add_argument("--out", required=True, help="output directory")

    mask = sub.add_parser("mask", help="write parse map and mask for a file")
    mask.add_argument("--input", required=True, help="input PNG path")
    mask.add_argument("--keep-regions", type=_regions, default=(),
                      metavar="eyes,lips,...")
    mask.add_argument("--dilate", type=int, default=0)
    mask.add_argument("--label-map", default=None)
    _add_backend_flag(mask)
    mask.add_argument("--out", required=True, help="output directory")

    ev = sub.add_parser("evaluate", help="compare originals vs anonymized")
    ev.add_argument("--originals", required=True)
    ev.add_argument("--anonymized", required=True)
    _add_backend_flag(ev)
    ev.add_argument("--threshold", type=float,
                    default=DEFAULT_REID_THRESHOLD,
                    help="re-identification similarity threshold")
    ev.add_argument("--out", default=None, help="report file to write")
    return parser


def _cmd_anonymize(args) -> int:
    config = RunConfig(
        inputs=tuple(args.input),
        out_dir=args.out,
        target=args.target,
        pairs=args.pairs,
        backend=args.backend,
        guidance_strength=args.guidance_strength,
        eta=args.eta,
        train_steps=args.train_steps,
        reverse_steps=args.steps,
        seed=args.seed,
        keep_regions=args.keep_regions,
        composite_background=args.composite_background,
        dilate=args.dilate,
        label_map=args.label_map,
        workers=args.workers,
    )
    batch = run_anonymize(config)
    for result in batch.results:
        if result.ok:
            print(f"ok    {result.name} -> {result.output}")
        else:
            print(f"error {result.name}: {result.error}")
    print(f"manifest: {batch.manifest_path}")
    return 0 if batch.all_ok else 1


def _cmd_mask(args) -> int:
    parse_path, mask_path = run_mask(
        args.input,
        args.out,
        keep_regions=args.keep_regions,
        label_map_path=args.label_map,
        dilate_radius=args.dilate,
        backend=args.backend,
    )
    print(f"parse map: {parse_path}")
    print(f"mask:      {mask_path}")
    return 0


def _cmd_evaluate(args) -> int:
    report = run_evaluate(
        args.originals,
        args.anonymized,
        backend=args.backend,
        threshold=args.threshold,
        report_path=args.out,
    )
    print(report.table())
    if report.unmatched_originals or report.unmatched_anonymized:
        skipped = report.unmatched_originals + report.unmatched_anonymized
        print(f"skipped unmatched: {', '.join(skipped)}")
    if args.out:
        print(f"report: {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handlers = {
        "anonymize": _cmd_anonymize,
        "mask": _cmd_mask,
        "evaluate": _cmd_evaluate,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end demo on the analytic toy backend.

Synthesizes a handful of 8x8 "faces", anonymizes them against a random
target image, then evaluates originals vs outputs. Everything lands
under --workdir so the artifacts (PNGs, manifest, report) can be
inspected afterwards. No weights, no network; runs in well under a
second.

    python3 scripts/toy_demo.py --workdir /tmp/faceveil_demo
"""

import argparse
from pathlib import Path

import numpy as np

from faceveil import imgio
from faceveil.pipeline import RunConfig, run_anonymize, run_evaluate


def synthesize_inputs(directory: Path, count: int, seed: int) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        image = np.clip(rng.standard_normal((8, 8)) * 0.4, -1.0, 1.0)
        path = directory / f"face_{i:02d}.png"
        imgio.save_image(path, image)
        paths.append(str(path))
    return paths


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="demo_out")
    parser.add_argument("--count", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lambda", dest="strength", type=float, default=0.8)
    args = parser.parse_args()

    work = Path(args.workdir)
    inputs = synthesize_inputs(work / "inputs", args.count, args.seed)
    target_rng = np.random.default_rng(args.seed + 1)
    target_path = work / "target.png"
    imgio.save_image(
        target_path,
        np.clip(target_rng.standard_normal((8, 8)) * 0.4, -1.0, 1.0),
    )

    out_dir = work / "anonymized"
    batch = run_anonymize(
        RunConfig(
            inputs=tuple(inputs),
            out_dir=str(out_dir),
            target=str(target_path),
            guidance_strength=args.strength,
            seed=args.seed,
        )
    )
    for result in batch.results:
        status = "ok" if result.ok else f"error: {result.error}"
        print(f"  {result.name:14s} {status}")
    print(f"manifest: {batch.manifest_path}")

    report = run_evaluate(
        str(work / "inputs"),
        str(out_dir),
        report_path=str(work / "report.txt"),
    )
    print()
    print(report.table())
    print(f"report: {work / 'report.txt'}")
    return 0 if batch.all_ok else 1


if __name__ == "__main__":
    raise SystemExit(main())

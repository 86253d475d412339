"""Sweep the guidance strength and watch the attribute loss respond.

For each strength value the sampler runs over a batch of seeds with a
noise-replay denoiser (the analytic mean-collapsing toy is inert to
guidance by construction, so the replay variant is what shows the
effect). Reports the mean final attribute loss toward the target and
the mean cosine similarity to the original latent. With matplotlib
installed, --plot writes a PNG of loss vs strength; the table always
prints.

    python3 scripts/guidance_sweep.py --seeds 20
"""

import argparse

import numpy as np

from faceveil.backends import (
    Conditioning,
    FixedNoiseDenoiser,
    ToyAttributeScorer,
    ToyCodec,
)
from faceveil.metrics import cosine_similarity
from faceveil.sampler import SamplerConfig, anonymize_latent
from faceveil.schedule import build_schedule, plan_timesteps


def run_once(strength: float, seed: int, schedule, plan, codec, scorer,
             target: np.ndarray) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    z0 = codec.encode(
        np.clip(np.random.default_rng(seed + 2**20)
                .standard_normal(codec.image_shape) * 0.4, -1.0, 1.0)
    )
    eps = rng.standard_normal(codec.latent_shape)
    out = anonymize_latent(
        z0,
        Conditioning(latent=z0),
        target,
        plan,
        schedule,
        FixedNoiseDenoiser(eps),
        scorer,
        SamplerConfig(guidance_strength=strength, seed=seed),
        rng=np.random.default_rng(seed),
    )
    loss, _ = scorer.loss_and_grad(out, target)
    return loss, cosine_similarity(out.ravel(), z0.ravel())


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument(
        "--strengths", type=float, nargs="+",
        default=[0.0, 0.2, 0.4, 0.8, 1.6, 3.2],
    )
    parser.add_argument("--steps", type=int, default=45)
    parser.add_argument("--plot", default=None,
                        help="write a loss-vs-strength PNG here")
    args = parser.parse_args()

    schedule = build_schedule(1000, 0.00085, 0.012)
    plan = plan_timesteps(schedule, args.steps, 1.0)
    codec = ToyCodec()
    scorer = ToyAttributeScorer(codec=codec)
    target = np.clip(
        np.random.default_rng(99).standard_normal(codec.image_shape) * 0.4,
        -1.0, 1.0,
    )

    print(f"{'lambda':>8s} {'mean loss':>12s} {'mean cos(out, z0)':>18s}")
    mean_losses = []
    for strength in args.strengths:
        rows = [
            run_once(strength, seed, schedule, plan, codec, scorer, target)
            for seed in range(args.seeds)
        ]
        losses, sims = zip(*rows)
        mean_losses.append(float(np.mean(losses)))
        print(f"{strength:8.2f} {np.mean(losses):12.6f} "
              f"{np.mean(sims):18.6f}")

    if args.plot:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not installed; skipping plot")
            return 0
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(args.strengths, mean_losses, marker="o")
        ax.set_xlabel("guidance strength")
        ax.set_ylabel("mean final attribute loss")
        ax.set_title(f"{args.seeds} seeds, {args.steps} steps")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"plot: {args.plot}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

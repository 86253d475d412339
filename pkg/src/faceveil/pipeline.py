"""Batch orchestration: mask, anonymize, composite, evaluate.

Everything the CLI does lives here so it stays importable and testable.
A batch is reproducible from its manifest: the config hash pins every
semantic knob (output directory and worker count deliberately excluded,
so the same run into a different directory compares equal), the base
seed is mixed with each input's filename to give per-image seeds, and
on the toy backend equal (hash, seed) means bitwise-equal outputs.

Manifest format: a plain-text document of sections. `[run]` holds the
batch configuration; one `[image <name>]` section per input follows in
input order, each a block of `key = value` lines in fixed order. A
failed image gets `status = error` and the message; it never aborts
the rest of the batch.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from .backends.contracts import Conditioning
from .backends.toy import (
    ToyAttributeScorer,
    ToyCodec,
    ToyDenoiser,
    ToyFaceParser,
    ToyIdentityEmbedder,
)
from .backends.wire import RemoteBackend
from .masking import (
    FaceMask,
    LabelMap,
    apply_mask,
    composite,
    dilate_mask,
    full_face_mask,
    load_label_map,
    localized_mask,
    save_mask,
    save_parse_map,
)
from .metrics import (
    DEFAULT_REID_THRESHOLD,
    SsimParams,
    activation_stats,
    cosine_similarity,
    frechet_distance,
    reid_rate_from_similarities,
    ssim,
)
from .sampler import SamplerConfig, anonymize_latent
from .schedule import (
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_ETA,
    DEFAULT_REVERSE_STEPS,
    DEFAULT_TRAIN_STEPS,
    build_schedule,
    plan_timesteps,
)

log = logging.getLogger("faceveil")

MANIFEST_SCHEMA = "faceveil-manifest-v1"


@dataclass(frozen=True)
class RunConfig:
    """One anonymization batch. Without a target image the run is
    unguided (vanilla inpainting-style resampling); with one, the
    guidance loop steers attributes toward it."""

    inputs: tuple[str, ...]
    out_dir: str
    target: str | None = None
    pairs: str | None = None
    backend: str = "toy"
    guidance_strength: float = 0.8
    eta: float = DEFAULT_ETA
    train_steps: int = DEFAULT_TRAIN_STEPS
    reverse_steps: int = DEFAULT_REVERSE_STEPS
    seed: int = 0
    keep_regions: tuple[str, ...] = ()
    composite_background: bool = True
    dilate: int = 0
    label_map: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("at least one input image is required")
        if self.guidance_strength < 0.0:
            raise ValueError("guidance strength must be >= 0")
        if self.eta < 0.0:
            raise ValueError("eta must be >= 0")
        if self.train_steps < 1:
            raise ValueError("train steps must be >= 1")
        if not 1 <= self.reverse_steps <= self.train_steps:
            raise ValueError(
                f"reverse steps must be in 1..{self.train_steps}, "
                f"got {self.reverse_steps}"
            )
        if self.dilate < 0:
            raise ValueError("dilation radius must be >= 0")
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")


def config_hash(config: RunConfig) -> str:
    """Hex digest over the semantic fields of a run configuration.

    out_dir and workers are excluded: where outputs land and how many
    threads produced them never changes what the outputs are.
    """
    payload = {
        "schema": MANIFEST_SCHEMA,
        "inputs": list(config.inputs),
        "target": config.target,
        "pairs": config.pairs,
        "backend": config.backend,
        "guidance_strength": config.guidance_strength,
        "eta": config.eta,
        "train_steps": config.train_steps,
        "reverse_steps": config.reverse_steps,
        "seed": config.seed,
        "keep_regions": list(config.keep_regions),
        "composite_background": config.composite_background,
        "dilate": config.dilate,
        "label_map": config.label_map,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def per_image_seed(base_seed: int, input_id: str) -> int:
    """Derive a stable 64-bit per-image seed from the batch seed and
    the input's filename."""
    digest = hashlib.sha256(f"{base_seed}:{input_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


# -- backend bundles ----------------------------------------------------


@dataclass(frozen=True)
class BackendBundle:
    codec: object
    denoiser: object
    scorer: object
    parser: object
    embedder: object
    concurrent_safe: bool


def make_backend(name: str, schedule) -> BackendBundle:
    """Resolve a backend selector: "toy", "adapter" (endpoint from the
    environment), or an explicit host:port endpoint."""
    if name == "toy":
        codec = ToyCodec()
        return BackendBundle(
            codec=codec,
            denoiser=ToyDenoiser(schedule),
            scorer=ToyAttributeScorer(codec=codec),
            parser=ToyFaceParser(),
            embedder=ToyIdentityEmbedder(),
            concurrent_safe=True,
        )
    if name == "adapter":
        remote = RemoteBackend()
    elif ":" in name:
        remote = RemoteBackend(name)
    else:
        raise ValueError(
            f"unknown backend {name!r}: expected 'toy', 'adapter', or host:port"
        )
    return BackendBundle(
        codec=remote,
        denoiser=remote,
        scorer=remote,
        parser=remote,
        embedder=remote,
        concurrent_safe=remote.concurrent_safe,
    )


def _load_label_map(path: str | None) -> LabelMap:
    if path is None:
        return LabelMap()
    return load_label_map(path)


# -- manifest ------------------------------------------------------------


def write_manifest(path, run_section: dict, image_sections: list):
    lines = ["[run]"]
    for key, value in run_section.items():
        lines.append(f"{key} = {value}")
    for name, section in image_sections:
        lines.append("")
        lines.append(f"[image {name}]")
        for key, value in section.items():
            lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> tuple[dict, dict]:
    """Parse a manifest back into (run section, {image name: section});
    every value comes back as a string."""
    run: dict = {}
    images: dict = {}
    current = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "[run]":
            current = run
        elif line.startswith("[image ") and line.endswith("]"):
            name = line[len("[image "):-1]
            current = {}
            images[name] = current
        elif " = " in line and current is not None:
            key, value = line.split(" = ", 1)
            current[key] = value
        elif line.endswith(" =") and current is not None:
            # empty value: the writer's trailing space was stripped
            current[line[: -len(" =")]] = ""
        else:
            raise ValueError(f"unparseable manifest line: {raw!r}")
    return run, images


# -- anonymize -----------------------------------------------------------


@dataclass
class ImageResult:
    name: str
    ok: bool
    error: str = ""
    output: str = ""
    seed: int = 0
    editable_fraction: float = 0.0
    kept_regions: tuple[str, ...] = ()
    seconds: float = 0.0


@dataclass
class BatchResult:
    manifest_path: str
    results: list[ImageResult] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.results)


def _build_mask(parse, keep_regions, label_map, dilate_radius) -> FaceMask:
    if keep_regions:
        mask = localized_mask(parse, keep_regions, label_map)
    else:
        mask = full_face_mask(parse, label_map)
    if dilate_radius > 0:
        mask = dilate_mask(mask, dilate_radius)
    return mask


def _latent_mask(mask: FaceMask, latent_shape) -> np.ndarray | None:
    """Mask as an extra conditioning channel when the latent grid has
    the same spatial extent; adapters with downsampled latents receive
    no mask channel from this pipeline."""
    if tuple(latent_shape[-2:]) == mask.mask.shape:
        return mask.mask.astype(np.float64)[None]
    return None


def _load_pairs_file(path: str) -> dict:
    """Pairing file: one `input filename = target path` line per image;
    blank lines and # comments ignored."""
    mapping = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if " = " not in line:
            raise ValueError(f"unparseable pairs line: {raw!r}")
        name, target = line.split(" = ", 1)
        mapping[name.strip()] = target.strip()
    return mapping


def run_anonymize(config: RunConfig) -> BatchResult:
    """Anonymize every input; per-image failures are recorded, not
    propagated. Returns results in input order plus the manifest path."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schedule = build_schedule(
        config.train_steps, DEFAULT_BETA_START, DEFAULT_BETA_END
    )
    plan = plan_timesteps(schedule, config.reverse_steps, config.eta)
    bundle = make_backend(config.backend, schedule)
    label_map = _load_label_map(config.label_map)
    digest = config_hash(config)

    pair_targets = _load_pairs_file(config.pairs) if config.pairs else {}

    def target_path_for(name: str) -> str | None:
        return pair_targets.get(name, config.target)

    # Targets are preloaded once so worker threads only read; a target
    # that fails to load poisons exactly the images referring to it.
    target_cache: dict = {}
    for path in {target_path_for(Path(p).name) for p in config.inputs}:
        if path is None:
            continue
        try:
            target_cache[path] = imgio.load_image(path)
        except Exception as exc:
            target_cache[path] = exc

    def target_for(name: str):
        path = target_path_for(name)
        if path is None:
            return None, None
        loaded = target_cache[path]
        if isinstance(loaded, Exception):
            raise ValueError(f"target {path}: {loaded}")
        return path, loaded

    def process(input_path: str) -> ImageResult:
        name = Path(input_path).name
        seed = per_image_seed(config.seed, name)
        result = ImageResult(name=name, ok=False, seed=seed)
        started = time.perf_counter()
        try:
            image = imgio.load_image(input_path)
            parse = bundle.parser.parse(image)
            mask = _build_mask(parse, config.keep_regions, label_map,
                               config.dilate)
            if not mask.mask.any():
                log.warning("%s: editable mask is empty", name)
            masked = apply_mask(image, mask)
            cond = Conditioning(
                latent=bundle.codec.encode(masked),
                mask=_latent_mask(mask, bundle.codec.latent_shape),
            )
            z0 = bundle.codec.encode(image)
            target_path, target_image = target_for(name)
            sampler_config = SamplerConfig(
                guidance_strength=config.guidance_strength,
                eta=config.eta,
                seed=seed,
                guidance_enabled=target_image is not None,
            )
            out_latent = anonymize_latent(
                z0,
                cond,
                target_image,
                plan,
                schedule,
                bundle.denoiser,
                bundle.scorer if target_image is not None else None,
                sampler_config,
                rng=np.random.default_rng(seed),
            )
            generated = bundle.codec.decode(out_latent)
            if config.composite_background:
                output_image = composite(image, generated, mask)
            else:
                output_image = generated
            output_path = out_dir / name
            imgio.save_image(output_path, output_image)
            result.ok = True
            result.output = str(output_path)
            result.editable_fraction = mask.editable_fraction()
            result.kept_regions = tuple(config.keep_regions)
        except Exception as exc:
            result.error = str(exc)
            log.error("%s: %s", name, exc)
        result.seconds = time.perf_counter() - started
        return result

    workers = config.workers if bundle.concurrent_safe else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, config.inputs))
    else:
        results = [process(path) for path in config.inputs]

    run_section = {
        "schema": MANIFEST_SCHEMA,
        "config_hash": digest,
        "backend": config.backend,
        "guidance_strength": config.guidance_strength,
        "eta": config.eta,
        "train_steps": config.train_steps,
        "reverse_steps": config.reverse_steps,
        "seed": config.seed,
        "keep_regions": ",".join(config.keep_regions),
        "composite_background": config.composite_background,
        "dilate": config.dilate,
        "target": config.target or "",
        "pairs": config.pairs or "",
        "images_ok": sum(r.ok for r in results),
        "images_failed": sum(not r.ok for r in results),
    }
    image_sections = []
    for input_path, result in zip(config.inputs, results):
        section = {
            "input": input_path,
            "target": target_path_for(result.name) or "",
            "seed": result.seed,
            "kept_regions": ",".join(result.kept_regions),
            "editable_fraction": f"{result.editable_fraction:.6f}",
            "output": result.output,
            "seconds": f"{result.seconds:.3f}",
            "status": "ok" if result.ok else "error",
        }
        if not result.ok:
            section["error"] = result.error
        image_sections.append((result.name, section))
    manifest_path = out_dir / "manifest.txt"
    write_manifest(manifest_path, run_section, image_sections)
    return BatchResult(manifest_path=str(manifest_path), results=results)


# -- mask inspection ------------------------------------------------------


def run_mask(
    input_path: str,
    out_dir: str,
    keep_regions: tuple[str, ...] = (),
    label_map_path: str | None = None,
    dilate_radius: int = 0,
    backend: str = "toy",
) -> tuple[str, str]:
    """Write the parse map and binary mask for one input, for
    inspection. Returns (parse path, mask path)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schedule = build_schedule(DEFAULT_TRAIN_STEPS, DEFAULT_BETA_START,
                              DEFAULT_BETA_END)
    bundle = make_backend(backend, schedule)
    label_map = _load_label_map(label_map_path)
    image = imgio.load_image(input_path)
    parse = bundle.parser.parse(image)
    mask = _build_mask(parse, keep_regions, label_map, dilate_radius)
    if not mask.mask.any():
        log.warning("%s: editable mask is empty", Path(input_path).name)
    stem = Path(input_path).stem
    parse_path = out / f"{stem}_parse.png"
    mask_path = out / f"{stem}_mask.png"
    save_parse_map(parse_path, parse)
    save_mask(mask_path, mask)
    return str(parse_path), str(mask_path)


# -- evaluation ------------------------------------------------------------


@dataclass
class PairMetrics:
    name: str
    similarity: float
    ssim: float


@dataclass
class EvaluationReport:
    threshold: float
    pairs: list[PairMetrics]
    reid: float
    mean_ssim: float
    fid: float | None
    unmatched_originals: list[str]
    unmatched_anonymized: list[str]

    def table(self) -> str:
        fid_text = f"{self.fid:.4f}" if self.fid is not None else ""
        header = "| Re-ID  | FID     | V-DNA | SSIM   |"
        rule = "|--------|---------|-------|--------|"
        row = (
            f"| {self.reid:.4f} | {fid_text:7s} |       | "
            f"{self.mean_ssim:.4f} |"
        )
        return "\n".join([header, rule, row])


def _ssim_params_for(shape) -> SsimParams:
    limit = min(shape)
    window = min(11, limit if limit % 2 == 1 else limit - 1)
    return SsimParams(window_size=max(window, 1))


def run_evaluate(
    originals_dir: str,
    anonymized_dir: str,
    backend: str = "toy",
    threshold: float = DEFAULT_REID_THRESHOLD,
    report_path: str | None = None,
) -> EvaluationReport:
    """Compare same-named PNGs across two directories.

    Per pair: identity-embedding cosine similarity and SSIM. Across the
    set: Re-ID rate at the threshold, mean SSIM, and (with at least two
    pairs) the Fréchet distance between embedding statistics. Files
    present on one side only are listed and skipped.
    """
    orig_dir = Path(originals_dir)
    anon_dir = Path(anonymized_dir)
    originals = {p.name: p for p in sorted(orig_dir.glob("*.png"))}
    anonymized = {p.name: p for p in sorted(anon_dir.glob("*.png"))}
    names = sorted(originals.keys() & anonymized.keys())
    unmatched_orig = sorted(originals.keys() - anonymized.keys())
    unmatched_anon = sorted(anonymized.keys() - originals.keys())
    for name in unmatched_orig + unmatched_anon:
        log.warning("unmatched file skipped: %s", name)
    if not names:
        raise ValueError("no matching file names between the two directories")

    schedule = build_schedule(DEFAULT_TRAIN_STEPS, DEFAULT_BETA_START,
                              DEFAULT_BETA_END)
    bundle = make_backend(backend, schedule)

    pairs = []
    orig_embeddings = []
    anon_embeddings = []
    for name in names:
        x = imgio.load_image(originals[name])
        y = imgio.load_image(anonymized[name])
        emb_x = bundle.embedder.embed(x)
        emb_y = bundle.embedder.embed(y)
        orig_embeddings.append(emb_x)
        anon_embeddings.append(emb_y)
        pairs.append(
            PairMetrics(
                name=name,
                similarity=cosine_similarity(emb_x, emb_y),
                ssim=ssim(x, y, _ssim_params_for(x.shape)),
            )
        )

    sims = [p.similarity for p in pairs]
    fid = None
    if len(pairs) >= 2:
        fid = frechet_distance(
            activation_stats(np.asarray(orig_embeddings)),
            activation_stats(np.asarray(anon_embeddings)),
        )
    report = EvaluationReport(
        threshold=threshold,
        pairs=pairs,
        reid=reid_rate_from_similarities(sims, threshold),
        mean_ssim=float(np.mean([p.ssim for p in pairs])),
        fid=fid,
        unmatched_originals=unmatched_orig,
        unmatched_anonymized=unmatched_anon,
    )
    if report_path is not None:
        _write_report(report_path, report)
    return report


def _write_report(path, report: EvaluationReport):
    lines = ["[report]"]
    lines.append(f"pairs = {len(report.pairs)}")
    lines.append(f"threshold = {report.threshold}")
    lines.append(f"reid_rate = {report.reid:.6f}")
    lines.append(
        f"fid = {report.fid:.6f}" if report.fid is not None else "fid = "
    )
    lines.append("vdna = ")
    lines.append(f"mean_ssim = {report.mean_ssim:.6f}")
    lines.append("")
    lines.append(report.table())
    lines.append("")
    for pair in report.pairs:
        lines.append(f"[pair {pair.name}]")
        lines.append(f"similarity = {pair.similarity:.6f}")
        lines.append(f"ssim = {pair.ssim:.6f}")
        lines.append("")
    for name in report.unmatched_originals:
        lines.append(f"unmatched_original = {name}")
    for name in report.unmatched_anonymized:
        lines.append(f"unmatched_anonymized = {name}")
    Path(path).write_text("\n".join(lines).rstrip() + "\n", encoding="utf-8")

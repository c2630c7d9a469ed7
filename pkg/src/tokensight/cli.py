"""Command-line entry points: partition, attribute, metrics, hallucinate,
synth-bench, and the local serving mode."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click

from .bundle import load_bundle, write_bundle
from .config import ORACLE_URL_ENV, YESNO_PROMPT_TEMPLATE, RunConfig
from .hallucination import (
    amcr,
    counterfactual_attribute,
    csr_at_budget,
    load_cases,
    minimal_correction,
)
from .imgio import ImageLoadError, load_image, save_gray_png, save_png
from .metrics import GroundTruthRegion, pointing_game
from .oracle import OracleError, Scene
from .partition import RegionPartition, rasterize_saliency
from .render import boundary_overlay, heatmap_overlay, token_report_html
from .runner import make_gateway, resolve_targets, run_attribution
from .slico import slico_partition


def _parse_fill(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3:
        raise click.BadParameter("fill must be R,G,B")
    return tuple(parts)  # type: ignore[return-value]


def _merged_config(
    config_path, oracle_url, synthetic_json, regions, iterations, fill, out, budget,
    influence_variant, objective_mode, amcr_mode,
) -> RunConfig:
    base = RunConfig.from_json_file(config_path) if config_path else RunConfig()
    oracle = base.oracle
    if oracle_url:
        oracle = dataclasses.replace(oracle, endpoint=oracle_url, synthetic=None)
    if synthetic_json:
        descriptor = json.loads(synthetic_json)
        oracle = dataclasses.replace(
            oracle, synthetic=descriptor, endpoint=None, max_in_flight=1
        )
    updates: dict = {"oracle": oracle}
    if regions is not None:
        updates["region_count"] = regions
    if iterations is not None:
        updates["slico_iterations"] = iterations
    if fill is not None:
        updates["fill"] = _parse_fill(fill)
    if out is not None:
        updates["output_dir"] = out
    if budget is not None:
        updates["budget"] = budget
    if influence_variant is not None:
        updates["influence_variant"] = influence_variant
    if objective_mode is not None:
        updates["objective_mode"] = objective_mode
    if amcr_mode is not None:
        updates["amcr_mode"] = amcr_mode
    return dataclasses.replace(base, **updates)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Run-config JSON file.")
@click.option("--oracle-url", envvar=ORACLE_URL_ENV, default=None, help="Probability-oracle endpoint URL.")
@click.option("--synthetic", "synthetic_json", default=None, help="Inline JSON descriptor of a synthetic oracle.")
@click.option("--regions", type=int, default=None, help="Requested superpixel count.")
@click.option("--iterations", type=int, default=None, help="Segmentation iterations.")
@click.option("--fill", default=None, help="Mask fill color as R,G,B.")
@click.option("--out", default=None, help="Output directory.")
@click.option("--budget", type=int, default=None, help="Greedy budget (defaults to all regions).")
@click.option("--influence-variant", type=click.Choice(["body", "algorithm1"]), default=None)
@click.option("--objective-mode", type=click.Choice(["both", "insight", "necessity"]), default=None)
@click.option("--amcr-mode", type=click.Choice(["area", "count"]), default=None)
@click.pass_context
def main(ctx, config_path, oracle_url, synthetic_json, regions, iterations, fill, out,
         budget, influence_variant, objective_mode, amcr_mode):
    """Black-box region attribution for autoregressive multimodal models."""
    try:
        ctx.obj = _merged_config(
            config_path, oracle_url, synthetic_json, regions, iterations, fill, out,
            budget, influence_variant, objective_mode, amcr_mode,
        )
    except (ValueError, json.JSONDecodeError) as exc:
        raise click.UsageError(str(exc)) from exc


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_scene(config: RunConfig, image_path: str) -> Scene:
    try:
        image = load_image(image_path)
    except ImageLoadError as exc:
        raise click.ClickException(str(exc)) from exc
    if config.region_count > image.width * image.height:
        raise click.UsageError(
            f"--regions {config.region_count} exceeds pixel count of {image_path}"
        )
    partition = slico_partition(image, config.region_count, config.slico_iterations)
    return Scene(image=image, partition=partition, fill=config.fill)


@main.command()
@click.argument("image_path", type=click.Path())
@click.pass_obj
def partition(config: RunConfig, image_path):
    """Partition an image into superpixel regions."""
    scene = _load_scene(config, image_path)
    out = _out_dir(config)
    scene.partition.save(out / "partition.json")
    save_png(boundary_overlay(scene.image, scene.partition), out / "partition_preview.png")
    click.echo(
        f"partitioned {image_path} into {scene.partition.region_count} regions "
        f"-> {out / 'partition.json'}"
    )


@main.command()
@click.argument("image_path", type=click.Path())
@click.option("--prompt", default=None, help="Prompt for generation-backed targeting.")
@click.option("--generated-ids", default=None, help="Comma-separated generated token ids.")
@click.option("--target", "explicit_targets", multiple=True, help="Target as pos or pos:vocab_id (repeatable).")
@click.option("--words", default=None, help="Comma-separated words to attribute.")
@click.option("--all-tokens", is_flag=True, help="Attribute every generated token.")
@click.option("--sensitive-only", is_flag=True, help="Keep only tokens sensitive to full-image masking.")
@click.option("--threshold", type=float, default=None, help="Sensitivity threshold.")
@click.option("--max-tokens", type=int, default=64)
@click.pass_obj
def attribute(config: RunConfig, image_path, prompt, generated_ids, explicit_targets,
              words, all_tokens, sensitive_only, threshold, max_tokens):
    """Run the full attribution pipeline and write a result bundle."""
    scene = _load_scene(config, image_path)
    gateway = make_gateway(config, scene.partition)
    if not explicit_targets and not words and not all_tokens and not sensitive_only:
        raise click.UsageError(
            "select targets via --target, --words, --all-tokens, or --sensitive-only"
        )
    if prompt is None and generated_ids is None:
        raise click.UsageError("provide --prompt or --generated-ids")
    ids = [int(t) for t in generated_ids.split(",")] if generated_ids else None
    try:
        targets = resolve_targets(
            gateway,
            scene,
            prompt or "",
            explicit=list(explicit_targets) or None,
            generated_ids=ids,
            words=[w.strip() for w in words.split(",")] if words else None,
            all_tokens=all_tokens,
            sensitive_only=sensitive_only,
            threshold=threshold if threshold is not None else config.sensitive_threshold,
            max_tokens=max_tokens,
        )
    except (ValueError, IndexError) as exc:
        raise click.UsageError(str(exc)) from exc
    except OracleError as exc:
        raise click.ClickException(str(exc)) from exc

    out = _out_dir(config)
    scene.partition.save(out / "partition.json")
    try:
        run = run_attribution(
            gateway, scene, targets, config,
            image_ref=str(image_path), partition_ref="partition.json",
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    except OracleError as exc:
        raise click.ClickException(str(exc)) from exc

    write_bundle(run.bundle, out / "bundle.json")
    save_gray_png(run.saliency.scores, out / "saliency.png")
    raw_by_region = [None] * scene.partition.region_count
    for rank, region in enumerate(run.attribution.order):
        raw_by_region[region] = run.attribution.raw_scores[rank]
    write_bundle(
        {
            "region_scores": run.attribution.region_scores(),
            "raw_scores_by_region": raw_by_region,
        },
        out / "saliency.json",
    )
    save_png(heatmap_overlay(scene.image, run.saliency, alpha=0.5), out / "overlay.png")
    report = token_report_html(
        tokens=[str(t) for t in targets.generated_ids],
        positions=list(targets.positions()),
        influence_norm=list(run.influence_norm),
    )
    (out / "tokens.html").write_text(report)
    click.echo(
        f"attribution order {list(run.attribution.order)[:8]}... "
        f"insertion AUC {run.bundle['curves']['insertion']['auc']:.4f} "
        f"-> {out / 'bundle.json'}"
    )


@main.command()
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), default=None)
@click.option("--partition", "partition_path", type=click.Path(exists=True), default=None)
@click.option("--truth", "truth_path", type=click.Path(exists=True), default=None)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="JSON list of {bundle, partition, truth} sample records.")
@click.pass_obj
def metrics(config: RunConfig, bundle_path, partition_path, truth_path, manifest_path):
    """Compute faithfulness and localization metrics from stored bundles."""
    if manifest_path:
        samples = json.loads(Path(manifest_path).read_text())
        root = Path(manifest_path).parent
    elif bundle_path and partition_path:
        samples = [{"bundle": bundle_path, "partition": partition_path, "truth": truth_path}]
        root = Path(".")
    else:
        raise click.UsageError("provide --manifest or --bundle with --partition")

    per_sample = []
    for record in samples:
        try:
            sample = _sample_metrics(root, record)
        except (OSError, KeyError, ValueError) as exc:
            raise click.ClickException(f"sample {record}: {exc}") from exc
        per_sample.append(sample)

    aggregate = _aggregate_metrics(per_sample)
    out = _out_dir(config)
    report = {"samples": per_sample, "aggregate": aggregate}
    write_bundle(report, out / "metrics.json")
    click.echo(json.dumps(aggregate, indent=2, sort_keys=True))


def _sample_metrics(root: Path, record: dict) -> dict:
    bundle = load_bundle(root / record["bundle"])
    partition = RegionPartition.load(root / record["partition"])
    sample = {
        "bundle": str(record["bundle"]),
        "insertion_auc": bundle["curves"]["insertion"]["auc"],
        "deletion_auc": bundle["curves"]["deletion"]["auc"],
        "avg_highest": bundle["curves"]["average_highest"],
        "pointing": None,
    }
    truth_ref = record.get("truth")
    if truth_ref:
        truth_rec = json.loads((root / truth_ref).read_text())
        saliency = rasterize_saliency(partition, bundle["attribution"]["region_scores"])
        pointing: dict = {"bbox_hit": None, "mask_hit": None, "point": None}
        if truth_rec.get("bbox"):
            box = truth_rec["bbox"]
            truth = GroundTruthRegion.from_dict(
                {"bbox": box} if isinstance(box, list) else box
            )
            result = pointing_game(saliency, partition, truth)
            pointing["bbox_hit"] = result.hit
            pointing["point"] = list(result.point)
        if truth_rec.get("mask"):
            truth = GroundTruthRegion.from_dict({"kind": "mask", **truth_rec["mask"]})
            result = pointing_game(saliency, partition, truth)
            pointing["mask_hit"] = result.hit
            pointing["point"] = list(result.point)
        sample["pointing"] = pointing
    return sample


def _aggregate_metrics(samples: list[dict]) -> dict:
    def mean_of(key):
        values = [s[key] for s in samples]
        return sum(values) / len(values)

    def rate_of(kind):
        hits = [
            s["pointing"][kind]
            for s in samples
            if s["pointing"] and s["pointing"][kind] is not None
        ]
        return (sum(1 for h in hits if h) / len(hits)) if hits else None

    return {
        "sample_count": len(samples),
        "insertion_auc": mean_of("insertion_auc"),
        "deletion_auc": mean_of("deletion_auc"),
        "avg_highest": mean_of("avg_highest"),
        "pointing_bbox": rate_of("bbox_hit"),
        "pointing_mask": rate_of("mask_hit"),
    }


@main.command()
@click.argument("case_file", type=click.Path(exists=True))
@click.option("--budget", "csr_budget", type=float, default=0.10, show_default=True)
@click.option("--use-template/--no-template", default=True,
              help="Wrap questions in the yes/no VQA prompt template.")
@click.pass_obj
def hallucinate(config: RunConfig, case_file, csr_budget, use_template):
    """Counterfactually attribute hallucination cases and search corrections."""
    cases = load_cases(case_file)
    if not cases:
        raise click.UsageError(f"no cases in {case_file}")
    root = Path(case_file).parent
    outcomes = []
    records = []
    for case in cases:
        image_path = Path(case.image_ref)
        if not image_path.is_absolute():
            image_path = root / image_path
        scene = _load_scene(config, str(image_path))
        gateway = make_gateway(config, scene.partition)
        prompt = (
            YESNO_PROMPT_TEMPLATE.format(question=case.question)
            if use_template
            else case.question
        )
        try:
            attribution = counterfactual_attribute(gateway, scene, case, prompt)
            outcome = minimal_correction(
                gateway, scene, case, attribution,
                amcr_mode=config.amcr_mode, prompt=prompt,
            )
        except OracleError as exc:
            raise click.ClickException(str(exc)) from exc
        outcomes.append(outcome)
        records.append({"case": case.to_dict(), "outcome": outcome.to_dict()})

    report = {
        "cases": records,
        "aggregate": {
            "amcr": amcr(outcomes),
            f"csr_at_{int(csr_budget * 100)}pct": csr_at_budget(outcomes, csr_budget),
            "case_count": len(outcomes),
        },
    }
    out = _out_dir(config)
    write_bundle(report, out / "hallucination.json")
    click.echo(json.dumps(report["aggregate"], indent=2, sort_keys=True))


@main.command("synth-bench")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--trials", type=int, default=10, show_default=True)
@click.pass_obj
def synth_bench(config: RunConfig, seed, trials):
    """Run the synthetic benchmark families and print a summary."""
    from .bench import run_benchmarks

    report = run_benchmarks(seed=seed, trials=trials)
    out = _out_dir(config)
    write_bundle(report, out / "synth_bench.json")
    for name, entry in sorted(report["benchmarks"].items()):
        status = "ok" if entry["passed"] else "FAILED"
        click.echo(f"{name:<28} {status}  {entry['detail']}")
    if not report["all_passed"]:
        raise click.ClickException("synthetic benchmarks failed")


@main.command()
@click.option("--port", type=int, default=8337, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory of explorer UI assets to serve.")
@click.pass_obj
def serve(config: RunConfig, port, host, static_dir):
    """Serve the attribution API (and the explorer UI when assets exist)."""
    import uvicorn

    from .server import create_app

    app = create_app(config, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()

"""Command-line interface.

Workflow: ``igcip phantom gen`` writes a phantom population to a data
directory, ``igcip study run`` assembles the dataset from it and executes one
sensitivity study into a JSON report, ``igcip stats`` flattens a report into
CSV tables, ``igcip rate serve`` builds blinded rating sets from one or more
reports and serves the rating API, and ``igcip rate summarize`` aggregates a
finished rating session.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .harness.dataset import generate_phantom_population, load_phantom_dir, prepare_dataset, save_phantom_dir
from .harness.groups import full_scale_manifest, uniform_manifest
from .harness.ratings import (
    ControlParams,
    load_rating_records,
    load_rating_sets,
    make_rating_sets,
    save_rating_sets,
    summarize_ratings,
)
from .harness.server import serve
from .harness.studies import StudyParams, boxplot_csv, load_report, run_study, save_report, stats_csv
from .phantom import PhantomSpec

FULL_SCALE_COUNT = len(full_scale_manifest())


@click.group()
def main():
    """Validation toolkit for image-guided cochlear-implant programming."""


@main.group()
def phantom():
    """Phantom population generation."""


@phantom.command("gen")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Phantom generator parameters as JSON (defaults used when omitted).")
@click.option("--count", type=click.IntRange(min=1), default=FULL_SCALE_COUNT, show_default=True,
              help="Number of specimens.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--manifest", "manifest_kind", type=click.Choice(["auto", "full", "uniform"]),
              default="auto", show_default=True,
              help="Specimen manifest: the bundled full-scale one (requires the matching count) "
                   "or a uniform post-implantation-only one.")
@click.option("--pre-uct", is_flag=True, default=False,
              help="Give uniform-manifest specimens pre-implantation imaging as well.")
def phantom_gen(spec_path, count, seed, out_dir, manifest_kind, pre_uct):
    """Generate a seeded phantom population with its specimen manifest."""
    spec = PhantomSpec() if spec_path is None else PhantomSpec.from_dict(json.loads(Path(spec_path).read_text()))
    if manifest_kind == "full" or (manifest_kind == "auto" and count == FULL_SCALE_COUNT):
        if count != FULL_SCALE_COUNT:
            raise click.UsageError(f"the full-scale manifest has {FULL_SCALE_COUNT} specimens, got --count {count}")
        manifest = full_scale_manifest()
    else:
        manifest = uniform_manifest(count, pre_uct=pre_uct)
    phantoms = generate_phantom_population(spec, count, seed)
    save_phantom_dir(out_dir, phantoms, manifest, spec)
    click.echo(f"wrote {count} specimens to {out_dir}")


@main.group()
def study():
    """Sensitivity studies."""


@study.command("run")
@click.option("--study", "study_id", type=click.Choice(["a", "b", "c"]), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Cost and frequency-map parameters as JSON (defaults used when omitted).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--no-localize", is_flag=True, default=False,
              help="Skip the automatic localization pipeline (study b only).")
def study_run(study_id, data_dir, params_path, seed, out_path, no_localize):
    """Assemble the dataset from a phantom directory and run one study."""
    if no_localize and study_id != "b":
        raise click.UsageError("--no-localize is only valid for study b")
    params = StudyParams() if params_path is None else StudyParams.from_dict(json.loads(Path(params_path).read_text()))
    phantoms, manifest, spec = load_phantom_dir(data_dir)
    dataset = prepare_dataset(phantoms, manifest, seed, spec=spec, localize=not no_localize)
    report = run_study(study_id, dataset, params, seed)
    save_report(report, out_path)
    click.echo(f"study {study_id}: {len(report.cells)} cells -> {out_path}")


@main.command("stats")
@click.option("--report", "report_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--boxplot-out", "boxplot_path", type=click.Path(dir_okay=False), default=None,
              help="Boxplot-stats CSV path (default: <out> with a .boxplot.csv suffix).")
def stats_cmd(report_path, out_path, boxplot_path):
    """Flatten a study report into per-cell and boxplot CSV tables."""
    report = load_report(report_path)
    out_path = Path(out_path)
    out_path.write_text(stats_csv(report))
    boxplot_path = Path(boxplot_path) if boxplot_path else out_path.with_suffix(".boxplot.csv")
    boxplot_path.write_text(boxplot_csv(report))
    click.echo(f"wrote {out_path} and {boxplot_path}")


@main.group()
def rate():
    """Blinded rating workflow."""


@rate.command("serve")
@click.option("--report", "report_paths", type=click.Path(exists=True, dir_okay=False),
              multiple=True, required=True, help="Study report(s); repeat for several studies.")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "records_path", type=click.Path(dir_okay=False), required=True,
              help="JSON-lines file rating records append to.")
@click.option("--sets-out", "sets_path", type=click.Path(dir_okay=False), default=None,
              help="Where to persist the rating sets (default: sets.json next to --out).")
@click.option("--gamma", type=float, default=1.0, show_default=True,
              help="Control configurations must reach (1 + gamma) times the reference cost.")
def rate_serve(report_paths, port, seed, records_path, sets_path, gamma):
    """Build blinded rating sets from reports and serve the rating API."""
    reports = [load_report(p) for p in report_paths]
    sets = make_rating_sets(reports, ControlParams(gamma=gamma), seed)
    sets_path = Path(sets_path) if sets_path else Path(records_path).parent / "sets.json"
    save_rating_sets(sets, sets_path)
    click.echo(f"{len(sets)} rating sets -> {sets_path}; serving on port {port}")
    serve(sets, records_path, port=port)


@rate.command("summarize")
@click.option("--ratings", "ratings_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--sets", "sets_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the summary JSON here.")
def rate_summarize(ratings_path, sets_path, out_path):
    """Aggregate rating records into category counts and acceptance rates."""
    records = load_rating_records(ratings_path)
    sets = load_rating_sets(sets_path)
    summary = summarize_ratings(records, sets)
    text = json.dumps(summary, indent=2)
    click.echo(text)
    if out_path:
        Path(out_path).write_text(text + "\n")


if __name__ == "__main__":
    main()

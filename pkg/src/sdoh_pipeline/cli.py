"""Command-line surface: one subcommand per pipeline stage.

Every command is a pure function of its inputs (files, flags, seeds,
cassettes): run twice with the same inputs, it writes byte-identical
outputs.  Against a strict-replay cassette no command touches the network.
Failures exit nonzero with a structured JSON error on stderr, and
configuration problems are caught before any model call.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import augmenter, datastore, demo, metrics, optimizer, quality, serde
from .annotator import (
    CascadeError,
    CascadePrograms,
    annotate_cascade,
    annotate_eviction,
    annotate_non_eviction,
)
from .errors import ConfigError, PipelineError
from .gateway import Cassette, CassetteMode, Gateway, HttpBackend
from .ingest import KeywordTable, NotePool, ingest_file, keyword_scan
from .optimizer import LabeledExample, OptimizeConfig
from .programs import (
    binary_program,
    eviction_program,
    load_program,
    non_eviction_program,
    save_program,
)
from .taxonomy import (
    DEFAULT_TAXONOMY,
    EVICTION_LABELS,
    NON_EVICTION_LABELS,
    is_eviction_related,
)

LABELSETS = {
    "eviction": tuple(lab.canonical_name for lab in EVICTION_LABELS),
    "non_eviction": tuple(lab.canonical_name for lab in NON_EVICTION_LABELS),
    "all": tuple(lab.canonical_name for lab in EVICTION_LABELS + NON_EVICTION_LABELS),
    "binary": ("Yes", "No"),
}


def _fail(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload), err=True)
    raise SystemExit(1)


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError as exc:
        _fail(exc)
    except FileNotFoundError as exc:
        _fail(exc)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        _fail(ConfigError(f"cannot read config {path}: {exc}"))


gateway_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON config file (endpoint, model_tag, api_key_env)."),
    click.option("--cassette", type=click.Path(), default=None,
                 help="Cassette file for record/replay."),
    click.option("--cassette-mode", type=click.Choice([m.value for m in CassetteMode]),
                 default=CassetteMode.REPLAY_STRICT.value, show_default=True),
    click.option("--live", is_flag=True, default=False,
                 help="Allow live calls to the configured HTTP endpoint."),
    click.option("--demo-backend", "demo_backend_flag", is_flag=True, default=False,
                 help="Use the built-in deterministic offline backend."),
]


def with_gateway_options(fn):
    for opt in reversed(gateway_options):
        fn = opt(fn)
    return fn


def _build_gateway(config_path, cassette, cassette_mode, live, demo_backend_flag) -> Gateway:
    cfg = _load_config(config_path)
    backend = None
    if demo_backend_flag:
        backend = demo.demo_backend()
    elif live:
        endpoint = cfg.get("endpoint")
        if not endpoint:
            raise ConfigError("--live requires an 'endpoint' in the config file")
        backend = HttpBackend(
            endpoint,
            api_key_env=cfg.get("api_key_env", "SDOH_PIPELINE_API_KEY"),
        )
    cassette_obj = None
    if cassette:
        cassette_obj = Cassette(cassette, CassetteMode(cassette_mode))
    return Gateway(
        backend=backend,
        cassette=cassette_obj,
        max_in_flight=cfg.get("max_in_flight", 4),
    )


@click.group()
def main():
    """SDoH annotation pipeline."""


@main.command()
@click.option("--notes", required=True, type=click.Path(exists=True),
              help="Raw notes NDJSON: one {id, text, source} per line.")
@click.option("--out", required=True, type=click.Path(), help="Pool file to write.")
@click.option("--no-extract", is_flag=True, default=False,
              help="Skip social-history extraction.")
@click.option("--scan-out", type=click.Path(), default=None,
              help="Also write keyword-routing candidates per note.")
@click.option("--keywords-config", type=click.Path(exists=True), default=None)
def ingest(notes, out, no_extract, scan_out, keywords_config):
    """Build a raw-note pool from a notes file."""
    pool = _run(ingest_file, notes, extract=not no_extract)
    pool.save(out)
    summary = {"command": "ingest", "notes": len(pool), "out": out}
    if scan_out:
        table = (
            KeywordTable.from_config(keywords_config)
            if keywords_config
            else KeywordTable.default()
        )
        rows = []
        for note in pool.to_rows():
            text = note["social_history"] or note["full_text"]
            hits = keyword_scan(text, table)
            rows.append(
                {
                    "id": note["id"],
                    "candidates": sorted(lab.canonical_name for lab in hits),
                }
            )
        serde.write_ndjson(scan_out, rows)
        summary["scan_out"] = scan_out
    click.echo(json.dumps(summary))


@main.command()
@click.option("--label", "label_token", required=True)
@click.option("--pool", "pool_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--pool-out", type=click.Path(), default=None,
              help="Write the updated pool (drawn notes become in_use).")
@click.option("--batch-size", default=20, show_default=True)
@click.option("--prompt-file", type=click.Path(exists=True), default=None,
              help="Generation prompt template override.")
@click.option("--temperature", default=0.7, show_default=True)
@with_gateway_options
def augment(label_token, pool_path, out, pool_out, batch_size, prompt_file,
            temperature, config_path, cassette, cassette_mode, live, demo_backend_flag):
    """Generate one unverdicted batch of augmented notes for a label."""
    def body():
        label = DEFAULT_TAXONOMY.parse_label(label_token)
        prompt = (
            Path(prompt_file).read_text(encoding="utf-8")
            if prompt_file
            else augmenter.DEFAULT_AUGMENT_PROMPT
        )
        gateway = _build_gateway(config_path, cassette, cassette_mode, live,
                                 demo_backend_flag)
        pool = NotePool.load(pool_path)
        state = augmenter.AugmenterState(label=label, current_prompt=prompt)
        batch = augmenter.generate_batch(
            state, pool.draw(batch_size), gateway, temperature=temperature
        )
        batch.save(out)
        if pool_out:
            pool.save(pool_out)
        return {
            "command": "augment",
            "batch_id": batch.batch_id,
            "items": len(batch.items),
            "failed": sum(1 for it in batch.items if it.failed),
            "out": out,
        }

    click.echo(json.dumps(_run(body)))


@main.command("review-serve")
@click.option("--session", "session_dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True)
@click.option("--demo-backend", "demo_backend_flag", is_flag=True, default=False)
def review_serve(session_dir, host, port, demo_backend_flag):
    """Serve the review API for a session directory."""
    import uvicorn

    from .service import create_app, load_session

    def body():
        backend = demo.demo_backend() if demo_backend_flag else None
        session = load_session(session_dir, backend=backend)
        session.start()
        return create_app(session)

    app = _run(body)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("demo-fixture")
@click.option("--dir", "fixture_dir", required=True, type=click.Path())
@click.option("--label", default="t3_Eviction_pending", show_default=True)
@click.option("--batch-size", default=20, show_default=True)
def demo_fixture(fixture_dir, label, batch_size):
    """Build a replayable review-session fixture with the demo backend."""
    path = _run(demo.build_review_fixture, fixture_dir, label=label,
                batch_size=batch_size)
    click.echo(json.dumps({"command": "demo-fixture", "dir": str(path)}))


def _annotate_step_for(label, programs_map, gateway):
    """The QC pass runner for a required label: routed step, seed per pass."""
    if is_eviction_related(label):
        program = programs_map["eviction"]
        return lambda note, seed: annotate_eviction(note, program, gateway, seed=seed)
    program = programs_map["non_eviction"]
    return lambda note, seed: annotate_non_eviction(note, program, gateway, seed=seed)


def _load_programs(binary_path, eviction_path, non_eviction_path) -> dict:
    return {
        "binary": load_program(binary_path) if binary_path else binary_program(),
        "eviction": load_program(eviction_path) if eviction_path else eviction_program(),
        "non_eviction": (
            load_program(non_eviction_path) if non_eviction_path else non_eviction_program()
        ),
    }


@main.command()
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True),
              help="Augmentation batch NDJSON (generated notes + target label).")
@click.option("--pool", "pool_path", type=click.Path(exists=True), default=None)
@click.option("--pool-out", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--split", default="sft", show_default=True,
              type=click.Choice(list(datastore.SPLITS)))
@click.option("--program-eviction", type=click.Path(exists=True), default=None)
@click.option("--program-non-eviction", type=click.Path(exists=True), default=None)
@with_gateway_options
def validate(batch_path, pool_path, pool_out, out, split, program_eviction,
             program_non_eviction, config_path, cassette, cassette_mode, live,
             demo_backend_flag):
    """Triple-pass quality control over generated notes."""
    def body():
        gateway = _build_gateway(config_path, cassette, cassette_mode, live,
                                 demo_backend_flag)
        programs_map = _load_programs(None, program_eviction, program_non_eviction)
        pool = NotePool.load(pool_path) if pool_path else None
        records = []
        decisions = {d.value: 0 for d in quality.Decision}
        for row in serde.read_ndjson(batch_path):
            if row.get("failed"):
                continue
            label = DEFAULT_TAXONOMY.parse_label(row["label"])
            step = _annotate_step_for(label, programs_map, gateway)
            outcome = quality.validate_example(
                row["generated_text"],
                label.canonical_name,
                step,
                pool,
                row.get("source_raw_note_id"),
            )
            decisions[outcome.decision.value] += 1
            if outcome.decision is not quality.Decision.DISCARDED:
                records.append(
                    datastore.Record.create(
                        text=row["generated_text"],
                        label=outcome.final_label,
                        source="synth",
                        split=split,
                        rationale=outcome.passes[0].rationale,
                        decision_provenance=outcome.decision.value,
                    )
                )
                if pool is not None and row.get("source_raw_note_id"):
                    pool.consume(row["source_raw_note_id"])
        datastore.save_records(out, records)
        if pool is not None and pool_out:
            pool.save(pool_out)
        return {"command": "validate", "out": out, "decisions": decisions,
                "accepted": len(records)}

    click.echo(json.dumps(_run(body)))


@main.command()
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--dev", "dev_path", required=True, type=click.Path(exists=True))
@click.option("--step", required=True,
              type=click.Choice(["binary", "eviction", "non_eviction"]))
@click.option("--seed", required=True, type=int)
@click.option("--num-candidates", default=16, show_default=True)
@click.option("--max-demos", default=8, show_default=True)
@click.option("--out", required=True, type=click.Path())
@with_gateway_options
def optimize(train_path, dev_path, step, seed, num_candidates, max_demos, out,
             config_path, cassette, cassette_mode, live, demo_backend_flag):
    """Bootstrap-few-shot random search for one step's program."""
    def body():
        gateway = _build_gateway(config_path, cassette, cassette_mode, live,
                                 demo_backend_flag)
        base = {
            "binary": binary_program,
            "eviction": eviction_program,
            "non_eviction": non_eviction_program,
        }[step]()

        def load_examples(path):
            return [
                LabeledExample(
                    note=row.get("text") or row["note"],
                    gold=row["label"],
                    rationale=row.get("rationale"),
                )
                for row in serde.read_ndjson(path)
            ]

        config = OptimizeConfig(seed=seed, num_candidates=num_candidates,
                                max_demos=max_demos)
        best, table = optimizer.optimize(
            base, load_examples(train_path), load_examples(dev_path), config, gateway
        )
        save_program(
            out,
            best,
            extra={
                "step": step,
                "seed": seed,
                "num_candidates": num_candidates,
                "max_demos": max_demos,
                "score_table": [vars(row) for row in table],
            },
        )
        best_row = max(table, key=lambda r: r.score)
        return {"command": "optimize", "out": out, "best_score": best_row.score,
                "candidates": len(table)}

    click.echo(json.dumps(_run(body)))


@main.command()
@click.option("--notes", "notes_path", required=True, type=click.Path(exists=True),
              help="NDJSON rows with id and text fields.")
@click.option("--out", required=True, type=click.Path())
@click.option("--program-binary", type=click.Path(exists=True), default=None)
@click.option("--program-eviction", type=click.Path(exists=True), default=None)
@click.option("--program-non-eviction", type=click.Path(exists=True), default=None)
@click.option("--run-index", default=0, show_default=True)
@with_gateway_options
def annotate(notes_path, out, program_binary, program_eviction, program_non_eviction,
             run_index, config_path, cassette, cassette_mode, live, demo_backend_flag):
    """Cascaded annotation of a notes file into labeled traces."""
    def body():
        gateway = _build_gateway(config_path, cassette, cassette_mode, live,
                                 demo_backend_flag)
        pm = _load_programs(program_binary, program_eviction, program_non_eviction)
        programs = CascadePrograms(
            binary=pm["binary"], eviction=pm["eviction"],
            non_eviction=pm["non_eviction"],
        )
        rows = []
        errors = 0
        for row in serde.read_ndjson(notes_path):
            note_id = row.get("id") or row.get("note_id")
            try:
                trace = annotate_cascade(
                    row["text"], note_id, programs, gateway,
                    seed=run_index, run_index=run_index,
                )
                rows.append(trace.to_row())
            except CascadeError as exc:
                errors += 1
                partial = exc.trace.to_row() if exc.trace else {"note_id": note_id}
                partial["error"] = str(exc)
                rows.append(partial)
        serde.write_ndjson(out, rows)
        return {"command": "annotate", "out": out, "notes": len(rows),
                "errors": errors}

    click.echo(json.dumps(_run(body)))


@main.command()
@click.option("--preds", "preds_path", required=True, type=click.Path(exists=True),
              help="NDJSON with (id|note_id) and (label|final_label).")
@click.option("--golds", "golds_path", required=True, type=click.Path(exists=True))
@click.option("--labelset", default="all", show_default=True,
              type=click.Choice(sorted(LABELSETS)))
@click.option("--out", required=True, type=click.Path())
@click.option("--table", "table_path", type=click.Path(), default=None)
def evaluate(preds_path, golds_path, labelset, out, table_path):
    """Score predictions against golds: F1, MCC, confusion statistics."""
    def body():
        def load_labels(path):
            out_map = {}
            for row in serde.read_ndjson(path):
                rid = row.get("id") or row.get("note_id")
                label = row.get("label") or row.get("final_label")
                out_map[rid] = label
            return out_map

        golds = load_labels(golds_path)
        preds = load_labels(preds_path)
        missing = sorted(set(golds) - set(preds))
        if missing:
            raise ConfigError(
                f"{len(missing)} gold ids missing from predictions "
                f"(e.g. {missing[0]!r})"
            )
        ids = sorted(golds)
        report = metrics.build_report(
            [golds[i] for i in ids],
            [preds[i] if preds[i] is not None else "<none>" for i in ids],
            LABELSETS[labelset],
        )
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        rendered = metrics.render_table(report)
        if table_path:
            Path(table_path).write_text(rendered + "\n", encoding="utf-8")
        click.echo(rendered)
        return {"command": "evaluate", "out": out,
                "micro_f1": report.micro_f1, "macro_f1": report.macro_f1}

    click.echo(json.dumps(_run(body)))


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--sft", is_flag=True, default=True, help="Chat-format export.")
@click.option("--with-reasoning/--label-only", default=False)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--mix-real", "real_path", type=click.Path(exists=True), default=None,
              help="Real records to mix in (requires --real-fraction and --seed).")
@click.option("--real-fraction", type=float, default=None)
@click.option("--seed", type=int, default=None)
def export(records_path, out, sft, with_reasoning, manifest_path, real_path,
           real_fraction, seed):
    """Export fine-tuning data (optionally mixed with real records)."""
    def body():
        records = datastore.load_records(records_path)
        composition = None
        if real_path:
            if real_fraction is None or seed is None:
                raise ConfigError("--mix-real requires --real-fraction and --seed")
            real = datastore.load_records(real_path)
            records = datastore.mix_composition(records, real, real_fraction, seed)
            composition = {"real_fraction": real_fraction,
                           "real": sum(1 for r in records if r.source != "synth"),
                           "synth": sum(1 for r in records if r.source == "synth")}
        rows = datastore.export_sft(records, with_reasoning, out)
        if manifest_path:
            manifest = datastore.export_manifest(
                records, with_reasoning=with_reasoning, seed=seed,
                composition=composition,
            )
            Path(manifest_path).write_text(
                json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
        return {"command": "export", "out": out, "rows": len(rows),
                "with_reasoning": with_reasoning}

    click.echo(json.dumps(_run(body)))


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def stats(records_path, out):
    """Per-(label, split, source) record counts."""
    def body():
        records = datastore.load_records(records_path)
        table = datastore.stats(records)
        doc = {
            "counts": [
                {"label": k[0], "split": k[1], "source": k[2], "count": v}
                for k, v in sorted(table.counts.items())
            ],
            "duplicates": list(table.duplicate_ids),
            "total": sum(table.counts.values()),
        }
        if out:
            Path(out).write_text(
                json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        return {"command": "stats", "total": doc["total"],
                "duplicates": len(table.duplicate_ids)}

    click.echo(json.dumps(_run(body)))


if __name__ == "__main__":
    main()

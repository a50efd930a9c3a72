"""Command-line entry point.

Exit codes are shared by every subcommand: 0 success, 1 findings of error
severity, 2 usage or I/O problems, 3 a triggered decision flag under
``--strict-flags``.
"""

from __future__ import annotations

import hashlib
import json
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import click
import jsonschema

from . import kpi as kpi_engine
from . import lca as lca_engine
from . import sms, telemetry
from .core import Model
from .dot import export_dot
from .opl import parse_document, render_opl

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_FLAGS = 0, 1, 2, 3
REPORT_TAG = "factoryopm-assessment"


class Abort(click.ClickException):
    """Stop with a message on stderr and a specific exit code."""

    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.exit_code = code


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise Abort(f"no such file: {path}")
    return p


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _emit(text: str, output: str | None) -> None:
    if output:
        try:
            Path(output).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise Abort(f"cannot write {output}: {exc.strerror}") from None
    else:
        click.echo(text, nl=False)


def _dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _load_model(path: str) -> Model:
    """Read a model from OPL text or from its JSON serialization."""
    p = _existing(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        try:
            return Model.from_dict(json.loads(text))
        except (ValueError, KeyError) as exc:
            raise Abort(f"{path}: not a model file ({exc})") from None
    model, diags = parse_document(text, name=p.stem)
    errors = [d for d in diags if d.severity == "error"]
    for d in errors:
        click.echo(f"{path}:{d.line}: {d.severity} {d.code} {d.message}", err=True)
    if errors:
        raise Abort(f"{path}: {len(errors)} parse error(s)", EXIT_FINDINGS)
    return model


def _load_profile(name: str) -> sms.Profile:
    try:
        return sms.load_profile(name)
    except sms.UnknownProfileError as exc:
        raise Abort(str(exc)) from None
    except sms.SchemaError as exc:
        raise Abort(f"bad profile {name!r}: {exc}") from None


def _load_dataset(paths: tuple[str, ...], cumulative: bool = False) -> telemetry.Dataset:
    """Persisted datasets are loaded as is; CSV files are ingested and merged."""
    persisted, csvs = [], []
    for p in map(_existing, paths):
        (persisted if telemetry.is_persisted(p) else csvs).append(p)
    parts = []
    try:
        parts.extend(telemetry.load(p) for p in persisted)
        if csvs:
            dataset, diags = telemetry.ingest(csvs, cumulative=cumulative)
            for d in diags:
                click.echo(f"{d.file}:{d.line}: {d.severity} {d.code} {d.message}", err=True)
            parts.append(dataset)
    except (telemetry.IngestError, telemetry.DatasetFormatError) as exc:
        raise Abort(str(exc)) from None
    return telemetry.merge(*parts) if parts else telemetry.Dataset()


def _window(text: str | None) -> telemetry.Window | None:
    try:
        return telemetry.Window.parse(text) if text else None
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--window") from None


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Factory models in OPL, conformance, telemetry KPIs and impact scores."""


# -- model commands ----------------------------------------------------------------


@main.command()
@click.argument("opl_path")
@click.option("-o", "--output", help="Write the model JSON here instead of stdout.")
def parse(opl_path: str, output: str | None) -> None:
    """Parse an OPL document into model JSON; diagnostics go to stderr."""
    p = _existing(opl_path)
    model, diags = parse_document(p.read_text(encoding="utf-8"), name=p.stem)
    for d in diags:
        click.echo(f"{opl_path}:{d.line}: {d.severity} {d.code} {d.message}", err=True)
    _emit(model.to_json(), output)
    if any(d.severity == "error" for d in diags):
        sys.exit(EXIT_FINDINGS)


@main.command()
@click.argument("model_path")
@click.option("--profile", default="default", show_default=True,
              help="Builtin profile, a name under $FACTORYOPM_PROFILE_DIR, or a YAML path.")
@click.option("--classification", "classification_path", help="YAML file classifying processes and objects.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def validate(model_path: str, profile: str, classification_path: str | None, fmt: str) -> None:
    """Grade a model against a conformance profile."""
    model = _load_model(model_path)
    prof = _load_profile(profile)
    classification = _load_classification(model, classification_path)
    try:
        report = sms.check_conformance(model, prof, classification)
    except sms.SchemaError as exc:
        raise Abort(str(exc), EXIT_FINDINGS) from None
    if fmt == "json":
        click.echo(_dumps(report.to_dict()), nl=False)
    else:
        for f in report.findings:
            detail = f" ({f.detail})" if f.detail else ""
            click.echo(f"{f.severity:7} {f.code:16} {f.process}{detail}")
        click.echo(f"{report.errors} error(s), {report.warnings} warning(s) under profile {report.profile}")
    sys.exit(EXIT_OK if report.ok else EXIT_FINDINGS)


def _load_classification(model: Model, path: str | None) -> sms.Classification:
    if not path:
        return sms.Classification()
    try:
        return sms.load_classification(model, _existing(path))
    except sms.SchemaError as exc:
        raise Abort(f"{path}: {exc}", EXIT_FINDINGS) from None


@main.command()
@click.argument("model_path")
@click.option("--format", "fmt", type=click.Choice(["opl", "dot", "json"]), default="opl", show_default=True)
@click.option("-o", "--output")
def render(model_path: str, fmt: str, output: str | None) -> None:
    """Render a model as canonical OPL, Graphviz DOT or JSON."""
    model = _load_model(model_path)
    text = {"opl": render_opl, "dot": export_dot, "json": Model.to_json}[fmt](model)
    _emit(text, output)


# -- data commands ------------------------------------------------------------------


@main.command()
@click.argument("paths", nargs=-1, required=True)
@click.option("-o", "--output", required=True, help="Persisted dataset file to write.")
@click.option("--cumulative", is_flag=True, help="Telemetry energy columns are meter readings.")
def ingest(paths: tuple[str, ...], output: str, cumulative: bool) -> None:
    """Ingest telemetry and manual CSV files into one persisted dataset."""
    files = [_existing(p) for p in paths]
    try:
        dataset, diags = telemetry.ingest(files, cumulative=cumulative)
    except telemetry.IngestError as exc:
        raise Abort(str(exc)) from None
    for d in diags:
        click.echo(f"{d.file}:{d.line}: {d.severity} {d.code} {d.message}", err=True)
    _emit(telemetry.dumps(dataset), output)
    click.echo(
        f"{len(dataset.telemetry)} telemetry record(s) for {len(dataset.machines())} machine(s), "
        f"{len(dataset.manual)} manual record(s) -> {output}"
    )
    if any(d.severity == "error" for d in diags):
        sys.exit(EXIT_FINDINGS)


def _pipeline(spec_path: str, data: tuple[str, ...], window: str | None, cumulative: bool):
    try:
        spec = kpi_engine.load_spec(_existing(spec_path))
    except (kpi_engine.KpiError, KeyError, TypeError, ValueError) as exc:
        raise Abort(f"{spec_path}: {exc}") from None
    dataset = _load_dataset(data, cumulative)
    try:
        return kpi_engine.run_pipeline(spec, dataset, _window(window))
    except kpi_engine.KpiError as exc:
        raise Abort(f"{spec_path}: {exc}") from None


def _fmt_metric(v: kpi_engine.MetricValue | None) -> str:
    if v is None:
        return "no value"
    if v.unit == "kWh/part":
        return f"{v.value:.4f} kWh/part (raw {v.value!r})"
    if v.unit == "fraction":
        return f"{100 * v.value:.1f}% (raw {v.value!r})"
    if v.unit == "count":
        return f"{int(v.value)}"
    return f"{v.value:.4f} {v.unit}"


def _kpi_text(report: kpi_engine.PipelineReport) -> list[str]:
    lines = []
    if report.goal:
        lines.append(f"Goal: {report.goal}")
    for r in report.results:
        lines.append(f"{r.kpi}  [{r.window[0]} .. {r.window[1]}]")
        for m, v in sorted(r.metrics.items()):
            lines.append(f"  {m}: {_fmt_metric(v)}")
        for f in r.flags:
            state = "TRIGGERED" if f.triggered else "ok"
            lines.append(f"  flag {f.rule}: {f.metric} {f.comparator} {f.threshold} -> {state}")
    for f in report.findings:
        lines.append(f"{f.severity} {f.code} {f.metric}: {f.message}")
    lines.extend(report.not_executed)
    return lines


def _kpi_markdown(report: kpi_engine.PipelineReport) -> list[str]:
    lines = [f"Goal: {report.goal}", ""] if report.goal else []
    if report.selection:
        lines += ["| Rank | Candidate KPI | Weighted index |", "| --- | --- | --- |"]
        lines += [f"| {c.rank} | {c.candidate} | {c.index:.4f} |" for c in report.selection]
        lines.append("")
    for r in report.results:
        lines += [f"### {r.kpi}", "", f"Window {r.window[0]} to {r.window[1]}.", ""]
        lines += [f"- {m}: {_fmt_metric(v)}" for m, v in sorted(r.metrics.items())]
        for f in r.flags:
            state = "TRIGGERED" if f.triggered else "not triggered"
            lines.append(f"- flag {f.rule} ({f.metric} {f.comparator} {f.threshold}): {state}")
        lines.append("")
    lines += [f"- {f.severity} {f.code} {f.metric}: {f.message}" for f in report.findings]
    lines += [f"- {n}" for n in report.not_executed]
    return lines


@main.command()
@click.argument("spec_path")
@click.argument("data", nargs=-1)
@click.option("--window", help="START/END in ISO-8601; overrides binding windows.")
@click.option("--cumulative", is_flag=True, help="Telemetry CSV energy columns are meter readings.")
@click.option("--strict-flags", is_flag=True, help="Exit 3 when any decision flag triggers.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@click.option("-o", "--output")
def kpi(spec_path, data, window, cumulative, strict_flags, fmt, output) -> None:
    """Compute the KPIs of a spec over telemetry CSVs or persisted datasets."""
    report = _pipeline(spec_path, data, window, cumulative)
    text = _dumps(report.to_dict()) if fmt == "json" else "\n".join(_kpi_text(report)) + "\n"
    _emit(text, output)
    if report.errors:
        sys.exit(EXIT_FINDINGS)
    if strict_flags and report.triggered:
        sys.exit(EXIT_FLAGS)


def _assess(
    inventory_path: str, matrix_path: str, missing_flow: str, batch_output: float | None, batch_unit: str | None
) -> tuple[lca_engine.Inventory, lca_engine.CharacterizationMatrix, lca_engine.ImpactScores]:
    try:
        inventory = lca_engine.load_inventory(_existing(inventory_path))
        matrix = lca_engine.load_matrix(_existing(matrix_path))
        if batch_output is not None:
            fu = inventory.functional_unit
            inventory = lca_engine.scale_inventory(inventory.flows, batch_output, batch_unit or fu.unit, fu)
    except lca_engine.LcaError as exc:
        raise Abort(str(exc)) from None
    try:
        scores = lca_engine.assess(inventory, matrix, missing_flow)
    except lca_engine.UncharacterizedFlowError as exc:
        for f in exc.flows:
            click.echo(f"error UNCHARACTERIZED_FLOW {f}", err=True)
        raise Abort(f"{len(exc.flows)} flow(s) have no characterization factor", EXIT_FINDINGS) from None
    except lca_engine.LcaError as exc:
        raise Abort(str(exc), EXIT_FINDINGS) from None
    for f in scores.uncharacterized:
        click.echo(f"warning UNCHARACTERIZED_FLOW {f} (counted as zero)", err=True)
    return inventory, matrix, scores


def _impacts_dict(inventory, matrix, scores) -> dict:
    fu = inventory.functional_unit
    return {
        "method": matrix.method,
        "functional_unit": {"name": fu.name, "amount": fu.amount, "unit": fu.unit, "parts_per_fu": fu.parts_per_fu},
        "scores": scores.records(),
        "uncharacterized": list(scores.uncharacterized),
    }


@main.command()
@click.argument("inventory_path")
@click.argument("matrix_path")
@click.option("--missing-flow", type=click.Choice(lca_engine.POLICIES), default="error", show_default=True)
@click.option("--batch-output", type=float, help="Inventory holds measured batch flows for this output amount.")
@click.option("--batch-unit", help="Unit of --batch-output (defaults to the functional unit's).")
@click.option("--cross-check", "kpi_value", type=float, help="Compare inventory electricity with this kWh/part.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@click.option("-o", "--output")
def lca(inventory_path, matrix_path, missing_flow, batch_output, batch_unit, kpi_value, fmt, output) -> None:
    """Midpoint impact scores of an inventory under a characterization matrix."""
    inventory, matrix, scores = _assess(inventory_path, matrix_path, missing_flow, batch_output, batch_unit)
    check = None
    if kpi_value is not None:
        try:
            check = lca_engine.energy_cross_check(inventory, kpi_value)
        except lca_engine.LcaError as exc:
            raise Abort(str(exc), EXIT_FINDINGS) from None
    if fmt == "json":
        data = _impacts_dict(inventory, matrix, scores)
        if check is not None:
            data["cross_check"] = check.to_dict()
        text = _dumps(data)
    else:
        fu = inventory.functional_unit
        lines = [f"Functional unit: {fu.amount:g} {fu.unit} {fu.name}"]
        lines += [f"{r['name']}: {r['value']!r} {r['unit']}" for r in scores.records()]
        if check is not None:
            lines.append(
                f"Electricity per part {check.per_part!r} kWh vs KPI {check.kpi_value!r} kWh: "
                f"deviation {check.deviation_pct:.2f}%"
            )
        text = "\n".join(lines) + "\n"
    _emit(text, output)


# -- report ------------------------------------------------------------------------


def _section(title: str, body: list[str]) -> list[str]:
    return [f"## {title}", "", *(body or ["No data."]), ""]


def build_report(
    inputs: list[tuple[str, str]],
    system: sms.SystemRecord | None,
    conformance: sms.ConformanceReport | None,
    coverage: list[sms.Coverage],
    pipeline: kpi_engine.PipelineReport | None,
    impacts: dict | None,
    cross_check: lca_engine.CrossCheck | None,
    stamp: str | None = None,
) -> tuple[str, dict]:
    """Combined human-readable document with the machine-readable record embedded."""
    record: dict = {
        "report": REPORT_TAG,
        "version": 1,
        "inputs": [{"role": role, "path": path, "sha256": _sha256(Path(path))} for role, path in inputs],
        "system": system.to_dict() if system else None,
        "conformance": None,
        "kpi": pipeline.to_dict() if pipeline else None,
        "impacts": impacts,
        "cross_check": cross_check.to_dict() if cross_check else None,
    }
    if conformance is not None:
        record["conformance"] = {
            **conformance.to_dict(),
            "coverage": [c.__dict__ for c in coverage],
        }
    if stamp:
        record["generated_at"] = stamp
    schema = json.loads(resources.files("factoryopm").joinpath("data", "report.schema.json").read_text("utf-8"))
    jsonschema.validate(record, schema)

    out = ["# Manufacturing sustainability assessment", ""]
    if stamp:
        out += [f"Generated {stamp}", ""]

    out += _section("Inputs", [f"- {i['role']}: `{i['path']}` sha256 `{i['sha256']}`" for i in record["inputs"]])

    body = []
    if system:
        body = ["| Field | Value |", "| --- | --- |"]
        body += [f"| {k.replace('_', ' ').capitalize()} | {v} |" for k, v in system.to_dict().items()]
    out += _section("System record", body)

    body = []
    if conformance is not None:
        body.append(
            f"Profile `{conformance.profile}`: {conformance.errors} error(s), {conformance.warnings} warning(s)."
        )
        if conformance.findings:
            body.append("")
            for f in conformance.findings:
                detail = f" ({f.detail})" if f.detail else ""
                body.append(f"- {f.severity} {f.code}: {f.process}{detail}")
        gaps = sms.missing_attributes(coverage)
        if coverage:
            body.append("")
            body.append(
                f"Attribute coverage: {sum(c.covered for c in coverage)} of {len(coverage)} required pairs present."
            )
            for thing, attrs in sorted(gaps.items()):
                body.append(f"- {thing} lacks {', '.join(attrs)}")
    out += _section("Model conformance", body)

    out += _section("KPIs", _kpi_markdown(pipeline) if pipeline else [])

    body = []
    if impacts:
        fu = impacts["functional_unit"]
        body = [f"Per {fu['amount']:g} {fu['unit']} {fu['name']} (method `{impacts['method']}`).", ""]
        body += ["| Impact category | Value | Unit |", "| --- | --- | --- |"]
        body += [f"| {s['name']} | {s['value']!r} | {s['unit']} |" for s in impacts["scores"]]
        if impacts["uncharacterized"]:
            body += ["", "Counted as zero: " + "; ".join(impacts["uncharacterized"])]
    out += _section("Life-cycle impacts", body)

    body = []
    if cross_check:
        body = [
            f"Inventory electricity {cross_check.electricity_per_fu!r} kWh per functional unit / "
            f"{cross_check.parts_per_fu} parts = {cross_check.per_part:.4f} kWh/part; "
            f"telemetry KPI {cross_check.kpi_value:.4f} kWh/part; "
            f"relative deviation {cross_check.deviation_pct:.2f}%."
        ]
    out += _section("Energy cross-check", body)

    out += ["## Machine-readable record", "", "```json", _dumps(record).rstrip("\n"), "```", ""]
    return "\n".join(out), record


def _per_part(pipeline: kpi_engine.PipelineReport | None) -> float | None:
    if pipeline is None:
        return None
    for r in pipeline.results:
        for _, v in sorted(r.metrics.items()):
            if v is not None and v.unit == "kWh/part":
                return v.value
    return None


@main.command()
@click.option("--model", "model_path", help="OPL or model JSON file.")
@click.option("--classification", "classification_path")
@click.option("--profile", default="default", show_default=True)
@click.option("--system", "system_path", help="YAML system record.")
@click.option("--spec", "spec_path", help="KPI spec YAML.")
@click.option("--data", "data", multiple=True, help="Telemetry/manual CSV or persisted dataset; repeatable.")
@click.option("--window")
@click.option("--inventory", "inventory_path")
@click.option("--matrix", "matrix_path")
@click.option("--missing-flow", type=click.Choice(lca_engine.POLICIES), default="error", show_default=True)
@click.option("--stamp", is_flag=True, help="Add a generation timestamp (output is then not reproducible).")
@click.option("-o", "--output")
def report(model_path, classification_path, profile, system_path, spec_path, data, window,
           inventory_path, matrix_path, missing_flow, stamp, output) -> None:
    """Assemble system record, conformance, KPIs, impacts and cross-check into one document."""
    inputs: list[tuple[str, str]] = []

    def note(role: str, path: str | None) -> None:
        if path:
            _existing(path)
            inputs.append((role, path))

    for role, path in (("model", model_path), ("classification", classification_path), ("system", system_path),
                       ("kpi_spec", spec_path), ("inventory", inventory_path), ("matrix", matrix_path)):
        note(role, path)
    for d in data:
        note("data", d)
    if bool(inventory_path) != bool(matrix_path):
        raise Abort("--inventory and --matrix go together")

    system = None
    if system_path:
        try:
            system = sms.load_system_record(system_path)
        except sms.SchemaError as exc:
            raise Abort(f"{system_path}: {exc}", EXIT_FINDINGS) from None

    conformance, coverage = None, []
    pipeline = None
    if spec_path:
        pipeline = _pipeline(spec_path, data, window, False)
    if model_path:
        model = _load_model(model_path)
        classification = _load_classification(model, classification_path)
        try:
            conformance = sms.check_conformance(model, _load_profile(profile), classification)
        except sms.SchemaError as exc:
            raise Abort(str(exc), EXIT_FINDINGS) from None
        if spec_path:
            reqs = [sms.Requirement(r, a) for r, a in kpi_engine.load_spec(spec_path).requirements]
            coverage = sms.attribute_coverage(model, reqs, classification)

    impacts = check = None
    if inventory_path:
        inventory, matrix, scores = _assess(inventory_path, matrix_path, missing_flow, None, None)
        impacts = _impacts_dict(inventory, matrix, scores)
        value = _per_part(pipeline)
        if value is not None and inventory.functional_unit.parts_per_fu:
            try:
                check = lca_engine.energy_cross_check(inventory, value)
            except lca_engine.NoElectricityFlowError:
                check = None

    when = datetime.now(timezone.utc).replace(microsecond=0).isoformat() if stamp else None
    text, _ = build_report(inputs, system, conformance, coverage, pipeline, impacts, check, when)
    _emit(text, output)
    failed = (conformance is not None and not conformance.ok) or (pipeline is not None and pipeline.errors)
    sys.exit(EXIT_FINDINGS if failed else EXIT_OK)


if __name__ == "__main__":
    main()

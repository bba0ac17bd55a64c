"""Command-line entry point: generate, train, evaluate, explain, serve, readiness.

Every subcommand that writes files also writes a manifest sufficient to
reproduce the run: the effective parameters (flags beat config-file values
beat defaults), sha256 digests of file inputs and outputs, and the tool
version. Manifests contain nothing clock- or host-dependent, so rerunning a
command reproduces its output files byte for byte.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__, evalkit, explain as explain_mod, iforest, readiness, rules, simgen
from .domain import DEFAULT_FEATURES, batch_derive, feature_matrix


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    text = p.read_text()
    if p.suffix in (".toml", ".tml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # pragma: no cover - python < 3.11
            try:
                import tomli as tomllib  # type: ignore[no-redef]
            except ModuleNotFoundError:
                raise click.UsageError("TOML config requires Python 3.11+ or the tomli package")
        return tomllib.loads(text)
    return json.loads(text)


def _effective(ctx: click.Context, config: dict, **params):
    """Apply precedence flags > config file > defaults; echo the result."""
    out = {}
    for name, value in params.items():
        source = ctx.get_parameter_source(name)
        if source is not None and source.name == "DEFAULT" and name in config:
            out[name] = config[name]
        else:
            out[name] = value
    return out


def _write_manifest(out_dir: Path, command: str, params: dict, inputs: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "params": params,
        "input_digests": inputs,
        "output_digests": outputs,
        "tool": {"name": "xpad", "version": __version__},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _profile_from(params: dict) -> simgen.GeneratorProfile:
    overrides = {
        k: params[k]
        for k in ("n_sessions", "n_anomalies", "attenuated_fraction")
        if params.get(k) is not None
    }
    return simgen.GeneratorProfile.preset(params["profile"], seed=params["seed"], **overrides)


@click.group()
@click.version_option(version=__version__, prog_name="xpad")
def main():
    """Cross-provider audit-log anomaly detection toolkit."""


@main.command()
@click.option("--profile", type=click.Choice(["refined", "complex"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-sessions", "n_sessions", type=int, default=None)
@click.option("--n-anomalies", "n_anomalies", type=int, default=None)
@click.option("--attenuated-fraction", "attenuated_fraction", type=float, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def generate(ctx, profile, seed, n_sessions, n_anomalies, attenuated_fraction, out_dir, config_path):
    """Generate a synthetic dataset: sessions.csv plus its data dictionary."""
    config = _load_config(config_path)
    params = _effective(
        ctx, config, profile=profile, seed=seed, n_sessions=n_sessions,
        n_anomalies=n_anomalies, attenuated_fraction=attenuated_fraction,
    )
    prof = _profile_from(params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset = simgen.generate(prof)
    csv_path = simgen.export_csv(dataset, out / "sessions.csv")
    dict_path = out / "data_dictionary.json"
    dict_path.write_text(json.dumps(simgen.data_dictionary(prof), indent=2) + "\n")

    outputs = {
        "sessions.csv": _sha256_file(csv_path),
        "data_dictionary.json": _sha256_file(dict_path),
    }
    _write_manifest(out, "generate", {**params, "profile_full": prof.to_json()}, {}, outputs)
    n_anom = sum(s.is_anomaly for s in dataset.sessions)
    click.echo(f"{len(dataset.sessions)} sessions, {n_anom} anomalies")
    for name, digest in outputs.items():
        click.echo(f"{name} sha256={digest}")


@main.command()
@click.option("--profile", type=click.Choice(["refined", "complex"]), default=None)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-trees", type=int, default=100, show_default=True)
@click.option("--contamination", type=float, default=None, help="Defaults to the profile's calibrated rate.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def train(ctx, profile, dataset_path, seed, n_trees, contamination, out_dir, config_path):
    """Fit the isolation forest on a training split and write a versioned model."""
    config = _load_config(config_path)
    params = _effective(
        ctx, config, profile=profile, dataset_path=dataset_path, seed=seed,
        n_trees=n_trees, contamination=contamination,
    )
    if not params["profile"] and not params["dataset_path"]:
        raise click.UsageError("provide --profile or --dataset")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {}

    if params["dataset_path"]:
        sessions, labels = simgen.load_csv(params["dataset_path"])
        inputs[str(params["dataset_path"])] = _sha256_file(Path(params["dataset_path"]))
        derived = batch_derive(sessions)
        X = feature_matrix([fv for _, fv in derived])
        rng = np.random.default_rng(params["seed"])
        order = rng.permutation(len(sessions))
        n_train = round(0.8 * len(sessions))
        train_idx = np.sort(order[:n_train])
        anomaly_rate = float(np.mean([labels[i] for i in train_idx])) if labels else 0.0
        training_source = {"dataset": str(params["dataset_path"]), "split_seed": params["seed"]}
    else:
        prof = simgen.GeneratorProfile.preset(params["profile"], seed=params["seed"])
        ds = simgen.generate(prof)
        derived = batch_derive(ds.sessions)
        X = feature_matrix([fv for _, fv in derived])
        train_idx = np.array(ds.train_index)
        labels = [s.is_anomaly for s in ds.sessions]
        anomaly_rate = float(np.mean([labels[i] for i in train_idx]))
        training_source = {"profile": prof.to_json()}

    cont = params["contamination"]
    if cont is None:
        if params["profile"]:
            cont = evalkit.default_contamination(simgen.GeneratorProfile.preset(params["profile"], seed=params["seed"]))
        else:
            cont = max(min(anomaly_rate, 0.5), 0.01)

    model = iforest.fit(
        X[train_idx], n_trees=params["n_trees"], psi_mode="auto",
        contamination=cont, master_seed=params["seed"],
    )
    doc = iforest.serialize(model)
    model_path = out / "model.json"
    model_path.write_text(doc)

    card = {
        "model_digest": hashlib.sha256(doc.encode()).hexdigest(),
        "format_version": iforest.MODEL_FORMAT_VERSION,
        "feature_names": list(model.feature_set.names),
        "n_trees": len(model.trees),
        "psi": model.psi,
        "height_limit": model.height_limit,
        "contamination": model.contamination,
        "score_threshold": model.score_threshold,
        "master_seed": model.master_seed,
        "training": {
            **training_source,
            "n_train_rows": int(len(train_idx)),
            "train_anomaly_rate": anomaly_rate,
        },
        "intended_use": "Ranking audit-log sessions for reviewer triage; not a standalone determination of misuse.",
        "limitations": "Trained on synthetic cross-provider sessions; referral context is invisible to the model and scores are advisory.",
    }
    card_path = out / "model_card.json"
    card_path.write_text(json.dumps(card, indent=2, sort_keys=True) + "\n")

    outputs = {"model.json": _sha256_file(model_path), "model_card.json": _sha256_file(card_path)}
    _write_manifest(out, "train", params, inputs, outputs)
    click.echo(f"trained {len(model.trees)} trees, psi={model.psi}, contamination={model.contamination}")
    click.echo(f"model.json sha256={outputs['model.json']}")


@main.command()
@click.option("--profile", type=click.Choice(["refined", "complex"]), required=True)
@click.option("--detector", type=click.Choice(["rules", "iforest", "both"]), default="both", show_default=True)
@click.option("--seeds", default="1,2,3,4,5", show_default=True, help="Comma-separated seed list.")
@click.option("--contamination", type=float, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def evaluate(ctx, profile, detector, seeds, contamination, out_dir, config_path):
    """Run the seeded experiment protocol and emit plot-ready artifacts."""
    config = _load_config(config_path)
    params = _effective(ctx, config, profile=profile, detector=detector, seeds=seeds, contamination=contamination)
    try:
        seed_list = [int(s) for s in str(params["seeds"]).split(",") if s.strip() != ""]
    except ValueError:
        raise click.UsageError(f"invalid --seeds value: {params['seeds']!r}")
    if not seed_list:
        raise click.UsageError("need at least one seed")

    prof = simgen.GeneratorProfile.preset(params["profile"], seed=seed_list[0])
    cfg = evalkit.DetectorConfig(contamination=params["contamination"])
    report = evalkit.run_experiment(
        prof, detector=params["detector"], config=cfg, seeds=seed_list, out_dir=out_dir
    )

    header = f"{'detector':<10}{'seed':>6}{'precision':>11}{'recall':>9}{'f1':>9}{'roc_auc':>9}{'alerts/1k':>11}"
    click.echo(header)
    for det, reports in report.per_seed.items():
        for seed, r in zip(report.seeds, reports):
            auc = f"{r.roc_auc:.3f}" if r.roc_auc is not None else "-"
            click.echo(
                f"{det:<10}{seed:>6}{r.precision:>11.3f}{r.recall:>9.3f}{r.f1:>9.3f}{auc:>9}{r.alerts_per_1000:>11.1f}"
            )
        m = report.mean[det]
        if report.sd is not None:
            sd = report.sd[det]
            click.echo(
                f"{det} mean: precision {m['precision']:.3f}±{sd.get('precision', 0.0):.3f}, "
                f"recall {m['recall']:.3f}±{sd.get('recall', 0.0):.3f}"
            )
        else:
            click.echo(f"{det} mean: precision {m['precision']:.3f} (SD n/a), recall {m['recall']:.3f} (SD n/a)")
    click.echo(f"artifacts written to {out_dir}")


@main.command(name="explain")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--global", "global_importance", is_flag=True, default=False, help="Emit global importance, summary, and dependence data.")
@click.option("--case", "case_id", default=None, help="Narrate one session by id.")
@click.option("--primary", default="provider_mismatch", show_default=True)
@click.option("--color", default="days_since_discharge", show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def explain_cmd(model_path, dataset_path, global_importance, case_id, primary, color, out_dir):
    """Explain forest scores over a dataset, globally or for one case."""
    if not global_importance and case_id is None:
        raise click.UsageError("choose --global or --case <session_id>")
    model = iforest.deserialize(Path(model_path).read_text())
    sessions, _labels = simgen.load_csv(dataset_path)
    derived = batch_derive(sessions)
    features = [fv for _, fv in derived]
    X = feature_matrix(features, model.feature_set)

    if global_importance:
        out = Path(out_dir) if out_dir else Path(".")
        out.mkdir(parents=True, exist_ok=True)
        gi = explain_mod.global_importance(model, X)
        imp_json = out / "importance.json"
        imp_json.write_text(
            json.dumps({"ranking": [{"feature": f, "mean_abs_phi": v} for f, v in gi.ranking]}, indent=2) + "\n"
        )
        with open(out / "importance.csv", "w") as fh:
            fh.write("feature,mean_abs_phi\n")
            for f, v in gi.ranking:
                fh.write(f"{f},{v!r}\n")
        points = explain_mod.summary_data(model, X)
        with open(out / "summary.csv", "w") as fh:
            fh.write("session_index,feature,phi,feature_value\n")
            for pt in points:
                fh.write(f"{pt.session_index},{pt.feature},{pt.phi!r},{pt.feature_value!r}\n")
        dep = explain_mod.dependence_data(model, X, primary, color)
        with open(out / f"dependence_{primary}_by_{color}.csv", "w") as fh:
            fh.write("primary_value,phi,color_value\n")
            for d in dep:
                fh.write(f"{d.primary_feature_value!r},{d.phi_of_primary!r},{d.color_feature_value!r}\n")
        ins = {str(p): _sha256_file(Path(p)) for p in (model_path, dataset_path)}
        outs = {p.name: _sha256_file(p) for p in out.glob("*.csv")}
        outs["importance.json"] = _sha256_file(imp_json)
        _write_manifest(out, "explain", {"global": True, "primary": primary, "color": color}, ins, outs)
        for f, v in gi.ranking:
            click.echo(f"{f}: {v:.4f}")
        return

    index = {s.session_id: i for i, s in enumerate(sessions)}
    if case_id not in index:
        raise click.ClickException(f"unknown session id: {case_id}")
    i = index[case_id]
    explanation = explain_mod.explain_instance(model, features[i], X)
    narrative = explain_mod.narrate(explanation, sessions[i])
    click.echo(narrative.text)
    for reason in narrative.reasons:
        click.echo(f"  {reason['feature']}: phi={reason['phi']:+.4f} value={reason['value']}")


@main.command()
@click.option("--port", type=int, default=None, help="Defaults to XPAD_PORT or 8400.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default=None, help="Defaults to XPAD_DATA_DIR or ./xpad-data.")
@click.option("--model", "model_path", default=None, help="Defaults to XPAD_MODEL_PATH.")
def serve(port, host, data_dir, model_path):
    """Run the alert-triage HTTP service until interrupted."""
    import socket

    import uvicorn

    from .service import create_app

    port = port if port is not None else int(os.environ.get("XPAD_PORT", "8400"))
    data_dir = data_dir or os.environ.get("XPAD_DATA_DIR", "./xpad-data")
    model_path = model_path or os.environ.get("XPAD_MODEL_PATH") or None

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise click.ClickException(f"cannot bind {host}:{port}: {exc}")
    finally:
        probe.close()

    app = create_app(data_dir, model_path=model_path)
    uvicorn.run(app, host=host, port=port, log_level="info")


@click.group(name="readiness")
def readiness_group():
    """Readiness checklist tools."""


main.add_command(readiness_group)


@readiness_group.command(name="assess")
@click.option("--entries", "entries_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]), default="markdown", show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def readiness_assess(entries_path, fmt, out_dir):
    """Score an assessment file against the built-in checklist."""
    raw = json.loads(Path(entries_path).read_text())
    try:
        entries = [readiness.AssessmentEntry.from_json(e) for e in raw]
        report = readiness.assess(entries)
    except (readiness.UnknownItem, readiness.DuplicateEntry, ValueError, KeyError) as exc:
        raise click.ClickException(f"invalid assessment: {exc}")
    rendered = readiness.render_report(report, format=fmt)
    click.echo(rendered, nl=False)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = "readiness_report.json" if fmt == "json" else "readiness_report.md"
        (out / name).write_text(rendered)
        ins = {str(entries_path): _sha256_file(Path(entries_path))}
        _write_manifest(out, "readiness-assess", {"format": fmt}, ins, {name: _sha256_file(out / name)})


@readiness_group.command(name="checklist")
@click.option("--format", "fmt", type=click.Choice(["json"]), default="json", show_default=True)
def readiness_checklist(fmt):
    """Print the built-in checklist."""
    items = [item.to_json() for item in readiness.builtin_checklist()]
    click.echo(json.dumps(items, indent=2))


if __name__ == "__main__":
    main()

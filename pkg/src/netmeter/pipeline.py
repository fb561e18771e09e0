"""File-level pipeline steps shared by the CLI subcommands.

Each step reads named artifacts from a run directory and writes new ones
next to them; inputs are never modified.

    synth    -> meter.csv, weather.csv, profiles.csv
    ingest   -> days.csv, ingest_rejects.csv, ingest_report.json
    attack   -> malicious.csv, attack_audit.jsonl
    prep     -> train.csv, test.csv (+ .meta.json), normalizer.json, prep_report.json
    train    -> detector.{json,bin}, baselines.{json,bin}, curves.csv
    eval     -> metrics.json, scores.csv, roc.csv, pr.csv (stage 3), roc_<model>.csv, pr_<model>.csv
    analyze  -> acf.csv, acf.svg, corr.csv, scatter_irradiance.svg
    report   -> summary.md, roc.svg, pr.svg
"""

from __future__ import annotations

import csv
import json
import logging
import os
from pathlib import Path

import numpy as np

from . import analysis, ingest
from .attacks import AttackTrace, build_malicious_dataset, params_to_dict, write_audit_log
from .config import RunConfig
from .core_types import (
    Label,
    SampleSet,
    read_days_csv,
    read_profiles_csv,
    read_samples_csv,
    write_days_csv,
    write_profiles_csv,
    write_samples_csv,
)
from .detector import (
    Architecture,
    NormalizationError,
    TrainedDetector,
    baseline_proba,
    predict,
    train_baseline,
    train_pipeline,
)
from .metrics import MetricReport, evaluate, pr_curve, roc_curve, write_curve_csv, write_metrics_json
from .nn import load_checkpoint, save_checkpoint
from .prep import Normalizer, adasyn, assemble_samples, fit_transform_normalize, split
from .synth import synth_components

log = logging.getLogger(__name__)

STAGE_NAMES = {1: "Stage 1", 2: "Stage 2", 3: "Stage 3"}
METRIC_COLUMNS = ("acc", "pr", "dr", "fa", "hd", "f1")


class DataError(ValueError):
    """Input artifacts are missing or inconsistent."""


def _need(path: Path) -> Path:
    if not path.exists():
        raise DataError(f"missing input {path}")
    return path


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------


def run_synth(cfg: RunConfig, run_dir: Path) -> dict:
    profiles, weather, parts = synth_components(cfg.synth_config())
    index = {p.customer_id: p for p in profiles}
    rows = []
    for (cid, date), (cons, gen) in sorted(parts.items()):
        rows.extend(ingest.hourly_to_rows(index[cid], date, cons, gen))
    ingest.write_meter_csv(run_dir / "meter.csv", rows)
    ingest.write_weather_csv(run_dir / "weather.csv", weather)
    write_profiles_csv(run_dir / "profiles.csv", profiles)
    return {"customers": len(profiles), "days": len(parts), "weather_days": len(weather)}


def run_ingest(cfg: RunConfig, run_dir: Path, meter=None, profiles=None) -> dict:
    meter = _need(Path(meter) if meter else run_dir / "meter.csv")
    prof_path = Path(profiles) if profiles else run_dir / "profiles.csv"
    locations = None
    if prof_path.exists():
        locations = {cid: p.location_id for cid, p in read_profiles_csv(prof_path).items()}
    rows, rejects = ingest.load_meter_csv(meter)
    result = ingest.clean(rows)
    profs, days = ingest.build_day_series(result.rows, locations)
    write_days_csv(run_dir / "days.csv", days)
    if not prof_path.exists() or prof_path.parent.resolve() != run_dir.resolve():
        write_profiles_csv(run_dir / "profiles.csv", profs)
    with open(run_dir / "ingest_rejects.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "reason"])
        for r in rejects:
            w.writerow([r.line, r.reason])
    report = {"rows_read": len(rows), "rows_rejected": len(rejects), "days": len(days), "dropped": result.drop_counts}
    _write_json(run_dir / "ingest_report.json", report)
    return report


def run_attack(cfg: RunConfig, run_dir: Path, days_path=None) -> dict:
    days, _ = read_days_csv(_need(Path(days_path) if days_path else run_dir / "days.csv"))
    profiles = read_profiles_csv(_need(run_dir / "profiles.csv"))
    traces = build_malicious_dataset(days, profiles, cfg.attack_params(), cfg.seed)
    write_days_csv(run_dir / "malicious.csv", [t.reported for t in traces], {"attack_id": [t.attack_id for t in traces]})
    write_audit_log(run_dir / "attack_audit.jsonl", traces)
    _write_json(run_dir / "attack_params.json", {str(a): params_to_dict(p) for a, p in cfg.attack_params().items()})
    return {"benign_days": len(days), "malicious_days": len(traces)}


def _load_traces(benign, malicious_path: Path) -> list[AttackTrace]:
    mal, extra = read_days_csv(malicious_path)
    if "attack_id" not in extra.columns:
        raise DataError(f"{malicious_path}: no attack_id column")
    by_key = {d.key: d for d in benign}
    traces = []
    for day, aid in zip(mal, extra["attack_id"].tolist()):
        original = by_key.get(day.key)
        if original is None:
            raise DataError(f"malicious day {day.customer_id}@{day.date} has no benign counterpart")
        traces.append(AttackTrace(original, day, int(aid)))
    return traces


def run_prep(cfg: RunConfig, run_dir: Path) -> dict:
    benign, _ = read_days_csv(_need(run_dir / "days.csv"))
    traces = _load_traces(benign, _need(run_dir / "malicious.csv"))
    profiles = read_profiles_csv(_need(run_dir / "profiles.csv"))
    weather, rejects = ingest.load_weather_csv(_need(run_dir / "weather.csv"))
    if rejects:
        raise DataError(f"weather.csv: {len(rejects)} malformed rows, first at line {rejects[0].line}: {rejects[0].reason}")
    samples = assemble_samples(list(benign) + traces, weather, profiles)
    train, test = split(samples, cfg.split_config())
    train, test, norm = fit_transform_normalize(train, test)
    before = train.counts()
    ada = cfg.adasyn_config()
    if ada is not None:
        train = adasyn(train, ada)
    write_samples_csv(run_dir / "train.csv", train)
    write_samples_csv(run_dir / "test.csv", test)
    norm.save(run_dir / "normalizer.json")
    report = {
        "samples": len(samples),
        "train_before_balancing": {str(k): v for k, v in before.items()},
        "train": {str(k): v for k, v in train.counts().items()},
        "test": {str(k): v for k, v in test.counts().items()},
        "normalizer": norm.fingerprint,
    }
    _write_json(run_dir / "prep_report.json", report)
    return report


def _history_rows(name: str, hist) -> list[list]:
    return [[name, i + 1, repr(tl), repr(vl)] for i, (tl, vl) in enumerate(zip(hist.train_loss, hist.val_loss))]


def run_train(cfg: RunConfig, run_dir: Path, train_path=None, baselines: bool = True) -> dict:
    train = read_samples_csv(_need(Path(train_path) if train_path else run_dir / "train.csv"))
    norm = Normalizer.load(_need(run_dir / "normalizer.json"))
    if train.norm_fingerprint != norm.fingerprint:
        raise NormalizationError("train.csv was not produced by normalizer.json")
    ckpt = run_dir / "detector"

    def dump_partial(det):
        det.save(str(ckpt) + ".partial", {"config_hash": cfg.hash})

    det = train_pipeline(train, cfg.detector_config(), norm, on_divergence=dump_partial)
    det.save(ckpt, {"config_hash": cfg.hash})
    curves = []
    for k, h in sorted(det.histories.items()):
        curves += _history_rows(f"stage{k}", h)
    models = {}
    if baselines:
        for arch, tc in cfg.baseline_train_configs().items():
            model, hist = train_baseline(arch, train, tc, cfg["train"]["val_fraction"], cfg.seed)
            models[arch.value] = model
            curves += _history_rows(arch.value, hist)
        if models:
            save_checkpoint(run_dir / "baselines", models, {"config_hash": cfg.hash, "normalizer": norm.fingerprint})
    with open(run_dir / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "epoch", "train_loss", "val_loss"])
        w.writerows(curves)
    return {"stages": sorted(det.histories), "baselines": sorted(models)}


def score_models(run_dir: Path, samples: SampleSet) -> dict[str, np.ndarray]:
    """p_malicious per model, detector stages first, then baselines."""
    _need(run_dir / "detector.json")
    det = TrainedDetector.load(run_dir / "detector")
    scores = {STAGE_NAMES[s]: predict(det, samples, s)[:, 1] for s in (1, 2, 3)}
    if (run_dir / "baselines.json").exists():
        models, extra = load_checkpoint(run_dir / "baselines")
        if extra.get("normalizer") != samples.norm_fingerprint:
            raise NormalizationError("baselines were trained on differently normalized features")
        for arch in Architecture:
            if arch.value in models:
                scores[arch.value] = baseline_proba(models[arch.value], samples.X)[:, 1]
    return scores


def run_eval(cfg: RunConfig, run_dir: Path, test_path=None) -> dict[str, MetricReport]:
    test = read_samples_csv(_need(Path(test_path) if test_path else run_dir / "test.csv"))
    if len(np.unique(test.y)) < 2:
        raise DataError("test set holds a single class; curves and rates are undefined")
    scores = score_models(run_dir, test)
    reports = {}
    for name, s in scores.items():
        reports[name] = evaluate(test.y, s, cfg.threshold)
        slug = name.replace(" ", "").lower()
        write_curve_csv(run_dir / f"roc_{slug}.csv", roc_curve(test.y, s), "fpr", "tpr")
        write_curve_csv(run_dir / f"pr_{slug}.csv", pr_curve(test.y, s), "recall", "precision")
        if name == STAGE_NAMES[3]:
            # the operational detector output also gets the unsuffixed names
            write_curve_csv(run_dir / "roc.csv", roc_curve(test.y, s), "fpr", "tpr")
            write_curve_csv(run_dir / "pr.csv", pr_curve(test.y, s), "recall", "precision")
    payload = {name: r.to_dict() for name, r in reports.items()}
    payload["_meta"] = {
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "threshold": cfg.threshold,
        "test_counts": {str(k): v for k, v in test.counts().items()},
        "normalizer": test.norm_fingerprint,
    }
    write_metrics_json(run_dir / "metrics.json", payload)
    with open(run_dir / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "provenance"] + list(scores))
        for i in range(len(test)):
            w.writerow([str(Label(int(test.y[i]))), test.provenance[i]] + [repr(float(s[i])) for s in scores.values()])
    return reports


def run_predict(run_dir: Path, samples_path, out_path, stage: int = 3) -> int:
    _need(run_dir / "detector.json")
    det = TrainedDetector.load(run_dir / "detector")
    samples = read_samples_csv(_need(Path(samples_path)))
    probs = predict(det, samples, stage, normalize=True)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "p_benign", "p_malicious", "prediction"])
        for i, (pb, pm) in enumerate(probs.tolist()):
            w.writerow([i, repr(pb), repr(pm), str(Label(int(pm >= 0.5)))])
    return len(probs)


def run_analyze(cfg: RunConfig, run_dir: Path, max_lag: int = 72, n_plot: int = 4) -> dict:
    days, _ = read_days_csv(_need(run_dir / "days.csv"))
    profiles = read_profiles_csv(_need(run_dir / "profiles.csv"))
    weather, _ = ingest.load_weather_csv(_need(run_dir / "weather.csv"))
    by_customer: dict[str, list] = {}
    for d in days:
        by_customer.setdefault(d.customer_id, []).append(d)
    results, rows = {}, []
    for cid in sorted(by_customer):
        try:
            rep = analysis.daily_pattern_report(by_customer[cid], max_lag)
        except analysis.StatisticsError as exc:
            log.warning("%s: %s", cid, exc)
            continue
        results[cid] = rep.acf
        rows.append((cid, rep.lag24, rep.acf.ci_halfwidth, rep.daily_pattern))
    with open(run_dir / "acf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["customer_id", "lag", "value", "ci"])
        for cid, res in results.items():
            for lag, v in zip(res.lags.tolist(), res.values.tolist()):
                w.writerow([cid, lag, repr(v), repr(float(res.ci_halfwidth))])
    if results:
        analysis.render_acf_svg(run_dir / "acf.svg", dict(list(results.items())[:n_plot]))
    corr = analysis.correlation_table(days, weather, profiles.values())
    analysis.write_corr_csv(run_dir / "corr.csv", corr)
    first = sorted(by_customer)[0] if by_customer else None
    if first is not None:
        wx = {w.key: w for w in weather}
        own = sorted(by_customer[first], key=lambda d: d.date)
        x = analysis.weather_series(own, wx, profiles[first], "irradiance")
        y = np.concatenate([d.readings for d in own])
        analysis.render_scatter_svg(run_dir / "scatter_irradiance.svg", x, y, "irradiance (W/m2)", "net reading (kWh)", first)
    irr = [r for _, t, r in corr if t == "irradiance"]
    return {
        "customers": len(results),
        "daily_pattern": sum(r[3] for r in rows),
        "negative_irradiance_corr": int(sum(r < 0 for r in irr)),
    }


def _fmt(v) -> str:
    return "undefined" if isinstance(v, str) else f"{v:.2f}"


def summary_table(metrics: dict) -> str:
    """Markdown tables laid out like the baseline and stage comparisons."""
    head = "| {} | ACC | PR | DR | FA | HD | F1 | AUC-ROC | AUC-PR |".format
    rule = "|---|---|---|---|---|---|---|---|---|"
    out = []
    base = [a.value for a in Architecture if a.value in metrics]
    if base:
        out += ["Baselines (readings only)", "", head("Detector"), rule]
        out += [_row(name, metrics[name]) for name in base]
        out.append("")
    stages = [s for s in STAGE_NAMES.values() if s in metrics]
    if stages:
        out += ["Multi-data-source detector", "", head("Stage"), rule]
        out += [_row(name, metrics[name]) for name in stages]
        out.append("")
    return "\n".join(out)


def _row(name: str, m: dict) -> str:
    cells = [_fmt(m[k]) for k in METRIC_COLUMNS] + [
        "undefined" if isinstance(m[k], str) else f"{m[k]:.4f}" for k in ("auc_roc", "auc_pr")
    ]
    return f"| {name} | " + " | ".join(cells) + " |"


def _render_curves(path: Path, run_dir: Path, names: list[str], prefix: str, xlabel: str, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for name in names:
        f = run_dir / f"{prefix}_{name.replace(' ', '').lower()}.csv"
        if not f.exists():
            continue
        data = np.genfromtxt(f, delimiter=",", skip_header=1)
        ax.plot(data[:, 1], data[:, 2], lw=1.2, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run_report(cfg: RunConfig, run_dir: Path) -> str:
    with open(_need(run_dir / "metrics.json")) as fh:
        metrics = json.load(fh)
    meta = metrics.get("_meta", {})
    lines = [
        "# Run summary",
        "",
        f"config hash `{meta.get('config_hash', cfg.hash)}`, seed {meta.get('seed', cfg.seed)}, "
        f"threshold {meta.get('threshold', cfg.threshold)}, test counts {meta.get('test_counts', {})}",
        "",
        summary_table(metrics),
    ]
    for f in ("prep_report.json", "ingest_report.json"):
        if (run_dir / f).exists():
            with open(run_dir / f) as fh:
                lines += [f"`{f}`", "", "```", json.dumps(json.load(fh), indent=1, sort_keys=True), "```", ""]
    text = "\n".join(lines)
    (run_dir / "summary.md").write_text(text)
    names = [n for n in list(STAGE_NAMES.values()) + [a.value for a in Architecture] if n in metrics]
    _render_curves(run_dir / "roc.svg", run_dir, names, "roc", "false positive rate", "true positive rate")
    _render_curves(run_dir / "pr.svg", run_dir, names, "pr", "recall", "precision")
    return text


def run_e2e(cfg: RunConfig, run_dir: Path) -> dict[str, MetricReport]:
    os.makedirs(run_dir, exist_ok=True)
    (run_dir / "config.toml").write_text(cfg.to_toml())
    log.info("synth: %s", run_synth(cfg, run_dir))
    log.info("ingest: %s", run_ingest(cfg, run_dir))
    log.info("attack: %s", run_attack(cfg, run_dir))
    log.info("prep: %s", run_prep(cfg, run_dir))
    log.info("train: %s", run_train(cfg, run_dir))
    reports = run_eval(cfg, run_dir)
    run_report(cfg, run_dir)
    return reports

"""Command-line front end.

Every artifact carries the tool version, the seed and a hash of the resolved
configuration. Outputs are written atomically and contain no timestamps;
those go to ``run.log`` next to them.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__, theory
from .data import ExpressionMatrix, LabelSet, SplitPlan, filter_low_expression, load_matrix, logcpm, select_top_variance, stratified_kfold, stratified_split, write_labels
from .errors import ConfigurationError, ProtovoteError
from .metrics import TABLE_COLUMNS
from .pipeline import MODELS, TABLE_NAMES, CvResult, FittedPipeline, PipelineConfig, cross_validate, fit_pipeline, parallel_map, score_pipeline

log = logging.getLogger("protovote")

SUBCOMMANDS = ("prep", "split", "train", "eval", "cv", "theory", "report")
DISPLAY = {"proto": "Prototype", "gbdt_leaf": "GBDT-leaf", "gbdt_depth": "GBDT-depth", "ensemble": "Ensemble"}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    input: str | None = None
    labels: str | None = None
    pcs: tuple[int, ...] = (50,)
    models: tuple[str, ...] = MODELS
    folds: int | None = None
    test_fraction: float = 0.25
    seed: int = 0
    out: str = "protovote-out"
    split: str | None = None
    bundle: str | None = None
    positive: str | None = None
    quick: bool = False
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigurationError(f"unknown subcommand {self.subcommand!r}")
        if any(p < 1 for p in self.pcs):
            raise ConfigurationError("--pcs values must be positive")
        if any(b <= a for a, b in zip(self.pcs, self.pcs[1:])):
            raise ConfigurationError("--pcs values must be strictly increasing")
        bad = set(self.models) - set(MODELS)
        if bad:
            raise ConfigurationError(f"unknown model {sorted(bad)[0]!r}; choose from {', '.join(MODELS)}")
        if self.folds is not None and self.folds < 2:
            raise ConfigurationError("--folds must be at least 2")
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError("--test-fraction must be in (0, 1)")
        if self.seed < 0:
            raise ConfigurationError("--seed must be non-negative")

    def hashable(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashable(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def meta(self) -> dict:
        return {"tool": "protovote", "version": __version__, "seed": self.seed, "config_hash": self.config_hash}


# ------------------------------------------------------------------ output


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, cfg: RunConfig, payload: dict) -> None:
    atomic_write(path, json.dumps({"meta": cfg.meta(), **payload}, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, cfg: RunConfig, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    m = cfg.meta()
    buf.write(f"# {m['tool']} {m['version']} seed={m['seed']} config_hash={m['config_hash']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


def read_csv_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _fmt(x) -> str:
    return "" if x is None else f"{x:.4f}"


def sidecar(out: Path, message: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run.log", "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}\n")


# ------------------------------------------------------------------ config


def load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file {path} not found")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}:1: top level must be a JSON object")
    return data


def _key_line(path: str, key: str) -> int:
    for i, line in enumerate(Path(path).read_text().splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return 1


def _parse_pcs(value) -> tuple[int, ...]:
    if isinstance(value, int):
        return (value,)
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    try:
        return tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"--pcs expects integers, got {value!r}") from None


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file values, then flags on top (flags win)."""
    file_cfg = load_config_file(args.config) if args.config else {}
    pipe_names = {f.name for f in fields(PipelineConfig)}
    run_names = {f.name for f in fields(RunConfig)} - {"subcommand", "pipeline"}
    unknown = set(file_cfg) - pipe_names - run_names - {"model"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigurationError(f"{args.config}:{_key_line(args.config, key)}: unknown key {key!r}")

    merged = {k: v for k, v in file_cfg.items() if k in run_names}
    if "model" in file_cfg:
        merged["models"] = file_cfg["model"]
    pipe = {k: v for k, v in file_cfg.items() if k in pipe_names}

    flag_map = {
        "input": args.input, "labels": args.labels, "pcs": args.pcs, "models": args.model,
        "folds": args.folds, "test_fraction": args.test_fraction, "seed": args.seed, "out": args.out,
        "split": args.split, "bundle": args.bundle, "positive": args.positive,
    }
    merged.update({k: v for k, v in flag_map.items() if v is not None})
    if args.quick:
        merged["quick"] = True
    if args.skip_normalization:
        pipe["skip_normalization"] = True
    if args.top_var is not None:
        pipe["top_var"] = args.top_var

    if "pcs" in merged:
        merged["pcs"] = _parse_pcs(merged["pcs"])
    if "models" in merged:
        m = merged["models"]
        if isinstance(m, str):
            m = [m]
        merged["models"] = MODELS if "all" in m else tuple(m)
    try:
        return RunConfig(args.command, pipeline=PipelineConfig(**pipe), **merged)
    except TypeError as e:
        raise ConfigurationError(str(e)) from None


# --------------------------------------------------------------- commands


def _require(cfg: RunConfig, *names: str) -> None:
    for n in names:
        if getattr(cfg, n) is None:
            raise ConfigurationError(f"{cfg.subcommand} needs --{n.replace('_', '-')}")


def _load(cfg: RunConfig) -> tuple[ExpressionMatrix, LabelSet]:
    _require(cfg, "input", "labels")
    for p in (cfg.input, cfg.labels):
        if not Path(p).exists():
            raise ConfigurationError(f"input file {p} not found")
    return load_matrix(cfg.input, cfg.labels)


def _positive(cfg: RunConfig, y: LabelSet) -> int:
    if cfg.positive is None:
        return 1 if y.n_classes == 2 else 0
    if cfg.positive in y.class_names:
        return y.class_map[cfg.positive]
    try:
        idx = int(cfg.positive)
    except ValueError:
        raise ConfigurationError(f"--positive {cfg.positive!r} is not a class name or index") from None
    if not 0 <= idx < y.n_classes:
        raise ConfigurationError(f"--positive {idx} out of range")
    return idx


def _plan(cfg: RunConfig, y: LabelSet) -> SplitPlan:
    if cfg.split:
        plan = SplitPlan.from_dict(json.loads(Path(cfg.split).read_text()))
        if max(plan.train_indices.max(initial=-1), plan.test_indices.max(initial=-1)) >= len(y.labels):
            raise ConfigurationError(f"split {cfg.split} does not match the input ({len(y.labels)} samples)")
        return plan
    if cfg.folds:
        return stratified_kfold(y, cfg.folds, cfg.seed)
    return stratified_split(y, cfg.test_fraction, cfg.seed)


def cmd_prep(cfg: RunConfig, out: Path) -> int:
    m, y = _load(cfg)
    if not cfg.pipeline.skip_normalization:
        m = logcpm(filter_low_expression(m, cfg.pipeline.cpm_threshold, cfg.pipeline.min_fraction))
    if cfg.pipeline.top_var is not None:
        m = select_top_variance(m, min(cfg.pipeline.top_var, m.shape[1]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", *m.feature_names])
    for sid, row in zip(m.sample_ids, m.values):
        w.writerow([sid, *(repr(float(v)) for v in row)])
    atomic_write(out / "processed.csv", buf.getvalue())
    with tempfile.TemporaryDirectory() as td:
        write_labels(y, Path(td) / "l.csv")
        atomic_write(out / "labels.csv", (Path(td) / "l.csv").read_text())
    write_json(out / "prep.json", cfg, {"n_samples": m.shape[0], "n_features": m.shape[1], "class_names": y.class_names, "counts": y.counts().tolist()})
    print(f"processed matrix {m.shape[0]} x {m.shape[1]} -> {out / 'processed.csv'}")
    return 0


def cmd_split(cfg: RunConfig, out: Path) -> int:
    _, y = _load(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = _plan(cfg, y)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_json(out / "split.json", cfg, plan.to_dict())
    desc = f"{plan.n_folds} folds" if plan.n_folds else f"{len(plan.train_indices)} train / {len(plan.test_indices)} test"
    print(f"split ({desc}) -> {out / 'split.json'}")
    return 0


def cmd_train(cfg: RunConfig, out: Path) -> int:
    m, y = _load(cfg)
    plan = _plan(cfg, y)
    if plan.n_folds:
        raise ConfigurationError("train needs a train/test split, not folds")
    for n_pcs in cfg.pcs:
        fp = fit_pipeline(m, y, plan.train_indices, n_pcs, cfg.pipeline, cfg.seed)
        path = out / f"bundle_pcs{n_pcs}.json"
        write_json(path, cfg, {"bundle": fp.to_dict(), "split": plan.to_dict(), "requested_pcs": n_pcs})
        print(f"trained {fp.transform.n_pcs} PCs -> {path}")
    return 0


def _table_rows(n_pcs: int, result, models) -> list[list]:
    rows = []
    for name in models:
        s = result.reports[name].summary(None if result.reports[name].n_classes > 2 else result.reports[name].positive_class)
        rows.append([n_pcs, DISPLAY[name]] + [_fmt(s[c]) for c in TABLE_COLUMNS[1:]] + [_fmt(s["BalancedAccuracy"])])
    return rows


def cmd_eval(cfg: RunConfig, out: Path) -> int:
    m, y = _load(cfg)
    pos = _positive(cfg, y)
    if cfg.bundle:
        doc = json.loads(Path(cfg.bundle).read_text())
        fp = FittedPipeline.from_dict(doc["bundle"])
        plan = SplitPlan.from_dict(doc["split"])
        results = [(doc.get("requested_pcs", fp.transform.n_pcs), score_pipeline(fp, m, y, plan.test_indices, cfg.models, pos))]
    else:
        plan = _plan(cfg, y)
        if plan.n_folds:
            raise ConfigurationError("eval needs a train/test split; use cv for folds")

        def one(n_pcs):
            fp = fit_pipeline(m, y, plan.train_indices, n_pcs, cfg.pipeline, cfg.seed)
            return n_pcs, score_pipeline(fp, m, y, plan.test_indices, cfg.models, pos)

        results = parallel_map(one, cfg.pcs)
    rows, payload = [], []
    for requested, res in results:
        rows += _table_rows(res.n_pcs, res, cfg.models)
        payload.append({"requested_pcs": requested, "n_pcs": res.n_pcs, "transform": res.transform, "reports": {k: v.to_dict() for k, v in res.reports.items()}})
    write_csv(out / "eval_metrics.csv", cfg, ["PCs", *TABLE_COLUMNS, "BalancedAccuracy"], rows)
    write_json(out / "eval.json", cfg, {"positive_class": y.class_names[pos], "class_names": y.class_names, "results": payload})
    _print_table(["PCs", *TABLE_COLUMNS, "BalancedAccuracy"], rows)
    return 0


def cmd_cv(cfg: RunConfig, out: Path) -> int:
    m, y = _load(cfg)
    pos = _positive(cfg, y)
    plan = stratified_kfold(y, cfg.folds or 5, cfg.seed) if not cfg.split else _plan(cfg, y)
    if not plan.n_folds:
        raise ConfigurationError("cv needs a fold plan")
    results: list[CvResult] = [cross_validate(m, y, plan, n, cfg.pipeline, cfg.seed, cfg.models, pos) for n in cfg.pcs]
    fold_rows, table_rows, payload = [], [], []
    for requested, cv in zip(cfg.pcs, results):
        for f, res in enumerate(cv.folds):
            for name in cfg.models:
                r = res.reports[name]
                fold_rows.append([cv.n_pcs, f, DISPLAY[name], _fmt(r.accuracy), _fmt(r.balanced_accuracy)])
        table_rows.append([cv.n_pcs] + [f"{cv.mean(k, 'accuracy'):.3f} / {cv.mean(k, 'balanced_accuracy'):.3f}" for k in ("proto", "gbdt_depth", "gbdt_leaf", "ensemble") if k in cfg.models])
        payload.append({
            "requested_pcs": requested,
            "n_pcs": cv.n_pcs,
            "mean": {k: {"accuracy": cv.mean(k, "accuracy"), "balanced_accuracy": cv.mean(k, "balanced_accuracy")} for k in cfg.models},
            "folds": [{k: v.to_dict() for k, v in res.reports.items()} for res in cv.folds],
        })
    header = ["PCs"] + [TABLE_NAMES[k] for k in ("proto", "gbdt_depth", "gbdt_leaf", "ensemble") if k in cfg.models]
    write_csv(out / "cv_folds.csv", cfg, ["PCs", "fold", "Model", "Accuracy", "BalancedAccuracy"], fold_rows)
    write_csv(out / "cv_table.csv", cfg, header, table_rows)
    write_json(out / "cv.json", cfg, {"n_folds": plan.n_folds, "results": payload})
    _print_table(header, table_rows)
    return 0


def cmd_theory(cfg: RunConfig, out: Path) -> int:
    reports = theory.run_all(cfg.seed, quick=cfg.quick)
    rows = []
    for r in reports:
        d = r.to_dict()
        d.pop("seconds")
        write_json(out / "theory" / f"{r.name}.json", cfg, {"report": d})
        rows.append([r.name, r.kind, "" if r.empirical is None else repr(r.empirical), "" if r.bound is None else repr(r.bound), {True: "true", False: "false", None: "skipped"}[r.holds], r.trials])
    write_csv(out / "theory_summary.csv", cfg, ["experiment", "kind", "empirical", "bound", "holds", "trials"], rows)
    _print_table(["experiment", "kind", "empirical", "bound", "holds", "trials"], rows)
    return 0 if all(r.holds is not False for r in reports) else 1


def cmd_report(cfg: RunConfig, out: Path) -> int:
    """Accuracy and balanced accuracy against PC count, from eval/cv outputs
    found under ``--input`` (a directory or a list of JSON files)."""
    _require(cfg, "input")
    src = Path(cfg.input)
    files = sorted(src.rglob("*.json")) if src.is_dir() else [src]
    series: dict[int, dict[str, tuple[float, float]]] = {}
    for f in files:
        doc = json.loads(f.read_text())
        for res in doc.get("results", []):
            if "reports" in res:
                vals = {k: (v["accuracy"], v["balanced_accuracy"]) for k, v in res["reports"].items()}
            elif "mean" in res:
                vals = {k: (v["accuracy"], v["balanced_accuracy"]) for k, v in res["mean"].items()}
            else:
                continue
            series.setdefault(int(res["n_pcs"]), {}).update(vals)
    if not series:
        raise ConfigurationError(f"no eval or cv results under {src}")
    models = [k for k in MODELS if any(k in v for v in series.values())]
    header = ["PCs"] + [f"{DISPLAY[k]}_acc" for k in models] + [f"{DISPLAY[k]}_bacc" for k in models]
    rows = []
    for n in sorted(series):
        v = series[n]
        rows.append([n] + [_fmt(v[k][0]) if k in v else "" for k in models] + [_fmt(v[k][1]) if k in v else "" for k in models])
    write_csv(out / "accuracy_vs_pcs.csv", cfg, header, rows)
    _print_table(header, rows)
    return 0


COMMANDS = {"prep": cmd_prep, "split": cmd_split, "train": cmd_train, "eval": cmd_eval, "cv": cmd_cv, "theory": cmd_theory, "report": cmd_report}


def _print_table(header, rows) -> None:
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    sidecar(out, f"start {cfg.subcommand} config_hash={cfg.config_hash}")
    t0 = time.perf_counter()
    code = COMMANDS[cfg.subcommand](cfg, out)
    sidecar(out, f"end {cfg.subcommand} exit={code} seconds={time.perf_counter() - t0:.2f}")
    return code


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="samples x features CSV/TSV (report: results directory)")
    common.add_argument("--labels", help="CSV with sample_id,label")
    common.add_argument("--pcs", nargs="+", help="principal component counts, e.g. --pcs 200 500 1000")
    common.add_argument("--model", nargs="+", choices=[*MODELS, "all"], help="models to report")
    common.add_argument("--seed", type=int)
    common.add_argument("--folds", type=int, help="k for stratified k-fold")
    common.add_argument("--test-fraction", type=float, dest="test_fraction")
    common.add_argument("--out", help="output directory")
    common.add_argument("--split", help="split.json from the split subcommand")
    common.add_argument("--bundle", help="bundle JSON from train (eval only)")
    common.add_argument("--positive", help="positive class name or index for binary metrics")
    common.add_argument("--skip-normalization", action="store_true", dest="skip_normalization", help="input is already normalized; skip CPM filter and logCPM")
    common.add_argument("--top-var", type=int, dest="top_var", help="keep the N highest-variance features (fitted in-fold)")
    common.add_argument("--config", help="JSON config; flags override its values")
    common.add_argument("--quick", action="store_true", help="theory: smaller Monte-Carlo sizes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="protovote", description="Prototype + boosted-tree majority-vote classifiers for expression data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "prep": "filter, normalize and select features; write the processed matrix",
        "split": "write a stratified train/test or k-fold plan",
        "train": "fit the transform and all voters, write a model bundle",
        "eval": "train/test metrics per model and PC count",
        "cv": "k-fold accuracy / balanced accuracy per model",
        "theory": "run the Monte-Carlo bound checks",
        "report": "aggregate eval/cv results into an accuracy-vs-PCs table",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    shown = warnings.showwarning
    warnings.showwarning = lambda message, category, *a, **k: print(f"protovote: warning: {message}", file=sys.stderr)
    try:
        cfg = resolve_config(args)
        return run(cfg)
    except ConfigurationError as e:
        print(f"protovote: error: {e}", file=sys.stderr)
        return 2
    except (ProtovoteError, ValueError, OSError) as e:
        print(f"protovote: error: {e}", file=sys.stderr)
        return 3
    finally:
        warnings.showwarning = shown


if __name__ == "__main__":
    sys.exit(main())

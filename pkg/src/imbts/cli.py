"""Command-line front end: ``generate``, ``run``, ``bench`` and ``report``.

A run is described by a JSON config document (``--config``); individual
flags override its fields. The whole config is validated before any data
is read or any model is trained.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from . import __version__
from .data import (CsvSchema, DataError, Dataset, SynthConfig, imbalance_ratio, load_csv,
                   synth_generate, write_csv)
from .harness import (MODES, REPORT_VERSION, ExperimentReport, TrainConfig, run_benchmark,
                      run_cross_validation)
from .metrics import HEADLINE
from .models import MODEL_KINDS, ModelError, resolve_hparams
from .resampling import METHODS, SamplerConfig, SamplingError

log = logging.getLogger("imbts")

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_TOP_KEYS = {"version", "data", "model", "model_overrides", "train", "sampler", "folds",
             "n_jobs", "out", "bench"}
_DATA_KEYS = {"csv", "synth"}
_TRAIN_KEYS = {"mode", "epochs", "batch_size", "lr", "beta1", "beta2", "epsilon", "seed",
               "threshold", "lambda_assign"}
_SAMPLER_KEYS = {"method", "k_neighbors", "target_ratio"}
_BENCH_KEYS = {"models", "modes", "samplers", "sampler_defaults"}
_SYNTH_KEYS = {f.name for f in fields(SynthConfig)}


class ConfigError(ValueError):
    """A config document or flag is invalid; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    """Validated experiment description shared by all commands."""

    model: str = "cnn"
    model_overrides: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig | None = None
    csv_path: Path | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    folds: int = 10
    n_jobs: int = 1
    out: Path | None = None
    bench_models: list[str] = field(default_factory=lambda: ["cnn"])
    bench_modes: list[str] = field(default_factory=lambda: ["plain", "cost_sensitive"])
    bench_samplers: list[str] = field(default_factory=list)
    sampler_defaults: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        """JSON-ready echo of the config (no wall-clock or host data)."""
        return {
            "version": CONFIG_VERSION,
            "model": self.model,
            "model_overrides": self.model_overrides,
            "train": self.train.to_dict(),
            "data": {"csv": str(self.csv_path)} if self.csv_path else {"synth": asdict(self.synth)},
            "folds": self.folds,
        }


# ------------------------------------------------------------- validation

def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    if not isinstance(given, dict):
        raise ConfigError(section, "must be a JSON object")
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}" if section else unknown[0], "unknown key")


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(name, f"must be a positive integer, got {value!r}")
    return value


def _merge_flags(doc: dict, args: argparse.Namespace) -> dict:
    doc = copy.deepcopy(doc)
    train = doc.setdefault("train", {})
    if getattr(args, "model", None) is not None:
        doc["model"] = args.model
    if getattr(args, "mode", None) is not None:
        train["mode"] = args.mode
    if getattr(args, "sampler", None) is not None:
        doc["sampler"] = {**(doc.get("sampler") or {}), "method": args.sampler}
        train.setdefault("mode", "sampled")
    if getattr(args, "folds", None) is not None:
        doc["folds"] = args.folds
    if getattr(args, "epochs", None) is not None:
        train["epochs"] = args.epochs
    if getattr(args, "batch_size", None) is not None:
        train["batch_size"] = args.batch_size
    if getattr(args, "seed", None) is not None:
        if args.command == "generate":
            doc.setdefault("data", {}).setdefault("synth", {})["seed"] = args.seed
        else:
            train["seed"] = args.seed
    if getattr(args, "data", None) is not None:
        doc["data"] = {"csv": args.data}
    if getattr(args, "out", None) is not None:
        doc["out"] = args.out
    return doc


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document completely; raises :class:`ConfigError`."""
    _check_keys("", doc, _TOP_KEYS)
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported config version {version!r}")
    cfg = RunConfig()

    cfg.model = doc.get("model", cfg.model)
    if cfg.model not in MODEL_KINDS:
        raise ConfigError("model", f"unknown model {cfg.model!r}; expected one of {MODEL_KINDS}")
    cfg.model_overrides = doc.get("model_overrides") or {}
    try:
        resolve_hparams(cfg.model, cfg.model_overrides)
    except ModelError as exc:
        raise ConfigError("model_overrides", str(exc)) from None

    sampler_doc = doc.get("sampler")
    if sampler_doc is not None:
        _check_keys("sampler", sampler_doc, _SAMPLER_KEYS)
        method = sampler_doc.get("method")
        if method not in METHODS:
            raise ConfigError("sampler.method", f"unknown sampler {method!r}; expected one of {METHODS}")
        try:
            cfg.sampler = SamplerConfig(**sampler_doc)
        except (SamplingError, TypeError) as exc:
            raise ConfigError("sampler", str(exc)) from None

    train_doc = doc.get("train") or {}
    _check_keys("train", train_doc, _TRAIN_KEYS)
    mode = train_doc.get("mode", "sampled" if cfg.sampler else "cost_sensitive")
    if mode not in MODES:
        raise ConfigError("train.mode", f"unknown mode {mode!r}; expected one of {MODES}")
    for key in ("epochs", "batch_size"):
        if key in train_doc:
            _positive_int(f"train.{key}", train_doc[key])
    try:
        cfg.train = TrainConfig(**{**train_doc, "mode": mode,
                                   "sampler": cfg.sampler if mode == "sampled" else None})
    except (ValueError, TypeError) as exc:
        raise ConfigError("train", str(exc)) from None
    if mode == "sampled" and cfg.sampler is None:
        raise ConfigError("sampler", "mode 'sampled' needs a sampler")

    data_doc = doc.get("data") or {"synth": {}}
    _check_keys("data", data_doc, _DATA_KEYS)
    if "csv" in data_doc and "synth" in data_doc:
        raise ConfigError("data", "give either csv or synth, not both")
    if "csv" in data_doc:
        cfg.csv_path = Path(data_doc["csv"])
    else:
        synth_doc = data_doc.get("synth") or {}
        _check_keys("data.synth", synth_doc, _SYNTH_KEYS)
        try:
            cfg.synth = SynthConfig(**synth_doc)
        except (DataError, TypeError) as exc:
            raise ConfigError("data.synth", str(exc)) from None

    cfg.folds = _positive_int("folds", doc.get("folds", cfg.folds))
    if cfg.folds < 2:
        raise ConfigError("folds", "need at least 2 folds")
    cfg.n_jobs = _positive_int("n_jobs", doc.get("n_jobs", cfg.n_jobs))
    if doc.get("out") is not None:
        cfg.out = Path(doc["out"])

    bench_doc = doc.get("bench") or {}
    _check_keys("bench", bench_doc, _BENCH_KEYS)
    cfg.bench_models = list(bench_doc.get("models", [cfg.model]))
    cfg.bench_modes = list(bench_doc.get("modes", cfg.bench_modes))
    cfg.bench_samplers = list(bench_doc.get("samplers", cfg.bench_samplers))
    cfg.sampler_defaults = dict(bench_doc.get("sampler_defaults", {}))
    for m in cfg.bench_models:
        if m not in MODEL_KINDS:
            raise ConfigError("bench.models", f"unknown model {m!r}")
    for m in cfg.bench_modes:
        if m not in MODES:
            raise ConfigError("bench.modes", f"unknown mode {m!r}")
    for s in cfg.bench_samplers:
        if s not in METHODS:
            raise ConfigError("bench.samplers", f"unknown sampler {s!r}")
    if "sampled" in cfg.bench_modes and not cfg.bench_samplers:
        raise ConfigError("bench.samplers", "mode 'sampled' listed without samplers")
    _check_keys("bench.sampler_defaults", cfg.sampler_defaults, {"k_neighbors", "target_ratio"})
    return cfg


def load_config(args: argparse.Namespace) -> RunConfig:
    doc: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"{path} is not valid JSON: {exc}") from None
    cfg = parse_config(_merge_flags(doc, args))
    if cfg.csv_path is not None and args.command != "generate" and not cfg.csv_path.is_file():
        raise ConfigError("data.csv", f"no such file {cfg.csv_path}")
    return cfg


def load_data(cfg: RunConfig) -> Dataset:
    if cfg.csv_path is not None:
        return load_csv(cfg.csv_path, CsvSchema())
    return synth_generate(cfg.synth)


# ---------------------------------------------------------------- tables

def format_cell(agg: dict | None) -> str:
    if not agg or agg.get("mean") is None:
        return "nan"
    return f"{agg['mean']:.4f} ({agg['std']:.4f})"


def render_table(rows: list[tuple[str, dict]], columns=HEADLINE) -> str:
    """Rows of ``(label, aggregates)`` as a text table; ``*`` marks each column's best mean."""
    best = {}
    for col in columns:
        means = [a[col]["mean"] for _, a in rows if a.get(col) and a[col].get("mean") is not None]
        best[col] = max(means) if means else None
    cells = []
    for label, aggs in rows:
        line = [label]
        for col in columns:
            text = format_cell(aggs.get(col))
            if best[col] is not None and aggs.get(col) and aggs[col].get("mean") == best[col]:
                text += "*"
            line.append(text)
        cells.append(line)
    header = ["method", *columns]
    widths = [max(len(r[i]) for r in [header, *cells]) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*r) for r in cells]
    return "\n".join(out)


def report_label(report: ExperimentReport) -> str:
    cell = report.config.get("cell")
    if cell:
        return cell["label"]
    train = report.config.get("train", {})
    sampler = (train.get("sampler") or {}).get("method")
    return f"{report.config.get('model')}/{sampler or train.get('mode')}"


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


# --------------------------------------------------------------- commands

def cmd_generate(cfg: RunConfig) -> int:
    out = cfg.out or Path("synthetic.csv")
    data = synth_generate(cfg.synth)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, out)
    manifest = {"version": CONFIG_VERSION, "seed": cfg.synth.seed, "n_pos": data.n_pos,
                "n_neg": data.n_neg, "rows": len(data), "ir": imbalance_ratio(data),
                "synth": asdict(cfg.synth), "generator": f"imbts {__version__}"}
    write_json(manifest_path(out), manifest)
    print(f"wrote {len(data)} rows to {out} (IR {manifest['ir']:.4f})")
    return EXIT_OK


def manifest_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.name + ".manifest.json")


def cmd_run(cfg: RunConfig) -> int:
    data = load_data(cfg)
    report = run_cross_validation(data, cfg.model, cfg.train, cfg.folds, cfg.model_overrides,
                                  n_jobs=cfg.n_jobs)
    report.config["run"] = cfg.snapshot()
    out = cfg.out or Path("report.json")
    write_json(out, report.to_dict())
    print(render_table([(report_label(report), report.aggregates)]))
    print(f"report written to {out}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    data = load_data(cfg)
    base = TrainConfig(**{**asdict(cfg.train), "mode": "plain", "sampler": None})
    overrides = {kind: cfg.model_overrides for kind in cfg.bench_models
                 if kind == cfg.model and cfg.model_overrides}
    reports = run_benchmark(data, cfg.bench_models, cfg.bench_modes, cfg.bench_samplers, base,
                            cfg.folds, overrides, cfg.sampler_defaults or None)
    out_dir = cfg.out or Path("bench")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failed = [], []
    for rep in reports:
        cell = rep.config["cell"]
        name = f"cell{cell['index']:03d}_{cell['label'].replace('/', '_')}.json"
        write_json(out_dir / name, rep.to_dict())
        if rep.error:
            failed.append(f"{cell['label']}: {rep.error}")
        else:
            rows.append((cell["label"], rep.aggregates))
    table = render_table(rows)
    if failed:
        table += "\n\nfailed cells:\n" + "\n".join(f"  {f}" for f in failed)
    (out_dir / "summary.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK if not failed else EXIT_RUNTIME


def read_report(path: Path) -> ExperimentReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("report", f"cannot read {path}: {exc}") from None
    if doc.get("version") != REPORT_VERSION:
        raise ConfigError("report", f"{path}: schema version {doc.get('version')!r}, "
                                    f"expected {REPORT_VERSION}")
    return ExperimentReport.from_dict(doc)


def lambda_rows(report: ExperimentReport) -> list[dict]:
    rows = []
    for fold in report.folds:
        for rec in fold.get("lambda_trajectory", []):
            rows.append({"fold": fold["fold"], **rec})
    return rows


def cmd_report(paths: list[str], lambda_csv: str | None) -> int:
    reports = [read_report(Path(p)) for p in paths]
    rows = [(report_label(r), r.aggregates) for r in reports if not r.error]
    print(render_table(rows))
    if lambda_csv:
        out = Path(lambda_csv)
        out.parent.mkdir(parents=True, exist_ok=True)
        cols = ["report", "fold", "epoch", "batch", "lambda_minority", "gmean", "acc"]
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for i, rep in enumerate(reports):
                for row in lambda_rows(rep):
                    w.writerow({"report": i, **{k: ("" if row[k] is None else row[k])
                                                for k in cols[1:]}})
        print(f"lambda trajectory written to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ entry

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imbts", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"imbts {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_training=True):
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--seed", type=int, help="seed (synthetic data for generate, training otherwise)")
        p.add_argument("--out", help="output file or directory")
        if with_training:
            p.add_argument("--model", help=f"one of {', '.join(MODEL_KINDS)}")
            p.add_argument("--mode", help=f"one of {', '.join(MODES)}")
            p.add_argument("--sampler", help="sampling method (implies mode 'sampled')")
            p.add_argument("--folds", type=int, help="number of cross-validation folds")
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", type=int)
            p.add_argument("--data", help="CSV dataset instead of synthetic data")
            p.add_argument("--jobs", type=int, dest="n_jobs", help="concurrent folds")

    common(sub.add_parser("generate", help="write a seeded synthetic dataset"), with_training=False)
    common(sub.add_parser("run", help="cross-validate one configuration"))
    common(sub.add_parser("bench", help="run a model x mode x sampler matrix"))
    rep = sub.add_parser("report", help="render saved reports")
    rep.add_argument("reports", nargs="+")
    rep.add_argument("--lambda-csv", help="export the per-batch lambda trajectory as CSV")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.reports, args.lambda_csv)
        if getattr(args, "n_jobs", None) is not None:
            _positive_int("--jobs", args.n_jobs)
        cfg = load_config(args)
        if getattr(args, "n_jobs", None) is not None:
            cfg.n_jobs = args.n_jobs
        return {"generate": cmd_generate, "run": cmd_run, "bench": cmd_bench}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

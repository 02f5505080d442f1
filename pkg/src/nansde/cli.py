"""Command-line experiment runner.

Four subcommands cover the full protocol:

* ``generate-fbm`` — write a fractional-Brownian-motion ensemble CSV,
* ``train`` — calibrate a generator to a CSV dataset per a JSON config,
* ``evaluate`` — score a trained checkpoint against a dataset,
* ``compare`` — train and score the full model and its memoryless
  (ell2-clamped) reduction under identical seeds and budgets.

Every command writes a manifest echoing the exact effective settings, and
all outputs are deterministic functions of those settings: rerunning a
command reproduces its files byte for byte.  Configuration is a flat JSON
object; all seeds are explicit (nothing falls back to the clock).
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import ioutil
from .errors import DataError, IngestError, NansdeError
from .grid import unit_grid
from .integrator import NET_NAMES, NansdeModel
from .metrics import compute_report
from .neural import params_from_text, params_to_text
from .noise import FbmConfig, Path, fbm_path
from .rng import NoiseSeed
from .training import TrainConfig, TrainState, fit

RUN_MANIFEST_TAG = "nansde-run v1"


# ---------------------------------------------------------------------------
# Data ingestion
# ---------------------------------------------------------------------------

MIN_POINTS = 65


@dataclass(frozen=True)
class Dataset:
    """A CSV series made ready for training: positive values on [0, 1].

    ``shift`` is the additive constant applied to enforce positivity
    (0 when the raw data was already positive); the raw values are kept so
    preprocessing is trivially invertible.
    """

    name: str
    raw_values: np.ndarray
    raw_times: np.ndarray | None
    shift: float
    path: Path

    def restore_raw(self) -> np.ndarray:
        """Undo the positivity shift."""
        return self.path.values - self.shift


def ingest_csv(file) -> Dataset:
    """Parse a one-column (value) or two-column (t,value) CSV into a Dataset.

    An optional header row is detected by failing to parse as numbers.
    Values with min <= 0 are shifted by 1 - min so log-returns exist; time
    is discarded in favor of a uniform [0, 1] grid with dt = 1/T.
    """
    file = pathlib.Path(file)
    try:
        lines = file.read_text().splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read {file}: {exc}") from exc

    rows: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(lines, start=1):
        if line.strip():
            rows.append((lineno, [cell.strip() for cell in line.split(",")]))
    if not rows:
        raise IngestError(f"{file} contains no data")

    def parse_row(lineno: int, cells: list[str]) -> tuple[float | None, float]:
        try:
            if len(cells) == 1:
                return None, float(cells[0])
            if len(cells) == 2:
                return float(cells[0]), float(cells[1])
        except ValueError as exc:
            raise IngestError(f"{file}, line {lineno}: {exc}", line=lineno) from exc
        raise IngestError(
            f"{file}, line {lineno}: expected 1 or 2 columns, got {len(cells)}",
            line=lineno,
        )

    start = 0
    try:
        parse_row(*rows[0])
    except IngestError:
        start = 1  # header row
        if len(rows) == 1:
            raise IngestError(f"{file} contains only a header")

    width = len(rows[start][1])
    times, values = [], []
    for lineno, cells in rows[start:]:
        if len(cells) != width:
            raise IngestError(
                f"{file}, line {lineno}: expected {width} columns, got {len(cells)}",
                line=lineno,
            )
        t, v = parse_row(lineno, cells)
        times.append(t)
        values.append(v)

    if len(values) < MIN_POINTS:
        raise DataError(
            f"{file}: dataset too short ({len(values)} points; need {MIN_POINTS})"
        )
    raw_values = np.array(values)
    if not np.isfinite(raw_values).all():
        raise IngestError(f"{file}: non-finite values present")
    raw_times = None if width == 1 else np.array(times)

    low = raw_values.min()
    shift = 1.0 - low if low <= 0.0 else 0.0
    shifted = raw_values + shift
    grid = unit_grid(len(values) - 1)
    return Dataset(file.stem, raw_values, raw_times, float(shift), Path(grid, shifted))


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

CONFIG_DEFAULTS = {
    "widths": [1, 20, 1],
    "m": 128,
    "lr": 0.004,
    "max_iters": 1000,
    "early_stop_patience": 200,
    "kde_floor": 1e-12,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    "clamp_ell2": False,
    "eval_m": 128,
    "eval_lags": 0,  # 0 means min(100, T/4)
    "eval_bins": 50,
    "r2_pred": 64,
}
CONFIG_REQUIRED = ("data", "seed", "out_dir")
# init_seed and eval_seed default to the main seed when absent.
CONFIG_OPTIONAL = ("init_seed", "eval_seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved flat-key configuration for train/compare runs."""

    data: str
    seed: int
    out_dir: str
    init_seed: int
    eval_seed: int
    widths: tuple[int, ...]
    m: int
    lr: float
    max_iters: int
    early_stop_patience: int
    kde_floor: float
    adam_beta1: float
    adam_beta2: float
    adam_eps: float
    clamp_ell2: bool
    eval_m: int
    eval_lags: int
    eval_bins: int
    r2_pred: int

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            seed=NoiseSeed(self.seed, 0),
            m=self.m,
            lr=self.lr,
            max_iters=self.max_iters,
            early_stop_patience=self.early_stop_patience,
            kde_floor=self.kde_floor,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )

    def manifest_settings(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


def load_experiment_config(path) -> ExperimentConfig:
    """Read and validate a flat JSON config; unknown keys are rejected."""
    path = pathlib.Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config {path} must be a JSON object")

    known = set(CONFIG_DEFAULTS) | set(CONFIG_REQUIRED) | set(CONFIG_OPTIONAL)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DataError(f"config {path}: unknown keys {unknown}")
    missing = sorted(k for k in CONFIG_REQUIRED if k not in raw)
    if missing:
        raise DataError(f"config {path}: missing required keys {missing}")

    merged = dict(CONFIG_DEFAULTS)
    merged.update(raw)
    merged.setdefault("init_seed", merged["seed"])
    merged.setdefault("eval_seed", merged["seed"])
    widths = merged.pop("widths")
    if not isinstance(widths, list) or len(widths) < 2:
        raise DataError(f"config {path}: widths must be a list of at least 2 ints")
    try:
        return ExperimentConfig(widths=tuple(int(w) for w in widths), **merged)
    except (TypeError, ValueError) as exc:
        raise DataError(f"config {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def write_run_artifacts(
    out_dir, cfg: ExperimentConfig, dataset: Dataset, model: NansdeModel, state: TrainState
):
    """Checkpoint files (one per network), loss history, and the manifest."""
    out_dir = pathlib.Path(out_dir)
    for name in NET_NAMES:
        ioutil.atomic_write_text(out_dir / f"{name}.txt", params_to_text(model.net(name)))
    ioutil.atomic_write_text(out_dir / "loss.csv", ioutil.loss_csv_text(state.history))
    manifest = {
        "format": RUN_MANIFEST_TAG,
        "command": "train",
        "settings": cfg.manifest_settings(),
        "dataset": {
            "name": dataset.name,
            "n_points": int(dataset.path.values.size),
            "shift": ioutil.fmt(dataset.shift),
            "x0": ioutil.fmt(dataset.path.values[0]),
        },
        "results": {
            "best_loss": ioutil.fmt(state.best_loss),
            "best_iteration": state.best_iteration,
            "iterations": state.iteration,
            "warnings": state.warnings,
        },
        "model": {
            "widths": list(model.drift_net.widths),
            "clamp_ell2": model.clamp_ell2,
        },
    }
    ioutil.write_manifest(out_dir / "manifest.json", manifest)


def load_checkpoint(checkpoint_dir, dataset: Dataset) -> NansdeModel:
    """Rebuild a model from checkpoint files, re-anchored to a dataset.

    The grid and start value come from the dataset being evaluated (model
    time is always [0, 1]); widths and the ell2 clamp come from the
    checkpoint manifest.
    """
    checkpoint_dir = pathlib.Path(checkpoint_dir)
    manifest_path = checkpoint_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no manifest.json under {checkpoint_dir}")
    manifest = ioutil.read_manifest(manifest_path)
    if manifest.get("format") != RUN_MANIFEST_TAG:
        raise DataError(f"{manifest_path}: unrecognized manifest format")
    nets = {}
    for name in NET_NAMES:
        net_path = checkpoint_dir / f"{name}.txt"
        if not net_path.exists():
            raise DataError(f"missing checkpoint file {net_path}")
        nets[name] = params_from_text(net_path.read_text())
    return NansdeModel(
        nets["drift"],
        nets["diffusion"],
        nets["ell1"],
        nets["ell2"],
        grid=dataset.path.grid,
        x0=float(dataset.path.values[0]),
        clamp_ell2=bool(manifest["model"]["clamp_ell2"]),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate_fbm(args) -> int:
    grid = unit_grid(args.n_steps)
    cfg = FbmConfig(args.hurst, grid)
    matrix = np.column_stack(
        [fbm_path(cfg, NoiseSeed(args.seed, j)).values for j in range(args.n_paths)]
    )
    out = pathlib.Path(args.out)
    ioutil.atomic_write_text(out, ioutil.ensemble_csv_text(grid.times(), matrix))
    ioutil.write_manifest(
        out.with_name(out.name + ".manifest.json"),
        {
            "format": RUN_MANIFEST_TAG,
            "command": "generate-fbm",
            "settings": {
                "hurst": args.hurst,
                "n_steps": args.n_steps,
                "n_paths": args.n_paths,
                "seed": args.seed,
                "out": str(args.out),
            },
        },
    )
    print(f"wrote {args.n_paths} path(s) of {args.n_steps} steps to {out}")
    return 0


def _evaluate_to_rows(
    dataset: Dataset, model: NansdeModel, label: str, eval_seed: int, cfg: ExperimentConfig
):
    n_lags = cfg.eval_lags if cfg.eval_lags > 0 else None
    report, details = compute_report(
        dataset.path,
        model,
        m_eval=cfg.eval_m,
        seed=eval_seed,
        n_bins=cfg.eval_bins,
        n_lags=n_lags,
        m_pred=cfg.r2_pred,
    )
    details["model"] = label
    return report, details


def cmd_train(args) -> int:
    cfg = load_experiment_config(args.config)
    dataset = ingest_csv(cfg.data)
    model, state = fit(
        dataset.path,
        cfg.train_config(),
        cfg.init_seed,
        widths=cfg.widths,
        clamp_ell2=cfg.clamp_ell2,
    )
    write_run_artifacts(cfg.out_dir, cfg, dataset, model, state)
    print(
        f"trained on {dataset.name}: best loss {state.best_loss:.6g} "
        f"at iteration {state.best_iteration} ({state.iteration} iterations)"
    )
    print(f"artifacts in {cfg.out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    dataset = ingest_csv(args.data)
    model = load_checkpoint(args.checkpoint, dataset)
    n_lags = args.lags if args.lags > 0 else None
    report, details = compute_report(
        dataset.path,
        model,
        m_eval=args.eval_m,
        seed=args.seed,
        n_bins=args.bins,
        n_lags=n_lags,
        m_pred=args.r2_pred,
    )
    out_dir = pathlib.Path(args.out)
    label = pathlib.Path(args.checkpoint).name or "model"
    ioutil.atomic_write_text(out_dir / "report.csv", ioutil.report_csv_text([(label, report)]))
    ioutil.atomic_write_text(out_dir / "detail.txt", ioutil.detail_text(details))
    ioutil.write_manifest(
        out_dir / "manifest.json",
        {
            "format": RUN_MANIFEST_TAG,
            "command": "evaluate",
            "settings": {
                "checkpoint": str(args.checkpoint),
                "data": str(args.data),
                "seed": args.seed,
                "eval_m": args.eval_m,
                "lags": args.lags,
                "bins": args.bins,
                "r2_pred": args.r2_pred,
                "out": str(args.out),
            },
        },
    )
    print(
        f"{label}: hurst {report.hurst_mean:.4f} +/- {report.hurst_std:.4f}, "
        f"tv {report.tv:.4f}, acf {report.acf_score:.4f}, "
        f"weighted acf {report.weighted_acf_score:.4f}, r2 {report.r2:.4f}"
    )
    print(f"report in {out_dir}")
    return 0


def cmd_compare(args) -> int:
    cfg = load_experiment_config(args.config)
    dataset = ingest_csv(cfg.data)
    out_dir = pathlib.Path(cfg.out_dir)
    rows = []
    all_details = []
    for label, clamp in (("nansde", False), ("sde", True)):
        sub = replace(cfg, clamp_ell2=clamp, out_dir=str(out_dir / label))
        model, state = fit(
            dataset.path,
            sub.train_config(),
            sub.init_seed,
            widths=sub.widths,
            clamp_ell2=clamp,
        )
        write_run_artifacts(sub.out_dir, sub, dataset, model, state)
        report, details = _evaluate_to_rows(dataset, model, label, sub.eval_seed, sub)
        rows.append((label, report))
        all_details.append(details)
        print(
            f"{label}: best loss {state.best_loss:.6g}, hurst {report.hurst_mean:.4f} "
            f"+/- {report.hurst_std:.4f}, tv {report.tv:.4f}, r2 {report.r2:.4f}"
        )
    ioutil.atomic_write_text(out_dir / "comparison.csv", ioutil.report_csv_text(rows))
    detail_lines = []
    for details in all_details:
        label = details.pop("model")
        for key in sorted(details):
            value = details[key]
            rendered = ioutil.fmt(value) if isinstance(value, float) else str(value)
            detail_lines.append(f"{label}.{key} {rendered}")
    ioutil.atomic_write_text(out_dir / "comparison_detail.txt", "\n".join(detail_lines) + "\n")
    ioutil.write_manifest(
        out_dir / "manifest.json",
        {
            "format": RUN_MANIFEST_TAG,
            "command": "compare",
            "settings": cfg.manifest_settings(),
        },
    )
    print(f"comparison in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _hurst_arg(value: str) -> float:
    h = float(value)
    if not 0.0 < h < 1.0:
        raise argparse.ArgumentTypeError(f"hurst must lie in (0, 1), got {h}")
    return h


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nansde",
        description="Train and evaluate memory-aware neural SDE generators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-fbm", help="write a fractional Brownian motion ensemble CSV")
    p.add_argument("--hurst", type=_hurst_arg, required=True, help="Hurst index in (0, 1)")
    p.add_argument("--n-steps", type=_positive_int, default=1000, help="steps on [0, 1]")
    p.add_argument("--n-paths", type=_positive_int, default=1, help="independent paths")
    p.add_argument("--seed", type=int, required=True, help="base noise seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_generate_fbm)

    p = sub.add_parser("train", help="calibrate a generator per a JSON config")
    p.add_argument("--config", required=True, help="flat JSON experiment config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained checkpoint against a dataset")
    p.add_argument("--checkpoint", required=True, help="directory written by train")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--seed", type=int, required=True, help="evaluation seed")
    p.add_argument("--eval-m", type=_positive_int, default=128, help="evaluation ensemble size")
    p.add_argument("--lags", type=int, default=0, help="ACF lag count (0 = min(100, T/4))")
    p.add_argument("--bins", type=_positive_int, default=50, help="interior histogram bins")
    p.add_argument("--r2-pred", type=_positive_int, default=64, help="one-step prediction samples")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="train and score the full and ell2-clamped models")
    p.add_argument("--config", required=True, help="flat JSON experiment config")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NansdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

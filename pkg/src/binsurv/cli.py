"""Command-line interface: prepare, train, evaluate, ablate, synth.

Exit codes: 0 on success, 1 on runtime failure, 2 on configuration or input
validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, build_config, parse_config_file
from .data import (
    CsvFormatError, DegenerateGridError, FeatureScaler, SurvivalDataset,
    apply_scaler, bin_dataset, build_time_grid, load_csv, load_grid, save_grid,
    split_dataset, write_csv,
)
from .losses import LossWeights
from .metrics import (
    UndefinedMetricError, evaluate_model, select_cutoff, write_curve_csv,
    write_report_csv,
)
from .model import apply_head, forward, load_checkpoint, predict_risk, save_checkpoint
from .svgplot import line_plot_svg
from .synth import SynthConfig, bayes_c_index, generate
from .training import fit, write_history_csv

log = logging.getLogger(__name__)

DEFAULT_ABLATION_ROWS = (
    ("mle",),
    ("rank",),
    ("time_rank",),
    ("mle", "rank"),
    ("mle", "time_rank"),
    ("mle", "time_rank", "calibration"),
)
_ABLATION_COMPONENTS = ("mle", "rank", "time_rank", "calibration")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--data", help="input CSV (overrides the config file)")
    parser.add_argument("--time-col", help="name of the time column")
    parser.add_argument("--event-col", help="name of the event column")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")


def _collect_config(args) -> ExperimentConfig:
    values: dict[str, str] = {}
    if args.config:
        values.update(parse_config_file(args.config))
    if args.data is not None:
        values["data"] = args.data
    if args.time_col is not None:
        values["time_col"] = args.time_col
    if args.event_col is not None:
        values["event_col"] = args.event_col
    if args.out is not None:
        values["out"] = args.out
    if args.seed is not None:
        values["seed"] = str(args.seed)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return build_config(values)


@dataclass
class _Splits:
    train: SurvivalDataset
    val: SurvivalDataset
    test: SurvivalDataset | None
    test_raw: SurvivalDataset | None
    scaler: FeatureScaler


def _load_splits(cfg: ExperimentConfig) -> _Splits:
    """Resolve single-file or pre-split data into standardized train/val(/test)."""
    if cfg.data:
        raw = load_csv(cfg.data, cfg.time_col, cfg.event_col, standardize=False)
        scaler = FeatureScaler.fit(raw.features)
        tr_raw, va_raw, te_raw = split_dataset(raw, cfg.split, cfg.seed)
        return _Splits(
            train=apply_scaler(tr_raw, scaler),
            val=apply_scaler(va_raw, scaler),
            test=apply_scaler(te_raw, scaler) if len(te_raw) else None,
            test_raw=te_raw if len(te_raw) else None,
            scaler=scaler,
        )
    if cfg.train_csv and cfg.val_csv:
        train = load_csv(cfg.train_csv, cfg.time_col, cfg.event_col)
        scaler = train.scaler
        val = load_csv(cfg.val_csv, cfg.time_col, cfg.event_col, scaler=scaler)
        test = None
        if cfg.test_csv:
            test = load_csv(cfg.test_csv, cfg.time_col, cfg.event_col, scaler=scaler)
        return _Splits(train=train, val=val, test=test, test_raw=None, scaler=scaler)
    raise ConfigError("provide either data= or train_csv= and val_csv=")


def _train_once(splits: _Splits, grid, cfg: ExperimentConfig,
                weights: LossWeights, out_dir: Path):
    """Shared train-and-persist path used by both `train` and `ablate`."""
    out_dir.mkdir(parents=True, exist_ok=True)
    train_b = bin_dataset(splits.train, grid)
    val_b = bin_dataset(splits.val, grid)
    model_cfg = cfg.model_config(splits.train.n_features)
    best, history = fit(train_b, val_b, model_cfg, weights, cfg.train_config())
    write_history_csv(history, out_dir / "history.csv")

    logits, _ = forward(best, splits.train.features, mode="eval")
    train_risks = predict_risk(apply_head(model_cfg.head, logits))
    try:
        cutoff = select_cutoff(train_risks, splits.train.times, splits.train.events)
    except UndefinedMetricError as exc:
        log.warning("no training cutoff stored: %s", exc)
        cutoff = None
    meta = {
        "scaler_mean": splits.scaler.mean.tolist(),
        "scaler_std": splits.scaler.std.tolist(),
        "feature_names": list(splits.train.feature_names),
        "time_col": cfg.time_col,
        "event_col": cfg.event_col,
        "seed": cfg.seed,
        "cutoff": cutoff,
    }
    save_checkpoint(out_dir / "checkpoint.json", best, meta)
    return best, history


def cmd_prepare(args) -> int:
    cfg = _collect_config(args)
    if not cfg.data:
        raise ConfigError("prepare needs data= (a single CSV to split)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = load_csv(cfg.data, cfg.time_col, cfg.event_col, standardize=False)
    train, val, test = split_dataset(raw, cfg.split, cfg.seed)
    for name, part in (("train", train), ("val", val), ("test", test)):
        write_csv(part, out / f"{name}.csv", cfg.time_col, cfg.event_col)
    grid = build_time_grid(train, cfg.k_bins)
    save_grid(grid, out / "grid.json")
    print(f"prepare: {len(raw)} rows -> train {len(train)} / val {len(val)} / "
          f"test {len(test)}; grid with {grid.k_bins} bins written to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _collect_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = _load_splits(cfg)
    if splits.test_raw is not None:
        # held-out rows stay raw; evaluation re-standardizes with the stored scaler
        write_csv(splits.test_raw, out / "test.csv", cfg.time_col, cfg.event_col)
    grid = build_time_grid(splits.train, cfg.k_bins)
    save_grid(grid, out / "grid.json")
    _, history = _train_once(splits, grid, cfg, cfg.loss_weights(), out)
    (out / "config_resolved.txt").write_text(
        "\n".join(cfg.resolved_lines()) + "\n", encoding="utf-8")
    scored = [r for r in history if r.val_c_index is not None]
    best = max(scored, key=lambda r: r.val_c_index) if scored else None
    if best is not None:
        print(f"train: {len(history)} epochs; best val C-index "
              f"{best.val_c_index:.4f} at epoch {best.epoch}; artifacts in {out}")
    else:
        print(f"train: {len(history)} epochs; artifacts in {out}")
    return 0


def cmd_evaluate(args) -> int:
    params, meta = load_checkpoint(args.checkpoint)
    grid = load_grid(args.grid)
    if grid.k_bins != params.config.k_bins:
        raise ConfigError(
            f"grid has {grid.k_bins} bins but the checkpoint was trained "
            f"with {params.config.k_bins}"
        )
    time_col = args.time_col or meta.get("time_col", "time")
    event_col = args.event_col or meta.get("event_col", "event")
    test_raw = load_csv(args.data, time_col, event_col, standardize=False)
    if test_raw.n_features != params.config.input_dim:
        raise ConfigError(
            f"test data has {test_raw.n_features} features but the checkpoint "
            f"expects {params.config.input_dim}"
        )
    if "scaler_mean" in meta:
        scaler = FeatureScaler(
            mean=np.asarray(meta["scaler_mean"], dtype=np.float64),
            std=np.asarray(meta["scaler_std"], dtype=np.float64),
        )
    else:
        scaler = FeatureScaler.fit(test_raw.features)
    test = apply_scaler(test_raw, scaler)
    report = evaluate_model(params, test, grid, cutoff=meta.get("cutoff"))
    out = Path(args.out or "eval")
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv")
    write_curve_csv(out / "brier_curve.csv", report.eval_times,
                    report.brier_curve, "brier")
    write_curve_csv(out / "tdauc_curve.csv", report.tdauc_times,
                    report.tdauc_curve, "tdauc")
    line_plot_svg(out / "tdauc.svg", report.tdauc_times,
                  [("TDAUC", report.tdauc_curve)],
                  title="Time-dependent AUC", xlabel="time", ylabel="TDAUC")
    print(f"evaluate: C-index {report.c_index:.4f}, IBS {report.ibs:.4f}, "
          f"mTDAUC {report.m_tdauc:.4f}, HR {report.hazard_ratio:.3f} "
          f"(cutoff from {report.cutoff_source}); report in {out}")
    return 0


def _parse_rows(text: str):
    rows = []
    for chunk in text.split(","):
        row = tuple(part.strip() for part in chunk.split("+") if part.strip())
        if not row:
            raise ConfigError(f"empty ablation row in {text!r}")
        rows.append(row)
    return tuple(rows)


def _row_weights(cfg: ExperimentConfig, row) -> LossWeights:
    for part in row:
        if part not in _ABLATION_COMPONENTS:
            raise ConfigError(
                f"unknown ablation component '{part}' "
                f"(expected one of {', '.join(_ABLATION_COMPONENTS)})"
            )
    if "rank" in row and "time_rank" in row:
        raise ConfigError("an ablation row cannot contain both pairwise terms")
    if "time_rank" in row:
        beta, kind = cfg.beta, "time_rank"
    elif "rank" in row:
        beta, kind = cfg.beta, "rank"
    else:
        beta, kind = 0.0, cfg.pairwise_kind
    try:
        return LossWeights(
            alpha=cfg.alpha if "mle" in row else 0.0,
            beta=beta,
            gamma=cfg.gamma if "calibration" in row else 0.0,
            sigma=cfg.sigma, rho=cfg.rho, g_bins=cfg.calib_bins,
            likelihood_mode=cfg.likelihood_mode,
            pairwise_sign=cfg.pairwise_sign,
            pairwise_kind=kind,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_ablate(args) -> int:
    cfg = _collect_config(args)
    rows = _parse_rows(args.rows) if args.rows else DEFAULT_ABLATION_ROWS
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = _load_splits(cfg)
    if splits.test is None:
        raise ConfigError("ablate needs a test split (single-CSV mode or test_csv=)")
    grid = build_time_grid(splits.train, cfg.k_bins)
    save_grid(grid, out / "grid.json")
    (out / "config_resolved.txt").write_text(
        "\n".join(cfg.resolved_lines()) + "\n", encoding="utf-8")

    lines = ["mle,rank,time_rank,calibration,c_index,ibs,m_tdauc"]
    for index, row in enumerate(rows, start=1):
        weights = _row_weights(cfg, row)
        row_dir = out / f"row_{index}_{'_'.join(row)}"
        params, _ = _train_once(splits, grid, cfg, weights, row_dir)
        report = evaluate_model(params, splits.test, grid, group_metrics=False)
        flags = [str(int(c in row)) for c in _ABLATION_COMPONENTS]
        lines.append(",".join(flags + [repr(report.c_index), repr(report.ibs),
                                       repr(report.m_tdauc)]))
        print(f"ablate [{'+'.join(row)}]: C-index {report.c_index:.4f}, "
              f"IBS {report.ibs:.4f}, mTDAUC {report.m_tdauc:.4f}")
    (out / "ablation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"ablate: summary written to {out / 'ablation.csv'}")
    return 0


def cmd_synth(args) -> int:
    try:
        synth_cfg = SynthConfig(
            n_samples=args.n, n_features=args.features,
            risk_model=args.risk_model, baseline=args.baseline,
            weibull_shape=args.weibull_shape,
            target_censor_rate=args.censor_rate, seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dataset, risks = generate(synth_cfg)
    out_csv = Path(args.out)
    if out_csv.parent != Path(""):
        out_csv.parent.mkdir(parents=True, exist_ok=True)
    write_csv(dataset, out_csv)
    ceiling = bayes_c_index(risks, dataset.times, dataset.events)
    sidecar = {
        "seed": synth_cfg.seed,
        "bayes_c_index": ceiling,
        "oracle_risks": risks.tolist(),
    }
    sidecar_path = out_csv.with_suffix(out_csv.suffix + ".oracle.json")
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")
    censored = float(np.mean(dataset.events == 0))
    print(f"synth: {len(dataset)} samples, censored fraction {censored:.3f}, "
          f"oracle C-index {ceiling:.4f}; wrote {out_csv} and {sidecar_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binsurv",
        description="Discrete-time survival modeling with ranking and "
                    "calibration objectives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a CSV and write train/val/test splits")
    _add_config_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model and write its artifacts")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on held-out data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", required=True, help="grid.json from training")
    p.add_argument("--data", required=True, help="held-out CSV")
    p.add_argument("--time-col")
    p.add_argument("--event-col")
    p.add_argument("--out", help="output directory (default: eval)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train one model per loss-component subset")
    _add_config_flags(p)
    p.add_argument("--rows", help="rows like 'mle,mle+time_rank' "
                                   "(default: the six standard subsets)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic survival dataset")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--features", type=int, default=10)
    p.add_argument("--risk-model", choices=("linear", "quadratic"), default="linear")
    p.add_argument("--baseline", choices=("exponential", "weibull"),
                   default="exponential")
    p.add_argument("--weibull-shape", type=float, default=1.5)
    p.add_argument("--censor-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synthetic.csv")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CsvFormatError, DegenerateGridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

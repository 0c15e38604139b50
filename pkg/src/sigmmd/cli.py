"""Command-line front end.

Every command writes a ``manifest.json`` next to its outputs. Wall-clock
timings go to a separate ``timing.json`` so that the remaining files are
bit-identical across runs with the same seed and ``--threads 1``.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import _backend, experiments, io
from .data import DEFAULT_SPLIT, ingest_csv
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    InvalidInputError,
    InvalidParameterError,
    NumericFault,
    StateError,
)
from .generator import GeneratorParams
from .heston import HestonParams
from .mmd import permutation_test
from .noise import NoiseModel, transform_returns
from .paths import augment_batch
from .sigkernel import SigKernelConfig, StaticKernelConfig
from .trainer import TrainConfig, ablation_variant, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DATA = 0, 2, 3, 4

DROP_ALIASES = {"prev": "prev_return", "dt": "dt", "both": "both", "none": "none"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {p}: {exc}") from exc
    return p


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"file not found: {p}")
    return p


def _finish(out: Path, command: str, args, seed, started: float) -> None:
    # the output location is not part of the configuration
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "threads", "out")}
    io.write_json(out / "manifest.json", io.manifest(command, cfg, seed))
    io.write_json(out / "timing.json", {"wall_clock_seconds": time.perf_counter() - started})


def _sig_config(args) -> SigKernelConfig:
    return SigKernelConfig(StaticKernelConfig("rational_quadratic", args.alpha, args.length_scale), args.order)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr, sig=_sig_config(args),
        k=args.k, n=args.n, noise_dim=args.noise_dim, hidden_size=args.hidden,
        seed=args.seed, max_steps=args.max_steps,
    )


def _config_from_meta(meta: dict) -> TrainConfig:
    c = dict(meta["train_config"])
    static = StaticKernelConfig(**c["sig"]["static"])
    c["sig"] = SigKernelConfig(static, c["sig"]["order"])
    c["input_mask"] = tuple(c["input_mask"])
    return TrainConfig(**c)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args):
    started = time.perf_counter()
    ds = ingest_csv(_existing(args.csv), args.date_column, args.close_column, args.split)
    out = _out_dir(args.out)
    io.save_dataset(out / "dataset.smd", ds)
    io.write_json(out / "ingest.json", {
        "rows": len(ds), "first": str(ds.dates[0]), "last": str(ds.dates[-1]),
        "split": str(ds.split), "train_rows": len(ds.train()),
    })
    _finish(out, "ingest", args, None, started)


def cmd_fit_noise(args):
    started = time.perf_counter()
    ds = io.load_dataset(_existing(args.data)).train()
    base = experiments.fit_series_noise(ds, args.p)
    report = {"lambert": asdict(base.lambert), "ma": {"omega": base.ma.omega, "betas": list(base.ma.betas)}}
    model = base
    if args.robust:
        model, windows = experiments.robust_noise(ds, base, args.drawdown, args.average, args.window)
        report["robust"] = {"windows": windows, "ma": {"omega": model.ma.omega, "betas": list(model.ma.betas)}}
    out = _out_dir(args.out)
    io.save_noise(out / "noise.smd", model)
    io.write_json(out / "noise.json", report)
    _finish(out, "fit-noise", args, None, started)


def _run_training(args, config: TrainConfig, command: str):
    started = time.perf_counter()
    ds = io.load_dataset(_existing(args.data)).train()
    model = io.load_noise(_existing(args.noise))
    if model.ma.p != config.ma_order:
        config = replace(config, ma_order=model.ma.p)
    source = experiments.series_source(ds, model, config)
    init = GeneratorParams.init(config.hidden_size, config.noise_dim, config.seed)
    out = _out_dir(args.out)
    params, report = train(config, source, init)
    meta = {"train_config": asdict(config)}
    io.save_params(out / "model.smd", params, meta)
    ma = report.moving_average(config.es_window)
    io.write_json(out / "train_report.json", {
        "losses": report.losses, "epochs": report.epochs, "stopped_early": report.stopped_early,
        "final_moving_avg": float(ma[-1]) if len(ma) else None, "input_mask": list(config.input_mask),
    })
    io.write_json(out / "timing.json", {"wall_clock_seconds": report.wall_clock})
    _finish(out, command, args, config.seed, started)


def cmd_train(args):
    _run_training(args, _train_config(args), "train")


def cmd_ablate(args):
    config = ablation_variant(_train_config(args), DROP_ALIASES[args.drop])
    _run_training(args, config, "ablate")


def _load_model(args):
    params, meta = io.load_params(_existing(args.model))
    config = _config_from_meta(meta)
    ds = io.load_dataset(_existing(args.data))
    model = io.load_noise(_existing(args.noise))
    return params, config, ds, model


def _anchor_index(ds, source, date: str | None):
    if date is None:
        return None
    d = np.datetime64(date, "D")
    hits = np.flatnonzero(ds.dates == d)
    if not len(hits):
        raise InvalidInputError(f"anchor date {date} is not a trading date in the data")
    return int(hits[0])


def cmd_generate(args):
    started = time.perf_counter()
    params, config, ds, model = _load_model(args)
    ds = ds.train()
    source = experiments.series_source(ds, model, config)
    anchor = _anchor_index(ds, source, args.anchor_date)
    paths, batch = experiments.sample_generated(params, source, config, args.count, args.seed, anchor)
    out = _out_dir(args.out)
    B, L = paths.shape
    io.write_series_csv(out / "generated.csv", {
        "path": np.repeat(np.arange(B), L),
        "step": np.tile(np.arange(L), B),
        "time": batch.times.reshape(-1),
        "log_price": paths.reshape(-1),
    })
    io.write_json(out / "generate.json", {"count": B, "length": L, "anchors": batch.anchors,
                                          "anchor_dates": [str(ds.dates[a]) for a in batch.anchors]})
    _finish(out, "generate", args, args.seed, started)


def _real_and_generated(args):
    params, config, ds, model = _load_model(args)
    part = ds.test() if args.split == "test" else ds.train()
    if args.split == "test":
        # test anchors draw their noise history through the training-fitted transform
        full = ds.between(None, None)
        history = transform_returns(model, np.diff(full.log_prices), full.dt)
        model = NoiseModel(model.lambert, model.ma, history, model.scale_mean, model.scale_std)
        offset = int(np.flatnonzero(ds.dates == part.dates[0])[0])
        source = experiments.series_source(full, model, config)
        source.anchors = source.anchors[source.anchors >= offset]
        if len(source.anchors) == 0:
            raise ConfigError("test period too short for the configured k and n")
    else:
        source = experiments.series_source(part, model, config)
    gen, batch = experiments.sample_generated(params, source, config, args.count, args.seed)
    return gen, batch, config


def cmd_evaluate(args):
    started = time.perf_counter()
    gen, batch, config = _real_and_generated(args)
    out = _out_dir(args.out)
    report = {}
    for name, paths in (("generated", gen), ("real", batch.ref_paths)):
        facts = experiments.stylized_facts(paths, args.max_lag)
        report[name] = {"moments": facts["moments"]}
        for key in ("acf", "acf_squared", "leverage"):
            if key in facts:
                io.write_series_csv(out / f"{name}_{key}.csv", facts[key])
        io.write_series_csv(out / f"{name}_gain_loss.csv", {k: v for k, v in facts["gain_loss"].items()
                                                           if k != "omitted"})
        io.write_series_csv(out / f"{name}_endpoints.csv", {"endpoint": facts["endpoints"]})
    io.write_json(out / "evaluate.json", report)
    _finish(out, "evaluate", args, args.seed, started)


def cmd_mmd_test(args):
    started = time.perf_counter()
    gen, batch, config = _real_and_generated(args)
    X = augment_batch(gen, batch.times, config.lead_lag)
    Y = augment_batch(batch.ref_paths, batch.times, config.lead_lag)
    res = permutation_test(X, Y, config.sig, args.permutations, args.seed)
    out = _out_dir(args.out)
    io.write_json(out / "mmd_test.json", {
        "statistic": res.statistic, "p_value": res.p_value, "p_value_raw": res.p_value_raw,
        "n_exceed": res.n_exceed, "n_permutations": res.n_permutations, "seed": res.seed, "count": args.count,
    })
    _finish(out, "mmd-test", args, args.seed, started)


def cmd_heston(args):
    started = time.perf_counter()
    if args.paper_params:
        exp = experiments.HestonExperiment.full_scale()
        exp = experiments.HestonExperiment(**{**asdict(exp), "seed": args.seed, "epochs": args.epochs,
                                              "max_steps": args.max_steps})
    else:
        exp = experiments.HestonExperiment(
            train_paths=args.train_paths, test_paths=args.test_paths, n_steps=args.steps,
            hidden_size=args.hidden, order=args.order, batch_size=args.batch, epochs=args.epochs,
            learning_rate=args.lr, permutations=args.permutations, max_steps=args.max_steps, seed=args.seed,
        )
    result = experiments.run_heston(exp, HestonParams.reference())
    out = _out_dir(args.out)
    table = {}
    for name, r in result["results"].items():
        io.save_params(out / f"model_{name}.smd", r["params"], {"experiment": result["config"]})
        table[name] = {k: v for k, v in r.items() if k not in ("params", "losses")}
        io.write_series_csv(out / f"losses_{name}.csv", {"step": np.arange(len(r["losses"])), "loss": r["losses"]})
    io.write_json(out / "heston.json", {"config": result["config"], "heston": result["heston"], "results": table})
    _finish(out, "heston", args, args.seed, started)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_train_args(p):
    p.add_argument("--data", required=True, help="dataset.smd from 'ingest'")
    p.add_argument("--noise", required=True, help="noise.smd from 'fit-noise'")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--n", type=int, default=299)
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--length-scale", type=float, default=0.1)
    p.add_argument("--noise-dim", type=int, default=4)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)


def _add_eval_args(p):
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigmmd", description="Signature-kernel MMD generative model for price series.")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (also SIGMMD_THREADS); 1 gives bit-reproducible runs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a date/close CSV and cache it")
    p.add_argument("csv")
    p.add_argument("--out", required=True)
    p.add_argument("--date-column", default="date")
    p.add_argument("--close-column", default="close")
    p.add_argument("--split", default=DEFAULT_SPLIT, help="first test date (ISO)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit-noise", help="fit the Lambert W + MA(p) noise model on training data")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--robust", action="store_true", help="refit the MA part on downturn windows")
    p.add_argument("--drawdown", type=float, default=0.30)
    p.add_argument("--average", action="store_true", help="average the per-window fits")
    p.add_argument("--window", type=int, default=None, help="window index when not averaging")
    p.set_defaults(func=cmd_fit_noise)

    p = sub.add_parser("train", help="train the generator")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="train with (r_prev, dt) inputs masked")
    _add_train_args(p)
    p.add_argument("--drop", choices=("dt", "prev", "both", "none"), required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("generate", help="sample generated paths")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--anchor-date", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="stylized-facts battery, generated vs real segments")
    _add_eval_args(p)
    p.add_argument("--max-lag", type=int, default=20)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mmd-test", help="permutation two-sample test, generated vs real segments")
    _add_eval_args(p)
    p.add_argument("--permutations", type=int, default=10000)
    p.set_defaults(func=cmd_mmd_test)

    p = sub.add_parser("heston", help="noise-distribution experiment on simulated Heston data")
    p.add_argument("--out", required=True)
    p.add_argument("--paper-params", action="store_true", help="full-size reference configuration")
    p.add_argument("--train-paths", type=int, default=1000)
    p.add_argument("--test-paths", type=int, default=200)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.003)
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_heston)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            _backend.set_threads(args.threads)
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, InvalidParameterError, StateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFault, ConvergenceError) as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, InvalidInputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

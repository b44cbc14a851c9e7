"""Command line: ``gen``, ``fit``, ``run``, ``report`` and ``bdp``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import bdp, config, datagen, experiments, losses, rand, report
from . import estimators as est

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser():
    parser = _Parser(prog="robust-elicit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="write a generated dataset as CSV")
    g.add_argument("--preset", default="reg-p20")
    g.add_argument("--r", type=float, default=0.0)
    g.add_argument("--scheme", choices=datagen.CONTAM_SCHEMES)
    g.add_argument("--snr", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--repetition", type=int, default=0)
    g.add_argument("--split", choices=("train", "test"), default="train")
    g.add_argument("-o", "--output")

    f = sub.add_parser("fit", help="fit one estimator on a dataset CSV")
    f.add_argument("--input", required=True)
    f.add_argument("--estimator", required=True,
                   choices=("ols", "lts", "lasso", "slts", "logit", "trimmed_logit", "l1_logit"))
    f.add_argument("--alpha", type=float, default=0.5)
    f.add_argument("--lam", type=float, default=0.1)
    f.add_argument("--n-starts", type=int, default=est.DEFAULT_N_STARTS)
    f.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="run an experiment and write a metrics CSV")
    r.add_argument("experiment", choices=sorted(experiments.RUNNERS))
    r.add_argument("--preset")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--V", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--scheme", choices=datagen.CONTAM_SCHEMES)
    r.add_argument("--snr", type=float)
    r.add_argument("--mu", type=float)
    r.add_argument("--r-grid", type=_csv_floats)
    r.add_argument("--r-val-grid", type=_csv_floats)
    r.add_argument("--cv", help="comma-separated schemes, e.g. randomized-B10,kfold-K5")
    r.add_argument("-o", "--output")

    rep = sub.add_parser("report", help="summarise a metrics CSV and draw SVG charts")
    rep.add_argument("--input", required=True)
    rep.add_argument("--out-dir", required=True)

    b = sub.add_parser("bdp", help="empirical breakdown point calculators")
    mode = b.add_mutually_exclusive_group(required=True)
    mode.add_argument("--empirical", action="store_true", help="print c / c(n_test, k)")
    mode.add_argument("--demo", action="store_true", help="count crafted instances needed to flip a comparison")
    b.add_argument("--c", type=float, default=1.0)
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--n-test", type=int, default=100)
    b.add_argument("--batches", type=int, default=1)
    b.add_argument("--gross", type=float, default=1e6)
    b.add_argument("--loss", choices=("squared", "arctan"), default="squared")
    b.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_gen(args, out):
    over = {}
    if args.scheme:
        over["contam_scheme"] = args.scheme
    if args.snr is not None:
        over["snr"] = args.snr
    if args.mu is not None:
        over["mu"] = args.mu
    cfg = datagen.preset(args.preset, **over)
    stream = lambda purpose: rand.derive_stream(args.seed, cfg.name, args.repetition, purpose)  # noqa: E731
    beta = datagen.draw_beta(cfg, stream("beta"))
    size = cfg.n if args.split == "train" else cfg.n_test
    data = datagen.generate(cfg, stream(args.split), size, beta)
    data = datagen.inject_contamination(data, cfg.contam_scheme, args.r, cfg.gross_value,
                                        stream(f"contam-{args.split}"))
    if args.output:
        datagen.write_dataset_csv(data, args.output)
    else:
        out.write(datagen.dataset_csv_text(data))
    return EXIT_OK


def _cmd_fit(args, out):
    if not os.path.exists(args.input):
        raise FileNotFoundError(f"input file not found: {args.input}")
    data = datagen.read_dataset_csv(args.input)
    rng = rand.derive_stream(args.seed, "cli-fit", 0, args.estimator)
    X, y = data.X, data.y
    name = args.estimator
    if name == "ols":
        fit = est.fit_ols(X, y)
    elif name == "lts":
        fit = est.fit_lts(X, y, args.alpha, args.n_starts, rng)
    elif name == "lasso":
        fit = est.fit_lasso(X, y, args.lam)
    elif name == "slts":
        fit = est.fit_sparse_lts(X, y, args.alpha, args.lam, args.n_starts, rng)
    elif name == "logit":
        fit = est.fit_logistic(X, y)
    elif name == "trimmed_logit":
        fit = est.fit_trimmed_logistic(X, y, args.alpha, args.n_starts, rng)
    else:
        fit = est.fit_l1_logistic(X, y, args.lam)
    payload = {
        "estimator": name,
        "beta_hat": [float(v) for v in fit.beta_hat],
        "intercept": float(fit.intercept),
        "objective": float(fit.objective),
        "subset": None if fit.subset is None else [int(i) for i in fit.subset],
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
    }
    out.write(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def _cmd_run(args, out):
    if args.config:
        rc = config.load(args.config)
    else:
        rc = config.RunConfig()
    if args.preset:
        rc.preset = args.preset
    if args.seed is not None:
        rc.master_seed = args.seed
    if args.V is not None:
        rc.V = args.V
    if args.workers is not None:
        rc.workers = args.workers
    if args.output:
        rc.output = args.output
    for key, val in (("contam_scheme", args.scheme), ("snr", args.snr), ("mu", args.mu)):
        if val is not None:
            rc.overrides[key] = val
    if args.r_grid is not None:
        rc.options["r_grid"] = args.r_grid
    if args.r_val_grid is not None:
        rc.options["r_val_grid"] = args.r_val_grid
    if args.cv:
        rc.options["cv_schemes"] = [s for s in args.cv.split(",") if s.strip()]
    name = args.experiment
    cfg = None
    if name in experiments.NEEDS_SCENARIO:
        if rc.preset is None and not rc.overrides:
            raise UsageError(f"run {name}: give --preset or a --config with a scenario")
        cfg = rc.scenario()
    rows = experiments.run(name, cfg, rc.master_seed, rc.run_options())
    text = report.metrics_csv_text(rows)
    if rc.output:
        with open(rc.output, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def _cmd_report(args, out):
    if not os.path.exists(args.input):
        raise FileNotFoundError(f"input file not found: {args.input}")
    rows = report.read_metrics_csv(args.input)
    os.makedirs(args.out_dir, exist_ok=True)
    summary = report.summarize(rows)
    report.write_summary_csv(summary, os.path.join(args.out_dir, "summary.csv"))
    written = ["summary.csv"]
    for stem, group, spec in report.chart_plan(rows):
        fname = f"{stem}.svg".replace("/", "_")
        report.write_chart(group, os.path.join(args.out_dir, fname), title=stem, **spec)
        written.append(fname)
    for name in written:
        out.write(os.path.join(args.out_dir, name) + "\n")
    return EXIT_OK


def _cmd_bdp(args, out):
    if args.empirical:
        rec = bdp.empirical_bdp(args.c, args.n_test, args.k, args.batches)
        out.write(f"{rec.empirical_bdp:.17g}\n")
        return EXIT_OK
    aggregate = losses.aggregate_mean if args.loss == "squared" else losses.aggregate_transformed
    rng = rand.derive_stream(args.seed, "cli-bdp", 0, "clean-test")
    flips = bdp.demonstrate_breakdown(args.n_test, args.gross, 0.0, 1.0, losses.squared_loss,
                                      aggregate=aggregate, rng=rng)
    out.write(f"{flips}\n")
    return EXIT_OK


_COMMANDS = {"gen": _cmd_gen, "fit": _cmd_fit, "run": _cmd_run, "report": _cmd_report, "bdp": _cmd_bdp}


def cli_main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except (FileNotFoundError, config.ConfigError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        err.write(f"error: {msg}\n")
        return EXIT_USAGE
    except (est.EstimationError, np.linalg.LinAlgError, bdp.BreakdownNotReached, FloatingPointError) as exc:
        err.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except ValueError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

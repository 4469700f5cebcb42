"""Command-line interface: ``hcrcred <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BASIS_KINDS
from .calibration import CalibrationSpec
from .dataset import (ParseError, SchemaError, dataset_to_csv, generate_synthetic,
                      load_generator_config, load_schema, parse_csv, save_schema)
from .density import (DensityPolynomial, calibrate, loglik_bits_batch, original_scale_density,
                      score_dataset)
from .edf import normalize
from .evaluation import DEFAULT_DEGREES, EvalParams, evaluate, importance
from .features import ENCODINGS
from .hcr import density_grid, fit_pairwise, midpoint_grid
from .regression import dumps_model, load_model, train

log = logging.getLogger("hcrcred")


class UsageError(Exception):
    pass


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_atomic(path, text: str) -> None:
    """Write to a sibling temp file, then rename, so partial outputs never appear."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else _num(c) for c in row])
    return buf.getvalue()


def _degrees(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise UsageError("degrees must be positive integers")
    return tuple(out)


def _degree(args, default: int) -> int:
    m = default if args.degree is None else args.degree
    if m < 1:
        raise UsageError("--degree must be at least 1")
    return m


def _params(args) -> EvalParams:
    return EvalParams(repeats=args.repeats, split=args.split, seed=args.seed, basis=args.basis,
                      calibration=args.calibration, encoding=args.encoding, ridge=args.ridge)


def _load(args):
    schema = load_schema(args.schema)
    return schema, parse_csv(args.input, schema)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> None:
    ds = generate_synthetic(load_generator_config(args.config), args.seed)
    _write_atomic(args.out, dataset_to_csv(ds))
    if args.schema_out:
        save_schema(ds.schema, args.schema_out)
    log.info("generated %d rows", ds.n)


def cmd_train(args) -> None:
    m = _degree(args, 4)
    schema, ds = _load(args)
    model = train(ds, schema, m, args.basis, args.calibration, args.encoding, args.ridge)
    _write_atomic(args.model, dumps_model(model))
    ll = float(np.mean(loglik_bits_batch(model, ds)))
    print(f"p={model.layout.p} m={model.m} n={ds.n} train_mean_log2_density={ll:.6f}")


def cmd_score(args) -> None:
    model = load_model(args.model)
    ds = parse_csv(args.input, model.schema)
    table = score_dataset(model, ds, args.flag_fraction, with_moments=not args.no_moments)
    header = ["record", "raw_score", "calibrated_density", "log2_density", "flagged",
              "expected_value", "std_dev"]
    rows = [
        (i, table.raw_score[i], table.calibrated_density[i], table.log2_density[i],
         table.flagged[i], table.expected_value[i], float(np.sqrt(table.variance[i])))
        for i in range(len(table))
    ]
    _write_atomic(args.out, _csv_text(header, rows))
    print(f"flagged={int(table.flagged.sum())} n={len(table)} threshold={table.threshold!r} "
          f"negative_raw_fraction={table.negative_fraction:.6f}", file=sys.stderr)


def cmd_density(args) -> None:
    model = load_model(args.model)
    ds = parse_csv(args.input, model.schema)
    records = (list(range(min(10, ds.n))) if args.records is None
               else [int(r) for r in args.records.split(",")])
    for r in records:
        if not 0 <= r < ds.n:
            raise UsageError(f"record {r} out of range (n={ds.n})")
    moments = model.coefficients(ds.take(records))
    x = midpoint_grid(args.resolution)
    header = ["record", "x", "raw", "calibrated"]
    if args.original:
        header += ["y", "original_density"]
    rows = []
    for r, a in zip(records, moments):
        poly = DensityPolynomial.from_moments(a, model.basis)
        raw = poly(x)
        cal = calibrate(poly, model.calibration)(x)
        if args.original:
            y, dens = original_scale_density(model, poly, resolution=args.resolution)
            rows += [(r, *vals) for vals in zip(x, raw, cal, y, dens)]
        else:
            rows += [(r, *vals) for vals in zip(x, raw, cal)]
    _write_atomic(args.out, _csv_text(header, rows))


def cmd_evaluate(args) -> None:
    if args.degrees:
        degrees = _degrees(args.degrees)
    elif args.degree is not None:
        degrees = (_degree(args, 4),)
    else:
        degrees = DEFAULT_DEGREES
    schema, ds = _load(args)
    rep = evaluate(ds, schema, degrees, _params(args))
    header = ["degree", "mean_loglik_bits", "sd_loglik_bits", "repeats", "split", "seed"]
    rows = [(d, mu, sd, rep.repeats, rep.split, rep.seed)
            for d, mu, sd in zip(rep.degrees, rep.mean, rep.sd)]
    _write_atomic(args.out, _csv_text(header, rows))


def cmd_importance(args) -> None:
    m = _degree(args, 4)
    schema, ds = _load(args)
    rep = importance(ds, m, _params(args), schema, greedy=not args.no_greedy)
    rows = [(v, r, nv) for v, r, nv in zip(rep.variables, rep.relevance, rep.novelty)]
    _write_atomic(args.out, _csv_text(["variable", "relevance_bits", "novelty_bits"], rows))
    if rep.greedy:
        greedy_out = args.greedy_out
        if greedy_out is None and args.out not in (None, "-"):
            p = Path(args.out)
            greedy_out = p.with_name(p.stem + "_greedy" + p.suffix)
        rows = [(k, s.variable, s.loglik, s.best_loglik) for k, s in enumerate(rep.greedy, 1)]
        _write_atomic(greedy_out, _csv_text(["step", "variable", "loglik_bits",
                                             "best_loglik_bits"], rows))


def cmd_pairs(args) -> None:
    schema, ds = _load(args)
    var_a = args.var_a or schema.target.name
    if args.var_b is None:
        raise UsageError("pairs needs --var-b")
    for v in (var_a, args.var_b):
        if schema[v].kind != "continuous":
            raise UsageError(f"pairs needs continuous variables; {v} is {schema[v].kind}")
    xa = normalize(ds[var_a]).x
    xb = normalize(ds[args.var_b]).x
    pd = fit_pairwise(xa, xb, _degree(args, 9), var_a, args.var_b, args.basis)
    grid = density_grid(pd, args.resolution)
    g = midpoint_grid(args.resolution)
    header = [f"{var_a}\\{args.var_b}"] + [_num(v) for v in g]
    rows = [(g[i], *grid[i]) for i in range(len(g))]
    _write_atomic(args.out, _csv_text(header, rows))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _calibration(text: str) -> CalibrationSpec:
    try:
        return CalibrationSpec.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcrcred",
        description="Conditional density modelling and credibility scoring of tabular data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, model_opts=False, eval_opts=False):
        if data:
            p.add_argument("--schema", required=True, help="schema file (YAML or JSON)")
        p.add_argument("--input", required=True, help="CSV data file")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        if model_opts:
            p.add_argument("--degree", type=int, default=None, help="model degree m")
            p.add_argument("--basis", choices=BASIS_KINDS, default="legendre")
            p.add_argument("--calibration", type=_calibration, default=CalibrationSpec(),
                           help="softplus[:K,C] or clip[:EPS] (default softplus:5,2)")
            p.add_argument("--encoding", choices=ENCODINGS, default="onehot",
                           help="categorical features: one-hot indicators or discrete basis")
            p.add_argument("--ridge", type=float, default=0.0)
        if eval_opts:
            p.add_argument("--split", type=float, default=0.75)
            p.add_argument("--repeats", type=int, default=10)
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("generate", help="write a synthetic dataset and its schema")
    p.add_argument("--config", required=True, help="generator config (YAML or JSON)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--schema-out", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit a model and write the model file")
    common(p, model_opts=True)
    p.add_argument("--model", required=True, help="model file to write")
    p.set_defaults(func=cmd_train, degree=4)

    p = sub.add_parser("score", help="credibility scores for every record")
    common(p, data=False)
    p.add_argument("--model", required=True)
    p.add_argument("--flag-fraction", type=float, default=0.01)
    p.add_argument("--no-moments", action="store_true", help="skip expected value / std dev")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("density", help="predicted density curves of selected records")
    common(p, data=False)
    p.add_argument("--model", required=True)
    p.add_argument("--records", default=None, help="comma-separated row indices (default 0-9)")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--original", action="store_true", help="add original-scale density")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("evaluate", help="held-out log-likelihood per degree")
    common(p, model_opts=True, eval_opts=True)
    p.add_argument("--degrees", default=None, help="e.g. 1-9 or 1,2,4 (default 1-9)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="relevance, novelty and greedy variable order")
    common(p, model_opts=True, eval_opts=True)
    p.add_argument("--greedy-out", default=None)
    p.add_argument("--no-greedy", action="store_true")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("pairs", help="pairwise density grid of two continuous variables")
    common(p)
    p.add_argument("--var-a", default=None, help="row variable (default: target)")
    p.add_argument("--var-b", default=None, help="column variable")
    p.add_argument("--degree", type=int, default=9)
    p.add_argument("--basis", choices=BASIS_KINDS, default="legendre")
    p.add_argument("--resolution", type=int, default=201)
    p.set_defaults(func=cmd_pairs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    for name in ("flag_fraction", "split"):
        v = getattr(args, name, None)
        if v is not None and not 0 <= v <= 1:
            parser.error(f"--{name.replace('_', '-')} must lie in [0, 1]")
    if getattr(args, "resolution", 1) < 1:
        parser.error("--resolution must be positive")
    try:
        args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (ParseError, SchemaError, ValueError, KeyError, OSError) as e:
        print(f"hcrcred: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

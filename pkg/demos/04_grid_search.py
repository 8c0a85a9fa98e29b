#!/usr/bin/env python3
"""Hyperparameter grid search on a small planted corpus.

Sweeps learning rate and L2 weight, prints the tuning table ranked by
validation accuracy, and lists the shipped optimal presets for the four
model/task combinations.
"""

from slicernn.corpus import build_vocab, encode_pad, split, synth_corpus, tokenize
from slicernn.kernel import Rng, derive_seed
from slicernn.models import Hyper
from slicernn.trainer import PRESETS, PreparedData, TrainConfig, grid_search

seed = 90
reviews = synth_corpus(60, None, Rng(seed))
train_r, val_r, test_r = split(reviews, (0.8, 0.1, 0.1),
                               Rng(derive_seed(seed, 11)))
vocab = build_vocab([tokenize(r.text) for r in train_r], 1)
encode = lambda rs: [encode_pad(r, vocab, 88) for r in rs]
data = PreparedData(train=encode(train_r), val=encode(val_r),
                    test=encode(test_r), vocab=vocab)

base = TrainConfig(arch="modified_rnn",
                   hyper=Hyper(batch_size=10, epochs=8, seed=1),
                   eval_every=2)
table = grid_search(base, lr_grid=[1e-3, 1e-2, 3e-2], l2_grid=[0.0, 0.009],
                    keep_grid=[1.0], data=data)

print("lr        l2      keep  val_acc  best_epoch")
for row in table.rows:
    print(f"{row.lr:<9g} {row.l2:<7g} {row.keep_prob:<5g} "
          f"{row.val_acc:<8.4f} {row.best_epoch}")

print("\nshipped presets (lr, l2, keep probability):")
for name, p in sorted(PRESETS.items()):
    print(f"  {name:18s} lr={p['lr']:g} l2={p['l2']:g} keep={p['keep_prob']:g}")

#!/usr/bin/env python3
"""Check every hand-derived backward pass against finite differences.

Runs the central-difference oracle over all three architectures and both
truncation modes on a small instance and prints the per-matrix maximum
relative errors.
"""

from slicernn.kernel import Rng
from slicernn.models import Dims, Hyper, gradient_check

dims = Dims(vocab_size=20, embed_dim=6, hidden_dim=8, num_classes=5, steps=8)

for arch in ("modified_rnn", "perstep_rnn", "gru"):
    for truncation in ("per_slice", "full_sequence"):
        hyper = Hyper(lr=0.01, l2=0.009, truncation=truncation)
        report = gradient_check(arch, dims, hyper, Rng(23),
                                eps=1e-5, tol=1e-5)
        print(report)
        print()

import pytest

from slicernn.corpus import (
    PlantSpec,
    build_vocab,
    encode_pad,
    split,
    synth_corpus,
    tokenize,
)
from slicernn.kernel import Rng, derive_seed
from slicernn.trainer import PreparedData


def make_planted_data(n_per_class: int, seed: int = 123,
                      density: float = 0.5) -> PreparedData:
    """Planted synthetic corpus, split and encoded with its own vocabulary."""
    reviews = synth_corpus(n_per_class, PlantSpec(density=density), Rng(seed))
    train_r, val_r, test_r = split(reviews, (0.8, 0.1, 0.1),
                                   Rng(derive_seed(seed, 11)))
    vocab = build_vocab([tokenize(r.text) for r in train_r], 1)
    enc = lambda rs: [encode_pad(r, vocab, 88) for r in rs]
    return PreparedData(train=enc(train_r), val=enc(val_r), test=enc(test_r),
                        vocab=vocab)


@pytest.fixture(scope="session")
def small_planted_data() -> PreparedData:
    """50 reviews/class; enough for pipeline and smoke-training tests."""
    return make_planted_data(50)

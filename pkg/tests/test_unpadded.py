"""The no-zero-padding variant: natural-length sequences batched by length."""

import numpy as np
import pytest

from slicernn.cli import main
from slicernn.corpus import (
    EOS_ID,
    batches_by_length,
    build_vocab,
    encode_unpadded,
    split,
    synth_corpus,
    tokenize,
)
from slicernn.evalinspect import evaluate
from slicernn.kernel import Rng, derive_seed
from slicernn.models import Hyper, predict
from slicernn.trainer import PreparedData, TrainConfig, train
from tests.test_cli import write_reviews_csv


@pytest.fixture(scope="module")
def unpadded_data():
    seed = 360
    reviews = synth_corpus(30, None, Rng(seed))
    tr, va, te = split(reviews, (0.8, 0.1, 0.1), Rng(derive_seed(seed, 11)))
    vocab = build_vocab([tokenize(r.text) for r in tr], 1)
    enc = lambda rs: [encode_unpadded(r, vocab) for r in rs]
    return PreparedData(train=enc(tr), val=enc(va), test=enc(te), vocab=vocab)


class TestBatchesByLength:
    def test_rows_grouped_by_equal_length(self, unpadded_data):
        for sb in batches_by_length(unpadded_data.train, 8, 8, Rng(1)):
            assert len({row.shape for row in sb.token_ids}) == 1

    def test_final_slice_may_be_partial_and_ends_at_eos(self, unpadded_data):
        for sb in batches_by_length(unpadded_data.train, 8, 8, Rng(2)):
            assert 1 <= sb.token_ids.shape[1] <= 8
            if sb.is_final_slice:
                assert np.all(sb.token_ids[:, -1] == EOS_ID)

    def test_every_review_appears_exactly_once(self, unpadded_data):
        seen = []
        current = []
        for sb in batches_by_length(unpadded_data.train, 8, 8, Rng(3)):
            current.append(sb.token_ids)
            if sb.is_final_slice:
                rebuilt = np.concatenate(current, axis=1)
                seen.extend(tuple(r) for r in rebuilt)
                current = []
        assert sorted(seen) == sorted(tuple(e.ids) for e in unpadded_data.train)


class TestUnpaddedTraining:
    def test_gru_trains_and_loss_drops(self, unpadded_data):
        cfg = TrainConfig(arch="gru", padded=False,
                          hyper=Hyper(lr=1e-2, batch_size=10, epochs=2, seed=3))
        result = train(cfg, unpadded_data)
        assert result.metrics.rows[-1].loss < result.metrics.rows[0].loss

    def test_deterministic(self, unpadded_data):
        cfg = TrainConfig(arch="gru", padded=False,
                          hyper=Hyper(lr=1e-2, batch_size=10, epochs=1, seed=4))
        a = train(cfg, unpadded_data)
        b = train(cfg, unpadded_data)
        assert np.array_equal(a.params["W_z"], b.params["W_z"])

    def test_predict_works_on_any_length(self, unpadded_data):
        cfg = TrainConfig(arch="gru", padded=False,
                          hyper=Hyper(lr=1e-2, batch_size=10, epochs=1, seed=5))
        result = train(cfg, unpadded_data)
        for enc in unpadded_data.test[:5]:
            assert 0 <= predict(result.params, enc, cfg.hyper) < 5

    def test_evaluate_handles_mixed_lengths(self, unpadded_data):
        cfg = TrainConfig(arch="gru", padded=False,
                          hyper=Hyper(lr=1e-2, batch_size=10, epochs=1, seed=6))
        result = train(cfg, unpadded_data)
        report = evaluate(result.params, unpadded_data.test, cfg.hyper)
        assert report.n == len(unpadded_data.test)


class TestUnpaddedCli:
    def test_prepare_and_train_unpadded(self, tmp_path):
        write_reviews_csv(tmp_path / "raw.csv", synth_corpus(8, None, Rng(71)))
        prep = tmp_path / "prep"
        assert main(["prepare", str(tmp_path / "raw.csv"), "--out", str(prep),
                     "--padded", "false", "--seed", "2"]) == 0
        lengths = {
            len(line.split("\t")[1].split())
            for line in (prep / "train.tsv").read_text().splitlines()[1:]
        }
        assert len(lengths) > 1 and all(76 <= n <= 88 for n in lengths)
        out = tmp_path / "run"
        assert main(["train", str(prep), "--out", str(out), "--arch", "gru",
                     "--padded", "false", "--epochs", "1", "--seed", "2"]) == 0
        assert (out / "metrics.csv").exists()

import numpy as np
import pytest

from slicernn.corpus import EOS_ID, PAD_ID, SliceBatch
from slicernn.errors import StateError
from slicernn.kernel import Rng
from slicernn.models import (
    Dims,
    Hyper,
    backward,
    compute_loss,
    forward,
    gradient_check,
    init_params,
    iter_slices,
    sgd_step,
)
from slicernn.trainer import TrainConfig, train
from tests.conftest import make_planted_data

DIMS = Dims(vocab_size=20, embed_dim=6, hidden_dim=8, num_classes=5, steps=8)

ARCHS = ("modified_rnn", "perstep_rnn", "gru")


def run_review_batch(params, ids, labels, hyper, mode="train"):
    h = np.zeros((ids.shape[0], params.dims.hidden_dim))
    traces = []
    for sl, s, final in iter_slices(ids, params.dims.steps):
        sb = SliceBatch(sl, labels, s, final)
        tr = forward(params, sb, h, hyper, mode=mode)
        traces.append(tr)
        h = tr.h_out
    return traces


def random_ids(batch, length, seed, pad_first_row=5):
    rng = Rng(seed)
    ids = np.zeros((batch, length), dtype=np.int64)
    for b in range(batch):
        pad = pad_first_row if b == 0 else 0
        content = [3 + rng.randbelow(17) for _ in range(length - pad - 1)]
        ids[b] = [PAD_ID] * pad + content + [EOS_ID]
    return ids


class TestGradientCheck:
    @pytest.mark.parametrize("arch", ARCHS)
    @pytest.mark.parametrize("truncation", ["per_slice", "full_sequence"])
    def test_passes_at_stated_tolerance(self, arch, truncation):
        hyper = Hyper(lr=0.01, l2=0.009, truncation=truncation)
        report = gradient_check(arch, DIMS, hyper, Rng(23), eps=1e-5, tol=1e-5)
        assert report.passed, str(report)

    def test_masked_loss_gradients(self):
        hyper = Hyper(lr=0.01, mask_pad_slices=True)
        report = gradient_check("gru", DIMS, hyper, Rng(23))
        assert report.passed, str(report)

    def test_four_class_instance(self):
        dims = Dims(vocab_size=20, embed_dim=6, hidden_dim=8, num_classes=4,
                    steps=8)
        report = gradient_check("modified_rnn", dims, Hyper(), Rng(3))
        assert report.passed, str(report)

    def test_negative_control_names_corrupted_matrix(self, monkeypatch):
        import slicernn.models as models_mod

        real_backward = models_mod.backward

        def corrupted(traces, labels, params, hyper):
            grads = real_backward(traces, labels, params, hyper)
            grads["W_hh"] += 0.5
            return grads

        monkeypatch.setattr(models_mod, "backward", corrupted)
        report = gradient_check("modified_rnn", DIMS, Hyper(), Rng(23))
        assert not report.passed
        assert report.worst_param == "W_hh"

    def test_report_prints_per_matrix_table(self):
        report = gradient_check("gru", DIMS, Hyper(), Rng(23))
        text = str(report)
        for name in ("W_z", "U_r", "W_s"):
            assert name in text
        assert "PASS" in text


class TestBackwardProperties:
    @pytest.mark.parametrize("arch", ARCHS)
    def test_pad_embedding_row_gradient_zero(self, arch):
        params = init_params(arch, DIMS, Rng(40))
        ids = random_ids(2, 16, seed=41)
        labels = np.array([1, 3])
        hyper = Hyper()
        traces = run_review_batch(params, ids, labels, hyper)
        grads = backward(traces, labels, params, hyper)
        assert np.array_equal(grads["L"][PAD_ID], np.zeros(DIMS.embed_dim))

    def test_untouched_embedding_rows_have_zero_gradient(self):
        params = init_params("modified_rnn", DIMS, Rng(42))
        ids = random_ids(2, 16, seed=43)
        labels = np.array([0, 2])
        hyper = Hyper()
        traces = run_review_batch(params, ids, labels, hyper)
        grads = backward(traces, labels, params, hyper)
        touched = set(ids.ravel().tolist())
        for row in range(DIMS.vocab_size):
            if row not in touched:
                assert not grads["L"][row].any()

    @pytest.mark.parametrize("arch", ARCHS)
    def test_duplicate_review_leaves_gradients_unchanged(self, arch):
        # the loss is a mean over prediction points, so duplicating a
        # review must not change the gradient
        params = init_params(arch, DIMS, Rng(44))
        ids1 = random_ids(1, 16, seed=45, pad_first_row=0)
        ids2 = np.vstack([ids1, ids1])
        labels1, labels2 = np.array([2]), np.array([2, 2])
        hyper = Hyper()
        g1 = backward(run_review_batch(params, ids1, labels1, hyper),
                      labels1, params, hyper)
        g2 = backward(run_review_batch(params, ids2, labels2, hyper),
                      labels2, params, hyper)
        for name in g1:
            assert np.allclose(g1[name], g2[name], atol=1e-14)

    def test_backward_requires_traces(self):
        params = init_params("gru", DIMS, Rng(46))
        with pytest.raises(StateError):
            backward([], np.array([0]), params, Hyper())

    def test_backward_requires_masks_when_dropout_on(self):
        params = init_params("perstep_rnn", DIMS, Rng(47))
        ids = random_ids(2, 8, seed=48)
        labels = np.array([0, 1])
        traces = run_review_batch(params, ids, labels, Hyper(), mode="eval")
        with pytest.raises(StateError):
            backward(traces, labels, params, Hyper(keep_prob=0.5))

    @pytest.mark.parametrize("arch", ARCHS)
    def test_one_small_step_does_not_increase_batch_loss(self, arch):
        data = make_planted_data(20, seed=49)
        tokens = np.stack([e.ids for e in data.train[:16]])
        labels = np.array([e.label for e in data.train[:16]])
        dims = Dims(vocab_size=len(data.vocab), embed_dim=12, hidden_dim=12,
                    num_classes=5, steps=8)
        params = init_params(arch, dims, Rng(50))
        hyper = Hyper(lr=1e-4)
        traces = run_review_batch(params, tokens, labels, hyper)
        before = compute_loss(traces, labels, params, hyper)
        grads = backward(traces, labels, params, hyper)
        sgd_step(params, grads, hyper.lr)
        traces = run_review_batch(params, tokens, labels, hyper)
        after = compute_loss(traces, labels, params, hyper)
        assert after <= before


class TestTrainingLossCurve:
    def test_loss_non_increasing_for_first_five_epochs_at_default_lr(self):
        # rows 1..5 are mean train losses of the first five passes; row 0
        # is the eval-mode loss of the untrained model over differently
        # composed batches, so it does not take part in the comparison
        data = make_planted_data(50, seed=51)
        cfg = TrainConfig(arch="modified_rnn",
                          hyper=Hyper(epochs=5, seed=3), eval_every=5)
        result = train(cfg, data)
        losses = [r.loss for r in result.metrics.rows]
        assert len(losses) == 6
        for a, b in zip(losses[1:], losses[2:]):
            assert b <= a

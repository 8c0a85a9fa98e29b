import numpy as np
import pytest

from slicernn.errors import (
    CheckpointCorruptError,
    CheckpointVersionError,
    ConfigError,
)
from slicernn.kernel import Rng
from slicernn.models import Dims, Hyper, arch_tensor_names, init_params
from slicernn.trainer import (
    PRESETS,
    TrainConfig,
    grid_point_config,
    grid_search,
    load_checkpoint,
    save_checkpoint,
    train,
)


def metrics_tuples(result):
    return [(r.epoch, r.loss, r.train_acc, r.val_acc) for r in result.metrics.rows]


class TestTrain:
    def test_deterministic_across_runs(self, small_planted_data):
        cfg = TrainConfig(arch="modified_rnn", hyper=Hyper(epochs=2, seed=11))
        a = train(cfg, small_planted_data)
        b = train(cfg, small_planted_data)
        assert metrics_tuples(a) == metrics_tuples(b)
        for name in arch_tensor_names("modified_rnn"):
            assert np.array_equal(a.params[name], b.params[name])

    def test_zero_epochs_returns_init(self, small_planted_data):
        cfg = TrainConfig(arch="gru", hyper=Hyper(epochs=0, seed=12))
        result = train(cfg, small_planted_data)
        assert [r.epoch for r in result.metrics.rows] == [0]
        for name in arch_tensor_names("gru"):
            assert np.array_equal(result.params[name],
                                  result.snapshots["epoch0"][name])

    def test_epoch_rows_contiguous_from_zero(self, small_planted_data):
        cfg = TrainConfig(hyper=Hyper(epochs=3, seed=13))
        result = train(cfg, small_planted_data)
        assert [r.epoch for r in result.metrics.rows] == [0, 1, 2, 3]

    def test_epoch0_snapshot_is_pre_update(self, small_planted_data):
        cfg = TrainConfig(hyper=Hyper(epochs=1, seed=14))
        result = train(cfg, small_planted_data)
        dims = Dims(vocab_size=len(small_planted_data.vocab), embed_dim=50,
                    hidden_dim=50, num_classes=5, steps=8)
        from slicernn.kernel import derive_seed
        fresh = init_params("modified_rnn", dims, Rng(derive_seed(14, 0)))
        for name in arch_tensor_names("modified_rnn"):
            assert np.array_equal(result.snapshots["epoch0"][name], fresh[name])
        assert not np.array_equal(result.snapshots["final"]["W_s"],
                                  result.snapshots["epoch0"]["W_s"])

    def test_eval_every_skips_accuracy(self, small_planted_data):
        cfg = TrainConfig(hyper=Hyper(epochs=3, seed=15), eval_every=2)
        result = train(cfg, small_planted_data)
        accs = {r.epoch: r.val_acc for r in result.metrics.rows}
        assert accs[0] is not None and accs[2] is not None
        assert accs[1] is None
        assert accs[3] is not None  # final epoch always evaluated

    def test_divergence_recorded_not_raised(self, small_planted_data):
        # bounded activations keep the data loss finite at any lr, but the
        # L2 term blows up once the weights overflow when squared
        cfg = TrainConfig(hyper=Hyper(lr=1e9, l2=1.0, epochs=6, seed=16))
        result = train(cfg, small_planted_data)
        assert result.diverged
        assert not np.isfinite(result.metrics.rows[-1].loss)
        assert result.metrics.rows[-1].epoch <= 6

    def test_label_out_of_range_rejected(self, small_planted_data):
        cfg = TrainConfig(resample="drop_top", num_classes=4,
                          hyper=Hyper(epochs=1))
        with pytest.raises(ConfigError, match="label"):
            train(cfg, small_planted_data)

    def test_config_class_consistency(self):
        with pytest.raises(ConfigError):
            TrainConfig(resample="drop_top", num_classes=5)
        with pytest.raises(ConfigError):
            TrainConfig(resample="subsample", num_classes=4)

    def test_full_sequence_truncation_trains(self, small_planted_data):
        cfg = TrainConfig(hyper=Hyper(epochs=1, seed=26,
                                      truncation="full_sequence"))
        result = train(cfg, small_planted_data)
        assert np.isfinite(result.metrics.rows[-1].loss)
        per_slice = train(TrainConfig(hyper=Hyper(epochs=1, seed=26)),
                          small_planted_data)
        assert not np.array_equal(result.params["W_hh"],
                                  per_slice.params["W_hh"])

    def test_metrics_csv_layout(self, small_planted_data, tmp_path):
        cfg = TrainConfig(hyper=Hyper(epochs=1, seed=17))
        result = train(cfg, small_planted_data)
        out = tmp_path / "metrics.csv"
        result.metrics.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "epoch,loss,train_acc,val_acc,seconds"
        assert len(lines) == 3
        # timing never lands in the file, so runs are byte-comparable
        assert all(line.endswith(",") for line in lines[1:])


class TestGridSearch:
    def test_single_point_equals_direct_train(self, small_planted_data):
        base = TrainConfig(hyper=Hyper(epochs=1, seed=18))
        table = grid_search(base, [0.01], [0.0], [1.0], small_planted_data)
        assert len(table.rows) == 1
        direct = train(grid_point_config(base, 0.01, 0.0, 1.0, 0),
                       small_planted_data)
        best = max((r.val_acc, -r.epoch) for r in direct.metrics.rows
                   if r.val_acc is not None)
        assert table.rows[0].val_acc == best[0]

    def test_diverging_point_recorded(self, small_planted_data):
        base = TrainConfig(hyper=Hyper(epochs=1, seed=19))
        table = grid_search(base, [0.01, 1e9], [0.0], [1.0],
                            small_planted_data)
        assert len(table.rows) == 2
        lrs = {r.lr for r in table.rows}
        assert lrs == {0.01, 1e9}

    def test_sorted_by_val_acc_then_tiebreak(self):
        from slicernn.trainer import TuningRow
        rows = [
            TuningRow(lr=1e-3, l2=0.0, keep_prob=1.0, val_acc=0.5, best_epoch=1),
            TuningRow(lr=1e-4, l2=0.0, keep_prob=1.0, val_acc=0.5, best_epoch=2),
            TuningRow(lr=1e-4, l2=0.0, keep_prob=1.0, val_acc=0.9, best_epoch=3),
        ]
        rows.sort(key=lambda r: (-r.val_acc, r.lr, r.l2, -r.keep_prob))
        assert rows[0].val_acc == 0.9 and rows[1].lr == 1e-4

    def test_empty_grid_rejected(self, small_planted_data):
        from slicernn.errors import ArgumentError
        with pytest.raises(ArgumentError):
            grid_search(TrainConfig(), [], [0.0], [1.0], small_planted_data)

    def test_duplicate_grid_values_collapse(self, small_planted_data):
        base = TrainConfig(hyper=Hyper(epochs=0, seed=27))
        table = grid_search(base, [0.01, 0.01], [0.0], [1.0],
                            small_planted_data)
        assert len(table.rows) == 1

    def test_table_deterministic(self, small_planted_data):
        base = TrainConfig(hyper=Hyper(epochs=1, seed=24))
        a = grid_search(base, [0.01, 0.02], [0.0], [1.0], small_planted_data)
        b = grid_search(base, [0.01, 0.02], [0.0], [1.0], small_planted_data)
        assert a.rows == b.rows

    def test_parallel_jobs_match_serial(self, small_planted_data):
        base = TrainConfig(hyper=Hyper(epochs=1, seed=25))
        serial = grid_search(base, [0.01, 0.02], [0.0], [1.0],
                             small_planted_data, jobs=1)
        parallel = grid_search(base, [0.01, 0.02], [0.0], [1.0],
                               small_planted_data, jobs=2)
        assert serial.rows == parallel.rows

    def test_presets_carry_reported_optima(self):
        assert PRESETS["modified_rnn_4cls"] == {
            "arch": "modified_rnn", "num_classes": 4,
            "lr": 1e-6, "l2": 0.009, "keep_prob": 1.0}
        assert PRESETS["modified_rnn_5cls"] == {
            "arch": "modified_rnn", "num_classes": 5,
            "lr": 1e-5, "l2": 0.009, "keep_prob": 0.9}
        assert PRESETS["gru_4cls"] == {
            "arch": "gru", "num_classes": 4,
            "lr": 1e-4, "l2": 1e-6, "keep_prob": 1.0}
        assert PRESETS["gru_5cls"] == {
            "arch": "gru", "num_classes": 5,
            "lr": 1e-4, "l2": 0.009, "keep_prob": 1.0}


class TestCheckpoints:
    @pytest.mark.parametrize("arch", ["modified_rnn", "perstep_rnn", "gru"])
    def test_round_trip_bit_exact(self, arch, tmp_path):
        dims = Dims(vocab_size=30, embed_dim=7, hidden_dim=9, num_classes=4,
                    steps=8)
        params = init_params(arch, dims, Rng(20))
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        back = load_checkpoint(path)
        assert back.arch == arch and back.dims == dims
        for name in arch_tensor_names(arch):
            assert np.array_equal(back[name], params[name])

    def test_save_is_deterministic(self, tmp_path):
        dims = Dims(vocab_size=10, embed_dim=4, hidden_dim=4, num_classes=5,
                    steps=8)
        params = init_params("gru", dims, Rng(21))
        save_checkpoint(params, tmp_path / "a.ckpt")
        save_checkpoint(params, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_truncated_file_is_corrupt(self, tmp_path):
        dims = Dims(vocab_size=10, embed_dim=4, hidden_dim=4, num_classes=5,
                    steps=8)
        save_checkpoint(init_params("modified_rnn", dims, Rng(22)),
                        tmp_path / "m.ckpt")
        blob = (tmp_path / "m.ckpt").read_bytes()
        (tmp_path / "cut.ckpt").write_bytes(blob[:len(blob) // 2])
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(tmp_path / "cut.ckpt")

    def test_flipped_byte_is_corrupt(self, tmp_path):
        dims = Dims(vocab_size=10, embed_dim=4, hidden_dim=4, num_classes=5,
                    steps=8)
        save_checkpoint(init_params("modified_rnn", dims, Rng(23)),
                        tmp_path / "m.ckpt")
        blob = bytearray((tmp_path / "m.ckpt").read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        (tmp_path / "bad.ckpt").write_bytes(bytes(blob))
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(tmp_path / "bad.ckpt")

    def test_wrong_version_header(self, tmp_path):
        path = tmp_path / "old.ckpt"
        path.write_bytes(b"slicernn-ckpt-v0\n" + b"x" * 100)
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

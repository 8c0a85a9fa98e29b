"""Deterministic training loop, hyperparameter grid search, checkpoints.

Everything here is a pure function of (config, dataset, seed): shuffling,
initialization, and dropout each draw from an independent child stream of
the run seed, so one seed pins the metrics log, the tuning table, and
every checkpoint byte.  Wall-clock timings are reported on stdout and
kept in memory but never written into output files.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import (
    EncodedReview,
    SliceBatch,
    Vocab,
    batches,
    batches_by_length,
    read_prepared,
    read_vocab,
)
from .errors import (
    ArgumentError,
    CheckpointCorruptError,
    CheckpointVersionError,
    ConfigError,
)
from .kernel import Rng, derive_seed
from .models import (
    Dims,
    Hyper,
    Params,
    backward,
    compute_loss,
    eval_outputs,
    forward,
    init_params,
    sgd_step,
)

CKPT_MAGIC = b"slicernn-ckpt-v1"
_TRAILER_LEN = len("sha256 ") + 64 + 1

# optimal settings reported for the four model/task combinations
PRESETS = {
    "modified_rnn_4cls": {"arch": "modified_rnn", "num_classes": 4,
                          "lr": 1e-6, "l2": 0.009, "keep_prob": 1.0},
    "modified_rnn_5cls": {"arch": "modified_rnn", "num_classes": 5,
                          "lr": 1e-5, "l2": 0.009, "keep_prob": 0.9},
    "gru_4cls": {"arch": "gru", "num_classes": 4,
                 "lr": 1e-4, "l2": 1e-6, "keep_prob": 1.0},
    "gru_5cls": {"arch": "gru", "num_classes": 5,
                 "lr": 1e-4, "l2": 0.009, "keep_prob": 1.0},
}


@dataclass
class TrainConfig:
    arch: str = "modified_rnn"
    embed_dim: int = 50
    hidden_dim: int = 50
    num_classes: int = 5
    steps: int = 8
    max_len: int = 88
    padded: bool = True
    resample: str = "none"  # none | drop_top | subsample
    n_target: int = 4000
    eval_every: int = 1
    hyper: Hyper = field(default_factory=Hyper)

    def __post_init__(self):
        if self.resample not in ("none", "drop_top", "subsample"):
            raise ConfigError(f"unknown resample mode {self.resample!r}")
        expected_c = 4 if self.resample == "drop_top" else 5
        if self.num_classes != expected_c:
            raise ConfigError(
                f"resample={self.resample} implies {expected_c} classes, "
                f"got {self.num_classes}"
            )
        if self.padded and self.max_len % self.steps != 0:
            raise ConfigError(
                f"max_len {self.max_len} not divisible by steps {self.steps}"
            )
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")

    def dims(self, vocab_size: int) -> Dims:
        return Dims(
            vocab_size=vocab_size,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            num_classes=self.num_classes,
            steps=self.steps,
        )


@dataclass
class PreparedData:
    train: list[EncodedReview]
    val: list[EncodedReview]
    test: list[EncodedReview]
    vocab: Vocab


def load_prepared_dir(path: str | Path) -> PreparedData:
    path = Path(path)
    return PreparedData(
        train=read_prepared(path / "train.tsv"),
        val=read_prepared(path / "val.tsv"),
        test=read_prepared(path / "test.tsv"),
        vocab=read_vocab(path / "vocab.txt"),
    )


@dataclass
class EpochRow:
    epoch: int
    loss: float
    train_acc: float | None
    val_acc: float | None
    seconds: float


@dataclass
class MetricsLog:
    rows: list[EpochRow] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        """Write the documented CSV; timing stays out of the file contents."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss,train_acc,val_acc,seconds\n")
            for r in self.rows:
                fh.write(
                    f"{r.epoch},{_fmt(r.loss)},{_fmt(r.train_acc)},"
                    f"{_fmt(r.val_acc)},\n"
                )


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


@dataclass
class TrainResult:
    params: Params
    metrics: MetricsLog
    snapshots: dict[str, Params]
    diverged: bool = False


def _validate(config: TrainConfig, data: PreparedData) -> None:
    for name, split in (("train", data.train), ("val", data.val), ("test", data.test)):
        for enc in split:
            if not 0 <= enc.label < config.num_classes:
                raise ConfigError(
                    f"{name} split has label {enc.label}, config expects "
                    f"{config.num_classes} classes"
                )
            if config.padded and len(enc) != config.max_len:
                raise ConfigError(
                    f"{name} split has a length-{len(enc)} review, config "
                    f"expects padded length {config.max_len}"
                )


def _batch_groups(slices: Iterable[SliceBatch]) -> Iterator[list[SliceBatch]]:
    group: list[SliceBatch] = []
    for sb in slices:
        group.append(sb)
        if sb.is_final_slice:
            yield group
            group = []


def _run_batch(params, group, hyper, mode, rng):
    """Forward every slice of one batch, chaining the hidden state."""
    B = group[0].token_ids.shape[0]
    h = np.zeros((B, params.dims.hidden_dim))
    traces = []
    for sb in group:
        trace = forward(params, sb, h, hyper, mode=mode, rng=rng)
        traces.append(trace)
        h = trace.h_out
    return traces


def _epoch_slices(config, encoded_set, rng):
    if config.padded:
        return batches(encoded_set, config.hyper.batch_size, config.steps, rng)
    return batches_by_length(encoded_set, config.hyper.batch_size, config.steps, rng)


def dataset_loss(params: Params, config: TrainConfig,
                 encoded_set: Sequence[EncodedReview]) -> float:
    """Eval-mode loss, averaged over the same batch grouping training uses."""
    rng = Rng(0)  # order is irrelevant in eval; a fixed stream keeps it reproducible
    losses = []
    for group in _batch_groups(_epoch_slices(config, encoded_set, rng)):
        traces = _run_batch(params, group, config.hyper, "eval", None)
        losses.append(compute_loss(traces, group[0].labels, params, config.hyper))
    return float(np.mean(losses))


def accuracy(params: Params, encoded_set: Sequence[EncodedReview],
             hyper: Hyper) -> float:
    preds, _ = eval_outputs(params, encoded_set, hyper)
    labels = np.array([e.label for e in encoded_set])
    return float((preds == labels).mean())


def train(config: TrainConfig, data: PreparedData,
          log: bool = False) -> TrainResult:
    """Run the configured number of epochs of shuffled slice-batch SGD.

    Epoch row 0 records the freshly initialized model before any update;
    row e records the state after training pass e.  Snapshots are taken
    at epoch 0 (post-init, pre-update) and after the final epoch.  A
    non-finite batch loss terminates the run early and marks it diverged.
    """
    _validate(config, data)
    hyper = config.hyper
    init_rng = Rng(derive_seed(hyper.seed, 0))
    shuffle_rng = Rng(derive_seed(hyper.seed, 1))
    drop_rng = Rng(derive_seed(hyper.seed, 2))

    params = init_params(config.arch, config.dims(len(data.vocab)), init_rng)
    snapshots = {"epoch0": params.copy()}
    metrics = MetricsLog()

    t0 = time.perf_counter()
    row = EpochRow(
        epoch=0,
        loss=dataset_loss(params, config, data.train),
        train_acc=accuracy(params, data.train, hyper),
        val_acc=accuracy(params, data.val, hyper) if data.val else None,
        seconds=time.perf_counter() - t0,
    )
    metrics.rows.append(row)
    if log:
        _log_row(row)

    diverged = False
    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for group in _batch_groups(_epoch_slices(config, data.train, shuffle_rng)):
            traces = _run_batch(params, group, hyper, "train", drop_rng)
            loss = compute_loss(traces, group[0].labels, params, hyper)
            losses.append(loss)
            if not np.isfinite(loss):
                diverged = True
                break
            grads = backward(traces, group[0].labels, params, hyper)
            sgd_step(params, grads, hyper.lr)
        evaluate_now = (epoch % config.eval_every == 0) or epoch == hyper.epochs
        row = EpochRow(
            epoch=epoch,
            loss=float(np.mean(losses)),
            train_acc=accuracy(params, data.train, hyper)
            if evaluate_now and not diverged else None,
            val_acc=accuracy(params, data.val, hyper)
            if evaluate_now and data.val and not diverged else None,
            seconds=time.perf_counter() - t0,
        )
        metrics.rows.append(row)
        if log:
            _log_row(row)
        if diverged:
            break

    snapshots["final"] = params.copy()
    return TrainResult(params=params, metrics=metrics, snapshots=snapshots,
                       diverged=diverged)


def _log_row(r: EpochRow) -> None:
    print(
        f"epoch {r.epoch} loss {r.loss:.6f}"
        + (f" train_acc {r.train_acc:.4f}" if r.train_acc is not None else "")
        + (f" val_acc {r.val_acc:.4f}" if r.val_acc is not None else "")
        + f" ({r.seconds:.2f}s)"
    )


@dataclass
class TuningRow:
    lr: float
    l2: float
    keep_prob: float
    val_acc: float
    best_epoch: int


@dataclass
class TuningTable:
    rows: list[TuningRow]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("lr,l2,keep_prob,val_acc,best_epoch\n")
            for r in self.rows:
                fh.write(
                    f"{_fmt(r.lr)},{_fmt(r.l2)},{_fmt(r.keep_prob)},"
                    f"{_fmt(r.val_acc)},{r.best_epoch}\n"
                )


def grid_point_config(base: TrainConfig, lr: float, l2: float, keep_prob: float,
                      grid_index: int) -> TrainConfig:
    """The config a grid trial runs with: tuned values + a derived seed."""
    hyper = replace(base.hyper, lr=lr, l2=l2, keep_prob=keep_prob,
                    seed=derive_seed(base.hyper.seed, 1000 + grid_index))
    return replace(base, hyper=hyper)


def _best_val(result: TrainResult) -> tuple[float, int]:
    best_acc, best_epoch = -1.0, 0
    for row in result.metrics.rows:
        if row.val_acc is not None and row.val_acc > best_acc:
            best_acc, best_epoch = row.val_acc, row.epoch
    return best_acc, best_epoch


def _grid_trial(args) -> TuningRow:
    base, lr, l2, keep_prob, idx, data = args
    cfg = grid_point_config(base, lr, l2, keep_prob, idx)
    result = train(cfg, data)
    best_acc, best_epoch = _best_val(result)
    return TuningRow(lr=lr, l2=l2, keep_prob=keep_prob, val_acc=best_acc,
                     best_epoch=best_epoch)


def grid_search(
    base: TrainConfig,
    lr_grid: Sequence[float],
    l2_grid: Sequence[float],
    keep_grid: Sequence[float],
    data: PreparedData,
    jobs: int = 1,
) -> TuningTable:
    """Train one model per grid point and rank them by validation accuracy.

    Per-trial seeds derive from (base seed, grid index), so trials are
    independent but reproducible, and a single-point grid reproduces a
    standalone train run with that derived seed.  Diverged trials keep
    whatever validation accuracy they reached.
    """
    if not (lr_grid and l2_grid and keep_grid):
        raise ArgumentError("grid_search needs non-empty grids")
    points = list(dict.fromkeys(itertools.product(lr_grid, l2_grid, keep_grid)))
    tasks = [(base, lr, l2, kp, idx, data)
             for idx, (lr, l2, kp) in enumerate(points)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_grid_trial, tasks))
    else:
        rows = [_grid_trial(t) for t in tasks]
    rows.sort(key=lambda r: (-r.val_acc, r.lr, r.l2, -r.keep_prob))
    return TuningTable(rows=rows)


def save_checkpoint(params: Params, path: str | Path) -> None:
    """Versioned binary dump: magic line, JSON meta line, raw little-endian
    float64 tensor payload in declared order, sha256 trailer line."""
    meta = {
        "arch": params.arch,
        "dims": asdict(params.dims),
        "dtype": "<f8",
        "tensors": [[name, list(t.shape)] for name, t in params.tensors.items()],
    }
    head = CKPT_MAGIC + b"\n" + json.dumps(
        meta, sort_keys=True, separators=(",", ":")
    ).encode() + b"\n"
    payload = b"".join(
        np.ascontiguousarray(t, dtype="<f8").tobytes()
        for t in params.tensors.values()
    )
    body = head + payload
    digest = hashlib.sha256(body).hexdigest()
    Path(path).write_bytes(body + f"sha256 {digest}\n".encode())


def load_checkpoint(path: str | Path) -> Params:
    raw = Path(path).read_bytes()
    if len(raw) < _TRAILER_LEN + len(CKPT_MAGIC) + 1:
        raise CheckpointCorruptError(f"{path}: file too short")
    first_nl = raw.find(b"\n")
    if raw[:first_nl] != CKPT_MAGIC:
        raise CheckpointVersionError(
            f"{path}: expected header {CKPT_MAGIC.decode()!r}, "
            f"got {raw[:first_nl][:32]!r}"
        )
    body, trailer = raw[:-_TRAILER_LEN], raw[-_TRAILER_LEN:]
    if not trailer.startswith(b"sha256 ") or not trailer.endswith(b"\n"):
        raise CheckpointCorruptError(f"{path}: malformed checksum trailer")
    digest = hashlib.sha256(body).hexdigest().encode()
    if trailer[7:-1] != digest:
        raise CheckpointCorruptError(f"{path}: checksum mismatch")
    meta_end = raw.find(b"\n", first_nl + 1)
    meta = json.loads(raw[first_nl + 1 : meta_end])
    payload = body[meta_end + 1 :]
    expected = sum(int(np.prod(shape)) for _, shape in meta["tensors"]) * 8
    if len(payload) != expected:
        raise CheckpointCorruptError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in meta["tensors"]:
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(payload[offset : offset + size], dtype="<f8")
        tensors[name] = arr.reshape(shape).astype(np.float64)
        offset += size
    return Params(arch=meta["arch"], dims=Dims(**meta["dims"]), tensors=tensors)

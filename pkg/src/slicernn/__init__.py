"""Epoch-slice RNN and GRU review-score classifiers, from scratch on numpy."""

from .corpus import (
    EncodedReview,
    PlantSpec,
    Review,
    SliceBatch,
    Vocab,
    batches,
    build_vocab,
    class_histogram,
    encode_pad,
    encode_unpadded,
    filter_by_length,
    parse_reviews_csv,
    resample_drop_top,
    resample_subsample,
    split,
    synth_corpus,
    tokenize,
)
from .evalinspect import EvalReport, HiddenDump, evaluate, hidden_dump
from .kernel import Rng, derive_seed, finite_diff_grad
from .models import (
    Dims,
    Hyper,
    Params,
    backward,
    compute_loss,
    forward,
    gradient_check,
    init_params,
    predict,
    sgd_step,
)
from .trainer import (
    PRESETS,
    MetricsLog,
    PreparedData,
    TrainConfig,
    TrainResult,
    TuningTable,
    grid_search,
    load_checkpoint,
    load_prepared_dir,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

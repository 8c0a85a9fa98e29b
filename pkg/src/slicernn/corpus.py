"""Review ingestion and the preprocessing pipeline.

CSV parsing, tokenization, the 75-87 token length filter, the two
skew-correcting resampling methods, vocabulary construction, front
zero-padding with a trailing end-of-sequence marker, stratified
splitting, and the slice-batch iterator that feeds training.

File formats owned by this module (both carry a leading ``# slicernn-v1``
line):

* prepared dataset: one encoded review per line, ``label<TAB>id id id ...``
* vocabulary: three special header lines (``<pad> 0``, ``<unk> 1``,
  ``<eos> 2``) followed by one token per line, so the k-th token line
  (0-based) holds the token with id k + 3.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    FormatError,
    LengthError,
    StratificationError,
)
from .kernel import Rng

FORMAT_MARKER = "# slicernn-v1"

PAD_ID = 0
UNK_ID = 1
EOS_ID = 2
SPECIALS = ("<pad>", "<unk>", "<eos>")

# lowercase alnum runs are tokens; any other non-whitespace char is its
# own single-character token
_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


@dataclass(frozen=True)
class Review:
    """One raw (score, text) record."""

    id: str
    score: int
    text: str

    def __post_init__(self):
        if self.score not in (1, 2, 3, 4, 5):
            raise ArgumentError(f"score must be in 1..5, got {self.score}")


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_skipped: int = 0
    problems: list[str] = field(default_factory=list)


class Vocab:
    """Bidirectional token<->id map with reserved pad/unk/eos ids 0/1/2.

    Regular tokens start at id 3.  The specials contain ``<`` and ``>``,
    which the tokenizer always splits into single-character tokens, so no
    tokenized text can ever produce a special.
    """

    def __init__(self, tokens: Sequence[str]):
        self.id_to_token: list[str] = list(SPECIALS) + list(tokens)
        self.token_to_id: dict[str, int] = {
            tok: i for i, tok in enumerate(self.id_to_token)
        }
        if len(self.token_to_id) != len(self.id_to_token):
            raise ArgumentError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode_token(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode_id(self, token_id: int) -> str:
        return self.id_to_token[token_id]


@dataclass
class EncodedReview:
    """A review as a fixed array of token ids plus its 0-based class label."""

    ids: np.ndarray
    label: int
    pad_count: int

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class SliceBatch:
    """A [B x T] window of token ids; every row comes from a distinct review."""

    token_ids: np.ndarray
    labels: np.ndarray
    slice_index: int
    is_final_slice: bool


@dataclass
class ClassHistogram:
    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def tokenize(text: str) -> list[str]:
    """Lowercase, split into alnum runs and single punctuation characters."""
    return _TOKEN_RE.findall(text.lower())


def parse_reviews_csv(path: str | Path) -> tuple[list[Review], IngestReport]:
    """Read (score, text) records from an RFC-4180 CSV.

    Column names are matched case-insensitively; Score and Text are
    required, an Id column is used when present.  Rows with an
    unparseable score are skipped and counted in the report.
    """
    report = IngestReport()
    reviews: list[Review] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, no header row")
        lower = [h.strip().lower() for h in header]
        try:
            score_col = lower.index("score")
            text_col = lower.index("text")
        except ValueError:
            raise FormatError(
                f"{path}: header must include Score and Text columns, got {header}"
            )
        id_col = lower.index("id") if "id" in lower else None
        for row_num, row in enumerate(reader, start=2):
            report.rows_read += 1
            if len(row) <= max(score_col, text_col):
                report.rows_skipped += 1
                report.problems.append(f"row {row_num}: too few columns")
                continue
            raw_score = row[score_col].strip()
            try:
                score = int(raw_score)
            except ValueError:
                score = -1
            if score not in (1, 2, 3, 4, 5):
                report.rows_skipped += 1
                report.problems.append(f"row {row_num}: bad score {raw_score!r}")
                continue
            rid = row[id_col] if id_col is not None else str(row_num - 1)
            reviews.append(Review(id=rid, score=score, text=row[text_col]))
    return reviews, report


def filter_by_length(
    reviews: Sequence[Review], min_len: int, max_len: int
) -> list[Review]:
    """Keep reviews whose token count lies in [min_len, max_len] (EOS not counted)."""
    if min_len > max_len:
        raise ArgumentError(f"min_len {min_len} > max_len {max_len}")
    return [r for r in reviews if min_len <= len(tokenize(r.text)) <= max_len]


def class_histogram(reviews: Sequence[Review]) -> ClassHistogram:
    counts = {c: 0 for c in (1, 2, 3, 4, 5)}
    for r in reviews:
        counts[r.score] += 1
    return ClassHistogram(counts)


def resample_drop_top(reviews: Sequence[Review]) -> list[Review]:
    """Discard every score-5 review; the task becomes 4-class."""
    return [r for r in reviews if r.score != 5]


def resample_subsample(
    reviews: Sequence[Review], n_target: int, rng: Rng
) -> list[Review]:
    """Cut classes 4 and 5 down to at most n_target each, uniformly at random.

    Classes 1-3 pass through untouched; surviving reviews keep their
    original relative order.
    """
    if n_target <= 0:
        raise ArgumentError(f"n_target must be positive, got {n_target}")
    keep = set()
    for cls in (4, 5):
        positions = [i for i, r in enumerate(reviews) if r.score == cls]
        if len(positions) > n_target:
            chosen = rng.sample_indices(len(positions), n_target)
            keep.update(positions[i] for i in chosen)
        else:
            keep.update(positions)
    return [r for i, r in enumerate(reviews) if r.score not in (4, 5) or i in keep]


def build_vocab(
    tokenized_reviews: Sequence[Sequence[str]], min_freq: int = 1
) -> Vocab:
    """Vocabulary over the training split: frequency >= min_freq survives.

    Ids are assigned by descending frequency, ties broken lexicographically.
    """
    if min_freq < 1:
        raise ArgumentError(f"min_freq must be >= 1, got {min_freq}")
    freq = Counter()
    for toks in tokenized_reviews:
        freq.update(toks)
    survivors = sorted(
        (tok for tok, n in freq.items() if n >= min_freq),
        key=lambda tok: (-freq[tok], tok),
    )
    return Vocab(survivors)


def encode_pad(review: Review, vocab: Vocab, max_len: int = 88) -> EncodedReview:
    """Front zero-pad to max_len with the EOS marker in the last slot.

    Layout: pad_count copies of pad id, then the token ids, then eos, for
    exactly max_len positions.
    """
    tokens = tokenize(review.text)
    if len(tokens) + 1 > max_len:
        raise LengthError(
            f"review {review.id}: {len(tokens)} tokens + EOS exceeds max_len {max_len}"
        )
    pad_count = max_len - len(tokens) - 1
    ids = np.fromiter(
        [PAD_ID] * pad_count
        + [vocab.encode_token(t) for t in tokens]
        + [EOS_ID],
        dtype=np.int64,
        count=max_len,
    )
    return EncodedReview(ids=ids, label=review.score - 1, pad_count=pad_count)


def encode_unpadded(review: Review, vocab: Vocab) -> EncodedReview:
    """Natural-length encoding: token ids plus trailing EOS, no padding."""
    tokens = tokenize(review.text)
    ids = np.fromiter(
        [vocab.encode_token(t) for t in tokens] + [EOS_ID],
        dtype=np.int64,
        count=len(tokens) + 1,
    )
    return EncodedReview(ids=ids, label=review.score - 1, pad_count=0)


def decode(encoded: EncodedReview, vocab: Vocab) -> list[str]:
    """Token strings with pads stripped and the trailing EOS removed."""
    ids = encoded.ids[encoded.pad_count :]
    if len(ids) and ids[-1] == EOS_ID:
        ids = ids[:-1]
    return [vocab.decode_id(int(i)) for i in ids]


def split(
    reviews: Sequence[Review],
    ratios: tuple[float, float, float],
    rng: Rng,
) -> tuple[list[Review], list[Review], list[Review]]:
    """Stratified train/val/test split.

    Each class is shuffled and divided independently with
    largest-remainder rounding, so per-class proportions stay within one
    review of the requested ratios.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ArgumentError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ArgumentError(f"ratios must sum to 1, got sum {sum(ratios)}")
    by_class: dict[int, list[Review]] = {}
    for r in reviews:
        by_class.setdefault(r.score, []).append(r)
    parts: tuple[list[Review], ...] = ([], [], [])
    for cls in sorted(by_class):
        members = list(by_class[cls])
        if len(members) < 3:
            raise StratificationError(
                f"class {cls} has only {len(members)} reviews, need at least 3"
            )
        rng.shuffle(members)
        quotas = [ratio * len(members) for ratio in ratios]
        counts = [int(q) for q in quotas]
        remainders = sorted(
            range(3), key=lambda i: (quotas[i] - counts[i], -i), reverse=True
        )
        for i in range(len(members) - sum(counts)):
            counts[remainders[i % 3]] += 1
        start = 0
        for part, n in zip(parts, counts):
            part.extend(members[start : start + n])
            start += n
    for part in parts:
        rng.shuffle(part)
    return parts


def batches(
    encoded_set: Sequence[EncodedReview],
    batch_size: int,
    steps: int,
    rng: Rng,
) -> Iterator[SliceBatch]:
    """One epoch of slice batches over a freshly shuffled review order.

    Reviews are grouped into batches of at most batch_size; each batch
    yields its len/steps consecutive slices before the next batch begins,
    so tokens within a slice always come from the same review.
    """
    if batch_size <= 0:
        raise ArgumentError(f"batch_size must be positive, got {batch_size}")
    order = list(range(len(encoded_set)))
    rng.shuffle(order)
    for lo in range(0, len(order), batch_size):
        chunk = [encoded_set[i] for i in order[lo : lo + batch_size]]
        lengths = {len(e) for e in chunk}
        if len(lengths) != 1:
            raise ArgumentError("batch mixes reviews of different lengths")
        (length,) = lengths
        if length % steps != 0:
            raise ArgumentError(
                f"review length {length} is not divisible by steps {steps}"
            )
        tokens = np.stack([e.ids for e in chunk])
        labels = np.array([e.label for e in chunk], dtype=np.int64)
        n_slices = length // steps
        for s in range(n_slices):
            yield SliceBatch(
                token_ids=tokens[:, s * steps : (s + 1) * steps],
                labels=labels,
                slice_index=s,
                is_final_slice=(s == n_slices - 1),
            )


def batches_by_length(
    encoded_set: Sequence[EncodedReview],
    batch_size: int,
    steps: int,
    rng: Rng,
) -> Iterator[SliceBatch]:
    """Slice batches for unpadded data: rows grouped by equal length.

    The final slice of a group may be narrower than steps when the length
    is not a multiple of it.
    """
    order = list(range(len(encoded_set)))
    rng.shuffle(order)
    groups: dict[int, list[EncodedReview]] = {}
    for i in order:
        enc = encoded_set[i]
        groups.setdefault(len(enc), []).append(enc)
    for length in sorted(groups):
        members = groups[length]
        n_slices = -(-length // steps)
        for lo in range(0, len(members), batch_size):
            chunk = members[lo : lo + batch_size]
            tokens = np.stack([e.ids for e in chunk])
            labels = np.array([e.label for e in chunk], dtype=np.int64)
            for s in range(n_slices):
                yield SliceBatch(
                    token_ids=tokens[:, s * steps : min((s + 1) * steps, length)],
                    labels=labels,
                    slice_index=s,
                    is_final_slice=(s == n_slices - 1),
                )


DEFAULT_PLANT_TOKENS = {1: "plantone", 2: "planttwo", 3: "plantthree",
                        4: "plantfour", 5: "plantfive"}


@dataclass(frozen=True)
class PlantSpec:
    """How to plant a class marker into synthetic reviews.

    The default density makes half the positions carry the class marker,
    dense enough that a desk-scale training run separates the classes in
    a few dozen epochs.
    """

    tokens: dict[int, str] = field(
        default_factory=lambda: dict(DEFAULT_PLANT_TOKENS)
    )
    density: float = 0.5
    n_filler: int = 40


def synth_corpus(
    n_per_class: int, plant_spec: PlantSpec | None, rng: Rng
) -> list[Review]:
    """Synthetic reviews of 75-87 filler tokens with one planted class token.

    Every class-c review contains plant_spec.tokens[c] at least once (and
    at each position with probability plant_spec.density), so the label
    is recoverable from the text by construction.
    """
    if n_per_class <= 0:
        raise ArgumentError(f"n_per_class must be positive, got {n_per_class}")
    spec = plant_spec if plant_spec is not None else PlantSpec()
    fillers = [f"filler{i:02d}" for i in range(spec.n_filler)]
    reviews: list[Review] = []
    for cls in sorted(spec.tokens):
        plant = spec.tokens[cls]
        for k in range(n_per_class):
            n_tokens = 75 + rng.randbelow(13)
            words = []
            planted = False
            for _ in range(n_tokens):
                if rng.random() < spec.density:
                    words.append(plant)
                    planted = True
                else:
                    words.append(fillers[rng.randbelow(len(fillers))])
            if not planted:
                words[rng.randbelow(n_tokens)] = plant
            reviews.append(
                Review(id=f"synth-{cls}-{k}", score=cls, text=" ".join(words))
            )
    return reviews


def write_prepared(path: str | Path, encoded_set: Sequence[EncodedReview]) -> None:
    """Write the versioned prepared-dataset file (label TAB id id id ...)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FORMAT_MARKER + "\n")
        for enc in encoded_set:
            fh.write(f"{enc.label}\t{' '.join(str(int(i)) for i in enc.ids)}\n")


def read_prepared(path: str | Path) -> list[EncodedReview]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != FORMAT_MARKER:
            raise FormatError(f"{path}: expected leading '{FORMAT_MARKER}' line")
        out = []
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                label_s, ids_s = line.split("\t")
                label = int(label_s)
                ids = np.fromiter((int(t) for t in ids_s.split()), dtype=np.int64)
            except ValueError:
                raise FormatError(f"{path}:{line_no}: malformed prepared line")
            pad_count = 0
            while pad_count < len(ids) and ids[pad_count] == PAD_ID:
                pad_count += 1
            out.append(EncodedReview(ids=ids, label=label, pad_count=pad_count))
    return out


def write_vocab(path: str | Path, vocab: Vocab) -> None:
    """Write the versioned vocabulary file (3 special lines, then tokens)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FORMAT_MARKER + "\n")
        for i, tok in enumerate(SPECIALS):
            fh.write(f"{tok} {i}\n")
        for tok in vocab.id_to_token[3:]:
            fh.write(tok + "\n")


def read_vocab(path: str | Path) -> Vocab:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FORMAT_MARKER:
        raise FormatError(f"{path}: expected leading '{FORMAT_MARKER}' line")
    expected = [f"{tok} {i}" for i, tok in enumerate(SPECIALS)]
    if lines[1:4] != expected:
        raise FormatError(f"{path}: malformed special-token header")
    return Vocab(lines[4:])


def write_histogram_csv(path: str | Path, hist: ClassHistogram) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class,count\n")
        for cls in sorted(hist.counts):
            fh.write(f"{cls},{hist.counts[cls]}\n")

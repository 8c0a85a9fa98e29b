#!/usr/bin/env python3
"""Walk the data pipeline end to end on a synthetic corpus.

Generates planted reviews, round-trips them through a CSV, filters by
length, corrects the class skew both ways, splits, builds the
vocabulary, encodes with front zero-padding, and finally iterates slice
batches the way the trainer does.
"""

import csv
import tempfile
from pathlib import Path

from slicernn.corpus import (
    batches,
    build_vocab,
    class_histogram,
    encode_pad,
    filter_by_length,
    parse_reviews_csv,
    resample_drop_top,
    resample_subsample,
    split,
    synth_corpus,
    tokenize,
)
from slicernn.kernel import Rng

workdir = Path(tempfile.mkdtemp(prefix="slicernn-demo-"))

# -- make a skewed corpus: class 5 heavily over-represented ----------------
reviews = synth_corpus(40, None, Rng(1))
reviews += [r for r in synth_corpus(160, None, Rng(2)) if r.score == 5]
print(f"raw corpus: {len(reviews)} reviews,",
      "histogram", class_histogram(reviews).counts)

# -- round-trip through the CSV reader --------------------------------------
csv_path = workdir / "reviews.csv"
with open(csv_path, "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["Id", "Score", "Text"])
    for r in reviews:
        writer.writerow([r.id, r.score, r.text])
parsed, report = parse_reviews_csv(csv_path)
print(f"parsed back: {report.rows_read} rows, {report.rows_skipped} skipped")

# -- length filter keeps the 75..87 token range ------------------------------
filtered = filter_by_length(parsed, 75, 87)
print(f"after length filter: {len(filtered)} reviews")

# -- two ways to fix the skew ------------------------------------------------
print("drop_top   ->", class_histogram(resample_drop_top(filtered)).counts)
balanced = resample_subsample(filtered, 40, Rng(3))
print("subsample  ->", class_histogram(balanced).counts)

# -- split, build the vocabulary on train only, encode ----------------------
train_r, val_r, test_r = split(balanced, (0.8, 0.1, 0.1), Rng(4))
print(f"split sizes: {len(train_r)}/{len(val_r)}/{len(test_r)}")
vocab = build_vocab([tokenize(r.text) for r in train_r], min_freq=1)
print(f"vocabulary: {len(vocab)} entries (ids 0..2 are pad/unk/eos)")

encoded = [encode_pad(r, vocab, 88) for r in train_r]
sample = encoded[0]
print(f"one encoded review: len={len(sample)} pad_count={sample.pad_count} "
      f"label={sample.label} tail={sample.ids[-4:].tolist()}")

# -- slice batches: 11 slices of 8 tokens per batch of reviews ---------------
slice_count = 0
for sb in batches(encoded, batch_size=16, steps=8, rng=Rng(5)):
    slice_count += 1
    if sb.slice_index == 10:
        assert sb.is_final_slice
print(f"one epoch yields {slice_count} slice batches "
      f"({slice_count // 11} review batches x 11 slices)")

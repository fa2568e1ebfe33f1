"""CTC best-path decoding and forward scoring, with an exhaustive oracle.

greedy_decode is the no-beam realization of argmax decoding: take the
per-frame argmax path, collapse consecutive repeats, delete blanks.
ctc_forward_logprob sums over all alignments with the standard forward
recursion; enumerate_alignments_logprob brute-forces the same quantity on
instances small enough to enumerate and exists purely to cross-check it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .seqcore import FramePath, PosteriorGrid, Vocabulary, frame_argmax

ENUM_MAX_FRAMES = 10
ENUM_MAX_LABELS = 5


@dataclass
class LabelSequence:
    """Collapsed decode output: non-blank label ids plus an optional score."""

    ids: np.ndarray
    score: float | None = None

    def __post_init__(self):
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 1:
            raise ValueError("ids must be a 1-d array")
        if self.ids.size and self.ids.min() < 0:
            raise ValueError("ids must be non-negative")

    def __len__(self):
        return self.ids.shape[0]


def collapse_path(arg_labels, blank_index: int) -> np.ndarray:
    """Collapse consecutive repeats, then delete blanks."""
    labels = np.asarray(arg_labels, dtype=np.int64)
    if labels.size == 0:
        return labels
    keep = np.concatenate(([True], labels[1:] != labels[:-1]))
    runs = labels[keep]
    return runs[runs != blank_index]


def greedy_decode(grid: PosteriorGrid, vocab: Vocabulary) -> LabelSequence:
    """Best-path decode; score is the summed log of the per-frame maxima."""
    if vocab.size != grid.num_labels:
        raise ValueError(
            f"vocabulary size {vocab.size} does not match grid V={grid.num_labels}"
        )
    path = frame_argmax(grid)
    ids = collapse_path(path.arg_labels, vocab.blank_index)
    score = float(grid.log_probs[np.arange(grid.num_frames), path.arg_labels].sum())
    return LabelSequence(ids, score)


def decode_path(path: FramePath, blank_index: int) -> LabelSequence:
    """Collapse an existing argmax path without rescoring the grid."""
    ids = collapse_path(path.arg_labels, blank_index)
    score = float(np.log(np.maximum(path.arg_scores, 1e-30)).sum())
    return LabelSequence(ids, score)


def _expanded_target(ids, blank_index):
    ext = np.full(2 * len(ids) + 1, blank_index, dtype=np.int64)
    ext[1::2] = ids
    return ext


def _min_frames(ids):
    # each label needs a frame; equal adjacent labels need a separating blank
    repeats = int(np.sum(ids[1:] == ids[:-1])) if len(ids) > 1 else 0
    return len(ids) + repeats


def ctc_forward_logprob(
    grid: PosteriorGrid, target: LabelSequence, vocab: Vocabulary
) -> float:
    """log P(target | grid) summed over all CTC alignments.

    Infeasible targets (too long for T once repeat-separating blanks are
    counted) return -inf rather than raising. An empty target scores the
    all-blank path set.
    """
    if vocab.size != grid.num_labels:
        raise ValueError(
            f"vocabulary size {vocab.size} does not match grid V={grid.num_labels}"
        )
    ids = target.ids
    if ids.size and (ids == vocab.blank_index).any():
        raise ValueError("target must not contain the blank label")
    if ids.size and ids.max() >= vocab.size:
        raise ValueError("target id out of vocabulary range")
    if _min_frames(ids) > grid.num_frames:
        return float("-inf")
    ext = _expanded_target(ids, vocab.blank_index)
    return float(_kernels.ctc_forward_ll(grid.log_probs, ext))


def enumerate_alignments_logprob(
    grid: PosteriorGrid, target: LabelSequence, vocab: Vocabulary
) -> float:
    """Brute-force oracle: enumerate every V^T frame path, keep those that
    collapse to the target, and sum their probabilities in float64."""
    t, v = grid.probs.shape
    if t > ENUM_MAX_FRAMES or v > ENUM_MAX_LABELS:
        raise ValueError(
            f"instance too large to enumerate: T={t} (max {ENUM_MAX_FRAMES}), "
            f"V={v} (max {ENUM_MAX_LABELS})"
        )
    if target.ids.size and (target.ids == vocab.blank_index).any():
        raise ValueError("target must not contain the blank label")
    want = tuple(int(i) for i in target.ids)
    blank = vocab.blank_index
    rows = grid.probs
    total = 0.0
    for path in itertools.product(range(v), repeat=t):
        collapsed = []
        prev = -1
        for lab in path:
            if lab != prev and lab != blank:
                collapsed.append(lab)
            prev = lab
        if tuple(collapsed) != want:
            continue
        p = 1.0
        for i, lab in enumerate(path):
            p *= rows[i, lab]
        total += p
    return math.log(total) if total > 0.0 else float("-inf")

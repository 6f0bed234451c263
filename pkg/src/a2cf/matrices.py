"""Sparse user-attribute and item-attribute matrices from the lexicon.

Observed cells live on the rating scale [1, rating_max]; absent cells are
exactly 0 and mark "never mentioned".
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Corpus


@dataclass
class SparseAttributeMatrix:
    """Dict-backed sparse matrix with an explicit structural-zero convention."""

    rows: int
    cols: int
    scale_cap: float                     # rating_max the values were built with
    entries: dict                        # (row, col) -> float in [1, scale_cap]

    def get(self, row: int, col: int) -> float:
        return self.entries.get((row, col), 0.0)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols), dtype=np.float64)
        for (r, c), v in self.entries.items():
            dense[r, c] = v
        return dense

    def observed_mask(self) -> np.ndarray:
        mask = np.zeros((self.rows, self.cols), dtype=bool)
        for r, c in self.entries:
            mask[r, c] = True
        return mask


def user_attr_value(count: int, rating_max: float = 5.0) -> float:
    """Map a mention count t >= 1 to 1 + (rating_max - 1) * tanh(t / 2).

    Monotone in the count, 1 at t -> 0+, saturating at rating_max.
    """
    if count < 1:
        raise ValueError(f"mention count must be >= 1, got {count}")
    return 1.0 + (rating_max - 1.0) * float(np.tanh(count / 2.0))


def item_attr_value(count: int, mean_sentiment: float,
                    rating_max: float = 5.0) -> float:
    """Map mention count t >= 1 and mean sentiment in [-1, 1] to
    1 + (rating_max - 1) * sigmoid(t * mean_sentiment).

    Neutral sentiment gives the scale midpoint regardless of count; strong
    consistent sentiment saturates toward 1 or rating_max.
    """
    if count < 1:
        raise ValueError(f"mention count must be >= 1, got {count}")
    if not -1.0 <= mean_sentiment <= 1.0:
        raise ValueError(f"mean sentiment must be in [-1, 1], got {mean_sentiment}")
    return 1.0 + (rating_max - 1.0) * float(expit(count * mean_sentiment))


@dataclass
class MentionStats:
    """Aggregated lexicon counts feeding the matrix value maps."""

    user_attr_counts: dict               # (user, attr) -> mention count
    item_attr_counts: dict               # (item, attr) -> mention count
    item_attr_sentiment: dict            # (item, attr) -> mean sentiment


def collect_mentions(corpus: Corpus) -> MentionStats:
    user_counts: dict = {}
    item_counts: dict = {}
    item_sent_sum: dict = {}
    for u, v, a, s in corpus.lexicon:
        u, v, a, s = int(u), int(v), int(a), int(s)
        user_counts[(u, a)] = user_counts.get((u, a), 0) + 1
        item_counts[(v, a)] = item_counts.get((v, a), 0) + 1
        item_sent_sum[(v, a)] = item_sent_sum.get((v, a), 0) + s
    item_sent = {k: item_sent_sum[k] / item_counts[k] for k in item_counts}
    return MentionStats(user_counts, item_counts, item_sent)


def build_matrices(corpus: Corpus, rating_max: float = 5.0
                   ) -> tuple[SparseAttributeMatrix, SparseAttributeMatrix,
                              MentionStats]:
    """Build the observed user-attribute and item-attribute matrices plus the
    mention statistics they came from."""
    stats = collect_mentions(corpus)
    user_entries = {key: user_attr_value(cnt, rating_max)
                    for key, cnt in stats.user_attr_counts.items()}
    item_entries = {key: item_attr_value(cnt, stats.item_attr_sentiment[key], rating_max)
                    for key, cnt in stats.item_attr_counts.items()}
    user_mat = SparseAttributeMatrix(corpus.n_users, corpus.n_attrs,
                                     rating_max, user_entries)
    item_mat = SparseAttributeMatrix(corpus.n_items, corpus.n_attrs,
                                     rating_max, item_entries)
    return user_mat, item_mat, stats


def dump_matrix(matrix: SparseAttributeMatrix, path: str) -> None:
    """Write observed cells as 'row<TAB>col<TAB>value' with %.9g values,
    sorted by (row, col)."""
    with open(path, "w", encoding="utf-8") as fh:
        for (r, c) in sorted(matrix.entries):
            fh.write(f"{r}\t{c}\t{matrix.entries[(r, c)]:.9g}\n")

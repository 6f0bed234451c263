"""Corpus loading, activity filtering, and triplet ground-truth construction.

File formats (tab-separated text, '#' starts a comment line, blank lines
ignored):
  reviews:      user_id  item_id  rating  [timestamp]
  lexicon:      user_id  item_id  attribute  {+1|-1}
  substitutes:  item_id  item_id            (unordered pair, no self-pairs)
"""

import io
import logging
import zipfile
from dataclasses import dataclass, field

import numpy as np
from numpy.lib import format as npformat

logger = logging.getLogger(__name__)

QUERY_POP_EXPONENT = 0.75


@dataclass(frozen=True)
class ReviewRecord:
    user_id: str
    item_id: str
    rating: int
    timestamp: int | None = None


@dataclass(frozen=True)
class LexiconEntry:
    user_id: str
    item_id: str
    attribute: str
    sentiment: int  # +1 or -1


def _data_lines(path: str):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, stripped


def load_reviews(path: str, rating_max: int = 5) -> list[ReviewRecord]:
    """Parse a review file; ratings must be integers in [1, rating_max]."""
    records = []
    for lineno, text in _data_lines(path):
        parts = text.split("\t")
        if len(parts) not in (3, 4):
            raise ValueError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(parts)}")
        user, item, rating_raw = parts[0], parts[1], parts[2]
        if not user or not item:
            raise ValueError(f"{path}:{lineno}: empty user or item id")
        try:
            rating = int(rating_raw)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: rating {rating_raw!r} is not an integer") from None
        if not 1 <= rating <= rating_max:
            raise ValueError(f"{path}:{lineno}: rating {rating} outside [1, {rating_max}]")
        timestamp = None
        if len(parts) == 4:
            try:
                timestamp = int(parts[3])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: timestamp {parts[3]!r} is not an integer") from None
        records.append(ReviewRecord(user, item, rating, timestamp))
    return records


def load_lexicon(path: str) -> list[LexiconEntry]:
    """Parse sentiment-lexicon lines; the sentiment field is '+1' or '-1'."""
    entries = []
    for lineno, text in _data_lines(path):
        parts = text.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        user, item, attr, sent = parts
        if not user or not item or not attr:
            raise ValueError(f"{path}:{lineno}: empty field")
        if sent == "+1":
            sentiment = 1
        elif sent == "-1":
            sentiment = -1
        else:
            raise ValueError(f"{path}:{lineno}: sentiment must be '+1' or '-1', got {sent!r}")
        entries.append(LexiconEntry(user, item, attr, sentiment))
    return entries


def load_substitutes(path: str) -> list[tuple[str, str]]:
    """Parse substitute pairs; self-pairs are rejected, duplicates collapsed."""
    seen = set()
    pairs = []
    for lineno, text in _data_lines(path):
        parts = text.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
        a, b = parts
        if not a or not b:
            raise ValueError(f"{path}:{lineno}: empty item id")
        if a == b:
            raise ValueError(f"{path}:{lineno}: item {a!r} listed as its own substitute")
        key = (a, b) if a <= b else (b, a)
        if key in seen:
            continue
        seen.add(key)
        pairs.append(key)
    return pairs


@dataclass
class Corpus:
    """Filtered corpus with dense integer ids.

    Tokens are sorted lexicographically; index arrays refer into the token
    lists. Derived lookup structures are built on construction.
    """

    user_tokens: list[str]
    item_tokens: list[str]
    attr_tokens: list[str]
    interactions: np.ndarray        # (n_inter, 2) int64: user, item
    lexicon: np.ndarray             # (n_lex, 4) int64: user, item, attr, sentiment
    substitute_pairs: np.ndarray    # (n_pairs, 2) int64, first < second
    user_items: list[set] = field(init=False, repr=False)
    substitutes: list[set] = field(init=False, repr=False)
    popularity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.user_items = [set() for _ in self.user_tokens]
        for u, v in self.interactions:
            self.user_items[u].add(int(v))
        self.substitutes = [set() for _ in self.item_tokens]
        for a, b in self.substitute_pairs:
            self.substitutes[a].add(int(b))
            self.substitutes[b].add(int(a))
        self.popularity = np.zeros(len(self.item_tokens), dtype=np.int64)
        for items in self.user_items:
            for v in items:
                self.popularity[v] += 1

    @property
    def n_users(self) -> int:
        return len(self.user_tokens)

    @property
    def n_items(self) -> int:
        return len(self.item_tokens)

    @property
    def n_attrs(self) -> int:
        return len(self.attr_tokens)


def filter_corpus(reviews: list[ReviewRecord],
                  lexicon: list[LexiconEntry],
                  substitutes: list[tuple[str, str]],
                  min_user_items: int = 5,
                  min_item_users: int = 5,
                  min_attr_mentions: int = 2) -> Corpus:
    """Apply activity thresholds and assign dense ids.

    Users with fewer than min_user_items distinct items and items with fewer
    than min_item_users distinct users are removed iteratively until a fixed
    point; afterwards attributes mentioned fewer than min_attr_mentions times
    (counting surviving lexicon lines, duplicates included) are dropped.
    """
    pairs = {(r.user_id, r.item_id) for r in reviews}
    users = {u for u, _ in pairs}
    items = {v for _, v in pairs}
    while True:
        user_deg: dict = {}
        item_deg: dict = {}
        for u, v in pairs:
            if u in users and v in items:
                user_deg[u] = user_deg.get(u, 0) + 1
                item_deg[v] = item_deg.get(v, 0) + 1
        bad_users = {u for u in users if user_deg.get(u, 0) < min_user_items}
        bad_items = {v for v in items if item_deg.get(v, 0) < min_item_users}
        if not bad_users and not bad_items:
            break
        users -= bad_users
        items -= bad_items
    pairs = {(u, v) for u, v in pairs if u in users and v in items}
    if not pairs:
        raise ValueError("corpus is empty after activity filtering")

    kept_lex = [e for e in lexicon if e.user_id in users and e.item_id in items]
    attr_counts: dict = {}
    for e in kept_lex:
        attr_counts[e.attribute] = attr_counts.get(e.attribute, 0) + 1
    attrs = {a for a, c in attr_counts.items() if c >= min_attr_mentions}
    kept_lex = [e for e in kept_lex if e.attribute in attrs]
    if not attrs:
        raise ValueError("no attribute survives the mention threshold")

    user_tokens = sorted(users)
    item_tokens = sorted(items)
    attr_tokens = sorted(attrs)
    uid = {t: i for i, t in enumerate(user_tokens)}
    vid = {t: i for i, t in enumerate(item_tokens)}
    aid = {t: i for i, t in enumerate(attr_tokens)}

    inter = np.array(sorted((uid[u], vid[v]) for u, v in pairs), dtype=np.int64)
    lex_rows = sorted((uid[e.user_id], vid[e.item_id], aid[e.attribute], e.sentiment)
                      for e in kept_lex)
    lex = (np.array(lex_rows, dtype=np.int64) if lex_rows
           else np.empty((0, 4), dtype=np.int64))
    sub_rows = sorted({tuple(sorted((vid[a], vid[b])))
                       for a, b in substitutes if a in vid and b in vid})
    subs = (np.array(sub_rows, dtype=np.int64) if sub_rows
            else np.empty((0, 2), dtype=np.int64))
    n_dropped = len(reviews) - len({(r.user_id, r.item_id) for r in reviews})
    logger.info("filtered corpus: %d users, %d items, %d attrs, %d interactions "
                "(%d duplicate review pairs collapsed)",
                len(user_tokens), len(item_tokens), len(attr_tokens), len(inter), n_dropped)
    return Corpus(user_tokens, item_tokens, attr_tokens, inter, lex, subs)


def sample_query_item(user: int, positive: int, corpus: Corpus,
                      rng: np.random.Generator) -> int:
    """Draw a query item from the substitutes of `positive` that `user` has
    not interacted with, weighted by popularity**0.75.

    Raises ValueError when no such item exists (callers are expected to skip
    those pairs).
    """
    pool = sorted(corpus.substitutes[positive] - corpus.user_items[user])
    if not pool:
        raise ValueError(f"no query candidate for user {user}, item {positive}")
    weights = corpus.popularity[pool].astype(np.float64) ** QUERY_POP_EXPONENT
    total = weights.sum()
    if total <= 0.0:
        # all candidates unseen in the interaction set; fall back to uniform
        probs = np.full(len(pool), 1.0 / len(pool))
    else:
        probs = weights / total
    return int(pool[rng.choice(len(pool), p=probs)])


def build_triplets(corpus: Corpus, rng: np.random.Generator) -> np.ndarray:
    """Emit one (user, query, positive) triplet per interaction.

    Interactions whose substitute pool is exhausted by the user's own history
    (or empty) are skipped and counted in the log.
    """
    rows = []
    skipped = 0
    for u, v in corpus.interactions:
        u, v = int(u), int(v)
        if not (corpus.substitutes[v] - corpus.user_items[u]):
            skipped += 1
            continue
        rows.append((u, sample_query_item(u, v, corpus, rng), v))
    logger.info("built %d triplets (%d interactions skipped: no eligible query)",
                len(rows), skipped)
    if not rows:
        raise ValueError("no triplet could be formed from the corpus")
    return np.array(rows, dtype=np.int64)


@dataclass
class SplitTriplets:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray


def split_triplets(triplets: np.ndarray, seed: int,
                   ratios: tuple = (0.8, 0.1, 0.1)) -> SplitTriplets:
    """Shuffle and split triplets into train/valid/test.

    Valid and test sizes are floored, the remainder goes to train. Test
    triplets whose (user, positive) or (query, positive) pair also occurs in
    training are discarded to prevent leakage.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be 3 nonnegative values summing to 1, got {ratios}")
    n = len(triplets)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = triplets[order]
    n_valid = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_valid - n_test
    train = shuffled[:n_train]
    valid = shuffled[n_train:n_train + n_valid]
    test = shuffled[n_train + n_valid:]

    train_up = {(int(u), int(p)) for u, _, p in train}
    train_qp = {(int(q), int(p)) for _, q, p in train}
    keep = np.array([(int(u), int(p)) not in train_up and (int(q), int(p)) not in train_qp
                     for u, q, p in test], dtype=bool)
    dropped = int(len(test) - keep.sum())
    if dropped:
        logger.info("dropped %d test triplets overlapping training pairs", dropped)
    return SplitTriplets(train=train, valid=valid, test=test[keep])


def save_prepared(path: str, corpus: Corpus, splits: SplitTriplets) -> None:
    """Serialize a filtered corpus plus its splits to one .npz file.

    Written with a fixed zip timestamp so identical inputs give identical
    bytes (np.savez stamps wall-clock time into the archive).
    """
    arrays = {
        "user_tokens": np.array(corpus.user_tokens, dtype=np.str_),
        "item_tokens": np.array(corpus.item_tokens, dtype=np.str_),
        "attr_tokens": np.array(corpus.attr_tokens, dtype=np.str_),
        "interactions": corpus.interactions,
        "lexicon": corpus.lexicon,
        "substitute_pairs": corpus.substitute_pairs,
        "train": splits.train, "valid": splits.valid, "test": splits.test,
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            npformat.write_array(buf, np.ascontiguousarray(arr),
                                 allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_prepared(path: str) -> tuple[Corpus, SplitTriplets]:
    with np.load(path, allow_pickle=False) as blob:
        corpus = Corpus(
            user_tokens=[str(t) for t in blob["user_tokens"]],
            item_tokens=[str(t) for t in blob["item_tokens"]],
            attr_tokens=[str(t) for t in blob["attr_tokens"]],
            interactions=blob["interactions"],
            lexicon=blob["lexicon"],
            substitute_pairs=blob["substitute_pairs"])
        splits = SplitTriplets(train=blob["train"], valid=blob["valid"],
                               test=blob["test"])
    return corpus, splits


def write_corpus_manifest(path: str, corpus: Corpus,
                          splits: SplitTriplets | None = None) -> None:
    """Write corpus summary counts as key=value lines."""
    lines = [f"users={corpus.n_users}",
             f"items={corpus.n_items}",
             f"attributes={corpus.n_attrs}",
             f"interactions={len(corpus.interactions)}",
             f"lexicon_entries={len(corpus.lexicon)}",
             f"substitute_pairs={len(corpus.substitute_pairs)}"]
    if splits is not None:
        lines += [f"train_triplets={len(splits.train)}",
                  f"valid_triplets={len(splits.valid)}",
                  f"test_triplets={len(splits.test)}"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

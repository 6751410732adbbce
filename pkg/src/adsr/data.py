"""Dataset ingestion, filtering, windowing, batching and caching.

The pipeline turns raw interaction logs into fixed-length training
windows: per user the chronologically first 80% of events feeds training,
the remainder is split into validation and test. Windows are 10
consecutive events (9 inputs, last one the target); held-out windows that
mention an item absent from every training window are dropped, and
shorter regions simply contribute no windows.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .rng import RngState

WINDOW = 10


@dataclass
class InteractionEvent:
    user_id: int
    item_id: int
    timestamp: float
    attributes: frozenset

    def __post_init__(self):
        if not self.attributes:
            raise DataError(f"item {self.item_id} carries no attributes")
        if not np.isfinite(self.timestamp):
            raise DataError(f"non-finite timestamp for item {self.item_id}")


class Vocabulary:
    """Bijection between external ids and dense indices starting at 0."""

    def __init__(self, externals):
        self.from_index = list(externals)
        self.to_index = {e: i for i, e in enumerate(self.from_index)}
        if len(self.to_index) != len(self.from_index):
            raise DataError("duplicate external ids in vocabulary")

    def __len__(self):
        return len(self.from_index)

    def index(self, external):
        return self.to_index[external]

    def external(self, index: int):
        return self.from_index[index]

    def __contains__(self, external):
        return external in self.to_index


class ItemAttributeTable:
    """Per item index, the set of attribute indices it belongs to."""

    def __init__(self, attrs_per_item: list[tuple[int, ...]], num_attrs: int):
        if any(len(a) == 0 for a in attrs_per_item):
            raise DataError("every item needs at least one attribute")
        self.attrs = [tuple(sorted(a)) for a in attrs_per_item]
        self.num_attrs = num_attrs
        self._multihot = None

    def __len__(self):
        return len(self.attrs)

    def __getitem__(self, item_index: int) -> tuple[int, ...]:
        return self.attrs[item_index]

    def multihot(self, dtype=np.float64) -> np.ndarray:
        """(num_items, num_attrs) binary membership matrix; cached."""
        if self._multihot is None or self._multihot.dtype != dtype:
            m = np.zeros((len(self.attrs), self.num_attrs), dtype=dtype)
            for i, a in enumerate(self.attrs):
                m[i, list(a)] = 1.0
            self._multihot = m
        return self._multihot


@dataclass
class WindowSample:
    """One training/eval instance: 9 input (item, attributes) pairs plus target."""

    input_items: tuple[int, ...]
    input_attrs: tuple[tuple[int, ...], ...]
    target_item: int
    target_attrs: tuple[int, ...]


@dataclass
class SplitDataset:
    train: np.ndarray  # (n, 10) int32; columns 0..8 inputs, column 9 target
    valid: np.ndarray
    test: np.ndarray
    item_vocab: Vocabulary
    attr_vocab: Vocabulary
    item_attrs: ItemAttributeTable
    num_users: int

    @property
    def counts(self) -> dict:
        return {
            "users": self.num_users,
            "items": len(self.item_vocab),
            "attributes": len(self.attr_vocab),
            "train_windows": len(self.train),
            "valid_windows": len(self.valid),
            "test_windows": len(self.test),
        }

    def windows(self, split: str) -> np.ndarray:
        return {"train": self.train, "valid": self.valid, "test": self.test}[split]

    def sample(self, split: str, i: int) -> WindowSample:
        row = self.windows(split)[i]
        return WindowSample(
            input_items=tuple(int(x) for x in row[:-1]),
            input_attrs=tuple(self.item_attrs[int(x)] for x in row[:-1]),
            target_item=int(row[-1]),
            target_attrs=self.item_attrs[int(row[-1])],
        )


# -- loaders -----------------------------------------------------------------


def load_movielens(ratings_path, movies_path) -> list[InteractionEvent]:
    """Parse the '::'-separated MovieLens-1M files into per-user event streams.

    Attributes are the movie's genre set; events are sorted per user by
    timestamp (stable, so file order breaks ties).
    """
    genres_by_movie = {}
    with open(movies_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 3:
                raise ParseError(f"{movies_path}:{lineno}: expected 3 '::' fields")
            movie_id, _title, genre_field = parts
            genres = frozenset(g for g in genre_field.split("|") if g)
            if not genres:
                raise DataError(f"{movies_path}:{lineno}: movie {movie_id} has no genres")
            genres_by_movie[int(movie_id)] = genres

    events = []
    with open(ratings_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise ParseError(f"{ratings_path}:{lineno}: expected 4 '::' fields")
            try:
                user, movie, _rating, ts = (
                    int(parts[0]),
                    int(parts[1]),
                    parts[2],
                    int(parts[3]),
                )
            except ValueError as exc:
                raise ParseError(f"{ratings_path}:{lineno}: {exc}") from exc
            genres = genres_by_movie.get(movie)
            if genres is None:
                raise DataError(
                    f"{ratings_path}:{lineno}: movie {movie} has no genre row"
                )
            events.append(InteractionEvent(user, movie, float(ts), genres))
    return _sort_per_user(events)


DEFAULT_TMALL_COLUMNS = {
    "user": 0,
    "item": 1,
    "category": 2,
    "action": 3,
    "timestamp": 4,
}


def load_tmall(
    path,
    action_filter: str = "buy",
    columns: dict | None = None,
    delimiter: str = ",",
    skip_header: bool = True,
) -> list[InteractionEvent]:
    """Load a delimited e-commerce log keeping only one action type.

    ``columns`` maps the logical fields (user, item, category, action,
    timestamp) to 0-based column positions; distributions of this dataset
    vary, so the mapping is configurable. The single category field is the
    item's attribute.
    """
    cols = dict(DEFAULT_TMALL_COLUMNS)
    if columns:
        cols.update(columns)
    events = []
    seen_actions = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if skip_header and lineno == 1:
                continue
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(delimiter)
            try:
                action = parts[cols["action"]].strip()
                seen_actions.add(action)
                if action != action_filter:
                    continue
                user = int(parts[cols["user"]])
                item = int(parts[cols["item"]])
                category = parts[cols["category"]].strip()
                ts = float(parts[cols["timestamp"]])
            except (IndexError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if not category:
                raise DataError(f"{path}:{lineno}: missing category field")
            events.append(InteractionEvent(user, item, ts, frozenset([category])))
    if not events and seen_actions and action_filter not in seen_actions:
        raise ConfigError(
            f"action filter '{action_filter}' matches no action code; "
            f"saw {sorted(seen_actions)}"
        )
    return _sort_per_user(events)


def _sort_per_user(events: list[InteractionEvent]) -> list[InteractionEvent]:
    by_user = defaultdict(list)
    for ev in events:
        by_user[ev.user_id].append(ev)
    ordered = []
    for user in sorted(by_user):
        seq = by_user[user]
        seq.sort(key=lambda e: e.timestamp)  # stable: ties keep file order
        ordered.extend(seq)
    return ordered


# -- filtering / windowing -----------------------------------------------------


def filter_min_interactions(
    events: list[InteractionEvent], threshold: int = 20
) -> list[InteractionEvent]:
    """Iteratively drop users and items with fewer than ``threshold`` events.

    User and item counts interact, so removal repeats until a fixed point.
    """
    if threshold < 1:
        raise ConfigError(f"threshold must be >= 1, got {threshold}")
    current = events
    while True:
        user_counts = Counter(e.user_id for e in current)
        item_counts = Counter(e.item_id for e in current)
        bad_users = {u for u, c in user_counts.items() if c < threshold}
        bad_items = {i for i, c in item_counts.items() if c < threshold}
        if not bad_users and not bad_items:
            break
        current = [
            e
            for e in current
            if e.user_id not in bad_users and e.item_id not in bad_items
        ]
    if not current:
        raise DataError("filtering removed every event")
    return current


def split_and_window(events: list[InteractionEvent], window: int = WINDOW) -> SplitDataset:
    """Build the train/valid/test window arrays plus vocabularies.

    Per user: first 80% of events (floor) is the train region, the rest is
    held out; windows never straddle the boundary. Held-out windows with
    any item outside the training vocabulary are dropped, then split per
    user chronologically: first half validation, second half (plus the odd
    middle window) test.
    """
    by_user = defaultdict(list)
    for ev in events:
        by_user[ev.user_id].append(ev)

    attrs_by_item = {}
    for ev in events:
        attrs_by_item.setdefault(ev.item_id, ev.attributes)

    train_regions = {}
    held_regions = {}
    for user in sorted(by_user):
        seq = by_user[user]
        cut = (len(seq) * 8) // 10  # floor(0.8 n) in exact integer arithmetic
        train_regions[user] = seq[:cut]
        held_regions[user] = seq[cut:]

    def region_windows(seq):
        return [seq[i : i + window] for i in range(len(seq) - window + 1)]

    train_raw = []
    for user in sorted(train_regions):
        train_raw.extend(region_windows(train_regions[user]))

    seen_items = sorted({ev.item_id for win in train_raw for ev in win})
    item_vocab = Vocabulary(seen_items)

    attr_externals = sorted(
        {a for item in seen_items for a in attrs_by_item[item]}, key=str
    )
    attr_vocab = Vocabulary(attr_externals)
    table = ItemAttributeTable(
        [
            tuple(attr_vocab.index(a) for a in attrs_by_item[item])
            for item in seen_items
        ],
        num_attrs=len(attr_vocab),
    )

    def encode(win) -> list[int]:
        return [item_vocab.index(ev.item_id) for ev in win]

    train_rows = [encode(w) for w in train_raw]

    valid_rows, test_rows = [], []
    for user in sorted(held_regions):
        survivors = [
            w
            for w in region_windows(held_regions[user])
            if all(ev.item_id in item_vocab for ev in w)
        ]
        half = len(survivors) // 2
        valid_rows.extend(encode(w) for w in survivors[:half])
        test_rows.extend(encode(w) for w in survivors[half:])

    def to_array(rows):
        if not rows:
            return np.zeros((0, window), dtype=np.int32)
        return np.asarray(rows, dtype=np.int32)

    return SplitDataset(
        train=to_array(train_rows),
        valid=to_array(valid_rows),
        test=to_array(test_rows),
        item_vocab=item_vocab,
        attr_vocab=attr_vocab,
        item_attrs=table,
        num_users=len(by_user),
    )


def build_split(
    events: list[InteractionEvent],
    min_interactions: int = 20,
    window: int = WINDOW,
) -> SplitDataset:
    """Filter then window: the standard preprocessing entry point."""
    return split_and_window(filter_min_interactions(events, min_interactions), window)


def subsample_users(
    events: list[InteractionEvent], max_users: int, rng: RngState
) -> list[InteractionEvent]:
    """Keep the events of a seeded random subset of users (desk-scale runs)."""
    users = sorted({e.user_id for e in events})
    if len(users) <= max_users:
        return events
    keep = set(
        users[i] for i in sorted(rng.choice(len(users), max_users, replace=False))
    )
    return [e for e in events if e.user_id in keep]


def batch_iterator(n_samples: int, batch_size: int, shuffle: bool, rng: RngState):
    """Yield index arrays covering every sample once; final batch may be short."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(n_samples) if shuffle else np.arange(n_samples)
    for start in range(0, n_samples, batch_size):
        yield order[start : start + batch_size]


# -- cache ---------------------------------------------------------------------


def content_hash(raw_paths: list, config: dict) -> str:
    """Hash of the raw input bytes plus the canonical preprocessing config."""
    h = hashlib.sha256()
    for p in raw_paths:
        h.update(Path(p).read_bytes())
    h.update(json.dumps(config, sort_keys=True).encode())
    return h.hexdigest()[:16]


def save_cache(dataset: SplitDataset, path):
    """Dump a SplitDataset to a single .npz archive (arrays + JSON metadata)."""
    indptr = np.cumsum([0] + [len(a) for a in dataset.item_attrs.attrs])
    indices = np.concatenate(
        [np.asarray(a, dtype=np.int32) for a in dataset.item_attrs.attrs]
    )
    meta = {
        "num_users": dataset.num_users,
        "num_attrs": dataset.item_attrs.num_attrs,
        "item_externals": [str(e) for e in dataset.item_vocab.from_index],
        "attr_externals": [str(e) for e in dataset.attr_vocab.from_index],
    }
    np.savez_compressed(
        path,
        train=dataset.train,
        valid=dataset.valid,
        test=dataset.test,
        attr_indptr=indptr.astype(np.int64),
        attr_indices=indices,
        meta=np.array(json.dumps(meta, sort_keys=True)),
    )


def load_cache(path) -> SplitDataset:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        indptr = z["attr_indptr"]
        indices = z["attr_indices"]
        attrs = [
            tuple(int(a) for a in indices[indptr[i] : indptr[i + 1]])
            for i in range(len(indptr) - 1)
        ]
        return SplitDataset(
            train=z["train"],
            valid=z["valid"],
            test=z["test"],
            item_vocab=Vocabulary(meta["item_externals"]),
            attr_vocab=Vocabulary(meta["attr_externals"]),
            item_attrs=ItemAttributeTable(attrs, num_attrs=meta["num_attrs"]),
            num_users=meta["num_users"],
        )

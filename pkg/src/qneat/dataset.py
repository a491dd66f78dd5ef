"""Flow-record ingestion, class balancing, stratified folds and batch sampling.

Datasets are immutable column bundles.  Every subset keeps ``index``, the
row positions in the originally loaded data, so duplication and leakage can
be audited.  Feature values are never rescaled.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InsufficientData, InvalidK, ParseError, RangeError

N_FEATURES = 256
NORMAL = "normal"
ATTACK_CATEGORIES = (
    "Analysis",
    "Backdoor",
    "DoS",
    "Exploits",
    "Fuzzers",
    "Generic",
    "Reconnaissance",
    "Shellcode",
    "Worms",
)
_CATEGORY_ALIASES = {c.lower(): c for c in ATTACK_CATEGORIES}
_CATEGORY_ALIASES.update({"backdoors": "Backdoor", NORMAL: NORMAL, "benign": NORMAL})

K_MIN, K_MAX = 3, 10


def canonical_category(name: str) -> str:
    try:
        return _CATEGORY_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown category {name!r}") from None


@dataclass(frozen=True)
class FlowRecord:
    features: tuple
    label: int
    category: str | None = None


@dataclass(frozen=True, eq=False)
class FlowDataset:
    X: np.ndarray
    y: np.ndarray
    category: np.ndarray | None = None
    index: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        y = np.asarray(self.y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per row")
        if np.any((y != 0) & (y != 1)):
            raise ValueError("labels must be binary 0/1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.category is not None:
            object.__setattr__(self, "category", np.asarray(self.category, dtype=object))
        idx = np.arange(X.shape[0]) if self.index is None else np.asarray(self.index, dtype=np.int64)
        object.__setattr__(self, "index", idx)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, positions) -> FlowDataset:
        positions = np.asarray(positions, dtype=np.int64)
        cat = None if self.category is None else self.category[positions]
        return FlowDataset(self.X[positions], self.y[positions], cat, self.index[positions])

    def record(self, i: int) -> FlowRecord:
        cat = None if self.category is None else self.category[i]
        return FlowRecord(tuple(self.X[i].tolist()), int(self.y[i]), cat)

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.y.sum())
        return len(self) - ones, ones

    def fingerprint(self) -> str:
        """SHA-256 over features, labels and categories."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.y, dtype=np.int64).tobytes())
        if self.category is not None:
            h.update("\n".join(map(str, self.category)).encode())
        return h.hexdigest()


def from_records(records) -> FlowDataset:
    records = list(records)
    X = np.array([r.features for r in records])
    y = np.array([r.label for r in records])
    cat = [r.category for r in records]
    return FlowDataset(X, y, None if all(c is None for c in cat) else cat)


def feature_columns(n_features: int = N_FEATURES) -> list[str]:
    return [f"f{i}" for i in range(n_features)]


def load_records(path, n_features: int = N_FEATURES) -> FlowDataset:
    """Read a flow CSV with columns ``f0..f{n-1}`` and ``category``.

    Labels are derived from the category (``normal`` is 0, any attack 1).
    Reported row numbers are file line numbers, header being line 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", row=1) from None
        header = [h.strip() for h in header]
        wanted = feature_columns(n_features)
        missing = [c for c in wanted + ["category"] if c not in header]
        if missing:
            raise ParseError(f"header lacks columns {missing[:5]}", row=1)
        col_pos = [header.index(c) for c in wanted]
        cat_pos = header.index("category")

        rows, cats = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=line)
            values = []
            for name, pos in zip(wanted, col_pos):
                try:
                    v = int(row[pos])
                except ValueError:
                    raise ParseError(f"not an integer: {row[pos]!r}", row=line, column=name) from None
                if not 0 <= v <= 255:
                    raise RangeError(f"byte value {v} outside 0..255", row=line, column=name)
                values.append(v)
            try:
                cats.append(canonical_category(row[cat_pos]))
            except ValueError as exc:
                raise ParseError(str(exc), row=line, column="category") from None
            rows.append(values)

    X = np.array(rows, dtype=np.int64).reshape(len(rows), n_features)
    cat = np.array(cats, dtype=object)
    y = (cat != NORMAL).astype(np.int64)
    return FlowDataset(X, y, cat)


def write_records(data: FlowDataset, path) -> None:
    if data.category is None:
        cats = np.where(data.y == 1, "attack", NORMAL)
    else:
        cats = data.category
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(feature_columns(data.n_features) + ["category"])
        for row, c in zip(data.X.tolist(), cats):
            w.writerow([int(v) for v in row] + [c])


def balance(data: FlowDataset, rng: np.random.Generator) -> FlowDataset:
    """Equal attack draws from all nine categories plus nine times as many normals.

    ``n_a`` is the smallest attack-category count, capped by
    ``normal_count // 9``; the result holds exactly ``9 * n_a`` rows per label.
    """
    if data.category is None:
        raise InsufficientData("balancing needs attack categories")
    groups = {c: np.flatnonzero(data.category == c) for c in ATTACK_CATEGORIES}
    normals = np.flatnonzero(data.category == NORMAL)
    for c, idx in groups.items():
        if idx.size == 0:
            raise InsufficientData(f"category {c!r} has no records")
    n_a = min(min(idx.size for idx in groups.values()), normals.size // 9)
    if n_a == 0:
        raise InsufficientData(f"category 'normal' has {normals.size} records, need at least 9")
    picks = [rng.choice(idx, n_a, replace=False) for idx in groups.values()]
    picks.append(rng.choice(normals, 9 * n_a, replace=False))
    return data.subset(np.sort(np.concatenate(picks)))


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int | None = None

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def split(self, data: FlowDataset, fold: int) -> tuple[FlowDataset, FlowDataset]:
        return data.subset(self.train_indices(fold)), data.subset(self.test_indices(fold))

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignments": self.assignments.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> FoldPlan:
        return cls(int(d["k"]), np.asarray(d["assignments"], dtype=np.int64), d.get("seed"))


def kfold_split(data: FlowDataset, k: int, seed: int | None = 0) -> FoldPlan:
    """Stratified fold plan.

    Each class is shuffled, the classes are concatenated, and positions are
    dealt round-robin into folds.  Fold sizes and per-class counts then differ
    by at most one across folds.
    """
    if not isinstance(k, (int, np.integer)) or not K_MIN <= k <= K_MAX:
        raise InvalidK(f"k must be an integer in [{K_MIN}, {K_MAX}], got {k!r}")
    n0, n1 = data.class_counts()
    if min(n0, n1) < k:
        raise InsufficientData(f"need at least {k} records per class, have {n0}/{n1}")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(data.y == c)) for c in (0, 1)])
    assignments = np.empty(len(data), dtype=np.int64)
    assignments[order] = np.arange(len(data)) % k
    return FoldPlan(int(k), assignments, seed)


def sample_batch(data: FlowDataset, size: int, rng: np.random.Generator) -> FlowDataset:
    """``size / 2`` rows of each label, uniformly without replacement."""
    if size < 2 or size % 2:
        raise InsufficientData(f"batch size must be a positive even number, got {size}")
    half = size // 2
    picks = []
    for c in (0, 1):
        idx = np.flatnonzero(data.y == c)
        if idx.size < half:
            raise InsufficientData(f"class {c} has {idx.size} records, batch needs {half}")
        picks.append(rng.choice(idx, half, replace=False))
    return data.subset(rng.permutation(np.concatenate(picks)))


def gaussian_clusters(n_samples: int, n_features: int, seed: int, separation: float = 6.0) -> FlowDataset:
    """Two isotropic unit-variance clusters whose means are ``separation`` apart.

    The means differ along a random unit direction, so a single linear unit
    separates them up to Gaussian overlap; at the default separation the
    Bayes error is about 0.13%.
    """
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=n_features)
    direction /= np.linalg.norm(direction)
    y = np.arange(n_samples) % 2
    rng.shuffle(y)
    centers = np.where(y[:, None] == 1, 0.5, -0.5) * separation * direction
    X = centers + rng.normal(size=(n_samples, n_features))
    return FlowDataset(X, y)


def synthetic_flows(
    n_per_attack: int, n_normal: int, seed: int, n_features: int = N_FEATURES, noise_fields: bool = True
) -> FlowDataset:
    """Byte-valued stand-in for header-byte flow features.

    Rows are built from four 64-byte packet slots.  Most header bytes are
    fixed per traffic class, source-address bytes separate attackers from
    normal hosts, a few fields per slot are uniformly random, and each
    attack category perturbs its own handful of bytes.

    With ``noise_fields=False`` the template is all zeros (zero-padded
    short flows), the random fields are dropped, and the two classes are
    linearly separable on the source-address bytes.
    """
    rng = np.random.default_rng(seed)
    slot = 64
    template = rng.integers(0, 256, size=n_features)
    if not noise_fields:
        template[:] = 0
    noisy = np.zeros(n_features, dtype=bool)
    src_ip = np.zeros(n_features, dtype=bool)
    for start in range(0, n_features, slot):
        noisy[start + 18 : start + 22] = True  # id and checksum fields
        noisy[start + 34 : start + 38] = True  # ports
        src_ip[start + 26 : start + 30] = True
    attack_ip = np.array([175, 45, 176, 0])
    normal_ip = np.array([59, 166, 0, 0])

    def block(count, category):
        X = np.repeat(template[None, :], count, axis=0)
        X += rng.integers(-3, 4, size=X.shape)
        ip = attack_ip if category != NORMAL else normal_ip
        pos = np.flatnonzero(src_ip)
        X[:, pos] = ip[np.arange(pos.size) % 4] + rng.integers(0, 4, size=(count, pos.size))
        if category != NORMAL:
            cat_rng = np.random.default_rng([seed, ATTACK_CATEGORIES.index(category)])
            touched = cat_rng.choice(np.flatnonzero(~noisy & ~src_ip), 6, replace=False)
            X[:, touched] = cat_rng.integers(0, 256, size=touched.size)
        if noise_fields:
            X[:, noisy] = rng.integers(0, 256, size=(count, int(noisy.sum())))
        return np.clip(X, 0, 255)

    parts, cats = [], []
    for c in ATTACK_CATEGORIES:
        parts.append(block(n_per_attack, c))
        cats += [c] * n_per_attack
    parts.append(block(n_normal, NORMAL))
    cats += [NORMAL] * n_normal
    X = np.concatenate(parts)
    cat = np.array(cats, dtype=object)
    perm = rng.permutation(len(cat))
    X, cat = X[perm], cat[perm]
    return FlowDataset(X, (cat != NORMAL).astype(np.int64), cat)

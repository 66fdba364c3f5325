"""Sparse feature encoding with strictly-prior time-window practice counters.

Each interaction becomes one sparse row. Depending on the model family the
row holds one-hot user/item/skill indicators plus practice-history features:
raw attempt/win/fail counts (afm, pfa, das3h_plaincounts) or log(1+count)
per nested time window (dash_*, das3h, das3h_1p). Counters always reflect
strictly prior interactions of the same student: a row is emitted before the
counters are updated with its outcome.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigError, EncodingError

DEFAULT_WINDOWS = (1 / 24, 1.0, 7.0, 30.0, math.inf)

FAMILIES = (
    "irt", "mirtb", "afm", "pfa",
    "dash_items", "dash_kc",
    "das3h", "das3h_1p", "das3h_plaincounts",
)

# Families whose history features are per-window log counts.
_WINDOWED = {"dash_items", "dash_kc", "das3h", "das3h_1p"}


@dataclass(frozen=True)
class WindowSet:
    """Nested lookback widths in days; strictly increasing, last one infinite."""

    widths: tuple[float, ...] = DEFAULT_WINDOWS

    def __post_init__(self):
        w = self.widths
        if not w or any(b <= a for a, b in zip(w, w[1:])):
            raise ConfigError(f"window widths must be strictly increasing: {w}")
        if not math.isinf(w[-1]):
            raise ConfigError("last window width must be +inf")

    def __len__(self):
        return len(self.widths)


@dataclass(frozen=True)
class ModelSpec:
    family: str
    dim: int = 0
    windows: WindowSet = field(default_factory=WindowSet)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; known: {FAMILIES}")
        if self.dim < 0:
            raise ConfigError("dim must be >= 0")
        if self.family == "mirtb" and self.dim == 0:
            raise ConfigError("mirtb requires dim > 0 (use irt for dim 0)")
        if self.family == "irt" and self.dim != 0:
            raise ConfigError("irt requires dim = 0 (use mirtb for dim > 0)")

    @property
    def label(self):
        return f"{self.family}(d={self.dim})"


# Block plans: (name, size expression) in fixed order users, items, skills,
# wins, attempts/fails. S, J, K are dataset dims, W the window count.
_BLOCK_PLANS = {
    "irt": (("users", "S"), ("items", "J")),
    "mirtb": (("users", "S"), ("items", "J")),
    "afm": (("skills", "K"), ("attempts", "K")),
    "pfa": (("skills", "K"), ("wins", "K"), ("fails", "K")),
    "dash_items": (("users", "S"), ("items", "J"), ("wins", "W"), ("attempts", "W")),
    "dash_kc": (("users", "S"), ("items", "J"), ("wins", "W"), ("attempts", "W")),
    "das3h": (("users", "S"), ("items", "J"), ("skills", "K"),
              ("wins", "K*W"), ("attempts", "K*W")),
    "das3h_1p": (("users", "S"), ("items", "J"), ("skills", "K"),
                 ("wins", "W"), ("attempts", "W")),
    "das3h_plaincounts": (("users", "S"), ("items", "J"), ("skills", "K"),
                          ("wins", "K"), ("fails", "K")),
}


@dataclass
class LayoutDescriptor:
    """Named contiguous feature blocks tiling [0, n_features)."""

    blocks: dict[str, tuple[int, int]]  # name -> (offset, size)
    n_features: int
    students: list[str] = field(default_factory=list)
    items: list[str] = field(default_factory=list)
    skills: list[str] = field(default_factory=list)

    def offset(self, name):
        return self.blocks[name][0]

    def size(self, name):
        return self.blocks[name][1]

    def block_of(self, index):
        for name, (off, size) in self.blocks.items():
            if off <= index < off + size:
                return name
        raise IndexError(index)

    def group_of_feature(self):
        """Group id per feature column, for hierarchical regularization."""
        g = np.empty(self.n_features, dtype=np.int64)
        for gid, (name, (off, size)) in enumerate(self.blocks.items()):
            g[off:off + size] = gid
        return g

    def to_dict(self):
        return {
            "blocks": {k: list(v) for k, v in self.blocks.items()},
            "n_features": self.n_features,
            "students": self.students,
            "items": self.items,
            "skills": self.skills,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            blocks={k: tuple(v) for k, v in d["blocks"].items()},
            n_features=d["n_features"],
            students=list(d["students"]),
            items=list(d["items"]),
            skills=list(d["skills"]),
        )


def feature_layout(spec, dims):
    """Block layout for dataset dims (S, J, K); no id maps attached."""
    S, J, K = dims
    env = {"S": S, "J": J, "K": K, "W": len(spec.windows)}
    blocks = {}
    off = 0
    for name, expr in _BLOCK_PLANS[spec.family]:
        size = eval(expr, {}, env)
        if size <= 0:
            raise ConfigError(f"zero-sized block {name} for dims {dims}")
        blocks[name] = (off, size)
        off += size
    return LayoutDescriptor(blocks=blocks, n_features=off)


def build_layout(spec, dataset):
    """Layout with sorted id maps taken from a preprocessed dataset."""
    students = dataset.students
    items = dataset.qmatrix.items
    skills = dataset.qmatrix.skills
    lay = feature_layout(spec, (len(students), len(items), max(len(skills), 1)))
    lay.students, lay.items, lay.skills = students, items, skills
    return lay


def window_counts(history, query_time, windows):
    """Per-window attempt and win counts over strictly prior history.

    `history` is an ordered list of (time, correct) with all times <= the
    query time (equal times are earlier in input order, hence prior). An
    attempt at t' falls in window w iff query_time - t' < w (strict).
    """
    times = [t for t, _ in history]
    wins_prefix = [0]
    for _, c in history:
        wins_prefix.append(wins_prefix[-1] + int(c))
    attempts, wins = _counts_from(times, wins_prefix, query_time,
                                  windows.widths)
    return tuple(attempts), tuple(wins)


def _counts_from(times, wins_prefix, query_time, widths):
    """Count attempts/wins with elapsed = query_time - t < width (strict).

    The elapsed values are computed per element so the boundary behaves
    exactly like the definition (thresholding `query_time - width` instead
    is not float-equivalent). Times are non-decreasing, so the reversed
    elapsed sequence is non-decreasing and binary-searchable.
    """
    n = len(times)
    elapsed_rev = [query_time - times[n - 1 - i] for i in range(n)]
    attempts, wins = [], []
    for w in widths:
        cnt = n if math.isinf(w) else bisect_left(elapsed_rev, w)
        attempts.append(cnt)
        wins.append(wins_prefix[n] - wins_prefix[n - cnt])
    return attempts, wins


class _Counter:
    """Streaming per-(student, key) history: sorted times + win prefix sums."""

    __slots__ = ("times", "wins_prefix")

    def __init__(self):
        self.times = []
        self.wins_prefix = [0]

    def counts(self, query_time, windows):
        return _counts_from(self.times, self.wins_prefix, query_time,
                            windows.widths)

    def totals(self):
        n = len(self.times)
        return n, self.wins_prefix[n]

    def push(self, t, correct):
        self.times.append(t)
        self.wins_prefix.append(self.wins_prefix[-1] + int(correct))


@dataclass
class DesignMatrix:
    """Encoded rows (CSR), labels, per-row metadata, layout and spec."""

    X: sparse.csr_matrix
    y: np.ndarray
    students: list[str]
    items: list[str]
    timestamps: np.ndarray
    layout: LayoutDescriptor
    spec: ModelSpec

    @property
    def n_rows(self):
        return self.X.shape[0]

    def row(self, i):
        start, end = self.X.indptr[i], self.X.indptr[i + 1]
        return SparseVector(
            indices=self.X.indices[start:end].copy(),
            values=self.X.data[start:end].copy(),
            label=int(self.y[i]),
            student=self.students[i],
            item=self.items[i],
            timestamp=float(self.timestamps[i]),
        )


@dataclass
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    label: int | None = None
    student: str | None = None
    item: str | None = None
    timestamp: float | None = None


def encode_row(interaction, skills, layout, spec, counters, user_idx, item_idx,
               skill_idx):
    """Build one sparse row from the current counter state (not yet updated).

    `user_idx` / `item_idx` may be None (virtual queries for students or
    items outside the layout); the corresponding indicator is then omitted.
    """
    family = spec.family
    windows = spec.windows
    W = len(windows)
    idx, val = [], []

    def put(block, local, v=1.0):
        if local is not None and v != 0.0:
            idx.append(layout.offset(block) + local)
            val.append(v)

    if family in ("irt", "mirtb"):
        put("users", user_idx)
        put("items", item_idx)
    elif family == "afm":
        for k in skills:
            put("skills", skill_idx[k])
            a, _ = counters[("skill", interaction.student, k)].totals() \
                if ("skill", interaction.student, k) in counters else (0, 0)
            put("attempts", skill_idx[k], float(a))
    elif family == "pfa":
        for k in skills:
            put("skills", skill_idx[k])
            key = ("skill", interaction.student, k)
            a, c = counters[key].totals() if key in counters else (0, 0)
            put("wins", skill_idx[k], float(c))
            put("fails", skill_idx[k], float(a - c))
    elif family == "dash_items":
        put("users", user_idx)
        put("items", item_idx)
        key = ("item", interaction.student, interaction.item)
        if key in counters:
            a, c = counters[key].counts(interaction.timestamp, windows)
        else:
            a, c = [0] * W, [0] * W
        for w in range(W):
            put("wins", w, math.log1p(c[w]))
            put("attempts", w, math.log1p(a[w]))
    elif family in ("dash_kc", "das3h_1p"):
        put("users", user_idx)
        put("items", item_idx)
        if family == "das3h_1p":
            for k in skills:
                put("skills", skill_idx[k])
        win_sum = [0.0] * W
        att_sum = [0.0] * W
        for k in skills:
            key = ("skill", interaction.student, k)
            if key in counters:
                a, c = counters[key].counts(interaction.timestamp, windows)
            else:
                a, c = [0] * W, [0] * W
            for w in range(W):
                win_sum[w] += math.log1p(c[w])
                att_sum[w] += math.log1p(a[w])
        for w in range(W):
            put("wins", w, win_sum[w])
            put("attempts", w, att_sum[w])
    elif family == "das3h":
        put("users", user_idx)
        put("items", item_idx)
        for k in skills:
            put("skills", skill_idx[k])
            key = ("skill", interaction.student, k)
            if key in counters:
                a, c = counters[key].counts(interaction.timestamp, windows)
            else:
                a, c = [0] * W, [0] * W
            for w in range(W):
                put("wins", skill_idx[k] * W + w, math.log1p(c[w]))
                put("attempts", skill_idx[k] * W + w, math.log1p(a[w]))
    elif family == "das3h_plaincounts":
        put("users", user_idx)
        put("items", item_idx)
        for k in skills:
            put("skills", skill_idx[k])
            key = ("skill", interaction.student, k)
            a, c = counters[key].totals() if key in counters else (0, 0)
            put("wins", skill_idx[k], float(c))
            put("fails", skill_idx[k], float(a - c))
    else:  # pragma: no cover
        raise ConfigError(f"unknown family {family}")

    order = np.argsort(idx, kind="stable")
    return np.asarray(idx, dtype=np.int64)[order], np.asarray(val)[order]


def encode_dataset(dataset, spec, layout=None):
    """Encode every interaction into a DesignMatrix, per-student chronological.

    Counters are keyed by skill (or by item for dash_items) and are updated
    only after a row is emitted, so each row sees strictly prior history.
    """
    if layout is None:
        layout = build_layout(spec, dataset)
    user_pos = {s: i for i, s in enumerate(layout.students)}
    item_pos = {j: i for i, j in enumerate(layout.items)}
    skill_pos = {k: i for i, k in enumerate(layout.skills)}
    qm = dataset.qmatrix

    data, indices, indptr = [], [], [0]
    labels, row_students, row_items, row_ts = [], [], [], []
    for student in dataset.students:
        counters: dict[tuple, _Counter] = {}
        for r in dataset.interactions[student]:
            if r.item not in qm or not qm.skills_of(r.item):
                raise EncodingError(f"item {r.item!r} missing from q-matrix")
            skills = sorted(qm.skills_of(r.item))
            if r.item not in item_pos:
                raise EncodingError(f"item {r.item!r} not in layout")
            idx, val = encode_row(
                r, skills, layout, spec, counters,
                user_pos.get(student), item_pos[r.item], skill_pos,
            )
            indices.extend(idx.tolist())
            data.extend(val.tolist())
            indptr.append(len(indices))
            labels.append(r.correct)
            row_students.append(student)
            row_items.append(r.item)
            row_ts.append(r.timestamp)
            # update counters after emitting the row
            if spec.family == "dash_items":
                keys = [("item", student, r.item)]
            else:
                keys = [("skill", student, k) for k in skills]
            for key in keys:
                counters.setdefault(key, _Counter()).push(r.timestamp, r.correct)

    X = sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), layout.n_features),
    )
    return DesignMatrix(
        X=X, y=np.asarray(labels, dtype=np.int8),
        students=row_students, items=row_items,
        timestamps=np.asarray(row_ts, dtype=float),
        layout=layout, spec=spec,
    )


def spec_to_dict(spec):
    return {"family": spec.family, "dim": spec.dim,
            "windows": ["inf" if math.isinf(w) else w for w in spec.windows.widths]}


def spec_from_dict(d):
    widths = tuple(math.inf if w == "inf" else float(w) for w in d["windows"])
    return ModelSpec(d["family"], int(d["dim"]), WindowSet(widths))


def save_design(dm, path):
    """Write `label idx:value ...` rows plus a JSON sidecar at path + '.json'."""
    with open(path, "w") as fh:
        for i in range(dm.n_rows):
            start, end = dm.X.indptr[i], dm.X.indptr[i + 1]
            parts = [str(int(dm.y[i]))]
            parts += [f"{j}:{v:.17g}" for j, v in
                      zip(dm.X.indices[start:end], dm.X.data[start:end])]
            fh.write(" ".join(parts) + "\n")
    sidecar = {
        "layout": dm.layout.to_dict(),
        "spec": spec_to_dict(dm.spec),
        "students": dm.students,
        "items": dm.items,
        "timestamps": dm.timestamps.tolist(),
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh)


def load_design(path):
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    layout = LayoutDescriptor.from_dict(sidecar["layout"])
    spec = spec_from_dict(sidecar["spec"])
    data, indices, indptr, labels = [], [], [0], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            labels.append(int(parts[0]))
            for p in parts[1:]:
                j, v = p.split(":")
                indices.append(int(j))
                data.append(float(v))
            indptr.append(len(indices))
    X = sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), layout.n_features),
    )
    return DesignMatrix(
        X=X, y=np.asarray(labels, dtype=np.int8),
        students=sidecar["students"], items=sidecar["items"],
        timestamps=np.asarray(sidecar["timestamps"], dtype=float),
        layout=layout, spec=spec,
    )

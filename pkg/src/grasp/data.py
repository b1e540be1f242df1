"""CSV ingestion, leak-safe preprocessing, group partitions, and fold splits.

Preprocessing follows a strict fit/apply split: every statistic (imputation
values, one-hot level lists, z-score parameters) is computed on the fitting
fold only and replayed verbatim on any other fold, so validation rows can
never influence the transform.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

#: Cell contents treated as missing (case-insensitive for "NA").
MISSING_SENTINELS = ("", "na")


def _is_missing(raw: str) -> bool:
    return raw.strip().lower() in MISSING_SENTINELS


def _try_float(raw: str):
    try:
        return float(raw)
    except ValueError:
        return None


@dataclass
class Dataset:
    """Parsed tabular data: typed columns plus a binary label column.

    Continuous cells hold floats, categorical cells hold strings; missing
    cells of either kind hold None. Labels are 0/1 ints or None.
    """

    columns: list  # of (name, kind) in file order, label column excluded
    values: dict  # column name -> list of cell values (None = missing)
    labels: list  # of 0/1/None, one per row
    label_column: str

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        n = len(self.labels)
        for name, _ in self.columns:
            if len(self.values[name]) != n:
                raise DataError(f"column {name!r} has {len(self.values[name])} cells, expected {n}")
        for lab in self.labels:
            if lab is not None and lab not in (0, 1):
                raise DataError(f"invalid label {lab!r}: labels must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    def kind_of(self, name: str) -> str:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise DataError(f"unknown column {name!r}")

    def subset(self, indices) -> "Dataset":
        """Row subset (used to carve folds out of one loaded file)."""
        idx = list(np.asarray(indices, dtype=int))
        return Dataset(
            columns=list(self.columns),
            values={name: [vals[i] for i in idx] for name, vals in self.values.items()},
            labels=[self.labels[i] for i in idx],
            label_column=self.label_column,
        )

    @classmethod
    def from_numeric(cls, X, y, column_names, label_column="label") -> "Dataset":
        """Wrap an all-continuous matrix and 0/1 labels as a Dataset."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DataError("X and y shapes disagree")
        if len(column_names) != X.shape[1]:
            raise DataError("column_names length must match X columns")
        return cls(
            columns=[(name, CONTINUOUS) for name in column_names],
            values={name: [float(v) for v in X[:, j]] for j, name in enumerate(column_names)},
            labels=[int(v) for v in y],
            label_column=label_column,
        )


def load_csv(path, label_column: str, kind_overrides=None) -> Dataset:
    """Load a headered CSV, inferring column kinds.

    A column whose every non-missing cell parses as a float is continuous,
    anything else categorical; `kind_overrides` (name -> kind) wins over
    inference. Empty cells and "NA" (any case) are missing. Label cells must
    be 0, 1, or missing.
    """
    kind_overrides = dict(kind_overrides or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: ragged row ({len(row)} cells, expected {len(header)})")
            rows.append(row)

    if label_column not in header:
        raise DataError(f"missing label column {label_column!r}")
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")

    label_idx = header.index(label_column)
    labels = []
    for i, row in enumerate(rows):
        raw = row[label_idx]
        if _is_missing(raw):
            labels.append(None)
            continue
        val = _try_float(raw)
        if val is None or val not in (0.0, 1.0):
            raise DataError(f"invalid label {raw!r} in row {i + 1}: must be 0, 1, or missing")
        labels.append(int(val))

    columns = []
    values = {}
    for j, name in enumerate(header):
        if j == label_idx:
            continue
        raws = [row[j] for row in rows]
        kind = kind_overrides.get(name)
        if kind is None:
            present = [r for r in raws if not _is_missing(r)]
            numeric = all(_try_float(r) is not None for r in present)
            kind = CONTINUOUS if (numeric and present) else CATEGORICAL
        elif kind not in (CONTINUOUS, CATEGORICAL):
            raise DataError(f"invalid kind override {kind!r} for column {name!r}")
        if kind == CONTINUOUS:
            parsed = []
            for i, r in enumerate(raws):
                if _is_missing(r):
                    parsed.append(None)
                    continue
                v = _try_float(r)
                if v is None:
                    raise DataError(f"column {name!r} row {i + 1}: {r!r} is not numeric")
                parsed.append(v)
        else:
            parsed = [None if _is_missing(r) else r.strip() for r in raws]
        columns.append((name, kind))
        values[name] = parsed

    return Dataset(columns=columns, values=values, labels=labels, label_column=label_column)


@dataclass
class Preprocessor:
    """Frozen per-column statistics from one fitting fold.

    source_columns: fitted schema (name, kind), label excluded.
    output_columns: design-matrix column names in output order.
    source_of: output column -> source column.
    medians/modes: imputation values per source column.
    levels: observed one-hot levels per categorical column (sorted).
    z_mean/z_sd: standardization parameters per continuous output column.
    dropped: (column, reason) pairs removed at fit time.
    """

    source_columns: list
    label_column: str
    output_columns: list = field(default_factory=list)
    source_of: dict = field(default_factory=dict)
    medians: dict = field(default_factory=dict)
    modes: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)
    z_mean: dict = field(default_factory=dict)
    z_sd: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "source_columns": [list(c) for c in self.source_columns],
            "label_column": self.label_column,
            "output_columns": list(self.output_columns),
            "source_of": dict(self.source_of),
            "medians": dict(self.medians),
            "modes": dict(self.modes),
            "levels": {k: list(v) for k, v in self.levels.items()},
            "z_mean": dict(self.z_mean),
            "z_sd": dict(self.z_sd),
            "dropped": [list(d) for d in self.dropped],
        }


def fit_preprocessor(train: Dataset) -> Preprocessor:
    """Compute imputation, one-hot, and z-score statistics on one fold.

    Categorical columns expand to one indicator per observed level (full
    one-hot). Continuous columns are imputed with the median and z-scored
    with the post-imputation mean/sd; a zero-variance continuous column is
    dropped with a recorded warning rather than raising.
    """
    if train.n_rows == 0:
        raise DataError("cannot fit preprocessor on an empty dataset")
    prep = Preprocessor(source_columns=list(train.columns), label_column=train.label_column)
    for name, kind in train.columns:
        cells = train.values[name]
        present = [c for c in cells if c is not None]
        if kind == CONTINUOUS:
            if not present:
                raise DataError(f"continuous column {name!r} has no observed values")
            median = float(np.median(present))
            imputed = np.array([median if c is None else c for c in cells], dtype=float)
            mean = float(imputed.mean())
            sd = float(imputed.std())
            if sd == 0.0:
                msg = f"dropping zero-variance continuous column {name!r}"
                warnings.warn(msg)
                prep.dropped.append((name, "zero variance"))
                continue
            prep.medians[name] = median
            prep.z_mean[name] = mean
            prep.z_sd[name] = sd
            prep.output_columns.append(name)
            prep.source_of[name] = name
        else:
            if not present:
                warnings.warn(f"dropping all-missing categorical column {name!r}")
                prep.dropped.append((name, "all missing"))
                continue
            counts = {}
            for c in present:
                counts[c] = counts.get(c, 0) + 1
            # mode ties break to the lexicographically smallest level
            mode = min((lvl for lvl, n in counts.items() if n == max(counts.values())))
            levels = sorted(counts)
            prep.modes[name] = mode
            prep.levels[name] = levels
            for lvl in levels:
                out = f"{name}_{lvl}"
                prep.output_columns.append(out)
                prep.source_of[out] = name
    return prep


def apply_preprocessor(prep: Preprocessor, data: Dataset) -> "DesignMatrix":
    """Replay fitted statistics on a dataset with the same source schema.

    Missing cells are imputed with the stored median/mode, categorical cells
    are encoded against the stored level lists (unseen level -> all-zero
    indicators), and continuous outputs are z-scored with the stored
    mean/sd. Rows whose label is missing are dropped with a warning.
    """
    fitted = {name: kind for name, kind in prep.source_columns}
    given = {name: kind for name, kind in data.columns}
    unknown = sorted(set(given) - set(fitted))
    if unknown:
        raise DataError(f"unknown column(s) {unknown} not present when preprocessor was fitted")
    absent = sorted(set(fitted) - set(given))
    if absent:
        raise DataError(f"column(s) {absent} missing from data")
    for name, kind in prep.source_columns:
        if given[name] != kind:
            raise DataError(f"column {name!r} is {given[name]}, was fitted as {kind}")
    if not prep.output_columns:
        raise DataError("no columns survive preprocessing")

    keep = [i for i, lab in enumerate(data.labels) if lab is not None]
    if len(keep) < data.n_rows:
        warnings.warn(f"dropping {data.n_rows - len(keep)} row(s) with missing labels")
    if not keep:
        raise DataError("no labeled rows")
    labels = np.array([data.labels[i] for i in keep], dtype=int)

    n = len(keep)
    out = np.empty((n, len(prep.output_columns)), dtype=float)
    col = 0
    for name, kind in prep.source_columns:
        if any(d[0] == name for d in prep.dropped):
            continue
        cells = [data.values[name][i] for i in keep]
        if kind == CONTINUOUS:
            median = prep.medians[name]
            vals = np.array([median if c is None else c for c in cells], dtype=float)
            out[:, col] = (vals - prep.z_mean[name]) / prep.z_sd[name]
            col += 1
        else:
            mode = prep.modes[name]
            filled = [mode if c is None else c for c in cells]
            for lvl in prep.levels[name]:
                out[:, col] = [1.0 if c == lvl else 0.0 for c in filled]
                col += 1
    return DesignMatrix(values=out, column_names=list(prep.output_columns), labels=labels)


@dataclass
class DesignMatrix:
    """Fully numeric n x p matrix with named columns and 0/1 labels."""

    values: np.ndarray
    column_names: list
    labels: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.values.ndim != 2:
            raise DataError("design matrix must be 2-D")
        n, p = self.values.shape
        if n < 1 or p < 1:
            raise DataError("design matrix must have at least one row and one column")
        if len(self.column_names) != p:
            raise DataError("column_names length must match matrix width")
        if len(set(self.column_names)) != p:
            raise DataError("duplicate design-matrix column names")
        if self.labels.shape != (n,):
            raise DataError("labels length must match row count")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if not np.isfinite(self.values).all():
            raise DataError("design matrix contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass
class GroupPartition:
    """Ordered disjoint cover of column indices 0..p-1 by named groups."""

    groups: list  # of (group_name, list of member column indices)
    n_features: int

    def __post_init__(self):
        names = [g for g, _ in self.groups]
        if len(set(names)) != len(names):
            raise DataError("duplicate group names")
        seen = set()
        for gname, members in self.groups:
            if len(members) == 0:
                raise DataError(f"group {gname!r} is empty")
            for m in members:
                if not 0 <= m < self.n_features:
                    raise DataError(f"group {gname!r} member {m} out of range")
                if m in seen:
                    raise DataError(f"column {m} assigned to more than one group")
                seen.add(m)
        if len(seen) != self.n_features:
            missing = sorted(set(range(self.n_features)) - seen)
            raise DataError(f"uncovered column(s) {missing}")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def names(self) -> list:
        return [g for g, _ in self.groups]

    def segments(self):
        """Flattened member view: (perm, starts, sizes) for segment math."""
        perm = np.concatenate([np.asarray(m, dtype=int) for _, m in self.groups])
        sizes = np.array([len(m) for _, m in self.groups], dtype=int)
        starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        return perm, starts, sizes


def singleton_partition(column_names) -> GroupPartition:
    """One group per column, named after it (the LASSO special case)."""
    groups = [(name, [j]) for j, name in enumerate(column_names)]
    return GroupPartition(groups=groups, n_features=len(column_names))


def default_groups(prep: Preprocessor) -> GroupPartition:
    """Group design columns by source column.

    One-hot indicator families form one group per categorical source;
    continuous columns are singleton groups.
    """
    order = []
    members = {}
    for j, out in enumerate(prep.output_columns):
        src = prep.source_of[out]
        if src not in members:
            members[src] = []
            order.append(src)
        members[src].append(j)
    groups = [(src, members[src]) for src in order]
    return GroupPartition(groups=groups, n_features=len(prep.output_columns))


def parse_groups(path, column_names) -> GroupPartition:
    """Read a `feature,group` CSV assigning every design column to a group.

    Groups are ordered by first appearance in the file; each design column
    must be named exactly once.
    """
    column_names = list(column_names)
    index_of = {name: j for j, name in enumerate(column_names)}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty group map") from None
        if [h.strip().lower() for h in header] != ["feature", "group"]:
            raise DataError(f"{path}: expected header 'feature,group'")
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected two cells")
            pairs.append((row[0].strip(), row[1].strip()))

    assigned = {}
    order = []
    members = {}
    for feat, grp in pairs:
        if feat not in index_of:
            raise DataError(f"unknown feature {feat!r} in group map")
        if feat in assigned:
            raise DataError(f"feature {feat!r} assigned twice in group map")
        assigned[feat] = grp
        if grp not in members:
            members[grp] = []
            order.append(grp)
        members[grp].append(index_of[feat])
    uncovered = [name for name in column_names if name not in assigned]
    if uncovered:
        raise DataError(f"uncovered column {uncovered[0]!r} in group map")
    groups = [(grp, members[grp]) for grp in order]
    return GroupPartition(groups=groups, n_features=len(column_names))


def kfold_split(n: int, k: int, seed: int):
    """Shuffle 0..n-1 with the seed and cut k folds of near-equal size.

    Returns [(train_indices, validation_indices)] with sorted index arrays;
    identical (n, k, seed) yields identical folds.
    """
    if k < 2:
        raise DataError("k must be at least 2")
    if k > n:
        raise DataError(f"k={k} exceeds n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, k)
    splits = []
    for i in range(k):
        val = np.sort(folds[i])
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        splits.append((train, val))
    return splits

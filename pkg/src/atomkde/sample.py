"""Sample ingestion and the unique/repeated partition.

The central trick of the whole package lives here: in a sample drawn from a
mixture of a continuous distribution and a discrete one, a value observed
exactly once almost surely came from the continuous component, while a value
observed two or more times came from an atom.  Partitioning the sample on
observation multiplicity therefore separates continuous evidence (the unique
observations) from discrete evidence (the repeated ones) without knowing the
atom locations or the mixing proportion.

All indices in this module are 0-based positions into the original sample
order; order matters downstream (the data-splitting estimators split on the
original index).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InputDataError

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Core containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """An ordered d-dimensional sample.

    Parameters
    ----------
    values : ndarray of shape (n, d)
        One observation per row.  All entries must be finite.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise InputDataError(f"observations must form a 2-D array, got ndim={arr.ndim}")
        if arr.size and not np.isfinite(arr).all():
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise InputDataError(
                f"non-finite coordinate at observation {bad[0]}, column {bad[1]}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def column(self) -> np.ndarray:
        """The sample as a flat vector; only valid for d = 1."""
        if self.dim != 1:
            raise ContractError(f"expected univariate data, got d={self.dim}")
        return self.values[:, 0]


@dataclass(frozen=True)
class TieRule:
    """How two real observations are declared equal.

    ``exact`` compares raw float64 bit patterns: continuous draws are almost
    surely pairwise distinct while atoms repeat exactly, so no tolerance is
    needed.  ``quantized`` snaps each coordinate to a delta-grid before
    comparing, for data that went through measurement rounding.
    """

    mode: str = "exact"
    delta: float | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "quantized"):
            raise ContractError(f"unknown tie rule mode {self.mode!r}")
        if self.mode == "quantized":
            if self.delta is None or not np.isfinite(self.delta) or self.delta <= 0:
                raise ContractError("quantized tie rule requires delta > 0")

    @staticmethod
    def exact() -> "TieRule":
        return TieRule("exact")

    @staticmethod
    def quantized(delta: float) -> "TieRule":
        return TieRule("quantized", float(delta))

    def key_rows(self, values: np.ndarray) -> np.ndarray:
        """Rows used for equality grouping (quantized mode snaps to the grid)."""
        if self.mode == "exact":
            return values
        return np.round(values / self.delta) * self.delta


@dataclass(frozen=True)
class RepeatGroup:
    """Indices of one repeated value; ``value`` is the observation at the
    smallest index of the group (the canonical representative)."""

    value: np.ndarray
    indices: np.ndarray  # sorted, length >= 2


@dataclass(frozen=True)
class Partition:
    """Split of a sample into unique and repeated observations."""

    unique_indices: np.ndarray       # sorted 0-based positions
    groups: tuple[RepeatGroup, ...]  # sorted by canonical value
    tie_rule: TieRule
    n: int
    dim: int

    @property
    def n_unique(self) -> int:
        return int(self.unique_indices.size)

    @property
    def n_repeated(self) -> int:
        return self.n - self.n_unique

    @property
    def pi_hat(self) -> float:
        """Estimated mixing proportion: fraction of repeated observations."""
        return self.n_repeated / self.n if self.n else 0.0


@dataclass(frozen=True)
class AtomTable:
    """Estimated discrete component: one entry per repeated value.

    ``mass`` is the probability within the discrete component (sums to 1);
    ``combined_mass`` is count / n, the mass each atom carries in the full
    mixture (approximately pi * mass).
    """

    values: np.ndarray   # (k, d), sorted lexicographically
    counts: np.ndarray   # (k,), each >= 2
    pi_hat: float
    n: int
    n_unique: int

    @property
    def masses(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(0)
        return self.counts / total

    @property
    def combined_masses(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        return self.counts / self.n

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "pi_hat": self.pi_hat,
            "atoms": [
                {"value": [float(v) for v in row], "count": int(c), "mass": float(m)}
                for row, c, m in zip(self.values, self.counts, self.masses)
            ],
            "n_unique": self.n_unique,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def csv_rows(self) -> list[list]:
        """Rows for the "x1,...,xd,count,mass,combined_mass" table."""
        dim = self.values.shape[1] if self.values.size else 1
        header = [f"x{j + 1}" for j in range(dim)] + ["count", "mass", "combined_mass"]
        rows: list[list] = [header]
        for row, c, m, cm in zip(self.values, self.counts, self.masses, self.combined_masses):
            rows.append([repr(float(v)) for v in row] + [int(c), repr(float(m)), repr(float(cm))])
        return rows


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def partition(data: Dataset, rule: TieRule = TieRule.exact()) -> Partition:
    """Group observations by multiplicity under ``rule``.

    Returns the sorted indices of observations whose value appears exactly
    once, plus one group per value appearing at least twice.  Deterministic in
    the data order; an empty dataset yields an empty partition.
    """
    n = data.n
    keys = rule.key_rows(data.values)
    seen: dict[bytes, list[int]] = {}
    for i in range(n):
        seen.setdefault(keys[i].tobytes(), []).append(i)

    unique = []
    groups = []
    for idx in seen.values():
        if len(idx) == 1:
            unique.append(idx[0])
        else:
            groups.append(RepeatGroup(value=data.values[idx[0]].copy(),
                                      indices=np.array(idx, dtype=np.intp)))
    groups.sort(key=lambda g: tuple(g.value))
    return Partition(
        unique_indices=np.array(sorted(unique), dtype=np.intp),
        groups=tuple(groups),
        tie_rule=rule,
        n=n,
        dim=data.dim,
    )


def _check_pair(p: Partition, data: Dataset) -> None:
    if p.n != data.n or p.dim != data.dim:
        raise ContractError(
            f"partition built for n={p.n}, d={p.dim} does not match dataset "
            f"n={data.n}, d={data.dim}"
        )
    for g in p.groups:
        first = int(g.indices[0])
        if first >= data.n or not np.array_equal(data.values[first], g.value):
            raise ContractError("partition groups do not match the supplied dataset")


def atom_table(p: Partition, data: Dataset) -> AtomTable:
    """Build the estimated discrete component from the repeated groups."""
    _check_pair(p, data)
    if p.groups:
        values = np.stack([g.value for g in p.groups])
        counts = np.array([g.indices.size for g in p.groups], dtype=np.intp)
    else:
        values = np.zeros((0, p.dim))
        counts = np.zeros(0, dtype=np.intp)
    return AtomTable(values=values, counts=counts, pi_hat=p.pi_hat,
                     n=p.n, n_unique=p.n_unique)


def split_halves(p: Partition, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Split the unique indices at the sample midpoint.

    The front half holds unique observations among the first floor(n/2)
    positions, the back half the rest.  This is the split the data-splitting
    estimators use for their density/influence role assignment.
    """
    _check_pair(p, data)
    cut = p.n // 2
    u = p.unique_indices
    return u[u < cut], u[u >= cut]


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def read_csv_dataset(path) -> Dataset:
    """Read a dataset from CSV: one observation per row, d numeric columns.

    A single header line is auto-detected (first row with any non-numeric
    cell).  Parse failures report the 1-based physical row and column.
    """
    rows: list[list[float]] = []
    width = None
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, raw in enumerate(reader, start=1):
            cells = [c.strip() for c in raw]
            if not any(cells):
                continue
            parsed = []
            bad_col = None
            for j, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    bad_col = j
                    break
            if bad_col is not None:
                if lineno == 1 and not rows:
                    continue  # header line
                raise InputDataError(
                    f"{path}: could not parse row {lineno}, column {bad_col}: "
                    f"{cells[bad_col - 1]!r}"
                )
            if width is None:
                width = len(parsed)
            elif len(parsed) != width:
                raise InputDataError(
                    f"{path}: row {lineno} has {len(parsed)} columns, expected {width}"
                )
            rows.append(parsed)
    if not rows:
        return Dataset(np.zeros((0, 1)))
    try:
        return Dataset(np.array(rows))
    except InputDataError as exc:
        raise InputDataError(f"{path}: {exc}") from None


def read_csv_labels(path, n_expected: int | None = None) -> np.ndarray:
    """Read per-observation 0/1 labels (1 = drawn from the discrete part)."""
    ds = read_csv_dataset(path)
    if ds.dim != 1:
        raise InputDataError(f"{path}: labels file must have one column, got {ds.dim}")
    lab = ds.column()
    if not np.isin(lab, (0.0, 1.0)).all():
        raise InputDataError(f"{path}: labels must be 0 or 1")
    if n_expected is not None and lab.size != n_expected:
        raise InputDataError(
            f"{path}: {lab.size} labels for {n_expected} observations"
        )
    return lab.astype(np.intp)

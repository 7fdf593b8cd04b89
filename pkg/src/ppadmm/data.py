"""
Census-style CSV ingestion, preprocessing into unit-norm feature vectors,
per-node partitioning, and synthetic two-cluster data.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyAfterFiltering, TooManyNodes, UnknownLabelValue
from .model import LabeledDataset

log = logging.getLogger(__name__)

KINDS = ("numeric", "categorical", "label", "ignore")
UNEVEN_RATIO = 0.7

# commonly quoted sizes of the cleaned Adult data
ADULT_REFERENCE = {"samples": 45_223, "dimension": 105}


@dataclass
class Schema:
    """Column kinds, missing-value marker and label mapping."""

    names: list
    kinds: list
    missing: str = "?"
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise ValueError("schema needs exactly one kind per column")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate column names in schema")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise ValueError(f"unknown column kinds {bad}")
        if self.kinds.count("label") != 1:
            raise ValueError("schema must declare exactly one label column")

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        spec = json.loads(Path(path).read_text())
        cols = spec["columns"]
        return cls(
            names=[c["name"] for c in cols],
            kinds=[c["kind"] for c in cols],
            missing=spec.get("missing", "?"),
            label_map={str(k): int(v) for k, v in spec.get("label_map", {}).items()},
        )

    @property
    def label_index(self) -> int:
        return self.kinds.index("label")


@dataclass
class RawTable:
    rows: list
    schema: Schema

    def __post_init__(self):
        n = len(self.schema.names)
        for k, r in enumerate(self.rows):
            if len(r) != n:
                raise DimensionMismatch(f"row {k} has {len(r)} fields, schema has {n}")

    @classmethod
    def read_csv(cls, path: str | Path, schema: Schema, skip_header: bool | None = None) -> "RawTable":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh, skipinitialspace=True):
                rec = [c.strip() for c in rec]
                if not rec or all(c == "" for c in rec) or rec[0].startswith("|"):
                    continue
                rows.append(rec)
        if skip_header is None:
            skip_header = bool(rows) and rows[0] == schema.names
        if skip_header:
            rows = rows[1:]
        return cls(rows, schema)


def _normalize_label(s: str) -> str:
    return s.strip().rstrip(".").strip()


def preprocess(raw: RawTable, return_columns: bool = False):
    """Turn raw rows into a :class:`LabeledDataset`.

    Steps, in order: drop rows containing the missing marker; one-hot encode
    categorical columns (categories sorted); divide every column by its
    maximum (columns with maximum 0 untouched); divide every row by
    ``max(1, |row|_2)``; map labels to +-1 through the schema's label map.

    Numeric columns are assumed nonnegative, as in the census data.
    """
    sch = raw.schema
    rows = [r for r in raw.rows if sch.missing not in (c.strip() for c in r)]
    if not rows:
        raise EmptyAfterFiltering("no rows left after removing missing values")

    label_map = {_normalize_label(k): v for k, v in sch.label_map.items()}
    labels = []
    for r in rows:
        key = _normalize_label(r[sch.label_index])
        if key not in label_map:
            raise UnknownLabelValue(f"label {r[sch.label_index]!r} not in label map")
        labels.append(label_map[key])

    blocks, names = [], []
    for c, (name, kind) in enumerate(zip(sch.names, sch.kinds)):
        col = [r[c].strip() for r in rows]
        if kind == "numeric":
            blocks.append(np.array(col, dtype=float)[:, None])
            names.append(name)
        elif kind == "categorical":
            cats = sorted(set(col))
            index = {v: k for k, v in enumerate(cats)}
            onehot = np.zeros((len(rows), len(cats)))
            onehot[np.arange(len(rows)), [index[v] for v in col]] = 1.0
            blocks.append(onehot)
            names.extend(f"{name}={v}" for v in cats)
    x = np.hstack(blocks) if blocks else np.zeros((len(rows), 0))

    colmax = x.max(axis=0) if x.size else np.zeros(x.shape[1])
    scale = np.where(colmax > 0, colmax, 1.0)
    x = x / scale
    x = x / np.maximum(1.0, np.linalg.norm(x, axis=1))[:, None]
    ds = LabeledDataset(x, np.array(labels, dtype=float))
    return (ds, names) if return_columns else ds


def compare_with_reference(ds: LabeledDataset, reference: dict = ADULT_REFERENCE) -> dict:
    """Report sample count and dimension against the published Adult sizes. Never raises."""
    report = {
        "samples": ds.B,
        "dimension": ds.d,
        "reference_samples": reference["samples"],
        "reference_dimension": reference["dimension"],
    }
    report["samples_match"] = ds.B == reference["samples"]
    report["dimension_match"] = ds.d == reference["dimension"]
    if not (report["samples_match"] and report["dimension_match"]):
        log.warning(
            "preprocessed data is %d x %d; reference sizes are %d x %d",
            ds.B, ds.d, reference["samples"], reference["dimension"],
        )
    return report


def write_dataset(ds: LabeledDataset, path: str | Path) -> None:
    """First line is ``d``; then one ``label,v1,...,vd`` row per sample."""
    with open(path, "w", newline="") as fh:
        fh.write(f"{ds.d}\n")
        w = csv.writer(fh, lineterminator="\n")
        for y, row in zip(ds.labels, ds.features):
            w.writerow([int(y)] + [repr(float(v)) for v in row])


def read_dataset(path: str | Path) -> LabeledDataset:
    with open(path, newline="") as fh:
        d = int(fh.readline().strip())
        rows = [r for r in csv.reader(fh) if r]
    if any(len(r) != d + 1 for r in rows):
        raise DimensionMismatch(f"rows must have {d + 1} fields")
    arr = np.array(rows, dtype=float).reshape(-1, d + 1)
    return LabeledDataset(arr[:, 1:], arr[:, 0])


def _subset(ds: LabeledDataset, idx) -> LabeledDataset:
    idx = np.asarray(idx, dtype=int)
    return LabeledDataset(ds.features[idx], ds.labels[idx])


def uneven_sizes(n: int, n_nodes: int, ratio: float = UNEVEN_RATIO) -> list[int]:
    """Geometric size profile: one sample per node, the rest by largest remainder."""
    w = ratio ** np.arange(n_nodes)
    w = w / w.sum()
    extra = n - n_nodes
    share = extra * w
    base = np.floor(share).astype(int)
    left = extra - base.sum()
    order = np.argsort(-(share - base), kind="stable")
    base[order[:left]] += 1
    return sorted((base + 1).tolist(), reverse=True)


def partition(data: LabeledDataset, n_nodes: int, mode: str = "even", seed: int = 0) -> list[LabeledDataset]:
    """Shuffle with ``seed`` and split into ``n_nodes`` disjoint shards."""
    n = data.B
    if n_nodes > n:
        raise TooManyNodes(f"{n_nodes} nodes but only {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    if mode == "even":
        return [_subset(data, p) for p in np.array_split(perm, n_nodes)]
    if mode == "uneven":
        bounds = np.cumsum([0] + uneven_sizes(n, n_nodes))
        return [_subset(data, perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    raise ValueError(f"unknown partition mode {mode!r}")


def holdout(data: LabeledDataset, fraction: float, seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded train/test split; ``fraction`` of samples go to the test part."""
    perm = np.random.default_rng(seed).permutation(data.B)
    k = int(round(fraction * data.B))
    return _subset(data, perm[k:]), _subset(data, perm[:k])


def pool(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    return LabeledDataset(np.vstack([d.features for d in datasets]), np.concatenate([d.labels for d in datasets]))


def synthetic(n_nodes: int, d: int, per_node_B, seed: int, separation: float = 1.0, spread: float = 1.0) -> list[LabeledDataset]:
    """Two Gaussian clusters at ``+-separation * u`` for a random unit ``u``.

    Coordinates get standard deviation ``spread / sqrt(d)``; rows are then
    scaled into the unit ball. Labels are the cluster signs.
    """
    sizes = np.broadcast_to(np.asarray(per_node_B, dtype=int), (n_nodes,))
    if np.any(sizes < 1) or n_nodes < 1 or d < 1:
        raise ValueError("counts must be positive")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    out = []
    for b in sizes:
        y = rng.choice([-1.0, 1.0], size=int(b))
        x = separation * y[:, None] * u[None, :] + spread / np.sqrt(d) * rng.standard_normal((int(b), d))
        x = x / np.maximum(1.0, np.linalg.norm(x, axis=1))[:, None]
        out.append(LabeledDataset(x, y))
    return out

"""Tabular ingestion, categorical encoding, standardization and state graphs."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import spearmanr

from .errors import EmptyDataset, MissingColumn, TypeMismatch, UnknownCategory, ValidationError

logger = logging.getLogger(__name__)

KINDS = ("numeric", "categorical", "text")
MISSING = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class FeatureDef:
    name: str
    kind: str = "numeric"
    unit: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"feature {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def from_config(cls, entry: Mapping | str) -> FeatureDef:
        if isinstance(entry, str):
            return cls(entry)
        return cls(str(entry["name"]), str(entry.get("kind", "numeric")), entry.get("unit"))


@dataclass
class Dataset:
    records: list[dict[str, str]]
    schema: list[FeatureDef]
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        names = [f.name for f in self.schema]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate feature names in schema")
        if sum(f.kind != "text" for f in self.schema) < 2:
            raise ValidationError("schema needs at least 2 numeric/categorical features")

    @property
    def modeled(self) -> list[FeatureDef]:
        return [f for f in self.schema if f.kind != "text"]

    @property
    def ignored(self) -> list[str]:
        return [f.name for f in self.schema if f.kind == "text"]

    def __len__(self) -> int:
        return len(self.records)


def _parse_float(value: str, row: int, col: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise TypeMismatch(row, col, value) from None
    if not np.isfinite(x):
        raise TypeMismatch(row, col, value)
    return x


def validate_records(rows: Iterable[Mapping[str, str]], schema: Sequence[FeatureDef]) -> tuple[list[dict[str, str]], int]:
    """Check types and drop rows with a missing modeled feature.

    Row numbers in errors are 1-based data rows (the header is row 0).
    """
    kept: list[dict[str, str]] = []
    dropped = 0
    for r, row in enumerate(rows, 1):
        rec = {f.name: (row.get(f.name) or "").strip() for f in schema}
        if any(rec[f.name].lower() in MISSING for f in schema if f.kind != "text"):
            dropped += 1
            continue
        for f in schema:
            if f.kind == "numeric":
                _parse_float(rec[f.name], r, f.name)
        kept.append(rec)
    return kept, dropped


def load_dataset(path: str | Path, schema: Sequence[FeatureDef]) -> Dataset:
    """Read a UTF-8 CSV with header and validate it against ``schema``."""
    schema = list(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for f in schema:
            if f.name not in header:
                raise MissingColumn(f"column {f.name!r} not found in {path}")
        records, dropped = validate_records(reader, schema)
    if dropped:
        logger.warning("load_dataset: dropped %d rows with missing values", dropped)
    if not records:
        raise EmptyDataset(f"{path} has no usable data rows")
    return Dataset(records=records, schema=schema, dropped_rows=dropped)


@dataclass
class EncodedMatrix:
    """Standardized numeric matrix plus everything needed to re-encode new rows."""

    values: np.ndarray
    column_names: list[str]
    kinds: list[str]
    encoders: dict[str, list[str]]
    means: np.ndarray
    sds: np.ndarray
    dropped_columns: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def f(self) -> int:
        return self.values.shape[1]

    def code(self, col: str, value: str) -> int:
        cats = self.encoders[col]
        try:
            return cats.index(value)
        except ValueError:
            raise UnknownCategory(f"column {col!r}: category {value!r} unseen in training") from None

    def decode(self, col: str, code: int) -> str:
        return self.encoders[col][int(code)]

    def raw_row(self, record: Mapping[str, str]) -> np.ndarray:
        out = np.empty(self.f)
        for j, (name, kind) in enumerate(zip(self.column_names, self.kinds)):
            v = str(record[name]).strip()
            out[j] = self.code(name, v) if kind == "categorical" else _parse_float(v, 0, name)
        return out

    def transform(self, records: Iterable[Mapping[str, str]]) -> np.ndarray:
        """Encode and standardize new records with the training encoders."""
        rows = [self.raw_row(r) for r in records]
        if not rows:
            return np.empty((0, self.f))
        return (np.vstack(rows) - self.means) / self.sds

    def to_dict(self) -> dict:
        return {
            "column_names": self.column_names,
            "kinds": self.kinds,
            "encoders": self.encoders,
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
            "dropped_columns": self.dropped_columns,
        }

    @classmethod
    def from_dict(cls, meta: dict, values: np.ndarray) -> EncodedMatrix:
        return cls(
            values=np.asarray(values, dtype=float),
            column_names=list(meta["column_names"]),
            kinds=list(meta["kinds"]),
            encoders={k: list(v) for k, v in meta["encoders"].items()},
            means=np.asarray(meta["means"], dtype=float),
            sds=np.asarray(meta["sds"], dtype=float),
            dropped_columns=list(meta.get("dropped_columns", [])),
        )


def encode(ds: Dataset) -> EncodedMatrix:
    """Label-encode categoricals (lexicographic codes) and z-score every column.

    Constant columns are dropped with a warning and listed in
    ``dropped_columns``.
    """
    if not ds.records:
        raise EmptyDataset("cannot encode an empty dataset")
    names, kinds, cols = [], [], []
    encoders: dict[str, list[str]] = {}
    dropped: list[str] = []
    for f in ds.modeled:
        raw = [rec[f.name] for rec in ds.records]
        if f.kind == "categorical":
            cats = sorted(set(raw))
            lookup = {c: i for i, c in enumerate(cats)}
            col = np.array([lookup[v] for v in raw], dtype=float)
        else:
            col = np.array([float(v) for v in raw])
        if np.all(col == col[0]):
            logger.warning("encode: column %r is constant, dropping it", f.name)
            dropped.append(f.name)
            continue
        if f.kind == "categorical":
            encoders[f.name] = cats
        names.append(f.name)
        kinds.append(f.kind)
        cols.append(col)
    if len(cols) < 2:
        raise ValidationError("fewer than 2 non-constant features after encoding")
    raw_mat = np.column_stack(cols)
    means = raw_mat.mean(axis=0)
    sds = raw_mat.std(axis=0)
    return EncodedMatrix(
        values=(raw_mat - means) / sds,
        column_names=names,
        kinds=kinds,
        encoders=encoders,
        means=means,
        sds=sds,
        dropped_columns=dropped,
    )


@dataclass(frozen=True)
class EdgeTemplate:
    """Undirected feature-feature edges shared by every state graph."""

    f: int
    pairs: tuple[tuple[int, int, float], ...]
    fallback: bool = False

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.f, self.f))
        for i, j, w in self.pairs:
            A[i, j] = A[j, i] = w
        return A

    def to_dict(self) -> dict:
        return {"f": self.f, "pairs": [list(p) for p in self.pairs], "fallback": self.fallback}

    @classmethod
    def from_dict(cls, d: dict) -> EdgeTemplate:
        return cls(int(d["f"]), tuple((int(i), int(j), float(w)) for i, j, w in d["pairs"]), bool(d["fallback"]))


def build_edge_template(m: EncodedMatrix, corr_threshold: float = 0.2) -> EdgeTemplate:
    """Keep feature pairs whose |Spearman rho| reaches the threshold.

    When no pair qualifies, the features are chained in column order with
    unit weights so every state graph stays connected.
    """
    if m.n < 3:
        raise ValidationError("edge template needs at least 3 rows")
    rho = np.asarray(spearmanr(m.values).statistic, dtype=float)
    if rho.ndim == 0:
        # two columns, or a matrix so degenerate scipy collapses the result
        rho = np.full((m.f, m.f), float(rho)) if m.f == 2 else np.full((m.f, m.f), np.nan)
    rho = np.nan_to_num(np.abs(rho))
    pairs = tuple(
        (i, j, float(min(1.0, rho[i, j])))
        for i in range(m.f)
        for j in range(i + 1, m.f)
        if rho[i, j] >= corr_threshold
    )
    if pairs:
        return EdgeTemplate(m.f, pairs)
    logger.info("edge template empty at threshold %.3g, using chain fallback", corr_threshold)
    return EdgeTemplate(m.f, tuple((i, i + 1, 1.0) for i in range(m.f - 1)), fallback=True)


@dataclass
class StateGraph:
    state_id: int
    nodes: list[str]
    edges: tuple[tuple[int, int, float], ...]
    node_features: np.ndarray

    def adjacency(self) -> np.ndarray:
        f = len(self.nodes)
        A = np.zeros((f, f))
        for i, j, w in self.edges:
            A[i, j] = A[j, i] = w
        return A


def state_graph(state_id: int, row: np.ndarray, names: Sequence[str], t: EdgeTemplate) -> StateGraph:
    row = np.asarray(row, dtype=float)
    f = row.shape[0]
    if f != t.f:
        raise ValidationError(f"row has {f} features but the template has {t.f}")
    V = np.hstack([row[:, None], np.eye(f)])
    return StateGraph(state_id, list(names), t.pairs, V)


def build_state_graphs(m: EncodedMatrix, t: EdgeTemplate) -> list[StateGraph]:
    """One feature-node graph per row: node ``i`` carries ``[value_i, onehot(i)]``."""
    return [state_graph(s, m.values[s], m.column_names, t) for s in range(m.n)]

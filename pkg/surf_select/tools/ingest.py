"""
Data ingestion: OTU tables, responses and taxonomies.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..models.inputs import Family, Normalize
from ..services.tree import TaxonomyTree, read_taxonomy
from ..utils import (
    InputFileError,
    TaxonomyError,
    ValidationError,
    as_response,
    sanitize_column_name,
)

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    """
    An analysis-ready table.

    `raw` holds the (optionally normalized) values in column order: OTU
    columns first (in taxonomy leaf order when a taxonomy is attached), then
    pass-through covariates. `X` is `raw` with every column centred.
    """
    raw: np.ndarray
    column_names: list[str]
    y: np.ndarray
    family: Family
    response_name: str = "y"
    sample_ids: list[str] = field(default_factory=list)
    taxonomy: Optional[TaxonomyTree] = None
    passthrough: list[str] = field(default_factory=list)
    normalization: Normalize = Normalize.NONE

    @property
    def n_samples(self) -> int:
        return self.raw.shape[0]

    @property
    def n_columns(self) -> int:
        return self.raw.shape[1]

    @property
    def column_means(self) -> np.ndarray:
        return self.raw.mean(axis=0)

    @property
    def X(self) -> np.ndarray:
        return self.raw - self.column_means

    @property
    def otu_block(self) -> np.ndarray:
        """Columns subject to tree aggregation."""
        return self.raw[:, :self.n_columns - len(self.passthrough)]

    @property
    def passthrough_block(self) -> Optional[np.ndarray]:
        if not self.passthrough:
            return None
        return self.raw[:, self.n_columns - len(self.passthrough):]


def _separator(path: str) -> Optional[str]:
    suffix = os.path.splitext(path)[1].lower()
    if suffix in (".tsv", ".tab", ".txt"):
        return "\t"
    if suffix == ".csv":
        return ","
    return None


def _read_table(path: str) -> pd.DataFrame:
    sep = _separator(path)
    try:
        if sep is None:
            frame = pd.read_csv(path, sep=None, engine="python", index_col=0, dtype=str)
        else:
            frame = pd.read_csv(path, sep=sep, index_col=0, dtype=str)
        header = pd.read_csv(path, sep=sep, engine="python" if sep is None else "c",
                             header=None, nrows=1, dtype=str).iloc[0].tolist()[1:]
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputFileError(f"cannot read table: {e}", path=path)
    names = [str(h).strip() for h in header]
    duplicates = sorted({h for h in names if names.count(h) > 1})
    if duplicates:
        raise InputFileError(f"duplicate column names: {duplicates}", path=path)
    frame.columns = names
    frame.index = frame.index.map(str)
    return frame


def _numeric(frame: pd.DataFrame, path: Optional[str]) -> np.ndarray:
    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip() if col.dtype == object else col, errors="coerce"))
    bad = numeric.isna().to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise InputFileError(
            f"non-numeric cell at row {frame.index[row]!r}, column {frame.columns[col]!r}: {frame.iat[row, col]!r}",
            path=path, row=str(frame.index[row]), column=str(frame.columns[col])
        )
    return numeric.to_numpy(dtype=float)


def build_dataset(
    frame: pd.DataFrame,
    response_name: str,
    family: Family,
    taxonomy: Optional[TaxonomyTree] = None,
    normalize: Normalize = Normalize.NONE,
    passthrough: Sequence[str] = (),
    path: Optional[str] = None,
) -> Dataset:
    """
    Turn a sample-by-column frame into a Dataset.

    Args:
        frame: Rows are samples (index = sample id), columns include the response
        response_name: Response column
        family: GLM family the response must fit
        taxonomy: Optional tree over (a subset of) the OTU columns
        normalize: Per-row normalization of the OTU columns
        passthrough: Columns excluded from normalization and aggregation
        path: Source path used in error messages

    Returns:
        Dataset

    Raises:
        InputFileError: Missing response, non-numeric cells or zero-total rows
        TaxonomyError: Taxonomy naming OTUs absent from the table
    """
    family = Family(family)
    response_name = sanitize_column_name(response_name)
    if response_name not in frame.columns:
        raise InputFileError(f"response column '{response_name}' not found", path=path)
    passthrough = [sanitize_column_name(c) for c in passthrough]
    unknown = [c for c in passthrough if c not in frame.columns or c == response_name]
    if unknown:
        raise ValidationError(f"pass-through columns not in the table: {unknown}", field="passthrough")

    values = _numeric(frame, path)
    columns = list(frame.columns)
    y = as_response(values[:, columns.index(response_name)], family, name=response_name)

    feature_names = [c for c in columns if c != response_name]
    if taxonomy is not None:
        missing = [otu for otu in taxonomy.otu_ids if otu not in feature_names]
        if missing:
            raise TaxonomyError(f"taxonomy names {len(missing)} OTUs absent from the table", offending=missing)
        uncovered = [c for c in feature_names if c not in taxonomy.otu_ids and c not in passthrough]
        if uncovered:
            logger.warning(f"Columns without taxonomy treated as pass-through covariates: {uncovered}")
            passthrough = passthrough + uncovered
        otu_names = list(taxonomy.otu_ids)
    else:
        otu_names = [c for c in feature_names if c not in passthrough]
    if not otu_names and not passthrough:
        raise InputFileError("table has no predictor columns", path=path)

    otu = values[:, [columns.index(c) for c in otu_names]]
    normalize = Normalize(normalize)
    if normalize == Normalize.PROPORTIONS and otu.shape[1]:
        totals = otu.sum(axis=1)
        if np.any(totals <= 0):
            row = int(np.flatnonzero(totals <= 0)[0])
            raise InputFileError(f"row {frame.index[row]!r} has a non-positive total", path=path)
        otu = otu / totals[:, None]
    extra = values[:, [columns.index(c) for c in passthrough]]

    logger.info(f"Loaded {len(frame)} samples, {len(otu_names)} OTU columns, {len(passthrough)} pass-through")
    return Dataset(
        raw=np.column_stack([otu, extra]) if passthrough else otu,
        column_names=otu_names + passthrough,
        y=y,
        family=family,
        response_name=response_name,
        sample_ids=list(frame.index),
        taxonomy=taxonomy,
        passthrough=passthrough,
        normalization=normalize,
    )


def load_dataset(
    table_path: str,
    response_name: str,
    family: Family,
    taxonomy_path: Optional[str] = None,
    normalize: Normalize = Normalize.NONE,
    passthrough: Sequence[str] = (),
) -> Dataset:
    """
    Read a CSV/TSV table (header row, first column sample id) and an optional taxonomy.

    Example:
        >>> ds = load_dataset("otus.csv", "disease", Family.BINOMIAL, taxonomy_path="taxonomy.tsv",
        ...                   normalize=Normalize.PROPORTIONS)
        >>> ds.n_samples, ds.n_columns
    """
    frame = _read_table(table_path)
    taxonomy = read_taxonomy(taxonomy_path) if taxonomy_path else None
    return build_dataset(frame, response_name, family, taxonomy=taxonomy,
                         normalize=normalize, passthrough=passthrough, path=table_path)


def dataset_from_arrays(
    X,
    y,
    family: Family,
    column_names: Optional[Sequence[str]] = None,
    taxonomy: Optional[TaxonomyTree] = None,
    passthrough: Sequence[str] = (),
) -> Dataset:
    """Wrap in-memory arrays as a Dataset (columns named x0, x1, ... by default)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValidationError("column_names does not match the number of columns", field="column_names")
    frame = pd.DataFrame(X, columns=names, index=[f"s{i}" for i in range(X.shape[0])])
    frame["__response__"] = np.asarray(y, dtype=float)
    dataset = build_dataset(frame, "__response__", family, taxonomy=taxonomy, passthrough=passthrough)
    dataset.response_name = "y"
    return dataset

"""
Price CSV ingestion.

Each input file holds one entity: a date column plus one column per feature
(e.g. high, low, close, volume). Files are aligned on date, converted to
day-over-day log-returns and standardized column by column.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from magm.core.errors import IngestionError, InvalidInputError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class TimeSeriesTable(BaseModel):
    """
    T x (p*m) standardized returns.

    Columns are entity-major: entity k, feature s sits in column k*m + s, so
    the covariance has the (p, m) block layout expected by the estimator.
    """

    entities: List[str] = Field(..., min_length=1)
    features: List[str] = Field(..., min_length=1)
    values: np.ndarray = Field(..., description="T x (p*m) matrix without missing values.")
    dates: List[str] = Field(default_factory=list, description="Date label of every row.")
    dropped_rows: int = Field(0, ge=0, description="Rows removed for gaps or nonpositive prices.")

    class Config:
        arbitrary_types_allowed = True

    @model_validator(mode="after")
    def _check_shape(self):
        expected = len(self.entities) * len(self.features)
        if self.values.ndim != 2 or self.values.shape[1] != expected:
            raise ValueError(f"values must have {expected} columns")
        if self.dates and len(self.dates) != self.values.shape[0]:
            raise ValueError("one date label per row is required")
        if np.isnan(self.values).any():
            raise ValueError("values contain missing entries")
        return self

    @property
    def p(self) -> int:
        return len(self.entities)

    @property
    def m(self) -> int:
        return len(self.features)

    @property
    def columns(self) -> List[str]:
        return [f"{entity}:{feature}" for entity in self.entities for feature in self.features]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.columns)
        if self.dates:
            frame.insert(0, "date", self.dates)
        return frame

    def write_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    def select_features(self, names: Sequence[str]) -> "TimeSeriesTable":
        """Keep a subset of features, e.g. only the close price for m = 1."""
        missing = [name for name in names if name not in self.features]
        if missing:
            raise InvalidInputError("unknown features", missing=missing)
        index = [k * self.m + self.features.index(name) for k in range(self.p) for name in names]
        return self.model_copy(update={"features": list(names), "values": self.values[:, index]})


def _read_entity(path: Path, features: Sequence[str], date_column: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestionError("cannot read CSV", path=str(path), reason=str(e)) from e
    frame.columns = [str(c).strip() for c in frame.columns]
    lower = {c.lower(): c for c in frame.columns}
    wanted = [date_column, *features]
    missing = [name for name in wanted if name.lower() not in lower]
    if missing:
        raise IngestionError("missing columns", path=str(path), missing=missing)
    frame = frame[[lower[name.lower()] for name in wanted]]
    frame.columns = wanted
    if frame[date_column].duplicated().any():
        raise IngestionError("duplicate dates", path=str(path))
    frame = frame.set_index(date_column)
    return frame.apply(pd.to_numeric, errors="coerce")


def ingest_csv(
    paths: Sequence[PathLike],
    feature_names: Sequence[str],
    date_column: str = "date",
    entity_names: Optional[Sequence[str]] = None,
    standardize: bool = True,
) -> TimeSeriesTable:
    """
    Build a standardized log-return table from per-entity price files.

    Args:
        paths: One CSV per entity.
        feature_names: Feature columns to read, in block order.
        date_column: Name of the date column.
        entity_names: Labels for the entities, defaulting to the file stems.
        standardize: Center each column and scale it to unit sample variance.

    Raises:
        IngestionError: If files are unreadable, miss columns or disagree on dates.
    """
    if not paths:
        raise IngestionError("no input files")
    if not feature_names:
        raise IngestionError("no feature names")
    paths = [Path(path) for path in paths]
    entities = list(entity_names) if entity_names else [path.stem for path in paths]
    if len(entities) != len(paths):
        raise IngestionError("one entity name per file is required", files=len(paths), names=len(entities))

    frames = [_read_entity(path, feature_names, date_column) for path in paths]
    index = frames[0].index
    for path, frame in zip(paths[1:], frames[1:]):
        if not frame.index.equals(index):
            raise IngestionError("date columns are not aligned", path=str(path), reference=str(paths[0]))

    prices = pd.concat(frames, axis=1, keys=entities)
    total = len(prices)

    gaps = prices.isna().any(axis=1)
    if gaps.any():
        logger.warning(f"Dropping {int(gaps.sum())} rows with missing values")
    prices = prices[~gaps]
    nonpositive = (prices <= 0).any(axis=1)
    if nonpositive.any():
        logger.warning(f"Dropping {int(nonpositive.sum())} rows with nonpositive prices")
    prices = prices[~nonpositive]
    if len(prices) < 2:
        raise IngestionError("fewer than two usable rows", rows=len(prices))

    returns = np.log(prices).diff().iloc[1:]
    values = returns.to_numpy(dtype=float)
    if standardize:
        values = values - values.mean(axis=0)
        scale = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
        flat = ~(scale > 0.0)
        for column in np.flatnonzero(flat):
            logger.warning(f"Column {returns.columns[column]} has zero variance; scaling skipped")
        values = values / np.where(flat, 1.0, scale)

    logger.info(f"Ingested {len(entities)} entities x {len(feature_names)} features, {values.shape[0]} return rows")
    return TimeSeriesTable(
        entities=entities,
        features=list(feature_names),
        values=values,
        dates=[str(date) for date in returns.index],
        dropped_rows=total - len(prices),
    )

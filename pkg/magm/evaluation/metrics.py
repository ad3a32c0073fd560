"""
Edge recovery and estimation error metrics.

Edges are unordered pairs of the p-node graph; F1 treats them as the
positive class.
"""

import logging
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterable, Iterator, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from magm.core.errors import InvalidInputError
from magm.linalg.block_matrix import MatrixLike, as_array

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["f1", "hamming", "frob_error", "elapsed_seconds"]
GROUP_COLUMNS = ["penalty", "n", "graph"]


class MetricsRecord(BaseModel):
    """Metrics of one fitted run plus the descriptors needed to aggregate it."""

    f1: float = Field(..., ge=0.0, le=1.0)
    hamming: int = Field(..., ge=0)
    frob_error: float = Field(..., ge=0.0, description="||Omega_hat - Omega*||_F / ||Omega*||_F.")
    elapsed_seconds: float = Field(0.0, ge=0.0, description="Wall time of the fit call.")
    penalty: str = ""
    n: int = Field(0, ge=0)
    graph: str = ""
    lam: Optional[float] = Field(None, description="Selected lambda.")
    alpha: Optional[float] = None
    seed: Optional[int] = None
    run: Optional[int] = None
    n_edges: int = Field(0, ge=0, description="Estimated edge count.")

    def to_row(self) -> Dict[str, Any]:
        row = self.model_dump()
        row["lambda"] = row.pop("lam")
        return row


def _normalize(edges: Iterable) -> set:
    return {(min(q, l), max(q, l)) for q, l in edges}


def f1_score(est: Iterable, truth: Iterable) -> float:
    """2PR/(P+R); 0 when there is no estimated or no true edge, or no overlap."""
    est, truth = _normalize(est), _normalize(truth)
    hits = len(est & truth)
    if not est or not truth or hits == 0:
        return 0.0
    precision = hits / len(est)
    recall = hits / len(truth)
    return 2.0 * precision * recall / (precision + recall)


def hamming(est: Iterable, truth: Iterable) -> int:
    """Size of the symmetric difference."""
    return len(_normalize(est) ^ _normalize(truth))


def frob_error(omega_hat: MatrixLike, omega_star: MatrixLike) -> float:
    estimate, target = as_array(omega_hat), as_array(omega_star)
    if estimate.shape != target.shape:
        raise InvalidInputError("matrices differ in shape", estimate=estimate.shape, truth=target.shape)
    scale = float(np.linalg.norm(target))
    if scale == 0.0:
        raise InvalidInputError("true precision matrix has zero norm")
    return float(np.linalg.norm(estimate - target)) / scale


@contextmanager
def timed() -> Iterator[Dict[str, float]]:
    """Measure a block with the monotonic clock; the elapsed time lands in ``result["seconds"]``."""
    result = {"seconds": 0.0}
    start = time.perf_counter()
    try:
        yield result
    finally:
        result["seconds"] = time.perf_counter() - start


def evaluate(estimate, truth, elapsed: float = 0.0, **meta: Any) -> MetricsRecord:
    """
    Score a GraphEstimate against a GroundTruth.

    Args:
        estimate: Fitted GraphEstimate.
        truth: GroundTruth it was fitted on.
        elapsed: Seconds spent in the fit call.
        **meta: Run descriptors (penalty, n, graph, seed, run, ...).
    """
    meta.setdefault("penalty", estimate.penalty.kind.value)
    meta.setdefault("lam", estimate.penalty.lam)
    meta.setdefault("alpha", estimate.penalty.alpha)
    if truth.graph_kind is not None:
        meta.setdefault("graph", truth.graph_kind.label)
    return MetricsRecord(
        f1=f1_score(estimate.edges, truth.edges_star),
        hamming=hamming(estimate.edges, truth.edges_star),
        frob_error=frob_error(estimate.omega_hat, truth.omega_star),
        elapsed_seconds=elapsed,
        n_edges=len(estimate.edges),
        **meta,
    )


def records_frame(records: List[MetricsRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.to_row() for record in records])


def aggregate(records: List[MetricsRecord]) -> pd.DataFrame:
    """
    Mean and sample standard deviation (n - 1 denominator) of every metric
    per (penalty, n, graph).

    Returns:
        Long table with columns penalty, n, graph, metric, mean, std, runs.
        The std of a single run is NaN.
    """
    columns = GROUP_COLUMNS + ["metric", "mean", "std", "runs"]
    if not records:
        return pd.DataFrame(columns=columns)
    frame = records_frame(records)
    long = frame.melt(id_vars=GROUP_COLUMNS, value_vars=METRIC_COLUMNS, var_name="metric")
    long["value"] = long["value"].astype(float)
    summary = (
        long.groupby(GROUP_COLUMNS + ["metric"], sort=True)["value"]
        .agg(mean="mean", std=lambda values: values.std(ddof=1), runs="count")
        .reset_index()
    )
    return summary[columns]

"""
Result writers: edge lists, JSON summaries and estimate bundles.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from magm.estimation.estimator import GraphEstimate
from magm.linalg.serialization import write_matrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (frozenset, set)):
        return sorted(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_default))
    return path


def edge_frame(
    estimate: GraphEstimate,
    labels: Optional[Sequence[str]] = None,
    groups: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    One row per estimated edge: node_a, node_b, weight (block Frobenius norm).

    With ``labels`` the nodes are named; ``groups`` adds pass-through group
    columns (e.g. sectors) for external plotting.
    """
    weights = estimate.block_weights.values
    rows: List[Dict[str, Any]] = []
    for q, l in sorted(estimate.edges):
        row: Dict[str, Any] = {
            "node_a": labels[q] if labels else q,
            "node_b": labels[l] if labels else l,
            "weight": float(weights[q, l]),
        }
        if groups:
            row["group_a"], row["group_b"] = groups[q], groups[l]
        rows.append(row)
    columns = ["node_a", "node_b", "weight"] + (["group_a", "group_b"] if groups else [])
    return pd.DataFrame(rows, columns=columns)


def write_edge_tsv(
    estimate: GraphEstimate,
    path: PathLike,
    labels: Optional[Sequence[str]] = None,
    groups: Optional[Sequence[str]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    edge_frame(estimate, labels, groups).to_csv(path, sep="\t", index=False, float_format="%.10g")
    return path


def write_estimate(
    estimate: GraphEstimate,
    out_dir: PathLike,
    prefix: str = "estimate",
    labels: Optional[Sequence[str]] = None,
    binary: bool = False,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, str]:
    """
    Write <prefix>.json, <prefix>_edges.tsv and the omega_hat matrix file.

    Returns:
        Mapping of output kind to path.
    """
    out_dir = Path(out_dir)
    payload = estimate.to_json_dict(list(labels) if labels else None)
    if extra:
        payload.update(extra)
    matrix_path = out_dir / f"{prefix}_omega.{'bin' if binary else 'csv'}"
    files = {
        "json": str(write_json(payload, out_dir / f"{prefix}.json")),
        "edges": str(write_edge_tsv(estimate, out_dir / f"{prefix}_edges.tsv", labels)),
        "omega": str(write_matrix(estimate.omega_hat, matrix_path)),
    }
    logger.info(f"Wrote {len(estimate.edges)} edges to {files['edges']}")
    return files

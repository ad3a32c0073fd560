"""
Synthetic ground truth for multi-attribute graphical models.

A random graph on p nodes (Erdos-Renyi or Barabasi-Albert) fixes which m x m
blocks of the precision matrix are nonzero; the matrix is then shifted so
its smallest eigenvalue is 0.5 and Gaussian samples are drawn from the
implied covariance.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field, model_validator

from magm.core.errors import InvalidInputError
from magm.estimation.estimator import EdgeSet
from magm.linalg.block_matrix import BlockMatrix, spd_inverse, sym_eig

logger = logging.getLogger(__name__)

MIN_EIGENVALUE = 0.5
OFF_DIAGONAL_LOW = 0.1
OFF_DIAGONAL_HIGH = 0.4


class GraphKind(BaseModel):
    """Random graph family and its parameter."""

    kind: Literal["er", "ba"] = Field(..., description="Erdos-Renyi or Barabasi-Albert.")
    p_er: Optional[float] = Field(None, ge=0.0, le=1.0, description="ER edge probability.")
    mean_degree: Optional[float] = Field(None, gt=0.0, description="BA target mean degree.")

    @model_validator(mode="after")
    def _check_parameter(self):
        if self.kind == "er" and self.p_er is None:
            raise ValueError("ER graphs need p_er")
        if self.kind == "ba" and self.mean_degree is None:
            raise ValueError("BA graphs need mean_degree")
        return self

    @classmethod
    def er(cls, p_er: float) -> "GraphKind":
        return cls(kind="er", p_er=p_er)

    @classmethod
    def ba(cls, mean_degree: float) -> "GraphKind":
        return cls(kind="ba", mean_degree=mean_degree)

    @property
    def label(self) -> str:
        return "ER" if self.kind == "er" else "BA"


class GroundTruth(BaseModel):
    """True precision matrix, its edge set and how it was generated."""

    omega_star: BlockMatrix = Field(..., description="Symmetric positive definite precision matrix.")
    edges_star: EdgeSet = Field(..., description="True edges (q, l), q < l.")
    p: int = Field(..., gt=0)
    m: int = Field(..., gt=0)
    seed: int = Field(..., description="Seed of the block-value draw.")
    graph_kind: Optional[GraphKind] = None
    delta: float = Field(..., description="Diagonal shift applied to reach the target smallest eigenvalue.")

    class Config:
        arbitrary_types_allowed = True

    @property
    def sigma_star(self) -> np.ndarray:
        return spd_inverse(self.omega_star)

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "m": self.m,
            "seed": self.seed,
            "graph_kind": self.graph_kind.model_dump() if self.graph_kind else None,
            "delta": self.delta,
            "edges": [list(edge) for edge in sorted(self.edges_star)],
        }

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json_dict(), indent=2))
        return path


def _edge_set(graph: nx.Graph) -> EdgeSet:
    return frozenset((min(q, l), max(q, l)) for q, l in graph.edges() if q != l)


def gen_er_graph(p: int, p_er: float, seed: int) -> EdgeSet:
    """Each unordered pair of the p nodes is an edge independently with probability p_er."""
    if p < 2:
        raise InvalidInputError("ER graph needs at least two nodes", p=p)
    if not 0.0 <= p_er <= 1.0:
        raise InvalidInputError("p_er must lie in [0, 1]", p_er=p_er)
    return _edge_set(nx.gnp_random_graph(p, p_er, seed=seed))


def gen_ba_graph(p: int, mean_degree: float, seed: int) -> EdgeSet:
    """
    Preferential-attachment graph.

    Every arriving node attaches mean_degree/2 edges to existing nodes with
    probability proportional to their degree. Mean degree 2 gives a tree
    with p - 1 edges grown from a two-node seed graph.

    Raises:
        InvalidInputError: If mean_degree/2 is not a positive integer below p.
    """
    if p < 3:
        raise InvalidInputError("BA graph needs at least three nodes", p=p)
    attach = mean_degree / 2.0
    if attach < 1 or attach != int(attach) or attach >= p:
        raise InvalidInputError("mean degree is not achievable by preferential attachment", mean_degree=mean_degree, p=p)
    return _edge_set(nx.barabasi_albert_graph(p, int(attach), seed=seed))


def gen_graph(kind: GraphKind, p: int, seed: int) -> EdgeSet:
    if kind.kind == "er":
        return gen_er_graph(p, kind.p_er, seed)
    return gen_ba_graph(p, kind.mean_degree, seed)


def _draw_block(rng: np.random.Generator, m: int) -> np.ndarray:
    magnitude = rng.uniform(OFF_DIAGONAL_LOW, OFF_DIAGONAL_HIGH, size=(m, m))
    sign = np.where(rng.random((m, m)) < 0.5, -1.0, 1.0)
    block = sign * magnitude
    # A single attribute has no s != t entries; keep the edge by drawing the lone entry.
    if m > 1:
        np.fill_diagonal(block, 0.0)
    return block


def build_precision(
    edges: EdgeSet, p: int, m: int, seed: int, graph_kind: Optional[GraphKind] = None
) -> GroundTruth:
    """
    Block precision matrix supported on the given edges.

    Diagonal blocks are [0.5^|s-t|]; each connected block (j, k), j < k, gets
    off-diagonal entries uniform on [-0.4, -0.1] U [0.1, 0.4] and a zero
    diagonal, the lower triangle mirrors the upper one, and the result is
    shifted by delta*I so that its smallest eigenvalue is 0.5.
    """
    if p < 1 or m < 1:
        raise InvalidInputError("p and m must be positive", p=p, m=m)
    for q, l in edges:
        if not (0 <= q < l < p):
            raise InvalidInputError("edge outside the node range or not ordered", edge=(q, l), p=p)

    rng = np.random.default_rng(seed)
    powers = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    diagonal_block = 0.5 ** powers

    blocks = np.zeros((p, m, p, m))
    for j in range(p):
        blocks[j, :, j, :] = diagonal_block
    for j, k in sorted(edges):
        drawn = _draw_block(rng, m)
        blocks[j, :, k, :] = drawn
        blocks[k, :, j, :] = drawn.T

    omega = blocks.reshape(p * m, p * m)
    delta = MIN_EIGENVALUE - float(sym_eig(omega).eigenvalues[0])
    omega_star = BlockMatrix(data=omega + delta * np.eye(p * m), p=p, m=m)
    logger.debug(f"Built precision matrix p={p}, m={m} with {len(edges)} edges (delta={delta:.4f})")
    return GroundTruth(
        omega_star=omega_star,
        edges_star=frozenset(edges),
        p=p,
        m=m,
        seed=seed,
        graph_kind=graph_kind,
        delta=delta,
    )


def generate_truth(kind: GraphKind, p: int, m: int, seed: int) -> GroundTruth:
    """Draw a graph and build its precision matrix from one seed."""
    return build_precision(gen_graph(kind, p, seed), p, m, seed, graph_kind=kind)


def sample_data(truth: GroundTruth, n: int, seed: int) -> np.ndarray:
    """
    n i.i.d. rows x = Phi w with w ~ N(0, I) and Phi Phi^T = (Omega*)^-1.

    Returns:
        n x (mp) array.
    """
    if n < 1:
        raise InvalidInputError("need at least one sample", n=n)
    decomposition = sym_eig(truth.omega_star)
    phi = decomposition.eigenvectors / np.sqrt(decomposition.eigenvalues)
    w = np.random.default_rng(seed).standard_normal((n, truth.omega_star.dim))
    return w @ phi.T

"""Orthogonal projectors, bearings, and the bearing rigidity test.

A framework is an undirected graph embedded at a point configuration in
R^d. The per-edge unit vectors ("bearings") between neighboring points,
stacked in canonical edge order, form a map from configurations to R^{dm};
its Jacobian is the rigidity matrix analyzed here. A framework is
infinitesimally bearing rigid exactly when the only motions preserving all
bearings to first order are rigid translations and uniform scalings, i.e.
when the rigidity matrix has rank d*n - d - 1.

Conventions: configurations are (n, d) arrays; matrices act on the flat
length-d*n stacking ``points.reshape(-1)`` (agent-major). The numeric rank
treats singular values below ``RANK_RTOL`` times the largest as zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import (
    CoincidentPointsError,
    DegenerateConfigurationError,
    DegenerateVectorError,
)
from .graphs import Graph

# Relative cutoff below which singular values / eigenvalues count as zero.
RANK_RTOL = 1e-8

# Edge shorter than this fraction of the configuration diameter -> coincident.
COINCIDENT_RTOL = 1e-12


@dataclass(frozen=True)
class Framework:
    """Graph + configuration; the object all rigidity questions refer to."""

    graph: Graph
    points: np.ndarray  # (n, d)

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2:
            raise ValueError(f"points must be (n, d), got shape {pts.shape}")
        n, d = pts.shape
        if n != self.graph.n:
            raise ValueError(
                f"graph has {self.graph.n} vertices but configuration has {n} points"
            )
        if d < 2:
            raise ValueError(f"ambient dimension must be >= 2, got d={d}")
        if n < 2:
            raise ValueError(f"need at least 2 points, got n={n}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def dim(self) -> int:
        """Dimension of the flat configuration space, d*n."""
        return self.points.size

    def flat(self) -> np.ndarray:
        """Stacked configuration [p_1; ...; p_n] as a writable copy."""
        return self.points.reshape(-1).copy()

    @cached_property
    def diameter(self) -> float:
        diff = self.points[:, None, :] - self.points[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=2).max()))


@dataclass(frozen=True)
class BearingVector:
    """Unit vectors along every edge, canonical order, tail -> head."""

    vectors: np.ndarray  # (m, d)
    lengths: np.ndarray  # (m,)

    def __post_init__(self):
        self.vectors.flags.writeable = False
        self.lengths.flags.writeable = False

    @property
    def stacked(self) -> np.ndarray:
        """(d*m,) stacking [g_1; ...; g_m]."""
        return self.vectors.reshape(-1)


def projector(x: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Orthogonal projector onto the complement of span{x}.

    P = I - (x/||x||)(x/||x||)^T. Symmetric, idempotent, PSD; P x = 0;
    eigenvalues are 0 (once) and 1 (d-1 times).

    Raises:
        DegenerateVectorError: ``||x|| <= eps``.
    """
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm <= eps:
        raise DegenerateVectorError(f"cannot project along vector of norm {norm:.3e}")
    u = x / norm
    return np.eye(x.shape[0]) - np.outer(u, u)


def bearing_vector(fw: Framework) -> BearingVector:
    """All edge bearings of the framework, with edge lengths.

    Bearing of canonical edge (i, j), i < j, points from p_i toward p_j;
    the reverse bearing is its negative.

    Raises:
        CoincidentPointsError: an edge shorter than COINCIDENT_RTOL times
            the configuration diameter.
    """
    g = fw.graph
    edges = g.edge_array()
    diff = fw.points[edges[:, 1]] - fw.points[edges[:, 0]]
    lengths = np.linalg.norm(diff, axis=1)
    eps_len = COINCIDENT_RTOL * fw.diameter
    short = np.nonzero(lengths <= eps_len)[0]
    if short.size:
        k = int(short[0])
        raise CoincidentPointsError(g.edges[k], float(lengths[k]))
    vectors = diff / lengths[:, None]
    return BearingVector(vectors=vectors, lengths=lengths)


@dataclass(frozen=True)
class RigidityMatrix:
    """Jacobian of the stacked bearing map with rank/null-space diagnostics."""

    matrix: np.ndarray       # (d*m, d*n)
    rank: int
    null_basis: np.ndarray   # (d*n, nullity), orthonormal columns

    def __post_init__(self):
        self.matrix.flags.writeable = False
        self.null_basis.flags.writeable = False


def rigidity_matrix(fw: Framework, rank_rtol: float = RANK_RTOL) -> RigidityMatrix:
    """Assemble the bearing rigidity matrix and its rank diagnostics.

    Per-edge row block for edge k = (i, j): (P_{g_k} / ||e_k||) times the
    edge difference operator, i.e. -B at column block i and +B at block j
    with B = P_{g_k} / ||e_k||. Equivalent to the Jacobian of
    :func:`bearing_vector` with respect to the flat configuration.
    """
    g = fw.graph
    d = fw.d
    bv = bearing_vector(fw)
    R = np.zeros((d * g.m, d * fw.n))
    for k, (i, j) in enumerate(g.edges):
        B = projector(bv.vectors[k]) / bv.lengths[k]
        rows = slice(d * k, d * k + d)
        R[rows, d * i : d * i + d] = -B
        R[rows, d * j : d * j + d] = B
    _, s, vh = np.linalg.svd(R, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.count_nonzero(s > rank_rtol * smax))
    null_basis = vh[rank:].T.copy()
    return RigidityMatrix(matrix=R, rank=rank, null_basis=null_basis)


def finite_difference_jacobian(fw: Framework, step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of the stacked bearing map.

    Independent of :func:`rigidity_matrix`: perturbs each coordinate of the
    flat configuration and differences :func:`bearing_vector`. Step defaults
    to 1e-6 * max(1, ||p||_inf).
    """
    p0 = fw.flat()
    if step is None:
        step = 1e-6 * max(1.0, float(np.abs(p0).max()))
    n, d = fw.n, fw.d
    J = np.zeros((d * fw.graph.m, d * n))
    for c in range(d * n):
        plus = p0.copy()
        minus = p0.copy()
        plus[c] += step
        minus[c] -= step
        g_plus = bearing_vector(Framework(fw.graph, plus.reshape(n, d))).stacked
        g_minus = bearing_vector(Framework(fw.graph, minus.reshape(n, d))).stacked
        J[:, c] = (g_plus - g_minus) / (2.0 * step)
    return J


def trivial_motion_basis(fw: Framework) -> np.ndarray:
    """Orthonormal basis of the always-present bearing-preserving motions.

    d columns for rigid translations plus one for uniform scaling about the
    centroid (the normalized centered configuration). Shape (d*n, d+1).

    Raises:
        DegenerateConfigurationError: all points coincide.
    """
    n, d = fw.n, fw.d
    T = np.zeros((d * n, d))
    for c in range(d):
        T[c::d, c] = 1.0 / np.sqrt(n)
    centered = fw.points - fw.points.mean(axis=0)
    r = centered.reshape(-1)
    norm = np.linalg.norm(r)
    if norm <= COINCIDENT_RTOL * max(1.0, float(np.abs(fw.points).max())):
        raise DegenerateConfigurationError("all points coincide; no scaling direction")
    return np.hstack([T, (r / norm)[:, None]])


@dataclass(frozen=True)
class RigidityReport:
    """Outcome of the infinitesimal bearing rigidity test."""

    rigid: bool
    rank: int
    required_rank: int
    nontrivial_motions: np.ndarray  # (d*n, k) orthonormal, empty when rigid

    def __bool__(self) -> bool:
        return self.rigid


def is_infinitesimally_bearing_rigid(
    fw: Framework, rank_rtol: float = RANK_RTOL
) -> RigidityReport:
    """Rank test: rigid iff rank of the rigidity matrix equals d*n - d - 1.

    When the test fails, the report carries an orthonormal basis of the
    bearing-preserving motions orthogonal to translations and scaling.
    """
    rm = rigidity_matrix(fw, rank_rtol=rank_rtol)
    required = fw.dim - fw.d - 1
    rigid = rm.rank == required
    if rigid:
        nontrivial = np.zeros((fw.dim, 0))
    else:
        triv = trivial_motion_basis(fw)
        resid = rm.null_basis - triv @ (triv.T @ rm.null_basis)
        q, s, _ = np.linalg.svd(resid, full_matrices=False)
        keep = int(np.count_nonzero(s > rank_rtol * max(s[0], 1.0))) if s.size else 0
        nontrivial = q[:, :keep].copy()
    return RigidityReport(
        rigid=rigid,
        rank=rm.rank,
        required_rank=required,
        nontrivial_motions=nontrivial,
    )


def edge_consensus_field(points: np.ndarray, graph: Graph, bearings: np.ndarray) -> np.ndarray:
    """Per-agent velocities -sum_j P_{g_ij}(p_i - p_j), as an (n, d) array.

    Shared evaluation core of the formation controllers and the localization
    estimator; dispatched to the active kernel backend.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    return _kernels.edge_field(pts, graph.edge_array(), np.ascontiguousarray(bearings))

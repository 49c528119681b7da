"""Matrix-weighted bearing Laplacians and their role partitions.

The bearing Laplacian of a graph with one unit vector per edge is the
d*n x d*n symmetric PSD matrix whose (i, j) off-diagonal block is minus the
orthogonal projector of the edge bearing and whose diagonal blocks make the
block rows sum to zero. It is the dynamics matrix shared by the formation
controllers and the localization estimator, and its null space encodes the
configurations realizing the bearings.

Partitioning by a "special" vertex set (leaders or anchors) produces the
block form used by the pinned protocols; the follower-follower block is
positive definite exactly when at least two vertices are pinned (given an
infinitesimally bearing rigid realization).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    AntisymmetryViolationError,
    DisconnectedGraphError,
    EmptyFollowerSetError,
    MissingBearingError,
    NonUnitBearingError,
    SingularFollowerBlockError,
    VertexOutOfRangeError,
)
from .graphs import Graph, incidence_matrix
from .rigidity import RANK_RTOL, BearingVector, projector

# lambda_min > PD_RTOL * lambda_max declares a symmetric block positive definite.
PD_RTOL = 1e-10

# Pinned-position feasibility: residual below FEAS_RTOL * ||L|| * ||p_pinned||.
FEAS_RTOL = 1e-8

# Unit-norm slack accepted for user-supplied bearings (renormalized after).
UNIT_TOL = 1e-9

ANTISYMMETRY_TOL = 1e-12

# Max bearing mismatch accepted when verifying a reconstructed configuration.
RECONSTRUCTION_TOL = 1e-6


@dataclass(frozen=True)
class BearingConstraints:
    """One unit vector per edge, stored in canonical order (tail -> head).

    The reverse-direction vector is implied by antisymmetry: g_ji = -g_ij.
    """

    graph: Graph
    vectors: np.ndarray  # (m, d)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        if v.ndim != 2 or v.shape[0] != self.graph.m:
            raise ValueError(
                f"expected ({self.graph.m}, d) bearing array, got shape {v.shape}"
            )
        norms = np.linalg.norm(v, axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > UNIT_TOL)[0]
        if bad.size:
            k = int(bad[0])
            raise NonUnitBearingError(
                f"bearing for edge {self.graph.edges[k]} has norm {norms[k]:.12g}"
            )
        v = v / norms[:, None]
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def get(self, i: int, j: int) -> np.ndarray:
        """Bearing from i toward j (sign-corrected against canonical storage)."""
        e = (i, j) if i < j else (j, i)
        k = self.graph.edge_index.get(e)
        if k is None:
            raise MissingBearingError((i, j))
        return self.vectors[k] if i < j else -self.vectors[k]

    @classmethod
    def from_pairs(cls, graph: Graph, pairs: dict, d: int) -> "BearingConstraints":
        """Build from a mapping (i, j) -> vector; either direction accepted.

        Raises MissingBearingError if an edge has no entry, and
        AntisymmetryViolationError if both directions are given but are not
        negatives of each other.
        """
        vecs = np.full((graph.m, d), np.nan)
        for (i, j), vec in pairs.items():
            e = (i, j) if i < j else (j, i)
            k = graph.edge_index.get(e)
            if k is None:
                raise MissingBearingError((i, j))
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (d,):
                raise ValueError(f"bearing for edge ({i}, {j}) has shape {v.shape}")
            canonical = v if i < j else -v
            if not np.isnan(vecs[k, 0]):
                if not np.allclose(vecs[k], canonical, atol=ANTISYMMETRY_TOL, rtol=0.0):
                    raise AntisymmetryViolationError(
                        f"edge {e}: supplied bearings for the two directions "
                        "are not negatives of each other"
                    )
                continue
            vecs[k] = canonical
        missing = np.nonzero(np.isnan(vecs[:, 0]))[0]
        if missing.size:
            raise MissingBearingError(graph.edges[int(missing[0])])
        return cls(graph=graph, vectors=vecs)

    @classmethod
    def from_framework(cls, fw) -> "BearingConstraints":
        """Read the constraints off an existing framework's bearings."""
        from .rigidity import bearing_vector

        return cls(graph=fw.graph, vectors=bearing_vector(fw).vectors.copy())


def as_edge_vectors(graph: Graph, bearings) -> np.ndarray:
    """Coerce constraints / measured bearings / raw array to (m, d) canonical."""
    if isinstance(bearings, BearingConstraints):
        if bearings.graph is not graph and bearings.graph != graph:
            raise ValueError("constraints were built for a different graph")
        return bearings.vectors
    if isinstance(bearings, BearingVector):
        return bearings.vectors
    arr = np.ascontiguousarray(np.asarray(bearings, dtype=np.float64))
    if arr.ndim != 2 or arr.shape[0] != graph.m:
        raise ValueError(f"expected ({graph.m}, d) bearing array, got {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > UNIT_TOL)[0]
    if bad.size:
        k = int(bad[0])
        raise NonUnitBearingError(
            f"bearing for edge {graph.edges[k]} has norm {norms[k]:.12g}"
        )
    return arr / norms[:, None]


def bearing_laplacian(graph: Graph, bearings) -> np.ndarray:
    """Blockwise assembly of the matrix-weighted bearing Laplacian.

    Off-diagonal block (i, j) is -P_{g_ij} for every edge; diagonal block i
    sums the projectors of the edges at i. ``bearings`` may be a
    BearingConstraints, a measured BearingVector, or an (m, d) array in
    canonical edge order.
    """
    if not graph.is_connected:
        raise DisconnectedGraphError("bearing Laplacian requires a connected graph")
    vecs = as_edge_vectors(graph, bearings)
    d = vecs.shape[1]
    dn = d * graph.n
    L = np.zeros((dn, dn))
    for k, (i, j) in enumerate(graph.edges):
        P = projector(vecs[k])
        bi = slice(d * i, d * i + d)
        bj = slice(d * j, d * j + d)
        L[bi, bj] -= P
        L[bj, bi] -= P
        L[bi, bi] += P
        L[bj, bj] += P
    return L


def bearing_laplacian_factored(graph: Graph, bearings) -> np.ndarray:
    """Same matrix via the incidence factorization Hbar^T diag(P_k) Hbar.

    Kept as an independent construction path; agrees with
    :func:`bearing_laplacian` to roundoff.
    """
    vecs = as_edge_vectors(graph, bearings)
    d = vecs.shape[1]
    H = incidence_matrix(graph)
    Hbar = np.kron(H, np.eye(d))
    blocks = [projector(vecs[k]) for k in range(graph.m)]
    D = np.zeros((d * graph.m, d * graph.m))
    for k, P in enumerate(blocks):
        D[d * k : d * k + d, d * k : d * k + d] = P
    return Hbar.T @ D @ Hbar


@dataclass(frozen=True)
class RolePartition:
    """Laplacian split by a pinned ("special") vertex set.

    Blocks refer to the permuted ordering [special, followers], both sorted
    ascending. ``coords_special``/``coords_followers`` index the flat
    configuration vector.
    """

    matrix: np.ndarray               # full L, original ordering
    d: int
    special: tuple[int, ...]
    followers: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // self.d

    @cached_property
    def coords_special(self) -> np.ndarray:
        return _vertex_coords(self.special, self.d)

    @cached_property
    def coords_followers(self) -> np.ndarray:
        return _vertex_coords(self.followers, self.d)

    @cached_property
    def block_ss(self) -> np.ndarray:
        return self.matrix[np.ix_(self.coords_special, self.coords_special)]

    @cached_property
    def block_sf(self) -> np.ndarray:
        return self.matrix[np.ix_(self.coords_special, self.coords_followers)]

    @cached_property
    def block_fs(self) -> np.ndarray:
        return self.matrix[np.ix_(self.coords_followers, self.coords_special)]

    @cached_property
    def block_ff(self) -> np.ndarray:
        return self.matrix[np.ix_(self.coords_followers, self.coords_followers)]

    def recompose(self) -> np.ndarray:
        """Reassemble the full Laplacian from the four blocks (exactly)."""
        dn = self.matrix.shape[0]
        out = np.zeros((dn, dn))
        out[np.ix_(self.coords_special, self.coords_special)] = self.block_ss
        out[np.ix_(self.coords_special, self.coords_followers)] = self.block_sf
        out[np.ix_(self.coords_followers, self.coords_special)] = self.block_fs
        out[np.ix_(self.coords_followers, self.coords_followers)] = self.block_ff
        return out

    def split_state(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return x[self.coords_special], x[self.coords_followers]

    def assemble_state(self, x_special: np.ndarray, x_followers: np.ndarray) -> np.ndarray:
        out = np.zeros(self.matrix.shape[0])
        out[self.coords_special] = x_special
        out[self.coords_followers] = x_followers
        return out


def _vertex_coords(vertices, d: int) -> np.ndarray:
    if len(vertices) == 0:
        return np.zeros(0, dtype=np.intp)
    v = np.asarray(vertices, dtype=np.intp)
    return (v[:, None] * d + np.arange(d)[None, :]).reshape(-1)


def partition(L: np.ndarray, special, d: int) -> RolePartition:
    """Split L by the pinned vertex set; followers are the complement."""
    dn = L.shape[0]
    if dn % d != 0:
        raise ValueError(f"matrix size {dn} not a multiple of d={d}")
    n = dn // d
    special = tuple(sorted(set(int(v) for v in special)))
    for v in special:
        if not 0 <= v < n:
            raise VertexOutOfRangeError(f"vertex {v} not in 0..{n - 1}")
    followers = tuple(v for v in range(n) if v not in set(special))
    return RolePartition(matrix=L, d=d, special=special, followers=followers)


def is_follower_block_positive_definite(part: RolePartition) -> bool:
    """PD test on the follower-follower block: lambda_min > PD_RTOL * lambda_max."""
    ff = part.block_ff
    if ff.shape[0] == 0:
        raise EmptyFollowerSetError("no followers to test")
    eig = np.linalg.eigvalsh(ff)
    return bool(eig[0] > PD_RTOL * max(eig[-1], 0.0))


def pinned_equilibrium(part: RolePartition, x_special: np.ndarray) -> np.ndarray:
    """Solve the pinned linear balance: x_f = -(L_ff)^{-1} L_fs x_s.

    Raises SingularFollowerBlockError when the follower block is not
    positive definite (fewer than two pinned vertices, in the rigid case).
    """
    x_special = np.asarray(x_special, dtype=np.float64).reshape(-1)
    if x_special.shape[0] != len(part.special) * part.d:
        raise ValueError(
            f"pinned state has {x_special.shape[0]} coordinates, expected "
            f"{len(part.special) * part.d}"
        )
    if not is_follower_block_positive_definite(part):
        raise SingularFollowerBlockError(
            f"follower block is singular with {len(part.special)} pinned "
            "vertices; at least 2 are required"
        )
    rhs = -(part.block_fs @ x_special)
    factor = cho_factor(part.block_ff)
    return cho_solve(factor, rhs)


@dataclass(frozen=True)
class LeaderFeasibility:
    """Necessary-condition check on pinned positions via the Schur complement."""

    residual: float
    tolerance: float

    @property
    def feasible(self) -> bool:
        return self.residual < self.tolerance


def check_leader_feasibility(part: RolePartition, p_special: np.ndarray) -> LeaderFeasibility:
    """Residual of (L_ss - L_sf L_ff^{-1} L_fs) p_s against zero.

    A pinned position extending to a configuration realizing all bearings
    makes the residual vanish; the converse does not hold in general.
    """
    p_special = np.asarray(p_special, dtype=np.float64).reshape(-1)
    if not is_follower_block_positive_definite(part):
        raise SingularFollowerBlockError(
            "feasibility test needs a positive definite follower block"
        )
    factor = cho_factor(part.block_ff)
    inner = cho_solve(factor, part.block_fs @ p_special)
    resid = part.block_ss @ p_special - part.block_sf @ inner
    Lnorm = spectral_norm(part.matrix)
    tol = FEAS_RTOL * Lnorm * max(np.linalg.norm(p_special), 1e-300)
    return LeaderFeasibility(residual=float(np.linalg.norm(resid)), tolerance=float(tol))


def spectral_norm(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a symmetric matrix."""
    eig = np.linalg.eigvalsh(M)
    return float(max(abs(eig[0]), abs(eig[-1])))


def smallest_nonzero_eigenvalue(M: np.ndarray, rtol: float = RANK_RTOL) -> float:
    """Smallest eigenvalue above the relative zero cutoff (symmetric PSD M)."""
    eig = np.linalg.eigvalsh(M)
    cutoff = rtol * max(eig[-1], 0.0)
    nonzero = eig[eig > cutoff]
    if nonzero.size == 0:
        raise ValueError("matrix has no nonzero eigenvalues above the cutoff")
    return float(nonzero[0])


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of the constructive bearing-set feasibility test."""

    feasible: bool
    representative: np.ndarray | None  # (n, d) centered, unit scale
    null_dimension: int
    unique_shape: bool
    reason: str

    def __bool__(self) -> bool:
        return self.feasible


def check_constraint_feasibility(
    graph: Graph, constraints, d: int, rank_rtol: float = RANK_RTOL
) -> FeasibilityReport:
    """Decide whether any configuration realizes the bearing set.

    Constructive: any realizing configuration lies in the null space of the
    bearing Laplacian, so the candidate shapes are the null directions
    orthogonal to translations. A candidate passes if every edge difference
    is a nonzero multiple of its bearing with one global sign; the
    representative is normalized to unit scale and oriented so its bearings
    match the constraints with a plus sign.
    """
    if not graph.is_connected:
        raise DisconnectedGraphError("feasibility test requires a connected graph")
    vecs = as_edge_vectors(graph, constraints)
    if vecs.shape[1] != d:
        raise ValueError(f"bearings have dimension {vecs.shape[1]}, expected {d}")
    L = bearing_laplacian(graph, vecs)
    eig, basis = np.linalg.eigh(L)
    cutoff = rank_rtol * max(eig[-1], 0.0)
    null = basis[:, eig <= cutoff]
    null_dim = null.shape[1]

    # Remove the translation directions; what is left are candidate shapes.
    n = graph.n
    T = np.zeros((d * n, d))
    for c in range(d):
        T[c::d, c] = 1.0 / np.sqrt(n)
    resid = null - T @ (T.T @ null)
    q, s, _ = np.linalg.svd(resid, full_matrices=False)
    keep = int(np.count_nonzero(s > rank_rtol * max(s[0], 1.0))) if s.size else 0
    shapes = q[:, :keep]

    if keep == 0:
        return FeasibilityReport(
            feasible=False,
            representative=None,
            null_dimension=null_dim,
            unique_shape=False,
            reason="null space contains only translations",
        )

    candidates = [shapes[:, k] for k in range(keep)]
    if keep > 1:
        candidates.append(shapes.sum(axis=1) / np.sqrt(keep))
    for cand in candidates:
        ok, oriented = _sign_consistent(graph, vecs, cand.reshape(n, d))
        if ok:
            return FeasibilityReport(
                feasible=True,
                representative=oriented,
                null_dimension=null_dim,
                unique_shape=(null_dim == d + 1),
                reason="",
            )
    return FeasibilityReport(
        feasible=False,
        representative=None,
        null_dimension=null_dim,
        unique_shape=False,
        reason=(
            "no null-space direction reconstructs the bearings with a "
            "consistent sign"
        ),
    )


def _sign_consistent(graph: Graph, vecs: np.ndarray, pts: np.ndarray):
    """Check pts realizes every bearing up to one global sign; orient if so."""
    edges = graph.edge_array()
    diff = pts[edges[:, 1]] - pts[edges[:, 0]]
    lengths = np.linalg.norm(diff, axis=1)
    scale = float(np.abs(pts).max())
    if np.any(lengths <= 1e-9 * max(scale, 1e-300)):
        return False, None
    unit = diff / lengths[:, None]
    dots = np.sum(unit * vecs, axis=1)
    if np.all(dots > 0):
        sign = 1.0
    elif np.all(dots < 0):
        sign = -1.0
    else:
        return False, None
    if np.max(np.linalg.norm(sign * unit - vecs, axis=1)) > RECONSTRUCTION_TOL:
        return False, None
    oriented = sign * pts
    oriented = oriented - oriented.mean(axis=0)
    oriented /= np.linalg.norm(oriented)
    return True, oriented

"""Bearing-constrained formation controllers and their closed-form limits.

Two single-integrator protocols over a connected graph with per-edge bearing
constraints:

* leaderless: every agent descends -sum_j P_{g*_ij}(p_i - p_j); the flow is
  linear, conserves the centroid, and converges to the orthogonal projection
  of the initial state onto the span of translations and the target shape;
* leader-follower: a pinned subset stays fixed and, with at least two
  leaders at feasible positions, the followers converge to the unique
  equilibrium of the pinned linear system, which realizes the constraints.

Fields take and return flat length-d*n state vectors (agent-major), matching
the integrator; geometry helpers work on (n, d) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTargetError, ScenarioValidationError
from .graphs import Graph
from .laplacian import (
    BearingConstraints,
    LeaderFeasibility,
    RolePartition,
    as_edge_vectors,
    bearing_laplacian,
    check_constraint_feasibility,
    check_leader_feasibility,
    partition,
    pinned_equilibrium,
)
from .rigidity import bearing_vector, edge_consensus_field, Framework


def leaderless_field(state: np.ndarray, graph: Graph, constraints) -> np.ndarray:
    """Blockwise controller velocities; equals -L(graph, g*) @ state."""
    x = np.asarray(state, dtype=np.float64).reshape(-1)
    d = as_edge_vectors(graph, constraints).shape[1]
    pts = x.reshape(graph.n, d)
    return edge_consensus_field(pts, graph, as_edge_vectors(graph, constraints)).reshape(-1)


def leader_follower_field(state: np.ndarray, graph: Graph, constraints, leaders) -> np.ndarray:
    """Pinned variant: leader velocities forced to zero, followers as leaderless."""
    u = leaderless_field(state, graph, constraints)
    d = as_edge_vectors(graph, constraints).shape[1]
    for v in leaders:
        u[d * v : d * v + d] = 0.0
    return u


def role_mask(n: int, d: int, pinned) -> np.ndarray:
    """Flat 0/1 mask, zero on the coordinates of pinned vertices."""
    mask = np.ones(d * n)
    for v in pinned:
        mask[d * v : d * v + d] = 0.0
    return mask


@dataclass(frozen=True)
class FormationObservables:
    """Centroid, centered configuration, and scale of a configuration."""

    centroid: np.ndarray       # (d,)
    centered: np.ndarray       # (n, d)
    scale: float
    alignment: float | None    # <normalized target shape, flat state>, if given


def observables(points: np.ndarray, r_star: np.ndarray | None = None) -> FormationObservables:
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = float(np.linalg.norm(centered))
    alignment = None
    if r_star is not None:
        r = np.asarray(r_star, dtype=np.float64).reshape(-1)
        alignment = float(r @ pts.reshape(-1) / np.linalg.norm(r))
    return FormationObservables(
        centroid=centroid, centered=centered, scale=scale, alignment=alignment
    )


@dataclass(frozen=True)
class BearingErrors:
    per_edge: np.ndarray  # (m,) ||g_ij - g*_ij||
    max_error: float


def bearing_errors(points: np.ndarray, graph: Graph, constraints) -> BearingErrors:
    """Per-edge distance between achieved and target bearings (in [0, 2])."""
    fw = Framework(graph, np.asarray(points, dtype=np.float64))
    achieved = bearing_vector(fw).vectors
    target = as_edge_vectors(graph, constraints)
    per_edge = np.linalg.norm(achieved - target, axis=1)
    return BearingErrors(per_edge=per_edge, max_error=float(per_edge.max()))


@dataclass(frozen=True)
class LeaderlessEquilibrium:
    """Closed-form limit of the leaderless flow from a given start."""

    state: np.ndarray        # (d*n,)
    points: np.ndarray       # (n, d) same limit
    centroid: np.ndarray     # (d,) = initial centroid
    scale: float             # |<r_hat, p(0)>|
    alignment: float         # signed <r_hat, p(0)>
    regime: str              # "target" | "reflected" | "rendezvous"


def predict_leaderless_equilibrium(p0: np.ndarray, r_star: np.ndarray) -> LeaderlessEquilibrium:
    """Orthogonal projection of p0 onto span{translations, target shape}.

    p_inf = 1 (x) c(0) + <r_hat, p0> r_hat with r_hat the normalized centered
    target; both arguments are (n, d) configurations. Positive alignment
    converges to the target bearings, negative to their point reflection,
    zero to rendezvous at the initial centroid.
    """
    r_pts = np.asarray(r_star, dtype=np.float64)
    p_pts = np.asarray(p0, dtype=np.float64)
    if r_pts.ndim != 2 or p_pts.shape != r_pts.shape:
        raise ValueError(
            f"expected matching (n, d) arrays, got {p_pts.shape} and {r_pts.shape}"
        )
    r = r_pts.reshape(-1)
    rnorm = float(np.linalg.norm(r))
    if rnorm == 0.0:
        raise DegenerateTargetError("target shape has zero scale")
    n, d = p_pts.shape
    x0 = p_pts.reshape(-1)
    r_hat = r / rnorm
    centroid = p_pts.mean(axis=0)
    alignment = float(r_hat @ x0)
    state = np.tile(centroid, n) + alignment * r_hat
    tol = 1e-12 * max(1.0, float(np.linalg.norm(x0)))
    if abs(alignment) <= tol:
        regime = "rendezvous"
    elif alignment > 0:
        regime = "target"
    else:
        regime = "reflected"
    return LeaderlessEquilibrium(
        state=state,
        points=state.reshape(n, d),
        centroid=centroid,
        scale=abs(alignment),
        alignment=alignment,
        regime=regime,
    )


@dataclass(frozen=True)
class LeaderFollowerEquilibrium:
    """Closed-form follower limit -L_ff^{-1} L_fl p_l, with feasibility info."""

    follower_state: np.ndarray   # (d*n_f,)
    full_state: np.ndarray       # (d*n,) leaders at p_l
    leader_check: LeaderFeasibility

    @property
    def leaders_feasible(self) -> bool:
        return self.leader_check.feasible


def predict_leader_follower_equilibrium(
    part: RolePartition, p_leaders: np.ndarray
) -> LeaderFollowerEquilibrium:
    """Solve the pinned equilibrium; infeasible leaders are flagged, not fatal."""
    p_leaders = np.asarray(p_leaders, dtype=np.float64).reshape(-1)
    follower = pinned_equilibrium(part, p_leaders)
    check = check_leader_feasibility(part, p_leaders)
    return LeaderFollowerEquilibrium(
        follower_state=follower,
        full_state=part.assemble_state(p_leaders, follower),
        leader_check=check,
    )


@dataclass(frozen=True)
class FormationProblem:
    """Validated formation task: graph, constraints, leaders, initial state."""

    graph: Graph
    constraints: BearingConstraints
    initial_points: np.ndarray            # (n, d)
    leaders: tuple[int, ...] = ()
    leader_points: np.ndarray | None = None  # (n_l, d)
    r_star: np.ndarray | None = None         # (n, d) unit-scale target shape

    @property
    def d(self) -> int:
        return self.constraints.d

    def laplacian(self) -> np.ndarray:
        return bearing_laplacian(self.graph, self.constraints)

    def partition(self) -> RolePartition:
        return partition(self.laplacian(), self.leaders, self.d)

    @classmethod
    def create(
        cls,
        graph: Graph,
        constraints: BearingConstraints,
        initial_points: np.ndarray,
        leaders=(),
        leader_points: np.ndarray | None = None,
    ) -> "FormationProblem":
        """Validate feasibility and leader placement, recovering the target shape."""
        report = check_constraint_feasibility(graph, constraints, constraints.d)
        if not report.feasible:
            raise ScenarioValidationError(
                f"bearing constraints are infeasible: {report.reason}"
            )
        leaders = tuple(sorted(set(int(v) for v in leaders)))
        initial = np.asarray(initial_points, dtype=np.float64)
        if leaders:
            if leader_points is None:
                raise ScenarioValidationError("leaders declared but no positions given")
            leader_points = np.asarray(leader_points, dtype=np.float64)
            if leader_points.shape != (len(leaders), constraints.d):
                raise ScenarioValidationError(
                    f"leader positions have shape {leader_points.shape}, expected "
                    f"({len(leaders)}, {constraints.d})"
                )
            initial = initial.copy()
            initial[list(leaders)] = leader_points
        return cls(
            graph=graph,
            constraints=constraints,
            initial_points=initial,
            leaders=leaders,
            leader_points=leader_points,
            r_star=report.representative,
        )

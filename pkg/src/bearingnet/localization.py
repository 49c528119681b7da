"""Anchor-based network localization from bearing measurements.

Each agent keeps an estimate of its own fixed position; anchors know theirs.
The estimator moves every follower estimate by
-sum_j P_{g_ij}(phat_i - phat_j) with the *measured* bearings g_ij — the
same formula as the pinned formation controller with measurements in place
of constraints and anchors in place of leaders. With an infinitesimally
bearing rigid true network and at least two anchors, the follower estimates
converge to the unique solution -L_ff^{-1} L_fa p_a, which is the ground
truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeMismatchError, TooFewAnchorsError
from .formation import leader_follower_field
from .graphs import Graph
from .laplacian import RolePartition, bearing_laplacian, partition, pinned_equilibrium
from .rigidity import BearingVector, Framework, bearing_vector, is_infinitesimally_bearing_rigid


def measure_bearings(true_fw: Framework) -> BearingVector:
    """Noise-free bearing measurements: exactly the true framework's bearings."""
    return bearing_vector(true_fw)


def estimator_field(estimates: np.ndarray, graph: Graph, measurements, anchors) -> np.ndarray:
    """Estimator update direction; identical formula to the pinned controller."""
    return leader_follower_field(estimates, graph, measurements, anchors)


@dataclass(frozen=True)
class LocalizationSolution:
    follower_state: np.ndarray  # (d*n_f,)
    full_state: np.ndarray      # (d*n,) anchors at p_a


def localize_closed_form(part: RolePartition, p_anchors: np.ndarray) -> LocalizationSolution:
    """Solve the pinned balance for the follower positions.

    Requires at least two anchors; the partition must come from the
    Laplacian of the measured bearings.
    """
    if len(part.special) < 2:
        raise TooFewAnchorsError(
            f"{len(part.special)} anchor(s); the network is localizable only "
            "with at least 2"
        )
    p_anchors = np.asarray(p_anchors, dtype=np.float64).reshape(-1)
    follower = pinned_equilibrium(part, p_anchors)
    return LocalizationSolution(
        follower_state=follower,
        full_state=part.assemble_state(p_anchors, follower),
    )


@dataclass(frozen=True)
class LocalizationErrors:
    per_agent: np.ndarray  # (n,)
    max_error: float


def localization_errors(estimates: np.ndarray, true_points: np.ndarray) -> LocalizationErrors:
    """Euclidean per-agent estimation errors."""
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(true_points, dtype=np.float64)
    if est.shape != tru.shape:
        raise SizeMismatchError(f"estimate shape {est.shape} vs truth {tru.shape}")
    per_agent = np.linalg.norm(est - tru, axis=1)
    return LocalizationErrors(per_agent=per_agent, max_error=float(per_agent.max()))


@dataclass(frozen=True)
class LocalizationProblem:
    """Ground truth, anchors, measurements, and the initial estimate.

    The estimator only ever sees ``measurements``, the anchor positions, and
    the evolving estimates; the true framework stays on the reporting side.
    """

    framework: Framework                 # ground truth
    anchors: tuple[int, ...]
    initial_estimates: np.ndarray        # (n, d), anchor rows pinned to truth
    measurements: BearingVector

    @property
    def graph(self) -> Graph:
        return self.framework.graph

    @property
    def d(self) -> int:
        return self.framework.d

    @property
    def anchor_positions(self) -> np.ndarray:
        return self.framework.points[list(self.anchors)]

    def laplacian(self) -> np.ndarray:
        return bearing_laplacian(self.graph, self.measurements)

    def partition(self) -> RolePartition:
        return partition(self.laplacian(), self.anchors, self.d)

    @classmethod
    def create(
        cls,
        true_fw: Framework,
        anchors,
        initial_estimates: np.ndarray,
        measurements: BearingVector | None = None,
        require_rigid: bool = True,
    ) -> "LocalizationProblem":
        anchors = tuple(sorted(set(int(v) for v in anchors)))
        if len(anchors) == 0:
            raise TooFewAnchorsError("the network cannot be localized without anchors")
        if require_rigid and not is_infinitesimally_bearing_rigid(true_fw):
            raise ValueError("true network is not infinitesimally bearing rigid")
        if measurements is None:
            measurements = measure_bearings(true_fw)
        init = np.asarray(initial_estimates, dtype=np.float64).copy()
        if init.shape != true_fw.points.shape:
            raise SizeMismatchError(
                f"initial estimates shape {init.shape} vs truth {true_fw.points.shape}"
            )
        init[list(anchors)] = true_fw.points[list(anchors)]
        return cls(
            framework=true_fw,
            anchors=anchors,
            initial_estimates=init,
            measurements=measurements,
        )

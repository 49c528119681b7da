"""Scenario files, built-in generators, and the run/report pipeline.

A scenario is a JSON document (full round-trip float precision) describing
one of three task kinds:

* ``formation-leaderless``    — per-edge target bearings, free agents;
* ``formation-leader-follower`` — target bearings plus pinned leaders;
* ``localization``            — a true configuration, bearing measurements
                                derived from it, and pinned anchors.

Random quantities are materialized from the recorded seed at load time, so
loading the same file twice yields identical runs. Seed streams: [seed, 0]
drives graph/point generation, [seed, 1] the initial state, [seed, 2] the
optional measurement-noise hook.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BearingNetError,
    GenerationFailureError,
    ScenarioParseError,
    ScenarioValidationError,
)
from .formation import (
    FormationProblem,
    bearing_errors,
    observables,
    predict_leaderless_equilibrium,
    predict_leader_follower_equilibrium,
    role_mask,
)
from .graphs import Graph, build_graph
from .laplacian import (
    BearingConstraints,
    check_leader_feasibility,
    is_follower_block_positive_definite,
    partition,
    smallest_nonzero_eigenvalue,
)
from .localization import (
    LocalizationProblem,
    localization_errors,
    localize_closed_form,
    measure_bearings,
)
from .rigidity import (
    BearingVector,
    Framework,
    is_infinitesimally_bearing_rigid,
)
from .simulate import (
    IntegratorConfig,
    MaskedLinearField,
    Trajectory,
    auto_dt,
    integrate,
    stability_check,
)

KINDS = ("formation-leaderless", "formation-leader-follower", "localization")

DEFAULT_ASSERTIONS = {
    "formation-leaderless": {
        "terminal_tol": 1e-6,
        "centroid_drift_rtol": 1e-10,
        "scale_slack": 1e-9,
        "bearing_tol": 1e-6,
    },
    "formation-leader-follower": {
        "terminal_tol": 1e-6,
        "bearing_tol": 1e-6,
    },
    "localization": {
        "closed_form_rtol": 1e-8,
        "sim_error_rtol": 1e-6,
    },
}


@dataclass
class Scenario:
    """JSON-native scenario description (numpy enters only at materialize)."""

    kind: str
    dimension: int
    num_agents: int
    edges: list[list[int]]
    bearings: list[dict] | None = None       # [{"edge": [i, j], "vector": [...]}]
    true_points: list[list[float]] | None = None
    leaders: list[int] = field(default_factory=list)
    leader_points: list[list[float]] | None = None
    anchors: list[int] = field(default_factory=list)
    initial_points: list[list[float]] | None = None
    seed: int = 0
    initial_box: list[float] | None = None   # [low, high] uniform per coordinate
    measurement_noise: float = 0.0
    integrator: dict = field(default_factory=dict)
    assertions: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


_SCENARIO_FIELDS = set(Scenario.__dataclass_fields__)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=2) + "\n")


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioParseError(f"{path}: top level must be an object")
    unknown = set(raw) - _SCENARIO_FIELDS
    if unknown:
        raise ScenarioValidationError(f"unknown scenario fields: {sorted(unknown)}")
    missing = {"kind", "dimension", "num_agents", "edges"} - set(raw)
    if missing:
        raise ScenarioValidationError(f"missing required fields: {sorted(missing)}")
    sc = Scenario(**raw)
    validate_scenario(sc)
    return sc


def validate_scenario(sc: Scenario) -> None:
    """Per-kind structural validation; raises ScenarioValidationError."""
    if sc.kind not in KINDS:
        raise ScenarioValidationError(f"kind: unknown kind {sc.kind!r}")
    if sc.dimension < 2:
        raise ScenarioValidationError(f"dimension: must be >= 2, got {sc.dimension}")
    if sc.num_agents < 2:
        raise ScenarioValidationError(f"num_agents: must be >= 2, got {sc.num_agents}")
    try:
        graph = build_graph(sc.num_agents, sc.edges)
    except BearingNetError as exc:
        raise ScenarioValidationError(f"edges: {exc}") from exc
    if not graph.is_connected:
        raise ScenarioValidationError("edges: the interaction graph must be connected")

    try:
        _integrator_config(sc)
    except ValueError as exc:
        raise ScenarioValidationError(f"integrator: {exc}") from exc

    if sc.initial_points is not None:
        _check_points(sc.initial_points, sc.num_agents, sc.dimension, "initial_points")
    if sc.initial_box is not None:
        if len(sc.initial_box) != 2 or not sc.initial_box[0] < sc.initial_box[1]:
            raise ScenarioValidationError(
                f"initial_box: expected [low, high] with low < high, got {sc.initial_box}"
            )

    if sc.kind.startswith("formation"):
        if sc.bearings is None:
            raise ScenarioValidationError("bearings: required for formation scenarios")
        try:
            _constraints_from_records(graph, sc.bearings, sc.dimension)
        except BearingNetError as exc:
            raise ScenarioValidationError(f"bearings: {exc}") from exc
        if sc.kind == "formation-leader-follower":
            if not sc.leaders:
                raise ScenarioValidationError(
                    "leaders: required for leader-follower scenarios"
                )
            _check_vertices(sc.leaders, sc.num_agents, "leaders")
            if sc.leader_points is None:
                raise ScenarioValidationError(
                    "leader_points: required when leaders are declared"
                )
            _check_points(sc.leader_points, len(sc.leaders), sc.dimension, "leader_points")
            if len(sc.leaders) == 1:
                warnings.warn(
                    "a single leader leaves the follower block singular; the "
                    "equilibrium predictor will refuse this scenario",
                    stacklevel=2,
                )
        elif sc.leaders:
            raise ScenarioValidationError("leaders: not allowed in a leaderless scenario")
    else:  # localization
        if sc.true_points is None:
            raise ScenarioValidationError("true_points: required for localization")
        _check_points(sc.true_points, sc.num_agents, sc.dimension, "true_points")
        if len(sc.anchors) == 0:
            raise ScenarioValidationError(
                "anchors: the network cannot be localized without anchors"
            )
        _check_vertices(sc.anchors, sc.num_agents, "anchors")
        if len(sc.anchors) < 2:
            warnings.warn(
                "fewer than 2 anchors: the follower block is singular and the "
                "closed-form solver will refuse this scenario",
                stacklevel=2,
            )
        if sc.measurement_noise < 0:
            raise ScenarioValidationError("measurement_noise: must be >= 0")


def _check_points(rows, n, d, name):
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape != (n, d):
        raise ScenarioValidationError(f"{name}: expected shape ({n}, {d}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioValidationError(f"{name}: contains non-finite values")


def _check_vertices(vals, n, name):
    seen = set()
    for v in vals:
        if not 0 <= int(v) < n:
            raise ScenarioValidationError(f"{name}: vertex {v} not in 0..{n - 1}")
        if int(v) in seen:
            raise ScenarioValidationError(f"{name}: vertex {v} listed twice")
        seen.add(int(v))


def _constraints_from_records(graph: Graph, records, d: int) -> BearingConstraints:
    pairs = {}
    for rec in records:
        try:
            i, j = int(rec["edge"][0]), int(rec["edge"][1])
            vec = rec["vector"]
        except (KeyError, TypeError, IndexError) as exc:
            raise ScenarioValidationError(
                f"bearings: each record needs 'edge' and 'vector', got {rec!r}"
            ) from exc
        if (i, j) in pairs:
            raise ScenarioValidationError(f"bearings: duplicate record for edge ({i}, {j})")
        pairs[(i, j)] = vec
    return BearingConstraints.from_pairs(graph, pairs, d)


def _integrator_config(sc: Scenario) -> IntegratorConfig:
    cfg = dict(sc.integrator)
    unknown = set(cfg) - {"method", "dt", "max_time", "convergence_tol", "record_stride"}
    if unknown:
        raise ValueError(f"unknown integrator fields: {sorted(unknown)}")
    return IntegratorConfig(**cfg)


# ---------------------------------------------------------------------------
# materialization
# ---------------------------------------------------------------------------

@dataclass
class MaterializedScenario:
    """Numpy-level objects ready to simulate."""

    scenario: Scenario
    graph: Graph
    config: IntegratorConfig
    flow: MaskedLinearField
    initial_state: np.ndarray              # flat (d*n,)
    formation: FormationProblem | None = None
    localization: LocalizationProblem | None = None

    @property
    def d(self) -> int:
        return self.scenario.dimension


def materialize(sc: Scenario) -> MaterializedScenario:
    validate_scenario(sc)
    graph = build_graph(sc.num_agents, sc.edges)
    cfg = _integrator_config(sc)
    n, d = sc.num_agents, sc.dimension

    if sc.kind.startswith("formation"):
        constraints = _constraints_from_records(graph, sc.bearings, d)
        initial = _initial_points(sc, reference=None)
        leader_points = (
            np.asarray(sc.leader_points, dtype=np.float64) if sc.leaders else None
        )
        problem = FormationProblem.create(
            graph, constraints, initial, leaders=sc.leaders, leader_points=leader_points
        )
        flow = MaskedLinearField(
            matrix=problem.laplacian(), mask=role_mask(n, d, problem.leaders)
        )
        return MaterializedScenario(
            scenario=sc,
            graph=graph,
            config=cfg,
            flow=flow,
            initial_state=problem.initial_points.reshape(-1).copy(),
            formation=problem,
        )

    truth = Framework(graph, np.asarray(sc.true_points, dtype=np.float64))
    measurements = measure_bearings(truth)
    if sc.measurement_noise > 0:
        rng = np.random.default_rng([sc.seed, 2])
        noisy = measurements.vectors + sc.measurement_noise * rng.standard_normal(
            measurements.vectors.shape
        )
        noisy /= np.linalg.norm(noisy, axis=1, keepdims=True)
        measurements = BearingVector(vectors=noisy, lengths=measurements.lengths.copy())
    initial = _initial_points(sc, reference=truth.points)
    problem = LocalizationProblem.create(
        truth, sc.anchors, initial, measurements=measurements, require_rigid=False
    )
    flow = MaskedLinearField(
        matrix=problem.laplacian(), mask=role_mask(n, d, problem.anchors)
    )
    return MaterializedScenario(
        scenario=sc,
        graph=graph,
        config=cfg,
        flow=flow,
        initial_state=problem.initial_estimates.reshape(-1).copy(),
        localization=problem,
    )


def _initial_points(sc: Scenario, reference: np.ndarray | None) -> np.ndarray:
    if sc.initial_points is not None:
        return np.asarray(sc.initial_points, dtype=np.float64)
    if sc.initial_box is not None:
        low, high = sc.initial_box
    elif reference is not None:
        span = float(reference.max() - reference.min())
        low = float(reference.min()) - 0.25 * max(span, 1.0)
        high = float(reference.max()) + 0.25 * max(span, 1.0)
    else:
        low, high = 0.0, 1.0
    rng = np.random.default_rng([sc.seed, 1])
    return rng.uniform(low, high, size=(sc.num_agents, sc.dimension))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_cube_scenario(leaders: int = 0, seed: int = 1) -> Scenario:
    """3-D cube target with 8 agents; diagonals added until the shape is rigid.

    The 12 geometric cube edges leave nontrivial flexes, so face/space
    diagonals are appended in a fixed candidate order while they increase the
    rigidity-matrix rank, stopping at the full rank 3n - 4 = 20.
    """
    if leaders not in (0, 2):
        raise ValueError("cube scenario supports 0 or 2 leaders")
    corners = np.array(
        [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)],
        dtype=np.float64,
    )
    edges = [
        (i, j)
        for i in range(8)
        for j in range(i + 1, 8)
        if bin(i ^ j).count("1") == 1
    ]
    candidates = sorted(
        (
            (i, j)
            for i in range(8)
            for j in range(i + 1, 8)
            if bin(i ^ j).count("1") > 1
        ),
        key=lambda e: (bin(e[0] ^ e[1]).count("1"), e),
    )
    required = 3 * 8 - 4

    def rank_of(edge_list):
        fw = Framework(build_graph(8, edge_list), corners)
        return is_infinitesimally_bearing_rigid(fw).rank

    rank = rank_of(edges)
    for cand in candidates:
        if rank >= required:
            break
        trial = rank_of(edges + [cand])
        if trial > rank:
            edges.append(cand)
            rank = trial
    if rank != required:
        raise GenerationFailureError(f"cube construction stalled at rank {rank}")

    graph = build_graph(8, edges)
    target = Framework(graph, corners)
    bearings = BearingConstraints.from_framework(target)
    records = [
        {"edge": [int(i), int(j)], "vector": bearings.vectors[k].tolist()}
        for k, (i, j) in enumerate(graph.edges)
    ]
    sc = Scenario(
        kind="formation-leader-follower" if leaders == 2 else "formation-leaderless",
        dimension=3,
        num_agents=8,
        edges=[list(e) for e in graph.edges],
        bearings=records,
        leaders=[0, 1] if leaders == 2 else [],
        leader_points=corners[:2].tolist() if leaders == 2 else None,
        seed=seed,
        initial_box=[-0.5, 1.5],
        integrator={"method": "rk4", "dt": None, "max_time": 2000.0,
                    "convergence_tol": 1e-10, "record_stride": 10},
        metadata={"generator": "cube", "achieved_rank": int(rank),
                  "edge_count": graph.m},
    )
    validate_scenario(sc)
    return sc


def generate_localization_scenario(
    num_agents: int = 50,
    dimension: int = 3,
    num_anchors: int = 4,
    target_edges: int | None = None,
    seed: int = 1,
) -> Scenario:
    """Random rigid network in the unit box with the first vertices as anchors.

    Candidate edges are taken shortest-first (a geometric, seed-deterministic
    order) until the graph is connected and infinitesimally bearing rigid;
    ``target_edges`` keeps densifying past that point when given.
    """
    if num_agents < 2:
        raise ValueError(f"need at least 2 agents, got {num_agents}")
    if num_anchors < 2:
        raise ValueError(f"need at least 2 anchors, got {num_anchors}")
    if num_anchors > num_agents:
        raise ValueError("more anchors than agents")
    rng = np.random.default_rng([seed, 0])
    points = rng.random((num_agents, dimension))

    pairs = [(i, j) for i in range(num_agents) for j in range(i + 1, num_agents)]
    pairs.sort(key=lambda e: (np.linalg.norm(points[e[0]] - points[e[1]]), e))

    parent = list(range(num_agents))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    required = dimension * num_agents - dimension - 1
    edges: list[tuple[int, int]] = []
    components = num_agents
    rank = -1
    for i, j in pairs:
        edges.append((i, j))
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            components -= 1
        if components > 1:
            continue
        fw = Framework(build_graph(num_agents, edges), points)
        rank = is_infinitesimally_bearing_rigid(fw).rank
        if rank == required:
            break
    else:
        raise GenerationFailureError(
            f"exhausted all pairs at rank {rank} < {required}; points may be degenerate"
        )

    if target_edges is not None:
        if target_edges < len(edges):
            raise ValueError(
                f"target_edges={target_edges} below the {len(edges)} needed for rigidity"
            )
        have = set(edges)
        for e in pairs:
            if len(edges) >= target_edges:
                break
            if e not in have:
                edges.append(e)
                have.add(e)

    graph = build_graph(num_agents, edges)
    span = float(points.max() - points.min())
    sc = Scenario(
        kind="localization",
        dimension=dimension,
        num_agents=num_agents,
        edges=[list(e) for e in graph.edges],
        true_points=points.tolist(),
        anchors=list(range(num_anchors)),
        seed=seed,
        initial_box=[float(points.min()) - 0.25 * span, float(points.max()) + 0.25 * span],
        integrator={"method": "rk4", "dt": None, "max_time": 20000.0,
                    "convergence_tol": 1e-12, "record_stride": 50},
        metadata={"generator": "localization", "achieved_rank": int(rank),
                  "edge_count": graph.m},
    )
    validate_scenario(sc)
    return sc


# ---------------------------------------------------------------------------
# analysis / prediction / run
# ---------------------------------------------------------------------------

def analyze_scenario(sc: Scenario) -> dict:
    """Rigidity and spectrum diagnostics without simulating."""
    mat = materialize(sc)
    d = mat.d
    out: dict = {
        "kind": sc.kind,
        "num_agents": sc.num_agents,
        "edge_count": mat.graph.m,
        "dimension": d,
        "connected": mat.graph.is_connected,
    }
    if mat.formation is not None:
        fw = Framework(mat.graph, mat.formation.r_star)
        pinned = mat.formation.leaders
    else:
        fw = mat.localization.framework
        pinned = mat.localization.anchors
    report = is_infinitesimally_bearing_rigid(fw)
    out["rigidity_rank"] = report.rank
    out["required_rank"] = report.required_rank
    out["infinitesimally_bearing_rigid"] = report.rigid

    L = mat.flow.matrix
    out["lambda_max"] = mat.flow.lambda_max
    out["lambda_2"] = smallest_nonzero_eigenvalue(L)
    out["auto_dt"] = auto_dt(mat.flow)
    verdict = stability_check(L, mat.config)
    out["dt"] = verdict.dt
    out["dt_max_stable"] = verdict.dt_max
    out["dt_stable"] = verdict.stable

    if pinned:
        part = partition(L, pinned, d)
        out["pinned_count"] = len(pinned)
        out["follower_block_positive_definite"] = is_follower_block_positive_definite(part)
        if mat.formation is not None and len(pinned) >= 2:
            check = check_leader_feasibility(
                part, mat.formation.leader_points.reshape(-1)
            )
            out["leader_residual"] = check.residual
            out["leader_residual_tolerance"] = check.tolerance
            out["leaders_feasible"] = check.feasible
    return out


def predict_scenario(sc: Scenario) -> dict:
    """Closed-form equilibria only; no integration."""
    mat = materialize(sc)
    d = mat.d
    if sc.kind == "formation-leaderless":
        eq = predict_leaderless_equilibrium(
            mat.initial_state.reshape(-1, d), mat.formation.r_star
        )
        return {
            "kind": sc.kind,
            "equilibrium": eq.points.tolist(),
            "centroid": eq.centroid.tolist(),
            "scale": eq.scale,
            "alignment": eq.alignment,
            "regime": eq.regime,
        }
    if sc.kind == "formation-leader-follower":
        part = mat.formation.partition()
        eq = predict_leader_follower_equilibrium(
            part, mat.formation.leader_points.reshape(-1)
        )
        return {
            "kind": sc.kind,
            "equilibrium": eq.full_state.reshape(-1, d).tolist(),
            "leader_residual": eq.leader_check.residual,
            "leaders_feasible": eq.leaders_feasible,
        }
    part = mat.localization.partition()
    sol = localize_closed_form(part, mat.localization.anchor_positions.reshape(-1))
    err = localization_errors(
        sol.full_state.reshape(-1, d), mat.localization.framework.points
    )
    return {
        "kind": sc.kind,
        "equilibrium": sol.full_state.reshape(-1, d).tolist(),
        "max_deviation_from_truth": err.max_error,
    }


@dataclass
class AssertionRow:
    name: str
    passed: bool
    value: float
    threshold: float
    note: str = ""


@dataclass
class RunReport:
    """Everything a run produced, serializable to JSON and text."""

    kind: str
    scenario_digest: str
    rigidity: dict
    prediction: dict
    final_points: list
    convergence_time: float
    termination_reason: str
    assertions: list[AssertionRow]
    suggested_dt: float | None = None
    outputs: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.termination_reason != "refused" and all(a.passed for a in self.assertions)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "scenario_digest": self.scenario_digest,
            "rigidity": self.rigidity,
            "prediction": self.prediction,
            "final_points": self.final_points,
            "convergence_time": self.convergence_time,
            "termination_reason": self.termination_reason,
            "assertions": [asdict(a) for a in self.assertions],
            "suggested_dt": self.suggested_dt,
            "outputs": self.outputs,
            "passed": self.passed,
        }

    def to_text(self) -> str:
        lines = [
            f"scenario kind       : {self.kind}",
            f"scenario digest     : {self.scenario_digest[:16]}...",
            f"termination         : {self.termination_reason}",
            f"convergence time    : {self.convergence_time:.6g}",
        ]
        for key, val in self.rigidity.items():
            lines.append(f"{key:<20}: {val}")
        for row in self.assertions:
            mark = "PASS" if row.passed else "FAIL"
            note = f"  ({row.note})" if row.note else ""
            lines.append(
                f"[{mark}] {row.name}: value={row.value:.6g} threshold={row.threshold:.6g}{note}"
            )
        if self.suggested_dt is not None:
            lines.append(f"suggested dt        : {self.suggested_dt:.6g}")
        lines.append(f"overall             : {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def run_scenario(sc: Scenario, out_dir=None) -> RunReport:
    """Rigidity pre-check, closed-form prediction, simulation, post-check."""
    mat = materialize(sc)
    d = mat.d
    rigidity = analyze_scenario(sc)

    if not rigidity["dt_stable"]:
        return RunReport(
            kind=sc.kind,
            scenario_digest=sc.digest(),
            rigidity=rigidity,
            prediction={},
            final_points=[],
            convergence_time=0.0,
            termination_reason="refused",
            assertions=[
                AssertionRow(
                    name="stable_step",
                    passed=False,
                    value=rigidity["dt"],
                    threshold=rigidity["dt_max_stable"],
                    note="step refused; use the suggested dt",
                )
            ],
            suggested_dt=0.5 * rigidity["dt_max_stable"],
        )

    prediction = predict_scenario(sc)
    tols = {**DEFAULT_ASSERTIONS[sc.kind], **sc.assertions}

    obs = _build_observers(mat)
    traj = integrate(mat.flow, mat.initial_state, mat.config, observers=obs)
    final_points = traj.final_state.reshape(-1, d)

    assertions = _post_checks(mat, prediction, traj, final_points, tols)
    report = RunReport(
        kind=sc.kind,
        scenario_digest=sc.digest(),
        rigidity=rigidity,
        prediction=prediction,
        final_points=final_points.tolist(),
        convergence_time=traj.final_time,
        termination_reason=traj.reason,
        assertions=assertions,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "trajectory.csv"
        json_path = out / "report.json"
        write_trajectory_csv(traj, sc.num_agents, d, csv_path)
        report.outputs = {"trajectory": str(csv_path), "report": str(json_path)}
        json_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report


def _build_observers(mat: MaterializedScenario) -> dict:
    d = mat.d

    def centroid(x):
        return x.reshape(-1, d).mean(axis=0)

    def scale(x):
        pts = x.reshape(-1, d)
        return float(np.linalg.norm(pts - pts.mean(axis=0)))

    obs = {"centroid": centroid, "scale": scale}
    if mat.formation is not None:
        problem = mat.formation

        def max_bearing_error(x):
            try:
                return bearing_errors(x.reshape(-1, d), problem.graph, problem.constraints).max_error
            except BearingNetError:
                return float("nan")

        obs["max_bearing_error"] = max_bearing_error
    else:
        truth = mat.localization.framework.points

        def max_position_error(x):
            return localization_errors(x.reshape(-1, d), truth).max_error

        obs["max_position_error"] = max_position_error
    return obs


def _post_checks(mat, prediction, traj: Trajectory, final_points, tols) -> list[AssertionRow]:
    sc = mat.scenario
    d = mat.d
    rows: list[AssertionRow] = [
        AssertionRow(
            name="converged",
            passed=traj.reason == "converged",
            value=1.0 if traj.reason == "converged" else 0.0,
            threshold=1.0,
            note=traj.reason,
        )
    ]
    predicted = np.asarray(prediction["equilibrium"], dtype=np.float64)

    if sc.kind == "formation-leaderless":
        dev = float(np.abs(final_points - predicted).max())
        rows.append(AssertionRow("terminal_matches_prediction", dev < tols["terminal_tol"], dev, tols["terminal_tol"]))
        p0 = mat.initial_state.reshape(-1, d)
        drift = float(np.linalg.norm(final_points.mean(axis=0) - p0.mean(axis=0)))
        drift_tol = tols["centroid_drift_rtol"] * max(float(np.linalg.norm(mat.initial_state)), 1e-300)
        rows.append(AssertionRow("centroid_drift", drift < drift_tol, drift, drift_tol))
        s0 = observables(p0).scale
        s_end = observables(final_points).scale
        rows.append(AssertionRow("scale_bound", s_end <= s0 + tols["scale_slack"], s_end - s0, tols["scale_slack"]))
        regime = prediction["regime"]
        if regime == "target":
            err = bearing_errors(final_points, mat.graph, mat.formation.constraints).max_error
            rows.append(AssertionRow("max_bearing_error", err < tols["bearing_tol"], err, tols["bearing_tol"]))
        else:
            rows.append(AssertionRow("max_bearing_error", True, float("nan"), tols["bearing_tol"], note=f"skipped ({regime} regime)"))
    elif sc.kind == "formation-leader-follower":
        dev = float(np.abs(final_points - predicted).max())
        rows.append(AssertionRow("terminal_matches_prediction", dev < tols["terminal_tol"], dev, tols["terminal_tol"]))
        leaders = list(mat.formation.leaders)
        pin_dev = float(np.abs(final_points[leaders] - mat.formation.leader_points).max())
        rows.append(AssertionRow("leaders_pinned", pin_dev == 0.0, pin_dev, 0.0))
        if prediction["leaders_feasible"]:
            err = bearing_errors(final_points, mat.graph, mat.formation.constraints).max_error
            rows.append(AssertionRow("max_bearing_error", err < tols["bearing_tol"], err, tols["bearing_tol"]))
        else:
            rows.append(AssertionRow("max_bearing_error", True, float("nan"), tols["bearing_tol"], note="skipped (infeasible leaders)"))
    else:
        truth = mat.localization.framework.points
        diameter = mat.localization.framework.diameter
        closed = float(np.abs(predicted - truth).max())
        closed_tol = tols["closed_form_rtol"] * diameter
        rows.append(AssertionRow("closed_form_matches_truth", closed < closed_tol, closed, closed_tol))
        sim_err = localization_errors(final_points, truth).max_error
        sim_tol = tols["sim_error_rtol"] * diameter
        if sc.measurement_noise > 0:
            rows.append(AssertionRow("max_position_error", True, sim_err, sim_tol, note="skipped (noisy measurements; no convergence claim)"))
        else:
            rows.append(AssertionRow("max_position_error", sim_err < sim_tol, sim_err, sim_tol))
        anchors = list(mat.localization.anchors)
        pin_dev = float(np.abs(final_points[anchors] - truth[anchors]).max())
        rows.append(AssertionRow("anchors_pinned", pin_dev == 0.0, pin_dev, 0.0))
    return rows


def write_trajectory_csv(traj: Trajectory, n: int, d: int, path) -> None:
    """One row per recorded sample: time, all coordinates, observables."""
    header = ["t"] + [f"p{i}_c{k}" for i in range(n) for k in range(d)]
    obs_layout: list[tuple[str, int]] = []
    for name, series in traj.observables.items():
        width = 1 if series.ndim == 1 else series.shape[1]
        obs_layout.append((name, width))
        if width == 1:
            header.append(name)
        else:
            header.extend(f"{name}_c{k}" for k in range(width))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row_idx in range(traj.times.shape[0]):
            row = [repr(float(traj.times[row_idx]))]
            row.extend(repr(float(v)) for v in traj.states[row_idx])
            for name, width in obs_layout:
                series = traj.observables[name]
                if width == 1:
                    row.append(repr(float(series[row_idx])))
                else:
                    row.extend(repr(float(v)) for v in series[row_idx])
            writer.writerow(row)

"""Fixed-step integration of protocol fields with convergence detection.

Explicit Euler and classical RK4 only; reproducibility of recorded
trajectories beats adaptivity at this scale. Integration terminates early
once the field norm drops below ``convergence_tol * (1 + ||x||)``, checked
before every step, or at ``max_time``.

Fields are callables mapping a flat state to a velocity. The protocol flows
are all of the masked-linear form xdot = -(mask * (L @ x)); wrapping them in
:class:`MaskedLinearField` routes the stepping loop through the compiled
kernels in :mod:`bearingnet._kernels` while keeping semantics identical to
the generic Python loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .errors import FieldEvaluationError

EULER_STABILITY = 2.0
RK4_STABILITY = 2.78

DEFAULT_CONVERGENCE_TOL = 1e-9


@dataclass(frozen=True)
class MaskedLinearField:
    """Flow xdot = -(mask * (matrix @ x)); mask zeroes pinned coordinates."""

    matrix: np.ndarray  # (dn, dn)
    mask: np.ndarray    # (dn,) of 0.0 / 1.0

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        k = np.ascontiguousarray(np.asarray(self.mask, dtype=np.float64))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got {m.shape}")
        if k.shape != (m.shape[0],):
            raise ValueError(f"mask shape {k.shape} does not match matrix {m.shape}")
        m.flags.writeable = False
        k.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "mask", k)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return -(self.mask * (self.matrix @ x))

    @cached_property
    def lambda_max(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[-1])


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integrator settings.

    ``dt=None`` asks for automatic selection (0.5 / lambda_max of the flow
    matrix); only masked-linear fields support it.
    """

    method: str = "rk4"
    dt: float | None = None
    max_time: float = 500.0
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL
    record_stride: int = 10

    def __post_init__(self):
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.max_time > 0:
            raise ValueError(f"max_time must be positive, got {self.max_time}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")


@dataclass
class Trajectory:
    """Recorded samples of one integration run.

    The first sample is the initial state; times are strictly increasing.
    ``reason`` is "converged", "max-time", or "error" (with the message in
    ``error``); observables include the built-in "field_norm" series.
    """

    times: np.ndarray                      # (k,)
    states: np.ndarray                     # (k, dim)
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    reason: str = "max-time"
    steps: int = 0
    dt: float = 0.0
    error: str | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


def auto_dt(flow: MaskedLinearField) -> float:
    """Default step 0.5 / lambda_max; well inside both stability regions."""
    lam = flow.lambda_max
    if lam <= 0.0:
        return 1.0
    return 0.5 / lam


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    dt: float
    dt_max: float
    lambda_max: float
    method: str


def stability_check(L: np.ndarray, cfg: IntegratorConfig) -> StabilityVerdict:
    """Linear stability of the chosen step against the flow matrix spectrum."""
    lam = float(np.linalg.eigvalsh(np.asarray(L, dtype=np.float64))[-1])
    bound = EULER_STABILITY if cfg.method == "euler" else RK4_STABILITY
    dt_max = math.inf if lam <= 0 else bound / lam
    dt = cfg.dt if cfg.dt is not None else (0.5 / lam if lam > 0 else 1.0)
    return StabilityVerdict(
        stable=dt < dt_max,
        dt=dt,
        dt_max=dt_max,
        lambda_max=lam,
        method=cfg.method,
    )


def integrate(
    field_fn: Callable[[np.ndarray], np.ndarray] | MaskedLinearField,
    x0: np.ndarray,
    cfg: IntegratorConfig,
    observers: Mapping[str, Callable[[np.ndarray], float | np.ndarray]] | None = None,
) -> Trajectory:
    """Run the fixed-step method until convergence, max_time, or an error.

    Observers are evaluated at recorded samples only (every
    ``record_stride`` steps and at termination).
    """
    x = np.ascontiguousarray(np.asarray(x0, dtype=np.float64).reshape(-1)).copy()
    fast = isinstance(field_fn, MaskedLinearField)
    dt = cfg.dt
    if dt is None:
        if not fast:
            raise ValueError("dt=None (auto) requires a MaskedLinearField flow")
        dt = auto_dt(field_fn)
    max_steps = max(1, math.ceil(cfg.max_time / dt - 1e-12))
    tol = cfg.convergence_tol

    times: list[float] = []
    states: list[np.ndarray] = []
    obs_rows: dict[str, list] = {name: [] for name in (observers or {})}
    fnorm_rows: list[float] = []
    reason = "max-time"
    error_msg: str | None = None

    if fast:
        stepper = _kernels.rk4_steps if cfg.method == "rk4" else _kernels.euler_steps
    else:
        stepper = None

    def record(state: np.ndarray, t: float) -> bool:
        try:
            v = field_fn(state)
            evaluated = {
                name: np.asarray(fn(state), dtype=np.float64)
                for name, fn in (observers or {}).items()
            }
        except Exception as exc:  # noqa: BLE001 - any field/observer failure truncates
            _note_error(exc)
            return False
        times.append(t)
        states.append(state.copy())
        fnorm_rows.append(float(np.linalg.norm(v)))
        for name, value in evaluated.items():
            obs_rows[name].append(value)
        return True

    def _note_error(exc: Exception) -> None:
        nonlocal reason, error_msg
        reason = "error"
        error_msg = f"{type(exc).__name__}: {exc}"

    if not record(x, 0.0):
        raise FieldEvaluationError(f"field failed at the initial state: {error_msg}")

    steps_done = 0
    while steps_done < max_steps:
        todo = min(cfg.record_stride, max_steps - steps_done)
        if fast:
            x, done, converged = stepper(
                field_fn.matrix, field_fn.mask, x, dt, todo, tol
            )
        else:
            try:
                x, done, converged = _python_steps(field_fn, x, dt, todo, tol, cfg.method)
            except Exception as exc:  # noqa: BLE001
                _note_error(exc)
                break
        steps_done += done
        if done > 0:
            if not record(x, steps_done * dt):
                break
        if converged:
            reason = "converged"
            break

    return Trajectory(
        times=np.asarray(times),
        states=np.asarray(states),
        observables={
            "field_norm": np.asarray(fnorm_rows),
            **{name: np.asarray(rows) for name, rows in obs_rows.items()},
        },
        reason=reason,
        steps=steps_done,
        dt=dt,
        error=error_msg,
    )


def _python_steps(field_fn, x, dt, max_steps, tol, method):
    """Generic-field twin of the compiled stepping kernels."""
    steps = 0
    converged = False
    while steps < max_steps:
        k1 = np.asarray(field_fn(x), dtype=np.float64)
        if np.sqrt(k1 @ k1) < tol * (1.0 + np.sqrt(x @ x)):
            converged = True
            break
        if method == "euler":
            x = x + dt * k1
        else:
            k2 = np.asarray(field_fn(x + 0.5 * dt * k1), dtype=np.float64)
            k3 = np.asarray(field_fn(x + 0.5 * dt * k2), dtype=np.float64)
            k4 = np.asarray(field_fn(x + dt * k3), dtype=np.float64)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        steps += 1
    return x, steps, converged

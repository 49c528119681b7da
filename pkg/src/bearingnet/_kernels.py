"""Hot numeric kernels: per-edge field evaluation and fixed-step integration.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy twin
with identical semantics. The active backend is chosen at import time from
the ``BEARINGNET_BACKEND`` environment variable:

    BEARINGNET_BACKEND=numba   (default) JIT kernels, numpy fallback if
                               numba is not importable
    BEARINGNET_BACKEND=numpy   force the pure-numpy path

Both implementations stay importable (see :func:`implementations`) so tests
and benchmarks can compare them directly. Results agree to roundoff; they
are not bitwise identical across backends because summation order differs.

Stepper convention: convergence is checked *before* each step, so a call on
an already-converged state performs zero steps. ``tol`` is the absolute
field-norm threshold ``conv_tol * (1 + ||x||)`` evaluated per step.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_VALID_BACKENDS = ("numba", "numpy")


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _edge_field_numpy(points, edges, bearings):
    """Velocities u_i = -sum_j P_{g_ij} (p_i - p_j) over incident edges.

    points: (n, d); edges: (m, 2) int64 tail<head; bearings: (m, d) unit
    vectors oriented tail -> head. Returns (n, d).
    """
    u = np.zeros_like(points)
    if len(edges) == 0:
        return u
    diff = points[edges[:, 0]] - points[edges[:, 1]]
    w = diff - bearings * np.sum(bearings * diff, axis=1, keepdims=True)
    np.subtract.at(u, edges[:, 0], w)
    np.add.at(u, edges[:, 1], w)
    return u


def _euler_steps_numpy(L, mask, x0, dt, max_steps, tol):
    x = x0.copy()
    steps = 0
    converged = False
    while steps < max_steps:
        k1 = -(mask * (L @ x))
        if np.sqrt(k1 @ k1) < tol * (1.0 + np.sqrt(x @ x)):
            converged = True
            break
        x = x + dt * k1
        steps += 1
    return x, steps, converged


def _rk4_steps_numpy(L, mask, x0, dt, max_steps, tol):
    x = x0.copy()
    steps = 0
    converged = False
    while steps < max_steps:
        k1 = -(mask * (L @ x))
        if np.sqrt(k1 @ k1) < tol * (1.0 + np.sqrt(x @ x)):
            converged = True
            break
        k2 = -(mask * (L @ (x + 0.5 * dt * k1)))
        k3 = -(mask * (L @ (x + 0.5 * dt * k2)))
        k4 = -(mask * (L @ (x + dt * k3)))
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        steps += 1
    return x, steps, converged


_NUMPY_IMPL = {
    "edge_field": _edge_field_numpy,
    "euler_steps": _euler_steps_numpy,
    "rk4_steps": _rk4_steps_numpy,
}


# ---------------------------------------------------------------------------
# numba implementations (built lazily so both backends stay accessible)
# ---------------------------------------------------------------------------

_numba_impl_cache: dict | None = None


def _build_numba_impl():
    """Compile the jitted kernels; raises ImportError if numba is absent."""
    global _numba_impl_cache
    if _numba_impl_cache is not None:
        return _numba_impl_cache

    from numba import njit

    @njit(cache=True)
    def edge_field(points, edges, bearings):
        n, d = points.shape
        m = edges.shape[0]
        u = np.zeros((n, d))
        for k in range(m):
            i = edges[k, 0]
            j = edges[k, 1]
            dot = 0.0
            for c in range(d):
                dot += bearings[k, c] * (points[i, c] - points[j, c])
            for c in range(d):
                w = (points[i, c] - points[j, c]) - bearings[k, c] * dot
                u[i, c] -= w
                u[j, c] += w
        return u

    @njit(cache=True)
    def _masked_neg_matvec(L, mask, x, out):
        dn = x.shape[0]
        for r in range(dn):
            if mask[r] == 0.0:
                out[r] = 0.0
            else:
                acc = 0.0
                for c in range(dn):
                    acc += L[r, c] * x[c]
                out[r] = -acc

    @njit(cache=True)
    def _norm(v):
        acc = 0.0
        for r in range(v.shape[0]):
            acc += v[r] * v[r]
        return np.sqrt(acc)

    @njit(cache=True)
    def euler_steps(L, mask, x0, dt, max_steps, tol):
        dn = x0.shape[0]
        x = x0.copy()
        k1 = np.empty(dn)
        steps = 0
        converged = False
        while steps < max_steps:
            _masked_neg_matvec(L, mask, x, k1)
            if _norm(k1) < tol * (1.0 + _norm(x)):
                converged = True
                break
            for r in range(dn):
                x[r] = x[r] + dt * k1[r]
            steps += 1
        return x, steps, converged

    @njit(cache=True)
    def rk4_steps(L, mask, x0, dt, max_steps, tol):
        dn = x0.shape[0]
        x = x0.copy()
        k1 = np.empty(dn)
        k2 = np.empty(dn)
        k3 = np.empty(dn)
        k4 = np.empty(dn)
        xt = np.empty(dn)
        steps = 0
        converged = False
        while steps < max_steps:
            _masked_neg_matvec(L, mask, x, k1)
            if _norm(k1) < tol * (1.0 + _norm(x)):
                converged = True
                break
            for r in range(dn):
                xt[r] = x[r] + 0.5 * dt * k1[r]
            _masked_neg_matvec(L, mask, xt, k2)
            for r in range(dn):
                xt[r] = x[r] + 0.5 * dt * k2[r]
            _masked_neg_matvec(L, mask, xt, k3)
            for r in range(dn):
                xt[r] = x[r] + dt * k3[r]
            _masked_neg_matvec(L, mask, xt, k4)
            c6 = dt / 6.0
            for r in range(dn):
                x[r] = x[r] + c6 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
            steps += 1
        return x, steps, converged

    _numba_impl_cache = {
        "edge_field": edge_field,
        "euler_steps": euler_steps,
        "rk4_steps": rk4_steps,
    }
    return _numba_impl_cache


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_requested = os.environ.get("BEARINGNET_BACKEND", "numba").strip().lower()
if _requested not in _VALID_BACKENDS:
    raise ValueError(
        f"BEARINGNET_BACKEND={_requested!r}; expected one of {_VALID_BACKENDS}"
    )

if _requested == "numba":
    try:
        _active_impl = _build_numba_impl()
        BACKEND = "numba"
    except ImportError:
        warnings.warn(
            "numba not importable; falling back to the pure-numpy kernels "
            "(set BEARINGNET_BACKEND=numpy to silence this warning)",
            stacklevel=2,
        )
        _active_impl = _NUMPY_IMPL
        BACKEND = "numpy"
else:
    _active_impl = _NUMPY_IMPL
    BACKEND = "numpy"

edge_field = _active_impl["edge_field"]
euler_steps = _active_impl["euler_steps"]
rk4_steps = _active_impl["rk4_steps"]


def implementations() -> dict[str, dict]:
    """All available kernel implementations, keyed by backend name.

    Tries to compile the numba kernels regardless of the active backend;
    returns only the numpy twins if numba is unavailable.
    """
    impls = {"numpy": _NUMPY_IMPL}
    try:
        impls["numba"] = _build_numba_impl()
    except ImportError:
        pass
    return impls


def warmup() -> None:
    """Trigger JIT compilation of the active kernels on tiny inputs."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    edges = np.array([[0, 1]], dtype=np.int64)
    brg = np.array([[1.0, 0.0]])
    edge_field(pts, edges, brg)
    L = np.eye(4)
    mask = np.ones(4)
    x = np.ones(4)
    euler_steps(L, mask, x, 0.1, 2, 1e-30)
    rk4_steps(L, mask, x, 0.1, 2, 1e-30)

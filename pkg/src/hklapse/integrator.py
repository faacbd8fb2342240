"""Fixed-step RK4 integration of the undelayed and delayed opinion dynamics.

Delayed arguments are read by the method of steps: the step size divides
the delay, so reads at ``t - tau`` and ``t + h - tau`` land on stored nodes
and the half-step read uses cubic Hermite dense output on a finished
segment. Every trajectory carries its node derivatives, so any time in
``[-tau, t_end]`` can be interrogated afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from hklapse._geometry import point_set_diameter
from hklapse.core import InfluenceSpec, OpinionState, WeightSpec, WfCertificate, eval_weight
from hklapse.errors import DomainError, IntegrationError

Array = np.ndarray

DEFAULT_H = 1e-3
CONSENSUS_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# histories
# ---------------------------------------------------------------------------


def _as_opinions(x) -> Array:
    x = np.array(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 2:
        raise DomainError("opinions must be an (N, d) array with N >= 2")
    if not np.all(np.isfinite(x)):
        raise DomainError("opinions must be finite")
    return x


@dataclass(frozen=True)
class PointInitial:
    """Initial opinions at t = 0; with a positive delay they are held constant on [-tau, 0]."""

    x0: Array

    def __post_init__(self):
        object.__setattr__(self, "x0", _as_opinions(self.x0))

    def on_grid(self, s: Array) -> tuple[Array, Array]:
        x = np.broadcast_to(self.x0, (len(s), *self.x0.shape)).copy()
        return x, np.zeros_like(x)


@dataclass(frozen=True)
class FunctionHistory:
    """Continuous history ``fn(s) -> (N, d)`` on ``[-tau, 0]``, sampled onto the step grid."""

    fn: Callable[[float], Array]

    def on_grid(self, s: Array) -> tuple[Array, Array]:
        x = np.stack([_as_opinions(self.fn(float(v))) for v in s])
        if len(s) < 2:
            return x, np.zeros_like(x)
        interp = PchipInterpolator(s, x, axis=0)
        return x, interp(s, 1)


@dataclass(frozen=True)
class SampledHistory:
    """History given at user sample times, interpolated piecewise-cubically (PCHIP)."""

    times: Array
    values: Array

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[:, :, None]
        if t.ndim != 1 or v.ndim != 3 or len(t) != len(v):
            raise DomainError("values must have shape (len(times), N, d)")
        if np.any(np.diff(t) <= 0):
            raise DomainError("history times must strictly increase")
        if v.shape[1] < 2 or not np.all(np.isfinite(v)):
            raise DomainError("history needs N >= 2 finite opinions")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def on_grid(self, s: Array) -> tuple[Array, Array]:
        t = self.times
        if t[0] > s[0] + 1e-12 or t[-1] < s[-1] - 1e-12:
            raise DomainError(f"history samples cover [{t[0]}, {t[-1]}], need [{s[0]}, {s[-1]}]")
        if len(t) == 1:
            x = np.broadcast_to(self.values[0], (len(s), *self.values.shape[1:])).copy()
            return x, np.zeros_like(x)
        interp = PchipInterpolator(t, self.values, axis=0)
        return interp(s), interp(s, 1)


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Node values and derivatives on the uniform grid ``t_k = k h``, ``k >= -offset``.

    ``dx`` holds the derivative used for dense output at each node. At
    ``t = 0`` the delayed solution has a derivative jump, so ``dx[offset]``
    is the history (left) derivative and ``dx0_plus`` the right one.
    """

    h: float
    tau: float
    offset: int
    x: Array
    dx: Array
    dx0_plus: Array
    consensus_time: float | None = None

    def __post_init__(self):
        for name in ("x", "dx", "dx0_plus"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def t(self) -> Array:
        return (np.arange(len(self.x)) - self.offset) * self.h

    @property
    def t_start(self) -> float:
        return -self.offset * self.h

    @property
    def t_end(self) -> float:
        return (len(self.x) - 1 - self.offset) * self.h

    @property
    def N(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[2]

    @property
    def forward(self) -> Array:
        """Node values for t >= 0."""
        return self.x[self.offset:]

    def state(self, k: int) -> OpinionState:
        """State at node ``t = k h``."""
        return OpinionState(k * self.h, self.x[k + self.offset])

    def __call__(self, t):
        """Dense output: ``(N, d)`` for a scalar time, ``(len(t), N, d)`` for an array."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.t_start, self.t_end
        if np.any(tt < lo - 1e-9 * self.h) or np.any(tt > hi + 1e-9 * self.h):
            raise DomainError(f"time outside trajectory [{lo}, {hi}]")
        s = tt / self.h + self.offset
        near = np.rint(s)
        on_node = np.abs(s - near) < 1e-9
        j = np.clip(np.floor(s).astype(int), 0, len(self.x) - 2)
        theta = np.clip(s - j, 0.0, 1.0)[:, None, None]
        left = self.dx[j].copy()
        if self.offset > 0:
            left[j == self.offset] = self.dx0_plus
        h00 = (1 + 2 * theta) * (1 - theta) ** 2
        h10 = theta * (1 - theta) ** 2
        h01 = theta ** 2 * (3 - 2 * theta)
        h11 = theta ** 2 * (theta - 1)
        out = h00 * self.x[j] + self.h * h10 * left + h01 * self.x[j + 1] + self.h * h11 * self.dx[j + 1]
        if np.any(on_node):
            out[on_node] = self.x[near[on_node].astype(int)]
        return out[0] if scalar else out

    def nodes_between(self, a: float, b: float) -> Array:
        """Indices of nodes with ``a <= t_k <= b``."""
        lo = max(0, math.ceil(a / self.h - 1e-9) + self.offset)
        hi = min(len(self.x) - 1, math.floor(b / self.h + 1e-9) + self.offset)
        return np.arange(lo, hi + 1)

    def window_points(self, a: float, b: float) -> Array:
        """All agent positions at nodes in ``[a, b]`` and at both endpoints, as ``(M, d)``."""
        idx = self.nodes_between(a, b)
        ends = self(np.array([a, b]))
        pts = np.concatenate([self.x[idx], ends], axis=0)
        return pts.reshape(-1, self.d)

    def history_samples(self) -> Array:
        """History nodes plus dense midpoints, ``(M, N, d)``; just ``x(0)`` without delay."""
        hist = self.x[: self.offset + 1]
        if self.offset == 0:
            return hist
        mids = self(self.t[: self.offset] + 0.5 * self.h)
        return np.concatenate([hist, mids], axis=0)

    def diameters(self) -> Array:
        """Diameter at every node."""
        x = self.x
        if self.d == 1:
            return x[:, :, 0].max(axis=1) - x[:, :, 0].min(axis=1)
        out = np.empty(len(x))
        step = max(1, 200_000 // (self.N * self.N * self.d))
        for s in range(0, len(x), step):
            blk = x[s:s + step]
            diff = blk[:, :, None, :] - blk[:, None, :, :]
            out[s:s + step] = np.sqrt(np.einsum("tijk,tijk->tij", diff, diff).max(axis=(1, 2)))
        return out

    @classmethod
    def from_samples(cls, t, x, tau: float = 0.0) -> "Trajectory":
        """Build a trajectory from node samples on a uniform grid.

        Node derivatives are estimated by second-order finite differences.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[:, :, None]
        if t.ndim != 1 or x.ndim != 3 or len(t) != len(x) or len(t) < 3:
            raise DomainError("need at least three samples with x of shape (len(t), N, d)")
        h = float(t[1] - t[0])
        if h <= 0 or np.max(np.abs(np.diff(t) - h)) > 1e-9 * max(1.0, abs(h)):
            raise DomainError("sample times must be uniformly spaced")
        offset = int(round(-t[0] / h))
        if abs(t[0] + offset * h) > 1e-9 * max(1.0, h) or offset < 0:
            raise DomainError("the grid must contain t = 0 and start at or before it")
        if tau > 0 and abs(offset * h - tau) > 1e-9 * max(1.0, tau):
            raise DomainError(f"grid starts at {t[0]}, expected -tau = {-tau}")
        dx = np.gradient(x, h, axis=0, edge_order=2)
        return cls(h=h, tau=float(tau), offset=offset, x=x, dx=dx, dx0_plus=dx[offset])


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def _velocity(alpha: float, xi: Array, xj: Array, influence: InfluenceSpec,
              exclude_self: bool) -> Array:
    diff = xj[None, :, :] - xi[:, None, :]
    psi = influence.matrix(xi, xj, diff)
    if exclude_self:
        psi = np.array(psi, copy=True)
        np.fill_diagonal(psi, 0.0)
    return (alpha / (len(xi) - 1)) * np.einsum("ij,ijk->ik", psi, diff)


def rhs_undelayed(state: OpinionState, influence: InfluenceSpec, weight: WeightSpec) -> Array:
    """Velocities ``alpha(t) / (N-1) * sum_j psi(x_i, x_j) (x_j - x_i)``."""
    alpha = eval_weight(weight, state.t)
    v = _velocity(alpha, state.x, state.x, influence, exclude_self=False)
    if not np.all(np.isfinite(v)):
        raise IntegrationError("non-finite velocity", time=state.t)
    return v


def rhs_delayed(t: float, current: OpinionState, delayed: OpinionState,
                influence: InfluenceSpec, weight: WeightSpec) -> Array:
    """Velocities ``alpha(t) / (N-1) * sum_{j != i} psi(x_i(t), x_j(t - tau)) (x_j(t - tau) - x_i(t))``."""
    if t < 0:
        raise DomainError("delayed right-hand side needs t >= 0 (reads before -tau)")
    if current.x.shape != delayed.x.shape:
        raise DomainError("current and delayed states differ in shape")
    alpha = eval_weight(weight, t)
    v = _velocity(alpha, current.x, delayed.x, influence, exclude_self=True)
    if not np.all(np.isfinite(v)):
        raise IntegrationError("non-finite velocity", time=t)
    return v


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def resolve_step(tau: float, h: float | None) -> tuple[float, int]:
    """Step size (shrunk so it divides ``tau``) and the delay in steps."""
    if tau < 0 or not math.isfinite(tau):
        raise DomainError("tau must be finite and nonnegative")
    if h is None:
        h = DEFAULT_H
    if not (h > 0 and math.isfinite(h)):
        raise DomainError("step size must be positive")
    if tau == 0:
        return float(h), 0
    m = max(1, math.ceil(tau / h - 1e-9))
    h_eff = tau / m
    if not h_eff > 0 or m > 10**8:
        raise IntegrationError(f"cannot fit a step <= {h} into tau = {tau}")
    return h_eff, m


def simulate(history, influence: InfluenceSpec, weight: WeightSpec, tau: float = 0.0,
             h: float | None = None, t_end: float = 1.0,
             stop_at_consensus: bool = False) -> Trajectory:
    """Integrate the dynamics from ``history`` up to (at least) ``t_end``.

    ``tau = 0`` runs the undelayed model; ``tau > 0`` the delayed one. The
    step is shrunk so it divides ``tau``, and the run ends at the first node
    at or after ``t_end``. With ``stop_at_consensus`` the run stops once the
    diameter falls below ``1e-12 * max(1, d(0))``.
    """
    if isinstance(history, OpinionState):
        history = PointInitial(history.x)
    elif not hasattr(history, "on_grid"):
        history = PointInitial(history)
    if not (t_end > 0 and math.isfinite(t_end)):
        raise DomainError("t_end must be positive")
    h, m = resolve_step(tau, h)
    steps = max(1, math.ceil(t_end / h - 1e-9))
    grid = (np.arange(m + 1) - m) * h
    xh, dxh = history.on_grid(grid)
    return _integrate(xh, dxh, influence, weight, tau, h, m, steps,
                      delayed=tau > 0, stop_at_consensus=stop_at_consensus)


def _integrate(xh: Array, dxh: Array, influence: InfluenceSpec, weight: WeightSpec,
               tau: float, h: float, m: int, steps: int, delayed: bool,
               stop_at_consensus: bool = False,
               on_read: Callable[[int, int], None] | None = None) -> Trajectory:
    n_hist, N, d = xh.shape
    if N < 2:
        raise DomainError("at least two agents are required")
    x = np.empty((m + steps + 1, N, d))
    dx = np.empty_like(x)
    x[: m + 1] = xh
    dx[: m + 1] = dxh
    dxp = np.zeros((N, d))

    tk = np.arange(steps + 1) * h
    a_node = np.asarray(weight(tk), dtype=float)
    a_mid = np.asarray(weight(tk[:-1] + 0.5 * h), dtype=float)
    if np.any(a_node < 0) or np.any(a_node > 1) or np.any(a_mid < 0) or np.any(a_mid > 1):
        raise IntegrationError("weight function left [0, 1] on the step grid")

    def f(alpha, xi, xd):
        return _velocity(alpha, xi, xd, influence, exclude_self=delayed)

    d_start = point_set_diameter(x[m]) if stop_at_consensus else 0.0
    floor = CONSENSUS_FLOOR * max(1.0, d_start)
    comp = np.zeros((N, d))
    last = m + steps
    consensus_time = None
    for k in range(steps):
        i = m + k
        xi = x[i]
        if delayed and m > 0:
            j = i - m
            k1 = f(a_node[k], xi, x[j])
            if i == m:
                dxp = k1
            else:
                dx[i] = k1
            left = dxp if j == m else dx[j]
            xm = 0.5 * (x[j] + x[j + 1]) + 0.125 * h * (left - dx[j + 1])
            if on_read is not None:
                on_read(i + 1, j + 1)
            k2 = f(a_mid[k], xi + 0.5 * h * k1, xm)
            k3 = f(a_mid[k], xi + 0.5 * h * k2, xm)
            k4 = f(a_node[k + 1], xi + h * k3, x[j + 1])
        else:
            k1 = f(a_node[k], xi, xi)
            dx[i] = k1
            if i == m:
                dxp = k1
            y2 = xi + 0.5 * h * k1
            k2 = f(a_mid[k], y2, y2)
            y3 = xi + 0.5 * h * k2
            k3 = f(a_mid[k], y3, y3)
            y4 = xi + h * k3
            k4 = f(a_node[k + 1], y4, y4)
        # compensated update keeps round-off below the O(h^4) truncation error
        incr = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) - comp
        new = xi + incr
        comp = (new - xi) - incr
        x[i + 1] = new
        if not np.all(np.isfinite(new)):
            raise IntegrationError(f"non-finite state at node {k + 1} (t = {(k + 1) * h})",
                                   node=k + 1, time=(k + 1) * h)
        if stop_at_consensus and point_set_diameter(new) < floor:
            consensus_time = (k + 1) * h
            last = i + 1
            break

    xd_last = x[last - m] if (delayed and m > 0) else x[last]
    dx[last] = f(a_node[last - m], x[last], xd_last)
    if last == m:
        dxp = dx[last]
    x = x[: last + 1]
    dx = dx[: last + 1]
    if m == 0:
        dxp = dx[0]
    return Trajectory(h=h, tau=float(tau), offset=m, x=x, dx=dx, dx0_plus=dxp,
                      consensus_time=consensus_time)


# ---------------------------------------------------------------------------
# diameters
# ---------------------------------------------------------------------------


def diameter(state) -> float:
    """Largest pairwise Euclidean distance between the opinions of ``state``."""
    x = state.x if isinstance(state, OpinionState) else _as_opinions(state)
    return point_set_diameter(x)


def window_diameter(traj: Trajectory, n: int, cert) -> float:
    """Largest distance between any two agents at any two times in ``[t_n - tau, t_n]``.

    Sampled at the integration nodes inside the window and at both
    endpoints (the endpoints through dense output).
    """
    partition = cert.partition if isinstance(cert, WfCertificate) else np.asarray(cert, dtype=float)
    if not 0 <= n < len(partition):
        raise DomainError(f"partition index {n} out of range")
    return window_diameter_at(traj, float(partition[n]))


def window_diameter_at(traj: Trajectory, t: float) -> float:
    a = t - traj.tau
    if a < traj.t_start - 1e-9 * traj.h or t > traj.t_end + 1e-9 * traj.h:
        raise DomainError(f"window [{a}, {t}] outside trajectory [{traj.t_start}, {traj.t_end}]")
    if traj.tau == 0:
        return point_set_diameter(traj(t))
    return point_set_diameter(traj.window_points(a, t))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def trajectory_header(N: int, d: int) -> list[str]:
    return ["t"] + [f"x_{i + 1}_{k + 1}" for i in range(N) for k in range(d)] + ["diameter"]


def write_csv(traj: Trajectory, path, decimation: int = 1) -> None:
    """One row per node (every ``decimation``-th, always keeping the last)."""
    if decimation < 1:
        raise DomainError("decimation must be >= 1")
    idx = np.arange(0, len(traj.x), decimation)
    if idx[-1] != len(traj.x) - 1:
        idx = np.append(idx, len(traj.x) - 1)
    diam = traj.diameters()[idx]
    rows = np.column_stack([traj.t[idx], traj.x[idx].reshape(len(idx), -1), diam])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(trajectory_header(traj.N, traj.d)) + "\n")
        np.savetxt(fh, rows, fmt="%.17g", delimiter=",")


def read_csv(path, tau: float = 0.0) -> Trajectory:
    """Load a trajectory written by :func:`write_csv` (undecimated)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    cols = [c for c in header if c.startswith("x_")]
    N = max(int(c.split("_")[1]) for c in cols)
    d = max(int(c.split("_")[2]) for c in cols)
    x = data[:, 1:1 + N * d].reshape(len(data), N, d)
    return Trajectory.from_samples(data[:, 0], x, tau=tau)

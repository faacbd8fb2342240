"""Check the consensus inequalities on simulated trajectories.

Every check is written as ``rhs - lhs >= -tol`` and reports the worst
margin over all instances, with ``tol = 1e-8 * (1 + scale)``. The scale is
the initial diameter for diameter inequalities and ``M0`` for hull and
norm bounds. Inequalities are evaluated on the integration nodes, at the
partition points and at window endpoints (through dense output).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from hklapse._geometry import extreme_points, point_set_diameter
from hklapse.core import InfluenceSpec, WfCertificate, compute_M0, compute_psi0
from hklapse.errors import DomainError
from hklapse.integrator import Trajectory, window_diameter_at
from hklapse.theory import BoundSet, bound_curve, constants_delayed, constants_undelayed

REL_TOL = 1e-8
DEFAULT_SEED = 20240601


@dataclass(frozen=True)
class CheckRecord:
    name: str
    statement: str
    worst_margin: float
    tol: float
    passed: bool
    location: dict
    count: int

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class VerificationReport:
    checks: list[CheckRecord] = field(default_factory=list)
    tolerance_policy: str = f"margin >= -{REL_TOL:g} * (1 + scale)"
    seed: int = DEFAULT_SEED

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[CheckRecord]:
        return [c for c in self.checks if not c.passed]

    def to_record(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance_policy": self.tolerance_policy,
            "seed": self.seed,
            "checks": [c.to_record() for c in self.checks],
        }

    def to_table(self) -> str:
        width = max([len(c.name) for c in self.checks] + [5])
        lines = [f"{'check':<{width}}  {'result':<6}  {'worst margin':>14}  {'tol':>9}  where"]
        for c in self.checks:
            where = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in c.location.items())
            lines.append(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  "
                         f"{c.worst_margin:>14.6e}  {c.tol:>9.2e}  {where}")
        return "\n".join(lines)


def _tol(scale: float) -> float:
    return REL_TOL * (1.0 + abs(scale))


def _record(name: str, statement: str, margins, tol: float, locations: list[dict]) -> CheckRecord:
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        raise DomainError(f"{name}: nothing to check")
    k = int(np.argmin(margins))
    worst = float(margins[k])
    return CheckRecord(name=name, statement=statement, worst_margin=worst, tol=tol,
                       passed=bool(worst >= -tol), location=locations[k], count=int(margins.size))


# ---------------------------------------------------------------------------
# sequences along the partition
# ---------------------------------------------------------------------------


def partition_points(traj: Trajectory, cert: WfCertificate) -> np.ndarray:
    return cert.partition[cert.partition <= traj.t_end + 1e-9 * traj.h]


def diameters_at(traj: Trajectory, times) -> np.ndarray:
    return np.array([point_set_diameter(traj(float(t))) for t in times])


def window_diameters(traj: Trajectory, cert: WfCertificate) -> np.ndarray:
    """``D_n`` for every partition point inside the trajectory."""
    return np.array([window_diameter_at(traj, float(t)) for t in partition_points(traj, cert)])


def derive_bounds(traj: Trajectory, influence: InfluenceSpec, cert: WfCertificate,
                  regime: str | None = None) -> BoundSet:
    """Constants for ``traj`` from its history: ``M0``, ``psi0`` and the initial diameter scale."""
    if regime is None:
        regime = "delayed" if traj.tau > 0 else "undelayed"
    M0 = compute_M0(traj)
    psi0 = compute_psi0(influence, M0, traj.d)
    if regime == "undelayed":
        if traj.tau != 0:
            raise DomainError("undelayed bounds need a trajectory without delay")
        d0 = point_set_diameter(traj(0.0))
        return constants_undelayed(influence.K_sup, cert.T, psi0, cert.alpha_bar, M0=M0, scale=d0)
    if regime != "delayed":
        raise DomainError(f"unknown regime {regime!r}")
    D0 = window_diameter_at(traj, 0.0)
    return constants_delayed(influence.K_sup, cert.T, traj.tau, psi0, cert.alpha_bar,
                             M0=M0, scale=D0, cert=cert)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def check_decay_bound(traj: Trajectory, bounds: BoundSet, cert: WfCertificate) -> CheckRecord:
    """``d(t_k) <= bound(t_k)`` at every node with ``t_k >= 0``."""
    if abs(bounds.tau - traj.tau) > 1e-12 * max(1.0, traj.tau):
        raise DomainError("bound set and trajectory have different delays")
    if len(cert.partition) < 2 or traj.t_end < cert.partition[1]:
        raise DomainError("horizon shorter than one partition interval")
    t = traj.t[traj.offset:]
    d = traj.diameters()[traj.offset:]
    b = bound_curve(bounds, t)
    margins = b - d
    locs = [{"t": float(v)} for v in t]
    if bounds.regime == "undelayed":
        stmt = "d(t) <= d(0) exp(-gamma (t - T))"
    else:
        stmt = "d(t) <= D0 exp(-gamma (t - 3T + tau))"
    return _record("decay_bound", stmt, margins, _tol(bounds.scale), locs)


def check_interval_contraction(traj: Trajectory, cert: WfCertificate,
                               bounds: BoundSet) -> list[CheckRecord]:
    """Per-interval contraction along the partition.

    Undelayed: ``d(t_n) <= C d(t_{n-1})``. Delayed: ``d(t_n) <= C D_{n-2}``
    and the three-step ``D_{n+1} <= C_tilde D_{n-2}``, both for ``n >= 2``.
    """
    pts = partition_points(traj, cert)
    tol = _tol(bounds.scale)
    if bounds.regime == "undelayed":
        if len(pts) < 2:
            raise DomainError("need at least two partition points inside the horizon")
        d = diameters_at(traj, pts)
        margins = bounds.C * d[:-1] - d[1:]
        locs = [{"n": n, "t": float(pts[n])} for n in range(1, len(pts))]
        return [_record("interval_contraction", "d(t_n) <= C d(t_{n-1})", margins, tol, locs)]

    if len(pts) < 3:
        raise DomainError("need at least three partition points inside the horizon")
    d = diameters_at(traj, pts)
    D = window_diameters(traj, cert)
    margins = bounds.C * D[:-2] - d[2:]
    locs = [{"n": n, "t": float(pts[n])} for n in range(2, len(pts))]
    out = [_record("interval_contraction", "d(t_n) <= C D_{n-2}", margins, tol, locs)]
    if len(pts) >= 4:
        margins3 = bounds.C_tilde * D[:-3] - D[3:]
        locs3 = [{"n": n, "t": float(pts[n + 1])} for n in range(2, len(pts) - 1)]
        out.append(_record("three_step_contraction", "D_{n+1} <= C_tilde D_{n-2}",
                           margins3, tol, locs3))
    return out


def check_window_recursion(traj: Trajectory, cert: WfCertificate, bounds: BoundSet) -> CheckRecord:
    """``D_{n+1} <= exp(-K T) d(t_n) + (1 - exp(-K T)) D_n``."""
    pts = partition_points(traj, cert)
    if len(pts) < 2:
        raise DomainError("need at least two partition points inside the horizon")
    d = diameters_at(traj, pts)
    D = window_diameters(traj, cert)
    e = math.exp(-bounds.K * bounds.T)
    margins = e * d[:-1] + (1.0 - e) * D[:-1] - D[1:]
    locs = [{"n": n, "t": float(pts[n + 1])} for n in range(len(pts) - 1)]
    return _record("window_recursion", "D_{n+1} <= e^{-KT} d(t_n) + (1 - e^{-KT}) D_n",
                   margins, _tol(bounds.scale), locs)


def check_diameter_monotone(traj: Trajectory, cert: WfCertificate) -> CheckRecord:
    """Nonincreasing ``d(t_n)`` without delay, nonincreasing ``D_n`` with delay."""
    pts = partition_points(traj, cert)
    if len(pts) < 2:
        raise DomainError("need at least two partition points inside the horizon")
    if traj.tau == 0:
        seq = diameters_at(traj, pts)
        stmt = "d(t_{n+1}) <= d(t_n)"
    else:
        seq = window_diameters(traj, cert)
        stmt = "D_{n+1} <= D_n"
    locs = [{"n": n + 1, "t": float(pts[n + 1])} for n in range(len(pts) - 1)]
    return _record("diameter_monotone", stmt, seq[:-1] - seq[1:], _tol(seq[0]), locs)


def _directions(d: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def check_hull_and_bounds(traj: Trajectory, cert: WfCertificate | None = None,
                          n_directions: int = 20, seed: int = DEFAULT_SEED,
                          n_anchors: int = 50) -> tuple[CheckRecord, CheckRecord, CheckRecord]:
    """Hull confinement, uniform norm bound and tail distances.

    (a) for fixed-seed unit directions ``v`` and anchors ``S``, every
    projection ``<x_i(t), v>`` with ``t >= S`` stays within the range of
    projections over the window ``[S - tau, S]``;
    (b) ``|x_i(t)| <= M0`` at every node;
    (c) ``|x_i(s) - x_j(t)| <= D_n`` for all nodes ``s, t >= t_n - tau``.

    Anchors are the partition points (when a certificate is given) plus a
    uniform grid on ``[0, t_end]``.
    """
    tau, t_end = traj.tau, traj.t_end
    M0 = compute_M0(traj)
    tol = _tol(M0)

    anchors = np.linspace(0.0, t_end, n_anchors + 1)
    if cert is not None:
        anchors = np.concatenate([anchors, partition_points(traj, cert)])
    anchors = np.unique(anchors)

    # (a)
    v = _directions(traj.d, n_directions, seed)
    proj = traj.x @ v.T  # (nodes, N, dirs)
    pmax, pmin = proj.max(axis=1), proj.min(axis=1)
    suf_max = np.maximum.accumulate(pmax[::-1], axis=0)[::-1]
    suf_min = np.minimum.accumulate(pmin[::-1], axis=0)[::-1]
    margins, locs = [], []
    n_nodes = len(traj.x)
    for S in anchors:
        idx = traj.nodes_between(S - tau, S)
        ends = traj(np.array([S - tau, S])) @ v.T  # (2, N, dirs)
        wmax = np.maximum(pmax[idx].max(axis=0, initial=-np.inf), ends.max(axis=(0, 1)))
        wmin = np.minimum(pmin[idx].min(axis=0, initial=np.inf), ends.min(axis=(0, 1)))
        first = traj.nodes_between(S, t_end)
        at_s = ends[1]
        lmax, lmin = at_s.max(axis=0), at_s.min(axis=0)
        if len(first) and first[0] < n_nodes:
            lmax = np.maximum(lmax, suf_max[first[0]])
            lmin = np.minimum(lmin, suf_min[first[0]])
        m = np.minimum(wmax - lmax, lmin - wmin)
        k = int(np.argmin(m))
        margins.append(m[k])
        locs.append({"S": float(S), "direction": k})
    hull = _record("hull_confinement",
                   "min over window <= <x_i(t), v> <= max over window, t >= S",
                   margins, tol, locs)

    # (b)
    norms = np.linalg.norm(traj.x, axis=2).max(axis=1)
    k = int(np.argmax(norms))
    uniform = _record("uniform_bound", "|x_i(t)| <= M0", [M0 - norms[k]], tol,
                      [{"t": float(traj.t[k])}])

    # (c)
    if cert is not None:
        starts = partition_points(traj, cert)
    else:
        starts = anchors
    D = np.array([window_diameter_at(traj, float(s)) for s in starts])
    margins_c = np.empty(len(starts))
    V = np.empty((0, traj.d))
    hi = n_nodes
    for i in range(len(starts) - 1, -1, -1):
        w = starts[i] - tau
        lo = traj.nodes_between(w, t_end)[0]
        pts = np.concatenate([traj.x[lo:hi].reshape(-1, traj.d), V,
                              traj(float(w)).reshape(-1, traj.d)])
        V = extreme_points(pts)
        margins_c[i] = D[i] - point_set_diameter(V)
        hi = lo
    locs_c = [{"n": n, "t": float(s)} for n, s in enumerate(starts)]
    dscale = D[0] if len(D) else 0.0
    tail = _record("window_distance", "|x_i(s) - x_j(t)| <= D_n for s, t >= t_n - tau",
                   margins_c, _tol(dscale), locs_c)
    return hull, uniform, tail


def verify_trajectory(traj: Trajectory, influence: InfluenceSpec, cert: WfCertificate,
                      regime: str | None = None, gamma_override: float | None = None,
                      seed: int = DEFAULT_SEED) -> tuple[VerificationReport, BoundSet]:
    """Run every check that applies to the trajectory's regime."""
    bounds = derive_bounds(traj, influence, cert, regime)
    if gamma_override is not None:
        bounds = bounds.with_gamma(gamma_override)
    report = VerificationReport(seed=seed)
    report.checks.append(check_decay_bound(traj, bounds, cert))
    report.checks.extend(check_interval_contraction(traj, cert, bounds))
    if bounds.regime == "delayed":
        report.checks.append(check_window_recursion(traj, cert, bounds))
    report.checks.append(check_diameter_monotone(traj, cert))
    report.checks.extend(check_hull_and_bounds(traj, cert, seed=seed))
    return report, bounds
